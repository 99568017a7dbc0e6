"""Shooter environment: observation, movement with wall contact, reward terms, termination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .config import EVALUATION, TRAINING, EnvConfig
from .occupants import Crowd, sample_walkable
from .world import RAY_COUNT, BuildingLayout, Tag, build_ray_fan, cast_rays, point_segment_distance

OBS_DIM = RAY_COUNT * 5 + 4
INTERIOR_WALL_PENALTY = -0.5
TIME_PENALTY = -0.001

TARGET_REACHED = "target_reached"
EXTERIOR_WALL_HIT = "exterior_wall_hit"
INTERIOR_WALL_HIT = "interior_wall_hit"
OCCUPANT_EVACUATED = "occupant_evacuated"
EPISODE_END = "episode_end"

END_EXTERIOR_WALL = "exterior_wall"
END_TIMEOUT = "timeout"
END_ALL_TERMINAL = "all_terminal"
END_MAX_STEPS = "max_steps"


def target_reward(count: int) -> float:
    """Reward for reaching a new target after ``count`` earlier ones."""
    return 10.0 + count * 5.0


def exterior_wall_penalty(count: int) -> float:
    return -2.0 - count * 0.2


def cumulative_target_reward(k: int) -> float:
    """Closed form of k sequential target rewards."""
    return 10.0 * k + 5.0 * k * (k - 1) / 2


class EgressError(ValueError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardBreakdown:
    r_target: float = 0.0
    r_exterior_wall: float = 0.0
    r_interior_wall: float = 0.0
    r_time: float = 0.0

    @property
    def total(self) -> float:
        return self.r_exterior_wall + self.r_interior_wall + self.r_target + self.r_time


@dataclass(frozen=True)
class EpisodeEvent:
    t: int
    kind: str
    subject: int = -1
    detail: str = ""


@dataclass
class ShooterState:
    pos: np.ndarray
    heading: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    count: int = 0


def check_egress(layout: BuildingLayout, open_exits: Iterable[int]) -> frozenset[int]:
    open_exits = frozenset(open_exits)
    unknown = open_exits - set(layout.exit_ids)
    if unknown:
        raise EgressError(f"unknown exit ids {sorted(unknown)}")
    if not open_exits:
        raise EgressError("scenario leaves only the entrance open; at least one exit is required")
    return open_exits


class ShooterEnv:
    """One episode at a time. ``reset`` must be called before ``step``."""

    def __init__(self, layout: BuildingLayout, cfg: EnvConfig | None = None):
        self.base_layout = layout
        self.cfg = cfg or EnvConfig()
        self.layout = layout
        self.shooter: ShooterState | None = None
        self.crowd: Crowd | None = None
        self.done = True
        self.end_reason: str | None = None
        self.steps = 0
        self.events: list[EpisodeEvent] = []
        self.trajectory: list[tuple[float, float, float]] = []

    # -- lifecycle ------------------------------------------------------------
    def reset(self, rng: np.random.Generator, open_exits: Iterable[int] | None = None,
              mode: str | None = None) -> np.ndarray:
        cfg = self.cfg
        self.mode = mode or cfg.mode
        if open_exits is None:
            open_exits = self.base_layout.exit_ids
        self.open_exits = check_egress(self.base_layout, open_exits)
        self.layout = self.base_layout.with_open_exits(self.open_exits)
        self._ray = self.layout.ray_segments
        ca, cb, ctag = self.layout.collision_segments
        self._col = (ca, cb, ctag)
        lo = np.array(self.layout.bounds[:2])
        hi = np.array(self.layout.bounds[2:])
        self._lo, self._span = lo, hi - lo

        pos = self._spawn_shooter(rng)
        heading = float(rng.uniform(-math.pi, math.pi))
        self.shooter = ShooterState(pos=pos, heading=heading)
        self.crowd = Crowd.spawn(self.layout, cfg.occupant_count, rng, self.open_exits,
                                 speed=cfg.occupant_speed, freeze_time=cfg.freeze_time)
        self.steps = 0
        self.last_target_step = 0
        self.done = False
        self.end_reason = None
        self.events = []
        self.trajectory = []
        self._contact = {Tag.EXTERIOR_WALL: False, Tag.INTERIOR_WALL: False}
        self._exterior_onset = False
        return self.observe()

    def _spawn_shooter(self, rng) -> np.ndarray:
        a, b, _ = self._col
        r = self.cfg.shooter_radius
        for _ in range(10_000):
            if self.mode == TRAINING:
                p = sample_walkable(self.layout, 1, rng)[0]
            else:
                p = self.layout.spawn_zone.sample(rng)
            if self.layout.is_walkable(p) and point_segment_distance(p, a, b).min() > r:
                return p
        raise RuntimeError("could not place the shooter clear of walls")

    @property
    def t(self) -> float:
        return round(self.steps * self.cfg.dt, 9)

    # -- sensing ----------------------------------------------------------------
    def targets(self) -> np.ndarray:
        return self.crowd.pos[self.crowd.live_mask]

    def cast(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(directions, distances, tags) of the seven sensor rays."""
        dirs = build_ray_fan(self.shooter.heading)
        a, b, tag = self._ray
        dist, tags = cast_rays(self.shooter.pos, dirs, a, b, tag, self.targets(),
                               self.cfg.target_radius, self.cfg.ray_range)
        return dirs, dist, tags

    def observe(self) -> np.ndarray:
        _, dist, tags = self.cast()
        obs = np.zeros(OBS_DIM)
        rays = obs[: RAY_COUNT * 5].reshape(RAY_COUNT, 5)
        hit = tags >= 0
        rays[np.flatnonzero(hit), tags[hit]] = 1.0
        rays[:, 3] = ~hit
        rays[:, 4] = dist / self.cfg.ray_range
        obs[-4:-2] = self.shooter.velocity
        obs[-2:] = (self.shooter.pos - self._lo) / self._span
        return obs

    # -- dynamics -----------------------------------------------------------------
    def _move(self, action: np.ndarray) -> dict:
        """Move the shooter disc, sliding along walls. Returns contact flags per wall tag."""
        cfg = self.cfg
        s = self.shooter
        a, b, tag = self._col
        r = cfg.shooter_radius
        p = s.pos + action * cfg.shooter_speed * cfg.dt
        touched = np.zeros(len(a), dtype=bool)
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        for _ in range(4):
            u = np.clip(((p - a) * ab).sum(1) / denom, 0.0, 1.0)
            q = a + u[:, None] * ab
            off = p - q
            d = np.linalg.norm(off, axis=1)
            pen = d < r - 1e-12
            if not pen.any():
                break
            j = np.flatnonzero(pen)[np.argmin(d[pen])]
            touched[j] = True
            n = off[j] / d[j] if d[j] > 1e-12 else (s.pos - q[j]) / max(np.linalg.norm(s.pos - q[j]), 1e-12)
            p = q[j] + n * r
        u = np.clip(((p - a) * ab).sum(1) / denom, 0.0, 1.0)
        d = np.linalg.norm(p - (a + u[:, None] * ab), axis=1)
        touched |= d <= r + 1e-7
        s.velocity = (p - s.pos) / cfg.dt
        s.pos = p
        return {Tag.EXTERIOR_WALL: bool((touched & (tag == Tag.EXTERIOR_WALL)).any()),
                Tag.INTERIOR_WALL: bool((touched & (tag == Tag.INTERIOR_WALL)).any())}

    def step(self, action) -> tuple[np.ndarray, RewardBreakdown, list[EpisodeEvent], bool]:
        if self.done:
            raise EpisodeDoneError("step() called on a finished episode; call reset()")
        cfg = self.cfg
        s = self.shooter
        act = np.asarray(action, dtype=float).reshape(2)
        if not np.all(np.isfinite(act)):
            raise ValueError(f"non-finite action {action!r}")
        norm = float(np.hypot(*act))
        if norm > 1.0:
            act = act / norm
        if norm > 1e-8:
            s.heading = math.atan2(act[1], act[0])
        t0 = self.t
        k = self.steps + 1
        events: list[EpisodeEvent] = []

        contact = self._move(act)
        r_ext = r_int = 0.0
        self._exterior_onset = contact[Tag.EXTERIOR_WALL] and not self._contact[Tag.EXTERIOR_WALL]
        if self._exterior_onset:
            r_ext = exterior_wall_penalty(s.count)
            events.append(EpisodeEvent(k, EXTERIOR_WALL_HIT))
        if contact[Tag.INTERIOR_WALL] and not self._contact[Tag.INTERIOR_WALL]:
            r_int = INTERIOR_WALL_PENALTY
            events.append(EpisodeEvent(k, INTERIOR_WALL_HIT))
        self._contact = contact

        r_target = 0.0
        crowd = self.crowd
        live = np.flatnonzero(crowd.live_mask)
        if len(live):
            d = np.linalg.norm(crowd.pos[live] - s.pos, axis=1)
            for i in live[d <= cfg.harm_radius]:
                r_target += target_reward(s.count)
                s.count += 1
                crowd.harm(int(i))
                events.append(EpisodeEvent(k, TARGET_REACHED, int(i)))
                self.last_target_step = k

        evac, _ = crowd.step(t0, cfg.dt)
        events.extend(EpisodeEvent(k, OCCUPANT_EVACUATED, int(i)) for i in evac)

        self.steps = k
        self.trajectory.append((self.t, float(s.pos[0]), float(s.pos[1])))
        reward = RewardBreakdown(r_target, r_ext, r_int, TIME_PENALTY)
        reason = self.check_termination()
        if reason is not None:
            self.done = True
            self.end_reason = reason
            events.append(EpisodeEvent(k, EPISODE_END, -1, reason))
        self.events.extend(events)
        return self.observe(), reward, events, self.done

    def check_termination(self, mode: str | None = None) -> str | None:
        mode = mode or self.mode
        if self.crowd.all_terminal:
            return END_ALL_TERMINAL
        if mode == EVALUATION:
            if self._exterior_onset:
                return END_EXTERIOR_WALL
            if self.steps - self.last_target_step >= self.cfg.timeout_steps:
                return END_TIMEOUT
        elif self.steps >= self.cfg.max_episode_steps:
            return END_MAX_STEPS
        return None

"""Scripted occupants: freeze, pick the nearest goal once, walk there at constant speed.

``OccupantState`` with ``decide_goal`` / ``step_occupant`` / ``mark_harmed`` is
the per-occupant reference behaviour. ``Crowd`` runs the same rules on
arrays, which is what the environment uses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .world import BuildingLayout, Goal, UnreachableError

DEFAULT_SPEED = 1.5
FREEZE_TIME = 3.0


class Status(enum.IntEnum):
    FROZEN = 0
    MOVING = 1
    HIDING = 2
    EVACUATED = 3
    HARMED = 4


LIVE = (Status.FROZEN, Status.MOVING, Status.HIDING)


class OccupancyError(ValueError):
    pass


class TransitionError(RuntimeError):
    pass


@dataclass
class OccupantState:
    id: int
    pos: np.ndarray
    status: Status = Status.FROZEN
    goal: Goal | None = None
    speed: float = DEFAULT_SPEED
    path: np.ndarray | None = None
    travelled: float = 0.0

    @property
    def terminal(self) -> bool:
        return self.status in (Status.EVACUATED, Status.HARMED)

    @property
    def live(self) -> bool:
        return self.status in LIVE


def sample_walkable(layout: BuildingLayout, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. points, uniform over the walkable region (rejection from the bounding box)."""
    x0, y0, x1, y1 = layout.bounds
    nav = layout.nav
    out = np.empty((0, 2))
    while len(out) < n:
        m = max(16, 2 * (n - len(out)))
        cand = np.column_stack([rng.uniform(x0, x1, m), rng.uniform(y0, y1, m)])
        out = np.vstack([out, cand[nav.walkable_mask(cand)]])
    return out[:n]


def spawn_occupants(layout: BuildingLayout, n: int, rng: np.random.Generator,
                    speed: float = DEFAULT_SPEED) -> list[OccupantState]:
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > layout.occupancy_limit:
        raise OccupancyError(f"{n} occupants exceed the occupancy limit {layout.occupancy_limit} of {layout.name}")
    pts = sample_walkable(layout, n, rng)
    return [OccupantState(i, pts[i].copy(), speed=speed) for i in range(n)]


def decide_goal(occ: OccupantState, layout: BuildingLayout, open_exits: Iterable[int]) -> Goal:
    if occ.terminal:
        raise TransitionError(f"occupant {occ.id} is {occ.status.name}; no goal needed")
    goals = layout.goals(open_exits)
    nav = layout.nav
    d = np.array([nav.distances_to(occ.pos[None], g.point)[0] for g in goals])
    if not np.isfinite(d).any():
        raise UnreachableError(f"occupant {occ.id} at {tuple(occ.pos)} cannot reach any goal")
    k = int(np.flatnonzero(d <= d.min() + 1e-9)[0])
    occ.goal = goals[k]
    occ.path = nav.path(occ.pos, goals[k].point)
    occ.travelled = 0.0
    return occ.goal


def point_along(path: np.ndarray, s: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if s >= cum[-1]:
        return path[-1].copy()
    k = int(np.count_nonzero(cum[1:] < s))
    frac = (s - cum[k]) / seg[k]
    return path[k] + frac * (path[k + 1] - path[k])


def path_length(path: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum())


def step_occupant(occ: OccupantState, t: float, dt: float, freeze_time: float = FREEZE_TIME) -> OccupantState:
    """Advance one occupant over [t, t + dt]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if occ.status not in (Status.FROZEN, Status.MOVING) or t < freeze_time:
        return occ
    if occ.path is None:
        raise TransitionError(f"occupant {occ.id} has no goal; call decide_goal first")
    occ.status = Status.MOVING
    occ.travelled += occ.speed * dt
    if occ.travelled >= path_length(occ.path):
        occ.travelled = path_length(occ.path)
        occ.pos = occ.path[-1].copy()
        occ.status = Status.EVACUATED if occ.goal.evacuates else Status.HIDING
    else:
        occ.pos = point_along(occ.path, occ.travelled)
    return occ


def mark_harmed(occ: OccupantState) -> OccupantState:
    if occ.status in (Status.EVACUATED, Status.HARMED):
        raise TransitionError(f"occupant {occ.id} is already {occ.status.name}")
    occ.status = Status.HARMED
    return occ


class Crowd:
    """Array form of a population of occupants."""

    def __init__(self, layout: BuildingLayout, positions: np.ndarray, open_exits: Iterable[int],
                 speed: float = DEFAULT_SPEED, freeze_time: float = FREEZE_TIME):
        self.layout = layout
        self.open_exits = frozenset(open_exits)
        self.freeze_time = freeze_time
        self.pos = np.array(positions, dtype=float).reshape(-1, 2)
        self.n = len(self.pos)
        self.speed = np.full(self.n, float(speed))
        self.status = np.full(self.n, int(Status.FROZEN), dtype=np.int8)
        self.goals = layout.goals(self.open_exits)
        self.goal_idx = np.full(self.n, -1)
        self.travelled = np.zeros(self.n)
        self._wp = None
        self._cum = None

    @classmethod
    def spawn(cls, layout, n, rng, open_exits, speed=DEFAULT_SPEED, freeze_time=FREEZE_TIME) -> "Crowd":
        states = spawn_occupants(layout, n, rng, speed)
        pts = np.array([o.pos for o in states]).reshape(-1, 2)
        return cls(layout, pts, open_exits, speed, freeze_time)

    # -- counts -------------------------------------------------------------
    @property
    def live_mask(self) -> np.ndarray:
        return self.status <= Status.HIDING

    def count(self, status: Status) -> int:
        return int(np.count_nonzero(self.status == status))

    @property
    def n_evacuated(self) -> int:
        return self.count(Status.EVACUATED)

    @property
    def n_harmed(self) -> int:
        return self.count(Status.HARMED)

    @property
    def n_remaining(self) -> int:
        return int(np.count_nonzero(self.live_mask))

    @property
    def all_terminal(self) -> bool:
        return not self.live_mask.any()

    # -- behaviour ------------------------------------------------------------
    def decide_goals(self):
        """Pick goals and paths for every frozen occupant (done once)."""
        todo = np.flatnonzero(self.status == Status.FROZEN)
        nav = self.layout.nav
        D = np.column_stack([nav.distances_to(self.pos[todo], g.point) for g in self.goals])
        if len(todo) and not np.isfinite(D).any(axis=1).all():
            bad = todo[~np.isfinite(D).any(axis=1)][0]
            raise UnreachableError(f"occupant {bad} cannot reach any goal")
        k = np.argmax(D <= D.min(axis=1, keepdims=True) + 1e-9, axis=1) if len(todo) else np.zeros(0, int)
        self.goal_idx[todo] = k
        paths = [np.zeros((1, 2))] * self.n
        for i, g in zip(todo, k):
            paths[i] = nav.path(self.pos[i], self.goals[g].point)
        width = max(2, max(len(p) for p in paths))
        wp = np.empty((self.n, width, 2))
        for i, p in enumerate(paths):
            wp[i, :len(p)] = p
            wp[i, len(p):] = p[-1]
        seg = np.linalg.norm(np.diff(wp, axis=1), axis=2)
        self._wp = wp
        self._cum = np.concatenate([np.zeros((self.n, 1)), np.cumsum(seg, axis=1)], axis=1)

    def path(self, i: int) -> np.ndarray:
        wp = self._wp[i]
        keep = np.ones(len(wp), bool)
        keep[1:] = np.linalg.norm(np.diff(wp, axis=0), axis=1) > 0
        return wp[keep]

    def step(self, t: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Advance over [t, t + dt]; returns (newly evacuated ids, newly hiding ids)."""
        empty = np.zeros(0, dtype=int)
        if t < self.freeze_time:
            return empty, empty
        if self._wp is None:
            self.decide_goals()
        frozen = self.status == Status.FROZEN
        self.status[frozen] = Status.MOVING
        mv = np.flatnonzero(self.status == Status.MOVING)
        if not len(mv):
            return empty, empty
        self.travelled[mv] += self.speed[mv] * dt
        cum = self._cum[mv]
        total = cum[:, -1]
        s = self.travelled[mv]
        done = s >= total
        go = ~done
        if go.any():
            rows = mv[go]
            sg = s[go]
            cg = cum[go]
            k = np.count_nonzero(cg[:, 1:] < sg[:, None], axis=1)
            r = np.arange(len(rows))
            seg_len = cg[r, k + 1] - cg[r, k]
            frac = (sg - cg[r, k]) / seg_len
            a = self._wp[rows, k]
            b = self._wp[rows, k + 1]
            self.pos[rows] = a + frac[:, None] * (b - a)
        arrived = mv[done]
        self.travelled[arrived] = total[done]
        self.pos[arrived] = self._wp[arrived, -1]
        evac = np.array([self.goals[g].evacuates for g in self.goal_idx[arrived]], dtype=bool).reshape(-1)
        self.status[arrived[evac]] = Status.EVACUATED
        self.status[arrived[~evac]] = Status.HIDING
        return arrived[evac], arrived[~evac]

    def harm(self, i: int):
        if self.status[i] >= Status.EVACUATED:
            raise TransitionError(f"occupant {i} is already {Status(self.status[i]).name}")
        self.status[i] = Status.HARMED

    def states(self) -> list[OccupantState]:
        out = []
        for i in range(self.n):
            g = self.goals[self.goal_idx[i]] if self.goal_idx[i] >= 0 else None
            out.append(OccupantState(i, self.pos[i].copy(), Status(int(self.status[i])), g, float(self.speed[i]),
                                     self.path(i) if g is not None else None, float(self.travelled[i])))
        return out

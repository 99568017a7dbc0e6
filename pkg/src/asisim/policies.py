"""Shooter policies usable for evaluation.

A policy is any object with ``reset()`` and ``act(obs, env) -> action``.
``GreedyPolicy`` is the bundled fallback: it chases the nearest target seen by
the ray fan and otherwise heads down the longest free ray.
"""

from __future__ import annotations

import math

import numpy as np

from .world import RAY_COUNT, Tag, build_ray_fan


def decode_rays(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(tag per ray, normalized distance per ray) from an unnormalized observation."""
    rays = obs[: RAY_COUNT * 5].reshape(RAY_COUNT, 5)
    onehot = rays[:, :3]
    tags = np.where(rays[:, 3] > 0.5, int(Tag.NONE), np.argmax(onehot, axis=1))
    return tags, rays[:, 4]


class GreedyPolicy:
    """Nearest-visible-target pursuit with longest-ray exploration."""

    name = "greedy"

    def __init__(self, wall_margin: float = 0.1, turn_threshold: float = 0.06):
        # distances are in units of the ray range (20 m)
        self.wall_margin = wall_margin
        self.turn_threshold = turn_threshold

    def reset(self):
        pass

    def act(self, obs: np.ndarray, env) -> np.ndarray:
        tags, dist = decode_rays(obs)
        heading = env.shooter.heading
        dirs = build_ray_fan(heading)
        seen = np.flatnonzero(tags == Tag.TARGET)
        if len(seen):
            j = seen[np.argmin(dist[seen])]
            return dirs[j]
        free = np.where(tags == Tag.NONE, 1.0, dist)
        if free.max() < self.turn_threshold:
            back = heading + math.pi
            return np.array([math.cos(back), math.sin(back)])
        # prefer the centre ray on ties so straight corridors are followed
        order = np.argsort(-free - 1e-6 * (RAY_COUNT // 2 == np.arange(RAY_COUNT)), kind="stable")
        j = order[0]
        step = dirs[j]
        if free[j] < self.wall_margin:
            return 0.5 * step
        return step


class NetworkPolicy:
    """Wraps trained parameters; deterministic evaluation uses the Gaussian mean."""

    name = "network"

    def __init__(self, model, deterministic: bool = True, rng: np.random.Generator | None = None):
        self.model = model
        self.deterministic = deterministic
        self.rng = rng or np.random.default_rng(0)

    def reset(self):
        pass

    def act(self, obs: np.ndarray, env) -> np.ndarray:
        x = self.model.normalizer.normalize(obs[None], update=False)
        mean, log_std, _ = self.model.forward(x)
        a = mean[0]
        if not self.deterministic:
            a = a + np.exp(log_std) * self.rng.standard_normal(a.shape)
        return np.clip(a, -1.0, 1.0)

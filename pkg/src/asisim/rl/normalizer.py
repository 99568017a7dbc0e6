from __future__ import annotations

import numpy as np

CLIP = 5.0
VAR_EPS = 1e-8


class RunningNorm:
    """Per-dimension running mean/variance (pairwise-merge update), clipped z-scores."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.zeros(dim)  # population variance of everything seen so far
        self.count = 0.0

    def update(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_m2 = ((x - b_mean) ** 2).sum(axis=0)
        tot = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_m2 + delta**2 * self.count * n / tot
        self.mean = self.mean + delta * n / tot
        self.var = m2 / tot
        self.count = tot

    def normalize(self, x: np.ndarray, update: bool = False) -> np.ndarray:
        if update:
            self.update(x)
        return np.clip((x - self.mean) / np.sqrt(self.var + VAR_EPS), -CLIP, CLIP)

    def state(self) -> dict[str, np.ndarray]:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.array(self.count)}

    def load(self, state: dict[str, np.ndarray]):
        self.mean = np.array(state["mean"], dtype=float)
        self.var = np.array(state["var"], dtype=float)
        self.count = float(np.asarray(state["count"]).reshape(-1)[0])

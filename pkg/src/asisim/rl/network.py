"""Actor-critic MLPs in numpy with hand-written backprop.

Policy and value use separate tanh trunks of the same shape. The policy head
outputs the mean of a diagonal Gaussian; its log standard deviation is a
free parameter shared across states.
"""

from __future__ import annotations

import math

import numpy as np

from .normalizer import RunningNorm

ACTIVATION = "tanh"
LOG_2PI = math.log(2.0 * math.pi)


def _orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    w = q if fan_in >= fan_out else q.T
    return gain * w[:fan_in, :fan_out]


class ActorCritic:
    def __init__(self, obs_dim: int, act_dim: int = 2, hidden: int = 128, layers: int = 2,
                 rng: np.random.Generator | None = None):
        self.obs_dim, self.act_dim, self.hidden, self.layers = obs_dim, act_dim, hidden, layers
        self.normalizer = RunningNorm(obs_dim)
        self.params: dict[str, np.ndarray] = {}
        if rng is None:
            rng = np.random.default_rng(0)
        for trunk, out_dim, out_gain in (("pi", act_dim, 0.01), ("v", 1, 1.0)):
            d = obs_dim
            for i in range(layers):
                self.params[f"{trunk}.W{i}"] = _orthogonal(rng, d, hidden, math.sqrt(2))
                self.params[f"{trunk}.b{i}"] = np.zeros(hidden)
                d = hidden
            self.params[f"{trunk}.Wout"] = _orthogonal(rng, d, out_dim, out_gain)
            self.params[f"{trunk}.bout"] = np.zeros(out_dim)
        self.params["log_std"] = np.zeros(act_dim)

    # -- forward / backward ---------------------------------------------------
    def _trunk(self, name: str, x: np.ndarray):
        hs = [x]
        h = x
        for i in range(self.layers):
            h = np.tanh(h @ self.params[f"{name}.W{i}"] + self.params[f"{name}.b{i}"])
            hs.append(h)
        out = h @ self.params[f"{name}.Wout"] + self.params[f"{name}.bout"]
        return out, hs

    def forward(self, x: np.ndarray):
        """x: (B, obs_dim) normalized. Returns (mean (B, A), log_std (A,), value (B,))."""
        x = np.atleast_2d(x)
        mean, _ = self._trunk("pi", x)
        v, _ = self._trunk("v", x)
        return mean, self.params["log_std"], v[:, 0]

    def forward_cached(self, x: np.ndarray):
        x = np.atleast_2d(x)
        mean, hp = self._trunk("pi", x)
        v, hv = self._trunk("v", x)
        return mean, self.params["log_std"], v[:, 0], (hp, hv)

    def _trunk_backward(self, name: str, hs: list, dout: np.ndarray, grads: dict):
        grads[f"{name}.Wout"] = hs[-1].T @ dout
        grads[f"{name}.bout"] = dout.sum(axis=0)
        dh = dout @ self.params[f"{name}.Wout"].T
        for i in reversed(range(self.layers)):
            dz = dh * (1.0 - hs[i + 1] ** 2)
            grads[f"{name}.W{i}"] = hs[i].T @ dz
            grads[f"{name}.b{i}"] = dz.sum(axis=0)
            if i:
                dh = dz @ self.params[f"{name}.W{i}"].T

    def backward(self, cache, dmean: np.ndarray, dlog_std: np.ndarray, dvalue: np.ndarray) -> dict:
        hp, hv = cache
        grads: dict[str, np.ndarray] = {}
        self._trunk_backward("pi", hp, dmean, grads)
        self._trunk_backward("v", hv, dvalue[:, None], grads)
        grads["log_std"] = np.asarray(dlog_std, dtype=float).copy()
        return grads

    # -- distribution helpers ---------------------------------------------------
    def log_prob(self, mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = (actions - mean) / np.exp(log_std)
        return -0.5 * np.sum(z**2, axis=-1) - np.sum(log_std) - 0.5 * self.act_dim * LOG_2PI

    def entropy(self, log_std: np.ndarray | None = None) -> float:
        ls = self.params["log_std"] if log_std is None else log_std
        return float(np.sum(ls) + 0.5 * self.act_dim * (1.0 + LOG_2PI))

    def value(self, x: np.ndarray) -> np.ndarray:
        v, _ = self._trunk("v", np.atleast_2d(x))
        return v[:, 0]

    def copy(self) -> "ActorCritic":
        other = ActorCritic.__new__(ActorCritic)
        other.obs_dim, other.act_dim, other.hidden, other.layers = self.obs_dim, self.act_dim, self.hidden, self.layers
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.normalizer = RunningNorm(self.obs_dim)
        other.normalizer.load(self.normalizer.state())
        return other

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        """Descent step on ``grads`` (gradients of a loss to minimize)."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

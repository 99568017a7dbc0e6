"""One-way ANOVA with F-distribution tail probabilities and effect sizes.

The F tail uses the regularized incomplete beta function evaluated by its
continued fraction (modified Lentz), so no statistics package is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_EPS = 1e-16
_TINY = 1e-300


class DegenerateAnovaWarning(UserWarning):
    pass


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F > f) of the F(df1, df2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def cohens_d_from_eta(eta_sq: float) -> float:
    """d = 2f with Cohen's f = sqrt(eta^2 / (1 - eta^2))."""
    if not 0.0 <= eta_sq < 1.0:
        raise ValueError("eta squared must lie in [0, 1)")
    return 2.0 * math.sqrt(eta_sq / (1.0 - eta_sq))


@dataclass(frozen=True)
class AnovaResult:
    F: float
    df_between: int
    df_within: int
    p: float
    eta_p_sq: float
    d: float
    ss_between: float
    ss_within: float
    means: tuple[float, ...] = field(default=())
    sds: tuple[float, ...] = field(default=())
    ns: tuple[int, ...] = field(default=())
    degenerate: bool = False

    def summary(self) -> str:
        p = "p < 0.001" if self.p < 0.001 else f"p = {self.p:.3f}"
        return (f"F({self.df_between}, {self.df_within}) = {self.F:.3f}, {p}, "
                f"eta_p^2 = {self.eta_p_sq:.3f}, d = {self.d:.3f}")

    def as_dict(self) -> dict:
        return {
            "F": self.F, "df_between": self.df_between, "df_within": self.df_within, "p": self.p,
            "eta_p_sq": self.eta_p_sq, "d": self.d, "ss_between": self.ss_between,
            "ss_within": self.ss_within, "means": list(self.means), "sds": list(self.sds),
            "ns": list(self.ns), "degenerate": self.degenerate,
        }


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Classic one-way ANOVA. Zero within-group variance with unequal means gives F=inf, p=0, flagged."""
    if len(groups) < 2:
        raise ValueError("ANOVA needs at least 2 groups")
    arrs = [np.asarray(g, dtype=float) for g in groups]
    for i, g in enumerate(arrs):
        if g.ndim != 1 or len(g) < 2:
            raise ValueError(f"group {i} needs at least 2 samples")
    ns = np.array([len(g) for g in arrs])
    means = np.array([g.mean() for g in arrs])
    grand = np.concatenate(arrs).mean()
    ss_between = float(np.sum(ns * (means - grand) ** 2))
    ss_within = float(sum(np.sum((g - m) ** 2) for g, m in zip(arrs, means)))
    df_b = len(arrs) - 1
    df_w = int(ns.sum()) - len(arrs)
    sds = tuple(float(g.std(ddof=1)) for g in arrs)
    scale = max(1.0, float(np.abs(np.concatenate(arrs)).max())) ** 2
    degenerate = False
    if ss_within <= 1e-24 * scale * ns.sum():
        degenerate = True
        if ss_between <= 1e-24 * scale * ns.sum():
            F, p, eta = math.nan, math.nan, 0.0
            return AnovaResult(F, df_b, df_w, p, eta, 0.0, ss_between, ss_within,
                               tuple(map(float, means)), sds, tuple(map(int, ns)), True)
        F, p, eta = math.inf, 0.0, 1.0 - 1e-16
    else:
        F = (ss_between / df_b) / (ss_within / df_w)
        p = f_sf(F, df_b, df_w)
        eta = ss_between / (ss_between + ss_within)
    d = cohens_d_from_eta(eta) if eta < 1.0 else math.inf
    return AnovaResult(float(F), df_b, df_w, float(p), float(eta), float(d), ss_between, ss_within,
                       tuple(map(float, means)), sds, tuple(map(int, ns)), degenerate)

"""Monte Carlo estimate containers and weight diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Estimate:
    """A Monte Carlo value with its standard error and sample count."""

    value: float
    se: float
    n: int
    seed: int | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if not (self.se >= 0.0):
            raise ValueError("standard error must be >= 0")

    def agrees_with(self, other: float, k: float = 3.0) -> bool:
        """True when `other` lies within k standard errors of the value."""
        return abs(self.value - other) <= k * self.se


def mean_se(x: np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error along the first axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = float(x.mean(axis=0)) if x.ndim == 1 else x.mean(axis=0)
    if n == 1:
        return m, 0.0 if x.ndim == 1 else np.zeros_like(m)
    s = x.std(axis=0, ddof=1) / np.sqrt(n)
    return (m, float(s)) if x.ndim == 1 else (m, s)


def from_samples(x: np.ndarray, seed: int | None = None, **flags) -> Estimate:
    m, s = mean_se(np.asarray(x, dtype=float))
    return Estimate(value=m, se=s, n=len(x), seed=seed, flags=dict(flags))


def effective_sample_size(weights: np.ndarray) -> float:
    """ESS of self-normalized importance weights, 1/sum(w_i^2)."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return float(1.0 / np.sum(w * w))


def max_weight_share(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.max() / w.sum())


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of means with a delta-method standard error.

    Returns (mean(num)/mean(den), se).  num and den are paired samples.
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = len(num)
    mn, md = num.mean(), den.mean()
    r = mn / md
    if n < 2:
        return float(r), 0.0
    vn = num.var(ddof=1)
    vd = den.var(ddof=1)
    cnd = np.cov(num, den, ddof=1)[0, 1]
    var_r = (vn - 2.0 * r * cnd + r * r * vd) / (n * md * md)
    return float(r), float(np.sqrt(max(var_r, 0.0)))


def running_mean_unstable(x: np.ndarray, n_batches: int = 10, tol: float = 0.5) -> bool:
    """Heuristic divergence flag: late batch means drifting away from early ones.

    Splits the sample into batches and reports True when the largest batch
    mean exceeds the median batch mean by more than a factor (1 + tol) times
    the spread expected from the batch standard errors, or when a single
    sample carries most of the total mass.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 * n_batches:
        return False
    total = np.abs(x).sum()
    if total > 0 and np.abs(x).max() / total > 0.5:
        return True
    batches = np.array_split(x, n_batches)
    means = np.array([b.mean() for b in batches])
    spread = means.std(ddof=1)
    if spread == 0.0:
        return False
    med = np.median(means)
    return bool(np.abs(means - med).max() > 6.0 * (1.0 + tol) * spread)

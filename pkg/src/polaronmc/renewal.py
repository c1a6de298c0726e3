"""Renewal-equation numerics and stationary alternating-process sampling.

The renewal equation Z = z + mu * Z (convolution) is solved on a uniform
grid by the trapezoidal rule; the alternating dormant/active process built
from iid cycles is sampled in its stationary regime either by a long
burn-in or by explicit size-biased selection of the straddling cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .cluster_process import Cycle

CycleSampler = Callable[[np.random.Generator], Cycle]


@dataclass
class RenewalGrid:
    h: float
    mu: np.ndarray  # interarrival density values on 0, h, 2h, ...
    z: np.ndarray  # inhomogeneity on the same grid
    solution: np.ndarray | None = None

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step must be positive")
        if len(self.mu) != len(self.z):
            raise ValueError("mu and z must share the grid")
        if np.any(np.asarray(self.mu) < 0):
            raise ValueError("interarrival density must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(len(self.mu))


def solve_renewal_equation(grid: RenewalGrid) -> np.ndarray:
    """Trapezoidal Volterra solution of Z = z + (mu * Z); O(h^2) accurate.

    The density mu may be defective (total mass < 1), in which case the
    solution of Z = z + mu * Z with bounded z tends to z(inf)/(1 - mass).
    """
    h, mu, z = grid.h, np.asarray(grid.mu, float), np.asarray(grid.z, float)
    n = len(mu)
    Z = np.empty(n)
    Z[0] = z[0]
    denom = 1.0 - 0.5 * h * mu[0]
    mu_rev = mu[::-1]
    for k in range(1, n):
        # trapezoid over [0, kh] of mu(kh - s) Z(s) ds, Z[k] unknown at s = kh;
        # the dot runs over nodes s = 0..(k-1)h with kernel values mu[k - j]
        conv = np.dot(mu_rev[n - 1 - k : n - 1], Z[:k]) - 0.5 * mu[k] * Z[0]
        Z[k] = (z[k] + h * conv) / denom
    grid.solution = Z
    return Z


def renewal_function(alpha: float, horizon: float, h: float) -> np.ndarray:
    """U(t) = 1 + alpha t for Poisson renewals; computed, not hard-coded."""
    t = np.arange(0.0, horizon + h / 2, h)
    grid = RenewalGrid(h=h, mu=alpha * np.exp(-alpha * t), z=np.ones_like(t))
    return solve_renewal_equation(grid)


def mginf_empty_probability(alpha: float, beta: float, t) -> np.ndarray:
    """P(no customer at t) for the queue started empty: exp(-m(t)) where
    m(t) = alpha * integral_0^t P(service > r) dr = (alpha/beta)(1 - e^(-beta t))."""
    t = np.asarray(t, dtype=float)
    return np.exp(-(alpha / beta) * (1.0 - np.exp(-beta * t)))


def dormancy_probability_curve(
    alpha: float,
    beta: float,
    t_grid: np.ndarray,
    method: str = "exact",
    rng: np.random.Generator | None = None,
    n_replicas: int = 20000,
    cycle_sampler: CycleSampler | None = None,
) -> np.ndarray:
    """P(the alternating process started dormant at 0 is dormant at t).

    exact: the Poisson-count closed form for exponential services;
    simulate: empirical fraction over sampled cycle sequences;
    renewal: solve the dormancy renewal equation with the cycle-length
    density estimated from simulated cycles (cross-validates the solver).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if method == "exact":
        return mginf_empty_probability(alpha, beta, t_grid)
    if cycle_sampler is None:
        from .cluster_process import sample_busy_cycle

        cycle_sampler = lambda r: sample_busy_cycle(r, alpha, beta)
    if rng is None:
        raise ValueError("simulation methods need an rng")
    horizon = float(t_grid.max())
    if method == "simulate":
        hits = np.zeros(len(t_grid))
        for _ in range(n_replicas):
            t0 = 0.0
            rem = t_grid.copy()
            mask = np.ones(len(t_grid), dtype=bool)
            while np.any(mask):
                cy = cycle_sampler(rng)
                d_end = t0 + cy.dormant
                c_end = d_end + cy.cluster.active_length
                sel = mask & (t_grid < d_end)
                hits[sel] += 1.0
                mask &= t_grid >= c_end
                t0 = c_end
        return hits / n_replicas
    if method == "renewal":
        # internal solver step, independent of the requested output grid
        h = min(1e-2, horizon / 100.0)
        tt = np.arange(0.0, horizon + h / 2, h)
        totals = np.array([cycle_sampler(rng).total for _ in range(n_replicas)])
        kde = stats.gaussian_kde(totals)
        mu = kde(tt)
        grid = RenewalGrid(h=h, mu=mu, z=np.exp(-alpha * tt))
        Z = solve_renewal_equation(grid)
        return np.interp(t_grid, tt, Z)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class AlternatingConfiguration:
    """Cycles laid end to end, covering a requested window."""

    window: tuple[float, float]
    cycle_starts: np.ndarray  # absolute start (beginning of dormant stretch)
    cycles: list[Cycle]

    def dormant_at(self, t: float) -> bool:
        for t0, cy in zip(self.cycle_starts, self.cycles):
            if t0 <= t < t0 + cy.total:
                return t < t0 + cy.dormant
        return True  # beyond the last sampled cycle: treated as dormant

    def cluster_placements(self) -> list[tuple[float, Cycle]]:
        """(absolute cluster start, cycle) pairs."""
        return [(t0 + cy.dormant, cy) for t0, cy in zip(self.cycle_starts, self.cycles)]


def _lay_cycles(rng, cycle_sampler, t0: float, until: float) -> tuple[list[float], list[Cycle]]:
    starts, cycles = [], []
    t = t0
    while t < until:
        cy = cycle_sampler(rng)
        starts.append(t)
        cycles.append(cy)
        t += cy.total
    return starts, cycles


def sample_stationary_window(
    rng: np.random.Generator,
    cycle_sampler: CycleSampler,
    A: float,
    B: float,
    method: str = "burn_in",
    burn_in_lengths: float = 100.0,
    pool_size: int = 4000,
    mean_total: float | None = None,
) -> AlternatingConfiguration:
    """Stationary alternating configuration covering [A, B].

    burn_in: start a fresh process far before A (burn_in_lengths mean cycle
    lengths) and discard the transient; size_biased: draw the straddling
    cycle from a pool with probability proportional to its total length and
    place A uniformly inside it.
    """
    if A >= B:
        raise ValueError("need A < B")
    if method == "burn_in":
        if mean_total is None:
            pilot = np.array([cycle_sampler(rng).total for _ in range(200)])
            mean_total = float(pilot.mean())
            _heavy_tail_guard(rng, cycle_sampler, pilot_totals=pilot)
        t0 = A - burn_in_lengths * mean_total
        starts, cycles = _lay_cycles(rng, cycle_sampler, t0, B)
        keep = [
            (s, c) for s, c in zip(starts, cycles) if s + c.total > A
        ]
        return AlternatingConfiguration(
            window=(A, B),
            cycle_starts=np.array([s for s, _ in keep]),
            cycles=[c for _, c in keep],
        )
    if method == "size_biased":
        pool = [cycle_sampler(rng) for _ in range(pool_size)]
        totals = np.array([c.total for c in pool])
        _heavy_tail_guard(rng, cycle_sampler, pilot_totals=totals)
        idx = rng.choice(pool_size, p=totals / totals.sum())
        straddler = pool[idx]
        offset = rng.uniform(0.0, straddler.total)
        t0 = A - offset
        starts, cycles = [t0], [straddler]
        t = t0 + straddler.total
        more_starts, more_cycles = _lay_cycles(rng, cycle_sampler, t, B)
        starts += more_starts
        cycles += more_cycles
        return AlternatingConfiguration(
            window=(A, B), cycle_starts=np.array(starts), cycles=cycles
        )
    raise ValueError(f"unknown method {method!r}")


def _heavy_tail_guard(rng, cycle_sampler, pilot_totals=None, cv_cap: float = 50.0):
    if pilot_totals is None:
        return
    cv = pilot_totals.std() / pilot_totals.mean()
    if cv > cv_cap:
        raise RuntimeError(
            "cycle length coefficient of variation exceeds "
            f"{cv_cap}; stationary sampling refused (check tilt diagnostics)"
        )


def random_sum_clt_check(
    rng: np.random.Generator,
    increment_sampler: Callable[[np.random.Generator, int], np.ndarray],
    interarrival_sampler: Callable[[np.random.Generator, int], np.ndarray],
    t: float,
    n_replicas: int = 2000,
    theta: float | None = None,
    sigma2: float | None = None,
) -> dict:
    """Empirical check that t^{-1/2} sum_{k <= N_t} X_k is N(0, theta*sigma2).

    N_t counts renewals up to time t.  When theta (1/E[T1]) or sigma2
    (Var X) are not supplied they are estimated from the simulation itself.
    """
    sums = np.empty(n_replicas)
    counts = np.empty(n_replicas)
    for r in range(n_replicas):
        elapsed = 0.0
        n = 0
        total = 0.0
        while True:
            gaps = interarrival_sampler(rng, 256)
            cum = elapsed + np.cumsum(gaps)
            k = int(np.searchsorted(cum, t, side="right"))
            xs = increment_sampler(rng, k)
            total += float(np.sum(xs))
            n += k
            if k < len(gaps):
                break
            elapsed = cum[-1]
        sums[r] = total / np.sqrt(t)
        counts[r] = n
    if theta is None:
        theta = counts.mean() / t
    if sigma2 is None:
        scale2 = float(np.var(sums, ddof=1))
    else:
        scale2 = theta * sigma2
    ks = stats.kstest(sums, "norm", args=(0.0, np.sqrt(scale2)))
    return {
        "ks_stat": float(ks.statistic),
        "p_value": float(ks.pvalue),
        "empirical_variance": float(np.var(sums, ddof=1)),
        "predicted_variance": float(theta * sigma2) if sigma2 is not None else None,
        "mean": float(sums.mean()),
        "mean_se": float(sums.std(ddof=1) / np.sqrt(n_replicas)),
        "rate": float(counts.mean() / t),
    }


def equilibrium_forward_recurrence(
    config: AlternatingConfiguration, t: float
) -> float:
    """Time from t to the next cycle start within the configuration."""
    future = config.cycle_starts[config.cycle_starts > t]
    if len(future) == 0:
        raise ValueError("no renewal after t inside the sampled window")
    return float(future.min() - t)

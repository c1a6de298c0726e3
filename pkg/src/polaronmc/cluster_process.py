"""Busy cycles and Poisson interval configurations.

Intervals (s_i, t_i) are the customers of an M/G/infinity queue: Poisson
arrivals at rate alpha, service times drawn from the time factor g (by
default exponential with rate beta).  A cluster is one busy period's worth
of overlapping intervals, shifted so its first arrival sits at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_MAX_CUSTOMERS = 10**9


@dataclass(frozen=True)
class Cluster:
    """One busy period: overlapping intervals with s_1 = 0, sorted by s_i."""

    starts: np.ndarray  # arrival offsets, starts[0] == 0.0
    ends: np.ndarray  # departure offsets, ends[i] > starts[i]
    gaps: np.ndarray | None = None  # inter-arrival gaps sigma_1..sigma_N

    @property
    def n_customers(self) -> int:
        return len(self.starts)

    @property
    def services(self) -> np.ndarray:
        return self.ends - self.starts

    @property
    def active_length(self) -> float:
        return float(self.ends.max())

    def intervals(self) -> list[tuple[float, float]]:
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    def validate(self) -> None:
        if len(self.starts) < 1 or self.starts[0] != 0.0:
            raise ValueError("cluster must start at 0")
        if np.any(self.ends <= self.starts):
            raise ValueError("intervals must have positive length")
        # connectivity: each arrival falls before the running max departure
        run = np.maximum.accumulate(self.ends)
        if np.any(self.starts[1:] > run[:-1]):
            raise ValueError("intervals do not overlap into one busy period")


@dataclass(frozen=True)
class Cycle:
    """Dormant stretch followed by one cluster; total length T1 = d + a."""

    dormant: float
    cluster: Cluster

    @property
    def total(self) -> float:
        return self.dormant + self.cluster.active_length


@dataclass(frozen=True)
class Configuration:
    """Clusters placed on an absolute time window."""

    window: tuple[float, float]
    clusters: list[np.ndarray]  # each an (n_i, 2) array of absolute (s, t)
    truncated: bool = False

    @property
    def n_points(self) -> int:
        return sum(len(c) for c in self.clusters)

    def spans(self) -> list[tuple[float, float]]:
        return [(float(c[:, 0].min()), float(c[:, 1].max())) for c in self.clusters]

    def occupied_at(self, t: float) -> bool:
        for c in self.clusters:
            if np.any((c[:, 0] <= t) & (t < c[:, 1])):
                return True
        return False


def sample_busy_cycle(
    rng: np.random.Generator,
    alpha: float,
    beta: float,
    service_sampler: Callable[[np.random.Generator], float] | None = None,
) -> Cycle:
    """Draw one dormant period plus one busy cluster.

    The cluster closes at the first arrival epoch that exceeds every
    departure so far; that arrival is discarded (memorylessness of the
    Poisson stream makes the next cycle independent).
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if service_sampler is None:
        service_sampler = lambda r: r.exponential(1.0 / beta)
    d = rng.exponential(1.0 / alpha)
    starts = [0.0]
    services = [service_sampler(rng)]
    gaps = []
    busy_end = services[0]
    s_last = 0.0
    while True:
        gap = rng.exponential(1.0 / alpha)
        gaps.append(gap)
        s_next = s_last + gap
        if s_next >= busy_end:
            break
        tau = service_sampler(rng)
        starts.append(s_next)
        services.append(tau)
        busy_end = max(busy_end, s_next + tau)
        s_last = s_next
        if len(starts) >= _MAX_CUSTOMERS:
            raise RuntimeError("non-terminating cycle: parameter corruption suspected")
    starts = np.array(starts)
    services = np.array(services)
    cluster = Cluster(starts=starts, ends=starts + services, gaps=np.array(gaps))
    return Cycle(dormant=d, cluster=cluster)


def sample_busy_cycles(rng, alpha, beta, n, service_sampler=None) -> list[Cycle]:
    return [sample_busy_cycle(rng, alpha, beta, service_sampler) for _ in range(n)]


def intensity_mass(alpha: float, T: float, beta: float) -> float:
    """Total mass of the interval intensity alpha*g(t-s) on {-T < s < t < T}."""
    if T < 0:
        raise ValueError("T must be >= 0")
    return 2.0 * alpha * T - alpha * (1.0 - np.exp(-2.0 * beta * T)) / beta


def group_into_clusters(points: np.ndarray) -> list[np.ndarray]:
    """Split (n, 2) interval endpoints into maximal overlapping groups.

    Intervals are closed: a start exactly equal to the running maximum end
    still belongs to the same group.
    """
    if len(points) == 0:
        return []
    order = np.argsort(points[:, 0], kind="stable")
    pts = points[order]
    groups = []
    cur = [0]
    run_max = pts[0, 1]
    for j in range(1, len(pts)):
        if pts[j, 0] <= run_max:
            cur.append(j)
            run_max = max(run_max, pts[j, 1])
        else:
            groups.append(pts[cur])
            cur = [j]
            run_max = pts[j, 1]
    groups.append(pts[cur])
    return groups


def sample_poisson_configuration(
    rng: np.random.Generator, alpha: float, T: float, beta: float
) -> Configuration:
    """Poisson configuration with intensity alpha*g(t-s) on {-T < s < t < T}."""
    if T < 0:
        raise ValueError("T must be >= 0")
    mass = intensity_mass(alpha, T, beta)
    n = rng.poisson(mass)
    pts = np.empty((n, 2))
    have = 0
    while have < n:
        m = max(2 * (n - have), 16)
        s = rng.uniform(-T, T, size=m)
        t = s + rng.exponential(1.0 / beta, size=m)
        ok = t < T
        take = min(int(ok.sum()), n - have)
        sel = np.flatnonzero(ok)[:take]
        pts[have : have + take, 0] = s[sel]
        pts[have : have + take, 1] = t[sel]
        have += take
    return Configuration(window=(-T, T), clusters=group_into_clusters(pts))


def restrict(config: Configuration, a: float, b: float) -> Configuration:
    """Keep the maximal clusters whose span intersects [a, b]; idempotent."""
    if a >= b:
        raise ValueError("need a < b")
    kept = [c for c in config.clusters if c[:, 1].max() >= a and c[:, 0].min() <= b]
    return Configuration(window=config.window, clusters=kept, truncated=config.truncated)


def expected_cycle_length(alpha: float, beta: float) -> float:
    """E[T1] = exp(alpha * E[service]) / alpha for exponential services."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    return np.exp(alpha / beta) / alpha


def cluster_to_local(abs_points: np.ndarray) -> tuple[Cluster, float]:
    """Shift an absolute-time cluster so its first arrival is at 0.

    Returns the local Cluster and the shift (original first arrival time).
    """
    order = np.argsort(abs_points[:, 0], kind="stable")
    pts = abs_points[order]
    shift = float(pts[0, 0])
    return Cluster(starts=pts[:, 0] - shift, ends=pts[:, 1] - shift), shift


def cycles_to_csv_rows(cycles: list[Cycle]) -> list[dict]:
    rows = []
    for i, cy in enumerate(cycles):
        iv = ";".join(f"{s:.17g}:{t:.17g}" for s, t in cy.cluster.intervals())
        rows.append(
            {
                "cycle_id": i,
                "d": cy.dormant,
                "a": cy.cluster.active_length,
                "N": cy.cluster.n_customers,
                "intervals": iv,
            }
        )
    return rows

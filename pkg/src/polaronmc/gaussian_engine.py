"""Exact Gaussian linear algebra over cluster intervals.

The joint law of the increments X_{s_i,t_i} of a d-dimensional Brownian
motion over a cluster's intervals is centered Gaussian with covariance
C_ij = |[s_i,t_i] cap [s_j,t_j]| per coordinate.  Everything here builds
on that matrix: the quadratic-exponential determinant identity, unbiased
estimators of the cluster weight

    F(xi) = E[ prod_i v(t_i - s_i, X_{s_i,t_i}) ],

and samplers of the weight-tilted path law over a cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimates import Estimate, ratio_estimate, running_mean_unstable
from .cluster_process import Cluster
from .potentials import Potential

_LOG_SPACE_THRESHOLD = 30


@dataclass(frozen=True)
class MatrixEstimate:
    value: np.ndarray  # (d, d)
    se: np.ndarray  # (d, d) per-entry standard errors
    n: int


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray  # strictly increasing grid
    increments: np.ndarray  # (len(times) - 1, d)
    law: str  # "wiener", "cluster", or "stationary"
    info: dict = field(default_factory=dict)

    def positions(self, start: np.ndarray | None = None) -> np.ndarray:
        d = self.increments.shape[1]
        x0 = np.zeros(d) if start is None else start
        return np.vstack([x0, x0 + np.cumsum(self.increments, axis=0)])


def overlap_covariance(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """C_ij = length of [s_i, t_i] intersected with [s_j, t_j]."""
    lo = np.maximum(starts[:, None], starts[None, :])
    hi = np.minimum(ends[:, None], ends[None, :])
    return np.maximum(hi - lo, 0.0)


def factor_covariance(C: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """A matrix L with L @ L.T = C; Cholesky with a spectral fallback.

    Clusters with nearly nested intervals make C ill-conditioned, in which
    case eigenvalues below tol * max_eigenvalue are clipped to zero.
    """
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(C)
        cut = tol * max(vals.max(), 0.0)
        vals = np.where(vals > cut, vals, 0.0)
        return vecs * np.sqrt(vals)


def segment_cluster(
    cluster: Cluster, extra_times: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of [0, a] refined by interval endpoints, and incidence.

    Returns (breakpoints, A) where A is the (N, n_segments) 0/1 matrix with
    A[i, k] = 1 when segment k lies inside [s_i, t_i]; then X_{s_i,t_i} is
    the A-weighted sum of elementary segment increments.
    """
    pts = np.concatenate([cluster.starts, cluster.ends])
    if extra_times is not None:
        extra = np.asarray(extra_times, dtype=float)
        pts = np.concatenate([pts, extra])
    pts = np.unique(pts)
    mids = 0.5 * (pts[:-1] + pts[1:])
    A = (cluster.starts[:, None] <= mids[None, :]) & (mids[None, :] <= cluster.ends[:, None])
    return pts, A.astype(float)


def gaussian_quadratic_expectation(intervals, u, d: int) -> float:
    """E[exp(-1/2 sum_i u_i^2 |X_{s_i,t_i}|^2)] = det(I + C diag(u^2))^(-d/2)."""
    iv = np.asarray(intervals, dtype=float)
    u = np.asarray(u, dtype=float)
    C = overlap_covariance(iv[:, 0], iv[:, 1])
    M = np.eye(len(u)) + C * (u * u)[None, :]
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(logdet):
        raise FloatingPointError("non-positive determinant for a valid covariance")
    return float(np.exp(-0.5 * d * logdet))


def _products(vals: np.ndarray) -> np.ndarray:
    """Row products of a (n, N) array, in log space for wide clusters."""
    if vals.shape[1] > _LOG_SPACE_THRESHOLD:
        with np.errstate(divide="ignore"):
            return np.exp(np.sum(np.log(vals), axis=1))
    return np.prod(vals, axis=1)


def _plain_F_samples(
    cluster: Cluster, pot: Potential, n_samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    C = overlap_covariance(cluster.starts, cluster.ends)
    L = factor_covariance(C)
    taus = cluster.services
    N, d = cluster.n_customers, pot.d
    out = np.empty(n_samples)
    rejected = 0
    have = 0
    batch = max(min(n_samples, 200_000 // max(N * d, 1)), 1)
    while have < n_samples:
        b = min(batch, n_samples - have)
        Z = rng.standard_normal((b, N, d))
        X = np.einsum("ij,bjd->bid", L, Z)
        vals = np.empty((b, N))
        for i in range(N):
            vals[:, i] = pot.eval_v(taus[i], X[:, i, :])
        finite = np.all(np.isfinite(vals), axis=1)
        rejected += int(b - finite.sum())
        prods = _products(np.where(finite[:, None], vals, 1.0))
        prods[~finite] = np.nan
        out[have : have + b] = prods
        have += b
    return out, rejected


def _mixture_F_samples(
    cluster: Cluster, pot: Potential, n_samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Importance samples whose mean times prefactor is F; returns (w, prefactor)."""
    marks = pot.marks
    if marks is None:
        raise ValueError("mixture estimator needs a completely monotone potential")
    taus = cluster.services
    N, d = cluster.n_customers, pot.d
    prefactor = float(np.prod([marks.h_single(t) for t in taus]))
    if N == 1:
        return np.ones(n_samples), prefactor
    C = overlap_covariance(cluster.starts, cluster.ends)
    u = np.empty((n_samples, N))
    for i in range(N):
        u[:, i] = marks.sample_posterior(rng, taus[i], n_samples)
    u2 = u * u
    M = np.eye(N)[None, :, :] + C[None, :, :] * u2[:, None, :]
    sign, logdet = np.linalg.slogdet(M)
    if np.any(sign <= 0):
        raise FloatingPointError("non-positive determinant in mixture estimator")
    log_single = np.sum(np.log1p(u2 * taus[None, :]), axis=1)
    return np.exp(-0.5 * d * (logdet - log_single)), prefactor


def estimate_F(
    cluster: Cluster,
    pot: Potential,
    n_samples: int,
    rng: np.random.Generator,
    method: str = "plain",
) -> Estimate:
    """Unbiased Monte Carlo estimate of the cluster weight F."""
    if method == "plain":
        samples, rejected = _plain_F_samples(cluster, pot, n_samples, rng)
        ok = samples[np.isfinite(samples)]
        if len(ok) == 0:
            raise FloatingPointError("all samples rejected (v = +inf everywhere?)")
        m = float(ok.mean())
        se = float(ok.std(ddof=1) / np.sqrt(len(ok))) if len(ok) > 1 else 0.0
        return Estimate(
            value=m,
            se=se,
            n=len(ok),
            flags={"rejections": rejected, "diverging": running_mean_unstable(ok)},
        )
    if method == "mixture":
        w, pre = _mixture_F_samples(cluster, pot, n_samples, rng)
        m = float(w.mean()) * pre
        se = float(w.std(ddof=1) / np.sqrt(len(w))) * pre if len(w) > 1 else 0.0
        return Estimate(value=m, se=se, n=len(w), flags={"diverging": running_mean_unstable(w)})
    raise ValueError(f"unknown method {method!r}")


def _mark_log_weight(C: np.ndarray, taus: np.ndarray, u: np.ndarray, d: int) -> float:
    u2 = u * u
    M = np.eye(len(u)) + C * u2[None, :]
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        return -np.inf
    return -0.5 * d * (logdet - np.sum(np.log1p(u2 * taus)))


def _sample_marks(
    cluster: Cluster,
    pot: Potential,
    rng: np.random.Generator,
    n_sweeps: int = 50,
) -> tuple[np.ndarray, float]:
    """Metropolis draw from the mark posterior; coordinate sweeps with
    independent proposals from the single-interval posteriors."""
    marks = pot.marks
    taus = cluster.services
    N, d = cluster.n_customers, pot.d
    C = overlap_covariance(cluster.starts, cluster.ends)
    u = np.array([marks.sample_posterior(rng, t, 1)[0] for t in taus])
    if N == 1:
        return u, 1.0
    logw = _mark_log_weight(C, taus, u, d)
    accepted = proposed = 0
    for _ in range(n_sweeps):
        for i in range(N):
            u_new = u.copy()
            u_new[i] = marks.sample_posterior(rng, taus[i], 1)[0]
            logw_new = _mark_log_weight(C, taus, u_new, d)
            proposed += 1
            if np.log(rng.random()) < logw_new - logw:
                u, logw = u_new, logw_new
                accepted += 1
    return u, accepted / max(proposed, 1)


def _increments_given_marks(
    lengths: np.ndarray,
    A: np.ndarray,
    u: np.ndarray,
    d: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw elementary increments from the mark-conditioned Gaussian law.

    Per coordinate the precision is diag(1/lengths) + sum_i u_i^2 a_i a_i^T.
    """
    P = np.diag(1.0 / lengths) + (A * (u * u)[:, None]).T @ A
    L = np.linalg.cholesky(P)
    z = rng.standard_normal((len(lengths), d))
    return np.linalg.solve(L.T, z)


def sample_path_given_cluster(
    cluster: Cluster,
    pot: Potential,
    grid: np.ndarray,
    rng: np.random.Generator,
    method: str = "exact_mixture",
    mh_sweeps: int = 200,
    mark_sweeps: int = 50,
) -> PathSample:
    """One draw of the elementary path increments under the cluster-tilted law.

    The grid must refine the cluster endpoints {s_i, t_i}.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    endpoints = np.concatenate([cluster.starts, cluster.ends])
    if not np.all(np.isin(np.round(endpoints, 12), np.round(grid, 12))):
        raise ValueError("grid must contain all cluster endpoints")
    bp, A = segment_cluster(cluster, extra_times=grid)
    lengths = np.diff(bp)
    d = pot.d
    if method == "exact_mixture":
        u, acc = _sample_marks(cluster, pot, rng, n_sweeps=mark_sweeps)
        y = _increments_given_marks(lengths, A, u, d, rng)
        return PathSample(times=bp, increments=y, law="cluster", info={"mark_acceptance": acc})
    if method == "mh":
        return _mh_path(cluster, pot, bp, A, lengths, rng, mh_sweeps)
    raise ValueError(f"unknown method {method!r}")


def _mh_path(cluster, pot, bp, A, lengths, rng, n_sweeps):
    taus = cluster.services
    d = pot.d
    m = len(lengths)
    y = rng.standard_normal((m, d)) * np.sqrt(lengths)[:, None]

    def log_target(yy):
        lp = -0.5 * np.sum(yy * yy / lengths[:, None])
        X = A @ yy
        with np.errstate(divide="ignore"):
            lv = np.log(np.array([pot.eval_v(taus[i], X[i]) for i in range(len(taus))], dtype=float))
        if np.any(~np.isfinite(lv)):
            return -np.inf
        return lp + float(lv.sum())

    lt = log_target(y)
    while not np.isfinite(lt):  # resample until a positive-density start
        y = rng.standard_normal((m, d)) * np.sqrt(lengths)[:, None]
        lt = log_target(y)
    scale = 0.5
    accepted = 0
    for sweep in range(n_sweeps):
        prop = y + scale * np.sqrt(lengths)[:, None] * rng.standard_normal((m, d))
        lt_prop = log_target(prop)
        if np.log(rng.random()) < lt_prop - lt:
            y, lt = prop, lt_prop
            accepted += 1
        # crude adaptation towards 0.3-0.5 acceptance during the first half
        if sweep == n_sweeps // 2:
            rate = accepted / (sweep + 1)
            if rate < 0.3:
                scale *= 0.6
            elif rate > 0.5:
                scale *= 1.5
    return PathSample(
        times=bp,
        increments=y,
        law="cluster",
        info={"acceptance": accepted / n_sweeps, "scale": scale},
    )


def second_moment_under_P_xi(
    cluster: Cluster, pot: Potential, n_samples: int, rng: np.random.Generator
) -> MatrixEstimate:
    """Self-normalized estimate of E_xi[X_{0,a} X_{0,a}^T] with per-entry SE."""
    bp, A = segment_cluster(cluster)
    lengths = np.diff(bp)
    taus = cluster.services
    N, d = cluster.n_customers, pot.d
    y = rng.standard_normal((n_samples, len(lengths), d)) * np.sqrt(lengths)[None, :, None]
    X = np.einsum("ik,nkd->nid", A, y)
    vals = np.empty((n_samples, N))
    for i in range(N):
        vals[:, i] = pot.eval_v(taus[i], X[:, i, :])
    finite = np.all(np.isfinite(vals), axis=1)
    w = _products(np.where(finite[:, None], vals, 1.0))
    w[~finite] = 0.0
    tot = y.sum(axis=1)  # X_{0,a} per sample
    outer = np.einsum("ni,nj->nij", tot, tot)
    val = np.empty((d, d))
    se = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            val[i, j], se[i, j] = ratio_estimate(w * outer[:, i, j], w)
    return MatrixEstimate(value=val, se=se, n=n_samples)

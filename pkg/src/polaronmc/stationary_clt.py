"""Stationary infinite-volume path sampling, CLT covariance, FCLT tests.

The limiting path measure restricted to a window is a mixture: dormant
stretches carry plain Brownian increments, each cluster carries its
weight-tilted law, and the cluster layout follows the tilted stationary
alternating process.  The rescaled path n^{-1/2} X_{nt} should approach a
Brownian motion with covariance

    Sigma = E_hat[ d1_hat I + E_xi[X_{0,a} X_{0,a}^T] ] / E_hat[T1_hat],

which is estimated here together with an empirical test battery for the
functional convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimates import ratio_estimate
from .gaussian_engine import PathSample, sample_path_given_cluster, second_moment_under_P_xi
from .potentials import Potential
from .renewal import sample_stationary_window
from .tilting import TiltedLaw, estimate_F_auto, sample_tilted_cycle, solve_lambda


@dataclass
class SigmaReport:
    sigma: np.ndarray
    se: np.ndarray
    n: int
    numerator_mean: np.ndarray
    denominator_mean: float
    eigenvalues: np.ndarray = field(init=False)
    psd: bool = field(init=False)
    leq_identity: bool = field(init=False)

    def __post_init__(self):
        sym = 0.5 * (self.sigma + self.sigma.T)
        self.eigenvalues = np.linalg.eigvalsh(sym)
        tol = 3.0 * float(self.se.max())
        self.psd = bool(self.eigenvalues.min() >= -tol)
        self.leq_identity = bool(self.eigenvalues.max() <= 1.0 + tol)

    def to_summary(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "se": self.se.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "psd": self.psd,
            "leq_identity": self.leq_identity,
            "n": self.n,
        }


def estimate_sigma(
    tilted: TiltedLaw,
    pot: Potential,
    n_cycles: int,
    n_inner: int,
    rng: np.random.Generator,
) -> SigmaReport:
    """Ratio estimator of Sigma over tilted cycles, delta-method SEs."""
    tilted.check_ess()
    d = pot.d
    S = np.empty((n_cycles, d, d))
    T = np.empty(n_cycles)
    eye = np.eye(d)
    for k in range(n_cycles):
        cy = sample_tilted_cycle(tilted, rng)
        mom = second_moment_under_P_xi(cy.cluster, pot, n_inner, rng)
        S[k] = cy.dormant * eye + mom.value
        T[k] = cy.total
    val = np.empty((d, d))
    se = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            val[i, j], se[i, j] = ratio_estimate(S[:, i, j], T)
    return SigmaReport(
        sigma=val, se=se, n=n_cycles, numerator_mean=S.mean(axis=0), denominator_mean=float(T.mean())
    )


def _path_method(pot: Potential) -> str:
    return "exact_mixture" if pot.marks is not None else "mh"


def sample_infinite_volume_window(
    tilted: TiltedLaw,
    pot: Potential,
    A: float,
    B: float,
    grid_step: float,
    rng: np.random.Generator,
    burn_in_lengths: float = 100.0,
) -> PathSample:
    """Path increments of the limiting measure on a uniform grid over [A, B]."""
    n_bins = round((B - A) / grid_step)
    if abs(n_bins * grid_step - (B - A)) > 1e-9 or n_bins < 1:
        raise ValueError("grid_step must divide the window")
    grid = A + grid_step * np.arange(n_bins + 1)
    mean_total, _ = tilted.tilted_mean_total()
    config = sample_stationary_window(
        rng,
        lambda r: sample_tilted_cycle(tilted, r),
        A,
        B,
        method="burn_in",
        burn_in_lengths=burn_in_lengths,
        mean_total=mean_total,
    )
    d = pot.d
    increments = np.zeros((n_bins, d))
    active = np.zeros(n_bins)  # active time already accounted for per bin
    method = _path_method(pot)
    for c0, cy in config.cluster_placements():
        a = cy.cluster.active_length
        c1 = c0 + a
        if c1 <= A or c0 >= B:
            continue
        # local grid: cluster endpoints plus every global grid line (and the
        # window edges) falling inside the cluster span
        cuts = grid[(grid > c0) & (grid < c1)] - c0
        clip = [x - c0 for x in (A, B) if c0 < x < c1]
        local = np.concatenate([cy.cluster.starts, cy.cluster.ends, cuts, np.array(clip), [0.0, a]])
        path = sample_path_given_cluster(cy.cluster, pot, np.unique(local), rng, method=method)
        mids = c0 + 0.5 * (path.times[:-1] + path.times[1:])
        lens = np.diff(path.times)
        inside = (mids > A) & (mids < B)
        bins = np.clip(((mids - A) / grid_step).astype(int), 0, n_bins - 1)
        for k in np.flatnonzero(inside):
            increments[bins[k]] += path.increments[k]
            active[bins[k]] += lens[k]
    dormant = np.maximum(grid_step - active, 0.0)
    increments += rng.standard_normal((n_bins, d)) * np.sqrt(dormant)[:, None]
    return PathSample(times=grid, increments=increments, law="stationary")


def rescaled_paths(
    tilted: TiltedLaw,
    pot: Potential,
    n_scale: float,
    n_paths: int,
    rng: np.random.Generator,
    n_grid: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample paths of X^n_t = n^{-1/2} X_{nt}, t on a uniform grid of [0, 1].

    Returns (times, paths) with paths of shape (n_paths, n_grid + 1, d).
    """
    d = pot.d
    times = np.arange(n_grid + 1) / n_grid
    paths = np.empty((n_paths, n_grid + 1, d))
    step = n_scale / n_grid
    for k in range(n_paths):
        ps = sample_infinite_volume_window(tilted, pot, 0.0, n_scale, step, rng)
        paths[k] = ps.positions() / np.sqrt(n_scale)
    return times, paths


def modulus_of_continuity(paths: np.ndarray, times: np.ndarray, delta: float) -> np.ndarray:
    """omega(X, delta) = max over |t - s| <= delta of |X_t - X_s|, per path."""
    h = times[1] - times[0]
    w = max(int(round(delta / h)), 1)
    pos = paths  # (n, m, d)
    out = np.zeros(paths.shape[0])
    for lag in range(1, w + 1):
        diff = np.linalg.norm(pos[:, lag:, :] - pos[:, :-lag, :], axis=2)
        out = np.maximum(out, diff.max(axis=1))
    return out


def _inv_sqrt(sigma: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray | None:
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if vals.min() <= rel_tol * vals.max():
        return None
    return vecs @ np.diag(vals**-0.5) @ vecs.T


@dataclass
class FcltReport:
    per_n: dict
    level: float
    trend_decreasing: bool
    all_pass: bool

    def to_summary(self) -> dict:
        return {
            "per_n": self.per_n,
            "level": self.level,
            "trend_decreasing": self.trend_decreasing,
            "all_pass": self.all_pass,
        }


def evaluate_fclt_paths(
    times: np.ndarray,
    paths: np.ndarray,
    sigma: np.ndarray,
    rng: np.random.Generator,
    level: float = 0.01,
    deltas: tuple[float, ...] = (0.1, 0.05, 0.01),
) -> dict:
    """FCLT test battery on rescaled paths against Brownian(Sigma).

    (i) per-coordinate KS of the whitened endpoint against N(0, 1);
    (ii) chi-square independence of the two half increments' signs;
    (iii) one-sided rank test that the path modulus of continuity is not
    stochastically larger than the Brownian(Sigma) modulus;
    all at the given level.
    """
    n_paths, m, d = paths.shape
    endpoint = paths[:, -1, :] - paths[:, 0, :]
    W = _inv_sqrt(sigma)
    degraded = W is None
    if degraded:
        white = endpoint / np.sqrt(np.maximum(np.diag(sigma), 1e-300))
    else:
        white = endpoint @ W.T
    marg_p = [float(stats.kstest(white[:, j], "norm").pvalue) for j in range(d)]
    ks_distance = max(float(stats.kstest(white[:, j], "norm").statistic) for j in range(d))

    half = int(np.argmin(np.abs(times - 0.5)))
    inc1 = paths[:, half, 0] - paths[:, 0, 0]
    inc2 = paths[:, -1, 0] - paths[:, half, 0]
    table = np.array(
        [
            [np.sum((inc1 > 0) & (inc2 > 0)), np.sum((inc1 > 0) & (inc2 <= 0))],
            [np.sum((inc1 <= 0) & (inc2 > 0)), np.sum((inc1 <= 0) & (inc2 <= 0))],
        ]
    )
    chi = stats.chi2_contingency(table)
    indep_p = float(chi.pvalue)

    # Brownian reference paths with the same covariance and grid
    h = times[1] - times[0]
    L = np.linalg.cholesky(0.5 * (sigma + sigma.T) + 1e-12 * np.eye(d))
    z = rng.standard_normal((n_paths, m - 1, d)) * np.sqrt(h)
    binc = np.einsum("ij,nkj->nki", L, z)
    bpaths = np.concatenate([np.zeros((n_paths, 1, d)), np.cumsum(binc, axis=1)], axis=1)
    modulus_p = {}
    for delta in deltas:
        wp = modulus_of_continuity(paths, times, delta)
        wb = modulus_of_continuity(bpaths, times, delta)
        mw = stats.mannwhitneyu(wp, wb, alternative="greater")
        modulus_p[delta] = float(mw.pvalue)

    passed = (
        all(p > level for p in marg_p)
        and indep_p > level
        and all(p > level for p in modulus_p.values())
    )
    return {
        "marginal_p": marg_p,
        "independence_p": indep_p,
        "modulus_p": modulus_p,
        "ks_distance": ks_distance,
        "whitening_degraded": degraded,
        "pass": passed,
    }


def fclt_test(
    tilted: TiltedLaw,
    pot: Potential,
    n_scale_list: list[float],
    n_paths: int,
    rng: np.random.Generator,
    sigma: np.ndarray | None = None,
    level: float = 0.01,
    n_grid: int = 100,
) -> FcltReport:
    if sigma is None:
        sigma = estimate_sigma(tilted, pot, 2000, 64, rng).sigma
    per_n = {}
    ks_list = []
    for n_scale in sorted(n_scale_list):
        times, paths = rescaled_paths(tilted, pot, n_scale, n_paths, rng, n_grid=n_grid)
        res = evaluate_fclt_paths(times, paths, sigma, rng, level=level)
        per_n[n_scale] = res
        ks_list.append(res["ks_distance"])
    trend = bool(ks_list[-1] < ks_list[0]) if len(ks_list) > 1 else True
    return FcltReport(
        per_n=per_n,
        level=level,
        trend_decreasing=trend,
        all_pass=all(r["pass"] for r in per_n.values()),
    )


def ar1_block_paths(
    rng: np.random.Generator, n_paths: int, n_grid: int, d: int, rho: float = 0.85
) -> tuple[np.ndarray, np.ndarray]:
    """Negative control: paths whose grid increments are AR(1)-correlated.

    These have the right marginal scale but dependent half increments, so
    a correct independence test must reject them.
    """
    times = np.arange(n_grid + 1) / n_grid
    h = 1.0 / n_grid
    inc = np.empty((n_paths, n_grid, d))
    inc[:, 0, :] = rng.standard_normal((n_paths, d))
    for k in range(1, n_grid):
        inc[:, k, :] = rho * inc[:, k - 1, :] + np.sqrt(1 - rho * rho) * rng.standard_normal(
            (n_paths, d)
        )
    inc *= np.sqrt(h)
    paths = np.concatenate([np.zeros((n_paths, 1, d)), np.cumsum(inc, axis=1)], axis=1)
    return times, paths


def psi_identities_check(
    alpha_list: list[float],
    pot: Potential,
    rng: np.random.Generator,
    n_pool: int = 20000,
    n_inner: int = 32,
    deletion_inner: int = 16,
    n_deletion: int = 2000,
    proposal_scale: float | None = None,
) -> dict:
    """Heuristic identity battery relating psi, its derivative, and the
    tilted cycle statistics.

    For consecutive alpha triples, psi' is the central finite difference of
    the solved psi curve, and the following are reported with combined
    uncertainties (never hard-asserted; the identities rest on uncontrolled
    limit exchanges):

      alpha * psi'(alpha) * E_hat[T1_hat] = E_hat[N_hat]
      psi'(alpha) = E[N e^(-lambda T) F] / E[N e^(-lambda T) F_bar]
      psi(alpha) = 1 / E_hat[d1_hat]     (exact by construction)

    F_bar is the average of the cluster weight after deleting one customer
    (deletion may split the cluster; the weight is then the product over
    the resulting sub-clusters).
    """
    alphas = np.asarray(sorted(alpha_list), dtype=float)
    if len(alphas) < 3:
        raise ValueError("need at least 3 alphas for a central difference")
    laws = {}
    for al in alphas:
        prop = None if proposal_scale is None else proposal_scale * al
        laws[al] = solve_lambda(
            al, pot, rng, n_pool=n_pool, n_inner=n_inner, proposal_alpha=prop
        )
    psis = np.array([laws[al].psi for al in alphas])
    rows = []
    for i in range(1, len(alphas) - 1):
        al = alphas[i]
        law = laws[al]
        dpsi = (psis[i + 1] - psis[i - 1]) / (alphas[i + 1] - alphas[i - 1])
        t_hat, t_hat_se = law.tilted_mean_total()
        n_hat = law.tilted_mean(law.pool.N.astype(float))
        n_hat_se = float(
            np.sqrt(np.sum(law.weights**2 * (law.pool.N - n_hat) ** 2))
        )
        lhs = al * dpsi * t_hat
        rows.append(
            {
                "alpha": al,
                "psi": law.psi,
                "psi_prime_fd": dpsi,
                "lhs_alpha_psiprime_That": lhs,
                "rhs_mean_N_hat": n_hat,
                "rhs_se": n_hat_se,
                "rel_gap": abs(lhs - n_hat) / n_hat,
                "psi_from_dormant": 1.0 / (1.0 / (al + law.lambda_star)),
                "psi_prime_deletion": _deletion_psi_prime(
                    law, pot, rng, n_deletion, deletion_inner
                ),
            }
        )
    return {
        "alphas": alphas.tolist(),
        "psi_curve": psis.tolist(),
        "rows": rows,
        "psi_prime_monotone": bool(np.all(np.diff(np.diff(psis) / np.diff(alphas)) >= -1e-9))
        if len(alphas) > 2
        else True,
    }


def _deletion_psi_prime(law: TiltedLaw, pot: Potential, rng, n_use: int, n_inner: int) -> float:
    """psi' as the ratio E[N e^(-l T) F] / E[N e^(-l T) F_bar] on a subpool."""
    from .cluster_process import Cluster, group_into_clusters

    pool = law.pool
    n_use = min(n_use, pool.n)
    num = np.empty(n_use)
    den = np.empty(n_use)
    lam = law.lambda_star
    for k in range(n_use):
        cy = pool.cycles[k]
        cl = cy.cluster
        N = cl.n_customers
        f = pool.F[k]
        pref = pool.rn_cycle[k] * N * np.exp(-lam * pool.T[k])
        num[k] = pref * f
        if N == 1:
            fbar = 1.0
        else:
            vals = []
            pts = np.column_stack([cl.starts, cl.ends])
            for drop in range(N):
                rest = np.delete(pts, drop, axis=0)
                prod = 1.0
                for grp in group_into_clusters(rest):
                    sub = Cluster(starts=grp[:, 0] - grp[0, 0], ends=grp[:, 1] - grp[0, 0])
                    prod *= estimate_F_auto(sub, pot, n_inner, rng).value
                vals.append(prod)
            fbar = float(np.mean(vals))
        den[k] = pref * fbar
    return float(num.mean() / den.mean())

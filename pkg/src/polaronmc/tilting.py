"""Exponential tilting of the cycle law and free-energy estimation.

The tilt lambda* is the root of Lambda(lambda) = E[exp(-lambda T1) F(xi1)]
= 1 over the untilted cycle law; the free energy is psi = alpha + lambda*.
The tilted cycle law has dormant periods Exp(alpha + lambda*) and clusters
reweighted by exp(-lambda* a(xi)) F(xi), realized here by self-normalized
importance resampling over a frozen pool of raw cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster_process import (
    Cycle,
    cluster_to_local,
    sample_busy_cycle,
    sample_poisson_configuration,
)
from .estimates import (
    Estimate,
    effective_sample_size,
    from_samples,
    max_weight_share,
    running_mean_unstable,
)
from .gaussian_engine import estimate_F
from .potentials import Potential


class ConditionGError(RuntimeError):
    """The tilting equation has no root in the admissible range."""


def estimate_F_auto(cluster, pot: Potential, n_inner: int, rng) -> Estimate:
    """Cluster weight by the cheapest exact-or-unbiased route available."""
    if pot.closed_form_F is not None:
        return Estimate(value=float(pot.closed_form_F(cluster)), se=0.0, n=1)
    method = "mixture" if pot.marks is not None else "plain"
    return estimate_F(cluster, pot, n_inner, rng, method=method)


@dataclass
class CyclePool:
    """Frozen pool of raw cycles with per-cycle weight estimates.

    Cycles may be sampled at a proposal arrival rate different from the
    target alpha; rn_cycle / rn_cluster carry the exact likelihood ratios
    (the alternating construction uses N + 1 exponential gaps, whose rate
    is the only alpha-dependence).  A well-chosen proposal flattens the
    tilted weights when the raw ones would be heavy-tailed.
    """

    alpha: float
    beta: float
    cycles: list[Cycle]
    F: np.ndarray
    F_se: np.ndarray
    proposal_alpha: float | None = None

    def __post_init__(self):
        self.T = np.array([c.total for c in self.cycles])
        self.d = np.array([c.dormant for c in self.cycles])
        self.a = np.array([c.cluster.active_length for c in self.cycles])
        self.N = np.array([c.cluster.n_customers for c in self.cycles])
        ap = self.proposal_alpha
        if ap is None or ap == self.alpha:
            self.rn_cluster = np.ones(self.n)
            self.rn_cycle = np.ones(self.n)
        else:
            gap_sums = np.array([c.cluster.gaps.sum() for c in self.cycles])
            lr = np.log(self.alpha / ap)
            self.rn_cluster = np.exp(self.N * lr - (self.alpha - ap) * gap_sums)
            self.rn_cycle = self.rn_cluster * np.exp(lr - (self.alpha - ap) * self.d)

    @property
    def n(self) -> int:
        return len(self.cycles)

    @staticmethod
    def merge(pools: list["CyclePool"]) -> "CyclePool":
        first = pools[0]
        return CyclePool(
            alpha=first.alpha,
            beta=first.beta,
            cycles=[c for p in pools for c in p.cycles],
            F=np.concatenate([p.F for p in pools]),
            F_se=np.concatenate([p.F_se for p in pools]),
            proposal_alpha=first.proposal_alpha,
        )


def build_pool(
    alpha: float,
    pot: Potential,
    n_pool: int,
    n_inner: int,
    rng: np.random.Generator,
    proposal_alpha: float | None = None,
) -> CyclePool:
    ap = alpha if proposal_alpha is None else proposal_alpha
    cycles = [sample_busy_cycle(rng, ap, pot.beta) for _ in range(n_pool)]
    F = np.empty(n_pool)
    F_se = np.empty(n_pool)
    for i, cy in enumerate(cycles):
        est = estimate_F_auto(cy.cluster, pot, n_inner, rng)
        F[i] = est.value
        F_se[i] = est.se
    return CyclePool(
        alpha=alpha, beta=pot.beta, cycles=cycles, F=F, F_se=F_se, proposal_alpha=proposal_alpha
    )


def lambda_hat(pool: CyclePool, lam: float) -> float:
    """Pool estimate of Lambda(lambda); deterministic on a frozen pool."""
    if lam <= -pool.alpha:
        raise ValueError("lambda must exceed -alpha")
    return float(np.mean(pool.rn_cycle * np.exp(-lam * pool.T) * pool.F))


def estimate_big_lambda(
    alpha: float,
    pot: Potential,
    lam: float,
    n: int,
    rng: np.random.Generator,
    n_inner: int = 64,
    pool: CyclePool | None = None,
) -> Estimate:
    """Monte Carlo estimate of Lambda(lambda) = E[exp(-lambda T1) F(xi1)]."""
    if lam <= -alpha:
        raise ValueError("lambda must exceed -alpha: exp(-lambda d) not integrable")
    if pool is None:
        pool = build_pool(alpha, pot, n, n_inner, rng)
    samples = np.exp(-lam * pool.T) * pool.F
    est = from_samples(samples)
    est.flags["diverging"] = running_mean_unstable(samples)
    return est


@dataclass
class TiltedLaw:
    alpha: float
    beta: float
    lambda_star: float
    lambda_ci: tuple[float, float]
    pool: CyclePool
    ess_floor: float = 50.0
    weights: np.ndarray = field(init=False)
    ess: float = field(init=False)
    max_share: float = field(init=False)

    def __post_init__(self):
        raw = self.pool.rn_cluster * np.exp(-self.lambda_star * self.pool.a) * self.pool.F
        self.weights = raw / raw.sum()
        self.ess = effective_sample_size(self.weights)
        self.max_share = max_weight_share(self.weights)
        self._cumw = np.cumsum(self.weights)

    @property
    def psi(self) -> float:
        return self.alpha + self.lambda_star

    def tilted_mean(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def tilted_mean_total(self) -> tuple[float, float]:
        """(E_hat[T1_hat], weighted-sample standard error)."""
        mean_a = self.tilted_mean(self.pool.a)
        var_a = float(np.sum(self.weights**2 * (self.pool.a - mean_a) ** 2))
        return 1.0 / (self.alpha + self.lambda_star) + mean_a, np.sqrt(var_a)

    def check_ess(self):
        if self.ess < self.ess_floor:
            raise RuntimeError(
                f"tilted weights degenerate: ESS {self.ess:.1f} below {self.ess_floor}"
            )

    def to_summary(self) -> dict:
        tm, _ = self.tilted_mean_total()
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda_star": self.lambda_star,
            "lambda_ci": list(self.lambda_ci),
            "psi": self.psi,
            "ess": self.ess,
            "max_weight_share": self.max_share,
            "n_pool": self.pool.n,
            "tilted_mean_total": tm,
        }


def _bisect_root(
    T: np.ndarray, F: np.ndarray, rn: np.ndarray, alpha: float, tol: float
) -> float | None:
    """Root of mean(rn exp(-lam T) F) = 1 on a fixed sample, or None."""
    g = lambda lam: float(np.mean(rn * np.exp(-lam * T) * F)) - 1.0
    lo = -alpha + 1e-3
    if g(lo) < 0.0:
        return None
    hi = alpha + 10.0
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_lambda(
    alpha: float,
    pot: Potential,
    rng: np.random.Generator,
    tol: float = 1e-4,
    n_pool: int = 20000,
    n_inner: int = 64,
    pool: CyclePool | None = None,
    n_bootstrap: int = 200,
    proposal_alpha: float | None = None,
) -> TiltedLaw:
    """Solve the tilting equation by bisection on a frozen cycle pool.

    Using one pool for every lambda (common random numbers) makes the
    estimated Lambda strictly decreasing in lambda, so bisection is exact
    up to tol; the pool bootstrap supplies a confidence interval.
    """
    if pool is None:
        pool = build_pool(alpha, pot, n_pool, n_inner, rng, proposal_alpha=proposal_alpha)
    root = _bisect_root(pool.T, pool.F, pool.rn_cycle, alpha, tol)
    if root is None:
        raise ConditionGError(
            "no root of the tilting equation down to lambda = -alpha: "
            "growth condition plausibly fails for this potential/alpha"
        )
    boots = []
    for _ in range(n_bootstrap):
        idx = rng.integers(0, pool.n, pool.n)
        r = _bisect_root(pool.T[idx], pool.F[idx], pool.rn_cycle[idx], alpha, tol)
        if r is not None:
            boots.append(r)
    if boots:
        ci = (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975)))
    else:
        ci = (root, root)
    return TiltedLaw(alpha=alpha, beta=pot.beta, lambda_star=root, lambda_ci=ci, pool=pool)


def sample_tilted_cycle(tilted: TiltedLaw, rng: np.random.Generator) -> Cycle:
    """Dormant ~ Exp(alpha + lambda*); cluster resampled from the pool."""
    tilted.check_ess()
    d = rng.exponential(1.0 / (tilted.alpha + tilted.lambda_star))
    idx = int(np.searchsorted(tilted._cumw, rng.random(), side="right"))
    idx = min(idx, tilted.pool.n - 1)
    return Cycle(dormant=d, cluster=tilted.pool.cycles[idx].cluster)


def estimate_log_bold_z(
    alpha: float,
    pot: Potential,
    length: float,
    n: int,
    rng: np.random.Generator,
    n_inner: int = 32,
) -> Estimate:
    """Estimate of the normalized partition value Z_bold over a window of
    the given length: the mean over Poisson configurations of the product
    of per-cluster weights.  Value/se are for Z_bold itself (not its log).
    """
    T = length / 2.0
    vals = np.empty(n)
    for k in range(n):
        config = sample_poisson_configuration(rng, alpha, T, pot.beta)
        prod = 1.0
        for pts in config.clusters:
            cl, _ = cluster_to_local(pts)
            prod *= estimate_F_auto(cl, pot, n_inner, rng).value
        vals[k] = prod
    est = from_samples(vals)
    est.flags["diverging"] = running_mean_unstable(vals)
    return est


def estimate_psi_direct(
    alpha: float,
    pot: Potential,
    T_list: list[float],
    n: int,
    rng: np.random.Generator,
    n_inner: int = 32,
) -> dict:
    """Free energy from the growth rate of the normalized partition value.

    Fits log Z_bold(length) linearly in the window length; the slope is
    psi - alpha.  Reports a curvature diagnostic (second differences of the
    fitted points; superadditivity predicts nonnegative curvature of log Z
    up to noise) and warns when the estimates are noise-dominated.
    """
    lengths = np.asarray(sorted(T_list), dtype=float)
    if len(lengths) < 3:
        raise ValueError("need at least 3 window lengths")
    logz = np.empty(len(lengths))
    logz_se = np.empty(len(lengths))
    for i, L in enumerate(lengths):
        est = estimate_log_bold_z(alpha, pot, L, n, rng, n_inner=n_inner)
        logz[i] = np.log(est.value)
        logz_se[i] = est.se / est.value
    wts = 1.0 / np.maximum(logz_se, 1e-12) ** 2
    xm = np.average(lengths, weights=wts)
    ym = np.average(logz, weights=wts)
    slope = float(np.sum(wts * (lengths - xm) * (logz - ym)) / np.sum(wts * (lengths - xm) ** 2))
    slope_se = float(np.sqrt(1.0 / np.sum(wts * (lengths - xm) ** 2)))
    second_diff = np.diff(logz, 2).tolist() if len(lengths) >= 3 else []
    noisy = bool(np.any(logz_se > 0.2 * np.maximum(np.abs(logz), 1e-12)))
    return {
        "psi": alpha + slope,
        "psi_se": slope_se,
        "slope": slope,
        "lengths": lengths.tolist(),
        "log_bold_z": logz.tolist(),
        "log_bold_z_se": logz_se.tolist(),
        "curvature": second_diff,
        "noise_dominated": noisy,
    }


def limit_constant(tilted: TiltedLaw, n_bootstrap: int = 200, rng=None) -> dict:
    """The limit of Z_bold(t) exp(-phi t), by its two equivalent formulas.

    Expression 1: (alpha / psi) * E[T1] / E_hat[T1_hat].
    Expression 2: exp(alpha/beta) / (psi * E[T1 exp(-lambda T1) F]); the
    exp(alpha/beta) factor converts the plain-partition limit to the
    normalized one (their growth constants differ by the intensity mass
    rate).  Both are estimated on the pool; agreement within the combined
    uncertainty is the internal consistency check.
    """
    tilted.check_ess()
    pool = tilted.pool
    alpha, beta = tilted.alpha, tilted.beta

    def both(T, a, F, rnc, rny, lam):
        psi = alpha + lam
        raw = rnc * np.exp(-lam * a) * F
        w = raw / raw.sum()
        t_hat = 1.0 / psi + float(np.dot(w, a))
        t_mean = float(np.mean(rny * T)) / float(np.mean(rny))
        e1 = (alpha / psi) * t_mean / t_hat
        e2 = np.exp(alpha / beta) / (psi * float(np.mean(rny * T * np.exp(-lam * T) * F)))
        return e1, e2

    e1, e2 = both(
        pool.T, pool.a, pool.F, pool.rn_cluster, pool.rn_cycle, tilted.lambda_star
    )
    if rng is None:
        rng = np.random.default_rng(0)
    # bootstrap re-solves the tilting root on each replicate, so the
    # uncertainty of lambda itself (and its correlation with both
    # expressions) is part of the reported errors
    b1, b2 = np.empty(n_bootstrap), np.empty(n_bootstrap)
    for k in range(n_bootstrap):
        idx = rng.integers(0, pool.n, pool.n)
        lam_k = _bisect_root(pool.T[idx], pool.F[idx], pool.rn_cycle[idx], alpha, 1e-4)
        if lam_k is None:
            lam_k = tilted.lambda_star
        b1[k], b2[k] = both(
            pool.T[idx], pool.a[idx], pool.F[idx],
            pool.rn_cluster[idx], pool.rn_cycle[idx], lam_k,
        )
    diff_se = float(np.std(b1 - b2, ddof=1))
    return {
        "expr1": Estimate(value=e1, se=float(b1.std(ddof=1)), n=pool.n),
        "expr2": Estimate(value=e2, se=float(b2.std(ddof=1)), n=pool.n),
        "diff_se": diff_se,
        "agree_2se": bool(abs(e1 - e2) <= 2.0 * diff_se),
    }


def pgf_customer_count(
    alpha: float, beta: float, z: float, n: int, rng: np.random.Generator
) -> Estimate:
    """Monte Carlo estimate of E[z^N] over busy cycles, with divergence flag."""
    if z < 0:
        raise ValueError("z must be >= 0")
    N = np.array(
        [sample_busy_cycle(rng, alpha, beta).cluster.n_customers for _ in range(n)]
    )
    samples = z**N.astype(float)
    est = from_samples(samples)
    est.flags["diverging"] = running_mean_unstable(samples)
    return est

import numpy as np
import pytest
from scipy.special import gamma

import polaronmc as pm
from polaronmc import tilting as tl

from conftest import rng


def test_lambda_hat_trivial_is_exact_at_zero(trivial):
    pool = tl.build_pool(1.0, trivial, 2000, 1, rng(0))
    assert tl.lambda_hat(pool, 0.0) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        tl.lambda_hat(pool, -1.0)


def test_big_lambda_against_frozen_oracle(trivial):
    # E[exp(-T1)] at alpha = beta = 1, times F = 1: frozen large-sample
    # value 0.20904 +/- 0.00012 (2e6 cycles)
    est = tl.estimate_big_lambda(1.0, trivial, 1.0, 100000, rng(1), n_inner=1)
    comb = np.hypot(est.se, 0.00012)
    assert abs(est.value - 0.20904) <= 4.0 * comb


def test_lambda_hat_monotone_in_lambda(trivial):
    pool = tl.build_pool(1.0, trivial, 2000, 1, rng(2))
    grid = np.linspace(-0.5, 2.0, 21)
    vals = [tl.lambda_hat(pool, lam) for lam in grid]
    assert np.all(np.diff(vals) < 0)


def test_solve_lambda_trivial(trivial):
    law = tl.solve_lambda(1.0, trivial, rng(3), n_pool=20000, n_inner=1)
    assert abs(law.lambda_star) < 1e-3
    # bisection tolerance widens the interval around the exact root 0
    assert law.lambda_ci[0] <= 1e-3 and law.lambda_ci[1] >= -1e-3
    # near-uniform weights: resampling is essentially the raw pool law
    # (exact uniformity up to the bisection tolerance on lambda)
    assert law.ess >= 0.999 * law.pool.n
    assert law.max_share <= 1.1 / law.pool.n


def test_solve_lambda_constant_v():
    # v = c has lambda* = (c - 1) alpha in closed form
    law = tl.solve_lambda(
        0.5, pm.make_constant_v(2.0), rng(4), n_pool=20000, n_inner=1, proposal_alpha=1.0
    )
    assert abs(law.lambda_star - 0.5) < 0.02
    assert law.psi == pytest.approx(1.0, abs=0.02)


def test_solve_lambda_shifted_potential(trivial):
    # shifting v by 1 reproduces v = 2 through the generic mixture machinery
    sh = pm.shift_by_g(trivial, 1.0)
    law = tl.solve_lambda(0.5, sh, rng(5), n_pool=4000, n_inner=64, proposal_alpha=1.0)
    assert abs(law.lambda_star - 0.5) < 0.04


def test_no_root_raises_condition_error(trivial):
    pool = tl.build_pool(1.0, trivial, 2000, 1, rng(6))
    pool.F = np.full(pool.n, 1e-8)
    pool.F_se = np.zeros(pool.n)
    with pytest.raises(tl.ConditionGError):
        tl.solve_lambda(1.0, trivial, rng(7), pool=pool)


def test_wrong_lambda_degrades_ess(trivial):
    pool = tl.build_pool(1.0, trivial, 2000, 1, rng(8))
    bad = tl.TiltedLaw(alpha=1.0, beta=1.0, lambda_star=-0.9, lambda_ci=(-0.9, -0.9), pool=pool)
    assert bad.ess < 50.0
    assert bad.max_share > 0.2
    with pytest.raises(RuntimeError):
        bad.check_ess()


def test_tilted_mean_total_trivial(trivial):
    law = tl.solve_lambda(1.0, trivial, rng(9), n_pool=20000, n_inner=1)
    tm, tm_se = law.tilted_mean_total()
    assert abs(tm - np.e) <= 4.0 * tm_se + 0.01


def test_limit_constant_trivial_is_one(trivial):
    law = tl.solve_lambda(1.0, trivial, rng(20), n_pool=20000, n_inner=1)
    lc = tl.limit_constant(law, rng=rng(21))
    assert lc["expr1"].agrees_with(1.0)
    assert lc["expr2"].agrees_with(1.0)
    assert lc["agree_2se"]


def test_limit_constant_constant_v_oracle():
    # for v = c the limit is exp(-(c-1) alpha / beta)
    law = tl.solve_lambda(
        0.5, pm.make_constant_v(2.0), rng(12), n_pool=40000, n_inner=1, proposal_alpha=1.0
    )
    lc = tl.limit_constant(law, rng=rng(13))
    ref = np.exp(-0.5)
    assert abs(lc["expr1"].value - ref) <= 3.5 * lc["expr1"].se
    assert abs(lc["expr2"].value - ref) <= 3.5 * lc["expr2"].se


def test_psi_direct_matches_solver(frohlich):
    r = rng(14)
    law = tl.solve_lambda(0.5, frohlich, r, n_pool=8000, n_inner=64)
    direct = tl.estimate_psi_direct(0.5, frohlich, [4.0, 6.0, 8.0], 20000, r)
    ci_half = 0.5 * (law.lambda_ci[1] - law.lambda_ci[0])
    comb = np.hypot(direct["psi_se"], ci_half)
    assert not direct["noise_dominated"]
    assert abs(direct["psi"] - law.psi) <= 3.0 * comb


def test_sample_tilted_cycle_trivial(trivial):
    law = tl.solve_lambda(1.0, trivial, rng(15), n_pool=10000, n_inner=1)
    r = rng(16)
    cycles = [tl.sample_tilted_cycle(law, r) for _ in range(5000)]
    d = np.array([c.dormant for c in cycles])
    # dormant periods follow Exp(alpha + lambda*) ~ Exp(1)
    assert abs(d.mean() - 1.0) <= 4.0 * d.std(ddof=1) / np.sqrt(len(d))


def test_proposal_rate_reweighting_is_consistent(trivial):
    # the same target law sampled under two proposal rates must give
    # matching tilting roots
    law_a = tl.solve_lambda(0.7, trivial, rng(17), n_pool=20000, n_inner=1)
    law_b = tl.solve_lambda(0.7, trivial, rng(18), n_pool=20000, n_inner=1, proposal_alpha=1.0)
    assert abs(law_a.lambda_star - law_b.lambda_star) < 0.01


def test_pair_moment_closed_form(frohlich):
    # E[h(tau, sigma ^ tau)] over an Exp(beta) service and Exp(alpha) gap
    # equals (2/pi)^(p/2) (alpha+beta)^(p/2) Gamma(1 - p/2); p = 1 gives 2
    h = frohlich.closed_form_h
    r = rng(19)
    n = 400000
    m = np.minimum(r.exponential(1.0, n), r.exponential(1.0, n))
    vals = np.array([h(1.0, mi) for mi in m[:0]])  # signature smoke
    vals = np.sqrt(2.0 / np.pi) * m**-0.5
    se = vals.std(ddof=1) / np.sqrt(n)
    assert abs(vals.mean() - 2.0) <= 4.0 * se
    # p = 3/2 analog converges slowly (infinite variance); fixed-seed check
    v15 = (2.0 / np.pi) ** 0.75 * m**-0.75
    ref = (2.0 / np.pi) ** 0.75 * 2.0**0.75 * gamma(0.25)
    assert abs(v15.mean() - ref) / ref < 0.05


def test_pgf_customer_count():
    # E[z^N]: at z = 1 this is 1; small z is dominated by single customers
    est = pm.pgf_customer_count(1.0, 1.0, 1.0, 5000, rng(20))
    assert est.agrees_with(1.0, k=4.0)
    est = pm.pgf_customer_count(1.0, 2.0, 0.5, 20000, rng(21))
    assert 0.3 < est.value < 0.6
    with pytest.raises(ValueError):
        pm.pgf_customer_count(1.0, 1.0, -0.5, 10, rng(22))

import numpy as np
import pytest
from scipy import stats

import polaronmc as pm
from polaronmc.cluster_process import (
    cluster_to_local,
    cycles_to_csv_rows,
    group_into_clusters,
    sample_busy_cycles,
)

from conftest import rng


def test_busy_cycle_structure():
    r = rng(0)
    for _ in range(200):
        cy = pm.sample_busy_cycle(r, 0.7, 1.3)
        cl = cy.cluster
        cl.validate()
        assert cy.dormant > 0
        assert cl.n_customers >= 1
        assert len(cl.gaps) == cl.n_customers
        assert cl.starts[0] == 0.0
        assert cy.total == pytest.approx(cy.dormant + cl.active_length)
        # cluster has no interior dormant stretch
        order = np.argsort(cl.starts)
        running_end = cl.ends[order[0]]
        for i in order[1:]:
            assert cl.starts[i] <= running_end + 1e-12
            running_end = max(running_end, cl.ends[i])


def test_intensity_mass_value():
    assert pm.intensity_mass(1.0, 1.0, 1.0) == pytest.approx(
        2.0 - (1.0 - np.exp(-2.0)), rel=1e-14
    )
    # linear in alpha, and ~ 2 alpha T for T >> 1/beta
    assert pm.intensity_mass(2.0, 1.0, 1.0) == pytest.approx(
        2.0 * pm.intensity_mass(1.0, 1.0, 1.0)
    )
    assert pm.intensity_mass(1.0, 500.0, 1.0) == pytest.approx(999.0, rel=1e-3)


def test_expected_cycle_length_closed_form():
    assert pm.expected_cycle_length(1.0, 1.0) == pytest.approx(np.e, rel=1e-14)
    r = rng(1)
    totals = np.array([pm.sample_busy_cycle(r, 1.0, 1.0).total for _ in range(10000)])
    se = totals.std(ddof=1) / 100.0
    assert abs(totals.mean() - np.e) <= 3.5 * se


def test_single_customer_probability():
    # first customer closes the cycle iff the next arrival gap beats the service
    r = rng(2)
    N = np.array([pm.sample_busy_cycle(r, 1.0, 2.0).cluster.n_customers for _ in range(10000)])
    p = (N == 1).mean()
    se = np.sqrt(p * (1 - p) / len(N))
    assert abs(p - 2.0 / 3.0) <= 3.5 * se


def test_longrun_dormancy_fraction():
    r = rng(3)
    cycles = sample_busy_cycles(r, 0.5, 1.0, 20000)
    d = np.array([c.dormant for c in cycles])
    T = np.array([c.total for c in cycles])
    frac = d.sum() / T.sum()
    assert abs(frac - np.exp(-0.5)) < 0.01


def test_group_into_clusters_examples():
    pts = np.array([[0.0, 1.0], [0.5, 2.0], [3.0, 4.0]])
    groups = group_into_clusters(pts)
    assert len(groups) == 2
    assert len(groups[0]) == 2 and len(groups[1]) == 1
    # touching endpoints belong to one cluster
    pts = np.array([[0.0, 1.0], [1.0, 2.0]])
    assert len(group_into_clusters(pts)) == 1
    assert len(group_into_clusters(np.empty((0, 2)))) == 0


def test_poisson_configuration_count():
    r = rng(4)
    counts = np.array(
        [pm.sample_poisson_configuration(r, 1.0, 1.0, 1.0).n_points for _ in range(10000)]
    )
    mass = pm.intensity_mass(1.0, 1.0, 1.0)
    se = counts.std(ddof=1) / 100.0
    assert abs(counts.mean() - mass) <= 3.5 * se
    # count distribution is Poisson(mass): compare a few pmf values
    for k in range(4):
        pk = (counts == k).mean()
        ref = stats.poisson.pmf(k, mass)
        assert abs(pk - ref) <= 4.0 * np.sqrt(ref * (1 - ref) / len(counts)) + 1e-3


def test_restrict_window():
    r = rng(5)
    config = pm.sample_poisson_configuration(r, 1.0, 3.0, 1.0)
    sub = pm.restrict(config, -1.0, 1.0)
    # keeps exactly the maximal clusters whose span meets [-1, 1]
    for pts in sub.clusters:
        assert pts[:, 1].max() >= -1.0 and pts[:, 0].min() <= 1.0
    dropped = config.n_points - sub.n_points
    assert dropped >= 0
    again = pm.restrict(sub, -1.0, 1.0)
    assert again.n_points == sub.n_points


def test_occupied_at():
    r = rng(6)
    config = pm.sample_poisson_configuration(r, 2.0, 2.0, 1.0)
    for t in (-1.0, 0.0, 0.5):
        manual = any(
            np.any((pts[:, 0] <= t) & (t < pts[:, 1])) for pts in config.clusters
        )
        assert config.occupied_at(t) == manual


def test_cluster_to_local_roundtrip():
    pts = np.array([[2.0, 3.5], [2.5, 4.0]])
    cl, offset = cluster_to_local(pts)
    assert offset == 2.0
    assert cl.starts[0] == 0.0
    np.testing.assert_allclose(cl.starts + offset, np.sort(pts[:, 0]))
    cl.validate()


def test_cycles_csv_rows():
    r = rng(7)
    cycles = sample_busy_cycles(r, 1.0, 1.0, 5)
    rows = cycles_to_csv_rows(cycles)
    assert len(rows) == 5
    assert {"cycle_id", "d", "a", "N", "intervals"} <= set(rows[0])


def test_poisson_occupancy_matches_closed_form():
    """The number of intervals covering a fixed time is Poisson with mass
    alpha/beta * [(1 - e^{-beta(t+T)}) - (e^{-beta(T-t)} - e^{-2 beta T})],
    counting only intervals with both endpoints inside (-T, T)."""
    r = rng(8)
    T, alpha, beta = 2.0, 0.8, 1.0
    t_check = 1.0
    occ = np.array(
        [
            pm.sample_poisson_configuration(r, alpha, T, beta).occupied_at(t_check)
            for _ in range(8000)
        ]
    )
    mass = (alpha / beta) * (
        (1.0 - np.exp(-beta * (t_check + T)))
        - (np.exp(-beta * (T - t_check)) - np.exp(-2.0 * beta * T))
    )
    p_ref = 1.0 - np.exp(-mass)
    p = occ.mean()
    se = np.sqrt(p_ref * (1 - p_ref) / len(occ))
    assert abs(p - p_ref) <= 4.0 * se


def test_stationary_queue_occupancy():
    # an unconstrained stationary window is occupied with probability 1 - e^{-alpha/beta}
    from polaronmc.renewal import sample_stationary_window

    r = rng(9)
    alpha, beta = 0.8, 1.0
    occ = np.array(
        [
            not sample_stationary_window(
                r, lambda rr: pm.sample_busy_cycle(rr, alpha, beta), -2.0, 2.0
            ).dormant_at(1.0)
            for _ in range(4000)
        ]
    )
    p_ref = 1.0 - np.exp(-alpha / beta)
    p = occ.mean()
    se = np.sqrt(p_ref * (1 - p_ref) / len(occ))
    assert abs(p - p_ref) <= 4.0 * se

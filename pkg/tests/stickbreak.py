import numpy as np
import pytest

from st_stickbreaking._exceptions import DegenerateDenominator, GOutOfRange
from st_stickbreaking.core import SpaceTimeDomain, SpaceTimePoint
from st_stickbreaking.kernels import KernelHyper, KernelKind
from st_stickbreaking.stickbreak import (
    PriorConfig,
    StickState,
    break_sticks,
    check_g_gneiting,
    coclustering_closed_form,
    compute_weights,
    cond_coclustering,
    expected_cluster_count,
    g_gneiting,
    g_mc,
    g_quadrature,
    log_break_sticks,
    marginal_coclustering_mc,
    marginal_covariance,
    sample_prior_config,
    sample_process,
    stick_weights,
    weight_map,
)


def _state(kind=KernelKind.GNEITING, M=5, seed=0, **hyper):
    rng = np.random.default_rng(seed)
    return StickState(
        rng.uniform(0.1, 0.9, size=M),
        rng.random((M, 2)),
        rng.uniform(1, 5, size=M),
        kind,
        hyper=KernelHyper(**hyper),
    )


def test_break_sticks_sums_to_one_with_remainder():
    U = np.array([[0.5, 0.5, 0.5], [0.2, 0.9, 0.1]])
    pi, remainder = break_sticks(U)
    np.testing.assert_allclose(pi[0], [0.5, 0.25, 0.125])
    assert remainder[0] == pytest.approx(0.125)
    np.testing.assert_allclose(pi.sum(axis=1) + remainder, 1.0)


def test_log_break_sticks_matches():
    U = np.array([0.3, 0.6, 0.2])
    log_pi, log_rem = log_break_sticks(U)
    pi, rem = break_sticks(U)
    np.testing.assert_allclose(np.exp(log_pi), pi)
    assert np.exp(log_rem) == pytest.approx(rem)


def test_constant_kernel_weights_do_not_vary():
    state = _state(KernelKind.CONSTANT)
    coords = np.array([[0.0, 0.0], [1.0, 1.0]])
    pi, remainder = stick_weights(state, coords, [1, 5])
    np.testing.assert_allclose(pi[0], pi[1])
    np.testing.assert_allclose(pi[0], break_sticks(state.V)[0])
    assert remainder[0] == pytest.approx(remainder[1])


def test_weights_are_a_subprobability():
    state = _state(gamma=2.0, lam=0.5)
    pi, remainder = compute_weights(state, SpaceTimePoint(0.4, 0.6, 2))
    assert np.all(pi >= 0)
    assert pi.sum() + remainder == pytest.approx(1.0)


def test_stick_state_rejects_boundary_sticks():
    with pytest.raises(ValueError):
        StickState([0.5, 1.0], [[0, 0], [1, 1]], [1, 2], KernelKind.CONSTANT)


def test_cond_coclustering_constant_kernel():
    state = _state(KernelKind.CONSTANT, M=40)
    p = SpaceTimePoint(0.1, 0.1, 1)
    q = SpaceTimePoint(0.9, 0.9, 4)
    result = cond_coclustering(state, p, q)
    pi, _ = break_sticks(state.V)
    assert result.value == pytest.approx(float(np.sum(pi ** 2)))
    assert result.tail_bound >= 0


def test_closed_form_reduces_to_exchangeable():
    a, b = 1.5, 2.0
    assert coclustering_closed_form(a, b, 1.0) == pytest.approx(
        (a + 1) / (a + 2 * b + 1)
    )
    assert coclustering_closed_form(a, b, 0.0) == 0.0
    assert marginal_covariance(a, b, 1.0, 4.0) == pytest.approx(
        4.0 * (a + 1) / (a + 2 * b + 1)
    )
    with pytest.raises(GOutOfRange):
        coclustering_closed_form(a, b, 1.2)


def test_marginal_mc_agrees_with_closed_form_for_constant_kernel(rng):
    config = PriorConfig(
        domain=SpaceTimeDomain.unit(3),
        truncation=60,
        a=1.0,
        b=1.0,
        kind=KernelKind.CONSTANT,
    )
    p = SpaceTimePoint(0.2, 0.2, 1)
    q = SpaceTimePoint(0.7, 0.5, 3)
    estimate, se = marginal_coclustering_mc(config, p, q, 4000, rng)
    assert estimate == pytest.approx(
        coclustering_closed_form(1.0, 1.0, 1.0), abs=4 * se + 1e-3
    )


def test_marginal_mc_requires_enough_draws(rng):
    with pytest.raises(ValueError):
        marginal_coclustering_mc(
            PriorConfig(),
            SpaceTimePoint(0, 0, 1),
            SpaceTimePoint(0, 0, 1),
            10,
            rng,
        )


def test_g_is_one_at_the_same_point_for_constant_kernel(rng):
    domain = SpaceTimeDomain.unit(4)
    args = (KernelKind.CONSTANT, KernelHyper(), domain, (0.5, 0.5))
    g, se = g_mc(*args, (0.1, 0.9), 1, 4, 1000, rng)
    assert g == pytest.approx(1.0)
    assert se == pytest.approx(0.0, abs=1e-12)
    assert g_quadrature(*args, (0.1, 0.9), 1, 4) == pytest.approx(1.0)


def test_g_quadrature_decreases_with_distance():
    domain = SpaceTimeDomain.unit(5)
    hyper = KernelHyper(gamma=1.0, lam=0.5)
    others = np.column_stack([np.linspace(0.5, 1.0, 6), np.full(6, 0.5)])
    args = (KernelKind.GNEITING, hyper, domain, (0.5, 0.5))
    g = g_quadrature(*args, others, 2, np.full(6, 2))
    assert g.shape == (6,)
    assert np.all(np.diff(g) < 0)
    assert np.all((g > 0) & (g <= 1))


def test_g_quadrature_agrees_with_monte_carlo(rng):
    domain = SpaceTimeDomain.unit(3)
    hyper = KernelHyper(h=(0.3, 0.3), h_t=1.5)
    args = (KernelKind.SEPARABLE, hyper, domain, (0.4, 0.5), (0.6, 0.5), 1, 2)
    exact = g_quadrature(*args, n_nodes=48)
    estimate, se = g_mc(*args, 20000, rng)
    assert estimate == pytest.approx(exact, abs=4 * se + 1e-3)


def test_g_degenerate_denominator():
    domain = SpaceTimeDomain((10.0, 11.0), (10.0, 11.0), 1)
    hyper = KernelHyper(h=(0.01, 0.01), h_t=1.0)
    with pytest.raises(DegenerateDenominator):
        g_quadrature(
            KernelKind.SEPARABLE, hyper, domain, (0.0, 0.0), (0.0, 0.0), 1, 1
        )


def test_g_gneiting_closed_form_at_the_same_point():
    g = g_gneiting((0.5, 0.5), (0.5, 0.5), 0, 0, 1.0, 0.0)
    assert g == pytest.approx(1.0)


def test_check_g_gneiting_reports_both_values(rng):
    check = check_g_gneiting(
        SpaceTimeDomain.unit(3),
        (0.5, 0.5),
        (0.6, 0.5),
        1,
        2,
        1.0,
        0.5,
        2000,
        rng,
    )
    assert 0 <= check.estimate <= 1
    assert check.std_error > 0
    assert isinstance(check.agree, bool)


def test_expected_cluster_count_is_nested():
    config = PriorConfig(domain=SpaceTimeDomain.unit(5), truncation=50)
    previous = None
    for n in (1, 5, 20, 60):
        mean, counts = expected_cluster_count(
            config, n, 30, np.random.default_rng(3), return_counts=True
        )
        assert counts.shape == (30,)
        if previous is not None:
            assert np.all(counts >= previous)
        previous = counts
    single = expected_cluster_count(config, 1, 10, np.random.default_rng(3))
    assert single == 1.0


def test_expected_cluster_count_validates(rng):
    with pytest.raises(ValueError):
        expected_cluster_count(PriorConfig(), 0, 10, rng)


def test_weight_map_selects_components():
    state = _state(M=6, gamma=1.0, lam=0.2)
    coords = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]])
    wm = weight_map(state, coords, [1, 2, 3], [1, 3])
    pi, remainder = stick_weights(state, coords, [1, 2, 3])
    np.testing.assert_allclose(wm.pi, pi[:, [0, 2]])
    np.testing.assert_allclose(wm.remainder, remainder)
    assert wm.components == [1, 3]
    with pytest.raises(ValueError):
        weight_map(state, coords, [1, 2, 3], [7])


def test_prior_draw_and_process(rng):
    config = PriorConfig(domain=SpaceTimeDomain.unit(4), truncation=20)
    draw = sample_prior_config(config, rng)
    assert draw.sticks.M == 20
    assert np.all((draw.sticks.zeta >= 1) & (draw.sticks.zeta <= 4))
    coords = rng.random((50, 2))
    times = rng.integers(1, 5, size=50)
    values, labels = sample_process(config, coords, times, rng)
    assert values.shape == labels.shape == (50,)
    assert np.all((labels >= 0) & (labels <= 20))


def test_prior_config_validates():
    with pytest.raises(ValueError):
        PriorConfig(a=0.0)
    with pytest.raises(ValueError):
        PriorConfig(truncation=0)


@pytest.mark.slow
@pytest.mark.parametrize("a,b", [(1.0, 1.0), (1.0, 9.0), (2.0, 5.0)])
def test_exchangeable_coclustering(a, b, rng):
    config = PriorConfig(
        domain=SpaceTimeDomain.unit(2),
        truncation=200,
        a=a,
        b=b,
        kind=KernelKind.CONSTANT,
    )
    estimate, se = marginal_coclustering_mc(
        config,
        SpaceTimePoint(0.1, 0.1, 1),
        SpaceTimePoint(0.9, 0.9, 2),
        100000,
        rng,
    )
    assert estimate == pytest.approx((a + 1) / (a + 2 * b + 1), abs=3 * se)

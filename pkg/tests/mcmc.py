import numpy as np
import pytest
from scipy import stats

from st_stickbreaking._exceptions import (
    AllZeroWeights,
    ChainFailure,
    EmptyTrace,
    NoLambdaInTrace,
    StsbError,
)
from st_stickbreaking.core import HyperPriors, McmcConfig
from st_stickbreaking.kernels import KernelKind
from st_stickbreaking.mcmc import (
    ProposalScales,
    atom_mean_full_conditional,
    atom_variance_full_conditional,
    beta_posterior_params,
    draw_allocations,
    draw_augmentation,
    g0_quadrature,
    initial_state,
    log_likelihood,
    noise_full_conditional,
    pool_traces,
    pr_lambda_zero,
    quantile_groups,
    reflect,
    regression_full_conditional,
    resimulate_responses,
    run_chain,
    run_chains,
    run_sweeps,
    simulate_joint,
    summarise_trace,
    update_allocations,
    update_atoms,
    update_kernel_hyper,
    update_knots,
    update_noise_regression,
    update_shape_hyper,
    update_sticks,
    urn_allocation_probs,
    urn_weights,
)

from .utils import make_dataset


def test_reflect():
    np.testing.assert_allclose(
        reflect([1.2, -0.3, 0.5], 0.0, 1.0), [0.8, 0.3, 0.5]
    )
    assert reflect(2.5, 0.0, 1.0) == pytest.approx(0.5)
    assert reflect(7.0, 1.0, 1.0) == 1.0


def test_draw_allocations_follows_weights(rng):
    log_w = np.log(np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5]]) + 1e-300)
    draws = np.array([draw_allocations(log_w, rng) for _ in range(200)])
    assert np.all(draws[:, 0] == 1)
    assert set(np.unique(draws[:, 1])) == {0, 2}


def test_draw_allocations_rejects_zero_rows(rng):
    log_w = np.array([[0.0, 0.0], [-np.inf, -np.inf]])
    with pytest.raises(AllZeroWeights) as exc:
        draw_allocations(log_w, rng)
    assert exc.value.index == 2


def test_urn_weights():
    member, fresh = urn_weights([1, 3], 2.0)
    np.testing.assert_allclose(member, [1 / 3, 1 / 5])
    np.testing.assert_allclose(fresh, [2 / 3, 2 / 5])


def test_g0_quadrature_matches_marginal():
    y = np.array([-1.0, 0.0, 2.5])
    expected = stats.norm.pdf(y, 0.5, np.sqrt(4.0 + 0.25))
    np.testing.assert_allclose(
        g0_quadrature(y, 0.5, 4.0, 0.25), expected, rtol=1e-6
    )


def test_urn_allocation_probs():
    y = np.array([0.0, 0.1, 5.0, 0.2])
    c = np.array([0, 0, 2, 1])
    pi = np.array([0.4, 0.3, 0.2, 0.1])
    theta = np.array([0.0, 0.0, 5.0, 0.0])
    probs = urn_allocation_probs(
        3, y, c, pi, theta, 1.0, noise_var=0.5, g0=0.05
    )
    # occupied by others: components 0 and 2
    np.testing.assert_array_equal(probs.labels, [0, 2])
    assert probs.probs.shape == (4,)
    assert probs.probs.sum() == pytest.approx(1.0)
    # the near atom dominates the far one
    assert probs.probs[1] > probs.probs[2]


def test_urn_allocation_probs_single_subject():
    probs = urn_allocation_probs(
        0,
        np.array([1.0]),
        np.array([0]),
        np.array([0.5, 0.5]),
        np.zeros(2),
        1.0,
        noise_var=1.0,
        g0=0.2,
    )
    assert probs.labels.size == 0
    np.testing.assert_allclose(probs.probs, [0.0, 1.0])


def test_augmentation_is_anchored_to_allocations(rng):
    c = np.array([0, 2, 1])
    V = np.array([0.5, 0.5, 0.5])
    W = np.full((3, 3), 0.8)
    A, B, reach = draw_augmentation(c, V, W, rng)
    np.testing.assert_array_equal(
        reach, [[1, 0, 0], [1, 1, 1], [1, 1, 0]]
    )
    assert A[0, 0] == B[0, 0] == 1
    assert A[1, 2] == 1 and A[2, 1] == 1
    # never both one before the allocation
    below = np.arange(3) < c[:, None]
    assert not np.any((A == 1) & (B == 1) & reach & below)
    assert np.all(A[~reach] == 0)


def test_beta_posterior_params():
    A = np.array([[1, 0], [0, 1]])
    reach = np.array([[True, False], [True, True]])
    a, b = beta_posterior_params(A, reach, 1.0, 2.0)
    np.testing.assert_allclose(a, [2.0, 2.0])
    np.testing.assert_allclose(b, [3.0, 2.0])


def test_conjugate_full_conditionals():
    mean, var = atom_mean_full_conditional(
        np.array([6.0]), np.array([3]), np.array([1.0]), 0.0, 100.0
    )
    assert var[0] == pytest.approx(1.0 / (3.0 + 0.01))
    assert mean[0] == pytest.approx(6.0 * var[0])
    shape, rate = atom_variance_full_conditional(
        np.array([4.0]), np.array([2]), 2.0, 0.5
    )
    assert (shape[0], rate[0]) == (3.0, 2.5)
    shape, rate = noise_full_conditional([1.0, -1.0, 2.0], 0.01, 0.01)
    assert shape == pytest.approx(1.51)
    assert rate == pytest.approx(3.01)


def test_regression_full_conditional():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    r = np.array([1.0, 2.0, 3.0])
    mean, cov = regression_full_conditional(X, r, 0.5, 10.0)
    precision = X.T @ X / 0.5 + np.eye(2) / 10.0
    np.testing.assert_allclose(cov, np.linalg.inv(precision), rtol=1e-6)
    np.testing.assert_allclose(mean, cov @ X.T @ r / 0.5, rtol=1e-6)


def test_quantile_groups():
    c = quantile_groups(np.arange(100.0), 5)
    assert c.min() == 0 and c.max() == 4
    assert np.all(np.diff(c) >= 0)
    assert quantile_groups(np.arange(100.0), 100).max() == 9


def test_single_updates_keep_state_valid(small_dataset, quick_config, rng):
    hyper = HyperPriors()
    state = initial_state(small_dataset, quick_config, hyper, rng)
    scales = ProposalScales.from_config(quick_config, hyper)
    assert state.is_valid()
    state = update_allocations(state, small_dataset, rng)
    state = update_sticks(state, small_dataset, rng)
    state = update_knots(state, small_dataset, rng, hyper=hyper, scales=scales)
    state = update_kernel_hyper(
        state, small_dataset, rng, hyper=hyper, scales=scales
    )
    state = update_shape_hyper(state, rng, hyper=hyper, scales=scales)
    assert state.is_valid()
    assert 0 < state.a <= 10 and 0 < state.b <= 10
    assert np.all(state.allocations >= 1)
    assert np.isfinite(log_likelihood(state, small_dataset))
    assert set(scales.acceptance()) >= {"knot", "gamma", "swap", "shape"}


def test_adaptation_moves_steps_towards_target():
    scales = ProposalScales(knot=0.1)
    for _ in range(10):
        scales.record("knot", True)
        scales.record("swap", True)
    scales.adapt(0.3)
    assert scales.knot > 0.1
    assert not hasattr(scales, "swap")
    assert scales.window == {}
    assert scales.acceptance()["knot"] == 1.0


def test_run_chain_shapes(small_dataset, quick_config):
    trace = run_chain(small_dataset, quick_config, HyperPriors())
    assert len(trace) == quick_config.n_kept == 15
    assert trace.V.shape == (15, 10)
    assert trace.psi.shape == (15, 10, 2)
    assert trace.mu.shape == (15, 10)
    np.testing.assert_array_equal(trace.iterations[:2], [31, 33])
    assert np.all((trace.V > 0) & (trace.V < 1))
    assert np.all((trace.lam >= 0) & (trace.lam <= 1))
    assert np.all(trace.sigma2_eps > 0)
    assert not trace.varying_atoms
    assert trace.h is None

    summary = summarise_trace(trace)
    assert {"sigma2_eps", "gamma", "lambda", "a", "b"} <= set(summary)
    pr_zero, _ = pr_lambda_zero(trace)
    assert 0.0 <= pr_zero <= 1.0


def test_run_chain_is_reproducible(small_dataset, quick_config):
    first = run_chain(small_dataset, quick_config)
    second = run_chain(small_dataset, quick_config)
    np.testing.assert_array_equal(first.V, second.V)
    np.testing.assert_array_equal(first.loglik, second.loglik)


def test_run_chain_ignores_missing_responses(quick_config):
    rows = [(0.1 * i, 0.05 * i, 1 + i % 3, float(i % 2)) for i in range(10)]
    rows.append((0.5, 0.5, 2, None))
    trace = run_chain(make_dataset(rows), quick_config)
    assert len(trace) == 15


def test_separable_chain_records_bandwidths(small_dataset, quick_config):
    config = quick_config.replace(kernel=KernelKind.SEPARABLE)
    trace = run_chain(small_dataset, config)
    assert trace.h.shape == (15, 2)
    assert np.all(trace.h > 0) and np.all(trace.h_t > 0)
    assert "h1" in summarise_trace(trace)
    with pytest.raises(NoLambdaInTrace):
        pr_lambda_zero(trace)


def test_chain_with_covariates(quick_config):
    gen = np.random.default_rng(5)
    rows, xs = [], []
    for i in range(30):
        x = gen.normal()
        rows.append((gen.random(), gen.random(), 1 + i % 3, 2.0 * x))
        xs.append([x])
    trace = run_chain(make_dataset(rows, covariates=xs), quick_config)
    assert trace.beta.shape == (15, 1)
    assert "beta[1]" in summarise_trace(trace)


def test_run_chains_independent_of_threads(small_dataset, quick_config):
    one = run_chains(small_dataset, quick_config, HyperPriors(), 2, seed=4)
    two = run_chains(
        small_dataset,
        quick_config.replace(threads=2),
        HyperPriors(),
        2,
        seed=4,
    )
    for a, b in zip(one, two):
        np.testing.assert_array_equal(a.V, b.V)
    assert not np.array_equal(one[0].V, one[1].V)

    pooled = pool_traces(one)
    assert len(pooled) == 30
    assert pooled.V.shape == (30, 10)
    with pytest.raises(EmptyTrace):
        pool_traces([])


def test_failing_step_names_iteration(small_dataset, quick_config, rng):
    state = initial_state(small_dataset, quick_config, HyperPriors(), rng)

    def broken(_state):
        raise AllZeroWeights(3)

    with pytest.raises(ChainFailure) as exc:
        run_sweeps(
            state,
            [("update_allocations", broken)],
            quick_config,
            ProposalScales(),
            lambda *args: None,
            lambda s: 0.0,
        )
    assert exc.value.iteration == 1
    assert exc.value.operation == "update_allocations"
    assert exc.value.reason == "all-zero-weights"
    assert isinstance(exc.value.__cause__, StsbError)


def test_simulate_joint(small_dataset, rng):
    config = McmcConfig(truncation=10, n_iter=2, n_burn=0)
    hyper = HyperPriors(noise_shape=2.0, noise_rate=1.0)
    state, data = simulate_joint(small_dataset, config, hyper, rng)
    assert data.n == small_dataset.n
    assert np.all(np.isfinite(data.y))
    assert np.all((state.c >= 0) & (state.c < 10))


@pytest.mark.slow
def test_recovers_two_groups(small_dataset):
    config = McmcConfig(truncation=20, n_iter=3000, n_burn=1500, seed=3)
    trace = run_chain(small_dataset, config)
    assert np.median(trace.n_occupied) >= 2
    # a single normal scores about -126 on this data
    assert np.median(trace.loglik) > -60.0


@pytest.mark.slow
def test_stick_update_preserves_the_prior(rng):
    # Redrawing the sticks given a forward draw of the allocations keeps
    # their prior marginal.
    rows = [(rng.random(), rng.random(), 1 + i % 4, 0.0) for i in range(40)]
    data = make_dataset(rows)
    config = McmcConfig(truncation=30, n_iter=2, n_burn=0, kernel="constant")
    hyper = HyperPriors(noise_shape=2.0, noise_rate=1.0)
    V = []
    for _ in range(400):
        state, _ = simulate_joint(data, config, hyper, rng)
        state = update_sticks(state, data, rng)
        V.append(state.sticks.V[0])
    # V_1 ~ Beta(1, 1) a priori
    assert np.mean(V) == pytest.approx(0.5, abs=0.05)


def _batch_se(values, batches=50):
    means = np.array([b.mean() for b in np.array_split(values, batches)])
    return means.std(ddof=1) / np.sqrt(batches)


@pytest.mark.slow
def test_sweeps_agree_with_forward_simulation():
    # Alternating sweeps with response redraws must leave the joint prior
    # of (V_1, mu_1, sigma2_eps) unchanged.
    gen = np.random.default_rng(17)
    rows = [(gen.random(), gen.random(), 1 + i % 2, 0.0) for i in range(5)]
    data = make_dataset(rows)
    config = McmcConfig(truncation=20, n_iter=2, n_burn=0, kernel="constant")
    hyper = HyperPriors(
        noise_shape=3.0,
        noise_rate=2.0,
        atom_var_shape=3.0,
        atom_var_rate=1.0,
        base_variance=4.0,
    )
    n = 10000

    forward = np.empty((n, 3))
    for i in range(n):
        state, _ = simulate_joint(data, config, hyper, gen)
        forward[i] = state.sticks.V[0], state.mu[0], state.sigma2_eps

    state, current = simulate_joint(data, config, hyper, gen)
    sweeps = np.empty((n, 3))
    for i in range(n):
        state = update_allocations(state, current, gen)
        state = update_sticks(state, current, gen)
        state = update_atoms(state, current, gen, hyper=hyper)
        state = update_noise_regression(state, current, gen, hyper=hyper)
        current = resimulate_responses(state, current, gen)
        sweeps[i] = state.sticks.V[0], state.mu[0], state.sigma2_eps

    for j in range(3):
        se = np.hypot(
            forward[:, j].std(ddof=1) / np.sqrt(n), _batch_se(sweeps[:, j])
        )
        assert abs(forward[:, j].mean() - sweeps[:, j].mean()) < 4 * se


@pytest.mark.slow
def test_recovers_a_single_normal():
    gen = np.random.default_rng(8)
    rows = [
        (gen.random(), gen.random(), 1 + i % 4, gen.normal(2.0, 1.0))
        for i in range(200)
    ]
    config = McmcConfig(truncation=20, n_iter=2000, n_burn=1000, seed=8)
    trace = run_chain(make_dataset(rows), config)
    counts = np.bincount(trace.n_occupied)
    assert np.argmax(counts) <= 3

import dataclasses

import numpy as np
import pytest
from scipy.integrate import trapezoid

from st_stickbreaking._exceptions import (
    CovariateMismatch,
    EmptyTrace,
    LengthMismatch,
    NothingToScore,
    PointMismatch,
    UnsortedGrid,
)
from st_stickbreaking.core import McmcConfig, SpaceTimePoint
from st_stickbreaking.gp_atoms import run_chain_va
from st_stickbreaking.mcmc import run_chain
from st_stickbreaking.predict_eval import (
    PredictionResult,
    ResidualRow,
    align_predictions,
    espe,
    mixture_moments,
    posterior_predictive,
    predictive_density,
    residual_map,
)

from .utils import make_dataset

NEW_POINTS = [
    SpaceTimePoint(0.2, 0.2, 2),
    SpaceTimePoint(0.8, 0.8, 2),
    SpaceTimePoint(0.5, 0.5, 4),
]


def test_mixture_moments():
    mean, var = mixture_moments([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
    assert mean == pytest.approx(0.0)
    assert var == pytest.approx(1.5)

    mean, var = mixture_moments(
        [[1.0, 0.0], [0.25, 0.75]], [[2.0, 9.0], [0.0, 4.0]], [[1.0, 1.0]] * 2
    )
    np.testing.assert_allclose(mean, [2.0, 3.0])
    np.testing.assert_allclose(var, [1.0, 1.0 + 0.25 * 9.0 + 0.75 * 1.0])


def test_posterior_predictive(small_dataset, quick_config):
    trace = run_chain(small_dataset, quick_config)
    pred = posterior_predictive(trace, NEW_POINTS)
    assert len(pred) == 3 and pred.has_quantiles
    assert np.all(np.isfinite(pred.mean)) and np.all(pred.sd > 0)
    assert np.all(pred.q05 <= pred.q50) and np.all(pred.q50 <= pred.q95)

    again = posterior_predictive(trace, NEW_POINTS)
    np.testing.assert_array_equal(pred.mean, again.mean)

    plain = posterior_predictive(trace, NEW_POINTS, quantiles=False)
    assert not plain.has_quantiles


@pytest.mark.slow
def test_prediction_follows_the_groups(small_dataset):
    config = McmcConfig(
        truncation=15,
        n_iter=600,
        n_burn=300,
        thin=5,
        seed=5,
    )
    trace = run_chain(small_dataset, config)
    pred = posterior_predictive(trace, NEW_POINTS[:2], quantiles=False)
    assert pred.mean[0] < pred.mean[1]


def test_predict_with_covariates(quick_config):
    gen = np.random.default_rng(2)
    xs = gen.normal(size=(24, 1))
    rows = [
        (gen.random(), gen.random(), 1 + i % 3, float(3.0 * xs[i, 0]))
        for i in range(24)
    ]
    trace = run_chain(make_dataset(rows, covariates=xs), quick_config)
    covariates = [[1.0], [0.0], [-1.0]]
    pred = posterior_predictive(trace, NEW_POINTS, covariates=covariates)
    assert len(pred) == 3
    with pytest.raises(CovariateMismatch) as exc:
        posterior_predictive(trace, NEW_POINTS)
    assert exc.value.expected == 1
    with pytest.raises(CovariateMismatch):
        posterior_predictive(trace, NEW_POINTS, covariates=np.ones((3, 2)))


def test_covariates_without_regression(small_dataset, quick_config):
    trace = run_chain(small_dataset, quick_config)
    with pytest.raises(CovariateMismatch):
        posterior_predictive(trace, NEW_POINTS, covariates=np.ones((3, 1)))


def test_empty_trace(small_dataset, quick_config):
    trace = run_chain(small_dataset, quick_config)
    empty = dataclasses.replace(trace, iterations=trace.iterations[:0])
    with pytest.raises(EmptyTrace):
        posterior_predictive(empty, NEW_POINTS)
    with pytest.raises(EmptyTrace):
        predictive_density(empty, NEW_POINTS[0], [0.0, 1.0])


def test_varying_atoms_prediction(small_dataset, quick_config):
    trace = run_chain_va(
        small_dataset, quick_config.replace(varying_atoms=True)
    )
    pred = posterior_predictive(trace, NEW_POINTS)
    assert np.all(np.isfinite(pred.mean)) and np.all(pred.sd > 0)
    fitted = posterior_predictive(trace, small_dataset.points[:2])
    assert np.all(np.isfinite(fitted.mean))


def test_predictive_density(small_dataset, quick_config):
    trace = run_chain(small_dataset, quick_config)
    grid = np.linspace(-200.0, 200.0, 20001)
    density = predictive_density(trace, NEW_POINTS[0], grid)
    assert np.all(density >= 0)
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=0.03)
    with pytest.raises(UnsortedGrid):
        predictive_density(trace, NEW_POINTS[0], [1.0, 0.0])


def test_espe():
    total, mean = espe([1.0, 2.0, 3.0], [1.0, 0.0, 6.0])
    assert total == pytest.approx(13.0)
    assert mean == pytest.approx(13.0 / 3)
    with pytest.raises(LengthMismatch):
        espe([1.0], [1.0, 2.0])


def test_residual_map():
    points = [
        SpaceTimePoint(0.1, 0.1, 1),
        SpaceTimePoint(0.1, 0.1, 2),
        SpaceTimePoint(0.1, 0.1, 3),
        SpaceTimePoint(0.9, 0.9, 1),
    ]
    pred = [0.0, 0.0, 0.0, 0.0]
    truth = [1.0, 3.0, 2.0, 2.0]

    rows = residual_map(pred, truth, points)
    assert rows[1] == ResidualRow(0.1, 0.1, 2, 9.0, 1)

    rows = residual_map(pred, truth, points, window=2)
    assert rows == [
        ResidualRow(0.1, 0.1, 1, 5.0, 2),
        ResidualRow(0.1, 0.1, 3, 4.0, 1),
        ResidualRow(0.9, 0.9, 1, 4.0, 1),
    ]
    with pytest.raises(ValueError):
        residual_map(pred, truth, points, window=0)
    with pytest.raises(LengthMismatch):
        residual_map(pred, truth[:2], points)


def test_espe_skips_missing_truth():
    total, mean = espe([1.0, 2.0, 3.0], [1.0, np.nan, 6.0])
    assert total == pytest.approx(9.0)
    assert mean == pytest.approx(4.5)
    with pytest.raises(NothingToScore):
        espe([1.0, 2.0], [np.nan, np.nan])


def _prediction(points, mean):
    mean = np.asarray(mean, dtype=float)
    return PredictionResult(list(points), mean, np.ones_like(mean))


def test_align_predictions():
    points = [
        SpaceTimePoint(0.1, 0.1, 1),
        SpaceTimePoint(0.1, 0.1, 1),
        SpaceTimePoint(0.9, 0.9, 2),
    ]
    pred = _prediction(points[::-1], [3.0, 1.0, 2.0])
    aligned = align_predictions(pred, points)
    assert aligned.points == points
    assert aligned.mean.tolist() == [1.0, 2.0, 3.0]
    assert aligned.q05 is None

    with pytest.raises(PointMismatch):
        align_predictions(pred, [SpaceTimePoint(0.5, 0.5, 1)] + points[1:])
    with pytest.raises(LengthMismatch):
        align_predictions(pred, points[:2])


def test_residual_map_checks_points():
    points = [SpaceTimePoint(0.1, 0.1, 1), SpaceTimePoint(0.9, 0.9, 2)]
    pred = _prediction(points[::-1], [0.0, 0.0])
    with pytest.raises(PointMismatch):
        residual_map(pred, [1.0, 2.0], points)

    pred = _prediction(points, [0.0, 0.0])
    rows = residual_map(pred, [np.nan, 2.0], points)
    assert rows == [ResidualRow(0.9, 0.9, 2, 4.0, 1)]


@pytest.mark.slow
def test_predictive_mean_recovers_a_single_normal():
    gen = np.random.default_rng(8)
    rows = [
        (gen.random(), gen.random(), 1 + i % 4, gen.normal(2.0, 1.0))
        for i in range(200)
    ]
    data = make_dataset(rows)
    config = McmcConfig(truncation=20, n_iter=2000, n_burn=1000, seed=8)
    trace = run_chain(data, config)
    pred = posterior_predictive(trace, data.points[:20], quantiles=False)
    assert np.all(np.abs(pred.mean - 2.0) < 3.0 * pred.sd)

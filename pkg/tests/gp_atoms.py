from types import SimpleNamespace

import numpy as np
import pytest

from st_stickbreaking._exceptions import SizeGuardExceeded
from st_stickbreaking.core import HyperPriors, SpaceTimePoint
from st_stickbreaking.gp_atoms import (
    AtomField,
    atom_field_posterior,
    covariance_matrix,
    field_index,
    field_points,
    krige,
    prior_factor,
    product_covariance,
    run_chain_va,
    sample_atom_field,
    unique_points,
    update_allocations_urn,
    update_atom_field,
)
from st_stickbreaking.mcmc import initial_state

from .utils import make_dataset

GP = dict(decay=0.2, rho=0.5, gp_var=1.0)


def test_covariance_matrix_matches_scalar():
    p = SpaceTimePoint(0.1, 0.2, 1)
    q = SpaceTimePoint(0.4, 0.6, 3)
    cov = covariance_matrix([[0.1, 0.2], [0.4, 0.6]], [1, 3], **GP)
    assert cov[0, 1] == pytest.approx(product_covariance(p, q, 0.2, 0.5, 1.0))
    assert cov[0, 1] == pytest.approx(np.exp(-0.5 / 0.2) * 0.25)
    np.testing.assert_allclose(np.diag(cov), 1.0)
    np.testing.assert_allclose(cov, cov.T)


def test_unique_points():
    coords = np.array([[0.1, 0.1], [0.5, 0.5], [0.1, 0.1], [0.1, 0.1]])
    times = np.array([1, 2, 1, 2])
    u_coords, u_times, inverse = unique_points(coords, times)
    assert len(u_times) == 3
    np.testing.assert_allclose(u_coords[inverse], coords)
    np.testing.assert_array_equal(u_times[inverse], times)


def test_sample_atom_field_shares_coincident_points(rng):
    points = [
        SpaceTimePoint(0.1, 0.1, 1),
        SpaceTimePoint(0.7, 0.2, 2),
        SpaceTimePoint(0.1, 0.1, 1),
    ]
    field = sample_atom_field(points, 4, 0.2, 0.5, 1.0, 2.0, rng)
    assert (field.M, field.n) == (4, 3)
    np.testing.assert_array_equal(field.values[:, 0], field.values[:, 2])


def test_atom_field_validates():
    with pytest.raises(ValueError):
        AtomField(np.zeros((1, 1)), np.zeros((1, 2)), [1], 0.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        AtomField(np.zeros((1, 1)), np.zeros((1, 2)), [1], 0.0, 0.5, 1.0)


def test_posterior_without_data_is_prior():
    cov, _ = prior_factor([[0.0, 0.0], [0.3, 0.3]], [1, 2], 0.2, 0.5, 1.0)
    mean, post = atom_field_posterior(cov, [], [], 0.1, 1.5)
    np.testing.assert_allclose(mean, 1.5)
    np.testing.assert_allclose(post, cov)


def test_krige_interpolates_field_points():
    coords = np.array([[0.1, 0.1], [0.6, 0.4], [0.3, 0.9]])
    times = np.array([1, 2, 2])
    values = np.array([[1.0, -1.0, 0.5]])
    means, var = krige(coords, times, values, coords, times, **GP)
    np.testing.assert_allclose(means, values, atol=1e-5)
    np.testing.assert_allclose(var, 0.0, atol=1e-5)

    far_means, far_var = krige(
        coords, times, values, [[50.0, 50.0]], [2], base_mean=0.3, **GP
    )
    assert far_means[0, 0] == pytest.approx(0.3)
    assert far_var[0] == pytest.approx(1.0)


def _field_problem():
    data = make_dataset(
        [
            (0.1, 0.1, 1, 1.0),
            (0.2, 0.1, 1, 1.2),
            (0.8, 0.7, 2, -0.5),
            (0.5, 0.5, 2, 0.3),
        ]
    )
    u_coords, u_times, _ = unique_points(data.coords, data.times)
    field = AtomField(
        np.zeros((2, len(u_times))), u_coords, u_times, 0.3, 0.5, 1.0
    )
    return data, field


def test_field_update_matches_posterior(rng):
    data, field = _field_problem()
    state = SimpleNamespace(
        c=np.array([0, 0, 0, 1]), beta=None, sigma2_eps=0.2
    )
    index = field_index(field, data)
    cov, _ = prior_factor(field.coords, field.times, 0.3, 0.5, 1.0)
    mean, post = atom_field_posterior(
        cov, index[:3], data.y[:3], 0.2, field.base_mean
    )
    draws = np.array(
        [
            update_atom_field(state, data, field, rng, index=index).values[0]
            for _ in range(8000)
        ]
    )
    np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.05)
    np.testing.assert_allclose(np.cov(draws.T), post, atol=0.05)


def test_field_update_follows_precise_data(rng):
    data, field = _field_problem()
    state = SimpleNamespace(
        c=np.array([0, 0, 1, 1]), beta=None, sigma2_eps=1e-8
    )
    index = field_index(field, data)
    values = update_atom_field(state, data, field, rng, index=index).values
    np.testing.assert_allclose(values[0, index[:2]], data.y[:2], atol=1e-3)
    np.testing.assert_allclose(values[1, index[2:]], data.y[2:], atol=1e-3)


def test_field_index_rejects_unknown_points():
    data, field = _field_problem()
    other = make_dataset([(0.9, 0.9, 1, 0.0), (0.1, 0.1, 1, 1.0)])
    with pytest.raises(ValueError):
        field_index(field, other)
    np.testing.assert_array_equal(
        np.sort(field_index(field, data)), np.arange(4)
    )


def test_urn_allocation_keeps_labels_in_range(
    small_dataset, quick_config, rng
):
    config = quick_config.replace(varying_atoms=True)
    hyper = HyperPriors()
    state = initial_state(small_dataset, config, hyper, rng)
    u_coords, u_times, index = unique_points(
        small_dataset.coords, small_dataset.times
    )
    state.atom_field = AtomField(
        np.zeros((config.truncation, len(u_times))),
        u_coords,
        u_times,
        0.2,
        0.5,
        1.0,
    )
    new = update_allocations_urn(
        state, small_dataset, rng, index=index, hyper=hyper
    )
    assert new.c.shape == state.c.shape
    assert np.all((new.c >= 0) & (new.c < config.truncation))


def test_run_chain_va(small_dataset, quick_config):
    config = quick_config.replace(varying_atoms=True)
    trace = run_chain_va(small_dataset, config, HyperPriors())
    assert trace.varying_atoms
    assert len(trace) == len(trace.fields) == 15
    assert trace.mu is None
    assert len(field_points(trace)) == small_dataset.n
    for labels, values in trace.fields:
        assert values.shape == (len(labels), small_dataset.n)
    assert np.all(np.isfinite(trace.loglik))


def test_run_chain_va_subsample(small_dataset, quick_config):
    config = quick_config.replace(varying_atoms=True, subsample_fraction=0.5)
    trace = run_chain_va(small_dataset, config)
    assert len(trace.field_times) == 30


def test_size_guard(small_dataset, quick_config):
    config = quick_config.replace(varying_atoms=True, size_guard=10)
    with pytest.raises(SizeGuardExceeded) as exc:
        run_chain_va(small_dataset, config)
    assert exc.value.limit == 10

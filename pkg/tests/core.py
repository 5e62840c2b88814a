import math

import numpy as np
import pytest

from st_stickbreaking._exceptions import (
    ContinuousTime,
    CovariateLengthMismatch,
    EmptyDataset,
    NonFiniteValue,
    PointOutsideDomain,
)
from st_stickbreaking.core import (
    ConfigValueError,
    Dataset,
    HyperPriors,
    McmcConfig,
    Observation,
    SpaceTimeDomain,
    SpaceTimePoint,
    config_fields,
    make_rng,
    substreams,
    validate_dataset,
)
from st_stickbreaking.kernels import KernelKind

from .utils import make_dataset


def _obs(s1, s2, t, y=0.0, x=None):
    return Observation(SpaceTimePoint(s1, s2, t), y, x)


def test_validate_infers_bounding_box():
    data = make_dataset([(0.1, 0.2, 1, 1.0), (0.9, 0.5, 3, 2.0)])
    assert data.domain == SpaceTimeDomain((0.1, 0.9), (0.2, 0.5), 3)
    assert data.n == 2
    np.testing.assert_array_equal(data.times, [1, 3])


def test_validate_widens_degenerate_axis():
    data = make_dataset([(0.5, 0.2, 1, 1.0), (0.5, 0.4, 2, 2.0)])
    assert data.domain.s1_range == (0.0, 1.0)


def test_validate_normalizes_integral_float_time():
    data = validate_dataset(Dataset((_obs(0.1, 0.1, 2.0), _obs(0.2, 0.2, 1))))
    assert data.times.dtype.kind == "i"
    assert data.observations[0].point.t == 2


def test_validate_is_idempotent():
    data = make_dataset([(0.1, 0.2, 1, 1.0), (0.9, 0.5, 3, 2.0)])
    assert validate_dataset(data) == data


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        validate_dataset(Dataset(()))


@pytest.mark.parametrize("t", [1.5, 0, -2, "3"])
def test_continuous_or_invalid_time(t):
    with pytest.raises(ContinuousTime) as exc:
        validate_dataset(Dataset((_obs(0.1, 0.1, 1), _obs(0.2, 0.2, t))))
    assert exc.value.index == 2


def test_non_finite_response():
    with pytest.raises(NonFiniteValue) as exc:
        validate_dataset(Dataset((_obs(0.1, 0.1, 1, math.inf),)))
    assert exc.value.field == "y"


def test_non_finite_location():
    with pytest.raises(NonFiniteValue) as exc:
        validate_dataset(Dataset((_obs(math.nan, 0.1, 1),)))
    assert exc.value.field == "location"


def test_missing_response_is_allowed():
    data = make_dataset([(0.1, 0.1, 1, 1.0), (0.2, 0.2, 1, None)])
    assert data.observed.tolist() == [True, False]
    assert data.training().n == 1
    assert data.targets().n == 1
    assert data.targets().domain == data.domain


def test_covariate_length_mismatch():
    raw = Dataset(
        (_obs(0.1, 0.1, 1, x=(1.0,)), _obs(0.2, 0.2, 1, x=(1.0, 2.0)))
    )
    with pytest.raises(CovariateLengthMismatch) as exc:
        validate_dataset(raw)
    assert (exc.value.expected, exc.value.got) == (1, 2)


def test_point_outside_explicit_domain():
    raw = Dataset(
        (_obs(0.1, 0.1, 1), _obs(1.5, 0.1, 1)), SpaceTimeDomain.unit(2)
    )
    with pytest.raises(PointOutsideDomain) as exc:
        validate_dataset(raw)
    assert exc.value.index == 2


def test_duplicates_are_kept_with_warning(caplog):
    data = make_dataset([(0.1, 0.1, 1, 1.0), (0.1, 0.1, 1, 2.0)])
    assert data.n == 2
    assert "duplicate" in caplog.text


def test_covariates_view():
    data = make_dataset(
        [(0.1, 0.1, 1, 1.0), (0.2, 0.2, 2, 2.0)], covariates=[[1.0], [3.0]]
    )
    assert data.p == 1
    np.testing.assert_array_equal(data.covariates, [[1.0], [3.0]])


def test_domain_geometry():
    domain = SpaceTimeDomain((0.0, 2.0), (1.0, 2.0), 5)
    assert domain.area == 2.0
    assert domain.time_span == 4.0
    assert domain.contains(SpaceTimePoint(1.0, 1.5, 5))
    assert not domain.contains(SpaceTimePoint(1.0, 1.5, 6))
    with pytest.raises(ValueError):
        SpaceTimeDomain((1.0, 1.0), (0.0, 1.0), 2)
    with pytest.raises(ValueError):
        SpaceTimeDomain.unit(0)


def test_config_defaults():
    config = McmcConfig()
    assert config.truncation == 100
    assert config.kernel is KernelKind.GNEITING
    assert config.n_kept == 10000
    assert McmcConfig(kernel="separable").kernel is KernelKind.SEPARABLE


@pytest.mark.parametrize(
    "changes,key",
    [
        ({"n_burn": 30, "n_iter": 30}, "n_burn"),
        ({"thin": 0}, "thin"),
        ({"truncation": 1}, "truncation"),
        ({"lambda_init": 1.5}, "lambda_init"),
        ({"gp_rho": 1.0}, "gp_rho"),
    ],
)
def test_config_rejects(changes, key):
    with pytest.raises(ConfigValueError) as exc:
        McmcConfig().replace(**changes)
    assert exc.value.key == key


def test_hyperpriors_reject_degenerate_interval():
    with pytest.raises(ConfigValueError) as exc:
        HyperPriors(gamma_range=(2.0, 1.0))
    assert exc.value.key == "gamma_range"


def test_config_fields_lists_every_key():
    names = config_fields()
    assert names[0] == "a_range"
    assert "truncation" in names and "threads" in names
    assert len(names) == len(set(names))


def test_rng_and_substreams_are_reproducible():
    assert make_rng(3).random() == make_rng(3).random()
    gen = make_rng(3)
    assert make_rng(gen) is gen
    first = [g.random() for g in substreams(5, 3)]
    second = [g.random() for g in substreams(5, 3)]
    assert first == second
    assert len(set(first)) == 3

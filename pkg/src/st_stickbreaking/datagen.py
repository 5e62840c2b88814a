#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

"""
datagen - synthetic data
========================

Generators for the two simulation settings:

* clustered station locations from a Thomas process with a Gaussian
  random field on top, under one of six covariance models
  (:data:`MODELS`);
* the three-regime temporal scenario on uniform locations, where each
  time point draws the whole field from a regime-dependent mixture of
  multivariate normals (:func:`scenario_regime`).

All generators are pure functions of their numpy Generator.
"""

from collections import namedtuple
from dataclasses import dataclass, field
import enum
import logging
import math
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist

from ._exceptions import EmptyRealization, UnsupportedParams
from ._linalg import jittered_cholesky
from .core import (
    Dataset,
    Observation,
    SpaceTimeDomain,
    SpaceTimePoint,
    validate_dataset,
)

LOGGER = logging.getLogger(__name__)

ThomasDraw = namedtuple("ThomasDraw", ["daughters", "parents"])
FieldDraw = namedtuple("FieldDraw", ["values", "mode"])

REGIME_VARIANCES = (0.04, 1.0, 0.09)
FIELD_MODES = ("replicate", "independent", "joint")


class CovModel(enum.Enum):
    GAUSSIAN_COV = "gaussian"
    EXP_NUGGET_TREND = "exponential-nugget-trend"
    STABLE = "stable"
    ZONAL_ANISOTROPY_NUGGET = "zonal-anisotropy-nugget"
    STEIN = "stein"
    NON_SEPARABLE = "non-separable"

    @property
    def time_dependent(self):
        return self in (CovModel.STEIN, CovModel.NON_SEPARABLE)

    def __str__(self):
        return self.value


# CovModelSpec
#
# One covariance model and its parameters. Unused parameters are
# ignored by the model.
#
@dataclass(frozen=True)
class CovModelSpec:
    # pylint: disable=too-many-instance-attributes

    tag: CovModel
    tau2: float = 1.0
    h: float = 0.4
    alpha: float = 1.9
    nu: float = 1.5
    mean: float = 0.0
    nugget: float = 0.0
    anisotropy: float = 5.0
    c: Tuple[float, float] = field(default=(0.9, 0.1))

    def __post_init__(self):
        if not self.tau2 > 0:
            raise UnsupportedParams(self.tag, "tau2 must be > 0")
        if not self.h > 0:
            raise UnsupportedParams(self.tag, "h must be > 0")
        if self.nugget < 0:
            raise UnsupportedParams(self.tag, "nugget must be >= 0")
        if self.tag is CovModel.STABLE and not 0 < self.alpha <= 2:
            raise UnsupportedParams(self.tag, "alpha must be in (0, 2]")
        zonal = self.tag is CovModel.ZONAL_ANISOTROPY_NUGGET
        if zonal and not self.anisotropy > 0:
            raise UnsupportedParams(self.tag, "anisotropy must be > 0")
        if self.tag is CovModel.STEIN and self.nu != 1.5:
            raise UnsupportedParams(
                self.tag,
                "only nu = 1.5 has a closed form, got {}".format(self.nu),
            )

    @property
    def variance(self):
        return self.tau2 + self.nugget


MODELS = {
    "model1": CovModelSpec(CovModel.GAUSSIAN_COV, tau2=1.0, h=0.4),
    "model2": CovModelSpec(
        CovModel.EXP_NUGGET_TREND, tau2=4.0, h=10.0, nugget=0.5, mean=0.5
    ),
    "model3": CovModelSpec(CovModel.STABLE, tau2=1.0, h=0.4, alpha=1.9),
    "model4": CovModelSpec(
        CovModel.ZONAL_ANISOTROPY_NUGGET, tau2=1.0, h=0.4, nugget=0.1
    ),
    "model5": CovModelSpec(CovModel.STEIN, tau2=1.0, nu=1.5),
    "model6": CovModelSpec(CovModel.NON_SEPARABLE, tau2=1.0, h=1.0),
}


def model_spec(name):
    """The preset CovModelSpec called ``name`` (model1 .. model6)."""
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(
            "Unknown model '{}', expected one of: {}".format(
                name, ", ".join(sorted(MODELS))
            )
        ) from None


# cov_matrix():
#
# Covariances between two point sets under one model.
#
# Args:
#    spec (CovModelSpec): The model
#    coords1 (ndarray): (n1, 2) locations
#    times1 (ndarray): (n1,) times
#    coords2 (ndarray): (n2, 2) locations
#    times2 (ndarray): (n2,) times
#
# Returns:
#    (ndarray): (n1, n2) covariances
#
def cov_matrix(spec, coords1, times1, coords2=None, times2=None):
    # pylint: disable=too-many-locals
    coords1 = np.asarray(coords1, dtype=float).reshape(-1, 2)
    times1 = np.asarray(times1, dtype=float).reshape(-1)
    if coords2 is None:
        coords2, times2 = coords1, times1
    coords2 = np.asarray(coords2, dtype=float).reshape(-1, 2)
    times2 = np.asarray(times2, dtype=float).reshape(-1)

    d1 = coords1[:, None, 0] - coords2[None, :, 0]
    d2 = coords1[:, None, 1] - coords2[None, :, 1]
    dist = cdist(coords1, coords2)
    dt = times1[:, None] - times2[None, :]
    tag = spec.tag

    if tag is CovModel.GAUSSIAN_COV:
        cov = spec.tau2 * np.exp(-(dist ** 2) / spec.h)
    elif tag is CovModel.EXP_NUGGET_TREND:
        cov = spec.tau2 * np.exp(-dist / spec.h)
    elif tag is CovModel.STABLE:
        cov = spec.tau2 * np.exp(-(dist ** spec.alpha) / spec.h)
    elif tag is CovModel.ZONAL_ANISOTROPY_NUGGET:
        cov = spec.tau2 * np.exp(
            -(d1 ** 2 + (d2 / spec.anisotropy) ** 2) / spec.h
        )
    elif tag is CovModel.STEIN:
        z = np.sqrt(dist ** 2 + dt ** 2)
        drift = (d1 * spec.c[0] + d2 * spec.c[1]) * dt
        denom = (spec.nu - 1.0) * (2.0 * spec.nu + 2.0)
        cov = spec.tau2 * (
            (1.0 + z) * np.exp(-z) - drift / denom * np.exp(-z)
        )
    elif tag is CovModel.NON_SEPARABLE:
        psi = np.abs(dt) + 1.0
        cov = spec.tau2 / psi * np.exp(-(dist ** 2) / psi / spec.h)
    else:
        raise UnsupportedParams(tag, "unknown model")

    if spec.nugget:
        cov = cov + spec.nugget * (dist == 0.0)
    return cov


def cov_value(spec, p, q):
    """Covariance of the model between two space-time points."""
    return float(
        cov_matrix(
            spec, [p.location], [p.t], [q.location], [q.t]
        )[0, 0]
    )


# thomas_process():
#
# Clustered locations in a rectangular window. Parents are Poisson with
# intensity omega on the window dilated by the radius; each parent gets
# Poisson(delta) daughters uniform in the disk of that radius around it;
# daughters outside the window are discarded.
#
# Args:
#    omega (float): Parent intensity per unit area
#    delta (float): Mean daughters per parent
#    radius (float): Cluster disk radius
#    window (SpaceTimeDomain): The window; only the spatial ranges are used
#    rng (numpy.random.Generator): The random source
#    parents_in_window (bool): Draw parents in the window itself
#
# Raises:
#    (EmptyRealization): No daughter fell in the window
#
# Returns:
#    (ThomasDraw): Daughters (n, 2) and parents (m, 2)
#
def thomas_process(
    omega, delta, radius, window, rng, *, parents_in_window=False
):
    # pylint: disable=too-many-arguments,too-many-locals
    if not omega > 0 or not delta > 0:
        raise ValueError("omega and delta must be > 0")
    if not radius > 0:
        raise ValueError("radius must be > 0, got {}".format(radius))

    lower, upper = window.lower, window.upper
    pad = 0.0 if parents_in_window else radius
    p_lower, p_upper = lower - pad, upper + pad
    area = float(np.prod(p_upper - p_lower))
    n_parents = rng.poisson(omega * area)
    parents = p_lower + (p_upper - p_lower) * rng.random((n_parents, 2))

    counts = rng.poisson(delta, size=n_parents)
    owner = np.repeat(np.arange(n_parents), counts)
    r = radius * np.sqrt(rng.random(len(owner)))
    angle = 2.0 * np.pi * rng.random(len(owner))
    daughters = parents[owner] + np.column_stack(
        [r * np.cos(angle), r * np.sin(angle)]
    )
    inside = np.all((daughters >= lower) & (daughters <= upper), axis=1)
    daughters = daughters[inside]
    if len(daughters) == 0:
        raise EmptyRealization()
    LOGGER.debug(
        "Thomas process: %d parents, %d of %d daughters in the window",
        n_parents,
        len(daughters),
        len(owner),
    )
    return ThomasDraw(daughters, parents)


def _draw(cov, mean, rng, scale):
    chol = jittered_cholesky(cov, scale=scale)
    return mean + chol @ rng.standard_normal(cov.shape[0])


def _unique_rows(keys):
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


# simulate_field():
#
# One Gaussian random field draw at the given points.
#
# Modes:
#    replicate: one spatial field (zero time lag) shared by every time
#       point, so a location's values are equal across time
#    independent: an independent spatial field per time point
#    joint: one draw from the full space-time covariance
#
# The default is replicate for the time-independent models and joint
# otherwise.
#
# Raises:
#    (FactorizationFailure): The covariance could not be factorized
#
# Returns:
#    (FieldDraw): Values (n,) and the mode used
#
def simulate_field(spec, points, rng, mode=None):
    if mode is None:
        mode = "joint" if spec.tag.time_dependent else "replicate"
    if mode not in FIELD_MODES:
        raise ValueError(
            "Unknown mode '{}', expected one of: {}".format(
                mode, ", ".join(FIELD_MODES)
            )
        )
    coords = np.array([p.location for p in points], dtype=float).reshape(-1, 2)
    times = np.array([p.t for p in points], dtype=float)
    values = np.empty(len(points))

    if mode == "joint":
        uniq, inverse = _unique_rows(np.column_stack([coords, times]))
        cov = cov_matrix(spec, uniq[:, :2], uniq[:, 2])
        values = _draw(cov, spec.mean, rng, spec.variance)[inverse]
    elif mode == "replicate":
        uniq, inverse = _unique_rows(coords)
        zeros = np.zeros(len(uniq))
        cov = cov_matrix(spec, uniq, zeros)
        values = _draw(cov, spec.mean, rng, spec.variance)[inverse]
    else:
        for t in np.unique(times):
            rows = np.flatnonzero(times == t)
            uniq, inverse = _unique_rows(coords[rows])
            zeros = np.zeros(len(uniq))
            cov = cov_matrix(spec, uniq, zeros)
            values[rows] = _draw(cov, spec.mean, rng, spec.variance)[inverse]
    return FieldDraw(values, mode)


def _dataset(coords, times, y, domain):
    observations = tuple(
        Observation(SpaceTimePoint(float(s[0]), float(s[1]), int(t)), float(v))
        for s, t, v in zip(coords, times, y)
    )
    return validate_dataset(Dataset(observations, domain))


# simulate_model():
#
# Thomas-process locations observed at times 1..T with a field from one
# of the preset models.
#
# Args:
#    name (str): model1 .. model6
#    T (int): Number of time points
#    rng (numpy.random.Generator): The random source
#    omega (float): Parent intensity
#    delta (float): Mean daughters per parent
#    radius (float): Cluster radius
#    max_locations (int): Keep at most this many locations, chosen at
#        random
#    mode (str): Field mode, see simulate_field()
#
# Returns:
#    (Dataset, str): The data and the field mode used
#
def simulate_model(
    name,
    T,
    rng,
    *,
    omega=10.0,
    delta=10.0,
    radius=0.1,
    max_locations=None,
    mode=None
):
    # pylint: disable=too-many-arguments
    spec = model_spec(name)
    window = SpaceTimeDomain.unit(T)
    locations = thomas_process(omega, delta, radius, window, rng).daughters
    if max_locations is not None and len(locations) > max_locations:
        keep = np.sort(
            rng.choice(len(locations), size=max_locations, replace=False)
        )
        locations = locations[keep]
    coords = np.tile(locations, (T, 1))
    times = np.repeat(np.arange(1, T + 1), len(locations))
    points = [
        SpaceTimePoint(float(s[0]), float(s[1]), int(t))
        for s, t in zip(coords, times)
    ]
    draw = simulate_field(spec, points, rng, mode)
    return _dataset(coords, times, draw.values, window), draw.mode


def f_trend(t):
    """Mean curve of the regime scenario."""
    return math.cos(t) + 2.0 * math.sin(t) + t / 2.0 - min(t, 16)


def regime_of(t):
    """Regime 1, 2 or 3 of time t (boundaries at 8 and 16)."""
    if t < 8:
        return 1
    if t < 16:
        return 2
    return 3


# regime_labels():
#
# Mixture component of each time point's field: always 1 in regime 1,
# 2 with probability 0.7 in regime 2, 2 with probability 0.5 in regime 3.
#
# Returns:
#    (ndarray): Labels 1 or 2, one per entry of times
#
def regime_labels(times, rng):
    times = np.asarray(times)
    u = rng.random(len(times))
    second = np.array([0.0, 0.7, 0.5])[
        np.array([regime_of(int(t)) - 1 for t in times], dtype=int)
    ]
    return np.where(u < second, 2, 1)


def regime_component(t, label):
    """(mean, variance) of component ``label`` at time t."""
    regime = regime_of(t)
    f = f_trend(t)
    if regime == 1:
        return f, REGIME_VARIANCES[0]
    if regime == 2:
        return f, REGIME_VARIANCES[0] if label == 1 else REGIME_VARIANCES[1]
    return (f if label == 1 else 0.1 * t + f), REGIME_VARIANCES[2]


# scenario_regime():
#
# The three-regime temporal scenario: n_per_t fixed uniform locations in
# the unit square observed at t = 1..T; each time point's field is one
# draw from its regime's mixture of multivariate normals with squared
# exponential spatial correlation exp(-d^2 / (2 rho^2)).
#
# Returns:
#    (Dataset): n_per_t * T observations
#
def scenario_regime(n_per_t, T, rho_lengthscale, rng):
    # pylint: disable=too-many-locals
    if T < 1:
        raise ValueError("T must be >= 1, got {}".format(T))
    if n_per_t < 1:
        raise ValueError("n_per_t must be >= 1, got {}".format(n_per_t))
    if not rho_lengthscale > 0:
        raise ValueError("rho_lengthscale must be > 0")

    locations = rng.random((n_per_t, 2))
    dist = cdist(locations, locations)
    corr = np.exp(-(dist ** 2) / (2.0 * rho_lengthscale ** 2))
    chol = jittered_cholesky(corr, scale=1.0)

    times = np.arange(1, T + 1)
    labels = regime_labels(times, rng)
    y = np.empty((T, n_per_t))
    for j, (t, label) in enumerate(zip(times, labels)):
        mean, var = regime_component(int(t), int(label))
        y[j] = mean + np.sqrt(var) * (chol @ rng.standard_normal(n_per_t))

    return _dataset(
        np.tile(locations, (T, 1)),
        np.repeat(times, n_per_t),
        y.reshape(-1),
        SpaceTimeDomain.unit(T),
    )


# train_test_split():
#
# Random split of the observations, keeping the original order within
# each part.
#
# Returns:
#    (Dataset, Dataset): Training and test data
#
def train_test_split(dataset, fraction, rng):
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1), got {}".format(fraction))
    n_train = int(round(fraction * dataset.n))
    order = rng.permutation(dataset.n)
    train = np.sort(order[:n_train])
    test = np.sort(order[n_train:])
    return dataset.subset(train), dataset.subset(test)


def holdout_times(dataset, times):
    """Split off every observation at the given times as the test part."""
    held = np.isin(dataset.times, np.asarray(list(times), dtype=int))
    return (
        dataset.subset(np.flatnonzero(~held)),
        dataset.subset(np.flatnonzero(held)),
    )

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
core - domain types, validation and configuration
=================================================

Observations live on a continuous two dimensional spatial domain and a
discrete time grid ``1..T``. A :class:`Dataset` is an immutable
collection of :class:`Observation` values; array views of it are
computed once and cached.

**Usage:**

.. code:: python

   from st_stickbreaking.core import Dataset, Observation, SpaceTimePoint
   from st_stickbreaking.core import validate_dataset

   raw = Dataset(
       (
           Observation(SpaceTimePoint(0.1, 0.2, 1), 1.3),
           Observation(SpaceTimePoint(0.4, 0.9, 2), 0.7),
       )
   )
   dataset = validate_dataset(raw)

The sampler configuration lives in :class:`HyperPriors` and
:class:`McmcConfig`. Their defaults are listed in ``defaults.conf``:

  .. literalinclude:: ../../src/st_stickbreaking/defaults.conf
     :language: ini
"""

import dataclasses
from dataclasses import dataclass
from functools import cached_property
import logging
import math
from typing import Optional, Tuple

import numpy as np

from ._exceptions import (
    ContinuousTime,
    CovariateLengthMismatch,
    EmptyDataset,
    NonFiniteValue,
    PointOutsideDomain,
)
from .kernels import KernelKind

LOGGER = logging.getLogger(__name__)


# ConfigValueError
#
# A configuration field holds an invalid value. Subclasses ValueError so
# plain callers can treat it as an argument error, while the config
# parser can name the offending key.
#
class ConfigValueError(ValueError):
    def __init__(self, key, message):
        super().__init__("{}: {}".format(key, message))
        self.key = key


def _require(condition, key, message):
    if not condition:
        raise ConfigValueError(key, message)


def _check_interval(value, key, *, positive=True):
    lo, hi = value
    _require(lo < hi, key, "interval must be nondegenerate")
    if positive:
        _require(lo >= 0, key, "interval must be nonnegative")


@dataclass(frozen=True)
class SpaceTimePoint:
    s1: float
    s2: float
    t: int

    @property
    def location(self):
        return (self.s1, self.s2)


@dataclass(frozen=True)
class Observation:
    point: SpaceTimePoint
    y: float
    x: Optional[Tuple[float, ...]] = None
    missing: bool = False

    @property
    def p(self):
        return 0 if self.x is None else len(self.x)


@dataclass(frozen=True)
class SpaceTimeDomain:
    s1_range: Tuple[float, float]
    s2_range: Tuple[float, float]
    t_max: int

    def __post_init__(self):
        for name in ("s1_range", "s2_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(
                    "{} must be a finite nondegenerate interval".format(name)
                )
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ValueError("t_max must be an integer >= 1")

    @property
    def area(self):
        return (self.s1_range[1] - self.s1_range[0]) * (
            self.s2_range[1] - self.s2_range[0]
        )

    @property
    def lower(self):
        return np.array([self.s1_range[0], self.s2_range[0]])

    @property
    def upper(self):
        return np.array([self.s1_range[1], self.s2_range[1]])

    @property
    def time_span(self):
        return float(self.t_max - 1)

    def contains(self, point):
        return (
            self.s1_range[0] <= point.s1 <= self.s1_range[1]
            and self.s2_range[0] <= point.s2 <= self.s2_range[1]
            and 1 <= point.t <= self.t_max
        )

    # bounding_box():
    #
    # The smallest domain containing every point. An axis on which all
    # points coincide is widened by half a unit on each side so the
    # domain stays nondegenerate.
    #
    # Args:
    #    points (iterable): SpaceTimePoint values
    #
    # Returns:
    #    (SpaceTimeDomain): The bounding box
    #
    @classmethod
    def bounding_box(cls, points):
        points = list(points)
        ranges = []
        for axis in ("s1", "s2"):
            values = [getattr(p, axis) for p in points]
            lo, hi = min(values), max(values)
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
            ranges.append((float(lo), float(hi)))
        return cls(ranges[0], ranges[1], int(max(p.t for p in points)))

    @classmethod
    def unit(cls, t_max=1):
        return cls((0.0, 1.0), (0.0, 1.0), t_max)


@dataclass(frozen=True)
class Dataset:
    observations: Tuple[Observation, ...]
    domain: Optional[SpaceTimeDomain] = None

    def __post_init__(self):
        if not isinstance(self.observations, tuple):
            object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self):
        return len(self.observations)

    @property
    def n(self):
        return len(self.observations)

    @property
    def p(self):
        return self.observations[0].p if self.observations else 0

    @cached_property
    def coords(self):
        return np.array(
            [(o.point.s1, o.point.s2) for o in self.observations], dtype=float
        ).reshape(-1, 2)

    @cached_property
    def times(self):
        return np.array([o.point.t for o in self.observations], dtype=int)

    @cached_property
    def y(self):
        return np.array([o.y for o in self.observations], dtype=float)

    @cached_property
    def observed(self):
        return np.array([not o.missing for o in self.observations], dtype=bool)

    @cached_property
    def covariates(self):
        if self.p == 0:
            return None
        return np.array([o.x for o in self.observations], dtype=float)

    @property
    def points(self):
        return [o.point for o in self.observations]

    def subset(self, indices):
        return Dataset(
            tuple(self.observations[i] for i in indices), self.domain
        )

    # training():
    #
    # Returns:
    #    (Dataset): The observations with a response, same domain
    #
    def training(self):
        return self.subset(np.flatnonzero(self.observed))

    # targets():
    #
    # Returns:
    #    (Dataset): The observations flagged missing, same domain
    #
    def targets(self):
        return self.subset(np.flatnonzero(~self.observed))


# validate_dataset():
#
# Check a raw dataset and infer its domain.
#
# Times given as integral floats are normalized to int. Duplicate (s, t)
# points are kept as replicates and reported with a warning. Validating
# an already valid dataset returns an equal dataset.
#
# Args:
#    raw (Dataset): The dataset to check
#
# Raises:
#    (EmptyDataset): There are no observations
#    (NonFiniteValue): A location, response or covariate is not finite
#    (ContinuousTime): A time is not an integer >= 1
#    (CovariateLengthMismatch): Observations disagree on covariate count
#    (PointOutsideDomain): A point lies outside an explicit domain
#
# Returns:
#    (Dataset): The validated dataset, with a domain
#
def validate_dataset(raw):
    if not raw.observations:
        raise EmptyDataset()

    expected_p = raw.observations[0].p
    observations = []
    for index, obs in enumerate(raw.observations, start=1):
        point = obs.point
        if not (math.isfinite(point.s1) and math.isfinite(point.s2)):
            raise NonFiniteValue(index, field="location")
        t = point.t
        if isinstance(t, (bool, np.bool_, str)) or not np.isscalar(t):
            raise ContinuousTime(index, t)
        if not float(t).is_integer() or t < 1:
            raise ContinuousTime(index, t)
        if not obs.missing and not math.isfinite(obs.y):
            raise NonFiniteValue(index)
        if obs.p != expected_p:
            raise CovariateLengthMismatch(index, expected_p, obs.p)
        x = obs.x
        if x is not None:
            if not all(math.isfinite(v) for v in x):
                raise NonFiniteValue(index, field="covariate")
            x = tuple(float(v) for v in x)

        y = math.nan if obs.missing else float(obs.y)
        observations.append(
            Observation(
                SpaceTimePoint(float(point.s1), float(point.s2), int(t)),
                y,
                x,
                bool(obs.missing),
            )
        )

    domain = raw.domain
    if domain is None:
        domain = SpaceTimeDomain.bounding_box(o.point for o in observations)
    else:
        for index, obs in enumerate(observations, start=1):
            if not domain.contains(obs.point):
                raise PointOutsideDomain(index)

    keys = [dataclasses.astuple(o.point) for o in observations]
    n_duplicates = len(keys) - len(set(keys))
    if n_duplicates:
        LOGGER.warning(
            "Dataset has %d duplicate space-time points (kept as replicates)",
            n_duplicates,
        )

    return Dataset(tuple(observations), domain)


@dataclass(frozen=True)
class HyperPriors:
    # pylint: disable=too-many-instance-attributes

    a_range: Tuple[float, float] = (0.0, 10.0)
    b_range: Tuple[float, float] = (0.0, 10.0)
    base_mean: float = 0.0
    base_variance: float = 100.0
    noise_shape: float = 0.01
    noise_rate: float = 0.01
    atom_var_shape: float = 2.0
    atom_var_rate: float = 0.5
    gamma_range: Tuple[float, float] = (0.0, 10.0)
    lambda_slab: Tuple[float, float] = (1.0, 1.0)
    omega_lambda_prior: Tuple[float, float] = (1.0, 1.0)
    bandwidth_shape: float = 1.5
    nu_max: float = 1.0
    beta_variance: float = 1e6

    def __post_init__(self):
        for key in ("a_range", "b_range", "gamma_range"):
            _check_interval(getattr(self, key), key)
        for key in ("a_range", "b_range"):
            _require(getattr(self, key)[1] > 0, key, "upper bound must be > 0")
        _require(math.isfinite(self.base_mean), "base_mean", "not finite")
        for key in (
            "base_variance",
            "noise_shape",
            "noise_rate",
            "atom_var_shape",
            "atom_var_rate",
            "bandwidth_shape",
            "nu_max",
            "beta_variance",
        ):
            _require(getattr(self, key) > 0, key, "must be positive")
        for key in ("lambda_slab", "omega_lambda_prior"):
            _require(
                all(v > 0 for v in getattr(self, key)),
                key,
                "beta shapes must be positive",
            )


@dataclass(frozen=True)
class McmcConfig:
    # pylint: disable=too-many-instance-attributes

    truncation: int = 100
    n_iter: int = 20000
    n_burn: int = 10000
    thin: int = 1
    seed: Optional[int] = None
    kernel: KernelKind = KernelKind.GNEITING
    varying_atoms: bool = False

    # Proposal scales, as fractions of each parameter's prior range
    knot_scale: float = 0.1
    gamma_scale: float = 0.1
    lambda_scale: float = 0.1
    shape_scale: float = 0.1
    bandwidth_scale: float = 0.1
    adapt: bool = True
    adapt_every: int = 50
    target_accept: float = 0.3

    # Initial values
    a_init: float = 1.0
    b_init: float = 1.0
    gamma_init: float = 1.0
    lambda_init: float = 0.0
    bandwidth_init: float = 0.25

    update_shape_hyper: bool = True
    update_kernel_hyper: bool = True

    # Varying atoms
    gp_decay: float = 0.2
    gp_rho: float = 0.5
    gp_var: float = 1.0
    subsample_fraction: float = 1.0
    size_guard: int = 5000

    log_every: int = 1000
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.kernel, str):
            kind = KernelKind.from_name(self.kernel)
            object.__setattr__(self, "kernel", kind)
        _require(self.truncation >= 2, "truncation", "must be >= 2")
        _require(self.n_burn >= 0, "n_burn", "must be >= 0")
        _require(self.n_iter > self.n_burn, "n_burn", "must be < n_iter")
        _require(self.thin >= 1, "thin", "must be >= 1")
        for key in (
            "knot_scale",
            "gamma_scale",
            "lambda_scale",
            "shape_scale",
            "bandwidth_scale",
        ):
            _require(getattr(self, key) >= 0, key, "must be >= 0")
        _require(self.adapt_every >= 1, "adapt_every", "must be >= 1")
        _require(
            0 < self.target_accept < 1, "target_accept", "must be in (0, 1)"
        )
        for key in (
            "a_init",
            "b_init",
            "bandwidth_init",
            "gp_decay",
            "gp_var",
        ):
            _require(getattr(self, key) > 0, key, "must be positive")
        _require(self.gamma_init >= 0, "gamma_init", "must be >= 0")
        _require(
            0 <= self.lambda_init <= 1, "lambda_init", "must be in [0, 1]"
        )
        _require(abs(self.gp_rho) < 1, "gp_rho", "must satisfy |rho| < 1")
        _require(
            0 < self.subsample_fraction <= 1,
            "subsample_fraction",
            "must be in (0, 1]",
        )
        _require(self.size_guard >= 1, "size_guard", "must be >= 1")
        _require(self.log_every >= 1, "log_every", "must be >= 1")
        _require(self.threads >= 1, "threads", "must be >= 1")

    @property
    def n_kept(self):
        return len(range(self.n_burn, self.n_iter, self.thin))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# make_rng():
#
# The single entry point for random sources. Generators pass through
# unchanged so callers can thread one generator through a pipeline.
#
# Args:
#    seed (int|None|numpy.random.Generator): The seed
#
# Returns:
#    (numpy.random.Generator): A generator
#
def make_rng(seed=None):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# substreams():
#
# Independent child generators keyed by task index. The same seed gives
# the same children in the same order, regardless of how the tasks are
# later scheduled.
#
# Args:
#    seed (int|None|numpy.random.Generator): The parent seed
#    count (int): Number of children
#
# Returns:
#    (list): numpy Generators
#
def substreams(seed, count):
    if isinstance(seed, np.random.Generator):
        entropy = seed.integers(0, 2 ** 63 - 1, size=4)
        seed_seq = np.random.SeedSequence([int(v) for v in entropy])
    else:
        seed_seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seed_seq.spawn(count)]


def config_fields():
    """Names of every configuration key, hyperpriors first."""
    return [f.name for f in dataclasses.fields(HyperPriors)] + [
        f.name for f in dataclasses.fields(McmcConfig)
    ]


__all__ = [
    "ConfigValueError",
    "Dataset",
    "HyperPriors",
    "McmcConfig",
    "Observation",
    "SpaceTimeDomain",
    "SpaceTimePoint",
    "config_fields",
    "make_rng",
    "substreams",
    "validate_dataset",
]

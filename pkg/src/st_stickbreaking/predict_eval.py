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
predict_eval - prediction and scoring
=====================================

Posterior predictive summaries at new space-time points from a chain
trace, squared-error scores and predictive density curves.

Each kept iteration contributes a mixture over its M components plus
one extra component carrying the truncation remainder, drawn fresh from
the base distribution. Varying-atoms traces predict an occupied
component's path at a new point by kriging its stored values; other
components use the path's marginal.
"""

from collections import defaultdict, deque, namedtuple
from dataclasses import dataclass
import logging
from typing import List, Optional

import numpy as np
from scipy import stats

from ._exceptions import (
    CovariateMismatch,
    EmptyTrace,
    LengthMismatch,
    NothingToScore,
    PointMismatch,
    UnsortedGrid,
)
from ._utils import timed_activity
from .core import make_rng
from .gp_atoms import krige, prior_factor
from .stickbreak import stick_weights

LOGGER = logging.getLogger(__name__)

ResidualRow = namedtuple("ResidualRow", ["s1", "s2", "t", "value", "count"])


@dataclass(eq=False)
class PredictionResult:
    points: List
    mean: np.ndarray
    sd: np.ndarray
    q05: Optional[np.ndarray] = None
    q50: Optional[np.ndarray] = None
    q95: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)

    @property
    def has_quantiles(self):
        return self.q05 is not None


def mixture_moments(weights, means, variances):
    """Mean and variance of Gaussian mixtures along the last axis."""
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    mean = np.sum(weights * means, axis=-1)
    second = np.sum(weights * (variances + means ** 2), axis=-1)
    return mean, np.maximum(second - mean ** 2, 0.0)


def _check_covariates(trace, covariates, n):
    p = trace.n_covariates
    if covariates is None:
        if p:
            raise CovariateMismatch(p, 0)
        return None
    covariates = np.asarray(covariates, dtype=float).reshape(n, -1)
    if covariates.shape[1] != p:
        raise CovariateMismatch(p, covariates.shape[1])
    return covariates if p else None


class _ComponentTable:
    """Per-iteration mixture components at a fixed set of points."""

    def __init__(self, trace, coords, times, rng):
        self.trace = trace
        self.coords = coords
        self.times = times
        self.rng = rng
        self.chol = None
        if trace.varying_atoms:
            config = trace.config
            _, self.chol = prior_factor(
                trace.field_coords,
                trace.field_times,
                config.gp_decay,
                config.gp_rho,
                config.gp_var,
            )

    # at():
    #
    # Weights, means and variances of iteration i, each (n, M + 1); the
    # last column is the fresh component holding the remainder.
    #
    def at(self, i):
        # pylint: disable=too-many-locals
        trace = self.trace
        hyper = trace.hyper
        n = len(self.times)
        pi, remainder = stick_weights(
            trace.sticks_at(i), self.coords, self.times
        )
        weights = np.column_stack([pi, remainder])
        noise = float(trace.sigma2_eps[i])

        if trace.varying_atoms:
            config = trace.config
            M = trace.truncation
            means = np.full((n, M + 1), hyper.base_mean)
            variances = np.full((n, M + 1), config.gp_var + noise)
            labels, values = trace.fields[i]
            if len(labels):
                k_means, k_var = krige(
                    trace.field_coords,
                    trace.field_times,
                    values,
                    self.coords,
                    self.times,
                    decay=config.gp_decay,
                    rho=config.gp_rho,
                    gp_var=config.gp_var,
                    base_mean=hyper.base_mean,
                    chol=self.chol,
                )
                means[:, labels] = k_means.T
                variances[:, labels] = (k_var + noise)[:, None]
            return weights, means, variances

        mu_new = self.rng.normal(hyper.base_mean, np.sqrt(hyper.base_variance))
        sigma2_new = stats.invgamma.rvs(
            hyper.atom_var_shape,
            scale=hyper.atom_var_rate,
            random_state=self.rng,
        )
        means = np.broadcast_to(np.append(trace.mu[i], mu_new), weights.shape)
        variances = np.broadcast_to(
            np.append(trace.sigma2[i], sigma2_new) + noise, weights.shape
        )
        return weights, means, variances

    def shift(self, i, covariates):
        if covariates is None:
            return 0.0
        return covariates @ self.trace.beta[i]


def _draw_mixture(weights, means, variances, rng):
    n = weights.shape[0]
    cum = np.cumsum(weights, axis=1)
    u = rng.random(n) * cum[:, -1]
    k = np.minimum((cum <= u[:, None]).sum(axis=1), weights.shape[1] - 1)
    rows = np.arange(n)
    noise = rng.standard_normal(n)
    return means[rows, k] + np.sqrt(variances[rows, k]) * noise


# posterior_predictive():
#
# Posterior predictive mean, standard deviation and 5/50/95% quantiles
# at new points.
#
# The mean and variance combine the per-iteration mixture moments by the
# law of total variance; quantiles come from one predictive draw per
# iteration and point.
#
# Args:
#    trace (ChainTrace): A fitted chain
#    new_points (list): SpaceTimePoint values
#    covariates (ndarray): (n, p) covariates, required iff the fit had them
#    rng (numpy.random.Generator): Source for the fresh components and
#        draws, seeded from the fit when omitted
#    quantiles (bool): Whether to compute quantiles
#
# Raises:
#    (EmptyTrace): The trace has no kept iterations
#    (CovariateMismatch): Covariates do not match the fit
#
# Returns:
#    (PredictionResult): The summaries
#
def posterior_predictive(
    trace, new_points, covariates=None, rng=None, *, quantiles=True
):
    # pylint: disable=too-many-locals
    K = len(trace)
    if K == 0:
        raise EmptyTrace()
    points = list(new_points)
    n = len(points)
    covariates = _check_covariates(trace, covariates, n)
    rng = make_rng(trace.config.seed) if rng is None else rng
    coords = np.array([p.location for p in points], dtype=float).reshape(-1, 2)
    times = np.array([p.t for p in points], dtype=int)
    table = _ComponentTable(trace, coords, times, rng)

    mean_sum = np.zeros(n)
    mean_sq_sum = np.zeros(n)
    var_sum = np.zeros(n)
    draws = np.empty((K, n)) if quantiles else None
    with timed_activity(
        "posterior_predictive",
        detail="{} points, {} iterations".format(n, K),
        logger=LOGGER,
    ):
        for i in range(K):
            weights, means, variances = table.at(i)
            shift = table.shift(i, covariates)
            m, v = mixture_moments(weights, means, variances)
            m = m + shift
            mean_sum += m
            mean_sq_sum += m ** 2
            var_sum += v
            if quantiles:
                draws[i] = (
                    _draw_mixture(weights, means, variances, rng) + shift
                )

    mean = mean_sum / K
    var = var_sum / K + np.maximum(mean_sq_sum / K - mean ** 2, 0.0)
    result = PredictionResult(points, mean, np.sqrt(var))
    if quantiles:
        result.q05, result.q50, result.q95 = np.quantile(
            draws, [0.05, 0.5, 0.95], axis=0
        )
    return result


def _values(pred):
    return np.asarray(getattr(pred, "mean", pred), dtype=float)


def _point_key(point):
    return (point.s1, point.s2, int(point.t))


# align_predictions():
#
# Reorder a PredictionResult to follow the given points. Replicated
# points are matched in their order of appearance.
#
# Raises:
#    (LengthMismatch): The counts differ
#    (PointMismatch): A point has no prediction
#
# Returns:
#    (PredictionResult): The predictions in the order of points
#
def align_predictions(pred, points):
    points = list(points)
    if len(pred) != len(points):
        raise LengthMismatch(len(pred), len(points))
    slots = defaultdict(deque)
    for i, p in enumerate(pred.points):
        slots[_point_key(p)].append(i)
    order = []
    for p in points:
        queue = slots.get(_point_key(p))
        if not queue:
            raise PointMismatch(_point_key(p))
        order.append(queue.popleft())
    order = np.asarray(order, dtype=int)

    def take(a):
        return None if a is None else np.asarray(a)[order]

    return PredictionResult(
        points=[pred.points[i] for i in order],
        mean=take(pred.mean),
        sd=take(pred.sd),
        q05=take(pred.q05),
        q50=take(pred.q50),
        q95=take(pred.q95),
    )


# espe():
#
# Squared prediction error of the predictive means. Missing (NaN)
# truth values are not scored.
#
# Raises:
#    (LengthMismatch): pred and truth differ in length
#    (NothingToScore): Every truth value is missing
#
# Returns:
#    (float, float): The sum over scored points and the mean per
#                    scored point
#
def espe(pred, truth):
    pred = _values(pred)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise LengthMismatch(len(pred), len(truth))
    if not len(truth):
        return 0.0, 0.0
    scored = ~np.isnan(truth)
    if not scored.any():
        raise NothingToScore()
    total = float(np.sum((truth[scored] - pred[scored]) ** 2))
    return total, total / int(scored.sum())


# residual_map():
#
# Squared residuals per point, or averaged per location over windows of
# consecutive times (window w groups t = 1..w, w+1..2w, ...). Rows come
# in order of first appearance; t is the first time of the window.
# Points with a missing (NaN) truth value are skipped.
#
# Raises:
#    (LengthMismatch): The inputs are not aligned
#    (PointMismatch): pred carries points that differ from points
#
# Returns:
#    (list): ResidualRow tuples
#
def residual_map(pred, truth, points, window=None):
    points = list(points)
    pred_points = getattr(pred, "points", None)
    pred = _values(pred)
    truth = np.asarray(truth, dtype=float)
    if not len(pred) == len(truth) == len(points):
        raise LengthMismatch(len(pred), len(truth))
    if pred_points is not None:
        for p, q in zip(pred_points, points):
            if _point_key(p) != _point_key(q):
                raise PointMismatch(_point_key(q))
    if window is not None and window < 1:
        raise ValueError("window must be >= 1, got {}".format(window))

    squared = (truth - pred) ** 2
    scored = [
        (p, v) for p, v in zip(points, squared) if not np.isnan(v)
    ]
    if window is None:
        return [ResidualRow(p.s1, p.s2, p.t, float(v), 1) for p, v in scored]

    groups = {}
    for p, v in scored:
        key = (p.s1, p.s2, (p.t - 1) // window)
        total, count = groups.get(key, (0.0, 0))
        groups[key] = (total + float(v), count + 1)
    return [
        ResidualRow(s1, s2, block * window + 1, total / count, count)
        for (s1, s2, block), (total, count) in groups.items()
    ]


# predictive_density():
#
# Posterior mean of the predictive mixture density at one point.
#
# Raises:
#    (UnsortedGrid): y_grid is not in increasing order
#    (EmptyTrace): The trace has no kept iterations
#
# Returns:
#    (ndarray): Densities on y_grid
#
def predictive_density(trace, point, y_grid, covariates=None, rng=None):
    y_grid = np.asarray(y_grid, dtype=float)
    if np.any(np.diff(y_grid) < 0):
        raise UnsortedGrid()
    K = len(trace)
    if K == 0:
        raise EmptyTrace()
    covariates = _check_covariates(trace, covariates, 1)
    rng = make_rng(trace.config.seed) if rng is None else rng
    table = _ComponentTable(
        trace,
        np.array([point.location], dtype=float),
        np.array([point.t], dtype=int),
        rng,
    )
    density = np.zeros_like(y_grid)
    for i in range(K):
        weights, means, variances = table.at(i)
        shift = table.shift(i, covariates)
        centre = means[0] + (shift[0] if covariates is not None else 0.0)
        density += stats.norm.pdf(
            y_grid[:, None], centre[None, :], np.sqrt(variances[0])[None, :]
        ) @ weights[0]
    return density / K

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
gp_atoms - varying atoms
========================

In the varying-atoms model each component carries a Gaussian-process
path ``theta_k(s, t)`` instead of a scalar atom, with the product
covariance::

   C((s, t), (s', t')) = gp_var * exp(-|s - s'| / decay) * rho^|t - t'|

Paths are represented by their values at the distinct training points.
The sampler reuses the stick, knot, kernel and shape updates of
:mod:`st_stickbreaking.mcmc`, allocates with the urn probabilities and
redraws each path from its conjugate normal full conditional by
pathwise conditioning, so only one n x n factorization is needed per
chain.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import stats
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from ._exceptions import SizeGuardExceeded
from ._linalg import jittered_cholesky
from ._utils import timed_activity
from .core import HyperPriors, McmcConfig, SpaceTimePoint, make_rng
from .kernels import KernelKind
from .mcmc import (
    ProposalScales,
    TraceRecorder,
    draw_noise_regression,
    g0_quadrature,
    initial_state,
    run_sweeps,
    update_kernel_hyper,
    update_knots,
    update_shape_hyper,
    update_sticks,
    urn_allocation_probs,
)
from .stickbreak import break_sticks

LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class AtomField:
    """Path values of M components at a set of space-time points."""

    values: np.ndarray
    coords: np.ndarray
    times: np.ndarray
    decay: float
    rho: float
    gp_var: float
    base_mean: float = 0.0

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError("decay must be > 0, got {}".format(self.decay))
        if not abs(self.rho) < 1:
            raise ValueError(
                "rho must satisfy |rho| < 1, got {}".format(self.rho)
            )
        if not self.gp_var > 0:
            raise ValueError("gp_var must be > 0, got {}".format(self.gp_var))

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    def with_values(self, values):
        return AtomField(
            values,
            self.coords,
            self.times,
            self.decay,
            self.rho,
            self.gp_var,
            self.base_mean,
        )


def product_covariance(p, q, decay, rho, gp_var):
    """Covariance of one path between two space-time points."""
    d = np.hypot(p.s1 - q.s1, p.s2 - q.s2)
    return float(gp_var * np.exp(-d / decay) * rho ** abs(p.t - q.t))


# covariance_matrix():
#
# Product covariance between two sets of points.
#
# Args:
#    coords1 (ndarray): (n1, 2) locations
#    times1 (ndarray): (n1,) times
#    coords2 (ndarray): (n2, 2) locations, defaults to coords1
#    times2 (ndarray): (n2,) times, defaults to times1
#
# Returns:
#    (ndarray): (n1, n2) covariances
#
def covariance_matrix(
    coords1, times1, coords2=None, times2=None, *, decay, rho, gp_var
):
    coords1 = np.asarray(coords1, dtype=float).reshape(-1, 2)
    times1 = np.asarray(times1, dtype=float).reshape(-1)
    if coords2 is None:
        coords2, times2 = coords1, times1
    coords2 = np.asarray(coords2, dtype=float).reshape(-1, 2)
    times2 = np.asarray(times2, dtype=float).reshape(-1)
    dist = cdist(coords1, coords2)
    lag = np.abs(times1[:, None] - times2[None, :])
    return gp_var * np.exp(-dist / decay) * np.power(rho, lag)


# unique_points():
#
# Distinct (s1, s2, t) rows and the index of each input row among them.
#
def unique_points(coords, times):
    keys = np.column_stack(
        [np.asarray(coords, dtype=float), np.asarray(times, dtype=float)]
    )
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return uniq[:, :2], uniq[:, 2].astype(int), inverse.reshape(-1)


def prior_factor(coords, times, decay, rho, gp_var):
    cov = covariance_matrix(coords, times, decay=decay, rho=rho, gp_var=gp_var)
    return cov, jittered_cholesky(cov, scale=gp_var)


# sample_atom_field():
#
# Draw M independent paths at the given points. Coincident points share
# one value.
#
# Args:
#    points (list): SpaceTimePoint instances
#    M (int): Number of components
#    decay (float): Spatial range
#    rho (float): Temporal autocorrelation
#    gp_var (float): Marginal variance
#    base_mean (float): Marginal mean
#    rng (numpy.random.Generator): The random source
#
# Raises:
#    (FactorizationFailure): The covariance could not be factorized
#
# Returns:
#    (AtomField): Values of shape (M, len(points))
#
def sample_atom_field(points, M, decay, rho, gp_var, base_mean, rng):
    # pylint: disable=too-many-arguments
    coords = np.array([(p.s1, p.s2) for p in points], dtype=float)
    times = np.array([p.t for p in points], dtype=int)
    u_coords, u_times, inverse = unique_points(coords, times)
    _, chol = prior_factor(u_coords, u_times, decay, rho, gp_var)
    z = rng.standard_normal((M, len(u_times)))
    values = base_mean + z @ chol.T
    return AtomField(
        values[:, inverse], coords, times, decay, rho, gp_var, base_mean
    )


# atom_field_posterior():
#
# Normal full conditional of one path at every field point given the
# responses allocated to it.
#
# Args:
#    cov (ndarray): (n_u, n_u) prior covariance over the field points
#    index (ndarray): Field point of each allocated response
#    r (ndarray): Allocated responses net of the regression
#    sigma2_eps (float): Observation noise variance
#    base_mean (float): Prior mean
#
# Returns:
#    (ndarray, ndarray): Posterior mean (n_u,) and covariance (n_u, n_u)
#
def atom_field_posterior(cov, index, r, sigma2_eps, base_mean):
    index = np.asarray(index, dtype=int)
    if index.size == 0:
        return np.full(cov.shape[0], float(base_mean)), cov.copy()
    cross = cov[:, index]
    gram = cov[np.ix_(index, index)] + sigma2_eps * np.eye(index.size)
    chol = jittered_cholesky(gram)
    mean = base_mean + cross @ cho_solve(
        (chol, True), np.asarray(r, dtype=float) - base_mean
    )
    half = solve_triangular(chol, cross.T, lower=True)
    return mean, cov - half.T @ half


# update_atom_field():
#
# Redraw every component's path from its full conditional: a prior path
# is drawn and conditioned on the allocated responses plus fresh noise,
# which gives an exact posterior draw. Components without responses get
# a prior path.
#
# Args:
#    state (LatentState): Current state; allocations and noise are read
#    dataset (Dataset): The training data
#    field (AtomField): The current paths at the distinct training points
#    rng (numpy.random.Generator): The random source
#    index (ndarray): Field point of each observation, computed when
#        omitted
#    cov (ndarray): Prior covariance over the field points, computed
#        when omitted
#    chol (ndarray): Its lower Cholesky factor
#
# Returns:
#    (AtomField): The new paths
#
def update_atom_field(
    state, dataset, field, rng, *, index=None, cov=None, chol=None
):
    # pylint: disable=too-many-locals,too-many-arguments
    if index is None:
        index = field_index(field, dataset)
    if cov is None or chol is None:
        cov, chol = prior_factor(
            field.coords, field.times, field.decay, field.rho, field.gp_var
        )
    r = dataset.y
    if dataset.covariates is not None and state.beta is not None:
        r = r - dataset.covariates @ state.beta

    prior = field.base_mean + rng.standard_normal((field.M, field.n)) @ chol.T
    noise = np.sqrt(state.sigma2_eps) * rng.standard_normal(len(r))
    values = prior
    for k in np.unique(state.c):
        members = np.flatnonzero(state.c == k)
        idx = index[members]
        gram = cov[np.ix_(idx, idx)] + state.sigma2_eps * np.eye(idx.size)
        gram_chol = jittered_cholesky(gram)
        gap = r[members] - prior[k, idx] - noise[members]
        values[k] = prior[k] + cov[:, idx] @ cho_solve((gram_chol, True), gap)
    return field.with_values(values)


def field_index(field, dataset):
    """Position of each observation's point among the field points."""
    lookup = {
        (float(s[0]), float(s[1]), int(t)): j
        for j, (s, t) in enumerate(zip(field.coords, field.times))
    }
    try:
        return np.array(
            [
                lookup[(float(s[0]), float(s[1]), int(t))]
                for s, t in zip(dataset.coords, dataset.times)
            ],
            dtype=int,
        )
    except KeyError as e:
        raise ValueError(
            "Observation point {} is not a field point".format(e.args[0])
        ) from None


# krige():
#
# Conditional mean and variance of paths at new points given their
# values at the field points.
#
# Args:
#    field_coords (ndarray): (n_u, 2) field locations
#    field_times (ndarray): (n_u,) field times
#    values (ndarray): (k, n_u) path values
#    coords (ndarray): (m, 2) new locations
#    times (ndarray): (m,) new times
#    chol (ndarray): Lower factor of the field covariance, computed when
#        omitted
#
# Returns:
#    (ndarray, ndarray): Means (k, m) and variances (m,)
#
def krige(
    field_coords,
    field_times,
    values,
    coords,
    times,
    *,
    decay,
    rho,
    gp_var,
    base_mean=0.0,
    chol=None
):
    # pylint: disable=too-many-arguments
    if chol is None:
        _, chol = prior_factor(field_coords, field_times, decay, rho, gp_var)
    cross = covariance_matrix(
        coords,
        times,
        field_coords,
        field_times,
        decay=decay,
        rho=rho,
        gp_var=gp_var,
    )
    half = solve_triangular(chol, cross.T, lower=True)
    weights = solve_triangular(chol.T, half, lower=False)
    means = base_mean + (np.atleast_2d(values) - base_mean) @ weights
    var = np.maximum(gp_var - np.sum(half ** 2, axis=0), 0.0)
    return means, var


# update_allocations_urn():
#
# Sequential urn allocation of every subject given the others. A fresh
# atom inside an occupied component keeps the subject in that component,
# chosen with probability proportional to pi_k * alpha / (alpha + |S_k|);
# its path value is redrawn by the next field update. A new component is
# an empty one, chosen with probability proportional to pi_k.
#
def update_allocations_urn(state, dataset, rng, *, index, hyper):
    # pylint: disable=too-many-locals
    field = state.atom_field
    pi, _ = break_sticks(
        state.sticks.local_sticks(dataset.coords, dataset.times)
    )
    alpha = state.b / state.a
    r = dataset.y
    if dataset.covariates is not None and state.beta is not None:
        r = r - dataset.covariates @ state.beta
    g0 = g0_quadrature(r, hyper.base_mean, field.gp_var, state.sigma2_eps)
    theta = field.values[:, index]
    c = state.c.copy()
    u = rng.random((len(r), 2))

    for i in range(len(r)):
        probs, labels = urn_allocation_probs(
            i,
            r,
            c,
            pi[i],
            theta[:, i],
            alpha,
            noise_var=state.sigma2_eps,
            g0=g0[i],
        )
        outcome = min(
            int(np.searchsorted(np.cumsum(probs), u[i, 0], side="right")),
            len(probs) - 1,
        )
        if 1 <= outcome <= len(labels):
            c[i] = labels[outcome - 1]
            continue
        others = np.bincount(np.delete(c, i), minlength=state.M)
        if outcome == 0:
            candidates = labels
            weights = pi[i][labels] * alpha / (alpha + others[labels])
        else:
            candidates = np.flatnonzero(others == 0)
            weights = pi[i][candidates]
        cum = np.cumsum(weights)
        pick = int(np.searchsorted(cum, u[i, 1] * cum[-1], side="right"))
        c[i] = candidates[min(pick, len(candidates) - 1)]
    return state.copy(c=c)


def log_likelihood_va(state, dataset, index):
    """Gaussian log likelihood with each response centred on its path."""
    r = dataset.y
    if dataset.covariates is not None and state.beta is not None:
        r = r - dataset.covariates @ state.beta
    theta = state.atom_field.values[state.c, index]
    return float(
        stats.norm.logpdf(r, theta, np.sqrt(state.sigma2_eps)).sum()
    )


def _subsample(data, fraction, rng):
    if fraction >= 1.0:
        return data
    size = max(1, int(round(fraction * data.n)))
    keep = np.sort(rng.choice(data.n, size=size, replace=False))
    LOGGER.info(
        "Fitting on a subsample of %d of %d observations", size, data.n
    )
    return data.subset(keep)


# run_chain_va():
#
# Run one chain of the varying-atoms sampler.
#
# Args:
#    dataset (Dataset): A validated dataset
#    config (McmcConfig): Chain settings, including the path covariance
#    hyper (HyperPriors): Prior settings
#    rng (numpy.random.Generator): The random source
#
# Raises:
#    (SizeGuardExceeded): Too many distinct training points
#    (ChainFailure): An update failed; the cause is chained
#
# Returns:
#    (ChainTrace): The kept iterations, with the occupied paths at the
#    distinct training points
#
def run_chain_va(dataset, config=None, hyper=None, rng=None):
    # pylint: disable=too-many-locals
    config = config or McmcConfig(varying_atoms=True)
    hyper = hyper or HyperPriors()
    rng = make_rng(config.seed) if rng is None else rng
    data = _subsample(dataset.training(), config.subsample_fraction, rng)

    u_coords, u_times, index = unique_points(data.coords, data.times)
    if len(u_times) > config.size_guard:
        raise SizeGuardExceeded(len(u_times), config.size_guard)

    cov, chol = prior_factor(
        u_coords, u_times, config.gp_decay, config.gp_rho, config.gp_var
    )
    scales = ProposalScales.from_config(config, hyper)
    state = initial_state(data, config, hyper, rng)
    field = AtomField(
        np.full((config.truncation, len(u_times)), hyper.base_mean),
        u_coords,
        u_times,
        config.gp_decay,
        config.gp_rho,
        config.gp_var,
        hyper.base_mean,
    )
    state.atom_field = update_atom_field(
        state, data, field, rng, index=index, cov=cov, chol=chol
    )

    def field_step(s):
        return s.copy(
            atom_field=update_atom_field(
                s, data, s.atom_field, rng, index=index, cov=cov, chol=chol
            )
        )

    def noise_step(s):
        sigma2_eps, beta = draw_noise_regression(
            s.atom_field.values[s.c, index], data, s.beta, rng, hyper
        )
        return s.copy(sigma2_eps=sigma2_eps, beta=beta)

    steps = [
        (
            "update_allocations",
            lambda s: update_allocations_urn(
                s, data, rng, index=index, hyper=hyper
            ),
        ),
        ("update_sticks", lambda s: update_sticks(s, data, rng)),
        (
            "update_knots",
            lambda s: update_knots(s, data, rng, hyper=hyper, scales=scales),
        ),
    ]
    if config.update_kernel_hyper:
        steps.append(
            (
                "update_kernel_hyper",
                lambda s: update_kernel_hyper(
                    s, data, rng, hyper=hyper, scales=scales
                ),
            )
        )
    steps += [
        ("update_atom_field", field_step),
        ("update_noise_regression", noise_step),
    ]
    if config.update_shape_hyper:
        steps.append(
            (
                "update_shape_hyper",
                lambda s: update_shape_hyper(
                    s, rng, hyper=hyper, scales=scales
                ),
            )
        )

    recorder = TraceRecorder(
        config,
        config.truncation,
        data.p,
        config.kernel is KernelKind.SEPARABLE,
        True,
    )
    with timed_activity(
        "run_chain_va",
        detail="{} observations at {} points, {} kernel, M={}".format(
            data.n, len(u_times), config.kernel, config.truncation
        ),
        logger=LOGGER,
    ):
        run_sweeps(
            state,
            steps,
            config,
            scales,
            lambda it, s, ll: recorder.record(
                it, s, ll, s.atom_field.values
            ),
            lambda s: log_likelihood_va(s, data, index),
        )
    return recorder.build(
        data,
        config,
        hyper,
        config.kernel,
        scales,
        field_coords=u_coords,
        field_times=u_times,
    )


def field_points(trace):
    """The distinct training points a varying-atoms trace stores paths at."""
    return [
        SpaceTimePoint(float(s[0]), float(s[1]), int(t))
        for s, t in zip(trace.field_coords, trace.field_times)
    ]

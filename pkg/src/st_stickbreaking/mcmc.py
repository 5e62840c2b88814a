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
mcmc - truncated blocked Gibbs sampler
======================================

Posterior sampling for the single-atom mixture::

   y_i = x_i' beta + mu_{c_i} + eta_i + eps_i
   eta_i ~ N(0, sigma2_{c_i}),   eps_i ~ N(0, sigma2_eps)

with component weights pi_k(s_i, t_i) from the space-time stick-breaking
prior truncated at M components. Marginally over eta the density of
component k is ``N(mu_k, sigma2_k + sigma2_eps)``; allocations, the
component means and the likelihood use that marginal form, and eta is
redrawn before the variances are updated.

One sweep runs, in order: allocations, sticks (by data augmentation),
knots (random-walk Metropolis-Hastings), kernel hyperparameters
(gamma and the spike-and-slab lambda, or the separable bandwidths),
component means and variances, noise and regression, stick shapes.

**Usage:**

.. code:: python

   from st_stickbreaking.core import HyperPriors, McmcConfig, make_rng
   from st_stickbreaking.mcmc import pr_lambda_zero, run_chain

   config = McmcConfig(n_iter=2000, n_burn=1000, seed=7)
   trace = run_chain(dataset, config, HyperPriors(), make_rng(config.seed))
   pr_zero, mean_nonzero = pr_lambda_zero(trace)

Allocations are stored 0-based; :attr:`LatentState.allocations` reports
them 1-based.
"""

from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
from typing import Optional

import numpy as np
from scipy import stats
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from ._exceptions import (
    AllZeroWeights,
    ChainFailure,
    EmptyTrace,
    NoLambdaInTrace,
    StsbError,
)
from ._linalg import jittered_cholesky
from ._utils import timed_activity
from .core import HyperPriors, McmcConfig, make_rng, substreams
from .kernels import KernelHyper, KernelKind, evaluate
from .stickbreak import StickState, clip_sticks, log_break_sticks

LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class LatentState:
    # pylint: disable=too-many-instance-attributes

    c: np.ndarray
    sticks: StickState
    mu: np.ndarray
    sigma2: np.ndarray
    sigma2_eps: float
    eta: np.ndarray
    beta: Optional[np.ndarray] = None
    omega_lambda: float = 0.5
    nu: Optional[np.ndarray] = None
    atom_field: Optional[object] = None

    @property
    def M(self):
        return self.sticks.M

    @property
    def a(self):
        return self.sticks.a

    @property
    def b(self):
        return self.sticks.b

    @property
    def gamma(self):
        return self.sticks.hyper.gamma

    @property
    def lam(self):
        return self.sticks.hyper.lam

    @property
    def allocations(self):
        return self.c + 1

    @property
    def n_occupied(self):
        return int(len(np.unique(self.c)))

    def counts(self):
        return np.bincount(self.c, minlength=self.M)

    def copy(self, **changes):
        state = LatentState(
            self.c.copy(),
            self.sticks.copy(),
            self.mu.copy(),
            self.sigma2.copy(),
            float(self.sigma2_eps),
            self.eta.copy(),
            None if self.beta is None else self.beta.copy(),
            float(self.omega_lambda),
            None if self.nu is None else self.nu.copy(),
            self.atom_field,
        )
        for key, value in changes.items():
            setattr(state, key, value)
        return state

    def is_valid(self):
        return bool(
            np.all(self.sigma2 > 0)
            and self.sigma2_eps > 0
            and 0.0 <= self.lam <= 1.0
            and np.all((self.c >= 0) & (self.c < self.M))
            and np.all((self.sticks.V > 0) & (self.sticks.V < 1))
        )


# Moves with an adaptable step size; the lambda swap has none
_STEPS = ("knot", "gamma", "lam", "shape", "bandwidth")


# ProposalScales
#
# Random-walk step sizes and acceptance counters of the Metropolis
# moves. Knot steps are fractions of each axis' extent, the bandwidth
# step is on the log scale, the others are absolute.
#
@dataclass
class ProposalScales:
    knot: float = 0.1
    gamma: float = 1.0
    lam: float = 0.1
    shape: float = 1.0
    bandwidth: float = 0.1
    window: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, config, hyper):
        return cls(
            knot=config.knot_scale,
            gamma=config.gamma_scale
            * (hyper.gamma_range[1] - hyper.gamma_range[0]),
            lam=config.lambda_scale,
            shape=config.shape_scale * (hyper.a_range[1] - hyper.a_range[0]),
            bandwidth=config.bandwidth_scale,
        )

    def record(self, name, accepted):
        for counter in (self.window, self.totals):
            acc, att = counter.get(name, (0, 0))
            counter[name] = (acc + int(accepted), att + 1)

    def acceptance(self):
        return {
            name: acc / att for name, (acc, att) in self.totals.items() if att
        }

    # adapt():
    #
    # Scale each step size towards the target acceptance rate using the
    # rates observed since the last call.
    #
    def adapt(self, target):
        for name, (acc, att) in self.window.items():
            if not att or name not in _STEPS:
                continue
            rate = acc / att
            old = getattr(self, name)
            setattr(self, name, old * float(np.exp(2.0 * (rate - target))))
            LOGGER.debug(
                "Adapted %s step %.4g -> %.4g (acceptance %.2f)",
                name,
                old,
                getattr(self, name),
                rate,
            )
        self.window = {}


def reflect(x, lo, hi):
    """Reflect values into [lo, hi], keeping random walks symmetric."""
    width = hi - lo
    if width <= 0:
        return np.full_like(np.asarray(x, dtype=float), lo)
    y = np.mod(np.asarray(x, dtype=float) - lo, 2.0 * width)
    return lo + np.where(y > width, 2.0 * width - y, y)


def _accept(log_ratio, rng):
    with np.errstate(divide="ignore"):
        return bool(np.log(rng.random()) < log_ratio)


def _residuals(state, dataset):
    r = dataset.y
    if dataset.covariates is not None and state.beta is not None:
        r = r - dataset.covariates @ state.beta
    return r


def _alloc_log_prob(sticks, dataset, c):
    log_pi, _ = log_break_sticks(
        sticks.local_sticks(dataset.coords, dataset.times)
    )
    return float(log_pi[np.arange(len(c)), c].sum())


# log_likelihood():
#
# Gaussian log likelihood of the observed responses under the current
# allocation, with component variance sigma2_k + sigma2_eps.
#
# Returns:
#    (float): The log likelihood
#
def log_likelihood(state, dataset):
    r = _residuals(state, dataset)
    c = state.c
    sd = np.sqrt(state.sigma2[c] + state.sigma2_eps)
    return float(stats.norm.logpdf(r, state.mu[c], sd).sum())


# draw_allocations():
#
# Draw one category per row from unnormalized log weights.
#
# Args:
#    log_w (ndarray): (n, M) log weights
#    rng (numpy.random.Generator): The random source
#
# Raises:
#    (AllZeroWeights): Every weight of some row is zero
#
# Returns:
#    (ndarray): (n,) 0-based categories
#
def draw_allocations(log_w, rng):
    log_w = np.asarray(log_w, dtype=float)
    top = log_w.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(top))
    if bad.size:
        raise AllZeroWeights(int(bad[0]) + 1)
    cum = np.cumsum(np.exp(log_w - top[:, None]), axis=1)
    u = rng.random(log_w.shape[0]) * cum[:, -1]
    c = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(c, log_w.shape[1] - 1)


def allocation_log_weights(state, dataset):
    """Unnormalized (n, M) log allocation probabilities."""
    with np.errstate(divide="ignore"):
        log_pi, _ = log_break_sticks(
            state.sticks.local_sticks(dataset.coords, dataset.times)
        )
    r = _residuals(state, dataset)
    sd = np.sqrt(state.sigma2 + state.sigma2_eps)
    log_lik = stats.norm.logpdf(r[:, None], state.mu[None, :], sd[None, :])
    return log_pi + log_lik


def update_allocations(state, dataset, rng):
    """Redraw every c_i from its full conditional over the M components."""
    c = draw_allocations(allocation_log_weights(state, dataset), rng)
    return state.copy(c=c)


UrnProbs = namedtuple("UrnProbs", ["probs", "labels"])

G0_NODES = 200


# urn_weights():
#
# Polya urn weights of occupied components given their sizes without the
# current subject: 1 / (alpha + |S_k|) per member and alpha / (alpha + |S_k|)
# for a fresh atom.
#
# Returns:
#    (ndarray, ndarray): Per-member and fresh-atom weights, like counts
#
def urn_weights(counts, alpha):
    counts = np.asarray(counts, dtype=float)
    denom = alpha + counts
    return 1.0 / denom, alpha / denom


# g0_quadrature():
#
# Prior predictive density of y under a normal base measure and Gaussian
# noise, by Gauss-Hermite quadrature over the atom.
#
# Args:
#    y (array-like): Responses
#    mean (float): Base measure mean
#    var (float): Base measure variance
#    noise_var (float): Observation noise variance
#    n_nodes (int): Quadrature nodes
#
# Returns:
#    (ndarray): Densities, shaped like y
#
def g0_quadrature(y, mean, var, noise_var, n_nodes=G0_NODES):
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / np.sqrt(2.0 * np.pi)
    theta = mean + np.sqrt(var) * nodes
    y = np.asarray(y, dtype=float)
    dens = stats.norm.pdf(y[..., None], theta, np.sqrt(noise_var))
    return dens @ weights


# urn_allocation_probs():
#
# Allocation probabilities of subject i given everyone else, in the
# marginal urn representation of the weights.
#
# The outcomes are, in order: a fresh atom inside one of the occupied
# components, each occupied component's existing atom, and a new
# component. Occupied means holding at least one other subject.
#
# Args:
#    i (int): 0-based subject
#    y (ndarray): (n,) responses net of the regression
#    c (ndarray): (n,) 0-based allocations; c[i] is ignored
#    pi (ndarray): (M,) stick-breaking weights at subject i
#    theta (ndarray): (M,) component atoms at subject i
#    alpha (float): Concentration
#    noise_var (float): Observation noise variance
#    g0 (float): Prior predictive density of y[i]
#
# Returns:
#    (UrnProbs): Normalized probabilities (K + 2,) and the K occupied
#    component labels, ascending
#
def urn_allocation_probs(i, y, c, pi, theta, alpha, *, noise_var, g0):
    # pylint: disable=too-many-locals
    pi = np.asarray(pi, dtype=float)
    others = np.delete(np.asarray(c), i)
    counts = np.bincount(others, minlength=len(pi))
    labels = np.flatnonzero(counts)
    empty = np.flatnonzero(counts == 0)
    _, w_fresh = urn_weights(counts[labels], alpha)

    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_g0 = np.log(g0)
        log_g = stats.norm.logpdf(y[i], theta[labels], np.sqrt(noise_var))
        fresh = (
            logsumexp(log_pi[labels] + np.log(w_fresh)) + log_g0
            if labels.size
            else -np.inf
        )
        existing = (
            log_pi[labels]
            + np.log(counts[labels])
            - np.log(alpha + counts[labels])
            + log_g
        )
        new = logsumexp(log_pi[empty]) + log_g0 if empty.size else -np.inf

    log_p = np.concatenate([[fresh], existing, [new]])
    top = np.max(log_p)
    if not np.isfinite(top):
        raise AllZeroWeights(i + 1)
    p = np.exp(log_p - top)
    return UrnProbs(p / p.sum(), labels)


# draw_augmentation():
#
# Draw the stick augmentation anchored to the allocations: for k < c_i
# the pair (A_ik, B_ik) is drawn from its prior conditioned on not both
# being one, and A_ik = B_ik = 1 at k = c_i.
#
# Args:
#    c (ndarray): (n,) 0-based allocations
#    V (ndarray): (M,) sticks
#    W (ndarray): (n, M) kernel weights
#
# Returns:
#    (ndarray, ndarray, ndarray): A and B as (n, M) ints and the (n, M)
#    mask of entries with H_i >= k
#
def draw_augmentation(c, V, W, rng):
    n, M = W.shape
    k = np.arange(M)
    before = k[None, :] < c[:, None]
    at = k[None, :] == c[:, None]
    denom = 1.0 - V[None, :] * W
    p_a = V[None, :] * (1.0 - W) / denom
    p_b_given_not_a = W
    u = rng.random((2, n, M))
    A = np.where(at, 1, np.where(before, u[0] < p_a, 0)).astype(int)
    B = np.where(
        at,
        1,
        np.where(before & (A == 0), u[1] < p_b_given_not_a, 0),
    ).astype(int)
    return A, B, before | at


def beta_posterior_params(A, reach, a, b):
    """Beta parameters of each V_k given the augmentation."""
    A = np.asarray(A)
    reach = np.asarray(reach, dtype=bool)
    ones = (A * reach).sum(axis=0)
    zeros = ((1 - A) * reach).sum(axis=0)
    return a + ones, b + zeros


def update_sticks(state, dataset, rng):
    """Redraw the sticks V_k from their augmented beta full conditionals."""
    sticks = state.sticks
    W = sticks.kernel(dataset.coords, dataset.times)
    A, _, reach = draw_augmentation(state.c, sticks.V, W, rng)
    alpha, beta_ = beta_posterior_params(A, reach, sticks.a, sticks.b)
    V = clip_sticks(rng.beta(alpha, beta_))
    return state.copy(sticks=sticks.copy(V=V))


def _kernel_column(sticks, dataset, psi, zeta):
    hyper = sticks.hyper
    return evaluate(
        sticks.kind,
        dataset.coords[:, 0] - psi[0],
        dataset.coords[:, 1] - psi[1],
        dataset.times - zeta,
        h=hyper.h,
        h_t=hyper.h_t,
        gamma=hyper.gamma,
        lam=hyper.lam,
    )


# update_knots():
#
# Random-walk Metropolis-Hastings on each knot (psi_k, zeta_k), reflected
# at the domain bounds, targeting prod_i pi_{c_i}(s_i, t_i) under uniform
# knot priors. Only the terms involving knot k are evaluated.
#
def update_knots(state, dataset, rng, *, hyper=None, scales=None):
    # pylint: disable=unused-argument,too-many-locals
    scales = scales or ProposalScales()
    domain = dataset.domain
    lower, upper = domain.lower, domain.upper
    span = domain.time_span
    sticks = state.sticks.copy()
    V, c = sticks.V, state.c

    for k in range(sticks.M):
        members = c == k
        later = c > k

        def contribution(w, k=k, members=members, later=later):
            return float(
                np.log(w[members]).sum()
                + np.log1p(-V[k] * w[later]).sum()
            )

        z = rng.standard_normal(3)
        u = rng.random()
        psi_new = reflect(
            sticks.psi[k] + scales.knot * (upper - lower) * z[:2], lower, upper
        )
        zeta_new = float(
            reflect(
                sticks.zeta[k] + scales.knot * span * z[2], 1.0, 1.0 + span
            )
        )
        current = contribution(
            _kernel_column(sticks, dataset, sticks.psi[k], sticks.zeta[k])
        )
        proposed = contribution(
            _kernel_column(sticks, dataset, psi_new, zeta_new)
        )
        with np.errstate(divide="ignore"):
            accepted = bool(np.log(u) < proposed - current)
        if accepted:
            sticks.psi[k] = psi_new
            sticks.zeta[k] = zeta_new
        scales.record("knot", accepted)

    return state.copy(sticks=sticks)


def _update_gamma_lambda(state, dataset, rng, hyper, scales):
    sticks = state.sticks
    c = state.c
    current = _alloc_log_prob(sticks, dataset, c)

    # gamma
    lo, hi = hyper.gamma_range
    proposal = sticks.with_hyper(
        gamma=float(
            reflect(
                sticks.hyper.gamma + scales.gamma * rng.standard_normal(),
                lo,
                hi,
            )
        )
    )
    proposed = _alloc_log_prob(proposal, dataset, c)
    accepted = _accept(proposed - current, rng)
    if accepted:
        sticks, current = proposal, proposed
    scales.record("gamma", accepted)

    # lambda: jump between the spike at zero and the slab
    omega = state.omega_lambda
    slab_a, slab_b = hyper.lambda_slab
    with np.errstate(divide="ignore"):
        log_odds = np.log(omega) - np.log1p(-omega)
    if sticks.hyper.lam == 0.0:
        proposal = sticks.with_hyper(lam=float(rng.beta(slab_a, slab_b)))
        proposed = _alloc_log_prob(proposal, dataset, c)
        log_ratio = proposed - current + log_odds
    else:
        proposal = sticks.with_hyper(lam=0.0)
        proposed = _alloc_log_prob(proposal, dataset, c)
        log_ratio = proposed - current - log_odds
    accepted = _accept(log_ratio, rng)
    if accepted:
        sticks, current = proposal, proposed
    scales.record("swap", accepted)

    # lambda within the slab
    z = rng.standard_normal()
    u = rng.random()
    lam = sticks.hyper.lam
    if lam > 0.0:
        lam_new = float(reflect(lam + scales.lam * z, 0.0, 1.0))
        if lam_new > 0.0:
            proposal = sticks.with_hyper(lam=lam_new)
            proposed = _alloc_log_prob(proposal, dataset, c)
            log_ratio = (
                proposed
                - current
                + stats.beta.logpdf(lam_new, slab_a, slab_b)
                - stats.beta.logpdf(lam, slab_a, slab_b)
            )
            with np.errstate(divide="ignore"):
                accepted = bool(np.log(u) < log_ratio)
            if accepted:
                sticks = proposal
            scales.record("lam", accepted)

    omega_a, omega_b = hyper.omega_lambda_prior
    slab = sticks.hyper.lam > 0.0
    omega = float(rng.beta(omega_a + slab, omega_b + (not slab)))
    return state.copy(sticks=sticks, omega_lambda=omega)


def _bandwidth_ranges(domain):
    return np.array(
        [
            domain.s1_range[1] - domain.s1_range[0],
            domain.s2_range[1] - domain.s2_range[0],
            max(domain.time_span, 1.0),
        ]
    )


def _update_bandwidths(state, dataset, rng, hyper, scales):
    # pylint: disable=too-many-locals
    sticks = state.sticks
    c = state.c
    current = _alloc_log_prob(sticks, dataset, c)
    h = np.array(list(sticks.hyper.h) + [sticks.hyper.h_t], dtype=float)
    nu = state.nu.copy()
    shape = hyper.bandwidth_shape

    for j in range(3):
        z = rng.standard_normal()
        u = rng.random()
        h_new = h.copy()
        h_new[j] = h[j] * np.exp(scales.bandwidth * z)
        proposal = sticks.with_hyper(h=(h_new[0], h_new[1]), h_t=h_new[2])
        proposed = _alloc_log_prob(proposal, dataset, c)
        log_ratio = (
            proposed
            - current
            + stats.invgamma.logpdf(h_new[j], shape, scale=nu[j])
            - stats.invgamma.logpdf(h[j], shape, scale=nu[j])
            + np.log(h_new[j])
            - np.log(h[j])
        )
        with np.errstate(divide="ignore"):
            accepted = bool(np.log(u) < log_ratio)
        if accepted:
            sticks, current, h = proposal, proposed, h_new
        scales.record("bandwidth", accepted)

    # nu | h is a gamma truncated to (0, nu_max * extent]
    upper = hyper.nu_max * _bandwidth_ranges(dataset.domain)
    u = rng.random(3)
    top = stats.gamma.cdf(upper, shape + 1.0, scale=h)
    nu = stats.gamma.ppf(u * top, shape + 1.0, scale=h)
    nu = np.where(np.isfinite(nu) & (nu > 0), nu, np.minimum(h, upper))
    return state.copy(sticks=sticks, nu=nu)


# update_kernel_hyper():
#
# Metropolis-Hastings on the kernel's shared parameters.
#
# For the Gneiting and constant kernels: gamma by a reflected random
# walk under its uniform prior; lambda by a swap between the spike at
# zero and a slab draw, accepted with the likelihood ratio times the
# prior odds omega / (1 - omega), followed by a random walk inside the
# slab; then omega from its beta full conditional. For the separable
# kernel: log-scale random walks on the bandwidths under inverse-gamma
# priors with scales nu, and nu from its truncated gamma conditional.
#
def update_kernel_hyper(state, dataset, rng, *, hyper=None, scales=None):
    hyper = hyper or HyperPriors()
    scales = scales or ProposalScales()
    if state.sticks.kind is KernelKind.SEPARABLE:
        return _update_bandwidths(state, dataset, rng, hyper, scales)
    return _update_gamma_lambda(state, dataset, rng, hyper, scales)


def atom_mean_full_conditional(sums, counts, variance, mu0, tau2):
    """Normal full conditional (mean, variance) of component means."""
    precision = counts / variance + 1.0 / tau2
    mean = (sums / variance + mu0 / tau2) / precision
    return mean, 1.0 / precision


def atom_variance_full_conditional(eta_sums, counts, shape, rate):
    """Inverse-gamma full conditional (shape, rate) of component variances."""
    return shape + counts / 2.0, rate + eta_sums / 2.0


def noise_full_conditional(residuals, shape, rate):
    """Inverse-gamma full conditional (shape, rate) of the noise variance."""
    residuals = np.asarray(residuals, dtype=float)
    return (
        shape + residuals.size / 2.0,
        rate + float(np.dot(residuals, residuals)) / 2.0,
    )


# regression_full_conditional():
#
# Normal full conditional of beta given partial residuals r, under the
# prior N(0, prior_var I).
#
# Returns:
#    (ndarray, ndarray): Mean (p,) and covariance (p, p)
#
def regression_full_conditional(X, r, sigma2_eps, prior_var):
    X = np.asarray(X, dtype=float)
    precision = X.T @ X / sigma2_eps + np.eye(X.shape[1]) / prior_var
    chol = jittered_cholesky(precision)
    cov = cho_solve((chol, True), np.eye(X.shape[1]))
    mean = cho_solve((chol, True), X.T @ np.asarray(r) / sigma2_eps)
    return mean, cov


# update_atoms():
#
# Conjugate updates of the component parameters: mu_k from its normal
# full conditional (eta marginalized), then the latent deviations eta_i,
# then sigma2_k from its inverse-gamma full conditional. Empty
# components are refreshed from the prior.
#
def update_atoms(state, dataset, rng, *, hyper=None):
    hyper = hyper or HyperPriors()
    M = state.M
    c = state.c
    r = _residuals(state, dataset)
    counts = np.bincount(c, minlength=M)
    sums = np.bincount(c, weights=r, minlength=M)

    mean, var = atom_mean_full_conditional(
        sums,
        counts,
        state.sigma2 + state.sigma2_eps,
        hyper.base_mean,
        hyper.base_variance,
    )
    mu = rng.normal(mean, np.sqrt(var))

    e = r - mu[c]
    s2 = state.sigma2[c]
    eta_var = 1.0 / (1.0 / s2 + 1.0 / state.sigma2_eps)
    noise = rng.standard_normal(len(e))
    eta = eta_var * e / state.sigma2_eps + np.sqrt(eta_var) * noise

    shape, rate = atom_variance_full_conditional(
        np.bincount(c, weights=eta ** 2, minlength=M),
        counts,
        hyper.atom_var_shape,
        hyper.atom_var_rate,
    )
    sigma2 = stats.invgamma.rvs(shape, scale=rate, random_state=rng)
    return state.copy(mu=mu, eta=eta, sigma2=np.atleast_1d(sigma2))


# draw_noise_regression():
#
# sigma2_eps from its inverse-gamma full conditional, then beta (when
# there are covariates) from its normal full conditional.
#
# Args:
#    fitted (ndarray): (n,) fitted values excluding the regression term
#    dataset (Dataset): The training data
#    beta (ndarray|None): Current regression coefficients
#
# Returns:
#    (float, ndarray|None): The new noise variance and coefficients
#
def draw_noise_regression(fitted, dataset, beta, rng, hyper):
    partial = dataset.y - fitted
    X = dataset.covariates
    e = partial if X is None or beta is None else partial - X @ beta
    shape, rate = noise_full_conditional(
        e, hyper.noise_shape, hyper.noise_rate
    )
    sigma2_eps = float(stats.invgamma.rvs(shape, scale=rate, random_state=rng))

    if X is not None and beta is not None:
        mean, cov = regression_full_conditional(
            X, partial, sigma2_eps, hyper.beta_variance
        )
        chol = jittered_cholesky(cov)
        beta = mean + chol @ rng.standard_normal(len(mean))
    return sigma2_eps, beta


def update_noise_regression(state, dataset, rng, *, hyper=None):
    """Redraw the noise variance given eta, then the regression."""
    sigma2_eps, beta = draw_noise_regression(
        state.mu[state.c] + state.eta,
        dataset,
        state.beta,
        rng,
        hyper or HyperPriors(),
    )
    return state.copy(sigma2_eps=sigma2_eps, beta=beta)


# update_shape_hyper():
#
# Joint random-walk Metropolis-Hastings on the stick shapes (a, b),
# reflected into their prior intervals, targeting prod_k Beta(V_k; a, b).
#
def update_shape_hyper(state, rng, *, hyper=None, scales=None):
    hyper = hyper or HyperPriors()
    scales = scales or ProposalScales()
    sticks = state.sticks
    a, b = sticks.a, sticks.b
    z = rng.standard_normal(2)
    u = rng.random()
    a_new = float(reflect(a + scales.shape * z[0], *hyper.a_range))
    b_new = float(reflect(b + scales.shape * z[1], *hyper.b_range))
    if a_new <= 0 or b_new <= 0:
        scales.record("shape", False)
        return state
    V = sticks.V
    log_ratio = float(
        stats.beta.logpdf(V, a_new, b_new).sum()
        - stats.beta.logpdf(V, a, b).sum()
    )
    with np.errstate(divide="ignore"):
        accepted = bool(np.log(u) < log_ratio)
    scales.record("shape", accepted)
    if not accepted:
        return state
    return state.copy(sticks=sticks.copy(a=a_new, b=b_new))


# ChainTrace
#
# Kept iterations of one chain. Per-iteration arrays are indexed by kept
# record; component arrays have M columns. Varying-atoms traces replace
# mu and sigma2 by the occupied components' fields at the training
# points.
#
@dataclass(eq=False)
class ChainTrace:
    # pylint: disable=too-many-instance-attributes

    kind: KernelKind
    truncation: int
    domain: object
    n_covariates: int
    config: McmcConfig
    hyper: HyperPriors
    iterations: np.ndarray
    V: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    sigma2_eps: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    omega_lambda: np.ndarray
    a: np.ndarray
    b: np.ndarray
    n_occupied: np.ndarray
    loglik: np.ndarray
    mu: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    h_t: Optional[np.ndarray] = None
    field_coords: Optional[np.ndarray] = None
    field_times: Optional[np.ndarray] = None
    fields: Optional[list] = None
    acceptance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterations)

    @property
    def varying_atoms(self):
        return self.fields is not None

    # sticks_at():
    #
    # Rebuild the stick state of kept record i.
    #
    def sticks_at(self, i):
        hyper = KernelHyper(
            gamma=float(self.gamma[i]),
            lam=float(self.lam[i]),
            h=None if self.h is None else tuple(self.h[i]),
            h_t=None if self.h_t is None else float(self.h_t[i]),
        )
        return StickState(
            self.V[i],
            self.psi[i],
            self.zeta[i],
            self.kind,
            float(self.a[i]),
            float(self.b[i]),
            hyper,
        )

    def scalars(self):
        """Every scalar parameter trace, keyed by name."""
        out = {
            "sigma2_eps": self.sigma2_eps,
            "gamma": self.gamma,
            "lambda": self.lam,
            "omega_lambda": self.omega_lambda,
            "a": self.a,
            "b": self.b,
            "n_occupied": self.n_occupied,
            "loglik": self.loglik,
        }
        if self.h is not None:
            out["h1"] = self.h[:, 0]
            out["h2"] = self.h[:, 1]
            out["h_t"] = self.h_t
        if self.beta is not None:
            for j in range(self.beta.shape[1]):
                out["beta[{}]".format(j + 1)] = self.beta[:, j]
        return out


class TraceRecorder:
    def __init__(self, config, M, p, separable, varying_atoms):
        K = config.n_kept
        self.K = K
        self.count = 0
        self.arrays = {
            "iterations": np.zeros(K, dtype=int),
            "V": np.zeros((K, M)),
            "psi": np.zeros((K, M, 2)),
            "zeta": np.zeros((K, M)),
            "sigma2_eps": np.zeros(K),
            "gamma": np.zeros(K),
            "lam": np.zeros(K),
            "omega_lambda": np.zeros(K),
            "a": np.zeros(K),
            "b": np.zeros(K),
            "n_occupied": np.zeros(K, dtype=int),
            "loglik": np.zeros(K),
        }
        if not varying_atoms:
            self.arrays["mu"] = np.zeros((K, M))
            self.arrays["sigma2"] = np.zeros((K, M))
        if p:
            self.arrays["beta"] = np.zeros((K, p))
        if separable:
            self.arrays["h"] = np.zeros((K, 2))
            self.arrays["h_t"] = np.zeros(K)
        self.fields = [] if varying_atoms else None

    def record(self, iteration, state, loglik, field_values=None):
        i = self.count
        arr = self.arrays
        sticks = state.sticks
        arr["iterations"][i] = iteration
        arr["V"][i] = sticks.V
        arr["psi"][i] = sticks.psi
        arr["zeta"][i] = sticks.zeta
        arr["sigma2_eps"][i] = state.sigma2_eps
        arr["gamma"][i] = sticks.hyper.gamma
        arr["lam"][i] = sticks.hyper.lam
        arr["omega_lambda"][i] = state.omega_lambda
        arr["a"][i] = sticks.a
        arr["b"][i] = sticks.b
        arr["n_occupied"][i] = state.n_occupied
        arr["loglik"][i] = loglik
        if "mu" in arr:
            arr["mu"][i] = state.mu
            arr["sigma2"][i] = state.sigma2
        if "beta" in arr:
            arr["beta"][i] = state.beta
        if "h" in arr:
            arr["h"][i] = sticks.hyper.h
            arr["h_t"][i] = sticks.hyper.h_t
        if self.fields is not None:
            labels = np.unique(state.c)
            self.fields.append((labels, field_values[labels].copy()))
        self.count += 1

    def build(self, dataset, config, hyper, kind, scales, **extra):
        return ChainTrace(
            kind=kind,
            truncation=config.truncation,
            domain=dataset.domain,
            n_covariates=dataset.p,
            config=config,
            hyper=hyper,
            fields=self.fields,
            acceptance=scales.acceptance(),
            **self.arrays,
            **extra
        )


def _initial_hyper(config, domain):
    if config.kernel is KernelKind.SEPARABLE:
        ranges = _bandwidth_ranges(domain) * config.bandwidth_init
        return KernelHyper(
            gamma=config.gamma_init,
            lam=config.lambda_init,
            h=(float(ranges[0]), float(ranges[1])),
            h_t=float(ranges[2]),
        )
    return KernelHyper(gamma=config.gamma_init, lam=config.lambda_init)


# quantile_groups():
#
# Initial allocation: bin the responses by quantiles into at most
# min(10, M) groups.
#
def quantile_groups(y, M):
    groups = min(10, M)
    edges = np.quantile(y, np.linspace(0.0, 1.0, groups + 1)[1:-1])
    return np.searchsorted(edges, y, side="right").astype(int)


# initial_state():
#
# Starting point of a chain: quantile-binned allocations, sticks at one
# half, uniform knots, gamma, lambda, a and b from the configuration,
# noise variance half the response variance, component means at the
# group means.
#
def initial_state(dataset, config, hyper, rng):
    M = config.truncation
    y = dataset.y
    c = quantile_groups(y, M)
    var_y = float(np.var(y)) if len(y) > 1 else 0.0
    if not var_y > 0:
        var_y = 1.0
    domain = dataset.domain
    lower, upper = domain.lower, domain.upper
    psi = lower + (upper - lower) * rng.random((M, 2))
    zeta = 1.0 + domain.time_span * rng.random(M)
    kernel_hyper = _initial_hyper(config, domain)
    sticks = StickState(
        np.full(M, 0.5),
        psi,
        zeta,
        config.kernel,
        config.a_init,
        config.b_init,
        kernel_hyper,
    )
    counts = np.bincount(c, minlength=M)
    sums = np.bincount(c, weights=y, minlength=M)
    mu = np.where(counts > 0, sums / np.maximum(counts, 1), hyper.base_mean)
    nu = None
    if config.kernel is KernelKind.SEPARABLE:
        nu = np.minimum(
            np.array(list(kernel_hyper.h) + [kernel_hyper.h_t]),
            hyper.nu_max * _bandwidth_ranges(domain),
        )
    return LatentState(
        c=c,
        sticks=sticks,
        mu=mu,
        sigma2=np.full(M, var_y / 2.0),
        sigma2_eps=var_y / 2.0,
        eta=np.zeros(len(y)),
        beta=None if dataset.p == 0 else np.zeros(dataset.p),
        omega_lambda=0.5,
        nu=nu,
    )


def _log_progress(iteration, config, state, loglik):
    LOGGER.info(
        "Iteration %d/%d: %d occupied components, log-likelihood %.6g, "
        "gamma %.4g, lambda %.4g",
        iteration,
        config.n_iter,
        state.n_occupied,
        loglik,
        state.gamma,
        state.lam,
    )


# run_sweeps():
#
# The iteration loop shared by both samplers. Each step is a
# (name, callable) pair taking and returning the state; errors raised
# inside a step are re-raised as ChainFailure naming the iteration and
# step. Step sizes adapt during burn-in only.
#
def run_sweeps(state, steps, config, scales, on_keep, loglik_fn):
    kept = 0
    for it in range(config.n_iter):
        for name, step in steps:
            try:
                state = step(state)
            except StsbError as e:
                raise ChainFailure(it + 1, name, e) from e

        if (
            config.adapt
            and it < config.n_burn
            and (it + 1) % config.adapt_every == 0
        ):
            scales.adapt(config.target_accept)

        keep = it >= config.n_burn and (it - config.n_burn) % config.thin == 0
        log_now = (it + 1) % config.log_every == 0
        if keep or log_now:
            loglik = loglik_fn(state)
            if keep:
                on_keep(it + 1, state, loglik)
                kept += 1
            if log_now:
                _log_progress(it + 1, config, state, loglik)
    return state, kept


# run_chain():
#
# Run one chain of the single-atom sampler on the observed part of a
# validated dataset.
#
# Args:
#    dataset (Dataset): A validated dataset
#    config (McmcConfig): Chain settings
#    hyper (HyperPriors): Prior settings
#    rng (numpy.random.Generator): The random source, from config.seed
#        when omitted
#
# Raises:
#    (ChainFailure): An update failed; the cause is chained
#
# Returns:
#    (ChainTrace): The kept iterations
#
def run_chain(dataset, config=None, hyper=None, rng=None):
    config = config or McmcConfig()
    hyper = hyper or HyperPriors()
    rng = make_rng(config.seed) if rng is None else rng
    data = dataset.training()
    scales = ProposalScales.from_config(config, hyper)
    state = initial_state(data, config, hyper, rng)

    steps = [
        ("update_allocations", lambda s: update_allocations(s, data, rng)),
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
        ("update_atoms", lambda s: update_atoms(s, data, rng, hyper=hyper)),
        (
            "update_noise_regression",
            lambda s: update_noise_regression(s, data, rng, hyper=hyper),
        ),
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
        False,
    )
    with timed_activity(
        "run_chain",
        detail="{} observations, {} kernel, M={}".format(
            data.n, config.kernel, config.truncation
        ),
        logger=LOGGER,
    ):
        run_sweeps(
            state,
            steps,
            config,
            scales,
            recorder.record,
            lambda s: log_likelihood(s, data),
        )
    return recorder.build(data, config, hyper, config.kernel, scales)


# run_chains():
#
# Run independent chains on a thread pool of at most config.threads
# workers. Chain j uses the j-th substream of the seed, so results do
# not depend on the number of workers.
#
# Returns:
#    (list): ChainTrace per chain, in chain order
#
def run_chains(dataset, config, hyper, n_chains, seed=None, chain_fn=None):
    chain_fn = chain_fn or run_chain
    seed = config.seed if seed is None else seed
    rngs = substreams(seed, n_chains)
    workers = max(1, min(config.threads, n_chains))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(chain_fn, dataset, config, hyper, rng)
            for rng in rngs
        ]
        return [future.result() for future in futures]


# pool_traces():
#
# Concatenate the kept iterations of chains fitted with the same
# configuration into one trace.
#
# Raises:
#    (EmptyTrace): No traces were given
#
def pool_traces(traces):
    traces = list(traces)
    if not traces:
        raise EmptyTrace()
    if len(traces) == 1:
        return traces[0]
    first = traces[0]
    arrays = {}
    for name in (
        "iterations",
        "V",
        "psi",
        "zeta",
        "sigma2_eps",
        "gamma",
        "lam",
        "omega_lambda",
        "a",
        "b",
        "n_occupied",
        "loglik",
        "mu",
        "sigma2",
        "beta",
        "h",
        "h_t",
    ):
        parts = [getattr(t, name) for t in traces]
        arrays[name] = None if parts[0] is None else np.concatenate(parts)
    fields = None
    if first.fields is not None:
        fields = [f for t in traces for f in t.fields]
    return replace(first, fields=fields, acceptance={}, **arrays)


# pr_lambda_zero():
#
# Posterior probability that lambda is exactly zero, with the posterior
# mean of lambda over the iterations where it is not.
#
# Raises:
#    (NoLambdaInTrace): The fit used the separable kernel
#    (EmptyTrace): The trace has no kept iterations
#
# Returns:
#    (float, float): Pr(lambda = 0 | y) and E[lambda | y, lambda > 0],
#    the latter NaN when every kept lambda is zero
#
def pr_lambda_zero(trace):
    if trace.kind is KernelKind.SEPARABLE:
        raise NoLambdaInTrace(trace.kind)
    lam = np.asarray(trace.lam, dtype=float)
    if lam.size == 0:
        raise EmptyTrace()
    zero = lam == 0.0
    mean_nonzero = float(lam[~zero].mean()) if np.any(~zero) else float("nan")
    return float(zero.mean()), mean_nonzero


def summarise_trace(trace):
    """Posterior mean, sd and 5/50/95% quantiles of every scalar trace."""
    if len(trace) == 0:
        raise EmptyTrace()
    summary = {}
    for name, values in trace.scalars().items():
        values = np.asarray(values, dtype=float)
        q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95])
        summary[name] = {
            "mean": float(values.mean()),
            "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
            "q05": float(q05),
            "q50": float(q50),
            "q95": float(q95),
        }
    return summary


# resimulate_responses():
#
# Draw new responses from the likelihood given the full state, latent
# deviations included. Used by joint-distribution checks of the sampler.
#
def resimulate_responses(state, dataset, rng):
    mean = state.mu[state.c] + state.eta
    if dataset.covariates is not None and state.beta is not None:
        mean = mean + dataset.covariates @ state.beta
    y = mean + np.sqrt(state.sigma2_eps) * rng.standard_normal(len(mean))
    return _with_responses(dataset, y)


def _with_responses(dataset, y):
    observations = tuple(
        replace(obs, y=float(v), missing=False)
        for obs, v in zip(dataset.observations, y)
    )
    return replace(dataset, observations=observations)


# simulate_joint():
#
# Forward draw of the state and the responses from the prior with the
# stick shapes and kernel parameters fixed at their configured initial
# values. Allocations landing in the truncation remainder are redrawn,
# matching the sampler's support c_i in 1..M.
#
# Returns:
#    (LatentState, Dataset): The state and the dataset with new responses
#
def simulate_joint(dataset, config, hyper, rng):
    # pylint: disable=too-many-locals
    M = config.truncation
    n = dataset.n
    domain = dataset.domain
    kernel_hyper = _initial_hyper(config, domain)
    lower, upper = domain.lower, domain.upper
    V = clip_sticks(rng.beta(config.a_init, config.b_init, size=M))
    psi = lower + (upper - lower) * rng.random((M, 2))
    zeta = 1.0 + domain.time_span * rng.random(M)
    sticks = StickState(
        V, psi, zeta, config.kernel, config.a_init, config.b_init, kernel_hyper
    )
    mu = rng.normal(hyper.base_mean, np.sqrt(hyper.base_variance), size=M)
    sigma2 = stats.invgamma.rvs(
        hyper.atom_var_shape,
        scale=hyper.atom_var_rate,
        size=M,
        random_state=rng,
    )
    sigma2_eps = float(
        stats.invgamma.rvs(
            hyper.noise_shape, scale=hyper.noise_rate, random_state=rng
        )
    )
    beta = None
    if dataset.p:
        beta = rng.normal(0.0, np.sqrt(hyper.beta_variance), size=dataset.p)

    U = sticks.local_sticks(dataset.coords, dataset.times)
    left = np.cumprod(1.0 - U, axis=1)
    pi = U * np.concatenate([np.ones((n, 1)), left[:, :-1]], axis=1)
    cum = np.cumsum(pi, axis=1)
    c = np.full(n, M)
    while np.any(c >= M):
        todo = np.flatnonzero(c >= M)
        u = rng.random(len(todo))
        c[todo] = (cum[todo] <= u[:, None]).sum(axis=1)

    eta = np.sqrt(sigma2[c]) * rng.standard_normal(n)
    state = LatentState(
        c=c,
        sticks=sticks,
        mu=mu,
        sigma2=sigma2,
        sigma2_eps=sigma2_eps,
        eta=eta,
        beta=beta,
        omega_lambda=0.5,
    )
    return state, resimulate_responses(state, dataset, rng)

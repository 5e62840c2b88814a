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
stickbreak - space-time varying stick-breaking weights
======================================================

The local stick fraction of component ``k`` at ``(s, t)`` is the
global fraction ``V_k`` scaled by the component's kernel,
``V_k(s, t) = w_k(s, t) V_k``, and the weights follow the usual
stick-breaking recursion::

   pi_1(s, t) = V_1(s, t)
   pi_k(s, t) = V_k(s, t) prod_{j < k} (1 - V_j(s, t))

Truncating at ``M`` components leaves the remainder
``prod_{j <= M} (1 - V_j(s, t))`` unassigned; every calculator here
reports it instead of renormalizing it away.

This module also computes the co-clustering probability of two
space-time points, which is the covariance of the process up to the atom
variance, both conditionally on the sticks and knots and marginally.
"""

from collections import namedtuple
from dataclasses import dataclass, field, replace
import logging

import numpy as np
from numpy.polynomial.legendre import leggauss

from ._exceptions import DegenerateDenominator, GOutOfRange
from .core import SpaceTimeDomain
from .kernels import (
    KernelHyper,
    KernelKind,
    KernelParams,
    evaluate,
    kernel_matrix,
)

LOGGER = logging.getLogger(__name__)

# Sticks are kept strictly inside (0, 1)
_STICK_EPS = 1e-12

Coclustering = namedtuple("Coclustering", ["value", "tail_bound"])
GCheck = namedtuple(
    "GCheck", ["closed_form", "estimate", "std_error", "agree"]
)
WeightMap = namedtuple("WeightMap", ["pi", "remainder", "components"])


def clip_sticks(V):
    return np.clip(V, _STICK_EPS, 1.0 - _STICK_EPS)


@dataclass(frozen=True)
class PriorConfig:
    """Everything needed to draw the weights and atoms from the prior."""

    domain: SpaceTimeDomain = SpaceTimeDomain.unit(10)
    truncation: int = 100
    a: float = 1.0
    b: float = 1.0
    kind: KernelKind = KernelKind.GNEITING
    kernel: KernelHyper = KernelHyper()
    base_mean: float = 0.0
    base_variance: float = 100.0

    def __post_init__(self):
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("beta shapes a and b must be positive")
        if self.base_variance <= 0:
            raise ValueError("base_variance must be positive")


@dataclass(eq=False)
class StickState:
    V: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    kind: KernelKind
    a: float = 1.0
    b: float = 1.0
    hyper: KernelHyper = field(default_factory=KernelHyper)

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float).reshape(-1, 2)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if not len(self.V) == len(self.psi) == len(self.zeta):
            raise ValueError("V, psi and zeta must have the same length")
        if np.any(self.V <= 0) or np.any(self.V >= 1):
            raise ValueError("sticks must lie strictly inside (0, 1)")

    @property
    def M(self):
        return len(self.V)

    @property
    def knots(self):
        return tuple(self.knot(k) for k in range(self.M))

    def knot(self, k):
        return KernelParams(
            psi=tuple(self.psi[k]),
            zeta=float(self.zeta[k]),
            h=self.hyper.h,
            h_t=self.hyper.h_t,
            gamma=self.hyper.gamma,
            lam=self.hyper.lam,
        )

    def copy(self, **changes):
        state = StickState(
            self.V.copy(),
            self.psi.copy(),
            self.zeta.copy(),
            self.kind,
            self.a,
            self.b,
            self.hyper,
        )
        for key, value in changes.items():
            setattr(state, key, value)
        return state

    def with_hyper(self, **changes):
        return self.copy(hyper=replace(self.hyper, **changes))

    def kernel(self, coords, times):
        return kernel_matrix(
            self.kind, coords, times, self.psi, self.zeta, self.hyper
        )

    # local_sticks():
    #
    # The space-time stick fractions V_k(s, t) at n points.
    #
    # Returns:
    #    (ndarray): (n, M) fractions in (0, 1)
    #
    def local_sticks(self, coords, times):
        return self.kernel(coords, times) * self.V[None, :]


@dataclass(eq=False)
class PriorDraw:
    sticks: StickState
    atoms: np.ndarray


# break_sticks():
#
# Stick-breaking weights from local stick fractions.
#
# Args:
#    U (ndarray): (..., M) fractions in [0, 1]
#
# Returns:
#    (ndarray, ndarray): (..., M) weights and (...) remainders
#
def break_sticks(U):
    U = np.asarray(U, dtype=float)
    left = np.cumprod(1.0 - U, axis=-1)
    before = np.concatenate([np.ones_like(left[..., :1]), left[..., :-1]], -1)
    return U * before, left[..., -1]


# log_break_sticks():
#
# Log weights, accurate when many sticks are close to one.
#
# Returns:
#    (ndarray, ndarray): (..., M) log weights and (...) log remainders
#
def log_break_sticks(U):
    U = np.asarray(U, dtype=float)
    with np.errstate(divide="ignore"):
        log_left = np.cumsum(np.log1p(-U), axis=-1)
        log_before = np.concatenate(
            [np.zeros_like(log_left[..., :1]), log_left[..., :-1]], -1
        )
        return np.log(U) + log_before, log_left[..., -1]


def stick_weights(state, coords, times):
    """Weights (n, M) and remainders (n,) of a stick state at n points."""
    return break_sticks(state.local_sticks(coords, times))


# compute_weights():
#
# Args:
#    state (StickState): The sticks and knots
#    p (SpaceTimePoint): Where to evaluate
#
# Returns:
#    (ndarray, float): The M weights and the truncation remainder
#
def compute_weights(state, p):
    pi, remainder = stick_weights(state, [[p.s1, p.s2]], [p.t])
    return pi[0], float(remainder[0])


def _uniform_knots(domain, size, rng):
    lower, upper = domain.lower, domain.upper
    psi = lower + (upper - lower) * rng.random(tuple(size) + (2,))
    zeta = 1.0 + domain.time_span * rng.random(tuple(size))
    return psi, zeta


# sample_prior():
#
# Draw the sticks, knots and atoms from the prior, in that order.
#
# Args:
#    domain (SpaceTimeDomain): Support of the knots
#    M (int): Number of components
#    a, b (float): Beta shapes of the sticks
#    kind (KernelKind): The kernel
#    kernel_hyper (KernelHyper): Shared kernel parameters
#    base (tuple): Mean and variance of the normal base distribution
#    rng (numpy.random.Generator): The random source
#
# Returns:
#    (PriorDraw): The draw
#
def sample_prior(domain, M, a, b, kind, kernel_hyper, base, rng):
    # pylint: disable=too-many-arguments
    if M < 1:
        raise ValueError("M must be >= 1")
    base_mean, base_variance = base
    V = clip_sticks(rng.beta(a, b, size=M))
    psi, zeta = _uniform_knots(domain, (M,), rng)
    atoms = rng.normal(base_mean, np.sqrt(base_variance), size=M)
    kind = KernelKind.from_name(kind)
    sticks = StickState(V, psi, zeta, kind, a, b, kernel_hyper)
    return PriorDraw(sticks, atoms)


def sample_prior_config(config, rng):
    """:func:`sample_prior` with its arguments taken from a PriorConfig."""
    return sample_prior(
        config.domain,
        config.truncation,
        config.a,
        config.b,
        config.kind,
        config.kernel,
        (config.base_mean, config.base_variance),
        rng,
    )


# cond_coclustering():
#
# Probability that two points share a component given the sticks and
# knots, summed over the M represented components. Mass beyond the
# truncation can add at most remainder(p) * remainder(q); that bound is
# returned and logged when it exceeds tol.
#
# Returns:
#    (Coclustering): The probability and the tail bound
#
def cond_coclustering(state, p, q, tol=1e-6):
    pi, remainder = stick_weights(
        state, [[p.s1, p.s2], [q.s1, q.s2]], [p.t, q.t]
    )
    value = float(np.dot(pi[0], pi[1]))
    tail = float(remainder[0] * remainder[1])
    if tail > tol:
        LOGGER.warning(
            "Co-clustering truncation tail bound %.3g exceeds %.3g", tail, tol
        )
    return Coclustering(value, tail)


# _RunningMoments
#
# Streaming mean and variance, merging batches with the pairwise update
# so that sharded Monte Carlo loops can be combined in any grouping.
#
class _RunningMoments:
    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values):
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return
        batch_mean = float(values.mean())
        batch_m2 = float(((values - batch_mean) ** 2).sum())
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean += delta * n / total
        self.m2 += batch_m2 + delta ** 2 * self.count * n / total
        self.count = total

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self):
        if not self.count:
            return 0.0
        return float(np.sqrt(self.variance / self.count))


def _point_weights(config, p, V, psi, zeta):
    w = evaluate(
        config.kind,
        p.s1 - psi[..., 0],
        p.s2 - psi[..., 1],
        p.t - zeta,
        h=config.kernel.h,
        h_t=config.kernel.h_t,
        gamma=config.kernel.gamma,
        lam=config.kernel.lam,
    )
    return break_sticks(V * w)[0]


# marginal_coclustering_mc():
#
# Monte Carlo estimate of the co-clustering probability of two points,
# averaging the conditional probability over prior draws of the sticks
# and knots.
#
# Args:
#    config (PriorConfig): The prior
#    p, q (SpaceTimePoint): The two points
#    n_mc (int): Number of prior draws, at least 1000
#    rng (numpy.random.Generator): The random source
#    batch_size (int): Draws per vectorized batch
#
# Returns:
#    (float, float): The estimate and its standard error
#
def marginal_coclustering_mc(config, p, q, n_mc, rng, batch_size=4096):
    if n_mc < 1000:
        raise ValueError("n_mc must be >= 1000, got {}".format(n_mc))
    moments = _RunningMoments()
    M = config.truncation
    done = 0
    while done < n_mc:
        size = min(batch_size, n_mc - done)
        V = clip_sticks(rng.beta(config.a, config.b, size=(size, M)))
        psi, zeta = _uniform_knots(config.domain, (size, M), rng)
        pi_p = _point_weights(config, p, V, psi, zeta)
        pi_q = _point_weights(config, q, V, psi, zeta)
        moments.update(np.einsum("ij,ij->i", pi_p, pi_q))
        done += size
    return moments.mean, moments.std_error


# coclustering_closed_form():
#
# Marginal co-clustering probability in terms of the kernel ratio g.
# At g = 1 it reduces to the exchangeable value (a + 1) / (a + 2b + 1).
#
# Raises:
#    (GOutOfRange): g is outside [0, 1]
#
def coclustering_closed_form(a, b, g_value):
    if not 0.0 <= g_value <= 1.0:
        raise GOutOfRange(g_value)
    return g_value / (2.0 * (1.0 + b / (a + 1.0)) - g_value)


def marginal_covariance(a, b, g_value, atom_var):
    """Process covariance: atom variance times co-clustering probability."""
    return atom_var * coclustering_closed_form(a, b, g_value)


def g_gneiting(s, s_prime, t, t_prime, gamma, lam):
    """Closed-form kernel ratio g for the Gneiting kernel.

    Times enter through ``|t|`` and ``|t'|`` as written, so the ratio is
    not a function of the time lag alone.
    """
    u = (gamma * abs(t) + 1.0) ** (lam / 2.0)
    u_prime_base = gamma * abs(t_prime) + 1.0
    u_prime = u_prime_base ** (lam / 2.0)
    d2 = (s[0] - s_prime[0]) ** 2 + (s[1] - s_prime[1]) ** 2
    return float(
        np.sqrt(u_prime) / u_prime_base * np.exp(-d2 / (u + u_prime))
    )


def _hyper_kwargs(kernel_hyper):
    return dict(
        h=kernel_hyper.h,
        h_t=kernel_hyper.h_t,
        gamma=kernel_hyper.gamma,
        lam=kernel_hyper.lam,
    )


# g_mc():
#
# Monte Carlo estimate of g = E[w(s, t) w(s', t')] / E[w(s, t)] over
# knots uniform on the domain. The standard error is the delta-method
# error of the ratio.
#
# Raises:
#    (DegenerateDenominator): E[w(s, t)] is estimated below 1e-12
#
# Returns:
#    (float, float): The estimate and its standard error
#
def g_mc(kind, kernel_hyper, domain, s, s_prime, t, t_prime, n_mc, rng):
    # pylint: disable=too-many-arguments
    if n_mc < 1000:
        raise ValueError("n_mc must be >= 1000, got {}".format(n_mc))
    kind = KernelKind.from_name(kind)
    psi, zeta = _uniform_knots(domain, (n_mc,), rng)
    kw = _hyper_kwargs(kernel_hyper)
    w = evaluate(kind, s[0] - psi[:, 0], s[1] - psi[:, 1], t - zeta, **kw)
    w_prime = evaluate(
        kind,
        s_prime[0] - psi[:, 0],
        s_prime[1] - psi[:, 1],
        t_prime - zeta,
        **kw
    )
    num = w * w_prime
    den_mean = float(w.mean())
    if den_mean < 1e-12:
        raise DegenerateDenominator(den_mean)
    ratio = float(num.mean()) / den_mean
    cov = np.cov(np.vstack([num, w]))
    var = (cov[0, 0] - 2 * ratio * cov[0, 1] + ratio ** 2 * cov[1, 1]) / (
        n_mc * den_mean ** 2
    )
    return ratio, float(np.sqrt(max(var, 0.0)))


# g_quadrature():
#
# Deterministic evaluation of g on a Gauss-Legendre tensor grid over the
# knot domain. When the kernel factorizes in space and time the tensor
# rule factorizes with it.
#
# Args:
#    s, t: The reference location and time
#    s_prime (array-like): (2,) or (K, 2) other locations
#    t_prime (array-like): scalar or (K,) other times
#    n_nodes (int): Nodes per axis
#
# Returns:
#    (float|ndarray): g at each other point
#
def g_quadrature(
    kind, kernel_hyper, domain, s, s_prime, t, t_prime, n_nodes=32
):
    # pylint: disable=too-many-arguments,too-many-locals
    kind = KernelKind.from_name(kind)
    scalar = np.ndim(t_prime) == 0
    s_prime = np.asarray(s_prime, dtype=float).reshape(-1, 2)
    t_prime = np.asarray(t_prime, dtype=float).reshape(-1)

    nodes, weights = leggauss(n_nodes)
    axes, axis_weights = [], []
    for lo, hi in (domain.s1_range, domain.s2_range):
        axes.append(lo + (hi - lo) * (nodes + 1.0) / 2.0)
        axis_weights.append(weights / 2.0)
    if domain.t_max > 1:
        axes.append(1.0 + domain.time_span * (nodes + 1.0) / 2.0)
        axis_weights.append(weights / 2.0)
    else:
        axes.append(np.array([1.0]))
        axis_weights.append(np.array([1.0]))

    p1, p2, z = (a.ravel() for a in np.meshgrid(*axes, indexing="ij"))
    q = np.einsum("i,j,k->ijk", *axis_weights).ravel()

    kw = _hyper_kwargs(kernel_hyper)
    w = evaluate(kind, s[0] - p1, s[1] - p2, t - z, **kw)
    w_prime = evaluate(
        kind,
        s_prime[:, None, 0] - p1[None, :],
        s_prime[:, None, 1] - p2[None, :],
        t_prime[:, None] - z[None, :],
        **kw
    )
    den = float(np.dot(w, q))
    if den < 1e-12:
        raise DegenerateDenominator(den)
    g = (w_prime * w[None, :]) @ q / den
    return float(g[0]) if scalar else g


# check_g_gneiting():
#
# Compare the closed-form Gneiting ratio with its Monte Carlo estimate.
# A disagreement beyond n_se standard errors is logged as a warning;
# the Monte Carlo value is the reference.
#
# Returns:
#    (GCheck): Both values, the standard error and whether they agree
#
def check_g_gneiting(
    domain, s, s_prime, t, t_prime, gamma, lam, n_mc, rng, n_se=2.0
):
    # pylint: disable=too-many-arguments
    closed = g_gneiting(s, s_prime, t, t_prime, gamma, lam)
    estimate, se = g_mc(
        KernelKind.GNEITING,
        KernelHyper(gamma=gamma, lam=lam),
        domain,
        s,
        s_prime,
        t,
        t_prime,
        n_mc,
        rng,
    )
    agree = abs(closed - estimate) <= n_se * se
    if not agree:
        LOGGER.warning(
            "Closed-form g=%.6g disagrees with Monte Carlo g=%.6g "
            "(se %.3g) at s=%s s'=%s t=%s t'=%s gamma=%s lambda=%s",
            closed,
            estimate,
            se,
            tuple(s),
            tuple(s_prime),
            t,
            t_prime,
            gamma,
            lam,
        )
    return GCheck(closed, estimate, se, agree)


def _allocate(pi, u):
    # Index M marks the truncation remainder
    cum = np.cumsum(pi, axis=-1)
    return np.minimum(
        (cum < u[:, None]).sum(axis=-1), pi.shape[-1]
    )


def _random_points(domain, uniforms):
    lower, upper = domain.lower, domain.upper
    coords = lower + (upper - lower) * uniforms[:, :2]
    times = 1 + np.minimum(
        (uniforms[:, 2] * domain.t_max).astype(int), domain.t_max - 1
    )
    return coords, times


# expected_cluster_count():
#
# Mean number of occupied components when n_points uniform space-time
# points are allocated under prior draws of the weights. Points falling
# in the truncation remainder each count as a new component.
#
# Each replication draws its own generator from rng before anything else
# and uses a nested design, so for a fixed rng seed the per-replication
# counts are nondecreasing in n_points.
#
# Returns:
#    (float): The mean count, or (float, ndarray) with return_counts
#
def expected_cluster_count(config, n_points, n_reps, rng, return_counts=False):
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    seeds = rng.integers(0, 2 ** 63 - 1, size=n_reps)
    counts = np.empty(n_reps)
    for rep, seed in enumerate(seeds):
        child = np.random.default_rng(int(seed))
        draw = sample_prior_config(config, child)
        uniforms = child.random((n_points, 4))
        coords, times = _random_points(config.domain, uniforms)
        pi, _ = stick_weights(draw.sticks, coords, times)
        labels = _allocate(pi, uniforms[:, 3])
        inside = labels[labels < config.truncation]
        counts[rep] = len(np.unique(inside)) + np.sum(
            labels == config.truncation
        )
    mean = float(counts.mean())
    if return_counts:
        return mean, counts
    return mean


# weight_map():
#
# Weights of selected components over a grid of points, for contour
# tables.
#
# Args:
#    state (StickState): The sticks and knots
#    coords (ndarray): (n, 2) grid locations
#    times (ndarray): (n,) grid times
#    components (list): 1-based component indices, all by default
#
# Returns:
#    (WeightMap): (n, K) weights, (n,) remainders, the 1-based indices
#
def weight_map(state, coords, times, components=None):
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if coords.shape[0] == 0:
        raise ValueError("weight map grid must be non-empty")
    pi, remainder = stick_weights(state, coords, times)
    if components is None:
        components = list(range(1, state.M + 1))
    index = np.asarray(components, dtype=int) - 1
    if np.any(index < 0) or np.any(index >= state.M):
        raise ValueError(
            "components must lie in 1..{}".format(state.M)
        )
    return WeightMap(pi[:, index], remainder, list(components))


# sample_process():
#
# One realization of the prior process theta(s, t) at n points: draw
# the weights and atoms, then allocate each point. Points falling in the
# truncation remainder receive a fresh atom of their own.
#
# Returns:
#    (ndarray, ndarray): (n,) values and (n,) 1-based labels, 0 marking
#    the remainder
#
def sample_process(config, coords, times, rng):
    draw = sample_prior_config(config, rng)
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    pi, _ = stick_weights(draw.sticks, coords, times)
    labels = _allocate(pi, rng.random(coords.shape[0]))
    fresh = rng.normal(
        config.base_mean, np.sqrt(config.base_variance), size=len(labels)
    )
    in_tail = labels == config.truncation
    values = np.where(
        in_tail, fresh, draw.atoms[np.minimum(labels, config.truncation - 1)]
    )
    return values, np.where(in_tail, 0, labels + 1)

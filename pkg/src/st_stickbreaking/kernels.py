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
kernels - bounded space-time kernels
====================================

A kernel ``w(s, psi, t, zeta)`` maps a location and time, relative to a
component's knot ``(psi, zeta)``, to a weight in ``(0, 1]`` that scales
the component's stick fraction.

Three kinds are available:

``separable``
  Squared exponential in each spatial axis and in time, each with its
  own bandwidth.

``gneiting``
  With ``u = gamma |t - zeta| + 1``, the weight is
  ``exp(-|s - psi|^2 / u^(lambda / 2)) / u``.
  ``lambda`` controls the space-time interaction; at ``lambda = 0`` the
  kernel factorizes into a spatial and a temporal term.

``constant``
  Always 1. The weights reduce to the ordinary stick-breaking weights
  of an exchangeable Dirichlet process.
"""

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._exceptions import InvalidLambda, MissingBandwidth

# Weights below this value are clamped so log weights stay finite
WEIGHT_FLOOR = 1e-300


class KernelKind(enum.Enum):
    SEPARABLE = "separable"
    GNEITING = "gneiting"
    CONSTANT = "constant"

    @classmethod
    def from_name(cls, name):
        if isinstance(name, cls):
            return name
        aliases = {
            "separable": cls.SEPARABLE,
            "separable-exp": cls.SEPARABLE,
            "separableexp": cls.SEPARABLE,
            "gneiting": cls.GNEITING,
            "constant": cls.CONSTANT,
            "dp": cls.CONSTANT,
        }
        try:
            return aliases[str(name).strip().lower()]
        except KeyError:
            raise ValueError(
                "Unknown kernel '{}', expected one of: {}".format(
                    name, ", ".join(k.value for k in cls)
                )
            ) from None

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class KernelHyper:
    """Kernel parameters shared by every component."""

    gamma: float = 1.0
    lam: float = 0.0
    h: Optional[Tuple[float, float]] = None
    h_t: Optional[float] = None


@dataclass(frozen=True)
class KernelParams:
    """The kernel of one component: its knot plus the shared parameters."""

    psi: Tuple[float, float]
    zeta: float
    h: Optional[Tuple[float, float]] = None
    h_t: Optional[float] = None
    gamma: float = 1.0
    lam: float = 0.0


def _check_gneiting(gamma, lam):
    if not 0.0 <= lam <= 1.0:
        raise InvalidLambda(lam)
    if gamma < 0:
        raise ValueError("gamma must be >= 0, got {}".format(gamma))


def _check_separable(h, h_t):
    if h is None:
        raise MissingBandwidth("h")
    if h_t is None:
        raise MissingBandwidth("h_t")
    if np.any(np.asarray(h) <= 0) or np.any(np.asarray(h_t) <= 0):
        raise ValueError("bandwidths must be positive")


# evaluate():
#
# Evaluate a kernel on broadcastable arrays of knot offsets. This is the
# one implementation behind every scalar and matrix entry point.
#
# Args:
#    kind (KernelKind): The kernel
#    d1 (ndarray): Offsets s1 - psi1
#    d2 (ndarray): Offsets s2 - psi2
#    dt (ndarray): Offsets t - zeta
#    h (array-like): Spatial bandwidths, shape (..., 2) (separable only)
#    h_t (array-like): Temporal bandwidth (separable only)
#    gamma (float): Scaling (gneiting only)
#    lam (float): Interaction (gneiting only)
#
# Returns:
#    (ndarray): Weights in [WEIGHT_FLOOR, 1]
#
def evaluate(kind, d1, d2, dt, *, h=None, h_t=None, gamma=1.0, lam=0.0):
    d1, d2, dt = np.asarray(d1), np.asarray(d2), np.asarray(dt)
    if kind is KernelKind.CONSTANT:
        return np.ones(np.broadcast(d1, d2, dt).shape)

    if kind is KernelKind.SEPARABLE:
        _check_separable(h, h_t)
        h = np.asarray(h, dtype=float)
        expo = (
            (d1 / h[..., 0]) ** 2
            + (d2 / h[..., 1]) ** 2
            + (dt / np.asarray(h_t, dtype=float)) ** 2
        )
        w = np.exp(-expo)
    elif kind is KernelKind.GNEITING:
        _check_gneiting(gamma, lam)
        u = gamma * np.abs(dt) + 1.0
        w = np.exp(-(d1 ** 2 + d2 ** 2) / u ** (lam / 2.0)) / u
    else:
        raise ValueError("Unknown kernel kind {!r}".format(kind))

    return np.maximum(w, WEIGHT_FLOOR)


def _offsets(s, t, kp):
    return s[0] - kp.psi[0], s[1] - kp.psi[1], t - kp.zeta


# eval_separable():
#
# Separable squared exponential kernel at one location and time.
#
# Raises:
#    (MissingBandwidth): A bandwidth is not set
#
# Returns:
#    (float): The weight
#
def eval_separable(s, t, kp):
    d1, d2, dt = _offsets(s, t, kp)
    return float(
        evaluate(
            KernelKind.SEPARABLE, d1, d2, dt, h=kp.h, h_t=kp.h_t
        )
    )


# eval_gneiting():
#
# Gneiting-type non-separable kernel at one location and time.
#
# Raises:
#    (InvalidLambda): lambda is outside [0, 1]
#
# Returns:
#    (float): The weight
#
def eval_gneiting(s, t, kp):
    d1, d2, dt = _offsets(s, t, kp)
    return float(
        evaluate(
            KernelKind.GNEITING, d1, d2, dt, gamma=kp.gamma, lam=kp.lam
        )
    )


def eval(kind, s, t, kp):  # pylint: disable=redefined-builtin
    """Evaluate the kernel of the given kind at one location and time."""
    kind = KernelKind.from_name(kind)
    if kind is KernelKind.CONSTANT:
        return 1.0
    if kind is KernelKind.SEPARABLE:
        return eval_separable(s, t, kp)
    return eval_gneiting(s, t, kp)


# kernel_matrix():
#
# Weights of M components at n points.
#
# Args:
#    kind (KernelKind): The kernel
#    coords (ndarray): (n, 2) locations
#    times (ndarray): (n,) times
#    psi (ndarray): (M, 2) spatial knots
#    zeta (ndarray): (M,) temporal knots
#    hyper (KernelHyper): Shared kernel parameters
#
# Returns:
#    (ndarray): (n, M) weights
#
def kernel_matrix(kind, coords, times, psi, zeta, hyper):
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    times = np.asarray(times, dtype=float).reshape(-1)
    psi = np.asarray(psi, dtype=float).reshape(-1, 2)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    return evaluate(
        kind,
        coords[:, None, 0] - psi[None, :, 0],
        coords[:, None, 1] - psi[None, :, 1],
        times[:, None] - zeta[None, :],
        h=hyper.h,
        h_t=hyper.h_t,
        gamma=hyper.gamma,
        lam=hyper.lam,
    )

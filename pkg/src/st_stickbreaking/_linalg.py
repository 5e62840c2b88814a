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
Dense Gaussian linear algebra: jittered Cholesky factors.
"""

import logging

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from ._exceptions import FactorizationFailure

LOGGER = logging.getLogger(__name__)

JITTER = 1e-8
ESCALATIONS = 3


def jittered_cholesky(cov, scale=None, *, jitter=JITTER):
    """Lower Cholesky factor of ``cov`` plus a small diagonal jitter.

    The jitter starts at ``jitter * scale`` and is multiplied by ten up
    to three times before giving up.

    :param cov: symmetric (n, n) covariance matrix
    :param scale: reference variance for the jitter, defaults to the
        mean of the diagonal
    :return: lower triangular (n, n) factor
    :raises FactorizationFailure: if every attempt fails
    """
    cov = np.asarray(cov, dtype=float)
    if scale is None:
        scale = float(np.mean(np.diag(cov))) if cov.size else 1.0
    eps = jitter * scale
    eye = np.eye(cov.shape[0])
    for attempt in range(ESCALATIONS + 1):
        try:
            return cholesky(cov + eps * eye, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            if attempt == ESCALATIONS:
                raise FactorizationFailure(attempt + 1, eps) from None
            LOGGER.warning(
                "Cholesky failed with jitter %.3g, escalating", eps
            )
            eps *= 10.0
    raise AssertionError("unreachable")

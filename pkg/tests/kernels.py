import math

import numpy as np
import pytest

from st_stickbreaking._exceptions import InvalidLambda, MissingBandwidth
from st_stickbreaking.kernels import (
    WEIGHT_FLOOR,
    KernelHyper,
    KernelKind,
    KernelParams,
    eval as eval_kernel,
    eval_gneiting,
    eval_separable,
    evaluate,
    kernel_matrix,
)


def test_kind_aliases():
    assert KernelKind.from_name("Gneiting") is KernelKind.GNEITING
    assert KernelKind.from_name("separable-exp") is KernelKind.SEPARABLE
    assert KernelKind.from_name("dp") is KernelKind.CONSTANT
    assert str(KernelKind.SEPARABLE) == "separable"
    with pytest.raises(ValueError):
        KernelKind.from_name("matern")


def test_gneiting_at_knot_is_one():
    kp = KernelParams(psi=(0.3, 0.3), zeta=2.0, gamma=2.0, lam=0.5)
    assert eval_gneiting((0.3, 0.3), 2.0, kp) == 1.0


def test_gneiting_value():
    kp = KernelParams(psi=(0.0, 0.0), zeta=1.0, gamma=1.0, lam=1.0)
    # u = 2, |s - psi|^2 = 0.25
    expected = math.exp(-0.25 / math.sqrt(2.0)) / 2.0
    assert eval_gneiting((0.3, 0.4), 3.0, kp) == pytest.approx(expected)


def test_gneiting_factorizes_at_zero_lambda():
    kp = KernelParams(psi=(0.0, 0.0), zeta=0.0, gamma=0.7, lam=0.0)
    spatial = eval_gneiting((0.2, 0.1), 0.0, kp)
    temporal = eval_gneiting((0.0, 0.0), 3.0, kp)
    assert eval_gneiting((0.2, 0.1), 3.0, kp) == pytest.approx(
        spatial * temporal
    )


def test_gneiting_rejects_lambda():
    kp = KernelParams(psi=(0.0, 0.0), zeta=0.0, lam=1.5)
    with pytest.raises(InvalidLambda):
        eval_gneiting((0.0, 0.0), 1.0, kp)


def test_separable_value():
    kp = KernelParams(psi=(0.5, 0.5), zeta=2.0, h=(0.5, 0.25), h_t=2.0)
    expected = math.exp(-((0.25 / 0.5) ** 2 + (0.25 / 0.25) ** 2 + 1.0 / 4))
    assert eval_separable((0.75, 0.75), 3.0, kp) == pytest.approx(expected)


def test_separable_needs_bandwidths():
    with pytest.raises(MissingBandwidth) as exc:
        eval_separable((0.0, 0.0), 1.0, KernelParams(psi=(0.0, 0.0), zeta=1.0))
    assert exc.value.name == "h"
    with pytest.raises(MissingBandwidth) as exc:
        eval_separable(
            (0.0, 0.0), 1.0, KernelParams(psi=(0.0, 0.0), zeta=1.0, h=(1, 1))
        )
    assert exc.value.name == "h_t"


def test_constant_kernel():
    kp = KernelParams(psi=(0.0, 0.0), zeta=0.0)
    assert eval_kernel(KernelKind.CONSTANT, (5.0, 5.0), 9.0, kp) == 1.0
    assert evaluate(KernelKind.CONSTANT, np.zeros(3), 0.0, 0.0).shape == (3,)


def test_weights_are_floored():
    w = evaluate(KernelKind.SEPARABLE, 100.0, 0.0, 0.0, h=(0.01, 0.01), h_t=1)
    assert w == WEIGHT_FLOOR


def test_kernel_matrix_matches_scalar():
    rng = np.random.default_rng(1)
    coords = rng.random((4, 2))
    times = np.array([1, 2, 3, 4])
    psi = rng.random((3, 2))
    zeta = rng.uniform(1, 4, size=3)
    hyper = KernelHyper(gamma=1.5, lam=0.3)
    w = kernel_matrix(KernelKind.GNEITING, coords, times, psi, zeta, hyper)
    assert w.shape == (4, 3)
    for i in range(4):
        for k in range(3):
            kp = KernelParams(
                psi=tuple(psi[k]), zeta=zeta[k], gamma=1.5, lam=0.3
            )
            assert w[i, k] == pytest.approx(
                eval_gneiting(coords[i], times[i], kp)
            )
    assert np.all((w > 0) & (w <= 1))

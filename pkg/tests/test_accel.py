"""The compiled and fallback kernel paths must agree numerically."""
import numpy as np
import pytest

from wetchicken import accel

RNG = np.random.default_rng(11)

needs_numba = pytest.mark.skipif(
    not accel.NUMBA_AVAILABLE, reason="numba not importable"
)


def test_active_path_flags_consistent():
    if accel.USE_NUMBA:
        assert accel.ard_sqexp is accel.ard_sqexp_numba
        assert accel.chicken_step is accel.chicken_step_numba
    else:
        assert accel.ard_sqexp is accel.ard_sqexp_numpy
        assert accel.chicken_step is accel.chicken_step_numpy


@needs_numba
def test_ard_forward_paths_agree():
    A = RNG.normal(size=(40, 2))
    B = RNG.normal(size=(30, 2))
    inv_ls = np.array([1.3, 0.4])
    got = accel.ard_sqexp_numba(A, B, inv_ls, 1.7)
    ref = accel.ard_sqexp_numpy(A, B, inv_ls, 1.7)
    np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13)


@needs_numba
def test_ard_vjp_paths_agree():
    A = RNG.normal(size=(25, 2))
    B = RNG.normal(size=(35, 2))
    inv_ls = np.array([0.9, 2.1])
    K = accel.ard_sqexp_numpy(A, B, inv_ls, 0.8)
    G = RNG.normal(size=K.shape)
    out_nb = accel.ard_sqexp_vjp_numba(G, K, A, B, inv_ls)
    out_np = accel.ard_sqexp_vjp_numpy(G, K, A, B, inv_ls)
    for a, b in zip(out_nb, out_np):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)


@needs_numba
def test_chicken_step_paths_agree():
    n = 5000
    x = RNG.uniform(0, 5, n)
    y = RNG.uniform(0, 5, n)
    ax = RNG.uniform(-1, 1, n)
    ay = RNG.uniform(-1, 1, n)
    tau = RNG.uniform(-1, 1, n)
    xn_nb, yn_nb = accel.chicken_step_numba(x, y, ax, ay, tau)
    xn_np, yn_np = accel.chicken_step_numpy(x, y, ax, ay, tau)
    np.testing.assert_array_equal(xn_nb, xn_np)
    np.testing.assert_array_equal(yn_nb, yn_np)


def test_chicken_step_numpy_known_values():
    # drift only: v = 0.6*y, b = 3.5 - v
    x = np.array([1.0, 4.9, 2.0])
    y = np.array([0.0, 5.0, 3.0])
    ax = np.array([0.0, 0.0, -1.0])
    ay = np.array([0.0, 0.0, 1.0])
    tau = np.array([0.0, 0.0, -1.0])
    xn, yn = accel.chicken_step_numpy(x, y, ax, ay, tau)
    # row 0: xh = 1 - 0.5 + 0 + 3.5*0 = 0.5
    assert xn[0] == pytest.approx(0.5) and yn[0] == 0.0
    # row 1: v = 3, xh = 4.9 - 0.5 + 3 = 7.4 > 5 -> full reset
    assert xn[1] == 0.0 and yn[1] == 0.0
    # row 2: v = 1.8, b = 1.7, xh = 2 - 2 + 1.8 - 1.7 = 0.1, yh = 4
    assert xn[2] == pytest.approx(0.1) and yn[2] == pytest.approx(4.0)

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from scipy.interpolate import RegularGridInterpolator

from mildhjb import _kernels as K


@pytest.mark.parametrize("scale", [1e-6, 0.3, 5.0, 20.0])
def test_expm_matches_scipy(rng, scale):
    A = rng.standard_normal((6, 6)) * scale
    ref = scipy.linalg.expm(A)
    for fn in (K.expm_numpy, K.expm_numba):
        # normwise relative error, the standard accuracy measure for expm
        assert np.linalg.norm(fn(A) - ref, 1) <= 1e-12 * np.linalg.norm(ref, 1)


def test_expm_paths_agree_exactly(rng):
    A = rng.standard_normal((4, 4))
    assert np.array_equal(K.expm_numpy(A), K.expm_numba(A))


def test_expm_zero_and_diagonal():
    np.testing.assert_allclose(K.expm(np.zeros((3, 3))), np.eye(3), rtol=0, atol=2.3e-16)
    d = np.array([-1.0, 0.5, -30.0])
    np.testing.assert_allclose(K.expm(np.diag(d)), np.diag(np.exp(d)), rtol=1e-13, atol=1e-300)


@pytest.mark.parametrize("n_dim", [1, 2, 3])
def test_interp_matches_scipy_with_clamping(rng, n_dim):
    L = 6
    axis = np.linspace(-1.0, 1.0, L)
    field = rng.standard_normal((L,) * n_dim + (2,))
    pts = rng.uniform(-1.4, 1.4, size=(300, n_dim))
    ref = RegularGridInterpolator((axis,) * n_dim, field)(np.clip(pts, -1, 1))
    n_out = int(np.any(np.abs(pts) > 1, axis=1).sum())
    for fn in (K.interp_lattice_numpy, K.interp_lattice_numba):
        out, n_cl = fn(field, np.full(n_dim, -1.0), np.full(n_dim, axis[1] - axis[0]), pts)
        np.testing.assert_allclose(out, ref, atol=1e-14)
        assert n_cl == n_out


def test_interp_reproduces_lattice_values(rng):
    L = 5
    axis = np.linspace(-2.0, 2.0, L)
    field = rng.standard_normal((L, L, 1))
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    out, n_cl = K.interp_lattice(field, [-2.0, -2.0], [1.0, 1.0], pts)
    np.testing.assert_allclose(out[:, 0], field.reshape(-1), atol=1e-15)
    assert n_cl == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_interp_exact_for_affine_fields(coef, point):
    axis = np.linspace(-1.0, 1.0, 4)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    field = (coef[0] * X + coef[1] * Y + 0.5)[..., None]
    p = np.array([point])
    out, _ = K.interp_lattice(field, [-1.0, -1.0], [axis[1] - axis[0]] * 2, p)
    q = np.clip(p[0], -1, 1)
    assert out[0, 0] == pytest.approx(coef[0] * q[0] + coef[1] * q[1] + 0.5, abs=1e-12)


def test_finite_min_paths_agree_and_break_ties_low(rng):
    p = rng.standard_normal((200, 3))
    F = rng.standard_normal((5, 3))
    h = rng.standard_normal(5)
    v1, a1 = K.finite_min_numpy(p, F, h)
    v2, a2 = K.finite_min_numba(p, F, h)
    np.testing.assert_allclose(v1, v2, atol=1e-14)
    assert np.array_equal(a1, a2)
    F2 = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    for fn in (K.finite_min_numpy, K.finite_min_numba):
        _, arg = fn(np.array([[1.0, 0.0]]), F2, np.array([-2.0, -2.0, 0.0]))
        assert arg[0] == 0


def test_backend_flag():
    assert K.backend() in ("numba", "numpy")
    assert K.backend() == ("numba" if K.USE_NUMBA else "numpy")

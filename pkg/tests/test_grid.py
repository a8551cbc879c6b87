import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atlasforge.errors import DataError, DegenerateTriangulationError
from atlasforge.grid import (as_scalar_grid, bilinear_sample, composition_residual, det2,
                             divergence, gradient, inv2, invert_deformation, jacobian, lattice,
                             matrix_divergence, warp, zero_boundary)
from atlasforge.synthetic import smooth_random_displacement

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
shapes = st.tuples(st.integers(2, 9), st.integers(2, 9))


def test_lattice_orientation():
    X, Y = lattice((3, 4))
    assert X.shape == (3, 4)
    assert X[0, 3] == 3 and Y[2, 0] == 2


def test_bilinear_hits_nodes_and_clamps():
    g = np.arange(12.0).reshape(3, 4)
    X, Y = lattice(g.shape)
    assert np.array_equal(bilinear_sample(g, X, Y), g)
    assert bilinear_sample(g, -5.0, -5.0) == g[0, 0]
    assert bilinear_sample(g, 99.0, 99.0) == g[-1, -1]
    assert bilinear_sample(g, 0.5, 0.0) == pytest.approx(0.5)


@given(a=finite, b=finite, c=finite, x=st.floats(0, 5), y=st.floats(0, 4))
def test_bilinear_reproduces_affine(a, b, c, x, y):
    X, Y = lattice((5, 6))
    g = a * X + b * Y + c
    assert bilinear_sample(g, x, y) == pytest.approx(a * x + b * y + c, abs=1e-9)


def test_warp_by_integer_shift():
    g = np.zeros((6, 6))
    g[2, 3] = 1.0
    U = np.zeros((2, 6, 6))
    U[0] = 1.0     # sample one column to the right
    out = warp(g, U)
    assert out[2, 2] == 1.0 and out[2, 3] == 0.0


def test_warp_shape_mismatch():
    with pytest.raises(DataError):
        warp(np.zeros((4, 4)), np.zeros((2, 4, 5)))


def test_scalar_grid_validation():
    with pytest.raises(DataError):
        as_scalar_grid(np.zeros(5))
    with pytest.raises(DataError):
        as_scalar_grid(np.array([[0.0, np.nan], [1.0, 2.0]]))


@given(shape=shapes, data=st.data())
def test_divergence_is_negative_adjoint(shape, data):
    u = data.draw(arrays(float, shape, elements=finite))
    p = data.draw(arrays(float, (2,) + shape, elements=finite))
    lhs = np.sum(gradient(u) * p)
    rhs = -np.sum(u * divergence(p))
    assert lhs == pytest.approx(rhs, abs=1e-8 * (1 + abs(lhs)))


def test_matrix_divergence_rows():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(2, 2, 5, 5))
    d = matrix_divergence(M)
    assert np.allclose(d[1], divergence(M[1]))


def test_jacobian_of_affine_displacement():
    X, Y = lattice((6, 7))
    U = np.stack([0.1 * X + 0.2 * Y, -0.3 * X])
    J = jacobian(U)
    inner = (slice(None), slice(None), slice(0, -1), slice(0, -1))
    expect = np.array([[1.1, 0.2], [-0.3, 1.0]])
    assert np.allclose(J[inner], expect[:, :, None, None])


@given(arrays(float, (2, 2, 6), elements=st.floats(-3, 3)))
def test_det_inv_match_numpy(M):
    d = det2(M)
    ok = np.abs(d) > 1e-3
    mats = np.moveaxis(M, -1, 0)
    assert np.allclose(d, np.linalg.det(mats), atol=1e-9)
    if ok.any():
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inv = np.moveaxis(inv2(M), -1, 0)[ok]
        assert np.allclose(inv, np.linalg.inv(mats[ok]), rtol=1e-7, atol=1e-7)


def test_zero_boundary():
    U = zero_boundary(np.ones((2, 5, 5)))
    assert U[:, 0].sum() == U[:, -1].sum() == U[:, :, 0].sum() == U[:, :, -1].sum() == 0
    assert U[:, 2, 2].tolist() == [1.0, 1.0]


def test_inverse_of_zero_is_zero():
    assert np.array_equal(invert_deformation(np.zeros((2, 8, 8))), np.zeros((2, 8, 8)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_inverse_composes_to_identity(seed):
    U = smooth_random_displacement((32, 32), 3.0, seed)
    Ubar = invert_deformation(U)
    assert composition_residual(U, Ubar) < 0.3
    assert np.all(Ubar[:, 0] == 0) and np.all(Ubar[:, :, -1] == 0)


def test_inverse_of_translation_interior():
    U = np.zeros((2, 20, 20))
    U[0, 2:-2, 2:-2] = 0.5
    Ubar = invert_deformation(U)
    assert np.allclose(Ubar[0, 6:-6, 6:-6], -0.5, atol=1e-9)


def test_folding_field_warns():
    U = np.zeros((2, 10, 10))
    X, _ = lattice((10, 10))
    U[0, 1:-1, 1:-1] = (-2.0 * (X - 4.5))[1:-1, 1:-1]   # reverses the x axis
    with pytest.warns(RuntimeWarning, match="orientation"):
        invert_deformation(U)


def test_collapsed_lattice_is_rejected():
    X, _ = lattice((6, 6))
    U = np.stack([3.0 - X, np.zeros((6, 6))])          # every point lands on x = 3
    with pytest.warns(RuntimeWarning), pytest.raises(DegenerateTriangulationError):
        invert_deformation(U)

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from atlasforge.dmspline import (Mesh, SplineConfig, assemble_system, bfs_basis_eval, data_misfit,
                                 eval_spline, green_strain, point_matrix, seminorm,
                                 seminorm_matrix, solve_spline, strain_samples)
from atlasforge.errors import ConfigError, DataError
from atlasforge.grid import lattice

MESH = Mesh.for_shape((9, 13), 2, 2)      # hx = 6, hy = 4
NODES = [(0.0, 0.0), (6.0, 0.0), (0.0, 4.0), (6.0, 4.0)]


@pytest.mark.parametrize("corner", range(4))
def test_value_dof_is_nodal(corner):
    for k, p in enumerate(NODES):
        assert bfs_basis_eval(MESH, (0, 0), 4 * corner, p) == pytest.approx(float(k == corner), abs=1e-14)


@pytest.mark.parametrize("k,deriv", [(1, (1, 0)), (2, (0, 1)), (3, (1, 1))])
def test_derivative_dofs_are_nodal(k, deriv):
    for corner, p in enumerate(NODES):
        assert bfs_basis_eval(MESH, (0, 0), 4 * corner + k, p, deriv) == pytest.approx(1.0)
        assert bfs_basis_eval(MESH, (0, 0), 4 * corner + k, p) == pytest.approx(0.0, abs=1e-14)


@given(x=st.floats(0, 6), y=st.floats(0, 4))
def test_partition_of_unity(x, y):
    s = sum(bfs_basis_eval(MESH, (0, 0), 4 * c, (x, y)) for c in range(4))
    assert s == pytest.approx(1.0, abs=1e-13)


def test_fourth_derivative_vanishes():
    assert bfs_basis_eval(MESH, (0, 0), 5, (1.0, 1.0), (4, 0)) == 0.0


def test_point_outside_mesh():
    with pytest.raises(DataError):
        MESH.locate(np.array([13.0]), np.array([1.0]))
    with pytest.raises(DataError):
        bfs_basis_eval(MESH, (0, 0), 0, (7.0, 1.0))


def test_config_validation():
    with pytest.raises(ConfigError):
        SplineConfig(epsilon=0.0)
    with pytest.raises(ConfigError):
        SplineConfig(quad_order=3)
    with pytest.raises(ConfigError):
        SplineConfig(cells_x=0)


def test_seminorm_matrix_is_symmetric_psd():
    R = seminorm_matrix(MESH).toarray()
    assert np.array_equal(R, R.T)
    assert np.linalg.eigvalsh(R).min() > -1e-10 * np.abs(R).max()


def test_seminorm_kills_quadratics():
    # any polynomial of total degree <= 2 interpolated exactly has zero H3 seminorm
    X, Y = lattice((9, 13))
    U = np.stack([1 + 2 * X - Y + 0.1 * X * Y, 0.05 * X ** 2 - 0.02 * Y ** 2])
    coef, _ = solve_spline(U, SplineConfig(epsilon=1e-9, gamma_fit=0.0, cells_x=2, cells_y=2))
    sys_ = assemble_system(strain_samples(U), MESH, SplineConfig(cells_x=2, cells_y=2))
    assert seminorm(coef, sys_) < 1e-10


def test_value_row_at_node_is_unit():
    C = point_matrix(MESH, np.array([[6.0, 4.0]])).toarray()
    node = MESH.node(1, 1)
    assert C[0, 4 * node] == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(C) > 1e-14) == 1


def test_block_system_symmetric_positive_definite():
    X, Y = lattice((17, 17))
    U = np.stack([0.5 * np.sin(X / 5) * np.cos(Y / 7), 0.3 * np.cos(X / 4)])
    system = assemble_system(strain_samples(U), Mesh.for_shape((17, 17), 4, 4),
                             SplineConfig(epsilon=1e-2, gamma_fit=2.0, cells_x=4, cells_y=4))
    K = system.K.toarray()
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


def test_zero_input_zero_output():
    coef, field = solve_spline(np.zeros((2, 12, 12)), SplineConfig(cells_x=3, cells_y=3))
    assert not np.any(coef) and not np.any(field)


def test_bicubic_reproduction():
    X, Y = lattice((21, 21))
    x, y = X / 20, Y / 20
    U = np.stack([x ** 3 - 2 * x * y ** 2 + 0.3, y ** 3 * x + x ** 2])
    _, field = solve_spline(U, SplineConfig(epsilon=1e-9, gamma_fit=0.0, cells_x=4, cells_y=4))
    assert np.abs(field - U).max() <= 1e-8


@given(seed=st.integers(0, 200))
def test_values_only_fit_is_linear(seed):
    rng = np.random.default_rng(seed)
    cfg = SplineConfig(epsilon=0.1, gamma_fit=0.0, cells_x=2, cells_y=2)
    U1 = rng.normal(size=(2, 7, 7))
    U2 = rng.normal(size=(2, 7, 7))
    _, f1 = solve_spline(U1, cfg)
    _, f2 = solve_spline(U2, cfg)
    _, f12 = solve_spline(U1 + U2, cfg)
    assert np.allclose(f12, f1 + f2, atol=1e-9)


def test_strain_examples():
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert np.abs(green_strain(R - np.eye(2))).max() < 1e-15
    s = 0.3
    assert np.allclose(green_strain(np.diag([s, 0.0])), np.diag([2 * s + s * s, 0.0]), rtol=0, atol=1e-15)
    smp = strain_samples(np.zeros((2, 5, 6)))
    assert smp.n == 30 and not smp.w.any() and not smp.x.any()


@given(seed=st.integers(0, 100))
def test_strain_samples_are_symmetric(seed):
    U = np.random.default_rng(seed).normal(size=(2, 6, 5))
    w = strain_samples(U).w
    assert np.array_equal(w[0, 1], w[1, 0])


def _tradeoff(gamma_fit):
    shape = (17, 17)
    X, Y = lattice(shape)
    U = np.stack([np.sin(X / 3) * np.cos(Y / 4), 0.5 * np.sin((X + Y) / 5)])
    mesh = Mesh.for_shape(shape, 4, 4)
    smp = strain_samples(U)
    out = []
    for eps in (1e-6, 1e-2, 1.0, 1e2):
        cfg = SplineConfig(epsilon=eps, gamma_fit=gamma_fit, cells_x=4, cells_y=4)
        sys_ = assemble_system(smp, mesh, cfg)
        coef, _ = solve_spline(U, cfg)
        a = coef.ravel()
        fit = a @ ((sys_.K - eps * sp.block_diag([sys_.R, sys_.R])) @ a) - 2 * sys_.rhs @ a
        out.append((data_misfit(coef, sys_, smp), fit, seminorm(coef, sys_)))
    return np.array(out)


def test_epsilon_tradeoff_values_only():
    m, _, s = _tradeoff(0.0).T
    assert np.all(np.diff(m) > 0)
    assert np.all(np.diff(s) < 0)


def test_epsilon_tradeoff_with_strain_fit():
    # with the strain term the value misfit alone need not be monotone;
    # the full fit functional and the seminorm are
    m, fit, s = _tradeoff(1.0).T
    assert np.all(np.diff(fit) > 0)
    assert np.all(np.diff(s) < 0)
    assert m[0] < m[-1]


def test_eval_matches_dense_sampling():
    X, Y = lattice((13, 11))
    U = np.stack([np.sin(X / 3), np.cos(Y / 2)])
    cfg = SplineConfig(epsilon=1e-3, cells_x=3, cells_y=2)
    coef, field = solve_spline(U, cfg)
    mesh = Mesh.for_shape((13, 11), 3, 2)
    for (i, j) in [(0, 0), (5, 7), (12, 10), (3, 2)]:
        assert np.allclose(eval_spline(coef, mesh, (j, i)), field[:, i, j], atol=1e-12)


def test_eval_unit_coefficient():
    mesh = Mesh.for_shape((5, 5), 1, 1)
    coef = np.zeros((2, mesh.n_dofs))
    coef[1, 4 * mesh.node(1, 0)] = 1.0
    assert np.allclose(eval_spline(coef, mesh, (4.0, 0.0)), [0.0, 1.0])
    assert np.allclose(eval_spline(np.zeros_like(coef), mesh, (2.0, 2.0)), [0.0, 0.0])

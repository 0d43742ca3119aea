import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from more_dwr.errors import ConfigurationError
from more_dwr.temporal_dg import (
    TemporalBasis,
    TemporalGrid,
    evaluate_in_time,
    gauss_lobatto_nodes,
    load_quadrature,
    temporal_matrices,
)

families = st.sampled_from(["gauss_legendre", "gauss_lobatto"])


def test_lobatto_dg1_closed_form():
    k = 0.37
    tm = temporal_matrices(TemporalBasis(1, "gauss_lobatto"), k)
    np.testing.assert_allclose(tm.M, k / 6 * np.array([[2, 1], [1, 2]]), atol=1e-14)
    np.testing.assert_allclose(tm.C, 0.5 * np.array([[1, 1], [-1, 1]]), atol=1e-14)


def test_lobatto_dg2_closed_form():
    k = 0.025
    tm = temporal_matrices(TemporalBasis(2, "gauss_lobatto"), k)
    C = np.array([[3, 4, -1], [-4, 0, 4], [1, -4, 3]]) / 6
    M = k / 30 * np.array([[4, 2, -1], [2, 16, 2], [-1, 2, 4]])
    np.testing.assert_allclose(tm.C, C, atol=1e-14)
    np.testing.assert_allclose(tm.M, M, atol=1e-14)


def test_lobatto_nodes_include_endpoints():
    x = gauss_lobatto_nodes(4)
    assert x[0] == 0.0 and x[-1] == 1.0
    # interior nodes of the 4-point rule are (1 -+ 1/sqrt(5)) / 2
    np.testing.assert_allclose(x[1:3], 0.5 * (1 + np.array([-1, 1]) / np.sqrt(5)), atol=1e-15)


@given(r=st.integers(0, 4), family=families)
def test_lagrange_property(r, family):
    if family == "gauss_lobatto" and r == 0:
        return
    basis = TemporalBasis(r, family)
    np.testing.assert_allclose(basis.values(basis.nodes), np.eye(r + 1), atol=1e-12)
    # partition of unity and vanishing derivative sum
    tau = np.linspace(0, 1, 7)
    np.testing.assert_allclose(basis.values(tau).sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(basis.derivatives(tau).sum(axis=1), 0.0, atol=1e-10)


@settings(max_examples=40)
@given(r=st.integers(1, 4), family=families, k=st.floats(1e-3, 10.0))
def test_mass_symmetric_positive_and_scales_with_k(r, family, k):
    basis = TemporalBasis(r, family)
    tm = temporal_matrices(basis, k)
    np.testing.assert_allclose(tm.M, tm.M.T, atol=1e-14 * k)
    assert np.linalg.eigvalsh(tm.M).min() > 0
    np.testing.assert_allclose(tm.M.sum(), k, rtol=1e-12)
    np.testing.assert_allclose(tm.C, temporal_matrices(basis, 1.0).C, atol=1e-14)


@given(r=st.integers(0, 4), family=families)
def test_jump_matrix_row_and_column_sums(r, family):
    # sum_j C_ij = int (sum_j phi_j)' phi_i + phi_i(0) = phi_i(0), and
    # sum_i C_ij = int phi_j' + phi_j(0) = phi_j(1)
    if family == "gauss_lobatto" and r == 0:
        return
    basis = TemporalBasis(r, family)
    tm = temporal_matrices(basis, 0.5)
    np.testing.assert_allclose(tm.C.sum(axis=1), basis.values([0.0])[0], atol=1e-12)
    np.testing.assert_allclose(tm.C.sum(axis=0), basis.values([1.0])[0], atol=1e-12)
    np.testing.assert_allclose(tm.C_nojump + tm.D1, tm.C, atol=1e-15)


def test_dg0_is_implicit_euler():
    tm = temporal_matrices(TemporalBasis(0, "gauss_legendre"), 0.1)
    assert tm.M.shape == (1, 1)
    np.testing.assert_allclose(tm.M, [[0.1]])
    np.testing.assert_allclose(tm.C, [[1.0]])
    np.testing.assert_allclose(tm.D, [[1.0]])


@given(r=st.integers(1, 3), family=families)
def test_load_quadrature_exact_for_polynomial_source(r, family):
    basis = TemporalBasis(r, family)
    k = 0.4
    tau, W = load_quadrature(basis, k)
    f = 1.0 + 2.0 * tau**r  # degree r in time, product with L_i has degree 2r
    fine, wf = np.polynomial.legendre.leggauss(20)
    fine, wf = 0.5 * (fine + 1), 0.5 * wf
    exact = k * (wf * (1.0 + 2.0 * fine**r)) @ basis.values(fine)
    np.testing.assert_allclose(f @ W, exact, rtol=1e-13)


def test_evaluate_in_time_reproduces_nodal_values():
    basis = TemporalBasis(2, "gauss_lobatto")
    coeffs = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_allclose(evaluate_in_time(coeffs, basis, 1.0), [5.0, 6.0])
    np.testing.assert_allclose(evaluate_in_time(coeffs, basis, 0.5), [3.0, 4.0])


def test_grid_slabs_cover_interval():
    grid = TemporalGrid(0.0, 4.0, 5120)
    assert grid.k == pytest.approx(4.0 / 5120)
    assert grid.slab(0)[0] == 0.0
    assert grid.slab(5119)[1] == pytest.approx(4.0)
    assert len(grid.midpoints()) == 5120


@pytest.mark.parametrize("args", [(0.0, 1.0, 0), (1.0, 1.0, 4), (2.0, 1.0, 3)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ConfigurationError):
        TemporalGrid(*args)


def test_basis_rejects_bad_degree():
    with pytest.raises(ConfigurationError):
        TemporalBasis(-1)
    with pytest.raises(ConfigurationError):
        TemporalBasis(0, "gauss_lobatto")
    with pytest.raises(ConfigurationError):
        temporal_matrices(TemporalBasis(1), 0.0)

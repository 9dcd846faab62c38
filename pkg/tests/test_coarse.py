import numpy as np
import pytest
from hypothesis import given, strategies as st

from semhex.coarse import (
    CoarseCorrection,
    TwoScale,
    assemble_coarse_matrix,
    element_matrices,
)
from semhex.fine import FineSchwarz
from semhex.geometry import mesh_volume, node_coordinates
from semhex.gll import GllBasis
from semhex.krylov import PcgConfig, pcg
from semhex.mesh import build_index_maps, generate_cube_mesh
from semhex.operator import SemOperator

import oracles


def test_unit_element_matrix_matches_oracle():
    mesh = generate_cube_mesh(1)
    Ke = element_matrices(mesh, 1.0, 0.0)[0]
    Ao, _, li = oracles.dense_galerkin(mesh.vertices, mesh.elements, 1)
    # B rows are in (I, J, K) C order; the oracle's local index is [i, j, k]
    order = li.ravel()
    np.testing.assert_allclose(Ke, Ao[np.ix_(order, order)], atol=1e-14)
    # vertex quadrature: |grad phi|^2 is 3 at the own corner and 1 at each of three edge neighbours, weight 1/8
    np.testing.assert_allclose(np.diag(Ke), 0.75, atol=1e-14)


@pytest.mark.parametrize("family", ["uniform", "distorted_domain", "distorted_elements"])
def test_mass_only_sums_to_volume(family):
    mesh = generate_cube_mesh(3, family)
    A = assemble_coarse_matrix(mesh, 0.0, 2.5).matrix
    assert A.sum() == pytest.approx(2.5 * mesh_volume(mesh, GllBasis.build(1)), rel=1e-12)


def test_stiffness_rows_sum_to_zero_and_symmetric():
    A = assemble_coarse_matrix(generate_cube_mesh(3, "distorted_elements"), 1.0, 0.0).matrix
    assert np.abs(np.asarray(A.sum(axis=1))).max() < 1e-12
    assert abs(A - A.T).max() < 1e-14


def test_dirichlet_rows_are_identity():
    mesh = generate_cube_mesh(3)
    maps = build_index_maps(mesh, 1)
    d = maps.dirichlet_mask[maps.vertex_nodes]
    cs = assemble_coarse_matrix(mesh, 1.0, 0.0, d)
    M = cs.matrix.toarray()
    np.testing.assert_array_equal(M[np.ix_(d, d)], np.eye(d.sum()))
    assert np.all(M[np.ix_(d, ~d)] == 0)
    assert cs.free_matrix.shape == ((~d).sum(),) * 2 == (8, 8)


def test_n1_coarse_matrix_equals_operator():
    mesh = generate_cube_mesh(3, "distorted_domain")
    maps = build_index_maps(mesh, 1, None)
    op = SemOperator(mesh, GllBasis.build(1), maps, 1.3, 0.4)
    A = assemble_coarse_matrix(mesh, 1.3, 0.4).matrix.toarray()
    Ad = oracles.dense_matrix(op, maps.n_global)
    vn = maps.vertex_nodes
    np.testing.assert_allclose(A, Ad[np.ix_(vn, vn)], atol=1e-13)


def _correction(k=4, n=3, family="distorted_elements", **kw):
    mesh = generate_cube_mesh(k, family)
    b = GllBasis.build(n)
    maps = build_index_maps(mesh, n)
    return mesh, b, maps, CoarseCorrection(mesh, b, maps, **kw)


@given(seed=st.integers(0, 2**31))
def test_restrict_prolongate_adjoint(seed):
    _, _, maps, cc = _correction(3, 2)
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(maps.n_global)
    Z = rng.standard_normal(cc.nv)
    # R = C m^-1 and P = m^-1 C^T are transposes
    assert cc.restrict(r) @ Z == pytest.approx(r @ cc.prolongate(Z), rel=1e-12)


def test_prolongation_reproduces_trilinear_fields():
    mesh, b, maps, cc = _correction(3, 3, "uniform")
    X = node_coordinates(mesh, b)
    Z = mesh.vertices @ np.array([1.0, -2.0, 0.5]) + 0.3
    z = cc.prolongate(Z)
    ref = np.zeros(maps.n_global)
    ref[maps.l2g.ravel()] = (X.reshape(-1, 3) @ np.array([1.0, -2.0, 0.5]) + 0.3)
    np.testing.assert_allclose(z, ref, atol=1e-12)


def test_correction_symmetric_psd():
    _, _, maps, cc = _correction(2, 2)
    Pd = oracles.dense_matrix(cc, maps.n_global)
    np.testing.assert_allclose(Pd, Pd.T, atol=1e-12 * np.abs(Pd).max())
    assert np.linalg.eigvalsh(Pd).min() > -1e-12 * np.abs(Pd).max()
    assert np.linalg.matrix_rank(Pd, tol=1e-10 * np.abs(Pd).max()) == 1  # one free vertex on 2^3


def test_zero_in_zero_out():
    _, _, maps, cc = _correction()
    np.testing.assert_array_equal(cc(np.zeros(maps.n_global)), 0)


def test_bad_solver_name():
    with pytest.raises(ValueError):
        _correction(solver="cholmod")


def _pcg_iterations(solver):
    mesh = generate_cube_mesh(8)
    b = GllBasis.build(3)
    maps = build_index_maps(mesh, 3)
    A = SemOperator(mesh, b, maps)
    P = TwoScale(CoarseCorrection(mesh, b, maps, solver=solver), FineSchwarz(mesh, b, maps))
    rhs = A.lumped_mass * (~maps.dirichlet_mask)
    return pcg(A, P, rhs, PcgConfig(1e-6)).iterations, P.coarse.stats


def test_direct_and_amg_agree_within_two_iterations():
    (it_d, s_d), (it_a, s_a) = _pcg_iterations("direct"), _pcg_iterations("amg")
    assert s_d["solver"] == "direct" and s_a["solver"] == "amg"
    assert abs(it_d - it_a) <= 2


def test_concurrent_equals_sequential():
    mesh, b, maps, cc = _correction(4, 3)
    fine = FineSchwarz(mesh, b, maps)
    r = np.random.default_rng(0).standard_normal(maps.n_global)
    seq = TwoScale(cc, fine)(r)
    par = TwoScale(cc, fine, concurrent=True)
    try:
        np.testing.assert_array_equal(par(r), seq)
    finally:
        par.close()
    np.testing.assert_array_equal(TwoScale(None, fine)(r), fine(r))
    np.testing.assert_array_equal(TwoScale(cc, None)(r), cc(r))
    with pytest.raises(ValueError):
        TwoScale()

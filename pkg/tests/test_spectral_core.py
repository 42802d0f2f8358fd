import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from srmc.errors import ArgumentError, SolverError
from srmc.spectral_core import (
    EdgeList, Laplacian, MatrixPolynomial, SketchConfig, build_laplacian,
    build_poly_exp, build_poly_exp_half_inv, build_poly_inv_square,
    complete_bipartite_edges, complete_bipartite_laplacian,
    complete_bipartite_pinv, extreme_eigs, jl_sketch, normalized_adjacency_gap,
    read_edges, read_matrix_market, read_vector_csv, solve_spd, write_edges,
    write_matrix_market, write_vector_csv)


def _dense_laplacian(n1, n2, rows, cols, w):
    # independent oracle: sum of w_e (e_i - e_j)(e_i - e_j)^T
    n = n1 + n2
    L = np.zeros((n, n))
    for i, j, we in zip(rows, cols, w):
        b = np.zeros(n)
        b[i], b[n1 + j] = 1.0, -1.0
        L += we * np.outer(b, b)
    return L


# ---------------------------------------------------------------- Laplacians

def test_single_edge_laplacian():
    L = build_laplacian(EdgeList(1, 1, [0], [0]), [1.0])
    np.testing.assert_array_equal(L.toarray(), [[1, -1], [-1, 1]])


def test_k22_unit_weights():
    L = build_laplacian(complete_bipartite_edges(2, 2))
    expected = np.array([[2, 0, -1, -1], [0, 2, -1, -1],
                         [-1, -1, 2, 0], [-1, -1, 0, 2]], float)
    np.testing.assert_array_equal(L.toarray(), expected)


def test_random_graph_matches_oracle(rng):
    mask = rng.random((6, 7)) < 0.4
    E = EdgeList.from_mask(mask)
    w = rng.random(E.m) * 3
    L = build_laplacian(E, w).toarray()
    np.testing.assert_allclose(L, _dense_laplacian(6, 7, E.rows, E.cols, w), atol=1e-14)
    np.testing.assert_allclose(L.sum(axis=1), 0, atol=1e-13)
    assert np.linalg.eigvalsh(L)[0] > -1e-12


@pytest.mark.parametrize("w", [[1.0, -0.5], [1.0], [1.0, np.nan]])
def test_bad_weights_rejected(w):
    with pytest.raises(ArgumentError):
        build_laplacian(EdgeList(1, 2, [0, 0], [0, 1]), w)


def test_edge_list_validation():
    with pytest.raises(ArgumentError):
        EdgeList(2, 2, [0, 0], [1, 1])
    with pytest.raises(ArgumentError):
        EdgeList(2, 2, [2], [0])
    with pytest.raises(ArgumentError):
        EdgeList(0, 2, [], [])
    E = EdgeList.from_pairs(2, 2, [(0, 1), (0, 1), (1, 0)])
    assert E.m == 2


def test_components_counted():
    L = build_laplacian(EdgeList(2, 2, [0, 1], [0, 1]))
    assert L.n_components == 2


def test_complete_bipartite_spectrum():
    np.testing.assert_array_equal(complete_bipartite_laplacian(1, 1).toarray(),
                                  [[1, -1], [-1, 1]])
    w = np.linalg.eigvalsh(complete_bipartite_laplacian(2, 3).toarray())
    np.testing.assert_allclose(w, [0, 2, 2, 3, 5], atol=1e-12)
    lo, hi = extreme_eigs(complete_bipartite_laplacian(50, 50))
    assert hi == pytest.approx(100.0, abs=1e-9)
    with pytest.raises(ArgumentError):
        complete_bipartite_laplacian(0, 3)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
def test_complete_bipartite_pinv_matches_pinv(n1, n2, seed):
    b = np.random.default_rng(seed).standard_normal((n1 + n2, 2))
    P = np.linalg.pinv(complete_bipartite_laplacian(n1, n2).toarray())
    np.testing.assert_allclose(complete_bipartite_pinv(n1, n2, b), P @ b, atol=1e-12)


# ------------------------------------------------------------------ solvers

def test_solve_single_edge():
    L = complete_bipartite_laplacian(1, 1)
    np.testing.assert_allclose(solve_spd(L, [1.0, -1.0]), [0.5, -0.5], atol=1e-12)


def test_solve_kernel_rhs_gives_zero():
    L = complete_bipartite_laplacian(3, 4)
    np.testing.assert_allclose(solve_spd(L, np.ones(7)), 0, atol=1e-14)
    with pytest.raises(ArgumentError):
        solve_spd(L, np.ones(7), strict=True)


def test_solve_matches_pinv_on_disconnected_graph(rng):
    E = EdgeList(3, 3, [0, 1, 1, 2], [0, 0, 1, 2])
    L = build_laplacian(E, rng.random(4) + 0.5)
    b = rng.standard_normal((6, 3))
    x = solve_spd(L, b)
    np.testing.assert_allclose(x, np.linalg.pinv(L.toarray()) @ b, atol=1e-9)


def test_solve_reports_residual_on_budget_exhaustion(rng):
    L = complete_bipartite_laplacian(20, 20)
    b = rng.standard_normal(40)
    with pytest.raises(SolverError) as info:
        solve_spd(L, b, tol=1e-14, maxiter=0)
    assert info.value.residual > 0


def test_solve_dimension_mismatch():
    with pytest.raises(ArgumentError):
        solve_spd(complete_bipartite_laplacian(2, 2), np.ones(5))


# ---------------------------------------------------------- eigen-extremes

def test_extreme_eigs_examples():
    assert extreme_eigs(np.eye(5)) == pytest.approx((1.0, 1.0))
    lo, hi = extreme_eigs(np.diag([0.1, 0.9]), method="lanczos", tol=1e-10)
    assert lo == pytest.approx(0.1, abs=1e-9) and hi == pytest.approx(0.9, abs=1e-9)


def test_extreme_eigs_projector_construction():
    # L_G^-1/2 L_G L_G^-1/2 on the range is the identity
    L = complete_bipartite_laplacian(4, 5)
    P = np.linalg.pinv(L.toarray())
    lo, hi = extreme_eigs(lambda v: P @ (L.matrix @ v), n=9, method="lanczos",
                          metric=L.matrix, project=lambda v: v - v.mean(), tol=1e-10)
    assert lo == pytest.approx(1.0, abs=1e-8) and hi == pytest.approx(1.0, abs=1e-8)


def test_lanczos_generalized_matches_dense(rng):
    n1, n2 = 5, 6
    LG = complete_bipartite_laplacian(n1, n2)
    w = rng.uniform(0.3, 1.0, n1 * n2)
    LW = build_laplacian(complete_bipartite_edges(n1, n2), w)
    lam, E = np.linalg.eigh(LG.toarray())
    S = E[:, 1:] / np.sqrt(lam[1:])
    ref = np.linalg.eigvalsh(S.T @ LW.toarray() @ S)
    lo, hi = extreme_eigs(lambda v: complete_bipartite_pinv(n1, n2, LW.matrix @ v),
                          n=n1 + n2, method="lanczos", metric=LG.matrix,
                          project=lambda v: v - v.mean(), tol=1e-10)
    assert lo == pytest.approx(ref[0], abs=1e-8)
    assert hi == pytest.approx(ref[-1], abs=1e-8)


def test_extreme_eigs_rejects_unknown_method():
    with pytest.raises(ArgumentError):
        extreme_eigs(np.eye(2), method="power")


# ------------------------------------------------------------- polynomials

def test_inv_square_degree_from_bound():
    # smallest d with (1-g)^(d+1) (d+2) / g^2 <= eps at g=1/2, eps=0.1
    p = build_poly_inv_square(0.5, 0.1)
    assert p.degree == 8
    assert 0.5 ** 8 * 9 / 0.25 > 0.1 >= 0.5 ** 9 * 10 / 0.25
    assert p(1.0) == pytest.approx(1.0)


@pytest.mark.parametrize("g,eps", [(0.5, 0.1), (0.2, 0.05), (0.05, 0.01)])
def test_inv_square_accuracy_on_grid(g, eps):
    p = build_poly_inv_square(g, eps)
    x = np.linspace(g, 1.0, 400)[1:]
    assert np.max(np.abs(p(x) * x ** 2 - 1)) <= eps


@pytest.mark.parametrize("g,eps", [(0.5, 0.1), (0.3, 0.05)])
def test_exp_half_inv_accuracy_and_square(g, eps):
    q = build_poly_exp_half_inv(g, eps)
    assert q(1.0) == pytest.approx(math.exp(0.5), rel=1e-12)
    x = np.linspace(g, 1.0, 400)[1:]
    h = np.exp(1 / (2 * x)) / x
    assert np.max(np.abs(q(x) / h - 1)) <= eps
    # the square approximates exp(1/x) / x^2
    assert np.max(np.abs(q(x) ** 2 / h ** 2 - 1)) <= 3 * eps


def test_exp_half_inv_coefficients_match_taylor():
    # oracle: direct evaluation near the centre and the analytic first derivative
    q = build_poly_exp_half_inv(0.5, 0.1)
    t = 1e-3
    h = lambda x: math.exp(1 / (2 * x)) / x
    assert q(1 + t) == pytest.approx(h(1 + t), rel=1e-9)
    # first derivative of h at 1 is -(3/2) e^(1/2)
    assert q.coeffs[1] == pytest.approx(-1.5 * math.exp(0.5), rel=1e-12)


def test_poly_exp_accuracy():
    p = build_poly_exp(-2.0, 3.0, 1e-8)
    x = np.linspace(-2, 3, 101)
    assert np.max(np.abs(p(x) / np.exp(x) - 1)) <= 1e-8


@pytest.mark.parametrize("g,eps", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 0.2)])
def test_poly_builders_validate(g, eps):
    with pytest.raises(ArgumentError):
        build_poly_inv_square(g, eps)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=6),
       st.floats(0.1, 1.0), st.floats(-0.5, 0.5))
def test_matrix_polynomial_apply_is_scalar_on_diagonal(coeffs, center, shift):
    p = MatrixPolynomial(np.array(coeffs), center)
    d = np.linspace(0.1, 1.0, 5)
    X = np.eye(5)
    Y = p.apply(lambda Z: d[:, None] * Z, X, sign=-1.0, shift=shift)
    np.testing.assert_allclose(np.diag(Y), p(shift - d), atol=1e-9)


# ---------------------------------------------------------------- sketches

def test_sketch_size_formula():
    cfg = SketchConfig.for_dimension(100, 0.5, seed=3)
    assert cfg.k == math.ceil(8 * math.log(100) / 0.25)
    with pytest.raises(ArgumentError):
        SketchConfig.for_dimension(100, 1.5)


def test_jl_sketch_norms():
    x = np.random.default_rng(2024).standard_normal(200)
    np.testing.assert_array_equal(jl_sketch(50, 200, 1) @ np.zeros(200), 0)
    ratios = [np.linalg.norm(jl_sketch(400, 200, s) @ x) ** 2 / (x @ x) for s in range(100)]
    assert abs(np.mean(ratios) - 1) < 0.02
    assert np.mean(np.abs(np.array(ratios) - 1) <= 0.25) > 0.99
    np.testing.assert_array_equal(jl_sketch(5, 7, 9), jl_sketch(5, 7, 9))
    Q = jl_sketch(400, 200, 2, kind="rademacher")
    assert np.allclose(np.abs(Q), 1 / 20)


# -------------------------------------------------- Laplacian-to-adjacency

def test_gap_examples():
    L = complete_bipartite_laplacian(4, 4)
    assert normalized_adjacency_gap(L, L) == 0.0
    eps = 0.07
    # bipartite normalized adjacency has norm 1
    assert normalized_adjacency_gap(L, (1 - eps) * L.matrix) == pytest.approx(eps, abs=1e-12)
    with pytest.raises(ArgumentError):
        normalized_adjacency_gap(build_laplacian(EdgeList(2, 2, [0], [0])),
                                 complete_bipartite_laplacian(2, 2))


@given(st.integers(2, 6), st.integers(2, 6), st.floats(0.01, 0.3),
       st.integers(0, 2 ** 31 - 1))
def test_gap_property_for_sandwiched_weights(n1, n2, eps, seed):
    w = np.random.default_rng(seed).uniform(1 - eps, 1.0, n1 * n2)
    E = complete_bipartite_edges(n1, n2)
    L, Lt = build_laplacian(E), build_laplacian(E, w)
    d, dt = L.degrees, Lt.degrees
    assert np.all(dt <= d + 1e-12) and np.all(dt >= (1 - eps) * d - 1e-12)
    assert normalized_adjacency_gap(L, Lt) <= 3 * eps + 1e-12


# ---------------------------------------------------------------------- IO

def test_matrix_market_round_trip(tmp_path, rng):
    E = EdgeList.from_mask(rng.random((5, 6)) < 0.5)
    L = build_laplacian(E, rng.random(E.m))
    write_matrix_market(tmp_path / "L.mtx", L)
    L2 = read_matrix_market(tmp_path / "L.mtx")
    np.testing.assert_array_equal(L2.toarray(), L.toarray())


def test_vector_and_edge_round_trip(tmp_path, rng):
    x = rng.standard_normal(9)
    write_vector_csv(tmp_path / "x.csv", x)
    np.testing.assert_array_equal(read_vector_csv(tmp_path / "x.csv"), x)
    E = EdgeList.from_mask(rng.random((4, 7)) < 0.5)
    write_edges(tmp_path / "e.mtx", E)
    E2 = read_edges(tmp_path / "e.mtx")
    assert (E2.n1, E2.n2) == (4, 7)
    np.testing.assert_array_equal(E2.to_mask(), E.to_mask())


def test_laplacian_wraps_sparse():
    L = Laplacian(sp.eye(3) - sp.eye(3))
    assert L.n == 3 and L.n_components == 3

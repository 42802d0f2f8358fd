"""Laplacians, Laplacian solves, extreme eigenvalues, matrix-function
polynomials and random sketches.

Graphs here are bipartite: row vertex ``i`` has index ``i`` and column
vertex ``j`` has index ``n1 + j``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ArgumentError, SolverError

__all__ = [
    "EdgeList", "Laplacian", "MatrixPolynomial", "SketchConfig",
    "incidence_matrix", "build_laplacian", "complete_bipartite_edges",
    "complete_bipartite_laplacian", "complete_bipartite_pinv", "solve_spd", "extreme_eigs",
    "build_poly_inv_square", "build_poly_exp_half_inv", "build_poly_exp",
    "jl_sketch", "normalized_adjacency_gap",
    "write_matrix_market", "read_matrix_market", "write_vector_csv",
    "read_vector_csv", "write_edges", "read_edges",
]


@dataclass(frozen=True)
class EdgeList:
    """Edges ``(rows[e], cols[e])`` of a bipartite graph on ``n1 + n2`` vertices."""

    n1: int
    n2: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ArgumentError("n1 and n2 must be positive")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ArgumentError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.n1
                          or cols.min() < 0 or cols.max() >= self.n2):
            raise ArgumentError("edge index out of range")
        key = rows * self.n2 + cols
        if np.unique(key).size != key.size:
            raise ArgumentError("duplicate edges")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def from_pairs(cls, n1, n2, pairs):
        """Build from an iterable of ``(i, j)``; duplicates are dropped."""
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if arr.size:
            key = np.unique(arr[:, 0] * n2 + arr[:, 1])
            arr = np.column_stack([key // n2, key % n2])
        return cls(n1, n2, arr[:, 0], arr[:, 1])

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        i, j = np.nonzero(mask)
        return cls(mask.shape[0], mask.shape[1], i, j)

    @property
    def m(self):
        return self.rows.size

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def heads(self):
        return self.rows

    @property
    def tails(self):
        return self.cols + self.n1

    def to_mask(self):
        mask = np.zeros((self.n1, self.n2), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask


@dataclass
class Laplacian:
    """Sparse graph Laplacian with its connected-component labels."""

    matrix: sp.csr_matrix
    labels: np.ndarray = field(default=None)
    n_components: int = field(default=None)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        if self.labels is None:
            adj = self.matrix.copy()
            adj.setdiag(0)
            adj.eliminate_zeros()
            self.n_components, self.labels = connected_components(
                adj, directed=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def degrees(self):
        return self.matrix.diagonal()

    def adjacency(self):
        return sp.diags(self.degrees) - self.matrix

    def toarray(self):
        return self.matrix.toarray()

    def __matmul__(self, x):
        return self.matrix @ x


def incidence_matrix(edges):
    """Signed edge-vertex incidence ``B`` (m x n): row e is ``b_e^T``."""
    m = edges.m
    e = np.arange(m)
    data = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csr_matrix(
        (data, (np.concatenate([e, e]), np.concatenate([edges.heads, edges.tails]))),
        shape=(m, edges.n))


def build_laplacian(edges, weights=None):
    """Assemble ``L = sum_e w_e b_e b_e^T``.

    Parameters
    ----------
    edges : EdgeList
    weights : array_like, optional
        Nonnegative weight per edge; all ones when omitted.

    Returns
    -------
    Laplacian
    """
    if weights is None:
        weights = np.ones(edges.m)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != edges.m:
        raise ArgumentError(f"{w.size} weights for {edges.m} edges")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArgumentError("weights must be finite and nonnegative")
    B = incidence_matrix(edges)
    L = (B.T @ sp.diags(w) @ B).tocsr()
    L.eliminate_zeros()
    return Laplacian(L)


def complete_bipartite_edges(n1, n2):
    if n1 < 1 or n2 < 1:
        raise ArgumentError("n1 and n2 must be positive")
    i, j = np.divmod(np.arange(n1 * n2), n2)
    return EdgeList(n1, n2, i, j)


def complete_bipartite_laplacian(n1, n2):
    """Laplacian of K_{n1,n2}; left degrees n2, right degrees n1."""
    return build_laplacian(complete_bipartite_edges(n1, n2))


def complete_bipartite_pinv(n1, n2, b):
    """``L^+ b`` for the Laplacian of K_{n1,n2}, in closed form.

    Zero-mean vectors on either side are eigenvectors (eigenvalue n2 on the
    left, n1 on the right); ``(n2 1, -n1 1)`` has eigenvalue ``n1 + n2``.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n1 + n2:
        raise ArgumentError(f"expected {n1 + n2} rows, got {b.shape[0]}")
    ba, bb = b[:n1], b[n1:]
    ma, mb = ba.mean(axis=0), bb.mean(axis=0)
    n = n1 + n2
    c = (ma - mb) / (n * n)
    return np.concatenate([(ba - ma) / n2 + c * n2, (bb - mb) / n1 - c * n1])


def _kernel_split(L, b):
    # per-component means of the columns of b
    labels = L.labels
    counts = np.bincount(labels, minlength=L.n_components).astype(float)
    sums = np.zeros((L.n_components,) + b.shape[1:])
    np.add.at(sums, labels, b)
    means = sums / counts.reshape((-1,) + (1,) * (b.ndim - 1))
    return means[labels]


def solve_spd(L, b, tol=1e-10, maxiter=None, strict=False):
    """Solve ``L x = b`` by Jacobi-preconditioned conjugate gradients.

    The right-hand side is first projected onto the range of ``L`` (the
    complement of the per-component constants) and the returned solution is
    the minimum-norm one, so ``b`` in the kernel gives ``x = 0``.

    Parameters
    ----------
    L : Laplacian
    b : ndarray
        Vector or matrix of right-hand sides (one per column).
    tol : float
        Relative residual target ``||Lx - b|| <= tol ||b||`` per column.
    maxiter : int, optional
        Defaults to ``10 n``.
    strict : bool
        Raise instead of projecting when a column's kernel component
        exceeds ``tol ||b||``.

    Returns
    -------
    ndarray
        Same shape as ``b``.
    """
    if not isinstance(L, Laplacian):
        L = Laplacian(L)
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    if b.shape[0] != L.n:
        raise ArgumentError("dimension mismatch")
    B0 = b.reshape(L.n, -1)
    bnorm = np.linalg.norm(B0, axis=0)
    ker = _kernel_split(L, B0)
    if strict:
        kn = np.linalg.norm(ker, axis=0)
        if np.any(kn > tol * bnorm):
            raise ArgumentError("right-hand side has a kernel component")
    rhs = B0 - ker
    target = tol * np.linalg.norm(rhs, axis=0)
    maxiter = 10 * L.n if maxiter is None else maxiter
    A = L.matrix
    deg = L.degrees
    minv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)[:, None]

    x = np.zeros_like(rhs)
    r = rhs.copy()
    rn = np.linalg.norm(r, axis=0)
    active = rn > target
    z = minv * r
    p = z.copy()
    rz = np.sum(r * z, axis=0)
    it = 0
    while np.any(active):
        if it >= maxiter:
            worst = float(np.max(rn / np.where(bnorm > 0, bnorm, 1.0)))
            raise SolverError(f"CG did not converge in {maxiter} iterations",
                              residual=worst)
        Ap = A @ p
        pAp = np.sum(p * Ap, axis=0)
        alpha = np.where(active & (pAp > 0), rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        rn = np.linalg.norm(r, axis=0)
        active = rn > target
        z = minv * r
        rz_new = np.sum(r * z, axis=0)
        beta = np.where(rz > 0, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
        it += 1
    x -= _kernel_split(L, x)
    return x.ravel() if vec else x.reshape(b.shape)


def _as_matvec(op):
    if callable(op) and not hasattr(op, "shape"):
        return op, None
    if sp.issparse(op):
        return (lambda v: op @ v), op.shape[0]
    if isinstance(op, Laplacian):
        return (lambda v: op.matrix @ v), op.n
    if hasattr(op, "matvec"):
        return op.matvec, op.shape[0]
    arr = np.asarray(op, dtype=float)
    return (lambda v: arr @ v), arr.shape[0]


def extreme_eigs(op, tol=1e-8, method="dense", n=None, metric=None,
                 project=None, seed=0, maxiter=None):
    """Smallest and largest eigenvalue of a symmetric operator.

    Parameters
    ----------
    op : ndarray, sparse matrix, LinearOperator or callable
        The operator. A callable must be given together with ``n``.
    tol : float
        Relative accuracy (with respect to the spectral radius) for the
        iterative method.
    method : {"dense", "lanczos"}
        ``dense`` runs a full eigendecomposition; ``lanczos`` runs Lanczos
        with full reorthogonalization.
    metric : matrix, optional
        Inner product ``<x, y> = x^T M y`` in which ``op`` is self-adjoint
        (Lanczos only). Lets one handle ``L^+ K`` with ``M = L``.
    project : callable, optional
        Applied to every Krylov vector, e.g. to stay off a known kernel.

    Returns
    -------
    (float, float)
    """
    matvec, dim = _as_matvec(op)
    dim = n if dim is None else dim
    if dim is None or dim < 1:
        raise ArgumentError("operator dimension must be known and positive")
    if method == "dense":
        if metric is not None or project is not None:
            raise ArgumentError("dense method takes a plain symmetric operator")
        if sp.issparse(op) or isinstance(op, Laplacian):
            M = (op.matrix if isinstance(op, Laplacian) else op).toarray()
        elif callable(op) and not hasattr(op, "shape") or hasattr(op, "matvec"):
            M = np.column_stack([matvec(e) for e in np.eye(dim)])
        else:
            M = np.asarray(op, dtype=float)
        M = 0.5 * (M + M.T)
        w = np.linalg.eigvalsh(M)
        return float(w[0]), float(w[-1])
    if method != "lanczos":
        raise ArgumentError(f"unknown method {method!r}")
    return _lanczos_extremes(matvec, dim, tol, metric, project, seed, maxiter)


def _lanczos_extremes(matvec, dim, tol, metric, project, seed, maxiter):
    rng = np.random.default_rng(seed)
    mdot = (lambda x: x) if metric is None else (lambda x: metric @ x)
    proj = (lambda x: x) if project is None else project
    maxiter = min(dim, 300) if maxiter is None else min(maxiter, dim)

    v = proj(rng.standard_normal(dim))
    nv = math.sqrt(max(float(v @ mdot(v)), 0.0))
    if not np.isfinite(nv) or nv == 0.0:
        raise SolverError("Lanczos breakdown: empty start vector")
    V = [v / nv]
    MV = [mdot(V[0])]
    alphas, betas = [], []
    theta = None
    for k in range(maxiter):
        w = proj(np.asarray(matvec(V[k]), dtype=float))
        if not np.all(np.isfinite(w)):
            raise SolverError("Lanczos breakdown: non-finite operator output")
        a = float(MV[k] @ w)
        alphas.append(a)
        # full reorthogonalization, twice
        Vm = np.array(V)
        MVm = np.array(MV)
        for _ in range(2):
            w = w - Vm.T @ (MVm @ w)
        bk = math.sqrt(max(float(w @ mdot(w)), 0.0))
        T = np.diag(alphas)
        if betas:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        theta, S = np.linalg.eigh(T)
        scale = max(abs(theta[0]), abs(theta[-1]), np.finfo(float).tiny)
        res = bk * np.abs(S[-1, [0, -1]])
        if bk <= 1e-12 * scale or np.all(res <= tol * scale):
            return float(theta[0]), float(theta[-1])
        betas.append(bk)
        V.append(w / bk)
        MV.append(mdot(V[-1]))
    if theta is not None and len(alphas) >= dim:
        return float(theta[0]), float(theta[-1])
    raise SolverError("Lanczos did not converge", residual=float(np.max(res)))


@dataclass(frozen=True)
class MatrixPolynomial:
    """Polynomial ``sum_k c_k (x - center)^k`` meant to be applied to a
    shifted operator ``x = sign * T + shift * I``.

    ``operand`` documents the intended substitution (e.g. ``"u I - A"``).
    """

    coeffs: np.ndarray
    center: float = 1.0
    operand: str = "x"
    domain: tuple = (0.0, 1.0)
    target: str = ""

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1 or not np.all(np.isfinite(c)):
            raise ArgumentError("coefficients must be a finite nonempty vector")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.coeffs.size - 1

    def __call__(self, x):
        t = np.asarray(x, dtype=float) - self.center
        out = np.full_like(t, self.coeffs[-1])
        for c in self.coeffs[-2::-1]:
            out = out * t + c
        return out

    def apply(self, matvec, X, sign=1.0, shift=0.0):
        """Horner evaluation of ``p(sign * T + shift * I) X``.

        ``matvec`` maps a block ``Y`` to ``T Y``.
        """
        off = shift - self.center
        Y = self.coeffs[-1] * X
        for c in self.coeffs[-2::-1]:
            Y = sign * matvec(Y) + off * Y + c * X
        return Y


def _check_gap(g, eps):
    if not (0.0 < g < 1.0):
        raise ArgumentError("gap must lie in (0, 1)")
    if not (0.0 < eps <= 0.1):
        raise ArgumentError("accuracy must lie in (0, 0.1]")


def build_poly_inv_square(g, eps):
    """Truncated Taylor series of ``x^-2`` about ``x = 1``.

    The degree ``d`` is the smallest one with
    ``(1 - g)^(d+1) (d + 2) / g^2 <= eps``, which bounds the relative error
    on ``(g, 1]``.
    """
    _check_gap(g, eps)
    d = 0
    while (1 - g) ** (d + 1) * (d + 2) / g ** 2 > eps:
        d += 1
    k = np.arange(d + 1)
    coeffs = (k + 1.0) * (-1.0) ** k
    return MatrixPolynomial(coeffs, 1.0, "u I - A", (g, 1.0), "x^-2")


def _exp_half_inv_coeffs(d):
    # Taylor coefficients about t = 0 of exp(1/(2(1+t))) / (1+t).
    # E(t) = exp(F(t)) with F = (1/(1+t) - 1)/2, so k e_k = sum_j j f_j e_{k-j}.
    j = np.arange(1, d + 1)
    f = 0.5 * (-1.0) ** j
    e = np.zeros(d + 1)
    e[0] = math.exp(0.5)
    for k in range(1, d + 1):
        e[k] = np.dot(j[:k] * f[:k], e[k - 1::-1][:k]) / k
    signs = (-1.0) ** np.arange(d + 1)
    # multiply by 1/(1+t) = sum (-1)^k t^k
    return np.array([np.dot(e[:k + 1], signs[k::-1]) for k in range(d + 1)])


def build_poly_exp_half_inv(g, eps):
    """Truncated Taylor series of ``h(x) = exp(1/(2x)) / x`` about ``x = 1``.

    Degree from the Cauchy-estimate remainder
    ``4 (d+1) exp(1/g) g^-2 (1 - g/2)^d <= eps``.
    """
    _check_gap(g, eps)
    # work in logs: exp(1/g) overflows for tiny gaps
    lead = math.log(4.0) + 1.0 / g - 2.0 * math.log(g) - math.log(eps)
    d = 0
    while math.log(d + 1) + lead + d * math.log1p(-g / 2) > 0:
        d += 1
    return MatrixPolynomial(_exp_half_inv_coeffs(d), 1.0, "u I - A", (g, 1.0),
                            "exp(1/(2x))/x")


def build_poly_exp(lo, hi, eps):
    """Taylor polynomial of ``exp`` about the midpoint of ``[lo, hi]``.

    Relative error on the interval is at most ``eps``: the remainder
    ``r^(d+1)/(d+1)! e^r`` is compared against ``eps e^-r`` with
    ``r = (hi - lo)/2``.
    """
    if not hi > lo:
        raise ArgumentError("need lo < hi")
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    d = 0
    logterm = math.log(r) if r > 0 else -np.inf
    while (d + 1) * logterm - math.lgamma(d + 2) + 2 * r > math.log(eps):
        d += 1
    coeffs = math.exp(c) / np.array([math.factorial(k) for k in range(d + 1)],
                                    dtype=float)
    return MatrixPolynomial(coeffs, c, "x", (lo, hi), "exp(x)")


@dataclass(frozen=True)
class SketchConfig:
    """Johnson-Lindenstrauss sketch size ``k = ceil(c_jl log(n) / eps_jl^2)``."""

    k: int
    seed: int
    eps_jl: float
    c_jl: float = 8.0

    @classmethod
    def for_dimension(cls, n, eps_jl, seed=0, c_jl=8.0):
        if not (0.0 < eps_jl < 1.0):
            raise ArgumentError("eps_jl must lie in (0, 1)")
        k = max(1, math.ceil(c_jl * math.log(max(n, 2)) / eps_jl ** 2))
        return cls(k, int(seed), float(eps_jl), float(c_jl))


def jl_sketch(k, n, seed, kind="gaussian"):
    """Random ``k x n`` matrix with ``E[Q^T Q] = I``.

    ``kind`` is ``"gaussian"`` (entries N(0, 1/k)) or ``"rademacher"``
    (entries +-1/sqrt(k)).
    """
    if k < 1 or n < 1:
        raise ArgumentError("k and n must be positive")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        return rng.standard_normal((k, n)) / math.sqrt(k)
    if kind == "rademacher":
        return (2.0 * rng.integers(0, 2, size=(k, n)) - 1.0) / math.sqrt(k)
    raise ArgumentError(f"unknown sketch kind {kind!r}")


def normalized_adjacency_gap(L, L_tilde):
    """Spectral norm of ``D^-1/2 (A_tilde - A) D^-1/2`` with ``D`` taken from ``L``."""
    if not isinstance(L, Laplacian):
        L = Laplacian(L)
    if not isinstance(L_tilde, Laplacian):
        L_tilde = Laplacian(L_tilde)
    if L.n != L_tilde.n:
        raise ArgumentError("dimension mismatch")
    d = L.degrees
    if np.any(d <= 0):
        raise ArgumentError("isolated vertex in the reference graph")
    diff = (L_tilde.adjacency() - L.adjacency()).toarray()
    s = 1.0 / np.sqrt(d)
    M = s[:, None] * diff * s[None, :]
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(max(abs(w[0]), abs(w[-1])))


def write_matrix_market(path, L):
    M = L.matrix if isinstance(L, Laplacian) else sp.csr_matrix(L)
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), symmetry="symmetric")


def read_matrix_market(path):
    return Laplacian(sp.csr_matrix(scipy.io.mmread(str(path))))


def write_vector_csv(path, x):
    np.savetxt(path, np.asarray(x, dtype=float).reshape(-1, 1), delimiter=",",
               fmt="%.17g")


def read_vector_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=1).ravel()


def write_edges(path, edges):
    """Edge list as an ``n1 x n2`` Matrix Market pattern."""
    M = sp.coo_matrix((np.ones(edges.m), (edges.rows, edges.cols)),
                      shape=(edges.n1, edges.n2))
    scipy.io.mmwrite(str(path), M, field="pattern")


def read_edges(path):
    M = sp.coo_matrix(scipy.io.mmread(str(path)))
    return EdgeList(M.shape[0], M.shape[1], M.row, M.col)

"""Weighted non-convex matrix completion.

Asymmetric objective on ``Z = (U; V)``::

    f(U, V) = 2 ||U V^T - M*||_W^2 + 1/2 ||U^T U - V^T V||_F^2 + Q(U, V)

and its symmetric (PSD) counterpart ``f(U) = 1/2 ||U U^T - M*||_W^2 + Q(U)``,
where ``||A||_W^2 = sum_ij W_ij A_ij^2`` and
``Q(U, V) = lam1 sum_i (||U_i|| - alpha1)_+^4 + lam2 sum_j (||V_j|| - alpha2)_+^4``
penalizes rows that grow past the incoherence scale.

A :class:`Factorization` with ``V = None`` selects the symmetric variant.
"""
from dataclasses import dataclass, field
import json
import math
import warnings

import numpy as np

from .errors import ArgumentError, DivergenceError


# --------------------------------------------------------------------------
# data types

@dataclass
class GroundTruth:
    """Rank-r matrix ``M* = U* V*^T`` with balanced factors
    (``U*^T U* = V*^T V* = diag(sigma)``)."""

    U: np.ndarray
    V: np.ndarray
    sigma: np.ndarray = None
    mu: float = None
    kappa: float = None
    symmetric: bool = False

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ArgumentError("factors must be 2-d with matching rank")
        s = np.linalg.svd(self.M, compute_uv=False)[:self.r]
        if self.sigma is None:
            self.sigma = s
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma[-1] <= 0:
            raise ArgumentError("ground truth is rank deficient")
        if self.mu is None:
            self.mu = incoherence(self.M, self.r)
        if self.kappa is None:
            self.kappa = float(self.sigma[0] / self.sigma[-1])

    @property
    def M(self):
        return self.U @ self.V.T

    @property
    def r(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]

    def meta(self):
        return {"n1": self.shape[0], "n2": self.shape[1], "r": self.r,
                "sigma": [float(x) for x in self.sigma], "mu": float(self.mu),
                "kappa": float(self.kappa), "symmetric": bool(self.symmetric)}

    def save(self, prefix):
        """Write ``<prefix>_U.csv``, ``<prefix>_V.csv`` and ``<prefix>.json``."""
        np.savetxt(f"{prefix}_U.csv", self.U, delimiter=",", fmt="%.17g")
        np.savetxt(f"{prefix}_V.csv", self.V, delimiter=",", fmt="%.17g")
        with open(f"{prefix}.json", "w") as fh:
            json.dump(self.meta(), fh, indent=2)

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.json") as fh:
            meta = json.load(fh)
        U = np.loadtxt(f"{prefix}_U.csv", delimiter=",", ndmin=2)
        V = np.loadtxt(f"{prefix}_V.csv", delimiter=",", ndmin=2)
        return cls(U, V, np.array(meta["sigma"]), meta["mu"], meta["kappa"],
                   meta.get("symmetric", False))


@dataclass
class RegularizerParams:
    """Row-norm thresholds ``alpha`` and penalty weights ``lam``."""

    alpha1: float
    alpha2: float
    lam1: float
    lam2: float
    C: float = 10.0

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.lam1, self.lam2) <= 0:
            raise ArgumentError("regularizer parameters must be positive")

    @classmethod
    def from_spectrum(cls, n1, n2, r, mu, sigma1, kappa, C=10.0):
        """``alpha_k^2 = C mu r sigma1 / n_k``, ``lam1 = lam2 = C^2 n1 / (mu r kappa)``."""
        a1 = math.sqrt(C * mu * r * sigma1 / n1)
        a2 = math.sqrt(C * mu * r * sigma1 / n2)
        lam = C ** 2 * n1 / (mu * r * kappa)
        return cls(a1, a2, lam, lam, C)

    @classmethod
    def for_ground_truth(cls, gt, C=10.0):
        n1, n2 = gt.shape
        return cls.from_spectrum(n1, n2, gt.r, gt.mu, gt.sigma[0], gt.kappa, C)

    @classmethod
    def estimate(cls, obs, W, r, C=10.0):
        """Parameters from the top-r SVD of ``W * M_obs``, for when the truth
        is unknown (``W`` should be close to all-ones)."""
        Mo, Wd = problem_data(obs, W)
        X, s, Yt = np.linalg.svd(Wd * Mo, full_matrices=False)
        if s[r - 1] <= 0:
            raise ArgumentError(f"weighted observations have rank below {r}")
        n1, n2 = Mo.shape
        mu = max(np.max(np.sum(X[:, :r] ** 2, axis=1)) * n1 / r,
                 np.max(np.sum(Yt[:r] ** 2, axis=0)) * n2 / r)
        return cls.from_spectrum(n1, n2, r, float(mu), float(s[0]),
                                 float(s[0] / s[r - 1]), C)

    def to_dict(self):
        return {"alpha1": self.alpha1, "alpha2": self.alpha2,
                "lam1": self.lam1, "lam2": self.lam2, "C": self.C}


@dataclass
class Factorization:
    U: np.ndarray
    V: np.ndarray = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        if self.V is not None:
            self.V = np.asarray(self.V, dtype=float)
            if self.V.shape[1] != self.U.shape[1]:
                raise ArgumentError("U and V ranks differ")
        if not np.all(np.isfinite(self.U)) or (
                self.V is not None and not np.all(np.isfinite(self.V))):
            raise ArgumentError("non-finite factor entries")

    @property
    def symmetric(self):
        return self.V is None

    @property
    def Z(self):
        return self.U if self.V is None else np.vstack([self.U, self.V])

    @property
    def M(self):
        return self.U @ (self.U if self.V is None else self.V).T

    def split(self, Z):
        """Inverse of ``Z`` for a stacked array of matching shape."""
        if self.V is None:
            return Factorization(Z)
        n1 = self.U.shape[0]
        return Factorization(Z[:n1], Z[n1:])

    def save(self, prefix):
        np.savetxt(f"{prefix}_U.csv", self.U, delimiter=",", fmt="%.17g")
        if self.V is not None:
            np.savetxt(f"{prefix}_V.csv", self.V, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, prefix, symmetric=False):
        U = np.loadtxt(f"{prefix}_U.csv", delimiter=",", ndmin=2)
        V = None if symmetric else np.loadtxt(f"{prefix}_V.csv", delimiter=",", ndmin=2)
        return cls(U, V)


@dataclass
class AlignmentResult:
    R: np.ndarray
    delta: np.ndarray
    dist: float
    dist_outer: float
    note: str = ""


# --------------------------------------------------------------------------
# weighted norms and problem data

def weighted_inner(A, B, W):
    """``<A, B>_W = sum_ij W_ij A_ij B_ij``."""
    A, B, W = (np.asarray(x, dtype=float) for x in (A, B, W))
    if not (A.shape == B.shape == W.shape):
        raise ArgumentError(f"shape mismatch {A.shape}, {B.shape}, {W.shape}")
    return float(np.sum(W * A * B))


def weighted_norm_sq(A, W):
    return weighted_inner(A, A, W)


def _dense_weights(W, shape):
    if W is None:
        return np.ones(shape)
    if hasattr(W, "toarray"):
        W = W.toarray()
    W = np.asarray(W, dtype=float)
    if W.shape != shape:
        raise ArgumentError(f"weight shape {W.shape} != {shape}")
    return W


def problem_data(obs, W=None):
    """Dense ``(M_obs, W)`` for an observation set and weights.

    ``obs`` may be an ``ObservationSet`` or a pair ``(values, mask)``. Weights
    default to the observation indicator and must vanish off the mask.
    """
    if hasattr(obs, "dense"):
        Mo, mask = obs.dense()
    else:
        Mo, mask = obs
        Mo = np.asarray(Mo, dtype=float)
        mask = np.asarray(mask, dtype=bool)
    Wd = mask.astype(float) if W is None else _dense_weights(W, Mo.shape)
    if np.any(Wd[~mask] != 0):
        raise ArgumentError("weights are supported outside the observed entries")
    if np.any(Wd < 0):
        raise ArgumentError("weights must be nonnegative")
    return np.where(mask, Mo, 0.0), Wd


# --------------------------------------------------------------------------
# regularizer

def _row_q(X, alpha, lam):
    s = np.linalg.norm(X, axis=1)
    e = np.maximum(s - alpha, 0.0)
    return s, e


def reg_value(X, alpha, lam):
    _, e = _row_q(X, alpha, lam)
    return float(lam * np.sum(e ** 4))


def reg_grad(X, alpha, lam):
    """Rows ``4 lam (||X_i|| - alpha)_+^3 X_i / ||X_i||`` (zero rows give zero)."""
    s, e = _row_q(X, alpha, lam)
    coef = np.where(e > 0, 4 * lam * e ** 3 / np.where(s > 0, s, 1.0), 0.0)
    return coef[:, None] * X


def reg_hess_form(X, D, alpha, lam):
    """``d^2/dt^2 Q(X + t D)`` at ``t = 0``."""
    s, e = _row_q(X, alpha, lam)
    on = e > 0
    if not np.any(on):
        return 0.0
    s, e, Xo, Do = s[on], e[on], X[on], D[on]
    c = np.sum(Xo * Do, axis=1) / s
    dd = np.sum(Do * Do, axis=1)
    h1 = 4 * lam * e ** 3
    h2 = 12 * lam * e ** 2
    return float(np.sum(h2 * c ** 2 + h1 / s * (dd - c ** 2)))


# --------------------------------------------------------------------------
# objective, gradient, Hessian

def _parts(F, obs, W):
    Mo, Wd = problem_data(obs, W)
    n1 = F.U.shape[0]
    n2 = n1 if F.V is None else F.V.shape[0]
    if Mo.shape != (n1, n2):
        raise ArgumentError(f"factor shapes do not match observations {Mo.shape}")
    return Mo, Wd


def objective(F, obs, W, params):
    """Value of the (a)symmetric objective at ``F``."""
    Mo, Wd = _parts(F, obs, W)
    return _value(F.U, F.V, Mo, Wd, params)


def _value(U, V, Mo, Wd, params):
    if V is None:
        R = U @ U.T - Mo
        return 0.5 * float(np.sum(Wd * R * R)) + reg_value(U, params.alpha1, params.lam1)
    R = U @ V.T - Mo
    B = U.T @ U - V.T @ V
    return (2.0 * float(np.sum(Wd * R * R)) + 0.5 * float(np.sum(B * B))
            + reg_value(U, params.alpha1, params.lam1)
            + reg_value(V, params.alpha2, params.lam2))


def _grad(U, V, Mo, Wd, params):
    if V is None:
        R = Wd * (U @ U.T - Mo)
        return (R + R.T) @ U + reg_grad(U, params.alpha1, params.lam1), None
    R = Wd * (U @ V.T - Mo)
    B = U.T @ U - V.T @ V
    GU = 4 * R @ V + 2 * U @ B + reg_grad(U, params.alpha1, params.lam1)
    GV = 4 * R.T @ U - 2 * V @ B + reg_grad(V, params.alpha2, params.lam2)
    return GU, GV


def gradient(F, obs, W, params):
    """``(G_U, G_V)``; ``G_V`` is ``None`` for the symmetric variant."""
    Mo, Wd = _parts(F, obs, W)
    return _grad(F.U, F.V, Mo, Wd, params)


def hessian_quadratic_form(F, D, obs, W, params):
    """``D^T [Hessian of f at F] D``, i.e. ``d^2/dt^2 f(F + t D)`` at 0.

    ``D`` is a :class:`Factorization` (or a stacked array shaped like ``F.Z``).
    """
    Mo, Wd = _parts(F, obs, W)
    if not isinstance(D, Factorization):
        D = np.asarray(D, dtype=float)
        if D.shape != F.Z.shape:
            raise ArgumentError("direction shape does not match the factors")
        D = F.split(D)
    U, V, dU, dV = F.U, F.V, D.U, D.V
    if dU.shape != U.shape or (V is not None and (dV is None or dV.shape != V.shape)):
        raise ArgumentError("direction shape does not match the factors")
    if V is None:
        R = U @ U.T - Mo
        X1 = dU @ U.T + U @ dU.T
        X2 = dU @ dU.T
        val = np.sum(Wd * X1 * X1) + 2 * np.sum(Wd * R * X2)
        return float(val + reg_hess_form(U, dU, params.alpha1, params.lam1))
    R = U @ V.T - Mo
    X1 = dU @ V.T + U @ dV.T
    X2 = dU @ dV.T
    B = U.T @ U - V.T @ V
    E = dU.T @ U + U.T @ dU - dV.T @ V - V.T @ dV
    Fq = dU.T @ dU - dV.T @ dV
    val = (4 * np.sum(Wd * X1 * X1) + 8 * np.sum(Wd * R * X2)
           + np.sum(E * E) + 2 * np.sum(B * Fq))
    return float(val + reg_hess_form(U, dU, params.alpha1, params.lam1)
                 + reg_hess_form(V, dV, params.alpha2, params.lam2))


def hessian_matrix(F, obs, W, params):
    """Dense Hessian in the coordinates of ``F.Z`` (small problems only),
    assembled from quadratic forms by polarization."""
    N = F.Z.size
    shape = F.Z.shape
    basis = np.eye(N)
    q = lambda v: hessian_quadratic_form(F, v.reshape(shape), obs, W, params)
    diag = np.array([q(basis[i]) for i in range(N)])
    H = np.diag(diag)
    for i in range(N):
        for j in range(i + 1, N):
            H[i, j] = H[j, i] = 0.5 * (q(basis[i] + basis[j]) - diag[i] - diag[j])
    return H


# --------------------------------------------------------------------------
# alignment, errors, lemma checks

def optimal_rotation(Z, Zstar):
    """Orthonormal ``R`` minimizing ``||Z - Z* R||_F`` (Procrustes)."""
    Z = np.asarray(Z, dtype=float)
    Zs = np.asarray(Zstar, dtype=float)
    if Z.shape != Zs.shape:
        raise ArgumentError("shape mismatch")
    r = Z.shape[1]
    if not np.any(Zs):
        R, note = np.eye(r), "reference is zero; identity returned"
    else:
        A, _, Bt = np.linalg.svd(Zs.T @ Z)
        R, note = A @ Bt, ""
    D = Z - Zs @ R
    return AlignmentResult(R, D, float(np.linalg.norm(D)),
                           float(np.linalg.norm(D @ D.T)), note)


def recovery_error(F, gt):
    """``||U V^T - M*||_F^2 / ||M*||_F^2``."""
    Ms = gt.M if isinstance(gt, GroundTruth) else np.asarray(gt, dtype=float)
    M = F.M if isinstance(F, Factorization) else np.asarray(F, dtype=float)
    if M.shape != Ms.shape:
        raise ArgumentError("shape mismatch")
    den = float(np.sum(Ms * Ms))
    if den == 0:
        raise ArgumentError("ground truth is zero")
    return float(np.sum((M - Ms) ** 2)) / den


def khatri_rao_rows(X):
    """Row-wise Khatri-Rao square: row i is ``kron(X_i, X_i)``."""
    X = np.asarray(X, dtype=float)
    return np.einsum("ia,ib->iab", X, X).reshape(X.shape[0], -1)


@dataclass
class NormPreservation:
    lhs: float
    rhs: float
    lhs_direct: float
    lhs_khatri_rao: float

    @property
    def holds(self):
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300

    @property
    def routes_agree(self):
        scale = max(abs(self.lhs_direct), abs(self.lhs_khatri_rao), 1e-300)
        return abs(self.lhs_direct - self.lhs_khatri_rao) <= 1e-10 * scale


def check_norm_preservation(X, Y, W):
    """Both sides of ``| ||XY^T||_W^2 - ||XY^T||_F^2 | <= ||W - J|| ||X||_F ||Y||_F
    max_i ||X_i|| max_j ||Y_j||``.

    The left side is evaluated by direct summation and through the identity
    ``(X Y^T)_ij^2 = <kron(X_i, X_i), kron(Y_j, Y_j)>``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    W = _dense_weights(W, (X.shape[0], Y.shape[0]))
    D = W - 1.0
    P = X @ Y.T
    direct = float(np.sum(D * P * P))
    KX, KY = khatri_rao_rows(X), khatri_rao_rows(Y)
    kr = float(np.sum(KX * (D @ KY)))
    rhs = (float(np.linalg.norm(D, 2)) * np.linalg.norm(X) * np.linalg.norm(Y)
           * np.linalg.norm(X, axis=1).max() * np.linalg.norm(Y, axis=1).max())
    return NormPreservation(abs(direct), float(rhs), direct, kr)


def check_norm_relations(U, Ustar):
    """Symmetric-case relations between ``Delta = U - U* R`` and ``M - M*``.

    Returns a dict with both sides of ``||Delta Delta^T||_F^2 <= 2 ||M - M*||_F^2``
    and ``sigma_r ||Delta||_F^2 <= ||M - M*||_F^2 / (2 (sqrt 2 - 1))``.
    """
    al = optimal_rotation(U, Ustar)
    Ms = Ustar @ Ustar.T
    err = float(np.sum((U @ U.T - Ms) ** 2))
    sig_r = float(np.linalg.svd(Ustar, compute_uv=False)[-1] ** 2)
    out = {
        "outer_lhs": al.dist_outer ** 2, "outer_rhs": 2 * err,
        "dist_lhs": sig_r * al.dist ** 2,
        "dist_rhs": err / (2 * (math.sqrt(2) - 1)),
    }
    tol = 1e-10 * max(err, 1e-300)
    out["holds"] = (out["outer_lhs"] <= out["outer_rhs"] + tol
                    and out["dist_lhs"] <= out["dist_rhs"] + tol)
    return out


def regularizer_curvature_gap(F, Fstar, params, sigma_r):
    """Left side ``[Hess Q](Delta) - 4 <grad Q, Delta>`` and right side
    ``0.1 sigma_r ||Delta||_F^2`` with ``Delta`` from the optimal rotation."""
    al = optimal_rotation(F.Z, Fstar.Z)
    D = F.split(al.delta)
    lhs = reg_hess_form(F.U, D.U, params.alpha1, params.lam1)
    lhs -= 4 * float(np.sum(reg_grad(F.U, params.alpha1, params.lam1) * D.U))
    if F.V is not None:
        lhs += reg_hess_form(F.V, D.V, params.alpha2, params.lam2)
        lhs -= 4 * float(np.sum(reg_grad(F.V, params.alpha2, params.lam2) * D.V))
    rhs = 0.1 * sigma_r * al.dist ** 2
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-12 * max(rhs, 1.0)}


def row_norm_bounds(n1, n2, r, mu, sigma1, params, symmetric=False):
    """Row-norm bounds at stationary points implied by the gradient condition.

    Symmetric: ``max_i ||U_i||^2 <= max(4 alpha^2, 4 mu r sigma1 / lam)``.
    Asymmetric: ``max(4 alpha1^2, s^2)`` with ``s`` the positive root of
    ``lam/2 s^2 = 4 mu r sigma1 + 4 sqrt(n1 mu r sigma1) s`` (and likewise for V
    with n2, alpha2, lam2).
    """
    if symmetric:
        b = max(4 * params.alpha1 ** 2, 4 * mu * r * sigma1 / params.lam1)
        return b, None

    def one(n, alpha, lam):
        a = lam / 2
        bb = 4 * math.sqrt(n * mu * r * sigma1)
        c = 4 * mu * r * sigma1
        s = (bb + math.sqrt(bb * bb + 4 * a * c)) / (2 * a)
        return max(4 * alpha ** 2, s * s)

    # the proof bounds the side with the larger sqrt(n) * max row norm, so
    # both sides obey the bound computed with either dimension
    bu = max(one(n1, params.alpha1, params.lam1),
             one(n2, params.alpha2, params.lam2) * n2 / n1)
    bv = max(one(n2, params.alpha2, params.lam2),
             one(n1, params.alpha1, params.lam1) * n1 / n2)
    return bu, bv


def row_norm_diagnostics(F, params, gt, obs=None, W=None, grad_tol=None):
    """Measured max squared row norms against the stationary-point bounds.

    When ``obs`` and ``grad_tol`` are given and the gradient norm exceeds the
    tolerance, the bounds do not apply and ``applicable`` is ``False``.
    """
    n1, n2 = gt.shape
    bu, bv = row_norm_bounds(n1, n2, gt.r, gt.mu, gt.sigma[0], params, F.symmetric)
    out = {"max_row_sq_U": float(np.max(np.sum(F.U ** 2, axis=1))),
           "bound_U": bu, "applicable": True}
    if F.V is not None:
        out["max_row_sq_V"] = float(np.max(np.sum(F.V ** 2, axis=1)))
        out["bound_V"] = bv
    if obs is not None and grad_tol is not None:
        g = gradient(F, obs, W, params)
        gn = math.sqrt(sum(float(np.sum(x * x)) for x in g if x is not None))
        out["grad_norm"] = gn
        out["applicable"] = gn <= grad_tol
    out["within"] = out["max_row_sq_U"] <= bu and (
        F.V is None or out["max_row_sq_V"] <= bv)
    return out


# --------------------------------------------------------------------------
# initialization and solver

def top_singular_value(obs, W=None):
    Mo, Wd = problem_data(obs, W)
    return float(np.linalg.norm(Wd * Mo, 2))


def svd_initialize(obs, W, r, symmetric=False):
    """Top-r SVD of ``W * M_obs`` split as ``U = X D^1/2, V = Y D^1/2``."""
    Mo, Wd = problem_data(obs, W)
    if Mo.size == 0 or not np.any(Wd):
        raise ArgumentError("no observations")
    X, s, Yt = np.linalg.svd(Wd * Mo, full_matrices=False)
    keep = int(np.sum(s[:r] > 1e-12 * max(s[0], 1e-300)))
    if keep < r:
        warnings.warn(f"weighted matrix has rank {keep} < {r}")
    sq = np.sqrt(s[:keep])
    U = X[:, :keep] * sq
    if symmetric:
        return Factorization(U)
    return Factorization(U, Yt[:keep].T * sq)


@dataclass
class PGDConfig:
    """Hyperparameters of perturbed gradient descent.

    Defaults scale with ``s1``, the top singular value of ``W * M_obs``:
    ``step = 1 / (8 s1)``, ``grad_tol = tol_rel * s1^1.5``,
    ``radius = grad_tol * step`` and ``f_thres = grad_tol^2 * step``.
    With ``backtrack`` the step is halved (permanently) whenever a gradient
    step fails to decrease the objective by ``step/2 ||grad||^2``.
    """

    step: float = None
    max_iter: int = 100_000
    tol_rel: float = 1e-7
    grad_tol: float = None
    radius: float = None
    interval: int = 500
    f_thres: float = None
    perturb: bool = True
    backtrack: bool = True
    seed: int = 0
    trace_every: int = 1

    def resolved(self, s1):
        step = self.step if self.step is not None else 1.0 / (8.0 * s1)
        gtol = self.grad_tol if self.grad_tol is not None else self.tol_rel * s1 ** 1.5
        radius = self.radius if self.radius is not None else gtol * step
        fth = self.f_thres if self.f_thres is not None else gtol ** 2 * step
        return step, gtol, radius, fth


@dataclass
class PGDResult:
    factors: Factorization
    iterations: int
    grad_norm: float
    converged: bool
    perturbations: int
    trace: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)


def solve_pgd(init, obs, W, params, hyper=None):
    """Perturbed gradient descent on the weighted objective.

    Runs gradient steps until the gradient norm falls below the tolerance.
    Then, unless perturbation is disabled, it remembers the point, adds a
    seeded random displacement of norm ``radius`` and keeps descending for
    ``interval`` steps; if the objective has not dropped by ``f_thres`` below
    the remembered value, the remembered point is returned as a local
    minimum, otherwise descent continues from the new point.

    Returns
    -------
    PGDResult

    Raises
    ------
    DivergenceError
        Objective exceeds ten times its initial value.
    """
    hyper = PGDConfig() if hyper is None else hyper
    Mo, Wd = _parts(init, obs, W)
    s1 = float(np.linalg.norm(Wd * Mo, 2))
    if s1 == 0:
        raise ArgumentError("observed weighted matrix is zero")
    step, gtol, radius, fth = hyper.resolved(s1)
    step0 = step
    rng = np.random.default_rng(hyper.seed)
    sym = init.V is None
    n1 = init.U.shape[0]
    Z = init.Z.copy()

    def split(Z):
        return (Z, None) if sym else (Z[:n1], Z[n1:])

    def fg(Z):
        U, V = split(Z)
        GU, GV = _grad(U, V, Mo, Wd, params)
        G = GU if sym else np.vstack([GU, GV])
        return _value(U, V, Mo, Wd, params), G

    f, G = fg(Z)
    f0 = f
    limit = 10.0 * f0 + 1e-8 * s1 ** 2
    trace = []
    saved = None  # (Z, f, iteration) at the last perturbation
    perturbations = 0
    converged = False
    it = 0
    gn = float(np.linalg.norm(G))
    while True:
        if it % hyper.trace_every == 0:
            trace.append({"iter": it, "objective": f, "grad_norm": gn,
                          "max_row_norm": float(np.max(np.linalg.norm(Z, axis=1)))})
        if saved is not None and it - saved[2] >= hyper.interval:
            if saved[1] - f < fth:
                Z, f, gn = saved[0], saved[1], saved[3]
                converged = True
                break
            saved = None
        if gn <= gtol and saved is None:
            if not hyper.perturb:
                converged = True
                break
            xi = rng.standard_normal(Z.shape)
            xi *= radius * rng.random() ** (1.0 / Z.size) / np.linalg.norm(xi)
            saved = (Z.copy(), f, it, gn)
            perturbations += 1
            Z = Z + xi
            f, G = fg(Z)
        if it >= hyper.max_iter:
            break
        Zn = Z - step * G
        fn, Gn = fg(Zn)
        if hyper.backtrack:
            # shrink until the descent-lemma decrease holds, up to rounding in f
            slack = 64 * np.finfo(float).eps * abs(f)
            while fn > f - 0.5 * step * gn ** 2 + slack and step > 1e-12 * step0:
                step *= 0.5
                Zn = Z - step * G
                fn, Gn = fg(Zn)
        Z, f, G = Zn, fn, Gn
        gn = float(np.linalg.norm(G))
        it += 1
        if not np.isfinite(f) or f > limit:
            trace.append({"iter": it, "objective": f, "grad_norm": gn,
                          "max_row_norm": float(np.max(np.linalg.norm(Z, axis=1)))})
            raise DivergenceError(
                f"objective {f:.6g} exceeded 10x its initial value {f0:.6g}", trace)
    U, V = split(Z)
    return PGDResult(Factorization(U, V), it, gn, converged, perturbations, trace,
                     {"step": step0, "final_step": step, "grad_tol": gtol, "radius": radius,
                      "f_thres": fth, "s1": s1})


def incoherence(M, r=None):
    """Smallest ``mu`` with ``||X_i||^2 <= mu r / n1`` and ``||Y_j||^2 <= mu r / n2``
    for the top-r singular vectors ``X, Y`` of ``M``."""
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        raise ArgumentError("zero matrix has no incoherence")
    X, s, Yt = np.linalg.svd(M, full_matrices=False)
    if r is None:
        r = int(np.sum(s > 1e-10 * s[0]))
    X, Y = X[:, :r], Yt[:r].T
    n1, n2 = M.shape
    return float(max(np.max(np.sum(X ** 2, axis=1)) * n1 / r,
                     np.max(np.sum(Y ** 2, axis=1)) * n2 / r))

"""Numeric checks of the guarantees behind the reweighting step."""
import math

import numpy as np

from ..errors import ArgumentError
from ..spectral_core import complete_bipartite_laplacian

# ||W - J|| / sqrt(n1 n2) <= 3 (1 - lam_min) and 1 - lam_min <= 10 (beta + eps)
C_W_DERIVED = 30.0


def _margin(lhs, rhs):
    return {"lhs": float(lhs), "rhs": float(rhs), "margin": float(rhs - lhs),
            "pass": bool(lhs <= rhs)}


def potential_monotone(log, rel=1e-9):
    """``Phi_{j+1} <= Phi_j (1 + rel)`` along a run log."""
    worst, at = -math.inf, None
    for e in log:
        r = e["phi_next"] / e["phi"] - 1.0
        if r > worst:
            worst, at = r, e["j"]
    out = _margin(max(worst, -1.0) if log else 0.0, rel)
    out["worst_iteration"] = at
    return out


def weight_contract(W, beta, eps, c_w=C_W_DERIVED):
    """Support-independent parts of the weight contract: row sums ``<= n2``,
    column sums ``<= n1``, ``||W - J|| / sqrt(n1 n2) <= c_w (beta + eps)``."""
    W = np.asarray(W.toarray() if hasattr(W, "toarray") else W, dtype=float)
    n1, n2 = W.shape
    dist = float(np.linalg.norm(W - 1.0, 2)) / math.sqrt(n1 * n2)
    return {"row_sums": _margin(W.sum(axis=1).max(), n2),
            "col_sums": _margin(W.sum(axis=0).max(), n1),
            "dist_to_J": _margin(dist, c_w * (beta + eps)),
            "c_w_measured": dist / (beta + eps), "c_w": c_w}


def laplacian_to_adjacency(W):
    """Closeness of a bipartite weighting to the complete graph.

    With ``eps = 1 - lam_min(L_G^-1/2 L_W L_G^-1/2)`` and ``L_W <= L_G``,
    checks ``(1 - eps) D <= D_W <= D`` and
    ``||D^-1/2 (A_W - A) D^-1/2|| <= 3 eps``.
    """
    W = np.asarray(W.toarray() if hasattr(W, "toarray") else W, dtype=float)
    n1, n2 = W.shape
    n = n1 + n2
    A = np.zeros((n, n))
    A[:n1, n1:] = W
    A[n1:, :n1] = W.T
    LW = np.diag(A.sum(axis=1)) - A
    LG = complete_bipartite_laplacian(n1, n2).toarray()
    lam, E = np.linalg.eigh(LG)
    S = E[:, 1:] / np.sqrt(lam[1:])
    mu = np.linalg.eigvalsh(S.T @ LW @ S)
    eps = max(1.0 - mu[0], 0.0)
    dG = np.diag(LG)
    dW = A.sum(axis=1)
    scale = 1.0 / np.sqrt(dG)
    AG = -LG
    np.fill_diagonal(AG, 0.0)
    K = scale[:, None] * (A - AG) * scale[None, :]
    return {"eps": eps, "lam_max": float(mu[-1]),
            "upper": _margin(mu[-1], 1.0 + 1e-9),
            "degrees_low": _margin(np.max((1 - eps) * dG - dW), 1e-9 * dG.max()),
            "degrees_high": _margin(np.max(dW - dG), 1e-9 * dG.max()),
            "adjacency": _margin(float(np.linalg.norm(K, 2)), 3 * eps + 1e-9)}


def potential_first_order(A, Delta, u, ell, eps):
    """The four first-order potential inequalities for ``A +- Delta``.

    Preconditions: ``ell I < A < u I``, ``u - ell <= 1``, ``0 <= Delta``,
    ``Delta <= eps (uI - A)^2`` and ``Delta <= eps (A - ell I)^2``, ``eps <= 1/10``.
    """
    A = 0.5 * (np.asarray(A, float) + np.asarray(A, float).T)
    D = 0.5 * (np.asarray(Delta, float) + np.asarray(Delta, float).T)
    lam, Q = np.linalg.eigh(A)
    if not (ell < lam[0] and lam[-1] < u and u - ell <= 1 and eps <= 0.1):
        raise ArgumentError("barrier preconditions do not hold")

    def phi_u(lmb):
        return float(np.sum(np.exp(1 / (u - lmb))))

    def phi_l(lmb):
        return float(np.sum(np.exp(1 / (lmb - ell))))

    gu, gl = u - lam, lam - ell
    Cm = (Q * (np.exp(1 / gu) / gu ** 2)) @ Q.T
    Cp = (Q * (np.exp(1 / gl) / gl ** 2)) @ Q.T
    cm, cp = float(np.sum(Cm * D)), float(np.sum(Cp * D))
    lp = np.linalg.eigvalsh(A + D)
    lm = np.linalg.eigvalsh(A - D)
    pu, pl = phi_u(lam), phi_l(lam)
    return {
        "u_plus": _margin(phi_u(lp), pu + (1 + 2 * eps) * cm),
        "l_plus": _margin(phi_l(lp), pl - (1 - 2 * eps) * cp),
        "u_minus": _margin(phi_u(lm), pu - (1 - 2 * eps) * cm),
        "l_minus": _margin(phi_l(lm), pl + (1 + 2 * eps) * cp),
    }


def admissible_direction(A, V, u, ell, eps):
    """Scale ``V V^T`` to the largest multiple admissible for
    :func:`potential_first_order`."""
    A = 0.5 * (A + A.T)
    lam, Q = np.linalg.eigh(A)
    D = V @ V.T
    t = math.inf
    for g in (u - lam, lam - ell):
        Ginv = (Q / g) @ Q.T  # (gap)^-1, so gap^-1 D gap^-1 <= t^-1 eps
        top = np.linalg.eigvalsh(Ginv @ D @ Ginv)[-1]
        if top > 0:
            t = min(t, eps / top)
    return D * (t if math.isfinite(t) else 0.0)

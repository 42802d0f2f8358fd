"""Numerical backends for the reweighting loop.

``ExactBackend`` materializes the normalized operator and eigendecomposes
it. ``FastBackend`` only touches it through Laplacian solves, truncated
Taylor polynomials and (when cheaper) Johnson-Lindenstrauss sketches.
"""
import math

import numpy as np

from ..errors import StateError
from ..spectral_core import (build_laplacian, build_poly_exp,
                             build_poly_exp_half_inv, build_poly_inv_square,
                             complete_bipartite_edges, complete_bipartite_pinv,
                             extreme_eigs,
                             incidence_matrix, jl_sketch,
                             SketchConfig)
from .core import _potential_from_eigs


def _barrier_error(state, lo, hi):
    return StateError(
        f"barrier violated at iteration {state.j}: spectrum [{lo:.6g}, {hi:.6g}] "
        f"not inside ({state.ell:.6g}, {state.u:.6g})", state)


class ExactBackend:
    name = "exact"

    def __init__(self, problem):
        self.p = problem
        self._key = None
        self._eig = None

    def eig(self, w):
        if self._key is None or not np.array_equal(self._key, w):
            self._eig = np.linalg.eigh(self.p.normalized_operator(w))
            self._key = np.array(w, copy=True)
        return self._eig

    def potential(self, state):
        lam, _ = self.eig(state.weights)
        return _potential_from_eigs(lam, state.u, state.ell)

    def check_barriers(self, state):
        lam, _ = self.eig(state.weights)
        if not (state.ell < lam[0] and lam[-1] < state.u):
            raise _barrier_error(state, lam[0], lam[-1])

    def extremes(self, w):
        lam, _ = self.eig(w)
        return float(lam[0]), float(lam[-1])

    def rho(self, state):
        lam, _ = self.eig(state.weights)
        gap = min(state.u - lam[-1], lam[0] - state.ell)
        if gap <= 0:
            raise _barrier_error(state, lam[0], lam[-1])
        return float(gap) ** 2

    def gradient_spectra(self, state):
        """Eigenvalues of ``C+`` and ``C-`` (same eigenbasis as ``A``)."""
        lam, Q = self.eig(state.weights)
        gm = state.u - lam
        gp = lam - state.ell
        fm = np.exp(1.0 / gm) / gm ** 2
        fp = np.exp(1.0 / gp) / gp ** 2
        return fp, fm, Q

    def scores(self, state):
        fp, fm, Q = self.gradient_spectra(state)
        SQ = self.p.S @ Q
        cm = self.p.edge_quad((SQ * fm) @ SQ.T)
        cp = self.p.edge_quad((SQ * fp) @ SQ.T)
        return np.maximum(cp, 0), np.maximum(cm, 0), float(fp.sum()), float(fm.sum())

    def lam_max(self, x):
        return float(np.linalg.eigvalsh(self.p.normalized_operator(x))[-1])

    def mwu_eval(self, a, y, K):
        """Top eigenvalue of ``Psi = sum_e a_e y_e v_e v_e^T`` and the
        normalized scores ``a_e v_e^T P v_e`` with
        ``P = exp(K Psi / lam_max) / tr(...)``."""
        theta, R = np.linalg.eigh(self.p.normalized_operator(a * y))
        lam = theta[-1]
        e = np.exp(K * (theta / lam - 1.0))
        e /= e.sum()
        SR = self.p.S @ R
        s = a * self.p.edge_quad((SR * e) @ SR.T)
        return float(lam), s


class FastBackend:
    """Polynomial/sketch backend.

    Functions of ``A = L_G^-1/2 L_w L_G^-1/2`` are applied as functions of
    ``T = L_G^+ L_w``, using ``f(A) L_G^-1/2 b = L_G^1/2 f(T) L_G^+ b``, so every
    quantity reduces to blocks ``f(T) X0`` and quadratic forms in ``L_G``.
    ``L_G^+`` is applied in closed form. ``X0`` is ``L_G^+`` itself when the sketch would have at least ``n``
    columns, and ``L_G^+ B_G^T Q^T`` otherwise.
    """

    name = "fast"

    def __init__(self, problem, cfg):
        self.p = problem
        self.cfg = cfg
        self.LG = problem.LG
        self.L = problem.LG.matrix
        n = problem.n
        self._Lpinv = None
        self._BG = None
        self.audit = n <= cfg.audit_limit
        self._exact = None
        self.calls = 0
        self.phi0 = 2.0 * problem.dim * math.exp(4.0)

    # -- linear algebra helpers -------------------------------------------
    def solve(self, X):
        self.calls += 1
        return complete_bipartite_pinv(self.p.n1, self.p.n2, X)

    def T(self, w):
        Lw = self.p.laplacian(w)
        return lambda Y: self.solve(Lw @ Y)

    @property
    def Lpinv(self):
        if self._Lpinv is None:
            n = self.p.n
            self._Lpinv = self.solve(np.eye(n) - 1.0 / n)
        return self._Lpinv

    def start_block(self, eps_jl, salt):
        """``(X0, sketched)``; the sketch is drawn from ``seed`` and ``salt``."""
        n = self.p.n
        sk = SketchConfig.for_dimension(n, eps_jl, self.cfg.seed, self.cfg.c_jl)
        if sk.k >= n and not self.cfg.force_sketch:
            return self.Lpinv, False
        if self._BG is None:
            self._BG = incidence_matrix(complete_bipartite_edges(self.p.n1, self.p.n2))
        Q = jl_sketch(sk.k, self._BG.shape[0], [self.cfg.seed, salt])
        return self.solve(np.asarray((Q @ self._BG).T)), True

    def trace_sq(self, Y, sketched):
        """``||L^1/2 Y ...||_F^2``: ``tr(Y^T L Y)`` for sketched blocks,
        ``tr(L Y L Y^T)`` for the exact block ``Y = f(T) L^+``."""
        LY = self.L @ Y
        if sketched:
            return float(np.sum(Y * LY))
        return float(np.sum(LY * (self.L @ Y.T).T))

    def row_quad(self, Y, sketched):
        if sketched:
            h, t = self.p.edges.heads, self.p.edges.tails
            D = Y[h] - Y[t]
            return np.sum(D * D, axis=1)
        return self.p.edge_quad(Y.T @ (self.L @ Y))

    # -- barrier quantities -----------------------------------------------
    def _dense(self):
        if self._exact is None:
            self._exact = ExactBackend(self.p)
        return self._exact

    def potential(self, state):
        if not self.audit:
            return None
        lam = np.linalg.eigvalsh(self.p.normalized_operator(state.weights))
        return _potential_from_eigs(lam, state.u, state.ell)

    def extremes(self, w, tol=1e-10):
        n = self.p.n
        if not np.any(w):
            return 0.0, 0.0
        return extreme_eigs(self.T(w), tol=tol, method="lanczos", n=n,
                            metric=self.L, project=lambda v: v - v.mean(),
                            seed=self.cfg.seed)

    def check_barriers(self, state):
        lo, hi = self.extremes(state.weights)
        if not (state.ell < lo and hi < state.u):
            raise _barrier_error(state, lo, hi)

    def gap_bound(self, state):
        """Lower bound on both gaps from ``exp(1/gap) <= Phi``."""
        phi = state.phi if state.phi is not None else self.phi0
        return 1.0 / math.log(phi)

    _sides = (("minus", -1.0, "u"), ("plus", 1.0, "ell"))

    def _shift(self, state, side):
        return state.u if side == "minus" else -state.ell

    def rho(self, state):
        eps = self.cfg.eps
        g = self.gap_bound(state)
        eps_p = eps / 8
        p = build_poly_inv_square(g, eps_p)
        X0, sk = self.start_block(self.cfg.jl_eps, 2 * state.j)
        eta = self.cfg.jl_eps if sk else 0.0
        k = math.ceil(math.log(self.p.dim * (1 + eta) / (1 - eta)) / eps)
        T = self.T(state.weights)
        est = []
        for side, sign, _ in self._sides:
            shift = self._shift(state, side)
            Y = X0.copy()
            logscale = 0.0
            for _ in range(k):
                Y = p.apply(T, Y, sign, shift)
                # the shift keeps kernel components alive and p is only
                # accurate on the spectrum of A, so project them out
                Y -= Y.mean(axis=0)
                s = np.linalg.norm(Y)
                Y /= s
                logscale += math.log(s)
            logtr = 2 * logscale + math.log(self.trace_sq(Y, sk))
            r = math.exp(-logtr / (2 * k)) * (1 - eta) ** (1 / (2 * k)) * (1 - eps_p)
            est.append(r)
        return float(min(est))

    def scores(self, state):
        eps = self.cfg.eps
        g = self.gap_bound(state)
        q = build_poly_exp_half_inv(g, eps / 6)
        eta = self.cfg.score_jl_eps or eps / 6
        X0, sk = self.start_block(eta, 2 * state.j + 1)
        T = self.T(state.weights)
        out = {}
        for side, sign, _ in self._sides:
            Y = q.apply(T, X0, sign, self._shift(state, side))
            out[side] = (self.row_quad(Y, sk), self.trace_sq(Y, sk))
        cm, trm = out["minus"]
        cp, trp = out["plus"]
        return np.maximum(cp, 0), np.maximum(cm, 0), trp, trm

    def lam_max(self, x, tol=1e-8):
        return self.extremes(x, tol)[1] * (1 + 2 * tol)

    def mwu_eval(self, a, y, K, tol=1e-8):
        w = a * y
        lam = self.lam_max(w, tol)
        delta = self.cfg.sdp_delta
        # exp((K x / lam - K) / 2) on x in [0, lam]
        e = build_poly_exp(-K / 2, 0.0, delta / 8)
        X0, sk = self.start_block(self.cfg.jl_eps, 2 ** 31)
        Y = e.apply(self.T(w), X0, K / (2 * lam), -K / 2)
        Z = self.trace_sq(Y, sk)
        s = a * self.row_quad(Y, sk) / Z
        return float(lam), s

"""Barrier-potential reweighting of a bipartite edge set toward the
complete bipartite graph."""
from dataclasses import dataclass, field, replace, asdict
import csv
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..errors import ArgumentError, ReweightFailure, SolverError, StateError
from ..spectral_core import (EdgeList, Laplacian, build_laplacian,
                             complete_bipartite_laplacian, incidence_matrix)


@dataclass(frozen=True)
class ReweightConfig:
    """Parameters of the reweighting loop.

    Attributes
    ----------
    beta, eps : float
        Similarity of the hidden edge set and accuracy, both in (0, 0.1].
    backend : {"exact", "fast"}
    seed : int
        Seeds the sketches and Lanczos start vectors of the fast backend.
    iter_const : float
        Iteration cap is ``ceil(iter_const * log(n)^2 / eps^2)``.
    max_iter : int, optional
        Explicit cap overriding ``iter_const``.
    sdp_iters, sdp_step, sdp_delta : int, float, float
        Multiplicative-weights budget, growth factor and acceptance slack.
    sdp_restarts : int
        Rounds of multiplicative weights, each with half the step and twice
        the budget of the previous one, tried while the target is missed.
    jl_eps, c_jl : float
        Sketch distortion for trace estimates and the sketch constant.
    score_jl_eps : float, optional
        Sketch distortion for edge scores; defaults to ``eps / 6``.
    force_sketch : bool
        Use random sketches even when an exact basis is cheaper.
    audit_limit : int
        Fast backend tracks the potential with a dense eigensolve when
        ``n`` is at most this.
    """

    beta: float = 0.05
    eps: float = 0.05
    backend: str = "exact"
    seed: int = 0
    iter_const: float = 64.0
    max_iter: int = None
    sdp_iters: int = 25
    sdp_step: float = 0.3
    sdp_delta: float = 0.2
    sdp_restarts: int = 2
    jl_eps: float = 0.5
    score_jl_eps: float = None
    c_jl: float = 8.0
    force_sketch: bool = False
    audit_limit: int = 400

    def __post_init__(self):
        if not (0.0 < self.beta <= 0.1):
            raise ArgumentError("beta must lie in (0, 0.1]")
        if not (0.0 < self.eps <= 0.1):
            raise ArgumentError("eps must lie in (0, 0.1]")
        if self.backend not in ("exact", "fast"):
            raise ArgumentError(f"unknown backend {self.backend!r}")

    def iteration_cap(self, n):
        if self.max_iter is not None:
            return int(self.max_iter)
        return math.ceil(self.iter_const * math.log(n) ** 2 / self.eps ** 2)

    def to_dict(self):
        return asdict(self)


class ReweightProblem:
    """Fixed data of a reweighting run: the edge set, its incidence matrix
    and the Laplacian of the complete bipartite graph it is compared to."""

    def __init__(self, edges):
        if not isinstance(edges, EdgeList):
            raise ArgumentError("edges must be an EdgeList")
        if edges.m == 0:
            raise ArgumentError("empty edge set")
        self.edges = edges
        self.n1, self.n2, self.n, self.m = edges.n1, edges.n2, edges.n, edges.m
        self.B = incidence_matrix(edges)
        adj = abs(self.B.T @ self.B)
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise ArgumentError(
                f"edge set has {ncomp} connected components; need a connected "
                "graph spanning all vertices")
        self.LG = complete_bipartite_laplacian(self.n1, self.n2)
        self._backends = {}
        self._S = None

    @property
    def dim(self):
        """Dimension of the space the operator acts on (range of L_G)."""
        return self.n - 1

    def laplacian(self, w):
        return (self.B.T @ sp.diags(np.asarray(w, dtype=float)) @ self.B).tocsr()

    def edge_quad(self, G):
        """``b_e^T G b_e`` for every edge, from an ``n x n`` matrix ``G``."""
        h, t = self.edges.heads, self.edges.tails
        return G[h, h] + G[t, t] - G[h, t] - G[t, h]

    @property
    def S(self):
        """``n x (n-1)`` map with ``S^T L_G S = I``; ``v_e = S^T b_e``."""
        if self._S is None:
            lam, E = np.linalg.eigh(self.LG.toarray())
            E, lam = E[:, 1:], lam[1:]
            self._S = E / np.sqrt(lam)
        return self._S

    def normalized_operator(self, w):
        """Dense ``L_G^-1/2 L_w L_G^-1/2`` on the range of ``L_G``."""
        S = self.S
        A = S.T @ (self.laplacian(w) @ S)
        return 0.5 * (A + A.T)

    def backend(self, cfg):
        from .backends import ExactBackend, FastBackend
        if cfg.backend == "exact":
            key = ("exact",)
            if key not in self._backends:
                self._backends[key] = ExactBackend(self)
        else:
            key = ("fast", cfg.eps, cfg.seed, cfg.jl_eps, cfg.score_jl_eps, cfg.c_jl,
                   cfg.sdp_delta,
                   cfg.force_sketch, cfg.audit_limit)
            if key not in self._backends:
                self._backends[key] = FastBackend(self, cfg)
        return self._backends[key]


@dataclass
class BarrierState:
    """Weights and barriers of the reweighting loop.

    The operator ``A = sum_e w_e v_e v_e^T`` is never stored; backends
    rebuild what they need from ``weights`` and the problem's ``L_G``.
    """

    problem: ReweightProblem
    weights: np.ndarray
    u: float = 0.25
    ell: float = -0.25
    j: int = 0
    rho: float = None
    delta_u: float = None
    delta_ell: float = None
    phi: float = None

    def copy(self):
        return replace(self, weights=self.weights.copy())

    def snapshot(self):
        return {"j": self.j, "u": self.u, "ell": self.ell, "rho": self.rho,
                "delta_u": self.delta_u, "delta_ell": self.delta_ell,
                "phi": self.phi, "weights": self.weights.tolist()}


def initial_state(edges_or_problem):
    problem = (edges_or_problem if isinstance(edges_or_problem, ReweightProblem)
               else ReweightProblem(edges_or_problem))
    return BarrierState(problem, np.zeros(problem.m))


def compute_rho(state, cfg):
    """Lower estimate of ``lambda_min(uI - A, A - ell I)^2`` within ``[1-eps, 1]``."""
    return state.problem.backend(cfg).rho(state)


def edge_scores(state, cfg):
    """Quadratic forms ``(v_e^T C+ v_e, v_e^T C- v_e)`` of the barrier gradients.

    ``C- = exp((uI-A)^-1)(uI-A)^-2`` and ``C+ = exp((A-ell I)^-1)(A-ell I)^-2``.
    """
    cp, cm, _, _ = state.problem.backend(cfg).scores(state)
    return cp, cm


def potential(state, cfg=None):
    """``tr exp((uI-A)^-1) + tr exp((A-ell I)^-1)``, via a dense eigensolve."""
    lam = np.linalg.eigvalsh(state.problem.normalized_operator(state.weights))
    return _potential_from_eigs(lam, state.u, state.ell)


def _potential_from_eigs(lam, u, ell):
    gu, gl = u - lam, lam - ell
    if np.any(gu <= 0) or np.any(gl <= 0):
        return math.inf
    with np.errstate(over="ignore"):
        return float(np.sum(np.exp(1.0 / gu)) + np.sum(np.exp(1.0 / gl)))


def barrier_steps(rho, cfg):
    """Barrier increments ``(delta_u, delta_ell)`` for a given ``rho``."""
    b, e = cfg.beta, cfg.eps
    du = 0.5 * e * rho * (1 + b + 5 * e) / (1 - 2 * e)
    dl = 0.5 * e * rho * (1 - b - 5 * e) / (1 + 2 * e)
    return du, dl


def sdp_target(trp, trm, rho, cfg):
    """Objective level the packing step must reach to keep the potential
    from growing."""
    b, e = cfg.beta, cfg.eps
    return 0.5 * e * rho * ((1 - b - e) * trp - (1 + b + e) * trm)


def barrier_step(state, x, cfg, rho=None):
    """Add ``x`` to the weights and advance both barriers.

    Raises
    ------
    StateError
        If the potential grows by more than ``1e-9`` relative.
    """
    rho = state.rho if rho is None else rho
    if rho is None or rho <= 0:
        raise ArgumentError("state has no valid rho")
    x = np.asarray(x, dtype=float)
    if x.shape != state.weights.shape or np.any(x < 0):
        raise ArgumentError("x must be a nonnegative vector, one entry per edge")
    du, dl = barrier_steps(rho, cfg)
    be = state.problem.backend(cfg)
    phi0 = state.phi if state.phi is not None else be.potential(state)
    new = BarrierState(state.problem, state.weights + x, state.u + du,
                       state.ell + dl, state.j + 1, rho, du, dl)
    new.phi = be.potential(new)
    if phi0 is not None and new.phi is not None:
        if not new.phi <= phi0 * (1 + 1e-9):
            raise StateError(
                f"potential increased from {phi0:.12g} to {new.phi:.12g}", new)
    return new


@dataclass
class ReweightResult:
    """Output of :func:`reweight`.

    ``weights`` are the raw weights divided by the final upper barrier, so the
    normalized operator has spectrum in ``[ell/u, 1]``.
    """

    edges: EdgeList
    weights: np.ndarray
    raw_weights: np.ndarray
    u: float
    ell: float
    iterations: int
    lam_min: float
    lam_max: float
    log: list = field(default_factory=list)
    config: ReweightConfig = None

    @property
    def ratio(self):
        return self.ell / self.u


def reweight(edges, cfg=None, callback=None):
    """Run the barrier loop until ``u - ell > 1`` and rescale by ``1/u``.

    Parameters
    ----------
    edges : EdgeList
        Must form a connected graph on all ``n1 + n2`` vertices.
    cfg : ReweightConfig
    callback : callable, optional
        Called with each accepted state.

    Returns
    -------
    ReweightResult

    Raises
    ------
    ArgumentError
        Disconnected input.
    ReweightFailure
        Iteration cap exceeded, or a step could not keep the potential from
        growing even after halving the cap.
    """
    from .packing import solve_packing_sdp

    cfg = ReweightConfig() if cfg is None else cfg
    state = initial_state(edges)
    problem = state.problem
    be = problem.backend(cfg)
    state.phi = be.potential(state)
    cap_iter = cfg.iteration_cap(problem.n)
    log = []
    while state.u - state.ell <= 1.0:
        if state.j >= cap_iter:
            raise ReweightFailure(
                f"iteration cap {cap_iter} reached (beta may be too small)",
                state, log)
        be.check_barriers(state)
        rho = be.rho(state)
        state.rho = rho
        cp, cm, trp, trm = be.scores(state)
        target = sdp_target(trp, trm, rho, cfg)
        new, info, halved, met = None, None, False, True
        for cap in (cfg.eps * rho, 0.5 * cfg.eps * rho):
            # the target is a sufficient condition for the potential not to
            # grow; a miss is logged and the potential check decides
            try:
                x, info = solve_packing_sdp(cp, cm, problem.edges, cap, cfg,
                                            backend=be, target=target)
                met = True
            except SolverError as err:
                x, info, met = err.info["x"], err.info, False
            try:
                new = barrier_step(state, x, cfg, rho)
                break
            except StateError as err:
                if halved:
                    raise ReweightFailure(f"step rejected: {err}", state,
                                          log) from err
            halved = True
        log.append({
            "j": state.j, "u": state.u, "ell": state.ell, "rho": rho,
            "phi": state.phi, "delta_u": new.delta_u, "delta_ell": new.delta_ell,
            "phi_next": new.phi, "sdp_objective": info["objective"],
            "sdp_target": target, "sdp_upper": info["upper"],
            "sdp_iters": info["iterations"], "cap_halved": halved,
            "target_met": met,
        })
        state = new
        if callback is not None:
            callback(state)
    be.check_barriers(state)
    w = state.weights / state.u
    lo, hi = be.extremes(w)
    if hi > 1 + 1e-9 or lo < state.ell / state.u - 1e-9:
        raise StateError(
            f"output spectrum [{lo}, {hi}] outside [{state.ell / state.u}, 1]",
            state)
    return ReweightResult(problem.edges, w, state.weights, state.u, state.ell,
                          state.j, lo, hi, log, cfg)


@dataclass
class WeightMatrix:
    """Sparse nonnegative ``n1 x n2`` weights on the observed positions."""

    n1: int
    n2: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ArgumentError("weights must be nonnegative")

    def tocsr(self):
        return sp.csr_matrix((self.values, (self.rows, self.cols)),
                             shape=(self.n1, self.n2))

    def toarray(self):
        out = np.zeros((self.n1, self.n2))
        out[self.rows, self.cols] = self.values
        return out

    @property
    def row_sums(self):
        return np.bincount(self.rows, self.values, minlength=self.n1)

    @property
    def col_sums(self):
        return np.bincount(self.cols, self.values, minlength=self.n2)

    def distance_to_ones(self):
        """Spectral norm ``||W - J||``."""
        return float(np.linalg.norm(self.toarray() - 1.0, 2))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["i", "j", "weight"])
            for i, j, v in zip(self.rows, self.cols, self.values):
                wr.writerow([int(i), int(j), repr(float(v))])

    @classmethod
    def from_csv(cls, path, n1=None, n2=None):
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        rows = data["i"].astype(np.int64)
        cols = data["j"].astype(np.int64)
        n1 = int(rows.max()) + 1 if n1 is None else n1
        n2 = int(cols.max()) + 1 if n2 is None else n2
        return cls(n1, n2, rows, cols, data["weight"])


def weights_to_W(edges, weights, n1=None, n2=None):
    """Place per-edge weights into a :class:`WeightMatrix` and check the
    row and column sum bounds ``<= n2`` and ``<= n1``.

    Returns
    -------
    W : WeightMatrix
    report : dict
        Row/column sum maxima and ``||W - J||`` with its normalized value.
    """
    n1 = edges.n1 if n1 is None else n1
    n2 = edges.n2 if n2 is None else n2
    w = np.asarray(weights, dtype=float)
    if w.size != edges.m:
        raise ArgumentError("one weight per edge required")
    W = WeightMatrix(n1, n2, edges.rows, edges.cols, w)
    rmax, cmax = float(W.row_sums.max()), float(W.col_sums.max())
    if rmax > n2 or cmax > n1:
        raise StateError(f"weight sums exceed bounds: rows {rmax} > {n2} "
                         f"or cols {cmax} > {n1}")
    dist = W.distance_to_ones()
    report = {"max_row_sum": rmax, "max_col_sum": cmax, "dist_to_J": dist,
              "dist_to_J_normalized": dist / math.sqrt(n1 * n2)}
    return W, report


def estimate_beta(edges, eps, cfg=None, beta_min=0.0125, beta_max=0.1,
                  factor=2.0):
    """Smallest ``beta`` on a geometric grid for which :func:`reweight` succeeds.

    The grid is ``beta_max / factor^k`` down to ``beta_min``, tried in
    increasing order.

    Returns
    -------
    beta : float
    result : ReweightResult
    """
    if not (0 < beta_min <= beta_max <= 0.1):
        raise ArgumentError("need 0 < beta_min <= beta_max <= 0.1")
    cfg = ReweightConfig(eps=eps) if cfg is None else replace(cfg, eps=eps)
    grid = []
    b = beta_max
    while b >= beta_min * (1 - 1e-12):
        grid.append(b)
        b /= factor
    grid = sorted(grid)
    if not isinstance(edges, ReweightProblem):
        ReweightProblem(edges)  # connectivity check up front
    failures = []
    for b in grid:
        try:
            res = reweight(edges, replace(cfg, beta=b))
            return b, res
        except (ReweightFailure, StateError) as err:
            failures.append((b, str(err)))
    raise ReweightFailure(
        "no grid value succeeded: " + ", ".join(f"{b:.4g}" for b, _ in failures),
        log=failures)

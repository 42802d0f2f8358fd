"""Packing SDP ``max c^T x  s.t.  sum_e x_e v_e v_e^T <= cap I, x >= 0``
solved by matrix multiplicative weights."""
import math

import numpy as np

from ..errors import ArgumentError, SolverError


def solve_packing_sdp(cplus, cminus, edges, cap, cfg, backend=None, target=None):
    """Approximately solve the packing step of the barrier loop.

    Only edges with ``c_e = c+_e - c-_e > 0`` can help, so the others get
    ``x_e = 0``. Substituting ``y_e = c_e x_e`` turns the problem into
    ``max sum(y)`` under ``sum_e y_e M_e <= cap I`` with ``M_e = v_e v_e^T / c_e``.
    Each round computes ``P`` proportional to ``exp(K Psi / lambda_max(Psi))``
    for ``Psi = sum_e y_e M_e`` and grows ``y_e`` on the atoms whose
    ``M_e . P`` is below ``(1 + delta)`` times the weighted average.
    Every iterate rescaled to ``lambda_max = cap`` is feasible; the best one
    is kept, and ``cap / min_e (M_e . P)`` over all rounds bounds the optimum.

    Parameters
    ----------
    cplus, cminus : ndarray
        Edge scores.
    edges : EdgeList
    cap : float
        Spectral cap, ``eps * rho`` in the barrier loop.
    cfg : ReweightConfig
        Uses ``sdp_iters``, ``sdp_step``, ``sdp_delta``, ``sdp_restarts``.
    backend : ExactBackend or FastBackend
    target : float, optional
        Required objective. Rounds restart with a halved step and doubled
        budget until the best iterate reaches it or the dual bound shows
        it cannot be reached.

    Returns
    -------
    x : ndarray
    info : dict
        ``objective``, ``upper`` (dual bound), ``iterations``, ``restarts``.

    Raises
    ------
    ArgumentError
        ``cap <= 0``.
    SolverError
        ``target`` not reached after all restarts; the best ``x`` is in
        ``err.info["x"]``.
    """
    if not cap > 0:
        raise ArgumentError("spectral cap must be positive")
    c = np.asarray(cplus, dtype=float) - np.asarray(cminus, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ArgumentError("scores must be finite")
    if backend is None:
        raise ArgumentError("a backend is required")
    m = c.size
    active = c > 1e-14 * max(np.max(np.abs(c)), np.finfo(float).tiny)
    info = {"objective": 0.0, "upper": 0.0, "iterations": 0, "restarts": 0}
    if not np.any(active):
        if target is not None and target > 0:
            raise SolverError("no edge has a positive score", residual=0.0,
                              x=np.zeros(m), **info)
        return np.zeros(m), info

    a = np.where(active, 1.0 / np.where(active, c, 1.0), 0.0)
    n_active = int(active.sum())
    dim = backend.p.dim
    delta = cfg.sdp_delta
    K = math.log(max(dim, 2)) / delta
    restarts = max(1, int(cfg.sdp_restarts))
    best_val, best_y, best_lam = -1.0, None, None
    upper = math.inf
    total = 0
    step, budget = cfg.sdp_step, cfg.sdp_iters
    for r in range(restarts):
        y = np.where(active, c, 0.0)  # uniform x
        for _ in range(budget):
            lam, s = backend.mwu_eval(a, y, K)
            total += 1
            val = cap * y.sum() / lam
            if val > best_val:
                best_val, best_y, best_lam = val, y.copy(), lam
            smin = np.min(s[active])
            if smin > 0:
                upper = min(upper, cap / smin)
            if n_active == 1 or best_val >= (1 - delta) * upper:
                break
            avg = np.dot(y, s) / y.sum()
            grow = active & (s <= (1 + delta) * avg)
            y[grow] *= 1 + step
        info["restarts"] = r
        # the dual bound certifies when the target is out of reach
        if target is None or best_val >= target or upper < target:
            break
        step, budget = step / 2, budget * 2

    x = cap * best_y * a / best_lam
    info.update(objective=float(np.dot(c, x)), upper=float(upper),
                iterations=total)
    if target is not None and info["objective"] < target:
        raise SolverError(
            f"packing objective {info['objective']:.6g} below target {target:.6g}",
            residual=info["objective"], x=x, **info)
    return x, info

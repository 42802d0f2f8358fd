"""Reweighting of semi-random observation graphs toward the complete
bipartite graph."""
from .core import (BarrierState, ReweightConfig, ReweightProblem,
                   ReweightResult, WeightMatrix, barrier_step, barrier_steps,
                   compute_rho, edge_scores, estimate_beta, initial_state,
                   potential, reweight, sdp_target, weights_to_W)
from .packing import solve_packing_sdp
from .backends import ExactBackend, FastBackend

__all__ = [
    "BarrierState", "ReweightConfig", "ReweightProblem", "ReweightResult",
    "WeightMatrix", "barrier_step", "barrier_steps", "compute_rho",
    "edge_scores", "estimate_beta", "initial_state", "potential", "reweight",
    "sdp_target", "weights_to_W", "solve_packing_sdp", "ExactBackend",
    "FastBackend",
]

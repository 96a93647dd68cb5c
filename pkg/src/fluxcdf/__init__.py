"""Cumulative densities of normalizing flows over simplicial polytopes via boundary flux."""

from .estimators import EstimateTrace, bf_deterministic, bfs_estimate, is_estimate, mc_estimate
from .field import FieldSample, base_field_F, divergence_fd, dot_G_normal, field_G
from .flows import Diffeomorphism, FlowSpec, density, make_flow, sample
from .geometry import SimplicialBoundary, convex_hull, orient_outward, polytope_volume
from .refine import RefinementState, init_state, run_bfa

__all__ = [
    "Diffeomorphism", "EstimateTrace", "FieldSample", "FlowSpec", "RefinementState", "SimplicialBoundary",
    "base_field_F", "bf_deterministic", "bfs_estimate", "convex_hull", "density", "divergence_fd",
    "dot_G_normal", "field_G", "init_state", "is_estimate", "make_flow", "mc_estimate", "orient_outward",
    "polytope_volume", "run_bfa", "sample",
]

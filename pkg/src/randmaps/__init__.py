"""Random expanding circle maps: transfer operators, coupling and limit laws."""

__version__ = "0.1.0"

from .coupling import CouplingConstants, coupling_schedule, rde_simulate, verify_memory_loss
from .density import DensityGrid, Observable, holder_estimate, regularize
from .ensemble import Ensemble, OmegaSequence, check_standing_assumption, sample_sequence
from .maps import MapSample, compute_dilation_distortion, make_map
from .recursions import exact_second_moment_R, sr_recursion
from .stats import (clt_test, coboundary_residual, correlation_operator, covariance_batch_means,
                    covariance_series, multiple_correlation_check)
from .transfer import compute_stationary, quenched_push, tilted_quenched_push

__all__ = [
    "CouplingConstants", "DensityGrid", "Ensemble", "MapSample", "Observable", "OmegaSequence",
    "check_standing_assumption", "clt_test", "coboundary_residual", "compute_dilation_distortion",
    "compute_stationary", "correlation_operator", "coupling_schedule", "covariance_batch_means",
    "covariance_series", "exact_second_moment_R", "holder_estimate", "make_map",
    "multiple_correlation_check", "quenched_push", "rde_simulate", "regularize", "sample_sequence",
    "sr_recursion", "tilted_quenched_push", "verify_memory_loss",
]

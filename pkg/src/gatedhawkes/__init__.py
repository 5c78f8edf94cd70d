"""Gated state-dependent Hawkes processes for limit-order-book event streams.

Event arrivals self- and cross-excite through exponential kernels whose
marks carry the book's spread state; a binary gate per (event type, state)
encodes which events are physically possible, and the transition
probabilities behind those gates are estimated by exact counting,
independently of the Hawkes parameters.
"""

from .core import (EventRecord, EventStream, EventType, HawkesParams,
                   ModelSpec, SpreadState, Taxonomy, TransitionKernel,
                   Variant, default_taxonomy, validate_model, validate_stream)
from .dynamics import (IntensityVector, RecursionState, advance,
                       branching_ratio, compensator_segment, intensity,
                       kernel_matrix, register_event)
from .estimate import (FitOptions, FitReport, TransitionCounts,
                       count_transitions, estimate_transition_kernel, fit,
                       log_lik_hawkes, log_lik_total, log_lik_tp)
from .diagnostics import (acf, event_residuals, ks_exp1, qq_exp1,
                          spectral_radius, stability_report, total_residuals)
from .signature import SignatureCurve, realized_variance, signature_curve
from .simulate import (ImpactTable, MidPricePath, SimResult, derive_seed,
                       replay_midprice, simulate)

__all__ = [
    "EventRecord", "EventStream", "EventType", "HawkesParams", "ModelSpec",
    "SpreadState", "Taxonomy", "TransitionKernel", "Variant",
    "default_taxonomy", "validate_model", "validate_stream",
    "IntensityVector", "RecursionState", "advance", "branching_ratio",
    "compensator_segment", "intensity", "kernel_matrix", "register_event",
    "FitOptions", "FitReport", "TransitionCounts", "count_transitions",
    "estimate_transition_kernel", "fit", "log_lik_hawkes", "log_lik_total",
    "log_lik_tp",
    "acf", "event_residuals", "ks_exp1", "qq_exp1", "spectral_radius",
    "stability_report", "total_residuals",
    "SignatureCurve", "realized_variance", "signature_curve",
    "ImpactTable", "MidPricePath", "SimResult", "derive_seed",
    "replay_midprice", "simulate",
]

__version__ = "0.1.0"

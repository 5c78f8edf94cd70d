"""Intensity dynamics under exponential kernels.

The excitation carried by the history up to time t is summarized by the
tensor R[e', x, e] = sum over past events of type e' with post-state x of
alpha[e', x, e] * exp(-beta[e', x, e] * (t - s)). Between events every entry
decays exponentially at its own rate; at an event the (event, post_state)
slice jumps by alpha. This makes intensity evaluation O(1) per event instead
of O(history).

Intensities are evaluated left-continuously: the excitation at t includes
events strictly before t only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GatedHawkesError, HawkesParams, ModelSpec


class TimeOrderError(GatedHawkesError):
    """Raised when a recursion update would move backwards in time."""


@dataclass(frozen=True, eq=False)
class RecursionState:
    """Accumulated excitation R[e', x, e] at `last_time`."""

    R: np.ndarray
    last_time: float
    params: HawkesParams

    @classmethod
    def initial(cls, params: HawkesParams, time: float = 0.0) -> "RecursionState":
        E, X = params.n_events, params.n_states
        return cls(R=np.zeros((E, X, E)), last_time=time, params=params)


@dataclass(frozen=True)
class IntensityVector:
    """Raw, gated, and per-transition intensities at one instant.

    raw[e]            = nu_e + sum of R over (e', x)
    lambda_dag[e]     = gate[e, current_state] * raw[e]
    lambda_tilde[e,x] = phi[e, current_state, x] * raw[e]
    """

    raw: np.ndarray           # (E,)
    lambda_dag: np.ndarray    # (E,)
    lambda_tilde: np.ndarray  # (E, X)


def advance(rec: RecursionState, to_time: float) -> RecursionState:
    """Decay the excitation tensor forward to `to_time` (no event)."""
    dt = to_time - rec.last_time
    if dt < 0:
        raise TimeOrderError(f"advance to {to_time} before last_time {rec.last_time}")
    if dt == 0:
        return rec
    R = rec.R * np.exp(-rec.params.beta * dt)
    return RecursionState(R=R, last_time=to_time, params=rec.params)


def register_event(rec: RecursionState, event: int, post_state: int) -> RecursionState:
    """Add the excitation jump of an event occurring at rec.last_time."""
    R = rec.R.copy()
    R[event, post_state, :] += rec.params.alpha[event, post_state, :]
    return RecursionState(R=R, last_time=rec.last_time, params=rec.params)


def intensity(rec: RecursionState, model: ModelSpec, current_state: int) -> IntensityVector:
    """Evaluate intensities at rec.last_time given the current spread state."""
    raw = model.hawkes.nu + rec.R.sum(axis=(0, 1))
    gate = model.transition.gate[:, current_state].astype(np.float64)
    phi_rows = model.transition.phi[:, current_state, :]
    return IntensityVector(
        raw=raw,
        lambda_dag=gate * raw,
        lambda_tilde=phi_rows * raw[:, None],
    )


def raw_segment_integral(rec: RecursionState, params: HawkesParams, dt: float) -> np.ndarray:
    """Integral of the ungated intensity over [last_time, last_time + dt).

    Closed form per target e: nu_e * dt + sum_{e',x} R[e',x,e] *
    (1 - exp(-beta[e',x,e] * dt)) / beta[e',x,e].
    """
    if dt < 0:
        raise TimeOrderError(f"negative segment length {dt}")
    decay = -np.expm1(-params.beta * dt) / params.beta
    return params.nu * dt + np.einsum("ijk,ijk->k", rec.R, decay)


def compensator_segment(rec: RecursionState, model: ModelSpec, state: int,
                        dt: float) -> np.ndarray:
    """Exact integral of the gated intensity over a constant-state segment."""
    raw = raw_segment_integral(rec, model.hawkes, dt)
    return model.transition.gate[:, state].astype(np.float64) * raw


def branching_ratio(model: ModelSpec) -> np.ndarray:
    """Expected direct offspring n[e, x] = sum_e' alpha[e',x,e] / beta[e',x,e]."""
    return (model.hawkes.alpha / model.hawkes.beta).sum(axis=0).T


def kernel_matrix(model: ModelSpec, x: int) -> np.ndarray:
    """Integrated-kernel matrix K(x)[e', e] = alpha[e',x,e] / beta[e',x,e]."""
    return model.hawkes.alpha[:, x, :] / model.hawkes.beta[:, x, :]

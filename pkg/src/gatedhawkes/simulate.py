"""Thinning-based simulation and the mid-price impact path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (EventStream, GatedHawkesError, ModelSpec,
                   require_valid_model)

DEFAULT_MAX_EVENTS = 10_000_000


class DeadStateError(GatedHawkesError):
    """The starting state gates off every event type: nothing can ever move."""


@dataclass(frozen=True, eq=False)
class ImpactTable:
    """Mid-price shift delta_m[e, x] (ticks) for event e arriving in state x."""

    delta_m: np.ndarray  # (E, X)

    def __post_init__(self):
        dm = np.ascontiguousarray(self.delta_m, dtype=np.float64)
        if dm is self.delta_m:
            dm = dm.copy()
        if not np.isfinite(dm).all():
            raise GatedHawkesError("impact table entries must be finite")
        dm.setflags(write=False)
        object.__setattr__(self, "delta_m", dm)

    def __eq__(self, other):
        if not isinstance(other, ImpactTable):
            return NotImplemented
        return np.array_equal(self.delta_m, other.delta_m)


@dataclass(frozen=True, eq=False)
class MidPricePath:
    """Piecewise-constant mid-price: value after each event, plus the start."""

    times: np.ndarray
    prices: np.ndarray
    initial_price: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64).copy()
        p = np.ascontiguousarray(self.prices, dtype=np.float64).copy()
        if t.shape != p.shape:
            raise GatedHawkesError("times and prices must have equal length")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return self.times.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MidPricePath):
            return NotImplemented
        return (self.initial_price == other.initial_price
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.prices, other.prices))

    def price_at(self, t: np.ndarray | float) -> np.ndarray:
        """Previous-tick value: last event price at or before t."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64),
                              side="right") - 1
        padded = np.concatenate(([self.initial_price], self.prices))
        return padded[idx + 1]


@dataclass(frozen=True)
class ThinningStats:
    proposals: int
    accepted: int
    rejected: int


@dataclass(frozen=True)
class SimResult:
    stream: EventStream
    path: MidPricePath
    thinning_stats: ThinningStats
    truncated: bool


def replay_midprice(stream: EventStream, impact: ImpactTable,
                    initial_price: float = 0.0) -> MidPricePath:
    """Fold the impact table over a stream (each record uses its pre-state)."""
    if len(stream) == 0:
        return MidPricePath(times=np.empty(0), prices=np.empty(0),
                            initial_price=initial_price)
    shifts = impact.delta_m[stream.events, stream.states_before]
    prices = initial_price + np.cumsum(shifts)
    return MidPricePath(times=stream.times.copy(), prices=prices,
                        initial_price=initial_price)


def derive_seed(master: int, index: int) -> int:
    """Per-run seed: splitmix64 finalizer of (master XOR index).

    Fixed derivation so that ensembles are reproducible run-to-run and
    independent of how runs are distributed across workers.
    """
    z = (master ^ index) & 0xFFFFFFFFFFFFFFFF
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _beta_factors(beta: np.ndarray) -> tuple[np.ndarray, int, np.ndarray]:
    """Group equal decay rates so each proposal computes one exp per group."""
    unique, inverse = np.unique(beta, return_inverse=True)
    ids = inverse.reshape(beta.shape).astype(np.int64)
    return ids, unique.shape[0], unique


def simulate(model: ModelSpec, impact: ImpactTable, horizon: float,
             initial_state: int = 0, seed: int = 0,
             max_events: int = DEFAULT_MAX_EVENTS, burn_in: float = 0.0,
             initial_price: float = 0.0,
             on_dead_state: str = "error") -> SimResult:
    """Simulate one realization of the gated process on (0, horizon].

    A warm-up of `burn_in` seconds precedes the recorded window: those events
    initialize the excitation and the state but are not part of the result.
    Identical arguments produce a bit-identical result.

    on_dead_state: "error" raises DeadStateError when the process starts in a
    state with every gate closed; "stop" returns an empty stream instead.
    """
    require_valid_model(model)
    if horizon <= 0:
        raise GatedHawkesError(f"horizon must be positive, got {horizon}")
    if burn_in < 0:
        raise GatedHawkesError(f"burn_in must be non-negative, got {burn_in}")
    if max_events < 1:
        raise GatedHawkesError(f"max_events must be at least 1, got {max_events}")
    if on_dead_state not in ("error", "stop"):
        raise GatedHawkesError(f"unknown on_dead_state {on_dead_state!r}")
    E, X = model.taxonomy.n_events, model.taxonomy.n_states
    if impact.delta_m.shape != (E, X):
        raise GatedHawkesError(
            f"impact table shape {impact.delta_m.shape} != {(E, X)}")
    if not (0 <= initial_state < X):
        raise GatedHawkesError(f"initial_state {initial_state} outside [0, {X})")

    hp, tk = model.hawkes, model.transition
    ids, n_fac, unique = _beta_factors(hp.beta)
    gen = np.random.default_rng(seed)
    (times, events, states, count, record_start_state, dead, had_event,
     truncated, proposals, accepted) = _kernels.simulate_thinning(
        gen, hp.nu, hp.alpha, hp.beta, ids, n_fac, unique,
        tk.phi, tk.gate.astype(np.int64), initial_state,
        burn_in + horizon, burn_in, max_events)

    if dead and not had_event and on_dead_state == "error":
        raise DeadStateError(
            "absorbing dead state: every event type is gated off in the "
            f"starting state {initial_state}")

    stream = EventStream.from_arrays(
        times=times.copy(), events=events.copy(), states_after=states.copy(),
        initial_state=int(record_start_state), horizon=horizon)
    path = replay_midprice(stream, impact, initial_price=initial_price)
    stats = ThinningStats(proposals=int(proposals), accepted=int(accepted),
                          rejected=int(proposals - accepted))
    return SimResult(stream=stream, path=path, thinning_stats=stats,
                     truncated=bool(truncated))

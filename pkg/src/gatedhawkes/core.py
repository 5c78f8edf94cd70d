"""Domain types shared by every other module.

The model world is a marked point process on a trading session: events of E
types arrive in continuous time while the book sits in one of X categorical
spread states. A transition kernel `phi[e, x, x']` moves the state at each
event, and its binary row sums `gate[e, x]` encode which event types are
physically possible in which states.

All types are immutable after construction (arrays are made read-only), so
instances can be shared freely across threads and processes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Exactness tolerance for binary row sums of the transition kernel. Rows are
# constructed to sum to their gate value; serialized floats may drift by ulps.
ROW_SUM_TOL = 1e-12


class GatedHawkesError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(GatedHawkesError):
    """Raised when a file or argument fails structural validation."""


class Variant(enum.Enum):
    """Model family, from the fully gated process down to its degenerations."""

    POISSON = "poisson"
    CONST_HAWKES = "const"
    SD_HAWKES = "sd"
    EXSD_HAWKES = "exsd"

    @classmethod
    def from_token(cls, token: str) -> "Variant":
        for v in cls:
            if v.value == token:
                return v
        raise ValidationError(f"unknown variant {token!r}; expected one of "
                              f"{[v.value for v in cls]}")


@dataclass(frozen=True)
class EventType:
    """One event class, e.g. a marketable limit buy."""

    code: str
    index: int


@dataclass(frozen=True)
class SpreadState:
    """One categorical spread state, e.g. equilibrium ("1")."""

    label: str
    index: int


@dataclass(frozen=True)
class Taxonomy:
    """Ordered alphabets of event types and spread states."""

    events: tuple[EventType, ...]
    states: tuple[SpreadState, ...]

    def __post_init__(self):
        if len(self.events) < 1 or len(self.states) < 1:
            raise ValidationError("taxonomy needs at least one event type and one state")
        codes = [e.code for e in self.events]
        labels = [s.label for s in self.states]
        if len(set(codes)) != len(codes):
            raise ValidationError("event codes must be unique")
        if len(set(labels)) != len(labels):
            raise ValidationError("state labels must be unique")
        for i, e in enumerate(self.events):
            if e.index != i:
                raise ValidationError(f"event {e.code!r} has index {e.index}, expected {i}")
        for i, s in enumerate(self.states):
            if s.index != i:
                raise ValidationError(f"state {s.label!r} has index {s.index}, expected {i}")

    @classmethod
    def from_codes(cls, event_codes: Sequence[str], state_labels: Sequence[str]) -> "Taxonomy":
        return cls(
            events=tuple(EventType(c, i) for i, c in enumerate(event_codes)),
            states=tuple(SpreadState(l, i) for i, l in enumerate(state_labels)),
        )

    @property
    def n_events(self) -> int:
        return len(self.events)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def event_codes(self) -> list[str]:
        return [e.code for e in self.events]

    @property
    def state_labels(self) -> list[str]:
        return [s.label for s in self.states]

    def event_index(self, code: str) -> int:
        try:
            return self.event_codes.index(code)
        except ValueError:
            raise ValidationError(f"unknown event code {code!r}") from None

    def state_index(self, label: str) -> int:
        try:
            return self.state_labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown state label {label!r}") from None

    def to_dict(self) -> dict:
        return {"events": self.event_codes, "states": self.state_labels}

    @classmethod
    def from_dict(cls, d: dict) -> "Taxonomy":
        return cls.from_codes(d["events"], d["states"])


#: Default 14-code taxonomy over the two-state spread partition. Sided pairs:
#: aggressive (price-improving) limits, aggressive markets, marketable limits,
#: passive limits, passive cancels, passive markets, aggressive cancels.
DEFAULT_EVENT_CODES = [
    "ALS", "ALB", "AMS", "AMB", "MLS", "MLB",
    "PLS", "PLB", "PCS", "PCB", "PMS", "PMB",
    "ACS", "ACB",
]
DEFAULT_STATE_LABELS = ["1", "2+"]


def default_taxonomy() -> Taxonomy:
    return Taxonomy.from_codes(DEFAULT_EVENT_CODES, DEFAULT_STATE_LABELS)


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    if out is a:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EventRecord:
    """One marked point: arrival time plus the state transition it caused."""

    time: float
    event: int
    state_before: int
    state_after: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """A session of events, array-backed for speed.

    `times` are seconds since session start, strictly increasing, in
    (0, horizon]. In a valid stream record n starts in the state record n-1
    produced (record 0 starts in `initial_state`); `states_before` is stored
    explicitly so that broken chains can be represented and reported by
    validate_stream rather than silently repaired.
    """

    times: np.ndarray
    events: np.ndarray
    states_before: np.ndarray
    states_after: np.ndarray
    initial_state: int
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times, np.float64))
        object.__setattr__(self, "events", _frozen(self.events, np.int64))
        object.__setattr__(self, "states_before", _frozen(self.states_before, np.int64))
        object.__setattr__(self, "states_after", _frozen(self.states_after, np.int64))

    def __len__(self) -> int:
        return self.times.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.states_before, other.states_before)
            and np.array_equal(self.states_after, other.states_after)
        )

    @property
    def records(self) -> list[EventRecord]:
        return [
            EventRecord(float(t), int(e), int(b), int(a))
            for t, e, b, a in zip(self.times, self.events,
                                  self.states_before, self.states_after)
        ]

    @classmethod
    def from_records(cls, records: Iterable[EventRecord], initial_state: int,
                     horizon: float) -> "EventStream":
        recs = list(records)
        return cls(
            times=np.array([r.time for r in recs], dtype=np.float64),
            events=np.array([r.event for r in recs], dtype=np.int64),
            states_before=np.array([r.state_before for r in recs], dtype=np.int64),
            states_after=np.array([r.state_after for r in recs], dtype=np.int64),
            initial_state=initial_state,
            horizon=horizon,
        )

    @classmethod
    def from_arrays(cls, times: np.ndarray, events: np.ndarray,
                    states_after: np.ndarray, initial_state: int,
                    horizon: float) -> "EventStream":
        """Build a chain-consistent stream (states_before derived by shift)."""
        states_after = np.asarray(states_after, dtype=np.int64)
        if states_after.shape[0] == 0:
            before = np.empty(0, dtype=np.int64)
        else:
            before = np.concatenate(([initial_state], states_after[:-1]))
        return cls(times=times, events=events, states_before=before,
                   states_after=states_after, initial_state=initial_state,
                   horizon=horizon)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Gated transition probabilities.

    phi[e, x, x'] is the probability that an event of type e in state x moves
    the book to state x'. Each row sums to gate[e, x] in {0, 1}; a zero gate
    means event e cannot occur in state x at all.
    """

    phi: np.ndarray    # (E, X, X)
    gate: np.ndarray   # (E, X), entries 0 or 1

    def __post_init__(self):
        object.__setattr__(self, "phi", _frozen(self.phi, np.float64))
        object.__setattr__(self, "gate", _frozen(self.gate, np.int64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionKernel):
            return NotImplemented
        return np.array_equal(self.phi, other.phi) and np.array_equal(self.gate, other.gate)

    @property
    def n_events(self) -> int:
        return self.phi.shape[0]

    @property
    def n_states(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def from_phi(cls, phi: np.ndarray) -> "TransitionKernel":
        """Derive gates from row sums (must already be near-binary)."""
        phi = np.asarray(phi, dtype=np.float64)
        sums = phi.sum(axis=2)
        gate = np.rint(sums).astype(np.int64)
        return cls(phi=phi, gate=gate)

    @classmethod
    def all_pass(cls, n_events: int, n_states: int) -> "TransitionKernel":
        """Uniform kernel with every gate open (useful degenerate baseline)."""
        phi = np.full((n_events, n_states, n_states), 1.0 / n_states)
        gate = np.ones((n_events, n_states), dtype=np.int64)
        return cls(phi=phi, gate=gate)


@dataclass(frozen=True, eq=False)
class HawkesParams:
    """Baseline rates and exponential kernel parameters.

    alpha[e', x, e] is the intensity jump on type e caused by an event of
    type e' whose post-event state was x; beta[e', x, e] is its decay rate.
    """

    nu: np.ndarray     # (E,), > 0, events/second
    alpha: np.ndarray  # (E, X, E), >= 0, events/second
    beta: np.ndarray   # (E, X, E), > 0, 1/second

    def __post_init__(self):
        object.__setattr__(self, "nu", _frozen(self.nu, np.float64))
        object.__setattr__(self, "alpha", _frozen(self.alpha, np.float64))
        object.__setattr__(self, "beta", _frozen(self.beta, np.float64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, HawkesParams):
            return NotImplemented
        return (
            np.array_equal(self.nu, other.nu)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
        )

    @property
    def n_events(self) -> int:
        return self.nu.shape[0]

    @property
    def n_states(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """A complete model: taxonomy, variant, transition kernel, Hawkes params."""

    taxonomy: Taxonomy
    variant: Variant
    transition: TransitionKernel
    hawkes: HawkesParams


def validate_stream(stream: EventStream, taxonomy: Taxonomy) -> list[str]:
    """Collect invariant violations of a stream against a taxonomy.

    Violations are returned as data, not raised; an empty list means the
    stream is valid.
    """
    out: list[str] = []
    E, X = taxonomy.n_events, taxonomy.n_states
    n = len(stream)
    if not (0 <= stream.initial_state < X):
        out.append(f"initial_state {stream.initial_state} outside [0, {X})")
    if stream.horizon <= 0:
        out.append(f"horizon must be positive, got {stream.horizon}")
    if n == 0:
        return out
    t = stream.times
    if t[0] <= 0.0:
        out.append(f"non-positive time at n=0: {t[0]}")
    bad = np.nonzero(np.diff(t) <= 0)[0]
    for i in bad:
        out.append(f"non-increasing time at n={i + 1}: {t[i + 1]} after {t[i]}")
    if t[-1] > stream.horizon:
        out.append(f"time beyond horizon at n={n - 1}: {t[-1]} > {stream.horizon}")
    for name, arr, bound in (("event", stream.events, E),
                             ("state_before", stream.states_before, X),
                             ("state_after", stream.states_after, X)):
        oob = np.nonzero((arr < 0) | (arr >= bound))[0]
        for i in oob:
            out.append(f"{name} index {arr[i]} at n={i} outside [0, {bound})")
    expected = np.concatenate(([stream.initial_state], stream.states_after[:-1]))
    broken = np.nonzero(stream.states_before != expected)[0]
    for i in broken:
        out.append(f"state-chain violation at n={i}: state_before="
                   f"{stream.states_before[i]}, expected {expected[i]}")
    return out


def validate_model(spec: ModelSpec) -> list[str]:
    """Collect invariant violations of a model. Empty list means valid."""
    out: list[str] = []
    E, X = spec.taxonomy.n_events, spec.taxonomy.n_states
    tk, hp = spec.transition, spec.hawkes

    if tk.phi.shape != (E, X, X):
        out.append(f"phi shape {tk.phi.shape} != {(E, X, X)}")
    if tk.gate.shape != (E, X):
        out.append(f"gate shape {tk.gate.shape} != {(E, X)}")
    if hp.nu.shape != (E,):
        out.append(f"nu shape {hp.nu.shape} != {(E,)}")
    if hp.alpha.shape != (E, X, E):
        out.append(f"alpha shape {hp.alpha.shape} != {(E, X, E)}")
    if hp.beta.shape != (E, X, E):
        out.append(f"beta shape {hp.beta.shape} != {(E, X, E)}")
    if out:
        return out

    if np.any(tk.phi < 0) or np.any(tk.phi > 1):
        out.append("phi entries must lie in [0, 1]")
    if not np.isin(tk.gate, (0, 1)).all():
        out.append("gate entries must be 0 or 1")
    sums = tk.phi.sum(axis=2)
    bad = np.argwhere(np.abs(sums - tk.gate) > ROW_SUM_TOL)
    for e, x in bad:
        out.append(f"row-sum violation at (e={e}, x={x}): sum {sums[e, x]!r} "
                   f"!= gate {tk.gate[e, x]}")
    zero_rows = ~tk.phi.any(axis=2)
    mism = np.argwhere(zero_rows != (tk.gate == 0))
    for e, x in mism:
        out.append(f"gate/zero-row mismatch at (e={e}, x={x})")

    if np.any(hp.nu <= 0):
        out.append("nu entries must be strictly positive")
    if np.any(hp.alpha < 0):
        out.append("alpha entries must be non-negative")
    if np.any(hp.beta <= 0):
        out.append("beta entries must be strictly positive")

    v = spec.variant
    if v is Variant.POISSON and np.any(hp.alpha != 0):
        out.append("variant violation: poisson requires alpha == 0 everywhere")
    if v is Variant.CONST_HAWKES:
        if np.any(hp.alpha != hp.alpha[:, :1, :]) or np.any(hp.beta != hp.beta[:, :1, :]):
            out.append("variant violation: const requires alpha, beta constant "
                       "across the state mark")
    if v is Variant.SD_HAWKES and np.any(tk.gate != 1):
        out.append("variant violation: sd requires every transition row to sum to 1 "
                   "(no zero gates)")
    return out


def require_valid_model(spec: ModelSpec) -> None:
    violations = validate_model(spec)
    if violations:
        raise ValidationError("invalid model: " + "; ".join(violations))


def require_valid_stream(stream: EventStream, taxonomy: Taxonomy) -> None:
    violations = validate_stream(stream, taxonomy)
    if violations:
        raise ValidationError("invalid stream: " + "; ".join(violations))

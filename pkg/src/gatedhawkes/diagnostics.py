"""Residual analysis, distribution/independence tests, stability reports.

Under a correctly specified model, the integral of the gated intensity
between consecutive arrivals of a key (an event type, or an (event, state)
pair) is an i.i.d. unit-exponential sequence. Where a gate is closed the
integrand is zero, so physically impossible periods contribute no residual
mass: integration pauses instead of accumulating phantom mass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.special

from . import _kernels
from .core import (EventStream, GatedHawkesError, ModelSpec,
                   require_valid_model, require_valid_stream)
from .dynamics import branching_ratio, kernel_matrix
from .estimate import _require_admissible


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    """Ordered residuals for one key, non-negative, Exp(1) under the model."""

    key: str
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ResidualSeries):
            return NotImplemented
        return self.key == other.key and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class QQData:
    """Paired ascending quantiles against the unit exponential."""

    theoretical: np.ndarray
    empirical: np.ndarray


@dataclass(frozen=True)
class AcfResult:
    """Sample autocorrelations at lags 0..max_lag with the white-noise band."""

    lags: np.ndarray
    values: np.ndarray
    band: float  # +-1.96/sqrt(n)


class Regime(enum.Enum):
    SUB_CRITICAL = "sub_critical"
    SUPER_CRITICAL = "super_critical"


@dataclass(frozen=True)
class StabilityReport:
    branching: np.ndarray      # (E, X)
    spectral: np.ndarray       # (X,)
    regimes: tuple[Regime, ...]


def _segment_gated_mass(stream: EventStream, model: ModelSpec):
    """Per-segment raw integrals plus the per-segment state sequence."""
    hp = model.hawkes
    _, seg_int = _kernels.segment_raw_stats(
        stream.times, stream.events, stream.states_after,
        hp.nu, hp.alpha, hp.beta, stream.horizon)
    seg_states = np.concatenate(([stream.initial_state], stream.states_after))
    return seg_int, seg_states


def event_residuals(stream: EventStream, model: ModelSpec) -> dict[str, ResidualSeries]:
    """Gated-intensity integrals between consecutive arrivals per event type.

    The first residual of each type integrates from the session start. Mass
    accumulated after the last arrival of a type is discarded (censored).
    """
    require_valid_model(model)
    require_valid_stream(stream, model.taxonomy)
    _require_admissible(stream, model)
    seg_int, seg_states = _segment_gated_mass(stream, model)
    E = model.taxonomy.n_events
    gate = model.transition.gate
    # gated per-segment mass for every type: (n_seg, E)
    gated = seg_int * gate[:, seg_states].T
    cum = np.cumsum(gated, axis=0)
    out: dict[str, ResidualSeries] = {}
    for e in range(E):
        code = model.taxonomy.events[e].code
        hits = np.nonzero(stream.events == e)[0]
        # mass accumulated over segments 0..hit (exclusive of the segment
        # that starts at the hit itself): cum[hit] sums segments [0, hit],
        # i.e. integrates exactly up to times[hit]
        totals = cum[hits, e]
        out[code] = ResidualSeries(key=code, values=np.diff(np.concatenate(([0.0], totals))))
    return out


def total_residuals(stream: EventStream, model: ModelSpec) -> dict[tuple[str, str], ResidualSeries]:
    """Per (event, post-state) pair residuals of the transition intensity.

    The integrand is phi_e(X(t), x) times the raw intensity of e; a zero
    transition probability contributes nothing over that segment.
    """
    require_valid_model(model)
    require_valid_stream(stream, model.taxonomy)
    _require_admissible(stream, model)
    seg_int, seg_states = _segment_gated_mass(stream, model)
    E, X = model.taxonomy.n_events, model.taxonomy.n_states
    phi = model.transition.phi
    out: dict[tuple[str, str], ResidualSeries] = {}
    for e in range(E):
        code = model.taxonomy.events[e].code
        weighted = seg_int[:, e][:, None] * phi[e, seg_states, :]  # (n_seg, X)
        cum = np.cumsum(weighted, axis=0)
        for x in range(X):
            label = model.taxonomy.states[x].label
            hits = np.nonzero((stream.events == e) & (stream.states_after == x))[0]
            totals = cum[hits, x]
            out[(code, label)] = ResidualSeries(
                key=f"{code},{label}",
                values=np.diff(np.concatenate(([0.0], totals))))
    return out


def qq_exp1(series: ResidualSeries) -> QQData:
    """Empirical quantiles against Exp(1) at positions (i - 0.5)/n."""
    n = len(series)
    if n == 0:
        raise GatedHawkesError("cannot build a QQ plot from an empty series")
    p = (np.arange(1, n + 1) - 0.5) / n
    return QQData(theoretical=-np.log1p(-p), empirical=np.sort(series.values))


def acf(series: ResidualSeries, max_lag: int) -> AcfResult:
    """Sample autocorrelation at lags 0..max_lag with the 95% band.

    Lag 0 is identically 1 and reported for sanity; the white-noise band
    +-1.96/sqrt(n) applies to lags >= 1.
    """
    v = series.values
    n = len(v)
    if n <= max_lag:
        raise GatedHawkesError(
            f"series of length {n} too short for max_lag {max_lag}")
    centered = v - v.mean()
    denom = float(np.dot(centered, centered))
    if denom == 0.0:
        raise GatedHawkesError("constant series has undefined autocorrelation")
    vals = np.empty(max_lag + 1)
    vals[0] = 1.0
    for k in range(1, max_lag + 1):
        vals[k] = float(np.dot(centered[:-k], centered[k:])) / denom
    return AcfResult(lags=np.arange(max_lag + 1), values=vals,
                     band=1.96 / np.sqrt(n))


def ks_exp1(series: ResidualSeries) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic against Exp(1).

    The p-value uses the asymptotic Kolmogorov distribution; it is a
    diagnostic approximation, reasonable for n >= 35.
    """
    v = np.sort(series.values)
    n = len(v)
    if n == 0:
        raise GatedHawkesError("cannot run a KS test on an empty series")
    cdf = -np.expm1(-v)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    d = max(d_plus, d_minus)
    p = float(scipy.special.kolmogorov(np.sqrt(n) * d))
    return float(d), p


def spectral_radius(K: np.ndarray, tol: float = 1e-10,
                    max_iters: int = 10_000) -> float:
    """Perron root of a non-negative matrix by power iteration.

    Iterates v <- K v from the uniform positive vector, estimating the root
    as the norm growth ratio. Raises on non-convergence with the last
    estimate in the message.
    """
    E = K.shape[0]
    v = np.full(E, 1.0 / np.sqrt(E))
    rho = 0.0
    for _ in range(max_iters):
        w = K @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        rho_new = norm
        v = w / norm
        if abs(rho_new - rho) <= tol * max(1.0, rho_new):
            # require the eigen-equation residual as well, not just ratio
            if float(np.linalg.norm(K @ v - rho_new * v)) <= 10 * tol * max(1.0, rho_new):
                return rho_new
        rho = rho_new
    raise GatedHawkesError(
        f"power iteration did not converge in {max_iters} iterations; "
        f"last estimate {rho}")


def stability_report(model: ModelSpec) -> StabilityReport:
    """Branching ratios, per-state spectral radii, and regime labels."""
    require_valid_model(model)
    X = model.taxonomy.n_states
    spectral = np.array([spectral_radius(kernel_matrix(model, x)) for x in range(X)])
    regimes = tuple(Regime.SUPER_CRITICAL if r > 1.0 else Regime.SUB_CRITICAL
                    for r in spectral)
    return StabilityReport(branching=branching_ratio(model), spectral=spectral,
                           regimes=regimes)


def cross_correlation(a: ResidualSeries, b: ResidualSeries, max_lag: int) -> AcfResult:
    """Sample cross-correlation of two residual series at lags 0..max_lag.

    The series are truncated to their common length; lag k correlates a[t]
    with b[t+k]. This is the artifact's reading of per-pair interaction
    panels; no canonical definition exists for it.
    """
    n = min(len(a), len(b))
    if n <= max_lag:
        raise GatedHawkesError(
            f"series of common length {n} too short for max_lag {max_lag}")
    va = a.values[:n] - a.values[:n].mean()
    vb = b.values[:n] - b.values[:n].mean()
    denom = np.sqrt(float(np.dot(va, va)) * float(np.dot(vb, vb)))
    if denom == 0.0:
        raise GatedHawkesError("constant series has undefined correlation")
    vals = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        vals[k] = float(np.dot(va[:n - k] if k else va, vb[k:])) / denom
    return AcfResult(lags=np.arange(max_lag + 1), values=vals,
                     band=1.96 / np.sqrt(n))

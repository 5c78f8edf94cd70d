"""Two-step maximum likelihood estimation.

The full likelihood splits into a transition part, maximized exactly by
counting, and a Hawkes part that never reads the fractional transition
probabilities (only their binary row sums). The two steps therefore cannot
contaminate each other and are run independently:

  1. count (state_before, event, state_after) triples and take row ratios;
     rows that never occur get probability zero and a closed gate;
  2. maximize the gated Hawkes log-likelihood over (nu, alpha, beta) by
     quasi-Newton ascent on log-parameters, one target event type at a time
     (the Hawkes part separates across targets as well).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.optimize

from . import _kernels
from .core import (EventStream, GatedHawkesError, HawkesParams, ModelSpec,
                   Taxonomy, TransitionKernel, Variant, require_valid_stream)

ALPHA_FLOOR = 1e-12   # positivity floor for exp() of a free parameter
ALPHA_ZERO = 1e-8     # fitted alphas below this are reported as exactly 0


class InadmissibleEventError(GatedHawkesError):
    """An observed event is gated off in its own pre-state."""


class EmptyStreamError(GatedHawkesError):
    """Fitting requires at least one event."""


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    """Empirical transition tallies N_e(x, x') and their row sums N_e(x)."""

    n_exx: np.ndarray  # (E, X, X) int64
    n_ex: np.ndarray   # (E, X) int64

    def __eq__(self, other):
        if not isinstance(other, TransitionCounts):
            return NotImplemented
        return (np.array_equal(self.n_exx, other.n_exx)
                and np.array_equal(self.n_ex, other.n_ex))


@dataclass
class FitOptions:
    """Knobs for the Hawkes optimization step.

    gradient_tolerance applies to the max-norm of the gradient of the
    per-event average log-likelihood with respect to the log-parameters.
    """

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    restarts: int = 1
    seed: int = 0
    nu0: np.ndarray | None = None
    alpha0: np.ndarray | None = None
    beta0: np.ndarray | None = None


@dataclass
class FitReport:
    model: ModelSpec
    log_lik_tp: float
    log_lik_hawkes: float
    iterations: int
    converged: bool
    gradient_norm: float


def _as_streams(streams) -> list[EventStream]:
    if isinstance(streams, EventStream):
        return [streams]
    return list(streams)


def count_transitions(streams: EventStream | Sequence[EventStream],
                      taxonomy: Taxonomy) -> TransitionCounts:
    """Tally (state_before, event, state_after) triples across streams."""
    E, X = taxonomy.n_events, taxonomy.n_states
    n_exx = np.zeros((E, X, X), dtype=np.int64)
    for s in _as_streams(streams):
        require_valid_stream(s, taxonomy)
        np.add.at(n_exx, (s.events, s.states_before, s.states_after), 1)
    return TransitionCounts(n_exx=n_exx, n_ex=n_exx.sum(axis=2))


def estimate_transition_kernel(counts: TransitionCounts) -> TransitionKernel:
    """Row-ratio estimator with the zero branch.

    Where N_e(x) > 0 the row is N_e(x, .) / N_e(x); where N_e(x) = 0 the
    whole row is zero and the gate closes. No division by zero can occur,
    and every row sums to its gate exactly.
    """
    n_exx = counts.n_exx.astype(np.float64)
    n_ex = counts.n_ex.astype(np.float64)
    pos = counts.n_ex > 0
    phi = np.zeros_like(n_exx)
    np.divide(n_exx, n_ex[:, :, None], out=phi, where=pos[:, :, None])
    return TransitionKernel(phi=phi, gate=pos.astype(np.int64))


def log_lik_tp(counts: TransitionCounts, tk: TransitionKernel) -> float:
    """Transition log-likelihood sum N_e(x,x') ln phi_e(x,x') over observed cells."""
    observed = counts.n_exx > 0
    if np.any(observed & (tk.phi <= 0)):
        e, x, x2 = np.argwhere(observed & (tk.phi <= 0))[0]
        raise GatedHawkesError(
            f"observed transition (e={e}, {x}->{x2}) has zero probability in "
            "the kernel; the kernel does not match these counts")
    n = counts.n_exx[observed]
    return float(np.sum(n * np.log(tk.phi[observed])))


def _segment_states(stream: EventStream) -> np.ndarray:
    """Spread state on each inter-event segment, including the tail."""
    return np.concatenate(([stream.initial_state], stream.states_after))


def first_inadmissible(stream: EventStream, tk: TransitionKernel) -> int | None:
    """Index of the first observed event with a closed gate, if any."""
    if len(stream) == 0:
        return None
    bad = tk.gate[stream.events, stream.states_before] == 0
    idx = np.nonzero(bad)[0]
    return int(idx[0]) if idx.size else None


def _require_admissible(stream: EventStream, model: ModelSpec) -> None:
    n = first_inadmissible(stream, model.transition)
    if n is not None:
        code = model.taxonomy.events[int(stream.events[n])].code
        label = model.taxonomy.states[int(stream.states_before[n])].label
        raise InadmissibleEventError(
            f"record n={n} (t={stream.times[n]}, event {code!r}, state "
            f"{label!r}) is gated off under this model")


def log_lik_hawkes(streams: EventStream | Sequence[EventStream],
                   model: ModelSpec) -> float:
    """Gated Hawkes log-likelihood of the event times and types.

    Sum of log raw intensities at the observed events (their gates are
    required to be open) minus the integral of every gated intensity up to
    the horizon. Does not depend on the fractional transition probabilities.
    Returns -inf if some observed intensity underflows to zero.
    """
    hp = model.hawkes
    gate = model.transition.gate
    total = 0.0
    for s in _as_streams(streams):
        require_valid_stream(s, model.taxonomy)
        _require_admissible(s, model)
        raw_at, seg_int = _kernels.segment_raw_stats(
            s.times, s.events, s.states_after, hp.nu, hp.alpha, hp.beta,
            s.horizon)
        lam = raw_at[np.arange(len(s)), s.events]
        if np.any(lam <= 0.0):
            return float("-inf")
        seg_states = _segment_states(s)
        total += float(np.log(lam).sum())
        total -= float((gate[:, seg_states].T * seg_int).sum())
    return total


def log_lik_total(streams: EventStream | Sequence[EventStream],
                  model: ModelSpec) -> float:
    """Full marked log-likelihood: transition part plus Hawkes part."""
    counts = count_transitions(streams, model.taxonomy)
    return log_lik_tp(counts, model.transition) + log_lik_hawkes(streams, model)


def admissible_time(streams: EventStream | Sequence[EventStream],
                    tk: TransitionKernel) -> np.ndarray:
    """Per event type, total time its gate is open (up to each horizon)."""
    out = np.zeros(tk.n_events)
    for s in _as_streams(streams):
        seg_states = _segment_states(s)
        durations = np.diff(np.concatenate(([0.0], s.times, [s.horizon])))
        out += tk.gate[:, seg_states] @ durations
    return out


def hawkes_gradient(streams: EventStream | Sequence[EventStream],
                    model: ModelSpec) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Log-likelihood and its gradient in (nu, alpha, beta).

    Returned gradients have the natural-parameter shapes (E,), (E, X, E),
    (E, X, E).
    """
    hp = model.hawkes
    E, X = hp.n_events, hp.n_states
    ll = 0.0
    d_nu = np.zeros(E)
    d_alpha = np.zeros((E, X, E))
    d_beta = np.zeros((E, X, E))
    for s in _as_streams(streams):
        require_valid_stream(s, model.taxonomy)
        _require_admissible(s, model)
        for e in range(E):
            ll_e, dn, da, db = _kernels.loglik_partial(
                e, s.times, s.events, s.states_after, s.initial_state,
                model.transition.gate[e, :], hp.nu[e],
                np.ascontiguousarray(hp.alpha[:, :, e]),
                np.ascontiguousarray(hp.beta[:, :, e]), s.horizon)
            ll += ll_e
            d_nu[e] += dn
            d_alpha[:, :, e] += da
            d_beta[:, :, e] += db
    return ll, d_nu, d_alpha, d_beta


# ---------------------------------------------------------------------------
# Hawkes step internals: per-target optimization on log-parameters
# ---------------------------------------------------------------------------


def _pack(nu_e: float, alpha_e: np.ndarray, beta_e: np.ndarray,
          mode: str) -> np.ndarray:
    if mode == "rate":
        return np.log(np.array([nu_e]))
    if mode == "tied":
        alpha_e = alpha_e[:, 0]
        beta_e = beta_e[:, 0]
    return np.log(np.concatenate(([nu_e], alpha_e.ravel(), beta_e.ravel())))


def _unpack(z: np.ndarray, E: int, X: int, mode: str,
            fixed_beta: np.ndarray | None = None):
    with np.errstate(over="ignore"):
        p = np.exp(z)
    np.clip(p, ALPHA_FLOOR, 1e300, out=p)
    if mode == "rate":
        return p[0], np.zeros((E, X)), fixed_beta
    if mode == "tied":
        nu_e = p[0]
        alpha_e = np.repeat(p[1:1 + E, None], X, axis=1)
        beta_e = np.repeat(p[1 + E:, None], X, axis=1)
    else:
        nu_e = p[0]
        alpha_e = p[1:1 + E * X].reshape(E, X)
        beta_e = p[1 + E * X:].reshape(E, X)
    return nu_e, alpha_e, beta_e


def _collapse_grad(d_nu: float, d_alpha: np.ndarray, d_beta: np.ndarray,
                   nu_e: float, alpha_e: np.ndarray, beta_e: np.ndarray,
                   mode: str) -> np.ndarray:
    # chain rule through p = exp(z); tied states sum their slices
    if mode == "rate":
        return np.array([d_nu * nu_e])
    if mode == "tied":
        ga = (d_alpha * alpha_e).sum(axis=1)
        gb = (d_beta * beta_e).sum(axis=1)
    else:
        ga = (d_alpha * alpha_e).ravel()
        gb = (d_beta * beta_e).ravel()
    return np.concatenate(([d_nu * nu_e], ga, gb))


def _fit_target(e: int, streams: list[EventStream], gate_row: np.ndarray,
                initial_states: list[int], z0: np.ndarray, E: int, X: int,
                mode: str, fixed_beta: np.ndarray | None, scale: float,
                opts: FitOptions):
    """Maximize the target-e likelihood from one starting point.

    The objective is normalized per observed event (scale = 1/N): the raw
    log-likelihood of a long session is ~1e5, whose double-precision
    resolution would stall the line search far above the gradient tolerance.
    Convergence is therefore judged on the gradient of the average
    log-likelihood.
    """

    def objective(z):
        nu_e, alpha_e, beta_e = _unpack(z, E, X, mode, fixed_beta)
        ll = 0.0
        d_nu = 0.0
        d_alpha = np.zeros((E, X))
        d_beta = np.zeros((E, X))
        for s, x0 in zip(streams, initial_states):
            ll_s, dn, da, db = _kernels.loglik_partial(
                e, s.times, s.events, s.states_after, x0, gate_row,
                nu_e, alpha_e, beta_e, s.horizon)
            ll += ll_s
            d_nu += dn
            d_alpha += da
            d_beta += db
        if not np.isfinite(ll):
            # flat ceiling so the line search backtracks out of overflow
            return 1e30, np.zeros_like(z)
        g = _collapse_grad(d_nu, d_alpha, d_beta, nu_e, alpha_e, beta_e, mode)
        return -ll * scale, -g * scale

    res = scipy.optimize.minimize(
        objective, z0, jac=True, method="L-BFGS-B",
        options={"maxiter": opts.max_iterations,
                 "maxfun": 50 * max(opts.max_iterations, 1),
                 "ftol": 0.0,
                 "gtol": opts.gradient_tolerance / 2.0})
    gnorm = float(np.max(np.abs(res.jac)))
    return res.x, -float(res.fun) / scale, int(res.nit), gnorm


def _initial_guess(streams: list[EventStream], tk: TransitionKernel,
                   E: int, X: int, opts: FitOptions):
    n_by_type = np.zeros(E)
    n_total = 0
    t_total = 0.0
    for s in streams:
        n_by_type += np.bincount(s.events, minlength=E)
        n_total += len(s)
        t_total += s.horizon
    adm = admissible_time(streams, tk)
    nu0 = np.where(adm > 0, np.maximum(n_by_type, 0.5) / np.maximum(adm, 1e-12),
                   1e-8)
    beta0 = np.full((E, X, E), n_total / t_total)
    alpha0 = 0.1 * beta0 / (E * X)
    if opts.nu0 is not None:
        nu0 = np.asarray(opts.nu0, dtype=np.float64)
    if opts.beta0 is not None:
        beta0 = np.broadcast_to(np.asarray(opts.beta0, dtype=np.float64),
                                (E, X, E)).copy()
    if opts.alpha0 is not None:
        alpha0 = np.broadcast_to(np.asarray(opts.alpha0, dtype=np.float64),
                                 (E, X, E)).copy()
    return nu0, alpha0, beta0


def fit(streams: EventStream | Sequence[EventStream], taxonomy: Taxonomy,
        variant: Variant = Variant.EXSD_HAWKES,
        opts: FitOptions | None = None) -> FitReport:
    """Two-step fit: exact transition kernel, then Hawkes parameters.

    For the row-sum-1 baseline (`sd`), rows with no observations cannot be
    estimated and are set to the uniform distribution to honor the forced
    unit row sum. For `poisson` the rate estimate is closed-form: events per
    admissible second. For `const` the kernel parameters are tied across the
    state mark during optimization.

    Multiple streams are pooled: counts and log-likelihoods are summed.
    """
    opts = opts or FitOptions()
    streams = _as_streams(streams)
    if not streams:
        raise EmptyStreamError("no streams given")
    for s in streams:
        require_valid_stream(s, taxonomy)
    if sum(len(s) for s in streams) == 0:
        raise EmptyStreamError("cannot fit on a stream with zero events")
    E, X = taxonomy.n_events, taxonomy.n_states

    counts = count_transitions(streams, taxonomy)
    tk = estimate_transition_kernel(counts)
    if variant is Variant.SD_HAWKES:
        phi = tk.phi.copy()
        zero_rows = tk.gate == 0
        phi[zero_rows] = 1.0 / X
        tk = TransitionKernel(phi=phi, gate=np.ones((E, X), dtype=np.int64))

    for s in streams:
        n = first_inadmissible(s, tk)
        if n is not None:
            code = taxonomy.events[int(s.events[n])].code
            label = taxonomy.states[int(s.states_before[n])].label
            raise InadmissibleEventError(
                f"record n={n} (event {code!r}, state {label!r}) is "
                "inadmissible under the estimated gates")

    nu0, alpha0, beta0 = _initial_guess(streams, tk, E, X, opts)
    initial_states = [s.initial_state for s in streams]

    if variant is Variant.POISSON:
        mode = "rate"
    elif variant is Variant.CONST_HAWKES:
        mode = "tied"
        alpha0 = np.repeat(alpha0[:, :1, :], X, axis=1)
        beta0 = np.repeat(beta0[:, :1, :], X, axis=1)
    else:
        mode = "full"

    rng = np.random.default_rng(opts.seed)
    scale = 1.0 / sum(len(s) for s in streams)
    nu_hat = np.empty(E)
    alpha_hat = np.empty((E, X, E))
    beta_hat = np.empty((E, X, E))
    total_iters = 0
    worst_gnorm = 0.0
    for e in range(E):
        gate_row = np.ascontiguousarray(tk.gate[e, :])
        fixed_beta = np.ascontiguousarray(beta0[:, :, e]) if mode == "rate" else None
        z0 = _pack(nu0[e], np.ascontiguousarray(alpha0[:, :, e]),
                   np.ascontiguousarray(beta0[:, :, e]), mode)
        best = None
        for r in range(max(opts.restarts, 1)):
            z_start = z0 if r == 0 else z0 + rng.uniform(
                -np.log(10), np.log(10), size=z0.shape)
            z_fin, ll, nit, gnorm = _fit_target(
                e, streams, gate_row, initial_states, z_start, E, X,
                mode, fixed_beta, scale, opts)
            total_iters += nit
            if best is None or ll > best[1]:
                best = (z_fin, ll, gnorm)
        z_fin, _, gnorm = best
        worst_gnorm = max(worst_gnorm, gnorm)
        nu_e, alpha_e, beta_e = _unpack(z_fin, E, X, mode, fixed_beta)
        nu_hat[e] = nu_e
        alpha_hat[:, :, e] = alpha_e
        beta_hat[:, :, e] = beta_e

    alpha_hat[alpha_hat < ALPHA_ZERO] = 0.0
    hp = HawkesParams(nu=nu_hat, alpha=alpha_hat, beta=beta_hat)
    model = ModelSpec(taxonomy=taxonomy, variant=variant, transition=tk,
                      hawkes=hp)
    return FitReport(model=model,
                     log_lik_tp=log_lik_tp(counts, tk),
                     log_lik_hawkes=log_lik_hawkes(streams, model),
                     iterations=total_iters,
                     converged=worst_gnorm <= opts.gradient_tolerance,
                     gradient_norm=worst_gnorm)

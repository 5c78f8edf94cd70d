"""JIT-compiled inner loops.

Everything here is a plain function of arrays so numba can compile it once
and cache it. The Python-facing modules own validation, shapes, and gating
logic; these kernels own the O(N) recursions.

No fastmath: results must be bit-reproducible across runs and processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def segment_raw_stats(times, events, states_after, nu, alpha, beta, horizon):
    """Raw intensity at each event and its integral over each segment.

    Segment k spans [t_k, t_{k+1}) with t_0 = 0 and t_{N+1} = horizon; the
    spread state is constant on each segment. Returns

      raw_at[n, e]  -- nu_e + excitation at times[n], left-continuous
      seg_int[k, e] -- integral of the ungated intensity of e over segment k

    Gating is applied by the caller, which knows the per-segment state.
    """
    n = times.shape[0]
    n_e = nu.shape[0]
    n_x = alpha.shape[1]
    raw_at = np.empty((n, n_e))
    seg_int = np.empty((n + 1, n_e))

    R = np.zeros((n_e, n_x, n_e))
    t_prev = 0.0
    for k in range(n + 1):
        t_next = times[k] if k < n else horizon
        dt = t_next - t_prev
        # integral over the segment, then decay to its end
        for e in range(n_e):
            acc = nu[e] * dt
            for ep in range(n_e):
                for x in range(n_x):
                    b = beta[ep, x, e]
                    acc += R[ep, x, e] * (-np.expm1(-b * dt)) / b
            seg_int[k, e] = acc
        for ep in range(n_e):
            for x in range(n_x):
                for e in range(n_e):
                    R[ep, x, e] *= np.exp(-beta[ep, x, e] * dt)
        if k < n:
            for e in range(n_e):
                acc = nu[e]
                for ep in range(n_e):
                    for x in range(n_x):
                        acc += R[ep, x, e]
                raw_at[k, e] = acc
            ev = events[k]
            xa = states_after[k]
            for e in range(n_e):
                R[ev, xa, e] += alpha[ev, xa, e]
            t_prev = t_next
    return raw_at, seg_int


@njit(cache=True)
def loglik_partial(target, times, events, states_after, initial_state,
                   gate_row, nu_e, alpha_e, beta_e, horizon):
    """Log-likelihood terms owned by one target event type, with gradient.

    The likelihood of the full process separates across target types; this
    computes

        ll = sum_{n: e_n = target} ln(nu_e + excitation(T_n))
             - sum_segments gate_row[x_seg] * integral of the raw intensity

    together with its gradient in (nu_e, alpha_e[e',x], beta_e[e',x]), where
    alpha_e/beta_e are the (E, X) slices targeting `target`.

    D[e',x] tracks sum_m exp(-beta (t - T_m)) over matching past events and
    Ew[e',x] the time-weighted sum_m (t - T_m) exp(-beta (t - T_m)), which
    gives d D / d beta = -Ew.
    """
    n = times.shape[0]
    n_e = alpha_e.shape[0]
    n_x = alpha_e.shape[1]

    D = np.zeros((n_e, n_x))
    Ew = np.zeros((n_e, n_x))
    ll = 0.0
    d_nu = 0.0
    d_alpha = np.zeros((n_e, n_x))
    d_beta = np.zeros((n_e, n_x))

    t_prev = 0.0
    x_seg = initial_state
    for k in range(n + 1):
        t_next = times[k] if k < n else horizon
        dt = t_next - t_prev
        g = gate_row[x_seg]
        if g != 0 and dt > 0.0:
            ll -= nu_e * dt
            d_nu -= dt
            for ep in range(n_e):
                for x in range(n_x):
                    b = beta_e[ep, x]
                    f = np.exp(-b * dt)
                    one_mf = -np.expm1(-b * dt)
                    w = one_mf / b
                    ll -= alpha_e[ep, x] * D[ep, x] * w
                    d_alpha[ep, x] -= D[ep, x] * w
                    d_beta[ep, x] -= alpha_e[ep, x] * (
                        -Ew[ep, x] * w + D[ep, x] * (dt * f / b - w / b)
                    )
        # decay both accumulators to the segment end
        for ep in range(n_e):
            for x in range(n_x):
                f = np.exp(-beta_e[ep, x] * dt)
                Ew[ep, x] = f * (Ew[ep, x] + dt * D[ep, x])
                D[ep, x] *= f
        if k < n:
            if events[k] == target:
                lam = nu_e
                for ep in range(n_e):
                    for x in range(n_x):
                        lam += alpha_e[ep, x] * D[ep, x]
                if lam <= 0.0:
                    return -np.inf, 0.0, d_alpha, d_beta
                ll += np.log(lam)
                d_nu += 1.0 / lam
                for ep in range(n_e):
                    for x in range(n_x):
                        d_alpha[ep, x] += D[ep, x] / lam
                        d_beta[ep, x] -= alpha_e[ep, x] * Ew[ep, x] / lam
            D[events[k], states_after[k]] += 1.0
            x_seg = states_after[k]
            t_prev = t_next
    return ll, d_nu, d_alpha, d_beta


@njit(cache=True)
def simulate_thinning(gen, nu, alpha, beta, beta_fac_id, n_fac, beta_unique,
                      phi, gate, initial_state, total_horizon, record_from,
                      max_events):
    """Thinning simulation of the gated process on [0, total_horizon).

    Between events the state is constant and every intensity is
    non-increasing, so the total gated intensity at the segment start is a
    valid dominating rate. Candidates are drawn exponentially against it;
    one uniform both accepts and attributes the event type, a second draws
    the post-state from the transition row (whose sum is 1 at acceptance).

    Events in [0, record_from) warm the process up and are discarded; times
    are recorded relative to record_from. Returns
    (times, events, states_after, count, record_start_state, dead, had_event,
     truncated, proposals, accepted) with stats counted over the recorded
    window only; `dead` flags a state where every event type is gated off,
    and record_start_state is the spread state when recording began.
    """
    n_e = nu.shape[0]
    n_x = phi.shape[1]

    out_t = np.empty(max_events)
    out_e = np.empty(max_events, dtype=np.int64)
    out_x = np.empty(max_events, dtype=np.int64)

    R = np.zeros((n_e, n_x, n_e))
    lam = np.empty(n_e)
    fac = np.empty(n_fac)

    t = 0.0
    x = initial_state
    count = 0
    proposals = 0
    accepted = 0
    dead = False
    truncated = False
    had_event = False
    record_start_state = initial_state

    # dominating rate at the current segment start
    bound = 0.0
    for e in range(n_e):
        if gate[e, x] != 0:
            bound += nu[e]

    while True:
        if bound <= 0.0:
            dead = True
            break
        dt = gen.exponential(1.0) / bound
        t_cand = t + dt
        if t_cand >= total_horizon:
            break
        # decay to the candidate time (valid whether accepted or not)
        for u in range(n_fac):
            fac[u] = np.exp(-beta_unique[u] * dt)
        total = 0.0
        for e in range(n_e):
            if gate[e, x] != 0:
                s = nu[e]
                for ep in range(n_e):
                    for xx in range(n_x):
                        s += R[ep, xx, e] * fac[beta_fac_id[ep, xx, e]]
                lam[e] = s
                total += s
            else:
                lam[e] = 0.0
        for ep in range(n_e):
            for xx in range(n_x):
                for e in range(n_e):
                    R[ep, xx, e] *= fac[beta_fac_id[ep, xx, e]]
        t = t_cand
        recording = t > record_from
        if recording:
            proposals += 1
        u01 = gen.random() * bound
        if u01 > total:
            bound = total
            continue
        # attribute the event type by the same uniform
        ev = -1
        csum = 0.0
        for e in range(n_e):
            if lam[e] > 0.0:
                csum += lam[e]
                ev = e
                if u01 <= csum:
                    break
        # post-state from the transition row (row sum is 1 here)
        v = gen.random()
        x_new = -1
        csum = 0.0
        for xx in range(n_x):
            p = phi[ev, x, xx]
            if p > 0.0:
                csum += p
                x_new = xx
                if v <= csum:
                    break
        for e in range(n_e):
            R[ev, x_new, e] += alpha[ev, x_new, e]
        x = x_new
        had_event = True
        if not recording:
            record_start_state = x_new
        if recording:
            accepted += 1
            out_t[count] = t - record_from
            out_e[count] = ev
            out_x[count] = x_new
            count += 1
            if count >= max_events:
                truncated = True
                break
        # new dominating rate right after the jump
        bound = 0.0
        for e in range(n_e):
            if gate[e, x] != 0:
                s = nu[e]
                for ep in range(n_e):
                    for xx in range(n_x):
                        s += R[ep, xx, e]
                bound += s

    return (out_t[:count], out_e[:count], out_x[:count], count,
            record_start_state, dead, had_event, truncated, proposals,
            accepted)

"""Acceptance criteria, one test per criterion.

Each test prints a single `ACCEPTANCE <nn> <name>: PASS` line when its
assertions hold (run pytest with -s or read the captured output). Monte
Carlo experiments run on fixed seeds and are deterministic.
"""

import concurrent.futures
import json
import subprocess
import sys

import numpy as np
import pytest

from gatedhawkes import _kernels
from gatedhawkes.core import (EventRecord, EventStream, HawkesParams,
                              ModelSpec, Taxonomy, TransitionKernel, Variant)
from gatedhawkes.diagnostics import (acf, event_residuals, ks_exp1,
                                     spectral_radius, stability_report,
                                     total_residuals)
from gatedhawkes.dynamics import (RecursionState, advance, intensity,
                                  compensator_segment, register_event)
from gatedhawkes.estimate import (FitOptions, TransitionCounts,
                                  count_transitions,
                                  estimate_transition_kernel, fit,
                                  hawkes_gradient, log_lik_hawkes, log_lik_tp)
from gatedhawkes.scenarios import make_scenario
from gatedhawkes.signature import signature_curve
from gatedhawkes.simulate import derive_seed, simulate
from conftest import random_gated_model, simulate_stream
from oracles import brute_raw_intensity, quad_compensator, state_lookup

RECOVERY_SEED = 57
RECOVERY_HORIZON = 80_000.0
ENSEMBLE_SEEDS = 200
ENSEMBLE_HORIZON = 7_200.0
ENSEMBLE_MASTER = 2026
EVENT_BUDGET = 10_000_000


def _passed(num, name, detail=""):
    import conftest
    key = f"{num:02d}_{name.replace('-', '_')}"
    conftest.ACCEPTANCE_DETAILS[key] = detail
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {num:02d} {name}: PASS{suffix}", flush=True)


# ---------------------------------------------------------------------------
# shared experiments
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def recovery_experiment():
    model, impact = make_scenario("subcritical")
    res = simulate(model, impact, horizon=RECOVERY_HORIZON, seed=RECOVERY_SEED)
    assert 90_000 <= len(res.stream) <= 120_000
    return model, res.stream


@pytest.fixture(scope="module")
def recovery_fit(recovery_experiment):
    model, stream = recovery_experiment
    return fit(stream, model.taxonomy, Variant.EXSD_HAWKES, FitOptions())


def _leaky_truncated(index):
    model, impact = make_scenario("sd-leaky")
    res = simulate(model, impact, horizon=ENSEMBLE_HORIZON,
                   seed=derive_seed(ENSEMBLE_MASTER, index),
                   max_events=EVENT_BUDGET)
    return res.truncated


@pytest.fixture(scope="module")
def exsd_ensemble():
    model, impact = make_scenario("dual-regime")
    paths, truncated = [], []
    for i in range(ENSEMBLE_SEEDS):
        res = simulate(model, impact, horizon=ENSEMBLE_HORIZON,
                       seed=derive_seed(ENSEMBLE_MASTER, i),
                       max_events=EVENT_BUDGET, initial_price=100.0)
        paths.append(res.path)
        truncated.append(res.truncated)
    return paths, np.array(truncated)


@pytest.fixture(scope="module")
def leaky_truncations():
    with concurrent.futures.ProcessPoolExecutor(max_workers=4) as ex:
        flags = list(ex.map(_leaky_truncated, range(ENSEMBLE_SEEDS),
                            chunksize=4))
    return np.array(flags)


@pytest.fixture(scope="module")
def poisson_ensemble():
    model, impact = make_scenario("poisson")
    paths = []
    for i in range(ENSEMBLE_SEEDS):
        res = simulate(model, impact, horizon=ENSEMBLE_HORIZON,
                       seed=derive_seed(ENSEMBLE_MASTER, i),
                       initial_price=100.0)
        paths.append(res.path)
    return paths


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_criterion_01_intensity_oracle():
    """Recursive intensities equal the direct whole-history evaluation."""
    worst = 0.0
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        closed = ((int(rng.integers(0, 4)), int(rng.integers(0, 2))),)
        model = random_gated_model(rng, n_events=4, n_states=2, closed=closed,
                                   rho_scale=float(rng.uniform(0.2, 0.6)))
        stream = simulate_stream(model, horizon=250.0, seed=2000 + trial,
                                 max_events=500)
        assert len(stream) <= 500
        at = state_lookup(stream)
        t_hi = float(stream.times[-1]) if len(stream) else stream.horizon
        query = np.sort(rng.uniform(0.0, t_hi, 100))
        rec = RecursionState.initial(model.hawkes)
        i = 0
        for t in query:
            while i < len(stream) and stream.times[i] < t:
                rec = advance(rec, stream.times[i])
                rec = register_event(rec, int(stream.events[i]),
                                     int(stream.states_after[i]))
                i += 1
            rec = advance(rec, t)
            iv = intensity(rec, model, at(t))
            brute = brute_raw_intensity(t, stream, model.hawkes)
            rel = np.max(np.abs(iv.raw - brute) / brute)
            worst = max(worst, rel)
            assert rel <= 1e-10
            gate = model.transition.gate[:, at(t)]
            np.testing.assert_allclose(iv.lambda_dag, gate * brute,
                                       rtol=1e-10)
    _passed(1, "intensity-oracle", f"worst rel err {worst:.2e}")


def test_criterion_02_compensator_oracle():
    """Closed-form segment integrals match adaptive quadrature to 1e-8."""
    rng = np.random.default_rng(77)
    model = random_gated_model(rng, n_events=3, n_states=2, closed=((2, 0),))
    stream = simulate_stream(model, horizon=120.0, seed=5)
    bounds = np.concatenate(([0.0], stream.times, [stream.horizon]))
    seg_states = np.concatenate(([stream.initial_state], stream.states_after))
    # recursion checkpoints at every segment start
    recs = []
    rec = RecursionState.initial(model.hawkes)
    for k in range(len(stream)):
        recs.append(rec)
        rec = advance(rec, stream.times[k])
        rec = register_event(rec, int(stream.events[k]),
                             int(stream.states_after[k]))
    recs.append(rec)

    worst = 0.0
    checked = 0
    while checked < 1000:
        k = int(rng.integers(0, len(recs)))
        gap = bounds[k + 1] - bounds[k]
        if gap <= 0:
            continue
        dt = float(rng.uniform(0, gap))
        e = int(rng.integers(0, 3))
        rec_k = advance(recs[k], bounds[k])
        seg = compensator_segment(rec_k, model, int(seg_states[k]), dt)
        if model.transition.gate[e, seg_states[k]]:
            ref = quad_compensator(stream, model, e, bounds[k],
                                   bounds[k] + dt)
        else:
            ref = 0.0
        err = abs(seg[e] - ref)
        worst = max(worst, err)
        assert err <= 1e-8
        checked += 1
    _passed(2, "compensator-oracle", f"worst abs err {worst:.2e}")


def test_criterion_03_kkt_estimator_exactness():
    """Counting estimator reproduces hand ratios; zero rows close gates."""
    n_exx = np.zeros((2, 2, 2), dtype=np.int64)
    n_exx[0, 0] = [3, 1]      # -> (0.75, 0.25)
    n_exx[0, 1] = [0, 7]      # -> (0, 1)
    n_exx[1, 1] = [2, 2]      # -> (0.5, 0.5)
    counts = TransitionCounts(n_exx=n_exx, n_ex=n_exx.sum(axis=2))
    tk = estimate_transition_kernel(counts)
    assert tk.phi[0, 0, 0] == 0.75 and tk.phi[0, 0, 1] == 0.25
    assert tk.phi[0, 1, 0] == 0.0 and tk.phi[0, 1, 1] == 1.0
    assert tk.phi[1, 1, 0] == 0.5
    # zero branch: never-observed row is exactly zero with a closed gate
    assert np.all(tk.phi[1, 0] == 0.0)
    assert tk.gate[1, 0] == 0
    assert tk.gate[0, 0] == 1 and tk.gate[0, 1] == 1 and tk.gate[1, 1] == 1
    np.testing.assert_array_equal(tk.phi.sum(axis=2) == 0.0, tk.gate == 0)
    _passed(3, "kkt-estimator-exactness")


def test_criterion_04_separability(small_model, small_stream):
    """Gate-preserving phi changes leave the Hawkes term bit-identical, and
    an independently computed full likelihood equals the sum of parts."""
    ll_h = log_lik_hawkes(small_stream, small_model)
    rng = np.random.default_rng(3)
    phi = small_model.transition.phi.copy()
    for e in range(phi.shape[0]):
        for x in range(phi.shape[1]):
            if small_model.transition.gate[e, x]:
                row = rng.uniform(0.1, 1.0, phi.shape[2])
                phi[e, x] = row / row.sum()
    perturbed = ModelSpec(
        taxonomy=small_model.taxonomy, variant=small_model.variant,
        transition=TransitionKernel(phi=phi, gate=small_model.transition.gate),
        hawkes=small_model.hawkes)
    assert log_lik_hawkes(small_stream, perturbed) == ll_h  # bit-identical

    # independent full likelihood via the transition intensities directly
    counts = count_transitions(small_stream, small_model.taxonomy)
    tk = estimate_transition_kernel(counts)
    model = ModelSpec(taxonomy=small_model.taxonomy, variant=small_model.variant,
                      transition=tk, hawkes=small_model.hawkes)
    s = small_stream
    hp = model.hawkes
    raw_at, seg_int = _kernels.segment_raw_stats(
        s.times, s.events, s.states_after, hp.nu, hp.alpha, hp.beta, s.horizon)
    seg_states = np.concatenate(([s.initial_state], s.states_after))
    full = 0.0
    for n in range(len(s)):
        lam_tilde = (tk.phi[s.events[n], s.states_before[n], s.states_after[n]]
                     * raw_at[n, s.events[n]])
        full += np.log(lam_tilde)
    # integral of every transition intensity == integral of gated intensity
    full -= float((tk.phi[:, seg_states, :].sum(axis=2).T * seg_int).sum())
    parts = log_lik_tp(counts, tk) + log_lik_hawkes(s, model)
    assert full == pytest.approx(parts, rel=1e-12, abs=1e-12)
    _passed(4, "separability", f"|full - parts| = {abs(full - parts):.2e}")


def test_criterion_05_gradient_correctness():
    """Analytic gradient vs central differences at 10 random points."""
    rng = np.random.default_rng(55)
    base = random_gated_model(rng, n_events=2, n_states=2, closed=((1, 0),))
    stream = simulate_stream(base, horizon=300.0, seed=14)
    h = 1e-6
    worst = 0.0
    for point in range(10):
        nu = rng.uniform(0.1, 0.8, 2)
        alpha = rng.uniform(0.05, 0.6, (2, 2, 2))
        beta = rng.uniform(0.5, 3.0, (2, 2, 2))

        def ll(nu=nu, alpha=alpha, beta=beta):
            m = ModelSpec(taxonomy=base.taxonomy, variant=base.variant,
                          transition=base.transition,
                          hawkes=HawkesParams(nu=nu, alpha=alpha, beta=beta))
            return log_lik_hawkes(stream, m)

        model = ModelSpec(taxonomy=base.taxonomy, variant=base.variant,
                          transition=base.transition,
                          hawkes=HawkesParams(nu=nu, alpha=alpha, beta=beta))
        _, d_nu, d_alpha, d_beta = hawkes_gradient(stream, model)
        for arr, grad, name in ((nu, d_nu, "nu"), (alpha, d_alpha, "alpha"),
                                (beta, d_beta, "beta")):
            idx = tuple(rng.integers(0, n) for n in arr.shape)
            plus, minus = arr.copy(), arr.copy()
            plus[idx] *= np.exp(h)
            minus[idx] *= np.exp(-h)
            fd = (ll(**{name: plus}) - ll(**{name: minus})) / (2 * h)
            an = grad[idx] * arr[idx]
            rel = abs(an - fd) / max(abs(fd), 1e-12)
            worst = max(worst, rel)
            assert rel <= 1e-4
    _passed(5, "gradient-correctness", f"worst rel err {worst:.2e}")


def test_criterion_06_parameter_recovery(recovery_experiment, recovery_fit):
    """Simulate ~1e5 events from the sub-critical scenario, fit, recover.

    Kernels the truth does not contain (alpha identically zero) have no
    identifiable decay rate: a vanishing-mass kernel fits equally well with
    any beta (the beta->0 direction mimics the baseline). For those cells
    the test bounds the spurious attributed offspring mass instead.
    """
    model, stream = recovery_experiment
    rep = recovery_fit
    assert rep.converged
    truth, fitted = model.hawkes, rep.model.hawkes
    real = truth.alpha > 0

    rel_nu = np.abs(fitted.nu - truth.nu) / truth.nu
    assert rel_nu.max() <= 0.10
    rel_alpha = np.abs(fitted.alpha[real] - truth.alpha[real]) / truth.alpha[real]
    assert rel_alpha.max() <= 0.10
    rel_beta = np.abs(fitted.beta[real] - truth.beta[real]) / truth.beta[real]
    assert rel_beta.max() <= 0.10

    phi_err = np.abs(rep.model.transition.phi - model.transition.phi).max()
    assert phi_err <= 0.02
    np.testing.assert_array_equal(rep.model.transition.gate,
                                  model.transition.gate)

    # spurious mass attributed to non-existent kernels, per target type
    n_pair = np.zeros((4, 2))
    np.add.at(n_pair, (np.asarray(stream.events),
                       np.asarray(stream.states_after)), 1)
    n_by_type = np.bincount(stream.events, minlength=4).astype(float)
    attributed = fitted.alpha / fitted.beta * n_pair[:, :, None]
    for e in range(4):
        spurious = attributed[:, :, e][~real[:, :, e]].sum() / n_by_type[e]
        assert spurious <= 0.10
    _passed(6, "parameter-recovery",
            f"N={len(stream)}, worst nu {rel_nu.max():.3f}, "
            f"alpha {rel_alpha.max():.3f}, beta {rel_beta.max():.3f}, "
            f"phi {phi_err:.4f}")


def test_criterion_07_residual_whitening(recovery_experiment):
    """Residuals of self-simulated data behave as unit exponentials."""
    model, stream = recovery_experiment
    ev = event_residuals(stream, model)
    tot = total_residuals(stream, model)
    series_all = list(ev.values()) + list(tot.values())

    checked_mean = checked_ks = 0
    for s in series_all:
        n = len(s)
        if n >= 1000:
            assert abs(s.values.mean() - 1.0) < 3.0 / np.sqrt(n), s.key
            checked_mean += 1
            _, p = ks_exp1(s)
            assert p > 0.01, (s.key, p)
            checked_ks += 1

    in_band = total_lags = 0
    for s in series_all:
        if len(s) >= 1000:
            out = acf(s, max_lag=20)
            inside = np.abs(out.values[1:]) <= out.band
            in_band += int(inside.sum())
            total_lags += 20
    frac = in_band / total_lags
    assert frac >= 0.90
    _passed(7, "residual-whitening",
            f"{checked_mean} keys, ACF in-band {frac:.3f}")


def test_criterion_08_gated_residual_pause():
    """The hand example: unit rate, gate closed on [1, 2), arrival at 3
    after one at the origin gives a residual of exactly 2."""
    tax = Taxonomy.from_codes(["A", "T"], ["on", "off"])
    phi = np.zeros((2, 2, 2))
    gate = np.ones((2, 2), dtype=np.int64)
    gate[0, 1] = 0
    phi[0, 0] = [1.0, 0.0]
    phi[1, 0] = [0.0, 1.0]
    phi[1, 1] = [1.0, 0.0]
    model = ModelSpec(
        taxonomy=tax, variant=Variant.EXSD_HAWKES,
        transition=TransitionKernel(phi=phi, gate=gate),
        hawkes=HawkesParams(nu=np.array([1.0, 0.5]),
                            alpha=np.zeros((2, 2, 2)),
                            beta=np.ones((2, 2, 2))))
    recs = [EventRecord(1.0, 1, 0, 1), EventRecord(2.0, 1, 1, 0),
            EventRecord(3.0, 0, 0, 0)]
    stream = EventStream.from_records(recs, initial_state=0, horizon=4.0)
    out = event_residuals(stream, model)
    assert out["A"].values.tolist() == [2.0]
    tot = total_residuals(stream, model)
    assert tot[("A", "on")].values.tolist() == [2.0]
    _passed(8, "gated-residual-pause", "residual 2.0, not 3.0")


@pytest.mark.slow
def test_criterion_09_dual_regime_stability(exsd_ensemble, leaky_truncations):
    """Gated ensembles finish under the event budget; ungated ones blow it."""
    _, exsd_trunc = exsd_ensemble
    completed = 1.0 - exsd_trunc.mean()
    diverged = leaky_truncations.mean()
    assert completed >= 0.95
    assert diverged >= 0.50
    _passed(9, "dual-regime-stability",
            f"gated completed {completed:.3f}, ungated diverged {diverged:.3f}")


@pytest.mark.slow
def test_criterion_10_signature_slope(exsd_ensemble, poisson_ensemble):
    """The gated ensemble's RV rises at high frequency; Poisson stays flat."""
    paths, _ = exsd_ensemble
    curve = signature_curve(paths, [1.0, 60.0], ENSEMBLE_HORIZON)
    se = float(np.hypot(curve.stderr[0], curve.stderr[1]))
    slope = float(curve.rv[0] - curve.rv[1])
    assert slope > 2 * se

    curve_p = signature_curve(poisson_ensemble, [1.0, 60.0], ENSEMBLE_HORIZON)
    se_p = float(np.hypot(curve_p.stderr[0], curve_p.stderr[1]))
    slope_p = float(curve_p.rv[0] - curve_p.rv[1])
    assert abs(slope_p) <= 2 * se_p
    _passed(10, "signature-slope",
            f"gated slope {slope / se:.1f} se, poisson {slope_p / se_p:.1f} se")


def test_criterion_11_spectral_radius():
    K = np.array([[0.2, 0.1], [0.1, 0.2]])
    assert abs(spectral_radius(K) - 0.3) <= 1e-9
    model, _ = make_scenario("dual-regime")
    rep = stability_report(model)
    assert abs(rep.spectral[0] - 0.19) / 0.19 <= 0.01
    assert abs(rep.spectral[1] - 2.67) / 2.67 <= 0.01
    _passed(11, "spectral-radius",
            f"rho = ({rep.spectral[0]:.6f}, {rep.spectral[1]:.6f})")


@pytest.mark.slow
def test_criterion_12_determinism(tmp_path):
    """Identical seeds and flags give byte-identical outputs, jobs included."""
    cli = [sys.executable, "-m", "gatedhawkes.cli"]

    def run(*args):
        r = subprocess.run(cli + [str(a) for a in args], capture_output=True,
                           text=True)
        assert r.returncode in (0, 2), r.stderr
        return r

    model = tmp_path / "model.json"
    impact = tmp_path / "impact.json"
    run("synth", "dual-regime", "--out-model", model, "--out-impact", impact)

    outputs = {}
    for tag, jobs in (("a", 1), ("b", 4), ("c", 4)):
        sim = tmp_path / f"sim_{tag}"
        run("simulate", "--model", model, "--impact", impact, "--out-dir",
            sim, "--horizon", 600, "--seed", 11, "--seeds", 6,
            "--jobs", jobs)
        fitted = tmp_path / f"fitted_{tag}.json"
        report = tmp_path / f"report_{tag}.json"
        run("fit", *(sim / f"stream_{i:04d}.csv" for i in range(6)),
            "--taxonomy", model, "--variant", "exsd",
            "--out-model", fitted, "--report", report)
        diag = tmp_path / f"diag_{tag}"
        run("diagnose", "--stream", sim / "stream_0000.csv", "--model",
            model, "--out-dir", diag)
        sig = tmp_path / f"sig_{tag}.csv"
        run("signature", "--manifest", sim / "manifest.json", "--out", sig,
            "--deltas", "0.5,2,10,60")
        outputs[tag] = (sim, fitted, report, diag, sig)

    n_files = 0
    for other in ("b", "c"):
        sim_a, fit_a, rep_a, diag_a, sig_a = outputs["a"]
        sim_o, fit_o, rep_o, diag_o, sig_o = outputs[other]
        for name in sorted(p.name for p in sim_a.iterdir()):
            assert (sim_a / name).read_bytes() == (sim_o / name).read_bytes(), name
            n_files += 1
        assert fit_a.read_bytes() == fit_o.read_bytes()
        assert rep_a.read_bytes() == rep_o.read_bytes()
        assert sig_a.read_bytes() == sig_o.read_bytes()
        n_files += 3
        for name in sorted(p.name for p in diag_a.iterdir()):
            assert (diag_a / name).read_bytes() == (diag_o / name).read_bytes(), name
            n_files += 1
    _passed(12, "determinism", f"{n_files} files byte-identical")

"""Command-line pipeline: synth, simulate, fit, diagnose, signature.

Exit codes follow a scriptable contract: 0 success, 1 input or configuration
error, 2 soft failure (a fit that did not converge, or a simulation that hit
its event budget; outputs are still written).

Every command resolves its parameters from defaults, then an optional
--config JSON file, then explicit flags (flags win), and echoes the resolved
configuration to stdout as a reproducibility record. All randomness flows
from explicit seeds; per-run seeds in ensembles are derived with a fixed
splitmix-style mix, so outputs do not depend on --jobs.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import io as gio
from .core import (GatedHawkesError, ModelSpec, Taxonomy, Variant,
                   default_taxonomy)
from .diagnostics import (acf, cross_correlation, event_residuals, ks_exp1,
                          qq_exp1, stability_report, total_residuals)
from .estimate import FitOptions, fit
from .scenarios import SCENARIO_NAMES, make_scenario
from .signature import DEFAULT_DELTAS, signature_curve
from .simulate import (DEFAULT_MAX_EVENTS, DeadStateError, ImpactTable,
                       derive_seed, simulate)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOFT = 2


class _InputError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise _InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise _InputError(f"config {path} must hold a JSON object")
    return cfg


def _resolve(flag_value, cfg: dict, key: str, default):
    """Flags beat the config file, which beats the built-in default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _echo_config(command: str, resolved: dict) -> None:
    click.echo(json.dumps({"command": command, **resolved}, default=str))


def _load_taxonomy(path: str | None) -> Taxonomy:
    if path is None:
        return default_taxonomy()
    with open(path) as f:
        doc = json.load(f)
    if "taxonomy" in doc:
        doc = doc["taxonomy"]
    return Taxonomy.from_dict(doc)


def default_impact(taxonomy: Taxonomy) -> ImpactTable:
    """Half-tick shifts at the minimum spread, full-tick in wider states,
    for the aggressive code families (AL*, AM*, ML*); buys up, sells down."""
    dm = np.zeros((taxonomy.n_events, taxonomy.n_states))
    for e, ev in enumerate(taxonomy.events):
        code = ev.code
        if len(code) == 3 and code[:2] in ("AL", "AM", "ML") and code[2] in "BS":
            sign = 1.0 if code[2] == "B" else -1.0
            dm[e, 0] = 0.5 * sign
            for x in range(1, taxonomy.n_states):
                dm[e, x] = 1.0 * sign
    return ImpactTable(delta_m=dm)


def _run(body) -> int:
    try:
        return body()
    except _InputError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    except (GatedHawkesError, OSError, json.JSONDecodeError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT


@click.group()
def main():
    """Gated state-dependent Hawkes processes for order-book event streams."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command("synth")
@click.argument("scenario")
@click.option("--out-model", required=True, type=click.Path())
@click.option("--out-impact", required=True, type=click.Path())
def cmd_synth(scenario, out_model, out_impact):
    """Write the ground-truth model and impact table of a named scenario."""

    def body():
        if scenario not in SCENARIO_NAMES:
            raise _InputError(f"unknown scenario {scenario!r}; expected one "
                              f"of {', '.join(SCENARIO_NAMES)}")
        model, impact = make_scenario(scenario)
        gio.write_model(model, out_model)
        gio.write_impact(impact, model.taxonomy, out_impact)
        _echo_config("synth", {"scenario": scenario, "out_model": out_model,
                               "out_impact": out_impact})
        return EXIT_OK

    sys.exit(_run(body))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_one(model: ModelSpec, impact: ImpactTable, horizon: float,
                  initial_state: int, seed: int, max_events: int,
                  burn_in: float, initial_price: float, out_dir: str,
                  index: int) -> dict:
    run_seed = derive_seed(seed, index)
    res = simulate(model, impact, horizon=horizon, initial_state=initial_state,
                   seed=run_seed, max_events=max_events, burn_in=burn_in,
                   initial_price=initial_price)
    stream_name = f"stream_{index:04d}.csv"
    mid_name = f"midprice_{index:04d}.csv"
    gio.write_stream(res.stream, os.path.join(out_dir, stream_name),
                     model.taxonomy)
    gio.write_midprice(res.path, horizon, os.path.join(out_dir, mid_name))
    return {
        "index": index,
        "seed": run_seed,
        "events": len(res.stream),
        "truncated": res.truncated,
        "proposals": res.thinning_stats.proposals,
        "accepted": res.thinning_stats.accepted,
        "rejected": res.thinning_stats.rejected,
        "stream": stream_name,
        "midprice": mid_name,
    }


@main.command("simulate")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--impact", "impact_path", type=click.Path(), default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--horizon", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--seeds", "n_seeds", type=int, default=None,
              help="Number of ensemble runs (per-run seeds derived from --seed).")
@click.option("--jobs", type=int, default=None)
@click.option("--max-events", type=int, default=None)
@click.option("--burn-in", type=float, default=None)
@click.option("--initial-state", "initial_state_label", type=str, default=None)
@click.option("--initial-price", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def cmd_simulate(model_path, impact_path, out_dir, horizon, seed, n_seeds,
                 jobs, max_events, burn_in, initial_state_label,
                 initial_price, config_path):
    """Simulate an ensemble; one stream + mid-price CSV per run."""

    def body():
        cfg = _load_config(config_path)
        h = float(_resolve(horizon, cfg, "horizon", 3600.0))
        master = int(_resolve(seed, cfg, "seed", 0))
        n = int(_resolve(n_seeds, cfg, "seeds", 1))
        nj = int(_resolve(jobs, cfg, "jobs", 1))
        budget = int(_resolve(max_events, cfg, "max_events", DEFAULT_MAX_EVENTS))
        burn = float(_resolve(burn_in, cfg, "burn_in", 0.0))
        price0 = float(_resolve(initial_price, cfg, "initial_price", 0.0))
        model = gio.read_model(model_path)
        if impact_path is not None:
            impact, _ = gio.read_impact(impact_path, model.taxonomy)
        else:
            impact = default_impact(model.taxonomy)
        label = _resolve(initial_state_label, cfg, "initial_state",
                         model.taxonomy.state_labels[0])
        x0 = model.taxonomy.state_index(str(label))
        os.makedirs(out_dir, exist_ok=True)
        _echo_config("simulate", {
            "model": model_path, "impact": impact_path, "out_dir": out_dir,
            "horizon": h, "seed": master, "seeds": n, "jobs": nj,
            "max_events": budget, "burn_in": burn, "initial_state": label,
            "initial_price": price0})

        try:
            if nj <= 1 or n == 1:
                entries = [_simulate_one(model, impact, h, x0, master, budget,
                                         burn, price0, out_dir, i)
                           for i in range(n)]
            else:
                with concurrent.futures.ProcessPoolExecutor(max_workers=nj) as ex:
                    futures = [ex.submit(_simulate_one, model, impact, h, x0,
                                         master, budget, burn, price0,
                                         out_dir, i)
                               for i in range(n)]
                    entries = [f.result() for f in futures]
        except DeadStateError as exc:
            raise _InputError(str(exc)) from exc
        entries.sort(key=lambda d: d["index"])
        # run entries carry file names relative to the manifest's directory,
        # so re-running into another directory yields byte-identical output
        manifest = {
            "version": "v1",
            "model": os.path.basename(model_path),
            "horizon": h,
            "master_seed": master,
            "runs": entries,
        }
        with open(os.path.join(out_dir, "manifest.json"), "w", newline="\n") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
        return EXIT_SOFT if any(d["truncated"] for d in entries) else EXIT_OK

    sys.exit(_run(body))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


@main.command("fit")
@click.argument("stream_paths", nargs=-1, required=True)
@click.option("--variant", type=click.Choice([v.value for v in Variant]),
              default=None)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None,
              help="Taxonomy JSON (or any model/impact file embedding one); "
                   "defaults to the built-in 14-type, 2-state book taxonomy.")
@click.option("--out-model", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--horizon", type=float, default=None,
              help="Override the streams' horizon headers.")
@click.option("--max-iterations", type=int, default=None)
@click.option("--gradient-tolerance", type=float, default=None)
@click.option("--restarts", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--init-nu", type=str, default=None,
              help="Baseline-rate starting point: scalar or comma list per type.")
@click.option("--init-alpha", type=float, default=None,
              help="Scalar starting point broadcast over the jump tensor.")
@click.option("--init-beta", type=float, default=None,
              help="Scalar starting point broadcast over the decay tensor.")
@click.option("--config", "config_path", type=click.Path(), default=None)
def cmd_fit(stream_paths, variant, taxonomy_path, out_model, report_path,
            horizon, max_iterations, gradient_tolerance, restarts, seed,
            init_nu, init_alpha, init_beta, config_path):
    """Two-step fit on one or more streams (pooled likelihood)."""

    def body():
        cfg = _load_config(config_path)
        var = Variant.from_token(_resolve(variant, cfg, "variant", "exsd"))
        taxonomy = _load_taxonomy(_resolve(taxonomy_path, cfg, "taxonomy", None))
        nu0_text = _resolve(init_nu, cfg, "init_nu", None)
        nu0 = None
        if nu0_text is not None:
            vals = [float(tok) for tok in str(nu0_text).split(",")]
            nu0 = np.full(taxonomy.n_events, vals[0]) if len(vals) == 1 \
                else np.asarray(vals)
        a0 = _resolve(init_alpha, cfg, "init_alpha", None)
        b0 = _resolve(init_beta, cfg, "init_beta", None)
        opts = FitOptions(
            max_iterations=int(_resolve(max_iterations, cfg, "max_iterations", 500)),
            gradient_tolerance=float(_resolve(gradient_tolerance, cfg,
                                              "gradient_tolerance", 1e-6)),
            restarts=int(_resolve(restarts, cfg, "restarts", 1)),
            seed=int(_resolve(seed, cfg, "seed", 0)),
            nu0=nu0,
            alpha0=None if a0 is None else np.float64(a0),
            beta0=None if b0 is None else np.float64(b0))
        _echo_config("fit", {
            "streams": list(stream_paths), "variant": var.value,
            "out_model": out_model, "report": report_path,
            "max_iterations": opts.max_iterations,
            "gradient_tolerance": opts.gradient_tolerance,
            "restarts": opts.restarts, "seed": opts.seed,
            "init_nu": nu0_text, "init_alpha": a0, "init_beta": b0})
        streams = [gio.read_stream(p, taxonomy, horizon=horizon)
                   for p in stream_paths]
        report = fit(streams, taxonomy, var, opts)
        gio.write_model(report.model, out_model)
        doc = {
            "converged": report.converged,
            "iterations": report.iterations,
            "gradient_norm": report.gradient_norm,
            "log_lik_tp": report.log_lik_tp,
            "log_lik_hawkes": report.log_lik_hawkes,
            "log_lik_total": report.log_lik_tp + report.log_lik_hawkes,
            "n_events": sum(len(s) for s in streams),
        }
        if report_path:
            with open(report_path, "w", newline="\n") as f:
                json.dump(doc, f, indent=2)
                f.write("\n")
        click.echo(json.dumps(doc))
        return EXIT_OK if report.converged else EXIT_SOFT

    sys.exit(_run(body))


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def _safe(name: str) -> str:
    return name.replace("/", "_").replace(",", "_")


@main.command("diagnose")
@click.option("--stream", "stream_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--max-lag", type=int, default=None)
@click.option("--horizon", type=float, default=None)
@click.option("--cross-corr", is_flag=True, default=False,
              help="Also export pairwise cross-correlations of the "
                   "event-wise residual series (one CSV per ordered pair).")
@click.option("--config", "config_path", type=click.Path(), default=None)
def cmd_diagnose(stream_path, model_path, out_dir, max_lag, horizon,
                 cross_corr, config_path):
    """Residual series, QQ/ACF/KS per key, stability report, transition CSV."""

    def body():
        cfg = _load_config(config_path)
        lag = int(_resolve(max_lag, cfg, "max_lag", 20))
        model = gio.read_model(model_path)
        stream = gio.read_stream(stream_path, model.taxonomy, horizon=horizon)
        os.makedirs(out_dir, exist_ok=True)
        _echo_config("diagnose", {"stream": stream_path, "model": model_path,
                                  "out_dir": out_dir, "max_lag": lag,
                                  "cross_corr": cross_corr})
        ev_res = event_residuals(stream, model)
        tot_res = total_residuals(stream, model)
        ks_rows = []
        for code, series in ev_res.items():
            base = os.path.join(out_dir, f"event_{_safe(code)}")
            gio.write_series_csv(series, base + "_residuals.csv")
            if len(series):
                gio.write_qq_csv(qq_exp1(series), base + "_qq.csv")
            if len(series) > lag:
                gio.write_acf_csv(acf(series, lag), base + "_acf.csv")
            if len(series):
                d, p = ks_exp1(series)
                ks_rows.append((series.key, len(series), d, p))
        for (code, label), series in tot_res.items():
            base = os.path.join(out_dir, f"total_{_safe(code)}_{_safe(label)}")
            gio.write_series_csv(series, base + "_residuals.csv")
            if len(series):
                gio.write_qq_csv(qq_exp1(series), base + "_qq.csv")
            if len(series) > lag:
                gio.write_acf_csv(acf(series, lag), base + "_acf.csv")
            if len(series):
                d, p = ks_exp1(series)
                ks_rows.append((series.key, len(series), d, p))
        gio.write_ks_csv(ks_rows, os.path.join(out_dir, "ks_summary.csv"))
        gio.write_stability_json(stability_report(model), model.taxonomy,
                                 os.path.join(out_dir, "stability.json"))
        gio.write_transition_csv(model, os.path.join(out_dir, "transition.csv"))
        if cross_corr:
            codes = [c for c in ev_res if len(ev_res[c]) > lag]
            for c1 in codes:
                for c2 in codes:
                    if c1 == c2:
                        continue
                    out = cross_correlation(ev_res[c1], ev_res[c2], lag)
                    gio.write_acf_csv(out, os.path.join(
                        out_dir, f"crosscorr_{_safe(c1)}__{_safe(c2)}.csv"))
        return EXIT_OK

    sys.exit(_run(body))


# ---------------------------------------------------------------------------
# signature
# ---------------------------------------------------------------------------


@main.command("signature")
@click.argument("midprice_paths", nargs=-1)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="Use the mid-price files listed in a simulation manifest.")
@click.option("--deltas", "deltas_text", type=str, default=None,
              help="Comma-separated sampling intervals in seconds.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
def cmd_signature(midprice_paths, manifest_path, deltas_text, out_path,
                  config_path):
    """Realized-volatility signature curve across mid-price paths."""

    def body():
        cfg = _load_config(config_path)
        text = _resolve(deltas_text, cfg, "deltas", None)
        if text is None:
            deltas = list(DEFAULT_DELTAS)
        else:
            deltas = [float(tok) for tok in str(text).split(",") if tok.strip()]
        paths = list(midprice_paths)
        if manifest_path is not None:
            with open(manifest_path) as f:
                manifest = json.load(f)
            base = os.path.dirname(os.path.abspath(manifest_path))
            paths.extend(os.path.join(base, run["midprice"])
                         for run in manifest["runs"])
        if not paths:
            raise _InputError("no mid-price inputs given")
        _echo_config("signature", {"inputs": paths, "deltas": deltas,
                                   "out": out_path})
        loaded = [gio.read_midprice(p) for p in paths]
        horizons = {h for _, h in loaded}
        if len(horizons) > 1:
            raise _InputError(
                f"mid-price files carry different horizons: {sorted(horizons)}")
        horizon = horizons.pop()
        curve = signature_curve([mp for mp, _ in loaded], deltas, horizon)
        gio.write_signature_csv(curve, out_path)
        # slope summary: is realized variance higher at the finest interval?
        se = float(np.hypot(curve.stderr[0], curve.stderr[-1]))
        diff = float(curve.rv[0] - curve.rv[-1])
        click.echo(json.dumps({
            "n_paths": curve.n_paths,
            "rv_finest": curve.rv[0],
            "rv_coarsest": curve.rv[-1],
            "upward_slope": bool(diff > 2 * se),
            "slope_over_stderr": diff / se if se > 0 else 0.0,
        }))
        return EXIT_OK

    sys.exit(_run(body))


if __name__ == "__main__":
    main()

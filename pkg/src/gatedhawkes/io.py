"""File formats: event streams, models, impact tables, and export CSVs.

All formats are deterministic: fixed key order, LF line endings, `.` decimal
separator. Stream times are written with 9 fractional digits (ample for
100-microsecond source data); every other float uses the shortest
round-trip decimal representation, so model files round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
from typing import Mapping, Sequence

import numpy as np

from .core import (EventStream, HawkesParams, ModelSpec, Taxonomy,
                   TransitionKernel, ValidationError, Variant,
                   require_valid_model, validate_stream)
from .diagnostics import AcfResult, QQData, ResidualSeries, StabilityReport
from .signature import SignatureCurve
from .simulate import ImpactTable, MidPricePath

STREAM_HEADER = "time_s,event,state_before,state_after"
MODEL_FORMAT = "gatedhawkes-model"
IMPACT_FORMAT = "gatedhawkes-impact"
FILE_VERSION = "v1"


def _fmt_time(t: float) -> str:
    return f"{t:.9f}"


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Event streams
# ---------------------------------------------------------------------------


def write_stream(stream: EventStream, path: str | os.PathLike,
                 taxonomy: Taxonomy) -> None:
    ev = taxonomy.event_codes
    st = taxonomy.state_labels
    with open(path, "w", newline="\n") as f:
        f.write(f"# horizon={_fmt_time(stream.horizon)}\n")
        f.write(f"# initial_state={st[stream.initial_state]}\n")
        f.write(STREAM_HEADER + "\n")
        for t, e, b, a in zip(stream.times, stream.events,
                              stream.states_before, stream.states_after):
            f.write(f"{_fmt_time(t)},{ev[e]},{st[b]},{st[a]}\n")


def read_stream(path: str | os.PathLike, taxonomy: Taxonomy,
                horizon: float | None = None) -> EventStream:
    """Parse and validate a stream file, failing fast with line numbers.

    The horizon argument overrides the `# horizon=` header; if neither is
    present the last event time is used (which censors the tail).
    """
    times: list[float] = []
    events: list[int] = []
    before: list[int] = []
    after: list[int] = []
    header_horizon: float | None = None
    initial_label: str | None = None
    seen_header = False

    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("horizon="):
                    header_horizon = float(body.split("=", 1)[1])
                elif body.startswith("initial_state="):
                    initial_label = body.split("=", 1)[1]
                continue
            if not seen_header:
                if line != STREAM_HEADER:
                    raise ValidationError(
                        f"{path}:{lineno}: expected header {STREAM_HEADER!r}, "
                        f"got {line!r}")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValidationError(
                    f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                t = float(parts[0])
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: malformed time {parts[0]!r}") from None
            try:
                e = taxonomy.event_index(parts[1])
                b = taxonomy.state_index(parts[2])
                a = taxonomy.state_index(parts[3])
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if times and t <= times[-1]:
                raise ValidationError(
                    f"{path}:{lineno}: time {parts[0]} not after previous "
                    f"{_fmt_time(times[-1])}")
            if t <= 0:
                raise ValidationError(f"{path}:{lineno}: time must be positive")
            if after and b != after[-1]:
                raise ValidationError(
                    f"{path}:{lineno}: state_before {parts[2]!r} breaks the "
                    "chain from the previous record")
            times.append(t)
            events.append(e)
            before.append(b)
            after.append(a)

    if not seen_header:
        raise ValidationError(f"{path}: missing header line {STREAM_HEADER!r}")
    if horizon is None:
        horizon = header_horizon
    if horizon is None:
        if not times:
            raise ValidationError(
                f"{path}: empty stream with no '# horizon=' header and no "
                "horizon override")
        horizon = times[-1]
    if initial_label is not None:
        initial_state = taxonomy.state_index(initial_label)
    elif before:
        initial_state = before[0]
    else:
        initial_state = 0
    stream = EventStream(
        times=np.array(times), events=np.array(events, dtype=np.int64),
        states_before=np.array(before, dtype=np.int64),
        states_after=np.array(after, dtype=np.int64),
        initial_state=initial_state, horizon=float(horizon))
    violations = validate_stream(stream, taxonomy)
    if violations:
        raise ValidationError(f"{path}: " + "; ".join(violations))
    return stream


# ---------------------------------------------------------------------------
# Models and impact tables
# ---------------------------------------------------------------------------


def write_model(model: ModelSpec, path: str | os.PathLike) -> None:
    require_valid_model(model)
    doc = {
        "format": MODEL_FORMAT,
        "version": FILE_VERSION,
        "taxonomy": model.taxonomy.to_dict(),
        "variant": model.variant.value,
        "phi": model.transition.phi.tolist(),
        "gate": model.transition.gate.tolist(),
        "nu": model.hawkes.nu.tolist(),
        "alpha": model.hawkes.alpha.tolist(),
        "beta": model.hawkes.beta.tolist(),
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _check_version(doc: dict, expected_format: str, path) -> None:
    if doc.get("format") != expected_format:
        raise ValidationError(
            f"{path}: not a {expected_format} file (format="
            f"{doc.get('format')!r})")
    if doc.get("version") != FILE_VERSION:
        raise ValidationError(
            f"{path}: unsupported version {doc.get('version')!r}; this "
            f"build reads {FILE_VERSION!r}")


def read_model(path: str | os.PathLike) -> ModelSpec:
    """Read, validate, and renormalize a model file.

    Serialized rows may miss their gate value by decimal round-off; sums
    within 1e-12 of the gate are renormalized exactly, anything further off
    is rejected.
    """
    with open(path, "r") as f:
        doc = json.load(f)
    _check_version(doc, MODEL_FORMAT, path)
    taxonomy = Taxonomy.from_dict(doc["taxonomy"])
    variant = Variant.from_token(doc["variant"])
    phi = np.asarray(doc["phi"], dtype=np.float64)
    gate = np.asarray(doc["gate"], dtype=np.int64)
    E, X = taxonomy.n_events, taxonomy.n_states
    if phi.shape != (E, X, X) or gate.shape != (E, X):
        raise ValidationError(f"{path}: phi/gate shape mismatch with taxonomy")
    sums = phi.sum(axis=2)
    off = np.abs(sums - gate)
    if np.any(off > 1e-12):
        e, x = np.argwhere(off > 1e-12)[0]
        raise ValidationError(
            f"{path}: phi row (e={e}, x={x}) sums to {sums[e, x]!r}, "
            f"gate is {gate[e, x]}")
    pos = sums > 0
    phi = np.divide(phi, np.where(pos, sums, 1.0)[:, :, None])
    phi[~pos] = 0.0
    model = ModelSpec(
        taxonomy=taxonomy, variant=variant,
        transition=TransitionKernel(phi=phi, gate=gate),
        hawkes=HawkesParams(
            nu=np.asarray(doc["nu"], dtype=np.float64),
            alpha=np.asarray(doc["alpha"], dtype=np.float64),
            beta=np.asarray(doc["beta"], dtype=np.float64)))
    require_valid_model(model)
    return model


def write_impact(impact: ImpactTable, taxonomy: Taxonomy,
                 path: str | os.PathLike) -> None:
    doc = {
        "format": IMPACT_FORMAT,
        "version": FILE_VERSION,
        "taxonomy": taxonomy.to_dict(),
        "delta_m": impact.delta_m.tolist(),
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def read_impact(path: str | os.PathLike,
                taxonomy: Taxonomy | None = None) -> tuple[ImpactTable, Taxonomy]:
    with open(path, "r") as f:
        doc = json.load(f)
    _check_version(doc, IMPACT_FORMAT, path)
    file_tax = Taxonomy.from_dict(doc["taxonomy"])
    if taxonomy is not None and file_tax != taxonomy:
        raise ValidationError(f"{path}: impact taxonomy differs from the model's")
    dm = np.asarray(doc["delta_m"], dtype=np.float64)
    if dm.shape != (file_tax.n_events, file_tax.n_states):
        raise ValidationError(
            f"{path}: delta_m shape {dm.shape} mismatches taxonomy "
            f"{(file_tax.n_events, file_tax.n_states)}")
    return ImpactTable(delta_m=dm), file_tax


# ---------------------------------------------------------------------------
# Mid-price paths
# ---------------------------------------------------------------------------


def write_midprice(path_obj: MidPricePath, horizon: float,
                   path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(f"# horizon={_fmt_time(horizon)}\n")
        f.write(f"# initial_price={_fmt(path_obj.initial_price)}\n")
        f.write("time_s,price\n")
        for t, p in zip(path_obj.times, path_obj.prices):
            f.write(f"{_fmt_time(t)},{_fmt(p)}\n")


def read_midprice(path: str | os.PathLike) -> tuple[MidPricePath, float]:
    times: list[float] = []
    prices: list[float] = []
    horizon: float | None = None
    initial_price = 0.0
    seen_header = False
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("horizon="):
                    horizon = float(body.split("=", 1)[1])
                elif body.startswith("initial_price="):
                    initial_price = float(body.split("=", 1)[1])
                continue
            if not seen_header:
                if line != "time_s,price":
                    raise ValidationError(
                        f"{path}:{lineno}: expected header 'time_s,price'")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 2 fields")
            times.append(float(parts[0]))
            prices.append(float(parts[1]))
    if not seen_header:
        raise ValidationError(f"{path}: missing header 'time_s,price'")
    if horizon is None:
        horizon = times[-1] if times else 0.0
    return (MidPricePath(times=np.array(times), prices=np.array(prices),
                         initial_price=initial_price), float(horizon))


# ---------------------------------------------------------------------------
# Export CSVs
# ---------------------------------------------------------------------------


def write_series_csv(series: ResidualSeries, path: str | os.PathLike) -> None:
    """One residual series; the file name carries the key."""
    with open(path, "w", newline="\n") as f:
        f.write("index,value\n")
        for i, v in enumerate(series.values):
            f.write(f"{i},{_fmt(v)}\n")


def write_residuals_csv(series: Mapping[str, ResidualSeries] | Mapping[tuple, ResidualSeries],
                        path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("key,index,value\n")
        for key in series:
            s = series[key]
            for i, v in enumerate(s.values):
                f.write(f"{s.key},{i},{_fmt(v)}\n")


def write_qq_csv(qq: QQData, path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("theoretical,empirical\n")
        for t, e in zip(qq.theoretical, qq.empirical):
            f.write(f"{_fmt(t)},{_fmt(e)}\n")


def write_acf_csv(result: AcfResult, path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("lag,autocorrelation,band\n")
        for lag, v in zip(result.lags, result.values):
            f.write(f"{lag},{_fmt(v)},{_fmt(result.band)}\n")


def write_ks_csv(rows: Sequence[tuple[str, int, float, float]],
                 path: str | os.PathLike) -> None:
    """Rows of (key, n, statistic, p_value)."""
    with open(path, "w", newline="\n") as f:
        f.write("key,n,statistic,p_value\n")
        for key, n, d, p in rows:
            f.write(f"{key},{n},{_fmt(d)},{_fmt(p)}\n")


def write_signature_csv(curve: SignatureCurve, path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("delta,rv_mean,rv_stderr,n_paths\n")
        for d, rv, se in zip(curve.deltas, curve.rv, curve.stderr):
            f.write(f"{_fmt(d)},{_fmt(rv)},{_fmt(se)},{curve.n_paths}\n")


def write_transition_csv(model: ModelSpec, path: str | os.PathLike) -> None:
    tax, tk = model.taxonomy, model.transition
    with open(path, "w", newline="\n") as f:
        f.write("event,state_from,state_to,phi,gate\n")
        for e, ev in enumerate(tax.events):
            for x, sx in enumerate(tax.states):
                for x2, sx2 in enumerate(tax.states):
                    f.write(f"{ev.code},{sx.label},{sx2.label},"
                            f"{_fmt(tk.phi[e, x, x2])},{tk.gate[e, x]}\n")


def write_stability_json(report: StabilityReport, taxonomy: Taxonomy,
                         path: str | os.PathLike) -> None:
    doc = {
        "branching": {
            taxonomy.events[e].code: {
                taxonomy.states[x].label: report.branching[e, x]
                for x in range(taxonomy.n_states)}
            for e in range(taxonomy.n_events)},
        "spectral_radius": {
            taxonomy.states[x].label: report.spectral[x]
            for x in range(taxonomy.n_states)},
        "regime": {
            taxonomy.states[x].label: report.regimes[x].value
            for x in range(taxonomy.n_states)},
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")

"""Closed-loop simulation front end.

Ingests or synthesizes measurement traces, runs the per-second control loop
over a horizon, computes the regulating-energy metrics

    E_exp = sum dt * |alpha0 * df_i|     expected from the droop law
    E*    = sum dt * |p*_i|              delivered by the optimal controller
    E_0   = sum dt * |naive_i|           delivered by the naive baseline

and emits one CSV of per-step records plus one JSON summary per run.  The
naive baseline delivers the droop target when it is feasible and trips to
0 kW otherwise, which is what an unprotected converter does when asked for
a set-point outside its envelope.

Scenario runs are independent of each other and deterministic for a fixed
seed, so batches can execute concurrently with one writer per run.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import click
import numpy as np

from bessctl.battery import BatteryConfig, TtcParams, TtcState, builtin_ttc_params, load_ttc_params
from bessctl.capability import Anchor, CapabilityCurve, builtin_curves, index_curves, load_curves
from bessctl.grid import DroopConfig, GridSample, TransformerParams
from bessctl.linefmt import LineFormatError, parse_number, read_key_values
from bessctl.optimizer import (
    ControlRecord,
    ControllerConfig,
    SetpointController,
    STATUS_UNCHANGED,
)


class TraceError(ValueError):
    """Trace input unusable for the requested scenario."""


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: gains, weights, horizon and initial state."""

    alpha0: float
    beta0: float
    duration_s: float
    lambda_p: float = 1.0
    lambda_q: float = 1.0
    c_shrink: float = 1.0
    soc_init: float = 0.5
    trace: str | None = None

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.soc_init <= 1:
            raise ValueError("soc_init must lie in [0, 1]")


@dataclass(frozen=True)
class EnergyReport:
    """Regulating-energy totals [kWh] and their ratios to the expectation."""

    e_exp: float
    e_star: float
    e_0: float
    ratio_star: float | None
    ratio_0: float | None

    def __post_init__(self) -> None:
        if min(self.e_exp, self.e_star, self.e_0) < 0:
            raise ValueError("energies must be nonnegative")
        if self.e_star < self.e_0 - 1e-9:
            raise ValueError("optimal controller delivered less than the naive baseline")


def generate_trace(
    sigma_f: float,
    sigma_v: float,
    mu_f: float = 50.0,
    mu_v: float = 21.192,
    n: int = 300,
    seed: int = 0,
) -> list[GridSample]:
    """Synthetic per-second trace with independent Gaussian deviations."""
    if sigma_f < 0 or sigma_v < 0:
        raise ValueError("sigmas must be nonnegative")
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    freq = mu_f + sigma_f * rng.standard_normal(n)
    v_mv = mu_v + sigma_v * rng.standard_normal(n)
    return [
        GridSample(timestamp=float(t), freq=float(freq[t]), v_mv=float(v_mv[t]))
        for t in range(n)
    ]


def load_trace(path: str | Path) -> list[GridSample]:
    """Read a trace CSV with header ``timestamp_s,freq_hz,v_mv_kv``."""
    samples: list[GridSample] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"timestamp_s", "freq_hz", "v_mv_kv"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise TraceError(f"{path}: expected header with columns {sorted(required)}")
        for row in reader:
            samples.append(
                GridSample(
                    timestamp=float(row["timestamp_s"]),
                    freq=float(row["freq_hz"]),
                    v_mv=float(row["v_mv_kv"]),
                )
            )
    for a, b in zip(samples, samples[1:]):
        if b.timestamp <= a.timestamp:
            raise TraceError(f"{path}: timestamps must be strictly increasing")
    return samples


def write_trace(samples: Sequence[GridSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_s", "freq_hz", "v_mv_kv"])
        for s in samples:
            writer.writerow([repr(s.timestamp), repr(s.freq), repr(s.v_mv)])


def parse_gen_spec(spec: str) -> dict[str, float]:
    """Parse a ``gen:key=value,...`` generator spec into keyword arguments."""
    if not spec.startswith("gen:"):
        raise TraceError(f"not a generator spec: {spec!r}")
    allowed = {"sigma_f", "sigma_v", "mu_f", "mu_v", "n", "seed"}
    kwargs: dict[str, float] = {}
    body = spec[len("gen:"):]
    if body:
        for item in body.split(","):
            key, sep, value = item.partition("=")
            if not sep or key not in allowed:
                raise TraceError(f"bad generator spec item {item!r}")
            kwargs[key] = float(value)
    return kwargs


def resolve_trace(spec: str, seed: int | None = None) -> list[GridSample]:
    """Turn a trace reference (CSV path or ``gen:`` spec) into samples."""
    if spec.startswith("gen:"):
        kwargs = parse_gen_spec(spec)
        n = int(kwargs.pop("n", 300))
        spec_seed = int(kwargs.pop("seed", 0))
        return generate_trace(n=n, seed=spec_seed if seed is None else seed, **kwargs)
    return load_trace(spec)


def energy_metrics(
    records: Sequence[ControlRecord], alpha0: float, delta_t: float
) -> EnergyReport:
    """Discrete regulating-energy sums over a run, in kWh."""
    if not records:
        raise TraceError("no records to evaluate")
    scale = delta_t / 3600.0
    e_exp = sum(abs(alpha0 * r.dfreq) for r in records) * scale
    e_star = sum(abs(r.p_opt) for r in records) * scale
    e_0 = sum(abs(r.p_target) for r in records if r.target_feasible) * scale
    ratio_star = e_star / e_exp if e_exp > 0 else None
    ratio_0 = e_0 / e_exp if e_exp > 0 else None
    return EnergyReport(e_exp, e_star, e_0, ratio_star, ratio_0)


def run_scenario(
    scenario: ScenarioSpec,
    controller_cfg: ControllerConfig,
    curves: dict[Anchor, CapabilityCurve],
    bands: Sequence[TtcParams],
    trace: Sequence[GridSample] | None = None,
    seed: int | None = None,
) -> tuple[list[ControlRecord], EnergyReport]:
    """Run the control loop over the scenario horizon and report energies."""
    if trace is None:
        if scenario.trace is None:
            raise TraceError("scenario has no trace and none was supplied")
        trace = resolve_trace(scenario.trace, seed)
    steps = int(round(scenario.duration_s / controller_cfg.battery.delta_t))
    if len(trace) < steps:
        raise TraceError(f"trace has {len(trace)} samples, horizon needs {steps}")
    controller = SetpointController(controller_cfg, curves, bands)
    state = TtcState(0.0, 0.0, 0.0, scenario.soc_init)
    records: list[ControlRecord] = []
    for sample in trace[:steps]:
        record, state = controller.solve_step(sample, state)
        records.append(record)
    report = energy_metrics(records, scenario.alpha0, controller_cfg.battery.delta_t)
    return records, report


_RECORD_COLUMNS = [
    "timestamp_s",
    "freq_hz",
    "v_mv_kv",
    "dfreq_hz",
    "dvac_v",
    "p_target_kw",
    "q_target_kvar",
    "p_opt_kw",
    "q_opt_kvar",
    "vdc_pred_v",
    "vac_pred_v",
    "curve_dc",
    "curve_ac",
    "alpha_star_kw_per_hz",
    "beta_star_kvar_per_v",
    "status",
]


def _anchor_str(anchor: Anchor | None) -> str:
    if anchor is None:
        return ""
    return f"{anchor[0]:g}/{anchor[1]:g}"


def _anchor_from_str(text: str) -> Anchor | None:
    if not text:
        return None
    vdc, vac = text.split("/")
    return (float(vdc), float(vac))


def write_records(records: Sequence[ControlRecord], path: str | Path) -> None:
    """Write per-step records as CSV; float fields use shortest-roundtrip repr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RECORD_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    repr(r.sample.timestamp),
                    repr(r.sample.freq),
                    repr(r.sample.v_mv),
                    repr(r.dfreq),
                    repr(r.dvac),
                    repr(r.p_target),
                    repr(r.q_target),
                    repr(r.p_opt),
                    repr(r.q_opt),
                    repr(r.vdc_pred),
                    repr(r.vac_pred),
                    _anchor_str(r.curve_dc),
                    _anchor_str(r.curve_ac),
                    "" if r.alpha_star is None else repr(r.alpha_star),
                    "" if r.beta_star is None else repr(r.beta_star),
                    ";".join(r.status),
                ]
            )


def read_records(path: str | Path) -> list[ControlRecord]:
    """Read back a records CSV written by write_records."""
    records: list[ControlRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            curve_dc = _anchor_from_str(row["curve_dc"])
            if curve_dc is None:
                raise TraceError(f"{path}: record without a DC curve")
            records.append(
                ControlRecord(
                    sample=GridSample(
                        timestamp=float(row["timestamp_s"]),
                        freq=float(row["freq_hz"]),
                        v_mv=float(row["v_mv_kv"]),
                    ),
                    dfreq=float(row["dfreq_hz"]),
                    dvac=float(row["dvac_v"]),
                    p_target=float(row["p_target_kw"]),
                    q_target=float(row["q_target_kvar"]),
                    p_opt=float(row["p_opt_kw"]),
                    q_opt=float(row["q_opt_kvar"]),
                    vdc_pred=float(row["vdc_pred_v"]),
                    vac_pred=float(row["vac_pred_v"]),
                    curve_dc=curve_dc,
                    curve_ac=_anchor_from_str(row["curve_ac"]),
                    alpha_star=float(row["alpha_star_kw_per_hz"])
                    if row["alpha_star_kw_per_hz"]
                    else None,
                    beta_star=float(row["beta_star_kvar_per_v"])
                    if row["beta_star_kvar_per_v"]
                    else None,
                    status=tuple(row["status"].split(";")) if row["status"] else (),
                )
            )
    return records


def summarize(
    scenario: ScenarioSpec, records: Sequence[ControlRecord], report: EnergyReport
) -> dict:
    """Deterministic JSON-ready run summary."""
    status_counts: dict[str, int] = {}
    for record in records:
        for flag in record.status:
            status_counts[flag] = status_counts.get(flag, 0) + 1
    return {
        "scenario": {
            "alpha0_kw_per_hz": scenario.alpha0,
            "beta0_kvar_per_v": scenario.beta0,
            "duration_s": scenario.duration_s,
            "lambda_p": scenario.lambda_p,
            "lambda_q": scenario.lambda_q,
            "c_shrink": scenario.c_shrink,
            "soc_init": scenario.soc_init,
        },
        "steps": len(records),
        "energy_kwh": {
            "expected": report.e_exp,
            "delivered_optimal": report.e_star,
            "delivered_naive": report.e_0,
            "ratio_optimal": report.ratio_star,
            "ratio_naive": report.ratio_0,
        },
        "status_counts": dict(sorted(status_counts.items())),
    }


# Configuration file keys, with defaults where a plant value is standard.
_CONFIG_DEFAULTS = {
    "f_ref_hz": 50.0,
    "v_ref_kv": 21.192,
    "lambda_p": 1.0,
    "lambda_q": 1.0,
    "c_shrink": 1.0,
    "soc_init": 0.5,
    "eta": 0.97,
    "soc_min": 0.0,
    "soc_max": 1.0,
    "vdc_min_v": 500.0,
    "vdc_max_v": 890.0,
    "delta_t_s": 1.0,
    "turns_ratio": 70.0,
    "v_lv_v": 300.0,
    "s_rated_kva": 630.0,
    "u_k": 0.0628,
}
_CONFIG_REQUIRED = ("alpha0_kw_per_hz", "beta0_kvar_per_v", "duration_s", "c_max_ah")


def load_run_config(path: str | Path) -> tuple[ScenarioSpec, ControllerConfig]:
    """Load a scenario file into the scenario spec and controller configuration."""
    raw = read_key_values(path)
    known = set(_CONFIG_DEFAULTS) | set(_CONFIG_REQUIRED) | {"trace"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise LineFormatError(str(path), 0, f"unknown keys {unknown}")
    missing = sorted(set(_CONFIG_REQUIRED) - set(raw))
    if missing:
        raise LineFormatError(str(path), 0, f"missing required keys {missing}")

    def num(key: str) -> float:
        if key in raw:
            return parse_number(raw[key], str(path))
        return _CONFIG_DEFAULTS[key]

    scenario = ScenarioSpec(
        alpha0=num("alpha0_kw_per_hz"),
        beta0=num("beta0_kvar_per_v"),
        duration_s=num("duration_s"),
        lambda_p=num("lambda_p"),
        lambda_q=num("lambda_q"),
        c_shrink=num("c_shrink"),
        soc_init=num("soc_init"),
        trace=raw.get("trace"),
    )
    droop = DroopConfig(
        alpha0=scenario.alpha0,
        beta0=scenario.beta0,
        f_ref=num("f_ref_hz"),
        v_ref=num("v_ref_kv"),
        lambda_p=scenario.lambda_p,
        lambda_q=scenario.lambda_q,
    )
    battery = BatteryConfig(
        c_max_ah=num("c_max_ah"),
        eta=num("eta"),
        soc_min=num("soc_min"),
        soc_max=num("soc_max"),
        vdc_min=num("vdc_min_v"),
        vdc_max=num("vdc_max_v"),
        delta_t=num("delta_t_s"),
    )
    transformer = TransformerParams.from_nameplate(
        n=num("turns_ratio"),
        v_lv=num("v_lv_v"),
        s_rated_kva=num("s_rated_kva"),
        u_k=num("u_k"),
    )
    controller_cfg = ControllerConfig(
        droop=droop, battery=battery, transformer=transformer, shrink=scenario.c_shrink
    )
    return scenario, controller_cfg


def builtin_scenario_path(name: str) -> Path:
    """Path of a scenario preset shipped with the package (e.g. ``scenario1``)."""
    return Path(str(resources.files(__package__).joinpath(f"data/scenarios/{name}.cfg")))


def _load_curve_set(path: str | None) -> dict[Anchor, CapabilityCurve]:
    curves = builtin_curves() if path is None else load_curves(path)
    return index_curves(curves)


def _load_bands(path: str | None) -> list[TtcParams]:
    return builtin_ttc_params() if path is None else load_ttc_params(path)


@click.group()
def main() -> None:
    """Closed-loop converter set-point control simulation tools."""


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--trace", "trace_spec", default=None, help="Trace CSV path or gen:k=v,... (overrides the scenario file).")
@click.option("--curves", "curves_path", default=None, type=click.Path(exists=True), help="Curve file (default: built-in).")
@click.option("--params", "params_path", default=None, type=click.Path(exists=True), help="Battery parameter file (default: built-in).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=None, type=int, help="Seed override for generated traces.")
def run_cmd(scenario_path, trace_spec, curves_path, params_path, out_dir, seed) -> None:
    """Run one scenario and write records.csv and summary.json."""
    try:
        scenario, controller_cfg = load_run_config(scenario_path)
        curves = _load_curve_set(curves_path)
        bands = _load_bands(params_path)
        trace = None
        if trace_spec is not None:
            trace = resolve_trace(trace_spec, seed)
        records, report = run_scenario(
            scenario, controller_cfg, curves, bands, trace=trace, seed=seed
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(records, out / "records.csv")
        summary = summarize(scenario, records, report)
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out / 'records.csv'} and {out / 'summary.json'}")


@main.command("gen-trace")
@click.option("--sigma-f", default=0.01782, show_default=True, help="Frequency sigma [Hz].")
@click.option("--sigma-v", default=0.0672, show_default=True, help="Voltage sigma [kV].")
@click.option("--mu-f", default=50.0, show_default=True, help="Frequency mean [Hz].")
@click.option("--mu-v", default=21.192, show_default=True, help="Voltage mean [kV].")
@click.option("--n", default=300, show_default=True, help="Number of 1 s samples.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def gen_trace_cmd(sigma_f, sigma_v, mu_f, mu_v, n, seed, out_path) -> None:
    """Generate a synthetic measurement trace CSV."""
    try:
        samples = generate_trace(sigma_f, sigma_v, mu_f, mu_v, n, seed)
        write_trace(samples, out_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out_path}")


@main.command("metrics")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--alpha0", default=None, type=float, help="Droop gain [kW/Hz]; recovered from the records when omitted.")
@click.option("--delta-t", default=None, type=float, help="Step length [s]; inferred from timestamps when omitted.")
def metrics_cmd(records_path, alpha0, delta_t) -> None:
    """Recompute the energy metrics from a records CSV."""
    try:
        records = read_records(records_path)
        if not records:
            raise TraceError(f"{records_path}: no records")
        if delta_t is None:
            delta_t = (
                records[1].sample.timestamp - records[0].sample.timestamp
                if len(records) > 1
                else 1.0
            )
        if alpha0 is None:
            alpha0 = next(
                (abs(r.p_target / r.dfreq) for r in records if abs(r.dfreq) > 1e-9),
                0.0,
            )
        report = energy_metrics(records, alpha0, delta_t)
        click.echo(
            json.dumps(
                {
                    "e_exp_kwh": report.e_exp,
                    "e_star_kwh": report.e_star,
                    "e_0_kwh": report.e_0,
                    "ratio_optimal": report.ratio_star,
                    "ratio_naive": report.ratio_0,
                },
                indent=2,
                sort_keys=True,
            )
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))


__all__ = [
    "ScenarioSpec",
    "EnergyReport",
    "generate_trace",
    "load_trace",
    "write_trace",
    "resolve_trace",
    "energy_metrics",
    "run_scenario",
    "write_records",
    "read_records",
    "summarize",
    "load_run_config",
    "builtin_scenario_path",
    "TraceError",
    "main",
]

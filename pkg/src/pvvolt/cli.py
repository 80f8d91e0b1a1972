"""``pvvolt`` command line: simulate -> cluster -> fit -> qq -> regulate -> report.

Each stage reads its inputs from, and writes its outputs to, the run's output
directory, so stages can be re-run one at a time.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from importlib import resources
from pathlib import Path

import numpy as np

from . import report
from .clustering import run_clustering, singular_spectrum
from .config import RunConfig, load_config
from .dataset import KW, PU_VOLT, DayMatrix, format_value, load_day_matrix, restrict_to_window, save_day_matrix, stack
from .errors import ConfigError, DataError, NumericalError, ParseError, PvVoltError, ShapeError
from .feeder_sim import simulate_days, write_result
from .regulator import conventional_regulator, ltc_variation, stochastic_regulator
from .seeding import derive_seed
from .voltage_model import (
    VoltageModel,
    build_composite,
    fit_model,
    interquartile_range,
    ks_distance,
    qq_max_deviation,
    qq_points,
    residuals,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Central band used for the trimmed Q-Q deviation.
QQ_TRIM = 0.05


def bundled_config_path() -> Path:
    return Path(str(resources.files("pvvolt") / "data" / "default_config.json"))


# --- file helpers --------------------------------------------------------------


def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError(f"missing upstream output {path}; run the earlier stage first") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name} is not valid JSON: {exc}") from None


def _write_table(path: Path, header: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([v if isinstance(v, (int, np.integer)) else format_value(v) for v in row])


def read_table(path) -> dict:
    """Read a headed CSV written by this CLI into ``{column: float array}``."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"missing upstream output {path}; run the earlier stage first")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def _window_matrices(cfg: RunConfig, cid: str) -> tuple[DayMatrix, DayMatrix]:
    out = Path(cfg.output_dir)
    minutes = cfg.process.minutes_per_day
    a = cfg.analysis
    p = load_day_matrix(out / f"power_{cid}.csv", minutes, KW)
    v = load_day_matrix(out / f"voltage_{cid}.csv", minutes, PU_VOLT)
    if p.shape != v.shape:
        raise ShapeError(f"power_{cid}.csv {p.shape} and voltage_{cid}.csv {v.shape} differ in shape")
    return restrict_to_window(p, a.window_start, a.window_end), restrict_to_window(v, a.window_start, a.window_end)


def _load_models(cfg: RunConfig) -> dict:
    data = _read_json(Path(cfg.output_dir) / "models.json")
    missing = [cid for cid in cfg.ids if cid not in data]
    if missing:
        raise DataError(f"models.json lacks consumers {missing}")
    return {cid: VoltageModel.from_json(data[cid]) for cid in cfg.ids}


# --- stages --------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> str:
    p = cfg.process
    result = simulate_days(
        cfg.topology(), cfg.process_params(), p.days, p.minutes_per_day,
        derive_seed(cfg.seed, "feeder_sim"), shared_cloud=p.shared_cloud,
    )
    files = write_result(result, _out(cfg))
    return f"simulate: {len(result.ids)} consumers x {p.days} days x {p.minutes_per_day} min -> {len(files)} files"


def cmd_cluster(cfg: RunConfig) -> str:
    out = _out(cfg)
    ids = cfg.ids
    powers = [_window_matrices(cfg, cid)[0] for cid in ids]
    stacked = stack(powers)
    H = stacked.values
    cs = run_clustering(H, cfg.svd_config(), cfg.clustering.max_clusters, spare=True)
    bases = list(cs.bases) + ([cs.spare_factor.y] if cs.spare_factor is not None else [])
    save_day_matrix(out / "bases.csv", np.array(bases))
    _write_json(out / "clusters.json", cs.to_json())
    _write_json(
        out / "stack.json",
        {
            "ids": ids,
            "block_offsets": [list(b) for b in stacked.block_offsets],
            "window": [cfg.analysis.window_start, cfg.analysis.window_end],
            "grouping_bases": len(cs.bases),
            "spare_basis": cs.spare_factor is not None,
            "sigma": [f.sigma for f in cs.factors],
            "energy": cs.energy,
        },
    )
    count = min(cfg.clustering.spectrum_count, min(H.shape))
    spectrum = singular_spectrum(H, count)
    _write_table(out / "spectrum.csv", ["index", "singular_value"], [list(range(1, count + 1)), spectrum])
    sizes = "/".join(str(c.size) for c in cs.clusters)
    return f"cluster: {H.shape[0]} rows -> {cs.C} clusters (sizes {sizes})"


def _clusters_for(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    meta = _read_json(out / "stack.json")
    raw = _read_json(out / "clusters.json")
    if meta["ids"] != cfg.ids:
        raise DataError(f"stack.json consumers {meta['ids']} do not match the config {cfg.ids}")
    if meta["window"] != [cfg.analysis.window_start, cfg.analysis.window_end]:
        raise DataError("stack.json was produced for a different analysis window")
    clusters = [np.asarray(raw[k], dtype=int) for k in sorted(raw, key=int)]
    per_consumer = {}
    for cid, (start, stop) in zip(meta["ids"], meta["block_offsets"]):
        per_consumer[cid] = [c[(c >= start) & (c < stop)] - start for c in clusters]
    return per_consumer


def cmd_fit(cfg: RunConfig) -> str:
    out = _out(cfg)
    clusters = _clusters_for(cfg)
    models = {}
    for cid in cfg.ids:
        p, v = _window_matrices(cfg, cid)
        try:
            model = fit_model(p.values, v.values, clusters[cid], reference=cfg.model.reference_voltage_pu)
        except IndexError as exc:
            raise DataError(f"clusters.json does not match power_{cid}.csv: {exc}") from None
        _write_json(out / f"model_{cid}.json", model.to_json())
        models[cid] = model.to_json()
    _write_json(out / "models.json", models)
    betas = ", ".join(f"{cid}={m['beta']:.4g}" for cid, m in models.items())
    return f"fit: {len(models)} models (beta {betas})"


def _qq_stats(points: np.ndarray) -> dict:
    iqr = interquartile_range(points[:, 1])
    return {
        "count": int(points.shape[0]),
        "iqr": iqr,
        "max_deviation": qq_max_deviation(points),
        "max_deviation_central": qq_max_deviation(points, QQ_TRIM),
        "ks": ks_distance(points[:, 0], points[:, 1]),
    }


def _model_quantiles(model: VoltageModel, n: int, cfg: RunConfig, label: str) -> np.ndarray:
    dist = build_composite(model, cfg.model.sample_count, derive_seed(cfg.seed, label), cfg.model.mode)
    # Plotting positions (i + 1/2) / n read off the Monte-Carlo sample.
    return np.quantile(dist.samples, (np.arange(n) + 0.5) / n)


def cmd_qq(cfg: RunConfig) -> str:
    out = _out(cfg)
    models = _load_models(cfg)
    summary = {}
    for cid in cfg.ids:
        p, v = _window_matrices(cfg, cid)
        model = models[cid]
        r = residuals(p.values, v.values, model.beta, model.reference).ravel()
        pts = qq_points(_model_quantiles(model, r.size, cfg, f"qq/{cid}"), r)
        _write_table(out / f"qq_{cid}.csv", ["model", "residual"], [pts[:, 0], pts[:, 1]])

        flat = fit_model(p.values, v.values, [np.arange(p.m)], reference=model.reference)
        r_flat = residuals(p.values, v.values, flat.beta, flat.reference).ravel()
        pts_flat = qq_points(_model_quantiles(flat, r_flat.size, cfg, f"qq-unclustered/{cid}"), r_flat)
        _write_table(out / f"qq_unclustered_{cid}.csv", ["model", "residual"], [pts_flat[:, 0], pts_flat[:, 1]])
        summary[cid] = {"clustered": _qq_stats(pts), "unclustered": _qq_stats(pts_flat)}
    _write_json(out / "qq_summary.json", summary)
    worst = max(s["clustered"]["ks"] for s in summary.values())
    return f"qq: {len(summary)} consumers, largest KS distance {worst:.4f}"


def average_profiles(cfg: RunConfig, cid: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minute of day, day-averaged power and day-averaged voltage inside the window."""
    p, v = _window_matrices(cfg, cid)
    minutes = np.arange(cfg.analysis.window_start, cfg.analysis.window_end)
    return minutes, p.values.mean(axis=0), v.values.mean(axis=0)


def cmd_regulate(cfg: RunConfig) -> str:
    out = _out(cfg)
    cid = cfg.regulated_consumer
    model = _load_models(cfg)[cid]
    dist = build_composite(model, cfg.model.sample_count, derive_seed(cfg.seed, f"composite/{cid}"), cfg.model.mode)
    minutes, p_avg, v_avg = average_profiles(cfg, cid)
    conv = conventional_regulator(v_avg, cfg.regulator_config())
    stoch = stochastic_regulator(v_avg, p_avg, cfg.regulator_config(dist, model.beta, model.reference))
    _write_table(
        out / "regulation.csv",
        ["minute", "input_v", "conventional_ltc", "conventional_out", "stochastic_ltc", "stochastic_out"],
        [minutes, v_avg, conv.ltc_position, conv.output_voltage, stoch.ltc_position, stoch.output_voltage],
    )
    r = cfg.regulator
    midday = (minutes >= r.midday_start) & (minutes < r.midday_end)
    summary = {
        "consumer": cid,
        "ltc_variation_conventional": ltc_variation(conv),
        "ltc_variation_stochastic": ltc_variation(stoch),
        "mean_midday_output_conventional": float(np.mean(conv.output_voltage[midday])),
        "mean_midday_output_stochastic": float(np.mean(stoch.output_voltage[midday])),
        "midday": [r.midday_start, r.midday_end],
        "windows": stoch.windows,
    }
    _write_json(out / "regulation_summary.json", summary)
    return (
        f"regulate: {cid} LTC variation {summary['ltc_variation_conventional']:.4f} (conventional) vs "
        f"{summary['ltc_variation_stochastic']:.4f} (stochastic)"
    )


def cmd_report(cfg: RunConfig) -> str:
    out = _out(cfg)
    models = _load_models(cfg)
    clusters = _clusters_for(cfg)
    spectrum = read_table(out / "spectrum.csv")
    qq = _read_json(out / "qq_summary.json")
    regulation = _read_json(out / "regulation_summary.json")
    read_table(out / "regulation.csv")

    columns, header = [], ["minute"]
    for cid in cfg.ids:
        minutes, p_avg, v_avg = average_profiles(cfg, cid)
        if not columns:
            columns.append(minutes)
        columns += [p_avg, v_avg]
        header += [f"power_{cid}", f"voltage_{cid}"]
    _write_table(out / "profiles.csv", header, columns)

    weights = report.weight_table(models)
    capacity = {c.id: c.pv_capacity_kw for c in cfg.feeder.consumers}
    impedance = {c.id: c.impedance_ohm for c in cfg.feeder.consumers}
    doc = {
        "consumers": [
            {"id": cid, "pv_capacity_kw": capacity[cid], "impedance_ohm": impedance[cid],
             "cluster_days": [int(c.size) for c in clusters[cid]]}
            for cid in cfg.ids
        ],
        "beta": report.beta_table(models),
        "weights": weights,
        "weight_sums": report.column_sums(weights),
        "weight_sums_rounded": report.column_sums(weights, 3),
        "gamma": report.gamma_table(models),
        "sign_ordering": {cid: report.shape_sign_ordering(m) for cid, m in models.items()},
        "spectrum": [float(s) for s in spectrum["singular_value"]],
        "qq": qq,
        "regulation": {k: v for k, v in regulation.items() if k != "windows"},
        "figures": {
            "spectrum": "spectrum.csv",
            "bases": "bases.csv",
            "qq": [f"qq_{cid}.csv" for cid in cfg.ids],
            "qq_unclustered": [f"qq_unclustered_{cid}.csv" for cid in cfg.ids],
            "profiles": "profiles.csv",
            "regulation": "regulation.csv",
        },
    }
    _write_json(out / "report.json", doc)
    return f"report: {len(models)} consumers -> report.json, profiles.csv"


COMMANDS = {
    "simulate": cmd_simulate,
    "cluster": cmd_cluster,
    "fit": cmd_fit,
    "qq": cmd_qq,
    "regulate": cmd_regulate,
    "report": cmd_report,
}
PIPELINE = tuple(COMMANDS)


def run_pipeline(cfg: RunConfig, emit=print) -> None:
    for name in PIPELINE:
        emit(COMMANDS[name](cfg))


# --- entry point ---------------------------------------------------------------


def _where(exc: BaseException) -> str:
    """``module.function`` of the innermost package frame that raised."""
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "pvvolt" in f.filename]
    if not frames:
        return "pvvolt"
    f = frames[-1]
    return f"{Path(f.filename).stem}.{f.name}"


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, (NumericalError, PvVoltError)):
        return EXIT_NUMERIC
    raise exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvvolt", description="PV voltage modelling pipeline")
    parser.add_argument("command", choices=[*COMMANDS, "all"])
    parser.add_argument("--config", default=None, help="JSON run config (default: bundled desk-scale config)")
    parser.add_argument("--out", default=None, help="output directory (overrides PVVOLT_OUT and the config)")
    parser.add_argument("--seed", type=int, default=None, help="global seed (overrides PVVOLT_SEED and the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("RunConfig.seed must fit in an unsigned 64-bit integer")
        cfg = load_config(args.config or bundled_config_path(), seed=args.seed, output_dir=args.out)
        if args.command == "all":
            run_pipeline(cfg)
        else:
            print(COMMANDS[args.command](cfg))
    except PvVoltError as exc:
        code = exit_code(exc)
        print(f"error [{_where(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

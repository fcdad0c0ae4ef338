"""Command-line entry point: ``ledgermetrics <subcommand> ...``.

Exit codes: 0 success, 1 fatal input or configuration error, 2 adequacy or
convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from .errors import (
    AdequacyFailed,
    ConfigError,
    LedgerMetricsError,
    NoConvergence,
    SingularCorrelation,
)
from .ingest import parse_timestamp, write_attribution, write_blocks
from .pipeline import (
    INPUT_KEYS,
    KEYS,
    RunConfig,
    analyze,
    fmt_snapshot,
    fmt_value,
    ingest_inputs,
    read_series_files,
    write_analysis,
)
from .report import write_report
from .stats import align_series, run_efa_pipeline, spearman_matrix, strength_label
from .synthlab import (
    ShareModel,
    SynthSpec,
    generate_block_stream,
    synth_attribution,
    window_confidence_experiment,
)
from .windows import parse_duration

log = logging.getLogger("ledgermetrics")

EXIT_OK, EXIT_INPUT, EXIT_ADEQUACY = 0, 1, 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    for key in KEYS:
        flags = {f"--{key}", f"--{key.replace('_', '-')}"}
        p.add_argument(*sorted(flags), dest=key, default=None, metavar=key.upper())


def _overrides(args: argparse.Namespace, keys=KEYS) -> dict[str, str]:
    out = {}
    for key in keys:
        v = getattr(args, key, None)
        if v is None:
            continue
        if key in INPUT_KEYS + ("output",) and v:
            v = str(Path(v).resolve())
        out[key] = v
    return out


def _load(args) -> RunConfig:
    return RunConfig.load(args.config, _overrides(args))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_ingest(args) -> int:
    cfg = _load(args)
    cfg.check_inputs()
    out = cfg.path("output")
    report = {"chain_id": cfg["chain_id"], "files": [], "fatal": None}
    code = EXIT_OK
    try:
        inputs = ingest_inputs(cfg)
        report["files"] = [r.to_dict() for r in inputs.reports]
        report["blocks"] = len(inputs.ledger.blocks)
        report["balance_snapshots"] = len(inputs.ledger.balance_snapshots)
    except LedgerMetricsError as exc:
        report["fatal"] = str(exc)
        code = EXIT_INPUT
    _write_json(out / "validation_report.json", report)
    dropped = sum(f["dropped_zero"] + f["skipped"] for f in report["files"])
    print(f"ingest: {len(report['files'])} file(s), {dropped} dropped row(s)"
          + (f"; FATAL: {report['fatal']}" if report["fatal"] else ""))
    return code


def cmd_analyze(args) -> int:
    cfg = _load(args)
    cfg.check_inputs()
    inputs = ingest_inputs(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = analyze(cfg, inputs)
    for w in caught:
        if str(w.message) not in result.warnings:
            result.warnings.append(str(w.message))
    if not result.snapshots:
        log.error("no snapshot could be computed")
        return EXIT_INPUT
    written = write_analysis(cfg, result, cfg.path("output"))
    for w in result.warnings:
        log.warning(w)
    print(f"analyze: {len(result.snapshots)} snapshot(s), {len(written)} file(s) in {cfg.path('output')}")
    return EXIT_OK


def _config_or_empty(args) -> RunConfig:
    keys = ("rotation", "outliers", "force_efa", "promax_power", "output")
    return RunConfig.load(args.config, _overrides(args, keys))


def cmd_correlate(args) -> int:
    cfg = _config_or_empty(args)
    series = read_series_files(args.series)
    if len(series) < 2:
        raise ConfigError("correlate needs at least two series")
    m = align_series(series)
    if len(m.rows) < 3:
        raise ConfigError(f"only {len(m.rows)} aligned snapshot(s); need at least 3")
    res = spearman_matrix(m)
    for name, why in res.excluded.items():
        log.warning("excluded %s: %s", name, why)
    if len(res.columns) < 2:
        raise ConfigError("fewer than two non-constant series; nothing to correlate")
    out = cfg.path("output")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "correlation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(res.columns))
        for name, row in zip(res.columns, res.matrix):
            w.writerow([name] + [f"{v:.2f}" if args.round else fmt_value(v) for v in row])
    with open(out / "correlation_labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(res.columns))
        for name, row in zip(res.columns, res.labels()):
            w.writerow([name] + row)
    _write_json(
        out / "correlation.json",
        {
            "method": "spearman",
            "columns": list(res.columns),
            "snapshots": len(m.rows),
            "excluded": res.excluded,
            "strength_cuts": {"low": 0.3, "moderate": 0.5, "high": 0.7, "very high": 0.9},
        },
    )
    print(f"correlate: {len(res.columns)} series over {len(m.rows)} snapshots -> {out / 'correlation.csv'}")
    return EXIT_OK


def cmd_efa(args) -> int:
    cfg = _config_or_empty(args)
    series = read_series_files(args.series)
    m = align_series(series)
    try:
        run = run_efa_pipeline(
            m,
            outliers=cfg["outliers"],
            rotation=cfg["rotation"],
            power=int(cfg["promax_power"]),
            force=bool(cfg["force_efa"]) or args.force,
            n_factors=args.n_factors,
        )
    except (AdequacyFailed, NoConvergence, SingularCorrelation) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ADEQUACY
    model = run.model
    out = cfg.path("output")
    out.mkdir(parents=True, exist_ok=True)
    factors = [f"F{j + 1}" for j in range(model.n_factors)]
    with open(out / "eigenvalues.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "retained"])
        for i, e in enumerate(model.eigenvalues, start=1):
            w.writerow([i, fmt_value(e), "yes" if e > 1 else "no"])
    with open(out / "loadings.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable"] + factors + ["communality"])
        for name, row, h in zip(model.variables, model.loadings, model.communalities):
            w.writerow([name] + [fmt_value(v) for v in row] + [fmt_value(h)])
    if model.factor_correlations is not None:
        with open(out / "factor_correlations.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([""] + factors)
            for name, row in zip(factors, model.factor_correlations):
                w.writerow([name] + [fmt_value(v) for v in row])
    meta = model.to_dict()
    meta.update({"kmo": run.kmo, "kaiser_count": run.kaiser, "rows": len(run.matrix.rows)})
    _write_json(out / "model.json", meta)
    _write_json(out / "efa_log.json", {"steps": run.steps})
    print(f"efa: KMO {run.kmo:.3f}, {model.n_factors} factor(s), rotation {model.rotation.value} -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.shares and args.zipf is not None:
        raise ConfigError("give either --shares or --zipf, not both")
    if args.shares:
        shares = tuple(float(s) for s in args.shares.split(","))
        model, n = ShareModel.EXPLICIT, args.entities or len(shares)
    elif args.zipf is not None:
        shares, model, n = (), ShareModel.ZIPF, args.entities
    else:
        shares, model, n = (), ShareModel.UNIFORM, args.entities
    if not n:
        raise ConfigError("--entities is required")
    spec = SynthSpec(
        n_entities=n,
        share_model=model,
        zipf_s=args.zipf if args.zipf is not None else 1.0,
        shares=shares,
        blocks_per_day=args.blocks_per_day,
        duration=args.days,
        seed=args.seed,
        start=parse_timestamp(args.start),
        addresses_per_entity=args.addresses_per_entity,
    )
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.window_experiment:
        windows = [parse_duration(w) for w in args.window_experiment.split(",")]
        rows = window_confidence_experiment(spec, windows, args.repetitions)
        with open(out / "window_confidence.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_days", "nc_mean", "nc_sd"])
            for days, mean, sd in rows:
                w.writerow([fmt_value(days), fmt_value(mean), fmt_value(sd)])
        print(f"synth: window experiment -> {out / 'window_confidence.csv'}")
        return EXIT_OK
    ledger = generate_block_stream(spec)
    write_blocks(ledger.blocks, out / "blocks.csv")
    write_attribution(synth_attribution(spec), out / "attribution.csv")
    _write_json(
        out / "synth_spec.json",
        {
            "entities": spec.entity_ids(),
            "weights": [str(w) for w in spec.weights()],
            "share_model": spec.share_model.value,
            "zipf_s": spec.zipf_s,
            "blocks_per_day": spec.blocks_per_day,
            "days": spec.duration,
            "seed": spec.seed,
            "start": args.start,
            "study_end": fmt_snapshot(ledger.study_window[1]),
            "blocks": len(ledger.blocks),
        },
    )
    print(f"synth: {len(ledger.blocks)} blocks -> {out / 'blocks.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    series = read_series_files(args.series) if args.series else []
    written = write_report(series, Path(args.output), args.name, args.title or "")
    if written:
        print(f"report: {', '.join(str(p) for p in written)}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors count as configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ledgermetrics", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate inputs, write validation_report.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="compute metric series per snapshot")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("correlate", help="Spearman matrix over metric series files")
    p.add_argument("series", nargs="+")
    p.add_argument("--config")
    p.add_argument("--output", default=None)
    p.add_argument("--round", action="store_true", help="print values with two decimals")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("efa", help="exploratory factor analysis over metric series files")
    p.add_argument("series", nargs="+")
    p.add_argument("--config")
    p.add_argument("--output", default=None)
    p.add_argument("--rotation", choices=["none", "varimax", "promax"], default=None)
    p.add_argument("--outliers", choices=["none", "drop", "winsorize", "transform"], default=None)
    p.add_argument("--promax-power", "--promax_power", dest="promax_power", default=None)
    p.add_argument("--force", action="store_true", help="run even when KMO <= 0.5")
    p.add_argument("--n-factors", type=int, default=None, help="override the Kaiser count")
    p.set_defaults(func=cmd_efa, force_efa=None)

    p = sub.add_parser("synth", help="write synthetic ingest-compatible fixtures")
    p.add_argument("--entities", type=int, default=None)
    p.add_argument("--shares", default=None, help="explicit comma-separated share vector")
    p.add_argument("--zipf", type=float, default=None, help="Zipf exponent")
    p.add_argument("--blocks-per-day", type=float, default=144.0)
    p.add_argument("--days", type=float, default=28.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2020-01-01T00:00:00Z")
    p.add_argument("--addresses-per-entity", type=int, default=1)
    p.add_argument("--window-experiment", default=None, help="e.g. 1d,7d,14d")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--output", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="gnuplot script and tidy CSV for metric series")
    p.add_argument("series", nargs="*")
    p.add_argument("--output", default="report")
    p.add_argument("--name", default="report")
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (AdequacyFailed, NoConvergence, SingularCorrelation) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ADEQUACY
    except (LedgerMetricsError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration and the end-to-end measurement pipeline.

The order is fixed: ingest, cluster, estimate resources and population,
apply inclusion thresholds, compute metrics. ``pipeline_order`` exists in
the configuration only to document that order; any other value is
rejected.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Callable

from . import __version__
from ._backend import BACKEND
from .cluster import ClusterMap, EntityMap, Maps, build_multi_input_clusters, build_stake_key_clusters
from .errors import ConfigError, LedgerMetricsError
from .ingest import (
    FileReport,
    parse_attribution,
    parse_balances,
    parse_blocks,
    parse_stake_keys,
    parse_timestamp,
    parse_tx_inputs,
    build_ledger,
)
from .metrics import DEFAULT_METRICS, MetricSpec, evaluate_all
from .model import EventLedger, MetricSeries
from .stats import OutlierTreatment, Rotation
from .windows import (
    PopulationWindow,
    Threshold,
    WindowConfig,
    consensus_series,
    parse_duration,
    parse_resource_window,
    tokenomics_series,
)

log = logging.getLogger(__name__)

PIPELINE_ORDER = "cluster,estimate,threshold"
INPUT_KEYS = ("blocks", "balances", "attribution", "tx_inputs", "stake_keys")


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _list(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _layer(text: str) -> str:
    if text not in ("consensus", "tokenomics"):
        raise ConfigError(f"layer must be consensus or tokenomics, got {text!r}")
    return text


def _anchor(text: str) -> str:
    if text not in ("centered", "trailing"):
        raise ConfigError(f"population_anchor must be centered or trailing, got {text!r}")
    return text


def _order(text: str) -> str:
    if text.replace(" ", "") != PIPELINE_ORDER:
        raise ConfigError(
            f"pipeline_order {text!r} rejected: inclusion thresholds are applied only after "
            f"clustering and resource/population estimation ({PIPELINE_ORDER})"
        )
    return PIPELINE_ORDER


def _frequency(text: str) -> str:
    if text != "monthly":
        parse_duration(text)
    return text


def _instant(text: str) -> str:
    _to_instant(text)
    return text


def _tau(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise ConfigError(f"tau must lie in (0, 1), got {v}")
    return v


def _checked(convert: Callable[[str], Any]) -> Callable[[str], str]:
    """Validate with ``convert`` but keep the original text."""

    def check(text: str) -> str:
        convert(text)
        return text

    return check


def _metric_list(text: str) -> str:
    for m in _list(text):
        MetricSpec.parse(m)
    return text


# key -> (validator, default, pipeline-relevant)
KEYS: dict[str, tuple[Callable[[str], Any], str, bool]] = {
    "chain_id": (str, "chain", True),
    "layer": (_layer, "consensus", True),
    "blocks": (str, "", True),
    "balances": (str, "", True),
    "attribution": (str, "", True),
    "tx_inputs": (str, "", True),
    "stake_keys": (str, "", True),
    "study_start": (_instant, "", True),
    "study_end": (_instant, "", True),
    "clustering": (_bool, "true", True),
    "resource_window": (_checked(parse_resource_window), "7d", True),
    "population_window": (lambda t: str(PopulationWindow.parse(t)), "factor:2", True),
    "population_anchor": (_anchor, "centered", True),
    "frequency": (_frequency, "", True),
    "threshold": (lambda t: str(Threshold.parse(t)), "none", True),
    "pipeline_order": (_order, PIPELINE_ORDER, True),
    "metrics": (_metric_list, "", True),
    "tau": (_checked(lambda t: [_tau(x) for x in _list(t)]), "", True),
    "cr": (_checked(lambda t: [MetricSpec("cr", int(x)) for x in _list(t)]), "", True),
    "entropy_base": (_checked(float), "2", True),
    "rotation": (lambda t: Rotation(t).value, "promax", True),
    "promax_power": (_checked(int), "4", True),
    "outliers": (lambda t: OutlierTreatment(t).value, "transform", True),
    "force_efa": (_bool, "false", True),
    "output": (str, "out", False),
    "jobs": (_checked(int), "1", False),
}
OPTIONAL = INPUT_KEYS + ("study_start", "study_end", "frequency", "metrics", "tau", "cr")


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, str] | None = None) -> "RunConfig":
        raw: dict[str, str] = {}
        base = Path(".")
        if path:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file {p} does not exist")
            text = p.read_text(encoding="utf-8")
            parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
            parser.optionxform = str
            if not text.lstrip().startswith("["):
                text = "[run]\n" + text
            try:
                parser.read_string(text)
            except configparser.Error as exc:
                raise ConfigError(f"{p}: {exc}") from None
            for section in parser.sections():
                raw.update(parser[section])
            base = p.parent
        for k, v in (overrides or {}).items():
            if v is not None:
                raw[k] = str(v)
        unknown = sorted(set(raw) - set(KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values = {}
        for key, (parse, default, _) in KEYS.items():
            text = raw.get(key, default).strip()
            if not text and key in OPTIONAL:
                values[key] = ""
                continue
            try:
                values[key] = parse(text)
            except (ValueError, LedgerMetricsError) as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
        return cls(values, base)

    def path(self, key: str) -> Path | None:
        v = self.values.get(key)
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def check_inputs(self) -> None:
        for key in INPUT_KEYS:
            p = self.path(key)
            if p is not None and not p.exists():
                raise ConfigError(f"input {key} = {p} does not exist")
        needed = "blocks" if self["layer"] == "consensus" else "balances"
        if self.path(needed) is None:
            raise ConfigError(f"layer {self['layer']} needs the {needed} input")

    def fingerprint(self) -> str:
        relevant = {k: _jsonable(v) for k, v in sorted(self.values.items()) if KEYS[k][2]}
        blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def window_config(self) -> WindowConfig:
        freq = self["frequency"]
        if not freq:
            freq = "7d" if self["layer"] == "consensus" else "monthly"
        if freq == "monthly":
            if self["layer"] == "consensus":
                raise ConfigError("frequency 'monthly' is only available for the tokenomics layer")
            frequency = None
        else:
            frequency = parse_duration(freq)
        return WindowConfig(
            resource_window=parse_resource_window(self["resource_window"]),
            population_window=PopulationWindow.parse(self["population_window"]),
            frequency=frequency,
            threshold=Threshold.parse(self["threshold"]),
            centered=self["population_anchor"] == "centered",
        )

    def metric_specs(self) -> list[MetricSpec]:
        specs = [MetricSpec.parse(m) for m in _list(self["metrics"])] if self["metrics"] else list(DEFAULT_METRICS)
        for t in _list(self["tau"]):
            specs.append(MetricSpec("tau", float(t)))
        for m in _list(self["cr"]):
            specs.append(MetricSpec("cr", int(m)))
        seen, out = set(), []
        for s in specs:
            if s.label not in seen:
                seen.add(s.label)
                out.append(s)
        return out


def _jsonable(v):
    return v if isinstance(v, (str, int, float, bool)) or v is None else str(v)


@dataclass
class Inputs:
    ledger: EventLedger
    maps: Maps
    reports: list[FileReport]


def ingest_inputs(cfg: RunConfig) -> Inputs:
    """Parse every configured input; raises on the first fatal error."""
    reports: list[FileReport] = []

    def parsed(key, fn):
        p = cfg.path(key)
        if p is None:
            return None
        rep = FileReport(str(p), key)
        reports.append(rep)
        return fn(p, rep)

    blocks = parsed("blocks", parse_blocks) or []
    balances = parsed("balances", parse_balances) or []
    attribution = parsed("attribution", parse_attribution) or []
    txs = parsed("tx_inputs", parse_tx_inputs) or []
    stakes = parsed("stake_keys", parse_stake_keys) or []

    window = None
    if cfg["study_start"] or cfg["study_end"]:
        if not (cfg["study_start"] and cfg["study_end"]):
            raise ConfigError("study_start and study_end must be given together")
        window = (_to_instant(cfg["study_start"]), _to_instant(cfg["study_end"]))
    ledger = build_ledger(cfg["chain_id"], blocks, balances, window)

    if cfg["clustering"]:
        clusters = ClusterMap()
        if txs:
            clusters = build_multi_input_clusters(txs)
        if stakes:
            clusters = clusters.combined(build_stake_key_clusters(stakes))
        maps = Maps(clusters, EntityMap.from_records(attribution))
    else:
        maps = Maps()
    return Inputs(ledger, maps, reports)


def _to_instant(text: str) -> datetime:
    if "T" in text:
        return parse_timestamp(text)
    d = date.fromisoformat(text)
    return parse_timestamp(d.isoformat() + "T00:00:00Z")


@dataclass
class AnalysisResult:
    series: dict[str, MetricSeries]
    n_by_snapshot: dict[str, dict]
    snapshots: list
    warnings: list[str]
    skipped: list


def analyze(cfg: RunConfig, inputs: Inputs) -> AnalysisResult:
    wcfg = cfg.window_config()
    jobs = max(1, int(cfg["jobs"]))
    if cfg["layer"] == "consensus":
        dists, wlog = consensus_series(inputs.ledger, inputs.maps, wcfg, jobs=jobs)
    else:
        dists, wlog = tokenomics_series(inputs.ledger, inputs.maps, wcfg, jobs=jobs)
    specs = cfg.metric_specs()
    base = float(cfg["entropy_base"])
    points: dict[str, list] = {s.label: [] for s in specs}
    ns: dict[str, dict] = {s.label: {} for s in specs}
    for d in dists:
        for label, mv in evaluate_all(d, specs, entropy_base=base).items():
            points[label].append((d.snapshot, mv.value))
            ns[label][d.snapshot] = mv.n
    fp = cfg.fingerprint()
    series = {label: MetricSeries(label, tuple(pts), fp) for label, pts in points.items()}
    warn = list(dict.fromkeys(wlog.warnings))
    if wcfg.overlapping:
        warn.append("overlapping windows: series unsuitable for inferential statistics")
    return AnalysisResult(series, ns, [d.snapshot for d in dists], warn, wlog.skipped)


def fmt_value(v: float) -> str:
    s = f"{v:.12g}"
    return "0" if s == "-0" else s


def fmt_snapshot(t) -> str:
    if isinstance(t, datetime):
        return t.strftime("%Y-%m-%dT%H:%M:%SZ")
    if isinstance(t, date):
        return t.isoformat()
    return str(t)


def write_analysis(cfg: RunConfig, result: AnalysisResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, s in result.series.items():
        p = out / f"{label}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["snapshot", "value", "n"])
            for t, v in s.points:
                w.writerow([fmt_snapshot(t), fmt_value(v), result.n_by_snapshot[label][t]])
        written.append(p)
    labels = list(result.series)
    lookup = {label: dict(s.points) for label, s in result.series.items()}
    p = out / "metrics_wide.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snapshot"] + labels)
        for t in result.snapshots:
            w.writerow([fmt_snapshot(t)] + [fmt_value(lookup[l][t]) if t in lookup[l] else "" for l in labels])
    written.append(p)
    manifest = {
        "chain_id": cfg["chain_id"],
        "layer": cfg["layer"],
        "config_fingerprint": cfg.fingerprint(),
        "config": {k: _jsonable(v) for k, v in sorted(cfg.values.items()) if KEYS[k][2]},
        "versions": {"ledgermetrics": __version__},
        "snapshots": len(result.snapshots),
        "metrics": labels,
        "warnings": result.warnings,
        "skipped_snapshots": [{"snapshot": t, "reason": r} for t, r in result.skipped],
    }
    p = out / "manifest.json"
    p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(p)
    log.debug("kernel backend: %s", BACKEND)
    return written


def read_series_files(paths) -> list[MetricSeries]:
    """Per-metric CSVs (snapshot,value[,n]) or wide CSVs (snapshot,<metric>...)."""
    out: list[MetricSeries] = []
    for path in paths:
        p = Path(path)
        with open(p, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0].strip() != "snapshot":
            raise ConfigError(f"{p}: expected a header starting with 'snapshot'")
        header = [h.strip() for h in rows[0]]
        if header[1:2] == ["value"]:
            cols = [(p.stem, 1)]
        else:
            cols = [(h, i) for i, h in enumerate(header) if i > 0]
        for name, i in cols:
            pts = []
            for r in rows[1:]:
                if len(r) > i and r[i].strip():
                    pts.append((r[0].strip(), float(r[i])))
            pts.sort()
            out.append(MetricSeries(name, tuple(pts)))
    return out

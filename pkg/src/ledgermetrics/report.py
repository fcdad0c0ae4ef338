"""Plot artifacts: a tidy CSV plus a self-contained gnuplot script."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

from .model import MetricSeries

log = logging.getLogger(__name__)


def _timefmt(snapshot: str) -> str:
    return "%Y-%m-%dT%H:%M:%SZ" if "T" in snapshot else "%Y-%m-%d"


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def write_report(series: Sequence[MetricSeries], out: Path, name: str = "report", title: str = "") -> list[Path]:
    """One line per series; returns the written paths, or [] for an empty set."""
    series = [s for s in series if len(s)]
    if not series:
        log.warning("no non-empty series given; nothing to plot")
        return []
    out.mkdir(parents=True, exist_ok=True)
    data = out / f"{name}.csv"
    with open(data, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "snapshot", "value"])
        for s in series:
            for t, v in s.points:
                w.writerow([s.metric_name, t, _fmt(v)])

    fmt = _timefmt(str(series[0].points[0][0]))
    lines = [
        "# generated by ledgermetrics; run with: gnuplot " + f"{name}.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 1100,500",
        f"set output '{name}.png'",
        "set xdata time",
        f"set timefmt '{fmt}'",
        "set format x '%Y-%m'",
        "set key outside right",
        "set grid",
    ]
    if title:
        lines.append(f"set title '{title}'")
    for i, s in enumerate(series):
        lines.append(f"$s{i} << EOD")
        lines.extend(f"{t},{_fmt(v)}" for t, v in s.points)
        lines.append("EOD")
    plots = [f"$s{i} using 1:2 with lines lw 2 title '{s.metric_name}'" for i, s in enumerate(series)]
    lines.append("plot " + ", \\\n     ".join(plots))
    script = out / f"{name}.gp"
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [script, data]

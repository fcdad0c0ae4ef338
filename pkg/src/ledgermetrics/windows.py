"""Turn a ledger plus entity resolution into per-snapshot resource distributions.

Consensus snapshots count blocks per entity over a trailing resource window
and decide who is "active" from a separate, possibly wider, population
window. Tokenomics snapshots sum balances per entity. Inclusion thresholds
are applied last, on the finished distribution.
"""

from __future__ import annotations

import enum
import logging
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import numpy as np

from . import _backend
from .cluster import Maps, base_block_creator, resolve_entity
from .errors import (
    ConfigError,
    EmptyStudyWindow,
    EmptyWindow,
    InvalidThreshold,
    MissingSnapshot,
    WindowWarning,
)
from .model import EventLedger, ResourceDistribution, ResourceKind, utc

log = logging.getLogger(__name__)

MIN_WINDOW_BLOCKS = 150

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(s|m|h|d|w)\s*$")
_BLOCKS = re.compile(r"^\s*(\d+)\s*(?:b|blocks?)\s*$")
_UNIT = {"s": "seconds", "m": "minutes", "h": "hours", "d": "days", "w": "weeks"}


def parse_duration(text: str) -> timedelta:
    """``"7d"``, ``"12h"``, ``"2w"`` ..."""
    m = _DURATION.match(str(text))
    if not m:
        raise ConfigError(f"bad duration {text!r}; use e.g. 7d, 12h, 2w")
    return timedelta(**{_UNIT[m.group(2)]: float(m.group(1))})


def parse_resource_window(text: str) -> timedelta | int:
    """A duration, or a block count such as ``"2016b"``."""
    m = _BLOCKS.match(str(text))
    if m:
        return int(m.group(1))
    return parse_duration(text)


class PopulationKind(str, enum.Enum):
    SAME = "same"
    FACTOR = "factor"
    ALL_TIME = "all_time"


@dataclass(frozen=True)
class PopulationWindow:
    kind: PopulationKind = PopulationKind.FACTOR
    k: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PopulationKind(self.kind))
        if self.kind is PopulationKind.FACTOR and not self.k >= 1:
            raise ConfigError(f"population factor must be >= 1, got {self.k}")

    @classmethod
    def parse(cls, text: str) -> "PopulationWindow":
        """``same``, ``all_time`` or ``factor:K``."""
        text = str(text).strip()
        if text in ("same", "all_time"):
            return cls(PopulationKind(text), 1.0)
        name, _, k = text.partition(":")
        if name == "factor" and k:
            try:
                return cls(PopulationKind.FACTOR, float(k))
            except ValueError:
                pass
        raise ConfigError(f"bad population window {text!r}; use same, all_time or factor:K")

    def __str__(self) -> str:
        return f"factor:{self.k:g}" if self.kind is PopulationKind.FACTOR else self.kind.value


class ThresholdKind(str, enum.Enum):
    NONE = "none"
    TOP_K = "top_k"
    TOP_PERCENT = "top_percent"
    MIN_BALANCE = "min_balance"


@dataclass(frozen=True)
class Threshold:
    kind: ThresholdKind = ThresholdKind.NONE
    value: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ThresholdKind(self.kind))
        v = self.value
        if self.kind is ThresholdKind.TOP_K and (v is None or int(v) != v or v <= 0):
            raise InvalidThreshold(f"top_k needs a positive integer K, got {v}")
        if self.kind is ThresholdKind.TOP_PERCENT and (v is None or not 0 < v <= 100):
            raise InvalidThreshold(f"top_percent needs P in (0, 100], got {v}")
        if self.kind is ThresholdKind.MIN_BALANCE and (v is None or v < 0):
            raise InvalidThreshold(f"min_balance needs B >= 0, got {v}")

    @classmethod
    def parse(cls, text: str) -> "Threshold":
        """``none``, ``top_k:10``, ``top_percent:50``, ``min_balance:1000``."""
        text = str(text).strip()
        if text == "none":
            return cls()
        name, _, val = text.partition(":")
        try:
            kind = ThresholdKind(name)
            num = float(val)
        except ValueError:
            raise InvalidThreshold(f"bad threshold {text!r}") from None
        if kind is ThresholdKind.TOP_K or (kind is ThresholdKind.MIN_BALANCE and num.is_integer()):
            num = int(num)
        return cls(kind, num)

    def __str__(self) -> str:
        return "none" if self.kind is ThresholdKind.NONE else f"{self.kind.value}:{self.value:g}"


@dataclass(frozen=True)
class WindowConfig:
    resource_window: timedelta | int = timedelta(days=7)
    population_window: PopulationWindow = PopulationWindow()
    frequency: timedelta | None = timedelta(days=7)
    threshold: Threshold = Threshold()
    centered: bool = True

    def __post_init__(self):
        rw = self.resource_window
        if isinstance(rw, timedelta):
            if rw <= timedelta(0):
                raise ConfigError("resource_window must be positive")
        elif not (isinstance(rw, int) and rw > 0):
            raise ConfigError(f"resource_window must be a positive duration or block count, got {rw!r}")
        if self.frequency is not None and self.frequency <= timedelta(0):
            raise ConfigError("frequency must be positive")

    @property
    def block_mode(self) -> bool:
        return isinstance(self.resource_window, int)

    @property
    def overlapping(self) -> bool:
        return (
            not self.block_mode
            and self.frequency is not None
            and self.frequency < self.resource_window
        )


def snapshot_times(
    study_window: tuple[datetime, datetime],
    frequency: timedelta,
    resource_window: timedelta | int = timedelta(days=7),
) -> list[datetime]:
    """Snapshot instants ``t_i = start + resource_window + i * frequency`` inside the study window.

    In block-count mode the first snapshot is one ``frequency`` after the start.
    """
    if frequency is None or frequency <= timedelta(0):
        raise ConfigError("frequency must be positive")
    start, end = (utc(t) for t in study_window)
    first = start + (frequency if isinstance(resource_window, int) else resource_window)
    out = []
    t = first
    i = 0
    while t < end:
        out.append(t)
        i += 1
        t = first + i * frequency
    if not out:
        raise EmptyStudyWindow(f"no snapshot fits in [{start}, {end})")
    return out


def _seconds(t: datetime) -> int:
    return int(utc(t).timestamp())


class ConsensusIndex:
    """Per-ledger precomputation: each block's creator, before acquisition links.

    Tags are evaluated on each block's own date; acquisitions are applied per
    snapshot by ``consensus_distribution``.
    """

    def __init__(self, ledger: EventLedger, maps: Maps):
        self.ledger = ledger
        self.maps = maps
        names: dict[str, int] = {}
        codes = np.empty(len(ledger.blocks), dtype=np.int64)
        for i, b in enumerate(ledger.blocks):
            e = base_block_creator(b, maps, b.timestamp)
            codes[i] = names.setdefault(e, len(names))
        self.codes = codes
        self.entities = list(names)
        self.seconds = ledger.block_seconds

    def span(self, lo_s: int, hi_s: int) -> tuple[int, int]:
        return (
            int(np.searchsorted(self.seconds, lo_s, side="left")),
            int(np.searchsorted(self.seconds, hi_s, side="left")),
        )


def _population_bounds(rw_start: int, t: int, cfg: WindowConfig, study: tuple[int, int]) -> tuple[int, int]:
    pw = cfg.population_window
    if pw.kind is PopulationKind.SAME:
        return rw_start, t
    if pw.kind is PopulationKind.ALL_TIME:
        return study
    length = t - rw_start
    if cfg.centered:
        pad = (pw.k - 1.0) * length / 2.0
        lo, hi = rw_start - pad, t + pad
    else:
        lo, hi = t - pw.k * length, t
    return max(int(math.floor(lo)), study[0]), min(int(math.ceil(hi)), study[1])


def consensus_distribution(
    ledger: EventLedger,
    maps: Maps,
    t: datetime,
    cfg: WindowConfig,
    index: ConsensusIndex | None = None,
    on_warning=None,
) -> ResourceDistribution:
    """Block counts per entity over the resource window ending at ``t``.

    The population adds every entity with at least one block in the
    population window; those without blocks in the resource window hold 0.
    ``on_warning`` receives small-window messages instead of ``warnings.warn``.
    """
    idx = index if index is not None else ConsensusIndex(ledger, maps)
    ts = _seconds(t)
    study = (_seconds(ledger.study_window[0]), _seconds(ledger.study_window[1]))
    if cfg.block_mode:
        hi = int(np.searchsorted(idx.seconds, ts, side="left"))
        lo = hi - cfg.resource_window
        if lo < 0:
            raise EmptyWindow(f"fewer than {cfg.resource_window} blocks before {t}")
        rw_start = int(idx.seconds[lo])
    else:
        rw_start = ts - int(cfg.resource_window.total_seconds())
        lo, hi = idx.span(rw_start, ts)
    if hi <= lo:
        raise EmptyWindow(f"no blocks in resource window ending {t}")
    if hi - lo < MIN_WINDOW_BLOCKS:
        msg = f"resource window ending {t} holds {hi - lo} blocks (< {MIN_WINDOW_BLOCKS})"
        if on_warning is None:
            warnings.warn(msg, WindowWarning, stacklevel=2)
        else:
            on_warning(msg)
    day = utc(t).date()
    n_base = len(idx.entities)
    merged: dict[int, str] = {}

    def name(code: int) -> str:
        if code not in merged:
            merged[code] = idx.maps.entities.apply_merges(idx.entities[code], day)
        return merged[code]

    counts = _backend.window_counts(idx.codes, lo, hi, n_base)
    entries: dict[str, int] = {}
    for code in np.flatnonzero(counts).tolist():
        e = name(code)
        entries[e] = entries.get(e, 0) + int(counts[code])

    p_lo_s, p_hi_s = _population_bounds(rw_start, ts, cfg, study)
    p_lo, p_hi = idx.span(p_lo_s, p_hi_s)
    active = np.flatnonzero(_backend.window_counts(idx.codes, p_lo, p_hi, n_base))
    population = set(entries)
    population.update(name(c) for c in active.tolist())
    return ResourceDistribution(utc(t), entries, frozenset(population), ResourceKind.BLOCKS)


def tokenomics_distribution(
    ledger: EventLedger, maps: Maps, snapshot_date: date, cfg: WindowConfig | None = None
) -> ResourceDistribution:
    """Balances summed per resolved entity on ``snapshot_date``."""
    records = ledger.balance_snapshots.get(snapshot_date)
    if records is None:
        raise MissingSnapshot(f"no balance snapshot for {snapshot_date}")
    entries: dict[str, int] = {}
    for r in records:
        e = resolve_entity(maps, r.address, snapshot_date)
        entries[e] = entries.get(e, 0) + r.balance
    entries = {e: v for e, v in entries.items() if v > 0}
    return ResourceDistribution(snapshot_date, entries, frozenset(entries), ResourceKind.TOKENS)


def tokenomics_snapshot_dates(ledger: EventLedger, frequency: timedelta | None) -> list[date]:
    """Available snapshot dates, thinned to the measurement frequency.

    ``frequency=None`` keeps the first snapshot of each calendar month.
    """
    days = sorted(ledger.balance_snapshots)
    start, end = (t.date() for t in ledger.study_window)
    days = [d for d in days if start <= d <= end]
    out: list[date] = []
    for d in days:
        if not out:
            out.append(d)
        elif frequency is None:
            if (d.year, d.month) != (out[-1].year, out[-1].month):
                out.append(d)
        elif d - out[-1] >= frequency:
            out.append(d)
    if not out:
        raise EmptyStudyWindow("no balance snapshot inside the study window")
    return out


def apply_threshold(d: ResourceDistribution, threshold: Threshold) -> ResourceDistribution:
    """Restrict a finished distribution to the entities passing ``threshold``."""
    th = threshold if isinstance(threshold, Threshold) else Threshold.parse(threshold)
    if th.kind is ThresholdKind.NONE or d.applied_threshold == th:
        return d
    if th.kind is ThresholdKind.MIN_BALANCE:
        kept = {e: a for e, a in d.entries.items() if a > th.value}
        return ResourceDistribution(d.snapshot, kept, frozenset(kept), d.resource_kind, th)
    if th.kind is ThresholdKind.TOP_K:
        keep = int(th.value)
    else:
        keep = math.ceil(Fraction(th.value).limit_denominator(10**9) * d.n / 100)
    chosen = [e for e, _ in d.ranked[:keep]]
    kept = {e: d.entries[e] for e in chosen if e in d.entries}
    return ResourceDistribution(d.snapshot, kept, frozenset(chosen), d.resource_kind, th)


@dataclass
class WindowLog:
    """What happened while building a series of snapshots."""

    computed: list = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def consensus_series(
    ledger: EventLedger, maps: Maps, cfg: WindowConfig, *, jobs: int = 1
) -> tuple[list[ResourceDistribution], WindowLog]:
    """All consensus snapshots, thresholded, ordered by time."""
    wlog = WindowLog()
    if cfg.overlapping:
        wlog.warnings.append(
            f"frequency {cfg.frequency} is shorter than the resource window "
            f"{cfg.resource_window}: overlapping windows inflate the number of data points"
        )
    times = snapshot_times(ledger.study_window, cfg.frequency, cfg.resource_window)
    index = ConsensusIndex(ledger, maps)

    def one(t):
        msgs: list[str] = []
        try:
            d = consensus_distribution(ledger, maps, t, cfg, index, on_warning=msgs.append)
        except EmptyWindow as exc:
            return t, None, str(exc), msgs
        return t, apply_threshold(d, cfg.threshold), None, msgs

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, times))
    else:
        results = [one(t) for t in times]
    out = []
    for t, d, skip, msgs in results:
        wlog.warnings.extend(msgs)
        if d is None:
            log.info("snapshot %s skipped: %s", t, skip)
            wlog.skipped.append((utc(t).isoformat(), skip))
        else:
            out.append(d)
            wlog.computed.append(utc(t).isoformat())
    return out, wlog


def tokenomics_series(
    ledger: EventLedger, maps: Maps, cfg: WindowConfig, *, jobs: int = 1
) -> tuple[list[ResourceDistribution], WindowLog]:
    wlog = WindowLog()
    days = tokenomics_snapshot_dates(ledger, cfg.frequency)

    def one(day):
        return apply_threshold(tokenomics_distribution(ledger, maps, day, cfg), cfg.threshold)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(one, days))
    else:
        out = [one(d) for d in days]
    wlog.computed = [d.isoformat() for d in days]
    return out, wlog


def as_utc_datetime(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, tzinfo=timezone.utc)

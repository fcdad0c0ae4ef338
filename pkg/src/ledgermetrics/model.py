"""Core domain types shared by the rest of the package. No I/O here."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, datetime, timezone
from functools import cached_property
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import LedgerMetricsError, ZeroTotal


class ResourceKind(str, enum.Enum):
    BLOCKS = "blocks"
    TOKENS = "tokens"


def utc(ts: datetime) -> datetime:
    """Normalize to an aware UTC datetime truncated to whole seconds."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class BlockRecord:
    height: int
    timestamp: datetime
    reward_addresses: tuple[str, ...]
    creator_tag: str | None = None

    def __post_init__(self):
        if self.height < 0:
            raise ValueError(f"negative block height {self.height}")
        if not self.reward_addresses:
            raise ValueError(f"block {self.height} has no reward address")
        if any(not a for a in self.reward_addresses):
            raise ValueError(f"block {self.height} has an empty reward address")
        object.__setattr__(self, "reward_addresses", tuple(self.reward_addresses))
        object.__setattr__(self, "timestamp", utc(self.timestamp))


@dataclass(frozen=True)
class BalanceRecord:
    address: str
    balance: int
    snapshot_date: date

    def __post_init__(self):
        if self.balance <= 0:
            raise ValueError(f"balance of {self.address} must be positive, got {self.balance}")


@dataclass(frozen=True)
class EventLedger:
    """Blocks and balance snapshots of one chain over a half-open study window."""

    chain_id: str
    blocks: tuple[BlockRecord, ...]
    balance_snapshots: Mapping[date, tuple[BalanceRecord, ...]]
    study_window: tuple[datetime, datetime]

    def __post_init__(self):
        start, end = (utc(t) for t in self.study_window)
        if end <= start:
            raise LedgerMetricsError(f"study window [{start}, {end}) is empty")
        object.__setattr__(self, "study_window", (start, end))
        blocks = tuple(self.blocks)
        for prev, cur in zip(blocks, blocks[1:]):
            if cur.height <= prev.height:
                raise LedgerMetricsError(
                    f"block heights not strictly increasing at {cur.height}"
                )
            if cur.timestamp < prev.timestamp:
                raise LedgerMetricsError(f"timestamp decreases at block {cur.height}")
        for b in blocks:
            if not start <= b.timestamp < end:
                raise LedgerMetricsError(
                    f"block {b.height} at {b.timestamp} outside study window"
                )
        object.__setattr__(self, "blocks", blocks)
        snaps = {}
        for day, records in self.balance_snapshots.items():
            records = tuple(records)
            seen = set()
            for r in records:
                if r.address in seen:
                    raise LedgerMetricsError(f"duplicate address {r.address} on {day}")
                seen.add(r.address)
            snaps[day] = records
        object.__setattr__(self, "balance_snapshots", MappingProxyType(dict(sorted(snaps.items()))))

    @cached_property
    def block_seconds(self) -> np.ndarray:
        """Block timestamps as int64 POSIX seconds, in ledger order."""
        return np.fromiter(
            (int(b.timestamp.timestamp()) for b in self.blocks), dtype=np.int64, count=len(self.blocks)
        )


@dataclass(frozen=True, eq=False)
class ResourceDistribution:
    """Nonnegative resource amounts per entity at one snapshot.

    ``population`` may contain entities with no entry; they count as holding
    zero. ``applied_threshold`` records the inclusion rule already applied so
    that re-applying it is a no-op.
    """

    snapshot: datetime | date
    entries: Mapping[str, float]
    population: frozenset[str]
    resource_kind: ResourceKind
    applied_threshold: object = None

    def __post_init__(self):
        entries = dict(self.entries)
        population = frozenset(self.population)
        missing = entries.keys() - population
        if missing:
            raise LedgerMetricsError(
                f"entries not in population: {sorted(missing)[:5]}"
            )
        for k, v in entries.items():
            if not (v >= 0) or (isinstance(v, float) and not math.isfinite(v)):
                raise LedgerMetricsError(f"amount of {k} must be finite and >= 0, got {v}")
        object.__setattr__(self, "entries", MappingProxyType(entries))
        object.__setattr__(self, "population", population)
        object.__setattr__(self, "resource_kind", ResourceKind(self.resource_kind))

    def __eq__(self, other):
        if not isinstance(other, ResourceDistribution):
            return NotImplemented
        return (
            self.snapshot == other.snapshot
            and dict(self.entries) == dict(other.entries)
            and self.population == other.population
            and self.resource_kind == other.resource_kind
            and self.applied_threshold == other.applied_threshold
        )

    @property
    def n(self) -> int:
        return len(self.population)

    @cached_property
    def total(self):
        values = list(self.entries.values())
        if all(isinstance(v, int) for v in values):
            return sum(values)
        return math.fsum(values)

    @cached_property
    def ranked(self) -> tuple[tuple[str, float], ...]:
        """Entries by descending amount, ties by ascending entity id, zero tail included."""
        ordered = sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))
        tail = sorted(self.population - self.entries.keys())
        return tuple(ordered) + tuple((e, 0) for e in tail)

    @cached_property
    def amounts_desc(self) -> np.ndarray:
        """Float amounts over the full population, descending, zeros included."""
        out = np.zeros(self.n, dtype=np.float64)
        vals = np.fromiter((float(v) for v in self.entries.values()), dtype=np.float64,
                           count=len(self.entries))
        vals[::-1].sort()
        out[: len(vals)] = vals
        return out


def shares(d: ResourceDistribution) -> list[tuple[str, float]]:
    """Normalized shares, descending, ties broken by entity id, zero members last."""
    total = d.total
    if not total > 0:
        raise ZeroTotal("distribution has zero total resource")
    return [(e, amount / total) for e, amount in d.ranked]


@dataclass(frozen=True)
class MetricSeries:
    metric_name: str
    points: tuple[tuple[datetime | date, float], ...]
    config_fingerprint: str = ""

    def __post_init__(self):
        points = tuple((t, float(v)) for t, v in self.points)
        for (t0, _), (t1, _) in zip(points, points[1:]):
            if not t1 > t0:
                raise LedgerMetricsError(f"{self.metric_name}: snapshots not strictly increasing")
        if any(math.isnan(v) for _, v in points):
            raise LedgerMetricsError(f"{self.metric_name}: NaN value in series")
        object.__setattr__(self, "points", points)

    @property
    def snapshots(self) -> list:
        return [t for t, _ in self.points]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.points)


def distribution(
    entries: Mapping[str, float],
    population: Sequence[str] | None = None,
    *,
    snapshot: datetime | date | None = None,
    kind: ResourceKind | str = ResourceKind.BLOCKS,
) -> ResourceDistribution:
    """Convenience constructor; population defaults to the entry keys."""
    pop = frozenset(entries) if population is None else frozenset(population) | frozenset(entries)
    return ResourceDistribution(
        snapshot=snapshot if snapshot is not None else datetime(1970, 1, 1, tzinfo=timezone.utc),
        entries=entries,
        population=pop,
        resource_kind=kind,
    )


def vector(amounts: Sequence[float], *, kind: ResourceKind | str = ResourceKind.BLOCKS) -> ResourceDistribution:
    """Distribution over synthetic ids ``e0000..`` from a plain amount vector.

    Zero amounts become population members without an entry.
    """
    width = max(4, len(str(len(amounts))))
    entries = {f"e{i:0{width}d}": a for i, a in enumerate(amounts) if a > 0}
    pop = [f"e{i:0{width}d}" for i in range(len(amounts))]
    return distribution(entries, pop, kind=kind)


__all__ = [
    "BalanceRecord",
    "BlockRecord",
    "EventLedger",
    "MetricSeries",
    "ResourceDistribution",
    "ResourceKind",
    "distribution",
    "shares",
    "utc",
    "vector",
]

"""Synthetic ledgers and datasets with known ground truth.

Randomness comes from ``CounterRNG``: SplitMix64 evaluated on a counter,
``out_i = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)``. Every draw is a
pure function of (seed, stream label, index), so outputs are identical on
every platform. Block creators are picked by comparing raw 64-bit draws
against integer cumulative-weight boundaries derived from exact rational
weights; no floating point enters that path.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import LedgerMetricsError
from .ingest import AttributionKind, AttributionRecord
from .metrics import nakamoto
from .model import BlockRecord, EventLedger, distribution
from .stats import DataMatrix

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO64 = 1 << 64

DEFAULT_START = datetime(2020, 1, 1, tzinfo=timezone.utc)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class CounterRNG:
    """SplitMix64 over a counter, with named independent sub-streams."""

    def __init__(self, seed: int, label: str = ""):
        digest = hashlib.blake2b(f"{seed & (_TWO64 - 1)}/{label}".encode(), digest_size=8).digest()
        self.seed = np.uint64(int.from_bytes(digest, "little"))
        self.counter = 0

    def stream(self, label: str) -> "CounterRNG":
        return CounterRNG(int(self.seed), label)

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(self.seed + idx * _GOLDEN)

    def below(self, bound: int, n: int) -> np.ndarray:
        """Integers in [0, bound) (modulo reduction; bias < bound / 2**64)."""
        return (self.u64(n) % np.uint64(bound)).astype(np.int64)

    def uniform(self, n: int) -> np.ndarray:
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)
        u2 = self.uniform(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
        return z[:n]


class ShareModel(str, enum.Enum):
    UNIFORM = "uniform"
    ZIPF = "zipf"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SynthSpec:
    n_entities: int
    share_model: ShareModel = ShareModel.UNIFORM
    zipf_s: float = 1.0
    shares: tuple[float, ...] = ()
    blocks_per_day: float = 144.0
    duration: float = 28.0
    seed: int = 0
    start: datetime = DEFAULT_START
    addresses_per_entity: int = 1
    intermittent: int = 0
    on_off_days: int = 7

    def __post_init__(self):
        object.__setattr__(self, "share_model", ShareModel(self.share_model))
        object.__setattr__(self, "shares", tuple(self.shares))
        if self.n_entities <= 0:
            raise LedgerMetricsError("n_entities must be positive")
        if self.share_model is ShareModel.ZIPF and not self.zipf_s > 0:
            raise LedgerMetricsError("zipf exponent must be > 0")
        if self.share_model is ShareModel.EXPLICIT:
            if len(self.shares) != self.n_entities:
                raise LedgerMetricsError(
                    f"{len(self.shares)} shares given for {self.n_entities} entities"
                )
            if any(s < 0 for s in self.shares) or abs(math.fsum(self.shares) - 1.0) > 1e-9:
                raise LedgerMetricsError("explicit shares must be nonnegative and sum to 1")
        if not self.blocks_per_day > 0 or not self.duration > 0:
            raise LedgerMetricsError("blocks_per_day and duration must be positive")
        if self.addresses_per_entity < 1:
            raise LedgerMetricsError("addresses_per_entity must be >= 1")
        if not 0 <= self.intermittent < self.n_entities or self.on_off_days < 1:
            raise LedgerMetricsError("intermittent must be in [0, n_entities) and on_off_days >= 1")

    def weights(self) -> list[Fraction]:
        """Exact normalized weights per entity rank."""
        if self.share_model is ShareModel.UNIFORM:
            raw = [Fraction(1)] * self.n_entities
        elif self.share_model is ShareModel.ZIPF:
            raw = [Fraction(float(r) ** -self.zipf_s) for r in range(1, self.n_entities + 1)]
        else:
            raw = [Fraction(s) for s in self.shares]
        total = sum(raw)
        return [w / total for w in raw]

    def active_weights(self, day: int) -> list[Fraction]:
        """Weights on ``day``: the ``intermittent`` smallest entities take turns
        being switched off for ``on_off_days`` at a time; the rest renormalize."""
        w = self.weights()
        if not self.intermittent:
            return w
        phase = day // self.on_off_days
        first = self.n_entities - self.intermittent
        w = [
            x if i < first or (phase + i) % 2 == 0 else Fraction(0)
            for i, x in enumerate(w)
        ]
        total = sum(w)
        return [x / total for x in w]

    def entity_ids(self) -> list[str]:
        width = max(3, len(str(self.n_entities)))
        return [f"E{i:0{width}d}" for i in range(1, self.n_entities + 1)]

    def addresses(self, entity: str) -> list[str]:
        if self.addresses_per_entity == 1:
            return [entity]
        return [f"{entity}.a{j}" for j in range(self.addresses_per_entity)]


def _boundaries(weights: Sequence[Fraction]) -> np.ndarray:
    cum = Fraction(0)
    out = []
    for w in weights[:-1]:
        cum += w
        out.append(min(math.floor(cum * _TWO64), _TWO64 - 1))
    return np.array(out, dtype=np.uint64)


def _daily_counts(rng: CounterRNG, per_day: float, days: int) -> np.ndarray:
    """Block count per day, jittered around ``per_day``."""
    base = math.floor(per_day)
    frac = per_day - base
    jitter = math.isqrt(base)
    extra = (rng.uniform(days) < frac).astype(np.int64)
    spread = rng.below(2 * jitter + 1, days) - jitter if jitter else np.zeros(days, dtype=np.int64)
    return np.maximum(base + extra + spread, 0)


def generate_block_stream(spec: SynthSpec, chain_id: str = "synthetic") -> EventLedger:
    rng = CounterRNG(spec.seed, "blocks")
    n_days = math.ceil(spec.duration)
    counts = _daily_counts(rng.stream("counts"), spec.blocks_per_day, n_days)
    last = spec.duration - (n_days - 1)
    if last < 1.0:
        counts[-1] = round(counts[-1] * last)
    total = int(counts.sum())
    draws = rng.stream("creators").u64(total)
    if spec.intermittent:
        creators = np.empty(total, dtype=np.int64)
        pos = 0
        for day, c in enumerate(counts.tolist()):
            bounds = _boundaries(spec.active_weights(day))
            creators[pos : pos + c] = np.searchsorted(bounds, draws[pos : pos + c], side="right")
            pos += c
    else:
        creators = np.searchsorted(_boundaries(spec.weights()), draws, side="right")
    addr_pick = rng.stream("addresses").below(spec.addresses_per_entity, total)
    offsets = rng.stream("times").below(86400, total)
    ids = spec.entity_ids()
    end = spec.start + timedelta(days=spec.duration)
    blocks = []
    pos = 0
    for day, c in enumerate(counts.tolist()):
        day_start = spec.start + timedelta(days=day)
        span = 86400 if day < n_days - 1 else max(1, round(86400 * last))
        secs = np.sort(offsets[pos : pos + c] % span)
        for k in range(c):
            entity = ids[int(creators[pos + k])]
            addr = spec.addresses(entity)[int(addr_pick[pos + k])]
            ts = day_start + timedelta(seconds=int(secs[k]))
            if ts >= end:
                ts = end - timedelta(seconds=1)
            blocks.append(BlockRecord(len(blocks), ts, (addr,)))
        pos += c
    return EventLedger(chain_id, tuple(blocks), {}, (spec.start, end))


def synth_attribution(spec: SynthSpec) -> list[AttributionRecord]:
    """Address tags mapping every synthetic address to its true entity."""
    return [
        AttributionRecord(AttributionKind.ADDRESS_TAG, a, e, source="synthlab")
        for e in spec.entity_ids()
        for a in spec.addresses(e)
    ]


def generate_factor_dataset(n_rows: int, loading_matrix, noise_sd: float, seed: int) -> DataMatrix:
    """Rows ``L f + e`` with standard-normal factors and N(0, noise_sd^2) noise."""
    lm = np.atleast_2d(np.asarray(loading_matrix, dtype=np.float64))
    if np.any(np.abs(lm) > 1):
        raise LedgerMetricsError("loadings must lie in [-1, 1]")
    p, k = lm.shape
    rng = CounterRNG(seed, "factors")
    f = rng.stream("f").normal(n_rows * k).reshape(n_rows, k)
    e = rng.stream("e").normal(n_rows * p).reshape(n_rows, p)
    x = f @ lm.T + noise_sd * e
    return DataMatrix(tuple(f"v{i + 1}" for i in range(p)), tuple(range(n_rows)), x)


def _days(w) -> float:
    return w.total_seconds() / 86400.0 if isinstance(w, timedelta) else float(w)


def window_confidence_experiment(spec: SynthSpec, window_lengths, repetitions: int) -> list[tuple[float, float, float]]:
    """Nakamoto coefficient spread across independent streams, per window length.

    Each repetition draws a fresh stream exactly one window long (seed
    ``spec.seed + i``) and measures NC over all of its blocks. Returns rows of
    (window in days, mean NC, sample sd of NC).
    """
    lengths = [_days(w) for w in window_lengths]
    if len(lengths) < 2:
        raise LedgerMetricsError("need at least two window lengths")
    if repetitions < 2:
        raise LedgerMetricsError("need at least two repetitions")
    rows = []
    for w in lengths:
        estimates = []
        for i in range(repetitions):
            run = SynthSpec(
                spec.n_entities, spec.share_model, spec.zipf_s, spec.shares,
                spec.blocks_per_day, w, spec.seed + i, spec.start, 1,
            )
            ledger = generate_block_stream(run)
            counts: dict[str, int] = {}
            for b in ledger.blocks:
                counts[b.reward_addresses[0]] = counts.get(b.reward_addresses[0], 0) + 1
            if counts:
                estimates.append(nakamoto(distribution(counts)))
        arr = np.array(estimates, dtype=np.float64)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        rows.append((w, float(arr.mean()) if len(arr) else math.nan, sd))
    return rows

"""Parse and validate the canonical CSV inputs into model types.

Row-level problems are collected into a ``FileReport`` and the row is
skipped; structural problems (bad header, duplicate heights, negative
balances, invalid attribution) raise.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .errors import (
    DuplicateAddressInSnapshot,
    DuplicateHeight,
    EmptyInput,
    InvertedDateRange,
    NegativeBalance,
    ParseError,
    SchemaError,
    SelfMerge,
)
from .model import BalanceRecord, BlockRecord, EventLedger, utc

BLOCK_HEADER = ("height", "timestamp", "reward_addresses", "creator_tag")
BALANCE_HEADER = ("address", "balance", "snapshot_date")
ATTRIBUTION_HEADER = ("kind", "key", "entity_id", "effective_from", "effective_to", "source")
TX_HEADER = ("tx_id", "input_addresses")
STAKE_HEADER = ("address", "stake_key")

_INT = re.compile(r"^[+-]?\d+$")

Source = str | Path | IO[str]


class AttributionKind(str, enum.Enum):
    ADDRESS_TAG = "address_tag"
    BLOCK_TAG = "block_tag"
    LEGAL_LINK = "legal_link"


@dataclass(frozen=True)
class AttributionRecord:
    kind: AttributionKind
    key: str
    entity_id: str
    effective_from: date | None = None
    effective_to: date | None = None
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", AttributionKind(self.kind))
        if not self.key or not self.entity_id:
            raise ValueError("attribution key and entity_id must be non-empty")
        if self.effective_from and self.effective_to and self.effective_from > self.effective_to:
            raise InvertedDateRange(
                f"{self.key}: effective_from {self.effective_from} after effective_to {self.effective_to}"
            )
        if self.kind is AttributionKind.LEGAL_LINK and self.key == self.entity_id:
            raise SelfMerge(f"legal_link merges {self.key} into itself")

    def active(self, as_of: date | None) -> bool:
        if as_of is None:
            return True
        if self.effective_from and as_of < self.effective_from:
            return False
        if self.effective_to and as_of > self.effective_to:
            return False
        return True


@dataclass
class FileReport:
    path: str
    kind: str
    rows: int = 0
    accepted: int = 0
    dropped_zero: int = 0
    skipped: int = 0
    errors: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    fatal: str | None = None

    def reject(self, err: ParseError) -> None:
        self.skipped += 1
        self.errors.append({"line": err.line, "message": err.message})

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "kind": self.kind,
            "rows": self.rows,
            "accepted": self.accepted,
            "dropped_zero": self.dropped_zero,
            "skipped": self.skipped,
            "errors": self.errors,
            "warnings": self.warnings,
            "fatal": self.fatal,
        }


def _open(src: Source):
    if isinstance(src, (str, Path)):
        return open(src, newline="", encoding="utf-8"), str(src)
    return src, getattr(src, "name", "<stream>")


def _rows(src: Source, header: Sequence[str], kind: str, report: FileReport | None):
    """Yield (line_no, row dict) and the report; validates the header."""
    fh, name = _open(src)
    rep = report if report is not None else FileReport(name, kind)
    rep.path, rep.kind = name, kind
    try:
        reader = csv.reader(fh)
        try:
            got = [h.strip().lstrip("﻿") for h in next(reader)]
        except StopIteration:
            raise EmptyInput(f"{name}: no header row") from None
        missing = [h for h in header if h not in got]
        if missing:
            raise SchemaError(f"{name}: missing columns {missing}; expected {list(header)}")
        extra = [h for h in got if h not in header]
        if extra:
            raise SchemaError(f"{name}: unexpected columns {extra}")
        rows = []
        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            rep.rows += 1
            if len(raw) != len(got):
                rep.reject(ParseError(line_no, f"expected {len(got)} fields, got {len(raw)}"))
                continue
            rows.append((line_no, {k: v.strip() for k, v in zip(got, raw)}))
    finally:
        if isinstance(src, (str, Path)):
            fh.close()
    return rows, rep


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 (``Z`` suffix allowed) or integer POSIX seconds, normalized to UTC seconds."""
    text = text.strip()
    if _INT.match(text):
        return datetime.fromtimestamp(int(text), tz=timezone.utc)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


def parse_date(text: str) -> date | None:
    text = text.strip()
    return date.fromisoformat(text) if text else None


def parse_blocks(src: Source, report: FileReport | None = None) -> list[BlockRecord]:
    rows, rep = _rows(src, BLOCK_HEADER, "blocks", report)
    blocks: dict[int, BlockRecord] = {}
    for line_no, row in rows:
        try:
            if not _INT.match(row["height"]):
                raise ParseError(line_no, f"height {row['height']!r} is not an integer")
            height = int(row["height"])
            try:
                ts = parse_timestamp(row["timestamp"])
            except ValueError:
                raise ParseError(line_no, f"bad timestamp {row['timestamp']!r}") from None
            addrs = tuple(a.strip() for a in row["reward_addresses"].split("|"))
            try:
                block = BlockRecord(height, ts, addrs, row["creator_tag"] or None)
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
        except ParseError as err:
            rep.reject(err)
            continue
        if height in blocks:
            rep.fatal = f"duplicate height {height} (line {line_no})"
            raise DuplicateHeight(f"{rep.path}: {rep.fatal}")
        blocks[height] = block
    if not rows:
        rep.fatal = "no data rows"
        raise EmptyInput(f"{rep.path}: no data rows")
    rep.accepted = len(blocks)
    return [blocks[h] for h in sorted(blocks)]


def parse_balances(src: Source, report: FileReport | None = None) -> list[BalanceRecord]:
    rows, rep = _rows(src, BALANCE_HEADER, "balances", report)
    out: list[BalanceRecord] = []
    seen: set[tuple[date, str]] = set()
    for line_no, row in rows:
        addr = row["address"]
        if not addr:
            rep.reject(ParseError(line_no, "empty address"))
            continue
        if not _INT.match(row["balance"]):
            rep.reject(ParseError(line_no, f"balance {row['balance']!r} is not an integer"))
            continue
        try:
            day = date.fromisoformat(row["snapshot_date"])
        except ValueError:
            rep.reject(ParseError(line_no, f"bad snapshot_date {row['snapshot_date']!r}"))
            continue
        balance = int(row["balance"])
        if balance < 0:
            rep.fatal = f"negative balance for {addr} on line {line_no}"
            raise NegativeBalance(f"{rep.path}: {rep.fatal}")
        if (day, addr) in seen:
            rep.fatal = f"address {addr} repeated in snapshot {day} (line {line_no})"
            raise DuplicateAddressInSnapshot(f"{rep.path}: {rep.fatal}")
        seen.add((day, addr))
        if balance == 0:
            rep.dropped_zero += 1
            continue
        out.append(BalanceRecord(addr, balance, day))
    if not rows:
        rep.fatal = "no data rows"
        raise EmptyInput(f"{rep.path}: no data rows")
    rep.accepted = len(out)
    return sorted(out, key=lambda r: (r.snapshot_date, r.address))


def _attribution_from_mapping(row: dict, where: str) -> AttributionRecord:
    try:
        kind = AttributionKind((row.get("kind") or "").strip())
    except ValueError:
        raise ParseError(0, f"{where}: unknown attribution kind {row.get('kind')!r}") from None
    try:
        start = parse_date(row.get("effective_from") or "")
        end = parse_date(row.get("effective_to") or "")
    except ValueError:
        raise ParseError(0, f"{where}: bad effective date") from None
    try:
        return AttributionRecord(
            kind,
            (row.get("key") or "").strip(),
            (row.get("entity_id") or "").strip(),
            start,
            end,
            (row.get("source") or "").strip(),
        )
    except ValueError as exc:
        raise ParseError(0, f"{where}: {exc}") from None


def parse_attribution(src: Source, report: FileReport | None = None) -> list[AttributionRecord]:
    """CSV, or a JSON array of objects with the same field names (``.json`` suffix)."""
    if isinstance(src, (str, Path)) and str(src).lower().endswith(".json"):
        rep = report if report is not None else FileReport(str(src), "attribution")
        rep.path, rep.kind = str(src), "attribution"
        with open(src, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list):
            raise SchemaError(f"{src}: expected a JSON array of attribution objects")
        rows = [(i, {k: "" if v is None else str(v) for k, v in obj.items()}) for i, obj in enumerate(data, 1)]
        rep.rows = len(rows)
    else:
        rows, rep = _rows(src, ATTRIBUTION_HEADER, "attribution", report)
    out = []
    for line_no, row in rows:
        try:
            rec = _attribution_from_mapping(row, f"line {line_no}")
        except ParseError as err:
            rep.reject(ParseError(line_no, err.message))
            continue
        except (SelfMerge, InvertedDateRange) as exc:
            rep.fatal = str(exc)
            raise
        out.append(rec)
    rep.accepted = len(out)
    return sorted(set(out), key=lambda r: (r.kind.value, r.key, r.entity_id, str(r.effective_from)))


def parse_tx_inputs(src: Source, report: FileReport | None = None) -> list[tuple[str, tuple[str, ...]]]:
    rows, rep = _rows(src, TX_HEADER, "tx_inputs", report)
    out = []
    for line_no, row in rows:
        addrs = tuple(dict.fromkeys(a.strip() for a in row["input_addresses"].split("|") if a.strip()))
        if not row["tx_id"]:
            rep.reject(ParseError(line_no, "empty tx_id"))
            continue
        if not addrs:
            rep.reject(ParseError(line_no, f"{row['tx_id']}: empty input list"))
            continue
        out.append((row["tx_id"], addrs))
    rep.accepted = len(out)
    return out


def parse_stake_keys(src: Source, report: FileReport | None = None) -> list[tuple[str, str | None]]:
    rows, rep = _rows(src, STAKE_HEADER, "stake_keys", report)
    out = []
    for line_no, row in rows:
        if not row["address"]:
            rep.reject(ParseError(line_no, "empty address"))
            continue
        out.append((row["address"], row["stake_key"] or None))
    rep.accepted = len(out)
    return out


def build_ledger(
    chain_id: str,
    blocks: Sequence[BlockRecord],
    balances: Iterable[BalanceRecord] = (),
    study_window: tuple[datetime, datetime] | None = None,
) -> EventLedger:
    """Assemble an EventLedger; the study window defaults to the span of the blocks.

    Blocks outside an explicit study window are dropped.
    """
    snaps: dict[date, list[BalanceRecord]] = {}
    for r in balances:
        snaps.setdefault(r.snapshot_date, []).append(r)
    blocks = sorted(blocks, key=lambda b: b.height)
    if study_window is None:
        if blocks:
            start = blocks[0].timestamp
            end = blocks[-1].timestamp
        elif snaps:
            start = datetime.combine(min(snaps), datetime.min.time(), timezone.utc)
            end = datetime.combine(max(snaps), datetime.min.time(), timezone.utc)
        else:
            raise EmptyInput("no blocks or balances to build a ledger from")
        start = start.replace(hour=0, minute=0, second=0)
        study_window = (start, end.replace(hour=0, minute=0, second=0) + timedelta(days=1))
    start, end = (utc(t) for t in study_window)
    blocks = [b for b in blocks if start <= b.timestamp < end]
    return EventLedger(chain_id, tuple(blocks), snaps, (start, end))


# writers, used for round-tripping and by the synthetic generators


def _fmt_ts(ts: datetime) -> str:
    return utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


def _write(rows: Iterator[Sequence[str]], header: Sequence[str], dst: str | Path | IO[str]) -> None:
    own = isinstance(dst, (str, Path))
    fh = open(dst, "w", newline="", encoding="utf-8") if own else dst
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def write_blocks(blocks: Iterable[BlockRecord], dst) -> None:
    _write(
        ((str(b.height), _fmt_ts(b.timestamp), "|".join(b.reward_addresses), b.creator_tag or "") for b in blocks),
        BLOCK_HEADER,
        dst,
    )


def write_balances(records: Iterable[BalanceRecord], dst) -> None:
    _write(((r.address, str(r.balance), r.snapshot_date.isoformat()) for r in records), BALANCE_HEADER, dst)


def write_attribution(records: Iterable[AttributionRecord], dst) -> None:
    _write(
        (
            (
                r.kind.value,
                r.key,
                r.entity_id,
                r.effective_from.isoformat() if r.effective_from else "",
                r.effective_to.isoformat() if r.effective_to else "",
                r.source,
            )
            for r in records
        ),
        ATTRIBUTION_HEADER,
        dst,
    )


def write_tx_inputs(txs: Iterable[tuple[str, Sequence[str]]], dst) -> None:
    _write(((tx, "|".join(addrs)) for tx, addrs in txs), TX_HEADER, dst)


def to_csv_text(writer, records) -> str:
    buf = io.StringIO()
    writer(records, buf)
    return buf.getvalue()

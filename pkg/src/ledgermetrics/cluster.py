"""Attribute addresses and blocks to the entities that control them.

Three sources are combined: co-spending (multi-input) and stake-key
clusters over addresses, explicit tags from attribution files, and
time-ranged legal links (acquisitions) between entities. Links are applied
at resolution time for a given ``as_of`` date and never rewrite the maps.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import AmbiguousTag, MergeCycle
from .ingest import AttributionKind, AttributionRecord
from .model import BlockRecord

SYNTHETIC_PREFIX = "cluster:"


class ClusterMap:
    """Partition of addresses into clusters.

    Each cluster is represented by its lexicographically smallest address, so
    the representative does not depend on the order unions were performed in.
    Addresses never seen are their own singleton cluster.
    """

    def __init__(self, rep: dict[str, str] | None = None):
        self._rep: dict[str, str] = dict(rep or {})
        self._members: dict[str, list[str]] = defaultdict(list)
        for a, r in self._rep.items():
            self._members[r].append(a)
        for r in self._members:
            self._members[r].sort()

    @classmethod
    def from_pairs(cls, addresses: Iterable[str], pairs: Iterable[tuple[str, str]]) -> "ClusterMap":
        """Build from a node list and undirected links using the union-find kernel."""
        pairs = list(pairs)
        nodes = sorted(set(addresses).union(*pairs) if pairs else set(addresses))
        index = {a: i for i, a in enumerate(nodes)}
        a = np.fromiter((index[x] for x, _ in pairs), dtype=np.int64, count=len(pairs))
        b = np.fromiter((index[y] for _, y in pairs), dtype=np.int64, count=len(pairs))
        labels = _backend.uf_roots(len(nodes), a, b)
        return cls({addr: nodes[lab] for addr, lab in zip(nodes, labels.tolist())})

    def find(self, address: str) -> str:
        return self._rep.get(address, address)

    def union(self, a: str, b: str) -> str:
        ra, rb = self.find(a), self.find(b)
        for x, r in ((a, ra), (b, rb)):
            if x not in self._rep:
                self._rep[x] = r
                self._members[r].append(x)
        if ra == rb:
            return ra
        keep, drop = (ra, rb) if ra < rb else (rb, ra)
        moved = self._members.pop(drop)
        for m in moved:
            self._rep[m] = keep
        self._members[keep] = sorted(self._members[keep] + moved)
        return keep

    def members(self, address: str) -> tuple[str, ...]:
        r = self.find(address)
        return tuple(self._members.get(r, (address,)))

    def clusters(self) -> list[tuple[str, ...]]:
        return sorted(tuple(m) for m in self._members.values())

    def __contains__(self, address: str) -> bool:
        return address in self._rep

    def __len__(self) -> int:
        return len(self._rep)

    def combined(self, other: "ClusterMap") -> "ClusterMap":
        """Finest partition coarser than both inputs."""
        pairs = [(a, r) for a, r in self._rep.items() if a != r]
        pairs += [(a, r) for a, r in other._rep.items() if a != r]
        return ClusterMap.from_pairs(list(self._rep) + list(other._rep), pairs)


def build_multi_input_clusters(tx_inputs: Iterable[tuple[str, Sequence[str]]]) -> ClusterMap:
    """Addresses spent together in one transaction belong to one cluster."""
    nodes: list[str] = []
    pairs: list[tuple[str, str]] = []
    for _tx, addrs in tx_inputs:
        addrs = list(addrs)
        if not addrs:
            continue
        nodes.extend(addrs)
        head = addrs[0]
        pairs.extend((head, other) for other in addrs[1:])
    return ClusterMap.from_pairs(nodes, pairs)


def build_stake_key_clusters(address_stake_pairs: Iterable[tuple[str, str | None]]) -> ClusterMap:
    """Addresses sharing a stake key belong to one cluster; keyless addresses stay alone."""
    nodes: list[str] = []
    first: dict[str, str] = {}
    pairs: list[tuple[str, str]] = []
    for address, key in address_stake_pairs:
        nodes.append(address)
        if key is None:
            continue
        if key in first:
            pairs.append((first[key], address))
        else:
            first[key] = address
    return ClusterMap.from_pairs(nodes, pairs)


@dataclass
class EntityMap:
    address_tags: dict[str, list[AttributionRecord]] = field(default_factory=dict)
    block_tags: dict[str, list[AttributionRecord]] = field(default_factory=dict)
    merges: dict[str, list[AttributionRecord]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[AttributionRecord]) -> "EntityMap":
        em = cls()
        target = {
            AttributionKind.ADDRESS_TAG: em.address_tags,
            AttributionKind.BLOCK_TAG: em.block_tags,
            AttributionKind.LEGAL_LINK: em.merges,
        }
        for r in records:
            target[r.kind].setdefault(r.key, []).append(r)
        em._check_acyclic()
        return em

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(node: str, path: list[str]) -> None:
            state[node] = 1
            for link in self.merges.get(node, ()):
                nxt = link.entity_id
                if state.get(nxt) == 1:
                    raise MergeCycle("merge cycle: " + " -> ".join(path + [node, nxt]))
                if nxt not in state:
                    visit(nxt, path + [node])
            state[node] = 2

        for child in sorted(self.merges):
            if child not in state:
                visit(child, [])

    @staticmethod
    def _pick(records: list[AttributionRecord] | None, as_of: date | None, what: str) -> str | None:
        if not records:
            return None
        live = sorted({r.entity_id for r in records if r.active(as_of)})
        if len(live) > 1:
            warnings.warn(f"{what} tagged to {live}; using {live[0]}", AmbiguousTag, stacklevel=3)
        return live[0] if live else None

    def address_entity(self, address: str, as_of: date | None = None) -> str | None:
        return self._pick(self.address_tags.get(address), as_of, f"address {address}")

    def tag_entity(self, tag: str, as_of: date | None = None) -> str | None:
        return self._pick(self.block_tags.get(tag), as_of, f"block tag {tag!r}")

    def apply_merges(self, entity: str, as_of: date | None = None) -> str:
        """Follow acquisition links active on ``as_of`` to the controlling entity."""
        seen = {entity}
        while True:
            links = [r for r in self.merges.get(entity, ()) if r.active(as_of)]
            if not links:
                return entity
            # latest acquisition wins when a child was bought more than once
            links.sort(key=lambda r: (r.effective_from or date.min, r.entity_id))
            entity = links[-1].entity_id
            if entity in seen:
                raise MergeCycle(f"merge cycle through {entity}")
            seen.add(entity)


class Maps:
    """A ClusterMap and an EntityMap used together for resolution."""

    def __init__(self, clusters: ClusterMap | None = None, entities: EntityMap | None = None):
        self.clusters = clusters if clusters is not None else ClusterMap()
        self.entities = entities if entities is not None else EntityMap()
        self.conflicts: set[tuple[str, tuple[str, ...]]] = set()
        self._tagged_by_rep: dict[str, list[str]] = defaultdict(list)
        for address in self.entities.address_tags:
            self._tagged_by_rep[self.clusters.find(address)].append(address)
        for v in self._tagged_by_rep.values():
            v.sort()

    def tagged_entity(self, address: str, as_of: date | None) -> str | None:
        """Entity known from tags on the address or on any member of its cluster."""
        own = self.entities.address_entity(address, as_of)
        if own is not None:
            return own
        rep = self.clusters.find(address)
        found = set()
        for member in self._tagged_by_rep.get(rep, ()):
            e = self.entities.address_entity(member, as_of)
            if e is not None:
                found.add(e)
        if not found:
            return None
        ordered = tuple(sorted(found))
        if len(ordered) > 1 and (rep, ordered) not in self.conflicts:
            self.conflicts.add((rep, ordered))
            warnings.warn(
                f"cluster {rep} holds addresses tagged to {list(ordered)}; using {ordered[0]}",
                AmbiguousTag,
                stacklevel=2,
            )
        return ordered[0]


def _as_date(as_of: date | datetime | None) -> date | None:
    return as_of.date() if isinstance(as_of, datetime) else as_of


def resolve_entity(maps: Maps, address: str, as_of: date | datetime | None = None) -> str:
    day = _as_date(as_of)
    entity = maps.tagged_entity(address, day)
    if entity is None:
        entity = SYNTHETIC_PREFIX + maps.clusters.find(address)
    return maps.entities.apply_merges(entity, day)


def base_block_creator(block: BlockRecord, maps: Maps, as_of: date | datetime | None = None) -> str:
    """Block creator before acquisition links are applied."""
    day = _as_date(as_of)
    if block.creator_tag:
        entity = maps.entities.tag_entity(block.creator_tag, day)
        if entity is not None:
            return entity
    for address in block.reward_addresses:
        entity = maps.tagged_entity(address, day)
        if entity is not None:
            return entity
    reps = sorted({maps.clusters.find(a) for a in block.reward_addresses})
    return SYNTHETIC_PREFIX + "|".join(reps)


def resolve_block_creator(block: BlockRecord, maps: Maps, as_of: date | datetime | None = None) -> str:
    return maps.entities.apply_merges(base_block_creator(block, maps, as_of), _as_date(as_of))

"""Split a resolved graph by account address prefix, verify each piece on its
own, and put the pieces back together.

A transfer between accounts in different shards is stored in both shards;
inputs that live in another shard are kept as ``boundary_refs`` and trusted
during shard-local verification.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

from .identity import Address, Digest
from .ledger import (
    Block,
    GraphStore,
    HistoryReport,
    LedgerError,
    parse_lines,
    topological_order,
    verify_history,
)
from .storage import iter_hex_lines

HEX_DIGITS = "0123456789abcdef"


class UnresolvedForks(LedgerError):
    code = "unresolved-forks"


class CorruptShard(LedgerError):
    code = "corruption"


@dataclass(frozen=True)
class ShardConfig:
    assignment: dict[str, int]

    def __post_init__(self) -> None:
        widths = {len(k) for k in self.assignment}
        if len(widths) != 1 or 0 in widths:
            raise ValueError("assignment keys must be hex prefixes of one fixed width")
        width = widths.pop()
        expected = {"".join(p) for p in product(HEX_DIGITS, repeat=width)}
        if set(self.assignment) != expected:
            raise ValueError("assignment must cover every hex prefix")
        if set(self.assignment.values()) != set(range(self.shard_count)):
            raise ValueError("shard ids must be 0..n-1, each used at least once")

    @property
    def prefix_width(self) -> int:
        return len(next(iter(self.assignment)))

    @property
    def shard_count(self) -> int:
        return max(self.assignment.values()) + 1

    @classmethod
    def by_count(cls, shard_count: int) -> "ShardConfig":
        """Spread prefixes round-robin over ``shard_count`` shards."""
        if shard_count < 1:
            raise ValueError("need at least one shard")
        width = 1
        while 16**width < shard_count:
            width += 1
        prefixes = ("".join(p) for p in product(HEX_DIGITS, repeat=width))
        return cls({p: int(p, 16) % shard_count for p in prefixes})


def shard_of(address: Address, config: ShardConfig) -> int:
    return config.assignment[address.hex()[:config.prefix_width]]


@dataclass
class Shard:
    shard_id: int
    config: ShardConfig
    blocks: dict[Digest, Block] = field(default_factory=dict)
    tips: dict[Address, Digest] = field(default_factory=dict)
    boundary_refs: set[Digest] = field(default_factory=set)
    issuer: Address | None = None

    def dangling_refs(self) -> set[Digest]:
        return {ref for b in self.blocks.values() for ref in b.inputs if ref not in self.blocks}

    def local_accounts(self) -> list[Address]:
        return sorted(self.tips)


@dataclass
class ShardReport:
    shard_id: int
    failures: list[HistoryReport]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def incomplete(self) -> bool:
        return any(r.reason.startswith("incomplete") for r in self.failures)

    def __bool__(self) -> bool:
        return self.ok


def export_shards(store: GraphStore, config: ShardConfig) -> list[Shard]:
    if store.forks or any(len(v) > 1 for v in store.tx_index.values()):
        raise UnresolvedForks("resolve forks before sharding")
    shards = [Shard(i, config, issuer=store.issuer) for i in range(config.shard_count)]
    for block_id, block in ((b.id, b) for b in store.topological_iter()):
        for shard_id in sorted({shard_of(a, config) for a in block.accounts()}):
            shards[shard_id].blocks[block_id] = block
    for account, tip in store.tips.items():
        shards[shard_of(account, config)].tips[account] = tip
    for shard in shards:
        shard.boundary_refs = shard.dangling_refs()
    return shards


def verify_shard(shard: Shard, accounts: Sequence[Address] | None = None) -> ShardReport:
    anchors = frozenset(shard.boundary_refs)
    failures = []
    for account in accounts if accounts is not None else shard.local_accounts():
        tip = shard.tips.get(account)
        if tip is None:
            failures.append(HistoryReport(account, False, None, "incomplete: no tip for account"))
            continue
        report = verify_history(shard.blocks, tip, account, shard.issuer, anchors)
        if not report:
            failures.append(report)
    return ShardReport(shard.shard_id, failures)


def merge_shards(shards: Iterable[Shard]) -> GraphStore:
    shards = list(shards)
    union: dict[Digest, Block] = {}
    tips: dict[Address, Digest] = {}
    issuers = {s.issuer for s in shards} - {None}
    if len(issuers) > 1:
        raise CorruptShard("shards disagree on the issuer")
    for shard in shards:
        for block_id, block in shard.blocks.items():
            if block.compute_id() != block_id:
                raise CorruptShard(f"block {block_id.hex()} does not hash to its id")
            known = union.get(block_id)
            if known is not None and known.serialize() != block.serialize():
                raise CorruptShard(f"conflicting copies of block {block_id.hex()}")
            union[block_id] = block
        for account, tip in shard.tips.items():
            if tips.setdefault(account, tip) != tip:
                raise CorruptShard(f"conflicting tips for account {account.hex()}")
    for block in union.values():
        missing = [ref for ref in block.inputs if ref not in union]
        if missing:
            raise CorruptShard(f"dangling reference {missing[0].hex()}")
    try:
        store = GraphStore.from_blocks(topological_order(union), issuers.pop() if issuers else None)
    except LedgerError as exc:
        raise CorruptShard(str(exc)) from exc
    if store.forks or store.tips != tips:
        raise CorruptShard("merged graph does not match the recorded tips")
    return store


def write_shard(path: str | os.PathLike, shard: Shard) -> None:
    header = {
        "shard_id": shard.shard_id,
        "assignment": shard.config.assignment,
        "issuer": shard.issuer.hex() if shard.issuer else None,
        "tips": {a.hex(): t.hex() for a, t in sorted(shard.tips.items())},
        "boundary_refs": sorted(r.hex() for r in shard.boundary_refs),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for line in iter_hex_lines(topological_order(shard.blocks)):
            fh.write(line + "\n")


def read_shard(path: str | os.PathLike) -> Shard:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        blocks = list(parse_lines(fh))
    config = ShardConfig({k: int(v) for k, v in header["assignment"].items()})
    return Shard(
        shard_id=int(header["shard_id"]),
        config=config,
        blocks={b.id: b for b in blocks},
        tips={bytes.fromhex(a): bytes.fromhex(t) for a, t in header["tips"].items()},
        boundary_refs={bytes.fromhex(r) for r in header.get("boundary_refs", [])},
        issuer=bytes.fromhex(header["issuer"]) if header.get("issuer") else None,
    )

"""Persistence backends for block graphs.

Both backends hold the same record stream: one hex-encoded canonical block per
line, parents before children. A store is rebuilt by replaying the stream.
"""
from __future__ import annotations

import os
from typing import Iterable, Iterator, Protocol

from .identity import Address
from .ledger import Block, GraphStore, parse_lines


class Storage(Protocol):
    def append(self, block: Block) -> None: ...

    def blocks(self) -> Iterator[Block]: ...


class MemoryStorage:
    def __init__(self) -> None:
        self._records: list[bytes] = []

    def append(self, block: Block) -> None:
        self._records.append(block.serialize())

    def blocks(self) -> Iterator[Block]:
        for record in self._records:
            yield Block.parse(record)

    def __len__(self) -> int:
        return len(self._records)


class FileStorage:
    """Append-only file of hex records; every append is flushed to disk."""

    def __init__(self, path: str | os.PathLike) -> None:
        self.path = os.fspath(path)

    def append(self, block: Block) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(block.serialize().hex() + "\n")
            fh.flush()

    def blocks(self) -> Iterator[Block]:
        if not os.path.exists(self.path):
            return iter(())
        with open(self.path, encoding="utf-8") as fh:
            lines = fh.readlines()
        return parse_lines(lines)


def save_store(store: GraphStore, storage: Storage) -> None:
    for block in store.topological_iter():
        storage.append(block)


def load_store(storage: Storage, issuer: Address | None = None, **kwargs) -> GraphStore:
    return GraphStore.from_blocks(storage.blocks(), issuer, **kwargs)


def write_graph(path: str | os.PathLike, store: GraphStore) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(store.export_text())


def read_graph(path: str | os.PathLike, issuer: Address | None = None, **kwargs) -> GraphStore:
    with open(path, encoding="utf-8") as fh:
        return GraphStore.from_lines(fh, issuer, **kwargs)


def iter_hex_lines(blocks: Iterable[Block]) -> Iterator[str]:
    for block in blocks:
        yield block.serialize().hex()

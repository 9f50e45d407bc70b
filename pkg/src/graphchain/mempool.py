"""Pending transfer requests with a per-leader deterministic ordering."""
from __future__ import annotations

import csv
import heapq
import logging
import threading
from typing import Iterable, Mapping

from .identity import Address, Digest, Keypair, digest
from .ledger import InvalidSignature, LedgerError, TransferRequest, make_transfer

logger = logging.getLogger(__name__)


class DuplicateRequest(LedgerError):
    code = "duplicate"


def leader_rank(leader: Address, tx_id: Digest) -> bytes:
    return digest(leader, tx_id)


class Mempool:
    """``pending`` holds requests not yet canonically packed; ``packed`` the
    ids that are. The two never overlap."""

    def __init__(self) -> None:
        self.pending: dict[Digest, TransferRequest] = {}
        self.packed: set[Digest] = set()
        self._known: dict[Digest, TransferRequest] = {}
        # lazily built min-heaps of (rank, tx_id) per leader; stale entries
        # are skipped on read
        self._orders: dict[Address, list[tuple[bytes, Digest]]] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.pending)

    def __contains__(self, tx_id: Digest) -> bool:
        return tx_id in self.pending

    def _enqueue(self, tx_id: Digest) -> None:
        for leader, heap in self._orders.items():
            heapq.heappush(heap, (leader_rank(leader, tx_id), tx_id))

    def submit(self, request: TransferRequest) -> Digest:
        if not request.signature_valid():
            raise InvalidSignature("transfer signature does not verify")
        tx_id = request.tx_id
        with self._lock:
            if tx_id in self.pending or tx_id in self.packed:
                raise DuplicateRequest(tx_id.hex())
            self.pending[tx_id] = request
            self._known[tx_id] = request
            self._enqueue(tx_id)
        return tx_id

    def get(self, tx_id: Digest) -> TransferRequest:
        return self._known[tx_id]

    def pending_for_leader(self, leader: Address, limit: int | None = None) -> list[TransferRequest]:
        """Pending requests ordered by ``hash(leader || tx_id)``, at most ``limit``."""
        with self._lock:
            if limit is None:
                ranked = sorted(self.pending, key=lambda t: leader_rank(leader, t))
                return [self.pending[t] for t in ranked]
            heap = self._orders.get(leader)
            if heap is None:
                heap = [(leader_rank(leader, t), t) for t in self.pending]
                heapq.heapify(heap)
                self._orders[leader] = heap
            taken: list[tuple[bytes, Digest]] = []
            seen: set[Digest] = set()
            while heap and len(taken) < limit:
                entry = heapq.heappop(heap)
                if entry[1] in self.pending and entry[1] not in seen:
                    seen.add(entry[1])
                    taken.append(entry)
            for entry in taken:
                heapq.heappush(heap, entry)
            return [self.pending[t] for _, t in taken]

    def mark_packed(self, tx_id: Digest, canonical: bool = True) -> bool:
        """Move an id between pending and packed. Returns False (and logs) for
        an id this pool has never seen or that is already in the target state."""
        with self._lock:
            if canonical and tx_id in self.pending:
                del self.pending[tx_id]
                self.packed.add(tx_id)
                return True
            if not canonical and tx_id in self.packed:
                self.packed.discard(tx_id)
                self.pending[tx_id] = self._known[tx_id]
                self._enqueue(tx_id)
                return True
            logger.warning("mark_packed(%s, canonical=%s): no such %s entry", tx_id.hex()[:12],
                           canonical, "pending" if canonical else "packed")
            return False


def load_backlog_csv(path, keyring: Mapping[Address, Keypair]) -> list[TransferRequest]:
    """Sign ``sender,receiver,amount`` rows (hex addresses) with sequential
    per-sender nonces. A header row is skipped when present."""
    nonces: dict[Address, int] = {}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "sender":
                continue
            if len(row) != 3:
                raise ValueError(f"expected sender,receiver,amount; got {row!r}")
            sender, receiver = bytes.fromhex(row[0].strip()), bytes.fromhex(row[1].strip())
            if sender not in keyring:
                raise KeyError(f"no key for sender {row[0].strip()}")
            nonce = nonces.get(sender, 0)
            nonces[sender] = nonce + 1
            out.append(make_transfer(keyring[sender], receiver, int(row[2]), nonce))
    return out


def write_requests(path, requests: Iterable[TransferRequest], append: bool = False) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for request in requests:
            fh.write(request.serialize().hex() + "\n")


def read_requests(path) -> list[TransferRequest]:
    with open(path, encoding="utf-8") as fh:
        return [TransferRequest.parse(bytes.fromhex(line.strip())) for line in fh if line.strip()]

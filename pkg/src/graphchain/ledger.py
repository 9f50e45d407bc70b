"""The GraphChain ledger.

Each block records exactly one event for one or two accounts: account
creation, an issuer-signed issuance/revocation, or a transfer. A transfer block
has two directed inputs (slot 0 is the sender's previous block, slot 1 the
receiver's) and records both traders' balances after the transfer, so an
account's balance is read straight off its tip block.
"""
from __future__ import annotations

import heapq
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from operator import attrgetter
from typing import Iterable, Iterator, Mapping

from .consensus import (
    ElectionConfig,
    LeaderCert,
    PoLConfig,
    PoLProof,
    luck_key,
    pol_solve,
    pol_verify,
    verify_election,
)
from .encoding import DecodeError, Reader, Writer
from .identity import (
    Address,
    Digest,
    Keypair,
    MalformedKey,
    address_of,
    digest,
    verify,
)


class LedgerError(Exception):
    code = "ledger-error"


class InsufficientBalance(LedgerError):
    code = "insufficient-balance"


class UnknownAccount(LedgerError):
    code = "unknown-account"


class ExpiredLeader(LedgerError):
    code = "expired-leader"


class InvalidPoL(LedgerError):
    code = "invalid-pol"


class DuplicateTransaction(LedgerError):
    code = "duplicate-tx"


class InvalidSignature(LedgerError):
    code = "invalid-signature"


class InvalidRequest(LedgerError):
    code = "invalid-request"


class UnauthorizedIssuer(LedgerError):
    code = "unauthorized-issuer"


class IntegrityError(LedgerError):
    code = "integrity-error"


class BlockKind(IntEnum):
    CREATION = 0
    ISSUANCE = 1
    REVOCATION = 2
    TRANSACTION = 3


_TX_ID = attrgetter("tx_id")

_INPUT_COUNT = {
    BlockKind.CREATION: 0,
    BlockKind.ISSUANCE: 1,
    BlockKind.REVOCATION: 1,
    BlockKind.TRANSACTION: 2,
}


@dataclass(frozen=True)
class TransferRequest:
    sender: Address
    receiver: Address
    amount: int
    nonce: int
    signer_key: bytes
    signature: bytes

    @staticmethod
    def message_for(sender: Address, receiver: Address, amount: int, nonce: int) -> bytes:
        return Writer().blob(b"transfer").blob(sender).blob(receiver).u64(amount).u64(nonce).getvalue()

    def message(self) -> bytes:
        return self.message_for(self.sender, self.receiver, self.amount, self.nonce)

    def serialize(self) -> bytes:
        return (Writer().blob(self.sender).blob(self.receiver).u64(self.amount)
                .u64(self.nonce).blob(self.signer_key).blob(self.signature).getvalue())

    @classmethod
    def parse(cls, data: bytes) -> "TransferRequest":
        r = Reader(data)
        req = cls(r.blob(), r.blob(), r.u64(), r.u64(), r.blob(), r.blob())
        r.done()
        return req

    @cached_property
    def tx_id(self) -> Digest:
        return digest(self.serialize())

    def signature_valid(self) -> bool:
        try:
            if address_of(self.signer_key) != self.sender:
                return False
        except MalformedKey:
            return False
        return verify(self.signer_key, self.message(), self.signature)


def make_transfer(keypair: Keypair, receiver: Address, amount: int, nonce: int) -> TransferRequest:
    sender = keypair.address
    if sender == receiver:
        raise InvalidRequest("a transfer needs two distinct accounts")
    if amount <= 0:
        raise InvalidRequest("transfer amount must be positive")
    msg = TransferRequest.message_for(sender, receiver, amount, nonce)
    return TransferRequest(sender, receiver, amount, nonce, keypair.public_key, keypair.sign(msg))


@dataclass(frozen=True)
class Grant:
    """Issuer-signed instruction to add (or revoke) units on one account."""

    account: Address
    amount: int
    nonce: int
    revoke: bool
    signer_key: bytes
    signature: bytes

    @staticmethod
    def message_for(account: Address, amount: int, nonce: int, revoke: bool) -> bytes:
        kind = BlockKind.REVOCATION if revoke else BlockKind.ISSUANCE
        return Writer().blob(b"grant").u8(kind).blob(account).u64(amount).u64(nonce).getvalue()

    def message(self) -> bytes:
        return self.message_for(self.account, self.amount, self.nonce, self.revoke)


def sign_grant(issuer: Keypair, account: Address, amount: int, nonce: int = 0,
               revoke: bool = False) -> Grant:
    msg = Grant.message_for(account, amount, nonce, revoke)
    return Grant(account, amount, nonce, revoke, issuer.public_key, issuer.sign(msg))


@dataclass(frozen=True)
class Block:
    kind: BlockKind
    inputs: tuple[Digest, ...]
    sender: Address
    receiver: Address
    amount: int
    sender_balance_after: int
    receiver_balance_after: int
    leader: Address
    timestamp: int
    tx_id: Digest = b""
    nonce: int = 0
    signer_key: bytes = b""
    signature: bytes = b""
    pol: PoLProof = field(default_factory=lambda: PoLProof(0, 0))

    def header_bytes(self) -> bytes:
        """Everything except the PoL proof; this is what the luck puzzle hashes."""
        w = Writer().u8(self.kind).u8(len(self.inputs))
        for ref in self.inputs:
            w.blob(ref)
        return (w.blob(self.sender).blob(self.receiver).u64(self.amount)
                .u64(self.sender_balance_after).u64(self.receiver_balance_after)
                .blob(self.leader).u64(self.timestamp).blob(self.tx_id).u64(self.nonce)
                .blob(self.signer_key).blob(self.signature).getvalue())

    def serialize(self) -> bytes:
        return self._serialized

    @cached_property
    def _serialized(self) -> bytes:
        # frozen, so the bytes never go stale; replace() builds a fresh instance
        return self.header_bytes() + Writer().u64(self.pol.nonce).u64(self.pol.retries).getvalue()

    @classmethod
    def parse(cls, data: bytes) -> "Block":
        r = Reader(data)
        try:
            kind = BlockKind(r.u8())
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc
        inputs = tuple(r.blob() for _ in range(r.u8()))
        block = cls(
            kind=kind, inputs=inputs, sender=r.blob(), receiver=r.blob(), amount=r.u64(),
            sender_balance_after=r.u64(), receiver_balance_after=r.u64(), leader=r.blob(),
            timestamp=r.u64(), tx_id=r.blob(), nonce=r.u64(), signer_key=r.blob(),
            signature=r.blob(), pol=PoLProof(r.u64(), r.u64()),
        )
        r.done()
        return block

    def compute_id(self) -> Digest:
        return digest(self.serialize())

    @cached_property
    def id(self) -> Digest:
        return self.compute_id()

    def with_pol(self, pol: PoLProof) -> "Block":
        return replace(self, pol=pol)

    def accounts(self) -> tuple[Address, ...]:
        if self.kind == BlockKind.TRANSACTION:
            return (self.sender, self.receiver)
        return (self.receiver,)

    def touches(self, account: Address) -> bool:
        return account in self.accounts()

    def parent_for(self, account: Address) -> Digest | None:
        if self.kind == BlockKind.TRANSACTION:
            return self.inputs[0] if account == self.sender else self.inputs[1]
        return self.inputs[0] if self.inputs else None

    def balance_for(self, account: Address) -> int:
        if self.kind == BlockKind.TRANSACTION and account == self.sender:
            return self.sender_balance_after
        return self.receiver_balance_after

    def request(self) -> TransferRequest:
        return TransferRequest(self.sender, self.receiver, self.amount, self.nonce,
                               self.signer_key, self.signature)


def creation_block(account: Address, leader: Address, timestamp: int) -> Block:
    return Block(BlockKind.CREATION, (), b"", account, 0, 0, 0, leader, timestamp)


def grant_block(grant: Grant, tip: Block, leader: Address, timestamp: int) -> Block:
    before = tip.balance_for(grant.account)
    if grant.revoke:
        after = max(0, before - grant.amount)
        kind = BlockKind.REVOCATION
    else:
        after = before + grant.amount
        kind = BlockKind.ISSUANCE
    return Block(kind, (tip.id,), b"", grant.account, grant.amount, 0, after, leader, timestamp,
                 nonce=grant.nonce, signer_key=grant.signer_key, signature=grant.signature)


def transaction_draft(request: TransferRequest, sender_tip: Block, receiver_tip: Block,
                      leader: Address, timestamp: int) -> Block:
    """Unsolved transaction block built on the given tips (PoL still zero)."""
    sender_before = sender_tip.balance_for(request.sender)
    receiver_before = receiver_tip.balance_for(request.receiver)
    if sender_before < request.amount:
        raise InsufficientBalance(
            f"sender balance {sender_before} below amount {request.amount}")
    return Block(
        BlockKind.TRANSACTION, (sender_tip.id, receiver_tip.id), request.sender,
        request.receiver, request.amount, sender_before - request.amount,
        receiver_before + request.amount, leader, timestamp, tx_id=request.tx_id,
        nonce=request.nonce, signer_key=request.signer_key, signature=request.signature,
    )


@dataclass
class HistoryReport:
    account: Address
    ok: bool = True
    block_id: Digest | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class ForkResolution:
    orphans: list[Block]
    requeue: list[Digest]


def _check_signed(block: Block, issuer: Address | None) -> str | None:
    if block.kind == BlockKind.TRANSACTION:
        req = block.request()
        if req.tx_id != block.tx_id:
            return "tx_id does not match the signed request"
        if not req.signature_valid():
            return "bad transfer signature"
        return None
    try:
        signer = address_of(block.signer_key)
    except MalformedKey:
        return "malformed issuer key"
    if issuer is not None and signer != issuer:
        return "grant not signed by the designated issuer"
    msg = Grant.message_for(block.receiver, block.amount, block.nonce,
                            block.kind == BlockKind.REVOCATION)
    if not verify(block.signer_key, msg, block.signature):
        return "bad issuer signature"
    return None


def verify_history(blocks: Mapping[Digest, Block], tip: Digest, account: Address,
                   issuer: Address | None = None,
                   anchors: frozenset[Digest] | set[Digest] = frozenset()) -> HistoryReport:
    """Replay one account's chain from its creation block up to ``tip``.

    ``anchors`` are ids of blocks held elsewhere whose balances are trusted
    when they appear as a counterparty input. Never raises on bad data.
    """
    report = HistoryReport(account)

    def fail(block_id: Digest | None, reason: str) -> HistoryReport:
        report.ok, report.block_id, report.reason = False, block_id, reason
        return report

    chain: list[Digest] = []
    cursor: Digest | None = tip
    while cursor is not None:
        if len(chain) > len(blocks):
            return fail(cursor, "cycle in account chain")
        block = blocks.get(cursor)
        if block is None:
            return fail(cursor, "incomplete: missing block in account chain")
        if not block.touches(account):
            return fail(cursor, "block does not involve this account")
        chain.append(cursor)
        if len(block.inputs) != _INPUT_COUNT.get(block.kind, -1):
            return fail(cursor, "wrong number of inputs")
        cursor = block.parent_for(account)
    chain.reverse()

    balance = 0
    last_time = -1
    for position, block_id in enumerate(chain):
        b = blocks[block_id]
        try:
            if b.compute_id() != block_id:
                return fail(block_id, "block content does not hash to its id")
        except (ValueError, TypeError, OverflowError):
            return fail(block_id, "block cannot be serialized")
        if min(b.amount, b.sender_balance_after, b.receiver_balance_after) < 0:
            return fail(block_id, "negative balance or amount")
        if b.timestamp < last_time:
            return fail(block_id, "timestamp goes backwards")
        last_time = b.timestamp
        if b.kind == BlockKind.CREATION:
            if position != 0:
                return fail(block_id, "creation block in the middle of a chain")
            if b.receiver_balance_after != 0:
                return fail(block_id, "account must start with zero balance")
            balance = 0
            continue
        if position == 0:
            return fail(block_id, "chain does not start with a creation block")
        problem = _check_signed(b, issuer)
        if problem:
            return fail(block_id, problem)
        if b.kind == BlockKind.ISSUANCE:
            expected = balance + b.amount
        elif b.kind == BlockKind.REVOCATION:
            expected = max(0, balance - b.amount)
        else:
            if b.sender == b.receiver or b.amount <= 0:
                return fail(block_id, "transfer needs two accounts and a positive amount")
            if account == b.sender:
                if balance < b.amount:
                    return fail(block_id, "sender balance below amount")
                expected = balance - b.amount
                other, other_ref, other_after, sign = b.receiver, b.inputs[1], b.receiver_balance_after, 1
            else:
                expected = balance + b.amount
                other, other_ref, other_after, sign = b.sender, b.inputs[0], b.sender_balance_after, -1
            parent = blocks.get(other_ref)
            if parent is None:
                if other_ref not in anchors:
                    return fail(block_id, "incomplete: missing counterparty block")
            elif not parent.touches(other) or parent.balance_for(other) + sign * b.amount != other_after:
                return fail(block_id, "balance conservation violated")
        if b.balance_for(account) != expected:
            return fail(block_id, f"recorded balance {b.balance_for(account)} != replayed {expected}")
        balance = expected
    return report


def topological_order(blocks: Mapping[Digest, Block]) -> list[Block]:
    """Parents before children; ties broken by (timestamp, id) so the order
    depends only on the block set. Inputs outside ``blocks`` are ignored."""
    indegree: dict[Digest, int] = {}
    children: dict[Digest, list[Digest]] = {}
    for block_id, block in blocks.items():
        local = [ref for ref in block.inputs if ref in blocks]
        indegree[block_id] = len(local)
        for ref in local:
            children.setdefault(ref, []).append(block_id)
    ready = [(b.timestamp, i) for i, b in blocks.items() if indegree[i] == 0]
    heapq.heapify(ready)
    out: list[Block] = []
    while ready:
        _, block_id = heapq.heappop(ready)
        out.append(blocks[block_id])
        for child in children.get(block_id, ()):
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, (blocks[child].timestamp, child))
    if len(out) != len(blocks):
        raise IntegrityError("cycle detected in block references")
    return out


class GraphStore:
    """Content-addressed block graph with per-account tips.

    Blocks that do not extend an account's current tip are still stored and
    recorded in ``forks`` until :meth:`resolve_forks` picks the canonical
    branch. ``packed_cache`` mirrors the key set of ``tx_index``.
    """

    def __init__(self, issuer: Address | None = None, *,
                 pol_config: PoLConfig | None = None,
                 election_config: ElectionConfig | None = None) -> None:
        self.issuer = issuer
        self.pol_config = pol_config or PoLConfig()
        self.election_config = election_config or ElectionConfig()
        self.blocks: dict[Digest, Block] = {}
        self.tips: dict[Address, Digest] = {}
        self.tx_index: dict[Digest, set[Digest]] = {}
        self.packed_cache: set[Digest] = set()
        self.forks: dict[Address, set[Digest]] = {}
        self._children: dict[Digest, list[Digest]] = {}
        self._depth: dict[tuple[Digest, Address], int] = {}
        self._grant_sigs: set[bytes] = set()
        self._dup_txs: set[Digest] = set()
        self._lock = threading.RLock()

    # -- reads ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.blocks)

    def tip_block(self, account: Address) -> Block:
        try:
            return self.blocks[self.tips[account]]
        except KeyError:
            raise UnknownAccount(account.hex()) from None

    def account_state(self, account: Address) -> tuple[Digest, int]:
        tip = self.tip_block(account)
        return tip.id, tip.balance_for(account)

    def balance_of(self, account: Address) -> int:
        return self.account_state(account)[1]

    def accounts(self) -> list[Address]:
        return sorted(self.tips)

    def contains_tx(self, tx_id: Digest) -> bool:
        return tx_id in self.packed_cache

    def scan_contains_tx(self, tx_id: Digest) -> bool:
        """Cache-free lookup: walks every stored block."""
        return tx_id in map(_TX_ID, self.blocks.values())

    def depth(self, block_id: Digest, account: Address) -> int:
        return self._depth[(block_id, account)]

    def account_chain(self, account: Address) -> list[Block]:
        """The account's canonical history, creation block first."""
        out = []
        cursor: Digest | None = self.tips.get(account)
        if cursor is None:
            raise UnknownAccount(account.hex())
        while cursor is not None:
            block = self.blocks[cursor]
            out.append(block)
            cursor = block.parent_for(account)
        out.reverse()
        return out

    def topological_iter(self) -> Iterator[Block]:
        return iter(topological_order(self.blocks))

    def snapshot(self) -> "GraphStore":
        with self._lock:
            snap = GraphStore(self.issuer, pol_config=self.pol_config,
                              election_config=self.election_config)
            snap.blocks = dict(self.blocks)
            snap.tips = dict(self.tips)
            snap.tx_index = {k: set(v) for k, v in self.tx_index.items()}
            snap.packed_cache = set(self.packed_cache)
            snap.forks = {k: set(v) for k, v in self.forks.items()}
            snap._children = {k: list(v) for k, v in self._children.items()}
            snap._depth = dict(self._depth)
            snap._grant_sigs = set(self._grant_sigs)
            snap._dup_txs = set(self._dup_txs)
            return snap

    # -- verification --------------------------------------------------

    def verify_account_history(self, account: Address) -> HistoryReport:
        if account not in self.tips:
            raise UnknownAccount(account.hex())
        return verify_history(self.blocks, self.tips[account], account, self.issuer)

    def verify_all(self) -> list[HistoryReport]:
        """Failing reports over every account; empty means the store is valid."""
        failures = [r for r in (self.verify_account_history(a) for a in self.accounts()) if not r]
        if failures:
            return failures
        on_chain: set[Digest] = set()
        for account in self.accounts():
            cursor: Digest | None = self.tips[account]
            while cursor is not None:
                on_chain.add(cursor)
                cursor = self.blocks[cursor].parent_for(account)
        stray = sorted(set(self.blocks) - on_chain)
        if stray:
            failures.append(HistoryReport(b"", False, stray[0], "block not on any account chain"))
        return failures

    # -- writes --------------------------------------------------------

    def insert_block(self, block: Block) -> bool:
        """Store a structurally valid block whose inputs are already present.

        Returns True when the block extended every touched account's tip, False
        when it opened a fork (recorded for :meth:`resolve_forks`).
        """
        with self._lock:
            block_id = block.id
            if block_id in self.blocks:
                raise IntegrityError(f"block {block_id.hex()} already stored")
            if len(block.inputs) != _INPUT_COUNT[block.kind]:
                raise IntegrityError("wrong number of inputs for block kind")
            if block.kind == BlockKind.TRANSACTION and block.sender == block.receiver:
                raise IntegrityError("transaction between one account")
            for account in block.accounts():
                parent = block.parent_for(account)
                if parent is None:
                    if account in self.tips:
                        raise IntegrityError("account already created")
                    continue
                parent_block = self.blocks.get(parent)
                if parent_block is None:
                    raise IntegrityError(f"unknown parent {parent.hex()}")
                if not parent_block.touches(account):
                    raise IntegrityError("input slot references another account's block")
            if block.kind in (BlockKind.ISSUANCE, BlockKind.REVOCATION):
                if block.signature in self._grant_sigs:
                    raise IntegrityError("grant already applied")
                self._grant_sigs.add(block.signature)

            self.blocks[block_id] = block
            clean = True
            for account in block.accounts():
                parent = block.parent_for(account)
                if parent is None:
                    self._depth[(block_id, account)] = 0
                    self.tips[account] = block_id
                    continue
                self._children.setdefault(parent, []).append(block_id)
                self._depth[(block_id, account)] = self._depth[(parent, account)] + 1
                if self.tips.get(account) == parent:
                    self.tips[account] = block_id
                else:
                    clean = False
                    self.forks.setdefault(account, set()).update((self.tips[account], block_id))
            if block.tx_id:
                holders = self.tx_index.setdefault(block.tx_id, set())
                if holders:
                    self._dup_txs.add(block.tx_id)
                    clean = False
                holders.add(block_id)
                self.packed_cache.add(block.tx_id)
            return clean

    def create_account(self, account: Address, timestamp: int = 0) -> Block:
        if account in self.tips:
            raise IntegrityError("account already exists")
        block = creation_block(account, self.issuer or b"", timestamp)
        self.insert_block(block)
        return block

    def apply_grant(self, grant: Grant, timestamp: int = 0) -> Block:
        try:
            signer = address_of(grant.signer_key)
        except MalformedKey as exc:
            raise UnauthorizedIssuer(str(exc)) from exc
        if self.issuer is None or signer != self.issuer:
            raise UnauthorizedIssuer("grant not signed by the designated issuer")
        if not verify(grant.signer_key, grant.message(), grant.signature):
            raise UnauthorizedIssuer("bad issuer signature")
        with self._lock:
            block = grant_block(grant, self.tip_block(grant.account), self.issuer, timestamp)
            self.insert_block(block)
            return block

    def prepare_transaction(self, request: TransferRequest, leader: Address,
                            timestamp: int) -> Block:
        """Draft block on the current tips; solve its PoL over ``header_bytes``."""
        for account in (request.sender, request.receiver):
            if account not in self.tips:
                raise UnknownAccount(account.hex())
        return transaction_draft(request, self.tip_block(request.sender),
                                 self.tip_block(request.receiver), leader, timestamp)

    def append_transaction(self, request: TransferRequest, leader: LeaderCert,
                           pol: PoLProof, now: int) -> Block:
        if request.sender == request.receiver or request.amount <= 0:
            raise InvalidRequest("a transfer needs two distinct accounts and a positive amount")
        if not request.signature_valid():
            raise InvalidSignature("transfer signature does not verify")
        if not (verify_election(leader, self.election_config) and leader.active_at(now)):
            raise ExpiredLeader(f"leader term not active at {now}")
        with self._lock:
            if self.contains_tx(request.tx_id):
                raise DuplicateTransaction(request.tx_id.hex())
            draft = self.prepare_transaction(request, leader.leader, now)
            if not pol_verify(draft.header_bytes(), pol, self.pol_config):
                raise InvalidPoL("proof of luck does not verify against the block header")
            block = draft.with_pol(pol)
            self.insert_block(block)
            return block

    def pack(self, request: TransferRequest, leader: LeaderCert, now: int) -> Block | None:
        """Solve the luck puzzle and append; None if the leader gives up.

        Holds the lock throughout so the tips the puzzle was solved over are
        still the tips when the block goes in."""
        with self._lock:
            draft = self.prepare_transaction(request, leader.leader, now)
            pol = pol_solve(draft.header_bytes(), self.pol_config)
            if pol is None:
                return None
            return self.append_transaction(request, leader, pol, now)

    # -- fork choice ---------------------------------------------------

    def _parent(self, block_id: Digest, account: Address) -> Digest | None:
        return self.blocks[block_id].parent_for(account)

    def _branch(self, account: Address, loser: Digest, winner: Digest) -> set[Digest]:
        """Blocks on ``loser``'s account chain below its fork point with ``winner``."""
        out = set()
        x, y = loser, winner
        while x is not None and y is not None and self.depth(x, account) > self.depth(y, account):
            out.add(x)
            x = self._parent(x, account)
        while x is not None and y is not None and self.depth(y, account) > self.depth(x, account):
            y = self._parent(y, account)
        while x is not None and y is not None and x != y:
            out.add(x)
            x, y = self._parent(x, account), self._parent(y, account)
        return out

    def _descendants(self, seeds: Iterable[Digest]) -> set[Digest]:
        found = set(seeds)
        queue = deque(found)
        while queue:
            for child in self._children.get(queue.popleft(), ()):
                if child not in found:
                    found.add(child)
                    queue.append(child)
        return found

    def _rank(self, block_id: Digest, account: Address) -> tuple:
        # longest branch first, then fewest retries, then smallest id
        return (-self.depth(block_id, account),) + luck_key(self.blocks[block_id].pol, block_id)

    def resolve_forks(self, competing: Mapping[Address, Iterable[Digest]] | None = None
                      ) -> ForkResolution:
        """Choose one branch per account and drop the rest.

        Without ``competing`` every fork recorded by :meth:`insert_block` is
        resolved. A block survives only if it wins for both of its accounts.
        """
        with self._lock:
            if competing is None:
                competing = self.forks
            contest = {a: {c for c in cands if c in self.blocks and self.blocks[c].touches(a)}
                       for a, cands in competing.items()}
            dup_txs = set(self._dup_txs)
            eliminated: set[Digest] = set()
            while True:
                seeds = set(eliminated)
                winners: dict[Address, Digest] = {}
                for account in sorted(contest):
                    cands = sorted(contest[account] - eliminated)
                    if not cands:
                        continue
                    winner = min(cands, key=lambda c: self._rank(c, account))
                    winners[account] = winner
                    for cand in cands:
                        if cand != winner:
                            seeds |= self._branch(account, cand, winner)
                orphans = self._descendants(seeds)
                extra = set()
                for tx_id in sorted(dup_txs):
                    live = sorted(b for b in self.tx_index.get(tx_id, ()) if b not in orphans)
                    if len(live) > 1:
                        keep = min(live, key=lambda b: luck_key(self.blocks[b].pol, b))
                        extra.update(b for b in live if b != keep)
                extra |= {w for w in winners.values() if w in orphans}
                if not extra - eliminated:
                    break
                eliminated |= extra

            affected = set(contest)
            for block_id in orphans:
                affected.update(self.blocks[block_id].accounts())
            new_tips: dict[Address, Digest | None] = {}
            for account in sorted(affected):
                cursor = winners.get(account, self.tips.get(account))
                while cursor is not None and cursor in orphans:
                    cursor = self._parent(cursor, account)
                new_tips[account] = cursor

            ordered = [b for i, b in self.blocks.items() if i in orphans]
            for block in ordered:
                self._remove(block)
            for account, tip in new_tips.items():
                if tip is None:
                    self.tips.pop(account, None)
                else:
                    self.tips[account] = tip
            for account in list(contest):
                self.forks.pop(account, None)
            for account in list(self.forks):
                self.forks[account] -= orphans
                if len(self.forks[account]) <= 1:
                    del self.forks[account]
            self._dup_txs = {t for t in self._dup_txs if len(self.tx_index.get(t, ())) > 1}
            requeue = []
            for block in ordered:
                if block.tx_id and block.tx_id not in self.packed_cache and block.tx_id not in requeue:
                    requeue.append(block.tx_id)
            return ForkResolution(ordered, requeue)

    def _remove(self, block: Block) -> None:
        block_id = block.id
        del self.blocks[block_id]
        self._children.pop(block_id, None)
        for account in block.accounts():
            self._depth.pop((block_id, account), None)
            parent = block.parent_for(account)
            if parent is not None and parent in self._children:
                try:
                    self._children[parent].remove(block_id)
                except ValueError:
                    pass
        if block.tx_id:
            holders = self.tx_index.get(block.tx_id)
            if holders is not None:
                holders.discard(block_id)
                if not holders:
                    del self.tx_index[block.tx_id]
                    self.packed_cache.discard(block.tx_id)
        if block.kind in (BlockKind.ISSUANCE, BlockKind.REVOCATION):
            self._grant_sigs.discard(block.signature)

    # -- export / import -----------------------------------------------

    def export_lines(self) -> Iterator[str]:
        for block in self.topological_iter():
            yield block.serialize().hex()

    def export_text(self) -> str:
        return "".join(line + "\n" for line in self.export_lines())

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block], issuer: Address | None = None,
                    **kwargs) -> "GraphStore":
        blocks = list(blocks)
        if issuer is None:
            for block in blocks:
                if block.kind in (BlockKind.ISSUANCE, BlockKind.REVOCATION):
                    issuer = address_of(block.signer_key)
                    break
        store = cls(issuer, **kwargs)
        for block in blocks:
            store.insert_block(block)
        return store

    @classmethod
    def from_lines(cls, lines: Iterable[str], issuer: Address | None = None,
                   **kwargs) -> "GraphStore":
        return cls.from_blocks(parse_lines(lines), issuer, **kwargs)


def parse_lines(lines: Iterable[str]) -> Iterator[Block]:
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield Block.parse(bytes.fromhex(line))
        except ValueError as exc:
            raise DecodeError(f"line {number}: {exc}") from exc


def init_genesis(issuer: Address, initial_grants: Iterable[Grant], *, timestamp: int = 0,
                 pol_config: PoLConfig | None = None,
                 election_config: ElectionConfig | None = None) -> GraphStore:
    """New store with one creation block per granted account, then one
    issuance block per grant. Any badly signed grant aborts the whole call."""
    grants = list(initial_grants)
    store = GraphStore(issuer, pol_config=pol_config, election_config=election_config)
    for grant in grants:
        if grant.account not in store.tips:
            store.create_account(grant.account, timestamp)
    for grant in grants:
        store.apply_grant(grant, timestamp)
    return store

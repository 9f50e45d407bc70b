"""Deterministic multi-leader mining simulator and the two experiments:
throughput against leader count, and on/off availability of a leader team.

Time is a virtual tick counter. A leader's appended block is visible to the
others only ``visibility_delay`` ticks after it is finished, which is how
concurrent leaders end up packing the same transaction or extending the same
account tip; such conflicts are settled by the store's fork choice and the
losing transactions go back to the pool.
"""
from __future__ import annotations

import csv
import heapq
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .consensus import (
    ElectionConfig,
    LeaderCert,
    PoLConfig,
    pol_solve,
    solve_election,
    target_from_bits,
)
from .encoding import u64
from .identity import Address, Keypair, digest, generate_keypair
from .ledger import (
    Block,
    GraphStore,
    Grant,
    TransferRequest,
    init_genesis,
    make_transfer,
    sign_grant,
    transaction_draft,
)
from .mempool import Mempool

TICKS_PER_SECOND = 1000


def default_election_config(ticks_per_second: int = TICKS_PER_SECOND) -> ElectionConfig:
    return ElectionConfig(
        election_interval=600 * ticks_per_second,
        service_duration=3600 * ticks_per_second,
        election_target=target_from_bits(8),
        max_election_iters=1 << 16,
    )


@dataclass(frozen=True)
class CostModel:
    """Virtual-time price of each step a leader performs to pack one transaction."""

    overhead_ticks: int = 200
    hash_ticks: int = 16
    lookup_ticks: int = 4
    scan_ticks_per_block: int = 1

    def mean_pack_ticks(self, pol: PoLConfig) -> float:
        p = pol.pol_target / 2**256
        return self.overhead_ticks + self.lookup_ticks + self.hash_ticks / min(p, 1.0)


@dataclass(frozen=True)
class SimConfig:
    leader_count: int = 1
    backlog: int = 4000
    accounts: int = 1000
    visibility_delay: int | None = None
    rng_seed: int = 0
    election_config: ElectionConfig = field(default_factory=default_election_config)
    pol_config: PoLConfig = field(default_factory=PoLConfig)
    duration_limit: int | None = None
    use_cache: bool = True
    costs: CostModel = field(default_factory=CostModel)
    ticks_per_second: int = TICKS_PER_SECOND
    windows: int = 20
    max_amount: int = 100

    def __post_init__(self) -> None:
        if self.leader_count < 1:
            raise ValueError("leader_count must be at least 1")
        if self.visibility_delay is not None and self.visibility_delay < 0:
            raise ValueError("visibility_delay must be non-negative")
        if self.accounts < 2:
            raise ValueError("need at least two accounts")
        cfg = self.election_config
        if (self.leader_count - 1) * cfg.election_interval >= cfg.service_duration:
            raise ValueError(
                f"{self.leader_count} leaders do not fit in a window of "
                f"{cfg.service_duration // cfg.election_interval} terms")

    @property
    def delay(self) -> int:
        if self.visibility_delay is not None:
            return self.visibility_delay
        return max(1, round(0.01 * self.costs.mean_pack_ticks(self.pol_config)))


@dataclass
class MiningReport:
    leader_count: int
    backlog: int
    processed: int
    pending: int
    duplicates: int
    elapsed_ticks: int
    tps: float
    window_tps: list[float]
    give_ups: int = 0
    contended_picks: int = 0
    drained: bool = True
    ticks_per_second: int = TICKS_PER_SECOND


@dataclass(frozen=True)
class Workload:
    issuer: Keypair
    accounts: tuple[Keypair, ...]
    grants: tuple[Grant, ...]
    requests: tuple[TransferRequest, ...]


def _seeded_key(label: bytes, seed: int, index: int) -> Keypair:
    return generate_keypair(digest(label, u64(seed % 2**64), u64(index)))


@lru_cache(maxsize=8)
def generate_workload(seed: int, accounts: int, backlog: int, max_amount: int = 100) -> Workload:
    """Random transfers among ``accounts`` wallets. Every account is granted
    more than it will ever send, so the backlog is payable in any order."""
    rng = random.Random(seed)
    issuer = _seeded_key(b"issuer", seed, 0)
    keys = tuple(_seeded_key(b"account", seed, i) for i in range(accounts))
    outgoing = [0] * accounts
    nonces = [0] * accounts
    requests = []
    for _ in range(backlog):
        s, r = rng.sample(range(accounts), 2)
        amount = rng.randint(1, max_amount)
        requests.append(make_transfer(keys[s], keys[r].address, amount, nonces[s]))
        nonces[s] += 1
        outgoing[s] += amount
    grants = tuple(sign_grant(issuer, k.address, outgoing[i] + max_amount, nonce=0)
                   for i, k in enumerate(keys))
    return Workload(issuer, keys, grants, tuple(requests))


def workload_for_requests(requests: Sequence[TransferRequest], seed: int = 0) -> Workload:
    """Genesis for an externally supplied backlog: each sender is granted its
    total outgoing amount and every receiver gets an account."""
    issuer = _seeded_key(b"issuer", seed, 0)
    totals: dict[Address, int] = {}
    for req in requests:
        totals[req.sender] = totals.get(req.sender, 0) + req.amount
        totals.setdefault(req.receiver, 0)
    grants = tuple(sign_grant(issuer, a, amount) for a, amount in totals.items())
    return Workload(issuer, (), grants, tuple(requests))


class _Leader:
    def __init__(self, index: int, miner: Keypair, cert: LeaderCert) -> None:
        self.index = index
        self.miner = miner
        self.address = miner.address
        self.cert = cert
        self.unpublished: dict[bytes, Block] = {}
        self.view_tips: dict[Address, Block] = {}
        self.unpublished_txs: set[bytes] = set()
        self.busy_accounts: Counter[Address] = Counter()
        self.idle = False


_PUBLISH, _FREE = 0, 1


class MiningSimulation:
    """One mining run. With ``check_invariants`` the pool/store bookkeeping is
    asserted after every event (slow; meant for tests)."""

    def __init__(self, config: SimConfig, workload: Workload | None = None,
                 check_invariants: bool = False) -> None:
        self.config = config
        self.check_invariants = check_invariants
        if workload is None:
            workload = generate_workload(config.rng_seed, config.accounts, config.backlog,
                                         config.max_amount)
        self.workload = workload
        ecfg = config.election_config
        self.start = (config.leader_count - 1) * ecfg.election_interval
        self.store = init_genesis(workload.issuer.address, workload.grants, timestamp=0,
                                  pol_config=config.pol_config, election_config=ecfg)
        self.pool = Mempool()
        for request in workload.requests:
            self.pool.submit(request)
        self.backlog = len(self.pool)
        self.leaders = []
        for i in range(config.leader_count):
            miner = _seeded_key(b"miner", config.rng_seed, i)
            cert = solve_election(miner.address, i, ecfg)
            if cert is None:
                raise RuntimeError(f"miner {i} could not solve election epoch {i}")
            self.leaders.append(_Leader(i, miner, cert))
        self.duplicates = 0
        self.give_ups = 0
        self.contended_picks = 0
        self.timeline: list[tuple[int, int]] = [(0, 0)]
        self._events: list[tuple[int, int, int, object]] = []
        self._seq = 0
        self.now = self.start

    def _schedule(self, time: int, kind: int, payload: object) -> None:
        self._seq += 1
        heapq.heappush(self._events, (time, kind, self._seq, payload))

    # -- leader behaviour -----------------------------------------------

    def _view_tip(self, leader: _Leader, account: Address) -> Block:
        return leader.view_tips.get(account) or self.store.tip_block(account)

    def _lookup_cost(self, tx_id: bytes) -> int:
        costs = self.config.costs
        if self.config.use_cache:
            self.store.contains_tx(tx_id)
            return costs.lookup_ticks
        self.store.scan_contains_tx(tx_id)
        return costs.scan_ticks_per_block * len(self.store)

    def _candidates(self, leader: _Leader) -> Iterable[TransferRequest]:
        limit = len(leader.unpublished_txs) + 4
        batch = self.pool.pending_for_leader(leader.address, limit)
        yield from batch
        if len(batch) == limit:
            yield from self.pool.pending_for_leader(leader.address)[limit:]

    def _leader_free(self, leader: _Leader, now: int) -> None:
        cfg = self.config
        ecfg = cfg.election_config
        if not leader.cert.active_at(now):
            epoch = now // ecfg.election_interval
            cert = solve_election(leader.address, epoch, ecfg)
            if cert is None:
                self._schedule((epoch + 1) * ecfg.election_interval, _FREE, leader)
                return
            leader.cert = cert
            self._schedule(now + (cert.nonce + 1) * cfg.costs.hash_ticks, _FREE, leader)
            return

        for request in self._candidates(leader):
            if request.tx_id in leader.unpublished_txs:
                continue
            sender_tip = self._view_tip(leader, request.sender)
            if sender_tip.balance_for(request.sender) < request.amount:
                continue
            break
        else:
            leader.idle = True
            return

        accounts = (request.sender, request.receiver)
        if any(other.busy_accounts[a] for other in self.leaders if other is not leader
               for a in accounts):
            self.contended_picks += 1
        lookup = self._lookup_cost(request.tx_id)
        draft = transaction_draft(request, sender_tip, self._view_tip(leader, request.receiver),
                                  leader.address, now)
        pol = pol_solve(draft.header_bytes(), cfg.pol_config)
        attempts = pol.retries + 1 if pol is not None else cfg.pol_config.max_retries
        done = now + cfg.costs.overhead_ticks + lookup + attempts * cfg.costs.hash_ticks
        if pol is None:
            self.give_ups += 1
        else:
            block = draft.with_pol(pol)
            leader.unpublished[block.id] = block
            leader.unpublished_txs.add(block.tx_id)
            for account in block.accounts():
                leader.view_tips[account] = block
                leader.busy_accounts[account] += 1
            self._schedule(done + cfg.delay, _PUBLISH, (leader, block))
        self._schedule(done, _FREE, leader)

    def _publish(self, leader: _Leader, block: Block, now: int) -> None:
        block_id = block.id
        del leader.unpublished[block_id]
        if not any(b.tx_id == block.tx_id for b in leader.unpublished.values()):
            leader.unpublished_txs.discard(block.tx_id)
        for account in block.accounts():
            leader.busy_accounts[account] -= 1
            if leader.view_tips.get(account) is block:
                del leader.view_tips[account]

        if any(ref not in self.store.blocks for ref in block.inputs):
            # built on a block that has since lost a fork
            self.duplicates += 1
        else:
            clean = self.store.insert_block(block)
            if not clean:
                resolution = self.store.resolve_forks()
                self.duplicates += len(resolution.orphans)
                for tx_id in resolution.requeue:
                    if tx_id in self.pool.packed:
                        self.pool.mark_packed(tx_id, canonical=False)
            if block_id in self.store.blocks and block.tx_id in self.pool.pending:
                self.pool.mark_packed(block.tx_id, canonical=True)
        self.timeline.append((now - self.start, len(self.pool.packed)))

        for other in self.leaders:
            if other.idle:
                other.idle = False
                self._schedule(now, _FREE, other)

    def _finished(self) -> bool:
        return not self.pool.pending and not any(l.unpublished for l in self.leaders)

    # -- driver ----------------------------------------------------------

    def run(self) -> MiningReport:
        cfg = self.config
        for leader in self.leaders:
            self._schedule(self.start, _FREE, leader)
        end = self.start
        drained = self._finished()
        while self._events and not drained:
            time, kind, _, payload = heapq.heappop(self._events)
            if cfg.duration_limit is not None and time - self.start > cfg.duration_limit:
                end = self.start + cfg.duration_limit
                break
            self.now = end = time
            if kind == _PUBLISH:
                leader, block = payload
                self._publish(leader, block, time)
            else:
                self._leader_free(payload, time)
            drained = self._finished()
            if self.check_invariants:
                self._assert_invariants()
        return self._report(end - self.start, drained)

    def _assert_invariants(self) -> None:
        pool, store = self.pool, self.store
        assert len(pool.packed) + len(pool.pending) == self.backlog
        assert pool.packed.isdisjoint(pool.pending)
        assert pool.packed == store.packed_cache
        assert not store.forks
        assert all(len(holders) == 1 for holders in store.tx_index.values())

    def _report(self, elapsed: int, drained: bool) -> MiningReport:
        cfg = self.config
        processed = len(self.pool.packed)
        seconds = elapsed / cfg.ticks_per_second
        return MiningReport(
            leader_count=cfg.leader_count,
            backlog=self.backlog,
            processed=processed,
            pending=len(self.pool.pending),
            duplicates=self.duplicates,
            elapsed_ticks=elapsed,
            tps=processed / seconds if seconds > 0 else 0.0,
            window_tps=window_series(self.timeline, elapsed, cfg.windows, cfg.ticks_per_second),
            give_ups=self.give_ups,
            contended_picks=self.contended_picks,
            drained=drained,
            ticks_per_second=cfg.ticks_per_second,
        )


def window_series(timeline: Sequence[tuple[int, int]], elapsed: int, windows: int,
                  ticks_per_second: int = TICKS_PER_SECOND) -> list[float]:
    """Throughput in each of ``windows`` equal slices of ``[0, elapsed]``,
    from a non-decreasing-time list of (tick, cumulative processed)."""
    if elapsed <= 0 or windows <= 0:
        return []
    times = [t for t, _ in timeline]
    counts = [c for _, c in timeline]
    width = elapsed / windows

    def processed_at(t: float) -> int:
        i = int(np.searchsorted(times, t, side="right")) - 1
        return counts[i] if i >= 0 else 0

    edges = [processed_at(k * width) for k in range(windows + 1)]
    seconds = width / ticks_per_second
    return [(edges[k + 1] - edges[k]) / seconds for k in range(windows)]


def run_mining(config: SimConfig, workload: Workload | None = None,
               check_invariants: bool = False) -> tuple[MiningReport, GraphStore]:
    sim = MiningSimulation(config, workload, check_invariants)
    report = sim.run()
    return report, sim.store


def run_tps_benchmark(leader_counts: Iterable[int], base: SimConfig) -> list[tuple[int, MiningReport]]:
    """One mining run per leader count over the same seeded backlog."""
    return [(m, run_mining(replace(base, leader_count=m))[0]) for m in leader_counts]


TPS_HEADER = ["m", "processed", "duplicates", "elapsed_ticks", "tps"]


def write_tps_csv(path, rows: Iterable[tuple[int, MiningReport]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TPS_HEADER)
        for m, rep in rows:
            writer.writerow([m, rep.processed, rep.duplicates, rep.elapsed_ticks, f"{rep.tps:.6f}"])


# -- availability -------------------------------------------------------------

ONLINE, OFFLINE = True, False


@dataclass(frozen=True)
class GilbertParams:
    p: float
    q: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError("p and q must lie in [0, 1]")


@dataclass
class AvailabilityReport:
    m: int
    params: GilbertParams
    steps: int
    jam_steps: int
    jam_fraction: float
    online_fraction: list[float]


def gilbert_step(online: bool, params: GilbertParams, draw: float) -> bool:
    """One step of the two-state chain; p is the online->offline probability,
    q the offline->online probability."""
    if online:
        return not draw < params.p
    return draw < params.q


def _chain_states(draws: np.ndarray, params: GilbertParams) -> np.ndarray:
    """States after each step for one chain started online; identical to
    folding :func:`gilbert_step` over ``draws``.

    A draw below min(p, q) flips either state, one in [min, max) forces the
    state toward the more likely side, and anything larger keeps it, so the
    state is the forced value (or the start) XOR the parity of flips since.
    """
    lo, hi = min(params.p, params.q), max(params.p, params.q)
    flip = draws < lo
    force = (draws >= lo) & (draws < hi)
    forced_state = params.q > params.p
    idx = np.arange(len(draws))
    last_force = np.maximum.accumulate(np.where(force, idx, -1))
    flips = np.cumsum(flip)
    flips_since = flips - np.where(last_force >= 0, flips[np.maximum(last_force, 0)], 0)
    base = np.where(last_force >= 0, forced_state, ONLINE)
    return base ^ (flips_since & 1).astype(bool)


def run_availability(m: int, params: GilbertParams, steps: int, seed: int) -> AvailabilityReport:
    if m < 1 or steps < 1:
        raise ValueError("need m >= 1 and steps >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.random((steps, m))
    online_count = np.zeros(steps, dtype=np.int32)
    fractions = []
    for j in range(m):
        states = _chain_states(np.ascontiguousarray(draws[:, j]), params)
        online_count += states
        fractions.append(float(states.mean()))
    jam_steps = int(np.count_nonzero(online_count == 0))
    return AvailabilityReport(m, params, steps, jam_steps, jam_steps / steps, fractions)


def analytic_jam_probability(m: int, params: GilbertParams) -> float:
    """Stationary probability that all ``m`` independent chains are offline."""
    if params.p + params.q == 0:
        raise ValueError("p + q = 0: the chain has no stationary distribution")
    return (params.p / (params.p + params.q)) ** m


AVAILABILITY_HEADER = ["m", "p", "q", "steps", "jam_steps", "jam_fraction", "analytic"]


def write_availability_csv(path, reports: Iterable[AvailabilityReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AVAILABILITY_HEADER)
        for rep in reports:
            writer.writerow([rep.m, repr(rep.params.p), repr(rep.params.q), rep.steps, rep.jam_steps,
                             f"{rep.jam_fraction:.9g}",
                             f"{analytic_jam_probability(rep.m, rep.params):.9g}"])

"""Leader election by proof of work, the sliding leader window, and the
bounded-retry Proof-of-Luck puzzle attached to every appended block."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .encoding import u64
from .identity import Address, digest

MAX_TARGET = 2**256 - 1

MINUTE = 60


def target_from_bits(bits: int) -> int:
    """Convert a leading-zero-bits difficulty into a 256-bit threshold.

    A hash passes when ``int(hash) < target``; 0 bits means every hash passes.
    """
    if not 0 <= bits <= 256:
        raise ValueError(f"difficulty bits out of range: {bits}")
    return 2 ** (256 - bits) if bits else MAX_TARGET + 1


def _hash_int(*parts: bytes) -> int:
    return int.from_bytes(digest(*parts), "big")


@dataclass(frozen=True)
class ElectionConfig:
    election_interval: int = 10 * MINUTE
    service_duration: int = 60 * MINUTE
    election_target: int = target_from_bits(12)
    max_election_iters: int = 1 << 20

    @property
    def window_size(self) -> int:
        return -(-self.service_duration // self.election_interval)


@dataclass(frozen=True)
class LeaderCert:
    leader: Address
    epoch: int
    nonce: int
    term_start: int
    term_end: int

    def active_at(self, now: int) -> bool:
        return self.term_start <= now < self.term_end


@dataclass(frozen=True)
class PoLConfig:
    pol_target: int = target_from_bits(4)
    max_retries: int = 1024


@dataclass(frozen=True, order=True)
class PoLProof:
    nonce: int
    retries: int


def election_hash(leader: Address, epoch: int, nonce: int) -> int:
    return _hash_int(leader, u64(epoch), u64(nonce))


def solve_election(miner: Address, epoch: int, config: ElectionConfig) -> LeaderCert | None:
    """Search nonces 0, 1, ... for the epoch's puzzle; None when the cap is hit."""
    for nonce in range(config.max_election_iters):
        if election_hash(miner, epoch, nonce) < config.election_target:
            start = epoch * config.election_interval
            return LeaderCert(miner, epoch, nonce, start, start + config.service_duration)
    return None


def verify_election(cert: LeaderCert, config: ElectionConfig) -> bool:
    if cert.nonce < 0 or cert.epoch < 0:
        return False
    if cert.term_end - cert.term_start != config.service_duration:
        return False
    return election_hash(cert.leader, cert.epoch, cert.nonce) < config.election_target


def active_leaders(certs: Iterable[LeaderCert], now: int) -> set[Address]:
    return {c.leader for c in certs if c.active_at(now)}


def pol_hash(header: bytes, nonce: int) -> int:
    return _hash_int(header, u64(nonce))


def pol_solve(header: bytes, config: PoLConfig) -> PoLProof | None:
    """Enumerate nonces in order; the first success carries its index as the
    retry count. Returns None (give up) after ``max_retries`` failures."""
    for nonce in range(config.max_retries):
        if pol_hash(header, nonce) < config.pol_target:
            return PoLProof(nonce=nonce, retries=nonce)
    return None


def pol_verify(header: bytes, proof: PoLProof, config: PoLConfig) -> bool:
    if proof.retries != proof.nonce or not 0 <= proof.retries < config.max_retries:
        return False
    if pol_hash(header, proof.nonce) >= config.pol_target:
        return False
    # the claimed retry count is honest only if every earlier nonce fails
    return all(pol_hash(header, n) >= config.pol_target for n in range(proof.nonce))


def luck_key(proof: PoLProof, block_id: bytes) -> tuple[int, bytes]:
    return (proof.retries, block_id)


def luckier(a: tuple[PoLProof, bytes], b: tuple[PoLProof, bytes]) -> tuple[PoLProof, bytes]:
    """Fewer retries wins; equal retries fall back to the smaller block id."""
    return a if luck_key(*a) <= luck_key(*b) else b

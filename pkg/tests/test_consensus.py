import random
import statistics
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from graphchain.consensus import (
    MAX_TARGET,
    ElectionConfig,
    LeaderCert,
    PoLConfig,
    PoLProof,
    active_leaders,
    luckier,
    pol_hash,
    pol_solve,
    pol_verify,
    solve_election,
    target_from_bits,
    verify_election,
)
from graphchain.identity import generate_keypair

MINER = generate_keypair(bytes([9]) * 32).address


def test_target_from_bits():
    assert target_from_bits(4) == 2**252
    assert target_from_bits(0) > MAX_TARGET
    with pytest.raises(ValueError):
        target_from_bits(257)


def test_max_target_wins_at_nonce_zero():
    cert = solve_election(MINER, 3, ElectionConfig(election_target=MAX_TARGET))
    assert cert.nonce == 0
    assert (cert.term_start, cert.term_end) == (1800, 1800 + 3600)


def test_zero_target_is_not_found():
    assert solve_election(MINER, 0, ElectionConfig(election_target=0, max_election_iters=500)) is None


def test_election_mean_iterations_at_16x_difficulty():
    config = ElectionConfig(election_target=2**252, max_election_iters=10_000)
    rng = random.Random(2024)
    iters = []
    for _ in range(1000):
        cert = solve_election(rng.randbytes(32), 0, config)
        iters.append(cert.nonce + 1)
    assert abs(statistics.fmean(iters) - 16) <= 3


def test_verify_election():
    config = ElectionConfig(election_target=target_from_bits(8))
    cert = solve_election(MINER, 5, config)
    assert verify_election(cert, config)
    assert not verify_election(replace(cert, nonce=cert.nonce + 1), config)
    assert not verify_election(replace(cert, term_end=cert.term_end + 1), config)
    assert not verify_election(replace(cert, epoch=6), config)


def _cert(epoch, config=ElectionConfig()):
    start = epoch * config.election_interval
    return LeaderCert(bytes([epoch]) * 32, epoch, 0, start, start + config.service_duration)


def test_six_leaders_in_the_window():
    certs = [_cert(e) for e in range(12)]
    active = active_leaders(certs, 65 * 60)
    assert active == {bytes([e]) * 32 for e in range(1, 7)}
    assert ElectionConfig().window_size == 6


def test_no_leaders_before_first_term():
    assert active_leaders([_cert(1), _cert(2)], 599) == set()


def test_term_end_is_exclusive():
    cert = _cert(0)
    assert cert.active_at(cert.term_end - 1)
    assert active_leaders([cert], cert.term_end) == set()


def test_pol_max_target():
    assert pol_solve(b"header", PoLConfig(pol_target=MAX_TARGET + 1)) == PoLProof(0, 0)


def test_pol_zero_target_gives_up():
    assert pol_solve(b"header", PoLConfig(pol_target=0, max_retries=100)) is None


def test_pol_half_target_statistics():
    config = PoLConfig(pol_target=2**255, max_retries=64)
    rng = random.Random(5)
    retries = []
    for _ in range(10_000):
        proof = pol_solve(rng.randbytes(40), config)
        assert proof is not None
        retries.append(proof.retries)
    assert abs(statistics.fmean(retries) - 1) <= 0.1


def test_pol_round_trip_and_honesty():
    config = PoLConfig()
    header = next(h for h in (bytes([i]) * 8 for i in range(256))
                  if pol_solve(h, config).retries >= 1)
    proof = pol_solve(header, config)
    assert pol_verify(header, proof, config)
    # pretend a later lucky nonce was the first one
    later = next(n for n in range(proof.nonce + 1, 10_000) if pol_hash(header, n) < config.pol_target)
    assert not pol_verify(header, PoLProof(later, later), config)
    assert not pol_verify(header, PoLProof(later, proof.retries), config)


def test_pol_retries_at_cap_rejected():
    config = PoLConfig(pol_target=MAX_TARGET + 1, max_retries=4)
    assert not pol_verify(b"h", PoLProof(4, 4), config)


def test_luckier_examples():
    a = (PoLProof(3, 3), b"\x0b" * 32)
    b = (PoLProof(7, 7), b"\x0a" * 32)
    assert luckier(a, b) is a
    c = (PoLProof(5, 5), b"\x0a" + b"\x00" * 31)
    d = (PoLProof(5, 5), b"\x0b" + b"\x00" * 31)
    assert luckier(c, d) is c and luckier(d, c) is c
    assert luckier(a, a) is a


proofs = st.tuples(st.integers(0, 50).map(lambda r: PoLProof(r, r)), st.binary(min_size=4, max_size=4))


@given(proofs, proofs, proofs)
def test_luckier_is_a_total_order(a, b, c):
    assert luckier(a, b) == luckier(b, a) or a[0].retries == b[0].retries and a[1] == b[1]
    assert luckier(a, b) in (a, b)
    assert luckier(luckier(a, b), c) == luckier(a, luckier(b, c))

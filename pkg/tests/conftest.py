import pytest

from graphchain.consensus import ElectionConfig, PoLConfig, solve_election, target_from_bits
from graphchain.identity import generate_keypair
from graphchain.ledger import init_genesis, sign_grant

EASY_ELECTION = ElectionConfig(election_interval=600, service_duration=3600,
                               election_target=target_from_bits(4), max_election_iters=4096)


def seed(n: int) -> bytes:
    return bytes([n]) * 32


@pytest.fixture
def issuer():
    return generate_keypair(seed(200))


@pytest.fixture
def wallets():
    return [generate_keypair(seed(i)) for i in range(1, 9)]


@pytest.fixture
def cert():
    return solve_election(generate_keypair(seed(100)).address, 0, EASY_ELECTION)


@pytest.fixture
def funded(issuer, wallets):
    """Store with wallet 0 holding 100 and wallets 1..7 holding 1000 each."""
    grants = [sign_grant(issuer, wallets[0].address, 100)]
    grants += [sign_grant(issuer, w.address, 1000) for w in wallets[1:]]
    return init_genesis(issuer.address, grants, pol_config=PoLConfig(),
                        election_config=EASY_ELECTION)


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in helpers.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

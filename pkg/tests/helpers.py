"""Builders and checkers shared by the unit and acceptance tests."""
from collections import Counter

from graphchain.consensus import PoLConfig, PoLProof
from graphchain.identity import generate_keypair
from graphchain.ledger import (
    BlockKind,
    GraphStore,
    init_genesis,
    make_transfer,
    sign_grant,
    topological_order,
    transaction_draft,
)

ISSUER = generate_keypair(bytes([200]) * 32)
ALICE = generate_keypair(bytes([1]) * 32)
BOB = generate_keypair(bytes([2]) * 32)
CAROL = generate_keypair(bytes([3]) * 32)
LEADER_X = generate_keypair(bytes([101]) * 32).address
LEADER_Y = generate_keypair(bytes([102]) * 32).address


def forkable_store() -> GraphStore:
    grants = [sign_grant(ISSUER, k.address, 1000) for k in (ALICE, BOB, CAROL)]
    return init_genesis(ISSUER.address, grants, pol_config=PoLConfig())


def extend(store, sender, receiver, nonce, sender_tip, receiver_tip, retries=0, leader=LEADER_X,
           timestamp=1):
    """Insert a transfer built on explicit tips, bypassing tip checks so forks can form."""
    request = make_transfer(sender, receiver.address, 1, nonce)
    block = transaction_draft(request, store.blocks[sender_tip], store.blocks[receiver_tip],
                              leader, timestamp).with_pol(PoLProof(retries, retries))
    store.insert_block(block)
    return block


def two_branches(len_x, len_y, retries_x, retries_y):
    """Two competing branches of ALICE's chain: X pays BOB, Y pays CAROL.

    Returns (store, x_blocks, y_blocks); retries apply to each branch tip.
    """
    store = forkable_store()
    base = store.tips[ALICE.address]
    branches = []
    for length, retries, (receiver, leader, offset) in (
            (len_x, retries_x, (BOB, LEADER_X, 0)), (len_y, retries_y, (CAROL, LEADER_Y, 1000))):
        sender_tip, receiver_tip = base, store.tips[receiver.address]
        blocks = []
        for i in range(length):
            block = extend(store, ALICE, receiver, offset + i, sender_tip, receiver_tip,
                           retries=retries if i == length - 1 else 0, leader=leader)
            sender_tip = receiver_tip = block.id
            blocks.append(block)
        branches.append(blocks)
    return store, branches[0], branches[1]


# (name, len_x, len_y, retries_x, retries_y, expected winner: "x", "y" or "smaller-id")
FORK_TABLE = [
    ("length-dominant", 3, 2, 9, 0, "x"),
    ("length-dominant-reversed", 1, 4, 0, 50, "y"),
    ("length-beats-luck", 2, 1, 1000, 0, "x"),
    ("retry-dominant", 2, 2, 3, 7, "x"),
    ("retry-dominant-reversed", 2, 2, 7, 3, "y"),
    ("retry-single-block", 1, 1, 4, 0, "y"),
    ("id-tie", 2, 2, 5, 5, "smaller-id"),
    ("id-tie-single-block", 1, 1, 0, 0, "smaller-id"),
]


def check_fork_case(len_x, len_y, retries_x, retries_y, expected):
    """Run one fork-table row; returns a list of problems (empty = conformant)."""
    store, xs, ys = two_branches(len_x, len_y, retries_x, retries_y)
    if expected == "smaller-id":
        expected = "x" if xs[-1].id < ys[-1].id else "y"
    winners, losers = (xs, ys) if expected == "x" else (ys, xs)
    result = store.resolve_forks()
    problems = []
    if store.tips[ALICE.address] != winners[-1].id:
        problems.append("wrong tip for the forked account")
    if {b.id for b in result.orphans} != {b.id for b in losers}:
        problems.append("orphan set differs from the losing branch")
    if set(result.requeue) != {b.tx_id for b in losers}:
        problems.append("requeued transactions differ from the losing branch")
    if store.forks:
        problems.append("forks left after resolution")
    if store.verify_all():
        problems.append("store invalid after resolution")
    return problems


def ledger_violations(store, report=None):
    """Every invariant violation in a resolved store (empty list = clean)."""
    out = []
    try:
        order = topological_order(store.blocks)
        if len(order) != len(store.blocks):
            out.append("topological order misses blocks")
    except Exception as exc:  # cycle
        out.append(f"acyclicity: {exc}")
    for block in store.blocks.values():
        if min(block.amount, block.sender_balance_after, block.receiver_balance_after) < 0:
            out.append(f"negative value in {block.id.hex()}")
        if block.kind == BlockKind.TRANSACTION:
            s_before = store.blocks[block.inputs[0]].balance_for(block.sender)
            r_before = store.blocks[block.inputs[1]].balance_for(block.receiver)
            if (s_before - block.amount != block.sender_balance_after
                    or r_before + block.amount != block.receiver_balance_after):
                out.append(f"conservation broken at {block.id.hex()}")
    counts = Counter(b.tx_id for b in store.blocks.values() if b.tx_id)
    out += [f"tx {t.hex()} packed {n} times" for t, n in counts.items() if n != 1]
    if set(counts) != set(store.tx_index) or any(len(h) != 1 for h in store.tx_index.values()):
        out.append("tx_index disagrees with stored blocks")
    if store.forks:
        out.append("unresolved forks")
    # every account history, plus no block stranded off all account chains
    out += [f"history of {r.account.hex()}: {r.reason}" for r in store.verify_all()]
    if report is not None:
        if report.processed != len(counts) or report.processed + report.pending != report.backlog:
            out.append("report counts disagree with the store")
    return out


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []

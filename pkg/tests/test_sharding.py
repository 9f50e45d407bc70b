from dataclasses import replace

import pytest

from graphchain.ledger import BlockKind, GraphStore
from graphchain.sharding import (
    HEX_DIGITS,
    CorruptShard,
    ShardConfig,
    UnresolvedForks,
    export_shards,
    merge_shards,
    read_shard,
    shard_of,
    verify_shard,
    write_shard,
)
from graphchain.simulation import SimConfig, run_mining

import helpers

AB = ShardConfig({d: 0 if d in "ab" else 1 for d in HEX_DIGITS})


@pytest.fixture(scope="module")
def mined():
    _, store = run_mining(SimConfig(leader_count=3, accounts=40, backlog=200, rng_seed=12))
    return store


def test_prefix_assignment():
    assert shard_of(bytes.fromhex("ab3f" + "00" * 30), AB) == 0
    assert shard_of(bytes.fromhex("c0" + "00" * 31), AB) == 1
    single = ShardConfig.by_count(1)
    assert {shard_of(bytes([i]) * 32, single) for i in range(256)} == {0}
    assert shard_of(bytes.fromhex("a1" + "00" * 31), AB) == shard_of(bytes.fromhex("a9" + "ff" * 31), AB)


def test_config_validation():
    with pytest.raises(ValueError):
        ShardConfig({"a": 0})
    with pytest.raises(ValueError):
        ShardConfig({d: 2 * (d == "a") for d in HEX_DIGITS})  # shard 1 unused
    assert ShardConfig.by_count(16).prefix_width == 1
    assert ShardConfig.by_count(17).prefix_width == 2


def test_single_shard_is_whole_store(mined):
    (shard,) = export_shards(mined, ShardConfig.by_count(1))
    assert shard.blocks == mined.blocks and shard.tips == mined.tips
    assert shard.boundary_refs == set()


def test_cross_shard_block_in_both(mined):
    shards = export_shards(mined, AB)
    crossing = [b for b in mined.blocks.values() if b.kind == BlockKind.TRANSACTION
                and shard_of(b.sender, AB) != shard_of(b.receiver, AB)]
    assert crossing
    for block in crossing:
        assert all(block.id in s.blocks for s in shards)


@pytest.mark.parametrize("count", [1, 2, 4, 16])
def test_union_is_full_block_set(mined, count):
    shards = export_shards(mined, ShardConfig.by_count(count))
    assert set().union(*(s.blocks for s in shards)) == set(mined.blocks)
    assert all(verify_shard(s) for s in shards)
    assert merge_shards(shards).export_text() == mined.export_text()


def test_refuses_unresolved_forks():
    store, _, _ = helpers.two_branches(2, 1, 0, 0)
    with pytest.raises(UnresolvedForks):
        export_shards(store, AB)


def test_deleted_block_is_incomplete(mined):
    shard = export_shards(mined, AB)[0]
    account = shard.local_accounts()[0]
    tip = shard.blocks[shard.tips[account]]
    gap = tip.parent_for(account)
    del shard.blocks[gap]
    report = verify_shard(shard, [account])
    assert not report.ok and report.incomplete
    assert report.failures[0].block_id == gap


def test_tampered_block_is_corruption(mined):
    shards = export_shards(mined, AB)
    block_id, block = next(iter(shards[1].blocks.items()))
    shards[1].blocks[block_id] = replace(block, timestamp=block.timestamp + 1)
    with pytest.raises(CorruptShard):
        merge_shards(shards)


def test_conflicting_tips(mined):
    shards = export_shards(mined, AB)
    account = shards[0].local_accounts()[0]
    shards[1].tips[account] = next(iter(shards[1].blocks))
    with pytest.raises(CorruptShard):
        merge_shards(shards)


def test_shard_file_round_trip(mined, tmp_path):
    for shard in export_shards(mined, ShardConfig.by_count(4)):
        path = tmp_path / f"shard{shard.shard_id}.txt"
        write_shard(path, shard)
        back = read_shard(path)
        assert (back.blocks, back.tips, back.boundary_refs, back.issuer) == (
            shard.blocks, shard.tips, shard.boundary_refs, shard.issuer)
        assert back.config == shard.config


def test_two_era_merge():
    store = helpers.forkable_store()
    helpers.extend(store, helpers.ALICE, helpers.BOB, 0, store.tips[helpers.ALICE.address],
                   store.tips[helpers.BOB.address])
    shards = export_shards(store, ShardConfig.by_count(2))
    assert merge_shards(shards).export_text() == store.export_text()
    assert GraphStore.from_lines(store.export_text().splitlines()).tips == store.tips

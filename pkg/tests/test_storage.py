from graphchain.storage import FileStorage, MemoryStorage, load_store, read_graph, save_store, write_graph
from graphchain.simulation import SimConfig, run_mining


def _store():
    return run_mining(SimConfig(leader_count=2, accounts=10, backlog=40, rng_seed=1))[1]


def test_memory_backend_round_trip():
    store, backend = _store(), MemoryStorage()
    save_store(store, backend)
    assert len(backend) == len(store)
    assert load_store(backend).export_text() == store.export_text()


def test_file_backend_round_trip(tmp_path):
    store, backend = _store(), FileStorage(tmp_path / "blocks.log")
    assert list(backend.blocks()) == []
    save_store(store, backend)
    again = load_store(backend)
    assert again.export_text() == store.export_text() and again.issuer == store.issuer


def test_graph_file(tmp_path):
    store = _store()
    write_graph(tmp_path / "g.txt", store)
    assert read_graph(tmp_path / "g.txt").export_text() == store.export_text()

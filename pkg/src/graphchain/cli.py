"""Command-line entry point: wallets, transfers, elections, mining runs,
benchmarks, verification and sharding. Non-interactive; every failure ends
with one ``graphchain: error: <class>: <detail>`` line on stderr."""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace

from .config import ConfigError, build_sim_config, load_config
from .consensus import solve_election
from .encoding import DecodeError
from .identity import KEY_SIZE, Keypair, MalformedKey, from_hex, generate_keypair
from .ledger import LedgerError, make_transfer
from .mempool import read_requests, write_requests
from .sharding import ShardConfig, export_shards, read_shard, verify_shard, write_shard
from .simulation import (
    GilbertParams,
    run_availability,
    run_mining,
    run_tps_benchmark,
    workload_for_requests,
    write_availability_csv,
    write_tps_csv,
)
from .storage import read_graph, write_graph

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_CONFIG = 3
EXIT_MALFORMED_INPUT = 4
EXIT_VERIFICATION_FAILED = 5
EXIT_NOT_FOUND = 6


class CommandError(Exception):
    def __init__(self, name: str, code: int, detail: str) -> None:
        super().__init__(detail)
        self.name = name
        self.code = code


def _malformed(detail: str) -> CommandError:
    return CommandError("malformed-input-file", EXIT_MALFORMED_INPUT, detail)


def read_keypair(path) -> Keypair:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line.strip() for line in fh if line.strip()]
        private = from_hex(lines[0], KEY_SIZE)
        keypair = generate_keypair(private)
        if len(lines) > 1 and from_hex(lines[1], KEY_SIZE) != keypair.public_key:
            raise ValueError("public key does not match private key")
        return keypair
    except FileNotFoundError:
        raise _malformed(f"key file not found: {path}") from None
    except (ValueError, IndexError, MalformedKey) as exc:
        raise _malformed(f"bad key file {path}: {exc}") from None


def write_keypair(path, keypair: Keypair) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(keypair.private_key.hex() + "\n" + keypair.public_key.hex() + "\n")


def _requests_or_empty(path):
    if not os.path.exists(path):
        return []
    try:
        return read_requests(path)
    except (ValueError, DecodeError) as exc:
        raise _malformed(f"bad backlog file {path}: {exc}") from None


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _sim_config(args):
    values = {}
    if args.config is not None:
        if not os.path.exists(args.config):
            raise CommandError("missing-config", EXIT_MISSING_CONFIG, f"no such config: {args.config}")
        try:
            values = load_config(args.config)
        except ConfigError as exc:
            raise _malformed(f"{args.config}: {exc}") from None
    overrides = {
        "backlog": getattr(args, "backlog", None),
        "rng_seed": getattr(args, "seed", None),
        "visibility_delay": getattr(args, "delay", None),
        "accounts": getattr(args, "accounts", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_cache", False):
        values["use_cache"] = False
    try:
        return build_sim_config(values)
    except ConfigError as exc:
        raise _malformed(str(exc)) from None


# -- commands ---------------------------------------------------------------

def cmd_wallet_new(args) -> int:
    seed = None
    if args.seed is not None:
        try:
            seed = from_hex(args.seed, KEY_SIZE)
        except ValueError as exc:
            raise CommandError("usage", EXIT_USAGE, f"--seed: {exc}") from None
    keypair = generate_keypair(seed)
    write_keypair(args.out, keypair)
    print(keypair.address.hex())
    return EXIT_OK


def cmd_send(args) -> int:
    keypair = read_keypair(args.key)
    try:
        receiver = from_hex(args.to, 32)
    except ValueError as exc:
        raise CommandError("usage", EXIT_USAGE, f"--to: {exc}") from None
    existing = _requests_or_empty(args.backlog)
    nonce = args.nonce
    if nonce is None:
        nonce = sum(1 for r in existing if r.sender == keypair.address)
    try:
        request = make_transfer(keypair, receiver, args.amount, nonce)
    except LedgerError as exc:
        raise CommandError("usage", EXIT_USAGE, str(exc)) from None
    if any(r.tx_id == request.tx_id for r in existing):
        raise CommandError("duplicate", EXIT_USAGE, "request already in backlog")
    write_requests(args.backlog, [request], append=True)
    print(request.tx_id.hex())
    return EXIT_OK


def cmd_send_auto(args) -> int:
    keys = [read_keypair(path) for path in args.keys]
    if len({k.address for k in keys}) < 2:
        raise CommandError("usage", EXIT_USAGE, "need at least two distinct wallets")
    existing = _requests_or_empty(args.backlog)
    nonces = {k.address: 0 for k in keys}
    for r in existing:
        if r.sender in nonces:
            nonces[r.sender] += 1
    rng = random.Random(args.seed)
    out = []
    for _ in range(args.n):
        sender, receiver = rng.sample(keys, 2)
        out.append(make_transfer(sender, receiver.address, rng.randint(1, args.max_amount),
                                 nonces[sender.address]))
        nonces[sender.address] += 1
    write_requests(args.backlog, out, append=True)
    print(f"appended {len(out)} requests to {args.backlog}")
    return EXIT_OK


def cmd_elect(args) -> int:
    keypair = read_keypair(args.key)
    config = _sim_config(args).election_config
    cert = solve_election(keypair.address, args.epoch, config)
    if cert is None:
        raise CommandError("not-found", EXIT_NOT_FOUND,
                           f"no election nonce below {config.max_election_iters}")
    print(json.dumps({"leader": cert.leader.hex(), "epoch": cert.epoch, "nonce": cert.nonce,
                      "term_start": cert.term_start, "term_end": cert.term_end}, sort_keys=True))
    return EXIT_OK


def _print_report(report) -> None:
    print(f"leaders={report.leader_count} processed={report.processed} pending={report.pending} "
          f"duplicates={report.duplicates} elapsed_ticks={report.elapsed_ticks} "
          f"tps={report.tps:.6f} drained={str(report.drained).lower()}")


def cmd_leader_run(args) -> int:
    config = replace(_sim_config(args), leader_count=args.leaders)
    workload = None
    if args.requests:
        if not os.path.exists(args.requests):
            raise _malformed(f"no such backlog file: {args.requests}")
        requests = _requests_or_empty(args.requests)
        workload = workload_for_requests(requests, config.rng_seed)
    report, store = run_mining(config, workload)
    write_graph(args.graph_out, store)
    _print_report(report)
    return EXIT_OK


def cmd_bench_tps(args) -> int:
    base = _sim_config(args)
    rows = run_tps_benchmark(args.leaders, base)
    write_tps_csv(args.out, rows)
    for _, report in rows:
        _print_report(report)
    return EXIT_OK


def cmd_bench_availability(args) -> int:
    try:
        params = GilbertParams(args.p, args.q)
    except ValueError as exc:
        raise CommandError("usage", EXIT_USAGE, str(exc)) from None
    reports = [run_availability(m, params, args.steps, args.seed) for m in args.m]
    write_availability_csv(args.out, reports)
    for rep in reports:
        print(f"m={rep.m} jam_steps={rep.jam_steps} jam_fraction={rep.jam_fraction:.9g}")
    return EXIT_OK


def _load_graph(path):
    if not os.path.exists(path):
        raise _malformed(f"no such graph file: {path}")
    try:
        return read_graph(path)
    except (ValueError, LedgerError) as exc:
        raise _malformed(f"{path}: {exc}") from None


def cmd_verify(args) -> int:
    store = _load_graph(args.graph)
    failures = store.verify_all()
    if failures:
        first = failures[0]
        block = first.block_id.hex() if first.block_id else "-"
        raise CommandError("verification-failed", EXIT_VERIFICATION_FAILED,
                           f"account={first.account.hex()} block={block} reason={first.reason}")
    print(f"ok accounts={len(store.tips)} blocks={len(store)}")
    return EXIT_OK


def cmd_shard_export(args) -> int:
    store = _load_graph(args.graph)
    os.makedirs(args.out_dir, exist_ok=True)
    shards = export_shards(store, ShardConfig.by_count(args.shards))
    for shard in shards:
        path = os.path.join(args.out_dir, f"shard_{shard.shard_id}.txt")
        write_shard(path, shard)
        print(f"{path} blocks={len(shard.blocks)} accounts={len(shard.tips)}")
    return EXIT_OK


def cmd_shard_verify(args) -> int:
    failed = None
    for path in args.shards:
        if not os.path.exists(path):
            raise _malformed(f"no such shard file: {path}")
        try:
            shard = read_shard(path)
        except (ValueError, KeyError, LedgerError) as exc:
            raise _malformed(f"{path}: {exc}") from None
        report = verify_shard(shard)
        print(f"{path} shard={shard.shard_id} ok={str(report.ok).lower()}")
        if not report and failed is None:
            failed = (path, report.failures[0])
    if failed:
        path, first = failed
        raise CommandError("verification-failed", EXIT_VERIFICATION_FAILED,
                           f"{path}: account={first.account.hex()} reason={first.reason}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file with simulation defaults")

    parser = argparse.ArgumentParser(prog="graphchain", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wallet-new", parents=[common], help="create a keypair file")
    p.add_argument("--seed", help="32-byte hex seed for a deterministic key")
    p.add_argument("--out", default="wallet.key")
    p.set_defaults(func=cmd_wallet_new)

    p = sub.add_parser("send", parents=[common], help="sign one transfer into a backlog file")
    p.add_argument("--key", required=True)
    p.add_argument("--to", required=True, help="receiver address (hex)")
    p.add_argument("--amount", type=int, required=True)
    p.add_argument("--nonce", type=int)
    p.add_argument("--backlog", default="backlog.txt")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("send-auto", parents=[common], help="random transfers among wallets")
    p.add_argument("--keys", nargs="+", required=True, help="keypair files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-amount", type=int, default=10)
    p.add_argument("--backlog", default="backlog.txt")
    p.set_defaults(func=cmd_send_auto)

    p = sub.add_parser("elect", parents=[common], help="solve the leader election puzzle")
    p.add_argument("--key", required=True)
    p.add_argument("--epoch", type=int, default=0)
    p.set_defaults(func=cmd_elect)

    p = sub.add_parser("leader-run", parents=[common], help="run the multi-leader mining simulation")
    p.add_argument("--leaders", type=int, default=1)
    p.add_argument("--backlog", type=int)
    p.add_argument("--accounts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--delay", type=int, help="visibility delay in ticks")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--requests", help="signed backlog file to mine instead of a generated one")
    p.add_argument("--graph-out", default="graph.txt")
    p.set_defaults(func=cmd_leader_run)

    p = sub.add_parser("bench-tps", parents=[common], help="throughput for several leader counts")
    p.add_argument("--leaders", type=_int_list, default=[1, 2, 4, 6])
    p.add_argument("--backlog", type=int)
    p.add_argument("--accounts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--out", default="tps_benchmark.csv")
    p.set_defaults(func=cmd_bench_tps)

    p = sub.add_parser("bench-availability", parents=[common], help="on/off leader availability")
    p.add_argument("--m", type=_int_list, default=[1, 5])
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="availability.csv")
    p.set_defaults(func=cmd_bench_availability)

    p = sub.add_parser("verify", parents=[common], help="verify every account history in a graph")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("shard-export", parents=[common], help="split a graph into shard files")
    p.add_argument("--graph", required=True)
    p.add_argument("--shards", type=int, default=2)
    p.add_argument("--out-dir", default="shards")
    p.set_defaults(func=cmd_shard_export)

    p = sub.add_parser("shard-verify", parents=[common], help="verify shard files independently")
    p.add_argument("shards", nargs="+")
    p.set_defaults(func=cmd_shard_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is not None:
            _sim_config(args)
        return args.func(args)
    except CommandError as exc:
        print(f"graphchain: error: {exc.name}: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"graphchain: error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Flat ``key = value`` configuration files for simulation defaults."""
from __future__ import annotations

from dataclasses import replace

from .consensus import PoLConfig, target_from_bits
from .simulation import CostModel, SimConfig, default_election_config


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


KEYS = {
    "leader_count": int,
    "backlog": int,
    "accounts": int,
    "visibility_delay": int,
    "rng_seed": int,
    "duration_limit": int,
    "use_cache": _bool,
    "ticks_per_second": int,
    "windows": int,
    "max_amount": int,
    "election_interval": int,
    "service_duration": int,
    "election_bits": int,
    "max_election_iters": int,
    "pol_bits": int,
    "pol_max_retries": int,
    "overhead_ticks": int,
    "hash_ticks": int,
    "lookup_ticks": int,
    "scan_ticks_per_block": int,
}


def parse_config(text: str) -> dict[str, object]:
    values: dict[str, object] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {number}: unknown key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {number}: {exc}") from exc
    return values


def load_config(path) -> dict[str, object]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_sim_config(values: dict[str, object]) -> SimConfig:
    """SimConfig from parsed values; unspecified keys keep their defaults."""
    ticks = int(values.get("ticks_per_second", 1000))
    election = default_election_config(ticks)
    election = replace(
        election,
        election_interval=int(values.get("election_interval", election.election_interval)),
        service_duration=int(values.get("service_duration", election.service_duration)),
        max_election_iters=int(values.get("max_election_iters", election.max_election_iters)),
    )
    if "election_bits" in values:
        election = replace(election, election_target=target_from_bits(int(values["election_bits"])))
    pol = PoLConfig()
    if "pol_bits" in values:
        pol = replace(pol, pol_target=target_from_bits(int(values["pol_bits"])))
    if "pol_max_retries" in values:
        pol = replace(pol, max_retries=int(values["pol_max_retries"]))
    costs = CostModel()
    costs = replace(costs, **{k: int(values[k]) for k in
                              ("overhead_ticks", "hash_ticks", "lookup_ticks", "scan_ticks_per_block")
                              if k in values})
    simple = {k: values[k] for k in ("leader_count", "backlog", "accounts", "visibility_delay",
                                     "rng_seed", "duration_limit", "use_cache", "windows",
                                     "max_amount") if k in values}
    try:
        return SimConfig(election_config=election, pol_config=pol, costs=costs,
                         ticks_per_second=ticks, **simple)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

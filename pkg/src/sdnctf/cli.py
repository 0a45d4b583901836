"""Command-line front end.

Subcommands: `run` plays the experiment matrix (or a filtered slice) and
writes results files, `aggregate` summarizes a results CSV, `compare`
reports control-vs-attack deltas, `ttest` compares two winning-turn
samples, `plot-data` emits grouped-bar data, and `replay` re-runs a logged
game.  Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import env
from .agents import Hyperparams
from .harness import ExperimentConfig, run_matrix
from .poison import PoisonConfig
from .reporting import (
    ALGORITHMS,
    aggregate_by_set,
    emit_plot_data,
    format_summary,
    percent_change,
    read_results,
    welch_t_test,
)
from .topology import build_default_topology


class ConfigError(Exception):
    pass


def parse_config_file(path: str) -> dict[str, str]:
    """Flat `key=value` lines; blank lines and #-comments are ignored."""
    values: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _coerce(key: str, value: str, kind):
    try:
        if kind is bool:
            return _BOOL[value.lower()]
        if kind == "int_tuple":
            return tuple(int(x) for x in value.split(",") if x)
        return kind(value)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def build_config(kv: dict[str, str], base_seed: int) -> ExperimentConfig:
    """Assemble an ExperimentConfig from flat dotted keys."""
    top: dict = {}
    reward: dict = {}
    poison: dict = {}
    agent: dict = {}
    schema = {
        "runs_per_set": (top, int),
        "turn_limits": (top, "int_tuple"),
        "carry_weights": (top, bool),
        "workers": (top, int),
        "reward.flag_capture_reward": (reward, float),
        "reward.attacker_eliminated_reward": (reward, float),
        "reward.per_step_cost": (reward, float),
        "reward.invalid_action_penalty": (reward, float),
        "reward.collateral_isolation_penalty": (reward, float),
        "poison.limit": (poison, int),
        "poison.theta": (poison, float),
        "poison.enabled": (poison, bool),
        "agent.hidden": (agent, "int_tuple"),
        "agent.gamma": (agent, float),
        "agent.lr": (agent, float),
        "agent.eps_start": (agent, float),
        "agent.eps_end": (agent, float),
        "agent.eps_fraction": (agent, float),
        "agent.buffer_capacity": (agent, int),
        "agent.batch_size": (agent, int),
        "agent.target_sync": (agent, int),
        "agent.nstep": (agent, int),
        "agent.dnd_capacity": (agent, int),
        "agent.dnd_neighbors": (agent, int),
        "agent.dnd_smoothing": (agent, float),
        "agent.dnd_alpha": (agent, float),
    }
    for key, value in kv.items():
        if key not in schema:
            raise ConfigError(f"unknown config key: {key}")
        bucket, kind = schema[key]
        bucket[key.rpartition(".")[2]] = _coerce(key, value, kind)
    try:
        return ExperimentConfig(
            base_seed=base_seed,
            reward=env.RewardConfig(**reward),
            poison=PoisonConfig(**poison),
            agent=Hyperparams(**agent),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _add_run_parser(sub):
    p = sub.add_parser("run", help="play the experiment matrix and write results")
    p.add_argument("--seed", type=int, required=True, help="base seed (mandatory)")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--game", choices=["1", "2", "both"], default="both")
    p.add_argument("--attack", choices=["on", "off", "both"], default="both")
    p.add_argument("--sets", default="0", help="comma-separated set indices")
    p.add_argument("--runs", type=int, help="override runs per set")
    p.add_argument("--turn-limits", help="override comma-separated turn limits")
    p.add_argument("--limit", type=int, help="override poison flip limit")
    p.add_argument("--workers", type=int, help="parallel runs per set")
    p.add_argument("--carry-weights", action="store_true",
                   help="reuse learned agents across a set's runs")
    p.add_argument("--out", default="results", help="output directory")


def _cmd_run(args) -> int:
    kv = parse_config_file(args.config) if args.config else {}
    if args.runs is not None:
        kv["runs_per_set"] = str(args.runs)
    if args.turn_limits is not None:
        kv["turn_limits"] = args.turn_limits
    if args.limit is not None:
        kv["poison.limit"] = str(args.limit)
    if args.workers is not None:
        kv["workers"] = str(args.workers)
    if args.carry_weights:
        kv["carry_weights"] = "true"
    cfg = build_config(kv, args.seed)

    games = (1, 2) if args.game == "both" else (int(args.game),)
    attacks = {"on": (True,), "off": (False,), "both": (False, True)}[args.attack]
    try:
        sets = tuple(int(s) for s in args.sets.split(",") if s)
    except ValueError as exc:
        raise ConfigError(f"bad --sets value: {args.sets!r}") from exc
    if any(not 0 <= s < len(cfg.turn_limits) for s in sets):
        raise ConfigError(f"--sets indices must be within 0..{len(cfg.turn_limits) - 1}")

    os.makedirs(args.out, exist_ok=True)
    results = run_matrix(cfg, games=games, attacks=attacks, sets=sets, out_dir=args.out)
    for (game, attack), (_, summaries) in sorted(results.items()):
        label = "attack" if attack else "control"
        print(f"game {game} {label}:")
        for summary in summaries:
            limit = cfg.turn_limits[summary.set_index]
            print("  " + format_summary(summary, limit))
    print(f"results written to {args.out}/")
    return 0


def _cmd_aggregate(args) -> int:
    records, _ = read_results(args.results)
    if not records:
        raise ConfigError(f"no records in {args.results}")
    for summary in aggregate_by_set(records):
        print(format_summary(summary))
    return 0


def _cmd_compare(args) -> int:
    control, _ = read_results(args.control)
    attack, _ = read_results(args.attack)
    control_s = {s.set_index: s for s in aggregate_by_set(control)}
    attack_s = {s.set_index: s for s in aggregate_by_set(attack)}
    for set_index in sorted(set(control_s) & set(attack_s)):
        c, a = control_s[set_index], attack_s[set_index]
        print(f"set {set_index}:")
        for name in ALGORITHMS:
            before, after = c.avg_win_turn.get(name), a.avg_win_turn.get(name)
            wins = f"wins {c.wins.get(name, 0)} -> {a.wins.get(name, 0)}"
            if before and after:
                delta = percent_change(before, after)
                print(f"  {name}: {wins}, avg turn {before} -> {after} ({delta:+.2f}%)")
            else:
                b = "-" if before is None else before
                x = "-" if after is None else after
                print(f"  {name}: {wins}, avg turn {b} -> {x} (n/a)")
    return 0


def _win_turns(path: str, agent: str, set_index: int | None) -> list[int]:
    records, _ = read_results(path)
    turns = [
        r.turn
        for r in records
        if r.winner == agent and (set_index is None or r.set_index == set_index)
    ]
    if len(turns) < 2:
        raise ConfigError(
            f"{path}: need at least two {agent} wins"
            + ("" if set_index is None else f" in set {set_index}")
        )
    return turns


def _cmd_ttest(args) -> int:
    set_index = None if args.set is None else args.set
    a = _win_turns(args.a, args.agent, set_index)
    b = _win_turns(args.b, args.agent, set_index)
    t, df, p = welch_t_test(a, b)
    print(f"n_a={len(a)} n_b={len(b)} t={t:.4f} df={df:.4f} p={p:.4f}")
    return 0


def _cmd_plot_data(args) -> int:
    control, _ = read_results(args.control)
    attack, _ = read_results(args.attack)
    emit_plot_data(aggregate_by_set(control), aggregate_by_set(attack),
                   args.agent, args.out)
    print(f"plot data written to {args.out}")
    return 0


def _cmd_replay(args) -> int:
    topo = build_default_topology()
    entries = env.read_action_log(args.actions)
    final = env.replay(topo, env.RewardConfig(), args.turn_limit, args.run_index, entries)
    digest = __import__("hashlib").sha256(env.encode_state(final).tobytes()).hexdigest()
    print(f"winner={final.winner} turn={final.turn} state_sha256={digest}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sdnctf")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_parser(sub)

    p = sub.add_parser("aggregate", help="summarize a results CSV")
    p.add_argument("--results", required=True)

    p = sub.add_parser("compare", help="control vs attack deltas")
    p.add_argument("--control", required=True)
    p.add_argument("--attack", required=True)

    p = sub.add_parser("ttest", help="Welch t-test on winning turns")
    p.add_argument("--a", required=True, help="first results CSV")
    p.add_argument("--b", required=True, help="second results CSV")
    p.add_argument("--agent", choices=list(ALGORITHMS), required=True)
    p.add_argument("--set", type=int)

    p = sub.add_parser("plot-data", help="grouped-bar CSV for one algorithm")
    p.add_argument("--control", required=True)
    p.add_argument("--attack", required=True)
    p.add_argument("--agent", choices=list(ALGORITHMS), required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run a logged game")
    p.add_argument("--actions", required=True, help="action-log CSV")
    p.add_argument("--run-index", type=int, required=True)
    p.add_argument("--turn-limit", type=int, default=5000)

    args = parser.parse_args(argv)
    commands = {
        "run": _cmd_run,
        "aggregate": _cmd_aggregate,
        "compare": _cmd_compare,
        "ttest": _cmd_ttest,
        "plot-data": _cmd_plot_data,
        "replay": _cmd_replay,
    }
    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

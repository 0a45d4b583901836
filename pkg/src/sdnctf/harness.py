"""Experiment orchestration: seeded runs, sets, and the full game matrix.

Game 1 pits a DDQN attacker against an N2D defender; game 2 swaps the
algorithms.  Each (game, attack-flag, set, run) cell derives its own seed
from the base seed, so conditions are paired but statistically independent
and any run can be reproduced in isolation.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import env
from .agents import ALGO_DDQN, ALGO_N2D, DdqnAgent, Hyperparams, N2dAgent
from .poison import PoisonConfig, attach_whitebox_tap
from .reporting import RunRecord, SetSummary, aggregate
from .topology import build_default_topology

log = logging.getLogger(__name__)

DEFAULT_TURN_LIMITS = (5000, 50000, 500000)


@dataclass(frozen=True)
class ExperimentConfig:
    base_seed: int
    game: int = 1
    attack_enabled: bool = False
    turn_limits: tuple[int, ...] = DEFAULT_TURN_LIMITS
    runs_per_set: int = 10
    reward: env.RewardConfig = field(default_factory=env.RewardConfig)
    poison: PoisonConfig = field(default_factory=PoisonConfig)
    agent: Hyperparams = field(default_factory=Hyperparams)
    carry_weights: bool = False  # reuse learned agents across a set's runs
    workers: int = 1

    def __post_init__(self):
        if self.game not in (1, 2):
            raise ValueError("game must be 1 or 2")
        if self.runs_per_set < 1:
            raise ValueError("runs_per_set must be at least 1")
        if any(t <= 0 for t in self.turn_limits):
            raise ValueError("turn limits must be positive")

    def attacker_algo(self) -> str:
        return ALGO_DDQN if self.game == 1 else ALGO_N2D

    def defender_algo(self) -> str:
        return ALGO_N2D if self.game == 1 else ALGO_DDQN


class RunError(RuntimeError):
    """A run aborted; carries enough context to reproduce it."""

    def __init__(self, set_index: int, run_index: int, seed: int, cause: BaseException):
        super().__init__(
            f"run failed (set {set_index}, run {run_index}, seed {seed}): {cause!r}"
        )
        self.set_index = set_index
        self.run_index = run_index
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return (RunError, (self.set_index, self.run_index, self.seed, self.cause))


def run_seed(base_seed: int, game: int, attack: bool, set_index: int, run_index: int) -> int:
    """Stable 64-bit seed for one cell of the experiment matrix."""
    material = f"{base_seed}:{game}:{int(attack)}:{set_index}:{run_index}"
    digest = hashlib.sha256(material.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _build_agent(algo: str, role: str, topo, hp: Hyperparams, turn_limit: int,
                 rng: np.random.Generator):
    dim = env.state_dim(topo)
    if role == env.ATTACKER:
        n_actions = env.attacker_action_count(topo)
    else:
        n_actions = env.defender_action_count(topo)
    mask_fn = lambda vec: env.mask_for_vector(vec, role, topo)  # noqa: E731
    if algo == ALGO_DDQN:
        return DdqnAgent(dim, n_actions, hp, mask_fn, rng)
    return N2dAgent(dim, n_actions, hp, mask_fn, turn_limit, rng)


def run_game(
    cfg: ExperimentConfig,
    set_index: int,
    run_index: int,
    *,
    audit_path=None,
    action_log_path=None,
    diagnostics_path=None,
    agents: tuple | None = None,
) -> RunRecord:
    """Play one full game with online-learning agents; deterministic in
    (base seed, game, attack flag, set, run)."""
    seed = run_seed(cfg.base_seed, cfg.game, cfg.attack_enabled, set_index, run_index)
    try:
        return _run_game_inner(
            cfg, set_index, run_index, seed,
            audit_path=audit_path,
            action_log_path=action_log_path,
            diagnostics_path=diagnostics_path,
            agents=agents,
        )
    except Exception as exc:  # pragma: no cover - exercised via RunError tests
        raise RunError(set_index, run_index, seed, exc) from exc


def _run_game_inner(cfg, set_index, run_index, seed, *, audit_path, action_log_path,
                    diagnostics_path, agents):
    topo = build_default_topology()
    turn_limit = cfg.turn_limits[set_index]
    rng = np.random.default_rng(seed)

    if agents is not None:
        attacker, defender = agents
    else:
        attacker = _build_agent(cfg.attacker_algo(), env.ATTACKER, topo, cfg.agent,
                                turn_limit, rng)
        defender = _build_agent(cfg.defender_algo(), env.DEFENDER, topo, cfg.agent,
                                turn_limit, rng)

    tap = None
    if cfg.attack_enabled:
        reward_fn = lambda s, a, s2: env.defender_transition_reward(  # noqa: E731
            s, a, s2, cfg.reward, topo
        )
        def_mask_fn = lambda vec: env.mask_for_vector(vec, env.DEFENDER, topo)  # noqa: E731
        tap = attach_whitebox_tap(defender, cfg.poison, reward_fn, def_mask_fn,
                                  topo.n_hosts, audit_path=audit_path)

    action_log: list[tuple[int, str, str, int | None]] = []
    diag_rows: list[tuple] = []

    state = env.reset(topo, run_index)
    try:
        while state.winner is None:
            turn = state.turn
            att_mask = env.legal_mask(state, env.ATTACKER, topo)
            def_mask = env.legal_mask(state, env.DEFENDER, topo)
            att_eps = attacker.epsilon(turn, turn_limit)
            def_eps = defender.epsilon(turn, turn_limit)
            a_att = attacker.select_action(env.encode_state(state), att_mask, att_eps,
                                           rng, turn)
            a_def = defender.select_action(env.encode_state(state), def_mask, def_eps,
                                           rng, turn)
            act_att = env.action_from_index(env.ATTACKER, a_att, topo)
            act_def = env.action_from_index(env.DEFENDER, a_def, topo)
            if action_log_path is not None:
                action_log.append((turn, act_att.role, act_att.kind, act_att.host))
                action_log.append((turn, act_def.role, act_def.kind, act_def.host))

            state, att_exp, def_exp = env.step(state, act_att, act_def, cfg.reward,
                                               topo, turn_limit)
            attacker.observe(att_exp, turn)
            defender.observe(def_exp, turn)
            att_loss = attacker.update(rng, turn)
            def_loss = defender.update(rng, turn)
            if diagnostics_path is not None:
                diag_rows.append((turn, env.ATTACKER, att_loss, att_eps,
                                  attacker.last_source))
                diag_rows.append((turn, env.DEFENDER, def_loss, def_eps,
                                  defender.last_source))
    finally:
        if tap is not None:
            tap.close()

    if action_log_path is not None:
        env.write_action_log(action_log_path, action_log)
    if diagnostics_path is not None:
        _write_diagnostics(diagnostics_path, diag_rows)

    winner_algo = cfg.attacker_algo() if state.winner == env.ATTACKER else cfg.defender_algo()
    return RunRecord(set_index, run_index, winner_algo, state.turn, seed)


def _write_diagnostics(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# diagnostics v1\n")
        writer = csv.writer(fh)
        writer.writerow(["turn", "role", "loss", "epsilon", "action-source"])
        for turn, role, loss, eps, source in rows:
            writer.writerow([turn, role, "" if loss is None else repr(loss),
                             repr(eps), source])


def _run_cell(args) -> RunRecord:
    cfg, set_index, run_index, audit_path = args
    return run_game(cfg, set_index, run_index, audit_path=audit_path)


def run_set(
    cfg: ExperimentConfig,
    set_index: int,
    *,
    audit_dir=None,
) -> tuple[list[RunRecord], list[RunError]]:
    """All runs of one set, ordered by run index; failed runs are recorded
    and the rest of the set still completes."""

    def audit_path(run_index):
        if audit_dir is None or not cfg.attack_enabled:
            return None
        return str(audit_dir) + f"/audit_game{cfg.game}_set{set_index}_run{run_index}.csv"

    jobs = [(cfg, set_index, r, audit_path(r)) for r in range(cfg.runs_per_set)]
    records: list[RunRecord] = []
    errors: list[RunError] = []

    if cfg.carry_weights:
        agents = None
        for r in range(cfg.runs_per_set):
            try:
                rec_agents = _run_with_agents(cfg, set_index, r, agents, audit_path(r))
                records.append(rec_agents[0])
                agents = rec_agents[1]
            except RunError as err:
                log.error("%s", err)
                errors.append(err)
                agents = None
        return records, errors

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [(pool.submit(_run_cell, job), job) for job in jobs]
            for future, job in futures:
                try:
                    records.append(future.result())
                except RunError as err:
                    log.error("%s", err)
                    errors.append(err)
    else:
        for job in jobs:
            try:
                records.append(_run_cell(job))
            except RunError as err:
                log.error("%s", err)
                errors.append(err)
    records.sort(key=lambda r: r.run_index)
    return records, errors


def _run_with_agents(cfg, set_index, run_index, agents, audit_path):
    """Carry-weights variant: returns (record, agents) for reuse.

    A fresh tap is attached per run, so the previous run's tap (if any) is
    detached first.
    """
    seed = run_seed(cfg.base_seed, cfg.game, cfg.attack_enabled, set_index, run_index)
    try:
        topo = build_default_topology()
        turn_limit = cfg.turn_limits[set_index]
        if agents is None:
            rng = np.random.default_rng(seed)
            attacker = _build_agent(cfg.attacker_algo(), env.ATTACKER, topo, cfg.agent,
                                    turn_limit, rng)
            defender = _build_agent(cfg.defender_algo(), env.DEFENDER, topo, cfg.agent,
                                    turn_limit, rng)
            agents = (attacker, defender)
        agents[1].experience_filter = None
        record = run_game(cfg, set_index, run_index, audit_path=audit_path, agents=agents)
        return record, agents
    except RunError:
        raise
    except Exception as exc:
        raise RunError(set_index, run_index, seed, exc) from exc


def run_matrix(
    cfg: ExperimentConfig,
    *,
    games=(1, 2),
    attacks=(False, True),
    sets=None,
    out_dir=None,
) -> dict[tuple[int, bool], tuple[list[RunRecord], list[SetSummary]]]:
    """Run every requested (game, attack) condition over the requested sets;
    optionally persist one results file per condition."""
    from dataclasses import replace

    from .reporting import write_results

    if sets is None:
        sets = range(len(cfg.turn_limits))
    results = {}
    for game in games:
        for attack in attacks:
            cond_cfg = replace(cfg, game=game, attack_enabled=attack)
            records: list[RunRecord] = []
            for set_index in sets:
                set_records, errors = run_set(cond_cfg, set_index, audit_dir=out_dir)
                if errors:
                    raise errors[0]
                records.extend(set_records)
            summaries = [
                aggregate([r for r in records if r.set_index == s]) for s in sets
            ]
            results[(game, attack)] = (records, summaries)
            if out_dir is not None:
                label = "attack" if attack else "control"
                path = str(out_dir) + f"/game{game}_{label}.csv"
                write_results(records, summaries, path, config=config_dict(cond_cfg))
    return results


def config_dict(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["turn_limits"] = list(cfg.turn_limits)
    doc["agent"]["hidden"] = list(cfg.agent.hidden)
    return doc

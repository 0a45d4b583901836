"""Scripted (non-learning) players used for sanity checks and baselines."""

from __future__ import annotations

from collections import deque

import numpy as np

from . import env
from .topology import Topology


def hop_distances_to(t: Topology, target: int) -> list[float]:
    """Hops to the target over the full wiring, ignoring up flags."""
    dist = [float("inf")] * t.n_hosts
    dist[target] = 0
    queue = deque([target])
    while queue:
        h = queue.popleft()
        for lid in t.incident[h]:
            other = t.other_end(lid, h)
            if dist[other] == float("inf"):
                dist[other] = dist[h] + 1
                queue.append(other)
    return dist


class GreedyAttacker:
    """Always compromises the frontier host closest to the critical server."""

    role = env.ATTACKER

    def __init__(self, t: Topology):
        self._dist = hop_distances_to(t, t.critical_server)

    def act(self, state: env.GameState, t: Topology, rng) -> env.Action:
        mask = env.legal_mask(state, env.ATTACKER, t)
        best = None
        for idx in np.flatnonzero(mask[1:]):
            h = int(idx)
            if best is None or self._dist[h] < self._dist[best]:
                best = h
        if best is None:
            return env.Action(env.ATTACKER, env.NOOP)
        return env.Action(env.ATTACKER, env.COMPROMISE, best)


class RandomAttacker:
    role = env.ATTACKER

    def act(self, state: env.GameState, t: Topology, rng) -> env.Action:
        mask = env.legal_mask(state, env.ATTACKER, t)
        legal = np.flatnonzero(mask)
        idx = int(legal[rng.integers(0, legal.size)])
        return env.action_from_index(env.ATTACKER, idx, t)


class NoopDefender:
    role = env.DEFENDER

    def act(self, state: env.GameState, t: Topology, rng) -> env.Action:
        return env.Action(env.DEFENDER, env.NOOP)


class IsolateOnSightDefender:
    """Cuts the links of the compromised host nearest the critical server."""

    role = env.DEFENDER

    def __init__(self, t: Topology):
        self._dist = hop_distances_to(t, t.critical_server)

    def act(self, state: env.GameState, t: Topology, rng) -> env.Action:
        best = None
        for h in np.flatnonzero(state.nodes):
            h = int(h)
            if h == t.critical_server:
                continue
            if any(state.links[lid] for lid in t.incident[h]):
                if best is None or self._dist[h] < self._dist[best]:
                    best = h
        if best is None:
            return env.Action(env.DEFENDER, env.NOOP)
        return env.Action(env.DEFENDER, env.ISOLATE, best)


def play_scripted(
    t: Topology,
    cfg: env.RewardConfig,
    turn_limit: int,
    run_index: int,
    attacker,
    defender,
    rng: np.random.Generator,
) -> tuple[str, int]:
    """Run one game between scripted players; returns (winner role, turn)."""
    state = env.reset(t, run_index)
    while state.winner is None:
        a_att = attacker.act(state, t, rng)
        a_def = defender.act(state, t, rng)
        state, _, _ = env.step(state, a_att, a_def, cfg, t, turn_limit)
    return state.winner, state.turn

"""Two-player capture-the-flag game over the network graph.

One turn is an attacker move followed by a defender move.  The attacker
spreads through up links toward the critical server; the defender cuts
links, restores them, or patches hosts.  The observation is a flat binary
vector: one compromise bit per host followed by one up bit per link (80
entries on the canonical network).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .topology import Topology

ATTACKER = "attacker"
DEFENDER = "defender"

NOOP = "noop"
COMPROMISE = "compromise"
ISOLATE = "isolate"
RESTORE = "restore"
PATCH = "patch"

ATTACKER_KINDS = (NOOP, COMPROMISE)
DEFENDER_KINDS = (NOOP, ISOLATE, RESTORE, PATCH)


class TerminalStateError(RuntimeError):
    """Raised when a finished game is stepped or queried for moves."""


@dataclass(frozen=True)
class Action:
    role: str
    kind: str
    host: int | None = None


@dataclass(frozen=True)
class RewardConfig:
    flag_capture_reward: float = 100.0
    attacker_eliminated_reward: float = 100.0
    per_step_cost: float = 0.1
    invalid_action_penalty: float = 1.0
    collateral_isolation_penalty: float = 0.5

    def __post_init__(self):
        if self.flag_capture_reward <= 0:
            raise ValueError("flag_capture_reward must be positive")
        if self.per_step_cost < 0:
            raise ValueError("per_step_cost must be non-negative")


@dataclass(frozen=True)
class Experience:
    """One stored transition; `terminal` marks s_next as an end state."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class GameState:
    nodes: np.ndarray  # uint8, one compromise flag per host
    links: np.ndarray  # uint8, one up flag per link
    turn: int = 0
    winner: str | None = None

    def copy(self) -> "GameState":
        return GameState(self.nodes.copy(), self.links.copy(), self.turn, self.winner)


def state_dim(t: Topology) -> int:
    return t.n_hosts + t.n_links


def encode_state(g: GameState) -> np.ndarray:
    """Node bits in host order, then link bits in link order."""
    return np.concatenate([g.nodes, g.links])


def decode_state(vec: np.ndarray, t: Topology) -> tuple[np.ndarray, np.ndarray]:
    vec = np.asarray(vec, dtype=np.uint8)
    if vec.shape != (state_dim(t),):
        raise ValueError(f"expected state vector of length {state_dim(t)}")
    return vec[: t.n_hosts].copy(), vec[t.n_hosts :].copy()


def reset(t: Topology, run_index: int) -> GameState:
    """Fresh game: link flags from the wiring, one entry point compromised.

    The entry point rotates round-robin with the run index.
    """
    nodes = np.zeros(t.n_hosts, dtype=np.uint8)
    nodes[t.entry_points[run_index % len(t.entry_points)]] = 1
    links = np.array([up for _, _, up in t.links], dtype=np.uint8)
    return GameState(nodes=nodes, links=links)


# --- action indexing ------------------------------------------------------
#
# Fixed index spaces so value networks have a constant output width;
# illegal actions are masked at selection time.
#   attacker: 0 = noop, 1+h = compromise host h
#   defender: 0 = noop, 1+h = isolate h, 1+n+h = restore h, 1+2n+h = patch h


def attacker_action_count(t: Topology) -> int:
    return 1 + t.n_hosts


def defender_action_count(t: Topology) -> int:
    return 1 + 3 * t.n_hosts


def action_to_index(a: Action, t: Topology) -> int:
    n = t.n_hosts
    if a.kind == NOOP:
        return 0
    if a.role == ATTACKER:
        if a.kind == COMPROMISE:
            return 1 + a.host
    else:
        offset = {ISOLATE: 0, RESTORE: 1, PATCH: 2}.get(a.kind)
        if offset is not None:
            return 1 + offset * n + a.host
    raise ValueError(f"no index for action {a}")


def action_from_index(role: str, idx: int, t: Topology) -> Action:
    n = t.n_hosts
    count = attacker_action_count(t) if role == ATTACKER else defender_action_count(t)
    if not 0 <= idx < count:
        raise ValueError(f"action index {idx} out of range for {role}")
    if idx == 0:
        return Action(role, NOOP)
    if role == ATTACKER:
        return Action(role, COMPROMISE, idx - 1)
    kind = DEFENDER_KINDS[1 + (idx - 1) // n]
    return Action(role, kind, (idx - 1) % n)


def _attacker_frontier(nodes: np.ndarray, links: np.ndarray, t: Topology) -> np.ndarray:
    """Per-host flags: uncompromised and adjacent, via an up link, to a
    compromised host."""
    ends = t.link_ends
    up = links.astype(bool)
    a_comp = nodes[ends[:, 0]].astype(bool)
    b_comp = nodes[ends[:, 1]].astype(bool)
    frontier = np.zeros(t.n_hosts, dtype=bool)
    frontier[ends[up & a_comp & ~b_comp, 1]] = True
    frontier[ends[up & b_comp & ~a_comp, 0]] = True
    return frontier


def legal_mask(g: GameState, role: str, t: Topology) -> np.ndarray:
    """Boolean legality over the fixed action index space."""
    if g.winner is not None:
        raise TerminalStateError("game is over; no legal actions")
    if role == ATTACKER:
        mask = np.empty(attacker_action_count(t), dtype=bool)
        mask[0] = True
        mask[1:] = _attacker_frontier(g.nodes, g.links, t)
        return mask
    if role == DEFENDER:
        mask = np.ones(defender_action_count(t), dtype=bool)
        mask[1 + t.critical_server] = False  # may not isolate the flag host
        return mask
    raise ValueError(f"unknown role {role!r}")


def mask_for_vector(vec: np.ndarray, role: str, t: Topology) -> np.ndarray:
    """Legality recomputed from an encoded state vector."""
    nodes, links = decode_state(vec, t)
    return legal_mask(GameState(nodes, links), role, t)


def legal_actions(g: GameState, role: str, t: Topology) -> list[Action]:
    mask = legal_mask(g, role, t)
    return [action_from_index(role, i, t) for i in np.flatnonzero(mask)]


# --- dynamics -------------------------------------------------------------


def check_winner(g: GameState, turn_limit: int | None, t: Topology) -> str | None:
    """Capture beats elimination; the defender outlasts at the turn limit.

    Pass turn_limit=None to skip the outlast rule (used when deriving
    terminality from state bits alone).
    """
    if g.nodes[t.critical_server]:
        return ATTACKER
    if not g.nodes.any():
        return DEFENDER
    linked = np.zeros(t.n_hosts, dtype=bool)
    up_ends = t.link_ends[g.links.astype(bool)]
    linked[up_ends[:, 0]] = True
    linked[up_ends[:, 1]] = True
    if not np.any(g.nodes.astype(bool) & linked):
        return DEFENDER
    if turn_limit is not None and g.turn >= turn_limit:
        return DEFENDER
    return None


def winner_from_vector(vec: np.ndarray, t: Topology) -> str | None:
    nodes, links = decode_state(vec, t)
    return check_winner(GameState(nodes, links), None, t)


def _terminal_bonus(role: str, winner: str | None, cfg: RewardConfig) -> float:
    if winner == ATTACKER:
        return cfg.flag_capture_reward if role == ATTACKER else -cfg.flag_capture_reward
    if winner == DEFENDER:
        return (
            cfg.attacker_eliminated_reward
            if role == DEFENDER
            else -cfg.attacker_eliminated_reward
        )
    return 0.0


def _defender_action_penalty(
    nodes_after: np.ndarray, action: Action, cfg: RewardConfig, t: Topology
) -> float:
    # collateral is judged at defense time; isolate leaves compromise bits
    # alone and the defender moves last, so the next state carries that bit
    if action.kind == ISOLATE:
        if action.host == t.critical_server:
            return -cfg.invalid_action_penalty
        if not nodes_after[action.host]:
            return -cfg.collateral_isolation_penalty
    return 0.0


def step(
    g: GameState,
    attacker_action: Action,
    defender_action: Action,
    cfg: RewardConfig,
    t: Topology,
    turn_limit: int | None = None,
) -> tuple[GameState, Experience, Experience]:
    """Apply one full turn: attacker move, defender move, winner check.

    Illegal moves score the invalid-action penalty and act as no-ops.
    """
    if g.winner is not None:
        raise TerminalStateError("cannot step a finished game")
    if attacker_action.role != ATTACKER or attacker_action.kind not in ATTACKER_KINDS:
        raise ValueError(f"not an attacker action: {attacker_action}")
    if defender_action.role != DEFENDER or defender_action.kind not in DEFENDER_KINDS:
        raise ValueError(f"not a defender action: {defender_action}")

    s_vec = encode_state(g)
    nodes = g.nodes.copy()
    links = g.links.copy()
    att_r = -cfg.per_step_cost
    def_r = -cfg.per_step_cost

    # attacker moves first
    if attacker_action.kind == COMPROMISE:
        h = attacker_action.host
        if _attacker_frontier(nodes, links, t)[h]:
            nodes[h] = 1
        else:
            att_r -= cfg.invalid_action_penalty

    # then the defender
    h = defender_action.host
    if defender_action.kind == ISOLATE and h != t.critical_server:
        for lid in t.incident[h]:
            links[lid] = 0
    elif defender_action.kind == RESTORE:
        for lid in t.incident[h]:
            links[lid] = t.links[lid][2]
    elif defender_action.kind == PATCH:
        nodes[h] = 0
    def_r += _defender_action_penalty(nodes, defender_action, cfg, t)

    g2 = GameState(nodes=nodes, links=links, turn=g.turn + 1)
    g2.winner = check_winner(g2, turn_limit, t)
    att_r += _terminal_bonus(ATTACKER, g2.winner, cfg)
    def_r += _terminal_bonus(DEFENDER, g2.winner, cfg)

    s2_vec = encode_state(g2)
    terminal = g2.winner is not None
    att_exp = Experience(s_vec, action_to_index(attacker_action, t), att_r, s2_vec, terminal)
    def_exp = Experience(s_vec, action_to_index(defender_action, t), def_r, s2_vec, terminal)
    return g2, att_exp, def_exp


def defender_transition_reward(
    s_vec: np.ndarray,
    action_index: int,
    s_next_vec: np.ndarray,
    cfg: RewardConfig,
    t: Topology,
) -> float:
    """Defender reward an observed transition implies, from state bits alone.

    Matches step()'s scoring except the outlast bonus, which depends on the
    turn counter and is not recoverable from the vectors.
    """
    nodes_after, _ = decode_state(s_next_vec, t)
    action = action_from_index(DEFENDER, action_index, t)
    r = -cfg.per_step_cost
    r += _defender_action_penalty(nodes_after, action, cfg, t)
    r += _terminal_bonus(DEFENDER, winner_from_vector(s_next_vec, t), cfg)
    return r


# --- action log -----------------------------------------------------------

ACTION_LOG_HEADER = ["turn", "role", "kind", "host"]


def write_action_log(path, entries: list[tuple[int, str, str, int | None]]) -> None:
    """Persist submitted actions as `turn,role,kind,host` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# action-log v1\n")
        writer = csv.writer(fh)
        writer.writerow(ACTION_LOG_HEADER)
        for turn, role, kind, host in entries:
            writer.writerow([turn, role, kind, "" if host is None else host])


def read_action_log(path) -> list[tuple[int, str, str, int | None]]:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row == ACTION_LOG_HEADER:
                continue
            try:
                turn = int(row[0])
                role, kind = row[1], row[2]
                host = int(row[3]) if row[3] != "" else None
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}: bad action-log row at line {lineno}") from exc
            entries.append((turn, role, kind, host))
    return entries


def replay(
    t: Topology,
    cfg: RewardConfig,
    turn_limit: int,
    run_index: int,
    entries: list[tuple[int, str, str, int | None]],
) -> GameState:
    """Re-run a logged game; the terminal state is reproduced bit for bit."""
    by_turn: dict[int, dict[str, Action]] = {}
    for turn, role, kind, host in entries:
        by_turn.setdefault(turn, {})[role] = Action(role, kind, host)
    g = reset(t, run_index)
    for turn in sorted(by_turn):
        moves = by_turn[turn]
        if set(moves) != {ATTACKER, DEFENDER}:
            raise ValueError(f"turn {turn}: need one action per role")
        g, _, _ = step(g, moves[ATTACKER], moves[DEFENDER], cfg, t, turn_limit)
    return g

"""White-box tampering of the defender's stored experiences.

The attacker reads the defender's value network, scores every single-bit
flip of the next state's host section (clean hosts marked compromised are
false positives, compromised hosts marked clean are false negatives), and
keeps the flips that leave the defender the lowest best-action value.  At
most `limit` flips per category are applied, the reward is re-derived from
the perturbed transition, and the tampered experience is what reaches the
replay buffer; link bits are never touched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .env import Experience


@dataclass(frozen=True)
class PoisonConfig:
    limit: int = 2
    theta: float = 1.0  # admission threshold on the perturbed-state value
    enabled: bool = True

    def __post_init__(self):
        if self.limit < 0:
            raise ValueError("limit must be non-negative")


@dataclass
class PoisonOutcome:
    fp_nodes: list[int] = field(default_factory=list)
    fn_nodes: list[int] = field(default_factory=list)
    perturbed_next_state: np.ndarray | None = None
    recomputed_reward: float = 0.0
    candidate_scores: dict[int, float] = field(default_factory=dict)


def candidate_value(q_fn, s_next: np.ndarray, node: int, mask: np.ndarray) -> float:
    """Best legal action value after flipping one host bit of s_next."""
    flipped = np.array(s_next, copy=True)
    flipped[node] = 1 - flipped[node]
    values = np.asarray(q_fn(flipped), dtype=np.float64)
    return float(np.max(np.where(mask, values, -np.inf)))


def _retain(candidates: list[tuple[float, int]], limit: int, theta: float) -> list[int]:
    """The `limit` lowest-scoring candidates below the admission threshold,
    ties broken by lower node id."""
    admitted = sorted((v, h) for v, h in candidates if v < theta)
    return [h for _, h in admitted[:limit]]


def poison_experience(
    q_fn,
    exp: Experience,
    cfg: PoisonConfig,
    reward_fn,
    mask_fn,
    n_nodes: int,
) -> tuple[Experience, PoisonOutcome]:
    """Score every single-node flip of the next state and apply the kept ones.

    q_fn maps a state vector to the defender's action values, mask_fn to the
    defender's legality mask, and reward_fn(s, a, s_next) re-derives the
    defender's reward for the perturbed transition.  Returns the experience
    to store plus an audit record.  With nothing flipped the experience is
    returned unchanged.
    """
    if not cfg.enabled:
        raise RuntimeError("poisoning is disabled; caller must gate")
    s_next = np.asarray(exp.s_next)
    if cfg.limit == 0:
        return exp, PoisonOutcome(perturbed_next_state=s_next.copy(), recomputed_reward=exp.r)

    fp_candidates: list[tuple[float, int]] = []  # clean -> marked compromised
    fn_candidates: list[tuple[float, int]] = []  # compromised -> marked clean
    scores: dict[int, float] = {}
    for node in range(n_nodes):
        flipped = np.array(s_next, copy=True)
        flipped[node] = 1 - flipped[node]
        v = candidate_value(q_fn, s_next, node, mask_fn(flipped))
        scores[node] = v
        if exp.s_next[node]:
            fn_candidates.append((v, node))
        else:
            fp_candidates.append((v, node))

    fp_nodes = _retain(fp_candidates, cfg.limit, cfg.theta)
    fn_nodes = _retain(fn_candidates, cfg.limit, cfg.theta)
    outcome = PoisonOutcome(fp_nodes=fp_nodes, fn_nodes=fn_nodes, candidate_scores=scores)

    if not fp_nodes and not fn_nodes:
        outcome.perturbed_next_state = s_next.copy()
        outcome.recomputed_reward = exp.r
        return exp, outcome

    perturbed = np.array(s_next, copy=True)
    for node in fp_nodes:
        perturbed[node] = 1
    for node in fn_nodes:
        perturbed[node] = 0
    r2 = float(reward_fn(exp.s, exp.a, perturbed))
    outcome.perturbed_next_state = perturbed
    outcome.recomputed_reward = r2
    tampered = Experience(exp.s, exp.a, r2, perturbed, exp.terminal)
    return tampered, outcome


class WhiteboxTap:
    """Interposer between the defender's observations and its replay buffer.

    Attaching hooks the agent's experience filter; the agent still acts on
    true environment states, only what it stores is tampered.  Outcomes can
    be kept in memory for auditing and streamed to a CSV.
    """

    AUDIT_HEADER = ["turn", "fp_nodes", "fn_nodes", "v_scores"]

    def __init__(self, agent, cfg: PoisonConfig, reward_fn, mask_fn, n_nodes: int,
                 audit_path=None, record: bool = False):
        if agent.experience_filter is not None:
            raise RuntimeError("agent already has an experience tap attached")
        self.agent = agent
        self.cfg = cfg
        self.reward_fn = reward_fn
        self.mask_fn = mask_fn
        self.n_nodes = n_nodes
        self.record = record
        self.outcomes: list[PoisonOutcome] = []
        self.originals: list[np.ndarray] = []
        self._audit_fh = None
        self._audit_writer = None
        if audit_path is not None:
            self._audit_fh = open(audit_path, "w", newline="", encoding="utf-8")
            self._audit_fh.write("# poison-audit v1\n")
            self._audit_writer = csv.writer(self._audit_fh)
            self._audit_writer.writerow(self.AUDIT_HEADER)
        agent.experience_filter = self

    def __call__(self, exp: Experience, turn: int) -> Experience:
        if not self.cfg.enabled:
            return exp
        tampered, outcome = poison_experience(
            self.agent.q_values, exp, self.cfg, self.reward_fn, self.mask_fn, self.n_nodes
        )
        if self.record:
            self.outcomes.append(outcome)
            self.originals.append(np.asarray(exp.s_next).copy())
        if self._audit_writer is not None:
            self._audit_writer.writerow(
                [
                    turn,
                    ";".join(map(str, outcome.fp_nodes)),
                    ";".join(map(str, outcome.fn_nodes)),
                    ";".join(f"{n}:{v!r}" for n, v in outcome.candidate_scores.items()),
                ]
            )
        return tampered

    def detach(self) -> None:
        self.agent.experience_filter = None
        self.close()

    def close(self) -> None:
        if self._audit_fh is not None:
            self._audit_fh.close()
            self._audit_fh = None
            self._audit_writer = None


def attach_whitebox_tap(agent, cfg: PoisonConfig, reward_fn, mask_fn, n_nodes: int,
                        audit_path=None, record: bool = False) -> WhiteboxTap:
    """Wire a tap onto the defender; errors if one is already attached."""
    return WhiteboxTap(agent, cfg, reward_fn, mask_fn, n_nodes,
                       audit_path=audit_path, record=record)

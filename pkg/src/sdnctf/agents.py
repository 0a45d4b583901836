"""The two learners and their shared machinery.

DdqnAgent is a double deep Q-network: an online net picks the best next
action, a periodically synced target net scores it.  N2dAgent pairs an
episodic-dictionary learner with the same DQN core: the dictionary drives
decisions early, the DQN takes over by the change step (20% of the game's
turn budget), and in between the hand-over frequency ramps linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Experience
from .neural import Dnd, Mlp

ALGO_DDQN = "DDQN"
ALGO_N2D = "N2D"

SOURCE_DQN = "dqn"
SOURCE_NEC = "nec"


@dataclass(frozen=True)
class Hyperparams:
    """Learner knobs shared by both agents; dimensions come from the game."""

    hidden: tuple[int, ...] = (128, 128)
    gamma: float = 0.99
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1  # share of total turns spent decaying
    buffer_capacity: int = 100_000
    batch_size: int = 32
    target_sync: int = 500
    nstep: int = 5
    dnd_capacity: int = 50_000
    dnd_neighbors: int = 10
    dnd_smoothing: float = 1e-3
    dnd_alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")


class ReplayBuffer:
    """Ring buffer of experiences with a uniform sampler."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, exp: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        if len(self._items) < batch_size:
            raise ValueError("not enough stored experiences to sample")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def epsilon_greedy(values: np.ndarray, mask: np.ndarray, epsilon: float, rng) -> int:
    """Uniform over legal actions with probability epsilon, else the legal
    argmax; ties go to the lowest action index."""
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError("legal-action mask is empty")
    if epsilon > 0 and rng.random() < epsilon:
        return int(legal[rng.integers(0, legal.size)])
    masked = np.where(mask, values, -np.inf)
    return int(np.argmax(masked))


def linear_epsilon(turn: int, total_turns: int, hp: Hyperparams) -> float:
    horizon = max(1, int(hp.eps_fraction * total_turns))
    frac = min(turn / horizon, 1.0)
    return hp.eps_start + frac * (hp.eps_end - hp.eps_start)


def n_step_return(rewards, gamma: float, bootstrap: float) -> float:
    """Discounted sum of a reward window plus the discounted bootstrap."""
    total = 0.0
    for j, r in enumerate(rewards):
        total += (gamma**j) * r
    return total + (gamma ** len(rewards)) * bootstrap


def ddqn_target(
    reward: float,
    s_next: np.ndarray,
    gamma: float,
    online: Mlp,
    target: Mlp,
    mask: np.ndarray,
    terminal: bool,
) -> float:
    """r + gamma * Q_target(s', argmax_legal Q_online(s', .)); r if terminal."""
    if terminal:
        return reward
    online_q = np.where(mask, online.forward(s_next), -np.inf)
    a_star = int(np.argmax(online_q))
    return reward + gamma * float(target.forward(s_next)[a_star])


class DdqnAgent:
    algo = ALGO_DDQN

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hp: Hyperparams,
        mask_fn,
        rng: np.random.Generator,
    ):
        self.hp = hp
        self.n_actions = n_actions
        self.mask_fn = mask_fn
        widths = [state_dim, *hp.hidden, n_actions]
        self.online = Mlp(widths, rng)
        self.target = self.online.clone()
        self.buffer = ReplayBuffer(hp.buffer_capacity)
        self.update_count = 0
        self.experience_filter = None  # hook between observation and storage
        self.last_source = SOURCE_DQN

    def epsilon(self, turn: int, total_turns: int) -> float:
        return linear_epsilon(turn, total_turns, self.hp)

    def q_values(self, s) -> np.ndarray:
        return self.online.forward(s)

    def select_action(self, s, mask, epsilon: float, rng, turn: int = 0) -> int:
        self.last_source = SOURCE_DQN
        return epsilon_greedy(self.q_values(s), mask, epsilon, rng)

    def observe(self, exp: Experience, turn: int = 0) -> None:
        if self.experience_filter is not None:
            exp = self.experience_filter(exp, turn)
        self.buffer.push(exp)

    def _batch_targets(self, batch: list[Experience]) -> np.ndarray:
        s2 = np.stack([e.s_next for e in batch]).astype(np.float64)
        rewards = np.array([e.r for e in batch])
        terminal = np.array([e.terminal for e in batch])
        masks = np.stack([self.mask_fn(e.s_next) for e in batch])
        online_q = np.where(masks, self.online.forward_batch(s2), -np.inf)
        a_star = np.argmax(online_q, axis=1)
        boot = self.target.forward_batch(s2)[np.arange(len(batch)), a_star]
        return rewards + self.hp.gamma * boot * ~terminal

    def _train(self, batch: list[Experience], targets: np.ndarray) -> float:
        s = np.stack([e.s for e in batch]).astype(np.float64)
        acts = np.array([e.a for e in batch])
        loss = self.online.train_batch(s, acts, targets, self.hp.lr)
        self.update_count += 1
        if self.update_count % self.hp.target_sync == 0:
            self.target.copy_from(self.online)
        return loss

    def update(self, rng: np.random.Generator, turn: int = 0) -> float | None:
        """One gradient step from a uniform replay batch, if one is ready."""
        if len(self.buffer) < self.hp.batch_size:
            return None
        batch = self.buffer.sample(self.hp.batch_size, rng)
        return self._train(batch, self._batch_targets(batch))


class N2dAgent:
    """Episodic dictionaries plus a DQN, bridged by the change step.

    The change step CS is 20% of the game's turn budget.  Decision making
    shifts from dictionary lookups to the DQN with frequency turn/CS
    (realized by an error-diffusion accumulator so the ramp is exact), and
    training targets blend the dictionary estimate into the double-DQN
    target with the complementary weight.  Dictionaries keep learning for
    the whole game.
    """

    algo = ALGO_N2D

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hp: Hyperparams,
        mask_fn,
        total_turns: int,
        rng: np.random.Generator,
    ):
        self.hp = hp
        self.n_actions = n_actions
        self.mask_fn = mask_fn
        self.total_turns = total_turns
        self.change_step = math.floor(0.2 * total_turns)
        widths = [state_dim, *hp.hidden, n_actions]
        self.online = Mlp(widths, rng)
        self.target = self.online.clone()
        key_dim = hp.hidden[0]
        self.dnds = [
            Dnd(key_dim, hp.dnd_capacity, hp.dnd_neighbors, hp.dnd_smoothing)
            for _ in range(n_actions)
        ]
        self.buffer = ReplayBuffer(hp.buffer_capacity)
        self.update_count = 0
        self.experience_filter = None
        self.last_source = SOURCE_NEC
        self._window: list[tuple[np.ndarray, int, float]] = []
        self._source_acc = 0.0

    def epsilon(self, turn: int, total_turns: int | None = None) -> float:
        return linear_epsilon(turn, total_turns or self.total_turns, self.hp)

    def dqn_fraction(self, turn: int) -> float:
        """How often the DQN side drives decisions at this point in the game."""
        if self.change_step <= 0:
            return 1.0
        return min(turn / self.change_step, 1.0)

    def q_values(self, s) -> np.ndarray:
        return self.online.forward(s)

    def nec_values(self, s) -> np.ndarray:
        """Dictionary estimate per action; empty dictionaries read as 0."""
        key = self.online.embed(s)
        return np.array(
            [d.lookup(key) if len(d) else 0.0 for d in self.dnds]
        )

    def select_action(self, s, mask, epsilon: float, rng, turn: int) -> int:
        q = self.dqn_fraction(turn)
        self._source_acc += q
        if self._source_acc >= 1.0 - 1e-9:
            self._source_acc -= 1.0
            self.last_source = SOURCE_DQN
            values = self.q_values(s)
        else:
            self.last_source = SOURCE_NEC
            values = self.nec_values(s)
        return epsilon_greedy(values, mask, epsilon, rng)

    def value_estimate(self, s, mask) -> float:
        """Best legal value: dictionary estimate if any action has one,
        otherwise the online net's estimate."""
        key = self.online.embed(s)
        best = None
        for a in np.flatnonzero(mask):
            d = self.dnds[a]
            if len(d):
                v = d.lookup(key)
                best = v if best is None or v > best else best
        if best is not None:
            return best
        return float(np.max(np.where(mask, self.online.forward(s), -np.inf)))

    def nec_update(self, window, bootstrap: float) -> None:
        """Write the window's opening state-action under its n-step return."""
        rewards = [r for (_, _, r) in window]
        ret = n_step_return(rewards, self.hp.gamma, bootstrap)
        s0, a0, _ = window[0]
        self.dnds[a0].write(self.online.embed(s0), ret, self.hp.dnd_alpha)

    def observe(self, exp: Experience, turn: int = 0) -> None:
        if self.experience_filter is not None:
            exp = self.experience_filter(exp, turn)
        self.buffer.push(exp)
        self._window.append((exp.s, exp.a, exp.r))
        if exp.terminal:
            while self._window:
                self.nec_update(self._window, 0.0)
                self._window.pop(0)
        elif len(self._window) == self.hp.nstep:
            boot = self.value_estimate(exp.s_next, self.mask_fn(exp.s_next))
            self.nec_update(self._window, boot)
            self._window.pop(0)

    def _nec_batch(self, s2: np.ndarray, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Best legal dictionary estimate per row, plus availability flags."""
        keys = self.online.embed_batch(s2)
        n = s2.shape[0]
        best = np.full(n, -np.inf)
        for a, d in enumerate(self.dnds):
            if not len(d):
                continue
            legal_rows = np.flatnonzero(masks[:, a])
            if legal_rows.size == 0:
                continue
            vals = d.lookup_batch(keys[legal_rows])
            np.maximum.at(best, legal_rows, vals)
        available = np.isfinite(best)
        return best, available

    def update(self, rng: np.random.Generator, turn: int) -> float | None:
        """One DQN gradient step toward dictionary-blended double-DQN targets."""
        if len(self.buffer) < self.hp.batch_size:
            return None
        batch = self.buffer.sample(self.hp.batch_size, rng)
        s2 = np.stack([e.s_next for e in batch]).astype(np.float64)
        rewards = np.array([e.r for e in batch])
        terminal = np.array([e.terminal for e in batch])
        masks = np.stack([self.mask_fn(e.s_next) for e in batch])
        online_q = np.where(masks, self.online.forward_batch(s2), -np.inf)
        a_star = np.argmax(online_q, axis=1)
        boot = self.target.forward_batch(s2)[np.arange(len(batch)), a_star]
        targets = rewards + self.hp.gamma * boot * ~terminal

        # blend the dictionary estimate of the next state into the target;
        # samples with no estimate (or a terminal next state) stay pure DDQN
        lam = 1.0 - self.dqn_fraction(turn)
        if lam > 0.0:
            nec_best, available = self._nec_batch(s2, masks)
            use = available & ~terminal
            targets = np.where(use, lam * nec_best + (1.0 - lam) * targets, targets)

        s = np.stack([e.s for e in batch]).astype(np.float64)
        acts = np.array([e.a for e in batch])
        loss = self.online.train_batch(s, acts, targets, self.hp.lr)
        self.update_count += 1
        if self.update_count % self.hp.target_sync == 0:
            self.target.copy_from(self.online)
        return loss

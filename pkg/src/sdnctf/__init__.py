"""Adversarial capture-the-flag arena on a simulated SDN graph."""

from .agents import ALGO_DDQN, ALGO_N2D, DdqnAgent, Hyperparams, N2dAgent, ReplayBuffer
from .env import Action, Experience, GameState, RewardConfig
from .harness import ExperimentConfig, run_game, run_matrix, run_set
from .neural import Dnd, Mlp
from .poison import PoisonConfig, PoisonOutcome, attach_whitebox_tap, poison_experience
from .reporting import (
    RunRecord,
    SetSummary,
    aggregate,
    percent_change,
    welch_t_test,
)
from .topology import Topology, build_default_topology

__version__ = "0.1.0"

__all__ = [
    "ALGO_DDQN",
    "ALGO_N2D",
    "Action",
    "DdqnAgent",
    "Dnd",
    "Experience",
    "ExperimentConfig",
    "GameState",
    "Hyperparams",
    "Mlp",
    "N2dAgent",
    "PoisonConfig",
    "PoisonOutcome",
    "ReplayBuffer",
    "RewardConfig",
    "RunRecord",
    "SetSummary",
    "Topology",
    "aggregate",
    "attach_whitebox_tap",
    "build_default_topology",
    "percent_change",
    "poison_experience",
    "run_game",
    "run_matrix",
    "run_set",
    "welch_t_test",
]

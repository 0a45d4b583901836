"""Aggregation and persistence of game results.

Winning-turn averages are floored means per algorithm, percent deltas are
computed on those floored values, and pairwise comparisons use Welch's
unequal-variance t-test.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import stdtr

from .agents import ALGO_DDQN, ALGO_N2D

ALGORITHMS = (ALGO_DDQN, ALGO_N2D)

RESULTS_HEADER = ["set", "run", "winner", "turn", "seed"]


@dataclass(frozen=True)
class RunRecord:
    set_index: int
    run_index: int
    winner: str  # algorithm name
    turn: int
    seed: int


@dataclass
class SetSummary:
    set_index: int
    wins: dict[str, int] = field(default_factory=dict)
    avg_win_turn: dict[str, int | None] = field(default_factory=dict)
    win_turns: dict[str, list[int]] = field(default_factory=dict)


def aggregate(records: list[RunRecord]) -> SetSummary:
    """Win counts and floored mean winning turn per algorithm for one set."""
    if not records:
        raise ValueError("no records to aggregate")
    set_index = records[0].set_index
    summary = SetSummary(set_index=set_index)
    for name in ALGORITHMS:
        turns = [r.turn for r in records if r.winner == name]
        summary.wins[name] = len(turns)
        summary.win_turns[name] = turns
        summary.avg_win_turn[name] = sum(turns) // len(turns) if turns else None
    return summary


def aggregate_by_set(records: list[RunRecord]) -> list[SetSummary]:
    sets = sorted({r.set_index for r in records})
    return [aggregate([r for r in records if r.set_index == s]) for s in sets]


def percent_change(before: float, after: float) -> float:
    """Signed percent delta, reported to two decimals."""
    if before <= 0:
        raise ValueError("baseline must be positive")
    return round(100.0 * (after - before) / before, 2)


def welch_t_test(sample_a, sample_b) -> tuple[float, float, float]:
    """Welch's t statistic, Welch-Satterthwaite degrees of freedom, and the
    two-tailed p-value from the t distribution."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0 and vb == 0:
        raise ValueError("both samples have zero variance")
    sa, sb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return float(t), float(df), p


# --- persistence ------------------------------------------------------------


def write_results(records: list[RunRecord], summaries: list[SetSummary], path,
                  config: dict | None = None) -> None:
    """Records as CSV; summaries plus the exact configuration as JSON next
    to it (same stem, .json suffix)."""
    path = str(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# results v1\n")
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in records:
            writer.writerow([r.set_index, r.run_index, r.winner, r.turn, r.seed])
    doc = {
        "version": 1,
        "config": config or {},
        "summaries": [
            {
                "set": s.set_index,
                "wins": s.wins,
                "avg_win_turn": s.avg_win_turn,
                "win_turns": s.win_turns,
            }
            for s in summaries
        ],
    }
    with open(_json_path(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_path(csv_path: str) -> str:
    return csv_path[: -len(".csv")] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def read_results(path) -> tuple[list[RunRecord], dict | None]:
    """Inverse of write_results; malformed rows report their line number."""
    path = str(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row == RESULTS_HEADER:
                continue
            if len(row) != len(RESULTS_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(RESULTS_HEADER)} fields")
            try:
                set_index, run_index = int(row[0]), int(row[1])
                turn, seed = int(row[3]), int(row[4])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad numeric field") from exc
            winner = row[2]
            if winner not in ALGORITHMS:
                raise ValueError(f"{path}:{lineno}: unknown winner {winner!r}")
            records.append(RunRecord(set_index, run_index, winner, turn, seed))
    doc = None
    try:
        with open(_json_path(path), encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        pass
    return records, doc


def emit_plot_data(control: list[SetSummary], attack: list[SetSummary],
                   algorithm: str, path) -> None:
    """Grouped-bar data: one row per set with the control and attack floored
    average winning turns for one algorithm."""
    if len(control) != len(attack):
        raise ValueError("control and attack summaries differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# plot-data v1\n")
        writer = csv.writer(fh)
        writer.writerow(["set", "control_avg", "attack_avg"])
        for c, a in zip(control, attack):
            row = [f"set{c.set_index + 1}"]
            for s in (c, a):
                avg = s.avg_win_turn.get(algorithm)
                row.append("" if avg is None else avg)
            writer.writerow(row)


def format_summary(summary: SetSummary, turn_limit: int | None = None) -> str:
    parts = [f"set {summary.set_index}"]
    if turn_limit is not None:
        parts.append(f"(turn limit {turn_limit})")
    for name in ALGORITHMS:
        avg = summary.avg_win_turn.get(name)
        avg_s = "-" if avg is None else str(avg)
        parts.append(f"{name}: {summary.wins.get(name, 0)} wins, avg turn {avg_s}")
    return " | ".join(parts)

"""Reproduction of the robustness and social-cost experiments.

Every experiment returns an :class:`ExperimentResult` (a small table plus
metadata) that is deterministic given its arguments and seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibria import (
    EquilibriumSolution,
    SolverError,
    find_existence_boundary,
    robustness_for_scale,
    solve_nash,
    solve_social_optimum,
    solve_strategically_robust,
)
from .game_model import GameSpec, RobustnessConfig, stacked_index_map
from .simulate import (
    biased_policy,
    clipped_adversarial_policy,
    component_policy,
    linear_policy,
    rollout,
)

PERCENTILES = (0.05, 0.25, 0.50, 0.75, 0.95)

#: Large finite penalty standing in for a non-robust player in the network scenarios.
NASH_PROXY_PENALTY = 100.0


@dataclass
class ExperimentResult:
    name: str
    columns: list[str]
    rows: list[list]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def write(self, out_dir: str | Path, filename: str | None = None) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / (filename or f"{self.name}.csv")
        path.write_text(self.to_csv())
        path.with_suffix(".json").write_text(json.dumps(_jsonable(self.metadata), indent=1, sort_keys=True) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def percentile(samples, q: float) -> float:
    """Linear-interpolation quantile (rank ``q * (n - 1)`` on the sorted sample)."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("quantile level must lie in [0, 1]")
    return float(np.quantile(samples, q, method="linear"))


def standard_normals(seed: int, start: int, count: int) -> np.ndarray:
    """Normal draws ``start .. start+count-1`` of the stream keyed by ``seed``.

    Draw k comes from Philox counter block k alone (Box-Muller on its first
    two words), so any slice of the stream can be generated independently.
    """
    bitgen = np.random.Philox(key=int(seed))
    bitgen.advance(int(start))
    raw = bitgen.random_raw(4 * int(count)).reshape(-1, 4)
    u1 = ((raw[:, 0] >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53  # (0, 1]
    u2 = (raw[:, 1] >> np.uint64(11)).astype(float) * 2.0**-53  # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def solution_summary(sol: EquilibriumSolution) -> dict:
    cond = [c.condition_number for c in sol.conditions]
    adv = [e for c in sol.conditions for e in c.adversary_min_eig if e is not None]
    return {
        "max_condition_number": max(cond),
        "max_foc_residual": max(c.residual for c in sol.conditions),
        "min_player_eig": min(e for c in sol.conditions for e in c.player_min_eig),
        "min_adversary_eig": min(adv) if adv else None,
    }


# --- motivating example ------------------------------------------------------


def mid_horizon_coefficient(spec: GameSpec, sol: EquilibriumSolution) -> float:
    """Closed-loop coefficient at stage T//2 (scalar games)."""
    return float(sol.closed_loop(spec, spec.horizon // 2)[0, 0])


def motivating_example(spec: GameSpec, m: float = 1.2) -> ExperimentResult:
    ne = solve_nash(spec)
    sr = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [m, None]))
    rows = [["NE", mid_horizon_coefficient(spec, ne)], ["SR", mid_horizon_coefficient(spec, sr)]]
    return ExperimentResult(
        name="motivating",
        columns=["equilibrium", "mid_horizon_coefficient"],
        rows=rows,
        metadata={
            "horizon": spec.horizon,
            "m_player1": m,
            "coefficients_NE": [float(ne.closed_loop(spec, t)[0, 0]) for t in range(spec.horizon)],
            "coefficients_SR": [float(sr.closed_loop(spec, t)[0, 0]) for t in range(spec.horizon)],
            "solver_NE": solution_summary(ne),
            "solver_SR": solution_summary(sr),
        },
    )


# --- Monte Carlo bias study --------------------------------------------------


def bias_costs(spec: GameSpec, player1_gains, player2_gains, biases: np.ndarray) -> np.ndarray:
    """Player 1's realized cost when player 2 adds a constant bias to its gains."""
    biases = np.asarray(biases, dtype=float).reshape(-1, 1)
    x0 = np.broadcast_to(spec.x0, (biases.shape[0], spec.state_dim))
    policies = [linear_policy(player1_gains), biased_policy(linear_policy(player2_gains), biases)]
    return rollout(spec, policies, x0=x0).per_player_costs[0]


def monte_carlo_bias(spec: GameSpec, ne_solution: EquilibriumSolution, sr_solution: EquilibriumSolution,
                     n_samples: int = 100_000, seed: int = 0, bias_scale: float = 1.0,
                     chunk_size: int = 16_384, workers: int = 1) -> ExperimentResult:
    """Cost percentiles of player 1 when player 2's Nash policy drifts by b ~ N(0, scale^2).

    Player 1 plays either its Nash gains or its robust gains; player 2
    always plays its Nash gains plus the drift.
    """
    if spec.n_players != 2:
        raise ValueError("the bias study is defined for two-player games")
    starts = list(range(0, n_samples, chunk_size))

    def chunk(start):
        b = bias_scale * standard_normals(seed, start, min(chunk_size, n_samples - start))
        return (bias_costs(spec, ne_solution.K[0], ne_solution.K[1], b),
                bias_costs(spec, sr_solution.K[0], ne_solution.K[1], b))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    costs = {"NE": np.concatenate([p[0] for p in parts]), "SR": np.concatenate([p[1] for p in parts])}
    rows = [[name] + [percentile(c, q) for q in PERCENTILES] for name, c in costs.items()]
    return ExperimentResult(
        name="table1",
        columns=["equilibrium"] + [f"p{int(round(100 * q))}" for q in PERCENTILES],
        rows=rows,
        metadata={
            "seed": seed,
            "n_samples": n_samples,
            "bias_scale": bias_scale,
            "chunk_size": chunk_size,
            "means": {k: float(v.mean()) for k, v in costs.items()},
            "solver_NE": solution_summary(ne_solution),
            "solver_SR": solution_summary(sr_solution),
        },
    )


# --- adversarial budget sweep -------------------------------------------------


def budget_grid(stop: float = 2.0, step: float = 0.05) -> np.ndarray:
    return np.round(np.arange(0.0, stop + 0.5 * step, step), 12)


def level_label(m: float | None) -> str:
    return "NE" if m is None else f"M={m:.3f}"


def adversarial_budget_sweep(spec: GameSpec, levels: Sequence[float | None] = (None, 1.2, 1.4, 2.5),
                             budgets: Sequence[float] | None = None,
                             reference_level: float = 1.2) -> ExperimentResult:
    """Player 1's realized cost against a rogue player 2 with growing budget.

    ``None`` in ``levels`` is the Nash case.  The rogue player drifts from
    its Nash policy toward the player-2 component of player 1's adversary
    in the equilibrium solved with ``M^1 = reference_level``.
    """
    if spec.n_players != 2:
        raise ValueError("the budget sweep is defined for two-player games")
    budgets = budget_grid() if budgets is None else np.asarray(budgets, dtype=float)
    ne = solve_nash(spec)
    reference = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [reference_level, None]))
    adversary = component_policy(reference.L[0], stacked_index_map(spec, 0), 1)
    ne2 = linear_policy(ne.K[1])
    solutions = {}
    for m in levels:
        solutions[level_label(m)] = ne if m is None else solve_strategically_robust(
            spec, RobustnessConfig.from_levels(spec, [m, None]))
    rows = []
    for c in budgets:
        rogue = clipped_adversarial_policy(ne2, adversary, float(c))
        row = [float(c)]
        for sol in solutions.values():
            row.append(float(rollout(spec, [linear_policy(sol.K[0]), rogue]).per_player_costs[0]))
        rows.append(row)
    return ExperimentResult(
        name="fig1_adversarial",
        columns=["c"] + [f"{k}_cost" for k in solutions],
        rows=rows,
        metadata={
            "levels": [level_label(m) for m in levels],
            "reference_level": reference_level,
            "budgets": budgets,
            "solvers": {k: solution_summary(v) for k, v in solutions.items()},
        },
    )


# --- social cost sweeps --------------------------------------------------------


def inverse_penalty_grid(stop: float, step: float) -> np.ndarray:
    return np.round(np.arange(0.0, stop + 0.5 * step, step), 12)


def social_cost_sweep(spec: GameSpec, mode: str, grid: Sequence[float], player: int = 0,
                      nonrobust_penalty: float | None = None, name: str = "social_sweep") -> ExperimentResult:
    """Social cost of the equilibrium as robustness grows (``s = 1/M``).

    ``mode`` is ``"single"`` (only ``player`` robust) or ``"all"``.  Solver
    failures are recorded per grid point; the first failing point and a
    bisection-refined boundary go into the metadata.
    """
    pattern = {"single": "single", "all": "symmetric", "symmetric": "symmetric"}[mode]
    grid = np.asarray(sorted(float(s) for s in grid))
    rows = []
    first_failure = None
    for s in grid:
        rob = robustness_for_scale(spec, pattern, s, player, nonrobust_penalty)
        try:
            sol = solve_strategically_robust(spec, rob)
            traj = rollout(spec, [linear_policy(k) for k in sol.K])
            rows.append([float(s), math.inf if s == 0 else 1.0 / s, float(traj.social_cost), 1, ""])
        except SolverError as exc:
            if first_failure is None:
                first_failure = (float(s), type(exc).__name__, str(exc))
            rows.append([float(s), 1.0 / s, math.nan, 0, type(exc).__name__])
    boundary = find_existence_boundary(spec, pattern, grid, player, nonrobust_penalty=nonrobust_penalty)
    ne_social = float(rollout(spec, [linear_policy(k) for k in solve_nash(spec).K]).social_cost)
    optimum = solve_social_optimum(spec).cost
    feasible = [r[2] for r in rows if r[3] == 1]
    return ExperimentResult(
        name=name,
        columns=["s", "M", "social_cost", "exists", "failure"],
        rows=rows,
        metadata={
            "mode": mode,
            "robust_player": player if pattern == "single" else "all",
            "nonrobust_penalty": nonrobust_penalty,
            "grid": grid,
            "first_failure": first_failure,
            "boundary_s": boundary.s_critical if boundary.found else None,
            "boundary_bracket": boundary.bracket,
            "ne_social_cost": ne_social,
            "social_optimum": optimum,
            "min_social_cost": min(feasible) if feasible else None,
        },
    )


# --- network scenarios ----------------------------------------------------------


def network_scenarios(spec: GameSpec, center_penalty: float = 0.16,
                      nonrobust_penalty: float | None = NASH_PROXY_PENALTY,
                      adversarial_leaves: Sequence[int] = (1, 2),
                      bystanders: str = "equilibrium") -> ExperimentResult:
    """Center-node outcomes in the four network scenarios.

    Player 0 is the center.  "Non-robust" players use ``nonrobust_penalty``
    (``None`` for the exact limit).  In the adversarial scenarios the leaves
    in ``adversarial_leaves`` play their component of the robust center's
    adversary; the remaining leaves keep their equilibrium gains of the
    scenario (``bystanders="equilibrium"``) or play Nash (``"nash"``).
    """
    N = spec.n_players
    base = None if nonrobust_penalty is None else float(nonrobust_penalty)
    ne = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [base] * N))
    sr = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [center_penalty] + [base] * (N - 1)))
    index_map = stacked_index_map(spec, 0)

    def adversarial(center_sol):
        keep = center_sol if bystanders == "equilibrium" else ne
        pols = [linear_policy(center_sol.K[0])]
        for j in range(1, N):
            if j in adversarial_leaves:
                pols.append(component_policy(sr.L[0], index_map, j))
            else:
                pols.append(linear_policy(keep.K[j]))
        return pols

    if bystanders not in ("equilibrium", "nash"):
        raise ValueError(f"unknown bystander rule {bystanders!r}")
    scenarios = {
        "NE": [linear_policy(k) for k in ne.K],
        "SR": [linear_policy(k) for k in sr.K],
        "NE (adv.)": adversarial(ne),
        "SR (adv.)": adversarial(sr),
    }
    rows = []
    center_states = {}
    for name, pols in scenarios.items():
        traj = rollout(spec, pols)
        rows.append([name, float(traj.states[-1, 0]), float(traj.per_player_costs[0])])
        center_states[name] = traj.states[:, 0]
    return ExperimentResult(
        name="table2_network",
        columns=["scenario", "terminal_center_state", "center_cost"],
        rows=rows,
        metadata={
            "center_penalty": center_penalty,
            "nonrobust_penalty": nonrobust_penalty,
            "adversarial_leaves": [j + 1 for j in adversarial_leaves],
            "bystanders": bystanders,
            "center_state_trajectories": center_states,
            "solver_NE": solution_summary(ne),
            "solver_SR": solution_summary(sr),
        },
    )


def social_cost_figure(spec: GameSpec, grid: Sequence[float], name: str, player: int = 0,
                       nonrobust_penalty: float | None = None) -> ExperimentResult:
    """Both sweep modes in one table, tagged by a leading ``mode`` column."""
    parts = {mode: social_cost_sweep(spec, mode, grid, player, nonrobust_penalty) for mode in ("single", "all")}
    rows = [[mode] + row for mode, res in parts.items() for row in res.rows]
    return ExperimentResult(
        name=name,
        columns=["mode"] + parts["single"].columns,
        rows=rows,
        metadata={mode: res.metadata for mode, res in parts.items()},
    )

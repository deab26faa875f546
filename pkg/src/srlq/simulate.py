"""Rollouts of the true coupled dynamics under stage-indexed feedback policies.

Policies map ``(t, x)`` to an input.  ``x`` may carry leading batch
dimensions (shape ``(..., n)``); every policy here is vectorised over
them, which is what the Monte Carlo experiments rely on.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .equilibria import best_response_adversary, stack_others
from .game_model import GameSpec, RobustnessConfig, StackedIndexMap

DIVERGENCE_LIMIT = 1e12


class RolloutDiverged(RuntimeError):
    def __init__(self, stage: int):
        self.stage = stage
        super().__init__(f"state left the finite range (|x| > {DIVERGENCE_LIMIT:g}) at stage t={stage}")


class Policy:
    dim: int

    def __call__(self, t: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearPolicy(Policy):
    gains: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.gains[0].shape[0]

    def __call__(self, t, x):
        return x @ self.gains[t].T


@dataclass(frozen=True)
class BiasedPolicy(Policy):
    base: Policy
    offset: np.ndarray

    @property
    def dim(self) -> int:
        return self.base.dim

    def __call__(self, t, x):
        return self.base(t, x) + self.offset


def clip_deviation(y: np.ndarray, budget: float) -> np.ndarray:
    return np.clip(y, -budget, budget)


@dataclass(frozen=True)
class ClippedAdversarialPolicy(Policy):
    """``base - clip(base - adversary, -c, c)``: drift toward the adversary by at most c."""

    base: Policy
    adversary: Policy
    budget: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def __call__(self, t, x):
        nominal = self.base(t, x)
        return nominal - clip_deviation(nominal - self.adversary(t, x), self.budget)


@dataclass(frozen=True)
class ExternalPolicy(Policy):
    fn: Callable[[int, np.ndarray], np.ndarray]
    dim: int

    def __call__(self, t, x):
        return np.asarray(self.fn(t, x), dtype=float)


def linear_policy(gains: Sequence[np.ndarray]) -> LinearPolicy:
    gains = tuple(np.atleast_2d(np.asarray(k, dtype=float)) for k in gains)
    if len({k.shape for k in gains}) > 1:
        raise ValueError("dimension mismatch: linear gains change shape across stages")
    return LinearPolicy(gains)


def biased_policy(base: Policy, offset) -> BiasedPolicy:
    offset = np.asarray(offset, dtype=float)
    if offset.shape[-1:] != (base.dim,) and offset.ndim > 0:
        raise ValueError(f"dimension mismatch: offset has trailing size {offset.shape[-1]}, expected {base.dim}")
    if offset.ndim == 0:
        offset = np.full(base.dim, float(offset))
    return BiasedPolicy(base, offset)


def clipped_adversarial_policy(ne_policy: Policy, adversary: Policy, budget: float) -> ClippedAdversarialPolicy:
    if budget < 0:
        raise ValueError("perturbation budget must be nonnegative")
    if adversary.dim != ne_policy.dim:
        raise ValueError("dimension mismatch: adversary component and base policy differ in size")
    return ClippedAdversarialPolicy(ne_policy, adversary, float(budget))


def component_policy(adversary_gains: Sequence[np.ndarray], index_map: StackedIndexMap, opponent: int) -> LinearPolicy:
    """The part of player ``index_map.player``'s adversary that impersonates ``opponent``."""
    if opponent not in index_map.blocks:
        raise ValueError(f"player {opponent + 1} is not an opponent of player {index_map.player + 1}")
    rows = index_map.blocks[opponent]
    return LinearPolicy(tuple(np.asarray(L)[rows] for L in adversary_gains))


@dataclass(frozen=True)
class Trajectory:
    """States ``(T+1, ..., n)``, per-player inputs ``(T, ..., d_i)``, costs ``(N, ...)``."""

    states: np.ndarray
    inputs: tuple[np.ndarray, ...]
    per_player_costs: np.ndarray
    social_cost: np.ndarray | float

    def to_csv(self) -> str:
        """Per-stage rows ``t, x_1..x_n, u_<player>_<k>``, then a cost summary block.

        Inputs at the terminal stage are left empty.  The summary block
        starts after a blank line with header ``player,cost``; its last
        row is ``social,<sum>``.
        """
        if self.states.ndim != 2:
            raise ValueError("only unbatched trajectories can be exported")
        T, n = self.states.shape[0] - 1, self.states.shape[1]
        header = ["t"] + [f"x_{k + 1}" for k in range(n)]
        for i, u in enumerate(self.inputs):
            header += [f"u_{i + 1}_{k + 1}" for k in range(u.shape[-1])]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for t in range(T + 1):
            row = [t] + [repr(float(v)) for v in self.states[t]]
            for u in self.inputs:
                row += [repr(float(v)) for v in u[t]] if t < T else [""] * u.shape[-1]
            w.writerow(row)
        w.writerow([])
        w.writerow(["player", "cost"])
        for i, c in enumerate(self.per_player_costs):
            w.writerow([i + 1, repr(float(c))])
        w.writerow(["social", repr(float(self.social_cost))])
        return buf.getvalue()


def _quad(x, M):
    return np.einsum("...i,ij,...j->...", x, M, x)


def rollout(spec: GameSpec, policies: Sequence[Policy], x0: np.ndarray | None = None) -> Trajectory:
    """Simulate the game from ``x0`` (default ``spec.x0``) and score each player.

    ``x0`` may be a batch of initial states of shape ``(..., n)``.
    """
    N, T = spec.n_players, spec.horizon
    if len(policies) != N:
        raise ValueError(f"expected {N} policies, got {len(policies)}")
    x = np.asarray(spec.x0 if x0 is None else x0, dtype=float)
    states = [x]
    inputs = [[] for _ in range(N)]
    costs = np.zeros((N,) + x.shape[:-1])
    for t in range(T):
        u = [np.broadcast_to(np.asarray(policies[j](t, x), dtype=float), x.shape[:-1] + (spec.input_dims[j],))
             for j in range(N)]
        for i in range(N):
            u_others = np.concatenate([u[j] for j in spec.opponents(i)], axis=-1) if N > 1 else None
            costs[i] += _quad(x, spec.Q[i][t]) + _quad(u[i], spec.R[i][t])
            if u_others is not None:
                costs[i] -= _quad(u_others, spec.S[i][t])
            inputs[i].append(u[i])
        x = x @ spec.A[t].T + sum(u[j] @ spec.B[j][t].T for j in range(N))
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise RolloutDiverged(t + 1)
        states.append(x)
    for i in range(N):
        costs[i] += _quad(x, spec.Q_terminal[i])
    return Trajectory(
        states=np.stack(states),
        inputs=tuple(np.stack(u) for u in inputs),
        per_player_costs=costs,
        social_cost=costs.sum(axis=0),
    )


def equilibrium_policies(gains: Sequence[Sequence[np.ndarray]]) -> list[LinearPolicy]:
    return [linear_policy(k) for k in gains]


def evaluate_robust_cost(spec: GameSpec, robustness: RobustnessConfig,
                         gains: Sequence[Sequence[np.ndarray]], i: int) -> float:
    """Player i's strategically robust cost of a linear gain profile."""
    worst = best_response_adversary(spec, robustness, gains, i)
    return worst.value(spec.x0)


def augmented_cost(spec: GameSpec, robustness: RobustnessConfig, gains: Sequence[Sequence[np.ndarray]],
                   adversary_gains: Sequence[np.ndarray], i: int, x0: np.ndarray | None = None) -> float:
    """Player i's cost in the simultaneous game against a given adversary policy.

    The state follows the worst-case dynamics driven by player i's input and
    the adversary's stand-in for the opponents; the actual opponents' inputs
    only enter through the deviation penalty.
    """
    x = np.asarray(spec.x0 if x0 is None else x0, dtype=float)
    J = 0.0
    for t in range(spec.horizon):
        u = gains[i][t] @ x
        u_others = stack_others(spec, [g[t] for g in gains], i) @ x
        d = adversary_gains[t] @ x
        J += x @ spec.Q[i][t] @ x + u @ spec.R[i][t] @ u - d @ spec.S[i][t] @ d
        if robustness.is_robust(i):
            J -= (d - u_others) @ robustness.penalty[i][t] @ (d - u_others)
        x = spec.A[t] @ x + spec.B[i][t] @ u + spec.B_others(i, t) @ d
    return float(J + x @ spec.Q_terminal[i] @ x)

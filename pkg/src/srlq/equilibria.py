"""Coupled backward Riccati recursion for strategically robust equilibria.

At each stage the gains of every player (``K^i``) and of every robust
player's fictitious adversary (``L^i``) solve one stacked linear system
``H g = G``.  Row/column blocks are ordered ``K^1, L^1, K^2, L^2, ...``;
``L^i`` blocks exist only for robust players.  A non-robust player's
adversary is pinned to the opponents' actual gains, so its rows are
eliminated analytically instead of approximated with a large penalty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .game_model import GameSpec, RobustnessConfig, ensure_valid, stacked_index_map

COND_LIMIT = 1e12


class SolverError(RuntimeError):
    """Base class for failures of the backward recursion."""

    condition = "solver failure"

    def __init__(self, stage: int, player: int | None = None, detail: str = ""):
        self.stage = stage
        self.player = player
        where = f"stage t={stage}" + ("" if player is None else f", player {player + 1}")
        msg = f"{type(self).__name__} at {where}: {self.condition}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class PlayerConvexityFailure(SolverError):
    condition = "R + B' P B is not positive definite"


class AdversaryConcavityFailure(SolverError):
    condition = "M + S - B_-i' P B_-i is not positive definite; the adversary is too strong"


class SingularStageSystem(SolverError):
    condition = "stacked stage matrix H is numerically singular"


class ReducedLQRIllPosed(SolverError):
    condition = "reduced single-player problem is not strictly convex"


class AdversaryUnbounded(SolverError):
    condition = "inner maximisation is unbounded; robust cost is +inf"


class IndefiniteSocialCost(SolverError):
    condition = "summed input cost of the centralized problem is not positive definite"


def strictly_positive(block: np.ndarray) -> tuple[bool, float]:
    """Smallest eigenvalue of the symmetric part and whether it clears the threshold."""
    if block.size == 0:
        return True, np.inf
    eigs = np.linalg.eigvalsh(0.5 * (block + block.T))
    # the blocks tested here are symmetric, so the spectral norm is max |eig|
    norm = max(abs(eigs[0]), abs(eigs[-1]))
    return bool(eigs[0] > 1e-10 * (1.0 + norm)), float(eigs[0])


@dataclass(frozen=True)
class StageSystem:
    H: np.ndarray
    G: np.ndarray
    # per player: (slice of K^i rows, slice of L^i rows or None)
    layout: tuple[tuple[slice, slice | None], ...]
    player_min_eig: tuple[float, ...]
    adversary_min_eig: tuple[float | None, ...]
    player_convex: tuple[bool, ...]
    adversary_concave: tuple[bool | None, ...]


@dataclass(frozen=True)
class StageCondition:
    stage: int
    player_min_eig: tuple[float, ...]
    adversary_min_eig: tuple[float | None, ...]
    condition_number: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "player_min_eig": list(self.player_min_eig),
            "adversary_min_eig": list(self.adversary_min_eig),
            "condition_number": self.condition_number,
            "foc_residual": self.residual,
        }


@dataclass(frozen=True)
class EquilibriumSolution:
    """Gains ``K[i][t]``, adversary gains ``L[i][t]`` and values ``P[i][t]``.

    ``P[i]`` has ``T + 1`` entries with ``P[i][T]`` the terminal cost.
    For a non-robust player ``L[i][t]`` is the stacked opponent gains.
    """

    K: tuple[tuple[np.ndarray, ...], ...]
    L: tuple[tuple[np.ndarray, ...], ...]
    P: tuple[tuple[np.ndarray, ...], ...]
    conditions: tuple[StageCondition, ...]

    @property
    def horizon(self) -> int:
        return len(self.conditions)

    def closed_loop(self, spec: GameSpec, t: int) -> np.ndarray:
        return spec.A[t] + sum(spec.B[j][t] @ self.K[j][t] for j in range(spec.n_players))

    def value(self, i: int, x0: np.ndarray) -> float:
        return float(x0 @ self.P[i][0] @ x0)

    def to_json(self) -> str:
        """Stage-major export: ``K[t][i]``, ``L[t][i]``, ``P[t][i]`` as nested row-major lists."""
        N = len(self.K)
        T = self.horizon
        doc = {
            "K": [[self.K[i][t].tolist() for i in range(N)] for t in range(T)],
            "L": [[self.L[i][t].tolist() for i in range(N)] for t in range(T)],
            "P": [[self.P[i][t].tolist() for i in range(N)] for t in range(T + 1)],
            "conditions": [c.to_dict() for c in self.conditions],
        }
        return json.dumps(doc, indent=1)


def _layout(spec: GameSpec, robustness: RobustnessConfig):
    layout = []
    off = 0
    for i in range(spec.n_players):
        k = slice(off, off + spec.input_dims[i])
        off = k.stop
        lsl = None
        if robustness.is_robust(i):
            lsl = slice(off, off + spec.opponent_dim(i))
            off = lsl.stop
        layout.append((k, lsl))
    return tuple(layout), off


def assemble_stage_system(spec: GameSpec, robustness: RobustnessConfig,
                          next_values: Sequence[np.ndarray], t: int) -> StageSystem:
    N, n = spec.n_players, spec.state_dim
    layout, size = _layout(spec, robustness)
    H = np.zeros((size, size))
    G = np.zeros((size, n))
    A = spec.A[t]
    player_eigs, adv_eigs, player_ok, adv_ok = [], [], [], []
    for i in range(N):
        P = next_values[i]
        Bi = spec.B[i][t]
        Bo = spec.B_others(i, t)
        ks, ls = layout[i]
        Huu = spec.R[i][t] + Bi.T @ P @ Bi
        H[ks, ks] = Huu
        G[ks] = -Bi.T @ P @ A
        ok, lam = strictly_positive(Huu)
        player_ok.append(ok)
        player_eigs.append(lam)
        if ls is None:
            # d^i = u^{-i}: opponents' gains enter player i's row directly
            for j in spec.opponents(i):
                H[ks, layout[j][0]] = Bi.T @ P @ spec.B[j][t]
            adv_eigs.append(None)
            adv_ok.append(None)
            continue
        M = robustness.penalty[i][t]
        Hdd = M + spec.S[i][t] - Bo.T @ P @ Bo
        H[ks, ls] = Bi.T @ P @ Bo
        H[ls, ls] = Hdd
        H[ls, ks] = -Bo.T @ P @ Bi
        G[ls] = Bo.T @ P @ A
        for j, cols in stacked_index_map(spec, i).blocks.items():
            H[ls, layout[j][0]] = -M[:, cols]
        ok, lam = strictly_positive(Hdd)
        adv_ok.append(ok)
        adv_eigs.append(lam)
    return StageSystem(H=H, G=G, layout=layout, player_min_eig=tuple(player_eigs),
                       adversary_min_eig=tuple(adv_eigs), player_convex=tuple(player_ok),
                       adversary_concave=tuple(adv_ok))


def riccati_step(spec: GameSpec, robustness: RobustnessConfig, next_values: Sequence[np.ndarray],
                 K: Sequence[np.ndarray], L: Sequence[np.ndarray | None], t: int) -> list[np.ndarray]:
    """Value matrices at stage t given the stage gains.

    ``K[i]`` is player i's gain and ``L[i]`` its adversary's gain; for
    non-robust players ``L[i]`` is ignored and replaced by the stacked
    opponent gains.
    """
    out = []
    for i in range(spec.n_players):
        K_others = stack_others(spec, K, i)
        Li = L[i] if robustness.is_robust(i) else K_others
        F = spec.A[t] + spec.B[i][t] @ K[i] + spec.B_others(i, t) @ Li
        Pi = (spec.Q[i][t] + K[i].T @ spec.R[i][t] @ K[i] - Li.T @ spec.S[i][t] @ Li
              + F.T @ next_values[i] @ F)
        if robustness.is_robust(i):
            dev = Li - K_others
            Pi = Pi - dev.T @ robustness.penalty[i][t] @ dev
        out.append(0.5 * (Pi + Pi.T))
    return out


def stack_others(spec: GameSpec, K: Sequence[np.ndarray], i: int) -> np.ndarray:
    blocks = [K[j] for j in spec.opponents(i)]
    if not blocks:
        return np.zeros((0, spec.state_dim))
    return np.vstack(blocks)


def solve_stage(system: StageSystem, t: int) -> tuple[np.ndarray, float, float]:
    """Check the stage conditions and solve ``H g = G``.

    Returns the stacked gains, the condition number and the FOC residual.
    """
    for i, ok in enumerate(system.player_convex):
        if not ok:
            raise PlayerConvexityFailure(t, i, f"lambda_min={system.player_min_eig[i]:.3e}")
    for i, ok in enumerate(system.adversary_concave):
        if ok is False:
            raise AdversaryConcavityFailure(t, i, f"lambda_min={system.adversary_min_eig[i]:.3e}")
    cond = float(np.linalg.cond(system.H))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularStageSystem(t, None, f"cond={cond:.3e}")
    lu = scipy.linalg.lu_factor(system.H)
    g = scipy.linalg.lu_solve(lu, system.G)
    residual = float(np.max(np.abs(system.H @ g - system.G), initial=0.0))
    return g, cond, residual


def solve_strategically_robust(spec: GameSpec, robustness: RobustnessConfig) -> EquilibriumSolution:
    """Unique linear subgame-perfect strategically robust equilibrium."""
    ensure_valid(spec, robustness)
    N, T = spec.n_players, spec.horizon
    P = [spec.Q_terminal[i] for i in range(N)]
    Ks = [[None] * T for _ in range(N)]
    Ls = [[None] * T for _ in range(N)]
    Ps = [[None] * (T + 1) for _ in range(N)]
    for i in range(N):
        Ps[i][T] = P[i]
    conditions = [None] * T
    for t in range(T - 1, -1, -1):
        system = assemble_stage_system(spec, robustness, P, t)
        g, cond, residual = solve_stage(system, t)
        K = [g[system.layout[i][0]] for i in range(N)]
        L = []
        for i in range(N):
            ls = system.layout[i][1]
            L.append(g[ls] if ls is not None else stack_others(spec, K, i))
        P = riccati_step(spec, robustness, P, K, L, t)
        for i in range(N):
            Ks[i][t], Ls[i][t], Ps[i][t] = K[i], L[i], P[i]
        conditions[t] = StageCondition(t, system.player_min_eig, system.adversary_min_eig, cond, residual)
    return EquilibriumSolution(
        K=tuple(tuple(k) for k in Ks),
        L=tuple(tuple(l) for l in Ls),
        P=tuple(tuple(p) for p in Ps),
        conditions=tuple(conditions),
    )


def solve_nash(spec: GameSpec) -> EquilibriumSolution:
    """Feedback Nash equilibrium (every player non-robust)."""
    return solve_strategically_robust(spec, RobustnessConfig.nash(spec))


# --- spectral dominance -----------------------------------------------------


@dataclass(frozen=True)
class DominanceMargin:
    player: int
    lhs: float
    rhs: float

    @property
    def passes(self) -> bool:
        return self.lhs > self.rhs


@dataclass(frozen=True)
class SpectralDominanceReport:
    margins: tuple[DominanceMargin, ...]
    # common lambda when every M is lambda * I, with the (N-1)/2 * lambda bound
    uniform_lambda: float | None = None
    uniform_rhs: float | None = None

    @property
    def passes(self) -> bool:
        return all(m.passes for m in self.margins)


def _uniform_scale(M: np.ndarray) -> float | None:
    lam = M[0, 0] if M.size else None
    if lam is not None and np.allclose(M, lam * np.eye(M.shape[0]), rtol=0, atol=1e-14 * (1 + abs(lam))):
        return float(lam)
    return None


def check_spectral_dominance(spec: GameSpec, robustness: RobustnessConfig,
                             next_values: Sequence[np.ndarray], t: int) -> SpectralDominanceReport:
    """Sufficient (block Gershgorin) test that the stage matrix H is invertible."""
    N = spec.n_players
    if any(not robustness.is_robust(i) for i in range(N)):
        raise ValueError("spectral dominance needs a finite penalty for every player")
    maps = [stacked_index_map(spec, i) for i in range(N)]
    margins = []
    for i in range(N):
        P = next_values[i]
        Bi, Bo = spec.B[i][t], spec.B_others(i, t)
        M = robustness.penalty[i][t]
        lhs = min(
            np.linalg.eigvalsh(spec.R[i][t] + Bi.T @ P @ Bi)[0],
            np.linalg.eigvalsh(spec.S[i][t] + M - Bo.T @ P @ Bo)[0] if M.size else np.inf,
        )
        rhs = 0.0
        for j in spec.opponents(i):
            M_ij = M[:, maps[i].blocks[j]]
            M_ji = robustness.penalty[j][t][:, maps[j].blocks[i]]
            rhs += max(np.linalg.norm(M_ij, 2), np.linalg.norm(M_ji, 2))
        margins.append(DominanceMargin(i, float(lhs), 0.5 * rhs))
    scales = [_uniform_scale(robustness.penalty[i][t]) for i in range(N)]
    lam = scales[0] if scales and all(s is not None and s == scales[0] for s in scales) else None
    return SpectralDominanceReport(
        margins=tuple(margins),
        uniform_lambda=lam,
        uniform_rhs=None if lam is None else 0.5 * (N - 1) * lam,
    )


# --- best responses ---------------------------------------------------------


@dataclass(frozen=True)
class BestResponse:
    gains: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]  # T + 1 entries

    def value(self, x0: np.ndarray) -> float:
        return float(x0 @ self.values[0] @ x0)


def lqr_backward(A, B, Q, Q_terminal, R, error=ReducedLQRIllPosed, player=None):
    """Finite-horizon LQR by backward dynamic programming.

    ``A``, ``B``, ``Q``, ``R`` are per-stage sequences.  Returns gains
    (``u = K x``) and the ``T + 1`` value matrices.
    """
    T = len(A)
    P = np.asarray(Q_terminal, dtype=float)
    gains = [None] * T
    values = [None] * (T + 1)
    values[T] = P
    for t in range(T - 1, -1, -1):
        Huu = R[t] + B[t].T @ P @ B[t]
        ok, lam = strictly_positive(Huu)
        if not ok:
            raise error(t, player, f"lambda_min={lam:.3e}")
        K = -np.linalg.solve(Huu, B[t].T @ P @ A[t])
        F = A[t] + B[t] @ K
        P = Q[t] + K.T @ R[t] @ K + F.T @ P @ F
        P = 0.5 * (P + P.T)
        gains[t], values[t] = K, P
    return tuple(gains), tuple(values)


def best_response_player(spec: GameSpec, robustness: RobustnessConfig, adversary_gains: Sequence[np.ndarray],
                         gains: Sequence[Sequence[np.ndarray]], i: int) -> BestResponse:
    """Player i's optimal gains against a fixed adversary and fixed opponents.

    ``gains[j][t]`` are the opponents' gains (entry i is ignored);
    ``adversary_gains[t]`` is the fixed ``L^i``.  With the adversary held
    fixed player i faces a plain LQR with shifted dynamics and a modified
    state cost.
    """
    T = spec.horizon
    A_red, Q_red = [], []
    for t in range(T):
        K_others = stack_others(spec, [g[t] for g in gains], i)
        L = adversary_gains[t]
        A_red.append(spec.A[t] + spec.B_others(i, t) @ L)
        Q_t = spec.Q[i][t] - L.T @ spec.S[i][t] @ L
        if robustness.is_robust(i):
            dev = L - K_others
            Q_t = Q_t - dev.T @ robustness.penalty[i][t] @ dev
        Q_red.append(Q_t)
    K, P = lqr_backward(A_red, list(spec.B[i]), Q_red, spec.Q_terminal[i], list(spec.R[i]), player=i)
    return BestResponse(gains=K, values=P)


def best_response_adversary(spec: GameSpec, robustness: RobustnessConfig,
                            gains: Sequence[Sequence[np.ndarray]], i: int) -> BestResponse:
    """Worst-case adversary of player i against fixed linear gains of all players.

    The returned values give player i's robust cost ``x0' W_0 x0``.  For a
    non-robust player the adversary is pinned to the opponents' gains and
    the values are the nominal closed-loop cost.
    """
    T = spec.horizon
    W = spec.Q_terminal[i]
    Ls = [None] * T
    Ws = [None] * (T + 1)
    Ws[T] = W
    for t in range(T - 1, -1, -1):
        K_i = gains[i][t]
        K_others = stack_others(spec, [g[t] for g in gains], i)
        Bo = spec.B_others(i, t)
        A_cl = spec.A[t] + spec.B[i][t] @ K_i
        S = spec.S[i][t]
        if robustness.is_robust(i):
            M = robustness.penalty[i][t]
            Hdd = S + M - Bo.T @ W @ Bo
            ok, lam = strictly_positive(Hdd)
            if not ok:
                raise AdversaryUnbounded(t, i, f"lambda_min={lam:.3e}")
            L = np.linalg.solve(Hdd, M @ K_others + Bo.T @ W @ A_cl)
            dev = L - K_others
            penalty = dev.T @ M @ dev
        else:
            L = K_others
            penalty = 0.0
        F = A_cl + Bo @ L
        W = spec.Q[i][t] + K_i.T @ spec.R[i][t] @ K_i - L.T @ S @ L - penalty + F.T @ W @ F
        W = 0.5 * (W + W.T)
        Ls[t], Ws[t] = L, W
    return BestResponse(gains=tuple(Ls), values=tuple(Ws))


# --- existence boundary -----------------------------------------------------

Pattern = Literal["symmetric", "single"]


def robustness_for_scale(spec: GameSpec, pattern: Pattern, s: float, player: int = 0,
                         nonrobust_penalty: float | None = None) -> RobustnessConfig:
    """Penalty ``M = (1/s) I`` for the robust player(s); ``s = 0`` means non-robust.

    ``nonrobust_penalty`` replaces the exact non-robust limit by a finite
    ``m * I`` for the players that are not swept (``None`` keeps it exact).
    """
    base = None if nonrobust_penalty is None else float(nonrobust_penalty)
    levels = [base] * spec.n_players
    level = None if s == 0 else 1.0 / s
    if pattern == "symmetric":
        levels = [level] * spec.n_players
    elif pattern == "single":
        levels[player] = level
    else:
        raise ValueError(f"unknown robustness pattern {pattern!r}")
    return RobustnessConfig.from_levels(spec, levels)


@dataclass(frozen=True)
class ExistenceBoundary:
    s_critical: float
    bracket: tuple[float, float] | None  # (last success, first failure)
    failure: SolverError | None

    @property
    def found(self) -> bool:
        return self.bracket is not None


def find_existence_boundary(spec: GameSpec, pattern: Pattern, grid: Sequence[float],
                            player: int = 0, tol: float = 1e-4,
                            nonrobust_penalty: float | None = None) -> ExistenceBoundary:
    """Largest inverse penalty s for which the equilibrium exists.

    Scans the ascending ``grid`` for the first failing point, then bisects
    between it and the last success down to ``tol``.  Returns the top of
    the grid with ``bracket=None`` if nothing fails.
    """
    def attempt(s):
        try:
            solve_strategically_robust(spec, robustness_for_scale(spec, pattern, s, player, nonrobust_penalty))
            return None
        except SolverError as exc:
            return exc

    grid = sorted(float(s) for s in grid)
    last_ok = None
    for s in grid:
        exc = attempt(s)
        if exc is None:
            last_ok = s
            continue
        if last_ok is None:
            return ExistenceBoundary(s_critical=s, bracket=None, failure=exc)
        lo, hi, failure = last_ok, s, exc
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            exc = attempt(mid)
            if exc is None:
                lo = mid
            else:
                hi, failure = mid, exc
        return ExistenceBoundary(s_critical=lo, bracket=(lo, hi), failure=failure)
    return ExistenceBoundary(s_critical=grid[-1] if grid else 0.0, bracket=None, failure=None)


# --- social optimum ---------------------------------------------------------


@dataclass(frozen=True)
class SocialOptimum:
    gains: tuple[np.ndarray, ...]  # joint input u = K x, players stacked in order
    values: tuple[np.ndarray, ...]
    cost: float

    def player_gains(self, spec: GameSpec, t: int) -> list[np.ndarray]:
        offs = np.cumsum((0,) + spec.input_dims)
        return [self.gains[t][offs[j]:offs[j + 1]] for j in range(spec.n_players)]


def social_input_cost(spec: GameSpec, t: int) -> np.ndarray:
    """Joint input weight: block-diagonal R^j minus each player's S^i embedded."""
    offs = np.cumsum((0,) + spec.input_dims)
    m = offs[-1]
    R = np.zeros((m, m))
    for j in range(spec.n_players):
        R[offs[j]:offs[j + 1], offs[j]:offs[j + 1]] += spec.R[j][t]
    for i in range(spec.n_players):
        idx = np.concatenate([np.arange(offs[j], offs[j + 1]) for j in spec.opponents(i)]) \
            if spec.n_players > 1 else np.array([], dtype=int)
        R[np.ix_(idx, idx)] -= spec.S[i][t]
    return R


def solve_social_optimum(spec: GameSpec) -> SocialOptimum:
    """Centralized LQR minimizing the sum of all players' nominal costs."""
    ensure_valid(spec)
    T, N = spec.horizon, spec.n_players
    R = []
    for t in range(T):
        Rt = social_input_cost(spec, t)
        ok, lam = strictly_positive(Rt)
        if not ok:
            raise IndefiniteSocialCost(t, None, f"lambda_min={lam:.3e}")
        R.append(Rt)
    Q = [sum(spec.Q[i][t] for i in range(N)) for t in range(T)]
    QT = sum(spec.Q_terminal[i] for i in range(N))
    B = [spec.B_joint(t) for t in range(T)]
    K, P = lqr_backward(list(spec.A), B, Q, QT, R, error=IndefiniteSocialCost)
    return SocialOptimum(gains=K, values=P, cost=float(spec.x0 @ P[0] @ spec.x0))

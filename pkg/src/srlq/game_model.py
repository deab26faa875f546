"""Game data model for finite-horizon N-player linear quadratic games.

Player indices are 0-based throughout the API.  Human-facing messages
(validation reports, solver errors) number players from 1.

Stacking convention: whenever the inputs of "all players except i" are
collected into one vector (opponent inputs, adversary decisions, the
horizontally stacked input matrices, column blocks of the robustness
penalty), the opponents appear in increasing player index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

SYM_RTOL = 1e-10
PSD_TOL = -1e-10
PD_TOL = 1e-12

#: Sentinel marking a non-robust player (penalty M -> infinity).
INF = None


def _freeze(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def is_symmetric(X: np.ndarray) -> bool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        return False
    scale = 1.0 + (np.max(np.abs(X)) if X.size else 0.0)
    return bool(np.max(np.abs(X - X.T), initial=0.0) <= SYM_RTOL * scale)


def symmetrize(X) -> np.ndarray:
    """Return (X + X')/2 if X is symmetric within tolerance, else X unchanged."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[0] == X.shape[1] and is_symmetric(X):
        return 0.5 * (X + X.T)
    return X


def min_eig(X: np.ndarray) -> float:
    if X.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])


def is_psd(X: np.ndarray) -> bool:
    return min_eig(X) >= PSD_TOL


def is_pd(X: np.ndarray) -> bool:
    return min_eig(X) > PD_TOL


def _stages(value, horizon: int) -> tuple[np.ndarray, ...]:
    """Broadcast a single matrix over the horizon, or freeze a per-stage list."""
    try:
        arr = np.asarray(value, dtype=float)
    except ValueError:
        arr = None  # ragged per-stage list
    if arr is None:
        return tuple(_freeze(symmetrize(np.atleast_2d(np.asarray(v, dtype=float)))) for v in value)
    if arr.ndim <= 2:
        # one shared read-only array for every stage
        return (_freeze(symmetrize(np.atleast_2d(arr))),) * horizon
    return tuple(_freeze(symmetrize(m)) for m in arr)


@dataclass(frozen=True)
class GameSpec:
    """Time-varying description of an N-player LQ game.

    Stage quantities are tuples of length ``horizon``; per-player
    quantities are tuples of length ``n_players`` whose entries are
    per-stage tuples.  ``Q_terminal[i]`` is the terminal state cost of
    player i and ``S[i]`` weighs the stacked opponent inputs.
    """

    n_players: int
    horizon: int
    state_dim: int
    input_dims: tuple[int, ...]
    x0: np.ndarray
    A: tuple[np.ndarray, ...]
    B: tuple[tuple[np.ndarray, ...], ...]
    Q: tuple[tuple[np.ndarray, ...], ...]
    Q_terminal: tuple[np.ndarray, ...]
    R: tuple[tuple[np.ndarray, ...], ...]
    S: tuple[tuple[np.ndarray, ...], ...]

    @classmethod
    def create(cls, A, B, Q, Q_terminal, R, x0, horizon: int, S=None) -> "GameSpec":
        """Build a spec, broadcasting time-invariant matrices over the horizon.

        ``B``, ``Q``, ``Q_terminal``, ``R`` and ``S`` are per-player
        sequences; each entry may be a single matrix or a per-stage list.
        Dimensions are inferred from ``B`` and ``x0``; nothing is
        validated here (see :func:`validate_game`).
        """
        n_players = len(B)
        x0 = _freeze(np.asarray(x0, dtype=float).reshape(-1))
        Bs = tuple(_stages(b, horizon) for b in B)
        input_dims = tuple(int(b[0].shape[1]) for b in Bs)
        if S is None:
            S = [np.zeros((sum(input_dims) - d,) * 2) for d in input_dims]
        return cls(
            n_players=n_players,
            horizon=int(horizon),
            state_dim=int(x0.shape[0]),
            input_dims=input_dims,
            x0=x0,
            A=_stages(A, horizon),
            B=Bs,
            Q=tuple(_stages(q, horizon) for q in Q),
            Q_terminal=tuple(_freeze(symmetrize(np.atleast_2d(q))) for q in Q_terminal),
            R=tuple(_stages(r, horizon) for r in R),
            S=tuple(_stages(s, horizon) for s in S),
        )

    def opponent_dim(self, i: int) -> int:
        return sum(self.input_dims) - self.input_dims[i]

    def opponents(self, i: int) -> list[int]:
        return [j for j in range(self.n_players) if j != i]

    def B_others(self, i: int, t: int) -> np.ndarray:
        """Horizontally stacked input matrices of all players except i."""
        blocks = [self.B[j][t] for j in self.opponents(i)]
        if not blocks:
            return np.zeros((self.state_dim, 0))
        return np.hstack(blocks)

    def B_joint(self, t: int) -> np.ndarray:
        return np.hstack([self.B[j][t] for j in range(self.n_players)])

    def with_x0(self, x0) -> "GameSpec":
        return replace(self, x0=_freeze(np.asarray(x0, dtype=float).reshape(-1)))


@dataclass(frozen=True)
class RobustnessConfig:
    """Per-player robustness penalties.

    ``penalty[i]`` is ``None`` (the :data:`INF` sentinel, a non-robust
    player) or a tuple of ``horizon`` symmetric positive definite matrices
    whose side is the stacked opponent input dimension of player i.
    """

    penalty: tuple[tuple[np.ndarray, ...] | None, ...]

    @classmethod
    def nash(cls, spec: GameSpec) -> "RobustnessConfig":
        return cls(penalty=(INF,) * spec.n_players)

    @classmethod
    def from_levels(cls, spec: GameSpec, levels: Sequence) -> "RobustnessConfig":
        """Build from one entry per player.

        An entry is ``None``/``"inf"``/``float('inf')`` (non-robust), a
        scalar m meaning m*I, a square matrix, a per-stage list of
        matrices, or a dict mapping opponent index -> scalar or matrix,
        assembled block-diagonally in increasing opponent order.
        """
        if len(levels) != spec.n_players:
            raise ValueError(f"expected {spec.n_players} robustness entries, got {len(levels)}")
        out = []
        for i, level in enumerate(levels):
            out.append(_penalty_entry(spec, i, level))
        return cls(penalty=tuple(out))

    @classmethod
    def uniform(cls, spec: GameSpec, m, players: Iterable[int] | None = None) -> "RobustnessConfig":
        """``m * I`` for the listed players (default: all), non-robust otherwise."""
        chosen = set(range(spec.n_players) if players is None else players)
        return cls.from_levels(spec, [m if i in chosen else INF for i in range(spec.n_players)])

    def is_robust(self, i: int) -> bool:
        return self.penalty[i] is not None

    @property
    def all_infinite(self) -> bool:
        return all(p is None for p in self.penalty)


def _is_infinite(level) -> bool:
    if level is None:
        return True
    if isinstance(level, str):
        if level.strip().lower() in ("inf", "infinite", "+inf"):
            return True
        raise ValueError(f"unrecognised robustness level {level!r}")
    if np.isscalar(level) and np.isinf(level):
        return True
    return False


def _penalty_entry(spec: GameSpec, i: int, level):
    if _is_infinite(level):
        return INF
    D = spec.opponent_dim(i)
    if isinstance(level, dict):
        index_map = stacked_index_map(spec, i)
        M = np.zeros((D, D))
        for j, sl in index_map.blocks.items():
            if j not in level:
                raise ValueError(f"per-opponent penalty of player {i + 1} misses opponent {j + 1}")
            block = level[j]
            width = sl.stop - sl.start
            M[sl, sl] = block * np.eye(width) if np.isscalar(block) else np.asarray(block, dtype=float)
        return _stages(M, spec.horizon)
    arr = np.asarray(level, dtype=float)
    if arr.ndim == 0:
        return _stages(float(arr) * np.eye(D), spec.horizon)
    return _stages(arr, spec.horizon)


@dataclass(frozen=True)
class StackedIndexMap:
    """Where each opponent's input sits inside player ``player``'s stacked vector."""

    player: int
    blocks: dict[int, slice] = field(default_factory=dict)

    @property
    def width(self) -> int:
        return max((s.stop for s in self.blocks.values()), default=0)


def stacked_index_map(spec: GameSpec, player: int) -> StackedIndexMap:
    if not 0 <= player < spec.n_players:
        raise IndexError(f"player index {player} out of range for {spec.n_players} players")
    blocks = {}
    offset = 0
    for j in spec.opponents(player):
        blocks[j] = slice(offset, offset + spec.input_dims[j])
        offset += spec.input_dims[j]
    return StackedIndexMap(player=player, blocks=blocks)


def validate_game(spec: GameSpec, robustness: RobustnessConfig | None = None) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    out: list[str] = []
    n, T, N = spec.state_dim, spec.horizon, spec.n_players

    def check_shape(name, X, shape, where):
        if X.shape != shape:
            out.append(f"dimension mismatch: {name} at {where} has shape {X.shape}, expected {shape}")
            return False
        return True

    seen: set[tuple[int, bool]] = set()

    def check_def(name, X, where, strict):
        # time-invariant data shares one array across stages; check it once
        key = (id(X), strict)
        if key in seen:
            return
        seen.add(key)
        if not is_symmetric(X):
            out.append(f"{name} not symmetric at {where}")
            return
        if strict and not is_pd(X):
            out.append(f"{name} not positive definite at {where}")
        elif not strict and not is_psd(X):
            out.append(f"{name} not positive semidefinite at {where}")

    if N < 1 or T < 1 or n < 1:
        out.append("dimension mismatch: n_players, horizon and state_dim must be positive")
        return out
    if len(spec.input_dims) != N or any(d < 1 for d in spec.input_dims):
        out.append("dimension mismatch: input_dims must list one positive size per player")
        return out
    if spec.x0.shape != (n,):
        out.append(f"dimension mismatch: x0 has shape {spec.x0.shape}, expected ({n},)")
    if len(spec.A) != T:
        out.append(f"dimension mismatch: A has {len(spec.A)} stages, expected {T}")
    for t, A in enumerate(spec.A):
        check_shape("A", A, (n, n), f"t={t}")
    per_player = {"B": spec.B, "Q": spec.Q, "R": spec.R, "S": spec.S}
    for name, seq in per_player.items():
        if len(seq) != N:
            out.append(f"dimension mismatch: {name} has {len(seq)} players, expected {N}")
            return out
    if len(spec.Q_terminal) != N:
        out.append(f"dimension mismatch: Q_terminal has {len(spec.Q_terminal)} players, expected {N}")
        return out
    for i in range(N):
        d, D = spec.input_dims[i], spec.opponent_dim(i)
        for name in per_player:
            if len(per_player[name][i]) != T:
                out.append(f"dimension mismatch: {name} of player {i + 1} has "
                           f"{len(per_player[name][i])} stages, expected {T}")
        for t in range(min(T, len(spec.B[i]))):
            check_shape("B", spec.B[i][t], (n, d), f"(player {i + 1}, t={t})")
        for t in range(min(T, len(spec.Q[i]))):
            where = f"(player {i + 1}, t={t})"
            if check_shape("Q", spec.Q[i][t], (n, n), where):
                check_def("Q", spec.Q[i][t], where, strict=False)
        for t in range(min(T, len(spec.R[i]))):
            where = f"(player {i + 1}, t={t})"
            if check_shape("R", spec.R[i][t], (d, d), where):
                check_def("R", spec.R[i][t], where, strict=True)
        for t in range(min(T, len(spec.S[i]))):
            where = f"(player {i + 1}, t={t})"
            if check_shape("S", spec.S[i][t], (D, D), where):
                check_def("S", spec.S[i][t], where, strict=False)
        where = f"(player {i + 1}, t={T})"
        if check_shape("Q_terminal", spec.Q_terminal[i], (n, n), where):
            check_def("Q_terminal", spec.Q_terminal[i], where, strict=False)

    if robustness is not None:
        if len(robustness.penalty) != N:
            out.append(f"dimension mismatch: robustness lists {len(robustness.penalty)} players, expected {N}")
            return out
        for i, Ms in enumerate(robustness.penalty):
            if Ms is None:
                continue
            if len(Ms) != T:
                out.append(f"dimension mismatch: M of player {i + 1} has {len(Ms)} stages, expected {T}")
            D = spec.opponent_dim(i)
            for t, M in enumerate(Ms):
                where = f"(player {i + 1}, t={t})"
                if check_shape("M", M, (D, D), where):
                    check_def("M", M, where, strict=True)
    return out


class InvalidGameError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid game: " + "; ".join(violations))


def ensure_valid(spec: GameSpec, robustness: RobustnessConfig | None = None) -> None:
    violations = validate_game(spec, robustness)
    if violations:
        raise InvalidGameError(violations)


# --- affine targets -------------------------------------------------------


@dataclass(frozen=True)
class AffineTarget:
    """Terminal penalty ``(selector . x - offset)^2`` for one player."""

    selector: np.ndarray
    offset: float

    @classmethod
    def coordinate(cls, n: int, k: int, offset: float) -> "AffineTarget":
        if not 0 <= k < n:
            raise ValueError(f"target coordinate {k} out of range for state dimension {n}")
        e = np.zeros(n)
        e[k] = 1.0
        return cls(selector=e, offset=float(offset))


def augment_affine_target(spec: GameSpec, targets: Sequence[AffineTarget | None]) -> GameSpec:
    """Append a constant-one state so affine terminal targets become quadratic.

    ``targets[i]`` adds ``(selector . x_T - offset)^2`` on top of player i's
    (padded) terminal cost; ``None`` leaves it unchanged.
    """
    n, N, T = spec.state_dim, spec.n_players, spec.horizon
    if len(targets) != N:
        raise ValueError(f"expected {N} targets, got {len(targets)}")
    for i, tgt in enumerate(targets):
        if tgt is not None and np.asarray(tgt.selector).shape != (n,):
            raise ValueError(f"target of player {i + 1} references coordinates outside the state")

    def pad(X):
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = X
        return out

    A = []
    for t in range(T):
        a = pad(spec.A[t])
        a[n, n] = 1.0
        A.append(a)
    B = [[np.vstack([b, np.zeros((1, b.shape[1]))]) for b in spec.B[i]] for i in range(N)]
    Q = [[pad(q) for q in spec.Q[i]] for i in range(N)]
    QT = []
    for i, tgt in enumerate(targets):
        q = pad(spec.Q_terminal[i])
        if tgt is not None:
            v = np.append(np.asarray(tgt.selector, dtype=float), -float(tgt.offset))
            q = q + np.outer(v, v)
        QT.append(q)
    return GameSpec.create(
        A=A, B=B, Q=Q, Q_terminal=QT, R=[list(r) for r in spec.R],
        S=[list(s) for s in spec.S], x0=np.append(spec.x0, 1.0), horizon=T,
    )


# --- benchmark games ------------------------------------------------------


def build_scalar_game(a: float, b: Sequence[float], horizon: int, q_terminal=1.0,
                      r=1.0, q=0.0, s=0.0, x0=1.0) -> GameSpec:
    """Scalar-state game, one scalar input per player, time-invariant data."""
    N = len(b)
    return GameSpec.create(
        A=[[a]],
        B=[[[bi]] for bi in b],
        Q=[[[q]]] * N,
        Q_terminal=[[[q_terminal]]] * N,
        R=[[[r]]] * N,
        S=[s * np.eye(N - 1)] * N,
        x0=[x0],
        horizon=horizon,
    )


def build_motivating_game(horizon: int = 50) -> GameSpec:
    """x_{t+1} = 1.05 x_t + u^1 + u^2 with unit input and terminal weights."""
    return build_scalar_game(1.05, [1.0, 1.0], horizon)


def build_collaborative_game(horizon: int = 3) -> GameSpec:
    """Two players steering an integrator from 1 to 0."""
    return build_scalar_game(1.0, [1.0, 1.0], horizon)


def star_adjacency_dynamics(n_nodes: int) -> np.ndarray:
    """Consensus matrix of a star graph with node 0 at the center."""
    if n_nodes < 2:
        raise ValueError("a star network needs at least 2 nodes")
    A = np.diag(np.full(n_nodes, 2.0 / 3.0))
    A[0, 1:] = 1.0 / (3.0 * (n_nodes - 1))
    A[1:, 0] = 1.0 / 3.0
    return A


def build_star_network_game(n_nodes: int = 5, horizon: int = 20, target: float = 5.0) -> GameSpec:
    """Star consensus game; every node drives its own state to ``target``.

    Returned in augmented coordinates (last state is the constant 1).
    """
    A = star_adjacency_dynamics(n_nodes)
    N = n_nodes
    B = [np.eye(N)[:, [i]] for i in range(N)]
    base = GameSpec.create(
        A=A, B=B, Q=[np.zeros((N, N))] * N, Q_terminal=[np.zeros((N, N))] * N,
        R=[np.eye(1)] * N, S=[np.zeros((N - 1, N - 1))] * N, x0=np.zeros(N), horizon=horizon,
    )
    return augment_affine_target(base, [AffineTarget.coordinate(N, i, target) for i in range(N)])

"""JSON game-spec documents.

Top-level keys: ``n_players``, ``horizon``, ``state_dim``, ``input_dims``,
``x0``, ``A``, ``B``, ``Q``, ``Q_terminal``, ``R``, optional ``S`` and ``M``.
``A`` is one matrix or a list of ``horizon`` matrices; ``B``, ``Q``,
``Q_terminal``, ``R``, ``S`` are lists with one entry per player, each a
matrix or a per-stage list.  ``M`` is either one entry applied to every
player or a list with one entry per player; an entry is ``"inf"``, a
number m (meaning m*I), a matrix, a per-stage list of matrices, or an
object mapping 1-based opponent numbers to a number or matrix block.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .game_model import GameSpec, RobustnessConfig


class SpecFormatError(ValueError):
    pass


def _require(doc: dict, key: str):
    if key not in doc:
        raise SpecFormatError(f"spec document misses key {key!r}")
    return doc[key]


def _per_player(doc: dict, key: str, n_players: int) -> list:
    value = _require(doc, key)
    if not isinstance(value, list) or len(value) != n_players:
        raise SpecFormatError(f"{key!r} must list one entry per player ({n_players})")
    return value


def _m_entry(entry):
    if isinstance(entry, dict):
        try:
            return {int(k) - 1: (v if np.isscalar(v) else np.asarray(v, dtype=float)) for k, v in entry.items()}
        except (TypeError, ValueError) as exc:
            raise SpecFormatError(f"bad per-opponent penalty map {entry!r}") from exc
    return entry


def game_from_dict(doc: dict) -> tuple[GameSpec, RobustnessConfig]:
    N = int(_require(doc, "n_players"))
    T = int(_require(doc, "horizon"))
    try:
        spec = GameSpec.create(
            A=_require(doc, "A"),
            B=_per_player(doc, "B", N),
            Q=_per_player(doc, "Q", N),
            Q_terminal=_per_player(doc, "Q_terminal", N),
            R=_per_player(doc, "R", N),
            S=_per_player(doc, "S", N) if "S" in doc else None,
            x0=_require(doc, "x0"),
            horizon=T,
        )
    except (TypeError, IndexError) as exc:
        raise SpecFormatError(f"malformed matrix data: {exc}") from exc
    n = int(doc.get("state_dim", spec.state_dim))
    dims = tuple(int(d) for d in doc.get("input_dims", spec.input_dims))
    if n != spec.state_dim or dims != spec.input_dims:
        raise SpecFormatError(
            f"declared dimensions (n={n}, d={dims}) disagree with the data "
            f"(n={spec.state_dim}, d={spec.input_dims})")
    M = doc.get("M", "inf")
    if isinstance(M, list) and len(M) == N and not _looks_like_matrix(M):
        levels = [_m_entry(m) for m in M]
    else:
        levels = [_m_entry(M)] * N
    robustness = RobustnessConfig.from_levels(spec, levels)
    return spec, robustness


def _looks_like_matrix(value) -> bool:
    return all(isinstance(row, list) and all(isinstance(v, (int, float)) for v in row) for row in value)


def load_game(path: str | Path) -> tuple[GameSpec, RobustnessConfig]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecFormatError(f"{path}: not valid JSON ({exc})") from exc
    return game_from_dict(doc)


def _stagewise(mats) -> list:
    first = mats[0]
    if all(np.array_equal(m, first) for m in mats):
        return first.tolist()
    return [m.tolist() for m in mats]


def game_to_dict(spec: GameSpec, robustness: RobustnessConfig | None = None) -> dict:
    """Inverse of :func:`game_from_dict`; time-invariant data is written once."""
    doc = {
        "n_players": spec.n_players,
        "horizon": spec.horizon,
        "state_dim": spec.state_dim,
        "input_dims": list(spec.input_dims),
        "x0": spec.x0.tolist(),
        "A": _stagewise(spec.A),
        "B": [_stagewise(b) for b in spec.B],
        "Q": [_stagewise(q) for q in spec.Q],
        "Q_terminal": [q.tolist() for q in spec.Q_terminal],
        "R": [_stagewise(r) for r in spec.R],
        "S": [_stagewise(s) for s in spec.S],
    }
    if robustness is not None:
        doc["M"] = ["inf" if p is None else _stagewise(p) for p in robustness.penalty]
    return doc


def dump_game(spec: GameSpec, robustness: RobustnessConfig | None = None) -> str:
    return json.dumps(game_to_dict(spec, robustness), indent=1)

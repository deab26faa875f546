"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .equilibria import SolverError, solve_nash, solve_strategically_robust
from .game_model import (
    GameSpec,
    InvalidGameError,
    RobustnessConfig,
    build_collaborative_game,
    build_motivating_game,
    build_star_network_game,
)
from .simulate import RolloutDiverged, linear_policy, rollout
from .spec_io import SpecFormatError, dump_game, load_game

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

TARGETS = ("motivating", "collab-adversarial", "collab-mc", "collab-social",
           "network-scenarios", "network-social")

BUILTIN_GAMES = {
    "motivating": lambda: build_motivating_game(50),
    "collaborative": lambda: build_collaborative_game(3),
    "network": lambda: build_star_network_game(5, 20, 5.0),
}


class UsageError(ValueError):
    pass


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--grid expects start:stop:step, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise UsageError(f"--grid needs step > 0 and stop >= start, got {text!r}")
    return np.round(np.arange(start, stop + 0.5 * step, step), 12)


def parse_m(values: list[str] | None, spec: GameSpec, robustness: RobustnessConfig) -> RobustnessConfig:
    """Apply ``--m`` overrides: ``VALUE`` for every player or ``I=VALUE`` (1-based)."""
    if not values:
        return robustness
    levels = list(robustness.penalty)
    for item in values:
        if "=" in item:
            who, val = item.split("=", 1)
            try:
                players = [int(who) - 1]
            except ValueError as exc:
                raise UsageError(f"bad --m player in {item!r}") from exc
            if not 0 <= players[0] < spec.n_players:
                raise UsageError(f"--m player {who} out of range")
        else:
            players, val = list(range(spec.n_players)), item
        level = None if val.strip().lower() == "inf" else _float(val)
        single = RobustnessConfig.from_levels(spec, [level] * spec.n_players)
        for i in players:
            levels[i] = single.penalty[i]
    return RobustnessConfig(penalty=tuple(levels))


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise UsageError(f"not a number: {text!r}") from exc


def _load(args) -> tuple[GameSpec, RobustnessConfig]:
    if args.spec is None:
        raise UsageError("--spec is required for this command")
    spec, rob = load_game(args.spec)
    return spec, parse_m(args.m, spec, rob)


def cmd_solve(args) -> int:
    spec, rob = _load(args)
    sol = solve_strategically_robust(spec, rob)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "solution.json").write_text(sol.to_json() + "\n")
    print(f"solved {spec.n_players}-player game over T={spec.horizon}; "
          + ", ".join(f"value of player {i + 1}: {sol.value(i, spec.x0):.6g}" for i in range(spec.n_players)))
    return EXIT_OK


def cmd_rollout(args) -> int:
    spec, rob = _load(args)
    sol = solve_strategically_robust(spec, rob)
    traj = rollout(spec, [linear_policy(k) for k in sol.K])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(traj.to_csv())
    print(f"social cost {float(traj.social_cost):.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec, _ = _load(args)
    grid = parse_grid(args.grid or "0:1:0.05")
    res = ex.social_cost_sweep(spec, args.mode, grid, player=args.player - 1, name="social_sweep")
    res.write(args.out)
    print(f"boundary s = {res.metadata['boundary_s']}")
    return EXIT_OK


def cmd_mc(args) -> int:
    if args.spec is not None:
        spec, rob = _load(args)
    else:
        spec = build_collaborative_game(3)
        rob = parse_m(args.m or ["1=1.2"], spec, RobustnessConfig.nash(spec))
    res = ex.monte_carlo_bias(spec, solve_nash(spec), solve_strategically_robust(spec, rob),
                              n_samples=args.samples, seed=args.seed)
    res.write(args.out, "table1.csv")
    _print_table(res)
    return EXIT_OK


def _print_table(res: ex.ExperimentResult) -> None:
    print(",".join(res.columns))
    for row in res.rows:
        print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))


def reproduce(target: str, out: Path, seed: int = 0, samples: int = 100_000,
              grid: np.ndarray | None = None) -> ex.ExperimentResult:
    if target == "motivating":
        res = ex.motivating_example(build_motivating_game(50))
        res.write(out, "motivating.csv")
    elif target == "collab-adversarial":
        res = ex.adversarial_budget_sweep(build_collaborative_game(3), budgets=grid)
        res.write(out, "fig1_adversarial.csv")
    elif target == "collab-mc":
        spec = build_collaborative_game(3)
        sr = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [1.2, None]))
        res = ex.monte_carlo_bias(spec, solve_nash(spec), sr, n_samples=samples, seed=seed)
        res.write(out, "table1.csv")
    elif target == "collab-social":
        g = ex.inverse_penalty_grid(1.0, 0.01) if grid is None else grid
        res = ex.social_cost_figure(build_collaborative_game(3), g, "fig2_social_collab")
        res.write(out, "fig2_social_collab.csv")
    elif target == "network-scenarios":
        res = ex.network_scenarios(build_star_network_game(5, 20, 5.0))
        res.write(out, "table2_network.csv")
    elif target == "network-social":
        g = ex.inverse_penalty_grid(8.0, 0.05) if grid is None else grid
        res = ex.social_cost_figure(build_star_network_game(5, 20, 5.0), g, "fig4_social_network")
        res.write(out, "fig4_social_network.csv")
    else:
        raise UsageError(f"unknown reproduce target {target!r}; choose one of {', '.join(TARGETS)}")
    return res


def cmd_reproduce(args) -> int:
    target = args.scenario or args.target
    if target is None:
        raise UsageError("reproduce needs a target")
    out = Path(args.out)
    grid = parse_grid(args.grid) if args.grid else None
    res = reproduce(target, out, seed=args.seed, samples=args.samples, grid=grid)
    if args.dump_spec:
        game = {"motivating": "motivating", "network-scenarios": "network", "network-social": "network"}.get(
            target, "collaborative")
        (out / f"{game}_spec.json").write_text(dump_game(BUILTIN_GAMES[game]()) + "\n")
    if target.endswith("social"):
        for mode, meta in res.metadata.items():
            print(f"{mode}: boundary s={meta['boundary_s']}, NE social={meta['ne_social_cost']:.6f}, "
                  f"min social={meta['min_social_cost']:.6f}, optimum={meta['social_optimum']:.6f}")
    else:
        _print_table(res)
    return EXIT_OK


def cmd_dump_spec(args) -> int:
    text = dump_game(BUILTIN_GAMES[args.game]()) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srlq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_default="out"):
        p.add_argument("--spec", help="game-spec JSON file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--m", action="append", metavar="VALUE|I=VALUE",
                       help="robustness penalty (number or inf), optionally for player I (1-based); repeatable")

    common(sub.add_parser("solve", help="solve for the equilibrium gains"))
    common(sub.add_parser("rollout", help="simulate the equilibrium and export the trajectory"))
    p = sub.add_parser("sweep", help="social cost against inverse penalty")
    common(p)
    p.add_argument("--grid", help="start:stop:step of s = 1/M")
    p.add_argument("--mode", choices=("single", "all"), default="all")
    p.add_argument("--player", type=int, default=1, help="robust player in single mode (1-based)")
    p = sub.add_parser("mc", help="Monte Carlo bias study")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p = sub.add_parser("reproduce", help="run one of the built-in experiments")
    p.add_argument("target", nargs="?", choices=TARGETS)
    p.add_argument("--scenario", choices=TARGETS, help="alternative to the positional target")
    p.add_argument("--out", default="results")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--grid", help="override the default grid (start:stop:step)")
    p.add_argument("--dump-spec", action="store_true", help="also write the built-in game spec")
    p = sub.add_parser("dump-spec", help="print a built-in game spec as JSON")
    p.add_argument("game", choices=sorted(BUILTIN_GAMES))
    p.add_argument("--out", help="write to this file instead of stdout")
    return parser


COMMANDS = {"solve": cmd_solve, "rollout": cmd_rollout, "sweep": cmd_sweep, "mc": cmd_mc,
            "reproduce": cmd_reproduce, "dump-spec": cmd_dump_spec}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except (SpecFormatError, InvalidGameError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, RolloutDiverged) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Existence boundaries of the built-in games, refined by bisection.

Prints the critical inverse penalty s* = 1/M* for each game and sweep mode,
with non-robust players treated exactly and through the finite proxy
penalty.  Also reports the last point of a uniform grid in M that still
solves, which is where a grid scan over M (rather than over s) stops.
"""

import argparse

import numpy as np

from srlq.equilibria import SolverError, find_existence_boundary, robustness_for_scale, solve_strategically_robust
from srlq.experiments import NASH_PROXY_PENALTY
from srlq.game_model import build_collaborative_game, build_star_network_game


def last_success_on_m_grid(spec, pattern, step, m_max=5.0, nonrobust_penalty=None):
    last = None
    for m in np.round(np.arange(m_max, step / 2, -step), 10):
        try:
            solve_strategically_robust(spec, robustness_for_scale(spec, pattern, 1.0 / m, 0, nonrobust_penalty))
            last = m
        except SolverError:
            break
    return last


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m-step", type=float, default=0.01, help="step of the M grid scan")
    args = parser.parse_args()
    games = {"collaborative": (build_collaborative_game(3), np.arange(0, 1.51, 0.01)),
             "network": (build_star_network_game(5, 20, 5.0), np.arange(0, 8.01, 0.05))}
    print(f"{'game':<14}{'mode':<11}{'non-robust':<12}{'s* (bisection)':>16}{'M*':>10}{'M grid last':>13}{'1/that':>9}")
    for name, (spec, grid) in games.items():
        for pattern in ("single", "symmetric"):
            for label, proxy in (("exact", None), (f"M={NASH_PROXY_PENALTY:g}", NASH_PROXY_PENALTY)):
                res = find_existence_boundary(spec, pattern, grid, tol=1e-6, nonrobust_penalty=proxy)
                m_last = last_success_on_m_grid(spec, pattern, args.m_step, nonrobust_penalty=proxy)
                print(f"{name:<14}{pattern:<11}{label:<12}{res.s_critical:>16.5f}{1 / res.s_critical:>10.5f}"
                      f"{m_last:>13.3f}{1 / m_last:>9.4f}")


if __name__ == "__main__":
    main()

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import functools
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import optimize, stats

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import (  # noqa: E402
    collaborative_boundary_oracle,
    grid_adversary_response,
    grid_saddle_response,
    scalar_one_step,
)
from srlq import experiments as ex  # noqa: E402
from srlq.equilibria import (  # noqa: E402
    SolverError,
    assemble_stage_system,
    best_response_adversary,
    best_response_player,
    check_spectral_dominance,
    solve_nash,
    solve_social_optimum,
    solve_strategically_robust,
)
from srlq.game_model import (  # noqa: E402
    GameSpec,
    RobustnessConfig,
    build_collaborative_game,
    build_motivating_game,
    build_star_network_game,
)
from srlq.simulate import augmented_cost, evaluate_robust_cost, linear_policy, rollout  # noqa: E402

TABLE1_NE = (0.04, 0.32, 1.35, 3.82, 10.80)
TABLE1_SR = (0.32, 0.52, 1.26, 3.01, 8.12)
TABLE2 = {"NE": (4.32, 2.39), "SR": (4.77, 6.23), "NE (adv.)": (2.24, 26.00), "SR (adv.)": (3.92, 14.81)}


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    capture = getattr(report, "capsys", None)
    if capture is not None:
        with capture.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    report.capsys = capsys
    yield
    report.capsys = None


# --- criterion 1 ---------------------------------------------------------------


def criterion_1():
    start = time.perf_counter()
    res = ex.motivating_example(build_motivating_game(50))
    elapsed = time.perf_counter() - start
    coef = dict(res.rows)
    ok = abs(coef["NE"] - 0.98) <= 0.005 and abs(coef["SR"] - 0.464) <= 0.01 and elapsed < 1.0
    return ok, f"NE {coef['NE']:.5f} (0.98+-0.005), SR {coef['SR']:.5f} (0.464+-0.01), {elapsed:.3f}s"


# --- criterion 2 ---------------------------------------------------------------


def criterion_2():
    start = time.perf_counter()
    res = ex.network_scenarios(build_star_network_game(5, 20, 5.0))
    elapsed = time.perf_counter() - start
    misses = []
    parts = []
    for name, terminal, cost in res.rows:
        want_x, want_j = TABLE2[name]
        parts.append(f"{name} {terminal:.4f}/{cost:.4f}")
        if abs(terminal - want_x) > 0.01:
            misses.append(f"{name} terminal {terminal:.4f} vs {want_x}")
        if abs(cost - want_j) > 0.01:
            misses.append(f"{name} cost {cost:.4f} vs {want_j}")
    ok = not misses and elapsed < 1.0
    detail = "; ".join(parts) + f"; {elapsed:.3f}s"
    if misses:
        detail += " | out of tolerance: " + ", ".join(misses)
    return ok, detail


# --- criterion 3 ---------------------------------------------------------------


def quadratic_cost_quantile(a, beta, c, q):
    """Exact q-quantile and density of a*b^2 + beta*b + c with b ~ N(0, 1), a > 0."""
    vertex = -beta / (2 * a)
    floor = c - beta ** 2 / (4 * a)

    def roots(y):
        half = np.sqrt(max(y - floor, 0.0) / a)
        return vertex - half, vertex + half

    def cdf(y):
        lo, hi = roots(y)
        return stats.norm.cdf(hi) - stats.norm.cdf(lo)

    hi = floor + 1.0
    while cdf(hi) < q:
        hi = floor + 2 * (hi - floor)
    y = optimize.brentq(lambda v: cdf(v) - q, floor, hi, xtol=1e-14, rtol=1e-14)
    lo_b, hi_b = roots(y)
    density = sum(stats.norm.pdf(b) / abs(2 * a * b + beta) for b in (lo_b, hi_b))
    return y, density


def criterion_3(n=100_000, seed=0):
    spec = build_collaborative_game(3)
    ne = solve_nash(spec)
    sr = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [1.2, None]))
    start = time.perf_counter()
    res = ex.monte_carlo_bias(spec, ne, sr, n_samples=n, seed=seed)
    elapsed = time.perf_counter() - start
    rows = {r[0]: r[1:] for r in res.rows}
    problems = []
    for name, target, gains in (("NE", TABLE1_NE, ne.K[0]), ("SR", TABLE1_SR, sr.K[0])):
        c0, cp, cm = ex.bias_costs(spec, gains, ne.K[1], np.array([0.0, 1.0, -1.0]))
        a, beta = 0.5 * (cp + cm) - c0, 0.5 * (cp - cm)
        for q, got, want in zip(ex.PERCENTILES, rows[name], target):
            if abs(got - want) > max(0.02, 0.07 * abs(want)):
                problems.append(f"{name} p{round(100 * q)} {got:.4f} vs {want}")
            exact, dens = quadratic_cost_quantile(a, beta, c0, q)
            se = np.sqrt(q * (1 - q) / n) / dens
            if abs(got - exact) > 3 * se:
                problems.append(f"{name} p{round(100 * q)} {got:.5f} vs exact {exact:.5f} (3se={3 * se:.5f})")
    ok = not problems and elapsed < 10.0
    fmt = lambda v: "(" + ", ".join(f"{x:.3f}" for x in v) + ")"
    detail = f"NE {fmt(rows['NE'])}, SR {fmt(rows['SR'])}, {elapsed:.2f}s"
    if problems:
        detail += " | " + ", ".join(problems)
    return ok, detail


# --- criterion 4 ---------------------------------------------------------------


def criterion_4():
    collab = solve_social_optimum(build_collaborative_game(3)).cost
    alpha = optimize.minimize_scalar(lambda v: 2 * (1 - 6 * v) ** 2 + 6 * v ** 2).x
    closed_form = 2 * (1 - 6 * alpha) ** 2 + 6 * alpha ** 2
    network = solve_social_optimum(build_star_network_game(5, 20, 5.0)).cost
    ok = abs(collab - 0.153846) <= 1e-4 and abs(collab - closed_form) <= 1e-10 and abs(network - 4.0118) <= 1e-3
    return ok, f"collaborative {collab:.6f} (closed form {closed_form:.6f}), network {network:.6f}"


# --- criteria 5 and 6 ------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def sweeps():
    collab = build_collaborative_game(3)
    network = build_star_network_game(5, 20, 5.0)
    out = {}
    for game, spec, grid in (("collaborative", collab, ex.inverse_penalty_grid(1.0, 0.01)),
                             ("network", network, ex.inverse_penalty_grid(8.0, 0.05))):
        for mode in ("single", "all"):
            out[game, mode] = ex.social_cost_sweep(spec, mode, grid).metadata
    return out


def criterion_5():
    parts, ok = [], True
    for (game, mode), meta in sweeps().items():
        lo, ne, opt = meta["min_social_cost"], meta["ne_social_cost"], meta["social_optimum"]
        good = opt <= lo < ne
        ok &= good
        parts.append(f"{game}/{mode} min {lo:.5f} < NE {ne:.5f}, >= opt {opt:.5f}{'' if good else ' [violated]'}")
    return ok, "; ".join(parts)


def criterion_6():
    meta = sweeps()
    single = meta["network", "single"]["boundary_s"]
    allr = meta["network", "all"]["boundary_s"]
    parts = [f"network single {single:.4f} (7.14+-0.1)", f"network all {allr:.4f} (1.71+-0.05)"]
    ok = single is not None and abs(single - 7.14) <= 0.1
    ok &= allr is not None and abs(allr - 1.71) <= 0.05
    for mode, pattern in (("single", "single"), ("all", "symmetric")):
        got = meta["collaborative", mode]["boundary_s"]
        oracle = collaborative_boundary_oracle(pattern)
        agree = got is not None and abs(got - oracle) <= 1e-4
        ok &= agree
        parts.append(f"collaborative {mode} {got:.5f} vs oracle {oracle:.5f}")
    return ok, "; ".join(parts)


# --- criterion 7 -----------------------------------------------------------------


def random_game(rng, N, n, horizon):
    dims = tuple(int(d) for d in rng.integers(1, 3, size=N))

    def psd(k, floor=0.0):
        X = rng.normal(size=(k, k))
        return X @ X.T / k + floor * np.eye(k)

    spec = GameSpec.create(
        A=rng.normal(size=(n, n)) * 0.5, B=[rng.normal(size=(n, d)) * 0.7 for d in dims],
        Q=[psd(n) for _ in range(N)], Q_terminal=[psd(n) for _ in range(N)],
        R=[psd(d, 1.0) for d in dims], S=[0.05 * psd(sum(dims) - d) for d in dims],
        x0=rng.normal(size=n), horizon=horizon)
    return spec


def property_games():
    rng = np.random.default_rng(2024)
    games = []
    while len(games) < 8:
        N, n, T = int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(3, 7))
        spec = random_game(rng, N, n, T)
        levels = [float(rng.uniform(5, 30)) if rng.random() < 0.7 else None for _ in range(N)]
        rob = RobustnessConfig.from_levels(spec, levels)
        try:
            games.append((spec, rob, solve_strategically_robust(spec, rob)))
        except SolverError:
            continue
    collab = build_collaborative_game(3)
    rob = RobustnessConfig.from_levels(collab, [1.2, None])
    games.append((collab, rob, solve_strategically_robust(collab, rob)))
    return games


def stacked_gains(rob, sol, t):
    blocks = []
    for i in range(len(sol.K)):
        blocks.append(sol.K[i][t])
        if rob.is_robust(i):
            blocks.append(sol.L[i][t])
    return np.vstack(blocks)


def check_foc(games):
    worst = 0.0
    for spec, rob, sol in games:
        for t in range(spec.horizon):
            system = assemble_stage_system(spec, rob, [P[t + 1] for P in sol.P], t)
            r = np.linalg.norm(system.H @ stacked_gains(rob, sol, t) - system.G)
            worst = max(worst, r / (1 + np.linalg.norm(system.G)))
    return worst <= 1e-9, f"FOC {worst:.1e}"


def check_value_consistency(games):
    worst = 0.0
    for spec, rob, sol in games:
        traj = rollout(spec, [linear_policy(k) for k in sol.K])
        for i in range(spec.n_players):
            value = sol.value(i, spec.x0)
            realized = augmented_cost(spec, rob, sol.K, sol.L[i], i) if rob.is_robust(i) else traj.per_player_costs[i]
            worst = max(worst, abs(realized - value) / max(1.0, abs(value)))
    return worst <= 1e-8, f"value {worst:.1e}"


def check_saddle(games, directions=50, scale=0.05):
    rng = np.random.default_rng(7)
    violations = 0
    for spec, rob, sol in games:
        for _ in range(directions):
            i = int(rng.integers(spec.n_players))
            value = sol.value(i, spec.x0)
            tol = 1e-10 * (1 + abs(value))
            K = [list(k) for k in sol.K]
            K[i] = [k + scale * rng.normal(size=k.shape) for k in K[i]]
            if evaluate_robust_cost(spec, rob, K, i) < value - tol:
                violations += 1
            if rob.is_robust(i):
                L = [l + scale * rng.normal(size=l.shape) for l in sol.L[i]]
                if augmented_cost(spec, rob, sol.K, L, i) > value + tol:
                    violations += 1
    return violations == 0, f"saddle violations {violations}/{directions * len(games)} directions"


def check_nash_limit():
    spec = build_motivating_game(10)
    ne = solve_nash(spec)
    lams = np.array([1e2, 1e3, 1e4])
    errs = []
    for lam in lams:
        sol = solve_strategically_robust(spec, RobustnessConfig.uniform(spec, lam))
        errs.append(max(np.abs(sol.K[i][t] - ne.K[i][t]).max() for i in range(2) for t in range(10)))
    slope = np.polyfit(np.log(lams), np.log(errs), 1)[0]
    return slope <= -0.9, f"Nash-limit slope {slope:.3f}"


def check_bitwise_nash(games):
    for spec, _, _ in games:
        a = solve_strategically_robust(spec, RobustnessConfig.nash(spec))
        b = solve_nash(spec)
        same = all(np.array_equal(x, y) for i in range(spec.n_players)
                   for x, y in zip(a.K[i] + a.L[i] + a.P[i], b.K[i] + b.L[i] + b.P[i]))
        if not same:
            return False, "all-INF differs from Nash"
    return True, "all-INF bitwise Nash"


def check_best_response_fixed_points(games):
    worst = 0.0
    for spec, rob, sol in games:
        for i in range(spec.n_players):
            br = best_response_player(spec, rob, sol.L[i], sol.K, i)
            adv = best_response_adversary(spec, rob, sol.K, i)
            for t in range(spec.horizon):
                worst = max(worst, np.abs(br.gains[t] - sol.K[i][t]).max(),
                            np.abs(adv.gains[t] - sol.L[i][t]).max())
    return worst <= 1e-8, f"best responses {worst:.1e}"


def check_dominance_soundness(count=200):
    """No game may pass the sufficient test while its stage matrix is singular.

    Penalties, continuation values and S are drawn over ranges that put
    roughly half of the games on each side of the test.
    """
    rng = np.random.default_rng(99)
    passes = false_passes = 0
    for _ in range(count):
        N, n = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        spec = random_game(rng, N, n, 1)
        dims = spec.input_dims
        S = []
        for i in range(N):
            X = rng.normal(size=(sum(dims) - dims[i],) * 2)
            S.append(X @ X.T * rng.uniform(0, 2))
        spec = GameSpec.create(A=spec.A[0], B=[b[0] for b in spec.B], Q=[q[0] for q in spec.Q],
                               Q_terminal=list(spec.Q_terminal), R=[r[0] for r in spec.R], S=S,
                               x0=spec.x0, horizon=1)
        if rng.random() < 0.5:
            rob = RobustnessConfig.uniform(spec, float(10 ** rng.uniform(-1, 1)))
        else:
            rob = RobustnessConfig.from_levels(spec, [float(10 ** rng.uniform(-1, 1)) for _ in range(N)])
        P_next = []
        for _ in range(N):
            X = rng.normal(size=(n, n))
            P_next.append(X @ X.T * 10 ** rng.uniform(-3, 0.5))
        rep = check_spectral_dominance(spec, rob, P_next, 0)
        if not rep.passes:
            continue
        passes += 1
        H = assemble_stage_system(spec, rob, P_next, 0).H
        sv = np.linalg.svd(H, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            false_passes += 1
    return false_passes == 0 and passes > 0, f"dominance {false_passes} false passes of {passes} passes/{count}"


def criterion_7():
    start = time.perf_counter()
    games = property_games()
    checks = [check_foc(games), check_value_consistency(games), check_saddle(games), check_nash_limit(),
              check_bitwise_nash(games), check_best_response_fixed_points(games), check_dominance_soundness()]
    elapsed = time.perf_counter() - start
    ok = all(c[0] for c in checks) and elapsed < 30.0
    return ok, "; ".join(c[1] for c in checks) + f"; {elapsed:.2f}s"


# --- criterion 8 -----------------------------------------------------------------


def criterion_8(count=50, resolution=1e-3):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(count):
        a, b1, b2 = rng.uniform(0.5, 1.5, 3)
        r, p = rng.uniform(0.5, 2.0, 2)
        m = p * max(b1, b2) ** 2 * rng.uniform(1.5, 4.0) + 0.5
        spec, rob = scalar_one_step(a, b1, b2, r, p, m)
        sol = solve_strategically_robust(spec, rob)
        k = [sol.K[i][0][0, 0] for i in (0, 1)]
        l = [sol.L[i][0][0, 0] for i in (0, 1)]
        b = (b1, b2)
        for i in (0, 1):
            u, _ = grid_saddle_response(a, b[i], b[1 - i], r, p, m, k[1 - i], resolution=resolution)
            d = grid_adversary_response(a, b[i], b[1 - i], p, m, k[i], k[1 - i], resolution=resolution)
            worst = max(worst, abs(u - k[i]), abs(d - l[i]))
    return worst <= resolution, f"max |solver - grid saddle| {worst:.2e} over {count} games (resolution {resolution})"


# --- pytest entry points -------------------------------------------------------------

CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, detail = CRITERIA[number]()
    report(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = [report(k, *fn()) for k, fn in CRITERIA.items()]
    sys.exit(0 if all(results) else 1)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlq import experiments as ex
from srlq.equilibria import solve_nash, solve_strategically_robust
from srlq.game_model import RobustnessConfig, build_collaborative_game, build_star_network_game
from srlq.simulate import linear_policy, rollout


@pytest.fixture(scope="module")
def collab():
    spec = build_collaborative_game(3)
    ne = solve_nash(spec)
    sr = solve_strategically_robust(spec, RobustnessConfig.from_levels(spec, [1.2, None]))
    return spec, ne, sr


class TestPercentile:
    def test_examples(self):
        assert ex.percentile(np.arange(1, 101), 0.5) == 50.5
        assert ex.percentile([7.0], 0.3) == 7.0
        assert ex.percentile([0.0, 10.0], 0.95) == 9.5

    def test_errors(self):
        with pytest.raises(ValueError):
            ex.percentile([], 0.5)
        with pytest.raises(ValueError):
            ex.percentile([1.0], 1.5)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0, 1))
    def test_rank_interpolation(self, xs, q):
        s = sorted(xs)
        r = q * (len(s) - 1)
        lo, hi = math.floor(r), math.ceil(r)
        expected = s[lo] + (r - lo) * (s[hi] - s[lo])
        assert ex.percentile(xs, q) == pytest.approx(expected, rel=1e-12, abs=1e-9)


class TestNormals:
    def test_slices_agree(self):
        whole = ex.standard_normals(7, 0, 1000)
        np.testing.assert_array_equal(ex.standard_normals(7, 300, 200), whole[300:500])

    def test_seed_changes_stream(self):
        assert not np.array_equal(ex.standard_normals(1, 0, 10), ex.standard_normals(2, 0, 10))

    def test_moments(self):
        z = ex.standard_normals(0, 0, 200_000)
        assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


class TestMonteCarlo:
    def test_parallelism_invariant(self, collab):
        spec, ne, sr = collab
        a = ex.monte_carlo_bias(spec, ne, sr, n_samples=5000, seed=3, chunk_size=5000)
        b = ex.monte_carlo_bias(spec, ne, sr, n_samples=5000, seed=3, chunk_size=333, workers=4)
        assert a.rows == b.rows

    def test_degenerate_bias(self, collab):
        spec, ne, sr = collab
        res = ex.monte_carlo_bias(spec, ne, sr, n_samples=100, seed=0, bias_scale=0.0)
        base = {"NE": ne.value(0, spec.x0), "SR": rollout(spec, [linear_policy(sr.K[0]),
                                                              linear_policy(ne.K[1])]).per_player_costs[0]}
        for row in res.rows:
            assert all(v == pytest.approx(base[row[0]], rel=1e-12) for v in row[1:])

    def test_requires_two_players(self):
        spec = build_star_network_game()
        ne = solve_nash(spec)
        with pytest.raises(ValueError):
            ex.monte_carlo_bias(spec, ne, ne, n_samples=10)


@pytest.fixture(scope="module")
def sweep():
    return ex.adversarial_budget_sweep(build_collaborative_game(3))


class TestBudgetSweep:
    def test_columns(self, sweep):
        assert sweep.columns == ["c", "NE_cost", "M=1.200_cost", "M=1.400_cost", "M=2.500_cost"]
        assert sweep.column("c")[0] == 0.0 and sweep.column("c")[-1] == 2.0

    def test_unperturbed_start(self, sweep, collab):
        spec, ne, _ = collab
        first = sweep.rows[0]
        assert first[1] == pytest.approx(ne.value(0, spec.x0), rel=1e-12)
        assert first[1] == min(first[1:])

    def test_nash_worst_at_large_budget(self, sweep):
        last = sweep.rows[-1]
        assert all(last[1] > v for v in last[2:])

    def test_monotone(self, sweep):
        for col in sweep.columns[1:]:
            vals = np.array(sweep.column(col))
            assert np.all(np.diff(vals) >= -1e-12)

    def test_nash_steeper(self, sweep):
        ne = np.array(sweep.column("NE_cost"))
        sr = np.array(sweep.column("M=1.200_cost"))
        assert ne[-1] - ne[0] > sr[-1] - sr[0]


class TestSocialSweep:
    def test_endpoint_is_nash(self):
        spec = build_collaborative_game(3)
        res = ex.social_cost_sweep(spec, "all", [0.0, 0.5])
        ne = solve_nash(spec)
        per_player = rollout(spec, [linear_policy(k) for k in ne.K]).per_player_costs
        assert res.rows[0][2] == sum(per_player)
        assert res.rows[0][2] == pytest.approx(spec.n_players * per_player[0], rel=1e-14)
        assert res.metadata["ne_social_cost"] == res.rows[0][2]

    def test_failures_recorded(self):
        spec = build_collaborative_game(3)
        res = ex.social_cost_sweep(spec, "all", ex.inverse_penalty_grid(1.2, 0.1))
        # at s = 1 the last-stage adversary block 1/s - 1 vanishes
        assert res.metadata["first_failure"][0] == pytest.approx(1.0)
        assert res.metadata["first_failure"][1] == "AdversaryConcavityFailure"
        assert [r[3] for r in res.rows][-4:] == [1, 0, 0, 0]
        assert math.isnan(res.rows[-1][2])
        assert res.metadata["boundary_s"] == pytest.approx(1.0, abs=1e-3)

    def test_free_lunch_collaborative(self):
        spec = build_collaborative_game(3)
        for mode in ("single", "all"):
            res = ex.social_cost_sweep(spec, mode, ex.inverse_penalty_grid(1.0, 0.05))
            meta = res.metadata
            assert meta["social_optimum"] <= meta["min_social_cost"] < meta["ne_social_cost"]

    def test_figure_has_both_modes(self):
        res = ex.social_cost_figure(build_collaborative_game(3), [0.0, 0.5], "fig")
        assert [r[0] for r in res.rows] == ["single", "single", "all", "all"]
        assert set(res.metadata) == {"single", "all"}


class TestNetworkScenarios:
    def test_infinite_penalty_coincides(self):
        res = ex.network_scenarios(build_star_network_game(), center_penalty=None, nonrobust_penalty=None)
        rows = {r[0]: r[1:] for r in res.rows}
        assert rows["NE"] == rows["SR"]

    def test_nash_row_matches_exact_nash(self):
        spec = build_star_network_game()
        res = ex.network_scenarios(spec, nonrobust_penalty=None)
        traj = rollout(spec, [linear_policy(k) for k in solve_nash(spec).K])
        assert res.rows[0][1] == traj.states[-1, 0]

    def test_robust_center_pays_more_nominally(self):
        rows = {r[0]: r for r in ex.network_scenarios(build_star_network_game()).rows}
        assert rows["SR"][2] > rows["NE"][2]
        assert rows["SR (adv.)"][2] < rows["NE (adv.)"][2]

    def test_bad_bystander_rule(self):
        with pytest.raises(ValueError):
            ex.network_scenarios(build_star_network_game(), bystanders="other")


class TestResultIO:
    def test_write(self, tmp_path):
        res = ex.ExperimentResult("demo", ["a", "b"], [["x", 0.1], ["y", math.inf]],
                                  {"grid": np.arange(3), "z": np.float64(2.5)})
        path = res.write(tmp_path, "demo.csv")
        assert path.read_text() == "a,b\nx,0.1\ny,inf\n"
        meta = json.loads((tmp_path / "demo.json").read_text())
        assert meta["grid"] == [0, 1, 2] and meta["z"] == 2.5

    def test_motivating(self):
        res = ex.motivating_example(build_collaborative_game(3).with_x0([1.0]))
        assert res.columns == ["equilibrium", "mid_horizon_coefficient"]
        assert len(res.metadata["coefficients_NE"]) == 3

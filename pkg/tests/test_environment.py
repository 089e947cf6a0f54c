import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from annealed_walk.environment import (SURVIVED, BudgetExceeded, Environment, LazyEnvironment,
                                       ModelParams, WalkPath, WindowTooSmall,
                                       annealed_partition_by_obstacles, environment_from_text,
                                       exact_mu_expectation, exact_partition_function,
                                       exact_path_law, killing_time, path_codes, range_histogram,
                                       sample_environment, simulate_survival, survival_dp)
from annealed_walk.lattice import LatticeSet, ball, box_points, l1_ball

E = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def brute_Z(d, p, N):
    """Independent oracle: explicit loop over paths with a Python set for the range."""
    total = Fraction(0)
    for steps in itertools.product(range(2 * d), repeat=N):
        x = (0,) * d
        seen = {x}
        for k in steps:
            a, s = divmod(k, 2)
            x = tuple(c + (1 - 2 * s if i == a else 0) for i, c in enumerate(x))
            seen.add(x)
        total += Fraction(p) ** len(seen)
    return total / (2 * d) ** N


class TestModelParams:
    @pytest.mark.parametrize("kw", [dict(d=1, p=0.5, N=1), dict(d=2, p=0.0, N=1),
                                    dict(d=2, p=1.0, N=1), dict(d=2, p=0.5, N=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ModelParams(**kw)


class TestWalkPath:
    def test_invariants(self, rng):
        w = WalkPath(rng.integers(0, 4, size=200), 2)
        steps = np.abs(np.diff(w.positions, axis=0)).sum(1)
        assert np.all(steps == 1)
        assert w.range_size == len(w.range_multiset) == len(set(map(tuple, w.positions.tolist())))
        assert sum(w.range_multiset.values()) == w.N + 1

    def test_from_positions_round_trip(self, rng):
        w = WalkPath(rng.integers(0, 6, size=50), 3)
        assert WalkPath.from_positions(w.positions) == w

    def test_rejects_jumps(self):
        with pytest.raises(ValueError):
            WalkPath.from_positions([(0, 0), (2, 0)])


class TestEnvironment:
    def test_obstacles_inside_window(self):
        with pytest.raises(ValueError):
            Environment(ball((0, 0), 1), LatticeSet([(5, 5)], 2))

    def test_deterministic(self):
        P = ModelParams(2, 0.5, 0, seed=99)
        W = box_points((0, 0), (20, 20))
        assert sample_environment(P, W) == sample_environment(P, W)

    def test_p_near_one(self):
        W = box_points((0, 0), (9, 99))
        empty = sum(sample_environment(ModelParams(2, 1 - 1e-12, 0, s), W).obstacles.cached_size == 0
                    for s in range(200))
        assert empty == 200

    def test_density(self):
        W = box_points((0, 0), (99, 99))
        fr = [sample_environment(ModelParams(2, 0.5, 0, s), W).obstacles.cached_size / 1e4
              for s in range(200)]
        inside = np.mean(np.abs(np.array(fr) - 0.5) <= 0.02)
        assert inside >= 0.99

    def test_text_round_trip(self):
        W = ball((0, 0), 6)
        env = sample_environment(ModelParams(2, 0.7, 0, 3), W)
        text = env.to_text()
        assert text.startswith("# obstacles of window ")
        assert environment_from_text(text, W) == env
        with pytest.raises(ValueError):
            environment_from_text(text, ball((0, 0), 7))

    def test_lazy_is_consistent(self):
        lazy = LazyEnvironment(2, 0.6, 17)
        W = box_points((-5, -5), (5, 5))
        env = lazy.materialize(W)
        assert all(lazy.is_obstacle(x) == env.is_obstacle(x) for x in W.points.tolist())
        assert LazyEnvironment(2, 0.6, 17).is_obstacle((3, 4)) == lazy.is_obstacle((3, 4))


class TestKillingTime:
    W = box_points((-5, -5), (5, 5))

    def test_start_in_obstacle(self):
        env = Environment(self.W, LatticeSet([(0, 0)], 2))
        assert killing_time(WalkPath([0, 0], 2), env) == 0

    def test_no_obstacles(self):
        env = Environment(self.W, LatticeSet.empty(2))
        assert killing_time(WalkPath([0, 0, 2], 2), env) is SURVIVED

    def test_straight(self):
        env = Environment(self.W, LatticeSet([(2, 0)], 2))
        assert killing_time(WalkPath([0, 0, 0], 2), env) == 2

    def test_outside_window(self):
        env = Environment(ball((0, 0), 1), LatticeSet.empty(2))
        with pytest.raises(WindowTooSmall):
            killing_time(WalkPath([0, 0, 0], 2), env)


class TestSurvivalDP:
    W = l1_ball((0, 0), 6)

    def test_on_obstacle(self):
        assert survival_dp(Environment(self.W, LatticeSet([(0, 0)], 2)), (0, 0), 3) == 0.0

    def test_empty(self):
        assert survival_dp(Environment(self.W, LatticeSet.empty(2)), (0, 0), 6) == 1.0

    def test_surrounded(self):
        env = Environment(self.W, LatticeSet(E, 2))
        assert survival_dp(env, (0, 0), 1) == 0.0

    def test_window_too_small(self):
        with pytest.raises(WindowTooSmall):
            survival_dp(Environment(self.W, LatticeSet.empty(2)), (0, 0), 7)

    def test_three_neighbours_blocked(self):
        env = Environment(self.W, LatticeSet(E[1:], 2))
        # forced to (1,0); every neighbour of (1,0) is open
        assert survival_dp(env, (0, 0), 1) == 0.25
        assert survival_dp(env, (0, 0), 2) == 0.25
        assert survival_dp(env, (0, 0), 3) == pytest.approx(0.25 * survival_dp(env, (1, 0), 2), abs=1e-15)

    def test_against_mc(self, rng):
        for i in range(5):
            env = sample_environment(ModelParams(2, 0.8, 0, int(rng.integers(1e9))), self.W)
            if env.is_obstacle((0, 0)):
                continue
            q, se = simulate_survival(env, (0, 0), 5, 50_000, seed=i)
            assert abs(q - survival_dp(env, (0, 0), 5)) <= 4 * se + 1e-12


class TestPartition:
    @pytest.mark.parametrize("p", [Fraction(1, 2), Fraction(1, 3), Fraction(7, 10)])
    def test_small_N(self, p):
        assert exact_partition_function(ModelParams(2, p, 0), exact=True) == p
        assert exact_partition_function(ModelParams(2, p, 1), exact=True) == p * p

    def test_N2_rational(self):
        Z = exact_partition_function(ModelParams(2, Fraction(1, 2), 2), exact=True)
        assert Z == Fraction(5, 32)
        assert exact_partition_function(ModelParams(2, 0.5, 2)) == 0.15625

    @pytest.mark.parametrize("d,N", [(2, 4), (2, 6), (3, 4)])
    def test_brute_force(self, d, N):
        p = Fraction(2, 5)
        assert exact_partition_function(ModelParams(d, p, N), exact=True) == brute_Z(d, p, N)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            exact_partition_function(ModelParams(2, 0.5, 20))

    def test_monotone_in_p(self):
        z = [exact_partition_function(ModelParams(2, p, 6)) for p in np.linspace(0.05, 0.95, 10)]
        assert all(b > a for a, b in zip(z, z[1:]))

    def test_monotone_in_N(self):
        z = [exact_partition_function(ModelParams(2, 0.5, N)) for N in range(11)]
        assert all(b <= a for a, b in zip(z, z[1:]))

    @pytest.mark.parametrize("N", [0, 1, 2])
    @pytest.mark.parametrize("p", [0.3, 0.5, 0.9])
    def test_obstacle_enumeration_identity(self, N, p):
        a = annealed_partition_by_obstacles(ModelParams(2, p, N))
        assert abs(a - exact_partition_function(ModelParams(2, p, N))) <= 1e-12

    def test_histogram_totals(self):
        h = range_histogram(2, 5)
        assert h.sum() == 4**5


class TestExpectation:
    P2 = ModelParams(2, 0.5, 2)

    def test_normalisation(self):
        assert exact_mu_expectation(self.P2, "one") == pytest.approx(1.0, abs=1e-15)

    def test_range(self):
        assert exact_mu_expectation(self.P2, "range") == pytest.approx(2.6, abs=1e-14)

    def test_return(self):
        assert exact_mu_expectation(self.P2, "return") == pytest.approx(0.4, abs=1e-14)

    def test_callable_matches_builtin(self):
        P = ModelParams(2, 0.5, 5)
        assert exact_mu_expectation(P, lambda w: w.range_size) == pytest.approx(
            exact_mu_expectation(P, "range"), rel=1e-13)
        r2 = exact_mu_expectation(P, lambda w: float((w.positions[-1] ** 2).sum()))
        assert r2 == pytest.approx(exact_mu_expectation(P, "endpoint_r2"), rel=1e-13)

    def test_path_law(self):
        P = ModelParams(2, 0.5, 3)
        law = exact_path_law(P)
        codes = path_codes(2, 3)
        assert law.sum() == pytest.approx(1.0, abs=1e-15)
        ranges = np.array([WalkPath(c, 2).range_size for c in codes])
        mean = float((law * ranges).sum())
        assert mean == pytest.approx(exact_mu_expectation(P, "range"), rel=1e-13)

import math

import numpy as np
import pytest

from annealed_walk.environment import Environment, ModelParams, WalkPath, sample_environment, survival_dp
from annealed_walk.geometry import (CrossingDecomposition, SkeletalSet, TrulyOpenConfig,
                                    ball_covering_deficit, balanced_radius, boundary_size,
                                    crossing_decomposition, fit_rw1_constant, gamma,
                                    is_truly_open, obstacle_density_event, rw1_ratio,
                                    skeletal_set, truly_open_cluster)
from annealed_walk.lattice import (BallSpec, LatticeSet, ball, box_points, external_boundary,
                                   l1_ball)
from annealed_walk.environment import WindowTooSmall

E = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def env_of(window, obstacles):
    return Environment(window, LatticeSet(list(obstacles), 2) if obstacles else LatticeSet.empty(2))


class TestTrulyOpen:
    W = l1_ball((0, 0), 8)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrulyOpenConfig(0, 0.5)
        with pytest.raises(ValueError):
            TrulyOpenConfig(3, 0.0)

    def test_horizon_defaults(self):
        cfg = TrulyOpenConfig.for_horizon(1000)
        L = math.log(1000)
        assert cfg.t_surv == math.ceil(L**5) and cfg.threshold == pytest.approx(math.exp(-L * L))

    def test_obstacle_is_not_open(self):
        assert not is_truly_open(env_of(self.W, [(0, 0)]), (0, 0), TrulyOpenConfig(2, 0.1))

    def test_far_obstacles(self):
        assert is_truly_open(env_of(self.W, [(5, 0), (0, -6)]), (0, 0), TrulyOpenConfig(4, 1.0))

    def test_three_blocked_neighbours(self):
        env = env_of(self.W, E[1:])
        cfg = TrulyOpenConfig(2, 0.05)
        q = survival_dp(env, (0, 0), 2)
        assert q == 0.25
        assert is_truly_open(env, (0, 0), cfg) == (q >= 0.05)
        assert not is_truly_open(env, (0, 0), TrulyOpenConfig(2, 0.3))

    def test_window_too_small(self):
        with pytest.raises(WindowTooSmall):
            is_truly_open(env_of(self.W, []), (0, 0), TrulyOpenConfig(9, 0.5))

    def test_monotone_under_removal(self, rng):
        cfg = TrulyOpenConfig(4, 0.2)
        for _ in range(50):
            env = sample_environment(ModelParams(2, 0.8, 0, int(rng.integers(1e9))), self.W)
            if env.obstacles.cached_size == 0:
                continue
            drop = env.obstacles.points[rng.integers(env.obstacles.cached_size)]
            env2 = Environment(self.W, env.obstacles.difference(LatticeSet([drop], 2)))
            assert not (is_truly_open(env, (0, 0), cfg) and not is_truly_open(env2, (0, 0), cfg))


class TestCluster:
    def test_origin_obstacle(self):
        env = env_of(box_points((-10, -10), (10, 10)), [(0, 0)])
        assert truly_open_cluster(env, TrulyOpenConfig(2, 0.5), BallSpec((0, 0), 3)).cached_size == 0

    def test_no_obstacles(self):
        env = env_of(box_points((-12, -12), (12, 12)), [])
        T = truly_open_cluster(env, TrulyOpenConfig(3, 0.5), BallSpec((1, -1), 6.5))
        assert T == ball((1, -1), 6.5)

    def test_ring(self):
        W = box_points((-16, -16), (16, 16))
        ring = [tuple(p) for p in W.points.tolist() if 5 <= math.hypot(*p) < 6.2]
        env = env_of(W, ring)
        cfg = TrulyOpenConfig(3, 0.01)
        T = truly_open_cluster(env, cfg, BallSpec((0, 0), 12))
        assert T.cached_size > 0
        assert all(math.hypot(*p) <= 5 + cfg.t_surv for p in T.points.tolist())


class TestSkeletal:
    def test_single(self):
        env = env_of(ball((0, 0), 12), [(0, 0)])
        X = skeletal_set(env, (0, 0), 10)
        assert X.points == [(0, 0)] and X.inner_points == [(0, 0)]

    def test_absorbed(self):
        env = env_of(ball((0, 0), 20), [(0, 0), (1, 1)])
        X = skeletal_set(env, (0, 0), 16)  # separation 16^(1/4) = 2 > sqrt 2
        assert X.points == [(0, 0)]

    def test_anchor_must_be_obstacle(self):
        with pytest.raises(ValueError):
            skeletal_set(env_of(ball((0, 0), 5), []), (0, 0), 4)

    def test_random_invariants(self, rng):
        W = ball((0, 0), 20)
        for _ in range(50):
            pick = rng.choice(W.cached_size, size=50, replace=False)
            env = Environment(W, LatticeSet(W.points[pick], 2))
            x = tuple(env.obstacles.points[0])
            X = skeletal_set(env, x, float(rng.uniform(2, 20)))
            assert X.points[0] == x
            assert X.violations(env) == {"separation": 0, "covering": 0, "anchor": 0, "inner": 0}

    def test_greedy_order(self):
        env = env_of(ball((0, 0), 30), [(0, 0), (5, 0), (0, 5), (-5, 0), (9, 9)])
        X = skeletal_set(env, (0, 0), 20)
        assert X.points == [(0, 0), (-5, 0), (0, 5), (5, 0), (9, 9)]
        assert X.inner_points == [(0, 0), (-5, 0), (0, 5), (5, 0)]

    def test_json(self):
        env = env_of(ball((0, 0), 30), [(0, 0), (5, 0), (9, 9)])
        X = skeletal_set(env, (0, 0), 20)
        assert SkeletalSet.from_json(X.to_json()) == X


class TestBalancedRadius:
    def test_single_obstacle(self):
        env = env_of(ball((0, 0), 70), [(0, 0)])
        rep = balanced_radius(env, (0, 0), 64, 0.01, 0.01)
        assert rep.found and rep.j_star == 0 and rep.l_star == 64

    def test_all_inside_half(self):
        env = env_of(ball((0, 0), 70), [(0, 0), (10, 0), (0, -20), (15, 15)])
        rep = balanced_radius(env, (0, 0), 64, 0.01, 0.5)
        assert rep.j_star == 0 and rep.size_X == rep.size_X_inner

    def test_preconditions(self):
        with pytest.raises(ValueError):
            balanced_radius(env_of(ball((0, 0), 70), []), (0, 0), 64, 0.01, 0.01)
        W = ball((0, 0), 10)
        with pytest.raises(ValueError):
            balanced_radius(Environment(W, W), (0, 0), 8, 0.01, 0.01)

    def test_sparse_instances(self, rng):
        L, delta, rho = 256, 0.01, 0.01
        W = ball((0, 0), L)
        for _ in range(3):
            closed = rng.random(W.cached_size) < 0.003
            closed[np.all(W.points == 0, axis=1)] = True
            env = Environment(W, LatticeSet(W.points[closed], 2))
            rep = balanced_radius(env, (0, 0), L, delta, rho)
            assert rep.found and L ** (5 / 6) <= rep.l_star <= L
            X = skeletal_set(env, (0, 0), rep.l_star)
            assert len(X.inner_points) >= rho * min(len(X.points), delta * rep.l_star ** 1.5)


class TestGamma:
    def test_zero(self):
        assert gamma(0, 50, 2, 0.5) == 0 and gamma(0, 50, 3, 0.5) == 0

    def test_d3(self):
        assert gamma(1, 64, 3, 0.5) == pytest.approx(0.015625 / 1.5, abs=1e-15)

    def test_d2(self):
        assert gamma(1, 200, 2, 0.5) == pytest.approx(1 / math.log(500), abs=1e-15)
        assert gamma(1, 200, 2, 0.5) == pytest.approx(0.16092, abs=1e-5)

    def test_d2_clipped(self):
        # (c0 l)^{3/2} / (2k) <= 1
        assert gamma(1000, 10, 2, 0.5) == 0.0

    def test_monotone_d3(self):
        v = [gamma(k, 64, 3, 0.5) for k in range(300)]
        assert all(b > a for a, b in zip(v, v[1:]))

    def test_invalid(self):
        with pytest.raises(ValueError):
            gamma(1, 10, 2, 1.5)


def naive_crossings(pos, center, r_in, r_out):
    """Direct loop over times, independent of the vectorised implementation."""
    N = len(pos) - 1
    c = np.asarray(center)
    B = set(map(tuple, ball(center, r_in).points.tolist()))
    closure = B | set(map(tuple, external_boundary(ball(center, r_in)).points.tolist()))
    inside = [tuple(p) in closure for p in pos.tolist()]
    outside = [float(((p - c) ** 2).sum()) > r_out**2 for p in pos]
    sig, tau = [], []
    s = next((n for n in range(N + 1) if inside[n]), N)
    while True:
        t = next((n for n in range(s + 1, N + 1) if outside[n]), N) if s < N else N
        sig.append(s)
        tau.append(t)
        if t >= N:
            break
        s = next((n for n in range(t + 1, N + 1) if inside[n]), N)
        if s >= N:
            break
    return sig, tau


class TestCrossings:
    def test_never_enters(self):
        path = WalkPath([0] * 10, 2, start=(20, 20))
        cd = crossing_decomposition(path, (0, 0), 2, 4)
        assert cd.sigma[0] == 10 and cd.K == 0

    def test_single_excursion(self):
        # out to (6,0) and back until the closed inner ball is re-entered at time N
        path = WalkPath([0] * 6 + [1] * 4, 2)
        cd = crossing_decomposition(path, (0, 0), 1, 4.5)
        assert cd.K == 1 and cd.sigma == [0] and cd.tau == [5]

    def test_radii_order(self):
        with pytest.raises(ValueError):
            crossing_decomposition(WalkPath([0], 2), (0, 0), 3, 2)

    def test_random_paths(self, rng):
        for _ in range(300):
            N = int(rng.integers(1, 300))
            path = WalkPath(rng.integers(0, 4, size=N), 2)
            r_in = float(rng.uniform(0.5, 5))
            r_out = r_in + float(rng.uniform(0.5, 5))
            cd = crossing_decomposition(path, (0, 0), r_in, r_out)
            assert cd.check()
            assert (cd.sigma, cd.tau) == naive_crossings(path.positions, (0, 0), r_in, r_out)
            pos_dur = [k + 1 for k, d in enumerate(cd.durations) if d > 0]
            assert cd.K == (max(pos_dur) if pos_dur else 0)

    def test_json(self, rng):
        path = WalkPath(rng.integers(0, 4, size=100), 2)
        cd = crossing_decomposition(path, (1, 0), 2, 3.5)
        assert CrossingDecomposition.from_json(cd.to_json()) == cd


class TestDensityEvent:
    W = ball((0, 0), 12)

    def test_not_obstacle(self):
        assert not obstacle_density_event(env_of(self.W, []), (0, 0), 5, 0.5)

    def test_lonely_obstacle(self):
        assert obstacle_density_event(env_of(self.W, [(0, 0)]), (0, 0), 5, 0.05)

    def test_delta_one(self):
        env = env_of(self.W, [(0, 0), (1, 0)])
        assert obstacle_density_event(env, (0, 0), 3, 1.0)
        assert not obstacle_density_event(Environment(self.W, self.W), (0, 0), 3, 1.0)


class TestCoveringAndBoundary:
    def test_covered(self):
        assert ball_covering_deficit(ball((0, 0), 6), (1, 1), 3) == (0, 0.0)

    def test_empty_range(self):
        assert ball_covering_deficit(LatticeSet.empty(2), (0, 0), 1) == (5, 1.0)

    def test_boundary_point(self):
        assert boundary_size(LatticeSet([(0, 0)], 2)) == 4

    @pytest.mark.parametrize("N", [1, 5, 30])
    def test_boundary_segment(self, N):
        assert boundary_size(WalkPath([0] * N, 2).range_set()) == 2 * N + 4

    def test_boundary_ball(self):
        B = ball((0, 0), 7)
        assert boundary_size(B) == external_boundary(B).cached_size

    def test_boundary_empty(self):
        with pytest.raises(ValueError):
            boundary_size(LatticeSet.empty(2))


class TestRW1:
    def test_ratio_at_most_one(self, rng):
        samples = []
        for _ in range(8):
            W = ball((0, 0), 16)
            closed = rng.random(W.cached_size) < 0.02
            closed[np.all(W.points == 0, axis=1)] = False
            env = Environment(W, LatticeSet(W.points[closed], 2))
            s = rw1_ratio(env, 16, 0.5)
            if s is not None:
                assert 0 <= s.ratio <= 1 + 1e-12
                samples.append(s)
        c = fit_rw1_constant(samples)
        assert math.isnan(c) or c > 0

    def test_no_obstacles(self):
        assert rw1_ratio(env_of(ball((0, 0), 10), []), 10, 0.5) is None

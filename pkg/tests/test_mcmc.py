import math

import numpy as np
import pytest

from annealed_walk.environment import ModelParams, WalkPath, exact_mu_expectation, range_histogram
from annealed_walk.lattice import LatticeSet, box_points
from annealed_walk.mcmc import (KIND_NAMES, ChainState, MoveMix, MoveSpec, acceptance_probability,
                                batch_mean_error, confined_walk, integrated_autocorrelation,
                                metropolis_step, optimal_region_radius, path_histogram, propose,
                                run_chain, run_proposals, sample_obstacles_given_path,
                                total_variation, write_chain_csv)
from annealed_walk.environment import exact_path_law


def state_with(steps, p=0.5, seed=1):
    steps = np.asarray(steps, dtype=np.int8)
    return ChainState.start(ModelParams(2, p, len(steps), seed), steps, seed)


class TestMoveSpec:
    def test_window(self):
        with pytest.raises(ValueError):
            MoveSpec("segment_regrow", 3, 3)
        with pytest.raises(ValueError):
            MoveSpec("teleport", 0, 1)

    def test_beyond_horizon(self):
        st = state_with([0, 0])
        with pytest.raises(ValueError):
            propose(st, MoveSpec("segment_regrow", 0, 5))


class TestPropose:
    def test_identity_regrow(self):
        st = state_with([0, 2, 0, 3, 1])
        cand, delta = propose(st, MoveSpec("segment_regrow", 1, 4, (2, 0, 3)))
        assert delta == 0 and cand == st.path

    def test_backtrack_unfolds(self):
        st = state_with([0, 1])
        assert st.range_size == 2
        cand, delta = propose(st, MoveSpec("endpoint_regrow", 1, 2, (2,)))
        assert delta == 1 and cand.range_size == 3

    def test_state_unchanged_by_propose(self):
        st = state_with([0, 0, 0, 0])
        before = st.path
        propose(st, MoveSpec("endpoint_regrow", 0, 4, (2, 2, 1, 1)))
        assert st.path == before

    def test_wiggle_translates_suffix(self):
        st = state_with([0, 0, 0, 0])
        cand, delta = propose(st, MoveSpec("local_wiggle", 1, 2, (2,)))
        assert cand.positions[-1].tolist() == [3, 1]
        assert delta == cand.range_size - st.range_size

    def test_pair_preserves_endpoint(self):
        rng = np.random.default_rng(4)
        st = state_with(rng.integers(0, 4, size=30))
        end = st.path.end
        for t0 in range(29):
            cand, delta = propose(st, MoveSpec("pair_rotate", t0, t0 + 2))
            assert cand.end == end
            assert delta == cand.range_size - st.range_size

    def test_random_deltas_match_recount(self):
        rng = np.random.default_rng(7)
        st = state_with(np.zeros(10, dtype=np.int8))
        for _ in range(10_000):
            kind = KIND_NAMES[rng.integers(len(KIND_NAMES))]
            if kind == "pair_rotate":
                t0 = int(rng.integers(0, 9))
                t1 = t0 + 2
            elif kind == "local_wiggle":
                t0 = int(rng.integers(0, 10))
                t1 = t0 + 1
            else:
                t0 = int(rng.integers(0, 10))
                t1 = int(rng.integers(t0 + 1, 11))
            spec = MoveSpec(kind, t0, t1)
            before = st.range_size
            cand, delta = propose(st, spec)
            recount = len(set(map(tuple, cand.positions.tolist())))
            assert delta == recount - before
            metropolis_step(st, spec)
            assert st.range_size == len(set(map(tuple, st.path.positions.tolist())))


class TestAcceptance:
    def test_examples(self):
        assert acceptance_probability(0, 0.5) == 1.0
        assert acceptance_probability(-3, 0.5) == 1.0
        assert acceptance_probability(2, 0.5) == 0.25

    def test_zero_delta_always_accepted(self):
        st = state_with([0, 2, 0, 3, 1, 1, 2])
        for _ in range(200):
            metropolis_step(st, MoveSpec("segment_regrow", 2, 5, tuple(st.kernel.steps()[2:5])))
        p, a = st.move_stats["segment_regrow"]
        assert p == a == 200


class TestChain:
    def test_moment_N10(self):
        P = ModelParams(2, 0.5, 10, 3)
        res = run_chain(P, MoveMix(), sweeps=100_000, burn_in=500, thin=100_000,
                        full_observables=False)
        mean, err = res.mean_range()
        assert abs(mean - exact_mu_expectation(P, "range")) <= 3 * err
        assert not res.flagged

    def test_near_free_walk(self):
        h = range_histogram(2, 10)
        counts = h.sum(1)
        free_mean = float((np.arange(counts.size) * counts).sum() / counts.sum())
        P = ModelParams(2, 0.999, 10, 5)
        res = run_chain(P, MoveMix(), sweeps=50_000, burn_in=500, thin=50_000,
                        full_observables=False)
        assert abs(res.mean_range()[0] / free_mean - 1) <= 0.01

    def test_two_chains_agree(self):
        out = []
        for seed in (11, 12):
            res = run_chain(ModelParams(2, 0.5, 40, seed), MoveMix(), sweeps=20_000, thin=1000,
                            full_observables=False)
            out.append(res.mean_range())
        (m1, e1), (m2, e2) = out
        assert abs(m1 - m2) <= 3 * math.hypot(e1, e2)

    def test_summaries(self):
        res = run_chain(ModelParams(2, 0.5, 50, 2), MoveMix.localized(), sweeps=200, burn_in=50,
                        thin=50, init="confined")
        assert len(res.samples) == 4
        s = res.samples[-1]
        assert s.sweep == 250 and s.range_size > 0 and s.boundary_size >= 4
        assert s.covering_radius >= 0 and s.endpoint_r2 >= 0

    def test_flagging(self):
        res = run_chain(ModelParams(2, 0.5, 200, 1), MoveMix(segment=0, endpoint=0, wiggle=1),
                        sweeps=60, burn_in=0, thin=60, full_observables=False)
        assert res.flagged == (res.tau > 60 / 50)

    def test_log_weight_exact(self):
        st = ChainState.start(ModelParams(2, 0.5, 100, 9))
        run_proposals(st, 10**6, MoveMix())
        assert st.log_weight == st.path.range_size * math.log(0.5)

    def test_deterministic(self):
        P = ModelParams(2, 0.5, 30, 21)
        a = run_chain(P, MoveMix(), sweeps=300, thin=30)
        b = run_chain(P, MoveMix(), sweeps=300, thin=30)
        assert np.array_equal(a.range_trace, b.range_trace)

    def test_csv(self, tmp_path):
        res = run_chain(ModelParams(2, 0.5, 20, 2), MoveMix(), sweeps=100, burn_in=10, thin=10)
        write_chain_csv(res, tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0].startswith("# d=2 p=0.5 N=20 seed=2")
        assert lines[1] == "sweep,range_size,boundary_size,covering_radius,endpoint_r2,accept_rate_by_move"
        assert len(lines) == 12


class TestCheckpoint:
    def test_resume_bit_exact(self):
        P = ModelParams(2, 0.5, 60, 8)
        mix = MoveMix()
        full = ChainState.start(P)
        run_proposals(full, 40_000, mix)
        half = ChainState.start(P)
        run_proposals(half, 20_000, mix)
        resumed = ChainState.from_checkpoint(half.checkpoint_text())
        run_proposals(resumed, 20_000, mix)
        assert resumed.checkpoint_text() == full.checkpoint_text()

    def test_round_trip_text(self):
        st = ChainState.start(ModelParams(3, 0.3, 25, 4), "confined")
        run_proposals(st, 1000, MoveMix())
        text = st.checkpoint_text()
        assert ChainState.from_checkpoint(text).checkpoint_text() == text


class TestInit:
    def test_confined_stays_inside(self):
        steps = confined_walk(500, 2, 4.0, 3)
        pos = WalkPath(steps, 2).positions
        assert ((pos**2).sum(1) <= 16).all()

    def test_region_radius(self):
        P = ModelParams(2, 0.5, 10_000)
        assert optimal_region_radius(P) == pytest.approx(1.5999555 * 10 / math.sqrt(math.pi), rel=1e-6)


class TestDiagnostics:
    def test_iid_tau_near_one(self):
        x = np.random.default_rng(0).normal(size=20_000)
        tau, _ = integrated_autocorrelation(x)
        assert 0.8 < tau < 1.2

    def test_ar1_tau(self):
        rng = np.random.default_rng(1)
        a = 0.9
        x = np.empty(200_000)
        x[0] = 0
        eps = rng.normal(size=x.size)
        for i in range(1, x.size):
            x[i] = a * x[i - 1] + eps[i]
        tau, M = integrated_autocorrelation(x)
        assert tau == pytest.approx((1 + a) / (1 - a), rel=0.1)
        assert M >= 5 * tau

    def test_constant_series(self):
        assert integrated_autocorrelation([3.0] * 10)[0] == 1.0

    def test_batch_error(self):
        x = np.arange(10.0)
        assert batch_mean_error(x, 4.0) == pytest.approx(math.sqrt(x.var(ddof=1) * 4 / 10))


class TestTotalVariation:
    def test_small_law(self):
        P = ModelParams(2, 0.5, 4, 3)
        hist = path_histogram(P, 2_000_000, MoveMix())
        assert total_variation(hist / hist.sum(), exact_path_law(P)) <= 0.01

    @pytest.mark.parametrize("mix,steps", [
        (MoveMix.localized(), 16_000_000),  # rare endpoint moves: slower but unbiased
        (MoveMix(segment=0.2, endpoint=0.1, wiggle=0.1, shuffle=0.3, pair=0.3), 4_000_000),
    ], ids=["localized", "all_kinds"])
    def test_extra_moves_keep_law(self, mix, steps):
        P = ModelParams(2, 0.5, 5, 8)
        hist = path_histogram(P, steps, mix)
        assert total_variation(hist / hist.sum(), exact_path_law(P)) <= 0.012


class TestObstaclesGivenPath:
    def test_window_equals_range(self):
        path = WalkPath([0, 2, 1, 1], 2)
        env = sample_obstacles_given_path(path, ModelParams(2, 0.5, 4, 1), path.range_set())
        assert env.obstacles.cached_size == 0

    def test_p_near_one(self):
        path = WalkPath([0, 0], 2)
        W = box_points((-20, -20), (20, 20))
        n = sum(sample_obstacles_given_path(path, ModelParams(2, 1 - 1e-12, 2, s), W).obstacles.cached_size
                for s in range(50))
        assert n == 0

    def test_range_is_open(self, rng):
        path = WalkPath(rng.integers(0, 4, size=100), 2)
        W = box_points(path.positions.min(0) - 3, path.positions.max(0) + 3)
        env = sample_obstacles_given_path(path, ModelParams(2, 0.1, 100, 4), W)
        assert not env.obstacles.contains_many(path.positions).any()

    def test_frequency_off_range(self):
        path = WalkPath([0, 2, 0, 3, 1, 1], 2)
        W = box_points((-4, -4), (4, 4))
        site = (-3, 3)
        hits = sum(sample_obstacles_given_path(path, ModelParams(2, 0.5, 6, s), W).is_obstacle(site)
                   for s in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 3 * math.sqrt(0.25 / 10_000)

    def test_range_outside_window(self):
        with pytest.raises(ValueError):
            sample_obstacles_given_path(WalkPath([0] * 5, 2), ModelParams(2, 0.5, 5), box_points((0, 0), (2, 2)))

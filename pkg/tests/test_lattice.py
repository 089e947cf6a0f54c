import itertools
import math

import numpy as np
import pytest

from annealed_walk.lattice import (BallSpec, LatticeSet, ball, ball_points, box_points, closed_ball,
                                   connected_component, empirical_center, external_boundary)
from annealed_walk.spectral import unit_ball_volume


def pts(s):
    return set(map(tuple, s.points.tolist()))


class TestBall:
    def test_unit_ball(self):
        b = ball((0, 0), 1)
        assert pts(b) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
        assert b.cached_size == 5

    def test_zero_radius(self):
        assert pts(ball((0, 0), 0)) == {(0, 0)}

    def test_radius_two_has_13_sites(self):
        brute = sum(1 for x, y in itertools.product(range(-2, 3), repeat=2) if x * x + y * y <= 4)
        assert brute == 13
        assert ball((0, 0), 2).cached_size == 13

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ball_points(BallSpec((0, 0), 1.0), dimension=3)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            BallSpec((0, 0), -1.0)

    @pytest.mark.parametrize("d", [2, 3])
    def test_volume_ratio_at_r50(self, d):
        n = ball(tuple([0] * d), 50).cached_size
        assert abs(n / (unit_ball_volume(d) * 50**d) - 1) <= 0.05

    def test_closed_ball_adds_boundary(self):
        b = ball((2, 1), 3)
        cb = closed_ball((2, 1), 3)
        assert pts(cb) == pts(b) | pts(external_boundary(b))


class TestBoundary:
    def test_single_site(self):
        assert pts(external_boundary(LatticeSet([(0, 0)], 2))) == {(1, 0), (-1, 0), (0, 1), (0, -1)}

    def test_empty(self):
        assert external_boundary(LatticeSet.empty(2)).cached_size == 0

    def test_plus_shape(self):
        plus = ball((0, 0), 1)
        b = external_boundary(plus)
        brute = {(x, y) for x in range(-3, 4) for y in range(-3, 4)
                 if (x, y) not in pts(plus)
                 and any(abs(x - a) + abs(y - c) == 1 for a, c in pts(plus))}
        assert pts(b) == brute and len(brute) == 8
        for p in pts(b):
            assert math.hypot(*p) in (math.sqrt(2), 2.0)

    def test_disjoint(self, rng):
        A = LatticeSet(rng.integers(-5, 6, size=(40, 2)), 2)
        assert not (pts(A) & pts(external_boundary(A)))


class TestComponent:
    def test_by_inspection(self):
        A = LatticeSet([(0, 0), (1, 0), (5, 5)], 2)
        assert pts(connected_component(A, (0, 0))) == {(0, 0), (1, 0)}

    def test_seed_outside(self):
        A = LatticeSet([(0, 0), (1, 0)], 2)
        assert connected_component(A, (3, 3)).cached_size == 0

    def test_punctured_ball(self):
        A = ball((0, 0), 3).difference(LatticeSet([(1, 0), (-1, 0), (0, 1), (0, -1)], 2))
        assert pts(connected_component(A, (0, 0))) == {(0, 0)}

    def test_closed_and_maximal(self, rng):
        A = LatticeSet(rng.integers(-6, 7, size=(80, 2)), 2)
        seed = tuple(A.points[0])
        C = pts(connected_component(A, seed))
        rest = pts(A) - C
        for x in C:
            for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                y = (x[0] + e[0], x[1] + e[1])
                assert y not in rest


class TestCenter:
    def test_singleton(self):
        assert empirical_center(LatticeSet([(0, 0)], 2)) == ((0, 0), 0.0)

    def test_pair(self):
        assert empirical_center(LatticeSet([(0, 0), (2, 0)], 2)) == ((1, 0), 1.0)

    def test_ball(self):
        assert empirical_center(ball((3, -1), 4)) == ((3, -1), 4.0)

    def test_exhaustive(self, rng):
        for _ in range(10):
            A = LatticeSet(rng.integers(-8, 9, size=(int(rng.integers(2, 60)), 2)), 2)
            c, r = empirical_center(A)
            lo, hi = A.bounding_box()
            best = min(max(math.dist(q, a) for a in A.points.tolist())
                       for q in box_points(lo, hi).points.tolist())
            assert r == pytest.approx(best, abs=1e-12)
            assert r == pytest.approx(max(math.dist(c, a) for a in A.points.tolist()))


class TestText:
    def test_round_trip(self, rng):
        A = LatticeSet(rng.integers(-100, 100, size=(50, 3)), 3)
        text = A.to_text()
        assert text.startswith(f"d=3 n={A.cached_size}\n")
        B = LatticeSet.from_text(text)
        assert B == A and B.to_text() == text

    def test_empty_round_trip(self):
        E = LatticeSet.empty(2)
        assert LatticeSet.from_text(E.to_text()) == E

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            LatticeSet.from_text("d=2 n=2\n0 0\n")

    def test_no_duplicates(self):
        A = LatticeSet([(0, 0), (0, 0), (1, 1)], 2)
        assert A.cached_size == 2 == len(A)

    def test_mask_round_trip(self, rng):
        A = LatticeSet(rng.integers(-5, 6, size=(30, 2)), 2)
        mask, origin = A.to_mask(pad=2)
        assert LatticeSet.from_mask(mask, origin) == A

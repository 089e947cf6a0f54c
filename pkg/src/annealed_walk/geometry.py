"""Geometric observables of walks and obstacle configurations.

Truly-open sites and their cluster, skeletal obstacle sets, the balanced-radius
search, the hitting-rate functional Gamma, crossing decompositions of a path in
an annulus, obstacle-density events, ball-covering deficits and boundary sizes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .environment import Environment, WalkPath, WindowTooSmall, survival_field, survival_dp
from .lattice import (BallSpec, LatticeSet, Point, as_point, ball, ball_points,
                      closed_ball, connected_component, external_boundary)


# ------------------------------------------------------------------------
# truly-open sites


@dataclass(frozen=True)
class TrulyOpenConfig:
    """Survival horizon and probability threshold defining a truly-open site."""

    t_surv: int
    threshold: float

    def __post_init__(self):
        if self.t_surv < 1:
            raise ValueError("t_surv must be at least 1")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")

    @classmethod
    def for_horizon(cls, N: int) -> "TrulyOpenConfig":
        """Asymptotic defaults: t = (log N)^5 and threshold exp(-(log N)^2)."""
        L = math.log(N)
        return cls(max(1, math.ceil(L**5)), math.exp(-L * L))


def is_truly_open(env: Environment, x, cfg: TrulyOpenConfig) -> bool:
    """P_x(tau_O > t_surv) >= threshold."""
    return survival_dp(env, x, cfg.t_surv) >= cfg.threshold


def truly_open_field(env: Environment, region: LatticeSet, cfg: TrulyOpenConfig) -> LatticeSet:
    """All truly-open sites of ``region``."""
    if not region.cached_size:
        return region
    lo, hi = region.bounding_box()
    mask, _ = region.to_mask(lo, hi)
    surv = survival_field(env, lo, hi, cfg.t_surv, region=mask)
    good = mask & (surv >= cfg.threshold)
    return LatticeSet.from_mask(good, lo)


def truly_open_cluster(env: Environment, cfg: TrulyOpenConfig, confinement: BallSpec,
                       origin: Optional[Point] = None) -> LatticeSet:
    """Nearest-neighbour component of truly-open sites in the confinement ball containing the origin.

    Empty when the origin is not truly open or lies outside the ball.
    """
    d = env.dimension
    origin = as_point(origin) if origin is not None else tuple([0] * d)
    region = ball_points(confinement, d)
    if origin not in region:
        return LatticeSet.empty(d)
    good = truly_open_field(env, region, cfg)
    if origin not in good:
        return LatticeSet.empty(d)
    return connected_component(good, origin)


# ------------------------------------------------------------------------
# skeletal sets


@dataclass
class SkeletalSet:
    anchor: Point
    radius_l: float
    points: list
    inner_points: list

    @property
    def separation(self) -> float:
        return self.radius_l ** (1.0 / (2 * len(self.anchor)))

    def to_json(self) -> str:
        return json.dumps({"anchor": list(self.anchor), "radius_l": self.radius_l,
                           "points": [list(p) for p in self.points],
                           "inner_points": [list(p) for p in self.inner_points]})

    @classmethod
    def from_json(cls, text: str) -> "SkeletalSet":
        data = json.loads(text)
        return cls(tuple(data["anchor"]), float(data["radius_l"]),
                   [tuple(p) for p in data["points"]], [tuple(p) for p in data["inner_points"]])

    def violations(self, env: Environment) -> dict:
        """Brute-force count of separation and covering failures (both should be 0)."""
        r = self.separation
        pts = np.asarray(self.points, dtype=float)
        diff = pts[:, None, :] - pts[None, :, :]
        dist2 = (diff**2).sum(-1)
        iu = np.triu_indices(len(pts), 1)
        sep_bad = int((dist2[iu] < r * r * (1 - 1e-12)).sum())
        obs = _obstacles_in_ball(env, self.anchor, self.radius_l).astype(float)
        cover_bad = 0
        if obs.size:
            d2 = ((obs[:, None, :] - pts[None, :, :]) ** 2).sum(-1).min(1)
            cover_bad = int((d2 > r * r * (1 + 1e-12)).sum())
        anchor_bad = int(tuple(self.points[0]) != tuple(self.anchor))
        half2 = (self.radius_l / 2.0) ** 2
        a = np.asarray(self.anchor, dtype=float)
        expect_inner = [p for p in self.points if ((np.asarray(p) - a) ** 2).sum() <= half2]
        inner_bad = int(expect_inner != list(self.inner_points))
        return {"separation": sep_bad, "covering": cover_bad,
                "anchor": anchor_bad, "inner": inner_bad}


def _obstacles_in_ball(env: Environment, x, l: float) -> np.ndarray:
    obs = env.obstacles.points
    if not obs.shape[0]:
        return obs
    diff = obs - np.asarray(x, dtype=np.int64)
    return obs[(diff * diff).sum(1) <= l * l]


def skeletal_set(env: Environment, x, l: float) -> SkeletalSet:
    """Greedy l^{1/(2d)}-separated, l^{1/(2d)}-covering subset of the obstacles in B(x, l).

    Starts from x, then repeatedly takes the remaining obstacle closest to x
    (ties broken lexicographically) and deletes its l^{1/(2d)}-ball.
    """
    x = as_point(x)
    if not env.is_obstacle(x):
        raise ValueError("the anchor of a skeletal set must be an obstacle")
    d = len(x)
    r2 = float(l) ** (1.0 / d)  # (l^{1/(2d)})^2
    obs = _obstacles_in_ball(env, x, l)
    rel = obs - np.asarray(x, dtype=np.int64)
    dist2 = (rel * rel).sum(1)
    order = np.lexsort(tuple(obs[:, a] for a in range(d - 1, -1, -1)) + (dist2,))
    obs = obs[order]
    alive = np.ones(obs.shape[0], dtype=bool)
    picks = []
    cur = np.asarray(x, dtype=np.int64)
    idx = 0
    while True:
        picks.append(as_point(cur))
        diff = obs - cur
        alive &= (diff * diff).sum(1) > r2
        while idx < obs.shape[0] and not alive[idx]:
            idx += 1
        if idx >= obs.shape[0]:
            break
        cur = obs[idx]
    half2 = (float(l) / 2.0) ** 2
    inner = [p for p in picks if sum((a - b) ** 2 for a, b in zip(p, x)) <= half2]
    return SkeletalSet(x, float(l), picks, inner)


@dataclass
class BalancedRadiusReport:
    L: float
    delta: float
    rho: float
    found: bool
    l_star: Optional[float]
    j_star: Optional[int]
    size_X: Optional[int]
    size_X_inner: Optional[int]
    history: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def obstacle_density(env: Environment, x, l: float) -> float:
    """|O cap B(x,l)| / |B(x,l)|."""
    B = ball(as_point(x), l)
    return _obstacles_in_ball(env, x, l).shape[0] / B.cached_size


def balanced_radius(env: Environment, x, L: float, delta: float, rho: float) -> BalancedRadiusReport:
    """Smallest j >= 0 with |X°_l| >= rho * min(|X_l|, delta * l^{d - 1/2}), l = L / 2^j.

    Only l >= L^{5/6} is admissible. When no admissible j works the report has
    ``found=False``; the history then records every tested level.
    """
    x = as_point(x)
    d = len(x)
    if not env.is_obstacle(x):
        raise ValueError("x must be an obstacle")
    dens = obstacle_density(env, x, L)
    if not dens < delta:
        raise ValueError(f"obstacle density {dens:.4g} in B(x, L) is not below delta")
    floor = float(L) ** (5.0 / 6.0)
    history = []
    j = 0
    while True:
        l = float(L) / 2**j
        if l < floor:
            break
        X = skeletal_set(env, x, l)
        nX, nXo = len(X.points), len(X.inner_points)
        bound = rho * min(nX, delta * l ** (d - 0.5))
        history.append({"j": j, "l": l, "size_X": nX, "size_X_inner": nXo, "bound": bound})
        if nXo >= bound:
            return BalancedRadiusReport(float(L), delta, rho, True, l, j, nX, nXo, history)
        j += 1
    return BalancedRadiusReport(float(L), delta, rho, False, None, None, None, None, history)


def gamma(k: int, l: float, d: int, c0: float) -> float:
    """Obstacle-hitting rate per (c0 l)^2 steps for a skeleton of size k."""
    if k < 0 or l < 1 or not 0 < c0 < 1:
        raise ValueError("gamma needs k >= 0, l >= 1 and 0 < c0 < 1")
    if k == 0:
        return 0.0
    if d == 2:
        arg = (c0 * l) ** 1.5 / (2 * k)
        return 1.0 / math.log(arg) if arg > 1 else 0.0
    return l ** (2 - d) * k / (1.0 + l ** ((2 - d) / (2 * d)) * k ** (2.0 / d))


# ------------------------------------------------------------------------
# crossings


@dataclass
class CrossingDecomposition:
    center: Point
    inner_radius: float
    outer_radius: float
    sigma: list
    tau: list
    K: int
    durations: list
    N: int

    def to_json(self) -> str:
        return json.dumps({"center": list(self.center), "inner_radius": self.inner_radius,
                           "outer_radius": self.outer_radius, "sigma": self.sigma,
                           "tau": self.tau, "K": self.K, "durations": self.durations,
                           "N": self.N})

    @classmethod
    def from_json(cls, text: str) -> "CrossingDecomposition":
        d = json.loads(text)
        return cls(tuple(d["center"]), d["inner_radius"], d["outer_radius"], d["sigma"],
                   d["tau"], d["K"], d["durations"], d["N"])

    def check(self) -> bool:
        seq = [v for pair in zip(self.sigma, self.tau) for v in pair]
        interlaced = seq[0] >= 0 and all(a <= b for a, b in zip(seq, seq[1:])) and seq[-1] <= self.N
        positive = [k + 1 for k, (s, t) in enumerate(zip(self.sigma, self.tau)) if t - s > 0]
        return interlaced and self.K == (max(positive) if positive else 0)


def crossing_decomposition(path: WalkPath, center, inner_r: float, outer_r: float) -> CrossingDecomposition:
    """Alternating entrance times into the closed inner ball and exits from the outer ball.

    sigma_1 = first n >= 0 with S_n in the closure of B(center, inner_r);
    tau_k = first n > sigma_k with |S_n - center| > outer_r; sigma_{k+1} = first
    n > tau_k back in the closed inner ball. Every time is truncated at N.
    """
    if not inner_r < outer_r:
        raise ValueError("inner radius must be smaller than the outer radius")
    center = as_point(center)
    pos = path.positions
    N = path.N
    inner = closed_ball(center, inner_r).contains_many(pos)
    diff = pos - np.asarray(center, dtype=np.int64)
    outside = (diff * diff).sum(1) > outer_r * outer_r
    in_idx = np.flatnonzero(inner)
    out_idx = np.flatnonzero(outside)

    def first_after(idx: np.ndarray, n: int, strict: bool) -> int:
        k = np.searchsorted(idx, n, side="right" if strict else "left")
        return int(min(idx[k], N)) if k < idx.size else N

    sigma, tau = [], []
    s = first_after(in_idx, 0, strict=False)
    while True:
        t = first_after(out_idx, s, strict=True) if s < N else N
        sigma.append(s)
        tau.append(t)
        if t >= N:
            break
        s = first_after(in_idx, t, strict=True)
        if s >= N:
            break
    durations = [t - s for s, t in zip(sigma, tau)]
    K = max((k + 1 for k, dur in enumerate(durations) if dur > 0), default=0)
    return CrossingDecomposition(center, float(inner_r), float(outer_r), sigma, tau, K,
                                 durations, N)


# ------------------------------------------------------------------------
# densities, covering, boundary


def obstacle_density_event(env: Environment, x, l: float, delta: float) -> bool:
    """x is an obstacle and the obstacle density in B(x, l) is below delta."""
    x = as_point(x)
    B = ball(x, l)
    if not env.window.contains_many(B.points).all():
        raise WindowTooSmall("B(x, l) is not inside the window")
    if not env.is_obstacle(x):
        return False
    return _obstacles_in_ball(env, x, l).shape[0] / B.cached_size < delta


def ball_covering_deficit(range_set: LatticeSet, center, r: float) -> tuple[int, float]:
    """Number and fraction of lattice points of B(center, r) missed by ``range_set``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    B = ball(as_point(center), r)
    if not range_set.cached_size:
        return B.cached_size, 1.0
    missed = int((~range_set.contains_many(B.points)).sum())
    return missed, missed / B.cached_size


def boundary_size(range_set: LatticeSet) -> int:
    """|external boundary of the range|."""
    if not range_set.cached_size:
        raise ValueError("boundary of an empty range is undefined here")
    return external_boundary(range_set).cached_size


# ------------------------------------------------------------------------
# comparison of killed and unkilled heat kernels


@dataclass
class RW1Sample:
    l: float
    n_steps: int
    size_X_inner: int
    gamma: float
    ratio: float


def rw1_ratio(env: Environment, l: float, c0: float, center=None) -> Optional[RW1Sample]:
    """p^{B minus O}_n(u, u) / p^B_n(u, u) at the ball center, n = round((c0 l)^2).

    The skeleton is anchored at the obstacle nearest to the center. Returns
    None when the center is itself an obstacle or B has no obstacle.
    """
    from .spectral import heat_kernel

    d = env.dimension
    center = as_point(center) if center is not None else tuple([0] * d)
    if env.is_obstacle(center):
        return None
    obs = _obstacles_in_ball(env, center, l)
    if not obs.shape[0]:
        return None
    rel = obs - np.asarray(center, dtype=np.int64)
    order = np.lexsort(tuple(obs[:, a] for a in range(d - 1, -1, -1)) + ((rel * rel).sum(1),))
    anchor = as_point(obs[order[0]])
    X = skeletal_set(env, anchor, l)
    n = max(1, int(round((c0 * l) ** 2)))
    B = ball(center, l)
    free = B.difference(env.obstacles)
    ratio = heat_kernel(free, center, center, n) / heat_kernel(B, center, center, n)
    k = len(X.inner_points)
    return RW1Sample(float(l), n, k, gamma(k, l, d, c0), float(ratio))


def fit_rw1_constant(samples: Sequence[RW1Sample]) -> float:
    """Largest c with log(ratio) <= -c * Gamma on every sample having Gamma > 0."""
    vals = [-math.log(s.ratio) / s.gamma for s in samples
            if s.gamma > 0 and s.ratio > 0]
    return min(vals) if vals else float("nan")

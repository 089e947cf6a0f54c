"""Bernoulli obstacle environments, killed walks and the exact enumeration oracle.

The oracle enumerates all (2d)^N simple-random-walk paths from the origin; the
annealed partition function is Z_N = E[p^{|S_[0,N]|}] and the path marginal of
the conditioned law gives each path weight (2d)^{-N} p^{|range|} / Z_N.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

import numpy as np
from scipy import ndimage

from ._backend import kernels
from .lattice import LatticeSet, Point, as_point, l1_ball, unit_vectors
from .rng import site_uniform

SURVIVED = math.inf
"""Killing time of a path that never meets an obstacle."""

DEFAULT_BUDGET = 10**8

OPEN, OBSTACLE, OUTSIDE = 0, 1, 2


class WindowTooSmall(ValueError):
    """A computation needs lattice sites outside the environment's window."""


class BudgetExceeded(ValueError):
    """Exhaustive enumeration would visit more paths than the configured budget."""


@dataclass(frozen=True)
class ModelParams:
    d: int
    p: Union[float, Fraction]
    N: int
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if not 0 < self.p < 1:
            raise ValueError("open probability must lie strictly between 0 and 1")
        if self.N < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def log_p(self) -> float:
        return math.log(self.p)


class Environment:
    """Obstacle set on a finite window; sites outside the window are unknown."""

    def __init__(self, window: LatticeSet, obstacles: LatticeSet):
        if window.dimension != obstacles.dimension:
            raise ValueError("window and obstacles differ in dimension")
        if obstacles.cached_size and not window.contains_many(obstacles.points).all():
            raise ValueError("obstacles must lie inside the window")
        self.window = window
        self.obstacles = obstacles

    @property
    def dimension(self) -> int:
        return self.window.dimension

    def is_obstacle(self, x) -> bool:
        return as_point(x) in self.obstacles

    def in_window(self, x) -> bool:
        return as_point(x) in self.window

    def fingerprint(self) -> str:
        return f"{self.window.fingerprint()}:{self.obstacles.fingerprint()}"

    def status_mask(self, lo, hi) -> np.ndarray:
        """uint8 array over the box [lo, hi]: OPEN, OBSTACLE, or OUTSIDE the window."""
        win, _ = self.window.to_mask(lo, hi)
        obs, _ = self.obstacles.to_mask(lo, hi)
        mask = np.full(win.shape, OUTSIDE, dtype=np.uint8)
        mask[win] = OPEN
        mask[obs] = OBSTACLE
        return mask

    def to_text(self) -> str:
        return f"# obstacles of window {self.window.fingerprint()}\n" + self.obstacles.to_text()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        return self.window == other.window and self.obstacles == other.obstacles

    def __repr__(self) -> str:
        return f"Environment(window={self.window!r}, obstacles={self.obstacles!r})"


class LazyEnvironment:
    """Obstacles on all of Z^d, generated on first query from (seed, site).

    Identical sites always give identical answers; nothing is materialised until
    :meth:`materialize` is called on a finite window.
    """

    def __init__(self, d: int, p: float, seed: int):
        self.d = d
        self.p = float(p)
        self.seed = int(seed)

    def is_obstacle(self, x) -> bool:
        return site_uniform(self.seed, x) < 1.0 - self.p

    def materialize(self, window: LatticeSet) -> Environment:
        flags = [self.is_obstacle(x) for x in window.points.tolist()]
        obstacles = window.points[np.array(flags, dtype=bool)] if flags else window.points
        return Environment(window, LatticeSet(obstacles, window.dimension))


def environment_from_text(text: str, window: LatticeSet) -> Environment:
    header = next((ln for ln in text.splitlines() if ln.startswith("# obstacles of window")), None)
    if header is not None and header.split()[-1] != window.fingerprint():
        raise ValueError("obstacle file was written for a different window")
    return Environment(window, LatticeSet.from_text(text))


class WalkPath:
    """Nearest-neighbour path S_0..S_N with its range multiset."""

    def __init__(self, steps, d: int, start: Point | None = None):
        steps = np.asarray(steps, dtype=np.int8).reshape(-1)
        if steps.size and (steps.min() < 0 or steps.max() >= 2 * d):
            raise ValueError("step codes must lie in range(2*d)")
        self.d = int(d)
        self.start = as_point(start) if start is not None else tuple([0] * d)
        if len(self.start) != d:
            raise ValueError("start point has the wrong dimension")
        self.steps = steps
        self.steps.setflags(write=False)
        incr = unit_vectors(d)[steps.astype(np.int64)]
        pos = np.vstack([np.zeros((1, d), dtype=np.int64), np.cumsum(incr, axis=0)])
        self.positions = pos + np.asarray(self.start, dtype=np.int64)
        self.positions.setflags(write=False)
        self._multiset: Counter | None = None

    @classmethod
    def from_positions(cls, positions) -> "WalkPath":
        pos = np.asarray(positions, dtype=np.int64)
        d = pos.shape[1]
        diff = np.diff(pos, axis=0)
        units = unit_vectors(d)
        steps = np.empty(diff.shape[0], dtype=np.int8)
        for t, row in enumerate(diff):
            hit = np.flatnonzero((units == row).all(1))
            if hit.size != 1:
                raise ValueError(f"positions {t} and {t + 1} are not lattice neighbours")
            steps[t] = hit[0]
        return cls(steps, d, tuple(pos[0]))

    @property
    def N(self) -> int:
        return int(self.steps.shape[0])

    @property
    def range_multiset(self) -> Counter:
        if self._multiset is None:
            self._multiset = Counter(map(tuple, self.positions.tolist()))
        return self._multiset

    @property
    def range_size(self) -> int:
        return len(self.range_multiset)

    def range_set(self) -> LatticeSet:
        return LatticeSet(self.positions, self.d)

    @property
    def end(self) -> Point:
        return as_point(self.positions[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, WalkPath):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.steps, other.steps)

    def __repr__(self) -> str:
        return f"WalkPath(d={self.d}, N={self.N}, range={self.range_size})"


def sample_environment(params: ModelParams, window: LatticeSet) -> Environment:
    """Independent Bernoulli(1-p) obstacles on ``window``, in lexicographic order."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    u = rng.random(window.cached_size)
    closed = u < 1.0 - float(params.p)
    return Environment(window, LatticeSet(window.points[closed], window.dimension))


def killing_time(path: WalkPath, env: Environment) -> float | int:
    """First n with S_n in O, or SURVIVED."""
    inside = env.window.contains_many(path.positions)
    hit = env.obstacles.contains_many(path.positions)
    first_hit = int(np.argmax(hit)) if hit.any() else path.N + 1
    if not inside[:first_hit].all():
        bad = int(np.argmin(inside))
        raise WindowTooSmall(f"S_{bad} = {tuple(path.positions[bad])} lies outside the window")
    return first_hit if first_hit <= path.N else SURVIVED


def survival_field(env: Environment, lo, hi, n: int, region=None) -> np.ndarray:
    """P_y(tau_O > n) for every y in the box [lo, hi], by n steps of value iteration.

    ``region`` optionally restricts the sites of interest to a boolean mask over
    the box; only their l1-neighbourhoods must then lie in the window, and the
    returned values elsewhere are meaningless.
    """
    d = env.dimension
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    status = env.status_mask(lo - n, hi + n)
    # every site within l1-distance n of the sites of interest must be known
    inner = tuple(slice(n, n + int(h - l) + 1) for l, h in zip(lo, hi))
    region_full = np.zeros(status.shape, dtype=bool)
    region_full[inner] = True if region is None else np.asarray(region, dtype=bool)
    region = region_full
    if n > 0:
        cross = ndimage.generate_binary_structure(d, 1)
        region = ndimage.binary_dilation(region, structure=cross, iterations=n)
    if (status[region] == OUTSIDE).any():
        raise WindowTooSmall("the l1-neighbourhood of radius n is not inside the window")
    open_ = (status == OPEN).astype(float)
    v = open_.copy()
    for _ in range(n):
        acc = np.zeros_like(v)
        for a in range(d):
            src = [slice(None)] * d
            dst = [slice(None)] * d
            src[a], dst[a] = slice(1, None), slice(None, -1)
            acc[tuple(dst)] += v[tuple(src)]
            src[a], dst[a] = slice(None, -1), slice(1, None)
            acc[tuple(dst)] += v[tuple(src)]
        v = open_ * acc / (2 * d)
    return v[inner]


def survival_dp(env: Environment, x, n: int) -> float:
    """P_x(tau_O > n): probability that S_0, ..., S_n all avoid the obstacles."""
    x = np.asarray(as_point(x), dtype=np.int64)
    if n < 0:
        raise ValueError("n must be nonnegative")
    return float(survival_field(env, x, x, n).reshape(-1)[0])


# --------------------------------------------------------------------------
# exhaustive enumeration oracle


def _check_budget(d: int, N: int, budget: int) -> int:
    paths = (2 * d) ** N
    if paths > budget:
        raise BudgetExceeded(f"(2d)^N = {paths} paths exceed the budget of {budget}")
    return paths


def range_histogram(d: int, N: int, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Path counts indexed by [range size, squared endpoint distance]."""
    _check_budget(d, N, budget)
    return kernels.enumerate_histogram(d, N)


def _weights(params: ModelParams, exact: bool):
    d, N = params.d, params.N
    hist = range_histogram(d, N)
    counts = hist.sum(1)
    if exact:
        p = Fraction(params.p)
        scale = Fraction(1, (2 * d) ** N)
        return hist, [int(c) * scale * p**r for r, c in enumerate(counts)]
    p = float(params.p)
    scale = float(2 * d) ** (-N)
    return hist, [float(c) * scale * p**r for r, c in enumerate(counts)]


def exact_partition_function(params: ModelParams, budget: int = DEFAULT_BUDGET,
                             exact: bool = False) -> Union[float, Fraction]:
    """Z_N = sum over all paths of (2d)^{-N} p^{|range|}.

    With ``exact=True`` the sum is carried out in rational arithmetic.
    """
    _check_budget(params.d, params.N, budget)
    _, w = _weights(params, exact)
    return sum(w, Fraction(0)) if exact else math.fsum(w)


_BUILTIN = {
    "one": lambda r, r2: 1.0,
    "range": lambda r, r2: float(r),
    "return": lambda r, r2: 1.0 if r2 == 0 else 0.0,
    "endpoint_r2": lambda r, r2: float(r2),
}

Observable = Union[str, Callable[[WalkPath], float]]


def exact_mu_expectation(params: ModelParams, observable: Observable,
                         budget: int = DEFAULT_BUDGET) -> float:
    """E_mu_N[f(S)] by enumeration.

    ``observable`` is a callable on :class:`WalkPath` or one of the built-in names
    ``"one"``, ``"range"``, ``"return"`` (S_N = S_0), ``"endpoint_r2"``; the
    built-ins run on the compiled (range, endpoint) histogram.
    """
    d, N = params.d, params.N
    _check_budget(d, N, budget)
    if isinstance(observable, str):
        f = _BUILTIN[observable]
        hist = range_histogram(d, N, budget)
        p = float(params.p)
        scale = float(2 * d) ** (-N)
        num, den = [], []
        for r, r2 in zip(*np.nonzero(hist)):
            w = float(hist[r, r2]) * scale * p**int(r)
            den.append(w)
            num.append(w * f(int(r), int(r2)))
        return math.fsum(num) / math.fsum(den)
    num, den = [], []
    p = float(params.p)
    scale = float(2 * d) ** (-N)
    for steps in itertools.product(range(2 * d), repeat=N):
        path = WalkPath(np.array(steps, dtype=np.int8), d)
        w = scale * p**path.range_size
        den.append(w)
        num.append(w * float(observable(path)))
    return math.fsum(num) / math.fsum(den)


def path_codes(d: int, N: int) -> np.ndarray:
    """All step sequences, row i being the base-2d digits of i (first step most significant)."""
    base = 2 * d
    idx = np.arange(base**N, dtype=np.int64)
    digits = np.empty((idx.size, N), dtype=np.int8)
    for t in range(N - 1, -1, -1):
        digits[:, t] = idx % base
        idx //= base
    return digits


def exact_path_law(params: ModelParams, max_paths: int = 1 << 22) -> np.ndarray:
    """mu_N probability of every path, indexed by path code (see :func:`path_codes`)."""
    d, N = params.d, params.N
    _check_budget(d, N, max_paths)
    steps = path_codes(d, N)
    incr = unit_vectors(d)[steps.astype(np.int64)]
    pos = np.concatenate([np.zeros((steps.shape[0], 1, d), dtype=np.int64),
                          np.cumsum(incr, axis=1)], axis=1)
    side = 2 * N + 1
    key = np.zeros(pos.shape[:2], dtype=np.int64)
    for a in range(d):
        key = key * side + (pos[:, :, a] + N)
    key.sort(axis=1)
    rsize = 1 + (np.diff(key, axis=1) != 0).sum(1)
    w = float(params.p) ** rsize
    return w / math.fsum(w)


def annealed_partition_by_obstacles(params: ModelParams) -> float:
    """P x P(tau_O > N) by brute force over every obstacle configuration.

    Enumerates all 2^|W| configurations of the l1-ball W of radius N and averages
    the exact survival probability; independent of the range representation.
    Practical for N <= 2 in d = 2.
    """
    d, N = params.d, params.N
    window = l1_ball(tuple([0] * d), N)
    n = window.cached_size
    if n > 20:
        raise BudgetExceeded(f"2^{n} obstacle configurations")
    p = float(params.p)
    terms = []
    for bits in range(1 << n):
        closed = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        k = int(closed.sum())
        prob = (1 - p) ** k * p ** (n - k)
        env = Environment(window, LatticeSet(window.points[closed], d))
        terms.append(prob * survival_dp(env, tuple([0] * d), N))
    return math.fsum(terms)


def simulate_survival(env: Environment, x, n: int, n_walks: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of P_x(tau_O > n) and its standard error."""
    from .rng import seed_state

    x = np.asarray(as_point(x), dtype=np.int64)
    lo, hi = x - n - 1, x + n + 1
    mask = env.status_mask(lo, hi)
    surv, escaped, _ = kernels.killed_walk_survival(mask, x - lo, n, n_walks, seed_state(seed))
    if escaped:
        raise WindowTooSmall("simulated walks left the window")
    q = surv / n_walks
    return q, math.sqrt(max(q * (1 - q), 1e-300) / n_walks)

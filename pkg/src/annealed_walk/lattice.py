"""Finite subsets of Z^d: balls, external boundaries, components, 1-centers.

Points are tuples of ints. A :class:`LatticeSet` stores its members as a
lexicographically sorted, duplicate-free ``(n, d)`` int64 array and builds a hash
index and dense masks on demand.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import ndimage

Point = tuple[int, ...]

# bounding-box volume above which sets are handled sparsely
_DENSE_LIMIT = 8_000_000


def as_point(p: Iterable[int]) -> Point:
    return tuple(int(c) for c in p)


def unit_vectors(d: int) -> np.ndarray:
    """The 2d unit steps, in kernel order (+e0, -e0, +e1, -e1, ...)."""
    out = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(2 * d):
        out[k, k >> 1] = 1 if k % 2 == 0 else -1
    return out


class LatticeSet:
    """Immutable finite subset of Z^d with O(1) membership."""

    __slots__ = ("dimension", "_points", "_index", "_fp")

    def __init__(self, points, dimension: int | None = None):
        arr = np.asarray(points, dtype=np.int64)
        if arr.size == 0:
            if dimension is None:
                raise ValueError("dimension is required for an empty set")
            arr = np.zeros((0, dimension), dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        if dimension is not None and arr.shape[1] != dimension:
            raise ValueError(f"points have dimension {arr.shape[1]}, expected {dimension}")
        if arr.shape[0] > 1:
            arr = np.unique(arr, axis=0)
        arr.setflags(write=False)
        self.dimension = int(arr.shape[1])
        self._points = arr
        self._index: frozenset | None = None
        self._fp: str | None = None

    @classmethod
    def empty(cls, dimension: int) -> "LatticeSet":
        return cls(np.zeros((0, dimension), dtype=np.int64), dimension)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def cached_size(self) -> int:
        return int(self._points.shape[0])

    def __len__(self) -> int:
        return self.cached_size

    def __bool__(self) -> bool:
        return self.cached_size > 0

    def _members(self) -> frozenset:
        if self._index is None:
            self._index = frozenset(map(tuple, self._points.tolist()))
        return self._index

    def __contains__(self, point) -> bool:
        return as_point(point) in self._members()

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised membership for an (m, d) array."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.dimension)
        if self.cached_size == 0 or pts.shape[0] == 0:
            return np.zeros(pts.shape[0], dtype=bool)
        lo = np.minimum(self._points.min(0), pts.min(0))
        hi = np.maximum(self._points.max(0), pts.max(0))
        if np.prod(hi - lo + 1, dtype=float) < 2**62:
            shape = hi - lo + 1
            return np.isin(_encode(pts, lo, shape), _encode(self._points, lo, shape))
        members = self._members()
        return np.array([tuple(p) in members for p in pts.tolist()], dtype=bool)

    def __iter__(self) -> Iterator[Point]:
        return iter(map(tuple, self._points.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticeSet):
            return NotImplemented
        return (self.dimension == other.dimension
                and np.array_equal(self._points, other._points))

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __repr__(self) -> str:
        return f"LatticeSet(d={self.dimension}, n={self.cached_size})"

    def fingerprint(self) -> str:
        if self._fp is None:
            h = hashlib.sha1(f"d={self.dimension};".encode())
            h.update(self._points.tobytes())
            self._fp = h.hexdigest()[:16]
        return self._fp

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.cached_size == 0:
            raise ValueError("empty set has no bounding box")
        return self._points.min(0), self._points.max(0)

    def to_mask(self, lo=None, hi=None, pad: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Dense boolean mask over [lo - pad, hi + pad]; returns (mask, origin)."""
        if lo is None or hi is None:
            blo, bhi = self.bounding_box()
            lo = blo if lo is None else lo
            hi = bhi if hi is None else hi
        lo = np.asarray(lo, dtype=np.int64) - pad
        hi = np.asarray(hi, dtype=np.int64) + pad
        mask = np.zeros(tuple(hi - lo + 1), dtype=bool)
        if self.cached_size:
            rel = self._points - lo
            keep = np.all((rel >= 0) & (rel <= hi - lo), axis=1)
            mask[tuple(rel[keep].T)] = True
        return mask, lo

    @classmethod
    def from_mask(cls, mask: np.ndarray, origin) -> "LatticeSet":
        idx = np.argwhere(mask).astype(np.int64)
        return cls(idx + np.asarray(origin, dtype=np.int64), mask.ndim)

    # set algebra ---------------------------------------------------------
    def union(self, other: "LatticeSet") -> "LatticeSet":
        _check_dim(self, other)
        return LatticeSet(np.vstack([self._points, other._points]), self.dimension)

    def difference(self, other: "LatticeSet") -> "LatticeSet":
        _check_dim(self, other)
        return LatticeSet(self._points[~other.contains_many(self._points)], self.dimension)

    def intersection(self, other: "LatticeSet") -> "LatticeSet":
        _check_dim(self, other)
        return LatticeSet(self._points[other.contains_many(self._points)], self.dimension)

    def translate(self, shift) -> "LatticeSet":
        return LatticeSet(self._points + np.asarray(shift, dtype=np.int64), self.dimension)

    # text format -------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"d={self.dimension} n={self.cached_size}"]
        lines.extend(" ".join(map(str, row)) for row in self._points.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LatticeSet":
        rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows:
            raise ValueError("missing header")
        header = dict(tok.split("=", 1) for tok in rows[0].split())
        d, n = int(header["d"]), int(header["n"])
        body = rows[1:]
        if len(body) != n:
            raise ValueError(f"header announces {n} points, found {len(body)}")
        pts = np.array([[int(v) for v in ln.split()] for ln in body], dtype=np.int64)
        if n and pts.shape[1] != d:
            raise ValueError("point dimension disagrees with header")
        return cls(pts.reshape(n, d), d)


def _check_dim(a: LatticeSet, b: LatticeSet) -> None:
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")


def _encode(pts: np.ndarray, lo: np.ndarray, shape: np.ndarray) -> np.ndarray:
    rel = pts - lo
    key = np.zeros(pts.shape[0], dtype=np.int64)
    for a in range(pts.shape[1]):
        key = key * int(shape[a]) + rel[:, a]
    return key


@dataclass(frozen=True)
class BallSpec:
    """Euclidean ball {y : ||y - center|| <= radius} in lattice units."""

    center: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if self.radius < 0 or not math.isfinite(self.radius):
            raise ValueError("radius must be a finite nonnegative number")
        if len(self.center) < 2:
            raise ValueError("dimension must be at least 2")

    @property
    def dimension(self) -> int:
        return len(self.center)


def _ball_array(center: Sequence[int], radius: float) -> np.ndarray:
    d = len(center)
    r = int(math.floor(radius))
    axes = [np.arange(-r, r + 1, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = (grid * grid).sum(1) <= radius * radius
    return grid[keep] + np.asarray(center, dtype=np.int64)


def ball_points(spec: BallSpec, dimension: int | None = None) -> LatticeSet:
    """Lattice points of the closed Euclidean ball ``spec``."""
    if dimension is not None and dimension != spec.dimension:
        raise ValueError(f"ball center has dimension {spec.dimension}, context is {dimension}")
    return LatticeSet(_ball_array(spec.center, spec.radius), spec.dimension)


def ball(center, radius: float) -> LatticeSet:
    return ball_points(BallSpec(as_point(center), float(radius)))


def closed_ball(center, radius: float) -> LatticeSet:
    """B(x, r) together with its external boundary."""
    b = ball(center, radius)
    return b.union(external_boundary(b))


def box_points(lo, hi) -> LatticeSet:
    """All lattice points of the box [lo, hi] (inclusive)."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return LatticeSet(grid, len(lo))


def l1_ball(center, radius: int) -> LatticeSet:
    c = np.asarray(as_point(center), dtype=np.int64)
    b = box_points(c - radius, c + radius)
    keep = np.abs(b.points - c).sum(1) <= radius
    return LatticeSet(b.points[keep], len(c))


def neighbors_array(points: np.ndarray) -> np.ndarray:
    """All 2d nearest neighbours of each row, shape (n * 2d, d)."""
    d = points.shape[1]
    return (points[:, None, :] + unit_vectors(d)[None, :, :]).reshape(-1, d)


def external_boundary(A: LatticeSet) -> LatticeSet:
    """{y not in A : ||y - x|| = 1 for some x in A}."""
    if A.cached_size == 0:
        return LatticeSet.empty(A.dimension)
    nb = LatticeSet(neighbors_array(A.points), A.dimension)
    return nb.difference(A)


def connected_component(A: LatticeSet, seed) -> LatticeSet:
    """Nearest-neighbour component of ``A`` containing ``seed`` (empty if seed not in A)."""
    seed = as_point(seed)
    if len(seed) != A.dimension:
        raise ValueError("seed dimension does not match the set")
    if seed not in A:
        return LatticeSet.empty(A.dimension)
    lo, hi = A.bounding_box()
    if np.prod(hi - lo + 1, dtype=float) <= _DENSE_LIMIT:
        mask, origin = A.to_mask()
        labels, _ = ndimage.label(mask, structure=ndimage.generate_binary_structure(A.dimension, 1))
        lab = labels[tuple(np.asarray(seed) - origin)]
        return LatticeSet.from_mask(labels == lab, origin)
    members = A._members()
    units = [tuple(u) for u in unit_vectors(A.dimension).tolist()]
    seen = {seed}
    queue = deque([seed])
    while queue:
        x = queue.popleft()
        for e in units:
            y = tuple(a + b for a, b in zip(x, e))
            if y in members and y not in seen:
                seen.add(y)
                queue.append(y)
    return LatticeSet(np.array(sorted(seen), dtype=np.int64), A.dimension)


def _hull_reduce(pts: np.ndarray) -> np.ndarray:
    """Points that can attain a maximum distance: the convex hull vertices."""
    if pts.shape[0] <= 2 * pts.shape[1] + 2:
        return pts
    try:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(pts.astype(float))
        return pts[np.unique(hull.vertices)]
    except Exception:  # degenerate (flat) sets: keep everything
        return pts


def _max_sq_dist(cands: np.ndarray, pts: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(cands.shape[0], dtype=np.int64)
    for s in range(0, cands.shape[0], chunk):
        c = cands[s:s + chunk]
        diff = c[:, None, :] - pts[None, :, :]
        out[s:s + chunk] = (diff * diff).sum(-1).max(1)
    return out


def empirical_center(A: LatticeSet) -> tuple[Point, float]:
    """Lattice 1-center of ``A`` and its covering radius.

    Minimises max_{a in A} ||c - a|| over c in Z^d; ties go to the
    lexicographically smallest c. Exact: the search runs over the hull vertices
    and a candidate box pruned by the value at the rounded box center.
    """
    if A.cached_size == 0:
        raise ValueError("empirical_center of an empty set")
    pts = _hull_reduce(A.points)
    lo, hi = A.bounding_box()
    guess = np.floor((lo + hi) / 2.0).astype(np.int64)
    bound = float(_max_sq_dist(guess[None, :], pts)[0])
    reach = int(math.floor(math.sqrt(bound) + 1e-9))
    # any c with f(c) <= f(guess) lies within `reach` of every point of A
    clo = np.maximum(lo, hi - reach)
    chi = np.minimum(hi, lo + reach)
    cands = box_points(clo, chi).points  # lexicographic order
    vals = _max_sq_dist(cands, pts)
    best = int(np.argmin(vals))  # first minimum = lexicographically smallest
    return as_point(cands[best]), math.sqrt(float(vals[best]))

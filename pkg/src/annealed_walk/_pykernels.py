"""Pure-Python fallback for the hot kernels.

Semantics (RNG draw order included) are identical to ``_ckernels.pyx``; the test
suite runs both on the same seeds and compares results bit for bit.

Step encoding: direction ``k`` in ``range(2 * d)`` moves along axis ``k // 2``,
positively for even ``k`` and negatively for odd ``k``.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import Xoshiro256

SEG, END, WIGGLE, SHUFFLE, PAIR = 0, 1, 2, 3, 4
N_KINDS = 5

OPEN, OBSTACLE, OUTSIDE = 0, 1, 2


def _unit(k: int, d: int) -> tuple[int, ...]:
    e = [0] * d
    e[k >> 1] = 1 if (k & 1) == 0 else -1
    return tuple(e)


class ChainKernel:
    """Walk of N steps with an incrementally maintained range multiset."""

    def __init__(self, steps, d: int, logp: float, rng_state):
        steps = np.asarray(steps, dtype=np.int8)
        self.d = int(d)
        self.N = int(steps.shape[0])
        self.logp = float(logp)
        self.rng = Xoshiro256(rng_state)
        self._units = [_unit(k, self.d) for k in range(2 * self.d)]
        self._steps = [int(s) for s in steps]
        if any(s < 0 or s >= 2 * self.d for s in self._steps):
            raise ValueError("step codes must lie in range(2*d)")
        pos = [tuple([0] * self.d)]
        for s in self._steps:
            e = self._units[s]
            pos.append(tuple(a + b for a, b in zip(pos[-1], e)))
        self._pos = pos
        self._counts: dict[tuple[int, ...], int] = {}
        for p in pos:
            self._counts[p] = self._counts.get(p, 0) + 1
        self.range_size = len(self._counts)
        self._pending = None
        self._code = self._path_code() if self.N <= 30 else -1

    # -- inspection -------------------------------------------------------
    def steps(self) -> np.ndarray:
        return np.array(self._steps, dtype=np.int8)

    def positions(self) -> np.ndarray:
        return np.array(self._pos, dtype=np.int64).reshape(self.N + 1, self.d)

    def rng_state(self) -> tuple[int, int, int, int]:
        return self.rng.get_state()

    def set_rng_state(self, state) -> None:
        self.rng = Xoshiro256(state)

    def count_at(self, point) -> int:
        return self._counts.get(tuple(int(c) for c in point), 0)

    def _path_code(self) -> int:
        code = 0
        base = 2 * self.d
        for s in self._steps:
            code = code * base + s
        return code

    # -- proposals --------------------------------------------------------
    def propose(self, kind: int, t0: int, t1: int, new_steps=None) -> int:
        """Stage a proposal and return its range delta; follow with commit/revert.

        ``new_steps`` overrides the random redraw (segment, endpoint and wiggle
        moves) or is taken as the already-permuted segment (shuffle).
        """
        if self._pending is not None:
            raise RuntimeError("a proposal is already pending")
        N, d = self.N, self.d
        if not (0 <= t0 < t1 <= N):
            raise ValueError(f"invalid move window t0={t0}, t1={t1} for N={N}")
        if kind == END:
            t1 = N
        length = t1 - t0
        if new_steps is not None:
            seg = [int(s) for s in new_steps]
            if len(seg) != length:
                raise ValueError("replacement segment has the wrong length")
        elif kind == PAIR:
            seg = self._steps[t0:t1]
            if length == 2:
                if seg[0] ^ 1 == seg[1]:
                    e = self.rng.randbelow(2 * d)
                    seg = [e, e ^ 1]
                else:
                    seg = [seg[1], seg[0]]
        elif kind == SHUFFLE:
            seg = self._steps[t0:t1]
            for i in range(length - 1, 0, -1):
                j = self.rng.randbelow(i + 1)
                seg[i], seg[j] = seg[j], seg[i]
        else:
            nd = 2 * d
            seg = [self.rng.randbelow(nd) for _ in range(length)]

        pos = self._pos
        units = self._units
        # displacement of the segment, old vs new
        p = list(pos[t0])
        for s in seg:
            e = units[s]
            for a in range(d):
                p[a] += e[a]
        shift = tuple(p[a] - pos[t1][a] for a in range(d))
        if any(shift):
            last = N
        else:
            last = t1 - 1

        counts = self._counts
        removed = 0
        for t in range(t0 + 1, last + 1):
            q = pos[t]
            c = counts[q] - 1
            if c == 0:
                del counts[q]
                removed += 1
            else:
                counts[q] = c
        new_pos = []
        added = 0
        cur = pos[t0]
        for t in range(t0 + 1, last + 1):
            if t <= t1:
                e = units[seg[t - t0 - 1]]
                cur = tuple(cur[a] + e[a] for a in range(d))
            else:
                cur = tuple(pos[t][a] + shift[a] for a in range(d))
            new_pos.append(cur)
            c = counts.get(cur, 0)
            if c == 0:
                added += 1
            counts[cur] = c + 1
        delta = added - removed
        self.range_size += delta
        self._pending = (t0, t1, last, seg, new_pos, delta)
        return delta

    def pending_steps(self) -> np.ndarray:
        if self._pending is None:
            raise RuntimeError("no pending proposal")
        t0, t1, _, seg, _, _ = self._pending
        out = list(self._steps)
        out[t0:t1] = seg
        return np.array(out, dtype=np.int8)

    def commit(self) -> None:
        t0, t1, last, seg, new_pos, _ = self._pending
        self._steps[t0:t1] = seg
        self._pos[t0 + 1:last + 1] = new_pos
        self._pending = None
        if self._code >= 0:
            self._code = self._path_code()

    def revert(self) -> None:
        t0, t1, last, seg, new_pos, delta = self._pending
        counts = self._counts
        for q in new_pos:
            c = counts[q] - 1
            if c == 0:
                del counts[q]
            else:
                counts[q] = c
        for t in range(t0 + 1, last + 1):
            q = self._pos[t]
            counts[q] = counts.get(q, 0) + 1
        self.range_size -= delta
        self._pending = None

    def accept_draw(self, delta: int) -> bool:
        """Metropolis decision for weight p**range; always consumes one uniform."""
        u = self.rng.random()
        return delta <= 0 or u < math.exp(delta * self.logp)

    def draw_move(self, cum, seg_mean, seg_cap, end_cap, shuf_mean, shuf_cap):
        """Draw (kind, t0, t1) from the move mixture; independent of the state."""
        N = self.N
        rng = self.rng
        r = rng.random()
        kind = 0
        while kind < N_KINDS - 1 and r >= cum[kind]:
            kind += 1
        if kind == SEG:
            length = rng.geometric(seg_mean, min(seg_cap, N))
            t0 = rng.randbelow(N - length + 1)
            return kind, t0, t0 + length
        if kind == END:
            length = 1 + rng.randbelow(min(end_cap, N))
            return kind, N - length, N
        if kind == WIGGLE:
            t0 = rng.randbelow(N)
            return kind, t0, t0 + 1
        if kind == PAIR:
            if N < 2:
                return kind, 0, N
            t0 = rng.randbelow(N - 1)
            return kind, t0, t0 + 2
        length = rng.geometric(shuf_mean, min(shuf_cap, N))
        if length < 2:
            length = min(2, N)
        t0 = rng.randbelow(N - length + 1)
        return kind, t0, t0 + length

    def run(self, n_proposals, cum, seg_mean, seg_cap, end_cap, shuf_mean,
            shuf_cap, proposed, accepted, hist=None) -> None:
        """Run ``n_proposals`` Metropolis proposals, updating counter arrays in place."""
        if self.N == 0:
            return
        for _ in range(int(n_proposals)):
            kind, t0, t1 = self.draw_move(cum, seg_mean, seg_cap, end_cap,
                                          shuf_mean, shuf_cap)
            delta = self.propose(kind, t0, t1)
            proposed[kind] += 1
            if self.accept_draw(delta):
                self.commit()
                accepted[kind] += 1
            else:
                self.revert()
            if hist is not None:
                hist[self._code] += 1


def enumerate_histogram(d: int, N: int) -> np.ndarray:
    """Counts of all (2d)^N walks by (range size, squared endpoint distance).

    Depth-first traversal with an undo stack on the visit multiset.
    """
    hist = np.zeros((N + 2, N * N + 1), dtype=np.int64)
    units = [_unit(k, d) for k in range(2 * d)]
    origin = tuple([0] * d)
    counts = {origin: 1}
    pos = [origin]
    rng_size = [1]

    def dfs(depth: int) -> None:
        cur = pos[-1]
        if depth == N:
            r2 = sum(c * c for c in cur)
            hist[rng_size[0], r2] += 1
            return
        for e in units:
            nxt = tuple(cur[a] + e[a] for a in range(d))
            c = counts.get(nxt, 0)
            counts[nxt] = c + 1
            if c == 0:
                rng_size[0] += 1
            pos.append(nxt)
            dfs(depth + 1)
            pos.pop()
            if c == 0:
                del counts[nxt]
                rng_size[0] -= 1
            else:
                counts[nxt] = c

    dfs(0)
    return hist


def killed_walk_visits(mask, target, start, n_walks: int, rng_state):
    """Visits to ``target`` up to and including the killing time, per walk.

    ``mask`` is a dense uint8 array (OPEN / OBSTACLE / OUTSIDE); the walk stops
    when it sits on an obstacle, and is counted as escaped when it steps onto an
    OUTSIDE cell. Returns (sum, sum of squares, escaped, rng_state).
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    target = np.ascontiguousarray(target, dtype=np.uint8)
    d = mask.ndim
    flat_m = mask.ravel().tolist()
    flat_t = target.ravel().tolist()
    strides = [s // mask.itemsize for s in mask.strides]
    moves = []
    for k in range(2 * d):
        moves.append(strides[k >> 1] if (k & 1) == 0 else -strides[k >> 1])
    i0 = sum(int(c) * s for c, s in zip(start, strides))
    rng = Xoshiro256(rng_state)
    nd = 2 * d
    total = 0
    total2 = 0
    escaped = 0
    for _ in range(int(n_walks)):
        i = i0
        v = 0
        while True:
            m = flat_m[i]
            if m == OUTSIDE:
                escaped += 1
                break
            if flat_t[i]:
                v += 1
            if m == OBSTACLE:
                break
            i += moves[rng.randbelow(nd)]
        total += v
        total2 += v * v
    return float(total), float(total2), escaped, rng.get_state()


def killed_walk_survival(mask, start, n_steps: int, n_walks: int, rng_state):
    """Number of walks with S_0..S_n all OPEN. Returns (survivors, escaped, rng_state)."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    d = mask.ndim
    flat_m = mask.ravel().tolist()
    strides = [s // mask.itemsize for s in mask.strides]
    moves = []
    for k in range(2 * d):
        moves.append(strides[k >> 1] if (k & 1) == 0 else -strides[k >> 1])
    i0 = sum(int(c) * s for c, s in zip(start, strides))
    rng = Xoshiro256(rng_state)
    nd = 2 * d
    survivors = 0
    escaped = 0
    for _ in range(int(n_walks)):
        i = i0
        alive = flat_m[i] == OPEN
        for _t in range(int(n_steps)):
            if not alive:
                break
            i += moves[rng.randbelow(nd)]
            m = flat_m[i]
            if m == OUTSIDE:
                escaped += 1
                alive = False
            elif m == OBSTACLE:
                alive = False
        if alive:
            survivors += 1
    return survivors, escaped, rng.get_state()

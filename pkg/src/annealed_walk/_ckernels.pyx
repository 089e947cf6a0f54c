# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Metropolis chain on the range weight, exhaustive walk
enumeration, and killed-walk Monte Carlo.

Must stay draw-for-draw identical to ``_pykernels.py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p
from libc.stdint cimport uint64_t, int64_t, int32_t, int8_t, uint8_t
from libc.stdlib cimport malloc, free, calloc
from libc.string cimport memcpy

cnp.import_array()

DEF MAXD = 8

SEG = 0
END = 1
WIGGLE = 2
SHUFFLE = 3
PAIR = 4
N_KINDS = 5

cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef struct Xoshiro:
    uint64_t s[4]


cdef inline uint64_t xo_next(Xoshiro* r) nogil:
    cdef uint64_t result = rotl(r.s[1] * 5, 7) * 9
    cdef uint64_t t = r.s[1] << 17
    r.s[2] ^= r.s[0]
    r.s[3] ^= r.s[1]
    r.s[1] ^= r.s[2]
    r.s[0] ^= r.s[3]
    r.s[2] ^= t
    r.s[3] = rotl(r.s[3], 45)
    return result


cdef inline double xo_random(Xoshiro* r) nogil:
    return <double>(xo_next(r) >> 11) * INV53


cdef inline int64_t xo_randbelow(Xoshiro* r, int64_t n) nogil:
    return <int64_t>(xo_random(r) * <double>n)


cdef inline int64_t xo_geometric(Xoshiro* r, double mean, int64_t cap) nogil:
    cdef double u
    cdef int64_t length
    if mean <= 1.0:
        return 1
    u = xo_random(r)
    length = 1 + <int64_t>(log1p(-u) / log1p(-1.0 / mean))
    return length if length < cap else cap


cdef void set_state(Xoshiro* r, state):
    cdef int i
    for i in range(4):
        r.s[i] = <uint64_t>(int(state[i]) & 0xFFFFFFFFFFFFFFFF)


cdef tuple get_state(Xoshiro* r):
    return (int(r.s[0]), int(r.s[1]), int(r.s[2]), int(r.s[3]))


cdef class ChainKernel:
    """Walk of N steps with the visit multiset kept on a growable dense grid."""

    cdef public int d
    cdef public int64_t N
    cdef public double logp
    cdef public int64_t range_size
    cdef Xoshiro rng
    cdef int8_t* steps_
    cdef int64_t* pos
    cdef int32_t* grid
    cdef int64_t lo[MAXD]
    cdef int64_t shape[MAXD]
    cdef int64_t stride[MAXD]
    cdef int64_t grid_size
    # pending proposal
    cdef int has_pending
    cdef int64_t p_t0, p_t1, p_last, p_delta
    cdef int8_t* seg
    cdef int64_t* newpos
    cdef int64_t code
    cdef int track_code

    def __cinit__(self):
        self.steps_ = NULL
        self.pos = NULL
        self.grid = NULL
        self.seg = NULL
        self.newpos = NULL

    def __init__(self, steps, int d, double logp, rng_state):
        cdef cnp.ndarray[cnp.int8_t, ndim=1] st = np.ascontiguousarray(steps, dtype=np.int8)
        cdef int64_t N = st.shape[0]
        cdef int64_t t, a
        cdef int k
        if d < 1 or d > MAXD:
            raise ValueError("dimension out of supported range")
        self.d = d
        self.N = N
        self.logp = logp
        set_state(&self.rng, rng_state)
        self.steps_ = <int8_t*>malloc(max(N, 1) * sizeof(int8_t))
        self.seg = <int8_t*>malloc(max(N, 1) * sizeof(int8_t))
        self.pos = <int64_t*>malloc((N + 1) * d * sizeof(int64_t))
        self.newpos = <int64_t*>malloc((N + 1) * d * sizeof(int64_t))
        if self.steps_ == NULL or self.pos == NULL or self.seg == NULL or self.newpos == NULL:
            raise MemoryError()
        for t in range(N):
            k = st[t]
            if k < 0 or k >= 2 * d:
                raise ValueError("step codes must lie in range(2*d)")
            self.steps_[t] = <int8_t>k
        for a in range(d):
            self.pos[a] = 0
        for t in range(N):
            for a in range(d):
                self.pos[(t + 1) * d + a] = self.pos[t * d + a]
            k = self.steps_[t]
            if (k & 1) == 0:
                self.pos[(t + 1) * d + (k >> 1)] += 1
            else:
                self.pos[(t + 1) * d + (k >> 1)] -= 1
        self._build_grid(8)
        self.range_size = 0
        for t in range(N + 1):
            if self.grid[self._index(&self.pos[t * d])] == 0:
                self.range_size += 1
            self.grid[self._index(&self.pos[t * d])] += 1
        self.has_pending = 0
        self.track_code = 1 if N <= 30 else 0
        self.code = self._path_code() if self.track_code else -1

    def __dealloc__(self):
        free(self.steps_)
        free(self.pos)
        free(self.grid)
        free(self.seg)
        free(self.newpos)

    # -- grid ---------------------------------------------------------------
    cdef void _layout(self, int64_t* lo, int64_t* hi):
        cdef int a
        cdef int64_t s = 1
        for a in range(self.d - 1, -1, -1):
            self.lo[a] = lo[a]
            self.shape[a] = hi[a] - lo[a] + 1
            self.stride[a] = s
            s *= self.shape[a]
        self.grid_size = s

    cdef int _build_grid(self, int64_t margin) except -1:
        cdef int64_t lo[MAXD]
        cdef int64_t hi[MAXD]
        cdef int64_t t
        cdef int a
        for a in range(self.d):
            lo[a] = self.pos[a]
            hi[a] = self.pos[a]
        for t in range(self.N + 1):
            for a in range(self.d):
                if self.pos[t * self.d + a] < lo[a]:
                    lo[a] = self.pos[t * self.d + a]
                if self.pos[t * self.d + a] > hi[a]:
                    hi[a] = self.pos[t * self.d + a]
        for a in range(self.d):
            lo[a] -= margin
            hi[a] += margin
        self._layout(lo, hi)
        self.grid = <int32_t*>calloc(self.grid_size, sizeof(int32_t))
        if self.grid == NULL:
            raise MemoryError()
        return 0

    cdef inline int64_t _index(self, int64_t* p) nogil:
        cdef int64_t idx = 0
        cdef int a
        for a in range(self.d):
            idx += (p[a] - self.lo[a]) * self.stride[a]
        return idx

    cdef inline int _inside(self, int64_t* p) nogil:
        cdef int a
        cdef int64_t c
        for a in range(self.d):
            c = p[a] - self.lo[a]
            if c < 0 or c >= self.shape[a]:
                return 0
        return 1

    cdef int _grow(self, int64_t* p) except -1:
        """Reallocate the grid so it contains ``p`` with slack on every side."""
        cdef int64_t olo[MAXD]
        cdef int64_t oshape[MAXD]
        cdef int64_t ostride[MAXD]
        cdef int64_t nlo[MAXD]
        cdef int64_t nhi[MAXD]
        cdef int64_t idx[MAXD]
        cdef int64_t pad, oi, ni, rem, osize
        cdef int a
        cdef int32_t* old = self.grid
        cdef int32_t* fresh
        osize = self.grid_size
        for a in range(self.d):
            olo[a] = self.lo[a]
            oshape[a] = self.shape[a]
            ostride[a] = self.stride[a]
            pad = oshape[a] // 2 + 8
            nlo[a] = olo[a]
            nhi[a] = olo[a] + oshape[a] - 1
            if p[a] < nlo[a]:
                nlo[a] = p[a] - pad
            if p[a] > nhi[a]:
                nhi[a] = p[a] + pad
        self._layout(nlo, nhi)
        fresh = <int32_t*>calloc(self.grid_size, sizeof(int32_t))
        if fresh == NULL:
            raise MemoryError()
        for oi in range(osize):
            if old[oi] != 0:
                rem = oi
                ni = 0
                for a in range(self.d):
                    idx[a] = rem // ostride[a]
                    rem = rem - idx[a] * ostride[a]
                    ni += (idx[a] + olo[a] - nlo[a]) * self.stride[a]
                fresh[ni] = old[oi]
        free(old)
        self.grid = fresh
        return 0

    # -- inspection -----------------------------------------------------------
    def steps(self):
        out = np.empty(self.N, dtype=np.int8)
        cdef int8_t[:] v = out
        cdef int64_t t
        for t in range(self.N):
            v[t] = self.steps_[t]
        return out

    def positions(self):
        out = np.empty((self.N + 1, self.d), dtype=np.int64)
        cdef int64_t[:, :] v = out
        cdef int64_t t
        cdef int a
        for t in range(self.N + 1):
            for a in range(self.d):
                v[t, a] = self.pos[t * self.d + a]
        return out

    def rng_state(self):
        return get_state(&self.rng)

    def set_rng_state(self, state):
        set_state(&self.rng, state)

    def count_at(self, point):
        cdef int64_t p[MAXD]
        cdef int a
        for a in range(self.d):
            p[a] = int(point[a])
        if not self._inside(p):
            return 0
        return int(self.grid[self._index(p)])

    cdef int64_t _path_code(self):
        cdef int64_t c = 0
        cdef int64_t t
        for t in range(self.N):
            c = c * (2 * self.d) + self.steps_[t]
        return c

    # -- proposals ------------------------------------------------------------
    cdef int _draw_segment(self, int kind, int64_t t0, int64_t t1) except -1:
        cdef int64_t length = t1 - t0
        cdef int64_t i, j
        cdef int8_t tmp
        if kind == PAIR:
            for i in range(length):
                self.seg[i] = self.steps_[t0 + i]
            if length == 2:
                if (self.seg[0] ^ 1) == self.seg[1]:
                    self.seg[0] = <int8_t>xo_randbelow(&self.rng, 2 * self.d)
                    self.seg[1] = self.seg[0] ^ 1
                else:
                    tmp = self.seg[0]
                    self.seg[0] = self.seg[1]
                    self.seg[1] = tmp
        elif kind == SHUFFLE:
            for i in range(length):
                self.seg[i] = self.steps_[t0 + i]
            for i in range(length - 1, 0, -1):
                j = xo_randbelow(&self.rng, i + 1)
                tmp = self.seg[i]
                self.seg[i] = self.seg[j]
                self.seg[j] = tmp
        else:
            for i in range(length):
                self.seg[i] = <int8_t>xo_randbelow(&self.rng, 2 * self.d)
        return 0

    cdef int64_t _stage(self, int64_t t0, int64_t t1) except? -999999999:
        """Apply the staged segment ``seg`` to the multiset; return the range delta."""
        cdef int d = self.d
        cdef int64_t N = self.N
        cdef int64_t shift[MAXD]
        cdef int64_t cur[MAXD]
        cdef int64_t t, last, removed = 0, added = 0, gi
        cdef int a, k, nonzero = 0
        cdef int64_t length = t1 - t0
        for a in range(d):
            cur[a] = self.pos[t0 * d + a]
        for t in range(length):
            k = self.seg[t]
            if (k & 1) == 0:
                cur[k >> 1] += 1
            else:
                cur[k >> 1] -= 1
        for a in range(d):
            shift[a] = cur[a] - self.pos[t1 * d + a]
            if shift[a] != 0:
                nonzero = 1
        last = N if nonzero else t1 - 1
        for t in range(t0 + 1, last + 1):
            gi = self._index(&self.pos[t * d])
            self.grid[gi] -= 1
            if self.grid[gi] == 0:
                removed += 1
        for a in range(d):
            cur[a] = self.pos[t0 * d + a]
        for t in range(t0 + 1, last + 1):
            if t <= t1:
                k = self.seg[t - t0 - 1]
                if (k & 1) == 0:
                    cur[k >> 1] += 1
                else:
                    cur[k >> 1] -= 1
            else:
                for a in range(d):
                    cur[a] = self.pos[t * d + a] + shift[a]
            for a in range(d):
                self.newpos[t * d + a] = cur[a]
            if not self._inside(cur):
                self._grow(cur)
            gi = self._index(cur)
            if self.grid[gi] == 0:
                added += 1
            self.grid[gi] += 1
        self.p_t0 = t0
        self.p_t1 = t1
        self.p_last = last
        self.p_delta = added - removed
        self.range_size += self.p_delta
        self.has_pending = 1
        return self.p_delta

    cdef void _commit(self):
        cdef int64_t t
        cdef int a
        cdef int d = self.d
        for t in range(self.p_t0, self.p_t1):
            self.steps_[t] = self.seg[t - self.p_t0]
        for t in range(self.p_t0 + 1, self.p_last + 1):
            for a in range(d):
                self.pos[t * d + a] = self.newpos[t * d + a]
        self.has_pending = 0
        if self.track_code:
            self.code = self._path_code()

    cdef void _revert(self):
        cdef int64_t t
        cdef int d = self.d
        for t in range(self.p_t0 + 1, self.p_last + 1):
            self.grid[self._index(&self.newpos[t * d])] -= 1
        for t in range(self.p_t0 + 1, self.p_last + 1):
            self.grid[self._index(&self.pos[t * d])] += 1
        self.range_size -= self.p_delta
        self.has_pending = 0

    def propose(self, int kind, int64_t t0, int64_t t1, new_steps=None):
        """Stage a proposal and return its range delta; follow with commit/revert."""
        cdef int64_t i
        if self.has_pending:
            raise RuntimeError("a proposal is already pending")
        if not (0 <= t0 < t1 <= self.N):
            raise ValueError(f"invalid move window t0={t0}, t1={t1} for N={self.N}")
        if kind == END:
            t1 = self.N
        if new_steps is not None:
            if len(new_steps) != t1 - t0:
                raise ValueError("replacement segment has the wrong length")
            for i in range(t1 - t0):
                self.seg[i] = <int8_t>int(new_steps[i])
        else:
            self._draw_segment(kind, t0, t1)
        return self._stage(t0, t1)

    def pending_steps(self):
        if not self.has_pending:
            raise RuntimeError("no pending proposal")
        out = self.steps()
        cdef int64_t t
        for t in range(self.p_t0, self.p_t1):
            out[t] = self.seg[t - self.p_t0]
        return out

    def commit(self):
        self._commit()

    def revert(self):
        self._revert()

    cdef inline int _accept(self, int64_t delta):
        cdef double u = xo_random(&self.rng)
        return delta <= 0 or u < exp(delta * self.logp)

    def accept_draw(self, int64_t delta):
        return bool(self._accept(delta))

    cdef int _draw_move(self, double* cum, double seg_mean, int64_t seg_cap,
                        int64_t end_cap, double shuf_mean, int64_t shuf_cap,
                        int64_t* t0, int64_t* t1):
        cdef int64_t N = self.N
        cdef double r = xo_random(&self.rng)
        cdef int kind = 0
        cdef int64_t length
        while kind < N_KINDS - 1 and r >= cum[kind]:
            kind += 1
        if kind == SEG:
            length = xo_geometric(&self.rng, seg_mean, seg_cap if seg_cap < N else N)
            t0[0] = xo_randbelow(&self.rng, N - length + 1)
            t1[0] = t0[0] + length
        elif kind == END:
            length = 1 + xo_randbelow(&self.rng, end_cap if end_cap < N else N)
            t0[0] = N - length
            t1[0] = N
        elif kind == WIGGLE:
            t0[0] = xo_randbelow(&self.rng, N)
            t1[0] = t0[0] + 1
        elif kind == PAIR:
            if N >= 2:
                t0[0] = xo_randbelow(&self.rng, N - 1)
                t1[0] = t0[0] + 2
            else:
                t0[0] = 0
                t1[0] = N
        else:
            length = xo_geometric(&self.rng, shuf_mean, shuf_cap if shuf_cap < N else N)
            if length < 2:
                length = 2 if N >= 2 else N
            t0[0] = xo_randbelow(&self.rng, N - length + 1)
            t1[0] = t0[0] + length
        return kind

    def draw_move(self, cum, double seg_mean, int64_t seg_cap, int64_t end_cap,
                  double shuf_mean, int64_t shuf_cap):
        cdef double c[5]
        cdef int64_t t0, t1
        cdef int i
        for i in range(5):
            c[i] = cum[i]
        kind = self._draw_move(c, seg_mean, seg_cap, end_cap, shuf_mean, shuf_cap, &t0, &t1)
        return kind, t0, t1

    def run(self, int64_t n_proposals, cum, double seg_mean, int64_t seg_cap,
            int64_t end_cap, double shuf_mean, int64_t shuf_cap,
            int64_t[:] proposed, int64_t[:] accepted, int64_t[:] hist=None):
        """Run ``n_proposals`` Metropolis proposals, updating counter arrays in place."""
        cdef double c[5]
        cdef int64_t it, t0 = 0, t1 = 0, delta
        cdef int kind, i
        cdef int record = hist is not None
        if self.has_pending:
            raise RuntimeError("a proposal is already pending")
        if self.N == 0:
            return
        if record and not self.track_code:
            raise ValueError("path histogram requires N <= 30")
        for i in range(5):
            c[i] = cum[i]
        for it in range(n_proposals):
            kind = self._draw_move(c, seg_mean, seg_cap, end_cap, shuf_mean, shuf_cap, &t0, &t1)
            self._draw_segment(kind, t0, t1)
            delta = self._stage(t0, t1)
            proposed[kind] += 1
            if self._accept(delta):
                self._commit()
                accepted[kind] += 1
            else:
                self._revert()
            if record:
                hist[self.code] += 1


def enumerate_histogram(int d, int N):
    """Counts of all (2d)^N walks by (range size, squared endpoint distance)."""
    hist_arr = np.zeros((N + 2, N * N + 1), dtype=np.int64)
    cdef int64_t[:, :] hist = hist_arr
    cdef int64_t side = 2 * N + 3
    cdef int64_t size = 1
    cdef int64_t stride[MAXD]
    cdef int a, k, depth
    cdef int nd = 2 * d
    if d < 1 or d > MAXD:
        raise ValueError("dimension out of supported range")
    for a in range(d - 1, -1, -1):
        stride[a] = size
        size *= side
    cdef int32_t* grid = <int32_t*>calloc(size, sizeof(int32_t))
    cdef int64_t* idx = <int64_t*>malloc((N + 1) * sizeof(int64_t))
    cdef int* choice = <int*>malloc((N + 1) * sizeof(int))
    cdef int64_t* coord = <int64_t*>calloc(MAXD * (N + 1), sizeof(int64_t))
    cdef int64_t moves[2 * MAXD]
    cdef int64_t rsize, r2, nxt, center = 0
    if grid == NULL or idx == NULL or choice == NULL or coord == NULL:
        free(grid); free(idx); free(choice); free(coord)
        raise MemoryError()
    for a in range(d):
        center += (N + 1) * stride[a]
    for k in range(nd):
        moves[k] = stride[k >> 1] if (k & 1) == 0 else -stride[k >> 1]
    try:
        idx[0] = center
        grid[center] = 1
        rsize = 1
        depth = 0
        choice[0] = -1
        if N == 0:
            hist[1, 0] += 1
            return hist_arr
        while depth >= 0:
            if choice[depth] >= 0:
                # undo the child applied at this level
                grid[idx[depth + 1]] -= 1
                if grid[idx[depth + 1]] == 0:
                    rsize -= 1
            choice[depth] += 1
            if choice[depth] >= nd:
                depth -= 1
                continue
            k = choice[depth]
            nxt = idx[depth] + moves[k]
            idx[depth + 1] = nxt
            for a in range(d):
                coord[(depth + 1) * MAXD + a] = coord[depth * MAXD + a]
            coord[(depth + 1) * MAXD + (k >> 1)] += 1 if (k & 1) == 0 else -1
            if grid[nxt] == 0:
                rsize += 1
            grid[nxt] += 1
            if depth + 1 == N:
                r2 = 0
                for a in range(d):
                    r2 += coord[N * MAXD + a] * coord[N * MAXD + a]
                hist[rsize, r2] += 1
            else:
                depth += 1
                choice[depth] = -1
        return hist_arr
    finally:
        free(grid); free(idx); free(choice); free(coord)


cdef void _moves_for(cnp.ndarray mask, int64_t* moves):
    cdef int d = mask.ndim
    cdef int k
    cdef int64_t s
    for k in range(2 * d):
        s = mask.strides[k >> 1] // mask.itemsize
        moves[k] = s if (k & 1) == 0 else -s


def killed_walk_visits(mask, target, start, int64_t n_walks, rng_state):
    """Visits to ``target`` up to and including the killing time, per walk.

    Returns (sum, sum of squares, escaped, rng_state).
    """
    cdef cnp.ndarray m_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef cnp.ndarray t_arr = np.ascontiguousarray(target, dtype=np.uint8)
    cdef uint8_t[:] m = m_arr.reshape(-1)
    cdef uint8_t[:] tg = t_arr.reshape(-1)
    cdef int d = m_arr.ndim
    cdef int64_t moves[2 * MAXD]
    cdef int64_t i0 = 0, i, w, v
    cdef int a, nd = 2 * d
    cdef double total = 0.0, total2 = 0.0
    cdef int64_t escaped = 0
    cdef uint8_t c
    cdef Xoshiro rng
    _moves_for(m_arr, moves)
    for a in range(d):
        i0 += int(start[a]) * (m_arr.strides[a] // m_arr.itemsize)
    set_state(&rng, rng_state)
    for w in range(n_walks):
        i = i0
        v = 0
        while True:
            c = m[i]
            if c == 2:
                escaped += 1
                break
            if tg[i]:
                v += 1
            if c == 1:
                break
            i += moves[xo_randbelow(&rng, nd)]
        total += v
        total2 += <double>v * <double>v
    return total, total2, escaped, get_state(&rng)


def killed_walk_survival(mask, start, int64_t n_steps, int64_t n_walks, rng_state):
    """Number of walks with S_0..S_n all open. Returns (survivors, escaped, rng_state)."""
    cdef cnp.ndarray m_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef uint8_t[:] m = m_arr.reshape(-1)
    cdef int d = m_arr.ndim
    cdef int64_t moves[2 * MAXD]
    cdef int64_t i0 = 0, i, w, t
    cdef int a, nd = 2 * d, alive
    cdef int64_t survivors = 0, escaped = 0
    cdef uint8_t c
    cdef Xoshiro rng
    _moves_for(m_arr, moves)
    for a in range(d):
        i0 += int(start[a]) * (m_arr.strides[a] // m_arr.itemsize)
    set_state(&rng, rng_state)
    for w in range(n_walks):
        i = i0
        alive = m[i] == 0
        t = 0
        while t < n_steps and alive:
            i += moves[xo_randbelow(&rng, nd)]
            c = m[i]
            if c == 2:
                escaped += 1
                alive = 0
            elif c == 1:
                alive = 0
            t += 1
        if alive:
            survivors += 1
    return survivors, escaped, get_state(&rng)

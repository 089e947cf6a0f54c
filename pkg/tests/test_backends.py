import os
import subprocess
import sys

import numpy as np
import pytest

from annealed_walk import _backend, _pykernels
from annealed_walk.rng import seed_state

try:
    from annealed_walk import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")

MIXES = [
    np.array([0.5, 0.6, 1.0, 1.0, 1.0]),
    np.array([0.2, 0.3, 0.4, 0.6, 1.0]),
    np.array([0.0, 0.02, 0.02, 0.4, 1.0]),
]


def run_both(steps, d, logp, seed, cum, n, with_hist=False):
    out = []
    for mod in (_pykernels, _ckernels):
        k = mod.ChainKernel(np.asarray(steps, dtype=np.int8), d, logp, seed_state(seed))
        prop = np.zeros(5, dtype=np.int64)
        acc = np.zeros(5, dtype=np.int64)
        hist = np.zeros((2 * d) ** len(steps), dtype=np.int64) if with_hist else None
        k.run(n, cum, 0.2, 12, 5, 0.3, 16, prop, acc, hist)
        out.append((k.steps(), k.positions(), k.range_size, k.rng_state(), prop, acc, hist))
    return out


@needs_c
@pytest.mark.parametrize("cum", MIXES, ids=["default", "pair", "localized"])
@pytest.mark.parametrize("d,N", [(1, 15), (2, 40), (3, 25)])
def test_chain_parity(cum, d, N):
    a, b = run_both(np.zeros(N), d, np.log(0.4), 100 + N, cum, 3000)
    for x, y in zip(a[:6], b[:6]):
        assert np.array_equal(np.asarray(x), np.asarray(y))


@needs_c
def test_chain_parity_histogram():
    a, b = run_both(np.zeros(4), 2, np.log(0.5), 9, MIXES[1], 5000, with_hist=True)
    assert np.array_equal(a[6], b[6]) and a[6].sum() == 5000


@needs_c
def test_propose_commit_revert_parity():
    rng = np.random.default_rng(0)
    steps = rng.integers(0, 4, 30).astype(np.int8)
    kp = _pykernels.ChainKernel(steps, 2, np.log(0.3), seed_state(1))
    kc = _ckernels.ChainKernel(steps, 2, np.log(0.3), seed_state(1))
    for i in range(300):
        t0 = int(rng.integers(0, 29))
        t1 = int(rng.integers(t0 + 1, 31))
        new = rng.integers(0, 4, t1 - t0).astype(np.int8)
        dp = kp.propose(0, t0, t1, new)
        dc = kc.propose(0, t0, t1, new)
        assert dp == dc
        if i % 2:
            kp.commit()
            kc.commit()
        else:
            kp.revert()
            kc.revert()
        assert kp.range_size == kc.range_size
    assert np.array_equal(kp.steps(), kc.steps())


@needs_c
@pytest.mark.parametrize("d,N", [(1, 9), (2, 6), (3, 4)])
def test_enumeration_parity(d, N):
    a = _pykernels.enumerate_histogram(d, N)
    b = _ckernels.enumerate_histogram(d, N)
    assert np.array_equal(a, b) and a.sum() == (2 * d) ** N


def _killing_grid():
    mask = np.zeros((21, 21), dtype=np.uint8)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = _pykernels.OUTSIDE
    rng = np.random.default_rng(3)
    inner = rng.random((19, 19)) < 0.1
    mask[1:-1, 1:-1][inner] = _pykernels.OBSTACLE
    mask[10, 10] = _pykernels.OPEN
    return mask


@needs_c
def test_killed_walk_parity():
    mask = _killing_grid()
    target = np.zeros_like(mask)
    target[10, 10] = 1
    a = _pykernels.killed_walk_visits(mask, target, (10, 10), 500, seed_state(4))
    b = _ckernels.killed_walk_visits(mask, target, (10, 10), 500, seed_state(4))
    assert tuple(a[:3]) == tuple(b[:3]) and tuple(a[3]) == tuple(b[3])
    a = _pykernels.killed_walk_survival(mask, (10, 10), 15, 800, seed_state(5))
    b = _ckernels.killed_walk_survival(mask, (10, 10), 15, 800, seed_state(5))
    assert tuple(a[:2]) == tuple(b[:2]) and tuple(a[2]) == tuple(b[2])


def test_backend_name_consistent():
    assert _backend.BACKEND == ("cython" if _backend.COMPILED else "python")
    assert (_backend.kernels is _pykernels) == (not _backend.COMPILED)


def test_pure_env_forces_fallback():
    env = dict(os.environ, ANNEALED_WALK_PURE="1")
    code = "from annealed_walk import _backend; print(_backend.BACKEND)"
    r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                       timeout=120)
    assert r.returncode == 0 and r.stdout.strip() == "python"


def test_invalid_steps_rejected():
    with pytest.raises(ValueError):
        _pykernels.ChainKernel(np.array([0, 4], dtype=np.int8), 2, -1.0, seed_state(0))

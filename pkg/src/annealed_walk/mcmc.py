"""Metropolis sampler for the polymer marginal of the annealed law.

The target weight of a path is p^{|range|} times the uniform path measure. All
moves draw replacement steps from symmetric proposals, so a move with range
change ``delta`` is accepted with probability min(1, p^delta).

Move kinds
----------
segment_regrow
    Redraw the steps of a window (t0, t1]; the suffix after t1 is translated
    rigidly.
endpoint_regrow
    Redraw the final ``N - t0`` steps.
local_wiggle
    Redraw a single step, translating the suffix.
segment_shuffle
    Uniformly permute the steps of a window; the path after t1 is unchanged.
pair_rotate
    Pick two consecutive steps. A backtrack pair (e, -e) is replaced by a
    uniformly drawn backtrack pair, any other pair is swapped. Endpoint
    preserving and O(1).

The last two keep the suffix fixed, so their cost does not grow with N; they
are what makes long horizons affordable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._backend import BACKEND, kernels
from .environment import Environment, ModelParams, WalkPath
from .lattice import LatticeSet, empirical_center, external_boundary
from .rng import Xoshiro256, derive_seed, seed_state

KIND_NAMES = ("segment_regrow", "endpoint_regrow", "local_wiggle",
              "segment_shuffle", "pair_rotate")
_KIND_CODE = {name: i for i, name in enumerate(KIND_NAMES)}


@dataclass(frozen=True)
class MoveSpec:
    """A concrete move: kind, time window, optionally the replacement steps."""

    kind: str
    t0: int
    t1: int
    new_steps: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown move kind {self.kind!r}")
        if not 0 <= self.t0 < self.t1:
            raise ValueError("move window needs 0 <= t0 < t1")


@dataclass(frozen=True)
class MoveMix:
    """Mixture weights of the move kinds and their length parameters.

    ``None`` for a length parameter means "scale with N": segment mean N/10,
    segment cap N/2, endpoint cap N.
    """

    segment: float = 0.7
    endpoint: float = 0.2
    wiggle: float = 0.1
    shuffle: float = 0.0
    pair: float = 0.0
    seg_mean: Optional[float] = None
    seg_cap: Optional[int] = None
    end_cap: Optional[int] = None
    shuffle_mean: float = 4.0
    shuffle_cap: int = 16

    def __post_init__(self):
        w = self.weights()
        if min(w) < 0 or sum(w) <= 0:
            raise ValueError("move weights must be nonnegative with a positive sum")

    def weights(self) -> tuple[float, ...]:
        return (self.segment, self.endpoint, self.wiggle, self.shuffle, self.pair)

    @classmethod
    def localized(cls) -> "MoveMix":
        """Suffix-preserving mix for long horizons: cost per proposal is O(1)."""
        return cls(segment=0.0, endpoint=0.02, wiggle=0.0, shuffle=0.38, pair=0.6,
                   seg_mean=4.0, seg_cap=16, end_cap=16)

    def kernel_args(self, N: int):
        w = np.array(self.weights(), dtype=float)
        cum = np.cumsum(w / w.sum())
        cum[-1] = 1.0
        seg_mean = self.seg_mean if self.seg_mean is not None else max(N / 10.0, 1.0)
        seg_cap = self.seg_cap if self.seg_cap is not None else max(N // 2, 1)
        end_cap = self.end_cap if self.end_cap is not None else max(N, 1)
        return (cum, float(seg_mean), int(seg_cap), int(end_cap),
                float(self.shuffle_mean), int(self.shuffle_cap))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MoveMix":
        return cls(**data)


def acceptance_probability(delta: int, p: float) -> float:
    """min(1, p**delta)."""
    return 1.0 if delta <= 0 else float(p) ** delta


class ChainState:
    """Current path, its range bookkeeping, move counters and generator state."""

    def __init__(self, params: ModelParams, steps, rng_state):
        steps = np.asarray(steps, dtype=np.int8)
        if steps.shape[0] != params.N:
            raise ValueError("step sequence length differs from N")
        self.params = params
        self.kernel = kernels.ChainKernel(steps, params.d, params.log_p, tuple(rng_state))
        self.proposed = np.zeros(len(KIND_NAMES), dtype=np.int64)
        self.accepted = np.zeros(len(KIND_NAMES), dtype=np.int64)

    @classmethod
    def start(cls, params: ModelParams, init="straight", seed: Optional[int] = None) -> "ChainState":
        """Fresh chain. ``init`` is "straight", "confined" or an explicit step array."""
        seed = params.seed if seed is None else seed
        if isinstance(init, str):
            if init == "straight":
                steps = np.zeros(params.N, dtype=np.int8)
            elif init == "confined":
                steps = confined_walk(params.N, params.d, optimal_region_radius(params),
                                      derive_seed(seed, 1))
            else:
                raise ValueError(f"unknown init {init!r}")
        else:
            steps = init
        return cls(params, steps, seed_state(derive_seed(seed, 0)))

    @property
    def path(self) -> WalkPath:
        return WalkPath(self.kernel.steps(), self.params.d)

    @property
    def range_size(self) -> int:
        return int(self.kernel.range_size)

    @property
    def log_weight(self) -> float:
        return self.range_size * self.params.log_p

    @property
    def rng_state(self) -> tuple:
        return tuple(self.kernel.rng_state())

    @property
    def move_stats(self) -> dict:
        return {name: (int(self.proposed[i]), int(self.accepted[i]))
                for i, name in enumerate(KIND_NAMES)}

    def acceptance_rates(self) -> dict:
        return {name: (a / p if p else float("nan")) for name, (p, a) in self.move_stats.items()}

    # checkpoints --------------------------------------------------------
    def checkpoint_text(self) -> str:
        P = self.params
        lines = [
            "# annealed-walk chain checkpoint",
            f"d={P.d} p={float(P.p)!r} N={P.N} seed={P.seed}",
            "rng=" + " ".join(str(v) for v in self.rng_state),
            "proposed=" + " ".join(str(int(v)) for v in self.proposed),
            "accepted=" + " ".join(str(int(v)) for v in self.accepted),
            "steps=" + "".join(str(int(s)) for s in self.kernel.steps()),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_checkpoint(cls, text: str) -> "ChainState":
        fields = {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            if line.startswith(("rng=", "proposed=", "accepted=", "steps=")):
                key, _, val = line.partition("=")
                fields[key] = val
            else:
                for tok in line.split():
                    key, _, val = tok.partition("=")
                    fields[key] = val
        params = ModelParams(int(fields["d"]), float(fields["p"]), int(fields["N"]), int(fields["seed"]))
        steps = np.array([int(c) for c in fields["steps"]], dtype=np.int8)
        state = cls(params, steps, tuple(int(v) for v in fields["rng"].split()))
        state.proposed[:] = [int(v) for v in fields["proposed"].split()]
        state.accepted[:] = [int(v) for v in fields["accepted"].split()]
        return state


def propose(state: ChainState, spec: MoveSpec) -> tuple[WalkPath, int]:
    """Candidate path and its range change; the state itself is left unchanged."""
    if spec.t1 > state.params.N:
        raise ValueError("move window exceeds the horizon")
    k = state.kernel
    delta = k.propose(_KIND_CODE[spec.kind], spec.t0, spec.t1, spec.new_steps)
    cand = k.pending_steps()
    k.revert()
    return WalkPath(cand, state.params.d), int(delta)


def metropolis_step(state: ChainState, spec: MoveSpec) -> ChainState:
    """One Metropolis update with the given move; the state is updated in place."""
    if spec.t1 > state.params.N:
        raise ValueError("move window exceeds the horizon")
    k = state.kernel
    code = _KIND_CODE[spec.kind]
    delta = k.propose(code, spec.t0, spec.t1, spec.new_steps)
    state.proposed[code] += 1
    if k.accept_draw(delta):
        k.commit()
        state.accepted[code] += 1
    else:
        k.revert()
    return state


def run_proposals(state: ChainState, n: int, mix: MoveMix, hist=None) -> None:
    """``n`` proposals drawn from ``mix``, executed in the compiled kernel when available."""
    state.kernel.run(int(n), *mix.kernel_args(state.params.N), state.proposed,
                     state.accepted, hist)


def sweep(state: ChainState, mix: MoveMix, n_sweeps: int = 1) -> None:
    """``n_sweeps`` sweeps of N proposals each."""
    run_proposals(state, n_sweeps * max(state.params.N, 1), mix)


# ------------------------------------------------------------------------
# diagnostics


def integrated_autocorrelation(x: Sequence[float], c: float = 5.0) -> tuple[float, int]:
    """Integrated autocorrelation time with the self-consistent window M >= c * tau.

    Returns ``(tau, M)``. A constant series has tau = 1.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return 1.0, 0
    y = x - x.mean()
    var = float(y @ y)
    if var == 0.0:
        return 1.0, 0
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / var
    tau = 1.0
    for m in range(1, n):
        tau += 2.0 * acf[m]
        if m >= c * tau:
            return max(tau, 1e-12), m
    return max(tau, 1e-12), n - 1


def batch_mean_error(x: Sequence[float], tau: float) -> float:
    """Standard error of the mean of a correlated series, sqrt(var * tau / n)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float("nan")
    return math.sqrt(x.var(ddof=1) * max(tau, 1.0) / x.size)


# ------------------------------------------------------------------------
# chains


@dataclass
class SampleSummary:
    sweep: int
    range_size: int
    boundary_size: int
    covering_radius: float
    endpoint_r2: int
    center: tuple
    accept_rates: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


@dataclass
class ChainResult:
    params: ModelParams
    mix: MoveMix
    seed: int
    burn_in: int
    sweeps: int
    thin: int
    samples: list
    range_trace: np.ndarray
    tau: float
    tau_window: int
    flagged: bool
    accept_rates: dict
    state: ChainState
    backend: str = BACKEND

    def mean_range(self) -> tuple[float, float]:
        """Mean of |range| over post-burn-in sweeps and its standard error."""
        return float(self.range_trace.mean()), batch_mean_error(self.range_trace, self.tau)


def optimal_region_radius(params: ModelParams) -> float:
    """Radius of the ball with volume rho_N^d, the optimiser of the range/eigenvalue trade-off."""
    from .spectral import scaling_constants, unit_ball_volume

    rho = scaling_constants(params.d, float(params.p)).rho(params.N)
    return rho / unit_ball_volume(params.d) ** (1.0 / params.d)


def confined_walk(N: int, d: int, radius: float, seed: int) -> np.ndarray:
    """A nearest-neighbour walk from the origin that never leaves the closed ball of ``radius``.

    Steps leaving the ball are redrawn. Used as a warm start near the localised
    regime; the Metropolis chain then forgets it.
    """
    rng = Xoshiro256.from_seed(seed)
    r2 = max(radius, 1.0) ** 2
    x = [0] * d
    out = np.empty(N, dtype=np.int8)
    n = 0
    nd = 2 * d
    while n < N:
        k = rng.randbelow(nd)
        a = k >> 1
        step = 1 if (k & 1) == 0 else -1
        x[a] += step
        if sum(c * c for c in x) <= r2:
            out[n] = k
            n += 1
        else:
            x[a] -= step
    return out


def summarize(state: ChainState, sweep_index: int, full: bool = True, hook=None) -> SampleSummary:
    """Observables of the current path: |range|, |boundary|, covering radius, |S_N|^2.

    ``hook(positions, range_set, center)`` may return a dict of further
    observables, stored under ``extra``.
    """
    pos = state.kernel.positions()
    r2 = int((pos[-1] ** 2).sum())
    if not full:
        return SampleSummary(sweep_index, state.range_size, -1, float("nan"), r2, ())
    rng_set = LatticeSet(pos, state.params.d)
    center, radius = empirical_center(rng_set)
    boundary = external_boundary(rng_set).cached_size
    extra = hook(pos, rng_set, center) if hook is not None else {}
    return SampleSummary(sweep_index, state.range_size, boundary, float(radius), r2,
                         tuple(center), state.acceptance_rates(), extra)


def run_chain(params: ModelParams, mix: Optional[MoveMix] = None, sweeps: int = 1000,
              burn_in: Optional[int] = None, thin: int = 1, init="straight",
              seed: Optional[int] = None, full_observables: bool = True,
              state: Optional[ChainState] = None, hook=None) -> ChainResult:
    """Run one chain; record |range| every sweep and full summaries every ``thin`` sweeps.

    ``burn_in=None`` runs a pilot of ``max(100, sweeps // 10)`` sweeps, estimates
    the autocorrelation time and discards ``10 * tau`` sweeps in total. The chain
    is flagged when the estimated tau exceeds ``sweeps / 50``.
    """
    mix = mix or MoveMix()
    seed = params.seed if seed is None else seed
    if thin < 1 or sweeps < 1:
        raise ValueError("sweeps and thin must be positive")
    if state is None:
        state = ChainState.start(params, init, seed)
    args = mix.kernel_args(params.N)
    per_sweep = max(params.N, 1)

    def advance(n_sweeps: int, trace: Optional[list]) -> None:
        for _ in range(n_sweeps):
            state.kernel.run(per_sweep, *args, state.proposed, state.accepted)
            if trace is not None:
                trace.append(state.range_size)

    if burn_in is None:
        pilot_len = max(100, sweeps // 10)
        pilot: list = []
        advance(pilot_len, pilot)
        tau_p, _ = integrated_autocorrelation(pilot[pilot_len // 2:])
        burn_in = max(pilot_len, int(math.ceil(10 * tau_p)))
        advance(burn_in - pilot_len, None)
    else:
        advance(burn_in, None)

    trace: list = []
    samples = []
    for s in range(1, sweeps + 1):
        advance(1, trace)
        if s % thin == 0:
            samples.append(summarize(state, burn_in + s, full_observables, hook))
    arr = np.asarray(trace, dtype=np.int64)
    tau, window = integrated_autocorrelation(arr)
    return ChainResult(params, mix, seed, burn_in, sweeps, thin, samples, arr, tau, window,
                       tau > sweeps / 50.0, state.acceptance_rates(), state)


def path_histogram(params: ModelParams, n_steps: int, mix: Optional[MoveMix] = None,
                   burn_in: int = 10_000, seed: Optional[int] = None) -> np.ndarray:
    """Visit counts of every path code over ``n_steps`` Metropolis steps (N <= 30)."""
    mix = mix or MoveMix()
    state = ChainState.start(params, "straight", seed)
    run_proposals(state, burn_in, mix)
    hist = np.zeros((2 * params.d) ** params.N, dtype=np.int64)
    run_proposals(state, n_steps, mix, hist)
    return hist


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


# ------------------------------------------------------------------------
# obstacles given the path


def sample_obstacles_given_path(path: WalkPath, params: ModelParams, window: LatticeSet,
                                seed: Optional[int] = None) -> Environment:
    """Conditional law of the obstacles given survival along ``path``.

    Sites of the range are open; every other window site is independently an
    obstacle with probability 1 - p.
    """
    if not window.contains_many(path.positions).all():
        raise ValueError("the range is not inside the window")
    gen = np.random.Generator(np.random.PCG64(params.seed if seed is None else seed))
    u = gen.random(window.cached_size)
    on_range = path.range_set().contains_many(window.points)
    closed = (u < 1.0 - float(params.p)) & ~on_range
    return Environment(window, LatticeSet(window.points[closed], window.dimension))


# ------------------------------------------------------------------------
# output


def chain_csv_rows(result: ChainResult) -> Iterable[str]:
    yield "sweep,range_size,boundary_size,covering_radius,endpoint_r2,accept_rate_by_move"
    for s in result.samples:
        rates = ";".join(f"{k}={v:.6f}" for k, v in s.accept_rates.items()
                         if not math.isnan(v))
        yield f"{s.sweep},{s.range_size},{s.boundary_size},{s.covering_radius:.6f},{s.endpoint_r2},{rates}"


def write_chain_csv(result: ChainResult, path) -> None:
    P = result.params
    header = (f"# d={P.d} p={float(P.p)!r} N={P.N} seed={result.seed} burn_in={result.burn_in} "
              f"sweeps={result.sweeps} thin={result.thin} tau={result.tau:.6g} "
              f"flagged={int(result.flagged)} mix={result.mix.to_dict()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in chain_csv_rows(result):
            fh.write(row + "\n")

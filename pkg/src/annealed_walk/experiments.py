"""Scaling studies over a grid of horizons, with CSV and SVG output.

Every artifact starts with comment lines holding the full configuration as JSON
and the per-chain seeds, so a run can be regenerated from its own output.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .environment import ModelParams
from .geometry import (TrulyOpenConfig, ball_covering_deficit, crossing_decomposition,
                       truly_open_cluster)
from .lattice import BallSpec, LatticeSet, box_points, empirical_center
from .mcmc import (ChainState, MoveMix, batch_mean_error, integrated_autocorrelation,
                   run_chain, sample_obstacles_given_path)
from .rng import derive_seed
from .spectral import scaling_constants

COVER_FRACTIONS = (0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    p: float = 0.5
    seed: int = 20240607
    N_grid: tuple = (10_000, 40_000, 160_000)
    chains: int = 2
    sweeps: tuple = (8000, 25_000, 35_000)
    burn_in: Optional[int] = None
    thin: int = 50
    init: str = "confined"
    mix: str = "localized"
    crossing_inner: float = 0.5
    crossing_outer: float = 0.75
    truly_open_t: Optional[int] = None
    truly_open_threshold: Optional[float] = None
    output_dir: str = "scaling_out"
    emit_plots: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.N_grid or min(self.N_grid) <= 0:
            raise ValueError("N_grid entries must be positive")
        if self.chains < 2:
            raise ValueError("at least two chains are required for cross-chain checks")
        if min(self.sweeps) <= 0 or self.thin <= 0:
            raise ValueError("sweeps and thin must be positive")
        if len(self.sweeps) not in (1, len(self.N_grid)):
            raise ValueError("sweeps must be a single value or one per grid entry")
        if not 0 < self.crossing_inner < self.crossing_outer:
            raise ValueError("crossing radii must satisfy 0 < inner < outer")
        if self.mix not in ("default", "localized"):
            raise ValueError("mix must be 'default' or 'localized'")
        ModelParams(self.d, self.p, 0, self.seed)

    def sweeps_for(self, i: int) -> int:
        return int(self.sweeps[0] if len(self.sweeps) == 1 else self.sweeps[i])

    def move_mix(self) -> MoveMix:
        return MoveMix() if self.mix == "default" else MoveMix.localized()

    def truly_open(self) -> Optional[TrulyOpenConfig]:
        if self.truly_open_t is None:
            return None
        return TrulyOpenConfig(int(self.truly_open_t), float(self.truly_open_threshold or 1e-3))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["N_grid"] = list(self.N_grid)
        out["sweeps"] = list(self.sweeps)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        for key in ("N_grid", "sweeps"):
            if key in data:
                v = data[key]
                data[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        return cls(**data)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML file with optional [model], [run], [crossings], [truly_open], [output] tables."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    flat: dict = {}
    model = raw.get("model", {})
    for key in ("d", "p", "seed"):
        if key in model:
            flat[key] = model[key]
    run = raw.get("run", {})
    for key in ("N_grid", "chains", "sweeps", "burn_in", "thin", "init", "mix", "workers"):
        if key in run:
            flat[key] = run[key]
    cr = raw.get("crossings", {})
    if "inner" in cr:
        flat["crossing_inner"] = cr["inner"]
    if "outer" in cr:
        flat["crossing_outer"] = cr["outer"]
    to = raw.get("truly_open", {})
    if "t_surv" in to:
        flat["truly_open_t"] = to["t_surv"]
    if "threshold" in to:
        flat["truly_open_threshold"] = to["threshold"]
    out = raw.get("output", {})
    if "dir" in out:
        flat["output_dir"] = out["dir"]
    if "emit_plots" in out:
        flat["emit_plots"] = out["emit_plots"]
    flat.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(flat)


def config_from_artifact(path) -> ExperimentConfig:
    """Recover the configuration embedded in a CSV or JSON artifact header."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# config: "):
                return ExperimentConfig.from_dict(json.loads(line[len("# config: "):]))
    raise ValueError(f"no embedded config in {path}")


# ------------------------------------------------------------------------
# per-chain work


@dataclass
class ChainSummary:
    N: int
    chain: int
    seed: int
    tau: float
    flagged: bool
    burn_in: int
    range_mean: float
    range_err: float
    obs: dict = field(default_factory=dict)  # name -> (mean, err)
    accept: dict = field(default_factory=dict)


def _series_stats(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), float("nan")
    tau, _ = integrated_autocorrelation(x)
    return float(x.mean()), batch_mean_error(x, tau)


class SampleObserver:
    """Per-sample geometry: covering deficits, crossing count and (optionally) |T|."""

    def __init__(self, cfg: ExperimentConfig, N: int, seed: int):
        self.cfg = cfg
        self.N = N
        self.seed = seed
        self.rho = scaling_constants(cfg.d, cfg.p).rho(N)
        self.count = 0

    def __call__(self, pos: np.ndarray, rng_set: LatticeSet, center) -> dict:
        cfg, rho = self.cfg, self.rho
        out = {}
        for f in COVER_FRACTIONS:
            out[f"deficit_{f}"] = ball_covering_deficit(rng_set, center, f * rho)[1]
        path = _PositionsPath(pos)
        l = rho / 4.0
        cd = crossing_decomposition(path, center, cfg.crossing_inner * rho, cfg.crossing_outer * rho)
        out["K"] = cd.K
        out["K_scaled"] = cd.K * l * l / self.N
        to = cfg.truly_open()
        if to is not None:
            out["T_size"] = self._truly_open_size(pos, rng_set, center, to)
        self.count += 1
        return out

    def _truly_open_size(self, pos, rng_set, center, to: TrulyOpenConfig) -> int:
        cfg, rho = self.cfg, self.rho
        radius = rho + math.sqrt(rho)
        margin = int(math.ceil(radius)) + to.t_surv + 1
        c = np.asarray(center, dtype=np.int64)
        lo = np.minimum(c - margin, pos.min(0))
        hi = np.maximum(c + margin, pos.max(0))
        window = box_points(lo, hi)
        params = ModelParams(cfg.d, cfg.p, self.N, derive_seed(self.seed, 7, self.count))
        env = sample_obstacles_given_path(_PositionsPath(pos), params, window)
        T = truly_open_cluster(env, to, BallSpec(tuple(center), radius))
        return T.cached_size


class _PositionsPath:
    """Minimal path view over a positions array (avoids re-deriving steps)."""

    def __init__(self, positions: np.ndarray):
        self.positions = positions
        self.N = positions.shape[0] - 1
        self.d = positions.shape[1]

    def range_set(self) -> LatticeSet:
        return LatticeSet(self.positions, self.d)


def _run_one(task) -> ChainSummary:
    cfg_dict, N, chain_index, sweeps = task
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = derive_seed(cfg.seed, N, chain_index)
    params = ModelParams(cfg.d, cfg.p, N, seed)
    observer = SampleObserver(cfg, N, seed)
    res = run_chain(params, cfg.move_mix(), sweeps=sweeps, burn_in=cfg.burn_in, thin=cfg.thin,
                    init=cfg.init, seed=seed, full_observables=True, hook=observer)
    series: dict = {"boundary": [s.boundary_size for s in res.samples],
                    "covering_radius": [s.covering_radius for s in res.samples]}
    for s in res.samples:
        for k, v in s.extra.items():
            series.setdefault(k, []).append(v)
    obs = {k: _series_stats(v) for k, v in series.items()}
    mean, err = res.mean_range()
    return ChainSummary(N, chain_index, seed, res.tau, res.flagged, res.burn_in, mean, err,
                        obs, {k: (None if math.isnan(v) else v) for k, v in res.accept_rates.items()})


# ------------------------------------------------------------------------
# aggregation


@dataclass
class ScalingRow:
    N: int
    rho_N: float
    flagged: bool
    tau_max: float
    range_mean: float
    range_err: float
    range_z: float  # largest pairwise chain discrepancy in standard errors
    values: dict  # observable -> (mean, err)

    def columns(self) -> list:
        return sorted(self.values)

    def covering_fraction(self, f: float = 0.8) -> tuple[float, float]:
        m, e = self.values[f"deficit_{f}"]
        return 1.0 - m, e


def _combine(pairs) -> tuple[float, float]:
    means = [m for m, _ in pairs]
    errs = [e for _, e in pairs]
    n = len(means)
    mean = math.fsum(means) / n
    err = math.sqrt(math.fsum(e * e for e in errs)) / n if all(np.isfinite(errs)) else float("nan")
    return mean, err


def aggregate(cfg: ExperimentConfig, summaries: Sequence[ChainSummary]) -> list[ScalingRow]:
    """Fold chain summaries into one row per N, in (N, chain) order."""
    sc = scaling_constants(cfg.d, cfg.p)
    rows = []
    for N in cfg.N_grid:
        group = sorted((s for s in summaries if s.N == N), key=lambda s: s.chain)
        rmean, rerr = _combine([(s.range_mean, s.range_err) for s in group])
        z = 0.0
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                a, b = group[i], group[j]
                z = max(z, abs(a.range_mean - b.range_mean) / math.hypot(a.range_err, b.range_err))
        values = {}
        for key in group[0].obs:
            values[key] = _combine([s.obs[key] for s in group])
        rho = sc.rho(N)
        bm, be = values["boundary"]
        values["boundary_ratio"] = (bm / rho ** (cfg.d - 1), be / rho ** (cfg.d - 1))
        rows.append(ScalingRow(N, rho, any(s.flagged for s in group),
                               max(s.tau for s in group), rmean, rerr, z, values))
    return rows


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def artifact_header(cfg: ExperimentConfig) -> list[str]:
    seeds = {f"{N}:{c}": derive_seed(cfg.seed, N, c) for N in cfg.N_grid for c in range(cfg.chains)}
    return [f"# config: {cfg.to_json()}", f"# seeds: {json.dumps(seeds, sort_keys=True)}"]


def rows_to_csv(cfg: ExperimentConfig, rows: Sequence[ScalingRow]) -> str:
    keys = rows[0].columns() if rows else []
    head = ["N", "rho_N", "flagged", "tau_max", "range_mean", "range_err", "range_z"]
    for k in keys:
        head += [f"{k}_mean", f"{k}_err"]
    lines = artifact_header(cfg) + [",".join(head)]
    for r in rows:
        vals = [r.N, r.rho_N, r.flagged, r.tau_max, r.range_mean, r.range_err, r.range_z]
        for k in keys:
            vals += list(r.values[k])
        lines.append(",".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def chains_to_csv(cfg: ExperimentConfig, summaries: Sequence[ChainSummary]) -> str:
    lines = artifact_header(cfg)
    lines.append("N,chain,seed,burn_in,tau,flagged,range_mean,range_err,accept_rates")
    for s in sorted(summaries, key=lambda s: (s.N, s.chain)):
        acc = ";".join(f"{k}={v:.6f}" for k, v in s.accept.items() if v is not None)
        lines.append(",".join([_fmt(s.N), _fmt(s.chain), str(s.seed), _fmt(s.burn_in), _fmt(s.tau),
                               _fmt(s.flagged), _fmt(s.range_mean), _fmt(s.range_err), acc]))
    return "\n".join(lines) + "\n"


def run_scaling_experiment(cfg: ExperimentConfig, write: bool = True) -> list[ScalingRow]:
    """Run every (N, chain) task, fold the results and optionally write CSV/SVG artifacts."""
    tasks = [(cfg.to_dict(), N, c, cfg.sweeps_for(i))
             for i, N in enumerate(cfg.N_grid) for c in range(cfg.chains)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            summaries = list(pool.map(_run_one, tasks))
    else:
        summaries = [_run_one(t) for t in tasks]
    rows = aggregate(cfg, summaries)
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scaling.csv").write_text(rows_to_csv(cfg, rows), encoding="utf-8")
        (out / "chains.csv").write_text(chains_to_csv(cfg, summaries), encoding="utf-8")
        if cfg.emit_plots and len(rows) >= 2:
            emit_plots(rows, out, d=cfg.d)
    return rows


# ------------------------------------------------------------------------
# fits and plots


def fit_loglog_slope(x, y, err=None) -> tuple[float, float, float]:
    """Weighted least-squares fit of log y = a + b log x; returns (b, stderr of b, a).

    Weights are (y / err)^2, the inverse variance of log y, when errors are
    given and positive; otherwise all points weigh the same.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    lx, ly = np.log(x), np.log(y)
    weighted = False
    w = np.ones_like(x)
    if err is not None:
        e = np.asarray(err, dtype=float)
        if (np.isfinite(e) & (e > 0)).all():
            w = (y / e) ** 2
            weighted = True
    W = w.sum()
    mx, my = (w * lx).sum() / W, (w * ly).sum() / W
    sxx = (w * (lx - mx) ** 2).sum()
    b = (w * (lx - mx) * (ly - my)).sum() / sxx
    a = my - b * mx
    if weighted:
        berr = math.sqrt(1.0 / sxx)
    elif x.size > 2:
        resid = ly - a - b * lx
        berr = math.sqrt((resid**2).sum() / (x.size - 2) / sxx)
    else:
        berr = float("nan")
    return float(b), float(berr), float(a)


def _ticks(lo: float, hi: float) -> list[float]:
    out = []
    for k in range(math.floor(math.log10(lo)) - 1, math.ceil(math.log10(hi)) + 1):
        for m in (1, 2, 5):
            v = m * 10.0**k
            if lo <= v <= hi:
                out.append(v)
    return out or [lo, hi]


def loglog_svg(x, y, err, flagged, xlabel: str, ylabel: str, title: str) -> str:
    """A log-log scatter plot with error bars and a weighted slope annotation."""
    W, H, ml, mr, mt, mb = 520, 380, 70, 20, 40, 55
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    err = np.asarray(err, float)
    flagged = np.asarray(flagged, bool)
    ylo = np.where(np.isfinite(err), y - err, y)
    yhi = np.where(np.isfinite(err), y + err, y)
    x0, x1 = x.min() / 1.25, x.max() * 1.25
    y0, y1 = max(ylo.min(), y.min() / 2) / 1.25, yhi.max() * 1.25

    def px(v):
        return ml + (math.log(v) - math.log(x0)) / (math.log(x1) - math.log(x0)) * (W - ml - mr)

    def py(v):
        return H - mb - (math.log(v) - math.log(y0)) / (math.log(y1) - math.log(y0)) * (H - mt - mb)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{title}</text>',
             f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>']
    for t in _ticks(x0, x1):
        X = px(t)
        parts.append(f'<line x1="{X:.2f}" y1="{H - mb}" x2="{X:.2f}" y2="{H - mb + 5}" stroke="black"/>')
        parts.append(f'<text x="{X:.2f}" y="{H - mb + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{t:g}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        parts.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end" font-size="11" font-family="sans-serif">{t:g}</text>')
    parts.append(f'<text x="{(ml + W - mr) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="13" font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(mt + H - mb) / 2:.1f}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 16 {(mt + H - mb) / 2:.1f})">{ylabel}</text>')
    for xi, yi, lo, hi, fl in zip(x, y, ylo, yhi, flagged):
        X = px(xi)
        if hi > lo and lo > 0:
            parts.append(f'<line x1="{X:.2f}" y1="{py(lo):.2f}" x2="{X:.2f}" y2="{py(hi):.2f}" stroke="gray"/>')
        style = 'fill="none" stroke="red"' if fl else 'fill="black"'
        parts.append(f'<circle cx="{X:.2f}" cy="{py(yi):.2f}" r="4" {style}/>')
    good = ~flagged
    if good.sum() >= 2:
        e = err[good] if np.isfinite(err[good]).all() else None
        b, be, a = fit_loglog_slope(x[good], y[good], e)
        xs = np.array([x[good].min(), x[good].max()])
        ys = np.exp(a) * xs**b
        parts.append(f'<line x1="{px(xs[0]):.2f}" y1="{py(ys[0]):.2f}" x2="{px(xs[1]):.2f}" y2="{py(ys[1]):.2f}" stroke="blue" stroke-dasharray="5,3"/>')
        label = f"slope {b:.4f}" + ("" if math.isnan(be) else f" &#177; {be:.4f}")
    else:
        label = "slope: fewer than 2 unflagged points"
    parts.append(f'<text x="{ml + 10}" y="{mt + 16}" font-size="12" font-family="sans-serif" fill="blue">{label}</text>')
    if flagged.any():
        parts.append(f'<text x="{ml + 10}" y="{mt + 32}" font-size="11" font-family="sans-serif" fill="red">hollow red: flagged chains, excluded from fit</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(rows: Sequence[ScalingRow], output_dir, d: int = 2) -> list[Path]:
    """range vs N, boundary vs rho_N^{d-1}, covering radius vs rho_N, as SVG files."""
    if len(rows) < 2:
        raise ValueError("plots need at least two rows")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fl = [r.flagged for r in rows]
    specs = [
        ("range_vs_N.svg", [r.N for r in rows], [r.range_mean for r in rows],
         [r.range_err for r in rows], "N", "mean |range|", "Range size"),
        ("boundary_vs_rho.svg", [r.rho_N ** (d - 1) for r in rows],
         [r.values["boundary"][0] for r in rows], [r.values["boundary"][1] for r in rows],
         "rho_N^(d-1)", "mean |boundary|", "Boundary size"),
        ("covering_vs_rho.svg", [r.rho_N for r in rows],
         [r.values["covering_radius"][0] for r in rows],
         [r.values["covering_radius"][1] for r in rows], "rho_N", "mean covering radius",
         "Covering radius"),
    ]
    paths = []
    for name, x, y, e, xl, yl, title in specs:
        p = out / name
        p.write_text(loglog_svg(x, y, e, fl, xl, yl, title), encoding="utf-8")
        paths.append(p)
    return paths

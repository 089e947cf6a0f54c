"""Command-line entry point: ``annealed-walk <subcommand> [options]``.

Every subcommand accepts ``--config FILE.toml``, ``--seed``, ``--out`` and
``--level``. The exit status is 0 exactly when none of the checks performed by
the subcommand failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _backend
from .environment import ModelParams, exact_mu_expectation, exact_partition_function
from .experiments import fit_loglog_slope, load_config, run_scaling_experiment
from .geometry import (TrulyOpenConfig, crossing_decomposition, skeletal_set,
                       truly_open_cluster)
from .lattice import BallSpec, ball, box_points, empirical_center
from .mcmc import ChainState, MoveMix, run_chain, sample_obstacles_given_path, write_chain_csv
from .spectral import (dirichlet_spectrum, faber_krahn_gap, parity_spectrum_check,
                       scaling_constants)
from .validation import run_validation_suite

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _read_toml(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _pick(args, table: dict, name: str, default):
    """Command-line value, else the config table, else ``default``."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return table.get(name, default)


def _emit(text: str, out) -> None:
    if out is None:
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + ("" if text.endswith("\n") else "\n"), encoding="utf-8")


def _model(args, raw: dict, N_default: int = 10) -> ModelParams:
    model = raw.get("model", {})
    return ModelParams(int(_pick(args, model, "d", 2)), float(_pick(args, model, "p", 0.5)),
                       int(_pick(args, model, "N", N_default)), int(_pick(args, model, "seed", 0)))


# ------------------------------------------------------------------------
# subcommands


def cmd_exact(args, raw) -> int:
    params = _model(args, raw)
    if args.rational:
        p = Fraction(str(params.p))
        Z = exact_partition_function(ModelParams(params.d, p, params.N), exact=True)
        report = {"d": params.d, "p": str(p), "N": params.N, "Z": str(Z), "Z_float": float(Z)}
        ok = params.N > 1 or Z == p ** (params.N + 1)
    else:
        Z = exact_partition_function(params)
        report = {"d": params.d, "p": params.p, "N": params.N, "Z": Z}
        ok = params.N > 1 or math.isclose(Z, params.p ** (params.N + 1), rel_tol=1e-14)
    for name in args.observable or ():
        report[f"E[{name}]"] = exact_mu_expectation(params, name)
    report["check_small_N"] = "pass" if ok else "fail"
    _emit(json.dumps(report, indent=2), args.out)
    return 0 if ok else 1


def cmd_sample(args, raw) -> int:
    table = raw.get("sample", {})
    if args.resume:
        state = ChainState.from_checkpoint(Path(args.resume).read_text(encoding="utf-8"))
        params = state.params
        burn_in = 0
    else:
        params = _model(args, raw, N_default=100)
        state = None
        burn_in = table.get("burn_in") if args.burn_in is None else args.burn_in
    mix_name = _pick(args, table, "mix", "default")
    mix = MoveMix.localized() if mix_name == "localized" else MoveMix()
    res = run_chain(params, mix, sweeps=int(_pick(args, table, "sweeps", 1000)), burn_in=burn_in,
                    thin=int(_pick(args, table, "thin", 10)), init=_pick(args, table, "init", "straight"),
                    seed=params.seed, state=state)
    out = Path(args.out or "sample_out")
    out.mkdir(parents=True, exist_ok=True)
    write_chain_csv(res, out / "samples.csv")
    (out / "checkpoint.txt").write_text(res.state.checkpoint_text(), encoding="utf-8")
    mean, err = res.mean_range()
    summary = {"N": params.N, "d": params.d, "p": params.p, "seed": params.seed,
               "backend": _backend.BACKEND, "burn_in": res.burn_in, "sweeps": res.sweeps,
               "range_mean": mean, "range_err": err, "tau": float(res.tau), "flagged": bool(res.flagged),
               "accept_rates": {k: (None if math.isnan(v) else v) for k, v in res.accept_rates.items()}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"|range| = {mean:.6g} +- {err:.3g}  tau = {res.tau:.3g} sweeps"
          f"{'  FLAGGED' if res.flagged else ''}")
    return 1 if res.flagged else 0


def _domain(args, table: dict):
    shape = _pick(args, table, "shape", "ball")
    radius = float(_pick(args, table, "radius", 10.0))
    d = int(_pick(args, table, "d", 2))
    if shape == "ball":
        return ball(tuple([0] * d), radius)
    if shape == "box":
        r = int(radius)
        return box_points([-r] * d, [r] * d)
    raise ValueError(f"unknown shape {shape!r}")


def cmd_spectral(args, raw) -> int:
    table = raw.get("spectral", {})
    D = _domain(args, table)
    k = int(_pick(args, table, "k", 4))
    spec = dirichlet_spectrum(D, k)
    lam, lam_ball, gap = faber_krahn_gap(D)
    par = parity_spectrum_check(D)
    sc = scaling_constants(D.dimension, float(_pick(args, raw.get("model", {}), "p", 0.5)))
    checks = {"faber_krahn": gap >= -1e-3,
              "parity": par.asymmetry <= 1e-9 and par.projection_residual <= 1e-8}
    report = {"sites": D.cached_size, "eigenvalues": spec.eigenvalues.tolist(),
              "residual": spec.residual, "faber_krahn": {"lambda": lam, "ball": lam_ball, "gap": gap},
              "parity": par.to_dict(), "constants": sc.to_dict(),
              "checks": {k: ("pass" if v else "fail") for k, v in checks.items()}}
    _emit(json.dumps(report, indent=2), args.out)
    return 0 if all(checks.values()) else 1


def cmd_geometry(args, raw) -> int:
    table = raw.get("geometry", {})
    state = ChainState.from_checkpoint(Path(args.checkpoint).read_text(encoding="utf-8"))
    P = state.params
    seed = P.seed if args.seed is None else args.seed
    path = state.path
    pos = path.positions
    center, _ = empirical_center(path.range_set())
    rho = scaling_constants(P.d, float(P.p)).rho(P.N)
    inner = float(table.get("crossing_inner", 0.5)) * rho
    outer = float(table.get("crossing_outer", 0.75)) * rho
    cd = crossing_decomposition(path, center, inner, outer)
    t_surv = int(table.get("t_surv", 0))
    margin = int(math.ceil(rho + math.sqrt(rho))) + t_surv + 2 if t_surv else int(math.ceil(rho)) + 2
    c = np.asarray(center, dtype=np.int64)
    window = box_points(np.minimum(c - margin, pos.min(0) - 2), np.maximum(c + margin, pos.max(0) + 2))
    env = sample_obstacles_given_path(path, ModelParams(P.d, P.p, P.N, seed), window)
    report = {"N": P.N, "center": list(center), "rho_N": rho,
              "crossings": json.loads(cd.to_json()), "obstacles": env.obstacles.cached_size}
    checks = {"crossings": cd.check()}
    if env.obstacles.cached_size:
        l = float(table.get("skeleton_l", max(2.0, rho / 4)))
        dist = ((env.obstacles.points - c) ** 2).sum(1)
        anchor = tuple(int(v) for v in env.obstacles.points[int(np.argmin(dist))])
        X = skeletal_set(env, anchor, l)
        v = X.violations(env)
        report["skeleton"] = {"anchor": list(anchor), "l": l, "size": len(X.points),
                              "inner": len(X.inner_points), "violations": v}
        checks["skeleton"] = sum(v.values()) == 0
    if t_surv:
        cfg = TrulyOpenConfig(t_surv, float(table.get("threshold", 0.5)))
        T = truly_open_cluster(env, cfg, BallSpec(tuple(center), rho + math.sqrt(rho)))
        report["truly_open_size"] = T.cached_size
    report["checks"] = {k: ("pass" if v else "fail") for k, v in checks.items()}
    _emit(json.dumps(report, indent=2), args.out)
    return 0 if all(checks.values()) else 1


def cmd_scaling(args, raw) -> int:
    overrides = {"seed": args.seed, "output_dir": args.out}
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        from .experiments import ExperimentConfig
        cfg = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    if args.level == "quick":
        cfg = type(cfg).from_dict({**cfg.to_dict(), "N_grid": [10], "sweeps": [20000],
                                   "thin": 20, "init": "straight", "mix": "default"})
    rows = run_scaling_experiment(cfg)
    for r in rows:
        print(f"N={r.N:<8d} |range|={r.range_mean:.6g} +- {r.range_err:.3g}  tau={r.tau_max:.3g}"
              f"{'  FLAGGED' if r.flagged else ''}")
    good = [r for r in rows if not r.flagged]
    if len(good) >= 2:
        b, be, _ = fit_loglog_slope([r.N for r in good], [r.range_mean for r in good],
                                    [r.range_err for r in good])
        print(f"slope of log E|range| vs log N: {b:.4f} +- {be:.2g}")
    return 1 if any(r.flagged for r in rows) else 0


def cmd_validate(args, raw) -> int:
    level = args.level or raw.get("validate", {}).get("level", "quick")
    report = run_validation_suite(level, log=print)
    if args.out:
        _emit(report.to_json(), args.out)
    print(f"{len(report.results) - len(report.failed())}/{len(report.results)} checks passed"
          f" in {report.seconds:.1f}s ({report.backend} backend)")
    return 0 if report.passed else 1


# ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--level", choices=("quick", "full"), help="effort level")

    parser = argparse.ArgumentParser(prog="annealed-walk",
                                     description="Annealed random walk among Bernoulli obstacles.")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p):
        p.add_argument("--d", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--N", type=int)

    p = sub.add_parser("exact", parents=[common], help="exact enumeration for small N")
    model_args(p)
    p.add_argument("--rational", action="store_true", help="exact rational arithmetic")
    p.add_argument("--observable", action="append",
                   choices=("one", "range", "return", "endpoint_r2"))
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sample", parents=[common], help="Metropolis sampling of the path law")
    model_args(p)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--init", choices=("straight", "confined"))
    p.add_argument("--mix", choices=("default", "localized"))
    p.add_argument("--resume", help="continue from a checkpoint file")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("spectral", parents=[common], help="Dirichlet spectrum of a lattice domain")
    p.add_argument("--shape", choices=("ball", "box"))
    p.add_argument("--radius", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("geometry", parents=[common], help="geometry of a stored chain state")
    p.add_argument("checkpoint", help="checkpoint file written by 'sample'")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("scaling", parents=[common], help="range scaling study over an N grid")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("validate", parents=[common], help="run the validation suite")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = _read_toml(args.config)
    if args.seed is not None:
        raw.setdefault("model", {})["seed"] = args.seed
    return int(args.func(args, raw))


if __name__ == "__main__":
    sys.exit(main())

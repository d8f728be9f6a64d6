"""Command-line interface: ``tobit-iht {simulate,fit,fit-dist,experiment}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .datagen import GenSpec, generate
from .errors import DataError, DivergenceError, InvalidArgumentError, TobitError
from .evaluation import (
    compute_metrics,
    convergence_diagnostics,
    cross_validate_s,
    dist_vs_pooled,
    rate_experiment,
    resolve_threads,
)
from .solver_dist import DistConfig, fit_distributed, recommended_rounds
from .solver_local import IhtConfig, fit

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 2, 3, 4

SIMULATE_DEFAULTS = {
    "n": 500, "d": 100, "s0": 3, "signal": 2.0, "beta0": 0.5, "sigma": 0.5,
    "design": "iid_gaussian", "rho": 0.3, "c0": 0.0, "seed": 0, "shards": 1,
}
SOLVER_DEFAULTS = {
    "s": None, "eta": "auto", "iters": 1000, "tol": 1e-8, "c_star": 1e-3,
    "keep_intercept": False, "backtracking": True,
}
FIT_DEFAULTS = {
    **SOLVER_DEFAULTS, "data": None, "truth": None, "c0": None,
    "cv": None, "folds": 5, "cv_seed": 0,
}
FIT_DIST_DEFAULTS = {
    **SOLVER_DEFAULTS, "manifest": None, "truth": None, "rounds": "auto", "init": "cold",
}
EXPERIMENT_DEFAULTS = {
    "name": None, "n": None, "reps": 50, "M": 10, "d": 2000, "s0": 5, "s": 5,
    "signal": 1.0, "beta0": 0.0, "sigma": 1.0, "design": "iid_gaussian", "rho": 0.3,
    "seed": 0, "eta": "auto", "iters": 500, "tol": 1e-8, "c_star": 0.5,
    "keep_intercept": False, "backtracking": True,
    "rounds": "auto", "dist_init": "local", "threads": None,
}
EXPERIMENTS = ("rate", "convergence", "dist-vs-pooled")


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _s_grid(text):
    text = str(text)
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return _int_list(text)


def _eta(text):
    return "auto" if text == "auto" else float(text)


def _rounds(text):
    return "auto" if text == "auto" else int(text)


def _solver_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--s", type=int, default=S, help="sparsity budget for delta")
    p.add_argument("--eta", type=_eta, default=S, help="step size or 'auto'")
    p.add_argument("--iters", type=int, default=S, help="maximum IHT iterations T")
    p.add_argument("--tol", type=float, default=S, help="early stop on ||theta step||_2 < tol")
    p.add_argument("--c-star", dest="c_star", type=float, default=S, help="lower bound for gamma")
    p.add_argument("--keep-intercept", dest="keep_intercept", action="store_true", default=S)
    p.add_argument("--no-backtracking", dest="backtracking", action="store_false", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="tobit-iht", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config or a previous run manifest")
    common.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    for name, typ in [("n", int), ("d", int), ("s0", int), ("signal", float), ("beta0", float),
                      ("sigma", float), ("rho", float), ("c0", float), ("seed", int), ("shards", int)]:
        p.add_argument(f"--{name}", type=typ, default=S)
    p.add_argument("--design", choices=("iid_gaussian", "ar1"), default=S)

    p = sub.add_parser("fit", parents=[common], help="local IHT fit on a dataset CSV")
    p.add_argument("--data", default=S, help="dataset CSV")
    p.add_argument("--truth", default=S, help="truth JSON; adds metrics to the result")
    p.add_argument("--c0", type=float, default=S, help="censoring threshold (default: truth file, else 0)")
    _solver_flags(p)
    p.add_argument("--cv", type=str, default=S, help="sparsity grid, 'lo:hi' or comma list")
    p.add_argument("--folds", type=int, default=S)
    p.add_argument("--cv-seed", dest="cv_seed", type=int, default=S)

    p = sub.add_parser("fit-dist", parents=[common], help="distributed IHT fit over a shard manifest")
    p.add_argument("--manifest", default=S, help="shards.json written by simulate --shards")
    p.add_argument("--truth", default=S)
    p.add_argument("--rounds", type=_rounds, default=S, help="outer rounds Q or 'auto'")
    p.add_argument("--init", choices=("cold", "local"), default=S)
    _solver_flags(p)

    p = sub.add_parser("experiment", parents=[common], help="replication experiments")
    p.add_argument("name", nargs="?", choices=EXPERIMENTS, default=S)
    p.add_argument("--n", type=str, default=S, help="comma-separated sample sizes")
    for name, typ in [("reps", int), ("M", int), ("d", int), ("s0", int), ("signal", float),
                      ("beta0", float), ("sigma", float), ("rho", float), ("seed", int)]:
        p.add_argument(f"--{name}", type=typ, default=S)
    p.add_argument("--design", choices=("iid_gaussian", "ar1"), default=S)
    p.add_argument("--rounds", type=_rounds, default=S)
    p.add_argument("--dist-init", dest="dist_init", choices=("cold", "local"), default=S)
    p.add_argument("--threads", type=int, default=S, help="process fan-out (env TOBIT_IHT_THREADS)")
    _solver_flags(p)
    return parser


def _load_config(path):
    if path is None:
        return {}
    raw = io.read_json(path)
    if not isinstance(raw, dict):
        raise InvalidArgumentError(f"{path}: config must be a JSON object")
    if "config" in raw and "command" in raw:
        raw = raw["config"]
    return raw


def resolve(defaults: dict, config_path, flags: dict) -> dict:
    """defaults <- config file <- explicit flags."""
    resolved = dict(defaults)
    from_file = _load_config(config_path)
    unknown = set(from_file) - set(defaults)
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
    resolved.update(from_file)
    resolved.update({k: v for k, v in flags.items() if k in defaults})
    return resolved


def _iht_config(cfg, **extra) -> IhtConfig:
    if cfg.get("s") is None:
        raise InvalidArgumentError("--s is required")
    return IhtConfig(
        s=int(cfg["s"]), c_star=float(cfg["c_star"]), eta=cfg["eta"], max_iters=int(cfg["iters"]),
        tol=float(cfg["tol"]), keep_intercept=bool(cfg["keep_intercept"]),
        backtracking=bool(cfg["backtracking"]), **extra,
    )


def _finish(out: Path, command: str, cfg: dict, seed, wall_time=None):
    manifest = io.make_manifest(command, cfg, seed)
    if wall_time is not None:
        manifest["wall_time"] = wall_time
    io.write_json(out / "manifest.json", manifest)


def cmd_simulate(cfg: dict, out: Path):
    spec = GenSpec(
        n=int(cfg["n"]), d=int(cfg["d"]), s0=int(cfg["s0"]), signal_strength=float(cfg["signal"]),
        beta0=float(cfg["beta0"]), sigma_star=float(cfg["sigma"]), design=cfg["design"],
        rho=float(cfg["rho"]), c0=float(cfg["c0"]), seed=int(cfg["seed"]), shards=int(cfg["shards"]),
    )
    data, truth = generate(spec)
    if spec.shards == 1:
        io.write_dataset_csv(out / "data.csv", data)
    else:
        io.write_shards(out, data, c0=spec.c0)
    io.write_truth(out / "truth.json", truth, spec.c0, spec.s0)
    _finish(out, "simulate", cfg, spec.seed)


def _truth_and_c0(cfg):
    truth, c0 = None, 0.0
    if cfg.get("truth"):
        truth, c0 = io.read_truth(cfg["truth"])
    if cfg.get("c0") is not None:
        c0 = float(cfg["c0"])
    return truth, c0


def cmd_fit(cfg: dict, out: Path):
    if not cfg.get("data"):
        raise InvalidArgumentError("--data is required")
    truth, c0 = _truth_and_c0(cfg)
    dataset = io.read_dataset_csv(cfg["data"], c0=c0)
    payload = {"c0": c0}
    if cfg.get("cv") is not None:
        grid = _s_grid(cfg["cv"])
        base = _iht_config({**cfg, "s": grid[0]})
        best_s, table = cross_validate_s(dataset, grid, int(cfg["folds"]), base, seed=int(cfg["cv_seed"]))
        io.write_table_csv(out / "cv.csv", ["s", "mean_cv_nll", "se"], table)
        payload["cv_best_s"] = best_s
        config = replace(base, s=best_s)
    else:
        config = _iht_config(cfg)
    result = fit(dataset, config)
    payload.update(io.theta_payload(result.theta, c0))
    payload.update(
        s=config.s, converged=result.converged, stalled=result.stalled,
        iterations=result.iterations_run, final_nll=result.trace[-1].nll,
    )
    if truth is not None:
        payload["metrics"] = compute_metrics(result.theta, truth, c0=c0).to_dict()
    io.write_json(out / "result.json", payload)
    io.write_trace_csv(out / "trace.csv", result.trace)
    _finish(out, "fit", cfg, cfg.get("cv_seed"), result.wall_time)


def cmd_fit_dist(cfg: dict, out: Path):
    if not cfg.get("manifest"):
        raise InvalidArgumentError("--manifest is required")
    shards, c0 = io.read_shard_manifest(cfg["manifest"])
    truth = io.read_truth(cfg["truth"])[0] if cfg.get("truth") else None
    inner = _iht_config(cfg)
    sizes = [s.data.n for s in shards]
    rounds = cfg["rounds"]
    if rounds == "auto":
        rounds = recommended_rounds(min(sizes), sum(sizes))
    result, log = fit_distributed(shards, DistConfig(inner, int(rounds), cfg["init"]))
    payload = {"c0": c0, "machines": len(shards), "outer_rounds": int(rounds)}
    payload.update(io.theta_payload(result.theta, c0))
    payload.update(
        s=inner.s, converged=result.converged, stalled=result.stalled,
        iterations=result.iterations_run, final_nll=result.trace[-1].nll,
        comm=log.to_dict(),
        anchor_gaps=[r.anchor_gap for r in result.rounds],
    )
    if truth is not None:
        payload["metrics"] = compute_metrics(result.theta, truth, c0=c0).to_dict()
    io.write_json(out / "result.json", payload)
    io.write_trace_csv(out / "trace.csv", result.trace, with_round=True)
    _finish(out, "fit-dist", cfg, None, result.wall_time)


def _experiment_spec(cfg, n, machines=1):
    s0 = int(cfg["s0"])
    nonzero = [(j, float(cfg["signal"]) if j % 2 == 1 else -float(cfg["signal"])) for j in range(1, s0 + 1)]
    return GenSpec(
        n=n, d=int(cfg["d"]), s0=s0, beta_nonzero=nonzero, beta0=float(cfg["beta0"]),
        sigma_star=float(cfg["sigma"]), design=cfg["design"], rho=float(cfg["rho"]),
        seed=int(cfg["seed"]), shards=machines,
    )


def cmd_experiment(cfg: dict, out: Path):
    name = cfg.get("name")
    if name not in EXPERIMENTS:
        raise InvalidArgumentError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    threads = resolve_threads(cfg.get("threads"))
    reps = int(cfg["reps"])
    if name == "rate":
        n_grid = _int_list(cfg["n"] or "500,1000,2000")
        curve = rate_experiment(_experiment_spec(cfg, n_grid[0]), n_grid, reps,
                                _iht_config(cfg), threads=threads)
        rows = [(p.n, p.median_l2, p.iqr_l2, p.replications) for p in curve.points]
        io.write_table_csv(out / "rate.csv", ["n", "median_l2", "iqr_l2", "replications"], rows)
    elif name == "convergence":
        n = _int_list(cfg["n"] or "500")[0]
        config = _iht_config(cfg, trace_thetas=True)
        rows = []
        for r in range(reps):
            spec = replace(_experiment_spec(cfg, n), seed=int(cfg["seed"]) + r)
            data, _ = generate(spec)
            for t, err, ratio in convergence_diagnostics(fit(data, config), tol=config.tol):
                rows.append((spec.seed, t, err, ratio))
        io.write_table_csv(out / "convergence.csv", ["seed", "iter", "error_to_ref", "ratio"], rows)
    else:
        machines = int(cfg["M"])
        n = _int_list(cfg["n"] or str(200 * machines))[0]
        rows = dist_vs_pooled(_experiment_spec(cfg, n, machines), machines, reps, _iht_config(cfg),
                              rounds=cfg["rounds"], dist_init=cfg["dist_init"], threads=threads)
        header = ["seed", "rounds", "pooled_l2", "dist_l2", "ratio", "vectors_sent"]
        io.write_table_csv(out / "dist_vs_pooled.csv", header, [[r[k] for k in header] for r in rows])
    _finish(out, "experiment", cfg, int(cfg["seed"]))


COMMANDS = {
    "simulate": (SIMULATE_DEFAULTS, cmd_simulate),
    "fit": (FIT_DEFAULTS, cmd_fit),
    "fit-dist": (FIT_DIST_DEFAULTS, cmd_fit_dist),
    "experiment": (EXPERIMENT_DEFAULTS, cmd_experiment),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    out = Path(args.pop("out"))
    defaults, handler = COMMANDS[command]
    try:
        cfg = resolve(defaults, config_path, args)
        out.mkdir(parents=True, exist_ok=True)
        handler(cfg, out)
    except DivergenceError as exc:
        print(f"tobit-iht: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, FileNotFoundError) as exc:
        print(f"tobit-iht: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidArgumentError, TobitError, ValueError, OSError) as exc:
        print(f"tobit-iht: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())

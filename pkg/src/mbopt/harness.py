"""Experiment driver, score aggregation, and the command-line interface."""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import evo, milp, objectives
from .domain import CategoricalDomain
from .mbo import History, MboConfig, run_mbo, sample_initial
from .surrogate import TrainConfig

ALGORITHMS = ("nn_milp", "nn_regevo", "nn_conevo", "regevo", "conevo", "rejsample")


# -- metrics --------------------------------------------------------------


def best_reward_curve(history: History) -> np.ndarray:
    """Running maximum of the raw rewards, one entry per query."""
    return history.running_best()


def auc_score(curve: np.ndarray) -> float:
    """Area under the best-so-far curve (discrete sum over steps)."""
    return float(np.sum(np.asarray(curve, dtype=float)))


def normalized_scores(values: dict[str, float]) -> dict[str, float]:
    """Min-max normalize one metric across algorithms on one problem.

    All-equal values normalize to 1.0 for everyone; fewer than two
    algorithms is an error since the scale would be meaningless.
    """
    if len(values) < 2:
        raise ValueError("normalization needs at least two algorithms")
    lo = min(values.values())
    hi = max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def primal_gap(v: float, v_star: float) -> float:
    """|v - v*| / max(|v|, |v*|); 0 when both are zero, 1 on sign mismatch."""
    if v == 0.0 and v_star == 0.0:
        return 0.0
    if v * v_star < 0.0:
        return 1.0
    return abs(v - v_star) / max(abs(v), abs(v_star))


# -- experiment configuration ---------------------------------------------

_CONFIG_KEYS = {
    "algorithm", "problem", "budget", "init_count", "trials", "seed", "train",
    "inner", "evo", "time_limit", "gap_tol", "bound_mode", "backend", "out_dir",
    "workers", "samples_per_step", "name",
}

_DEFAULTS = {
    "budget": 1000, "init_count": 50, "trials": 20, "seed": 0, "train": {},
    "inner": {}, "evo": {}, "time_limit": 500.0, "gap_tol": 1e-6,
    "bound_mode": "lp", "backend": "highs", "workers": 1, "samples_per_step": 10000,
}


def resolve_config(cfg: dict) -> dict:
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("algorithm", "problem"):
        if key not in cfg:
            raise ValueError(f"config is missing required key {key!r}")
    if cfg["algorithm"] not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {cfg['algorithm']!r}; have {ALGORITHMS}")
    out = dict(_DEFAULTS)
    out.update(cfg)
    out["backend"] = os.environ.get("MBO_BACKEND", out["backend"])
    return out


def build_problem(spec: dict) -> tuple[objectives.Objective, evo.SubsetPairs | None]:
    """Instantiate the benchmark named by a problem spec dict."""
    kind = spec.get("kind")
    args = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "random_mlp":
        if "network" in args:  # "kind" is taken by the spec schema
            args["kind"] = args.pop("network")
        return objectives.make_random_mlp(**args), None
    if kind == "ising":
        return objectives.make_ising(**args), None
    if kind == "constrained_ising":
        return objectives.make_constrained_ising(**args)
    if kind == "grid":
        args["fn"] = args.pop("function")
        return objectives.discretize_grid_function(**args), None
    if kind == "tfbind":
        return objectives.load_tfbind(**args), None
    if kind == "bqp":
        inst = objectives.load_bqp(args.pop("path"))
        return inst.to_objective(**args), None
    raise ValueError(f"unknown problem kind {kind!r}")


def _trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _init_strategy(domain: CategoricalDomain, pairs):
    if pairs is not None:
        return lambda d, count, rng: evo.subset_init(pairs, d, count, rng)
    if domain.constraints:
        return "random_objective_milp"
    return "uniform_rejection"


def run_trial(cfg: dict, trial: int) -> History:
    """One full optimization run; deterministic given (cfg, trial)."""
    obj, pairs = build_problem(cfg["problem"])
    domain = obj.domain
    seed = _trial_seed(cfg["seed"], trial)
    backend = milp.get_backend(cfg["backend"])
    init = sample_initial(
        domain, cfg["init_count"], _init_strategy(domain, pairs), seed, backend=backend
    )
    mcfg = MboConfig(
        budget=cfg["budget"], init_count=cfg["init_count"],
        train=TrainConfig(**cfg["train"]), seed=seed, time_limit=cfg["time_limit"],
        gap_tol=cfg["gap_tol"], bound_mode=cfg["bound_mode"],
    )
    alg = cfg["algorithm"]
    if alg == "nn_milp":
        return run_mbo(obj, domain, mcfg, backend=backend, init_points=init)
    if alg == "nn_regevo":
        inner = evo.InnerEvoConfig(**{**asdict(evo.nn_regevo_inner()), **cfg["inner"]})
        return evo.run_nn_regevo(obj, domain, mcfg, inner, init_points=init)
    if alg == "nn_conevo":
        if pairs is None:
            raise ValueError("nn_conevo needs a problem with paired-subset structure")
        inner = evo.InnerEvoConfig(**{**asdict(evo.nn_conevo_inner()), **cfg["inner"]})
        return evo.run_nn_conevo(obj, domain, pairs, mcfg, inner, init_points=init)
    if alg == "regevo":
        ecfg = evo.EvoConfig(**{**asdict(evo.regevo_defaults()), **cfg["evo"]})
        return evo.run_regevo(obj, domain, cfg["budget"], ecfg, seed, init_points=init)
    if alg == "conevo":
        if pairs is None:
            raise ValueError("conevo needs a problem with paired-subset structure")
        ecfg = evo.EvoConfig(**{**asdict(evo.conevo_defaults()), **cfg["evo"]})
        return evo.run_conevo(obj, domain, pairs, cfg["budget"], ecfg, seed, init_points=init)
    if alg == "rejsample":
        sampler = None
        if pairs is not None:
            sampler = lambda d, count, rng: evo.sample_subset_equality_batch(pairs, d.n, count, rng)
        return evo.run_rejsample(obj, domain, mcfg, sampler, cfg["samples_per_step"],
                                 init_points=init)
    raise ValueError(f"unknown algorithm {alg!r}")


# -- result files ---------------------------------------------------------


def _atomic_write(path: Path, write_fn) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    def write(tmp):
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    _atomic_write(path, write)


def _pool_worker(cfg: dict, trial: int, out_dir: str) -> int:
    history = run_trial(cfg, trial)
    _atomic_write(Path(out_dir) / f"trial_{trial:03d}.csv", history.to_csv)
    return trial


def run_experiment(cfg: dict, out_dir=None) -> Path:
    """Run all trials of one (problem, algorithm) pair and write result files.

    Produces trial_XXX.csv per trial, timing.csv (per-step solve seconds for
    the post-initialization steps), scores.csv (per-trial final best and
    area-under-curve; normalized columns stay empty until ``score`` combines
    several runs), and manifest.json recording the resolved config and
    per-trial seeds.  Identical configs reproduce identical files.
    """
    cfg = resolve_config(cfg)
    out_dir = Path(out_dir or cfg.get("out_dir") or
                   Path(os.environ.get("MBO_OUT", "runs")) / _config_slug(cfg))
    out_dir.mkdir(parents=True, exist_ok=True)

    obj, _ = build_problem(cfg["problem"])
    trials = range(cfg["trials"])
    if cfg["workers"] > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            list(pool.map(_pool_worker, [cfg] * len(trials), trials, [str(out_dir)] * len(trials)))
    else:
        for k in trials:
            _pool_worker(cfg, k, str(out_dir))

    timing_rows, score_rows = [], []
    for k in trials:
        history = History.from_csv(out_dir / f"trial_{k:03d}.csv")
        for rec in history:
            if rec.status != "init":
                timing_rows.append([k, rec.step, repr(rec.solve_seconds), rec.status])
        curve = best_reward_curve(history)
        score_rows.append([obj.name, cfg["algorithm"], k, repr(float(curve[-1])),
                           repr(auc_score(curve)), "", ""])
    _write_rows(out_dir / "timing.csv", ["trial", "step", "solve_seconds", "status"], timing_rows)
    _write_rows(
        out_dir / "scores.csv",
        ["problem", "algorithm", "trial", "final_best", "auc", "normalized_final", "normalized_auc"],
        score_rows,
    )

    manifest = {
        "problem_name": obj.name,
        "config": {k: v for k, v in cfg.items() if k != "out_dir"},
        "config_sha256": _config_hash(cfg),
        "trial_seeds": [_trial_seed(cfg["seed"], k) for k in trials],
        "versions": _versions(),
    }

    def write_manifest(tmp):
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_write(out_dir / "manifest.json", write_manifest)
    return out_dir


def _config_slug(cfg: dict) -> str:
    return f"{cfg['problem'].get('kind', 'problem')}_{cfg['algorithm']}_{_config_hash(cfg)[:8]}"


def _config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "out_dir"}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _versions() -> dict:
    import scipy

    from . import __version__

    return {
        "package": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def load_run(run_dir) -> tuple[dict, list[History]]:
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "manifest.json") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"{run_dir} has no manifest.json; is it a run directory?") from None
    histories = []
    for k in range(manifest["config"]["trials"]):
        histories.append(History.from_csv(run_dir / f"trial_{k:03d}.csv"))
    return manifest, histories


# -- aggregation commands -------------------------------------------------


def score_runs(run_dirs) -> list[list]:
    """Combine runs of different algorithms on one problem into a score table."""
    per_alg: dict[str, dict[str, float]] = {}
    problems = set()
    for d in run_dirs:
        manifest, histories = load_run(d)
        alg = manifest["config"]["algorithm"]
        problems.add(manifest["problem_name"])
        finals = [float(best_reward_curve(h)[-1]) for h in histories]
        aucs = [auc_score(best_reward_curve(h)) for h in histories]
        per_alg[alg] = {"final": float(np.mean(finals)), "auc": float(np.mean(aucs))}
    if len(problems) > 1:
        raise ValueError(f"runs cover different problems: {sorted(problems)}")
    if len(per_alg) < 2:
        raise ValueError("scoring needs runs from at least two distinct algorithms")
    norm_final = normalized_scores({a: v["final"] for a, v in per_alg.items()})
    norm_auc = normalized_scores({a: v["auc"] for a, v in per_alg.items()})
    problem = problems.pop()
    return [
        [problem, alg, "", repr(v["final"]), repr(v["auc"]),
         repr(norm_final[alg]), repr(norm_auc[alg])]
        for alg, v in sorted(per_alg.items())
    ]


def gap_rows(run_dir, best_known) -> list[list]:
    manifest, histories = load_run(run_dir)
    if best_known == "from-instance":
        problem = manifest["config"]["problem"]
        if problem.get("kind") != "bqp":
            raise ValueError("--best-known from-instance needs a 'bqp' problem")
        inst = objectives.load_bqp(problem["path"])
        if inst.best_known is None:
            raise ValueError(f"{problem['path']} does not record a best-known value")
        v_star = inst.best_known
    else:
        v_star = float(best_known)
    rows = []
    gaps = []
    for k, h in enumerate(histories):
        final = float(best_reward_curve(h)[-1])
        g = primal_gap(final, v_star)
        gaps.append(g)
        rows.append([k, repr(final), repr(g)])
    rows.append(["mean", "", repr(float(np.mean(gaps)))])
    return rows


def curve_rows(run_dir) -> list[list]:
    _, histories = load_run(run_dir)
    curves = np.array([best_reward_curve(h) for h in histories])
    mean = curves.mean(axis=0)
    sd = curves.std(axis=0, ddof=1) if len(histories) > 1 else np.zeros(curves.shape[1])
    return [[t, repr(float(mean[t])), repr(float(sd[t]))] for t in range(curves.shape[1])]


# -- CLI ------------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="mbopt", description="Discrete model-based optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all trials of a JSON experiment config")
    run.add_argument("config", help="path to the experiment config (JSON)")
    run.add_argument("--out", default=None, help="output directory (overrides config/MBO_OUT)")

    score = sub.add_parser("score", help="combine runs of several algorithms into one table")
    score.add_argument("dirs", nargs="+", help="run directories to combine")
    score.add_argument("--out", default=None, help="write CSV here instead of stdout")

    gap = sub.add_parser("gap", help="primal gaps of final bests against a reference value")
    gap.add_argument("dir", help="run directory")
    gap.add_argument("--best-known", required=True,
                     help="reference value, or 'from-instance' to read it from the problem file")

    plot = sub.add_parser("plotdata", help="write mean/sd best-so-far curve for a run")
    plot.add_argument("dir", help="run directory")
    plot.add_argument("--out", default=None, help="output CSV (default: <dir>/curve.csv)")
    return p


def _emit(rows: list[list], header: list[str], out: str | None) -> None:
    if out:
        _write_rows(Path(out), header, rows)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return int(err.code or 0)

    try:
        if args.command == "run":
            with open(args.config) as fh:
                cfg = json.load(fh)
            out_dir = run_experiment(cfg, out_dir=args.out)
            print(out_dir)
        elif args.command == "score":
            rows = score_runs(args.dirs)
            _emit(rows, ["problem", "algorithm", "trial", "final_best", "auc",
                         "normalized_final", "normalized_auc"], args.out)
        elif args.command == "gap":
            rows = gap_rows(args.dir, args.best_known)
            _emit(rows, ["trial", "final_best", "primal_gap"], None)
        elif args.command == "plotdata":
            rows = curve_rows(args.dir)
            out = args.out or str(Path(args.dir) / "curve.csv")
            _emit(rows, ["step", "mean_best", "sd_best"], out)
            print(out)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

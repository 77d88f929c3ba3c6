"""Surrogate-guided search versus evolution on unconstrained benchmarks.

Covers the frozen random networks (dense and convolutional), the pairwise
coupling objective, discretized continuous test functions, and optionally a
protein-binding landscape file.  Each problem gets nn_milp, nn_regevo,
regevo, and rejsample runs; score tables print per problem.
"""

import argparse

from mbopt import harness

ALGORITHMS = ("nn_milp", "nn_regevo", "regevo", "rejsample")

PROBLEMS = {
    "fcc": {"kind": "random_mlp", "network": "fcc", "n": 25, "alphabet_size": 5},
    "cnn": {"kind": "random_mlp", "network": "cnn", "n": 25, "alphabet_size": 5},
    "ising": {"kind": "ising", "n": 50},
    "sphere": {"kind": "grid", "function": "sphere", "n": 10, "m": 11},
    "rastrigin": {"kind": "grid", "function": "rastrigin", "n": 10, "m": 11},
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problems", nargs="*", default=[], metavar="PROBLEM",
                    help=f"subset of {sorted(PROBLEMS)} (default: all)")
    ap.add_argument("--tfbind", default=None, help="affinity TSV to add as a problem")
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--init-count", type=int, default=50)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-epochs", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--desk", action="store_true",
                    help="desk scale: smaller domains, 200 queries, 5 trials, light training")
    args = ap.parse_args()

    problems = dict(PROBLEMS)
    if args.tfbind:
        problems["tfbind"] = {"kind": "tfbind", "path": args.tfbind}
    if args.desk:
        args.budget, args.trials = 200, 5
        for spec in problems.values():
            if "n" in spec:
                spec["n"] = min(spec["n"], 12)
    chosen = args.problems or sorted(problems)

    for name in chosen:
        spec = dict(problems[name])
        if spec["kind"] in ("random_mlp", "ising"):
            spec["seed"] = args.seed
        train = {"epochs": 120} if args.desk else {}
        if args.train_epochs:
            train = {"epochs": args.train_epochs}
        base = {
            "problem": spec, "budget": args.budget, "init_count": args.init_count,
            "trials": args.trials, "seed": args.seed, "workers": args.workers,
            "train": train,
        }
        dirs = []
        for alg in ALGORITHMS:
            path = harness.run_experiment(dict(base, algorithm=alg))
            print(f"{name}/{alg}: {path}")
            dirs.append(str(path))
        for row in harness.score_runs(dirs):
            print("\t".join(str(v) for v in row))


if __name__ == "__main__":
    main()

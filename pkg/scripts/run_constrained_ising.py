"""Four-way comparison on coupling objectives with paired-subset equalities.

Runs the exact-acquisition loop against both evolutionary baselines and
constrained rejection sampling on one seeded instance, then prints the
combined score table.  Full scale (1000 queries, 20 trials) takes hours on
a laptop; ``--desk`` shrinks it to a coffee break.
"""

import argparse
from pathlib import Path

from mbopt import harness

ALGORITHMS = ("nn_milp", "nn_conevo", "conevo", "rejsample")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50, help="number of binary variables")
    ap.add_argument("--k", type=int, default=None,
                    help="equality pairs (default n // 10, pair size 5)")
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--init-count", type=int, default=50)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-epochs", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="parent directory for run folders")
    ap.add_argument("--desk", action="store_true",
                    help="desk scale: n=40, k=4, 300 queries, 10 trials, light training")
    args = ap.parse_args()

    if args.desk:
        args.n, args.k, args.budget, args.trials = 40, 4, 300, 10
        train, inner, samples = {"epochs": 120}, {"total_budget": 600, "batch_size": 100}, 2000
    else:
        train, inner, samples = {}, {}, 10000
    if args.train_epochs:
        train = {"epochs": args.train_epochs}
    k = args.k if args.k is not None else args.n // 10

    base = {
        "problem": {"kind": "constrained_ising", "n": args.n, "k": k, "seed": args.seed},
        "budget": args.budget, "init_count": args.init_count,
        "trials": args.trials, "seed": args.seed,
        "train": train, "inner": inner, "samples_per_step": samples,
        "workers": args.workers,
    }
    dirs = []
    for alg in ALGORITHMS:
        cfg = dict(base, algorithm=alg)
        if args.out:
            cfg["out_dir"] = str(Path(args.out) / alg)
        path = harness.run_experiment(cfg)
        print(f"{alg}: {path}")
        dirs.append(str(path))

    rows = harness.score_runs(dirs)
    header = ["problem", "algorithm", "trial", "final_best", "auc",
              "normalized_final", "normalized_auc"]
    print("\t".join(header))
    for row in rows:
        print("\t".join(str(v) for v in row))


if __name__ == "__main__":
    main()

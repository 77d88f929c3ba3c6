"""Optimize a binary quadratic instance file and report primal gaps.

Instances are the JSON format produced by ``mbopt.objectives.save_bqp``;
if the file records a best-known objective value the final gap table uses
it, otherwise pass ``--best-known``.
"""

import argparse

from mbopt import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("instance", help="BQP instance JSON")
    ap.add_argument("--algorithm", default="nn_milp",
                    choices=("nn_milp", "nn_regevo", "regevo", "rejsample"))
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--init-count", type=int, default=50)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-epochs", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--best-known", default="from-instance",
                    help="reference value for the gap (default: from the file)")
    args = ap.parse_args()

    cfg = {
        "problem": {"kind": "bqp", "path": args.instance},
        "algorithm": args.algorithm, "budget": args.budget,
        "init_count": args.init_count, "trials": args.trials,
        "seed": args.seed, "workers": args.workers,
        "train": {"epochs": args.train_epochs} if args.train_epochs else {},
    }
    path = harness.run_experiment(cfg)
    print(f"run: {path}")
    print("trial\tfinal_best\tprimal_gap")
    for row in harness.gap_rows(path, args.best_known):
        print("\t".join(str(v) for v in row))


if __name__ == "__main__":
    main()

"""Search a tabulated cell space under a simulated training-time budget.

Needs a lookup table mapping canonical cell keys to recorded validation
accuracy, test accuracy, and training seconds (see convert_nasbench.py).
Prints the incumbent trajectory as (cumulative seconds, test accuracy).
"""

import argparse

from mbopt.nas import CellSpec, NasTable, run_nas_experiment
from mbopt.surrogate import TrainConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("table", help="tab-separated cell lookup table")
    ap.add_argument("--algorithm", default="nn_milp", choices=("nn_milp", "random"))
    ap.add_argument("--time-budget", type=float, default=5e6,
                    help="simulated training seconds to spend")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--init-count", type=int, default=50)
    ap.add_argument("--nodes", type=int, default=7)
    ap.add_argument("--edges", type=int, default=9)
    ap.add_argument("--symmetry-breaking", action="store_true")
    ap.add_argument("--epochs", type=int, default=None,
                    help="surrogate training epochs (default: shipped TrainConfig)")
    args = ap.parse_args()

    spec = CellSpec(max_nodes=args.nodes, max_edges=args.edges,
                    symmetry_breaking=args.symmetry_breaking)
    table = NasTable.load(args.table)
    train = TrainConfig(epochs=args.epochs) if args.epochs else None
    steps = run_nas_experiment(spec, table, algorithm=args.algorithm,
                               time_budget=args.time_budget, seed=args.seed,
                               init_count=args.init_count, train=train)
    print("step\tcum_seconds\tbest_val\tbest_test\tkey")
    for s in steps:
        print(f"{s.step}\t{s.cum_seconds:.0f}\t{s.best_val:.4f}\t{s.best_test:.4f}\t{s.key}")


if __name__ == "__main__":
    main()

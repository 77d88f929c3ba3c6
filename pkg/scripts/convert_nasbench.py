"""Convert an exported cell-benchmark dump into the lookup-table format.

The expected input is a JSON array (or one JSON object per line) exported
from the public tabular benchmark, one entry per architecture::

    {"adjacency": [[0,1,...],...],      # upper-triangular 0/1 matrix
     "ops": ["input", "conv3x3-bn-relu", ..., "output"],
     "val": [v1, v2, v3],               # three training replicates
     "test": [t1, t2, t3],
     "seconds": [s1, s2, s3]}

Output is the tab-separated table run_nas.py consumes, keyed by the
canonical cell key so null-padding and interior relabelings collapse.
"""

import argparse
import json
import sys

from mbopt.nas import Cell, NasRecord, NasTable, canonical_key

OP_NAMES = {
    "conv1x1-bn-relu": "conv1x1",
    "conv3x3-bn-relu": "conv3x3",
    "maxpool3x3": "maxpool3x3",
    "conv1x1": "conv1x1",
    "conv3x3": "conv3x3",
}


def _iter_entries(path):
    with open(path) as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "[":
            yield from json.load(fh)
        else:
            for line in fh:
                if line.strip():
                    yield json.loads(line)


def convert(entries) -> tuple[NasTable, int]:
    table: dict[str, NasRecord] = {}
    dropped = 0
    for e in entries:
        ops_raw = e["ops"]
        if ops_raw[0] != "input" or ops_raw[-1] != "output":
            raise ValueError(f"ops must start with input and end with output: {ops_raw!r}")
        ops = tuple(OP_NAMES[o] for o in ops_raw[1:-1])
        adj = e["adjacency"]
        edges = tuple(
            (i, j) for i, row in enumerate(adj) for j, v in enumerate(row) if v
        )
        if any(j <= i for i, j in edges):
            raise ValueError(f"adjacency is not upper-triangular: {adj!r}")
        key = canonical_key(Cell(len(ops_raw), edges, ops))
        rec = NasRecord(tuple(e["val"]), tuple(e["test"]), tuple(e["seconds"]))
        if key in table:
            dropped += 1  # isomorphic duplicate; first record wins
            continue
        table[key] = rec
    return NasTable(table), dropped


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dump", help="exported JSON benchmark dump")
    ap.add_argument("out", help="table file to write")
    args = ap.parse_args()

    table, dropped = convert(_iter_entries(args.dump))
    table.save(args.out)
    print(f"{len(table)} cells -> {args.out}", file=sys.stderr)
    if dropped:
        print(f"dropped {dropped} duplicate cells (same canonical key)", file=sys.stderr)


if __name__ == "__main__":
    main()

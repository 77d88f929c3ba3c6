"""Cell search spaces as constrained domains, plus tabular lookup experiments."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import milp
from .domain import CategoricalDomain, LinearConstraint, Point
from .mbo import History, MboConfig, propose, sample_initial, step_seed
from .surrogate import Dataset, TrainConfig, fit

NULL_OP = "null"


@dataclass(frozen=True)
class CellSpec:
    """Search space shape: a DAG on ``max_nodes`` ordered nodes.

    Node 0 is the input, node ``max_nodes - 1`` the output; interior nodes
    carry an operation or ``null`` (absent).  Edges only go from lower to
    higher index, at most ``max_edges`` in total.  ``symmetry_breaking``
    adds rows forcing null interiors to occupy the highest indices, removing
    relabelings of the same cell.
    """

    max_nodes: int = 7
    max_edges: int = 9
    ops: tuple[str, ...] = ("conv1x1", "conv3x3", "maxpool3x3")
    symmetry_breaking: bool = False

    def __post_init__(self):
        if self.max_nodes < 2:
            raise ValueError("need at least input and output nodes")
        if NULL_OP in self.ops:
            raise ValueError(f"{NULL_OP!r} is reserved and cannot be a named op")
        if self.max_edges < 1:
            raise ValueError("max_edges must be >= 1")

    @property
    def interior(self) -> range:
        return range(1, self.max_nodes - 1)

    @property
    def edge_list(self) -> list[tuple[int, int]]:
        V = self.max_nodes
        return [(i, j) for i in range(V) for j in range(i + 1, V)]

    @property
    def op_alphabet(self) -> tuple[str, ...]:
        return (*self.ops, NULL_OP)


@dataclass(frozen=True)
class Cell:
    """A concrete architecture: chosen edges plus one op per interior node."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    ops: tuple[str, ...]  # interior nodes 1..num_nodes-2, in order

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted((int(i), int(j)) for i, j in self.edges)))
        object.__setattr__(self, "ops", tuple(self.ops))
        if len(self.ops) != max(self.num_nodes - 2, 0):
            raise ValueError(
                f"{len(self.ops)} ops for {self.num_nodes} nodes (need {self.num_nodes - 2})"
            )


def build_nas_domain(spec: CellSpec) -> CategoricalDomain:
    """Edges as binary variables, ops as categoricals, validity as rows.

    Variable order: all potential edges in lexicographic order, then the
    interior node ops.  The rows require: at most ``max_edges`` edges; no
    edge touches a null node; the input has an outgoing edge and the output
    an incoming one; every non-null interior node has an edge from some
    lower node and an edge to some higher node.  Together with the ordered
    edge direction this is equivalent to every non-null node lying on an
    input-to-output path.
    """
    V = spec.max_nodes
    edges = spec.edge_list
    e_ix = {e: k for k, e in enumerate(edges)}
    n_edge = len(edges)
    null_j = len(spec.ops)  # index of the null symbol in the op alphabet

    def op_var(node: int) -> int:
        return n_edge + (node - 1)

    alphabets: list[tuple] = [(0, 1)] * n_edge + [spec.op_alphabet] * len(spec.interior)
    rows: list[LinearConstraint] = []

    rows.append(
        LinearConstraint(tuple((e_ix[e], 1, 1) for e in edges), "<=", spec.max_edges)
    )
    for node in spec.interior:
        zn = (op_var(node), null_j)
        for e in edges:
            if node in e:
                rows.append(LinearConstraint(((e_ix[e], 1, 1), (*zn, 1)), "<=", 1))
    rows.append(
        LinearConstraint(tuple((e_ix[(0, j)], 1, 1) for j in range(1, V)), ">=", 1)
    )
    rows.append(
        LinearConstraint(tuple((e_ix[(i, V - 1)], 1, 1) for i in range(V - 1)), ">=", 1)
    )
    for node in spec.interior:
        zn = (op_var(node), null_j)
        incoming = tuple((e_ix[(i, node)], 1, 1) for i in range(node))
        outgoing = tuple((e_ix[(node, j)], 1, 1) for j in range(node + 1, V))
        rows.append(LinearConstraint((*incoming, (*zn, 1)), ">=", 1))
        rows.append(LinearConstraint((*outgoing, (*zn, 1)), ">=", 1))
    if spec.symmetry_breaking:
        for node in spec.interior[:-1]:
            rows.append(
                LinearConstraint(
                    ((op_var(node), null_j, 1), (op_var(node + 1), null_j, -1)), "<=", 0
                )
            )
    return CategoricalDomain(alphabets, rows)


def cell_from_point(p: Point, spec: CellSpec) -> Cell:
    edges = spec.edge_list
    chosen = tuple(e for k, e in enumerate(edges) if p[k] == 1)
    ops = tuple(p[len(edges) :])
    return Cell(spec.max_nodes, chosen, ops)


def point_from_cell(cell: Cell, spec: CellSpec) -> Point:
    if cell.num_nodes != spec.max_nodes:
        raise ValueError(f"cell has {cell.num_nodes} nodes, spec expects {spec.max_nodes}")
    edge_set = set(cell.edges)
    bits = tuple(1 if e in edge_set else 0 for e in spec.edge_list)
    return (*bits, *cell.ops)


def is_valid_cell(cell: Cell, spec: CellSpec) -> bool:
    """Graph-based validity check, independent of the linear rows.

    A cell is valid iff its edges fit the budget, touch no null node, and the
    directed graph puts input, output, and every non-null interior node on a
    common input-to-output route (forward- and backward-reachability).
    """
    V = cell.num_nodes
    if V != spec.max_nodes or len(cell.edges) != len(set(cell.edges)):
        return False
    for op in cell.ops:
        if op != NULL_OP and op not in spec.ops:
            return False
    if len(cell.edges) > spec.max_edges:
        return False
    null_nodes = {node for node, op in zip(spec.interior, cell.ops) if op == NULL_OP}
    adj: list[list[int]] = [[] for _ in range(V)]
    radj: list[list[int]] = [[] for _ in range(V)]
    for i, j in cell.edges:
        if not (0 <= i < j < V):
            return False
        if i in null_nodes or j in null_nodes:
            return False
        adj[i].append(j)
        radj[j].append(i)

    def reach(start: int, nbrs: list[list[int]]) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            for other in nbrs[stack.pop()]:
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        return seen

    fwd = reach(0, adj)
    bwd = reach(V - 1, radj)
    if V - 1 not in fwd:
        return False
    for node in spec.interior:
        if node not in null_nodes and (node not in fwd or node not in bwd):
            return False
    return True


def canonical_key(cell: Cell) -> str:
    """Stable identity after dropping null nodes and compacting indices.

    Cells that differ only in which interior slots hold the nulls map to the
    same key, so lookups are insensitive to the relabelings that the
    symmetry-breaking rows remove.
    """
    V = cell.num_nodes
    ops_by_node = dict(zip(range(1, V - 1), cell.ops))
    keep = [0] + [n for n in range(1, V - 1) if ops_by_node[n] != NULL_OP] + [V - 1]
    relabel = {old: new for new, old in enumerate(keep)}
    edges = sorted(
        (relabel[i], relabel[j]) for i, j in cell.edges if i in relabel and j in relabel
    )
    ops = [ops_by_node[n] for n in keep[1:-1]]
    return f"V{len(keep)}|" + ",".join(f"{i}-{j}" for i, j in edges) + "|" + ",".join(ops)


# -- tabulated benchmark --------------------------------------------------


@dataclass(frozen=True)
class NasRecord:
    """Three independent training replicates of one architecture."""

    val: tuple[float, float, float]
    test: tuple[float, float, float]
    seconds: tuple[float, float, float]


class NasTable:
    """canonical key -> NasRecord, loaded from a tab-separated file."""

    def __init__(self, entries: dict[str, NasRecord]):
        self.entries = dict(entries)

    def __len__(self):
        return len(self.entries)

    def lookup(self, key: str) -> NasRecord:
        try:
            return self.entries[key]
        except KeyError:
            raise ValueError(f"architecture {key!r} is not in the table") from None

    @classmethod
    def load(cls, path) -> "NasTable":
        entries = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
                try:
                    cols = [tuple(float(v) for v in p.split(",")) for p in parts[1:]]
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric metric") from None
                if any(len(c) != 3 for c in cols):
                    raise ValueError(f"{path}:{lineno}: each metric needs 3 comma-separated values")
                entries[parts[0]] = NasRecord(*cols)
        return cls(entries)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for key, rec in self.entries.items():
                cols = ["%r,%r,%r" % tuple(c) for c in (rec.val, rec.test, rec.seconds)]
                fh.write("\t".join([key, *cols]) + "\n")


@dataclass(frozen=True)
class NasStep:
    step: int
    point: Point
    key: str
    val: float
    test: float
    train_seconds: float
    cum_seconds: float
    best_val: float
    best_test: float


def sample_valid_cells(
    spec: CellSpec, count: int, rng: np.random.Generator, exclude: set[Point] = frozenset(),
    max_draws: int = 200_000, domain: CategoricalDomain | None = None,
) -> list[Point]:
    """Distinct valid cells by rejection from the unconstrained product."""
    domain = domain if domain is not None else build_nas_domain(spec)
    out: list[Point] = []
    seen = set(exclude)
    for _ in range(max_draws):
        p = domain.sample_point(rng)
        if p in seen:
            continue
        if is_valid_cell(cell_from_point(p, spec), spec):
            seen.add(p)
            out.append(p)
            if len(out) == count:
                return out
    raise ValueError(f"found only {len(out)}/{count} valid cells in {max_draws} draws")


def run_nas_experiment(
    spec: CellSpec,
    table: NasTable,
    algorithm: str = "nn_milp",
    time_budget: float = 5e6,
    seed: int = 0,
    init_count: int = 50,
    train: TrainConfig | None = None,
    time_limit: float = 500.0,
    backend=None,
    max_queries: int = 10_000,
) -> list[NasStep]:
    """Search the cell space under a simulated training-time budget.

    Each query draws one of the three stored replicates uniformly; its
    validation accuracy is the reward, and its training seconds accrue
    against ``time_budget`` (initialization queries included).  The run
    stops after the query whose cost pushes the total past the budget.
    ``best_test`` reports the mean test accuracy of the cell with the best
    sampled validation accuracy so far.
    """
    if algorithm not in ("nn_milp", "random"):
        raise ValueError(f"unknown algorithm {algorithm!r} (expected 'nn_milp' or 'random')")
    train = train or TrainConfig()
    domain = build_nas_domain(spec)
    backend = backend or milp.default_backend()
    rng = np.random.default_rng([seed, 0xA5])
    cfg = MboConfig(budget=max_queries, init_count=init_count, train=train, seed=seed,
                    time_limit=time_limit)

    steps: list[NasStep] = []
    history = History()
    cum = 0.0
    best_val = -np.inf
    best_test = float("nan")

    def query(point: Point, status: str) -> bool:
        nonlocal cum, best_val, best_test
        cell = cell_from_point(point, spec)
        key = canonical_key(cell)
        rec = table.lookup(key)
        r = int(rng.integers(3))
        val, test, secs = rec.val[r], rec.test[r], rec.seconds[r]
        cum += secs
        if val > best_val:
            best_val = val
            best_test = float(np.mean(rec.test))
        history.append(point, val, 0.0, status)
        steps.append(
            NasStep(len(steps), point, key, val, test, secs, cum, best_val, best_test)
        )
        return cum <= time_budget

    init = sample_initial(domain, init_count, "random_objective_milp", seed, backend=backend)
    for p in init:
        if not query(p, "init"):
            return steps
    for t in range(len(history), max_queries):
        if algorithm == "nn_milp":
            tcfg = replace(train, seed=step_seed(seed, t))
            net, _ = fit(Dataset(history.points, history.rewards), tcfg, domain)
            prop = propose(net, domain, history, cfg, backend=backend,
                           rng=np.random.default_rng([seed, t, 0x5EED]))
            point = prop.point
            status = prop.status
        else:
            point = sample_valid_cells(spec, 1, rng, exclude=set(history.points), domain=domain)[0]
            status = "random"
        if not query(point, status):
            break
    return steps

"""Benchmark objectives: random networks, pairwise couplings, grids, data tables."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.stats.qmc

from .domain import CategoricalDomain, LinearConstraint, Point, binary_domain
from .evo import SubsetPairs
from .surrogate import MLPSurrogate, init_network


@dataclass
class Objective:
    """A black-box reward function over a categorical domain (maximized)."""

    fn: Callable[[Point], float]
    domain: CategoricalDomain
    name: str
    meta: dict = field(default_factory=dict)

    def __call__(self, p: Point) -> float:
        return float(self.fn(p))

    @property
    def optimum(self) -> float | None:
        return self.meta.get("optimum")


# -- randomly initialized networks as objectives --------------------------


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _conv1d_same(X: np.ndarray, K: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1-D convolution with zero 'same' padding.  X: (n, cin), K: (cout, k, cin)."""
    k = K.shape[1]
    pad = k // 2
    Xp = np.zeros((X.shape[0] + 2 * pad, X.shape[1]))
    Xp[pad : pad + X.shape[0]] = X
    out = np.zeros((X.shape[0], K.shape[0]))
    for dt in range(k):
        out += Xp[dt : dt + X.shape[0]] @ K[:, dt, :].T
    return out + b


def make_random_mlp(kind: str = "fcc", n: int = 25, alphabet_size: int = 5, seed: int = 0) -> Objective:
    """A frozen randomly initialized network scoring one-hot encodings.

    ``fcc`` is two dense ReLU layers of 128 units; ``cnn`` is two width-13,
    stride-1 same-padded convolutions of 64 channels over the (position,
    symbol) grid, flattened into a linear readout.  Weights are
    Glorot-uniform with zero biases, drawn deterministically from ``seed``.
    """
    domain = CategoricalDomain((tuple(range(alphabet_size)),) * n)
    rng = np.random.default_rng(seed)
    if kind == "fcc":
        net = init_network(domain.width, (128, 128), rng)

        def fn(p: Point) -> float:
            return float(net.forward(domain.encode(p).bits))

    elif kind == "cnn":
        A = alphabet_size
        K1 = _glorot(rng, (64, 13, A), 13 * A, 13 * 64)
        b1 = np.zeros(64)
        K2 = _glorot(rng, (64, 13, 64), 13 * 64, 13 * 64)
        b2 = np.zeros(64)
        W = _glorot(rng, (1, n * 64), n * 64, 1)
        b3 = np.zeros(1)

        def fn(p: Point) -> float:
            X = domain.encode(p).bits.reshape(n, A).astype(float)
            h = np.maximum(_conv1d_same(X, K1, b1), 0.0)
            h = np.maximum(_conv1d_same(h, K2, b2), 0.0)
            return float(W[0] @ h.reshape(-1) + b3[0])

    else:
        raise ValueError(f"unknown random-network kind {kind!r} (expected 'fcc' or 'cnn')")
    return Objective(fn, domain, f"random_{kind}_n{n}a{alphabet_size}_s{seed}",
                     {"seed": seed, "kind": kind})


# -- pairwise binary couplings --------------------------------------------


def _coupling_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """Block upper-triangular (2n, 2n) matrix of i.i.d. normal edge tables."""
    Q = np.zeros((2 * n, 2 * n))
    for u in range(n):
        for v in range(u + 1, n):
            Q[2 * u : 2 * u + 2, 2 * v : 2 * v + 2] = rng.standard_normal((2, 2))
    return Q


def make_ising(n: int, seed: int = 0, constraints: Sequence[LinearConstraint] = ()) -> Objective:
    """Sum of per-edge 2x2 coupling tables over all variable pairs.

    Every pair (u, v), u < v, carries an i.i.d. standard normal table
    indexed by the two binary values; the reward is the sum of the selected
    entries.  Evaluation is the quadratic form of the one-hot encoding.
    """
    domain = binary_domain(n, constraints)
    rng = np.random.default_rng(seed)
    Q = _coupling_matrix(n, rng)

    def fn(p: Point) -> float:
        z = domain.encode(p).bits.astype(float)
        return float(z @ Q @ z)

    return Objective(fn, domain, f"ising_n{n}_s{seed}", {"seed": seed})


def subset_equality_constraints(
    n: int, k: int, seed: int = 0
) -> tuple[SubsetPairs, tuple[LinearConstraint, ...]]:
    """k disjoint pairs of size-(n // 2k) index sets with equal-ones rows."""
    s = n // (2 * k)
    if s < 1:
        raise ValueError(f"n={n} is too small for k={k} pairs")
    perm = np.random.default_rng(seed).permutation(n)
    pairs = []
    for i in range(k):
        left = tuple(sorted(int(x) for x in perm[2 * i * s : (2 * i + 1) * s]))
        right = tuple(sorted(int(x) for x in perm[(2 * i + 1) * s : (2 * i + 2) * s]))
        pairs.append((left, right))
    sp = SubsetPairs(tuple(pairs))
    return sp, sp.to_constraints()


def make_constrained_ising(n: int, k: int, seed: int = 0) -> tuple[Objective, SubsetPairs]:
    """Coupling objective restricted by k paired-subset equalities."""
    ss = np.random.SeedSequence(seed).spawn(2)
    pairs, rows = subset_equality_constraints(n, k, int(ss[0].generate_state(1)[0]))
    obj = make_ising(n, int(ss[1].generate_state(1)[0]), rows)
    obj.name = f"ising_n{n}k{k}_s{seed}"
    obj.meta["pairs"] = pairs
    return obj, pairs


# -- continuous test functions on a grid ----------------------------------


def bbob_sphere(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x) ** 2))


def bbob_ellipsoid(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    expo = 6.0 * np.arange(n) / max(n - 1, 1)
    return float(np.sum(10.0**expo * x**2))


GRID_FUNCTIONS: dict[str, Callable] = {"sphere": bbob_sphere, "ellipsoid": bbob_ellipsoid}


def discretize_grid_function(
    fn: Callable | str, n: int, m: int = 10, name: str | None = None
) -> Objective:
    """Restrict a function on [-5, 5]^n to an m-point per-axis grid.

    The grid value nearest zero (positive on ties) is overwritten with an
    exact 0 so the unconstrained optimum of centered functions stays on the
    grid.  Rewards are the negated function values divided by the median
    absolute deviation over 30 fixed low-discrepancy probe points, making
    scales comparable across functions; for functions with f(0) = 0 the best
    reward is exactly 0.
    """
    if isinstance(fn, str):
        if fn not in GRID_FUNCTIONS:
            raise ValueError(f"unknown grid function {fn!r} (have {sorted(GRID_FUNCTIONS)})")
        name = name or fn
        fn = GRID_FUNCTIONS[fn]
    if m < 2:
        raise ValueError("grid needs at least 2 points per axis")
    grid = [-5.0 + 10.0 * j / (m - 1) for j in range(m)]
    near = min(range(m), key=lambda j: (abs(grid[j]), -grid[j]))
    grid[near] = 0.0
    domain = CategoricalDomain((tuple(grid),) * n)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # qmc balance warnings for non-power-of-2 draws
        U = scipy.stats.qmc.Halton(d=n, scramble=False).random(30)
    probes = -5.0 + 10.0 * U
    vals = np.array([fn(row) for row in probes])
    mad = float(np.median(np.abs(vals - np.median(vals))))
    if mad == 0.0:
        mad = 1.0

    def reward(p: Point) -> float:
        return -fn(np.asarray(p, dtype=float)) / mad

    zero_on_grid = any(v == 0.0 for v in grid)
    meta = {"mad": mad, "m": m}
    if zero_on_grid and fn(np.zeros(n)) == 0.0:
        meta["optimum"] = 0.0
    return Objective(reward, domain, f"{name or getattr(fn, '__name__', 'grid')}_n{n}m{m}", meta)


# -- tabulated sequence data ----------------------------------------------


def load_tfbind(path, name: str | None = None) -> Objective:
    """Sequence/score table, tab separated, scores min-max normalized to [0, 1].

    Duplicate sequences keep the last row (a warning reports the count).  A
    first line whose second field is not numeric is treated as a header.
    """
    table: dict[tuple, float] = {}
    dupes = 0
    length = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
            seq, score = parts
            try:
                y = float(score)
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric score {score!r}") from None
            if length is None:
                length = len(seq)
            elif len(seq) != length:
                raise ValueError(
                    f"{path}:{lineno}: sequence length {len(seq)} != {length} seen earlier"
                )
            key = tuple(seq)
            if key in table:
                dupes += 1
            table[key] = y
    if not table:
        raise ValueError(f"{path}: no data rows")
    if dupes:
        warnings.warn(f"{path}: {dupes} duplicate sequences, kept the last occurrence")

    alphabet = tuple(sorted({c for seq in table for c in seq}))
    domain = CategoricalDomain((alphabet,) * length)
    lo = min(table.values())
    hi = max(table.values())
    span = hi - lo if hi > lo else 1.0
    scores = {k: (v - lo) / span for k, v in table.items()}

    def fn(p: Point) -> float:
        try:
            return scores[tuple(p)]
        except KeyError:
            raise ValueError(f"sequence {''.join(map(str, p))!r} is not in the table") from None

    meta = {"rows": len(table), "duplicates": dupes, "optimum": 1.0 if hi > lo else None}
    return Objective(fn, domain, name or "tfbind", meta)


# -- binary quadratic programs --------------------------------------------


@dataclass(frozen=True)
class BqpInstance:
    """max x'Qx + c'x over binary x subject to linear one-hot rows.

    ``quad`` triples (i, j, coef) each contribute coef * x_i * x_j once;
    ``linear`` pairs (i, coef) contribute coef * x_i.
    """

    n: int
    quad: tuple[tuple[int, int, float], ...]
    linear: tuple[tuple[int, float], ...] = ()
    constraints: tuple[LinearConstraint, ...] = ()
    best_known: float | None = None

    def __post_init__(self):
        for i, j, _ in self.quad:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"quadratic term ({i},{j}) out of range for n={self.n}")
        for i, _ in self.linear:
            if not (0 <= i < self.n):
                raise ValueError(f"linear term {i} out of range for n={self.n}")

    def evaluate(self, x: Sequence[int]) -> float:
        x = np.asarray(x)
        out = sum(c * x[i] * x[j] for i, j, c in self.quad)
        out += sum(c * x[i] for i, c in self.linear)
        return float(out)

    def domain(self) -> CategoricalDomain:
        return binary_domain(self.n, self.constraints)

    def to_objective(self, name: str = "bqp") -> Objective:
        meta = {"optimum": self.best_known} if self.best_known is not None else {}
        return Objective(lambda p: self.evaluate(p), self.domain(), name, meta)


def load_bqp(path) -> BqpInstance:
    with open(path) as fh:
        d = json.load(fh)
    try:
        cons = tuple(
            LinearConstraint(tuple((i, j, c) for i, j, c in row["terms"]), row["sense"], row["rhs"])
            for row in d.get("constraints", [])
        )
        return BqpInstance(
            n=int(d["n"]),
            quad=tuple((int(i), int(j), float(c)) for i, j, c in d.get("Q", [])),
            linear=tuple((int(i), float(c)) for i, c in d.get("c", [])),
            constraints=cons,
            best_known=None if d.get("best_known") is None else float(d["best_known"]),
        )
    except (KeyError, TypeError) as err:
        raise ValueError(f"{path}: malformed instance ({err})") from None


def save_bqp(inst: BqpInstance, path) -> None:
    d = {
        "n": inst.n,
        "Q": [[i, j, c] for i, j, c in inst.quad],
        "c": [[i, c] for i, c in inst.linear],
        "constraints": [
            {"terms": [[i, j, float(c)] for i, j, c in row.terms], "sense": row.sense,
             "rhs": float(row.rhs)}
            for row in inst.constraints
        ],
        "best_known": inst.best_known,
    }
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2)
        fh.write("\n")

"""The surrogate/solve/query loop and its acquisition model builder."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import milp
from .domain import CategoricalDomain, EncodedPoint, Point
from .netencode import compute_bounds, encode_network
from .surrogate import Dataset, MLPSurrogate, RewardScaler, TrainConfig, fit


class DomainExhausted(Exception):
    """Raised when every feasible point has already been proposed."""


@dataclass(frozen=True)
class MboConfig:
    """Settings shared by all model-based loop variants."""

    budget: int = 1000
    init_count: int = 50
    init_strategy: str = "uniform_rejection"
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    time_limit: float = 500.0
    gap_tol: float = 1e-6
    bound_mode: str = "lp"

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not (0 < self.init_count <= self.budget):
            raise ValueError("init_count must be in 1..budget")
        if self.bound_mode not in ("lp", "interval"):
            raise ValueError(f"bound_mode must be 'lp' or 'interval', got {self.bound_mode!r}")


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    point: Point
    reward: float
    solve_seconds: float
    status: str


@dataclass
class History:
    """Query trajectory: every evaluated point with its reward and solve info."""

    records: list[HistoryRecord] = field(default_factory=list)

    def append(self, point: Point, reward: float, seconds: float, status: str) -> HistoryRecord:
        rec = HistoryRecord(len(self.records), tuple(point), float(reward), float(seconds), status)
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def points(self) -> list[Point]:
        return [r.point for r in self.records]

    @property
    def rewards(self) -> list[float]:
        return [r.reward for r in self.records]

    def best_reward(self) -> float:
        return max(self.rewards)

    def best_point(self) -> Point:
        return max(self.records, key=lambda r: r.reward).point

    def running_best(self) -> np.ndarray:
        return np.maximum.accumulate(np.array(self.rewards))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "point", "reward", "solve_seconds", "status"])
            for r in self.records:
                w.writerow([r.step, json.dumps(list(r.point)), repr(r.reward), repr(r.solve_seconds), r.status])

    @classmethod
    def from_csv(cls, path) -> "History":
        h = cls()
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header != ["step", "point", "reward", "solve_seconds", "status"]:
                raise ValueError(f"{path}: unexpected history header {header!r}")
            for row in rows:
                h.append(tuple(json.loads(row[1])), float(row[2]), float(row[3]), row[4])
        return h


def dataset_from_history(history: History) -> Dataset:
    return Dataset([r.point for r in history], [r.reward for r in history])


# -- no-good rows ---------------------------------------------------------


def no_good_row(bits: np.ndarray, names: Sequence[str], onehot: bool = True) -> milp.Constraint:
    """Row excluding one visited 0/1 assignment.

    Requires at least ``rhs`` bits to differ from the visited vector, where
    ``rhs`` is 2 for one-hot encodings (bit flips come in pairs there) and 1
    for arbitrary binary vectors.  Written over the raw variables::

        sum_{bits_k=0} v_k - sum_{bits_k=1} v_k >= rhs - |ones|
    """
    bits = np.asarray(bits)
    if len(bits) != len(names):
        raise ValueError(f"{len(bits)} bits for {len(names)} variables")
    rhs = 2.0 if onehot else 1.0
    terms = tuple((n, 1.0 if bits[k] == 0 else -1.0) for k, n in enumerate(names))
    return milp.Constraint(terms, ">=", rhs - float(np.sum(bits)))


def no_good_for_point(domain: CategoricalDomain, p: Point) -> milp.Constraint:
    names = [milp.z_name(i, j) for i, j in domain.bit_pairs()]
    return no_good_row(domain.encode(p).bits, names, onehot=True)


# -- acquisition model ----------------------------------------------------


def build_acquisition(
    net: MLPSurrogate,
    domain: CategoricalDomain,
    visited: Iterable[EncodedPoint] = (),
    bound_mode: str = "lp",
    bounds=None,
) -> milp.MilpModel:
    """Domain rows + one no-good per visited point + the network's big-M rows.

    The objective maximizes the network output, i.e. the surrogate's
    prediction in scaled units.
    """
    model = milp.build_domain_model(domain)
    names = [n for g in model.onehot_groups for n in g]
    for e in visited:
        row = no_good_row(e.bits, names, onehot=True)
        model.add_constraint(row.terms, row.sense, row.rhs)
    if bounds is None:
        bounds = compute_bounds(net, domain, bound_mode)
    encode_network(model, net, bounds)
    model.set_objective({"out": 1.0})
    return model


@dataclass
class Proposal:
    point: Point
    result: milp.SolveResult
    fallback: bool = False

    @property
    def status(self) -> str:
        return f"{self.result.status}:fallback" if self.fallback else self.result.status


def random_unvisited(
    domain: CategoricalDomain,
    visited: set[Point],
    rng: np.random.Generator,
    max_draws: int = 10_000,
) -> Point:
    """Uniform-ish feasible point not yet visited; enumerates as a last resort."""
    for _ in range(max_draws):
        p = domain.sample_point(rng)
        if p not in visited and domain.is_feasible(p):
            return p
    candidates = [p for p in domain.feasible_points() if p not in visited]
    if not candidates:
        raise DomainExhausted("no unvisited feasible points remain")
    return candidates[rng.integers(len(candidates))]


def propose(
    net: MLPSurrogate,
    domain: CategoricalDomain,
    history: History,
    cfg: MboConfig,
    backend=None,
    rng: np.random.Generator | None = None,
) -> Proposal:
    """Solve the acquisition problem for the next query point.

    The solver incumbent is decoded and returned; if the solver fails without
    an incumbent the proposal falls back to a random unvisited feasible point
    (flagged on the result).  An infeasible acquisition problem means the
    no-goods cover the whole feasible set, which raises DomainExhausted.
    """
    backend = backend or milp.default_backend()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    seen_points = set(history.points)
    visited = {domain.encode(p) for p in seen_points}
    model = build_acquisition(net, domain, visited, cfg.bound_mode)
    res = backend.solve(model, time_limit=cfg.time_limit, gap_tol=cfg.gap_tol)
    if res.status == "infeasible":
        raise DomainExhausted("acquisition model infeasible: all feasible points visited")
    if res.assignment is not None:
        try:
            point = domain.decode(EncodedPoint(milp.bits_from_assignment(model, res.assignment)))
        except ValueError:
            point = None
        if point is not None and point not in seen_points:
            return Proposal(point, res, fallback=False)
    return Proposal(random_unvisited(domain, seen_points, rng), res, fallback=True)


# -- initial designs ------------------------------------------------------


def sample_initial(
    domain: CategoricalDomain,
    count: int,
    strategy: str | Callable = "uniform_rejection",
    seed: int = 0,
    backend=None,
    max_draws: int | None = None,
) -> list[Point]:
    """Draw ``count`` distinct feasible points.

    ``uniform_rejection`` rejects from the product distribution; the draw cap
    is configurable because tightly constrained domains may need the
    ``random_objective_milp`` strategy instead, which repeatedly maximizes a
    random linear objective and de-duplicates with temporary no-goods.  A
    callable strategy receives (domain, count, rng) and returns the points.
    """
    rng = np.random.default_rng(seed)
    if callable(strategy):
        pts = [tuple(p) for p in strategy(domain, count, rng)]
        if len(pts) != count or len(set(pts)) != count:
            raise ValueError("custom init strategy returned duplicate or missing points")
        bad = [p for p in pts if not domain.is_feasible(p)]
        if bad:
            raise ValueError(f"custom init strategy returned infeasible points, e.g. {bad[0]!r}")
        return pts
    if strategy == "uniform_rejection":
        cap = max_draws if max_draws is not None else max(10_000, 1000 * count)
        out: list[Point] = []
        seen: set[Point] = set()
        for _ in range(cap):
            p = domain.sample_point(rng)
            if p not in seen and domain.is_feasible(p):
                seen.add(p)
                out.append(p)
                if len(out) == count:
                    return out
        raise ValueError(
            f"rejection sampling found {len(out)}/{count} feasible points in {cap} draws; "
            "raise max_draws or use the 'random_objective_milp' strategy"
        )
    if strategy == "random_objective_milp":
        dm = milp.build_domain_model(domain)
        names = [n for g in dm.onehot_groups for n in g]
        rows: list[milp.Constraint] = []
        out = []
        child = np.random.SeedSequence(seed).spawn(count)
        for k in range(count):
            sub_seed = int(child[k].generate_state(1)[0])
            try:
                enc = milp.random_objective_solve(dm, sub_seed, backend=backend, extra_rows=rows)
            except ValueError:
                raise ValueError(
                    f"domain exhausted after {len(out)} points; cannot draw {count} distinct ones"
                ) from None
            rows.append(no_good_row(enc.bits, names, onehot=True))
            out.append(domain.decode(enc))
        return out
    raise ValueError(f"unknown init strategy {strategy!r}")


# -- loop drivers ---------------------------------------------------------


def step_seed(seed: int, t: int) -> int:
    """Per-step rng seed; retraining from scratch each step uses a fresh one."""
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def run_model_based(
    objective: Callable[[Point], float],
    domain: CategoricalDomain,
    cfg: MboConfig,
    propose_fn: Callable,
    init_points: Sequence[Point] | None = None,
) -> History:
    """Shared driver: evaluate the initial design, then alternate fit/propose.

    ``propose_fn(net, scaler, history, rng, step) -> (point, seconds, status)``
    supplies the inner acquisition optimizer.  Stops early (returning the
    partial history) once the feasible set is exhausted.
    """
    if init_points is None:
        init_points = sample_initial(domain, cfg.init_count, cfg.init_strategy, cfg.seed)
    init_points = [tuple(p) for p in init_points]
    if not init_points:
        raise ValueError("model-based loops need a non-empty initial design")
    if len(init_points) > cfg.budget:
        raise ValueError(f"initial design ({len(init_points)}) exceeds budget ({cfg.budget})")

    history = History()
    for p in init_points:
        history.append(p, objective(p), 0.0, "init")
    for t in range(len(history), cfg.budget):
        tcfg = replace(cfg.train, seed=step_seed(cfg.seed, t))
        net, scaler = fit(dataset_from_history(history), tcfg, domain)
        rng = np.random.default_rng([cfg.seed, t, 0x5EED])
        try:
            point, seconds, status = propose_fn(net, scaler, history, rng, t)
        except DomainExhausted:
            break
        history.append(point, objective(point), seconds, status)
    return history


def run_mbo(
    objective: Callable[[Point], float],
    domain: CategoricalDomain,
    cfg: MboConfig,
    backend=None,
    init_points: Sequence[Point] | None = None,
) -> History:
    """Model-based loop with exact MILP acquisition solves."""
    backend = backend or milp.default_backend()

    def propose_fn(net, scaler, history, rng, t):
        prop = propose(net, domain, history, cfg, backend=backend, rng=rng)
        return prop.point, prop.result.wall_time, prop.status

    return run_model_based(objective, domain, cfg, propose_fn, init_points)

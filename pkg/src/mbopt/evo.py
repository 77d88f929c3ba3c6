"""Evolutionary baselines, constraint-preserving operators, and inner solvers."""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import comb
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import CategoricalDomain, LinearConstraint, Point
from .mbo import (
    History,
    MboConfig,
    random_unvisited,
    run_model_based,
    sample_initial,
)
from .surrogate import encode_dataset


@dataclass(frozen=True)
class EvoConfig:
    """Operator settings for the evolutionary loops.

    ``alive_pop`` is the sliding window of most recent proposals that
    selection draws from (older individuals age out).
    """

    tournament: int = 10
    alive_pop: int = 100
    p_cross: float = 0.1
    p_mut: float = 0.1

    def __post_init__(self):
        if self.tournament < 1 or self.alive_pop < 1:
            raise ValueError("tournament and alive_pop must be >= 1")
        for p in (self.p_cross, self.p_mut):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


def regevo_defaults() -> EvoConfig:
    return EvoConfig(tournament=10, alive_pop=100, p_cross=0.1, p_mut=0.1)


def conevo_defaults() -> EvoConfig:
    return EvoConfig(tournament=20, alive_pop=100, p_cross=0.0, p_mut=0.05)


@dataclass(frozen=True)
class InnerEvoConfig:
    """Budgeted inner-loop search over the surrogate (no true-function calls)."""

    total_budget: int = 10000
    batch_size: int = 100
    tournament: int = 20
    pool: int = 1000
    p_cross: float = 0.2
    p_mut: float = 0.01

    def __post_init__(self):
        if self.total_budget < 1 or self.batch_size < 1:
            raise ValueError("inner budgets must be >= 1")


def nn_regevo_inner() -> InnerEvoConfig:
    return InnerEvoConfig(p_cross=0.2, p_mut=0.01)


def nn_conevo_inner() -> InnerEvoConfig:
    return InnerEvoConfig(p_cross=0.0, p_mut=0.05)


# -- operators ------------------------------------------------------------


def tournament_select(
    points: Sequence[Point],
    rewards: Sequence[float],
    tournament: int,
    alive_pop: int,
    rng: np.random.Generator,
) -> tuple[Point, Point]:
    """Top two of a random subset of the last ``alive_pop`` proposals.

    The subset has size min(tournament, pool); a single-element pool returns
    that element twice.  Ties rank by position (earlier wins), so the draw is
    deterministic under a fixed rng.
    """
    if not points:
        raise ValueError("cannot select from an empty population")
    pool = min(alive_pop, len(points))
    cand_points = points[-pool:]
    cand_rewards = rewards[-pool:]
    m = min(tournament, pool)
    idx = rng.choice(pool, size=m, replace=False)
    ranked = sorted(idx, key=lambda k: (-cand_rewards[k], k))
    first = cand_points[ranked[0]]
    second = cand_points[ranked[1]] if len(ranked) > 1 else first
    return first, second


def crossover(p1: Point, p2: Point, p_cross: float, rng: np.random.Generator) -> Point:
    """Segment crossover: start from a random parent, switch with prob p_cross
    after each copied position.  p_cross = 0 copies a single parent."""
    if len(p1) != len(p2):
        raise ValueError("parents have different lengths")
    parents = (tuple(p1), tuple(p2))
    cur = int(rng.random() < 0.5)
    child = []
    for i in range(len(p1)):
        child.append(parents[cur][i])
        if rng.random() < p_cross:
            cur = 1 - cur
    return tuple(child)


def mutate(p: Point, domain: CategoricalDomain, p_mut: float, rng: np.random.Generator) -> Point:
    """Per-position resample to a different symbol with prob p_mut."""
    out = list(p)
    for i, a in enumerate(domain.alphabets):
        if len(a) < 2:
            continue
        if rng.random() < p_mut:
            j = domain.symbol_index(i, out[i])
            k = int(rng.integers(len(a) - 1))
            out[i] = a[k + 1 if k >= j else k]
    return tuple(out)


# -- paired-subset structure and its constraint-preserving operator -------


@dataclass(frozen=True)
class SubsetPairs:
    """Disjoint index-set pairs whose one-counts must stay equal.

    Each entry is (left, right) with |left| == |right|; feasible binary
    points have the same number of ones in both halves of every pair.
    """

    pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def __post_init__(self):
        norm = tuple((tuple(l), tuple(r)) for l, r in self.pairs)
        object.__setattr__(self, "pairs", norm)
        seen: set[int] = set()
        for l, r in norm:
            if len(l) != len(r) or not l:
                raise ValueError("each pair needs equally sized, non-empty index sets")
            for i in (*l, *r):
                if i in seen:
                    raise ValueError(f"index {i} appears in more than one subset")
                seen.add(i)

    def covered(self) -> tuple[int, ...]:
        return tuple(sorted(i for l, r in self.pairs for i in (*l, *r)))

    def to_constraints(self) -> tuple[LinearConstraint, ...]:
        """One equality row per pair over the value-1 indicator bits."""
        rows = []
        for l, r in self.pairs:
            terms = [(i, 1, 1) for i in l] + [(i, 1, -1) for i in r]
            rows.append(LinearConstraint(tuple(terms), "=", 0))
        return tuple(rows)

    def check(self, p: Point) -> bool:
        return all(
            sum(p[i] for i in l) == sum(p[i] for i in r) for l, r in self.pairs
        )


def conevo_mutate(p: Point, pairs: SubsetPairs, p_mut: float, rng: np.random.Generator) -> Point:
    """Feasibility-preserving mutation for paired-subset equality.

    For each pair, one side is chosen uniformly and its bits flip i.i.d. with
    prob p_mut; the net change in its one-count is then compensated by
    flipping exactly that many uniformly chosen opposite-value positions on
    the other side.  Positions outside all pairs are left untouched.
    """
    if not pairs.check(p):
        raise ValueError("parent violates the paired-subset equalities")
    out = list(p)
    for left, right in pairs.pairs:
        chosen, other = (left, right) if rng.random() < 0.5 else (right, left)
        delta = 0
        for i in chosen:
            if rng.random() < p_mut:
                out[i] = 1 - out[i]
                delta += 1 if out[i] == 1 else -1
        if delta == 0:
            continue
        want = 0 if delta < 0 else 1  # value the partner positions must flip to
        slots = [i for i in other if out[i] == 1 - want]
        pick = rng.choice(len(slots), size=abs(delta), replace=False)
        for k in pick:
            out[slots[k]] = want
    return tuple(out)


# -- exact sampler for the paired-subset distribution ---------------------


def _count_weights(s: int) -> np.ndarray:
    w = np.array([comb(s, c) ** 2 for c in range(s + 1)], dtype=float)
    return w / w.sum()


def uniform_subset_equality_sample(pairs: SubsetPairs, n: int, rng: np.random.Generator) -> Point:
    """One exactly-uniform feasible point (scalar reference implementation).

    Per pair of size s, the shared one-count c is drawn with probability
    proportional to C(s, c)^2 (the number of feasible completions), then each
    side gets an independent uniform c-subset.  Uncovered positions are fair
    coin flips.
    """
    out = np.zeros(n, dtype=int)
    covered = set(pairs.covered())
    for i in range(n):
        if i not in covered:
            out[i] = int(rng.integers(2))
    for left, right in pairs.pairs:
        s = len(left)
        c = int(rng.choice(s + 1, p=_count_weights(s)))
        for side in (left, right):
            pick = rng.choice(s, size=c, replace=False)
            for k in pick:
                out[side[k]] = 1
    return tuple(int(v) for v in out)


def sample_subset_equality_batch(
    pairs: SubsetPairs, n: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized batch version of :func:`uniform_subset_equality_sample`.

    Returns a (count, n) 0/1 matrix with rows drawn from the same
    distribution as the scalar sampler.  Uniform c-subsets come from ranking
    i.i.d. random keys per row.
    """
    out = np.zeros((count, n), dtype=np.int8)
    covered = set(pairs.covered())
    free = [i for i in range(n) if i not in covered]
    if free:
        out[:, free] = rng.integers(0, 2, size=(count, len(free)))
    for left, right in pairs.pairs:
        s = len(left)
        cs = rng.choice(s + 1, size=count, p=_count_weights(s))
        for side in (left, right):
            keys = rng.random((count, s))
            ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
            out[:, list(side)] = ranks < cs[:, None]
    return out


def subset_init(
    pairs: SubsetPairs, domain: CategoricalDomain, count: int, rng: np.random.Generator
) -> list[Point]:
    """``count`` distinct feasible points drawn with the batch sampler."""
    seen: set[Point] = set()
    out: list[Point] = []
    for _ in range(200):
        block = sample_subset_equality_batch(pairs, domain.n, max(count, 64), rng)
        for row in block:
            p = tuple(int(v) for v in row)
            if p not in seen:
                seen.add(p)
                out.append(p)
                if len(out) == count:
                    return out
    raise ValueError(f"could not draw {count} distinct feasible points")


# -- true-function evolutionary loops -------------------------------------


def run_regevo(
    objective: Callable[[Point], float],
    domain: CategoricalDomain,
    budget: int,
    cfg: EvoConfig | None = None,
    seed: int = 0,
    init_points: Sequence[Point] | None = None,
) -> History:
    """Regularized evolution on the true function.

    Children may repeat earlier proposals; they are recorded as-is.  On a
    constrained domain, infeasible children are resampled (and ultimately
    replaced by a random feasible point) so the trajectory stays feasible.
    """
    cfg = cfg or regevo_defaults()
    rng = np.random.default_rng(seed)
    if init_points is None:
        init_points = sample_initial(domain, min(50, budget), "uniform_rejection", seed)
    history = History()
    for p in init_points:
        history.append(p, objective(p), 0.0, "init")
    while len(history) < budget:
        t0 = time.perf_counter()
        child = None
        for _ in range(100):
            pa, pb = tournament_select(
                history.points, history.rewards, cfg.tournament, cfg.alive_pop, rng
            )
            cand = mutate(crossover(pa, pb, cfg.p_cross, rng), domain, cfg.p_mut, rng)
            if not domain.constraints or domain.is_feasible(cand):
                child = cand
                break
        if child is None:
            child = random_unvisited(domain, set(), rng)
        history.append(child, objective(child), time.perf_counter() - t0, "evo")
    return history


def run_conevo(
    objective: Callable[[Point], float],
    domain: CategoricalDomain,
    pairs: SubsetPairs,
    budget: int,
    cfg: EvoConfig | None = None,
    seed: int = 0,
    init_points: Sequence[Point] | None = None,
) -> History:
    """Evolution with the constraint-preserving mutation (no crossover)."""
    cfg = cfg or conevo_defaults()
    rng = np.random.default_rng(seed)
    if init_points is None:
        init_points = subset_init(pairs, domain, min(50, budget), rng)
    history = History()
    for p in init_points:
        history.append(p, objective(p), 0.0, "init")
    while len(history) < budget:
        t0 = time.perf_counter()
        parent, _ = tournament_select(
            history.points, history.rewards, cfg.tournament, cfg.alive_pop, rng
        )
        child = conevo_mutate(parent, pairs, cfg.p_mut, rng)
        history.append(child, objective(child), time.perf_counter() - t0, "conevo")
    return history


# -- surrogate inner loops ------------------------------------------------


def batched_inner_solve(
    score_batch: Callable[[Sequence[Point]], np.ndarray],
    domain: CategoricalDomain,
    population: Sequence[Point],
    visited: set[Point],
    child_fn: Callable,
    rng: np.random.Generator,
    inner: InnerEvoConfig,
) -> Point:
    """Evolve candidates against the surrogate; return the best new one.

    The population is seeded with ``population`` (scored like everything
    else) and grows by ``batch_size`` children at a time until
    ``total_budget`` candidates have been generated.  The winner is the
    highest-scoring generated child not in ``visited`` (ties keep the
    earliest); if every child is visited or infeasible, a random unvisited
    feasible point is returned instead.
    """
    pop_points = [tuple(p) for p in population]
    pop_scores = list(np.asarray(score_batch(pop_points), dtype=float)) if pop_points else []
    check = bool(domain.constraints)
    best_point, best_score = None, -np.inf
    produced = 0
    while produced < inner.total_budget:
        b = min(inner.batch_size, inner.total_budget - produced)
        window_p = pop_points[-inner.pool:]
        window_s = pop_scores[-inner.pool:]
        children = [child_fn(window_p, window_s, rng) for _ in range(b)]
        scores = np.asarray(score_batch(children), dtype=float)
        for c, s in zip(children, scores):
            pop_points.append(c)
            pop_scores.append(float(s))
            if s > best_score and c not in visited and not (check and not domain.is_feasible(c)):
                best_point, best_score = c, float(s)
        produced += b
    if best_point is None:
        return random_unvisited(domain, visited, rng)
    return best_point


def regevo_child(domain: CategoricalDomain, inner: InnerEvoConfig) -> Callable:
    def child_fn(points, scores, rng):
        pa, pb = tournament_select(points, scores, inner.tournament, len(points), rng)
        return mutate(crossover(pa, pb, inner.p_cross, rng), domain, inner.p_mut, rng)

    return child_fn


def conevo_child(pairs: SubsetPairs, inner: InnerEvoConfig) -> Callable:
    def child_fn(points, scores, rng):
        parent, _ = tournament_select(points, scores, inner.tournament, len(points), rng)
        return conevo_mutate(parent, pairs, inner.p_mut, rng)

    return child_fn


def _run_nn_evo(objective, domain, cfg: MboConfig, inner: InnerEvoConfig, child_fn, status: str,
                init_points=None) -> History:
    def propose_fn(net, scaler, history, rng, t):
        t0 = time.perf_counter()
        score = lambda pts: net.forward(encode_dataset(domain, pts)) if pts else np.array([])
        point = batched_inner_solve(
            score, domain, history.points, set(history.points), child_fn, rng, inner
        )
        return point, time.perf_counter() - t0, status

    return run_model_based(objective, domain, cfg, propose_fn, init_points)


def run_nn_regevo(
    objective, domain: CategoricalDomain, cfg: MboConfig,
    inner: InnerEvoConfig | None = None, init_points: Sequence[Point] | None = None,
) -> History:
    """Model-based loop whose acquisition search is the evolutionary inner solver."""
    inner = inner or nn_regevo_inner()
    return _run_nn_evo(objective, domain, cfg, inner, regevo_child(domain, inner), "evo", init_points)


def run_nn_conevo(
    objective, domain: CategoricalDomain, pairs: SubsetPairs, cfg: MboConfig,
    inner: InnerEvoConfig | None = None, init_points: Sequence[Point] | None = None,
) -> History:
    """Model-based loop with the constraint-preserving inner solver."""
    inner = inner or nn_conevo_inner()
    return _run_nn_evo(objective, domain, cfg, inner, conevo_child(pairs, inner), "conevo", init_points)


# -- sampling baseline ----------------------------------------------------


def _uniform_index_batch(domain: CategoricalDomain, count: int, rng) -> np.ndarray:
    J = np.empty((count, domain.n), dtype=np.int64)
    for i, a in enumerate(domain.alphabets):
        J[:, i] = rng.integers(0, len(a), size=count)
    return J


def onehot_from_indices(domain: CategoricalDomain, J: np.ndarray) -> np.ndarray:
    Z = np.zeros((len(J), domain.width))
    cols = np.asarray(domain.offsets)[None, :] + J
    Z[np.arange(len(J))[:, None], cols] = 1.0
    return Z


def run_rejsample(
    objective,
    domain: CategoricalDomain,
    cfg: MboConfig,
    sampler: Callable | None = None,
    samples_per_step: int = 10000,
    init_points: Sequence[Point] | None = None,
) -> History:
    """Model-based loop that ranks a fixed batch of sampled candidates.

    ``sampler(domain, count, rng)`` returns a (count, n) matrix of alphabet
    indices; the default draws from the unconstrained product, filtering out
    infeasible rows afterwards.  The best unvisited feasible candidate under
    the surrogate is proposed; if the whole batch is visited or infeasible, a
    random unvisited feasible point is used.
    """
    sampler = sampler or _uniform_index_batch

    def propose_fn(net, scaler, history, rng, t):
        t0 = time.perf_counter()
        J = np.asarray(sampler(domain, samples_per_step, rng))
        Z = onehot_from_indices(domain, J)
        ok = domain.feasible_mask(Z)
        scores = np.where(ok, net.forward(Z), -np.inf)
        seen = set(history.points)
        point = None
        for k in np.argsort(-scores, kind="stable"):
            if not ok[k]:
                continue
            p = tuple(domain.alphabets[i][J[k, i]] for i in range(domain.n))
            if p not in seen:
                point = p
                break
        if point is None:
            point = random_unvisited(domain, seen, rng)
        return point, time.perf_counter() - t0, "rejsample"

    return run_model_based(objective, domain, cfg, propose_fn, init_points)

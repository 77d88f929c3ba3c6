import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbopt.domain import CategoricalDomain, LinearConstraint, binary_domain
from mbopt.milp import ExhaustiveBackend, HighsBackend, SolveResult, build_domain_model
from mbopt.mbo import (
    DomainExhausted,
    History,
    MboConfig,
    build_acquisition,
    dataset_from_history,
    no_good_for_point,
    no_good_row,
    propose,
    random_unvisited,
    run_mbo,
    sample_initial,
    step_seed,
)
from mbopt.surrogate import TrainConfig, init_network


def test_no_good_row_transformed_form():
    names = ["a", "b", "c", "d"]
    row = no_good_row(np.array([1, 0, 1, 0]), names, onehot=True)
    assert row.sense == ">="
    assert row.rhs == 2.0 - 2.0  # rhs 2 minus two one-bits
    assert dict(row.terms) == {"a": -1.0, "b": 1.0, "c": -1.0, "d": 1.0}
    row1 = no_good_row(np.array([1, 1, 0, 0]), names, onehot=False)
    assert row1.rhs == 1.0 - 2.0


@given(st.integers(0, 2**10 - 1), st.integers(0, 2**10 - 1))
def test_no_good_excludes_only_insufficient_flips(visited_mask, other_mask):
    n = 10
    bits = np.array([(visited_mask >> k) & 1 for k in range(n)])
    other = np.array([(other_mask >> k) & 1 for k in range(n)])
    names = [f"v{k}" for k in range(n)]
    row = no_good_row(bits, names, onehot=False)
    lut = dict(zip(names, other.astype(float)))
    lhs = sum(c * lut[n_] for n_, c in row.terms)
    flips = int(np.sum(bits != other))
    assert (lhs >= row.rhs) == (flips >= 1)


def test_no_goods_carve_exactly_the_visited_points():
    # 3 variables x 3 symbols = 27 points; 5 no-goods leave exactly 22.
    dom = CategoricalDomain([(0, 1, 2)] * 3)
    visited = [(0, 0, 0), (1, 2, 0), (2, 2, 2), (0, 1, 2), (1, 1, 1)]
    model = build_domain_model(dom)
    for p in visited:
        row = no_good_for_point(dom, p)
        model.add_constraint(row.terms, row.sense, row.rhs)
    names = [n for g in model.onehot_groups for n in g]
    count = 0
    for p in dom.iter_points():
        bits = dom.encode(p).bits.astype(float)
        lut = dict(zip(names, bits))
        ok = True
        for row in model.constraints:
            lhs = sum(c * lut[n] for n, c in row.terms)
            if row.sense == ">=" and lhs < row.rhs - 1e-9:
                ok = False
            if row.sense == "=" and abs(lhs - row.rhs) > 1e-9:
                ok = False
        if ok:
            count += 1
            assert p not in visited
    assert count == 27 - 5


def test_build_acquisition_optimum_is_best_unvisited_prediction():
    dom = CategoricalDomain([(0, 1)] * 4)
    rng = np.random.default_rng(2)
    net = init_network(dom.width, (5,), rng)
    for W, b in net.layers:
        b += rng.normal(scale=0.4, size=b.shape)
    preds = {p: float(net.forward(dom.encode(p).bits)) for p in dom.iter_points()}
    ranked = sorted(preds, key=preds.get, reverse=True)
    visited = ranked[:3]  # exclude the top three
    model = build_acquisition(net, dom, [dom.encode(p) for p in visited], bound_mode="lp")
    res = ExhaustiveBackend().solve(model)
    expected = max(v for p, v in preds.items() if p not in visited)
    assert abs(res.objective_value - expected) < 1e-9
    res_hi = HighsBackend().solve(model)
    assert abs(res_hi.objective_value - expected) < 1e-6


def _tiny_net(dom, seed=0):
    rng = np.random.default_rng(seed)
    net = init_network(dom.width, (4,), rng)
    for W, b in net.layers:
        b += rng.normal(scale=0.3, size=b.shape)
    return net


def test_propose_returns_feasible_unvisited_point():
    dom = binary_domain(5)
    net = _tiny_net(dom)
    history = History()
    for p in [(0, 0, 0, 0, 0), (1, 1, 1, 1, 1)]:
        history.append(p, 0.0, 0.0, "init")
    cfg = MboConfig(budget=10, init_count=2)
    prop = propose(net, dom, history, cfg, backend=HighsBackend())
    assert prop.point not in history.points
    assert dom.is_feasible(prop.point)
    assert not prop.fallback
    assert prop.result.status == "optimal"


def test_propose_raises_when_domain_is_exhausted():
    dom = binary_domain(2)
    net = _tiny_net(dom)
    history = History()
    for p in dom.iter_points():
        history.append(p, 0.0, 0.0, "init")
    cfg = MboConfig(budget=10, init_count=1)
    with pytest.raises(DomainExhausted):
        propose(net, dom, history, cfg, backend=HighsBackend())


class _NoIncumbentBackend:
    name = "broken"

    def solve(self, model, time_limit=500.0, gap_tol=1e-6):
        return SolveResult("error", None, None, None, 0.0, "injected failure")


def test_propose_falls_back_on_solver_failure():
    dom = binary_domain(4)
    net = _tiny_net(dom)
    history = History()
    history.append((0, 0, 0, 0), 1.0, 0.0, "init")
    cfg = MboConfig(budget=10, init_count=1)
    prop = propose(net, dom, history, cfg, backend=_NoIncumbentBackend(),
                   rng=np.random.default_rng(0))
    assert prop.fallback
    assert prop.status == "error:fallback"
    assert prop.point not in history.points
    assert dom.is_feasible(prop.point)


def test_random_unvisited_enumerates_small_domains():
    dom = binary_domain(2)
    visited = {(0, 0), (0, 1), (1, 0)}
    rng = np.random.default_rng(0)
    assert random_unvisited(dom, visited, rng, max_draws=3) == (1, 1)
    with pytest.raises(DomainExhausted):
        random_unvisited(dom, set(dom.iter_points()), rng, max_draws=3)


def test_run_mbo_never_repeats_and_labels_steps():
    obj = lambda p: float(sum(p)) - 0.5 * p[0]
    dom = binary_domain(4)
    cfg = MboConfig(budget=12, init_count=5, train=TrainConfig(epochs=40), seed=3)
    h = run_mbo(obj, dom, cfg, backend=HighsBackend())
    assert len(h) == 12
    assert len(set(h.points)) == 12
    statuses = [r.status for r in h]
    assert statuses[:5] == ["init"] * 5
    assert all(s == "optimal" for s in statuses[5:])
    assert all(r.solve_seconds == 0.0 for r in h.records[:5])
    assert all(r.solve_seconds > 0.0 for r in h.records[5:])
    assert all(r.reward == obj(r.point) for r in h)


def test_run_mbo_stops_early_when_domain_is_exhausted():
    dom = binary_domain(2)
    obj = lambda p: float(p[0] - p[1])
    cfg = MboConfig(budget=10, init_count=2, train=TrainConfig(epochs=20), seed=0)
    h = run_mbo(obj, dom, cfg, backend=HighsBackend())
    assert len(h) == 4  # whole domain, then stop
    assert len(set(h.points)) == 4


def test_run_mbo_is_deterministic():
    obj = lambda p: float(p[0] * 2 - p[1] + p[2] * p[3])
    dom = binary_domain(4)
    cfg = MboConfig(budget=9, init_count=4, train=TrainConfig(epochs=30), seed=11)
    h1 = run_mbo(obj, dom, cfg, backend=HighsBackend())
    h2 = run_mbo(obj, dom, cfg, backend=HighsBackend())
    assert h1.points == h2.points
    assert h1.rewards == h2.rewards


def test_run_mbo_respects_explicit_init_points():
    dom = binary_domain(3)
    init = [(0, 0, 0), (1, 1, 1)]
    cfg = MboConfig(budget=4, init_count=2, train=TrainConfig(epochs=20), seed=0)
    h = run_mbo(lambda p: float(sum(p)), dom, cfg, backend=HighsBackend(), init_points=init)
    assert h.points[:2] == init


# -- history --------------------------------------------------------------


def test_history_accessors_and_running_best():
    h = History()
    for k, (p, r) in enumerate([((0,), 1.0), ((1,), 3.0), ((2,), 2.0)]):
        rec = h.append(p, r, 0.1 * k, "s")
        assert rec.step == k
    assert h.best_reward() == 3.0
    assert h.best_point() == (1,)
    np.testing.assert_array_equal(h.running_best(), [1.0, 3.0, 3.0])
    assert len(h) == 3


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=10),
       st.lists(st.floats(-1e9, 1e9), min_size=10, max_size=10))
def test_history_csv_round_trip(points, rewards):
    h = History()
    for p, r in zip(points, rewards):
        h.append(p, r, abs(r) * 1e-7, "optimal")
    import tempfile, os

    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        h.to_csv(path)
        h2 = History.from_csv(path)
    finally:
        os.unlink(path)
    assert h2.points == h.points
    assert h2.rewards == h.rewards  # exact float round trip via repr
    assert [r.solve_seconds for r in h2] == [r.solve_seconds for r in h]
    assert [r.status for r in h2] == [r.status for r in h]


def test_history_csv_string_symbols(tmp_path):
    h = History()
    h.append(("A", "C", "G"), 0.5, 0.0, "init")
    path = tmp_path / "h.csv"
    h.to_csv(path)
    assert History.from_csv(path).points == [("A", "C", "G")]


def test_history_csv_rejects_unknown_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="unexpected history header"):
        History.from_csv(path)


def test_dataset_from_history():
    h = History()
    h.append((0, 1), 2.0, 0.0, "init")
    h.append((1, 0), -1.0, 0.0, "init")
    d = dataset_from_history(h)
    assert d.points == [(0, 1), (1, 0)]
    assert d.rewards == [2.0, -1.0]


# -- initial designs ------------------------------------------------------


def test_sample_initial_uniform_rejection_distinct_feasible_deterministic():
    con = LinearConstraint(tuple((i, 1, 1) for i in range(6)), "<=", 3)
    dom = binary_domain(6, [con])
    pts = sample_initial(dom, 10, "uniform_rejection", seed=4)
    assert len(pts) == 10 and len(set(pts)) == 10
    assert all(dom.is_feasible(p) for p in pts)
    assert pts == sample_initial(dom, 10, "uniform_rejection", seed=4)
    assert pts != sample_initial(dom, 10, "uniform_rejection", seed=5)


def test_sample_initial_rejection_cap_error():
    con = LinearConstraint(tuple((i, 1, 1) for i in range(8)), "=", 4)
    dom = binary_domain(8, [con])
    with pytest.raises(ValueError, match="raise max_draws"):
        sample_initial(dom, 60, "uniform_rejection", seed=0, max_draws=70)


def test_sample_initial_milp_strategy_on_tight_domain():
    con = LinearConstraint(tuple((i, 1, 1) for i in range(5)), "=", 2)
    dom = binary_domain(5, [con])
    pts = sample_initial(dom, 6, "random_objective_milp", seed=1)
    assert len(set(pts)) == 6
    assert all(dom.is_feasible(p) for p in pts)
    assert pts == sample_initial(dom, 6, "random_objective_milp", seed=1)


def test_sample_initial_milp_strategy_exhausts_small_domain():
    dom = binary_domain(2)
    with pytest.raises(ValueError, match="domain exhausted"):
        sample_initial(dom, 5, "random_objective_milp", seed=0)


def test_sample_initial_callable_strategy_is_validated():
    dom = binary_domain(3)
    good = lambda d, count, rng: [(0, 0, 0), (1, 0, 0)][:count]
    assert sample_initial(dom, 2, good, seed=0) == [(0, 0, 0), (1, 0, 0)]
    dup = lambda d, count, rng: [(0, 0, 0)] * count
    with pytest.raises(ValueError, match="duplicate"):
        sample_initial(dom, 2, dup, seed=0)
    con = LinearConstraint(((0, 1, 1),), "=", 1)
    cdom = binary_domain(3, [con])
    bad = lambda d, count, rng: [(0, 0, 0), (1, 0, 0)][:count]
    with pytest.raises(ValueError, match="infeasible"):
        sample_initial(cdom, 2, bad, seed=0)


def test_sample_initial_unknown_strategy():
    with pytest.raises(ValueError, match="unknown init strategy"):
        sample_initial(binary_domain(2), 1, "sobol", seed=0)


def test_step_seed_varies_with_step_and_seed():
    seeds = {step_seed(0, t) for t in range(50)} | {step_seed(1, t) for t in range(50)}
    assert len(seeds) == 100
    assert step_seed(7, 3) == step_seed(7, 3)


def test_mbo_config_validation():
    with pytest.raises(ValueError, match="budget"):
        MboConfig(budget=0)
    with pytest.raises(ValueError, match="init_count"):
        MboConfig(budget=5, init_count=6)
    with pytest.raises(ValueError, match="bound_mode"):
        MboConfig(budget=5, init_count=2, bound_mode="sdp")

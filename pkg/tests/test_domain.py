import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbopt.domain import (
    CategoricalDomain,
    EncodedPoint,
    LinearConstraint,
    binary_domain,
    load_domain,
    save_domain,
)


def small_domains():
    alphabet = st.lists(st.integers(0, 9), min_size=1, max_size=4, unique=True)
    return st.lists(alphabet, min_size=1, max_size=5).map(CategoricalDomain)


@given(small_domains(), st.randoms(use_true_random=False))
def test_encode_decode_round_trip(dom, rnd):
    p = tuple(rnd.choice(a) for a in dom.alphabets)
    e = dom.encode(p)
    assert e.bits.shape == (dom.width,)
    assert int(e.bits.sum()) == dom.n
    assert dom.decode(e) == p


def test_encode_layout_is_block_onehot():
    dom = CategoricalDomain([("a", "b"), ("x", "y", "z")])
    assert dom.width == 5
    assert dom.offsets == (0, 2)
    assert list(dom.encode(("b", "x")).bits) == [0, 1, 1, 0, 0]
    assert dom.bit_pairs() == [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2)]


def test_encode_rejects_unknown_symbol_and_bad_arity():
    dom = CategoricalDomain([(0, 1), (0, 1, 2)])
    with pytest.raises(ValueError, match="not in the alphabet of variable 1"):
        dom.encode((0, 7))
    with pytest.raises(ValueError, match="3 coordinates"):
        dom.encode((0, 1, 0))


def test_decode_rejects_malformed_encodings():
    dom = CategoricalDomain([(0, 1), (0, 1)])
    with pytest.raises(ValueError, match="width"):
        dom.decode(EncodedPoint(np.array([1, 0, 1])))
    with pytest.raises(ValueError, match="2 active bits"):
        dom.decode(EncodedPoint(np.array([1, 1, 0, 1])))
    with pytest.raises(ValueError, match="0 active bits"):
        dom.decode(EncodedPoint(np.array([1, 0, 0, 0])))
    with pytest.raises(ValueError, match="non-binary"):
        dom.decode(EncodedPoint(np.array([1, 0, 2, 0])))


def test_domain_validation_errors():
    with pytest.raises(ValueError, match="at least one variable"):
        CategoricalDomain([])
    with pytest.raises(ValueError, match="empty"):
        CategoricalDomain([(0, 1), ()])
    with pytest.raises(ValueError, match="duplicate symbols"):
        CategoricalDomain([(0, 0, 1)])
    con = LinearConstraint(((0, 0, 1), (3, 0, 1)), "<=", 1)
    with pytest.raises(ValueError, match="variable 3"):
        CategoricalDomain([(0, 1)], [con])
    con = LinearConstraint(((0, 2, 1),), "<=", 1)
    with pytest.raises(ValueError, match="choice 2"):
        CategoricalDomain([(0, 1)], [con])


def test_constraint_validation():
    with pytest.raises(ValueError, match="sense"):
        LinearConstraint(((0, 0, 1),), "<", 1)
    with pytest.raises(ValueError, match="duplicate term"):
        LinearConstraint(((0, 0, 1), (0, 0, 2)), "<=", 1)


def _random_constraint(rng, dom, sense):
    terms = []
    for i in range(dom.n):
        for j in range(len(dom.alphabets[i])):
            if rng.random() < 0.5:
                terms.append((i, j, int(rng.integers(-3, 4))))
    if not terms:
        terms = [(0, 0, 1)]
    return LinearConstraint(tuple(terms), sense, int(rng.integers(-2, 5)))


def test_is_feasible_matches_exhaustive_bit_check():
    # Independent route: evaluate each row by summing Fraction coefficients
    # over the raw point, without going through the encoding at all.
    rng = np.random.default_rng(11)
    dom_free = CategoricalDomain([(0, 1)] * 6 + [(0, 1, 2)] * 2)
    cons = [_random_constraint(rng, dom_free, s) for s in ("<=", ">=", "=", "<=")]
    dom = CategoricalDomain(dom_free.alphabets, cons)
    n_ok = 0
    for p in dom.iter_points():
        expected = True
        for c in cons:
            lhs = Fraction(0)
            for i, j, coef in c.terms:
                lhs += coef * (1 if dom.alphabets[i].index(p[i]) == j else 0)
            if c.sense == "<=":
                expected &= lhs <= c.rhs
            elif c.sense == ">=":
                expected &= lhs >= c.rhs
            else:
                expected &= lhs == c.rhs
        assert dom.is_feasible(p) == expected
        n_ok += expected
    assert 0 < n_ok < dom.size()  # constraints actually bite


def test_feasible_mask_agrees_with_scalar_path():
    rng = np.random.default_rng(5)
    base = binary_domain(10)
    cons = [_random_constraint(rng, base, "<="), _random_constraint(rng, base, ">=")]
    dom = binary_domain(10, cons)
    pts = list(itertools.islice(dom.iter_points(), 0, 1024, 3))
    Z = np.stack([dom.encode(p).bits for p in pts])
    mask = dom.feasible_mask(Z)
    for p, m in zip(pts, mask):
        assert dom.is_feasible(p) == bool(m)


def test_fractional_coefficients_are_exact():
    # 1/3 + 1/3 + 1/3 == 1 must hold exactly, not approximately.
    third = Fraction(1, 3)
    con = LinearConstraint(((0, 1, third), (1, 1, third), (2, 1, third)), "=", 1)
    dom = binary_domain(3, [con])
    assert dom.is_feasible((1, 1, 1))
    assert not dom.is_feasible((1, 1, 0))


def test_json_round_trip(tmp_path):
    con = LinearConstraint(((0, 1, 2), (1, 0, -1)), "<=", 3)
    dom = CategoricalDomain([(0, 1), ("a", "b", "c")], [con])
    path = tmp_path / "dom.json"
    save_domain(dom, path)
    loaded = load_domain(path)
    assert loaded.alphabets == dom.alphabets
    assert loaded.constraints == dom.constraints
    blob = json.loads(path.read_text())
    assert set(blob) == {"n", "alphabets", "constraints"}
    assert blob["n"] == 2
    assert blob["constraints"][0]["terms"] == [[0, 1, 2], [1, 0, -1]]


def test_json_errors_are_descriptive(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValueError, match="not valid JSON"):
        load_domain(p)
    p.write_text(json.dumps({"constraints": []}))
    with pytest.raises(ValueError, match="alphabets"):
        load_domain(p)
    p.write_text(json.dumps({"n": 3, "alphabets": [[0, 1]]}))
    with pytest.raises(ValueError, match="n=3"):
        load_domain(p)
    p.write_text(json.dumps({"alphabets": [[0, 1]], "constraints": [{"terms": [[0]]}]}))
    with pytest.raises(ValueError, match="constraint 0"):
        load_domain(p)


def test_size_and_iteration():
    dom = CategoricalDomain([(0, 1), (0, 1, 2), (5,)])
    assert dom.size() == 6
    pts = list(dom.iter_points())
    assert len(pts) == 6
    assert len(set(pts)) == 6
    assert all(dom.is_feasible(p) for p in dom.feasible_points())


def test_sample_point_covers_the_product():
    dom = CategoricalDomain([(0, 1), ("u", "v")])
    rng = np.random.default_rng(0)
    seen = {dom.sample_point(rng) for _ in range(200)}
    assert seen == set(dom.iter_points())

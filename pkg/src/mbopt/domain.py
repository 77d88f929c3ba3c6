"""Finite categorical domains, one-hot encodings, and linear feasibility."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

# A point is a plain tuple of symbols, one per variable.  Symbols are
# arbitrary hashable values (ints and strings in practice).
Point = tuple

_SENSES = ("<=", "=", ">=")


def _as_fraction(x) -> Fraction:
    """Coerce a coefficient to an exact rational."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    raise TypeError(f"cannot interpret {x!r} as a rational coefficient")


@dataclass(frozen=True)
class LinearConstraint:
    """One linear row over one-hot indicator bits.

    ``terms`` is a tuple of ``(var, choice, coef)`` triples: ``var`` indexes a
    domain variable, ``choice`` indexes a symbol in that variable's alphabet,
    and ``coef`` multiplies the corresponding indicator bit.  Coefficients and
    the right-hand side are kept as exact rationals so feasibility checks on
    bit vectors never suffer round-off.
    """

    terms: tuple[tuple[int, int, Fraction], ...]
    sense: str
    rhs: Fraction

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"constraint sense must be one of {_SENSES}, got {self.sense!r}")
        norm = tuple((int(i), int(j), _as_fraction(c)) for i, j, c in self.terms)
        object.__setattr__(self, "terms", norm)
        object.__setattr__(self, "rhs", _as_fraction(self.rhs))
        seen = set()
        for i, j, _ in norm:
            if (i, j) in seen:
                raise ValueError(f"duplicate term for bit ({i},{j}) in constraint")
            seen.add((i, j))

    def satisfied_by(self, bit: Callable[[int, int], int]) -> bool:
        """Exact check of the row against an indicator lookup ``bit(var, choice)``."""
        lhs = sum(c * bit(i, j) for i, j, c in self.terms)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass
class EncodedPoint:
    """Flat 0/1 one-hot vector for a point, in domain bit order."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int8)
        if self.bits.ndim != 1:
            raise ValueError("encoded point must be a flat vector")

    def __eq__(self, other):
        if not isinstance(other, EncodedPoint):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.all(self.bits == other.bits))

    def __hash__(self):
        return hash(self.bits.tobytes())


class CategoricalDomain:
    """Product of finite alphabets plus optional linear one-hot constraints.

    Variables are indexed ``0..n-1``; variable ``i`` takes values from
    ``alphabets[i]``.  The one-hot encoding concatenates per-variable
    indicator blocks in variable order, so bit ``offsets[i] + j`` is 1 iff
    variable ``i`` takes its ``j``-th symbol.
    """

    def __init__(self, alphabets: Sequence[Sequence], constraints: Iterable[LinearConstraint] = ()):
        alphabets = tuple(tuple(a) for a in alphabets)
        if not alphabets:
            raise ValueError("domain needs at least one variable")
        for i, a in enumerate(alphabets):
            if not a:
                raise ValueError(f"alphabet for variable {i} is empty")
            if len(set(a)) != len(a):
                raise ValueError(f"alphabet for variable {i} has duplicate symbols: {a!r}")
        self.alphabets = alphabets
        self.n = len(alphabets)
        self.offsets = tuple(itertools.accumulate((len(a) for a in alphabets), initial=0))[:-1]
        self.width = sum(len(a) for a in alphabets)
        self._index = tuple({s: j for j, s in enumerate(a)} for a in alphabets)

        constraints = tuple(constraints)
        for c in constraints:
            for i, j, _ in c.terms:
                if not (0 <= i < self.n):
                    raise ValueError(f"constraint references variable {i}, domain has n={self.n}")
                if not (0 <= j < len(alphabets[i])):
                    raise ValueError(
                        f"constraint references choice {j} of variable {i}, "
                        f"alphabet size is {len(alphabets[i])}"
                    )
        self.constraints = constraints
        self._cmat = None  # lazy (A, senses, rhs) float arrays for batch checks

    # -- encoding ---------------------------------------------------------

    def symbol_index(self, i: int, symbol) -> int:
        try:
            return self._index[i][symbol]
        except KeyError:
            raise ValueError(
                f"symbol {symbol!r} is not in the alphabet of variable {i}: {self.alphabets[i]!r}"
            ) from None

    def bit_index(self, i: int, j: int) -> int:
        """Flat position of indicator (variable i, choice j)."""
        return self.offsets[i] + j

    def bit_pairs(self) -> list[tuple[int, int]]:
        """All (variable, choice) pairs in flat bit order."""
        return [(i, j) for i in range(self.n) for j in range(len(self.alphabets[i]))]

    def encode(self, p: Point) -> EncodedPoint:
        if len(p) != self.n:
            raise ValueError(f"point has {len(p)} coordinates, domain has n={self.n}")
        bits = np.zeros(self.width, dtype=np.int8)
        for i, s in enumerate(p):
            bits[self.offsets[i] + self.symbol_index(i, s)] = 1
        return EncodedPoint(bits)

    def decode(self, e: EncodedPoint) -> Point:
        bits = e.bits
        if bits.shape != (self.width,):
            raise ValueError(f"encoding has width {bits.shape}, expected ({self.width},)")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("encoding contains non-binary entries")
        out = []
        for i, a in enumerate(self.alphabets):
            block = bits[self.offsets[i] : self.offsets[i] + len(a)]
            hot = np.flatnonzero(block)
            if hot.size != 1:
                raise ValueError(
                    f"encoding block for variable {i} has {hot.size} active bits, expected 1"
                )
            out.append(a[hot[0]])
        return tuple(out)

    # -- feasibility ------------------------------------------------------

    def is_feasible(self, p: Point) -> bool:
        e = self.encode(p)  # raises on malformed points
        return self.is_feasible_encoded(e)

    def is_feasible_encoded(self, e: EncodedPoint) -> bool:
        bits = e.bits
        return all(
            c.satisfied_by(lambda i, j: int(bits[self.offsets[i] + j])) for c in self.constraints
        )

    def constraint_arrays(self):
        """Constraints as float arrays (A, senses, rhs) over flat bits.

        Coefficients are converted once; integral rationals stay exact in
        float64, so batch checks agree with the Fraction path for the integer
        constraints used throughout.
        """
        if self._cmat is None:
            A = np.zeros((len(self.constraints), self.width))
            rhs = np.zeros(len(self.constraints))
            senses = []
            for r, c in enumerate(self.constraints):
                for i, j, coef in c.terms:
                    A[r, self.offsets[i] + j] = float(coef)
                rhs[r] = float(c.rhs)
                senses.append(c.sense)
            self._cmat = (A, tuple(senses), rhs)
        return self._cmat

    def feasible_mask(self, Z: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Row-wise feasibility of a (count, width) 0/1 matrix."""
        Z = np.asarray(Z, dtype=float)
        if not self.constraints:
            return np.ones(len(Z), dtype=bool)
        A, senses, rhs = self.constraint_arrays()
        lhs = Z @ A.T
        ok = np.ones(len(Z), dtype=bool)
        for r, s in enumerate(senses):
            if s == "<=":
                ok &= lhs[:, r] <= rhs[r] + tol
            elif s == ">=":
                ok &= lhs[:, r] >= rhs[r] - tol
            else:
                ok &= np.abs(lhs[:, r] - rhs[r]) <= tol
        return ok

    # -- enumeration and sampling ----------------------------------------

    def size(self) -> int:
        """Number of points in the unconstrained product."""
        out = 1
        for a in self.alphabets:
            out *= len(a)
        return out

    def iter_points(self) -> Iterator[Point]:
        return itertools.product(*self.alphabets)

    def feasible_points(self) -> Iterator[Point]:
        return (p for p in self.iter_points() if self.is_feasible(p))

    def sample_point(self, rng: np.random.Generator) -> Point:
        """Uniform draw from the unconstrained product (no feasibility filter)."""
        return tuple(a[rng.integers(len(a))] for a in self.alphabets)

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        def num(f: Fraction):
            return int(f) if f.denominator == 1 else float(f)

        return {
            "n": self.n,
            "alphabets": [list(a) for a in self.alphabets],
            "constraints": [
                {
                    "terms": [[i, j, num(c)] for i, j, c in con.terms],
                    "sense": con.sense,
                    "rhs": num(con.rhs),
                }
                for con in self.constraints
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CategoricalDomain":
        try:
            alphabets = d["alphabets"]
        except KeyError:
            raise ValueError("domain JSON is missing the 'alphabets' field") from None
        if "n" in d and int(d["n"]) != len(alphabets):
            raise ValueError(
                f"domain JSON declares n={d['n']} but lists {len(alphabets)} alphabets"
            )
        cons = []
        for k, c in enumerate(d.get("constraints", [])):
            try:
                terms = [(int(i), int(j), _as_fraction(coef)) for i, j, coef in c["terms"]]
                cons.append(LinearConstraint(tuple(terms), c["sense"], _as_fraction(c["rhs"])))
            except (KeyError, TypeError, ValueError) as err:
                raise ValueError(f"constraint {k} in domain JSON is malformed: {err}") from None
        return cls(alphabets, cons)


def save_domain(domain: CategoricalDomain, path) -> None:
    with open(path, "w") as fh:
        json.dump(domain.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_domain(path) -> CategoricalDomain:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: not valid JSON ({err})") from None
    return CategoricalDomain.from_json_dict(d)


def binary_domain(n: int, constraints: Iterable[LinearConstraint] = ()) -> CategoricalDomain:
    """Convenience: n binary variables with alphabet (0, 1)."""
    return CategoricalDomain(((0, 1),) * n, constraints)

"""Mixed-integer linear models over named variables, plus solver backends."""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse

from .domain import CategoricalDomain, EncodedPoint

_SENSES = ("<=", "=", ">=")


def z_name(i: int, j: int) -> str:
    """Canonical variable name for one-hot bit (variable i, choice j)."""
    return f"z_{i}_{j}"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" | "continuous"
    lower: float = 0.0
    upper: float = 1.0


@dataclass(frozen=True)
class Constraint:
    """Linear row: sum(coef * var) sense rhs."""

    terms: tuple[tuple[str, float], ...]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"row sense must be one of {_SENSES}, got {self.sense!r}")


@dataclass
class NetworkAttachment:
    """Runtime link from a model back to the network it encodes.

    Lets enumeration-style solvers derive the continuous/indicator variables
    from the one-hot bits instead of branching on them.  Not serialized.
    """

    net: object  # MLPSurrogate
    z_names: tuple[str, ...]  # network input order
    y_names: tuple[tuple[str, ...], ...]  # per hidden layer
    alpha_names: tuple[tuple[str | None, ...], ...]
    out_name: str

    def owned_names(self) -> set[str]:
        names = {self.out_name}
        for layer in self.y_names:
            names.update(layer)
        for layer in self.alpha_names:
            names.update(n for n in layer if n is not None)
        return names


class MilpModel:
    """A maximization MILP with string-named variables.

    ``onehot_groups`` records which binary variables form one-hot blocks (in
    domain bit order); solvers use it to enumerate efficiently and callers use
    it to decode solutions.
    """

    def __init__(self):
        self.variables: dict[str, Variable] = {}
        self.constraints: list[Constraint] = []
        self.objective: dict[str, float] = {}
        self.onehot_groups: list[tuple[str, ...]] = []
        self.network: NetworkAttachment | None = None

    def _add(self, var: Variable) -> str:
        if var.name in self.variables:
            raise ValueError(f"variable {var.name!r} already exists")
        self.variables[var.name] = var
        return var.name

    def add_binary(self, name: str) -> str:
        return self._add(Variable(name, "binary", 0.0, 1.0))

    def add_continuous(self, name: str, lower: float = -math.inf, upper: float = math.inf) -> str:
        if lower > upper:
            raise ValueError(f"variable {name!r} has empty bounds [{lower}, {upper}]")
        return self._add(Variable(name, "continuous", float(lower), float(upper)))

    def add_constraint(self, terms: Iterable[tuple[str, float]], sense: str, rhs: float) -> None:
        terms = tuple((str(n), float(c)) for n, c in terms)
        for n, _ in terms:
            if n not in self.variables:
                raise ValueError(f"constraint references unknown variable {n!r}")
        self.constraints.append(Constraint(terms, sense, float(rhs)))

    def set_objective(self, terms: dict[str, float]) -> None:
        for n in terms:
            if n not in self.variables:
                raise ValueError(f"objective references unknown variable {n!r}")
        self.objective = {str(n): float(c) for n, c in terms.items()}

    def var_order(self) -> list[str]:
        return list(self.variables)

    def binaries(self) -> list[str]:
        return [n for n, v in self.variables.items() if v.kind == "binary"]

    # -- serialization (network attachment is runtime state and is dropped) --

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "kind": v.kind, "lower": v.lower, "upper": v.upper}
                for v in self.variables.values()
            ],
            "constraints": [
                {"terms": [[n, c] for n, c in row.terms], "sense": row.sense, "rhs": row.rhs}
                for row in self.constraints
            ],
            "objective": dict(self.objective),
            "onehot_groups": [list(g) for g in self.onehot_groups],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MilpModel":
        m = cls()
        try:
            for v in d["variables"]:
                m._add(Variable(v["name"], v["kind"], float(v["lower"]), float(v["upper"])))
            for row in d["constraints"]:
                m.add_constraint([(n, c) for n, c in row["terms"]], row["sense"], row["rhs"])
            m.set_objective(d.get("objective", {}))
            m.onehot_groups = [tuple(g) for g in d.get("onehot_groups", [])]
        except (KeyError, TypeError) as err:
            raise ValueError(f"malformed model dict: {err}") from None
        return m

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MilpModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_lp(self, path) -> None:
        """One-way export in CPLEX LP text format (for external solvers/debugging)."""

        def term_str(coef: float, name: str) -> str:
            sign = "+" if coef >= 0 else "-"
            return f"{sign} {abs(coef):.17g} {name}"

        lines = ["\\ mbopt model", "Maximize"]
        obj = " ".join(term_str(c, n) for n, c in self.objective.items()) or "0 " + next(iter(self.variables))
        lines.append(f" obj: {obj}")
        lines.append("Subject To")
        op = {"<=": "<=", ">=": ">=", "=": "="}
        for k, row in enumerate(self.constraints):
            body = " ".join(term_str(c, n) for n, c in row.terms)
            lines.append(f" c{k}: {body} {op[row.sense]} {row.rhs:.17g}")
        lines.append("Bounds")
        for v in self.variables.values():
            if v.kind == "binary":
                continue
            if v.lower == -math.inf and v.upper == math.inf:
                lines.append(f" {v.name} free")
            else:
                lo = "-inf" if v.lower == -math.inf else f"{v.lower:.17g}"
                hi = "+inf" if v.upper == math.inf else f"{v.upper:.17g}"
                lines.append(f" {lo} <= {v.name} <= {hi}")
        bins = self.binaries()
        if bins:
            lines.append("Binaries")
            for start in range(0, len(bins), 16):
                lines.append(" " + " ".join(bins[start : start + 16]))
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def check_assignment(model: MilpModel, assignment: dict[str, float], tol: float = 1e-6) -> list[int]:
    """Indices of rows violated by the assignment beyond ``tol``."""
    bad = []
    for k, row in enumerate(model.constraints):
        lhs = sum(c * assignment[n] for n, c in row.terms)
        if row.sense == "<=" and lhs > row.rhs + tol:
            bad.append(k)
        elif row.sense == ">=" and lhs < row.rhs - tol:
            bad.append(k)
        elif row.sense == "=" and abs(lhs - row.rhs) > tol:
            bad.append(k)
    return bad


@dataclass
class SolveResult:
    """Outcome of one solver call.

    status: "optimal" | "feasible_timeout" | "infeasible" | "error".
    assignment maps variable names to values when an incumbent exists.
    dual_bound is the best proven upper bound (maximization).
    """

    status: str
    assignment: dict[str, float] | None
    objective_value: float | None
    dual_bound: float | None
    wall_time: float
    message: str = ""


class HighsBackend:
    """Branch-and-bound via HiGHS (scipy.optimize.milp).

    Solves to proven optimality (both MIP gaps 0, feasibility tolerances
    tightened to 1e-9) unless the time limit hits first.  ``gap_tol`` is the
    slack used by callers when comparing the incumbent to the dual bound.
    When the model carries a network attachment, the activation variables
    and the objective are recomputed exactly from the rounded bits, so the
    reported value never inherits the solver's integrality slack.
    """

    name = "highs"

    # scipy only documents a few options; the rest go to HiGHS verbatim
    # (with a RuntimeWarning that we silence since these are valid there).
    _OPTIONS = {
        "mip_rel_gap": 0.0,
        "mip_abs_gap": 0.0,
        "mip_feasibility_tolerance": 1e-9,
        "primal_feasibility_tolerance": 1e-9,
        "dual_feasibility_tolerance": 1e-9,
    }

    def solve(self, model: MilpModel, time_limit: float = 500.0, gap_tol: float = 1e-6) -> SolveResult:
        order = model.var_order()
        col = {n: k for k, n in enumerate(order)}
        nvar = len(order)

        c = np.zeros(nvar)
        for n, coef in model.objective.items():
            c[col[n]] = -coef  # HiGHS minimizes

        lb = np.empty(nvar)
        ub = np.empty(nvar)
        integrality = np.zeros(nvar, dtype=int)
        for k, n in enumerate(order):
            v = model.variables[n]
            lb[k], ub[k] = v.lower, v.upper
            integrality[k] = 1 if v.kind == "binary" else 0

        constraints = []
        if model.constraints:
            A = scipy.sparse.lil_matrix((len(model.constraints), nvar))
            row_lb = np.empty(len(model.constraints))
            row_ub = np.empty(len(model.constraints))
            for r, row in enumerate(model.constraints):
                for n, coef in row.terms:
                    A[r, col[n]] += coef
                if row.sense == "<=":
                    row_lb[r], row_ub[r] = -np.inf, row.rhs
                elif row.sense == ">=":
                    row_lb[r], row_ub[r] = row.rhs, np.inf
                else:
                    row_lb[r], row_ub[r] = row.rhs, row.rhs
            constraints = [scipy.optimize.LinearConstraint(A.tocsr(), row_lb, row_ub)]

        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Unrecognized options", category=RuntimeWarning)
            res = scipy.optimize.milp(
                c,
                constraints=constraints,
                integrality=integrality,
                bounds=scipy.optimize.Bounds(lb, ub),
                options={"time_limit": float(time_limit), **self._OPTIONS},
            )
        wall = time.perf_counter() - t0

        def pack(status: str) -> SolveResult:
            have_x = res.x is not None
            assignment = {n: float(res.x[col[n]]) for n in order} if have_x else None
            obj = -float(res.fun) if have_x else None
            dual = getattr(res, "mip_dual_bound", None)
            dual = -float(dual) if dual is not None and np.isfinite(dual) else obj
            if assignment is not None:
                obj = _polish(model, assignment, obj)
            return SolveResult(status, assignment, obj, dual, wall, res.message)

        if res.status == 0:
            return pack("optimal")
        if res.status == 1:
            if res.x is not None:
                return pack("feasible_timeout")
            return SolveResult("error", None, None, None, wall, f"limit hit with no incumbent: {res.message}")
        if res.status == 2:
            return SolveResult("infeasible", None, None, None, wall, res.message)
        return SolveResult("error", None, None, None, wall, res.message)


class ExhaustiveBackend:
    """Ground-truth solver: enumerate every binary completion.

    Only intended for small models; refuses anything past ``cap`` candidates.
    Network variables (when a :class:`NetworkAttachment` is present) are
    derived by a forward pass rather than enumerated, and the big-M rows that
    define them are skipped since they hold exactly by construction.
    """

    name = "exhaustive"

    def __init__(self, cap: int = 2**20, chunk: int = 1 << 14):
        self.cap = cap
        self.chunk = chunk

    def solve(self, model: MilpModel, time_limit: float = 500.0, gap_tol: float = 1e-6) -> SolveResult:
        t0 = time.perf_counter()
        net = model.network
        owned = net.owned_names() if net is not None else set()

        grouped = [g for g in model.onehot_groups]
        in_group = {n for g in grouped for n in g}
        free = [n for n in model.binaries() if n not in in_group and n not in owned]
        enum_names = [n for g in grouped for n in g] + free
        enum_col = {n: k for k, n in enumerate(enum_names)}

        total = 1
        for g in grouped:
            total *= len(g)
        total <<= len(free)
        if total > self.cap:
            raise ValueError(f"exhaustive solve over {total} candidates exceeds cap {self.cap}")
        if total == 0:
            return SolveResult("infeasible", None, None, None, time.perf_counter() - t0)

        for v in model.variables.values():
            if v.kind == "continuous" and v.name not in owned:
                raise ValueError(
                    f"exhaustive solve cannot handle free continuous variable {v.name!r}"
                )

        # Rows over enumerated binaries only; rows touching network variables
        # are implied by the exact forward derivation and skipped.
        rows = []
        for row in model.constraints:
            names = {n for n, _ in row.terms}
            if names & owned:
                continue
            rows.append(row)
        A = np.zeros((len(rows), len(enum_names)))
        rhs = np.zeros(len(rows))
        senses = []
        for r, row in enumerate(rows):
            for n, coef in row.terms:
                A[r, enum_col[n]] += coef
            rhs[r] = row.rhs
            senses.append(row.sense)

        obj_bin = np.zeros(len(enum_names))
        out_coef = 0.0
        for n, coef in model.objective.items():
            if n in enum_col:
                obj_bin[enum_col[n]] = coef
            elif net is not None and n == net.out_name:
                out_coef = coef
            else:
                raise ValueError(f"exhaustive solve cannot score objective variable {n!r}")

        # Mixed-radix layout: group choices vary slowest-first, free bits last.
        radices = [len(g) for g in grouped] + [2] * len(free)
        strides = np.ones(len(radices), dtype=np.int64)
        for k in range(len(radices) - 2, -1, -1):
            strides[k] = strides[k + 1] * radices[k + 1]
        group_offsets = np.cumsum([0] + [len(g) for g in grouped])[:-1]

        net_cols = None
        if net is not None:
            net_cols = np.array([enum_col[n] for n in net.z_names], dtype=np.int64)

        best_val = -np.inf
        best_row = None
        best_rank = None
        for start in range(0, total, self.chunk):
            idx = np.arange(start, min(start + self.chunk, total), dtype=np.int64)
            Z = np.zeros((len(idx), len(enum_names)))
            for k in range(len(grouped)):
                choice = (idx // strides[k]) % radices[k]
                Z[np.arange(len(idx)), group_offsets[k] + choice] = 1.0
            for k in range(len(free)):
                bit = (idx // strides[len(grouped) + k]) % 2
                Z[:, len(in_group) + k] = bit

            feas = np.ones(len(idx), dtype=bool)
            if rows:
                lhs = Z @ A.T
                for r, s in enumerate(senses):
                    if s == "<=":
                        feas &= lhs[:, r] <= rhs[r] + 1e-9
                    elif s == ">=":
                        feas &= lhs[:, r] >= rhs[r] - 1e-9
                    else:
                        feas &= np.abs(lhs[:, r] - rhs[r]) <= 1e-9
            if not feas.any():
                continue

            vals = Z @ obj_bin
            if net is not None and out_coef != 0.0:
                vals = vals + out_coef * net.net.forward(Z[:, net_cols])
            vals = np.where(feas, vals, -np.inf)
            k = int(np.argmax(vals))  # first max within the chunk
            if vals[k] > best_val:
                best_val = float(vals[k])
                best_row = Z[k].copy()
                best_rank = start + k

        wall = time.perf_counter() - t0
        if best_row is None:
            return SolveResult("infeasible", None, None, None, wall)
        assignment = {n: float(best_row[enum_col[n]]) for n in enum_names}
        if net is not None:
            assignment.update(_derive_network_values(net, best_row[net_cols]))
        return SolveResult("optimal", assignment, best_val, best_val, wall,
                           f"enumerated {total} candidates, argmax at rank {best_rank}")


def _polish(model: MilpModel, assignment: dict[str, float], obj: float | None) -> float | None:
    """Snap binaries to integers and rederive network values exactly.

    Mutates the assignment in place; returns the objective recomputed from
    it.  Without a network attachment only the rounding happens.
    """
    for n, v in model.variables.items():
        if v.kind == "binary":
            assignment[n] = float(round(assignment[n]))
    net = model.network
    if net is not None:
        z = np.array([assignment[n] for n in net.z_names])
        assignment.update(_derive_network_values(net, z))
    if model.objective:
        return float(sum(c * assignment[n] for n, c in model.objective.items()))
    return obj


def _derive_network_values(net: NetworkAttachment, z: np.ndarray) -> dict[str, float]:
    vals: dict[str, float] = {}
    h = np.asarray(z, dtype=float)
    for l, (W, b) in enumerate(net.net.layers[:-1]):
        pre = W @ h + b
        h = np.maximum(pre, 0.0)
        for k, name in enumerate(net.y_names[l]):
            vals[name] = float(h[k])
        for k, name in enumerate(net.alpha_names[l]):
            if name is not None:
                vals[name] = 1.0 if pre[k] > 0 else 0.0
    W, b = net.net.layers[-1]
    vals[net.out_name] = float((W @ h + b)[0])
    return vals


_BACKENDS = {"highs": HighsBackend, "exhaustive": ExhaustiveBackend}


def get_backend(name: str):
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown solver backend {name!r}; have {sorted(_BACKENDS)}") from None


def default_backend():
    """Backend selected by $MBO_BACKEND, falling back to HiGHS."""
    return get_backend(os.environ.get("MBO_BACKEND", "highs"))


# -- domain models --------------------------------------------------------


def build_domain_model(domain: CategoricalDomain) -> MilpModel:
    """One-hot bits, exactly-one rows per variable, and the domain's rows."""
    m = MilpModel()
    groups = []
    for i, a in enumerate(domain.alphabets):
        g = tuple(m.add_binary(z_name(i, j)) for j in range(len(a)))
        m.add_constraint([(n, 1.0) for n in g], "=", 1.0)
        groups.append(g)
    m.onehot_groups = groups
    for con in domain.constraints:
        m.add_constraint(
            [(z_name(i, j), float(c)) for i, j, c in con.terms], con.sense, float(con.rhs)
        )
    return m


def bits_from_assignment(model: MilpModel, assignment: dict[str, float]) -> np.ndarray:
    """Round the one-hot block values of a solution back to a 0/1 vector."""
    bits = []
    for g in model.onehot_groups:
        for n in g:
            v = assignment[n]
            if abs(v - round(v)) > 1e-4:
                raise ValueError(f"variable {n} is fractional in solution: {v}")
            bits.append(int(round(v)))
    return np.array(bits, dtype=np.int8)


def random_objective_solve(
    domain_model: MilpModel,
    seed: int,
    backend=None,
    extra_rows: Sequence[Constraint] = (),
    time_limit: float = 500.0,
) -> EncodedPoint:
    """Maximize a uniform(-1, 1) objective over the domain polytope.

    Used to draw well-spread feasible points when rejection sampling is
    hopeless.  Raises ValueError if the domain is infeasible.
    """
    backend = backend or default_backend()
    rng = np.random.default_rng(seed)
    m = MilpModel.from_dict(domain_model.to_dict())
    m.onehot_groups = list(domain_model.onehot_groups)
    names = [n for g in m.onehot_groups for n in g]
    m.set_objective({n: float(rng.uniform(-1.0, 1.0)) for n in names})
    for row in extra_rows:
        m.add_constraint(row.terms, row.sense, row.rhs)
    res = backend.solve(m, time_limit=time_limit)
    if res.status == "infeasible":
        raise ValueError("domain has no feasible point under the given rows")
    if res.assignment is None:
        raise ValueError(f"random-objective solve failed: {res.status} ({res.message})")
    return EncodedPoint(bits_from_assignment(m, res.assignment))

"""Activation bound tightening and big-M MILP encodings of ReLU networks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .domain import CategoricalDomain
from .milp import MilpModel, NetworkAttachment
from .surrogate import MLPSurrogate

# Bounds within this of zero pin a neuron's phase instead of leaving it free.
FIX_TOL = 1e-9
# Slack added to every big-M constant when rows are emitted, so bounds that
# are tight to the last float never cut off the true activation.
BOUND_PAD = 1e-6

_STATUSES = ("free", "always_off", "always_on")


@dataclass(frozen=True)
class NeuronBounds:
    """Pre-activation bounds for one hidden unit.

    ``M0`` bounds the pre-activation from above, ``M1`` bounds its negation
    from above (so the pre-activation lies in [-M1, M0]).  A non-positive
    ``M0`` means the unit can never fire; a non-positive ``M1`` means it
    always does.
    """

    M0: float
    M1: float
    status: str

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise ValueError(f"unknown neuron status {self.status!r}")


def classify(M0: float, M1: float, tol: float = FIX_TOL) -> NeuronBounds:
    """Apply the phase-fixing rule; ties at zero fix the neuron (off wins)."""
    if M0 <= tol:
        return NeuronBounds(M0, M1, "always_off")
    if M1 <= tol:
        return NeuronBounds(M0, M1, "always_on")
    return NeuronBounds(M0, M1, "free")


def interval_bounds(
    net: MLPSurrogate, input_box: tuple[np.ndarray, np.ndarray] | None = None
) -> list[list[NeuronBounds]]:
    """Interval-arithmetic bounds, layer by layer.

    The input box defaults to [0, 1] per coordinate (one-hot bits).  Each
    hidden layer's activations are boxed as [0, max(0, M0)] before the next
    layer is propagated.
    """
    if input_box is None:
        L = np.zeros(net.input_width)
        U = np.ones(net.input_width)
    else:
        L = np.asarray(input_box[0], dtype=float)
        U = np.asarray(input_box[1], dtype=float)
        if L.shape != (net.input_width,) or U.shape != (net.input_width,):
            raise ValueError("input box shape does not match network input width")

    layers = []
    for W, b in net.layers[:-1]:
        Wp = np.maximum(W, 0.0)
        Wn = np.minimum(W, 0.0)
        hi = Wp @ U + Wn @ L + b
        lo = Wp @ L + Wn @ U + b
        layers.append([classify(float(h), float(-l)) for h, l in zip(hi, lo)])
        L = np.zeros(len(b))
        U = np.maximum([nb.M0 for nb in layers[-1]], 0.0)
    return layers


@dataclass
class BoundsReport:
    """LP tightening result; ``used_fallback`` flags a solver failure."""

    layers: list[list[NeuronBounds]]
    used_fallback: bool = False


class _LpFailure(Exception):
    pass


def _default_lp(c, A_ub, b_ub, A_eq, b_eq, bounds) -> float:
    res = scipy.optimize.linprog(
        c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None,
        bounds=bounds, method="highs",
    )
    if res.status != 0:
        raise _LpFailure(f"linprog status {res.status}: {res.message}")
    return float(res.fun)


def lp_bounds(
    net: MLPSurrogate, domain: CategoricalDomain, lp_solver: Callable | None = None
) -> BoundsReport:
    """Per-neuron LP bounds over the relaxed one-hot polytope.

    Each pre-activation is minimized/maximized subject to: relaxed [0, 1]
    bits, the exactly-one rows, the domain's linear rows, and (for deeper
    layers) equality rows for fixed earlier neurons plus the triangle
    relaxation of free ones.  Results are clamped to never exceed the
    interval bounds, and fall back to them entirely if an LP solve fails.
    """
    solver = lp_solver or _default_lp
    interval = interval_bounds(net)
    width = net.input_width
    if width != domain.width:
        raise ValueError(f"network input width {width} != domain width {domain.width}")
    hidden = [len(b) for _, b in net.layers[:-1]]
    nvar = width + sum(hidden)
    y_base = list(np.cumsum([width] + hidden))[:-1]  # first y column per layer

    bounds = [(0.0, 1.0)] * width + [(0.0, None)] * sum(hidden)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []

    for i, a in enumerate(domain.alphabets):
        row = np.zeros(nvar)
        row[domain.offsets[i] : domain.offsets[i] + len(a)] = 1.0
        A_eq.append(row)
        b_eq.append(1.0)
    Ad, senses, rhs = domain.constraint_arrays()
    for r, s in enumerate(senses):
        row = np.zeros(nvar)
        row[:width] = Ad[r]
        if s == "<=":
            A_ub.append(row); b_ub.append(rhs[r])
        elif s == ">=":
            A_ub.append(-row); b_ub.append(-rhs[r])
        else:
            A_eq.append(row); b_eq.append(rhs[r])

    layers: list[list[NeuronBounds]] = []
    try:
        for l, (W, b) in enumerate(net.layers[:-1]):
            prev = slice(0, width) if l == 0 else slice(y_base[l - 1], y_base[l - 1] + hidden[l - 1])
            out: list[NeuronBounds] = []
            for k in range(len(b)):
                c = np.zeros(nvar)
                c[prev] = -W[k]
                hi = -solver(c, A_ub, b_ub, A_eq, b_eq, bounds) + b[k]
                lo = solver(-c, A_ub, b_ub, A_eq, b_eq, bounds) + b[k]
                iv = interval[l][k]
                out.append(classify(min(hi, iv.M0), min(-lo, iv.M1)))
            layers.append(out)

            # Relaxation rows for this layer, used when bounding the next one.
            for k, nb in enumerate(out):
                yk = y_base[l] + k
                if nb.status == "always_off":
                    bounds[yk] = (0.0, 0.0)
                    continue
                bounds[yk] = (0.0, max(nb.M0, 0.0))
                if nb.status == "always_on":
                    row = np.zeros(nvar)
                    row[yk] = 1.0
                    row[prev] -= W[k]
                    A_eq.append(row); b_eq.append(b[k])
                else:
                    row = np.zeros(nvar)  # pre - y <= 0
                    row[prev] = W[k]
                    row[yk] = -1.0
                    A_ub.append(row); b_ub.append(-b[k])
                    row = np.zeros(nvar)  # (M0+M1) y - M0 pre <= M0 M1
                    row[yk] = nb.M0 + nb.M1
                    row[prev] -= nb.M0 * W[k]
                    A_ub.append(row); b_ub.append(nb.M0 * b[k] + nb.M0 * nb.M1)
    except _LpFailure:
        return BoundsReport(interval, used_fallback=True)
    return BoundsReport(layers, used_fallback=False)


def compute_bounds(net: MLPSurrogate, domain: CategoricalDomain, mode: str = "lp") -> list[list[NeuronBounds]]:
    if mode == "interval":
        return interval_bounds(net)
    if mode == "lp":
        return lp_bounds(net, domain).layers
    raise ValueError(f"unknown bound mode {mode!r} (expected 'interval' or 'lp')")


def encode_network(
    model: MilpModel,
    net: MLPSurrogate,
    bounds: Sequence[Sequence[NeuronBounds]],
    z_names: Sequence[str] | None = None,
) -> NetworkAttachment:
    """Append big-M rows for the network to ``model``.

    Free neurons get a continuous activation ``y``, a binary phase indicator
    ``a``, and three rows::

        y <= M0' a
        w.x + b <= y
        y <= w.x + b + M1' (1 - a)

    where M0'/M1' are the padded bounds.  Always-off neurons contribute the
    single row ``y = 0``; always-on neurons ``y = w.x + b``.  The scalar
    output variable ``out`` is tied to the last hidden layer by one equality
    row; callers point the objective at it.

    Raises ValueError if a free neuron carries a negative bound (those must
    be fixed before encoding).
    """
    if z_names is None:
        z_names = [n for g in model.onehot_groups for n in g]
    z_names = tuple(z_names)
    if len(z_names) != net.input_width:
        raise ValueError(f"{len(z_names)} input names for a width-{net.input_width} network")
    hidden = net.layers[:-1]
    if len(bounds) != len(hidden) or any(len(bl) != len(b) for bl, (_, b) in zip(bounds, hidden)):
        raise ValueError("bounds shape does not match the network's hidden layers")

    y_names: list[tuple[str, ...]] = []
    alpha_names: list[tuple[str | None, ...]] = []
    prev: tuple[str, ...] = z_names
    for l, (W, b) in enumerate(hidden):
        ys, alphas = [], []
        for k in range(len(b)):
            nb = bounds[l][k]
            y = f"y_{l}_{k}"
            if nb.status == "free":
                if nb.M0 < 0 or nb.M1 < 0:
                    raise ValueError(
                        f"neuron ({l},{k}) is free but has inconsistent bounds "
                        f"M0={nb.M0}, M1={nb.M1}; fix its phase instead"
                    )
                m0 = nb.M0 + BOUND_PAD
                m1 = nb.M1 + BOUND_PAD
                a = f"a_{l}_{k}"
                model.add_continuous(y, 0.0, m0)
                model.add_binary(a)
                model.add_constraint([(y, 1.0), (a, -m0)], "<=", 0.0)
                model.add_constraint([*((p, W[k, i]) for i, p in enumerate(prev)), (y, -1.0)], "<=", -b[k])
                model.add_constraint(
                    [(y, 1.0), *((p, -W[k, i]) for i, p in enumerate(prev)), (a, m1)],
                    "<=",
                    b[k] + m1,
                )
                alphas.append(a)
            elif nb.status == "always_off":
                model.add_continuous(y, 0.0, 0.0)
                model.add_constraint([(y, 1.0)], "=", 0.0)
                alphas.append(None)
            else:  # always_on
                model.add_continuous(y, 0.0, max(nb.M0, 0.0) + BOUND_PAD)
                model.add_constraint(
                    [(y, 1.0), *((p, -W[k, i]) for i, p in enumerate(prev))], "=", b[k]
                )
                alphas.append(None)
            ys.append(y)
        y_names.append(tuple(ys))
        alpha_names.append(tuple(alphas))
        prev = tuple(ys)

    W, b = net.layers[-1]
    out = model.add_continuous("out")
    model.add_constraint([(out, 1.0), *((p, -W[0, i]) for i, p in enumerate(prev))], "=", b[0])

    attachment = NetworkAttachment(
        net=net,
        z_names=z_names,
        y_names=tuple(y_names),
        alpha_names=tuple(alpha_names),
        out_name=out,
    )
    model.network = attachment
    return attachment


def dump_bounds_csv(layers: Sequence[Sequence[NeuronBounds]], path) -> None:
    """Debug dump: one row per hidden neuron."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "neuron", "M0", "M1", "status"])
        for l, layer in enumerate(layers):
            for k, nb in enumerate(layer):
                w.writerow([l, k, repr(nb.M0), repr(nb.M1), nb.status])

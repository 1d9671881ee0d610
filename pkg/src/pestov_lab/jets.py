"""Nested directional derivatives along fundamental and standard fields.

For a chain ``[V_1, ..., V_k]`` the quantity ``(V_1 V_2 ... V_k f)(w)`` equals
``d/dt_1 ... d/dt_k f(phi^k_{t_k}( ... phi^1_{t_1}(w)))`` at ``t = 0``: the
leftmost field is differentiated last, so its flow is applied to ``w`` first.

The jet method pushes the state ``(x, a)`` forward by ``state + eps_i V_i(state)``
for a fresh nilpotent ``eps_i`` per field.  Since ``eps_i**2 = 0`` this
first-order step is the exact flow to the order that survives, and every
velocity is evaluated on the jet-valued state, so mixed coefficients come out
exact.  The finite-difference method evaluates the real flows on a tensor
product centered stencil and applies Richardson extrapolation.
"""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import hyperdual as hd
from .errors import UnsupportedOrderError
from .frame_bundle import FramePoint, b_theta_flow, standard_velocity, vertical_flow
from .lie import SkewForm

__all__ = [
    "MAX_ORDER",
    "ScalarField",
    "Vertical",
    "Standard",
    "FieldSpec",
    "derive",
    "jet_chain",
    "commutator_apply",
    "apply_field",
    "fd_derive",
]

MAX_ORDER = 4
FD_STEP = 1e-2
FD_LEVELS = 2


class ScalarField:
    """A smooth function on the frame bundle.

    ``evaluate(x, a, chart)`` must accept plain arrays or jets for ``x`` (..., n)
    and ``a`` (..., n, n) and return values of the batch shape.  Fields can be
    added, multiplied and scaled.
    """

    def __init__(self, fn=None, name="field"):
        self._fn = fn
        self.name = name

    def evaluate(self, x, a, chart):
        return self._fn(x, a, chart)

    def __call__(self, w):
        return np.asarray(self.evaluate(w.x, w.a, w.chart_id), dtype=float)

    def __add__(self, other):
        other = _as_field(other)
        return ScalarField(lambda x, a, c: self.evaluate(x, a, c) + other.evaluate(x, a, c), "sum")

    __radd__ = __add__

    def __mul__(self, other):
        other = _as_field(other)
        return ScalarField(lambda x, a, c: self.evaluate(x, a, c) * other.evaluate(x, a, c), "product")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_as_field(other))

    def __repr__(self):
        return f"ScalarField({self.name})"


def _as_field(f):
    if isinstance(f, ScalarField):
        return f
    c = float(f)
    return ScalarField(lambda x, a, chart: c + 0.0 * (x * x).sum(-1), "constant")


@dataclass(frozen=True, eq=False)
class Vertical:
    """The fundamental field ``Y_xi``; ``xi`` may be a batch of skew matrices."""

    xi: object

    @property
    def matrix(self):
        return self.xi.matrix if isinstance(self.xi, SkewForm) else np.asarray(self.xi, dtype=float)

    def velocity(self, model, x, a):
        return 0.0 * x, a @ self.matrix


@dataclass(frozen=True, eq=False)
class Standard:
    """The standard horizontal field ``B_theta``; ``theta`` may be a batch of vectors."""

    theta: object

    @property
    def vector(self):
        t = self.theta
        return np.asarray(getattr(t, "theta", t), dtype=float)

    def velocity(self, model, x, a):
        return standard_velocity(model, x, a, self.vector)


FieldSpec = (Vertical, Standard)


def _check_chain(chain):
    chain = list(chain)
    if not 1 <= len(chain) <= MAX_ORDER:
        raise UnsupportedOrderError(f"chains of length 1..{MAX_ORDER} are supported, got {len(chain)}")
    for spec in chain:
        if not isinstance(spec, FieldSpec):
            raise TypeError(f"chain entries must be Vertical or Standard, got {type(spec).__name__}")
    return chain


def _push(model, x, a, spec):
    dx, da = spec.velocity(model, x, a)
    return hd.as_jet(x).extend(dx), hd.as_jet(a).extend(da)


def jet_chain(model, f, w, chain):
    """Jet of ``f`` after pushing ``w`` along every field of ``chain``.

    Row ``S`` (a bit mask over chain positions) of the result is the derivative
    of ``f`` along the fields in ``S``, in chain order.
    """
    chain = _check_chain(chain)
    x, a = w.x, w.a
    for spec in chain:
        x, a = _push(model, x, a, spec)
    out = hd.as_jet(f.evaluate(x, a, w.chart_id))
    return out.padded(len(chain))


def apply_field(model, spec, f):
    """The field ``V f`` as a new jet-capable :class:`ScalarField`."""

    def fn(x, a, chart):
        m = hd.nvars_of(x, a)
        x1, a1 = _push(model, x, a, spec)
        return hd.as_jet(f.evaluate(x1, a1, chart)).derivative(m + 1)

    return ScalarField(fn, f"{type(spec).__name__}({f.name})")


def _flow(model, w, spec, t, dt):
    if isinstance(spec, Vertical):
        return vertical_flow(w, spec.matrix, t)
    return b_theta_flow(model, w, spec.vector, t, dt)


def fd_derive(model, f, w, chain, h=FD_STEP):
    """One centered tensor-product stencil estimate with step ``h`` (error ``O(h^2)``)."""
    chain = _check_chain(chain)
    dt = min(1e-3, h / 10.0)
    total = 0.0
    for signs in product((1.0, -1.0), repeat=len(chain)):
        p = w
        for spec, s in zip(chain, signs):
            p = _flow(model, p, spec, s * h, dt)
        total = total + math.prod(signs) * f(p)
    return total / (2.0 * h) ** len(chain)


def _richardson(model, f, w, chain, h, levels):
    table = [fd_derive(model, f, w, chain, h / 2**k) for k in range(levels + 1)]
    for level in range(1, levels + 1):
        factor = 4.0**level
        table = [(factor * table[k + 1] - table[k]) / (factor - 1.0) for k in range(len(table) - 1)]
    return table[0]


def derive(model, f, w, chain, method="jet", h=FD_STEP, levels=FD_LEVELS):
    """``(V_1 ... V_k f)(w)`` for ``chain = [V_1, ..., V_k]``, ``k <= 4``.

    ``method="jet"`` is exact up to floating point; ``method="fd"`` uses
    centered differences with step ``h`` and ``levels`` Richardson levels.
    """
    chain = _check_chain(chain)
    method = str(method).lower()
    if method == "jet":
        jet = jet_chain(model, f, w, chain)
        return jet.coeffs[-1]
    if method == "fd":
        return _richardson(model, f, w, chain, h, levels)
    raise ValueError(f"unknown derivative method {method!r}")


def commutator_apply(model, f, w, first, second, method="jet"):
    """``(A B f - B A f)(w)``."""
    if first is second:
        return np.zeros(np.shape(w.x)[:-1])
    return derive(model, f, w, [first, second], method) - derive(model, f, w, [second, first], method)

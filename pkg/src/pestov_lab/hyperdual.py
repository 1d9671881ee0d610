"""Multilinear jets: truncated Taylor polynomials in nilpotent parameters.

A :class:`Jet` with ``m`` parameters ``eps_0 .. eps_{m-1}`` (``eps_i**2 == 0``)
stores one coefficient array per subset ``S`` of the parameters, at the row
whose bit pattern is ``S``.  Row ``0`` is the plain value and row ``2**m - 1``
is the mixed partial ``d^m / d eps_0 ... d eps_{m-1}``.

Each parameter is a univariate truncation at order one, so nesting ``m`` of
them gives exact mixed derivatives of total order ``m``.  Trailing array
semantics follow numpy (broadcasting, ``...`` indexing, ``@``).

Jets are combined with plain arrays freely; numpy defers to the Jet operators.
"""

from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "Jet",
    "as_jet",
    "value_of",
    "nvars_of",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "power",
    "einsum",
    "stack",
    "where",
]


@lru_cache(maxsize=None)
def _subset_pairs(m):
    """For every subset S of m bits, index arrays (T, S minus T) over T subset of S."""
    pairs = []
    for s in range(1 << m):
        subs = []
        t = s
        while True:
            subs.append(t)
            if t == 0:
                break
            t = (t - 1) & s
        subs = np.array(sorted(subs), dtype=np.intp)
        pairs.append((subs, s ^ subs))
    return tuple(pairs)


def _pad(coeffs, m):
    rows = coeffs.shape[0]
    if rows == 1 << m:
        return coeffs
    out = np.zeros(((1 << m),) + coeffs.shape[1:], dtype=coeffs.dtype)
    out[:rows] = coeffs
    return out


class Jet:
    """Truncated multilinear Taylor polynomial with array-valued coefficients."""

    __array_ufunc__ = None
    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        rows = coeffs.shape[0]
        if rows & (rows - 1):
            raise ValueError(f"jet needs a power-of-two row count, got {rows}")
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value):
        return cls(np.asarray(value, dtype=float)[None])

    @property
    def nvars(self):
        return self.coeffs.shape[0].bit_length() - 1

    @property
    def value(self):
        return self.coeffs[0]

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def ndim(self):
        return self.coeffs.ndim - 1

    def padded(self, m):
        if m < self.nvars:
            raise ValueError("cannot drop jet parameters by padding")
        return Jet(_pad(self.coeffs, m))

    def extend(self, direction):
        """Return ``self + eps * direction`` with a fresh parameter ``eps``."""
        direction = as_jet(direction)
        m = max(self.nvars, direction.nvars)
        lo, hi = _rank_match(_pad(self.coeffs, m), _pad(direction.coeffs, m))
        lo, hi = np.broadcast_arrays(lo, hi)
        return Jet(np.concatenate([lo, hi], axis=0))

    def top(self):
        """Coefficient of the most recent parameter (a jet with one fewer)."""
        if self.nvars == 0:
            raise ValueError("constant jet has no parameter to extract")
        half = self.coeffs.shape[0] // 2
        return Jet(self.coeffs[half:])

    def derivative(self, m):
        """Coefficient of parameter ``m - 1`` after padding to ``m`` parameters."""
        if self.nvars < m:
            return Jet(np.zeros(((1 << (m - 1)),) + self.shape))
        return self.top()

    # ---- structural -----------------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coeffs[(slice(None),) + key])

    def __len__(self):
        return self.coeffs.shape[1]

    def sum(self, axis=None):
        if axis is None:
            return Jet(self.coeffs.reshape(self.coeffs.shape[0], -1).sum(axis=1))
        return Jet(self.coeffs.sum(axis=_shift_axis(axis, self.ndim)))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape((self.coeffs.shape[0],) + tuple(shape)))

    def swapaxes(self, i, j):
        return Jet(self.coeffs.swapaxes(_shift_axis(i, self.ndim), _shift_axis(j, self.ndim)))

    @property
    def mT(self):
        return self.swapaxes(-1, -2)

    def copy(self):
        return Jet(self.coeffs.copy())

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, shape={self.shape})"

    # ---- arithmetic -----------------------------------------------------
    def __neg__(self):
        return Jet(-self.coeffs)

    def __pos__(self):
        return self

    def __add__(self, other):
        return _linear(self, as_jet(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return _linear(self, as_jet(other), -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return _bilinear(self, other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * power(other, -1.0)
        ca, cb = _rank_match(self.coeffs, np.asarray(other, dtype=float)[None])
        return Jet(ca / cb)

    def __rtruediv__(self, other):
        return power(self, -1.0) * other

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return _bilinear(self, other, np.matmul)

    def __rmatmul__(self, other):
        return _bilinear(as_jet(other), self, np.matmul)


def _shift_axis(axis, ndim):
    if axis < 0:
        return axis
    if axis >= ndim:
        raise np.exceptions.AxisError(axis, ndim)
    return axis + 1


def as_jet(x):
    return x if isinstance(x, Jet) else Jet.constant(x)


def value_of(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def nvars_of(*xs):
    return max((x.nvars for x in xs if isinstance(x, Jet)), default=0)


def _rank_match(a, b):
    """Insert unit axes after the jet axis so trailing ranks agree."""
    da, db = a.ndim, b.ndim
    if da < db:
        a = a.reshape((a.shape[0],) + (1,) * (db - da) + a.shape[1:])
    elif db < da:
        b = b.reshape((b.shape[0],) + (1,) * (da - db) + b.shape[1:])
    return a, b


def _linear(a, b, sign):
    m = max(a.nvars, b.nvars)
    ca, cb = _rank_match(_pad(a.coeffs, m), _pad(b.coeffs, m))
    return Jet(ca + sign * cb)


def _bilinear(a, b, op):
    """Product rule for a bilinear numpy op (``multiply`` or ``matmul``).

    Matmul operands must be at least 2-D in their trailing shape.
    """
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return op(a, b)
    a, b = as_jet(a), as_jet(b)
    if b.nvars == 0 or a.nvars == 0:
        return Jet(op(*_rank_match(a.coeffs, b.coeffs)))
    m = max(a.nvars, b.nvars)
    ca, cb = _rank_match(_pad(a.coeffs, m), _pad(b.coeffs, m))
    rows = []
    for subs, comps in _subset_pairs(m):
        acc = op(ca[subs[0]], cb[comps[0]])
        for t, u in zip(subs[1:], comps[1:]):
            acc += op(ca[t], cb[u])
        rows.append(acc)
    return Jet(np.stack(rows))


def einsum(subscripts, a, b):
    """Two-operand ``np.einsum`` extended to jets (bilinear product rule)."""
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.einsum(subscripts, a, b)
    a, b = as_jet(a), as_jet(b)
    if b.nvars == 0:
        return Jet(np.einsum(f"Z{sa},{sb}->Z{out}", a.coeffs, b.coeffs[0]))
    if a.nvars == 0:
        return Jet(np.einsum(f"{sa},Z{sb}->Z{out}", a.coeffs[0], b.coeffs))
    m = max(a.nvars, b.nvars)
    ca, cb = _pad(a.coeffs, m), _pad(b.coeffs, m)
    spec = f"Z{sa},Z{sb}->{out}"
    return Jet(np.stack([np.einsum(spec, ca[t], cb[u]) for t, u in _subset_pairs(m)]))


def stack(items, axis=0):
    """``np.stack`` over a mix of jets and arrays."""
    if not any(isinstance(i, Jet) for i in items):
        return np.stack([np.asarray(i, dtype=float) for i in items], axis=axis)
    m = nvars_of(*items)
    cs = [_pad(as_jet(i).coeffs, m) for i in items]
    nd = max(c.ndim for c in cs)
    cs = [c.reshape((c.shape[0],) + (1,) * (nd - c.ndim) + c.shape[1:]) for c in cs]
    cs = np.broadcast_arrays(*cs)
    nd = cs[0].ndim - 1
    ax = axis + 1 if axis >= 0 else axis + nd + 2
    return Jet(np.stack(cs, axis=ax))


def where(mask, a, b):
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(mask, a, b)
    m = nvars_of(a, b)
    ca, cb = _rank_match(_pad(as_jet(a).coeffs, m), _pad(as_jet(b).coeffs, m))
    return Jet(np.where(np.asarray(mask)[None], ca, cb))


def _compose(u, derivs):
    """Evaluate ``f(u)`` from the Taylor coefficients ``derivs[k] = f^(k)(u0)``."""
    m = u.nvars
    nil = u.coeffs.copy()
    nil[0] = 0.0
    nil = Jet(nil)
    out = np.zeros_like(u.coeffs)
    out[0] = derivs[0]
    acc = Jet(out)
    term = None
    for k in range(1, m + 1):
        term = nil if term is None else term * nil
        acc = acc + term * (derivs[k] / factorial(k))
    return acc


def _unary(x, fn, derivs_fn):
    if not isinstance(x, Jet):
        return fn(np.asarray(x, dtype=float))
    if x.nvars == 0:
        return Jet(fn(x.coeffs))
    return _compose(x, derivs_fn(x.value, x.nvars))


def sin(x):
    def d(u0, m):
        s, c = np.sin(u0), np.cos(u0)
        return [(s, c, -s, -c)[k % 4] for k in range(m + 1)]

    return _unary(x, np.sin, d)


def cos(x):
    def d(u0, m):
        s, c = np.sin(u0), np.cos(u0)
        return [(c, -s, -c, s)[k % 4] for k in range(m + 1)]

    return _unary(x, np.cos, d)


def exp(x):
    def d(u0, m):
        e = np.exp(u0)
        return [e] * (m + 1)

    return _unary(x, np.exp, d)


def log(x):
    def d(u0, m):
        out = [np.log(u0)]
        for k in range(1, m + 1):
            out.append((-1.0) ** (k - 1) * factorial(k - 1) / u0**k)
        return out

    return _unary(x, np.log, d)


def power(x, p):
    p = float(p)

    def d(u0, m):
        out, coef = [], 1.0
        for k in range(m + 1):
            out.append(coef * u0 ** (p - k))
            coef *= p - k
        return out

    return _unary(x, lambda v: v**p, d)


def sqrt(x):
    return power(x, 0.5)

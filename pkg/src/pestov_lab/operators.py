"""Differential operators on functions on the frame bundle.

Components of 2-forms are listed over the basis ``e_i ^ e_j`` (i < j) in
lexicographic order, with index 0 standing for ``e_1``.  The operators are

* ``X = B_{e_1}``, the generator of the frame flow;
* the vertical gradient, components ``Y_{ij} f``;
* the horizontal gradient, components ``B_{e_j} f`` along ``e_1 ^ e_j`` and zero elsewhere;
* their formal adjoints ``-sum Y_{ij} F_ij`` and ``-sum_j B_{e_j} F_1j``;
* the curvature operator ``R_FM(w)`` on 2-forms, with matrix
  ``R[b, a] = <R_FM w_a, w_b>``, nonzero only in rows ``b = (1, q)`` where it
  equals ``Rm(w e_q, w e_1, w e_i, w e_j)`` for ``a = (i, j)``.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import hyperdual as hd
from . import manifold as mf
from .jets import ScalarField, Standard, Vertical, apply_field, commutator_apply, derive
from .lie import SkewForm, basis_matrix, bracket, pairs, skew_from_components

__all__ = [
    "FunctionKind",
    "TestFunctionFamily",
    "TwoFormField",
    "StructuralKind",
    "Residual",
    "e1",
    "unit",
    "X_apply",
    "grad_V",
    "grad_H",
    "div_V",
    "div_H",
    "frame_riemann",
    "R_FM_matrix",
    "R_FM_apply",
    "R_FM_pairing",
    "bb_form",
    "structural_residual",
    "relative",
]


def unit(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def e1(n):
    return unit(n, 0)


def relative(residual, scale):
    """Residual divided by the largest term magnitude, floored at 1e-12."""
    return np.asarray(residual) / np.maximum(np.asarray(scale), 1e-12)


# ---- test functions ---------------------------------------------------------


class FunctionKind(str, Enum):
    TORUS_TRIG_POLY = "TorusTrigPoly"
    GROUP_MATRIX_POLY = "GroupMatrixPoly"
    CHART_BUMP = "ChartBump"


def _poly_tensors(rng, dim, degree):
    return [rng.standard_normal((dim,) * k) / np.sqrt(dim**k) for k in range(degree + 1)]


def _poly(z, tensors):
    """``sum_k T_k(z, ..., z)``; jet-capable in ``z`` (..., d)."""
    out = tensors[0][()] + 0.0 * z[..., 0]
    batch = hd.value_of(z).shape[:-1]
    for t in tensors[1:]:
        d = t.shape[0]
        if t.ndim == 1:
            out = out + (z * t).sum(-1)
            continue
        y = (z @ t.reshape(d, -1)).reshape(*batch, *t.shape[1:])
        for _ in range(t.ndim - 1):
            y = (y * _expand(z, y)).sum(-1)
        out = out + y
    return out


def _expand(z, y):
    """Reshape ``z`` (..., d) to broadcast against the last axis of ``y``."""
    key = (Ellipsis,) + (None,) * (y.ndim - z.ndim) + (slice(None),)
    return z[key]


class TestFunctionFamily(ScalarField):
    """A seeded random smooth test function on the frame bundle of a model.

    * ``TorusTrigPoly``: sum of Fourier modes in ``x`` (integer wave vectors in
      units of ``2 pi / period``) times polynomials of ``degree`` in the entries
      of ``a``, plus one ``x``-independent polynomial.
    * ``GroupMatrixPoly``: polynomial in the entries of the SO(n+1) matrix of the
      frame (sphere only), so it is smooth across charts.
    * ``ChartBump``: bump ``exp(1 - 1 / (1 - |x|^2 / rho^2))`` supported in the
      ball of radius ``rho`` times a Fourier factor and a polynomial in ``a``.

    ``columns`` restricts the dependence on ``a`` to those columns (for the
    sphere: to the base point and those frame vectors), which makes the
    function invariant under rotations fixing them.
    """

    __test__ = False

    def __init__(self, model, kind=None, degree=2, seed=0, columns=None, modes=2, rho=0.95):
        default = {
            mf.ModelKind.FLAT_TORUS: FunctionKind.TORUS_TRIG_POLY,
            mf.ModelKind.ROUND_SPHERE: FunctionKind.GROUP_MATRIX_POLY,
        }.get(model.kind, FunctionKind.CHART_BUMP)
        self.kind = FunctionKind(kind) if kind is not None else default
        if self.kind is FunctionKind.TORUS_TRIG_POLY and model.kind is not mf.ModelKind.FLAT_TORUS:
            raise ValueError("TorusTrigPoly needs a FlatTorus model")
        if self.kind is FunctionKind.GROUP_MATRIX_POLY and model.kind is not mf.ModelKind.ROUND_SPHERE:
            raise ValueError("GroupMatrixPoly needs a RoundSphere model")
        if not 0 <= degree <= 3:
            raise ValueError("degree must be between 0 and 3")
        super().__init__(name=f"{self.kind.value}(degree={degree}, seed={seed})")
        self.model = model
        self.degree = int(degree)
        self.seed = int(seed)
        n = model.dim
        self.columns = tuple(range(n)) if columns is None else tuple(columns)
        rng = np.random.default_rng([self.seed, n, list(FunctionKind).index(self.kind)])
        if self.kind is FunctionKind.GROUP_MATRIX_POLY:
            self._dim = (n + 1) * (len(self.columns) + 1)
            self._base = _poly_tensors(rng, self._dim, self.degree)
            self._modes = []
            return
        self._dim = n * len(self.columns)
        self._base = _poly_tensors(rng, self._dim, self.degree)
        self._modes = []
        for _ in range(modes):
            if self.kind is FunctionKind.TORUS_TRIG_POLY:
                k = np.zeros(n)
                while not k.any():
                    k = rng.integers(-2, 3, n).astype(float)
                k = k * 2 * np.pi / np.asarray(model.periods)
            else:
                k = rng.standard_normal(n) * 1.5
            c, s = rng.standard_normal(2)
            self._modes.append((k, c, s, _poly_tensors(rng, self._dim, self.degree)))
        self.rho = rho

    def _variables(self, x, a, chart):
        if self.kind is FunctionKind.GROUP_MATRIX_POLY:
            q = mf.sphere_frame_matrix(self.model, x, a, chart)
            q = q[..., :, [0] + [c + 1 for c in self.columns]]
        else:
            q = a[..., :, list(self.columns)]
        shape = q.shape[:-2] + (self._dim,)
        return q.reshape(shape)

    def evaluate(self, x, a, chart):
        z = self._variables(x, a, chart)
        out = _poly(z, self._base)
        for k, c, s, tensors in self._modes:
            kx = (x * k).sum(-1)
            out = out + (c * hd.cos(kx) + s * hd.sin(kx)) * _poly(z, tensors)
        if self.kind is FunctionKind.CHART_BUMP:
            r2 = (x * x).sum(-1) / self.rho**2
            inside = hd.value_of(r2) < 1.0
            q = hd.where(inside, 1.0 - r2, 1.0)
            bump = hd.where(inside, hd.exp(1.0 - 1.0 / q), 0.0)
            out = out * bump
        return out

    def __repr__(self):
        return f"TestFunctionFamily({self.name}, model={self.model.label})"


@dataclass(frozen=True, eq=False)
class TwoFormField:
    """A 2-form valued function given by one scalar field per basis element ``e_i ^ e_j``."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        n = int(round((1 + np.sqrt(1 + 8 * len(comps))) / 2))
        if n * (n - 1) // 2 != len(comps) or n < 2:
            raise ValueError(f"{len(comps)} is not a valid number of 2-form components")
        object.__setattr__(self, "components", comps)

    @property
    def n(self):
        return int(round((1 + np.sqrt(1 + 8 * len(self.components))) / 2))

    def __call__(self, w):
        return np.stack([c(w) for c in self.components], axis=-1)


# ---- first-order operators ------------------------------------------------


def _basis(n):
    return [Vertical(basis_matrix(n, i, j)) for i, j in pairs(n)]


def X_apply(model, f, w, method="jet"):
    return derive(model, f, w, [Standard(e1(w.n))], method)


def grad_V(model, f, w, method="jet"):
    """Components ``Y_{ij} f`` of the vertical gradient, shape (..., n(n-1)/2)."""
    return np.stack([derive(model, f, w, [v], method) for v in _basis(w.n)], axis=-1)


def grad_H(model, f, w, method="jet"):
    """Horizontal gradient: ``B_{e_j} f`` along ``e_1 ^ e_j``, zero along the other pairs."""
    n = w.n
    out = np.zeros(w.x.shape[:-1] + (n * (n - 1) // 2,))
    for k, (i, j) in enumerate(pairs(n)):
        if i == 0:
            out[..., k] = derive(model, f, w, [Standard(unit(n, j))], method)
    return out


def div_V(model, F, w, method="jet"):
    n = F.n
    return -sum(derive(model, c, w, [v], method) for c, v in zip(F.components, _basis(n)))


def div_H(model, F, w, method="jet"):
    n = F.n
    total = 0.0
    for c, (i, j) in zip(F.components, pairs(n)):
        if i == 0:
            total = total - derive(model, c, w, [Standard(unit(n, j))], method)
    return total


# ---- curvature ----------------------------------------------------------------


def frame_riemann(model, x, a):
    """``Rm(w e_p, w e_q, w e_r, w e_s)`` for ``w = E(x) a``; jet-capable."""
    r = mf.frame_curvature(model, x)
    if model.flat:
        return r
    r = hd.einsum("...ABCD,...Ap->...pBCD", r, a)
    r = hd.einsum("...pBCD,...Bq->...pqCD", r, a)
    r = hd.einsum("...pqCD,...Cr->...pqrD", r, a)
    return hd.einsum("...pqrD,...Ds->...pqrs", r, a)


def R_FM_matrix(model, x, a):
    """Matrix ``R[b, a] = <R_FM w_a, w_b>`` in the pair basis; jet-capable."""
    n = model.dim
    rm = frame_riemann(model, x, a)
    idx = pairs(n)
    ii = [p[0] for p in idx]
    jj = [p[1] for p in idx]
    zero = 0.0 * rm[..., 0, 0, 0, ii]
    rows = [rm[..., q, 0, ii, jj] if p == 0 else zero for p, q in idx]
    return hd.stack(rows, axis=-2)


def R_FM_apply(model, w, xi):
    """``R_FM(w) xi`` as a skew form; ``xi`` is a :class:`SkewForm` or a (batch of) skew matrices."""
    r = R_FM_matrix(model, w.x, w.a)
    c = (xi if isinstance(xi, SkewForm) else SkewForm(xi)).components
    return SkewForm.from_components(np.einsum("...ba,...a->...b", r, c), w.n)


def R_FM_pairing(model, w, xi, xi_prime):
    """``<R_FM(w) xi, xi'>`` from its definition ``<xi, w^-1 R(w(xi' e_1) ^ w e_1)>``.

    Uses the coordinate curvature tensor of the generic Levi-Civita route, so it
    is independent of :func:`R_FM_matrix`.
    """
    n = w.n
    low = mf.riemann_at(model, w.x).lowered
    frame = w.frame(model)
    xi = getattr(xi, "matrix", xi)
    xi_prime = getattr(xi_prime, "matrix", xi_prime)
    u = np.einsum("...ij,...j->...i", frame, np.asarray(xi_prime)[..., :, 0])
    v = frame[..., :, 0]
    rm = np.einsum("...abcd,...a,...b,...ci,...dj->...ij", low, u, v, frame, frame)
    return sum(np.asarray(xi)[..., j, i] * rm[..., i, j] for i, j in pairs(n))


def bb_form(model, w, theta, theta_prime):
    """Skew matrix of ``w^-1 R(w theta ^ w theta')`` with components ``Rm_w(theta, theta', e_i, e_j)``."""
    rm = frame_riemann(model, w.x, w.a)
    c = np.einsum("...pqij,...p,...q->...ij", rm, theta, theta_prime)
    comps = np.stack([c[..., i, j] for i, j in pairs(w.n)], axis=-1)
    return skew_from_components(comps, w.n)


# ---- structural identities ----------------------------------------------------


class StructuralKind(str, Enum):
    VV = "VV"
    VB = "VB"
    BB = "BB"
    XV = "XV"
    XH = "XH"
    L25 = "L25"


class Residual(NamedTuple):
    """Both sides of an identity, ``|lhs - rhs|`` and the largest term magnitude."""

    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    scale: np.ndarray

    @property
    def relative(self):
        return relative(self.residual, self.scale)


def _norm(v):
    return np.sqrt(np.sum(np.square(v), axis=-1))


def default_inputs(n):
    """Fixed generic ``(xi, xi', theta, theta')`` used when none are given."""
    rng = np.random.default_rng(n)
    m = n * (n - 1) // 2
    return (
        skew_from_components(rng.standard_normal(m), n),
        skew_from_components(rng.standard_normal(m), n),
        rng.standard_normal(n),
        rng.standard_normal(n),
    )


def structural_residual(model, f, w, which, xi=None, xi_prime=None, theta=None, theta_prime=None):
    """Evaluate one structural identity at ``w`` and return a :class:`Residual`.

    ``VV``: ``[Y_xi, Y_xi'] = Y_[xi, xi']``; ``VB``: ``[Y_xi, B_theta] = B_{xi theta}``;
    ``BB``: ``[B_theta, B_theta'] = -Y_rho`` with ``rho = w^-1 R(w theta ^ w theta')``;
    ``XV``: ``grad_H = -[X, grad_V]``; ``XH``: ``[X, grad_H] = R_FM grad_V``;
    ``L25``: ``sum_j [Y_1j, B_j] = -(n - 1) X``.
    """
    which = StructuralKind(which)
    n = w.n
    d_xi, d_xip, d_th, d_thp = default_inputs(n)
    xi = d_xi if xi is None else getattr(xi, "matrix", xi)
    xi_prime = d_xip if xi_prime is None else getattr(xi_prime, "matrix", xi_prime)
    theta = d_th if theta is None else np.asarray(getattr(theta, "theta", theta), dtype=float)
    theta_prime = d_thp if theta_prime is None else np.asarray(getattr(theta_prime, "theta", theta_prime), dtype=float)

    def pair(a_spec, b_spec):
        ab = derive(model, f, w, [a_spec, b_spec])
        ba = derive(model, f, w, [b_spec, a_spec])
        return ab, ba

    if which in (StructuralKind.VV, StructuralKind.VB, StructuralKind.BB):
        if which is StructuralKind.VV:
            first, second = Vertical(xi), Vertical(xi_prime)
            rhs = derive(model, f, w, [Vertical(bracket(xi, xi_prime))])
        elif which is StructuralKind.VB:
            first, second = Vertical(xi), Standard(theta)
            rhs = derive(model, f, w, [Standard(np.einsum("...ij,...j->...i", xi, theta))])
        else:
            first, second = Standard(theta), Standard(theta_prime)
            rho = bb_form(model, w, theta, theta_prime)
            rhs = -derive(model, f, w, [Vertical(rho)])
        ab, ba = pair(first, second)
        lhs = ab - ba
        scale = np.maximum.reduce([np.abs(ab), np.abs(ba), np.abs(rhs)])
        return Residual(lhs, rhs, np.abs(lhs - rhs), scale)

    X = Standard(e1(n))
    basis = _basis(n)
    if which is StructuralKind.XV:
        lhs = grad_H(model, f, w)
        xy, yx = zip(*(pair(X, v) for v in basis))
        xy, yx = np.stack(xy, -1), np.stack(yx, -1)
        rhs = -(xy - yx)
        scale = np.maximum.reduce([_norm(lhs), _norm(xy), _norm(yx)])
        return Residual(lhs, rhs, _norm(lhs - rhs), scale)
    if which is StructuralKind.XH:
        m = n * (n - 1) // 2
        xb = np.zeros(w.x.shape[:-1] + (m,))
        bx = np.zeros_like(xb)
        for k, (i, j) in enumerate(pairs(n)):
            if i == 0:
                xb[..., k], bx[..., k] = pair(X, Standard(unit(n, j)))
        lhs = xb - bx
        r = R_FM_matrix(model, w.x, w.a)
        gv = grad_V(model, f, w)
        rhs = np.einsum("...ba,...a->...b", r, gv)
        scale = np.maximum.reduce([_norm(xb), _norm(bx), _norm(rhs)])
        return Residual(lhs, rhs, _norm(lhs - rhs), scale)
    # L25
    terms = []
    lhs = 0.0
    for k, (i, j) in enumerate(pairs(n)):
        if i == 0:
            yb, by = pair(basis[k], Standard(unit(n, j)))
            terms += [yb, by]
            lhs = lhs + yb - by
    rhs = -(n - 1) * X_apply(model, f, w)
    scale = np.maximum.reduce([np.abs(t) for t in terms] + [np.abs(rhs)])
    return Residual(lhs, rhs, np.abs(lhs - rhs), scale)


def curvature_weighted(model, f):
    """The 2-form field ``R_FM grad_V f`` as a list of jet-capable scalar fields."""
    n = model.dim
    grads = [apply_field(model, v, f) for v in _basis(n)]

    def component(b):
        def fn(x, a, chart):
            r = R_FM_matrix(model, x, a)
            return sum(r[..., b, k] * g.evaluate(x, a, chart) for k, g in enumerate(grads))

        return ScalarField(fn, f"(R_FM grad_V {f.name})[{b}]")

    return [component(b) for b in range(len(grads))]


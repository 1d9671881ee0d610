"""Pointwise and integrated Pestov identities and curvature cross-checks.

With ``X* = -X`` and the adjoint formulas for the gradients, the pointwise
identity reads ``T1 - T2 = T3 - T4`` with

* ``T1 = sum_a X Y_a Y_a X f``,
* ``T2 = sum_a Y_a X X Y_a f``,
* ``T3 = -(n - 1) X X f``,
* ``T4 = -sum_b Y_b (sum_a R_ba Y_a f)``.

Its integrated form on a closed manifold is
``|grad_V X u|^2 - |X grad_V u|^2 = (n - 1) |X u|^2 - <R_FM grad_V u, grad_V u>``
in ``L^2`` of the normalised Liouville measure.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import manifold as mf
from .errors import PreconditionError, UnsupportedModelError
from .frame_bundle import FramePoint, connection_map, unit_vector
from .jets import ScalarField, Standard, Vertical, apply_field, derive, jet_chain
from .lie import basis_matrix, haar_rotation, pair_count, pairs, skew_from_components, wedge
from .measure import integrate_terms, sample_liouville
from .operators import R_FM_matrix, TestFunctionFamily, e1, grad_V, relative

__all__ = [
    "IdentityCheck",
    "InvarianceClass",
    "PointwisePestov",
    "pointwise_pestov_terms",
    "pointwise_pestov_residual",
    "pestov_integrands",
    "global_pestov_residual",
    "associated_pestov_residual",
    "invariant_function",
    "r_sm_sides",
    "r_sm_crosscheck",
    "hyperbolic_example_check",
    "MC_SIGMAS",
]

MC_SIGMAS = 4.0
INVARIANCE_TOL = 1e-8


@dataclass
class IdentityCheck:
    """Outcome of one identity check.  ``passed`` iff ``residual <= max(tolerance, 4 stderr)``."""

    name: str
    model: str
    n: int
    params: dict
    testfn: str
    lhs: float
    rhs: float
    residual: float
    stderr: float
    tolerance: float
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs, self.rhs = float(self.lhs), float(self.rhs)
        self.residual, self.stderr = float(self.residual), float(self.stderr)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.residual <= max(self.tolerance, MC_SIGMAS * self.stderr))

    def record(self):
        """Flat record with the report schema keys."""
        out = {
            "check": self.name,
            "model": self.model,
            "n": self.n,
            "params": dict(self.params),
            "testfn": self.testfn,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "stderr": self.stderr,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.details:
            out["details"] = dict(self.details)
        return out


def _check(name, model, testfn, lhs, rhs, residual, stderr, tolerance, **details):
    return IdentityCheck(
        name, model.kind.value, model.dim, model.params(), str(testfn), lhs, rhs, residual, stderr, tolerance, details
    )


# ---- pointwise identity --------------------------------------------------------


@dataclass(frozen=True)
class PointwisePestov:
    """The four terms at each point and the relative residual of ``T1 - T2 = T3 - T4``."""

    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray

    @property
    def lhs(self):
        return self.t1 - self.t2

    @property
    def rhs(self):
        return self.t3 - self.t4

    @property
    def scale(self):
        return np.maximum.reduce([np.abs(self.t1), np.abs(self.t2), np.abs(self.t3), np.abs(self.t4)])

    @property
    def residual(self):
        return np.abs(self.lhs - self.rhs)

    @property
    def relative(self):
        return relative(self.residual, self.scale)


def pointwise_pestov_terms(model, f, w):
    n = w.n
    X = Standard(e1(n))
    ys = [Vertical(basis_matrix(n, i, j)) for i, j in pairs(n)]
    t1 = sum(derive(model, f, w, [X, y, y, X]) for y in ys)
    t2 = sum(derive(model, f, w, [y, X, X, y]) for y in ys)
    t3 = -(n - 1) * derive(model, f, w, [X, X])
    if model.flat:
        t4 = np.zeros_like(t3)
    else:
        grads = [apply_field(model, y, f) for y in ys]
        t4 = 0.0
        for b, (p, q) in enumerate(pairs(n)):
            if p != 0:
                continue

            def weighted(x, a, chart, b=b):
                r = R_FM_matrix(model, x, a)
                return sum(r[..., b, k] * g.evaluate(x, a, chart) for k, g in enumerate(grads))

            t4 = t4 - derive(model, ScalarField(weighted, "R grad_V f"), w, [ys[b]])
    return PointwisePestov(t1, t2, t3, np.broadcast_to(t4, np.shape(t3)))


def pointwise_pestov_residual(model, f, w):
    """Relative residual of the pointwise Pestov identity at each point of ``w``."""
    return pointwise_pestov_terms(model, f, w).relative


# ---- integrated identity -----------------------------------------------------------


def pestov_integrands(model, f, w):
    """Per-sample ``(A, B, C, D)`` with A = |grad_V X u|^2, B = |X grad_V u|^2,
    C = (n - 1)(X u)^2 and D = <R_FM grad_V u, grad_V u>."""
    n = w.n
    X = Standard(e1(n))
    m = pair_count(n)
    shape = w.x.shape[:-1]
    A = np.zeros(shape)
    B = np.zeros(shape)
    gv = np.zeros(shape + (m,))
    xu = None
    for k, (i, j) in enumerate(pairs(n)):
        y = Vertical(basis_matrix(n, i, j))
        jy = jet_chain(model, f, w, [y, X]).coeffs
        gv[..., k] = jy[1]
        xu = jy[2]
        A += jy[3] ** 2
        B += jet_chain(model, f, w, [X, y]).coeffs[3] ** 2
    if xu is None:
        raise ValueError("dimension must be at least 2")
    C = (n - 1) * xu**2
    if model.flat:
        D = np.zeros(shape)
    else:
        r = R_FM_matrix(model, w.x, w.a)
        D = np.einsum("...b,...ba,...a->...", gv, r, gv)
    return np.stack([A, B, C, D], axis=-1)


def _global(model, f, seed, count, workers, name, tolerance, **details):
    if not model.closed:
        raise UnsupportedModelError(f"unsupported model for global checks: {model.label} is not closed")
    moments = integrate_terms(model, lambda w: pestov_integrands(model, f, w), seed, count, workers)
    lhs = moments.estimate([1.0, -1.0, 0.0, 0.0])
    rhs = moments.estimate([0.0, 0.0, 1.0, -1.0])
    diff = moments.estimate([1.0, -1.0, -1.0, 1.0])
    terms = {k: moments.estimate(np.eye(4)[i]).value for i, k in enumerate("ABCD")}
    return _check(
        name, model, f, lhs.value, rhs.value, abs(diff.value), diff.stderr, tolerance,
        seed=int(seed), count=int(count), terms=terms, **details,
    )


def global_pestov_residual(model, f, seed, count, workers=1, tolerance=1e-12):
    """Integrated Pestov identity on one shared sample stream.

    ``residual = |mean(A - B - C + D)|`` and ``stderr`` is the standard error of
    that combined per-sample quantity.
    """
    return _global(model, f, seed, count, workers, "global_pestov", tolerance)


# ---- associated identity through invariant lifts ----------------------------------


class InvarianceClass(str, Enum):
    SOn1 = "SOn1"
    SOn2 = "SOn2"

    @property
    def fixed(self):
        """Number of leading frame vectors fixed by the subgroup."""
        return 1 if self is InvarianceClass.SOn1 else 2


def invariant_function(model, klass, degree=2, seed=0):
    """A test function that depends on ``x`` and the leading frame vectors fixed by the class."""
    klass = InvarianceClass(klass)
    return TestFunctionFamily(model, degree=degree, seed=seed, columns=range(klass.fixed))


def _subgroup_sample(rng, n, fixed, size):
    g = np.broadcast_to(np.eye(n), (size, n, n)).copy()
    k = n - fixed
    if k >= 2:
        g[:, fixed:, fixed:] = haar_rotation(rng, k, size)
    return g


def _lift_residuals(model, f, klass, seed, points=64):
    rng = np.random.default_rng([int(seed), 7])
    w = sample_liouville(model, seed, points).chunk_points(0)
    g = _subgroup_sample(rng, model.dim, klass.fixed, len(w))
    wg = w.right_multiply(g)
    invariance = float(np.max(np.abs(f(wg) - f(w))))
    n = model.dim

    def gv_matrix(p):
        return skew_from_components(grad_V(model, f, p), n)

    lhs = gv_matrix(wg)
    rhs = np.swapaxes(g, -1, -2) @ gv_matrix(w) @ g
    equivariance = float(np.max(np.abs(lhs - rhs)))
    return invariance, equivariance


def associated_pestov_residual(model, klass, f, seed, count, workers=1, tolerance=1e-12):
    """Associated Pestov identity for a subgroup-invariant function, via its lift to FM.

    The invariance ``f(w g) = f(w)`` for sampled ``g`` in the subgroup is checked
    first (``PreconditionError`` beyond 1e-8) and the G-equivariance
    ``grad_V f(w g) = g^T grad_V f(w) g`` is recorded in ``details``.
    """
    klass = InvarianceClass(klass)
    if not model.closed:
        raise UnsupportedModelError(f"unsupported model for global checks: {model.label} is not closed")
    invariance, equivariance = _lift_residuals(model, f, klass, seed)
    if invariance > INVARIANCE_TOL:
        raise PreconditionError(f"test function is not {klass.value}-invariant (deviation {invariance:.3g})")
    return _global(
        model, f, seed, count, workers, f"associated_pestov_{klass.value}", tolerance,
        invariance=invariance, equivariance=equivariance,
    )


# ---- curvature cross-checks ---------------------------------------------------------


def _theta_wedge(n, theta):
    return wedge(e1(n), theta)


def r_sm_sides(model, w, theta, theta_prime):
    """``(<R_FM xi, xi'>, Rm(K T, v, v, K T'))`` with ``xi = e_1 ^ theta``.

    ``T`` is the image in SM of the fundamental field of ``xi``, a vertical
    vector at ``v = w e_1``; ``K`` is the connection map.
    """
    n = w.n
    theta = np.broadcast_to(np.asarray(theta, dtype=float), w.x.shape)
    theta_prime = np.broadcast_to(np.asarray(theta_prime, dtype=float), w.x.shape)
    xi, xip = _theta_wedge(n, theta), _theta_wedge(n, theta_prime)
    idx = pairs(n)
    comps = lambda m: np.stack([m[..., j, i] for i, j in idx], axis=-1)  # noqa: E731
    r = R_FM_matrix(model, w.x, w.a)
    lhs = np.einsum("...b,...ba,...a->...", comps(xip), r, comps(xi))

    v = unit_vector(model, w)
    frame = w.frame(model)
    dv = np.einsum("...ij,...jk,...k->...i", frame, xi, e1(n))
    dv_p = np.einsum("...ij,...jk,...k->...i", frame, xip, e1(n))
    zero = np.zeros_like(w.x)
    kt = connection_map(model, v, (zero, dv))
    kt_p = connection_map(model, v, (zero, dv_p))
    low = mf.riemann_at(model, w.x).lowered
    rhs = np.einsum("...ijkl,...i,...j,...k,...l->...", low, kt, v.v, v.v, kt_p)
    return lhs, rhs


def r_sm_crosscheck(model, w, theta, theta_prime):
    """``|<R_FM xi, xi'> - <R(K T ^ v), v ^ K T'>|`` at each point."""
    lhs, rhs = r_sm_sides(model, w, theta, theta_prime)
    return np.abs(lhs - rhs)


def hyperbolic_example_check(seed, count_points, n=3, tolerance=1e-8):
    """Max deviation of ``<R_FM xi, xi'>`` from ``-<xi e_1, xi' e_1>`` on the hyperbolic ball."""
    model = mf.hyperbolic_ball(n)
    rng = np.random.default_rng(int(seed))
    k = int(count_points)
    d = rng.standard_normal((k, n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    x = d * mf.BALL_SAMPLING_RADIUS * rng.random((k, 1)) ** (1.0 / n)
    w = FramePoint(x, haar_rotation(rng, n, k))
    m = pair_count(n)
    c, cp = rng.standard_normal((k, m)), rng.standard_normal((k, m))
    r = R_FM_matrix(model, w.x, w.a)
    value = np.einsum("...b,...ba,...a->...", cp, r, c)
    xi, xip = skew_from_components(c, n), skew_from_components(cp, n)
    expected = -np.einsum("...i,...i->...", xi[..., :, 0], xip[..., :, 0])
    dev = np.abs(value - expected)
    worst = int(np.argmax(dev))
    return _check(
        "hyperbolic_example", model, "random 2-forms", value[worst], expected[worst], dev[worst], 0.0, tolerance,
        seed=int(seed), count=k,
    )


"""Points, tangent vectors and flows on the orthonormal frame bundle.

A frame point is stored in the local trivialisation ``w = E(x) a`` where
``E(x)`` is the Gram-Schmidt orthonormalisation of the coordinate basis and
``a`` is a rotation.  For the conformally flat models ``E(x) = exp(-phi) I``.

In these coordinates the fundamental field of ``xi`` in so(n) is
``(dx, da) = (0, a xi)`` and the standard field of ``theta`` is
``(dx, da) = (E a theta, -omega(E a theta) a)`` where ``omega`` is the
connection form of the reference frame, ``omega(Z)_ij = g(nabla_Z E_j, E_i)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import hyperdual as hd
from . import manifold as mf
from .errors import DomainError, PreconditionError
from .lie import SkewForm, expm_skew, polar_rotation

__all__ = [
    "FramePoint",
    "FrameTangent",
    "Direction",
    "UnitVector",
    "Trajectory",
    "reference_frame",
    "connection_form",
    "connection_matrix",
    "vertical_field",
    "standard_field",
    "standard_velocity",
    "vertical_flow",
    "frame_flow",
    "b_theta_flow",
    "normalize_chart",
    "unit_vector",
    "connection_map",
    "horizontal_lift_sm",
    "vertical_lift_sm",
]

ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FramePoint:
    """A frame (batch) ``w = E(x) a``: chart coordinates ``x`` (..., n), rotation ``a`` (..., n, n).

    ``chart_id`` is an integer or an integer array matching the batch shape.
    """

    x: np.ndarray
    a: np.ndarray
    chart_id: np.ndarray = 0
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        a = np.asarray(self.a, dtype=float)
        n = x.shape[-1]
        if a.shape[-2:] != (n, n):
            raise ValueError(f"rotation must be {n}x{n}, got {a.shape[-2:]}")
        chart = np.broadcast_to(np.asarray(self.chart_id, dtype=int), x.shape[:-1])
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "chart_id", chart.copy() if chart.ndim else int(chart))
        if self.check:
            gram = np.swapaxes(a, -1, -2) @ a
            if np.max(np.abs(gram - np.eye(n)), initial=0.0) > ORTHO_TOL:
                raise ValueError("frame rotation is not orthogonal")
            if np.any(np.linalg.det(a) < 0):
                raise ValueError("frame rotation has determinant -1")

    @property
    def n(self):
        return self.x.shape[-1]

    @property
    def batch_shape(self):
        return self.x.shape[:-1]

    @property
    def chart_point(self):
        return mf.ChartPoint(self.x, self.chart_id)

    def __len__(self):
        return self.batch_shape[0]

    def __getitem__(self, key):
        chart = np.asarray(self.chart_id)
        chart = chart[key] if chart.ndim else chart
        return FramePoint(self.x[key], self.a[key], chart, check=False)

    def right_multiply(self, g):
        """The frame ``w g`` for a rotation (batch) ``g``."""
        return FramePoint(self.x, self.a @ g, self.chart_id, check=False)

    def frame(self, model):
        """The frame vectors as chart-coordinate columns ``E(x) a``."""
        return reference_frame(model, self.x) @ self.a


@dataclass(frozen=True, eq=False)
class Direction:
    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("direction must be finite")
        object.__setattr__(self, "theta", t)


def _theta(theta):
    return theta.theta if isinstance(theta, Direction) else np.asarray(theta, dtype=float)


def _xi(xi):
    return xi.matrix if isinstance(xi, SkewForm) else np.asarray(xi, dtype=float)


@dataclass(frozen=True, eq=False)
class FrameTangent:
    """A tangent vector ``(dx, da)`` at ``base``."""

    base: FramePoint
    dx: np.ndarray
    da: np.ndarray

    def split(self, model):
        """Horizontal lift of ``dx`` and the vertical part as a skew form ``xi`` with ``da_v = a xi``."""
        w = self.base
        omega = connection_matrix(model, w.x, self.dx)
        da_h = -omega @ w.a
        xi = np.swapaxes(w.a, -1, -2) @ (self.da - da_h)
        return FrameTangent(w, self.dx, da_h), SkewForm(0.5 * (xi - np.swapaxes(xi, -1, -2)))


def reference_frame(model, x):
    """Gram-Schmidt orthonormal frame ``E(x)`` of the coordinate basis (columns)."""
    return mf.gram_schmidt(mf.metric_at(model, x))


def connection_matrix(model, x, z):
    """``omega(Z)`` as a skew matrix; jet-capable in ``x`` and ``z``.

    For ``g = exp(2 phi) I`` and ``E = exp(-phi) I``:
    ``omega(Z)_ij = Z_i d_j phi - Z_j d_i phi``.
    """
    _, dphi, _ = model.log_factor(x)
    return z[..., :, None] * dphi[..., None, :] - dphi[..., :, None] * z[..., None, :]


def connection_form(model, x, z):
    x = mf._coords(x)[0]
    mf.check_domain(model, x)
    return SkewForm(connection_matrix(model, x, np.asarray(z, dtype=float)))


def standard_velocity(model, x, a, theta):
    """``(dx, da)`` of the standard field ``B_theta`` at ``(x, a)``; jet-capable."""
    scale = mf.conformal_scale(model, x)
    z = scale[..., None] * (a * theta[..., None, :]).sum(-1)
    return z, -(connection_matrix(model, x, z) @ a)


def vertical_field(w, xi):
    xi = _xi(xi)
    return FrameTangent(w, np.zeros_like(w.x), w.a @ xi)


def standard_field(model, w, theta):
    mf.check_domain(model, w.x)
    dx, da = standard_velocity(model, w.x, w.a, _theta(theta))
    return FrameTangent(w, dx, da)


def vertical_flow(w, xi, t):
    """Exact flow ``(x, a) -> (x, a exp(t xi))`` of the fundamental field."""
    return FramePoint(w.x, w.a @ expm_skew(t * _xi(xi)), w.chart_id, check=False)


# ---- integration -------------------------------------------------------


@dataclass
class Trajectory:
    """Recorded states of a flow: times (k,), charts (k, ...), x (k, ..., n), a (k, ..., n, n)."""

    t: list = field(default_factory=list)
    chart: list = field(default_factory=list)
    x: list = field(default_factory=list)
    a: list = field(default_factory=list)

    def append(self, t, w):
        self.t.append(float(t))
        self.chart.append(np.array(w.chart_id, copy=True))
        self.x.append(w.x.copy())
        self.a.append(w.a.copy())

    def __len__(self):
        return len(self.t)

    def last(self):
        return FramePoint(self.x[-1], self.a[-1], self.chart[-1], check=False)


def normalize_chart(model, w):
    """Wrap torus coordinates and move sphere points with ``|x| > 1`` into the other chart."""
    if model.kind is mf.ModelKind.FLAT_TORUS:
        periods = np.asarray(model.periods)
        return FramePoint(np.mod(w.x, periods), w.a, w.chart_id, check=False)
    if model.kind is mf.ModelKind.ROUND_SPHERE:
        r = np.linalg.norm(w.x, axis=-1)
        far = r > mf.SPHERE_CHART_RADIUS
        if not np.any(far):
            return w
        chart = np.broadcast_to(w.chart_id, w.batch_shape)
        x2, a2, c2 = mf.sphere_transition(model, np.where(far[..., None], w.x, 1.0), w.a, chart)
        x = np.where(far[..., None], x2, w.x)
        a = np.where(far[..., None, None], a2, w.a)
        c = np.where(far, c2, chart)
        return FramePoint(x, a, c if c.ndim else int(c), check=False)
    return w


def _rk4_step(model, x, a, theta, h):
    k1 = standard_velocity(model, x, a, theta)
    k2 = standard_velocity(model, x + 0.5 * h * k1[0], a + 0.5 * h * k1[1], theta)
    k3 = standard_velocity(model, x + 0.5 * h * k2[0], a + 0.5 * h * k2[1], theta)
    k4 = standard_velocity(model, x + h * k3[0], a + h * k3[1], theta)
    x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    a = a + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return x, polar_rotation(a)


def _inside(model, x):
    try:
        mf.check_domain(model, x)
    except DomainError:
        return False
    return True


def b_theta_flow(model, w, theta, t, dt=1e-3, record=False):
    """Flow of the standard field ``B_theta`` for time ``t`` by RK4 with steps of at most ``dt``.

    The rotation is projected back onto SO(n) after every step and points are
    re-charted between steps.  Returns the end point, or ``(end, Trajectory)``
    with ``record=True``.  Leaving a ball chart raises :class:`DomainError`
    whose ``partial`` attribute holds the trajectory so far.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    theta = _theta(theta)
    steps = max(1, math.ceil(abs(t) / dt - 1e-9)) if t != 0 else 0
    h = t / steps if steps else 0.0
    w = normalize_chart(model, w)
    traj = Trajectory()
    if record:
        traj.append(0.0, w)
    mf.check_domain(model, w.x, 0)
    x, a = w.x, w.a
    for k in range(steps):
        x, a = _rk4_step(model, x, a, theta, h)
        if not _inside(model, x):
            if not record:
                traj.append(k * h, w)
            raise DomainError(
                f"trajectory left the {model.label} chart at t = {(k + 1) * h:.6g}", partial=traj
            )
        w = normalize_chart(model, FramePoint(x, a, w.chart_id, check=False))
        x, a = w.x, w.a
        if record:
            traj.append((k + 1) * h, w)
    return (w, traj) if record else w


def frame_flow(model, w, t, dt=1e-3, record=False):
    """Frame flow: the flow of ``X = B_{e_1}`` (geodesic flow with parallel frame)."""
    e1 = np.zeros(w.n)
    e1[0] = 1.0
    return b_theta_flow(model, w, e1, t, dt, record)


# ---- unit tangent bundle and the connection map -------------------------


@dataclass(frozen=True, eq=False)
class UnitVector:
    """A point ``(x, v)`` of the unit tangent bundle, with ``v`` in chart components."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


def unit_vector(model, w):
    """``pi'(w) = (x, w(e_1))``."""
    return UnitVector(w.x, w.frame(model)[..., :, 0])


def horizontal_lift_sm(model, v, z):
    """Horizontal lift of ``Z`` at ``(x, v)``: ``(Z, -Gamma(Z, v))``."""
    gamma = mf.christoffel_at(model, v.x)
    z = np.asarray(z, dtype=float)
    return z, -np.einsum("...kij,...i,...j->...k", gamma, z, v.v)


def vertical_lift_sm(v, u):
    """Vertical vector rotating ``v`` towards ``u``: ``(0, u)``."""
    return np.zeros_like(v.x), np.asarray(u, dtype=float)


def connection_map(model, v, zeta, tol=1e-8):
    """``K(zeta) = dv + Gamma(dx, v)`` for ``zeta = (dx, dv)`` tangent to SM at ``v``."""
    dx, dv = (np.asarray(c, dtype=float) for c in zeta)
    g, dg, _ = mf.metric_derivatives(model, v.x)
    rate = np.einsum("...kij,...k,...i,...j->...", dg, dx, v.v, v.v) + 2.0 * np.einsum(
        "...i,...ij,...j->...", v.v, g, dv
    )
    scale = 1.0 + np.sqrt(np.einsum("...i,...ij,...j->...", dv, g, dv)) + np.linalg.norm(dx, axis=-1)
    if np.any(np.abs(rate) > tol * scale):
        raise PreconditionError("zeta is not tangent to the unit tangent bundle")
    gamma = mf.christoffel_at(model, v.x)
    return dv + np.einsum("...kij,...i,...j->...k", gamma, dx, v.v)

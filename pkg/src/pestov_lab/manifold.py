"""Chart-based model metrics, Christoffel symbols and curvature.

Every shipped model is conformally flat in its chart, ``g = exp(2 phi) I``,
and supplies ``phi`` with its first and second derivatives in closed form.
Two evaluation routes exist:

* the generic Levi-Civita route (:func:`christoffel_at`, :func:`riemann_at`)
  builds everything from ``g``, ``dg`` and ``d2g`` and works on plain arrays;
* the conformal route (:func:`conformal_christoffel`, :func:`frame_curvature`)
  works directly from ``phi`` and also accepts :class:`~pestov_lab.hyperdual.Jet`
  inputs, which is what the derivative engine needs.

Index conventions: ``dg[..., k, i, j] = d_k g_ij``; ``gamma[..., k, i, j]`` is
``Gamma^k_ij``; ``R[..., l, i, j, k]`` is ``R^l_ijk`` with
``R(d_i, d_j) d_k = R^l_ijk d_l`` and ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``;
``Rm[..., i, j, k, l] = <R(d_i, d_j) d_k, d_l>``.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import hyperdual as hd
from .errors import DegenerateInputError, DomainError
from .lie import pairs

__all__ = [
    "ModelKind",
    "MetricModel",
    "ChartPoint",
    "CurvatureEndomorphism",
    "flat_torus",
    "round_sphere",
    "hyperbolic_ball",
    "perturbed_hyperbolic",
    "make_model",
    "check_domain",
    "metric_at",
    "metric_derivatives",
    "christoffel_at",
    "christoffel_derivative_at",
    "riemann_at",
    "sectional_curvature",
    "gram_schmidt",
    "conformal_scale",
    "conformal_christoffel",
    "frame_curvature",
    "sphere_flip",
    "sphere_point",
    "sphere_frame_matrix",
    "sphere_from_matrix",
    "sphere_transition",
    "BALL_MARGIN",
    "BALL_SAMPLING_RADIUS",
    "SPHERE_CHART_RADIUS",
    "SPHERE_EVAL_RADIUS",
    "MAX_PERTURBATION",
]

BALL_MARGIN = 1e-6
"""Ball charts are the open set ``|x| < 1 - BALL_MARGIN``."""

BALL_SAMPLING_RADIUS = 0.9
"""Random points on ball models are drawn from ``|x| < BALL_SAMPLING_RADIUS``."""

SPHERE_CHART_RADIUS = 1.0
"""Canonical sphere chart points satisfy ``|x| <= 1``; beyond that they are re-charted."""

SPHERE_EVAL_RADIUS = 2.0
"""Sphere evaluators accept ``|x| <= 2`` so that integrator stages may overshoot."""

MAX_PERTURBATION = 0.1


class ModelKind(str, Enum):
    FLAT_TORUS = "FlatTorus"
    ROUND_SPHERE = "RoundSphere"
    HYPERBOLIC_BALL = "HyperbolicBall"
    PERTURBED_HYPERBOLIC = "PerturbedHyperbolic"


@dataclass(frozen=True)
class MetricModel:
    """An immutable description of one model metric.

    ``periods`` applies to the torus, ``radius`` to the sphere, ``eps`` and
    ``freq`` to the perturbed hyperbolic ball, whose conformal factor is
    ``(1 + eps cos(k.x) (1 - |x|^2)) * 4 / (1 - |x|^2)^2`` with ``k = freq * (1, ..., 1)``.
    """

    kind: ModelKind
    dim: int
    periods: tuple = field(default=None)
    radius: float = 1.0
    eps: float = 0.0
    freq: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind is ModelKind.FLAT_TORUS:
            periods = self.periods
            if periods is None:
                periods = (2 * np.pi,) * self.dim
            elif np.isscalar(periods):
                periods = (float(periods),) * self.dim
            periods = tuple(float(p) for p in periods)
            if len(periods) != self.dim or min(periods) <= 0:
                raise ValueError("torus periods must be positive, one per dimension")
            object.__setattr__(self, "periods", periods)
        elif self.periods is not None:
            raise ValueError("periods only apply to FlatTorus")
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if not 0 <= abs(self.eps) <= MAX_PERTURBATION:
            raise ValueError(f"perturbation amplitude must satisfy |eps| <= {MAX_PERTURBATION}")
        if self.eps and self.kind is not ModelKind.PERTURBED_HYPERBOLIC:
            raise ValueError("eps only applies to PerturbedHyperbolic")

    @property
    def n(self):
        return self.dim

    @property
    def closed(self):
        return self.kind in (ModelKind.FLAT_TORUS, ModelKind.ROUND_SPHERE)

    @property
    def flat(self):
        return self.kind is ModelKind.FLAT_TORUS

    @property
    def ball(self):
        return self.kind in (ModelKind.HYPERBOLIC_BALL, ModelKind.PERTURBED_HYPERBOLIC)

    @property
    def charts(self):
        return (0, 1) if self.kind is ModelKind.ROUND_SPHERE else (0,)

    @property
    def wavevector(self):
        return self.freq * np.ones(self.dim)

    @property
    def label(self):
        return f"{self.kind.value}({self.dim})"

    def params(self):
        if self.kind is ModelKind.FLAT_TORUS:
            return {"periods": list(self.periods)}
        if self.kind is ModelKind.ROUND_SPHERE:
            return {"radius": self.radius}
        if self.kind is ModelKind.PERTURBED_HYPERBOLIC:
            return {"eps": self.eps, "freq": self.freq}
        return {}

    def log_factor(self, x):
        """``phi``, its gradient and Hessian; accepts arrays or jets of shape (..., n)."""
        n = self.dim
        eye = np.eye(n)
        if self.kind is ModelKind.FLAT_TORUS:
            shape = hd.value_of(x).shape[:-1]
            return np.zeros(shape), np.zeros(shape + (n,)), np.zeros(shape + (n, n))
        s = (x * x).sum(-1)
        outer = x[..., :, None] * x[..., None, :]
        if self.kind is ModelKind.ROUND_SPHERE:
            p = 1.0 + s
            phi = np.log(2 * self.radius) - hd.log(p)
            inv = 1.0 / p
            dphi = -2.0 * x * inv[..., None]
            d2phi = -2.0 * eye * inv[..., None, None] + 4.0 * outer * (inv * inv)[..., None, None]
            return phi, dphi, d2phi
        q = 1.0 - s
        inv = 1.0 / q
        phi = np.log(2.0) - hd.log(q)
        dphi = 2.0 * x * inv[..., None]
        d2phi = 2.0 * eye * inv[..., None, None] + 4.0 * outer * (inv * inv)[..., None, None]
        if self.kind is ModelKind.HYPERBOLIC_BALL or self.eps == 0:
            return phi, dphi, d2phi
        k = self.wavevector
        kx = (x * k).sum(-1)
        c, sn = hd.cos(kx), hd.sin(kx)
        eps = self.eps
        h = 1.0 + eps * c * q
        dh = eps * (-(sn * q)[..., None] * k - 2.0 * c[..., None] * x)
        kk = np.outer(k, k)
        kx_outer = k * x[..., :, None] + x[..., None, :] * k[:, None]
        d2h = eps * (
            -(c * q)[..., None, None] * kk
            + 2.0 * sn[..., None, None] * kx_outer
            - 2.0 * c[..., None, None] * eye
        )
        hinv = 1.0 / h
        phi = phi + 0.5 * hd.log(h)
        dphi = dphi + 0.5 * dh * hinv[..., None]
        d2phi = (
            d2phi
            + 0.5 * d2h * hinv[..., None, None]
            - 0.5 * (dh[..., :, None] * dh[..., None, :]) * (hinv * hinv)[..., None, None]
        )
        return phi, dphi, d2phi


def flat_torus(n, periods=None):
    return MetricModel(ModelKind.FLAT_TORUS, n, periods=periods)


def round_sphere(n, radius=1.0):
    return MetricModel(ModelKind.ROUND_SPHERE, n, radius=radius)


def hyperbolic_ball(n):
    return MetricModel(ModelKind.HYPERBOLIC_BALL, n)


def perturbed_hyperbolic(n, eps=0.05, freq=2.0):
    return MetricModel(ModelKind.PERTURBED_HYPERBOLIC, n, eps=eps, freq=freq)


def make_model(kind, dim, **params):
    """Build a model from its kind name and keyword parameters; unknown keys are rejected."""
    kind = ModelKind(kind)
    allowed = {
        ModelKind.FLAT_TORUS: {"periods"},
        ModelKind.ROUND_SPHERE: {"radius"},
        ModelKind.HYPERBOLIC_BALL: set(),
        ModelKind.PERTURBED_HYPERBOLIC: {"eps", "freq"},
    }[kind]
    params = {k: v for k, v in params.items() if v is not None}
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"parameters {sorted(extra)} do not apply to {kind.value}")
    if kind is ModelKind.PERTURBED_HYPERBOLIC:
        params.setdefault("eps", 0.05)
    return MetricModel(kind, dim, **params)


@dataclass(frozen=True, eq=False)
class ChartPoint:
    coords: np.ndarray
    chart_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


def _coords(x):
    if isinstance(x, ChartPoint):
        return x.coords, x.chart_id
    return np.asarray(x, dtype=float), 0


def check_domain(model, x, chart_id=0):
    """Raise :class:`DomainError` if any point of ``x`` (..., n) is outside its chart."""
    x = hd.value_of(x)
    if x.shape[-1] != model.dim:
        raise DomainError(f"expected {model.dim} chart coordinates, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite chart coordinates")
    if chart_id not in model.charts:
        raise DomainError(f"{model.label} has no chart {chart_id}")
    r = np.linalg.norm(x, axis=-1)
    if model.ball and np.any(r >= 1.0 - BALL_MARGIN):
        raise DomainError(f"point outside ball chart |x| < {1.0 - BALL_MARGIN} (|x| = {np.max(r):.6g})")
    if model.kind is ModelKind.ROUND_SPHERE and np.any(r > SPHERE_EVAL_RADIUS):
        raise DomainError(f"point outside sphere chart radius {SPHERE_EVAL_RADIUS}; re-chart first")


def metric_derivatives(model, x):
    """``(g, dg, d2g)`` at chart points ``x`` (..., n), from the closed-form factor."""
    x, chart = _coords(x)
    check_domain(model, x, chart)
    phi, dphi, d2phi = model.log_factor(x)
    e2 = np.exp(2.0 * phi)
    eye = np.eye(model.dim)
    g = e2[..., None, None] * eye
    dg = (2.0 * e2[..., None] * dphi)[..., :, None, None] * eye
    d2 = 4.0 * dphi[..., :, None] * dphi[..., None, :] + 2.0 * d2phi
    d2g = (e2[..., None, None] * d2)[..., :, :, None, None] * eye
    return g, dg, d2g


def metric_at(model, x):
    return metric_derivatives(model, x)[0]


def _levi_civita(g, dg):
    ginv = np.linalg.inv(g)
    low = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, low), ginv, low


def christoffel_at(model, x):
    """``Gamma^k_ij`` from the Levi-Civita formula in ``g`` and ``dg``."""
    g, dg, _ = metric_derivatives(model, x)
    return _levi_civita(g, dg)[0]


def christoffel_derivative_at(model, x):
    """``d_m Gamma^k_ij`` as an array indexed ``[..., m, k, i, j]``."""
    g, dg, d2g = metric_derivatives(model, x)
    gamma, ginv, low = _levi_civita(g, dg)
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
    dlow = (
        np.einsum("...mijl->...mlij", d2g)
        + np.einsum("...mjil->...mlij", d2g)
        - d2g
    )
    return 0.5 * (
        np.einsum("...mkl,...lij->...mkij", dginv, low)
        + np.einsum("...kl,...mlij->...mkij", ginv, dlow)
    )


def riemann_from_christoffel(gamma, dgamma):
    """``R^l_ijk`` as ``[..., l, i, j, k]`` from ``Gamma`` and ``d Gamma``; accepts jets."""
    lin = dgamma.swapaxes(-4, -3)  # [..., l, i, j, k] = d_i Gamma^l_jk
    quad = hd.einsum("...lim,...mjk->...lijk", gamma, gamma)
    return lin - lin.swapaxes(-3, -2) + quad - quad.swapaxes(-3, -2)


class CurvatureEndomorphism(NamedTuple):
    """Curvature as a symmetric form on 2-vectors, in the basis ``E_i ^ E_j`` (i < j).

    ``values[a, b] = <R(E_i ^ E_j), E_k ^ E_l>`` for ``a = (i, j)``, ``b = (k, l)``,
    where ``E`` is the Gram-Schmidt orthonormal frame.
    """

    values: np.ndarray
    frame: np.ndarray


class Curvature(NamedTuple):
    tensor: np.ndarray
    lowered: np.ndarray
    endomorphism: CurvatureEndomorphism


def gram_schmidt(g):
    """Columns of the result are the g-orthonormalised coordinate basis vectors."""
    g = np.asarray(g, dtype=float)
    n = g.shape[-1]
    e = np.zeros(g.shape)
    for j in range(n):
        v = np.zeros(g.shape[:-1])
        v[..., j] = 1.0
        for i in range(j):
            ei = e[..., :, i]
            v = v - np.einsum("...a,...ab,...b->...", ei, g, v)[..., None] * ei
        nrm2 = np.einsum("...a,...ab,...b->...", v, g, v)
        if np.any(nrm2 <= 1e-300):
            raise np.linalg.LinAlgError("metric is numerically degenerate")
        e[..., :, j] = v / np.sqrt(nrm2)[..., None]
    return e


def riemann_at(model, x):
    """The (1,3) curvature tensor, its lowered form and the 2-vector endomorphism."""
    g, dg, _ = metric_derivatives(model, x)
    gamma = christoffel_at(model, x)
    dgamma = christoffel_derivative_at(model, x)
    r = riemann_from_christoffel(gamma, dgamma)
    low = np.einsum("...lp,...pijk->...ijkl", g, r)
    e = gram_schmidt(g)
    rm_e = np.einsum("...ijkl,...ia,...jb,...kc,...ld->...abcd", low, e, e, e, e)
    idx = pairs(model.dim)
    ii = [p[0] for p in idx]
    jj = [p[1] for p in idx]
    vals = rm_e[..., ii, jj, :, :][..., ii, jj]
    return Curvature(r, low, CurvatureEndomorphism(vals, e))


def sectional_curvature(model, x, u, v):
    """Sectional curvature ``<R(u, v) v, u> / |u ^ v|^2`` of the plane spanned by u, v."""
    g, _, _ = metric_derivatives(model, x)
    low = riemann_at(model, x).lowered
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    guu = np.einsum("...i,...ij,...j->...", u, g, u)
    gvv = np.einsum("...i,...ij,...j->...", v, g, v)
    guv = np.einsum("...i,...ij,...j->...", u, g, v)
    area = guu * gvv - guv**2
    if np.any(area < 1e-12 * guu * gvv) or np.any(guu * gvv == 0):
        raise DegenerateInputError("u and v do not span a plane")
    num = np.einsum("...ijkl,...i,...j,...k,...l->...", low, u, v, v, u)
    return num / area


# ---- conformal route (jet-capable) --------------------------------------


def conformal_scale(model, x):
    """``exp(-phi)``: the reference frame is ``exp(-phi) * I``."""
    if model.flat:
        return np.ones(hd.value_of(x).shape[:-1])
    return hd.exp(-model.log_factor(x)[0])


def _delta_tensor(n):
    eye = np.eye(n)
    # D[k, i, j, a] = d_ik d_ja + d_jk d_ia - d_ij d_ka
    return (
        np.einsum("ik,ja->kija", eye, eye)
        + np.einsum("jk,ia->kija", eye, eye)
        - np.einsum("ij,ka->kija", eye, eye)
    )


def conformal_christoffel(model, x, with_derivative=False):
    """``Gamma^k_ij = d_ik phi_j + d_jk phi_i - d_ij phi_k`` (and ``d_m Gamma``)."""
    _, dphi, d2phi = model.log_factor(x)
    d = _delta_tensor(model.dim)
    gamma = hd.einsum("...a,kija->...kij", dphi, d)
    if not with_derivative:
        return gamma
    return gamma, hd.einsum("...am,kija->...mkij", d2phi, d)


def frame_curvature(model, x):
    """``Rm(E_i, E_j, E_k, E_l)`` in the conformal orthonormal frame; accepts jets."""
    n = model.dim
    if model.flat:
        return np.zeros(hd.value_of(x).shape[:-1] + (n, n, n, n))
    phi = model.log_factor(x)[0]
    gamma, dgamma = conformal_christoffel(model, x, with_derivative=True)
    r = riemann_from_christoffel(gamma, dgamma)
    # r[..., l, i, j, k] -> [..., i, j, k, l]
    if isinstance(r, hd.Jet):
        r = hd.Jet(np.moveaxis(r.coeffs, -4, -1))
    else:
        r = np.moveaxis(r, -4, -1)
    return r * hd.exp(-2.0 * phi)[..., None, None, None, None]


# ---- sphere charts --------------------------------------------------------
#
# Chart 0 projects from the north pole, chart 1 from the south pole; raw
# coordinates u are related by u1 = u0 / |u0|^2.  One chart composes with the
# reflection of the first coordinate so that every transition and the map
# FM(S^n) -> SO(n+1) preserve orientation.


def sphere_flip(n, chart):
    """Whether chart ``chart`` composes with the first-coordinate reflection (array-valued)."""
    return (n + 1 + np.asarray(chart)) % 2 == 1


def _flip_vec(n, chart):
    """Per-point reflection vector ``(+-1, 1, ..., 1)`` with shape ``chart.shape + (n,)``."""
    first = np.where(sphere_flip(n, chart), -1.0, 1.0)[..., None]
    rest = np.ones(np.shape(chart) + (n - 1,))
    return np.concatenate([first, rest], axis=-1)


def _chart_sign(chart):
    return 1.0 - 2.0 * np.asarray(chart, dtype=float)


def sphere_point(model, x, chart):
    """Unit ambient point ``p in S^n`` for chart coordinates ``x``; accepts jets."""
    n = model.dim
    u = x * _flip_vec(n, chart)
    s = (u * u).sum(-1)
    inv = 1.0 / (1.0 + s)
    last = _chart_sign(chart) * (s - 1.0) * inv
    top = 2.0 * u * inv[..., None]
    return hd.stack([top[..., i] for i in range(n)] + [last], axis=-1)


def sphere_frame_matrix(model, x, a, chart):
    """The rotation ``[p | frame]`` in SO(n+1) of the frame point ``(x, a)``; accepts jets.

    ``chart`` may be an integer or an integer array broadcasting against the batch.
    """
    n = model.dim
    sig = _flip_vec(n, chart)
    u = x * sig
    s = (u * u).sum(-1)
    inv = 1.0 / (1.0 + s)
    sa = a * sig[..., :, None]
    usa = (u[..., :, None] * sa).sum(-2)  # (..., n): u . (sigma a)_j
    top = sa - 2.0 * u[..., :, None] * (usa * inv[..., None])[..., None, :]
    bottom = 2.0 * _chart_sign(chart)[..., None] * usa * inv[..., None]
    p = sphere_point(model, x, chart)
    frame = hd.stack([top[..., i, :] for i in range(n)] + [bottom], axis=-2)
    return hd.stack([p] + [frame[..., :, j] for j in range(n)], axis=-1)


def sphere_from_matrix(model, q):
    """Inverse of :func:`sphere_frame_matrix`: ``(x, a, chart)`` arrays from SO(n+1)."""
    q = np.asarray(q, dtype=float)
    n = model.dim
    p = q[..., :, 0]
    chart = (p[..., n] > 0).astype(int)
    denom = np.where(chart == 0, 1.0 - p[..., n], 1.0 + p[..., n])
    u = p[..., :n] / denom[..., None]
    s = (u * u).sum(-1)
    frame = q[..., :, 1:]
    sign = np.where(chart == 0, 2.0, -2.0)
    kt_top = np.eye(n) - 2.0 * u[..., :, None] * u[..., None, :] / (1.0 + s)[..., None, None]
    kt_bottom = (sign / (1.0 + s))[..., None] * u
    # K^T F with K = [top; bottom]
    sa = np.einsum("...ji,...jk->...ik", kt_top, frame[..., :n, :]) + kt_bottom[..., :, None] * frame[..., n, None, :]
    sig = _flip_vec(n, chart)
    return u * sig, sa * sig[..., :, None], chart


def sphere_transition(model, x, a, chart):
    """Re-express frame points ``(x, a)`` in the other sphere chart (arrays)."""
    n = model.dim
    x = np.asarray(x, dtype=float)
    chart = np.asarray(chart)
    sig_old = _flip_vec(n, chart)
    sig_new = _flip_vec(n, 1 - chart)
    u = x * sig_old
    s = (u * u).sum(-1)
    if np.any(s == 0):
        raise DomainError("cannot re-chart the chart origin")
    u_new = u / s[..., None]
    uh = u / np.sqrt(s)[..., None]
    refl = np.eye(n) - 2.0 * uh[..., :, None] * uh[..., None, :]
    a_new = sig_new[..., :, None] * (refl @ (sig_old[..., :, None] * a))
    return u_new * sig_new, a_new, 1 - chart

"""Check suites, convergence studies and trajectory export driven by a :class:`RunConfig`."""

import math

import numpy as np

from . import manifold as mf
from .errors import ConfigError, DomainError, UnsupportedModelError
from .frame_bundle import FramePoint, b_theta_flow, reference_frame
from .jets import Standard, Vertical, derive
from .lie import basis_matrix, components_of, pair_count, skew_from_components
from .measure import derive_seed, random_frame_points
from .operators import (
    R_FM_matrix,
    R_FM_pairing,
    StructuralKind,
    TestFunctionFamily,
    e1,
    structural_residual,
)
from .pestov import (
    InvarianceClass,
    _check,
    associated_pestov_residual,
    global_pestov_residual,
    hyperbolic_example_check,
    invariant_function,
    pointwise_pestov_terms,
    r_sm_sides,
)

__all__ = ["run_suite", "run_convergence", "run_flow", "suite_checks", "fit_slope"]

_TAGS = {"structural": 1, "pointwise": 2, "global": 3, "associated": 4, "curvature": 5, "crosscheck": 6}


def _functions(model, cfg, tag):
    for j in range(cfg["functions"]):
        seed = derive_seed(cfg["seed"], _TAGS[tag], j)
        yield j, TestFunctionFamily(model, degree=cfg["function.degree"], seed=seed % 2**32)


def _rng(cfg, tag, j=0):
    return np.random.default_rng(derive_seed(cfg["seed"], _TAGS[tag], 1000 + j))


def _worst(rel, lhs, rhs):
    k = int(np.argmax(rel))
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    if lhs.ndim > 1:
        return k, float(np.linalg.norm(lhs[k])), float(np.linalg.norm(rhs[k]))
    return k, float(np.broadcast_to(lhs, rel.shape)[k]), float(np.broadcast_to(rhs, rel.shape)[k])


def structural_checks(model, cfg):
    out = []
    n = model.dim
    m = pair_count(n)
    for j, f in _functions(model, cfg, "structural"):
        rng = _rng(cfg, "structural", j)
        k = cfg["points"]
        w = random_frame_points(model, rng, k)
        xi = skew_from_components(rng.standard_normal((k, m)), n)
        xip = skew_from_components(rng.standard_normal((k, m)), n)
        th, thp = rng.standard_normal((k, n)), rng.standard_normal((k, n))
        for kind in StructuralKind:
            r = structural_residual(model, f, w, kind, xi, xip, th, thp)
            rel = r.relative
            i, lhs, rhs = _worst(rel, r.lhs, r.rhs)
            out.append(
                _check(f"structural_{kind.value}", model, f, lhs, rhs, rel[i], 0.0, cfg["tolerance.structural"],
                        points=k)
            )
    return out


def pointwise_checks(model, cfg):
    out = []
    for j, f in _functions(model, cfg, "pointwise"):
        w = random_frame_points(model, _rng(cfg, "pointwise", j), cfg["points"])
        terms = pointwise_pestov_terms(model, f, w)
        rel = terms.relative
        i, lhs, rhs = _worst(rel, terms.lhs, terms.rhs)
        out.append(
            _check("pointwise_pestov", model, f, lhs, rhs, rel[i], 0.0, cfg["tolerance.pointwise"],
                    points=cfg["points"], curvature_term=float(np.max(np.abs(terms.t4))))
        )
    return out


def _require_closed(model):
    if not model.closed:
        raise UnsupportedModelError(f"unsupported model for global checks: {model.label}")


def global_checks(model, cfg):
    _require_closed(model)
    out = []
    for j, f in _functions(model, cfg, "global"):
        seed = derive_seed(cfg["seed"], _TAGS["global"], 2000 + j)
        out.append(global_pestov_residual(model, f, seed, cfg["mc.count"], cfg["workers"], cfg["tolerance.mc"]))
    return out


def associated_checks(model, cfg):
    _require_closed(model)
    out = []
    for c, klass in enumerate(InvarianceClass):
        for j in range(cfg["functions"]):
            fseed = derive_seed(cfg["seed"], _TAGS["associated"], c, j) % 2**32
            f = invariant_function(model, klass, cfg["function.degree"], fseed)
            seed = derive_seed(cfg["seed"], _TAGS["associated"], c, 3000 + j)
            chk = associated_pestov_residual(model, klass, f, seed, cfg["mc.count"], cfg["workers"], cfg["tolerance.mc"])
            out.append(chk)
    return out


def curvature_checks(model, cfg):
    """Constant-curvature example (hyperbolic ball), R_SM cross-check, image constraint, R_FM routes."""
    out = []
    n = model.dim
    if model.kind is mf.ModelKind.HYPERBOLIC_BALL:
        seed = derive_seed(cfg["seed"], _TAGS["curvature"], 0)
        out.append(hyperbolic_example_check(seed, cfg["curvature.draws"], n, cfg["tolerance.example"]))
    rng = _rng(cfg, "crosscheck")
    k = cfg["crosscheck.draws"]
    w = random_frame_points(model, rng, k)
    th, thp = rng.standard_normal((k, n)), rng.standard_normal((k, n))
    lhs, rhs = r_sm_sides(model, w, th, thp)
    dev = np.abs(lhs - rhs)
    i = int(np.argmax(dev))
    out.append(_check("r_sm_crosscheck", model, "random directions", lhs[i], rhs[i], dev[i], 0.0,
                       cfg["tolerance.crosscheck"], draws=k))

    m = pair_count(n)
    xi = skew_from_components(rng.standard_normal((k, m)), n)
    xip = skew_from_components(rng.standard_normal((k, m)), n)
    direct = R_FM_pairing(model, w, xi, xip)
    r = R_FM_matrix(model, w.x, w.a)
    assembled = np.einsum("...b,...ba,...a->...", components_of(xip), r, components_of(xi))
    dev = np.abs(direct - assembled)
    i = int(np.argmax(dev))
    out.append(_check("r_fm_routes", model, "random 2-forms", assembled[i], direct[i], dev[i], 0.0,
                       cfg["tolerance.crosscheck"], draws=k))

    image = 0.0
    for p in range(1, n):
        for q in range(p + 1, n):
            image = max(image, float(np.max(np.abs(R_FM_pairing(model, w, xi, basis_matrix(n, p, q))))))
    out.append(_check("r_fm_image", model, "random 2-forms", image, 0.0, image, 0.0, cfg["tolerance.image"],
                       draws=k))
    return out


SUITE_RUNNERS = {
    "structural": structural_checks,
    "pointwise": pointwise_checks,
    "global": global_checks,
    "associated": associated_checks,
    "curvature": curvature_checks,
}


def suite_checks(suite, model):
    """Suite names that ``suite`` expands to for ``model``."""
    if suite != "all":
        return [suite]
    names = ["structural", "pointwise", "curvature"]
    if model.closed:
        names += ["global", "associated"]
    return names


def run_suite(cfg):
    model = cfg.model()
    if cfg["suite"] in ("global", "associated"):
        _require_closed(model)
    checks = []
    for name in suite_checks(cfg["suite"], model):
        checks.extend(SUITE_RUNNERS[name](model, cfg))
    return checks


# ---- convergence ----------------------------------------------------------------


def fit_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x``."""
    xs, ys = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def _integrator_error(model, dt):
    n = model.dim
    if model.kind is mf.ModelKind.ROUND_SPHERE:
        q = np.eye(n + 1)
        x, a, chart = mf.sphere_from_matrix(model, q)
        w = FramePoint(x, a, chart)
        end = b_theta_flow(model, w, e1(n), 2 * math.pi * model.radius, dt)
        qe = mf.sphere_frame_matrix(model, end.x, end.a, end.chart_id)
        return float(np.max(np.abs(qe - q)))
    if model.kind is mf.ModelKind.HYPERBOLIC_BALL:
        t = 2.0
        end = b_theta_flow(model, FramePoint(np.zeros(n), np.eye(n)), e1(n), t, dt)
        exact = np.zeros(n)
        exact[0] = math.tanh(t / 2)
        return float(np.max(np.abs(end.x - exact)) + np.max(np.abs(end.a - np.eye(n))))
    raise UnsupportedModelError("integrator convergence needs RoundSphere or HyperbolicBall (closed-form geodesics)")


def run_convergence(cfg):
    """Rows ``(rung, h_or_count, residual, stderr, slope)``; the slope is the log-log fit over all rungs."""
    ladder = cfg["convergence.ladder"]
    if ladder is None or len(ladder) < 3:
        raise ConfigError("convergence.ladder needs at least 3 rungs", key="convergence.ladder")
    if any(not v > 0 for v in ladder):
        raise ConfigError("convergence.ladder entries must be positive", key="convergence.ladder")
    model = cfg.model()
    kind = cfg["convergence.kind"]
    rows = []
    if kind == "mc":
        _require_closed(model)
        f = TestFunctionFamily(model, degree=cfg["function.degree"], seed=derive_seed(cfg["seed"], 9) % 2**32)
        for count in ladder:
            if count < 1000:
                raise ConfigError("MC ladder counts must be at least 1000", key="convergence.ladder")
            seed = derive_seed(cfg["seed"], 9, int(count))
            chk = global_pestov_residual(model, f, seed, int(count), cfg["workers"])
            rows.append([int(count), chk.residual, chk.stderr])
        slope = fit_slope([r[0] for r in rows], [r[2] for r in rows])
    elif kind == "fd":
        n = model.dim
        f = TestFunctionFamily(model, degree=cfg["function.degree"], seed=derive_seed(cfg["seed"], 10) % 2**32)
        w = random_frame_points(model, np.random.default_rng(derive_seed(cfg["seed"], 10)), 1)[0]
        xi = skew_from_components(np.arange(1, pair_count(n) + 1, dtype=float) / pair_count(n), n)
        theta = np.linspace(1.0, -0.5, n)
        first, second = Vertical(xi), Standard(theta)
        exact = derive(model, f, w, [Standard(xi @ theta)])
        for h in ladder:
            lhs = derive(model, f, w, [first, second], "fd", h=h, levels=0) - derive(
                model, f, w, [second, first], "fd", h=h, levels=0
            )
            rows.append([float(h), float(abs(lhs - exact)), 0.0])
        slope = fit_slope([r[0] for r in rows], [r[1] for r in rows])
    else:
        for dt in ladder:
            rows.append([float(dt), _integrator_error(model, dt), 0.0])
        slope = fit_slope([r[0] for r in rows], [r[1] for r in rows])
    return [[i, *row, slope] for i, row in enumerate(rows)]


# ---- trajectories ------------------------------------------------------------------


def _initial_frame(model, cfg):
    n = model.dim
    x0 = np.zeros(n) if cfg["flow.x0"] is None else np.asarray(cfg["flow.x0"], dtype=float)
    a0 = np.eye(n) if cfg["flow.a0"] is None else np.asarray(cfg["flow.a0"], dtype=float).reshape(n, n)
    if x0.shape != (n,):
        raise ConfigError(f"flow.x0 must have {n} entries", key="flow.x0")
    try:
        w = FramePoint(x0, a0, cfg["flow.chart"])
    except ValueError as exc:
        raise ConfigError(f"flow.a0: {exc}", key="flow.a0") from None
    mf.check_domain(model, w.x, cfg["flow.chart"])
    return w


def run_flow(cfg):
    """Integrate the configured flow; returns ``(trajectory, footer_lines, error)``."""
    model = cfg.model()
    w0 = _initial_frame(model, cfg)
    n = model.dim
    theta = e1(n) if cfg["flow.theta"] is None else np.asarray(cfg["flow.theta"], dtype=float)
    if theta.shape != (n,):
        raise ConfigError(f"flow.theta must have {n} entries", key="flow.theta")
    error = None
    try:
        end, traj = b_theta_flow(model, w0, theta, cfg["flow.t"], cfg["flow.dt"], record=True)
    except DomainError as exc:
        if exc.partial is None:
            raise
        error, traj = exc, exc.partial
        end = traj.last()
    ortho = float(np.max(np.abs(end.a.T @ end.a - np.eye(n))))
    frame = reference_frame(model, end.x) @ end.a
    g = mf.metric_at(model, end.x)
    speed = float(np.linalg.norm(theta)) and float(np.sqrt((frame @ theta) @ g @ (frame @ theta)))
    footer = [
        f"steps={len(traj) - 1} t_end={traj.t[-1]!r}",
        f"orthonormality_max_dev={ortho:.3e}",
        f"det_a={float(np.linalg.det(end.a)):.15f}",
        f"speed={speed:.15f} expected={float(np.linalg.norm(theta)):.15f}",
    ]
    if model.kind is mf.ModelKind.ROUND_SPHERE:
        q0 = mf.sphere_frame_matrix(model, w0.x, w0.a, w0.chart_id)
        q1 = mf.sphere_frame_matrix(model, end.x, end.a, end.chart_id)
        footer.append(f"ambient_distance_to_start={float(np.max(np.abs(q1 - q0))):.3e}")
    if error is not None:
        footer.append(f"error={error}")
    return traj, footer, error


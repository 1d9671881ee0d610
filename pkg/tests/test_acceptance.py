"""Acceptance criteria 1-8, one PASS/FAIL line each (shown in the terminal summary)."""

import json
import math
import re
import time

import numpy as np
import pytest
from conftest import record_criterion

from pestov_lab import manifold as mf
from pestov_lab.cli import main
from pestov_lab.config import RunConfig
from pestov_lab.frame_bundle import FramePoint, frame_flow
from pestov_lab.lie import haar_rotation
from pestov_lab.operators import TestFunctionFamily
from pestov_lab.pestov import MC_SIGMAS, global_pestov_residual, hyperbolic_example_check
from pestov_lab.suites import (
    associated_checks,
    curvature_checks,
    fit_slope,
    global_checks,
    pointwise_checks,
    run_convergence,
    structural_checks,
)

SEED = 20240601
SWEEP = [
    mf.flat_torus(2),
    mf.flat_torus(3),
    mf.round_sphere(2),
    mf.round_sphere(3),
    mf.hyperbolic_ball(3),
    mf.perturbed_hyperbolic(3, eps=0.05),
]
CURVED = SWEEP[2:]


def config(model, **values):
    overrides = {"model.kind": model.kind.value, "model.dim": model.dim, "seed": SEED}
    overrides.update(values)
    return RunConfig().with_overrides(overrides)


def statistical(checks):
    return all(c.residual <= MC_SIGMAS * c.stderr for c in checks)


def test_criterion_1_structural():
    start = time.perf_counter()
    worst, ok = 0.0, True
    for model in SWEEP:
        checks = structural_checks(model, config(model, points=50, functions=5))
        worst = max(worst, max(c.residual for c in checks))
        ok &= all(c.passed for c in checks)
    elapsed = time.perf_counter() - start
    ok &= worst <= 1e-6 and elapsed <= 300
    record_criterion(1, ok, f"max relative residual {worst:.2e} (tol 1e-6) over 6 models x 6 kinds; {elapsed:.1f}s (limit 300s)")
    assert ok


def test_criterion_2_pointwise():
    worst, flat_curv, ok = 0.0, 0.0, True
    for model in SWEEP:
        checks = pointwise_checks(model, config(model, points=50, functions=5))
        worst = max(worst, max(c.residual for c in checks))
        ok &= all(c.passed for c in checks)
        if model.flat:
            flat_curv = max(flat_curv, max(c.details["curvature_term"] for c in checks))
    ok &= worst <= 1e-6 and flat_curv == 0.0
    record_criterion(2, ok, f"max relative residual {worst:.2e} (tol 1e-6); flat curvature term {flat_curv}")
    assert ok


def test_criterion_3_hyperbolic_example():
    chk = hyperbolic_example_check(seed=SEED, count_points=1000, n=3, tolerance=1e-8)
    ok = chk.residual <= 1e-8
    record_criterion(3, ok, f"max deviation {chk.residual:.2e} over 1000 draws (tol 1e-8)")
    assert ok


def test_criterion_4_global():
    start = time.perf_counter()
    checks = []
    for model in (mf.flat_torus(2), mf.flat_torus(3), mf.round_sphere(2)):
        checks += global_checks(model, config(model, functions=5, **{"mc.count": 10**6}))
    worst = max(c.residual / c.stderr for c in checks)
    model = mf.flat_torus(2)
    f = TestFunctionFamily(model, seed=SEED % 2**32)
    ladder = [10**4, 10**5, 10**6, 10**7]
    stderrs = [global_pestov_residual(model, f, SEED + k, k).stderr for k in ladder]
    slope = fit_slope(ladder, stderrs)
    elapsed = time.perf_counter() - start
    ok = statistical(checks) and abs(slope + 0.5) <= 0.1 and elapsed <= 1200
    record_criterion(
        4, ok,
        f"{len(checks)} checks at 1e6, worst |LHS-RHS|/stderr {worst:.2f} (limit {MC_SIGMAS:g}); "
        f"stderr slope {slope:.3f} (target -0.5 +- 0.1); {elapsed:.0f}s (limit 1200s)",
    )
    assert ok


def test_criterion_5_associated():
    model = mf.flat_torus(3)
    checks = associated_checks(model, config(model, functions=5, **{"mc.count": 10**6}))
    worst = max(c.residual / c.stderr for c in checks)
    invariance = max(c.details["invariance"] for c in checks)
    ok = statistical(checks) and invariance <= 1e-8
    classes = sorted({c.name for c in checks})
    record_criterion(
        5, ok,
        f"{len(checks)} checks ({', '.join(classes)}) at 1e6, worst ratio {worst:.2f} (limit {MC_SIGMAS:g}); "
        f"invariance {invariance:.1e} (tol 1e-8)",
    )
    assert ok


def test_criterion_6_curvature_crosscheck():
    cross, image = 0.0, 0.0
    for model in CURVED:
        checks = {c.name: c for c in curvature_checks(model, config(model, **{"crosscheck.draws": 100}))}
        cross = max(cross, checks["r_sm_crosscheck"].residual, checks["r_fm_routes"].residual)
        image = max(image, checks["r_fm_image"].residual)
    ok = cross <= 1e-8 and image <= 1e-12
    record_criterion(6, ok, f"cross-check {cross:.2e} (tol 1e-8); image constraint {image:.1e} (tol 1e-12)")
    assert ok


def test_criterion_7_flow_quality():
    rng = np.random.default_rng(SEED)
    closure = 0.0
    for n in (2, 3):
        model = mf.round_sphere(n)
        q = haar_rotation(rng, n + 1, 4)
        x, a, chart = mf.sphere_from_matrix(model, q)
        end = frame_flow(model, FramePoint(x, a, chart), 2 * math.pi, 1e-3)
        closure = max(closure, np.max(np.abs(mf.sphere_frame_matrix(model, end.x, end.a, end.chart_id) - q)))
    slopes = []
    for model in (mf.round_sphere(3), mf.hyperbolic_ball(3)):
        cfg = config(model, **{"convergence.kind": "integrator", "convergence.ladder": [0.2, 0.1, 0.05, 0.025]})
        slopes.append(run_convergence(cfg)[0][-1])
    drift = 0.0
    for model in SWEEP:
        n = model.dim
        w = FramePoint(np.zeros(n), haar_rotation(rng, n)) if model.ball else FramePoint(
            np.full(n, 0.3), haar_rotation(rng, n))
        end = frame_flow(model, w, 10.0, 1e-3)
        drift = max(drift, np.max(np.abs(end.a.T @ end.a - np.eye(n))))
    ok = closure <= 1e-6 and all(abs(s - 4) <= 0.3 for s in slopes) and drift <= 1e-9
    record_criterion(
        7, ok,
        f"closure {closure:.1e} (tol 1e-6); RK4 slopes {', '.join(f'{s:.2f}' for s in slopes)} (4 +- 0.3); "
        f"drift {drift:.1e} (tol 1e-9)",
    )
    assert ok


def _without_provenance(raw):
    body = json.loads(raw)
    assert "provenance" in body
    return re.sub(r'\n  "provenance": \{.*?\n  \},?', "", raw, flags=re.S)


def test_criterion_8_determinism(tmp_path):
    out = tmp_path / "report"
    bodies = []
    for _ in range(2):
        assert main(["check", "--suite", "all", "--out", str(out)]) == 0
        bodies.append(_without_provenance((out / "report.json").read_text(encoding="utf-8")))
    ok = bodies[0] == bodies[1] and len(bodies[0]) > 1000
    record_criterion(8, ok, f"two `check --suite all` runs: report bodies identical ({len(bodies[0])} bytes)")
    assert ok


@pytest.mark.parametrize("n", [4])
def test_higher_dimensional_associated_extra(n):
    """Second invariance class on a 4-torus, where SO(n-2) is non-trivial."""
    model = mf.flat_torus(n)
    checks = associated_checks(model, config(model, functions=1, **{"mc.count": 2 * 10**4}))
    assert all(c.passed for c in checks)
    assert max(c.details["invariance"] for c in checks) <= 1e-8

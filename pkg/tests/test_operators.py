import numpy as np
import pytest
from conftest import ALL_MODELS, CURVED, model_id, points
from hypothesis import given, settings
from hypothesis import strategies as st

from pestov_lab import hyperdual as hd
from pestov_lab import manifold as mf
from pestov_lab.frame_bundle import FramePoint, frame_flow
from pestov_lab.jets import ScalarField, Vertical, derive
from pestov_lab.lie import adjoint, basis_matrix, components_of, haar_rotation, pair_count, skew_from_components
from pestov_lab.measure import integrate_terms
from pestov_lab.operators import (
    R_FM_apply,
    R_FM_matrix,
    R_FM_pairing,
    FunctionKind,
    StructuralKind,
    TestFunctionFamily,
    TwoFormField,
    X_apply,
    div_H,
    div_V,
    grad_H,
    grad_V,
    relative,
    structural_residual,
)

KINDS = list(StructuralKind)


def const(c):
    return ScalarField(lambda x, a, ch: c + 0.0 * x[..., 0], "constant")


def fx(fn):
    return ScalarField(lambda x, a, ch: fn(x), "f(x)")


# ---- X ------------------------------------------------------------------------------


def test_x_of_constant_is_zero():
    model = mf.hyperbolic_ball(3)
    np.testing.assert_array_equal(X_apply(model, const(2.0), points(model, 5)), 0.0)


def test_x_of_coordinate_on_torus():
    w = FramePoint([1.0, 2.0], np.eye(2))
    assert X_apply(mf.flat_torus(2), fx(lambda x: x[..., 0]), w) == pytest.approx(1.0)


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_x_matches_flow_difference(model):
    f = TestFunctionFamily(model, seed=5)
    w = points(model, 1, 5)[0]
    h = 1e-3
    fd = (f(frame_flow(model, w, h, 1e-4)) - f(frame_flow(model, w, -h, 1e-4))) / (2 * h)
    ex = X_apply(model, f, w)
    assert abs(fd - ex) <= 1e-6 * (1 + abs(ex))
    richardson = (4 * fd - (f(frame_flow(model, w, 2 * h, 1e-4)) - f(frame_flow(model, w, -2 * h, 1e-4))) / (4 * h)) / 3
    assert abs(richardson - ex) <= 1e-7 * (1 + abs(ex))


# ---- gradients ------------------------------------------------------------------------


@pytest.mark.parametrize("model", ALL_MODELS, ids=model_id)
def test_vertical_gradient_of_base_function_is_zero(model):
    f = fx(lambda x: hd.sin((x * x).sum(-1)))
    np.testing.assert_array_equal(grad_V(model, f, points(model, 4)), 0.0)


def test_vertical_gradient_sign_convention():
    model = mf.flat_torus(2)
    w = FramePoint([0.1, 0.2], np.eye(2))
    a11 = ScalarField(lambda x, a, c: a[..., 0, 0])
    a21 = ScalarField(lambda x, a, c: a[..., 1, 0])
    assert grad_V(model, a11, w)[0] == 0.0
    assert grad_V(model, a21, w)[0] == 1.0


def test_vertical_gradient_norm(rng):
    model = mf.round_sphere(3)
    f, w = TestFunctionFamily(model, seed=1), points(model, 6)
    g = grad_V(model, f, w)
    ys = [derive(model, f, w, [Vertical(basis_matrix(3, i, j))]) for i, j in [(0, 1), (0, 2), (1, 2)]]
    np.testing.assert_allclose(np.sum(g**2, -1), sum(y**2 for y in ys), rtol=1e-14)


def test_horizontal_gradient_of_fibre_function_on_torus():
    f = ScalarField(lambda x, a, c: a[..., 0, 1] * a[..., 2, 2] + a[..., 1, 0])
    np.testing.assert_array_equal(grad_H(mf.flat_torus(3), f, FramePoint(np.ones(3), np.eye(3))), 0.0)


def test_horizontal_gradient_on_torus_example():
    w = FramePoint([0.3, 0.8], np.eye(2))
    g = grad_H(mf.flat_torus(2), fx(lambda x: hd.sin(x[..., 1])), w)
    assert g[0] == pytest.approx(np.cos(0.8), abs=1e-15)


@pytest.mark.parametrize("model", ALL_MODELS, ids=model_id)
def test_horizontal_gradient_off_first_row_is_zero(model):
    g = grad_H(model, TestFunctionFamily(model, seed=2), points(model, 3))
    n = model.dim
    for k, (i, j) in enumerate((i, j) for i in range(n) for j in range(i + 1, n)):
        if i > 0:
            assert np.all(g[..., k] == 0.0)


# ---- divergences and adjointness --------------------------------------------------------


def test_divergence_of_constant_form_is_zero():
    model = mf.perturbed_hyperbolic(3)
    F = TwoFormField(tuple(const(c) for c in (1.0, -2.0, 0.5)))
    w = points(model, 4)
    np.testing.assert_allclose(div_V(model, F, w), 0.0, atol=1e-15)
    np.testing.assert_allclose(div_H(model, F, w), 0.0, atol=1e-13)


def test_single_component_divergence():
    model = mf.round_sphere(2)
    f12 = TestFunctionFamily(model, seed=3)
    w = points(model, 5)
    np.testing.assert_allclose(div_V(model, TwoFormField((f12,)), w), -derive(model, f12, w, [Vertical(basis_matrix(2, 0, 1))]))


@pytest.mark.parametrize("which", ["vertical", "horizontal"])
def test_adjointness_on_torus(which):
    model = mf.flat_torus(2)
    f = TestFunctionFamily(model, seed=7)
    F = TwoFormField((TestFunctionFamily(model, seed=8),))
    grad, div = (grad_V, div_V) if which == "vertical" else (grad_H, div_H)

    def terms(w):
        return np.stack([np.sum(grad(model, f, w) * F(w), -1), f(w) * div(model, F, w)], -1)

    est = integrate_terms(model, terms, seed=99, count=40000).estimate([1.0, -1.0])
    assert abs(est.value) <= 4 * est.stderr


# ---- curvature operator --------------------------------------------------------------


def test_r_fm_flat_is_zero():
    w = points(mf.flat_torus(3), 5)
    np.testing.assert_array_equal(R_FM_matrix(mf.flat_torus(3), w.x, w.a), 0.0)


def test_r_fm_hyperbolic_example(rng):
    model = mf.hyperbolic_ball(3)
    w = points(model, 100)
    c, cp = rng.standard_normal((2, 100, 3))
    value = np.einsum("...b,...ba,...a->...", cp, R_FM_matrix(model, w.x, w.a), c)
    xi, xip = skew_from_components(c), skew_from_components(cp)
    np.testing.assert_allclose(value, -np.einsum("...i,...i->...", xi[..., :, 0], xip[..., :, 0]), atol=1e-8)


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_r_fm_image_constraint(model, rng):
    w = points(model, 30)
    n = model.dim
    xi = skew_from_components(rng.standard_normal((30, pair_count(n))), n)
    out = components_of(R_FM_apply(model, w, xi).matrix)
    for k, (i, j) in enumerate((i, j) for i in range(n) for j in range(i + 1, n)):
        if i > 0:
            assert np.max(np.abs(out[..., k])) <= 1e-12


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_r_fm_matches_direct_assembly(model, rng):
    w = points(model, 30, 1)
    n = model.dim
    xi, xip = (skew_from_components(rng.standard_normal((30, pair_count(n))), n) for _ in range(2))
    assembled = np.einsum("...b,...ba,...a->...", components_of(xip), R_FM_matrix(model, w.x, w.a), components_of(xi))
    np.testing.assert_allclose(assembled, R_FM_pairing(model, w, xi, xip), atol=1e-10)


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_r_fm_first_row_block_symmetric(model):
    """The block between pairs ``(1, q)`` is ``Rm(e_q, e_1, e_1, e_p)``, which is symmetric."""
    w = points(model, 10, 2)
    r = R_FM_matrix(model, w.x, w.a)[..., : model.dim - 1, : model.dim - 1]
    np.testing.assert_allclose(r, np.swapaxes(r, -1, -2), atol=1e-12)


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_r_fm_equivariance(model, rng):
    """``R_FM(w a) = a^-1 R_FM(w) a`` for rotations fixing the first vector."""
    n = model.dim
    w = points(model, 10, 3)
    a = np.zeros((10, n, n))
    a[:, 0, 0] = 1.0
    a[:, 1:, 1:] = haar_rotation(rng, n - 1, 10)
    xi = skew_from_components(rng.standard_normal((10, pair_count(n))), n)
    lhs = R_FM_apply(model, w.right_multiply(a), xi).matrix
    at = np.swapaxes(a, -1, -2)
    rhs = adjoint(at, R_FM_apply(model, w, adjoint(a, xi)).matrix)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


# ---- structural identities --------------------------------------------------------------


@pytest.mark.parametrize("model", ALL_MODELS, ids=model_id)
@pytest.mark.parametrize("which", KINDS, ids=lambda k: k.value)
def test_structural_identities(model, which):
    rng = np.random.default_rng(len(model.label) + KINDS.index(which))
    n = model.dim
    m = pair_count(n)
    w = points(model, 50, 9)
    f = TestFunctionFamily(model, seed=13)
    xi, xip = (skew_from_components(rng.standard_normal((50, m)), n) for _ in range(2))
    th, thp = rng.standard_normal((2, 50, n))
    r = structural_residual(model, f, w, which, xi, xip, th, thp)
    assert np.max(r.relative) <= 1e-6


def test_flat_bb_commutator_vanishes():
    model = mf.flat_torus(3)
    r = structural_residual(model, TestFunctionFamily(model, seed=1), points(model, 10), "BB")
    np.testing.assert_array_equal(r.rhs, 0.0)
    assert np.max(np.abs(r.lhs)) <= 1e-8


def test_l25_on_constant_is_exactly_zero():
    model = mf.perturbed_hyperbolic(3)
    r = structural_residual(model, const(3.0), points(model, 5), "L25")
    np.testing.assert_array_equal(r.residual, 0.0)


@pytest.mark.parametrize("model", CURVED, ids=model_id)
def test_vb_sign_flip_is_detected(model):
    """The VB check is sensitive to the sign convention: a flipped rhs fails."""
    f = TestFunctionFamily(model, seed=4)
    w = points(model, 10, 4)
    r = structural_residual(model, f, w, "VB")
    flipped = relative(np.abs(r.lhs + r.rhs), r.scale)
    assert np.max(flipped) > 1e-3


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(KINDS))
def test_structural_hypothesis_sweep(seed, kind):
    model = mf.perturbed_hyperbolic(3)
    f = TestFunctionFamily(model, degree=3, seed=seed)
    r = structural_residual(model, f, points(model, 5, seed), kind)
    assert np.max(r.relative) <= 1e-6


def test_function_families_validate_model():
    with pytest.raises(ValueError):
        TestFunctionFamily(mf.hyperbolic_ball(3), kind=FunctionKind.TORUS_TRIG_POLY)
    with pytest.raises(ValueError):
        TestFunctionFamily(mf.flat_torus(2), kind="GroupMatrixPoly")
    with pytest.raises(ValueError):
        TestFunctionFamily(mf.flat_torus(2), degree=4)


def test_torus_functions_are_periodic(rng):
    model = mf.flat_torus(3)
    f = TestFunctionFamily(model, seed=2)
    w = points(model, 5)
    shifted = FramePoint(w.x + 2 * np.pi * rng.integers(-2, 3, (5, 3)), w.a)
    np.testing.assert_allclose(f(shifted), f(w), atol=1e-12)


def test_sphere_functions_are_chart_independent(rng):
    model = mf.round_sphere(2)
    f = TestFunctionFamily(model, seed=2)
    x, a, chart = mf.sphere_from_matrix(model, haar_rotation(rng, 3, 300))
    keep = np.linalg.norm(x, axis=-1) > 0.6
    x, a, chart = x[keep], a[keep], chart[keep]
    x2, a2, c2 = mf.sphere_transition(model, x, a, chart)
    np.testing.assert_allclose(f(FramePoint(x2, a2, c2)), f(FramePoint(x, a, chart)), atol=1e-12)

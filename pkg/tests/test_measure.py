import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pestov_lab import manifold as mf
from pestov_lab.errors import DataError, UnsupportedModelError
from pestov_lab.frame_bundle import FramePoint
from pestov_lab.jets import ScalarField
from pestov_lab.lie import haar_rotation
from pestov_lab.measure import (
    CHUNK,
    Moments,
    derive_seed,
    integrate,
    integrate_terms,
    l2_inner,
    l2_inner_2form,
    sample_liouville,
)
from pestov_lab.operators import TestFunctionFamily, grad_V

TORUS2, TORUS3, SPHERE2 = mf.flat_torus(2), mf.flat_torus(3), mf.round_sphere(2)


def field(fn):
    return ScalarField(lambda x, a, c: fn(x, a), "test")


def within(est, target, sigmas=4.0):
    return abs(est.value - target) <= sigmas * est.stderr


def test_constant_integrates_exactly():
    est = integrate(SPHERE2, field(lambda x, a: 1.0 + 0.0 * x[..., 0]), seed=1, count=5000)
    assert est.value == 1.0 and est.stderr == 0.0 and est.count == 5000


def test_torus_haar_first_moment():
    assert within(integrate(TORUS2, field(lambda x, a: a[..., 0, 0]), seed=2, count=50000), 0.0)


def test_torus_haar_second_moment():
    est = integrate(TORUS3, field(lambda x, a: a[..., 0, 0] ** 2), seed=3, count=200000)
    assert within(est, 1.0 / 3.0)
    assert est.stderr < 2e-3


def test_torus_sine_integrates_to_zero():
    assert within(integrate(TORUS3, field(lambda x, a: np.sin(x[..., 0])), seed=4, count=50000), 0.0)


@pytest.mark.parametrize("i", range(3))
@pytest.mark.parametrize("j", range(3))
def test_so3_matrix_entries_integrate_to_zero(i, j):
    def entry(x, a, c):
        return mf.sphere_frame_matrix(SPHERE2, x, a, c)[..., i, j]

    est = integrate(SPHERE2, ScalarField(entry), seed=10 + 3 * i + j, count=30000)
    assert within(est, 0.0)


def test_sphere_points_follow_haar_on_so3():
    """Second moments of SO(3) entries equal 1/3."""
    stream = sample_liouville(SPHERE2, 5, 60000)
    w = stream.points()
    q = mf.sphere_frame_matrix(SPHERE2, w.x, w.a, w.chart_id)
    np.testing.assert_allclose(np.mean(q**2, axis=0), np.full((3, 3), 1 / 3), atol=0.01)


def test_l2_inner_is_nonnegative():
    f = TestFunctionFamily(TORUS2, seed=1)
    est = l2_inner(TORUS2, f, f, seed=6, count=5000)
    assert est.value >= -4 * est.stderr


def test_shared_stream_difference_uses_covariance():
    f, g = TestFunctionFamily(TORUS2, seed=1), TestFunctionFamily(TORUS2, seed=1) * 1.001
    m = integrate_terms(TORUS2, lambda w: np.stack([f(w) ** 2, g(w) ** 2], -1), seed=7, count=20000)
    diff = m.estimate([1.0, -1.0])
    separate = np.hypot(m.estimate([1.0, 0.0]).stderr, m.estimate([0.0, 1.0]).stderr)
    assert diff.stderr < 0.01 * separate


def test_vertical_gradient_norm_matches_component_sum():
    f = TestFunctionFamily(TORUS3, seed=2)
    whole = l2_inner_2form(TORUS3, lambda w: grad_V(TORUS3, f, w), lambda w: grad_V(TORUS3, f, w), seed=8, count=3000)
    parts = 0.0
    for k in range(3):
        comp = ScalarField(lambda x, a, c, k=k: grad_V(TORUS3, f, FramePoint(x, a, c, check=False))[..., k])
        parts += l2_inner(TORUS3, comp, comp, seed=8, count=3000).value
    assert whole.value == pytest.approx(parts, rel=1e-12)


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_reproducible_across_worker_counts(workers):
    f = TestFunctionFamily(TORUS2, seed=3)
    count = 3 * CHUNK + 17
    a = integrate(TORUS2, f, seed=9, count=count, workers=1)
    b = integrate(TORUS2, f, seed=9, count=count, workers=workers)
    assert (a.value, a.stderr) == (b.value, b.stderr)


def test_identical_seeds_identical_streams():
    a = sample_liouville(SPHERE2, 11, 1000).points()
    b = sample_liouville(SPHERE2, 11, 1000).points()
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.a, b.a)
    c = sample_liouville(SPHERE2, 12, 1000).points()
    assert not np.array_equal(a.x, c.x)


def test_stream_chunking():
    s = sample_liouville(TORUS2, 1, 2 * CHUNK + 5)
    assert s.n_chunks == 3
    assert [len(p) for p in s] == [CHUNK, CHUNK, 5]


def test_haar_invariance(rng):
    b = haar_rotation(rng, 3)
    poly = lambda a: a[..., 0, 0] ** 2 * a[..., 1, 2] + a[..., 2, 1] ** 2  # noqa: E731
    m = integrate_terms(TORUS3, lambda w: np.stack([poly(w.a), poly(b @ w.a)], -1), seed=13, count=100000)
    assert within(m.estimate([1.0, -1.0]), 0.0)


def test_sphere_integrand_is_chart_independent():
    f = TestFunctionFamily(SPHERE2, seed=4)
    w = sample_liouville(SPHERE2, 14, 2000).points()
    keep = np.linalg.norm(w.x, axis=-1) > 0.5
    x, a, c = w.x[keep], w.a[keep], w.chart_id[keep]
    x2, a2, c2 = mf.sphere_transition(SPHERE2, x, a, c)
    np.testing.assert_allclose(f(FramePoint(x2, a2, c2, check=False)), f(FramePoint(x, a, c, check=False)), atol=1e-10)


def test_non_finite_values_report_global_index():
    def bad(w):
        out = np.ones(len(w))
        if len(w) == 5:
            out[3] = np.nan
        return out

    with pytest.raises(DataError) as info:
        integrate_terms(TORUS2, bad, seed=1, count=2 * CHUNK + 5)
    assert info.value.index == 2 * CHUNK + 3


def test_open_models_cannot_be_sampled():
    with pytest.raises(UnsupportedModelError):
        sample_liouville(mf.hyperbolic_ball(3), 1, 100)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_moment_merge_matches_direct(sizes, seed):
    values = np.random.default_rng(seed).standard_normal((sum(sizes), 2))
    merged = Moments(2)
    start = 0
    for s in sizes:
        merged.merge(Moments.of(values[start : start + s]))
        start += s
    direct = Moments.of(values)
    np.testing.assert_allclose(merged.mean, direct.mean, atol=1e-12)
    np.testing.assert_allclose(merged.covariance(), direct.covariance(), atol=1e-10)


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(1, k) for k in range(100)} | {derive_seed(2, k) for k in range(100)}
    assert len(seeds) == 200
    assert derive_seed(1, 5) == derive_seed(1, 5)

"""Liouville-measure sampling and Monte Carlo integration on closed frame bundles.

The Liouville measure is normalised to a probability measure.  On the torus it
is uniform in ``x`` times Haar measure on SO(n); on the sphere FM(S^n) is
identified with SO(n+1) and sampled from Haar measure there.

Samples are drawn in chunks of ``CHUNK`` points.  Chunk ``c`` of a stream with
seed ``s`` uses a Philox generator keyed by ``SeedSequence(s, spawn_key=(c,))``,
and per-chunk moments are merged in chunk order, so estimates are bit-identical
for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import manifold as mf
from .errors import DataError, UnsupportedModelError
from .frame_bundle import FramePoint
from .lie import haar_rotation

__all__ = [
    "CHUNK",
    "RNG_ALGORITHM",
    "SampleStream",
    "McEstimate",
    "Moments",
    "sample_liouville",
    "random_frame_points",
    "derive_seed",
    "integrate",
    "integrate_terms",
    "l2_inner",
    "l2_inner_2form",
]

CHUNK = 2**16
RNG_ALGORITHM = "Philox4x64 via numpy SeedSequence(seed, spawn_key=(chunk,))"


def _require_closed(model):
    if not model.closed:
        raise UnsupportedModelError(f"{model.label} is not closed; Liouville sampling needs FlatTorus or RoundSphere")


@dataclass(frozen=True)
class SampleStream:
    """A reproducible stream of Liouville-distributed frame points."""

    model: mf.MetricModel
    seed: int
    count: int
    chunk: int = CHUNK

    def __post_init__(self):
        _require_closed(self.model)
        if self.count < 1:
            raise ValueError("sample count must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_chunks(self):
        return -(-self.count // self.chunk)

    def chunk_size(self, index):
        return min(self.chunk, self.count - index * self.chunk)

    def generator(self, index):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(index),))
        return np.random.Generator(np.random.Philox(ss))

    def chunk_points(self, index):
        """The frame points of chunk ``index``."""
        rng = self.generator(index)
        size = self.chunk_size(index)
        n = self.model.dim
        if self.model.kind is mf.ModelKind.FLAT_TORUS:
            x = rng.random((size, n)) * np.asarray(self.model.periods)
            return FramePoint(x, haar_rotation(rng, n, size), 0, check=False)
        q = haar_rotation(rng, n + 1, size)
        x, a, chart = mf.sphere_from_matrix(self.model, q)
        return FramePoint(x, a, chart, check=False)

    def __iter__(self):
        for index in range(self.n_chunks):
            yield self.chunk_points(index)

    def points(self):
        """All samples as one batch (for small counts)."""
        parts = list(self)
        return FramePoint(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([np.broadcast_to(p.chart_id, p.batch_shape) for p in parts]),
            check=False,
        )


def sample_liouville(model, seed, count):
    return SampleStream(model, int(seed), int(count))


def random_frame_points(model, rng, count):
    """Random frame points for pointwise sweeps.

    Closed models use the Liouville measure; ball models use ``x`` uniform in
    the ball of radius ``BALL_SAMPLING_RADIUS`` and Haar ``a``.
    """
    n = model.dim
    if model.kind is mf.ModelKind.FLAT_TORUS:
        x = rng.random((count, n)) * np.asarray(model.periods)
        return FramePoint(x, haar_rotation(rng, n, count), 0, check=False)
    if model.kind is mf.ModelKind.ROUND_SPHERE:
        x, a, chart = mf.sphere_from_matrix(model, haar_rotation(rng, n + 1, count))
        return FramePoint(x, a, chart, check=False)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    x = d * mf.BALL_SAMPLING_RADIUS * rng.random((count, 1)) ** (1.0 / n)
    return FramePoint(x, haar_rotation(rng, n, count), 0, check=False)


def derive_seed(seed, *keys):
    """A 64-bit seed for a sub-task, derived deterministically from ``seed`` and integer keys."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    count: int


class Moments:
    """Mean vector and scatter matrix of vector-valued samples, mergeable in a fixed order."""

    def __init__(self, k):
        self.count = 0
        self.mean = np.zeros(k)
        self.scatter = np.zeros((k, k))

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float)
        m = cls(values.shape[1])
        m.count = values.shape[0]
        m.mean = values.mean(axis=0)
        centered = values - m.mean
        m.scatter = centered.T @ centered
        return m

    def merge(self, other):
        if other.count == 0:
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.scatter = self.scatter + other.scatter + np.outer(delta, delta) * (self.count * other.count / total)
        self.mean = self.mean + delta * (other.count / total)
        self.count = total
        return self

    def covariance(self):
        if self.count < 2:
            return np.zeros_like(self.scatter)
        return self.scatter / (self.count - 1)

    def estimate(self, weights):
        """MC estimate of ``weights . E[values]`` with the stderr of that combination."""
        w = np.asarray(weights, dtype=float)
        var = max(float(w @ self.covariance() @ w), 0.0)
        return McEstimate(float(w @ self.mean), float(np.sqrt(var / max(self.count, 1))), self.count)


def _chunk_moments(stream, fn, index):
    w = stream.chunk_points(index)
    values = np.asarray(fn(w), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        first = int(np.argmax(bad)) + index * stream.chunk
        raise DataError(f"non-finite integrand at sample {first}", index=first)
    return Moments.of(values)


def integrate_terms(model, fn, seed, count, workers=1):
    """:class:`Moments` of a vector-valued integrand over a Liouville stream.

    ``fn`` receives a :class:`FramePoint` batch and returns an array of shape
    ``(batch,)`` or ``(batch, k)``.
    """
    stream = sample_liouville(model, seed, count)
    indices = range(stream.n_chunks)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(lambda i: _chunk_moments(stream, fn, i), indices))
    else:
        parts = [_chunk_moments(stream, fn, i) for i in indices]
    total = None
    for part in parts:
        total = part if total is None else total.merge(part)
    return total


def integrate(model, f, seed, count, workers=1):
    """MC estimate of the normalised integral of ``f`` over FM."""
    return integrate_terms(model, lambda w: f(w), seed, count, workers).estimate([1.0])


def l2_inner(model, f, g, seed, count, workers=1):
    return integrate_terms(model, lambda w: f(w) * g(w), seed, count, workers).estimate([1.0])


def l2_inner_2form(model, F, G, seed, count, workers=1):
    """``sum_{i<j} int F_ij G_ij``; ``F`` and ``G`` map a batch to components (batch, m)."""
    return integrate_terms(model, lambda w: np.sum(F(w) * G(w), axis=-1), seed, count, workers).estimate([1.0])

"""so(n) and SO(n) utilities.

Two-forms on R^n are identified with skew matrices by contraction: the basis
element ``e_i ^ e_j`` acts as ``theta -> <theta, e_i> e_j - <theta, e_j> e_i``,
so its matrix is ``E_ji - E_ij``.  Components are listed over pairs ``i < j``
in lexicographic order, and that basis is orthonormal.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

__all__ = [
    "SkewForm",
    "pairs",
    "pair_count",
    "basis_matrix",
    "skew_from_components",
    "components_of",
    "wedge",
    "bracket",
    "so_inner",
    "adjoint",
    "expm_skew",
    "polar_rotation",
    "haar_rotation",
]


@lru_cache(maxsize=None)
def pairs(n):
    """Index pairs ``(i, j)``, ``i < j``, in basis order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def pair_count(n):
    return n * (n - 1) // 2


@lru_cache(maxsize=None)
def _basis(n):
    out = np.zeros((pair_count(n), n, n))
    for k, (i, j) in enumerate(pairs(n)):
        out[k, j, i] = 1.0
        out[k, i, j] = -1.0
    out.setflags(write=False)
    return out


def basis_matrix(n, i, j):
    """Matrix of ``e_i ^ e_j`` (either order; swapping flips the sign)."""
    m = np.zeros((n, n))
    m[j, i] += 1.0
    m[i, j] -= 1.0
    return m


def skew_from_components(c, n=None):
    c = np.asarray(c, dtype=float)
    if n is None:
        n = int(round((1 + np.sqrt(1 + 8 * c.shape[-1])) / 2))
    return np.einsum("...k,kij->...ij", c, _basis(n))


def components_of(m):
    m = np.asarray(m)
    n = m.shape[-1]
    idx_i = [i for i, _ in pairs(n)]
    idx_j = [j for _, j in pairs(n)]
    return m[..., idx_j, idx_i]


def wedge(u, v):
    """Matrix of ``u ^ v`` under the contraction convention."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    return v[..., :, None] * u[..., None, :] - u[..., :, None] * v[..., None, :]


def bracket(a, b):
    return a @ b - b @ a


def so_inner(a, b):
    """Inner product making ``(e_i ^ e_j)_{i<j}`` orthonormal."""
    return 0.5 * np.einsum("...ij,...ij->...", a, b)


def adjoint(g, m):
    """Adjoint action ``g m g^-1`` of a rotation on a skew matrix."""
    return g @ m @ np.swapaxes(g, -1, -2)


def expm_skew(m):
    """Exponential of (a batch of) skew matrices; closed form for n <= 3."""
    m = np.asarray(m, dtype=float)
    n = m.shape[-1]
    if n == 2:
        ang = m[..., 1, 0]
        c, s = np.cos(ang), np.sin(ang)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    if n == 3:
        th2 = 0.5 * np.einsum("...ij,...ij->...", m, m)
        th = np.sqrt(th2)
        small = th2 < 1e-12
        safe = np.where(small, 1.0, th)
        s1 = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
        s2 = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / np.where(small, 1.0, th2))
        m2 = m @ m
        return np.eye(3) + s1[..., None, None] * m + s2[..., None, None] * m2
    return scipy.linalg.expm(m)


def polar_rotation(a):
    """Nearest rotation (orthogonal polar factor with det +1)."""
    u, _, vt = np.linalg.svd(a)
    d = np.sign(np.linalg.det(u @ vt))
    u[..., :, -1] *= d[..., None]
    return u @ vt


def haar_rotation(rng, n, size=None):
    """Haar-distributed rotations from Gaussian QR with sign-fixed diagonal."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    z = rng.standard_normal(shape + (n, n))
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    q = q * d[..., None, :]
    neg = np.linalg.det(q) < 0
    q[..., :, 0] = np.where(neg[..., None], -q[..., :, 0], q[..., :, 0])
    return q


@dataclass(frozen=True, eq=False)
class SkewForm:
    """An element of the exterior square of R^n, stored as a skew matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
            raise ValueError("skew form needs a square matrix")
        mt = np.swapaxes(m, -1, -2)
        if np.max(np.abs(m + mt), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(m), initial=0.0)):
            raise ValueError("matrix is not skew-symmetric")
        # exact antisymmetry: x - y and y - x are exact negatives
        object.__setattr__(self, "matrix", 0.5 * (m - mt))

    @classmethod
    def from_components(cls, c, n=None):
        return cls(skew_from_components(c, n))

    @classmethod
    def basis(cls, n, i, j):
        return cls(basis_matrix(n, i, j))

    @property
    def n(self):
        return self.matrix.shape[-1]

    @property
    def components(self):
        return components_of(self.matrix)

    def norm(self):
        return np.sqrt(so_inner(self.matrix, self.matrix))

    def apply(self, theta):
        """The vector ``xi theta``."""
        return (self.matrix @ np.asarray(theta, dtype=float)[..., None])[..., 0]

    def bracket(self, other):
        return SkewForm(bracket(self.matrix, other.matrix))

    def __add__(self, other):
        return SkewForm(self.matrix + other.matrix)

    def __mul__(self, s):
        return SkewForm(self.matrix * s)

    __rmul__ = __mul__

"""Haar-distributed random matrices and small dense linear-algebra helpers.

Unitaries are sampled by QR of a complex Ginibre matrix with the diagonal
phase correction R_jj/|R_jj|, which makes the distribution exactly Haar
rather than merely orthonormal.  Special-orthogonal matrices use the real
analogue with a sign correction plus a fixed reflection onto det = +1.

For inner loops that only need the *column space* statistics of a Haar
isometry (projector sampling, trajectory engines), ``haar_isometry_cholqr``
orthonormalizes the Ginibre draw with a Cholesky factor instead of
Householder QR.  G @ inv(L)^H has exactly the Haar distribution on the
Stiefel manifold: the map G -> G L^{-H} commutes with left multiplication
by any fixed unitary (which leaves both the Ginibre law and the Gram matrix
unchanged), so its image law is the unique left-invariant measure.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .rng import RngStream

__all__ = [
    "standard_normal_complex",
    "haar_unitary",
    "haar_unitary_batch",
    "haar_isometry",
    "haar_isometry_batch",
    "haar_isometry_cholqr",
    "haar_special_orthogonal",
    "haar_special_orthogonal_batch",
    "random_projector",
    "hermitize",
]


def standard_normal_complex(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. complex Gaussians with N(0,1) real and imaginary parts.

    Drawn as one interleaved float64 block reinterpreted as complex128,
    which avoids the temporary of building re + 1j*im.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    flat = rng.standard_normal(shape[:-1] + (2 * shape[-1],))
    return flat.view(np.complex128)


def hermitize(a: np.ndarray) -> np.ndarray:
    """(A + A^H)/2, suppressing round-off asymmetry of computed Hermitians."""
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def _phase_fix(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Right-multiply Q by diag(R_jj/|R_jj|) so Q is Haar, not just orthonormal."""
    d = np.diagonal(r, axis1=-2, axis2=-1).copy()
    d[d == 0] = 1.0  # measure-zero; keep the column untouched
    return q * (d / np.abs(d))[..., np.newaxis, :]


def haar_unitary(n: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Haar-random U(n) matrix.

    Raises ValueError for n < 1.
    """
    if n < 1:
        raise ValueError(f"invalid dimension for a unitary: {n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    g = standard_normal_complex(gen, (n, n))
    q, r = np.linalg.qr(g)
    return _phase_fix(q, r)


def haar_unitary_batch(
    n: int, count: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Stack of ``count`` independent Haar U(n) matrices, shape (count, n, n)."""
    if n < 1:
        raise ValueError(f"invalid dimension for a unitary: {n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    g = standard_normal_complex(gen, (count, n, n))
    q, r = np.linalg.qr(g)
    return _phase_fix(q, r)


def haar_isometry(n: int, r: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """First r columns of a Haar U(n) matrix (an n-by-r Haar isometry)."""
    if not 0 < r <= n:
        raise ValueError(f"invalid isometry shape ({n}, {r})")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    g = standard_normal_complex(gen, (n, r))
    q, rr = np.linalg.qr(g, mode="reduced")
    return _phase_fix(q, rr)


def haar_isometry_batch(
    n: int, r: int, count: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Stack of ``count`` Haar n-by-r isometries, shape (count, n, r)."""
    if not 0 < r <= n:
        raise ValueError(f"invalid isometry shape ({n}, {r})")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    g = standard_normal_complex(gen, (count, n, r))
    q, rr = np.linalg.qr(g, mode="reduced")
    return _phase_fix(q, rr)


def haar_isometry_cholqr(
    n: int, r: int, gen: np.random.Generator, out_gram: np.ndarray | None = None
) -> np.ndarray:
    """Haar n-by-r isometry via Cholesky orthonormalization of a Ginibre draw.

    Same distribution as ``haar_isometry`` (see module docstring) at roughly
    half the LAPACK cost for tall matrices.  Orthogonality holds to
    ~1e-12 * cond(G)^2, ample for n <= 4r.
    """
    g = standard_normal_complex(gen, (n, r))
    s = g.conj().T @ g
    lo = np.linalg.cholesky(s)
    # G @ inv(L)^H, computed as a triangular solve on the right
    return scipy.linalg.solve_triangular(
        lo, g.conj().T, lower=True, check_finite=False
    ).conj().T


def haar_special_orthogonal(
    m: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Haar-random SO(m) matrix for even m >= 2.

    QR of a real Ginibre with sign(R_jj) correction gives Haar on O(m);
    samples landing on the det = -1 component are reflected onto SO(m)
    by negating one fixed column.
    """
    if m < 2 or m % 2 != 0:
        raise ValueError(f"invalid dimension for SO sampling (need even m >= 2): {m}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _so_from_ginibre(gen.standard_normal((m, m)))


def haar_special_orthogonal_batch(
    m: int, count: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Stack of ``count`` Haar SO(m) matrices, shape (count, m, m)."""
    if m < 2 or m % 2 != 0:
        raise ValueError(f"invalid dimension for SO sampling (need even m >= 2): {m}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _so_from_ginibre(gen.standard_normal((count, m, m)))


def _so_from_ginibre(g: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(g)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    signs = np.where(d < 0, -1.0, 1.0)
    q = q * signs[..., np.newaxis, :]
    # sign-corrected Q has det = sign(det G); reflect det = -1 samples
    det_sign, _ = np.linalg.slogdet(g)
    flip = det_sign < 0
    q[..., :, -1] = np.where(flip[..., np.newaxis], -q[..., :, -1], q[..., :, -1])
    return q


def random_projector(
    n: int, r: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Haar-random rank-r projector P = U P0 U^H on an n-dimensional space.

    Built as V V^H from the first r columns of a Haar unitary, then
    re-symmetrized to kill round-off drift from the product.
    """
    if not 0 < r < n:
        raise ValueError(f"invalid projector rank {r} for dimension {n}")
    v = haar_isometry(n, r, rng)
    return hermitize(v @ v.conj().T)

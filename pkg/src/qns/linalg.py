"""Dense symmetric/rectangular matrix kernel.

Eigendecomposition with a descending-order convention, PSD matrix functions,
Loewner-order predicates, polar-type orthonormalization, and seeded random
matrix sampling.  Everything operates on plain float64 ndarrays; validation
helpers enforce the symmetry/orthonormality contracts at API boundaries.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "EigenPair",
    "check_symmetric",
    "sym_eigen",
    "psd_sqrt",
    "psd_project",
    "inv_sqrt_gram",
    "loewner_geq",
    "loewner_slack",
    "rng_stream",
    "sample_gaussian_mat",
    "sample_stiefel",
]

SYM_TOL = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    """Gram matrix is numerically singular; carries the offending eigenvalue."""

    def __init__(self, min_eig: float):
        self.min_eig = float(min_eig)
        super().__init__(
            f"Gram matrix is rank deficient: smallest eigenvalue {min_eig:.3e} <= 1e-12"
        )


class EigenPair(NamedTuple):
    """Spectral decomposition with eigenvalues sorted in descending order."""

    values: np.ndarray   # (n,), descending
    vectors: np.ndarray  # (n, n), columns are orthonormal eigenvectors


def check_symmetric(m: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    """Validate that ``m`` is square and symmetric; return its symmetric part.

    The asymmetry ``max|m - m.T|`` must not exceed ``tol * max|m|``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    scale = np.abs(m).max()
    asym = np.abs(m - m.T).max()
    if asym > tol * max(scale, 1e-300):
        raise ValueError(f"matrix is not symmetric: max|M - M.T| = {asym:.3e}")
    return 0.5 * (m + m.T)


def sym_eigen(m: np.ndarray) -> EigenPair:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Satisfies ``V diag(w) V.T ~= M`` and ``V.T V ~= I`` to ~1e-10 relative.
    """
    m = check_symmetric(m)
    w, v = np.linalg.eigh(m)
    return EigenPair(values=w[::-1].copy(), vectors=v[:, ::-1].copy())


def psd_sqrt(m: np.ndarray, clip_tol: float = 0.0) -> np.ndarray:
    """Symmetric PSD square root with eigenvalue clipping.

    Eigenvalues below ``clip_tol`` are treated as exactly zero, so slightly
    indefinite inputs (rounding noise) are absorbed instead of raising.
    """
    w, v = sym_eigen(m)
    w = np.where(w < clip_tol, 0.0, w)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def psd_project(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clip negative eigenvalues at zero."""
    w, v = sym_eigen(m)
    w = np.maximum(w, 0.0)
    proj = (v * w) @ v.T
    return 0.5 * (proj + proj.T)


def inv_sqrt_gram(w: np.ndarray) -> np.ndarray:
    """Map ``W -> W (W.T W)^{-1/2}``; the result has orthonormal columns.

    Raises :class:`RankDeficientError` when ``W.T W`` has an eigenvalue at or
    below 1e-12.
    """
    w = np.asarray(w, dtype=float)
    gram = w.T @ w
    vals, vecs = np.linalg.eigh(gram)
    if vals[0] <= 1e-12:
        raise RankDeficientError(vals[0])
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return w @ inv_root


def loewner_slack(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest eigenvalue of ``a - b`` (negative when the order fails)."""
    a = check_symmetric(a)
    b = check_symmetric(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.eigvalsh(a - b)[0])


def loewner_geq(a: np.ndarray, b: np.ndarray, slack: float | None = None) -> bool:
    """True iff ``a >= b`` in the Loewner (PSD) order, up to ``slack``.

    ``slack=None`` uses ``1e-10 * (||a||_2 + ||b||_2)`` so near-singular
    comparisons degrade gracefully instead of flapping on rounding noise.
    """
    if slack is None:
        na = float(np.linalg.norm(a, 2))
        nb = float(np.linalg.norm(b, 2))
        slack = 1e-10 * (na + nb)
    return loewner_slack(a, b) >= -slack


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for substream ``(seed, stream)``.

    Uses Philox keyed by ``SeedSequence(seed).spawn``-style keys, so distinct
    streams of the same seed are statistically independent and every stream
    is reproducible in isolation (no sequential draw ordering between them).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_gaussian_mat(
    rows: int,
    cols: int,
    variance: float = 1.0,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """IID N(0, variance) matrix, deterministic given ``seed``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed)
    return np.sqrt(variance) * rng.standard_normal((rows, cols))


def sample_stiefel(
    rows: int,
    cols: int,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """Haar-uniform matrix with orthonormal columns (rows >= cols).

    Sampled as the polar factor of a Gaussian matrix, i.e.
    ``Z (Z.T Z)^{-1/2}``, which is the same orthonormalization convention the
    training loop uses for its retraction.
    """
    if rows < cols:
        raise ValueError(f"Stiefel sampling needs rows >= cols, got {rows} < {cols}")
    z = sample_gaussian_mat(rows, cols, 1.0, seed)
    return inv_sqrt_gram(z)

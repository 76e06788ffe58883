"""Dense spectral primitives: thin SVD, Schatten-p norms, their gradients,
and the spectral norm.

All functions are pure and operate on plain float64 ndarrays.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DecompositionError

# Singular values below RANK_REL_TOL * sigma_1 are treated as exactly zero in
# norm and gradient computations so fractional powers never act on noise-level
# values.
RANK_REL_TOL = 1e-12


class SvdFactors(NamedTuple):
    """Thin SVD of a matrix: ``left @ diag(singulars) @ right.T``."""

    left: np.ndarray        # (m, k), orthonormal columns
    singulars: np.ndarray   # (k,), nonnegative, descending
    right: np.ndarray       # (n, k), orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.T


def _as_finite_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def thin_svd(a) -> SvdFactors:
    """Thin SVD with k = min(m, n).

    Raises DecompositionError if both LAPACK drivers fail to converge.
    """
    a = _as_finite_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier.
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:
            raise DecompositionError(f"SVD failed on a {a.shape} matrix") from exc
    return SvdFactors(u, s, vt.T)


def _singular_values(a) -> np.ndarray:
    a = _as_finite_matrix(a)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError:
        try:
            return scipy.linalg.svd(a, compute_uv=False, lapack_driver="gesvd")
        except Exception as exc:
            raise DecompositionError(f"SVD failed on a {a.shape} matrix") from exc


def _clip_small(s: np.ndarray) -> np.ndarray:
    """Zero out singular values below RANK_REL_TOL times the largest."""
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros_like(s)
    return np.where(s > RANK_REL_TOL * s[0], s, 0.0)


def schatten_norm_pow(a, p: float) -> float:
    """Sum of the p-th powers of the singular values of ``a``.

    This is the Schatten-p norm raised to the p-th power. ``p`` must be
    positive; zero singular values contribute zero for every p.
    """
    p = float(p)
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    s = _clip_small(_singular_values(a))
    nz = s[s > 0.0]
    if nz.size == 0:
        return 0.0
    return float(np.sum(nz ** p))


def schatten_grad(a, p: float) -> np.ndarray:
    """Gradient of ``schatten_norm_pow(., p)`` for p > 1.

    Equals p * U diag(sigma^(p-1)) V^T for the thin SVD U diag(sigma) V^T.
    For p <= 1 the map is not differentiable everywhere and a ValueError is
    raised.
    """
    p = float(p)
    if p <= 1.0:
        raise ValueError(f"schatten_grad requires p > 1, got {p}")
    f = thin_svd(a)
    s = _clip_small(f.singulars)
    powered = np.where(s > 0.0, s ** (p - 1.0), 0.0)
    return p * (f.left * powered) @ f.right.T


def spectral_norm(a) -> float:
    """Largest singular value of ``a``.

    Computed as the square root of the top eigenvalue of the smaller Gram
    matrix, so a tall m x d factor never pays for an SVD of itself, only for
    a d x d symmetric eigenproblem. Falls back to a direct SVD if the
    eigensolver fails.
    """
    a = _as_finite_matrix(a)
    if min(a.shape) == 0:
        return 0.0
    g = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    try:
        top = float(np.linalg.eigvalsh(g)[-1])
        return float(np.sqrt(max(top, 0.0)))
    except np.linalg.LinAlgError:
        s = _singular_values(a)
        return float(s[0]) if s.size else 0.0

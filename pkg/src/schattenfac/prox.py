"""Scalar and matrix proximal mappings of the penalty (lam / p) * x^p.

The scalar map solves

    argmin_{x >= 0}  0.5 * (x - y)^2 + (lam / p) * x^p

for any p > 0. The matrix map applies the scalar map to the singular values
and recomposes, which is the exact proximal operator of
(lam / p) * ||X||_{S_p}^p.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .spectra import _as_finite_matrix, thin_svd

# Fixed-point iteration for the nonconvex branch (0 < p < 1).
_FP_TOL = 1e-12
_FP_CAP = 200


def _penalty(x: float, lam: float, p: float) -> float:
    return (lam / p) * x ** p if x > 0.0 else 0.0


def _prox_objective(x: float, y: float, lam: float, p: float) -> float:
    return 0.5 * (x - y) ** 2 + _penalty(x, lam, p)


def _prox_nonconvex(y: float, lam: float, p: float) -> float:
    # Stationary points solve x + lam * x^(p-1) = y. The left side has its
    # minimum at x_bend; below y_exist there is no interior stationary point
    # and 0 is the global minimizer.
    x_bend = (lam * (1.0 - p)) ** (1.0 / (2.0 - p))
    y_exist = x_bend + lam * x_bend ** (p - 1.0)
    if y <= y_exist:
        return 0.0
    # The larger stationary point is the only interior candidate. The map
    # x -> y - lam * x^(p-1) decreases monotonically onto it from x0 = y.
    x = y
    for _ in range(_FP_CAP):
        x_new = y - lam * x ** (p - 1.0)
        if x_new < x_bend:  # rounding guard, only possible near the bend
            x_new = x_bend
        if abs(x_new - x) <= _FP_TOL * max(1.0, y):
            x = x_new
            break
        x = x_new
    # Ties go to zero: prefers low rank and keeps the map deterministic.
    if _prox_objective(x, y, lam, p) < 0.5 * y * y:
        return x
    return 0.0


def _prox_convex_smooth(y: float, lam: float, p: float) -> float:
    # Unique root of x - y + lam * x^(p-1) = 0 in [0, y]; the derivative is
    # strictly increasing for p > 1 so a bracketing solve is safe.
    def f(x):
        return x - y + lam * x ** (p - 1.0)

    return float(brentq(f, 0.0, y, xtol=1e-14, rtol=4.0 * np.finfo(float).eps, maxiter=200))


def scalar_prox(y: float, lam: float, p: float) -> float:
    """Global minimizer of 0.5*(x - y)^2 + (lam/p)*x^p over x >= 0.

    Closed forms are used for p = 1 (soft thresholding) and p = 2; p > 1 is
    solved by a bracketed root find and 0 < p < 1 by thresholding plus a
    fixed-point iteration on the larger stationary point, with ties resolved
    to zero.
    """
    y = float(y)
    lam = float(lam)
    p = float(p)
    if y < 0.0:
        raise ValueError(f"y must be nonnegative, got {y}")
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    if lam == 0.0 or y == 0.0:
        return y
    if p == 1.0:
        return max(y - lam, 0.0)
    if p == 2.0:
        return y / (1.0 + lam)
    if p > 1.0:
        return _prox_convex_smooth(y, lam, p)
    return _prox_nonconvex(y, lam, p)


def matrix_prox(y, lam: float, p: float) -> np.ndarray:
    """Proximal mapping of (lam/p) * ||.||_{S_p}^p at the matrix ``y``.

    Shrinks each singular value through ``scalar_prox`` and recomposes with
    the singular vectors of ``y``.
    """
    y = _as_finite_matrix(y)
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if float(p) <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    if lam == 0.0:
        return y.copy()
    f = thin_svd(y)
    shrunk = np.array([scalar_prox(s, lam, p) for s in f.singulars])
    return (f.left * shrunk) @ f.right.T

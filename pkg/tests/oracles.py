"""Independent reference computations used to freeze expected test values.

These deliberately avoid the code paths they check: the scalar prox oracle is
a dense grid search with golden-section refinement, gradients come from
central finite differences, and norms are recomputed from eigenvalues of the
Gram matrix.
"""

import numpy as np

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def prox_objective(x, y, lam, p):
    pen = (lam / p) * x ** p if x > 0 else 0.0
    return 0.5 * (x - y) ** 2 + pen


def _golden_section(f, lo, hi, iters=90):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def scalar_prox_oracle(y, lam, p, grid=2001):
    """Grid search over [0, y] with local golden-section refinement.

    Returns (argmin, objective value). Ties between zero and an interior
    point resolve to whichever the grid scores lower, then zero on exact
    objective ties.
    """
    if y == 0.0 or lam == 0.0:
        return y, prox_objective(y, y, lam, p) if lam == 0 else 0.5 * y * y
    xs = np.linspace(0.0, y, grid)
    vals = 0.5 * (xs - y) ** 2 + (lam / p) * xs ** p
    best = int(np.argmin(vals))
    lo = xs[max(best - 1, 0)]
    hi = xs[min(best + 1, grid - 1)]
    x_ref, f_ref = _golden_section(lambda x: prox_objective(x, y, lam, p), lo, hi)
    # the zero endpoint is always a candidate for p < 1
    if 0.5 * y * y <= f_ref:
        return 0.0, 0.5 * y * y
    return x_ref, f_ref


def fd_gradient(f, x, step=1e-6):
    """Central finite differences of a scalar function of a matrix."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        grad[idx] = (f(xp) - f(xm)) / (2.0 * step)
        it.iternext()
    return grad


def schatten_pow_from_gram(a, p):
    """Sum sigma_i^p recomputed as eigenvalues of A^T A raised to p/2."""
    a = np.asarray(a, dtype=float)
    g = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    eig = np.linalg.eigvalsh(g)
    eig = np.clip(eig, 0.0, None)
    top = eig.max() if eig.size else 0.0
    kept = eig[eig > (1e-24 * top if top > 0 else 0.0)]
    return float(np.sum(kept ** (p / 2.0)))


def random_rank(rng, m, n, rank, scale=1.0):
    return scale * rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))

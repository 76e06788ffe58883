"""Hot inner loops over observed entries.

Every per-entry operation of the masked loss funnels through two kernels:
``dot_rows_cols`` (predict observed entries of a two-factor product) and
``scatter_rows`` (accumulate a sparse residual against a factor). Both exist
as numba ``@njit`` kernels and as pure-numpy fallbacks. The numpy path is
selected when the ``SCHATTENFAC_NO_NUMBA`` environment variable is set (or
when numba is not importable); otherwise the jitted path is used.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["HAVE_NUMBA", "USE_NUMBA", "dot_rows_cols", "scatter_rows"]


def _dot_rows_cols_numpy(left, right_t, rows, cols):
    """entries[k] = <left[rows[k], :], right_t[cols[k], :]>."""
    return np.einsum("kj,kj->k", left[rows], right_t[cols])


def _scatter_rows_numpy(weights, rows, cols, right_t, n_out):
    """out[rows[k], :] += weights[k] * right_t[cols[k], :], out has n_out rows."""
    out = np.zeros((n_out, right_t.shape[1]))
    np.add.at(out, rows, weights[:, None] * right_t[cols])
    return out


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


# Both kernels are single-threaded on purpose: scatter accumulation would
# race under prange, and serial jitted loops keep the package safe to use
# from forked worker pools (numba's parallel runtime is not fork-safe).
if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _dot_rows_cols_numba(left, right_t, rows, cols):  # pragma: no cover - jitted
        n = rows.shape[0]
        q = left.shape[1]
        out = np.empty(n)
        for k in range(n):
            r = rows[k]
            c = cols[k]
            acc = 0.0
            for j in range(q):
                acc += left[r, j] * right_t[c, j]
            out[k] = acc
        return out

    @numba.njit(cache=True)
    def _scatter_rows_numba(weights, rows, cols, right_t, n_out):  # pragma: no cover - jitted
        q = right_t.shape[1]
        out = np.zeros((n_out, q))
        for k in range(rows.shape[0]):
            w = weights[k]
            r = rows[k]
            c = cols[k]
            for j in range(q):
                out[r, j] += w * right_t[c, j]
        return out


def _numba_disabled_by_env():
    return os.environ.get("SCHATTENFAC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _numba_disabled_by_env()

if USE_NUMBA:
    dot_rows_cols = _dot_rows_cols_numba
    scatter_rows = _scatter_rows_numba
else:
    dot_rows_cols = _dot_rows_cols_numpy
    scatter_rows = _scatter_rows_numpy

"""Masked completion objective, per-block gradients, Lipschitz constants,
and recovery metrics.

The observed data is held sparsely as index/value triplets; no operation in
this module materializes the full m x n product. With the prefix product
A_minus = X_1 ... X_{i-1} and suffix product A_plus = X_{i+1} ... X_I, the
per-block smooth loss is

    f_i(B) = 0.5 * || mask ( M - A_minus B A_plus ) ||_F^2

whose gradient at B is -A_minus^T S A_plus^T for the sparse residual S, and
whose gradient is Lipschitz with constant ||A_minus||_2^2 ||A_plus||_2^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .spectra import spectral_norm
from .surrogate import FactorChain, PartitionSpec, surrogate_value


@dataclass(frozen=True)
class MaskedMatrix:
    """Observed entries of an m x n matrix, stored as index/value triplets."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_idx", np.ascontiguousarray(self.row_idx, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        n = self.row_idx.shape[0]
        if self.col_idx.shape[0] != n or self.values.shape[0] != n:
            raise ValueError("row_idx, col_idx, and values must have equal length")
        if n < 1:
            raise ValueError("at least one observation is required")
        if not np.isfinite(self.values).all():
            raise ValueError("observed values contain non-finite entries")
        if self.row_idx.min() < 0 or self.row_idx.max() >= self.rows:
            raise ValueError("row index out of range")
        if self.col_idx.min() < 0 or self.col_idx.max() >= self.cols:
            raise ValueError("column index out of range")
        flat = self.row_idx * self.cols + self.col_idx
        if np.unique(flat).size != n:
            raise ValueError("duplicate observed positions")

    @property
    def n_obs(self) -> int:
        return int(self.values.shape[0])

    def dense(self) -> np.ndarray:
        """Dense matrix with zeros at unobserved positions (for small oracles)."""
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.values
        return out

    def mask_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=bool)
        out[self.row_idx, self.col_idx] = True
        return out


@dataclass
class PrefixSuffixCache:
    """Prefix products X_1..X_{i-1} and suffix products X_{i+1}..X_I.

    ``None`` stands for the empty product (identity). Prefixes are (m, d),
    suffixes (d, n).
    """

    prefixes: list
    suffixes: list


def build_cache(chain: FactorChain) -> PrefixSuffixCache:
    factors = chain.factors
    count = len(factors)
    prefixes: list = [None] * count
    for i in range(1, count):
        prev = prefixes[i - 1]
        prefixes[i] = factors[i - 1] if prev is None else prev @ factors[i - 1]
    suffixes: list = [None] * count
    for i in range(count - 2, -1, -1):
        nxt = suffixes[i + 1]
        suffixes[i] = factors[i + 1] if nxt is None else factors[i + 1] @ nxt
    return PrefixSuffixCache(prefixes=prefixes, suffixes=suffixes)


def _pair_entries(left, right, data: MaskedMatrix, block) -> np.ndarray:
    """Observed entries of left @ block @ right, with None meaning identity."""
    if left is None and right is None:
        return block[data.row_idx, data.col_idx]
    if left is None:
        u, v = block, right
    elif right is None:
        u, v = left, block
    else:
        u, v = left @ block, right
    vt = np.ascontiguousarray(v.T)
    return _kernels.dot_rows_cols(np.ascontiguousarray(u), vt, data.row_idx, data.col_idx)


def chain_entries(chain: FactorChain, row_idx, col_idx) -> np.ndarray:
    """Observed entries of the chain product, computed row-by-column."""
    factors = chain.factors
    if len(factors) == 1:
        return factors[0][row_idx, col_idx]
    left = factors[0]
    for f in factors[1:-1]:
        left = left @ f
    right_t = np.ascontiguousarray(factors[-1].T)
    row_idx = np.ascontiguousarray(row_idx, dtype=np.int64)
    col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
    return _kernels.dot_rows_cols(np.ascontiguousarray(left), right_t, row_idx, col_idx)


def masked_block_residual(left, right, data: MaskedMatrix, block) -> np.ndarray:
    """values - observed entries of left @ block @ right."""
    return data.values - _pair_entries(left, right, data, block)


def masked_block_gradient(left, right, data: MaskedMatrix, block) -> np.ndarray:
    """Gradient of the masked half-squared loss w.r.t. the middle block.

    Returns -A_minus^T S A_plus^T with S the sparse residual; the sign makes
    this a true gradient of f_i (descent goes against it).
    """
    res = masked_block_residual(left, right, data, block)
    if left is None and right is None:
        grad = np.zeros((data.rows, data.cols))
        grad[data.row_idx, data.col_idx] = -res
        return grad
    if left is None:
        right_t = np.ascontiguousarray(right.T)
        return -_kernels.scatter_rows(res, data.row_idx, data.col_idx, right_t, data.rows)
    if right is None:
        left_c = np.ascontiguousarray(left)
        acc = _kernels.scatter_rows(res, data.col_idx, data.row_idx, left_c, data.cols)
        return -acc.T
    right_t = np.ascontiguousarray(right.T)
    acc = _kernels.scatter_rows(res, data.row_idx, data.col_idx, right_t, data.rows)
    return -(left.T @ acc)


def masked_block_loss(left, right, data: MaskedMatrix, block) -> float:
    """f_i evaluated at ``block``: half the squared masked residual."""
    res = masked_block_residual(left, right, data, block)
    return 0.5 * float(res @ res)


def pair_lipschitz(left, right, epsilon: float) -> float:
    """max(||A_minus||_2^2 * ||A_plus||_2^2, epsilon)."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    ln = 1.0 if left is None else spectral_norm(left)
    rn = 1.0 if right is None else spectral_norm(right)
    return max(ln * ln * rn * rn, float(epsilon))


def _check_block_index(chain: FactorChain, i: int) -> int:
    i = int(i)
    if not 0 <= i < len(chain):
        raise ValueError(f"block index {i} out of range for a chain of {len(chain)} factors")
    return i


def block_gradient(chain: FactorChain, cache: PrefixSuffixCache, data: MaskedMatrix,
                   i: int, at) -> np.ndarray:
    """Gradient of block i's smooth loss evaluated at ``at``."""
    i = _check_block_index(chain, i)
    at = np.asarray(at, dtype=float)
    if at.shape != chain.factors[i].shape:
        raise ValueError(f"block {i} has shape {chain.factors[i].shape}, got {at.shape}")
    return masked_block_gradient(cache.prefixes[i], cache.suffixes[i], data, at)


def block_loss(chain: FactorChain, cache: PrefixSuffixCache, data: MaskedMatrix,
               i: int, at) -> float:
    """Smooth loss of block i evaluated at ``at``."""
    i = _check_block_index(chain, i)
    return masked_block_loss(cache.prefixes[i], cache.suffixes[i], data, np.asarray(at, dtype=float))


def block_lipschitz(cache: PrefixSuffixCache, i: int, epsilon: float) -> float:
    """Lipschitz constant of block i's gradient, floored at epsilon."""
    return pair_lipschitz(cache.prefixes[i], cache.suffixes[i], epsilon)


def objective(chain: FactorChain, data: MaskedMatrix, lam: float, spec: PartitionSpec) -> float:
    """Masked half-squared loss plus the factored Schatten penalty."""
    if chain.shape != (data.rows, data.cols):
        raise ValueError(f"chain shape {chain.shape} does not match data "
                         f"({data.rows}, {data.cols})")
    res = data.values - chain_entries(chain, data.row_idx, data.col_idx)
    return 0.5 * float(res @ res) + surrogate_value(chain, spec, lam)


def rsre(x, truth) -> float:
    """Relative recovery error ||x - truth||_F / ||truth||_F."""
    x = np.asarray(x, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if x.shape != truth.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {truth.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValueError("truth matrix is zero; relative error is undefined")
    return float(np.linalg.norm(x - truth)) / denom


def rmse(chain: FactorChain, test: MaskedMatrix) -> float:
    """Root mean squared error of the chain's predictions on a test set."""
    if test.n_obs < 1:
        raise ValueError("test set is empty")
    preds = chain_entries(chain, test.row_idx, test.col_idx)
    diff = preds - test.values
    return float(np.sqrt(diff @ diff / test.n_obs))

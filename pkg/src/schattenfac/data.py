"""Synthetic low-rank instances and triplet-format rating files.

All randomness flows through numpy's default generator (PCG64 seeded via
SeedSequence), so instances and splits are bit-reproducible from their seeds
across platforms.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .completion import MaskedMatrix
from .errors import DataFormatError


@dataclass(frozen=True)
class SyntheticInstance:
    """A noisy low-rank matrix with a uniform observation mask."""

    observed: MaskedMatrix
    truth: np.ndarray
    m: int
    n: int
    rank: int
    sigma: float
    obs_fraction: float
    seed: int


def generate_synthetic(m: int, n: int, rank: int, sigma: float,
                       obs_fraction: float, seed: int) -> SyntheticInstance:
    """Rank-``rank`` product of i.i.d. standard Gaussian factors, plus
    N(0, sigma^2) noise on every entry, observed on a uniform random subset.
    """
    m, n, rank = int(m), int(n), int(rank)
    if m < 1 or n < 1:
        raise ValueError(f"dimensions must be positive, got {m}x{n}")
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must lie in [1, {min(m, n)}], got {rank}")
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    obs_fraction = float(obs_fraction)
    if not 0 < obs_fraction <= 1:
        raise ValueError(f"obs_fraction must lie in (0, 1], got {obs_fraction}")
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal((m, rank))
    v0 = rng.standard_normal((n, rank))
    truth = u0 @ v0.T
    noisy = truth + sigma * rng.standard_normal((m, n))
    n_obs = int(round(obs_fraction * m * n))
    n_obs = max(n_obs, 1)
    flat = np.sort(rng.choice(m * n, size=n_obs, replace=False))
    observed = MaskedMatrix(
        rows=m,
        cols=n,
        row_idx=flat // n,
        col_idx=flat % n,
        values=noisy.flat[flat],
    )
    return SyntheticInstance(observed=observed, truth=truth, m=m, n=n, rank=rank,
                             sigma=sigma, obs_fraction=obs_fraction, seed=int(seed))


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path, "r")


def load_triplets_with_ids(path):
    """Parse a "row col value" triplet file into a MaskedMatrix.

    Fields may be separated by whitespace or commas; blank lines and lines
    starting with ``#`` are skipped; ``.gz`` files are decompressed on the
    fly. Row and column ids are compacted to dense 0-based ranges; the
    original ids are returned alongside, sorted to match the compact ids.
    """
    raw_rows, raw_cols, vals = [], [], []
    seen: dict[tuple[int, int], int] = {}
    with _open_text(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            if len(parts) != 3:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected 'row col value', got {text!r}")
            try:
                r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if (r, c) in seen:
                raise DataFormatError(
                    f"{path}: line {lineno}: duplicate position ({r}, {c}), "
                    f"first seen on line {seen[(r, c)]}")
            seen[(r, c)] = lineno
            raw_rows.append(r)
            raw_cols.append(c)
            vals.append(v)
    if not vals:
        raise DataFormatError(f"{path}: no observations found")
    row_ids, row_idx = np.unique(np.array(raw_rows, dtype=np.int64), return_inverse=True)
    col_ids, col_idx = np.unique(np.array(raw_cols, dtype=np.int64), return_inverse=True)
    data = MaskedMatrix(rows=len(row_ids), cols=len(col_ids),
                        row_idx=row_idx, col_idx=col_idx,
                        values=np.array(vals))
    return data, row_ids, col_ids


def load_triplets(path) -> MaskedMatrix:
    """Parse a triplet file; see ``load_triplets_with_ids``."""
    return load_triplets_with_ids(path)[0]


def split_train_test(data: MaskedMatrix, train_fraction: float, seed: int):
    """Disjoint, exhaustive split of the observations, reproducible from seed."""
    train_fraction = float(train_fraction)
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = data.n_obs
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(
            f"split of {n} observations at fraction {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    train_sel = np.sort(perm[:n_train])
    test_sel = np.sort(perm[n_train:])

    def subset(sel):
        return MaskedMatrix(rows=data.rows, cols=data.cols,
                            row_idx=data.row_idx[sel], col_idx=data.col_idx[sel],
                            values=data.values[sel])

    return subset(train_sel), subset(test_sel)

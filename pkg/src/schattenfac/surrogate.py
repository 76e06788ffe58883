"""Exponent partitions, optimal factorizations, and surrogate values.

The central identity: for 1/p = sum_i 1/p_i and X = X_1 ... X_I,

    (1/p) ||X||_{S_p}^p  <=  sum_i (1/p_i) ||X_i||_{S_{p_i}}^{p_i},

with equality attained by the factorization built from the SVD of X.
Exponents are carried as exact rationals so partition identities hold without
floating-point drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InfeasibleRankError
from .spectra import _as_finite_matrix, schatten_norm_pow, thin_svd

# Rank of the target matrix is judged against sigma_1 at this relative level.
RANK_DETECT_REL_TOL = 1e-10

PARTITION_MODES = ("all_convex", "all_smooth")


def as_fraction(value) -> Fraction:
    """Coerce to an exact Fraction.

    Strings ("1/4"), ints, and Fractions convert exactly. Floats are snapped
    to the nearest small-denominator rational so that 1/3 round-trips; pass a
    string or Fraction when the exponent is not a simple ratio.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (str, int)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10 ** 6)
    raise TypeError(f"cannot interpret {value!r} as an exponent")


@dataclass(frozen=True)
class PartitionSpec:
    """Target exponent p with factor exponents p_1..p_I, 1/p = sum 1/p_i."""

    p: Fraction
    factor_exponents: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))
        object.__setattr__(
            self, "factor_exponents", tuple(as_fraction(e) for e in self.factor_exponents)
        )
        if self.p <= 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if len(self.factor_exponents) < 1:
            raise ValueError("at least one factor exponent is required")
        if any(e <= 0 for e in self.factor_exponents):
            raise ValueError(f"factor exponents must be positive, got {self.factor_exponents}")
        gap = abs(float(1 / self.p) - float(sum(1 / e for e in self.factor_exponents)))
        if gap > 1e-12:
            raise ValueError(
                f"1/p must equal sum(1/p_i); off by {gap:.3e} for p={self.p}, "
                f"p_i={self.factor_exponents}"
            )

    @property
    def size(self) -> int:
        return len(self.factor_exponents)

    def exponents_float(self) -> tuple[float, ...]:
        return tuple(float(e) for e in self.factor_exponents)


@dataclass
class FactorChain:
    """Ordered factor matrices whose product is the m x n estimate.

    For I >= 2 the shapes are (m, d), (d, d) ... (d, d), (d, n). A single
    factor is permitted as the degenerate unfactored case.
    """

    factors: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.factors) < 1:
            raise ValueError("a factor chain needs at least one matrix")
        self.factors = [_as_finite_matrix(f, f"factor {i}") for i, f in enumerate(self.factors)]
        for i in range(len(self.factors) - 1):
            if self.factors[i].shape[1] != self.factors[i + 1].shape[0]:
                raise ValueError(
                    f"factors {i} and {i + 1} are not conformable: "
                    f"{self.factors[i].shape} x {self.factors[i + 1].shape}"
                )

    def __len__(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.factors[0].shape[0], self.factors[-1].shape[1])

    @property
    def inner_dim(self) -> int | None:
        return self.factors[0].shape[1] if len(self.factors) > 1 else None

    def product(self) -> np.ndarray:
        out = self.factors[0]
        for f in self.factors[1:]:
            out = out @ f
        return np.array(out, copy=True) if len(self.factors) == 1 else out

    def copy(self) -> "FactorChain":
        return FactorChain([f.copy() for f in self.factors])


def make_partition(p, mode: str = "all_convex") -> PartitionSpec:
    """Build a partition of 1/p with all factor exponents >= 1 or all > 1.

    ``all_convex`` uses ones plus at most one closing exponent; ``all_smooth``
    uses I = floor(1/p) + 1 equal exponents I*p, each strictly above 1. For
    p > 1 the degenerate single-factor partition [p] is returned.
    """
    p = as_fraction(p)
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if mode not in PARTITION_MODES:
        raise ValueError(f"mode must be one of {PARTITION_MODES}, got {mode!r}")
    if p > 1:
        return PartitionSpec(p, (p,))
    inv = 1 / p
    whole = math.floor(inv)
    if mode == "all_convex":
        if inv.denominator == 1:
            exps = (Fraction(1),) * whole
        else:
            closing = 1 / (inv - whole)
            exps = (Fraction(1),) * whole + (closing,)
        return PartitionSpec(p, exps)
    count = whole + 1
    return PartitionSpec(p, (count * p,) * count)


def optimal_factors(x, spec: PartitionSpec, d: int) -> FactorChain:
    """Factorization of ``x`` attaining the surrogate lower bound.

    From the thin SVD x = U diag(s) V^T, the factors are U s^(p/p_1),
    s^(p/p_i) in the middle, and s^(p/p_I) V^T, padded with zero blocks when
    d exceeds min(m, n). Requires d at least the numerical rank of ``x``.
    """
    x = _as_finite_matrix(x)
    d = int(d)
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    f = thin_svd(x)
    s = f.singulars
    rank = int(np.sum(s > RANK_DETECT_REL_TOL * s[0])) if s.size and s[0] > 0 else 0
    if d < rank:
        raise InfeasibleRankError(f"d={d} is below the numerical rank {rank} of the target")
    m, n = x.shape
    k = min(d, min(m, n))
    sd = np.zeros(d)
    # Values below the rank threshold are numerically zero; keeping them would
    # let fractional powers blow rounding noise up into the factors.
    sd[:k] = np.where(s[:k] > RANK_DETECT_REL_TOL * (s[0] if s.size else 0.0), s[:k], 0.0)
    left = np.zeros((m, d))
    left[:, :k] = f.left[:, :k]
    right = np.zeros((n, d))
    right[:, :k] = f.right[:, :k]
    count = spec.size
    if count == 1:
        return FactorChain([(left * sd) @ right.T])
    powered = [np.where(sd > 0.0, sd ** float(spec.p / e), 0.0) for e in spec.factor_exponents]
    factors = [left * powered[0]]
    factors += [np.diag(powered[i]) for i in range(1, count - 1)]
    factors.append((right * powered[-1]).T)
    return FactorChain(factors)


def surrogate_value(chain: FactorChain, spec: PartitionSpec, lam: float) -> float:
    """sum_i (lam / p_i) * ||X_i||_{S_{p_i}}^{p_i} over the chain."""
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if len(chain) != spec.size:
        raise ValueError(f"chain has {len(chain)} factors but the partition expects {spec.size}")
    if lam == 0.0:
        return 0.0
    exps = spec.exponents_float()
    return float(sum((lam / e) * schatten_norm_pow(f, e) for f, e in zip(chain.factors, exps)))


@dataclass(frozen=True)
class SurrogateBoundReport:
    """Both sides of the surrogate inequality and their gap (rhs - lhs)."""

    lhs: float
    rhs: float
    gap: float


def check_surrogate_bound(x, chain: FactorChain, spec: PartitionSpec) -> SurrogateBoundReport:
    """Evaluate (1/p)||X||^p against the factored surrogate for a feasible chain.

    The chain must reproduce ``x``; the returned gap is nonnegative up to
    numerical noise for every feasible factorization and vanishes at the
    optimal one.
    """
    x = _as_finite_matrix(x)
    prod = chain.product()
    if prod.shape != x.shape:
        raise ValueError(f"chain product shape {prod.shape} does not match target {x.shape}")
    mismatch = float(np.linalg.norm(prod - x))
    if mismatch > 1e-9 * max(1.0, float(np.linalg.norm(x))):
        raise ValueError(f"chain does not reproduce the target: ||prod - x||_F = {mismatch:.3e}")
    lhs = schatten_norm_pow(x, float(spec.p)) / float(spec.p)
    rhs = surrogate_value(chain, spec, 1.0)
    return SurrogateBoundReport(lhs=lhs, rhs=rhs, gap=rhs - lhs)

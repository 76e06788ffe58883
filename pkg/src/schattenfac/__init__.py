"""Factored Schatten-p surrogates and accelerated PALM matrix completion.

The package replaces the Schatten-p penalty (1/p)||X||_{S_p}^p by the sum
sum_i (1/p_i)||X_i||_{S_{p_i}}^{p_i} over factor matrices with X = prod X_i
and 1/p = sum 1/p_i, and minimizes the resulting masked-completion objective
with an extrapolated proximal alternating scheme.
"""

from .completion import (
    MaskedMatrix,
    PrefixSuffixCache,
    block_gradient,
    block_lipschitz,
    block_loss,
    build_cache,
    chain_entries,
    objective,
    rmse,
    rsre,
)
from .data import SyntheticInstance, generate_synthetic, load_triplets, split_train_test
from .errors import (
    DataFormatError,
    DecompositionError,
    DivergenceError,
    InfeasibleRankError,
    InternalConsistencyError,
)
from .palm import (
    IterateState,
    IterationRecord,
    SolveTrace,
    SolverConfig,
    block_step,
    continuation_update,
    cycle,
    extrapolation_weight,
    momentum_next,
    prox_residuals,
    solve,
)
from .prox import matrix_prox, scalar_prox
from .spectra import SvdFactors, schatten_grad, schatten_norm_pow, spectral_norm, thin_svd
from .surrogate import (
    FactorChain,
    PartitionSpec,
    SurrogateBoundReport,
    as_fraction,
    check_surrogate_bound,
    make_partition,
    optimal_factors,
    surrogate_value,
)

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "DecompositionError",
    "DivergenceError",
    "FactorChain",
    "InfeasibleRankError",
    "InternalConsistencyError",
    "IterateState",
    "IterationRecord",
    "MaskedMatrix",
    "PartitionSpec",
    "PrefixSuffixCache",
    "SolveTrace",
    "SolverConfig",
    "SurrogateBoundReport",
    "SvdFactors",
    "SyntheticInstance",
    "as_fraction",
    "block_gradient",
    "block_lipschitz",
    "block_loss",
    "block_step",
    "build_cache",
    "chain_entries",
    "check_surrogate_bound",
    "continuation_update",
    "cycle",
    "extrapolation_weight",
    "generate_synthetic",
    "load_triplets",
    "make_partition",
    "matrix_prox",
    "momentum_next",
    "objective",
    "optimal_factors",
    "prox_residuals",
    "rmse",
    "rsre",
    "scalar_prox",
    "schatten_grad",
    "schatten_norm_pow",
    "solve",
    "spectral_norm",
    "split_train_test",
    "surrogate_value",
    "thin_svd",
]

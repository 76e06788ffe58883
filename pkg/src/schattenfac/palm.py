"""Accelerated proximal alternating linearized minimization for the masked
completion objective.

Each cycle sweeps the factor blocks in order. A block step extrapolates the
block with a momentum weight, linearizes the smooth loss there, and solves
the resulting proximal subproblem exactly: with step constant L the
minimizer of

    <g, B - B_hat> + (L/2) ||B - B_hat||_F^2 + (lam / p_i) ||B||^{p_i}

is the matrix prox of B_hat - g / L with penalty weight lam / L. If a cycle
fails to decrease the objective it is redone without extrapolation, and, if a
continuation-underestimated step constant was in use, once more with the full
constant, which guarantees descent.

Iteration stops when the largest normalized prox residual

    || B_i - prox(B_i - grad_i / L_i, lam / L_i) ||_F / max(1, ||B_i||_F)

over the blocks falls below the tolerance; this same quantity certifies an
approximate critical point of the full objective.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .completion import (
    MaskedMatrix,
    build_cache,
    masked_block_gradient,
    objective as full_objective,
    pair_lipschitz,
)
from .errors import DivergenceError, InternalConsistencyError
from .prox import matrix_prox
from .surrogate import FactorChain, PartitionSpec, surrogate_value

SHUFFLE_MODES = ("off", "one_per_cycle", "two_per_cycle")

# Relative slack accepted on the guaranteed-descent attempt before declaring
# an internal inconsistency.
_DESCENT_SLACK = 1e-9


@dataclass
class SolverConfig:
    """Solver knobs.

    ``rho0``/``rho_growth`` drive the step-size continuation: the per-block
    constant is scaled by rho, which grows from rho0 toward 1 each cycle.
    ``shuffle_inner`` limits how many interior blocks update per cycle when
    there are more than two factors.
    """

    lam: float = 1.0
    d: int = 10
    epsilon: float = 1e-6
    stop_tol: float = 1e-4
    max_iters: int = 500
    rho0: float = 0.3
    rho_growth: float = 1.05
    shuffle_inner: str = "off"
    use_extrapolation: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.stop_tol <= 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if not 0 < self.rho0 <= 1:
            raise ValueError(f"rho0 must lie in (0, 1], got {self.rho0}")
        if self.rho_growth < 1:
            raise ValueError(f"rho_growth must be at least 1, got {self.rho_growth}")
        if self.shuffle_inner not in SHUFFLE_MODES:
            raise ValueError(f"shuffle_inner must be one of {SHUFFLE_MODES}, "
                             f"got {self.shuffle_inner!r}")


@dataclass
class IterationRecord:
    """One accepted cycle: objective, stopping statistic, and step metadata.

    ``rho`` is the step-constant scale the accepted attempt actually used.
    ``weights`` and ``lipschitz`` are per-block; a NaN weight marks a block
    skipped by inner shuffling (its lipschitz entry carries the value from
    its most recent update).
    """

    iteration: int
    objective: float
    stopping_stat: float
    step_norm: float
    max_abs: float
    restarted: bool
    attempts: int
    rho: float
    t: float
    weights: np.ndarray
    lipschitz: np.ndarray
    elapsed_s: float = 0.0


@dataclass
class SolveTrace:
    """Per-cycle records plus run-level outcome flags.

    ``t_advances_on_restart`` documents that the momentum sequence keeps
    advancing even on cycles that were redone without extrapolation.
    """

    initial_objective: float
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    t_advances_on_restart: bool = True

    def objectives(self) -> np.ndarray:
        return np.array([self.initial_objective] + [r.objective for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records)


@dataclass
class IterateState:
    """Mutable solver state between cycles.

    ``chain`` holds the latest block values, ``prev`` the values one cycle
    back, and ``lip`` the step constant each block used at its last update.
    """

    chain: FactorChain
    prev: list
    lip: np.ndarray
    t_prev: float
    k: int
    rho: float
    objective: float
    shuffle_order: list
    shuffle_pos: int = 0


def momentum_next(t_prev: float) -> float:
    """Momentum recurrence t -> (1 + sqrt(1 + 4 t^2)) / 2, starting at 1."""
    t_prev = float(t_prev)
    if t_prev < 1.0:
        raise ValueError(f"momentum parameter must be at least 1, got {t_prev}")
    return (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0


def extrapolation_weight(t_prev: float, t_curr: float,
                         lip_prev2: float, lip_prev1: float) -> float:
    """min((t_prev - 1)/t_curr, 0.9999 * sqrt(L_prev2 / L_prev1))."""
    return min((t_prev - 1.0) / t_curr, 0.9999 * np.sqrt(lip_prev2 / lip_prev1))


def continuation_update(rho: float, growth: float) -> float:
    """Grow the step-constant scale toward its upper bound 1."""
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return min(1.0, rho * growth)


def init_state(data: MaskedMatrix, spec: PartitionSpec, config: SolverConfig) -> IterateState:
    """Random Gaussian factors scaled by 1/sqrt(d), momentum and rho at rest."""
    count = spec.size
    m, n, d = data.rows, data.cols, config.d
    rng = np.random.default_rng(config.seed)
    if count == 1:
        shapes = [(m, n)]
    else:
        shapes = [(m, d)] + [(d, d)] * (count - 2) + [(d, n)]
    factors = [rng.standard_normal(s) / np.sqrt(d) for s in shapes]
    chain = FactorChain(factors)
    order = [int(i) for i in rng.permutation(np.arange(1, count - 1))]
    return IterateState(
        chain=chain,
        prev=[f.copy() for f in chain.factors],
        lip=np.ones(count),
        t_prev=1.0,
        k=1,
        rho=config.rho0,
        objective=full_objective(chain, data, config.lam, spec),
        shuffle_order=order,
    )


def _select_blocks(state: IterateState, config: SolverConfig, count: int) -> list[int]:
    """Blocks updated this cycle: always the two side blocks, and either all
    interior blocks or a rotating subset of one or two of them."""
    inner = list(range(1, count - 1))
    if config.shuffle_inner == "off" or not inner:
        return list(range(count))
    take = 1 if config.shuffle_inner == "one_per_cycle" else 2
    if take >= len(inner):
        return list(range(count))
    sel = {state.shuffle_order[(state.shuffle_pos + j) % len(inner)] for j in range(take)}
    state.shuffle_pos = (state.shuffle_pos + take) % len(inner)
    return sorted({0, count - 1} | sel)


def block_step(state: IterateState, i: int, data: MaskedMatrix, spec: PartitionSpec,
               config: SolverConfig, cache=None) -> np.ndarray:
    """One extrapolated proximal update of block i against the current state.

    Builds the prefix/suffix cache from the state's chain unless one is
    supplied. Does not mutate the state; returns the new block value.
    """
    factors = state.chain.factors
    if cache is None:
        cache = build_cache(state.chain)
    left, right = cache.prefixes[i], cache.suffixes[i]
    lip = pair_lipschitz(left, right, config.epsilon)
    t_curr = momentum_next(state.t_prev)
    exps = spec.exponents_float()
    if config.use_extrapolation and exps[i] >= 1.0:
        w = extrapolation_weight(state.t_prev, t_curr, state.lip[i], lip)
    else:
        w = 0.0
    x_hat = factors[i] if w == 0.0 else factors[i] + w * (factors[i] - state.prev[i])
    step_l = state.rho * lip
    grad = masked_block_gradient(left, right, data, x_hat)
    return matrix_prox(x_hat - grad / step_l, config.lam / step_l, exps[i])


def _suffix_products(factors: list) -> list:
    count = len(factors)
    suffixes: list = [None] * count
    for i in range(count - 2, -1, -1):
        nxt = suffixes[i + 1]
        suffixes[i] = factors[i + 1] if nxt is None else factors[i + 1] @ nxt
    return suffixes


def _sweep(start: list, prev: list, data: MaskedMatrix, spec: PartitionSpec,
           config: SolverConfig, blocks: set, rho_eff: float, allow_extrap: bool,
           t_prev: float, t_curr: float, lip_hist: np.ndarray):
    """Run one cycle attempt from ``start`` and evaluate the new objective.

    Prefix products fold the freshly updated blocks (Gauss-Seidel); suffix
    products are frozen at the cycle's starting values.
    """
    count = len(start)
    exps = spec.exponents_float()
    chain = [f.copy() for f in start]
    suffixes = _suffix_products(start)
    lam = config.lam
    lip_used = lip_hist.copy()
    w_used = np.full(count, np.nan)
    prefix = None
    left_for_obj = None
    for i in range(count):
        if i == count - 1:
            left_for_obj = prefix
        if i in blocks:
            left, right = prefix, suffixes[i]
            lip = pair_lipschitz(left, right, config.epsilon)
            if allow_extrap and config.use_extrapolation and exps[i] >= 1.0:
                w = extrapolation_weight(t_prev, t_curr, lip_hist[i], lip)
            else:
                w = 0.0
            x_hat = chain[i] if w == 0.0 else chain[i] + w * (chain[i] - prev[i])
            step_l = rho_eff * lip
            grad = masked_block_gradient(left, right, data, x_hat)
            chain[i] = matrix_prox(x_hat - grad / step_l, lam / step_l, exps[i])
            lip_used[i] = lip
            w_used[i] = w
        if i < count - 1:
            prefix = chain[i] if prefix is None else prefix @ chain[i]
    for f in chain:
        if not np.isfinite(f).all():
            raise DivergenceError("factor blocks became non-finite during a cycle")
    if count == 1:
        entries = chain[0][data.row_idx, data.col_idx]
    else:
        right_t = np.ascontiguousarray(chain[-1].T)
        entries = _kernels.dot_rows_cols(np.ascontiguousarray(left_for_obj), right_t,
                                         data.row_idx, data.col_idx)
    res = data.values - entries
    new_chain = FactorChain(chain)
    f_new = 0.5 * float(res @ res) + surrogate_value(new_chain, spec, lam)
    if not np.isfinite(f_new):
        raise DivergenceError("objective became non-finite during a cycle")
    return new_chain, f_new, lip_used, w_used


def prox_residuals(chain: FactorChain, data: MaskedMatrix, lam: float,
                   spec: PartitionSpec, epsilon: float) -> np.ndarray:
    """Normalized prox residual of every block at the given chain.

    A point is an approximate critical point of the full objective exactly
    when these residuals are small.
    """
    cache = build_cache(chain)
    exps = spec.exponents_float()
    out = np.empty(len(chain.factors))
    for i, block in enumerate(chain.factors):
        left, right = cache.prefixes[i], cache.suffixes[i]
        lip = pair_lipschitz(left, right, epsilon)
        grad = masked_block_gradient(left, right, data, block)
        moved = matrix_prox(block - grad / lip, lam / lip, exps[i])
        out[i] = np.linalg.norm(block - moved) / max(1.0, np.linalg.norm(block))
    return out


def cycle(state: IterateState, data: MaskedMatrix, spec: PartitionSpec,
          config: SolverConfig) -> IterationRecord:
    """Advance the state by one accepted cycle and return its record.

    Attempt order: extrapolated with the continuation-scaled constant, then
    non-extrapolated with the same constant, then non-extrapolated with the
    full constant. The first attempt that strictly decreases the objective is
    accepted; the final attempt is also accepted at equality within slack.
    """
    count = len(state.chain.factors)
    t_curr = momentum_next(state.t_prev)
    blocks = set(_select_blocks(state, config, count))
    start = state.chain.factors
    f_prev = state.objective

    def attempt(rho_eff, allow_extrap):
        return _sweep(start, state.prev, data, spec, config, blocks, rho_eff,
                      allow_extrap, state.t_prev, t_curr, state.lip)

    attempts = 1
    rho_used = state.rho
    result = attempt(state.rho, True)
    accepted = result[1] < f_prev
    if not accepted:
        extrapolation_was_active = np.nanmax(result[3]) > 0.0
        if extrapolation_was_active:
            attempts += 1
            result = attempt(state.rho, False)
            accepted = result[1] < f_prev
        if not accepted and state.rho < 1.0:
            attempts += 1
            rho_used = 1.0
            result = attempt(1.0, False)
            accepted = result[1] < f_prev
    new_chain, f_new, lip_used, w_used = result
    if not accepted and not f_new <= f_prev + _DESCENT_SLACK * max(1.0, abs(f_prev)):
        raise InternalConsistencyError(
            f"objective rose from {f_prev!r} to {f_new!r} on a guaranteed-descent "
            f"cycle (iteration {state.k})"
        )
    step_norm = float(sum(np.linalg.norm(new_chain.factors[i] - start[i]) for i in range(count)))
    max_abs = float(max(np.abs(f).max() for f in new_chain.factors))
    stat = float(np.max(prox_residuals(new_chain, data, config.lam, spec, config.epsilon)))
    record = IterationRecord(
        iteration=state.k,
        objective=f_new,
        stopping_stat=stat,
        step_norm=step_norm,
        max_abs=max_abs,
        restarted=attempts > 1,
        attempts=attempts,
        rho=rho_used,
        t=t_curr,
        weights=w_used,
        lipschitz=lip_used,
    )
    state.prev = list(start)
    state.chain = new_chain
    state.lip = lip_used
    state.objective = f_new
    state.t_prev = t_curr
    state.rho = continuation_update(state.rho, config.rho_growth)
    state.k += 1
    return record


def solve(data: MaskedMatrix, spec: PartitionSpec, config: SolverConfig,
          callback=None):
    """Minimize the masked completion objective over a factor chain.

    Returns the final chain and the full per-cycle trace. ``callback``, when
    given, is invoked as callback(state, record) after every accepted cycle.
    Raises DivergenceError (with the partial trace attached) if the objective
    ever becomes non-finite.
    """
    state = init_state(data, spec, config)
    trace = SolveTrace(initial_objective=state.objective)
    t0 = time.perf_counter()
    try:
        for _ in range(config.max_iters):
            record = cycle(state, data, spec, config)
            record.elapsed_s = time.perf_counter() - t0
            trace.records.append(record)
            if callback is not None:
                callback(state, record)
            if not np.isfinite(record.objective) or not np.isfinite(record.stopping_stat):
                raise DivergenceError(
                    f"non-finite objective at iteration {record.iteration}")
            if record.stopping_stat <= config.stop_tol:
                trace.converged = True
                trace.stop_reason = "stop_tol"
                break
        else:
            trace.stop_reason = "max_iters"
    except DivergenceError as exc:
        exc.trace = trace
        raise
    return state.chain, trace

import numpy as np
import pytest

from schattenfac import (
    FactorChain,
    MaskedMatrix,
    SolverConfig,
    block_step,
    continuation_update,
    cycle,
    extrapolation_weight,
    generate_synthetic,
    make_partition,
    momentum_next,
    objective,
    prox_residuals,
    schatten_norm_pow,
    solve,
)
from schattenfac.palm import init_state


def _benchmark_instance(seed, sigma=0.3, frac=0.2):
    return generate_synthetic(100, 100, 5, sigma, frac, seed=seed)


def test_momentum_first_step():
    assert momentum_next(1.0) == pytest.approx((1.0 + np.sqrt(5.0)) / 2.0, rel=1e-14)


def test_momentum_second_step():
    # frozen from direct evaluation of (1 + sqrt(1 + 4 t^2)) / 2
    assert momentum_next(1.6180339887) == pytest.approx(2.1935270852833835, rel=1e-12)


def test_momentum_strictly_increasing():
    for t in np.linspace(1.0, 100.0, 57):
        assert momentum_next(t) > t
    with pytest.raises(ValueError):
        momentum_next(0.5)


def test_extrapolation_weight_cases():
    # first iteration: t_prev = 1 makes the weight vanish
    assert extrapolation_weight(1.0, momentum_next(1.0), 1.0, 1.0) == 0.0
    # equal constants, large k: momentum branch wins and stays below the cap
    t_prev = 40.0
    t_curr = momentum_next(t_prev)
    w = extrapolation_weight(t_prev, t_curr, 7.0, 7.0)
    assert w == pytest.approx((t_prev - 1.0) / t_curr, rel=1e-12)
    assert w <= 0.9999
    # sharply growing constant: the ratio branch wins
    w = extrapolation_weight(t_prev, t_curr, 1.0, 100.0)
    assert w == pytest.approx(0.9999 * 0.1, rel=1e-12)


def test_continuation_update():
    assert continuation_update(1.0, 1.05) == 1.0
    rho, steps = 0.3, 0
    while rho < 1.0:
        rho = continuation_update(rho, 1.05)
        steps += 1
    assert steps == 25
    with pytest.raises(ValueError):
        continuation_update(0.0, 1.05)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lam=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(d=0)
    with pytest.raises(ValueError):
        SolverConfig(rho0=0.0)
    with pytest.raises(ValueError):
        SolverConfig(rho_growth=0.9)
    with pytest.raises(ValueError):
        SolverConfig(shuffle_inner="sometimes")


def _toy_problem(seed=0, m=12, n=10, r=2, frac=0.6, sigma=0.1):
    inst = generate_synthetic(m, n, r, sigma, frac, seed=seed)
    return inst


def test_block_step_zero_penalty_is_gradient_step():
    from schattenfac.completion import build_cache, block_gradient, block_lipschitz

    inst = _toy_problem(seed=3)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=0.0, d=3, seed=1, rho0=1.0)
    state = init_state(inst.observed, spec, config)
    cache = build_cache(state.chain)
    for i in range(2):
        lip = block_lipschitz(cache, i, config.epsilon)
        grad = block_gradient(state.chain, cache, inst.observed, i, state.chain.factors[i])
        expected = state.chain.factors[i] - grad / lip
        got = block_step(state, i, inst.observed, spec, config, cache=cache)
        assert np.allclose(got, expected, atol=1e-12)


def test_block_step_zero_gradient_shrinks_block_in_place():
    from schattenfac import MaskedMatrix, matrix_prox
    from schattenfac.completion import build_cache, block_lipschitz

    inst = _toy_problem(seed=19)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=1.5, d=3, seed=4, rho0=1.0)
    state = init_state(inst.observed, spec, config)
    # observations equal to the current product: the residual and gradient vanish
    product = state.chain.product()
    fitted = MaskedMatrix(inst.m, inst.n, inst.observed.row_idx, inst.observed.col_idx,
                          product[inst.observed.row_idx, inst.observed.col_idx])
    cache = build_cache(state.chain)
    for i in range(2):
        lip = block_lipschitz(cache, i, config.epsilon)
        got = block_step(state, i, fitted, spec, config, cache=cache)
        expected = matrix_prox(state.chain.factors[i], config.lam / lip, 1.0)
        assert np.allclose(got, expected, atol=1e-10)


def test_block_step_minimizes_linearized_subproblem():
    from schattenfac.completion import build_cache, block_gradient, block_lipschitz

    rng = np.random.default_rng(4)
    inst = _toy_problem(seed=4)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=2.0, d=3, seed=2, rho0=1.0)
    state = init_state(inst.observed, spec, config)
    cache = build_cache(state.chain)
    i = 0
    lip = block_lipschitz(cache, i, config.epsilon)
    x_hat = state.chain.factors[i]  # first cycle: no extrapolation
    grad = block_gradient(state.chain, cache, inst.observed, i, x_hat)
    got = block_step(state, i, inst.observed, spec, config, cache=cache)

    def subproblem(x):
        return (float(np.sum(grad * (x - x_hat)))
                + 0.5 * lip * np.linalg.norm(x - x_hat) ** 2
                + config.lam * schatten_norm_pow(x, 1.0))

    val = subproblem(got)
    for scale in (1e-2, 1e-1, 1.0):
        for _ in range(34):
            cand = got + scale * rng.standard_normal(got.shape)
            assert val <= subproblem(cand) + 1e-8


def test_cycle_at_critical_point_stops_immediately():
    inst = _toy_problem(seed=5)
    zero_obs = MaskedMatrix(inst.m, inst.n, inst.observed.row_idx,
                            inst.observed.col_idx, np.zeros(inst.observed.n_obs))
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=1.0, d=3, seed=0, rho0=1.0)
    state = init_state(zero_obs, spec, config)
    # place the iterate exactly at the zero chain, a critical point
    state.chain = FactorChain([np.zeros_like(f) for f in state.chain.factors])
    state.prev = [f.copy() for f in state.chain.factors]
    state.objective = objective(state.chain, zero_obs, config.lam, spec)
    record = cycle(state, zero_obs, spec, config)
    assert record.stopping_stat <= config.stop_tol


def test_basic_palm_monotone_without_extrapolation():
    inst = _toy_problem(seed=6)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=1.0, d=3, seed=3, use_extrapolation=False, max_iters=60)
    _, trace = solve(inst.observed, spec, config)
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])


def test_objective_monotone_over_many_cycles():
    inst = generate_synthetic(40, 30, 3, 0.2, 0.35, seed=7)
    spec = make_partition("1/4", "all_convex")
    config = SolverConfig(lam=2.0, d=6, seed=4, max_iters=200, stop_tol=1e-12)
    _, trace = solve(inst.observed, spec, config)
    objs = trace.objectives()
    assert len(objs) >= 100
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])
    assert np.isfinite(objs).all()


def test_solve_noiseless_exact_factorization():
    inst = generate_synthetic(20, 15, 3, 0.0, 1.0, seed=8)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=0.0, d=3, seed=5, max_iters=400, stop_tol=1e-6)
    chain, trace = solve(inst.observed, spec, config)
    mask = inst.observed.mask_dense()
    loss = 0.5 * np.sum((mask * (inst.truth - chain.product())) ** 2)
    assert loss <= 1e-6 * np.linalg.norm(inst.truth) ** 2


def test_solve_zero_matrix_collapses_chain():
    rng = np.random.default_rng(9)
    flat = np.sort(rng.choice(20 * 20, size=120, replace=False))
    data = MaskedMatrix(20, 20, flat // 20, flat % 20, np.zeros(120))
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=1.0, d=4, seed=6, max_iters=30)
    chain, trace = solve(data, spec, config)
    assert trace.converged
    assert trace.iterations <= 10
    for f in chain.factors:
        assert np.allclose(f, 0.0, atol=1e-12)


def test_trace_records_are_complete_and_finite():
    inst = _toy_problem(seed=10)
    spec = make_partition("1/4", "all_convex")
    config = SolverConfig(lam=1.5, d=4, seed=7, max_iters=80)
    chain, trace = solve(inst.observed, spec, config)
    assert trace.initial_objective > 0
    for rec in trace.records:
        assert np.isfinite(rec.objective)
        assert np.isfinite(rec.stopping_stat)
        assert np.isfinite(rec.step_norm)
        assert np.isfinite(rec.max_abs)
        assert rec.attempts >= 1
        assert 0 < rec.rho <= 1.0
        assert rec.weights.shape == (4,)
        assert rec.lipschitz.shape == (4,)
        finite_w = rec.weights[np.isfinite(rec.weights)]
        assert np.all(finite_w >= 0.0)
        assert np.all(rec.lipschitz >= config.epsilon)
    ts = [rec.t for rec in trace.records]
    assert np.all(np.diff(ts) > 0)
    assert trace.t_advances_on_restart


def test_critical_point_certificate_at_convergence():
    inst = _toy_problem(seed=11, m=30, n=25, r=3, frac=0.5)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=2.0, d=5, seed=8, stop_tol=1e-4, max_iters=400)
    chain, trace = solve(inst.observed, spec, config)
    assert trace.converged
    residuals = prox_residuals(chain, inst.observed, config.lam, spec, config.epsilon)
    assert np.max(residuals) <= 10.0 * config.stop_tol


def test_iterate_gap_tail_vanishes():
    inst = _toy_problem(seed=12, m=30, n=25, r=3, frac=0.5)
    spec = make_partition("1/2", "all_convex")
    config = SolverConfig(lam=2.0, d=5, seed=9, stop_tol=1e-5, max_iters=500)
    chain, trace = solve(inst.observed, spec, config)
    steps = np.array([rec.step_norm for rec in trace.records])
    assert trace.converged
    scale = sum(max(1.0, np.linalg.norm(f)) for f in chain.factors)
    assert steps[-1] <= 10.0 * config.stop_tol * scale
    assert steps[-1] <= np.median(steps)


@pytest.mark.parametrize("mode", ["one_per_cycle", "two_per_cycle"])
def test_shuffle_modes_keep_invariants(mode):
    inst = generate_synthetic(30, 30, 3, 0.2, 0.4, seed=13)
    spec = make_partition("1/5", "all_convex")  # five blocks, three interior
    config = SolverConfig(lam=2.0, d=6, seed=10, shuffle_inner=mode, max_iters=150)
    chain, trace = solve(inst.observed, spec, config)
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])
    # every interior block must be updated within a bounded window
    per_cycle = 1 if mode == "one_per_cycle" else 2
    window = int(np.ceil(3 / per_cycle)) + 1
    for start in range(0, len(trace.records) - window, window):
        touched = set()
        for rec in trace.records[start:start + window]:
            touched |= set(np.flatnonzero(np.isfinite(rec.weights)))
        assert touched == {0, 1, 2, 3, 4}


def test_shuffle_updates_side_blocks_every_cycle():
    inst = generate_synthetic(25, 25, 2, 0.1, 0.4, seed=14)
    spec = make_partition("1/4", "all_convex")
    config = SolverConfig(lam=1.0, d=4, seed=11, shuffle_inner="one_per_cycle", max_iters=40)
    _, trace = solve(inst.observed, spec, config)
    for rec in trace.records:
        updated = set(np.flatnonzero(np.isfinite(rec.weights)))
        assert 0 in updated and 3 in updated
        assert len(updated & {1, 2}) == 1


def test_extrapolation_disabled_for_nonconvex_blocks():
    # p > 1 target keeps a single factor with exponent below.. above 1; use a
    # two-block smooth partition and a nonconvex explicit one to compare
    inst = _toy_problem(seed=15)
    from schattenfac import PartitionSpec

    spec = PartitionSpec("1/3", ("1/2", "1"))  # first block nonconvex
    config = SolverConfig(lam=0.5, d=3, seed=12, max_iters=25)
    _, trace = solve(inst.observed, spec, config)
    for rec in trace.records:
        assert rec.weights[0] == 0.0  # nonconvex block never extrapolates
    assert any(rec.weights[1] > 0.0 for rec in trace.records)


def test_continuation_improves_final_objective_on_benchmark_setting():
    inst = _benchmark_instance(seed=200)
    spec = make_partition("1/4", "all_convex")
    on = SolverConfig(lam=10.5, d=15, seed=0, rho0=0.3, max_iters=120, stop_tol=1e-12)
    off = SolverConfig(lam=10.5, d=15, seed=0, rho0=1.0, max_iters=120, stop_tol=1e-12)
    _, trace_on = solve(inst.observed, spec, on)
    _, trace_off = solve(inst.observed, spec, off)
    assert trace_on.records[-1].objective <= trace_off.records[-1].objective


def test_restart_keeps_objective_monotone_with_extrapolation():
    inst = generate_synthetic(40, 40, 4, 0.3, 0.3, seed=16)
    spec = make_partition("1/3", "all_convex")
    config = SolverConfig(lam=3.0, d=8, seed=13, max_iters=150)
    _, trace = solve(inst.observed, spec, config)
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])
    assert any(rec.restarted for rec in trace.records) or trace.converged


def test_nonconvex_factor_exponents_still_descend():
    # p = 1/4 split as two exponent-1/2 factors: both prox steps take the
    # thresholded fixed-point branch and extrapolation stays off
    from schattenfac import PartitionSpec

    inst = generate_synthetic(30, 25, 3, 0.2, 0.4, seed=18)
    spec = PartitionSpec("1/4", ("1/2", "1/2"))
    config = SolverConfig(lam=1.0, d=5, seed=15, max_iters=200)
    chain, trace = solve(inst.observed, spec, config)
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])
    for rec in trace.records:
        finite = rec.weights[np.isfinite(rec.weights)]
        assert np.all(finite == 0.0)
    residuals = prox_residuals(chain, inst.observed, config.lam, spec, config.epsilon)
    if trace.converged:
        assert np.max(residuals) <= 10.0 * config.stop_tol


def test_single_factor_chain_runs():
    inst = _toy_problem(seed=17, m=10, n=8, r=2, frac=0.7)
    spec = make_partition(2, "all_convex")  # degenerate single factor
    config = SolverConfig(lam=0.5, d=3, seed=14, max_iters=60)
    chain, trace = solve(inst.observed, spec, config)
    assert len(chain.factors) == 1
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])

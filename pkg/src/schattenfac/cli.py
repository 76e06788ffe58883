"""Command-line front end.

Subcommands:

* ``synthetic``  - sweep over (p, sigma, obs_fraction, lam) cells on generated
  low-rank instances, writing a per-trial CSV and a JSON summary.
* ``complete``   - complete a triplet-format rating file with an 80/20-style
  train/test split, writing a per-iteration trace CSV and the final factors.
* ``verify``     - numerically check the surrogate equality/inequality on
  randomized instances; nonzero exit on any tolerance violation.

Options may come from a flat JSON config file (``--config``); explicit flags
override file values. ``SCHATTENFAC_WORKERS`` sets the trial worker-pool size.
All randomness derives from one master seed via SeedSequence splitting, so
trials are individually reproducible and repeated runs emit identical CSVs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .completion import rmse, rsre
from .data import generate_synthetic, load_triplets_with_ids, split_train_test
from .errors import DataFormatError, DivergenceError
from .palm import SolverConfig, solve
from .spectra import schatten_norm_pow
from .surrogate import (
    FactorChain,
    PartitionSpec,
    as_fraction,
    check_surrogate_bound,
    make_partition,
    optimal_factors,
    surrogate_value,
)

TRIAL_COLUMNS = ["trial", "p", "sigma", "obs_fraction", "lam", "seed",
                 "rsre", "iterations", "converged"]
TRACE_COLUMNS = ["iteration", "objective", "test_rmse", "elapsed_s"]


@dataclass
class ExperimentConfig:
    """Merged view of config-file values and command-line flags."""

    m: int = 100
    n: int = 100
    rank: int = 5
    sigma: list = field(default_factory=lambda: [0.3])
    obs_fraction: list = field(default_factory=lambda: [0.2])
    p: list = field(default_factory=lambda: [Fraction(1, 4)])
    mode: str = "all_convex"
    factor_exponents: list | None = None
    lam: list = field(default_factory=lambda: [1.0])
    d: int = 15
    repeat: int = 1
    seed: int = 0
    stop_tol: float = 1e-4
    max_iters: int = 500
    epsilon: float = 1e-6
    rho0: float = 0.3
    rho_growth: float = 1.05
    shuffle_inner: str = "off"
    use_extrapolation: bool = True
    train_fraction: float = 0.8

    def partition(self, p) -> PartitionSpec:
        if self.factor_exponents:
            return PartitionSpec(as_fraction(p), tuple(self.factor_exponents))
        return make_partition(as_fraction(p), self.mode)

    def solver_config(self, lam: float, seed: int) -> SolverConfig:
        return SolverConfig(lam=float(lam), d=self.d, epsilon=self.epsilon,
                            stop_tol=self.stop_tol, max_iters=self.max_iters,
                            rho0=self.rho0, rho_growth=self.rho_growth,
                            shuffle_inner=self.shuffle_inner,
                            use_extrapolation=self.use_extrapolation, seed=seed)


def _parse_list(text, conv):
    if isinstance(text, (list, tuple)):
        return [conv(t) for t in text]
    return [conv(tok) for tok in str(text).split(",") if tok.strip()]


def derive_seed(*key) -> int:
    """Deterministic child seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence(tuple(int(k) for k in key)).generate_state(1)[0])


def _merge_config(args) -> ExperimentConfig:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a flat JSON object")
        values.update(loaded)
    for key in vars(args):
        val = getattr(args, key)
        if key in ExperimentConfig.__dataclass_fields__ and val is not None:
            values[key] = val
    cfg = ExperimentConfig()
    for key, val in values.items():
        if key not in ExperimentConfig.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, val)
    cfg.sigma = _parse_list(cfg.sigma, float)
    cfg.obs_fraction = _parse_list(cfg.obs_fraction, float)
    cfg.p = _parse_list(cfg.p, as_fraction)
    cfg.lam = _parse_list(cfg.lam, float)
    if cfg.factor_exponents:
        cfg.factor_exponents = _parse_list(cfg.factor_exponents, as_fraction)
    return cfg


def _n_workers() -> int:
    raw = os.environ.get("SCHATTENFAC_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# synthetic


def _run_synthetic_trial(task):
    cfg_fields, p_str, sigma, obs, lam, trial = task
    cfg = ExperimentConfig(**cfg_fields)
    p = as_fraction(p_str)
    inst_seed = derive_seed(cfg.seed, trial, 0)
    init_seed = derive_seed(cfg.seed, trial, 1)
    instance = generate_synthetic(cfg.m, cfg.n, cfg.rank, sigma, obs, inst_seed)
    spec = cfg.partition(p)
    solver = cfg.solver_config(lam, init_seed)
    started = time.perf_counter()
    try:
        chain, trace = solve(instance.observed, spec, solver)
        err = rsre(chain.product(), instance.truth)
        row = {
            "trial": trial, "p": str(p), "sigma": sigma, "obs_fraction": obs,
            "lam": lam, "seed": inst_seed, "rsre": err,
            "iterations": trace.iterations, "converged": trace.converged,
        }
        return row, time.perf_counter() - started, None
    except DivergenceError as exc:
        return None, time.perf_counter() - started, f"trial {trial} (p={p}, lam={lam}): {exc}"


def _config_fields(cfg: ExperimentConfig) -> dict:
    out = dict(cfg.__dict__)
    out["p"] = [str(x) for x in cfg.p]
    if cfg.factor_exponents:
        out["factor_exponents"] = [str(x) for x in cfg.factor_exponents]
    return out


def cmd_synthetic(args) -> int:
    cfg = _merge_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = list(product(cfg.p, cfg.sigma, cfg.obs_fraction, cfg.lam))
    tasks = [(_config_fields(cfg), str(p), sigma, obs, lam, trial)
             for (p, sigma, obs, lam) in cells
             for trial in range(cfg.repeat)]
    started = time.perf_counter()
    failures = []
    rows = []
    csv_path = out_dir / "trials.csv"
    workers = _n_workers()
    with open(csv_path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=TRIAL_COLUMNS)
        writer.writeheader()
        handle.flush()

        def consume(result):
            row, _elapsed, failure = result
            if failure is not None:
                failures.append(failure)
                return
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
            handle.flush()
            rows.append(row)

        if workers > 1:
            # spawn, not fork: BLAS and numba threading state do not survive forks
            with get_context("spawn").Pool(workers) as pool:
                for result in pool.imap(_run_synthetic_trial, tasks):
                    consume(result)
        else:
            for task in tasks:
                consume(_run_synthetic_trial(task))
    summary_cells = []
    for (p, sigma, obs, lam) in cells:
        cell_rows = [r for r in rows
                     if r["p"] == str(p) and r["sigma"] == sigma
                     and r["obs_fraction"] == obs and r["lam"] == lam]
        if cell_rows:
            summary_cells.append({
                "p": str(p), "sigma": sigma, "obs_fraction": obs, "lam": lam,
                "n_trials": len(cell_rows),
                "mean_rsre": float(np.mean([r["rsre"] for r in cell_rows])),
                "mean_iterations": float(np.mean([r["iterations"] for r in cell_rows])),
                "convergence_rate": float(np.mean([r["converged"] for r in cell_rows])),
            })
    summary = {
        "config": _config_fields(cfg),
        "cells": summary_cells,
        "failures": failures,
        "timing": {"total_seconds": time.perf_counter() - started},
    }
    _atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2) + "\n")
    print(f"wrote {csv_path} ({len(rows)} trials, {len(failures)} failures)")
    if failures:
        for failure in failures:
            print(f"error: {failure}", file=sys.stderr)
        return 1
    if any(not r["converged"] for r in rows):
        print("warning: some runs hit the iteration cap without converging", file=sys.stderr)
        return 1
    return 0


def read_trials_csv(path):
    """Round-trip reader for the per-trial CSV emitted by ``synthetic``."""
    out = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            out.append({
                "trial": int(row["trial"]),
                "p": as_fraction(row["p"]),
                "sigma": float(row["sigma"]),
                "obs_fraction": float(row["obs_fraction"]),
                "lam": float(row["lam"]),
                "seed": int(row["seed"]),
                "rsre": float(row["rsre"]),
                "iterations": int(row["iterations"]),
                "converged": row["converged"] == "True",
            })
    return out


# ---------------------------------------------------------------------------
# complete


def cmd_complete(args) -> int:
    cfg = _merge_config(args)
    try:
        data, row_ids, col_ids = load_triplets_with_ids(args.input)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.d > min(data.rows, data.cols):
        print(f"error: d={cfg.d} exceeds min dimension {min(data.rows, data.cols)} "
              f"of the {data.rows}x{data.cols} rating matrix", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = split_train_test(data, cfg.train_fraction, derive_seed(cfg.seed, 0, 2))
    p = cfg.p[0]
    lam = cfg.lam[0]
    spec = cfg.partition(p)
    solver = cfg.solver_config(lam, derive_seed(cfg.seed, 0, 3))
    trace_path = out_dir / "trace.csv"
    diverged = None
    with open(trace_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)

        def on_cycle(state, record):
            writer.writerow([record.iteration, repr(record.objective),
                             repr(rmse(state.chain, test)), repr(record.elapsed_s)])
            handle.flush()

        try:
            chain, trace = solve(train, spec, solver, callback=on_cycle)
        except DivergenceError as exc:
            diverged = exc
    if diverged is not None:
        print(f"error: solver diverged: {diverged}", file=sys.stderr)
        return 1
    final_rmse = rmse(chain, test)
    np.savez(out_dir / "factors.npz",
             row_ids=row_ids, col_ids=col_ids,
             **{f"factor_{i}": f for i, f in enumerate(chain.factors)})
    run_info = {
        "input": str(args.input),
        "rows": data.rows, "cols": data.cols, "observations": data.n_obs,
        "train_observations": train.n_obs, "test_observations": test.n_obs,
        "p": str(p), "factor_exponents": [str(e) for e in spec.factor_exponents],
        "lam": lam, "d": cfg.d, "seed": cfg.seed,
        "iterations": trace.iterations, "converged": trace.converged,
        "final_objective": trace.records[-1].objective if trace.records else None,
        "final_test_rmse": final_rmse,
    }
    _atomic_write_text(out_dir / "run.json", json.dumps(run_info, indent=2) + "\n")
    print(f"completed {data.rows}x{data.cols} matrix: test RMSE {final_rmse:.6f} "
          f"after {trace.iterations} iterations")
    return 0 if trace.converged else 1


def read_trace_csv(path):
    """Round-trip reader for the per-iteration CSV emitted by ``complete``."""
    out = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            out.append({
                "iteration": int(row["iteration"]),
                "objective": float(row["objective"]),
                "test_rmse": float(row["test_rmse"]),
                "elapsed_s": float(row["elapsed_s"]),
            })
    return out


# ---------------------------------------------------------------------------
# verify


def _random_condition_bounded(rng, d, cond_cap=10.0):
    """Random invertible d x d matrix with singular values in [1/cap, cap]^0.5."""
    a = rng.standard_normal((d, d))
    q1, _ = np.linalg.qr(a)
    q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = rng.uniform(1.0 / np.sqrt(cond_cap), np.sqrt(cond_cap), size=d)
    return (q1 * s) @ q2.T, (q2 / s) @ q1.T


def refactor_chain(chain: FactorChain, rng) -> FactorChain:
    """Random feasible re-factorization: slip G G^-1 between adjacent factors."""
    factors = [f.copy() for f in chain.factors]
    for i in range(len(factors) - 1):
        d = factors[i].shape[1]
        g, g_inv = _random_condition_bounded(rng, d)
        factors[i] = factors[i] @ g
        factors[i + 1] = g_inv @ factors[i + 1]
    return FactorChain(factors)


def verify_surrogate(trials: int, seed: int, refactors: int = 20,
                     corrupt_exponent: bool = False, report=print):
    """Randomized check of the surrogate equality and lower-bound direction.

    Returns (max relative equality gap, min inequality slack). The corrupt
    flag evaluates the left side with a wrong target exponent and exists as a
    negative control for the exit-status contract.
    """
    rng = np.random.default_rng(seed)
    partitions = [
        make_partition(Fraction(1, 3), "all_convex"),
        make_partition(Fraction(1, 4), "all_convex"),
        make_partition(Fraction(2, 3), "all_convex"),
        make_partition(Fraction(1, 2), "all_smooth"),
        make_partition(Fraction(2, 5), "all_smooth"),
        PartitionSpec(Fraction(1), (Fraction(2), Fraction(2))),
        PartitionSpec(Fraction(1, 2), (Fraction(1), Fraction(1))),
    ]
    max_rel_gap = 0.0
    min_slack = np.inf
    for trial in range(trials):
        spec = partitions[trial % len(partitions)]
        m = int(rng.integers(3, 31))
        n = int(rng.integers(2, 21))
        rank = int(rng.integers(1, min(m, n) + 1))
        d = int(rng.integers(rank, 13)) if rank <= 12 else rank
        x = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
        chain = optimal_factors(x, spec, d)
        p_eval = float(spec.p) * (1.01 if corrupt_exponent else 1.0)
        lhs = schatten_norm_pow(x, p_eval) / p_eval
        rhs = surrogate_value(chain, spec, 1.0)
        max_rel_gap = max(max_rel_gap, abs(rhs - lhs) / max(lhs, 1e-30))
        for _ in range(refactors):
            alt = refactor_chain(chain, rng)
            rep = check_surrogate_bound(x, alt, spec)
            slack = (rep.rhs - lhs) if corrupt_exponent else rep.gap
            min_slack = min(min_slack, slack)
    report(f"surrogate equality: max relative gap {max_rel_gap:.3e} over {trials} instances")
    report(f"surrogate inequality: min slack {min_slack:.3e} over {trials * refactors} "
           f"re-factorizations")
    return max_rel_gap, min_slack


def cmd_verify(args) -> int:
    if args.p is not None:
        p = as_fraction(args.p)
        spec = make_partition(p, args.mode or "all_convex")
        print(f"partition for p={p} ({args.mode or 'all_convex'}): "
              f"[{', '.join(str(e) for e in spec.factor_exponents)}]")
    max_rel_gap, min_slack = verify_surrogate(
        trials=args.trials, seed=args.seed if args.seed is not None else 0,
        corrupt_exponent=args.corrupt_exponent)
    ok = max_rel_gap <= 1e-9 and min_slack >= -1e-9
    print("verify: PASS" if ok else "verify: FAIL")
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schattenfac",
                                     description="Factored Schatten-p matrix completion")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="flat JSON config file; flags override its values")
        sp.add_argument("--p", help="target exponent(s), e.g. '1/4' or '1/4,1/2'")
        sp.add_argument("--mode", choices=["all_convex", "all_smooth"],
                        help="partition construction mode")
        sp.add_argument("--factor-exponents", dest="factor_exponents",
                        help="explicit p_i list, e.g. '1,1,2' (overrides --mode)")
        sp.add_argument("--lam", help="penalty weight(s), e.g. '1' or '1,5.75,10.5'")
        sp.add_argument("--d", type=int, help="inner factor dimension")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--stop-tol", dest="stop_tol", type=float)
        sp.add_argument("--max-iters", dest="max_iters", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--rho0", type=float)
        sp.add_argument("--rho-growth", dest="rho_growth", type=float)
        sp.add_argument("--shuffle-inner", dest="shuffle_inner",
                        choices=["off", "one_per_cycle", "two_per_cycle"])
        sp.add_argument("--no-extrapolation", dest="use_extrapolation",
                        action="store_false", default=None)

    syn = sub.add_parser("synthetic", help="run the synthetic recovery sweep")
    add_common(syn)
    syn.add_argument("--out", required=True, help="output directory")
    syn.add_argument("--m", type=int)
    syn.add_argument("--n", type=int)
    syn.add_argument("--rank", type=int)
    syn.add_argument("--sigma", help="noise level(s), e.g. '0.3' or '0.3,0.4'")
    syn.add_argument("--obs-fraction", dest="obs_fraction",
                     help="observed fraction(s), e.g. '0.2' or '0.15,0.2'")
    syn.add_argument("--repeat", type=int, help="trials per sweep cell")
    syn.set_defaults(func=cmd_synthetic)

    comp = sub.add_parser("complete", help="complete a triplet rating file")
    add_common(comp)
    comp.add_argument("--input", required=True, help="triplet file (.gz accepted)")
    comp.add_argument("--out", required=True, help="output directory")
    comp.add_argument("--train-fraction", dest="train_fraction", type=float)
    comp.set_defaults(func=cmd_complete)

    ver = sub.add_parser("verify", help="check the surrogate identities numerically")
    ver.add_argument("--trials", type=int, default=50)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--p", help="echo the partition for this exponent")
    ver.add_argument("--mode", choices=["all_convex", "all_smooth"])
    ver.add_argument("--corrupt-exponent", action="store_true",
                     help="negative-control hook: inject a wrong exponent and expect failure")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

# app/harness/tables.py
from __future__ import annotations
import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from app.harness.runconfig import TableSpec, start_vector
from app.harness.runner import build_problem, map_paths
from app.metrics import weak_gap
from app.oracles import CournotGame
from app.schedules import PowerLawTriple, WindowRule, validate_as, validate_ms, window_start
from app.settings_catalog import GAMES, SETTING_SCALES, SETTINGS
from app.solvers import (
    AveragingBank,
    IterateState,
    Scheme,
    SolverConfig,
    rssa_step,
    run_path,
)

logger = logging.getLogger(__name__)


def _cells(spec: TableSpec) -> List[Tuple[float, int, float]]:
    """(lambda, N, r) in row-major table order."""
    return [(lam, N, r) for lam in spec.lambdas for N in spec.horizons for r in spec.r_values]


def column_label(N: int, r: float) -> str:
    return f"N={N},r={r:+g}"


def averaging_table(spec: TableSpec, threads: Optional[int] = None, progress: bool = True) -> pd.DataFrame:
    """
    Mean weak gap of window averages, rows lambda, columns (N, r). Every cell
    of one path is read off a single SA trajectory run to max(N) with the
    shared stepsize rule, so the lambda = 1 column is the same iterate for every r.
    """
    game = CournotGame(**GAMES[spec.game])
    oracle, fset = build_problem(game)
    F = oracle.exact_map()
    M = spec.M if spec.M is not None else fset.diameter_bound
    C = spec.C if spec.C is not None else oracle.bound_C
    rule = WindowRule(M=M, C=C, r=1.0)
    cells = _cells(spec)
    starts = [window_start(lam, N) for lam, N, _ in cells]
    stops = [N for _, N, _ in cells]
    rs = [r for _, _, r in cells]
    horizon = max(spec.horizons)
    x0 = fset.project(start_vector(spec.start, game))
    logger.info("averaging table: %d cells, %d paths, N up to %d (M=%.4g, C=%.4g)",
                len(cells), spec.paths, horizon, M, C)

    def job(p: int) -> np.ndarray:
        bank = AveragingBank(starts, stops, rs, fset.dimension)
        state = IterateState(k=0, x=x0.copy(), rng=np.random.default_rng(spec.seed + p))
        for k in range(horizon + 1):
            gamma, _, _ = rule.eval(k)
            bank.update(k, gamma, state.x)
            if k < horizon:
                rssa_step(state, oracle, fset, gamma, 0.0, 0.0)
        return np.array([weak_gap(F, fset, xbar, restarts=spec.restarts, tol=spec.gap_tol).value
                         for xbar in bank.averages()])

    gaps = np.vstack(map_paths(job, spec.paths, threads, desc="table paths", progress=progress))
    means = gaps.mean(axis=0)

    rows = []
    it = iter(means)
    for lam in spec.lambdas:
        note = "full averaging" if lam == 0 else ("last iterate" if lam == 1 else "")
        row = {"lambda": lam, "note": note}
        for N in spec.horizons:
            for r in spec.r_values:
                row[column_label(N, r)] = float(next(it))
        rows.append(row)
    return pd.DataFrame(rows)


def rssa_settings_table(spec: TableSpec, threads: Optional[int] = None, progress: bool = True) -> pd.DataFrame:
    """Mean and across-path std of the final-iterate weak gap for each named setting."""
    game = CournotGame(**GAMES[spec.game])
    oracle, fset = build_problem(game, extension_radius=SETTING_SCALES["eps0"])
    F = oracle.exact_map()
    start = start_vector(spec.start, game)
    rows = []
    for name in spec.settings:
        a, b, c = SETTINGS[name]
        triple = PowerLawTriple.stabilized(SETTING_SCALES["gamma0"], a, SETTING_SCALES["eta0"], b,
                                           SETTING_SCALES["eps0"], c, spec.horizon)
        cfg = SolverConfig(scheme=Scheme.RSSA, schedule=triple, horizon=spec.horizon, start=start).validate()

        def job(p: int, cfg=cfg) -> float:
            record = run_path(cfg, oracle, fset, seed=spec.seed + p, path_id=p)
            return weak_gap(F, fset, record.final.x, restarts=spec.restarts, tol=spec.gap_tol).value

        vals = np.array(map_paths(job, spec.paths, threads, desc=name, progress=progress))
        logger.info("%s: mean gap %.3e", name, vals.mean())
        rows.append({
            "setting": name, "a": a, "b": b, "c": c,
            "as_holds": int(validate_as(triple).holds), "ms_holds": int(validate_ms(triple).holds),
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        })
    return pd.DataFrame(rows)


def build_table(spec: TableSpec, threads: Optional[int] = None, progress: bool = True) -> pd.DataFrame:
    if spec.which == "rssa_settings":
        return rssa_settings_table(spec, threads, progress)
    return averaging_table(spec, threads, progress)

# app/harness/runner.py
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, TypeVar, Union

import numpy as np
from tqdm import tqdm

from app.config import SVI_LAB_THREADS
from app.errors import ConfigError
from app.geometry import FeasibleSet
from app.harness.records import (
    AGGREGATE_COLUMNS,
    PATH_COLUMNS,
    TIKHONOV_COLUMNS,
    write_csv,
)
from app.harness.runconfig import RunConfig, dump_effective_config
from app.metrics import strong_gap, weak_gap
from app.oracles import CournotGame, CournotOracle, ExactMap
from app.solvers import PathRecord, TikhonovSample, run_path, trajectory_gap_series

logger = logging.getLogger(__name__)

T = TypeVar("T")
Row = Tuple[int, int, str, float]


# ---------- plumbing ----------
def build_problem(game: CournotGame, extension_radius: float = 0.0) -> Tuple[CournotOracle, FeasibleSet]:
    return CournotOracle(game, extension_radius=extension_radius), game.feasible_set()


def map_paths(job: Callable[[int], T], paths: int, threads: Optional[int] = None,
              desc: str = "paths", progress: bool = True) -> List[T]:
    """Runs job(p) for p = 0..paths-1 on a bounded pool; results come back in path order."""
    threads = max(1, threads or SVI_LAB_THREADS)
    bar = tqdm(total=paths, desc=desc, disable=not progress, leave=False)
    out: List[T] = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for result in pool.map(job, range(paths)):
            out.append(result)
            bar.update(1)
    bar.close()
    return out


def gap_values(F: ExactMap, fset: FeasibleSet, x: np.ndarray, kind: str, restarts: int,
               tol: float) -> Dict[str, float]:
    out: Dict[str, float] = {}
    if kind in ("weak", "both"):
        out["weak_gap"] = weak_gap(F, fset, x, restarts=restarts, tol=tol).value
    if kind in ("strong", "both"):
        out["strong_gap"] = strong_gap(F, fset, x).value
    return out


def aggregate(rows: Iterable[Row]) -> List[Tuple[int, str, float, float, int]]:
    """Mean and across-path std (ddof 1) per (k, metric), reduced in path order."""
    buckets: Dict[Tuple[int, str], List[Tuple[int, float]]] = {}
    for path_id, k, metric, value in rows:
        buckets.setdefault((k, metric), []).append((path_id, value))
    out = []
    for (k, metric), vals in sorted(buckets.items()):
        v = np.array([val for _, val in sorted(vals)])
        std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        out.append((k, metric, float(np.mean(v)), std, int(v.size)))
    return out


# ---------- run ----------
@dataclass
class ExperimentResult:
    config: RunConfig
    records: List[PathRecord]
    path_rows: List[Row]
    aggregate_rows: List[Tuple[int, str, float, float, int]]
    tikhonov: List[TikhonovSample] = field(default_factory=list)


def run_experiment(cfg: RunConfig, threads: Optional[int] = None, paths: Optional[int] = None,
                   seed: Optional[int] = None, progress: bool = True) -> ExperimentResult:
    overrides = {k: v for k, v in (("paths", paths), ("seed", seed)) if v is not None}
    if overrides:
        # the effective config echo must describe what actually ran
        cfg = cfg.model_copy(update={"run": cfg.run.model_copy(update=overrides)})
    game = cfg.game.build()
    eps_radius = 0.0
    if cfg.schedule.kind == "power":
        eps_radius = cfg.schedule.triple(cfg.run.horizon).eps0
    oracle, fset = build_problem(game, extension_radius=eps_radius)
    solver_cfg = cfg.solver_config(game, oracle, fset)
    F = oracle.exact_map()
    P, base = cfg.run.paths, cfg.run.seed
    kind, restarts, tol = cfg.run.gap, cfg.run.restarts, cfg.run.gap_tol
    logger.info("running %d paths of %s to N=%d (seed %d)", P, solver_cfg.scheme.value, solver_cfg.horizon, base)

    def job(p: int) -> Tuple[PathRecord, List[Row]]:
        record = run_path(solver_cfg, oracle, fset, seed=base + p, path_id=p)
        rows: List[Row] = list(record.to_rows())
        for cp in record.checkpoints:
            for target, point in (("x", cp.x), ("xbar", cp.average)):
                for name, val in gap_values(F, fset, point, kind, restarts, tol).items():
                    rows.append((p, cp.k, f"{name}_{target}", val))
        if record.window_average is not None:
            for name, val in gap_values(F, fset, record.window_average, kind, restarts, tol).items():
                rows.append((p, record.final.k, f"{name}_xwin", val))
        return record, rows

    results = map_paths(job, P, threads, desc="paths", progress=progress)
    records = [r for r, _ in results]
    path_rows = [row for _, rows in results for row in rows]
    gap_rows = [row for row in path_rows if "_gap_" in row[2]]
    agg = aggregate(gap_rows)

    series: List[TikhonovSample] = []
    if solver_cfg.tikhonov_ticks:
        logger.info("solving the Tikhonov trajectory at %d ticks", len(solver_cfg.tikhonov_ticks))
        series = trajectory_gap_series(records, solver_cfg.schedule, oracle, fset,
                                       tol=cfg.solver.tikhonov_tol, smoothing_draws=cfg.solver.smoothing_draws)
    return ExperimentResult(cfg, records, path_rows, agg, series)


def write_run_outputs(result: ExperimentResult, out_dir: Union[str, Path]) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_csv(out / "paths.csv", PATH_COLUMNS, result.path_rows),
        write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, result.aggregate_rows),
    ]
    if result.tikhonov:
        written.append(write_csv(out / "tikhonov.csv", TIKHONOV_COLUMNS,
                                 [(s.k, s.error, s.scale, s.ratio) for s in result.tikhonov]))
    eff = out / "effective_config.toml"
    eff.write_text(dump_effective_config(result.config), encoding="utf-8")
    written.append(eff)
    logger.info("wrote %s", ", ".join(p.name for p in written))
    return written


def read_point_file(path: Union[str, Path]) -> np.ndarray:
    """One value per line or comma-separated; blank lines and '#' comments ignored."""
    values: List[float] = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        for line in lines:
            line = line.split("#", 1)[0].strip()
            if line:
                values.extend(float(tok) for tok in line.replace(",", " ").split())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read point file {path}: {exc}") from exc
    return np.asarray(values, dtype=float)

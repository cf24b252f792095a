# app/cli.py
from __future__ import annotations
import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from app.config import SVI_LAB_OUT, SVI_LAB_THREADS, setup_logging
from app.errors import ConfigError, SviLabError
from app.harness.records import SCHEMA_LINE, write_csv, write_frame
from app.harness.runconfig import load_run_config, load_table_spec, parse_table_spec
from app.harness.runner import build_problem, read_point_file, run_experiment, write_run_outputs
from app.harness.tables import build_table
from app.metrics import strong_gap, weak_gap
from app.schedules import feasible_region_grid, verdict_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REQUIRE_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fail(exc: SviLabError) -> None:
    code = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_SOLVER
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


_config_opt = click.option("--config", "config_file", type=click.Path(dir_okay=False), required=True,
                           help="Experiment TOML file.")
_out_opt = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=SVI_LAB_OUT,
                        show_default=True, help="Output directory.")
_threads_opt = click.option("--threads", type=click.IntRange(min=1), default=SVI_LAB_THREADS,
                            envvar="SVI_LAB_THREADS", show_default=True, help="Worker threads for sample paths.")


@click.group()
@click.option("--log-level", default=None, help="Overrides SVI_LAB_LOG_LEVEL.")
def cli(log_level: Optional[str]):
    """Stochastic VI solvers and the Nash-Cournot experiment harness."""
    setup_logging(log_level)


# ---------- validate ----------
@cli.command()
@_config_opt
@click.option("--require", "required", multiple=True, type=click.Choice(["as", "ms", "avg"]),
              help="Condition sets that must hold; exit code 1 otherwise.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Also write verdicts.csv here.")
def validate(config_file: str, required: Tuple[str, ...], out_dir: Optional[str]):
    """Check the schedule exponents against every convergence condition set."""
    try:
        cfg = load_run_config(config_file)
        if cfg.schedule.kind != "power":
            raise ConfigError("validate needs a power-law schedule")
        triple = cfg.schedule.triple(cfg.run.horizon)
        game = cfg.game.build()
        oracle, _ = build_problem(game, extension_radius=triple.eps0)
        C = oracle.bound_C if triple.eps0 > 0 and triple.eta0 > 0 else None
        report = verdict_report(triple, r=cfg.solver.r, C=C, n=game.dimension)
    except SviLabError as exc:
        _fail(exc)

    rows = []
    for key, verdict in report.items():
        click.echo(f"[{key}] {'holds' if verdict.holds else 'FAILS'}")
        for p in verdict.checks:
            flag = "ok " if p.holds else "NO "
            click.echo(f"  {flag}{p.describe()}{'  (binding)' if p.binding else ''}")
            rows.append((key, p.name, repr(p.lhs), p.relation, repr(p.rhs), int(p.holds)))
        for name, ok in verdict.reports.items():
            click.echo(f"  note: {name} {'holds' if ok else 'fails'}")
    k1 = next(iter(report.values())).info.get("K1")
    if k1 is not None:
        click.echo(f"K1 = {k1}")
    if out_dir is not None:
        write_csv(Path(out_dir) / "verdicts.csv", ["set", "condition", "lhs", "relation", "rhs", "holds"], rows)

    failed = [key for key in required if not report[key].holds]
    if failed:
        click.echo(f"required condition sets fail: {', '.join(failed)}", err=True)
        sys.exit(EXIT_REQUIRE_FAILED)


# ---------- run ----------
@cli.command()
@_config_opt
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Base seed; path p uses seed + p.")
@click.option("--paths", type=click.IntRange(min=1), default=None, help="Number of sample paths.")
@_out_opt
@_threads_opt
def run(config_file: str, seed: Optional[int], paths: Optional[int], out_dir: str, threads: int):
    """Run seeded sample paths and write per-path and aggregate CSVs."""
    try:
        cfg = load_run_config(config_file)
        result = run_experiment(cfg, threads=threads, paths=paths, seed=seed)
        written = write_run_outputs(result, out_dir)
    except SviLabError as exc:
        _fail(exc)
    for path in written:
        click.echo(str(path))


# ---------- table ----------
@cli.command()
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
              help="Table spec TOML file with a [table] section.")
@click.option("--preset", default=None, help="Named table preset instead of a file.")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--paths", type=click.IntRange(min=1), default=None)
@_out_opt
@_threads_opt
def table(config_file: Optional[str], preset: Optional[str], seed: Optional[int], paths: Optional[int],
          out_dir: str, threads: int):
    """Replicate an averaging table or the RSSA settings table."""
    try:
        if (config_file is None) == (preset is None):
            raise ConfigError("give exactly one of --config and --preset")
        spec = load_table_spec(config_file) if config_file else parse_table_spec(f'[table]\npreset = "{preset}"\n')
        overrides = {k: v for k, v in (("seed", seed), ("paths", paths)) if v is not None}
        spec = spec.model_copy(update=overrides)
        frame = build_table(spec, threads=threads)
        path = write_frame(Path(out_dir) / "table.csv", frame)
    except SviLabError as exc:
        _fail(exc)
    click.echo(str(path))


# ---------- region ----------
@cli.command()
@click.option("--resolution", type=click.IntRange(min=2), default=50, show_default=True)
@_out_opt
def region(resolution: int, out_dir: str):
    """Emit the feasible (a, b, c) grids of both convergence condition sets."""
    grid = feasible_region_grid(resolution)
    path = Path(out_dir) / "region.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(SCHEMA_LINE + "\n" + grid.to_csv(), encoding="utf-8")
    click.echo(f"{path} ({int(grid.as_holds.sum())} as cells, {int(grid.ms_holds.sum())} ms cells)")


# ---------- gap ----------
@cli.command()
@_config_opt
@click.option("--point", "point_file", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Point file: one value per line or comma-separated.")
@click.option("--restarts", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def gap(config_file: str, point_file: str, restarts: Optional[int], out_dir: Optional[str]):
    """Strong and weak gap of the configured game at a point."""
    try:
        cfg = load_run_config(config_file)
        game = cfg.game.build()
        oracle, fset = build_problem(game)
        x = read_point_file(point_file)
        if x.shape != (game.dimension,):
            raise ConfigError(f"point has {x.size} entries, the game needs {game.dimension}")
        F = oracle.exact_map()
        strong = strong_gap(F, fset, x)
        weak = weak_gap(F, fset, x, restarts=cfg.run.restarts if restarts is None else restarts,
                        tol=cfg.run.gap_tol)
    except SviLabError as exc:
        _fail(exc)
    if not fset.contains(x):
        click.echo("warning: point is not feasible", err=True)
    click.echo(f"strong_gap {strong.value!r}")
    click.echo(f"weak_gap {weak.value!r}")
    if out_dir is not None:
        write_csv(Path(out_dir) / "gap.csv", ["method", "value", "restarts", "tolerance", "converged"],
                  [strong.to_row(), weak.to_row()])

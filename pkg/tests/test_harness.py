# tests/test_harness.py
import numpy as np
import pytest
from click.testing import CliRunner

from app.cli import EXIT_CONFIG, EXIT_OK, EXIT_REQUIRE_FAILED, cli
from app.errors import ConfigError
from app.harness.records import SCHEMA_LINE, read_csv
from app.harness.runconfig import (
    RunSection,
    dump_effective_config,
    parse_run_config,
    parse_table_spec,
)
from app.harness.runner import aggregate, build_problem, read_point_file, run_experiment
from app.harness.tables import build_table, column_label
from app.solvers import Scheme

SMALL_RUN = """
[game]
preset = "cournot5x4"
firms = 2
nodes = 2

[schedule]
setting = "S1"

[solver]
scheme = "RSSA"
window_lambda = 0.5

[run]
horizon = 20
paths = 3
seed = 7
checkpoints = [0, 10]
gap = "strong"
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------- config parsing ----------
def test_empty_config_takes_defaults():
    cfg = parse_run_config("")
    assert cfg.solver.scheme is Scheme.RSSA
    assert cfg.run.horizon == 4000 and cfg.run.paths == 50
    assert cfg.game.build().dimension == 40


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_run_config("[run]\nbogus = 1\n")
    assert "bogus" in str(info.value)


def test_malformed_toml_reports_position():
    with pytest.raises(ConfigError) as info:
        parse_run_config("[run]\nhorizon = \n")
    assert info.value.line == 2


def test_unknown_setting_rejected():
    with pytest.raises(ConfigError):
        parse_run_config('[schedule]\nsetting = "S99"\n')


def test_effective_config_reads_back():
    cfg = parse_run_config(SMALL_RUN)
    assert parse_run_config(dump_effective_config(cfg)) == cfg


def test_scheme_mismatch_is_a_config_error():
    cfg = parse_run_config('[schedule]\nsetting = "S1"\n[solver]\nscheme = "SA"\n')
    game = cfg.game.build()
    oracle, fset = build_problem(game)
    with pytest.raises(ConfigError):
        cfg.solver_config(game, oracle, fset)


def test_default_checkpoints():
    assert RunSection(horizon=80).ticks() == list(range(0, 81, 2))
    assert RunSection(horizon=0).ticks() == [0]
    assert RunSection(horizon=30, checkpoints=[5]).ticks() == [5, 30]


def test_table_preset_merge():
    spec = parse_table_spec('[table]\npreset = "table_r_pm_half"\npaths = 3\n')
    assert spec.r_values == [-0.5, 0.5]
    assert spec.paths == 3
    assert spec.lambdas[0] == 0.0 and spec.lambdas[-1] == 1.0
    with pytest.raises(ConfigError):
        parse_table_spec('[table]\npreset = "nope"\n')


def test_point_file(tmp_path):
    path = _write(tmp_path, "x.txt", "# start\n1.0, 2.5\n\n3\n")
    assert np.array_equal(read_point_file(path), [1.0, 2.5, 3.0])
    with pytest.raises(ConfigError):
        read_point_file(_write(tmp_path, "bad.txt", "1.0, abc\n"))


# ---------- aggregation ----------
def test_aggregate_orders_and_reduces():
    rows = [(1, 0, "m", 2.0), (0, 5, "a", 3.0), (0, 0, "m", 1.0)]
    out = aggregate(rows)
    assert [(k, name) for k, name, *_ in out] == [(0, "m"), (5, "a")]
    assert out[0][2] == pytest.approx(1.5)
    assert out[0][3] == pytest.approx(np.sqrt(0.5))
    assert out[0][4] == 2
    assert out[1][3] == 0.0


def test_run_experiment_rows():
    result = run_experiment(parse_run_config(SMALL_RUN), threads=1, progress=False)
    assert len(result.records) == 3
    assert [r.seed for r in result.records] == [7, 8, 9]
    names = {name for _, name, *_ in result.aggregate_rows}
    assert names == {"strong_gap_x", "strong_gap_xbar", "strong_gap_xwin"}
    assert all(count == 3 for *_, count in result.aggregate_rows)
    ks = [k for k, *_ in result.aggregate_rows]
    assert ks == sorted(ks)


# ---------- command line ----------
def test_validate_command(tmp_path):
    runner = CliRunner()
    ok = _write(tmp_path, "s1.toml", '[schedule]\nsetting = "S1"\n')
    res = runner.invoke(cli, ["validate", "--config", ok, "--require", "as", "--require", "ms",
                              "--out", str(tmp_path / "v")])
    assert res.exit_code == EXIT_OK, res.output
    assert "[as] holds" in res.output
    assert (tmp_path / "v" / "verdicts.csv").read_text().startswith(SCHEMA_LINE)

    s10 = _write(tmp_path, "s10.toml", '[schedule]\nsetting = "S10"\n')
    res = runner.invoke(cli, ["validate", "--config", s10, "--require", "as"])
    assert res.exit_code == EXIT_REQUIRE_FAILED

    bad = _write(tmp_path, "bad.toml", "[schedule\nsetting = 1\n")
    res = runner.invoke(cli, ["validate", "--config", bad])
    assert res.exit_code == EXIT_CONFIG


def test_run_is_identical_across_thread_counts(tmp_path):
    runner = CliRunner()
    cfg = _write(tmp_path, "run.toml", SMALL_RUN)
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"out{threads}"
        res = runner.invoke(cli, ["run", "--config", cfg, "--out", str(out), "--threads", threads])
        assert res.exit_code == EXIT_OK, res.output
        outs.append(out)
    for name in ("paths.csv", "aggregate.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_run_overrides_reach_effective_config(tmp_path):
    runner = CliRunner()
    cfg = _write(tmp_path, "run.toml", SMALL_RUN)
    out = tmp_path / "out"
    res = runner.invoke(cli, ["run", "--config", cfg, "--out", str(out), "--paths", "2", "--seed", "1"])
    assert res.exit_code == EXIT_OK, res.output
    eff = parse_run_config((out / "effective_config.toml").read_text())
    assert eff.run.paths == 2 and eff.run.seed == 1
    frame = read_csv(out / "paths.csv")
    assert list(frame.columns) == ["path_id", "k", "metric_name", "value"]
    assert sorted(frame["path_id"].unique()) == [0, 1]


def test_region_command(tmp_path):
    res = CliRunner().invoke(cli, ["region", "--resolution", "2", "--out", str(tmp_path)])
    assert res.exit_code == EXIT_OK
    lines = (tmp_path / "region.csv").read_text().splitlines()
    assert lines[0] == SCHEMA_LINE
    assert lines[1] == "a,b,c,as_holds,ms_holds"
    assert len(lines) == 10


def test_gap_command(tmp_path):
    runner = CliRunner()
    cfg = _write(tmp_path, "g.toml", "[game]\npreset = \"cournot5x4\"\n")
    point = _write(tmp_path, "p.txt", "\n".join(["0.0"] * 40))
    res = runner.invoke(cli, ["gap", "--config", cfg, "--point", point, "--restarts", "0",
                              "--out", str(tmp_path / "g")])
    assert res.exit_code == EXIT_OK, res.output
    assert "strong_gap" in res.output and "weak_gap" in res.output
    frame = read_csv(tmp_path / "g" / "gap.csv")
    assert list(frame["method"]) == ["strong_lp", "weak_multistart"]

    short = _write(tmp_path, "short.txt", "0.0\n0.0\n")
    res = runner.invoke(cli, ["gap", "--config", cfg, "--point", short])
    assert res.exit_code == EXIT_CONFIG


# ---------- tables ----------
def test_small_averaging_table():
    spec = parse_table_spec(
        "[table]\n"
        'which = "averaging_r"\n'
        "r_values = [-1.0, 1.0]\n"
        "lambdas = [0.0, 0.5, 1.0]\n"
        "horizons = [20, 40]\n"
        "paths = 2\n"
        "restarts = 0\n"
        "gap_tol = 1e-6\n"
    )
    frame = build_table(spec, threads=1, progress=False)
    assert list(frame["lambda"]) == [0.0, 0.5, 1.0]
    assert list(frame["note"]) == ["full averaging", "", "last iterate"]
    last = frame.iloc[-1]
    for N in (20, 40):
        assert last[column_label(N, -1.0)] == last[column_label(N, 1.0)]
    values = frame.drop(columns=["lambda", "note"]).to_numpy(dtype=float)
    assert np.all(values >= 0.0)


def test_table_needs_exactly_one_source(tmp_path):
    res = CliRunner().invoke(cli, ["table", "--out", str(tmp_path)])
    assert res.exit_code == EXIT_CONFIG

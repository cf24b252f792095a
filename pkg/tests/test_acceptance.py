# tests/test_acceptance.py
# Long stochastic replications; collected only with SVI_LAB_SLOW=1.
import numpy as np
import pytest

from app.harness.runconfig import parse_run_config, parse_table_spec
from app.harness.runner import build_problem, map_paths, run_experiment
from app.harness.tables import averaging_table, column_label, rssa_settings_table
from app.metrics import loglog_rate_fit, weak_gap
from app.oracles import CournotGame
from app.schedules import WindowRule
from app.settings_catalog import GAMES
from app.solvers import Scheme, SolverConfig, run_path

pytestmark = pytest.mark.slow

PATHS = 50


def test_full_averaging_rate_trend():
    game = CournotGame(**GAMES["cournot5x4"])
    oracle, fset = build_problem(game)
    F = oracle.exact_map()
    horizons = [500, 1000, 2000, 4000, 8000]
    rule = WindowRule(M=fset.diameter_bound, C=oracle.bound_C, r=-1.0)
    cfg = SolverConfig(Scheme.SA, rule, horizon=horizons[-1], r=-1.0, checkpoints=tuple(horizons)).validate()

    def job(p: int) -> list:
        record = run_path(cfg, oracle, fset, seed=p, path_id=p)
        by_k = {cp.k: cp.average for cp in record.checkpoints}
        return [weak_gap(F, fset, by_k[N]).value for N in horizons]

    gaps = np.array(map_paths(job, PATHS, progress=False)).mean(axis=0)
    fit = loglog_rate_fit(horizons, gaps)
    assert fit.slope <= -0.35
    assert fit.r_squared >= 0.9


def _r_ordering_table(seed: int):
    spec = parse_table_spec(
        "[table]\n"
        'preset = "table_r_pm1"\n'
        "lambdas = [0.0, 0.1, 0.2]\n"
        "horizons = [2000]\n"
        f"paths = {PATHS}\n"
        f"seed = {seed}\n"
    )
    return averaging_table(spec, progress=False)


def test_negative_r_beats_positive_r():
    frame = _r_ordering_table(seed=0)
    neg, pos = frame[column_label(2000, -1.0)], frame[column_label(2000, 1.0)]
    assert np.all(neg.to_numpy() < pos.to_numpy())
    assert pos.iloc[0] / neg.iloc[0] >= 10.0

    wins = 0
    for rep in range(10):
        first = _r_ordering_table(seed=1000 * (rep + 1)).iloc[0]
        wins += int(first[column_label(2000, -1.0)] < first[column_label(2000, 1.0)])
    assert wins >= 9


def _settings_spec(settings, seed):
    names = ", ".join(f'"{s}"' for s in settings)
    return parse_table_spec(
        "[table]\n"
        'preset = "rssa_settings"\n'
        f"settings = [{names}]\n"
        f"paths = {PATHS}\n"
        f"seed = {seed}\n"
    )


def test_rssa_first_setting_ballpark():
    frame = rssa_settings_table(_settings_spec(["S1"], seed=0), progress=False)
    assert 1e-4 <= frame.loc[0, "mean"] <= 1e-1


def test_almost_sure_setting_varies_less_than_mean_square_setting():
    passes = 0
    for rep in range(5):
        frame = rssa_settings_table(_settings_spec(["S10", "S11"], seed=100 * rep), progress=False)
        std = dict(zip(frame["setting"], frame["std"]))
        passes += int(std["S11"] < std["S10"])
    assert passes >= 4


def test_tikhonov_ratio_stays_bounded():
    ticks = list(range(100, 2001, 100))
    cfg = parse_run_config(
        '[schedule]\nsetting = "S1"\n'
        f'[solver]\nscheme = "RSSA"\ntikhonov_ticks = {ticks}\n'
        f'[run]\nhorizon = 2001\npaths = {PATHS}\ncheckpoints = [2001]\ngap = "strong"\n'
    )
    result = run_experiment(cfg, progress=False)
    ratios = np.array([s.ratio for s in result.tikhonov])
    assert ratios.size == len(ticks)
    assert ratios.max() / np.median(ratios) <= 1e2

# tests/test_schedules.py
import math

import numpy as np
import pytest

from app.errors import InvalidArgumentError
from app.schedules import (
    PowerLawTriple,
    WindowRule,
    feasible_region_grid,
    rate_preset,
    threshold_k1,
    validate_as,
    validate_averaging,
    validate_ms,
    verdict_report,
    window_start,
    window_stepsize,
)
from app.settings_catalog import SETTINGS

EXAMPLE = (9 / 16, 2 / 16, 3 / 16)


# ---------- sequences ----------
def test_power_law_values():
    assert PowerLawTriple(1.0, 0.5).eval(3)[0] == pytest.approx(0.5)
    t = PowerLawTriple(2.0, 0.7, 0.3, 0.2, 0.1, 0.4)
    assert t.eval(0) == (2.0, 0.3, 0.1)


def test_stabilized_offset():
    t = PowerLawTriple.stabilized(1.0, 0.501, 1e-4, 0.099, 1e-2, 0.2, 4000)
    assert t.offset == pytest.approx(400.0)
    assert t.eval(0)[0] == pytest.approx(401.0 ** -0.501)
    gam, eta, eps = t.eval_many(np.arange(5))
    assert np.allclose(gam, [t.eval(k)[0] for k in range(5)])


def test_negative_index_rejected():
    with pytest.raises(InvalidArgumentError):
        PowerLawTriple(1.0, 0.5).eval(-1)


def test_window_stepsize():
    assert window_stepsize(1.0, 1.0, -1.0, 0) == pytest.approx(2.0 * math.sqrt(2.0))
    assert window_stepsize(3.0, 2.0, 1.0, 0) == pytest.approx(3.0)
    g0 = window_stepsize(1.0, 1.0, -1.0, 0)
    assert window_stepsize(1.0, 1.0, -1.0, 8) == pytest.approx(g0 / 3.0)
    rule = WindowRule(M=1.0, C=1.0, r=1.0)
    assert rule.eval(3) == (pytest.approx(1.0), 0.0, 0.0)


@pytest.mark.parametrize("lam, N, expected", [
    (0.55, 100, 55), (0.1, 30, 3), (0.55, 180, 99), (0.3, 400, 120),
    (1.0, 77, 77), (0.0, 77, 0), (0.5, 101, 51),
])
def test_window_start_uses_decimal_lambda(lam, N, expected):
    assert window_start(lam, N) == expected


def test_window_start_domain():
    with pytest.raises(InvalidArgumentError):
        window_start(1.5, 10)
    with pytest.raises(InvalidArgumentError):
        window_start(0.5, -1)


# ---------- validators ----------
@pytest.mark.parametrize("name", [f"S{i}" for i in range(1, 10)])
def test_settings_one_to_nine_pass_both(name):
    assert validate_as(SETTINGS[name]).holds
    assert validate_ms(SETTINGS[name]).holds


def test_setting_ten_is_mean_square_only():
    v = validate_as(SETTINGS["S10"])
    assert not v.holds
    assert "a > 0.5" in [p.name for p in v.violated_conditions]
    assert validate_ms(SETTINGS["S10"]).holds


def test_setting_eleven_is_almost_sure_only():
    assert validate_as(SETTINGS["S11"]).holds
    v = validate_ms(SETTINGS["S11"])
    assert not v.holds
    assert [p.name for p in v.violated_conditions] == ["a + b <= 2/3 (1 + c)"]


def test_example_triple_with_least_norm():
    v = validate_as(EXAMPLE)
    assert v.holds
    assert v.reports["least_norm"]


def test_zero_exponents_fail_positivity():
    v = validate_ms((0.0, 0.0, 0.0))
    assert not v.holds
    assert {"a > 0", "b > 0", "c > 0"} <= {p.name for p in v.violated_conditions}


def test_binding_condition_reported():
    # a + b = 2/3 (1 + c) exactly: non-strict, holds and binds
    v = validate_ms((0.5, 0.5, 0.5))
    cond = next(p for p in v.checks if p.relation == "<=")
    assert cond.holds and cond.binding


def test_averaging_conditions():
    assert validate_averaging(EXAMPLE, 1.0).holds
    assert not validate_averaging(EXAMPLE, 2.0).holds
    assert not validate_averaging((0.6, 0.133, 0.099), -1.0).holds


def test_verdict_report_keys_and_k1():
    # ratio (k+1)^-0.6 against 0.5 (2!!/3!!)^2 = 2/9
    t = PowerLawTriple(1.0, 0.9, 1.0, 0.1, 1.0, 0.1)
    report = verdict_report(t, r=1.0, C=1.0, n=3)
    assert set(report) == {"as", "ms", "avg", "least_norm"}
    assert report["as"].info["K1"] == 12


# ---------- presets ----------
def test_rate_preset_example():
    a, b, c, r_max = rate_preset(0.1, 0.01)
    assert a == pytest.approx(0.77)
    assert b == pytest.approx(1 / 6 - 0.1)
    assert c == pytest.approx(1 / 6)
    assert r_max == pytest.approx(0.23 / 0.77)
    assert b < c
    assert validate_averaging((a, b, c), r_max).holds


def test_rate_preset_rejects_large_delta_prime():
    with pytest.raises(InvalidArgumentError):
        rate_preset(0.1, 0.05)
    with pytest.raises(InvalidArgumentError):
        rate_preset(0.2, 0.01)


def test_rate_preset_inverse_in_verdict_info():
    a, b, c, r_max = rate_preset(0.1, 0.01)
    info = validate_averaging((a, b, c), r_max).info
    assert info["delta"] == pytest.approx(0.1)
    assert info["delta_p"] == pytest.approx(0.01)
    assert info["B1"] is None and info["B2"] is None
    assert validate_as((a, b, c)).info["delta_p"] == pytest.approx(0.01)
    assert validate_averaging(EXAMPLE, 1.0).info["delta"] is None


def test_random_admissible_presets_pass_both_checks():
    rng = np.random.default_rng(616)
    for _ in range(100):
        delta = rng.uniform(0.01, 1.0 / 6.0 - 0.01)
        delta_p = rng.uniform(0.05, 0.95) * min(delta, (1.0 - 6.0 * delta) / 9.0)
        a, b, c, r_max = rate_preset(delta, delta_p)
        assert validate_as((a, b, c)).holds
        assert validate_averaging((a, b, c), r_max).holds
        assert a + 3 * b == pytest.approx(1.0 - 3.0 * delta_p)
        assert a - b - 2 * c == pytest.approx(4.0 * delta - 3.0 * delta_p)


def test_threshold_k1_is_smallest():
    t = PowerLawTriple(1.0, 0.6, 0.5, 0.1, 0.5, 0.1)
    k1 = threshold_k1(t, C=1.0, n=1)
    # n = 1: limit = 0.5 (1 / 1)^2
    ratio = lambda k: t.eval(k)[0] / (t.eval(k)[1] * t.eval(k)[2] ** 2)
    assert ratio(k1) <= 0.5
    assert k1 == 0 or ratio(k1 - 1) > 0.5


def test_threshold_k1_undefined_without_regularization():
    assert threshold_k1(PowerLawTriple(1.0, 0.6), C=1.0, n=3) is None


def _block_sum(values_of, K):
    return float(values_of(np.arange(K, 2 * K)).sum())


@pytest.mark.parametrize("name", sorted(SETTINGS))
def test_setting_sequences_on_finite_horizons(name):
    a, b, c = SETTINGS[name]
    t = PowerLawTriple.stabilized(1.0, a, 1e-4, b, 1e-2, c, 4000)

    def gamma_eta(ks):
        g, e, _ = t.eval_many(ks)
        return g * e

    def gamma_sq(ks):
        return t.eval_many(ks)[0] ** 2

    # sum gamma eta diverges: block sums grow
    assert _block_sum(gamma_eta, 10 ** 4) < _block_sum(gamma_eta, 10 ** 6)
    if a > 0.5:
        # sum gamma^2 converges: block sums shrink
        assert _block_sum(gamma_sq, 10 ** 6) < _block_sum(gamma_sq, 10 ** 4)
    g, e, _ = t.eval_many(np.array([1e3, 1e4, 1e5, 1e6]))
    assert np.all(np.diff(g / e) < 0)


# ---------- regions ----------
def test_region_grid_small_resolution():
    grid = feasible_region_grid(2)
    assert grid.cells == 8
    assert grid.as_holds.dtype == bool
    assert np.allclose(grid.axis, [0.25, 0.75])


def test_region_contains_reads_the_grid():
    grid_as = feasible_region_grid(50, "as")
    grid_ms = feasible_region_grid(50, "ms")
    assert grid_as.contains(0.8, 0.05, 0.1) and not grid_ms.contains(0.8, 0.05, 0.1)
    assert grid_ms.contains(0.45, 0.05, 0.1) and not grid_as.contains(0.45, 0.05, 0.1)
    assert grid_as.contains(0.8, 0.05, 0.1, which="as") and not grid_as.contains(0.8, 0.05, 0.1, which="ms")
    assert feasible_region_grid(100).contains(*EXAMPLE)
    assert not grid_as.contains(1.2, 0.05, 0.1)
    assert not grid_ms.contains(0.45, -0.05, 0.1)


def test_region_grid_agrees_with_validators():
    grid = feasible_region_grid(7)
    for i, a in enumerate(grid.axis):
        for j, b in enumerate(grid.axis):
            for k, c in enumerate(grid.axis):
                assert grid.as_holds[i, j, k] == validate_as((a, b, c)).holds
                assert grid.ms_holds[i, j, k] == validate_ms((a, b, c)).holds
                assert grid.contains(a, b, c, "as") == grid.as_holds[i, j, k]
                assert grid.contains(a, b, c, "ms") == grid.ms_holds[i, j, k]


def test_region_csv_layout():
    lines = feasible_region_grid(2).to_csv().splitlines()
    assert lines[0] == "a,b,c,as_holds,ms_holds"
    assert len(lines) == 9

# app/settings_catalog.py
# Static presets referenced by name from experiment files.

GAMES = {
    "cournot5x4": {
        "firms": 5, "nodes": 4, "sigma": 1.0,
        "a_lb": 49.5, "a_ub": 50.5, "b": 0.05, "c": 1.5, "cap": 300.0, "d": 0.0,
    },
    # firm-count sensitivity study
    "cournot15x4": {
        "firms": 15, "nodes": 4, "sigma": 1.0,
        "a_lb": 49.5, "a_ub": 50.5, "b": 0.05, "c": 1.5, "cap": 300.0, "d": 0.0,
    },
}

# every g_ij and s_ij set to this value before projection
STARTS = {
    "origin": 0.0,
    "start150": 150.0,
}

# RSSA settings S1..S11: exponents (a, b, c); gamma0, eta0, eps0 shared
SETTING_SCALES = {"gamma0": 1.0, "eta0": 1e-4, "eps0": 1e-2}

SETTINGS = {
    "S1":  (0.501, 0.099, 0.200),
    "S2":  (0.600, 0.099, 0.200),
    "S3":  (0.700, 0.099, 0.200),
    "S4":  (0.501, 0.100, 0.167),
    "S5":  (0.501, 0.130, 0.167),
    "S6":  (0.501, 0.166, 0.167),
    "S7":  (0.501, 0.166, 0.130),
    "S8":  (0.501, 0.166, 0.100),
    "S9":  (0.501, 0.166, 0.167),
    "S10": (0.401, 0.200, 0.100),
    "S11": (0.600, 0.133, 0.099),
}

# reported mean final-iterate weak gap for S1 at N = 4000, 50 paths
S1_REPORTED_MEAN_GAP = 6.12e-3

_LAMBDAS = [round(0.1 * i, 1) for i in range(11)]
_HORIZONS = [1000, 2000, 3000, 4000]

TABLES = {
    "table_r_pm1": {
        "which": "averaging_r", "game": "cournot5x4", "start": "origin",
        "r_values": [-1.0, 1.0], "lambdas": _LAMBDAS, "horizons": _HORIZONS, "paths": 50,
    },
    "table_firms15": {
        "which": "averaging_r", "game": "cournot15x4", "start": "origin",
        "r_values": [-1.0, 1.0], "lambdas": _LAMBDAS, "horizons": _HORIZONS, "paths": 50,
    },
    "table_start150": {
        "which": "averaging_r", "game": "cournot5x4", "start": "start150",
        "r_values": [-1.0, 1.0], "lambdas": _LAMBDAS, "horizons": _HORIZONS, "paths": 50,
    },
    "table_r_pm_half": {
        "which": "averaging_r", "game": "cournot5x4", "start": "origin",
        "r_values": [-0.5, 0.5], "lambdas": _LAMBDAS, "horizons": _HORIZONS, "paths": 50,
    },
    "rssa_settings": {
        "which": "rssa_settings", "game": "cournot5x4", "start": "origin",
        "settings": list(SETTINGS), "horizon": 4000, "paths": 50,
    },
}

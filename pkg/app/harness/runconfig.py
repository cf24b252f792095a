# app/harness/runconfig.py
from __future__ import annotations
import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.errors import ConfigError, InvalidArgumentError
from app.geometry import FeasibleSet
from app.oracles import CournotGame, CournotOracle
from app.schedules import PowerLawTriple, WindowRule
from app.settings_catalog import GAMES, SETTING_SCALES, SETTINGS, STARTS, TABLES
from app.solvers import Scheme, SolverConfig

logger = logging.getLogger(__name__)

Scalarish = Union[float, List[float]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------- sections ----------------
class GameSection(_Section):
    preset: Optional[str] = "cournot5x4"
    firms: Optional[int] = Field(default=None, ge=1)
    nodes: Optional[int] = Field(default=None, ge=1)
    sigma: Optional[float] = Field(default=None, ge=1.0)
    a_lb: Optional[Scalarish] = None
    a_ub: Optional[Scalarish] = None
    b: Optional[Scalarish] = None
    c: Optional[Scalarish] = None
    cap: Optional[Union[float, List[float], List[List[float]]]] = None
    d: Optional[Scalarish] = None

    @model_validator(mode="after")
    def _known_preset(self):
        if self.preset is not None and self.preset not in GAMES:
            raise ValueError(f"unknown game preset {self.preset!r}; known: {sorted(GAMES)}")
        return self

    def build(self) -> CournotGame:
        params = dict(GAMES[self.preset]) if self.preset else {}
        params.update(self.model_dump(exclude_none=True, exclude={"preset"}))
        missing = [k for k in ("firms", "nodes", "sigma", "a_lb", "a_ub", "b", "c", "cap") if k not in params]
        if missing:
            raise ConfigError(f"[game] is missing {missing} and names no preset")
        try:
            return CournotGame(**params)
        except (InvalidArgumentError, ValueError) as exc:
            raise ConfigError(f"[game] {exc}") from exc


class ScheduleSection(_Section):
    kind: Literal["power", "window"] = "power"
    setting: Optional[str] = None
    gamma0: Optional[float] = Field(default=None, gt=0)
    a: Optional[float] = None
    eta0: Optional[float] = Field(default=None, ge=0)
    b: Optional[float] = None
    eps0: Optional[float] = Field(default=None, ge=0)
    c: Optional[float] = None
    stabilized: bool = True
    offset: Optional[float] = Field(default=None, ge=0)
    M: Optional[float] = Field(default=None, gt=0)
    C: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _known_setting(self):
        if self.setting is not None and self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; known: {list(SETTINGS)}")
        return self

    def triple(self, horizon: int) -> PowerLawTriple:
        params: Dict[str, float] = {}
        if self.setting is not None:
            a, b, c = SETTINGS[self.setting]
            params.update(SETTING_SCALES, a=a, b=b, c=c)
        params.update(self.model_dump(include={"gamma0", "a", "eta0", "b", "eps0", "c"}, exclude_none=True))
        params.setdefault("eta0", 0.0)
        params.setdefault("eps0", 0.0)
        params.setdefault("b", 0.0)
        params.setdefault("c", 0.0)
        if "gamma0" not in params or "a" not in params:
            raise ConfigError("[schedule] needs gamma0 and a (or a setting name)")
        offset = self.offset if self.offset is not None else (0.1 * horizon if self.stabilized else 0.0)
        try:
            return PowerLawTriple(offset=offset, **params)
        except InvalidArgumentError as exc:
            raise ConfigError(f"[schedule] {exc}") from exc

    def build(self, horizon: int, r: float, oracle: CournotOracle, fset: FeasibleSet):
        if self.kind == "power":
            return self.triple(horizon)
        M = self.M if self.M is not None else fset.diameter_bound
        C = self.C if self.C is not None else oracle.bound_C
        return WindowRule(M=M, C=C, r=r)


class SolverSection(_Section):
    scheme: Scheme = Scheme.RSSA
    r: float = 1.0
    window_lambda: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    tikhonov_ticks: List[int] = Field(default_factory=list)
    tikhonov_tol: float = Field(default=1e-8, gt=0)
    smoothing_draws: int = Field(default=256, ge=1)


class RunSection(_Section):
    horizon: int = Field(default=4000, ge=0)
    paths: int = Field(default=50, ge=1)
    seed: int = Field(default=0, ge=0)
    checkpoint_every: Optional[int] = Field(default=None, ge=1)
    checkpoints: Optional[List[int]] = None
    start: Union[str, float, List[float]] = "origin"
    gap: Literal["weak", "strong", "both"] = "weak"
    restarts: int = Field(default=16, ge=0)
    gap_tol: float = Field(default=1e-8, gt=0)

    @model_validator(mode="after")
    def _known_start(self):
        if isinstance(self.start, str) and self.start not in STARTS:
            raise ValueError(f"unknown start {self.start!r}; known: {sorted(STARTS)}")
        return self

    def ticks(self) -> List[int]:
        N = self.horizon
        if self.checkpoints is not None:
            return sorted(set(self.checkpoints) | {N})
        every = self.checkpoint_every or max(1, N // 40)
        return sorted(set(range(0, N + 1, every)) | {N})


class RunConfig(_Section):
    game: GameSection = Field(default_factory=GameSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    run: RunSection = Field(default_factory=RunSection)

    def start_point(self, game: CournotGame) -> np.ndarray:
        return start_vector(self.run.start, game)

    def solver_config(self, game: CournotGame, oracle: CournotOracle, fset: FeasibleSet) -> SolverConfig:
        schedule = self.schedule.build(self.run.horizon, self.solver.r, oracle, fset)
        try:
            return SolverConfig(
                scheme=self.solver.scheme,
                schedule=schedule,
                horizon=self.run.horizon,
                r=self.solver.r,
                window_lambda=self.solver.window_lambda,
                checkpoints=tuple(self.run.ticks()),
                start=self.start_point(game),
                tikhonov_ticks=tuple(self.solver.tikhonov_ticks),
            ).validate()
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc


def start_vector(start: Union[str, float, List[float]], game: CournotGame) -> np.ndarray:
    if isinstance(start, str):
        return np.full(game.dimension, STARTS[start])
    if isinstance(start, (int, float)):
        return np.full(game.dimension, float(start))
    x = np.asarray(start, dtype=float)
    if x.shape != (game.dimension,):
        raise ConfigError(f"start has {x.size} entries, the game needs {game.dimension}")
    return x


# ---------------- table specs ----------------
class TableSpec(_Section):
    preset: Optional[str] = None
    which: Literal["averaging_r", "rssa_settings"] = "averaging_r"
    game: str = "cournot5x4"
    start: Union[str, float] = "origin"
    r_values: List[float] = Field(default_factory=lambda: [-1.0, 1.0])
    lambdas: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    horizons: List[int] = Field(default_factory=lambda: [1000, 2000, 3000, 4000])
    settings: List[str] = Field(default_factory=lambda: list(SETTINGS))
    horizon: int = Field(default=4000, ge=1)
    paths: int = Field(default=50, ge=1)
    seed: int = Field(default=0, ge=0)
    restarts: int = Field(default=16, ge=0)
    gap_tol: float = Field(default=1e-8, gt=0)
    M: Optional[float] = Field(default=None, gt=0)
    C: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.game not in GAMES:
            raise ValueError(f"unknown game preset {self.game!r}")
        if not self.r_values or not self.lambdas or not self.horizons or not self.settings:
            raise ValueError("table grids must be non-empty")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ValueError("lambdas must lie in [0, 1]")
        if any(n < 1 for n in self.horizons):
            raise ValueError("horizons must be positive")
        unknown = [s for s in self.settings if s not in SETTINGS]
        if unknown:
            raise ValueError(f"unknown settings {unknown}")
        return self


class TableFile(_Section):
    table: TableSpec = Field(default_factory=TableSpec)


# ---------------- parsing ----------------
_TOML_POS = re.compile(r"line (\d+), column (\d+)")


def _parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            m = _TOML_POS.search(str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError(f"malformed config: {getattr(exc, 'msg', exc)}", line=line, column=col) from exc


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def parse_run_config(text: str) -> RunConfig:
    data = _parse_toml(text)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_run_config(text)


def parse_table_spec(text: str) -> TableSpec:
    data = _parse_toml(text)
    preset = (data.get("table") or {}).get("preset")
    if preset is not None:
        if preset not in TABLES:
            raise ConfigError(f"unknown table preset {preset!r}; known: {sorted(TABLES)}")
        data = {"table": {**TABLES[preset], **data["table"]}}
    try:
        return TableFile.model_validate(data).table
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from exc


def load_table_spec(path: Union[str, Path]) -> TableSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_table_spec(text)


def dump_effective_config(cfg: RunConfig) -> str:
    """TOML echo of the fully-defaulted config; parse_run_config reads it back."""
    return tomli_w.dumps(cfg.model_dump(mode="json", exclude_none=True))

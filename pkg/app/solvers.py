# app/solvers.py
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import (
    ConvergenceFailureError,
    InvalidArgumentError,
    PathError,
    PoisonedStateError,
    SviLabError,
)
from app.geometry import BallSampler, FeasibleSet
from app.oracles import ExactMap, StochasticMapOracle, as_exact_map, smoothed_map
from app.schedules import PowerLawTriple, WindowRule, window_start

logger = logging.getLogger(__name__)

Schedule = Union[PowerLawTriple, WindowRule]

DEFAULT_MAX_ITER = 10 ** 6
# extragradient needs step < 1/L; both solves step at this fraction of 1/L (1/(L + eta) with Tikhonov)
STEP_SCALE = 0.9


class Scheme(str, Enum):
    SA = "SA"
    RSA = "RSA"
    RSSA = "RSSA"


# ---------- configuration ----------
@dataclass
class SolverConfig:
    scheme: Scheme
    schedule: Schedule
    horizon: int
    r: float = 1.0
    window_lambda: Optional[float] = None
    checkpoints: Tuple[int, ...] = ()
    start: Optional[np.ndarray] = None
    tikhonov_ticks: Tuple[int, ...] = ()

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        self.checkpoints = tuple(sorted(set(int(k) for k in self.checkpoints)))
        self.tikhonov_ticks = tuple(sorted(set(int(k) for k in self.tikhonov_ticks)))

    @property
    def eta0(self) -> float:
        return getattr(self.schedule, "eta0", 0.0)

    @property
    def eps0(self) -> float:
        return getattr(self.schedule, "eps0", 0.0)

    @property
    def window_start(self) -> Optional[int]:
        if self.window_lambda is None:
            return None
        return window_start(self.window_lambda, self.horizon)

    def validate(self) -> "SolverConfig":
        """Check the scheme/schedule consistency rules; returns self."""
        if self.horizon < 0:
            raise InvalidArgumentError(f"horizon must be nonnegative, got {self.horizon}")
        eta0, eps0 = self.eta0, self.eps0
        if self.scheme is Scheme.SA and (eta0 != 0 or eps0 != 0):
            raise InvalidArgumentError("SA requires eta0 = eps0 = 0")
        if self.scheme is Scheme.RSA and not (eta0 > 0 and eps0 == 0):
            raise InvalidArgumentError("RSA requires eta0 > 0 and eps0 = 0")
        if self.scheme is Scheme.RSSA and not (eta0 > 0 and eps0 > 0):
            raise InvalidArgumentError("RSSA requires eta0 > 0 and eps0 > 0")
        if self.window_lambda is not None and not 0.0 <= self.window_lambda <= 1.0:
            raise InvalidArgumentError(f"window lambda must lie in [0, 1], got {self.window_lambda}")
        bad = [k for k in self.checkpoints if k < 0 or k > self.horizon]
        if bad:
            raise InvalidArgumentError(f"checkpoints outside [0, {self.horizon}]: {bad}")
        bad = [k for k in self.tikhonov_ticks if k < 0 or k >= self.horizon]
        if bad:
            raise InvalidArgumentError(f"tikhonov ticks outside [0, {self.horizon}): {bad}")
        if self.tikhonov_ticks and self.scheme is Scheme.SA:
            raise InvalidArgumentError("the Tikhonov trajectory needs eta0 > 0")
        return self


@dataclass
class IterateState:
    k: int
    x: np.ndarray
    rng: np.random.Generator


# ---------- one step ----------
def rssa_step(state: IterateState, oracle: StochasticMapOracle, fset: FeasibleSet,
              gamma: float, eta: float, eps: float) -> IterateState:
    """x_{k+1} = P_X(x_k - gamma (Phi(x_k + z_k, xi_k) + eta x_k)), z_k uniform in B(0, eps)."""
    if not gamma > 0:
        raise InvalidArgumentError(f"stepsize must be positive, got {gamma}")
    if eta < 0 or eps < 0:
        raise InvalidArgumentError("eta and eps must be nonnegative")
    x = state.x
    query = x + BallSampler(x.shape[0], eps).sample(state.rng) if eps > 0 else x
    phi = oracle.sample(query, state.rng)
    if not np.all(np.isfinite(phi)):
        raise PoisonedStateError("oracle returned a non-finite sample", iteration=state.k,
                                 values={"x": x.copy(), "query": np.array(query), "sample": np.array(phi)})
    x_next = fset.project(x - gamma * (phi + eta * x))
    if not np.all(np.isfinite(x_next)):
        raise PoisonedStateError("iterate became non-finite", iteration=state.k, values={"x": x.copy()})
    state.x = x_next
    state.k += 1
    return state


# ---------- averaging ----------
def _kahan_add(total, comp, value):
    y = value - comp
    t = total + y
    return t, (t - total) - y


@dataclass
class AveragingState:
    """Running sums of gamma_t^r x_t with gamma_ref^r factored out."""
    r: float
    gamma_ref: Optional[float] = None
    weight_sum: float = 0.0
    weight_comp: float = 0.0
    point_sum: Optional[np.ndarray] = None
    point_comp: Optional[np.ndarray] = None
    count: int = 0

    def weight(self, gamma: float) -> float:
        return (gamma / self.gamma_ref) ** self.r

    @property
    def average(self) -> np.ndarray:
        if self.count == 0:
            raise InvalidArgumentError("no iterates accumulated yet")
        return self.point_sum / self.weight_sum


def accumulate(avg: AveragingState, gamma: float, x: np.ndarray, r: Optional[float] = None) -> AveragingState:
    if not gamma > 0:
        raise InvalidArgumentError(f"stepsize must be positive, got {gamma}")
    if r is not None and r != avg.r:
        raise InvalidArgumentError(f"accumulator holds r={avg.r}, got r={r}")
    if avg.gamma_ref is None:
        avg.gamma_ref = gamma
    if avg.point_sum is None:
        avg.point_sum = np.zeros_like(x, dtype=float)
        avg.point_comp = np.zeros_like(x, dtype=float)
    w = avg.weight(gamma)
    avg.weight_sum, avg.weight_comp = _kahan_add(avg.weight_sum, avg.weight_comp, w)
    avg.point_sum, avg.point_comp = _kahan_add(avg.point_sum, avg.point_comp, w * x)
    avg.count += 1
    return avg


@dataclass
class WindowBuffer:
    """Stores (gamma_t, x_t) for t >= start; earlier iterates are dropped."""
    start: int = 0
    gamma_ref: Optional[float] = None
    ticks: List[int] = field(default_factory=list)
    gammas: List[float] = field(default_factory=list)
    points: List[np.ndarray] = field(default_factory=list)

    def push(self, k: int, gamma: float, x: np.ndarray) -> None:
        if self.gamma_ref is None:
            # matches AveragingState when the buffer starts at t = 0
            self.gamma_ref = gamma
        if k < self.start:
            return
        self.ticks.append(k)
        self.gammas.append(gamma)
        self.points.append(np.array(x, dtype=float))


def window_average(buffer: WindowBuffer, ell: int, k: int, r: float) -> np.ndarray:
    """sum_{t=ell}^{k} gamma_t^r x_t / sum_{t=ell}^{k} gamma_t^r."""
    if ell > k:
        raise InvalidArgumentError(f"empty averaging window: ell={ell} > k={k}")
    if ell < buffer.start:
        raise InvalidArgumentError(f"iterates before t={buffer.start} were not buffered")
    idx = [i for i, t in enumerate(buffer.ticks) if ell <= t <= k]
    if not idx or buffer.ticks[idx[0]] != ell or buffer.ticks[idx[-1]] != k:
        raise InvalidArgumentError(f"window [{ell}, {k}] is not covered by the buffer")
    if ell == k:
        return buffer.points[idx[0]].copy()
    avg = AveragingState(r=r, gamma_ref=buffer.gamma_ref)
    for i in idx:
        accumulate(avg, buffer.gammas[i], buffer.points[i])
    return avg.average


class AveragingBank:
    """
    Many weighted averages of one trajectory at once. Cell j averages the
    iterates t in [starts[j], stops[j]] with weights gamma_t^rs[j], using the
    same compensated update as AveragingState.
    """

    def __init__(self, starts: Sequence[int], stops: Sequence[int], rs: Sequence[float], dimension: int):
        self.starts = np.asarray(starts, dtype=int)
        self.stops = np.asarray(stops, dtype=int)
        self.rs = np.asarray(rs, dtype=float)
        if not (self.starts.shape == self.stops.shape == self.rs.shape):
            raise InvalidArgumentError("starts, stops and rs must have equal length")
        if np.any(self.starts > self.stops) or np.any(self.starts < 0):
            raise InvalidArgumentError("every cell needs 0 <= start <= stop")
        m = self.starts.shape[0]
        self.gamma_ref: Optional[float] = None
        self.weight_sum = np.zeros(m)
        self.weight_comp = np.zeros(m)
        self.point_sum = np.zeros((m, dimension))
        self.point_comp = np.zeros((m, dimension))
        self._single: Dict[int, np.ndarray] = {}

    @property
    def horizon(self) -> int:
        return int(self.stops.max()) if self.stops.size else 0

    def update(self, k: int, gamma: float, x: np.ndarray) -> None:
        if self.gamma_ref is None:
            self.gamma_ref = gamma
        active = np.flatnonzero((self.starts <= k) & (k <= self.stops))
        if active.size == 0:
            return
        w = (gamma / self.gamma_ref) ** self.rs[active]
        self.weight_sum[active], self.weight_comp[active] = _kahan_add(
            self.weight_sum[active], self.weight_comp[active], w)
        self.point_sum[active], self.point_comp[active] = _kahan_add(
            self.point_sum[active], self.point_comp[active], w[:, None] * x[None, :])
        for j in active[self.starts[active] == self.stops[active]]:
            self._single[int(j)] = np.array(x, dtype=float)

    def averages(self) -> np.ndarray:
        out = self.point_sum / self.weight_sum[:, None]
        for j, x in self._single.items():
            out[j] = x
        return out


# ---------- Tikhonov trajectory and reference solution ----------
@dataclass
class TrajectoryPoint:
    k: int
    s: np.ndarray
    residual: float
    iterations: int = 0


def _natural_residual(fset: FeasibleSet, G, x: np.ndarray, step: float) -> float:
    return float(np.linalg.norm(x - fset.project(x - step * G(x))))


def _estimate_lipschitz(F: ExactMap, fset: FeasibleSet, pairs: int = 32) -> float:
    rng = np.random.default_rng(0)
    best = 0.0
    for _ in range(pairs):
        x, y = fset.sample_point(rng), fset.sample_point(rng)
        d = float(np.linalg.norm(x - y))
        if d > 0:
            best = max(best, float(np.linalg.norm(F(x) - F(y))) / d)
    logger.warning("no Lipschitz constant supplied; using sampled estimate %.4g", 2.0 * best)
    return 2.0 * best if best > 0 else 1.0


def extragradient(fset: FeasibleSet, G, step: float, tol: float, max_iter: int = DEFAULT_MAX_ITER,
                  x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float, int]:
    """
    Korpelevich extragradient for VI(X, G). Stops once the residual
    ||x - P_X(x - step G(x))|| certifies a unit-step residual below tol.
    """
    if not step > 0:
        raise InvalidArgumentError("extragradient step must be positive")
    x = fset.project(np.zeros(fset.dimension) if x0 is None else np.asarray(x0, dtype=float))
    threshold = tol * min(step, 1.0)
    res = math.inf
    for it in range(max_iter + 1):
        y = fset.project(x - step * G(x))
        res = float(np.linalg.norm(x - y))
        if not math.isfinite(res):
            raise PoisonedStateError("extragradient diverged", iteration=it)
        if res <= threshold:
            logger.debug("extragradient converged in %d iterations (residual %.3e)", it, res)
            return x, res, it
        if it == max_iter:
            break
        x = fset.project(x - step * G(y))
    raise ConvergenceFailureError("extragradient hit its iteration cap", last_residual=res, iterations=max_iter)


def tikhonov_solve(fset: FeasibleSet, target: Union[ExactMap, StochasticMapOracle], eta: float,
                   eps: float = 0.0, tol: float = 1e-8, *, k: int = 0, smoothing_draws: int = 256,
                   rng: Optional[np.random.Generator] = None, x0: Optional[np.ndarray] = None,
                   max_iter: int = DEFAULT_MAX_ITER) -> TrajectoryPoint:
    """
    s_k, the unique solution of VI(X, F_k + eta I). An oracle is smoothed with
    radius eps (frozen draws); an ExactMap is used as given.
    """
    if not eta > 0:
        raise InvalidArgumentError(f"Tikhonov weight must be positive, got {eta}")
    if isinstance(target, StochasticMapOracle):
        F = smoothed_map(target, eps, smoothing_draws, rng or np.random.default_rng(0))
    else:
        F = as_exact_map(target)
    L = F.lipschitz if F.lipschitz is not None else _estimate_lipschitz(F, fset)
    step = STEP_SCALE / (L + eta)

    def G(x: np.ndarray) -> np.ndarray:
        return F(x) + eta * x

    s, res, iters = extragradient(fset, G, step, tol, max_iter, x0)
    return TrajectoryPoint(k=k, s=s, residual=res, iterations=iters)


def reference_solution(fset: FeasibleSet, exact_map, tol: float = 1e-10,
                       max_iter: int = DEFAULT_MAX_ITER, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """High-precision x* of VI(X, F) by extragradient."""
    F = as_exact_map(exact_map)
    L = F.lipschitz if F.lipschitz is not None else _estimate_lipschitz(F, fset)
    x, res, iters = extragradient(fset, F, STEP_SCALE / L if L > 0 else 1.0, tol, max_iter, x0)
    logger.info("reference solution: residual %.3e after %d iterations", res, iters)
    return x


# ---------- sample paths ----------
@dataclass
class Checkpoint:
    k: int
    x: np.ndarray
    average: np.ndarray


@dataclass
class PathRecord:
    path_id: int
    seed: int
    checkpoints: List[Checkpoint] = field(default_factory=list)
    window_average: Optional[np.ndarray] = None
    window_start: Optional[int] = None
    successors: Dict[int, np.ndarray] = field(default_factory=dict)   # k -> x_{k+1}

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def to_rows(self) -> List[Tuple[int, int, str, float]]:
        """(path_id, k, metric_name, value) rows; vectors are spread over coordinates."""
        rows: List[Tuple[int, int, str, float]] = []
        for cp in self.checkpoints:
            rows.extend((self.path_id, cp.k, f"x[{i}]", float(v)) for i, v in enumerate(cp.x))
            rows.extend((self.path_id, cp.k, f"xbar[{i}]", float(v)) for i, v in enumerate(cp.average))
        if self.window_average is not None:
            k = self.final.k
            rows.extend((self.path_id, k, f"xwin[{i}]", float(v)) for i, v in enumerate(self.window_average))
        return rows


def _record_ticks(config: SolverConfig) -> List[int]:
    return sorted(set(config.checkpoints) | {config.horizon})


def run_path(config: SolverConfig, oracle: StochasticMapOracle, fset: FeasibleSet, seed: int,
             path_id: int = 0) -> PathRecord:
    """One seeded trajectory; a deterministic function of (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    start = np.zeros(fset.dimension) if config.start is None else np.asarray(config.start, dtype=float)
    state = IterateState(k=0, x=fset.project(start), rng=rng)
    avg = AveragingState(r=config.r)
    ell = config.window_start
    buffer = WindowBuffer(start=ell) if ell is not None else None
    ticks = set(_record_ticks(config))
    successors = set(config.tikhonov_ticks)
    record = PathRecord(path_id=path_id, seed=seed, window_start=ell)

    try:
        for k in range(config.horizon + 1):
            gamma, eta, eps = config.schedule.eval(k)
            accumulate(avg, gamma, state.x)
            if buffer is not None:
                buffer.push(k, gamma, state.x)
            if k in ticks:
                record.checkpoints.append(Checkpoint(k=k, x=state.x.copy(), average=avg.average))
            if k == config.horizon:
                break
            rssa_step(state, oracle, fset, gamma, eta, eps)
            if k in successors:
                record.successors[k] = state.x.copy()
        if buffer is not None:
            record.window_average = window_average(buffer, ell, config.horizon, config.r)
    except SviLabError as exc:
        raise PathError(path_id, exc) from exc
    return record


@dataclass
class TikhonovSample:
    k: int
    error: float          # mean over paths of ||x_{k+1} - s_k||^2
    scale: float          # gamma_k / (eta_k eps_k^2)

    @property
    def ratio(self) -> float:
        return self.error / self.scale


def trajectory_gap_series(records: Union[PathRecord, Iterable[PathRecord]], schedule: PowerLawTriple,
                          oracle: StochasticMapOracle, fset: FeasibleSet, tol: float = 1e-8,
                          smoothing_draws: int = 256) -> List[TikhonovSample]:
    """Pairs e_k = E||x_{k+1} - s_k||^2 with gamma_k/(eta_k eps_k^2) at every recorded k."""
    if isinstance(records, PathRecord):
        records = [records]
    records = list(records)
    if schedule.eta0 <= 0 or schedule.eps0 <= 0:
        raise InvalidArgumentError("the Tikhonov trajectory needs eta0 > 0 and eps0 > 0")
    ks = sorted(set().union(*(r.successors.keys() for r in records))) if records else []
    out: List[TikhonovSample] = []
    warm: Optional[np.ndarray] = None
    for k in ks:
        gamma, eta, eps = schedule.eval(k)
        # s_k is deterministic, so one solve serves every path
        point = tikhonov_solve(fset, oracle, eta, eps, tol, k=k, smoothing_draws=smoothing_draws,
                               rng=np.random.default_rng(k), x0=warm)
        warm = point.s
        errs = [float(np.sum((r.successors[k] - point.s) ** 2)) for r in records if k in r.successors]
        out.append(TikhonovSample(k=k, error=float(np.mean(errs)), scale=gamma / (eta * eps * eps)))
    return out

# app/metrics.py
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.errors import InvalidArgumentError
from app.geometry import FeasibleSet, linear_minimize
from app.oracles import ExactMap, as_exact_map
from app.schedules import window_start

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 16
DEFAULT_TOL = 1e-8
_ASCENT_MAX_ITER = 5000


# ---------- records ----------
@dataclass
class GapReport:
    value: float
    certificate: np.ndarray
    method: str            # "strong_lp" or "weak_multistart"
    restarts: int = 0
    tolerance: float = 0.0
    converged: bool = True

    def to_row(self) -> List:
        return [self.method, repr(float(self.value)), self.restarts, self.tolerance, int(self.converged)]


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float


# ---------- gap functions ----------
def strong_gap(exact_map, fset: FeasibleSet, x) -> GapReport:
    """sup_y F(x)'(x - y), an exact linear program over X."""
    F = as_exact_map(exact_map)
    x = np.asarray(x, dtype=float)
    c = np.asarray(F(x), dtype=float)
    y, val = linear_minimize(fset, c)
    return GapReport(value=float(c @ x - val), certificate=y, method="strong_lp")


def _jacobian_fd(F: ExactMap, y: np.ndarray) -> np.ndarray:
    h = 1e-6 * max(1.0, float(np.linalg.norm(y)))
    f0 = F(y)
    J = np.empty((f0.shape[0], y.shape[0]))
    for i in range(y.shape[0]):
        e = y.copy()
        e[i] += h
        J[:, i] = (F(e) - f0) / h
    return J


def _ascend(F: ExactMap, fset: FeasibleSet, x: np.ndarray, y: np.ndarray, tol: float,
            max_iter: int = _ASCENT_MAX_ITER) -> Tuple[np.ndarray, float, bool]:
    """Projected gradient ascent on phi(y) = F(y)'(x - y) with backtracking."""

    def phi(v: np.ndarray) -> float:
        return float(F(v) @ (x - v))

    def grad(v: np.ndarray) -> np.ndarray:
        J = F.jacobian(v) if F.jacobian is not None else _jacobian_fd(F, v)
        return J.T @ (x - v) - F(v)

    t = 1.0 / (2.0 * F.lipschitz) if F.lipschitz else 1.0
    val = phi(y)
    for _ in range(max_iter):
        g = grad(y)
        while True:
            y_new = fset.project(y + t * g)
            d = y_new - y
            val_new = phi(y_new)
            if val_new >= val + g @ d - (0.5 / t) * (d @ d) - 1e-15 * abs(val) or t < 1e-14:
                break
            t *= 0.5
        step_norm = float(np.linalg.norm(d)) / t
        if val_new >= val:
            y, val = y_new, val_new
        if step_norm <= tol:
            return y, val, True
        t *= 1.5
    return y, val, False


def weak_gap(exact_map, fset: FeasibleSet, x, restarts: int = DEFAULT_RESTARTS,
             tol: float = DEFAULT_TOL, seed: int = 0) -> GapReport:
    """
    G(x) = sup_y F(y)'(x - y) by multistart local ascent. Starts are x itself,
    the strong-gap certificate and `restarts` random feasible points; the
    random points are a fixed prefix-stable stream, so more restarts never
    lower the value. For monotone affine F the objective is concave and the
    deterministic starts suffice.
    """
    if restarts < 0:
        raise InvalidArgumentError("restarts must be nonnegative")
    F = as_exact_map(exact_map)
    x = np.asarray(x, dtype=float)
    starts = [fset.project(x)]
    if fset.linear_minimization:
        starts.append(strong_gap(F, fset, x).certificate)
    if not F.concave_gap:
        rng = np.random.default_rng(seed)
        starts.extend(fset.sample_point(rng) for _ in range(restarts))

    best_y, best_val, best_ok = starts[0], -math.inf, False
    for y0 in starts:
        y, val, ok = _ascend(F, fset, x, y0, tol)
        if val > best_val:
            best_y, best_val, best_ok = y, val, ok
    if not best_ok:
        logger.warning("weak-gap ascent stopped before stationarity (value %.6g)", best_val)
    return GapReport(value=float(best_val), certificate=best_y, method="weak_multistart",
                     restarts=len(starts), tolerance=tol, converged=best_ok)


def dist_to_solution(x, x_star) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x_star, dtype=float)))


def loglog_rate_fit(Ns: Sequence[float], gaps: Sequence[float]) -> RateFit:
    Ns = np.asarray(Ns, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if Ns.shape != gaps.shape or Ns.size < 3:
        raise InvalidArgumentError("a rate fit needs at least three (N, gap) pairs")
    if np.any(np.diff(Ns) <= 0):
        raise InvalidArgumentError("horizons must be strictly increasing")
    if np.any(gaps <= 0):
        raise InvalidArgumentError("gap values must be positive for a log-log fit")
    fit = stats.linregress(np.log(Ns), np.log(gaps))
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept),
                   r_squared=float(min(1.0, fit.rvalue ** 2)))


# ---------- bounds ----------
def gap_upper_limit(C: float, M: float) -> float:
    return 2.0 * C * M


def h_ratio(lam: float) -> float:
    """UB1 / UB2 in the large-N limit."""
    if not 0.0 < lam < 1.0:
        raise InvalidArgumentError(f"lambda must lie in (0, 1), got {lam}")
    return (1.0 + 1.0 / lam) * (1.0 + lam + math.sqrt(lam)) / (1.5 * math.sqrt(2.0) * (3.0 - lam + 0.5))


def ub_bounds(M: float, C: float, lam: float, N: int, ell: Optional[int] = None) -> Tuple[float, float, float]:
    """(UB1, UB2, h(lambda)) for window averaging over [ceil(lambda N), N]."""
    if not 0.0 < lam < 1.0:
        raise InvalidArgumentError(f"lambda must lie in (0, 1), got {lam}")
    if not N > 1.0 / (1.0 - lam):
        raise InvalidArgumentError(f"need N > 1/(1 - lambda), got N={N}")
    expected = window_start(lam, N)
    if ell is None:
        ell = expected
    elif ell != expected:
        raise InvalidArgumentError(f"ell must equal ceil(lambda N) = {expected}, got {ell}")
    ub1 = M * C * (1.0 + N / ell) / (math.sqrt(N + 1.0) - math.sqrt(ell + 1.0))
    ub2 = M * C * 3.0 * math.sqrt(2.0) * (3.0 * N - ell + 1.0) / (2.0 * (N ** 1.5 - ell ** 1.5))
    return ub1, ub2, h_ratio(lam)


def window_gap_bound(M: float, C: float, stepsizes: Sequence[float], ell: int, N: int, r: float) -> float:
    """
    Expected gap bound of the window average over [ell, N-1]:
    (4M^2 (gamma_ell^(r-1) + gamma_(N-1)^(r-1) 1_r) + C^2 sum gamma^(r+1)) / sum gamma^r,
    with 1_r = 1 iff r < 1.
    """
    g = np.asarray(stepsizes, dtype=float)
    if not 0 <= ell < N <= g.shape[0]:
        raise InvalidArgumentError(f"need 0 <= ell < N <= len(stepsizes), got ell={ell}, N={N}")
    if np.any(g[:N] <= 0):
        raise InvalidArgumentError("stepsizes must be positive")
    w = g[ell:N]
    indicator = 1.0 if r < 1 else 0.0
    head = g[ell] ** (r - 1.0) + indicator * g[N - 1] ** (r - 1.0)
    return float((4.0 * M * M * head + C * C * np.sum(w ** (r + 1.0))) / np.sum(w ** r))

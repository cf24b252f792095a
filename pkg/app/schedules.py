# app/schedules.py
from __future__ import annotations
import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from app.errors import InvalidArgumentError
from app.oracles import _log_double_factorial

logger = logging.getLogger(__name__)

# slack applied to every predicate so that values like 1/6 + 2/6 classify exactly
BOUNDARY_TOL = 1e-12

ConditionSet = Literal["as_convergence", "ms_convergence", "averaging_abcr", "least_norm"]


# ---------- sequences ----------
@dataclass(frozen=True)
class PowerLawTriple:
    """gamma_k = gamma0 (k+1+offset)^-a, eta_k = eta0 (k+1)^-b, eps_k = eps0 (k+1)^-c."""
    gamma0: float
    a: float
    eta0: float = 0.0
    b: float = 0.0
    eps0: float = 0.0
    c: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise InvalidArgumentError(f"gamma0 must be positive, got {self.gamma0}")
        if self.eta0 < 0 or self.eps0 < 0 or self.offset < 0:
            raise InvalidArgumentError("eta0, eps0 and offset must be nonnegative")

    @classmethod
    def stabilized(cls, gamma0: float, a: float, eta0: float, b: float, eps0: float, c: float,
                   horizon: int) -> "PowerLawTriple":
        # the 0.1 N shift keeps the first steps from overshooting
        return cls(gamma0, a, eta0, b, eps0, c, offset=0.1 * horizon)

    def eval(self, k: int) -> Tuple[float, float, float]:
        if k < 0:
            raise InvalidArgumentError("iteration index must be nonnegative")
        base = k + 1.0
        return (
            self.gamma0 * (base + self.offset) ** (-self.a),
            self.eta0 * base ** (-self.b),
            self.eps0 * base ** (-self.c),
        )

    def eval_many(self, ks: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        base = np.asarray(ks, dtype=float) + 1.0
        return (
            self.gamma0 * (base + self.offset) ** (-self.a),
            self.eta0 * base ** (-self.b),
            self.eps0 * base ** (-self.c),
        )

    @property
    def exponents(self) -> Tuple[float, float, float]:
        return self.a, self.b, self.c


def window_stepsize(M: float, C: float, r: float, N: int) -> float:
    """gamma_N = 2 M sqrt(1 + 1_r) / (C sqrt(N + 1)), 1_r = 1 iff r < 1."""
    if M <= 0 or C <= 0:
        raise InvalidArgumentError("M and C must be positive")
    if N < 0:
        raise InvalidArgumentError("N must be nonnegative")
    indicator = 1.0 if r < 1 else 0.0
    return 2.0 * M * math.sqrt(1.0 + indicator) / (C * math.sqrt(N + 1.0))


def window_start(lam: float, N: int) -> int:
    """ceil(lambda N) taken on the decimal value of lambda, so 0.55 and N = 100 give 55."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"window lambda must lie in [0, 1], got {lam}")
    if N < 0:
        raise InvalidArgumentError(f"horizon must be nonnegative, got {N}")
    return math.ceil(Fraction(repr(float(lam))) * int(N))


@dataclass(frozen=True)
class WindowRule:
    """The window-averaging stepsize rule; no regularization or smoothing."""
    M: float
    C: float
    r: float = 1.0

    def eval(self, k: int) -> Tuple[float, float, float]:
        return window_stepsize(self.M, self.C, self.r, k), 0.0, 0.0

    def eval_many(self, ks: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        g0 = window_stepsize(self.M, self.C, self.r, 0)
        gam = g0 / np.sqrt(np.asarray(ks, dtype=float) + 1.0)
        return gam, np.zeros_like(gam), np.zeros_like(gam)

    @property
    def gamma0(self) -> float:
        return window_stepsize(self.M, self.C, self.r, 0)


# ---------- verdicts ----------
@dataclass(frozen=True)
class Predicate:
    name: str
    lhs: float
    relation: str      # "<", "<=", ">"
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs if self.relation in ("<", "<=") else self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        if self.relation == "<=":
            return self.margin >= -BOUNDARY_TOL
        return self.margin > BOUNDARY_TOL

    @property
    def binding(self) -> bool:
        return abs(self.margin) <= BOUNDARY_TOL

    def describe(self) -> str:
        return f"{self.name}: {self.lhs:.6g} {self.relation} {self.rhs:.6g}"


@dataclass
class ScheduleVerdict:
    condition_set: str
    checks: List[Predicate]
    reports: Dict[str, bool] = field(default_factory=dict)
    info: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return all(p.holds for p in self.checks)

    @property
    def violated_conditions(self) -> List[Predicate]:
        return [p for p in self.checks if not p.holds]

    @property
    def binding_conditions(self) -> List[Predicate]:
        return [p for p in self.checks if p.binding]


def _positivity(a: float, b: float, c: float) -> List[Predicate]:
    return [Predicate("a > 0", a, ">", 0.0), Predicate("b > 0", b, ">", 0.0), Predicate("c > 0", c, ">", 0.0)]


def _exponents(t) -> Tuple[float, float, float]:
    return t.exponents if isinstance(t, PowerLawTriple) else tuple(float(v) for v in t)


def _rate_info(a: float, b: float, c: float) -> Dict[str, Optional[float]]:
    """
    (delta, delta') recovered from a rate-preset triple, None when c != 1/6 or the
    pair falls outside the admissible range. B1 and B2 exist but are never computed.
    """
    info: Dict[str, Optional[float]] = {"delta": None, "delta_p": None, "B1": None, "B2": None}
    if abs(c - 1.0 / 6.0) > 1e-9:
        return info
    delta = 1.0 / 6.0 - b
    delta_p = delta - (a - 0.5) / 3.0
    bound = min(delta, (1.0 - 6.0 * delta) / 9.0)
    if 0 < delta < 1.0 / 6.0 and 0 < delta_p < bound:
        info["delta"], info["delta_p"] = delta, delta_p
    return info


def validate_as(triple) -> ScheduleVerdict:
    """Almost-sure convergence: a, b, c > 0, a + 3b < 1, a > b + 2c, a > 0.5."""
    a, b, c = _exponents(triple)
    checks = _positivity(a, b, c) + [
        Predicate("a + 3b < 1", a + 3 * b, "<", 1.0),
        Predicate("a > b + 2c", a, ">", b + 2 * c),
        Predicate("a > 0.5", a, ">", 0.5),
    ]
    least = Predicate("b < c", b, "<", c)
    return ScheduleVerdict("as_convergence", checks, reports={"least_norm": least.holds},
                           info=_rate_info(a, b, c))


def validate_ms(triple) -> ScheduleVerdict:
    """Mean-squared convergence: a, b, c > 0, a + b < 1, a + b <= 2/3 (1 + c), a > b + 2c."""
    a, b, c = _exponents(triple)
    ratio = Predicate("a > b + 2c", a, ">", b + 2 * c)
    checks = _positivity(a, b, c) + [
        Predicate("a + b < 1", a + b, "<", 1.0),
        Predicate("a + b <= 2/3 (1 + c)", a + b, "<=", (2.0 / 3.0) * (1.0 + c)),
        ratio,
    ]
    return ScheduleVerdict("ms_convergence", checks, reports={"gamma/(eta eps^2) -> 0": ratio.holds})


def validate_averaging(triple, r: float) -> ScheduleVerdict:
    a, b, c = _exponents(triple)
    checks = _positivity(a, b, c) + [
        Predicate("a > 0.5", a, ">", 0.5),
        Predicate("a + 3b < 1", a + 3 * b, "<", 1.0),
        Predicate("b + 2c < a", b + 2 * c, "<", a),
        Predicate("b < c", b, "<", c),
        Predicate("r <= 1/a", r, "<=", 1.0 / a if a > 0 else math.inf),
    ]
    return ScheduleVerdict("averaging_abcr", checks, info=_rate_info(a, b, c))


def validate_least_norm(triple) -> ScheduleVerdict:
    a, b, c = _exponents(triple)
    return ScheduleVerdict("least_norm", [Predicate("b < c", b, "<", c)])


def threshold_k1(triple: PowerLawTriple, C: float, n: int, k_max: int = 10 ** 12) -> Optional[int]:
    """
    Smallest K1 with gamma_k/(eta_k eps_k^2) <= 0.5 ((n-1)!!/(n!! kappa C))^2 for
    k >= K1; None when eta0 or eps0 vanish or the ratio does not decay.
    """
    a, b, c = triple.exponents
    if triple.eta0 <= 0 or triple.eps0 <= 0 or C <= 0 or a <= b + 2 * c:
        return None
    kappa = 1.0 if n % 2 == 1 else 2.0 / math.pi
    inv_ratio = math.exp(_log_double_factorial(n - 1) - _log_double_factorial(n))
    limit = 0.5 * (inv_ratio / (kappa * C)) ** 2

    def ok(k: int) -> bool:
        g, e, s = triple.eval(k)
        return g / (e * s * s) <= limit

    if ok(0):
        return 0
    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > k_max:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def verdict_report(triple: PowerLawTriple, r: Optional[float] = None, C: Optional[float] = None,
                   n: Optional[int] = None) -> Dict[str, ScheduleVerdict]:
    """Every condition set for one schedule, keyed by the CLI names as/ms/avg/least_norm."""
    out = {"as": validate_as(triple), "ms": validate_ms(triple), "least_norm": validate_least_norm(triple)}
    if r is not None:
        out["avg"] = validate_averaging(triple, r)
    if C is not None and n is not None:
        k1 = threshold_k1(triple, C, n)
        for v in out.values():
            v.info["K1"] = k1
    return out


# ---------- presets ----------
def rate_preset(delta: float, delta_p: float) -> Tuple[float, float, float, float]:
    """(a, b, c, r_max) attaining the k^-(1/6 - delta) almost-sure rate."""
    if not 0 < delta < 1.0 / 6.0:
        raise InvalidArgumentError(f"need 0 < delta < 1/6, got delta={delta}")
    bound = min(delta, (1.0 - 6.0 * delta) / 9.0)
    if not 0 < delta_p < bound:
        raise InvalidArgumentError(
            f"need 0 < delta' < min(delta, (1 - 6 delta)/9) = {bound:.6g}, got delta'={delta_p}"
        )
    shift = 3.0 * (delta - delta_p)
    a = 0.5 + shift
    return a, 1.0 / 6.0 - delta, 1.0 / 6.0, (0.5 - shift) / (0.5 + shift)


# ---------- feasible regions ----------
@dataclass
class RegionGrid:
    axis: np.ndarray
    as_holds: np.ndarray     # (res, res, res) indexed [a, b, c]
    ms_holds: np.ndarray
    which: str = "as"

    @property
    def holds(self) -> np.ndarray:
        return self.as_holds if self.which == "as" else self.ms_holds

    @property
    def cells(self) -> int:
        return int(self.as_holds.size)

    def cell_index(self, v: float) -> Optional[int]:
        res = self.axis.shape[0]
        if not 0.0 <= v <= 1.0:
            return None
        return min(int(math.floor(v * res)), res - 1)

    def contains(self, a: float, b: float, c: float, which: Optional[str] = None) -> bool:
        """Verdict stored for the grid cell holding (a, b, c); points outside [0, 1]^3 are not members."""
        idx = [self.cell_index(v) for v in (a, b, c)]
        if None in idx:
            return False
        grid = self.as_holds if (which or self.which) == "as" else self.ms_holds
        i, j, k = idx
        return bool(grid[i, j, k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "c", "as_holds", "ms_holds"])
        res = self.axis.shape[0]
        for i, j, k in itertools.product(range(res), repeat=3):
            w.writerow([repr(float(self.axis[i])), repr(float(self.axis[j])), repr(float(self.axis[k])),
                        int(self.as_holds[i, j, k]), int(self.ms_holds[i, j, k])])
        return buf.getvalue()


def feasible_region_grid(resolution: int, which: str = "as") -> RegionGrid:
    """Verdicts at the cell centers of a resolution^3 grid over (0, 1)^3."""
    if resolution < 2:
        raise InvalidArgumentError("resolution must be at least 2")
    if which not in ("as", "ms"):
        raise InvalidArgumentError(f"unknown region {which!r}; expected 'as' or 'ms'")
    axis = (np.arange(resolution) + 0.5) / resolution
    A, B, C = np.meshgrid(axis, axis, axis, indexing="ij")
    tol = BOUNDARY_TOL
    positive = (A > tol) & (B > tol) & (C > tol)
    ratio = A - (B + 2 * C) > tol
    as_holds = positive & (1.0 - (A + 3 * B) > tol) & ratio & (A - 0.5 > tol)
    ms_holds = positive & (1.0 - (A + B) > tol) & ((2.0 / 3.0) * (1.0 + C) - (A + B) >= -tol) & ratio
    return RegionGrid(axis=axis, as_holds=as_holds, ms_holds=ms_holds, which=which)

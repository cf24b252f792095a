# app/oracles.py
from __future__ import annotations
import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from app.errors import InvalidArgumentError, UnsupportedOperationError
from app.geometry import BallSampler, FeasibleSet, cournot_product

logger = logging.getLogger(__name__)

ArrayMap = Callable[[np.ndarray], np.ndarray]


class EstimatedBoundWarning(UserWarning):
    """A bound was estimated by sampling instead of certified."""


# ---------- exact maps ----------
class ExactMap:
    """
    Deterministic map F with the optional extras solvers and gap routines use:
    an analytic Jacobian, a Lipschitz constant and, for affine maps, the matrix.
    """

    def __init__(self, func: ArrayMap, *,
                 jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 lipschitz: Optional[float] = None,
                 affine_matrix: Optional[np.ndarray] = None):
        self._func = func
        self.jacobian = jacobian
        self.lipschitz = lipschitz
        self.affine_matrix = affine_matrix

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._func(x)

    @cached_property
    def concave_gap(self) -> bool:
        """True when y -> F(y)'(x - y) is concave for every x (monotone affine F)."""
        A = self.affine_matrix
        if A is None:
            return False
        scale = max(1.0, float(np.abs(A).max()))
        return bool(np.linalg.eigvalsh(0.5 * (A + A.T)).min() >= -1e-12 * scale)


def as_exact_map(F) -> ExactMap:
    return F if isinstance(F, ExactMap) else ExactMap(F)


# ---------- oracle contract ----------
class StochasticMapOracle(ABC):
    """Sampler Phi(x, xi) defined on X^eps, with optional exact expectation F."""

    dimension: int
    extension_radius: float = 0.0

    @abstractmethod
    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    @property
    @abstractmethod
    def bound_C(self) -> float: ...

    @property
    def has_expectation(self) -> bool:
        return False

    def expectation(self, x: np.ndarray) -> Optional[np.ndarray]:
        return None

    def expectation_many(self, X: np.ndarray) -> np.ndarray:
        return np.vstack([self.expectation(x) for x in X])

    @property
    def is_affine(self) -> bool:
        return False

    def exact_map(self) -> ExactMap:
        raise UnsupportedOperationError(f"{type(self).__name__} has no exact expectation")


class DeterministicOracle(StochasticMapOracle):
    """Phi(x, xi) = F(x); used for test problems and noise-free runs."""

    def __init__(self, func: ArrayMap, dimension: int, *, bound: float = 0.0,
                 jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 lipschitz: Optional[float] = None,
                 affine_matrix: Optional[np.ndarray] = None,
                 extension_radius: float = 0.0):
        self._func = func
        self.dimension = dimension
        self._bound = bound
        self.extension_radius = extension_radius
        self._map = ExactMap(func, jacobian=jacobian, lipschitz=lipschitz, affine_matrix=affine_matrix)

    @property
    def bound_C(self) -> float:
        return self._bound

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self._func(x), dtype=float)

    @property
    def has_expectation(self) -> bool:
        return True

    def expectation(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._func(x), dtype=float)

    @property
    def is_affine(self) -> bool:
        return self._map.affine_matrix is not None

    def exact_map(self) -> ExactMap:
        return self._map


# ---------- Nash-Cournot game ----------
@dataclass(frozen=True)
class CournotGame:
    """
    I firms, J nodes; price at node j is a_j - b_j * sbar_j**sigma with
    a_j ~ U[a_lb_j, a_ub_j]. Variables are ordered x = (g_1; s_1; ...; g_I; s_I).
    """
    firms: int
    nodes: int
    sigma: float
    a_lb: np.ndarray
    a_ub: np.ndarray
    b: np.ndarray
    c: np.ndarray
    cap: np.ndarray                      # (firms, nodes)
    d: np.ndarray = field(default=None)  # fixed costs, gradient-irrelevant

    def __post_init__(self):
        J = self.nodes
        for name in ("a_lb", "a_ub", "b", "c"):
            object.__setattr__(self, name, np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (J,)).copy())
        d = np.zeros(J) if self.d is None else self.d
        object.__setattr__(self, "d", np.broadcast_to(np.asarray(d, dtype=float), (J,)).copy())
        object.__setattr__(self, "cap", np.broadcast_to(np.asarray(self.cap, dtype=float), (self.firms, J)).copy())
        if self.firms < 1 or J < 1:
            raise InvalidArgumentError("a game needs at least one firm and one node")
        if self.sigma < 1:
            raise InvalidArgumentError(f"price exponent sigma must be >= 1, got {self.sigma}")
        if np.any(self.a_lb > self.a_ub):
            raise InvalidArgumentError("price intercept bounds need a_lb <= a_ub")

    @property
    def dimension(self) -> int:
        return 2 * self.firms * self.nodes

    @property
    def a_mean(self) -> np.ndarray:
        return (self.a_lb + self.a_ub) / 2.0

    def feasible_set(self):
        return cournot_product(self.cap)

    def index(self, firm: int, part: str, node: int) -> int:
        return firm * 2 * self.nodes + (0 if part == "g" else self.nodes) + node


def _cournot_gradient(game: CournotGame, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    I, J = game.firms, game.nodes
    X = np.asarray(x, dtype=float).reshape(I, 2, J)
    s = X[:, 1, :]
    sbar = s.sum(axis=0)
    if game.sigma == 1:
        Fs = game.b * (sbar + s) - a
    else:
        # the price curve is only defined for nonnegative aggregate sales
        sb = np.maximum(sbar, 0.0)
        Fs = game.b * (game.sigma * sb ** (game.sigma - 1) * s + sb ** game.sigma) - a
    Fg = np.broadcast_to(game.c, (I, J))
    return np.stack([Fg, Fs], axis=1).reshape(-1)


def cournot_expected_map(game: CournotGame, x) -> np.ndarray:
    return _cournot_gradient(game, x, game.a_mean)


def cournot_sample_map(game: CournotGame, x, rng: np.random.Generator) -> np.ndarray:
    # one intercept per node, shared by every firm
    a = rng.uniform(game.a_lb, game.a_ub)
    return _cournot_gradient(game, x, a)


def cournot_affine_form(game: CournotGame) -> Tuple[np.ndarray, np.ndarray]:
    """(A, q) with F(x) = A x + q; only for sigma = 1."""
    if game.sigma != 1:
        raise UnsupportedOperationError("the Cournot map is affine only for sigma = 1")
    I, J, n = game.firms, game.nodes, game.dimension
    A = np.zeros((n, n))
    q = np.zeros(n)
    for i in range(I):
        for j in range(J):
            row = game.index(i, "s", j)
            q[game.index(i, "g", j)] = game.c[j]
            q[row] = -game.a_mean[j]
            for k in range(I):
                A[row, game.index(k, "s", j)] = game.b[j] * (2.0 if k == i else 1.0)
    return A, q


def cournot_jacobian(game: CournotGame, x) -> np.ndarray:
    if game.sigma == 1:
        return cournot_affine_form(game)[0]
    I, J, n, sig = game.firms, game.nodes, game.dimension, game.sigma
    X = np.asarray(x, dtype=float).reshape(I, 2, J)
    s = X[:, 1, :]
    sb = np.maximum(s.sum(axis=0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = np.where(sb > 0, sb ** (sig - 1), 0.0)
        p2 = np.where(sb > 0, sb ** (sig - 2), 0.0)
    Jm = np.zeros((n, n))
    for i in range(I):
        for j in range(J):
            row = game.index(i, "s", j)
            for k in range(I):
                Jm[row, game.index(k, "s", j)] = (
                    game.b[j] * sig * p1[j] * (2.0 if k == i else 1.0)
                    + game.b[j] * sig * (sig - 1) * p2[j] * s[i, j]
                )
    return Jm


def is_monotone_on_sales(game: CournotGame) -> bool:
    """Strict monotonicity in the sales coordinates (production enters linearly)."""
    A, _ = cournot_affine_form(game)
    idx = [game.index(i, "s", j) for i in range(game.firms) for j in range(game.nodes)]
    S = 0.5 * (A + A.T)[np.ix_(idx, idx)]
    return bool(np.linalg.eigvalsh(S).min() > 0.0)


class CournotOracle(StochasticMapOracle):
    def __init__(self, game: CournotGame, *, extension_radius: float = 0.0, bound: Optional[float] = None):
        self.game = game
        self.dimension = game.dimension
        self.extension_radius = extension_radius
        self._bound = bound

    @cached_property
    def _affine(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        return cournot_affine_form(self.game) if self.game.sigma == 1 else None

    @property
    def bound_C(self) -> float:
        if self._bound is None:
            self._bound = bound_C_for_cournot(self.game, self.game.feasible_set(), self.extension_radius)
        return self._bound

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return cournot_sample_map(self.game, x, rng)

    @property
    def has_expectation(self) -> bool:
        return True

    def expectation(self, x: np.ndarray) -> np.ndarray:
        return cournot_expected_map(self.game, x)

    def expectation_many(self, X: np.ndarray) -> np.ndarray:
        if self._affine is not None:
            A, q = self._affine
            return X @ A.T + q
        return super().expectation_many(X)

    @property
    def is_affine(self) -> bool:
        return self._affine is not None

    def exact_map(self) -> ExactMap:
        game = self.game
        if self._affine is not None:
            A, q = self._affine
            return ExactMap(lambda x: cournot_expected_map(game, x),
                            jacobian=lambda x: A, lipschitz=float(np.linalg.norm(A, 2)), affine_matrix=A)
        return ExactMap(lambda x: cournot_expected_map(game, x), jacobian=lambda x: cournot_jacobian(game, x))


# ---------- smoothing ----------
def smoothed_map_estimate(oracle: StochasticMapOracle, x, eps: float, m: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo estimate of F_k(x) = E[F(x + z)], z uniform in B_n(0, eps)."""
    if m < 1:
        raise InvalidArgumentError("smoothing needs at least one draw")
    x = np.asarray(x, dtype=float)
    Z = BallSampler(oracle.dimension, eps).sample_many(m, rng)
    if oracle.has_expectation:
        return oracle.expectation_many(x + Z).mean(axis=0)
    # two-level sampling: z first, then xi
    return np.mean([oracle.sample(x + z, rng) for z in Z], axis=0)


def smoothed_map(oracle: StochasticMapOracle, eps: float, m: int, rng: np.random.Generator) -> ExactMap:
    """
    Deterministic stand-in for F_k built from m frozen ball perturbations.
    An affine map is its own smoothing because E[z] = 0.
    """
    if oracle.is_affine or eps == 0.0:
        return oracle.exact_map()
    if not oracle.has_expectation:
        raise UnsupportedOperationError("frozen smoothing needs an exact expectation")
    Z = BallSampler(oracle.dimension, eps).sample_many(m, rng)

    def F_k(x: np.ndarray) -> np.ndarray:
        return oracle.expectation_many(np.asarray(x, dtype=float) + Z).mean(axis=0)

    L = smoothing_lipschitz_constant(oracle.dimension, oracle.bound_C, eps) if oracle.bound_C > 0 else None
    return ExactMap(F_k, lipschitz=L)


def _log_double_factorial(n: int) -> float:
    # n!! = 2^(n/2) Gamma(n/2 + 1), times sqrt(2/pi) for odd n
    val = 0.5 * n * math.log(2.0) + float(gammaln(0.5 * n + 1.0))
    if n % 2 == 1:
        val += 0.5 * math.log(2.0 / math.pi)
    return val


def smoothing_lipschitz_constant(n: int, C: float, eps: float) -> float:
    """kappa * n!!/(n-1)!! * C/eps, kappa = 1 for odd n and 2/pi for even n."""
    if n < 1:
        raise InvalidArgumentError("dimension must be positive")
    if eps == 0:
        raise ZeroDivisionError("smoothing radius eps must be positive")
    kappa = 1.0 if n % 2 == 1 else 2.0 / math.pi
    ratio = math.exp(_log_double_factorial(n) - _log_double_factorial(n - 1))
    return kappa * ratio * C / eps


# ---------- noise diagnostics ----------
@dataclass
class NoiseStats:
    mean_vector: np.ndarray
    mean_sq_norm: float
    sample_count: int
    mean_std_error: np.ndarray
    sq_norm_std_error: float


def noise_moments(oracle: StochasticMapOracle, x, m: int, rng: np.random.Generator) -> NoiseStats:
    """Empirical moments of w = Phi(x, xi) - F(x)."""
    if not oracle.has_expectation:
        raise UnsupportedOperationError("noise moments need the exact expectation")
    if m < 2:
        raise InvalidArgumentError("noise moments need at least two draws")
    x = np.asarray(x, dtype=float)
    F = oracle.expectation(x)
    W = np.vstack([oracle.sample(x, rng) - F for _ in range(m)])
    sq = np.einsum("ij,ij->i", W, W)
    return NoiseStats(
        mean_vector=W.mean(axis=0),
        mean_sq_norm=float(sq.mean()),
        sample_count=m,
        mean_std_error=W.std(axis=0, ddof=1) / math.sqrt(m),
        sq_norm_std_error=float(sq.std(ddof=1) / math.sqrt(m)),
    )


# ---------- bounds ----------
def bound_C_for_cournot(game: CournotGame, fset: Optional[FeasibleSet] = None, eps: float = 0.0,
                        rng: Optional[np.random.Generator] = None, samples: int = 2000) -> float:
    """
    C with ||Phi(x, xi)|| <= C on X^eps. For sigma = 1 this is an interval
    enclosure of A x + q over the bounding box of X^eps with the intercept at
    its worse end, so it certifies the bound pointwise (an over-estimate).
    """
    fset = fset or game.feasible_set()
    lo, hi = fset.bounding_box()
    lo, hi = lo - eps, hi + eps
    if game.sigma == 1:
        A, q = cournot_affine_form(game)
        Ap, Am = np.maximum(A, 0.0), np.minimum(A, 0.0)
        ax_lo = Ap @ lo + Am @ hi
        ax_hi = Ap @ hi + Am @ lo
        q_lo, q_hi = q.copy(), q.copy()
        for i in range(game.firms):
            for j in range(game.nodes):
                k = game.index(i, "s", j)
                q_lo[k], q_hi[k] = -game.a_ub[j], -game.a_lb[j]
        comp = np.maximum(np.abs(ax_lo + q_lo), np.abs(ax_hi + q_hi))
        return float(np.linalg.norm(comp))

    warnings.warn("sigma > 1: C is a sampled estimate, not a certified bound", EstimatedBoundWarning)
    rng = rng or np.random.default_rng(0)
    ball = BallSampler(game.dimension, eps)
    best = 0.0
    for _ in range(samples):
        x = fset.sample_point(rng) + ball.sample(rng)
        best = max(best, float(np.linalg.norm(cournot_sample_map(game, x, rng))))
    return 1.25 * best

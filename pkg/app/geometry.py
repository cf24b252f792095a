# app/geometry.py
from __future__ import annotations
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from app.errors import InvalidArgumentError, UnsupportedOperationError

logger = logging.getLogger(__name__)

# membership tolerance used by contains()
MEMBER_TOL = 1e-10


def _as_vector(x, dimension: int) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != dimension:
        raise InvalidArgumentError(f"expected a vector of dimension {dimension}, got {v.shape[0]}")
    return v


# ---------- set contract ----------
class FeasibleSet(ABC):
    """
    Compact convex set X. Every set projects exactly; linear minimization is a
    capability flag because the strong gap needs it.
    """

    exact_projection: bool = True
    linear_minimization: bool = True

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @property
    @abstractmethod
    def diameter_bound(self) -> float:
        """M: a bound on the Euclidean norm of every member."""

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def linear_minimize(self, cost: np.ndarray) -> Tuple[np.ndarray, float]: ...

    @abstractmethod
    def contains(self, x: np.ndarray, tol: float = MEMBER_TOL) -> bool: ...

    @abstractmethod
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]: ...

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounding_box()
        return self.project(rng.uniform(lo, hi))


# ---------- boxes ----------
class Box(FeasibleSet):
    def __init__(self, lb: Sequence[float], ub: Sequence[float]):
        self.lb = np.asarray(lb, dtype=float).reshape(-1)
        self.ub = np.asarray(ub, dtype=float).reshape(-1)
        if self.lb.shape != self.ub.shape:
            raise InvalidArgumentError("box bounds must have the same shape")
        if np.any(self.lb > self.ub) or not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise InvalidArgumentError("box bounds must be finite with lb <= ub")

    @property
    def dimension(self) -> int:
        return int(self.lb.shape[0])

    @property
    def diameter_bound(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.lb), np.abs(self.ub))))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lb, self.ub)

    def linear_minimize(self, cost: np.ndarray) -> Tuple[np.ndarray, float]:
        y = np.where(cost > 0, self.lb, self.ub)
        return y, float(cost @ y)

    def contains(self, x: np.ndarray, tol: float = MEMBER_TOL) -> bool:
        return bool(np.all(x >= self.lb - tol) and np.all(x <= self.ub + tol))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lb.copy(), self.ub.copy()


# ---------- Cournot block ----------
def _cournot_multipliers(g0: np.ndarray, s0: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """
    Balance multiplier nu for a batch of blocks (rows). The residual
    r(nu) = sum clip(g0 - nu, 0, cap) - sum max(s0 + nu, 0) is piecewise linear
    and nonincreasing; its kinks are g0 - cap (slope -1), g0 (slope +1) and
    -s0 (slope -1). Left of every kink r = sum(cap).
    """
    B, J = g0.shape
    kinks = np.concatenate([g0 - cap, g0, -s0], axis=1)
    deltas = np.concatenate([-np.ones((B, J)), np.ones((B, J)), -np.ones((B, J))], axis=1)
    order = np.argsort(kinks, axis=1, kind="stable")
    pts = np.take_along_axis(kinks, order, axis=1)
    slopes = np.cumsum(np.take_along_axis(deltas, order, axis=1), axis=1)

    r0 = cap.sum(axis=1)
    steps = slopes[:, :-1] * np.diff(pts, axis=1)
    resid = np.concatenate([r0[:, None], r0[:, None] + np.cumsum(steps, axis=1)], axis=1)

    hit = resid <= 0.0
    has_root = hit.any(axis=1)
    m = np.argmax(hit, axis=1)
    rows = np.arange(B)

    nu = np.empty(B)
    # beyond the last kink every s is active and every g sits at zero: slope -J
    tail = ~has_root
    nu[tail] = pts[tail, -1] + resid[tail, -1] / J

    first = has_root & (m == 0)
    nu[first] = pts[first, 0]

    inner = has_root & (m > 0)
    if np.any(inner):
        ri, mi = rows[inner], m[inner]
        left = pts[ri, mi - 1]
        nu[inner] = np.minimum(left + resid[ri, mi - 1] / (-slopes[ri, mi - 1]), pts[ri, mi])
    return nu


def _cournot_project_batch(g0: np.ndarray, s0: np.ndarray, cap: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    nu = _cournot_multipliers(g0, s0, cap)
    g = np.clip(g0 - nu[:, None], 0.0, cap)
    s = np.maximum(s0 + nu[:, None], 0.0)
    return g, s, nu


def _cournot_linear_minimize(cg: np.ndarray, cs: np.ndarray, cap: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    min cg.g + cs.s over the block. With t = sum g = sum s fixed, g is a
    fractional knapsack (cheapest nodes first) and s puts t on its cheapest
    node, so the value is convex piecewise linear in t with kinks at the
    cumulative capacities.
    """
    order = np.argsort(cg, kind="stable")
    caps = cap[order]
    t = np.concatenate([[0.0], np.cumsum(caps)])
    value_g = np.concatenate([[0.0], np.cumsum(cg[order] * caps)])
    j_sale = int(np.argmin(cs))
    values = value_g + t * cs[j_sale]
    m = int(np.argmin(values))

    g = np.zeros_like(cap)
    g[order[:m]] = caps[:m]
    s = np.zeros_like(cap)
    s[j_sale] = t[m]
    return g, s, float(cg @ g + cs @ s)


class CournotBlock(FeasibleSet):
    """
    One firm's strategy set {(g, s): sum g = sum s, 0 <= g <= cap, s >= 0},
    stored as the stacked vector (g; s). Members satisfy s_j <= sum(cap).
    """

    def __init__(self, cap: Sequence[float]):
        self.cap = np.asarray(cap, dtype=float).reshape(-1)
        if self.cap.size == 0 or np.any(self.cap < 0) or not np.all(np.isfinite(self.cap)):
            raise InvalidArgumentError("cap must be a nonempty finite nonnegative vector")

    @property
    def J(self) -> int:
        return int(self.cap.shape[0])

    @property
    def dimension(self) -> int:
        return 2 * self.J

    @property
    def diameter_bound(self) -> float:
        # loose: every s_j is bounded by the total capacity
        total = float(self.cap.sum())
        return math.sqrt(float(self.cap @ self.cap) + self.J * total * total)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return x[: self.J], x[self.J:]

    def project(self, x: np.ndarray) -> np.ndarray:
        g0, s0 = self.split(x)
        g, s, _ = _cournot_project_batch(g0[None, :], s0[None, :], self.cap[None, :])
        return np.concatenate([g[0], s[0]])

    def linear_minimize(self, cost: np.ndarray) -> Tuple[np.ndarray, float]:
        cg, cs = self.split(cost)
        g, s, value = _cournot_linear_minimize(cg, cs, self.cap)
        return np.concatenate([g, s]), value

    def contains(self, x: np.ndarray, tol: float = MEMBER_TOL) -> bool:
        g, s = self.split(x)
        scale = max(1.0, float(np.abs(g).sum()))
        return bool(
            np.all(g >= -tol) and np.all(g <= self.cap + tol) and np.all(s >= -tol)
            and abs(g.sum() - s.sum()) <= tol * scale
        )

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        total = float(self.cap.sum())
        lo = np.zeros(self.dimension)
        hi = np.concatenate([self.cap, np.full(self.J, total)])
        return lo, hi


# ---------- products ----------
class ProductSet(FeasibleSet):
    """Cartesian product; projection and linear minimization work blockwise."""

    def __init__(self, blocks: Sequence[FeasibleSet]):
        if not blocks:
            raise InvalidArgumentError("a product needs at least one block")
        self.blocks: List[FeasibleSet] = list(blocks)
        self._offsets = np.cumsum([0] + [b.dimension for b in self.blocks])
        caps = [b.cap for b in self.blocks if isinstance(b, CournotBlock)]
        # equal-size Cournot blocks project in a single vectorized pass
        self._cap_matrix = (
            np.vstack(caps)
            if len(caps) == len(self.blocks) and len({c.shape[0] for c in caps}) == 1
            else None
        )

    @property
    def dimension(self) -> int:
        return int(self._offsets[-1])

    @property
    def diameter_bound(self) -> float:
        return math.sqrt(sum(b.diameter_bound ** 2 for b in self.blocks))

    def parts(self, x: np.ndarray) -> List[np.ndarray]:
        return [x[self._offsets[i]: self._offsets[i + 1]] for i in range(len(self.blocks))]

    def project(self, x: np.ndarray) -> np.ndarray:
        if self._cap_matrix is not None:
            I, J = self._cap_matrix.shape
            X = x.reshape(I, 2, J)
            g, s, _ = _cournot_project_batch(X[:, 0, :], X[:, 1, :], self._cap_matrix)
            return np.stack([g, s], axis=1).reshape(-1)
        return np.concatenate([b.project(p) for b, p in zip(self.blocks, self.parts(x))])

    def linear_minimize(self, cost: np.ndarray) -> Tuple[np.ndarray, float]:
        if not all(b.linear_minimization for b in self.blocks):
            raise UnsupportedOperationError("a block of this product cannot minimize linear functions")
        ys, value = [], 0.0
        for b, c in zip(self.blocks, self.parts(cost)):
            y, v = b.linear_minimize(c)
            ys.append(y)
            value += v
        return np.concatenate(ys), value

    def contains(self, x: np.ndarray, tol: float = MEMBER_TOL) -> bool:
        return all(b.contains(p, tol) for b, p in zip(self.blocks, self.parts(x)))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        boxes = [b.bounding_box() for b in self.blocks]
        return np.concatenate([lo for lo, _ in boxes]), np.concatenate([hi for _, hi in boxes])


def cournot_product(caps: np.ndarray) -> ProductSet:
    """X = prod_i X_i for a (firms x nodes) capacity matrix."""
    caps = np.atleast_2d(np.asarray(caps, dtype=float))
    return ProductSet([CournotBlock(row) for row in caps])


# ---------- ball sampling ----------
@dataclass(frozen=True)
class BallSampler:
    dimension: int
    radius: float = field(default=0.0)

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidArgumentError("ball dimension must be positive")
        if not (self.radius >= 0.0):
            raise InvalidArgumentError(f"ball radius must be nonnegative, got {self.radius}")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return _ball_draw(self.dimension, self.radius, rng)

    def sample_many(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self.radius == 0.0:
            return np.zeros((m, self.dimension))
        d = rng.standard_normal((m, self.dimension))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * (self.radius * rng.random(m) ** (1.0 / self.dimension))[:, None]


def _ball_draw(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    # isotropic direction times radius * U^(1/n)
    if radius == 0.0:
        return np.zeros(n)
    d = rng.standard_normal(n)
    d /= np.linalg.norm(d)
    return d * (radius * rng.random() ** (1.0 / n))


# ---------- public operations ----------
def project(fset: FeasibleSet, x) -> np.ndarray:
    return fset.project(_as_vector(x, fset.dimension))


def project_cournot_block(block: CournotBlock, g0, s0) -> Tuple[np.ndarray, np.ndarray]:
    g0 = _as_vector(g0, block.J)
    s0 = _as_vector(s0, block.J)
    g, s, _ = _cournot_project_batch(g0[None, :], s0[None, :], block.cap[None, :])
    return g[0], s[0]


def cournot_block_multiplier(block: CournotBlock, g0, s0) -> float:
    """The balance multiplier nu of the block projection."""
    g0 = _as_vector(g0, block.J)
    s0 = _as_vector(s0, block.J)
    return float(_cournot_multipliers(g0[None, :], s0[None, :], block.cap[None, :])[0])


def sample_uniform_ball(sampler: BallSampler, rng: np.random.Generator) -> np.ndarray:
    return sampler.sample(rng)


def linear_minimize(fset: FeasibleSet, cost) -> Tuple[np.ndarray, float]:
    cost = _as_vector(cost, fset.dimension)
    if not np.all(np.isfinite(cost)):
        raise InvalidArgumentError("linear cost must be finite")
    if not fset.linear_minimization:
        raise UnsupportedOperationError(f"{type(fset).__name__} does not support linear minimization")
    return fset.linear_minimize(cost)

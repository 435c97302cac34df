"""Vectors, linear operators and metrics.

Vectors are plain float64 numpy arrays of any shape; all inner products
are taken over the flattened entries.  A :class:`Metric` is a
self-adjoint strongly monotone linear operator ``S`` given together with
its inverse, and :class:`LinOp` is a bounded linear map with its adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionError, MetricError

__all__ = [
    "Metric",
    "LinOp",
    "PowerResult",
    "as_vec",
    "inner",
    "inner_s",
    "norm_s",
    "norm_s_inv",
    "gaussian_pairs",
    "estimate_lipschitz_s",
    "power_iteration",
    "adjoint_mismatch",
]

Vec = np.ndarray
Map = Callable[[Vec], Vec]


def as_vec(x) -> Vec:
    return np.asarray(x, dtype=np.float64)


def _check_dims(x, y, what="vectors"):
    if np.shape(x) != np.shape(y):
        raise DimensionError(np.shape(x), np.shape(y), what)


def inner(x, y) -> float:
    """Euclidean inner product over all entries."""
    _check_dims(x, y)
    return float(np.vdot(np.ravel(x), np.ravel(y)))


@dataclass(frozen=True)
class Metric:
    """Self-adjoint strongly monotone linear operator ``S``.

    Parameters
    ----------
    apply, apply_inv : callable
        Actions of ``S`` and ``S^{-1}``.
    strong_monotonicity_lb : float
        Lower bound on ``<Sx, x> / ||x||^2``.
    """

    apply: Map
    apply_inv: Map
    strong_monotonicity_lb: float = 1.0
    name: str = "metric"

    @classmethod
    def identity(cls) -> "Metric":
        return cls(lambda x: x, lambda x: x, 1.0, "identity")

    @classmethod
    def diagonal(cls, d) -> "Metric":
        d = as_vec(d)
        if np.any(d <= 0):
            raise MetricError("diagonal metric needs positive entries")
        inv = 1.0 / d
        return cls(lambda x: d * x, lambda x: inv * x, float(d.min()), "diagonal")

    @classmethod
    def from_matrix(cls, mat) -> "Metric":
        """Dense symmetric positive definite metric on flat vectors."""
        mat = as_vec(mat)
        if not np.allclose(mat, mat.T, rtol=1e-12, atol=1e-14):
            raise MetricError("metric matrix is not symmetric")
        eig = np.linalg.eigvalsh(mat)
        if eig[0] <= 0:
            raise MetricError(f"metric matrix is not positive definite (min eig {eig[0]:.3g})")
        inv = np.linalg.inv(mat)
        inv = 0.5 * (inv + inv.T)
        return cls(lambda x: mat @ x, lambda x: inv @ x, float(eig[0]), "matrix")


@dataclass(frozen=True)
class LinOp:
    """Bounded linear operator with its adjoint.

    ``domain_shape`` / ``range_shape`` are only needed for random testing
    and power iteration.
    """

    apply: Map
    adjoint_apply: Map
    domain_shape: tuple = ()
    range_shape: tuple = ()
    norm_estimate: float | None = None
    name: str = "linop"

    def __call__(self, x):
        return self.apply(x)

    @property
    def T(self) -> "LinOp":
        return LinOp(self.adjoint_apply, self.apply, self.range_shape,
                      self.domain_shape, self.norm_estimate, self.name + "*")

    @classmethod
    def from_matrix(cls, mat, name="matrix") -> "LinOp":
        mat = as_vec(mat)
        return cls(lambda x: mat @ x, lambda u: mat.T @ u,
                   (mat.shape[1],), (mat.shape[0],), None, name)

    @classmethod
    def identity(cls, shape) -> "LinOp":
        shape = tuple(np.atleast_1d(shape))
        return cls(lambda x: x, lambda x: x, shape, shape, 1.0, "identity")

    def with_norm(self, value: float) -> "LinOp":
        return LinOp(self.apply, self.adjoint_apply, self.domain_shape,
                     self.range_shape, float(value), self.name)

    def to_dense(self) -> np.ndarray:
        """Matrix of the operator on flattened vectors (small problems only)."""
        n = int(np.prod(self.domain_shape))
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            cols.append(np.ravel(self.apply(e.reshape(self.domain_shape))))
        return np.stack(cols, axis=1)


def inner_s(m: Metric, x, y) -> float:
    """``<Sx, y>``."""
    _check_dims(x, y)
    return inner(m.apply(x), y)


def _sqrt_form(value, scale, what):
    if value < 0:
        if value < -1e-12 * max(scale, 1e-300):
            raise MetricError(f"negative {what} {value:.3g}: metric is not monotone")
        return 0.0
    return float(np.sqrt(value))


def norm_s(m: Metric, x) -> float:
    """Norm induced by ``S``."""
    sx = m.apply(x)
    _check_dims(sx, x)
    val = inner(sx, x)
    scale = float(np.linalg.norm(sx) * np.linalg.norm(x))
    return _sqrt_form(val, scale, "<Sx, x>")


def norm_s_inv(m: Metric, x) -> float:
    """Norm induced by ``S^{-1}``."""
    sx = m.apply_inv(x)
    _check_dims(sx, x)
    val = inner(sx, x)
    scale = float(np.linalg.norm(sx) * np.linalg.norm(x))
    return _sqrt_form(val, scale, "<S^-1 x, x>")


def gaussian_pairs(shape, seed=0, scale=1.0):
    """Seeded source of random vector pairs for sampling-based checks."""
    rng = np.random.default_rng(seed)
    shape = tuple(np.atleast_1d(shape))

    def sample():
        return (scale * rng.standard_normal(shape), scale * rng.standard_normal(shape))

    return sample


def estimate_lipschitz_s(T: Map, m: Metric, sampler, trials: int = 100) -> float:
    """Sampled lower bound on the Lipschitz constant of ``T`` w.r.t. ``S``.

    Returns ``max ||Tx - Ty||_{S^-1} / ||x - y||_S`` over ``trials``
    pairs drawn from ``sampler``.  This can refute a claimed constant but
    never prove one.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    best = 0.0
    done = 0
    attempts = 0
    while done < trials:
        attempts += 1
        if attempts > 100 * trials:
            raise RuntimeError("sampler keeps returning identical pairs")
        x, y = sampler()
        den = norm_s(m, x - y)
        if den == 0.0:
            continue
        best = max(best, norm_s_inv(m, T(x) - T(y)) / den)
        done += 1
    return best


class PowerResult(NamedTuple):
    norm: float
    converged: bool
    iterations: int


def power_iteration(L: LinOp, seed=0, max_iters: int = 1000, tol: float = 1e-10) -> PowerResult:
    """Estimate ``||L|| = sqrt(lambda_max(L* L))`` by power iteration.

    Each estimate is ``||L x_k||`` with ``x_k`` unit-norm, which is a
    lower bound that increases monotonically towards ``||L||``.  Stops
    once two successive estimates differ by less than ``tol`` relative.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(L.domain_shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for k in range(1, max_iters + 1):
        lx = L.apply(x)
        new = float(np.linalg.norm(lx))
        if new == 0.0:
            return PowerResult(0.0, True, k)
        y = L.adjoint_apply(lx)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return PowerResult(new, True, k)
        x = y / ny
        if abs(new - est) < tol * new:
            return PowerResult(max(new, est), True, k)
        est = max(new, est)
    return PowerResult(est, False, max_iters)


def adjoint_mismatch(L: LinOp, sampler_x, sampler_u, trials=100) -> float:
    """Largest relative defect of ``<Lx, u> = <x, L*u>`` over random pairs."""
    worst = 0.0
    for _ in range(trials):
        x = sampler_x()
        u = sampler_u()
        lx = L.apply(x)
        lu = L.adjoint_apply(u)
        a = inner(lx, u)
        b = inner(x, lu)
        scale = np.linalg.norm(lx) * np.linalg.norm(u) + np.linalg.norm(x) * np.linalg.norm(lu)
        worst = max(worst, abs(a - b) / max(scale, 1e-300))
    return worst

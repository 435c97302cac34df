"""Nonlinear forward-backward with momentum and its inertial variants.

The problem is ``0 in (A + C) x`` with ``A`` maximally monotone and ``C``
``mu``-cocoercive.  An :class:`OperatorBundle` carries the oracles:

* ``warped_resolvent(n, v)``: ``(M_n + A)^{-1} v``
* ``kernel(n, x)``: ``M_n x``
* ``cocoercive(x)``: ``C x``
* ``metric``: the metric ``S``

and the correction term is ``u_{n+1} = T_n p - T_n y`` with
``T_n = gamma_n M_n - S``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .certify import ProblemConstants, as_seq, coeffs_alg1, coeffs_alg2
from .errors import DivergenceError, ParameterError
from .linops import Metric, inner, inner_s

__all__ = [
    "OperatorBundle",
    "Schedule",
    "IterateState",
    "Transients",
    "LyapunovSample",
    "RunRecord",
    "StopRule",
    "initial_state",
    "step_base",
    "step_inertial_relaxed",
    "step_double_inertial",
    "lyapunov_start",
    "lyapunov_alg1",
    "lyapunov_alg2",
    "rel_change",
    "run",
    "constants_for",
]

log = logging.getLogger(__name__)

EPS_FLOOR = np.finfo(np.float64).eps


@dataclass(frozen=True)
class OperatorBundle:
    """Oracles defining one problem instance."""

    warped_resolvent: Callable[[int, np.ndarray], np.ndarray]
    kernel: Callable[[int, np.ndarray], np.ndarray]
    cocoercive: Callable[[np.ndarray], np.ndarray]
    metric: Metric
    mu: float
    zeta: Callable[[int], float] = 0.0
    t_neg_monotone: bool = False
    epsilon: float = 1e-12
    # optional closed form of T_n v = gamma kernel(n, v) - S v
    t_map: Callable[[int, float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "zeta", as_seq(self.zeta))
        if self.mu <= 0:
            raise ParameterError("cocoercivity constant mu must be positive")

    def T(self, n, gamma, v):
        if self.t_map is not None:
            return self.t_map(n, gamma, v)
        return gamma * self.kernel(n, v) - self.metric.apply(v)


@dataclass(frozen=True)
class Schedule:
    """Per-iteration parameters.

    Scalars are promoted to constant sequences.  With ``restart_n0`` set,
    ``alpha(n)`` is the given value for ``n < restart_n0`` and ``0`` after.
    """

    gamma: Callable[[int], float]
    alpha: Callable[[int], float] = 0.0
    beta: Callable[[int], float] = 0.0
    theta: Callable[[int], float] = 0.0
    lam: float = 1.0
    restart_n0: int | None = None

    def __post_init__(self):
        alpha = as_seq(self.alpha)
        if self.restart_n0 is not None:
            n0 = int(self.restart_n0)
            base = alpha
            alpha = lambda n: base(n) if n < n0 else 0.0  # noqa: E731
        object.__setattr__(self, "alpha", alpha)
        for name in ("gamma", "beta", "theta"):
            object.__setattr__(self, name, as_seq(getattr(self, name)))
        if not 0.0 < self.lam < 2.0:
            raise ParameterError(f"lambda must lie in (0, 2), got {self.lam}")
        if self.gamma(0) <= 0:
            raise ParameterError("step sizes must be positive")


@dataclass(frozen=True)
class IterateState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    u: np.ndarray
    n: int = 0


class Transients(NamedTuple):
    y: np.ndarray
    p: np.ndarray  # resolvent output (equals the new x for base / alg2)
    z: np.ndarray | None = None


class LyapunovSample(NamedTuple):
    c_value: float
    decrement_bound: float


def initial_state(x0, x_minus1=None, u0=None) -> IterateState:
    x0 = np.asarray(x0, dtype=np.float64)
    xm = x0.copy() if x_minus1 is None else np.asarray(x_minus1, dtype=np.float64)
    u0 = np.zeros_like(x0) if u0 is None else np.asarray(u0, dtype=np.float64)
    return IterateState(x0, xm, u0, 0)


def _finite(n, **arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise DivergenceError(n, name)


def step_base(b: OperatorBundle, s: Schedule, st: IterateState) -> IterateState:
    n = st.n
    g = s.gamma(n)
    v = b.kernel(n, st.x_curr) - b.cocoercive(st.x_curr) + st.u / g
    x1 = b.warped_resolvent(n, v)
    u1 = b.T(n, g, x1) - b.T(n, g, st.x_curr)
    _finite(n, x=x1, u=u1)
    return IterateState(x1, st.x_curr, u1, n + 1)


def _step1(b, s, st):
    n = st.n
    g = s.gamma(n)
    y = st.x_curr + s.alpha(n) * (st.x_curr - st.x_prev)
    p = b.warped_resolvent(n, b.kernel(n, y) - b.cocoercive(y) + st.u / g)
    u1 = b.T(n, g, p) - b.T(n, g, y)
    lam = s.lam
    x1 = (1.0 - lam) * y + lam * p
    _finite(n, x=x1, u=u1)
    return IterateState(x1, st.x_curr, u1, n + 1), Transients(y, p)


def step_inertial_relaxed(b: OperatorBundle, s: Schedule, st: IterateState):
    """Inertial step followed by a relaxed warped-resolvent step.

    Returns the new state and the transients ``(y_n, p_{n+1})``.
    """
    return _step1(b, s, st)


def _step2(b, s, st):
    n = st.n
    g = s.gamma(n)
    d = st.x_curr - st.x_prev
    y = st.x_curr + s.alpha(n) * d
    z = st.x_curr + s.beta(n) * d
    v = b.kernel(n, y) - b.cocoercive(z) + st.u / g + s.theta(n) * b.metric.apply(d) / g
    x1 = b.warped_resolvent(n, v)
    u1 = b.T(n, g, x1) - b.T(n, g, y)
    _finite(n, x=x1, u=u1)
    return IterateState(x1, st.x_curr, u1, n + 1), Transients(y, x1, z)


def step_double_inertial(b: OperatorBundle, s: Schedule, st: IterateState) -> IterateState:
    """Two extrapolations (resolvent and cocoercive arguments) plus momentum."""
    return _step2(b, s, st)[0]


# --------------------------------------------------------------------------
# Lyapunov monitor


def constants_for(b: OperatorBundle, s: Schedule, epsilon_margin=0.0) -> ProblemConstants:
    return ProblemConstants(mu=b.mu, zeta_seq=b.zeta, gamma_seq=s.gamma,
                            epsilon_margin=epsilon_margin, t_neg_monotone=b.t_neg_monotone,
                            lam=s.lam, epsilon_assump=b.epsilon)


def _sq(v):
    return float(np.vdot(v, v))


def _sq_s(m, v):
    return inner_s(m, v, v)


def lyapunov_start(b: OperatorBundle, s: Schedule, st: IterateState, x_star,
                   variant="alg1") -> float:
    """Energy at the initial state.

    The previous resolvent gap ``p_0 - y_{-1}`` is unknown and taken as
    zero, which is consistent with ``u_0 = 0``.
    """
    c = constants_for(b, s)
    m = b.metric
    ex = st.x_curr - x_star
    exp = st.x_prev - x_star
    d = st.x_curr - st.x_prev
    if variant == "alg2":
        k = coeffs_alg2(c, s.alpha, s.beta, s.theta, 0)
        return (_sq_s(m, ex) - k.alpha_tilde * _sq_s(m, exp) + 2.0 * inner(st.u, ex)
                + k.xi * _sq(d))
    k = coeffs_alg1(c, s.alpha, 0)
    return (_sq_s(m, ex) - s.alpha(0) * _sq_s(m, exp) + 2.0 * s.lam * inner(st.u, ex)
            + k.xi * _sq(d))


def lyapunov_alg1(b: OperatorBundle, s: Schedule, prev: IterateState, new: IterateState,
                  x_star, transients: Transients | None = None) -> LyapunovSample:
    """Energy ``C_{n+1}(x*)`` after one inertial/relaxed step.

    ``prev`` is the state at index ``n`` and ``new`` the state returned by
    the step.  The leading terms use ``S``-norms, the ``xi`` term the
    plain norm.
    """
    n = prev.n
    c = constants_for(b, s)
    m = b.metric
    lam = s.lam
    if transients is None:
        y = prev.x_curr + s.alpha(n) * (prev.x_curr - prev.x_prev)
        p = y + (new.x_curr - y) / lam
    else:
        y, p = transients.y, transients.p
    k = coeffs_alg1(c, s.alpha, n)
    k1 = coeffs_alg1(c, s.alpha, n + 1)
    ex = new.x_curr - x_star
    step = new.x_curr - prev.x_curr
    cval = (_sq_s(m, ex) - s.alpha(n) * _sq_s(m, prev.x_curr - x_star)
            + 2.0 * lam * inner(new.u, ex)
            + lam * (1.0 + abs(1.0 - lam)) * c.zeta(n) * _sq_s(m, p - y)
            + k1.xi * _sq(step))
    return LyapunovSample(cval, (k.eta - k1.xi) * _sq(step))


def lyapunov_alg2(b: OperatorBundle, s: Schedule, prev: IterateState, new: IterateState,
                  x_star, transients: Transients | None = None) -> LyapunovSample:
    """Energy ``C_{n+1}(x*)`` after one double-inertial step."""
    n = prev.n
    c = constants_for(b, s)
    m = b.metric
    if transients is None:
        y = prev.x_curr + s.alpha(n) * (prev.x_curr - prev.x_prev)
    else:
        y = transients.y
    k = coeffs_alg2(c, s.alpha, s.beta, s.theta, n)
    k1 = coeffs_alg2(c, s.alpha, s.beta, s.theta, n + 1)
    ex = new.x_curr - x_star
    step = new.x_curr - prev.x_curr
    cval = (_sq_s(m, ex) - k.alpha_tilde * _sq_s(m, prev.x_curr - x_star)
            + 2.0 * inner(new.u, ex)
            + c.zeta(n) * _sq_s(m, new.x_curr - y)
            + k1.xi * _sq(step))
    return LyapunovSample(cval, (k.eta - k1.xi) * _sq(step))


# --------------------------------------------------------------------------
# driver


@dataclass
class StopRule:
    tol: float = 1e-6
    max_iters: int = 10_000
    # a run whose iterate norm exceeds blowup * max(1, ||x0||) counts as diverged
    blowup: float = 1e10

    def __post_init__(self):
        if self.tol <= 0:
            raise ParameterError("tol must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")


@dataclass
class RunRecord:
    iterations: int = 0
    rel_errors: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    decrements: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    last_finite: int = 0
    wall_time_s: float = 0.0
    psnr: float | None = None
    x: np.ndarray | None = None
    state: object = None
    params: dict = field(default_factory=dict)


def rel_change(x_next, x_curr) -> float:
    return float(np.linalg.norm(x_next - x_curr) / max(np.linalg.norm(x_curr), EPS_FLOOR))


def run(b: OperatorBundle, s: Schedule, variant="alg1", x0=None, x_minus1=None, u0=None,
        stop: StopRule | None = None, monitor=None) -> RunRecord:
    """Iterate one of the recurrences until the relative change drops below ``tol``.

    ``variant`` is ``"base"``, ``"alg1"`` (inertial/relaxed) or ``"alg2"``
    (double inertial).  Passing a solution ``monitor=x_star`` records the
    Lyapunov energy of every iterate (base uses the ``alg1`` energy).
    """
    if variant not in ("base", "alg1", "alg2"):
        raise ValueError(f"unknown variant {variant!r}")
    stop = stop or StopRule()
    st = initial_state(x0, x_minus1, u0)
    rec = RunRecord()
    bound = stop.blowup * max(1.0, float(np.linalg.norm(st.x_curr)))
    x_star = None if monitor is None else np.asarray(monitor, dtype=np.float64)
    if x_star is not None:
        rec.lyapunov.append(lyapunov_start(b, s, st, x_star, "alg2" if variant == "alg2" else "alg1"))
    t0 = time.perf_counter()
    for _ in range(stop.max_iters):
        try:
            if variant == "base":
                new = step_base(b, s, st)
                tr = Transients(st.x_curr, new.x_curr)
            elif variant == "alg1":
                new, tr = _step1(b, s, st)
            else:
                new, tr = _step2(b, s, st)
        except DivergenceError as exc:
            log.info("run diverged: %s", exc)
            rec.diverged = True
            break
        err = rel_change(new.x_curr, st.x_curr)
        rec.rel_errors.append(err)
        if x_star is not None:
            lyap = lyapunov_alg2 if variant == "alg2" else lyapunov_alg1
            sample = lyap(b, s, st, new, x_star, tr)
            rec.lyapunov.append(sample.c_value)
            rec.decrements.append(sample.decrement_bound)
        st = new
        rec.iterations = st.n
        rec.last_finite = st.n
        if np.linalg.norm(st.x_curr) > bound:
            rec.diverged = True
            break
        if err < stop.tol:
            rec.converged = True
            break
    rec.wall_time_s = time.perf_counter() - t0
    rec.x = st.x_curr
    rec.state = st
    return rec

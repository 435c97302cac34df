"""Concrete splittings with closed-form warped resolvents.

* forward-backward (FB): ``gamma M_n = Id``, ``S = Id``
* forward-half-reflected-backward (FHRB): ``gamma M_n = Id - gamma B``,
  ``A = A~ + B``, ``S = Id``
* primal-dual with block-triangular resolvent (PDBTR) on ``H x G``,
  which recovers Chambolle-Pock (``B = 0``, ``C~ = 0``) and Condat-Vu
  (``B = 0``).

Each splitting has a direct step function and a ``*_bundle`` builder that
embeds it in the generic engine, so the two can be compared iterate for
iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import IterateState, OperatorBundle, Schedule
from .errors import DivergenceError, MetricError
from .linops import LinOp, Metric, power_iteration

__all__ = [
    "FbInstance",
    "FhrbInstance",
    "FhrbState",
    "PdbtrInstance",
    "PdState",
    "ProductSpace",
    "fb_step_relaxed_inertial",
    "fb_step_double",
    "fb_bundle",
    "fhrb_start",
    "fhrb_step",
    "fhrb_bundle",
    "fhrb_engine_start",
    "pdbtr_start",
    "pdbtr_step",
    "pdbtr_bundle",
]


def _zero(x):
    return np.zeros_like(x)


def _check(n, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(n)


# --------------------------------------------------------------------------
# forward-backward


@dataclass(frozen=True)
class FbInstance:
    """``0 in A x + C x`` with ``resolvent(gamma, v) = J_{gamma A}(v)``."""

    resolvent: Callable[[float, np.ndarray], np.ndarray]
    C: Callable[[np.ndarray], np.ndarray]
    mu: float
    gamma: float


def fb_step_relaxed_inertial(inst: FbInstance, s: Schedule, st: IterateState) -> IterateState:
    n = st.n
    y = st.x_curr + s.alpha(n) * (st.x_curr - st.x_prev)
    p = inst.resolvent(inst.gamma, y - inst.gamma * inst.C(y))
    x1 = (1.0 - s.lam) * y + s.lam * p
    _check(n, x1)
    return IterateState(x1, st.x_curr, st.u, n + 1)


def fb_step_double(inst: FbInstance, s: Schedule, st: IterateState) -> IterateState:
    n = st.n
    d = st.x_curr - st.x_prev
    y = st.x_curr + s.alpha(n) * d
    z = st.x_curr + s.beta(n) * d
    x1 = inst.resolvent(inst.gamma, y - inst.gamma * inst.C(z))
    _check(n, x1)
    return IterateState(x1, st.x_curr, st.u, n + 1)


def fb_bundle(inst: FbInstance) -> OperatorBundle:
    g = inst.gamma
    return OperatorBundle(
        warped_resolvent=lambda n, v: inst.resolvent(g, g * v),
        kernel=lambda n, x: x / g,
        cocoercive=inst.C,
        metric=Metric.identity(),
        mu=inst.mu,
        zeta=0.0,
        t_neg_monotone=True,
        t_map=lambda n, gamma, v: np.zeros_like(v),
    )


# --------------------------------------------------------------------------
# forward-half-reflected-backward


@dataclass(frozen=True)
class FhrbInstance:
    """``0 in (A~ + B + C) x``.

    ``B`` is ``zeta_b``-Lipschitz (and monotone when ``b_monotone``),
    ``C`` is ``mu``-cocoercive and ``resolvent_Atilde(gamma, v)`` is
    ``J_{gamma A~}(v)``.
    """

    resolvent_Atilde: Callable[[float, np.ndarray], np.ndarray]
    B: Callable[[np.ndarray], np.ndarray]
    zeta_b: float
    C: Callable[[np.ndarray], np.ndarray]
    mu: float
    gamma: float
    b_monotone: bool = True


@dataclass(frozen=True)
class FhrbState:
    """Iterates plus the cached reflections ``B y_{n-1}`` and ``B p_n``.

    ``p_n`` is the most recent resolvent output; it coincides with
    ``x_n`` unless the step is relaxed.
    """

    x_curr: np.ndarray
    x_prev: np.ndarray
    By_prev: np.ndarray
    Bp: np.ndarray
    n: int = 0


def fhrb_start(inst: FhrbInstance, x0, x_minus1=None) -> FhrbState:
    """Start with ``y_{-1} = x_{-1}`` and ``p_0 = x_0``."""
    x0 = np.asarray(x0, dtype=np.float64)
    xm = x0.copy() if x_minus1 is None else np.asarray(x_minus1, dtype=np.float64)
    return FhrbState(x0, xm, inst.B(xm), inst.B(x0), 0)


def fhrb_engine_start(inst: FhrbInstance, x0, x_minus1=None) -> IterateState:
    """Engine state matching :func:`fhrb_start` (``u_0 = -gamma (B x_0 - B x_{-1})``)."""
    x0 = np.asarray(x0, dtype=np.float64)
    xm = x0.copy() if x_minus1 is None else np.asarray(x_minus1, dtype=np.float64)
    u0 = -inst.gamma * (inst.B(x0) - inst.B(xm))
    return IterateState(x0, xm, u0, 0)


def fhrb_step(inst: FhrbInstance, s: Schedule, st: FhrbState, variant="alg1",
              reflect_iterate=False) -> FhrbState:
    """One FHRB step.

    ``alg1`` is the inertial step with relaxation ``s.lam``; ``alg2`` the
    double-inertial step with ``beta`` and momentum ``theta``.  With
    ``reflect_iterate`` the relaxed step reflects ``B x_n`` instead of the
    previous resolvent output ``B p_n``; both agree when ``lam == 1``.
    """
    n = st.n
    g = inst.gamma
    d = st.x_curr - st.x_prev
    y = st.x_curr + s.alpha(n) * d
    By = inst.B(y)
    if variant == "alg1":
        p = inst.resolvent_Atilde(g, y - g * (st.Bp + inst.C(y)) - g * (By - st.By_prev))
        x1 = (1.0 - s.lam) * y + s.lam * p
        _check(n, x1)
        Bp = inst.B(x1) if reflect_iterate else inst.B(p)
    elif variant == "alg2":
        z = st.x_curr + s.beta(n) * d
        x1 = inst.resolvent_Atilde(g, y - g * (st.Bp + inst.C(z) + By - st.By_prev)
                                   + s.theta(n) * d)
        _check(n, x1)
        Bp = inst.B(x1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return FhrbState(x1, st.x_curr, By, Bp, n + 1)


def fhrb_bundle(inst: FhrbInstance) -> OperatorBundle:
    g = inst.gamma
    return OperatorBundle(
        warped_resolvent=lambda n, v: inst.resolvent_Atilde(g, g * v),
        kernel=lambda n, x: x / g - inst.B(x),
        cocoercive=inst.C,
        metric=Metric.identity(),
        mu=inst.mu,
        zeta=g * inst.zeta_b,
        t_neg_monotone=inst.b_monotone,
        t_map=lambda n, gamma, v: -gamma * inst.B(v),
    )


# --------------------------------------------------------------------------
# primal-dual with block-triangular resolvent


class ProductSpace:
    """Flat packing of ``(x, v)`` pairs."""

    def __init__(self, primal_shape, dual_shape):
        self.primal_shape = tuple(primal_shape)
        self.dual_shape = tuple(dual_shape)
        self.split_at = int(np.prod(self.primal_shape))

    def pack(self, x, v):
        return np.concatenate([np.ravel(x), np.ravel(v)])

    def unpack(self, w):
        return (w[: self.split_at].reshape(self.primal_shape),
                w[self.split_at:].reshape(self.dual_shape))


@dataclass
class PdbtrInstance:
    """``0 in (A1 + B + C~) x + L* v`` and ``0 in A2^{-1} v - L x``.

    ``resolvent_A1(tau, v)`` is ``J_{tau A1}`` and
    ``resolvent_A2inv(sigma, v)`` is ``J_{sigma A2^{-1}}``.  ``B``
    defaults to zero (Condat-Vu), and with ``C_tilde`` also zero the
    scheme is Chambolle-Pock.
    """

    resolvent_A1: Callable
    resolvent_A2inv: Callable
    L: LinOp
    sigma: float
    tau: float
    B: Callable | None = None
    zeta: float = 0.0
    C_tilde: Callable | None = None
    mu: float = 1.0
    L_norm: float | None = None
    pd_kappa: float = field(init=False)

    def __post_init__(self):
        if self.L_norm is None:
            self.L_norm = self.L.norm_estimate
        if self.L_norm is None:
            self.L_norm = power_iteration(self.L, seed=0, max_iters=5000, tol=1e-12).norm
        self.pd_kappa = 1.0 - self.sigma * self.tau * self.L_norm ** 2
        # the boundary case 1 = sigma tau ||L||^2 is rejected up to roundoff
        if self.pd_kappa <= 1e-12:
            raise MetricError(f"1 - sigma tau ||L||^2 = {self.pd_kappa:.3g} <= 0")
        if self.B is None:
            self.B = _zero
        if self.C_tilde is None:
            self.C_tilde = _zero


@dataclass(frozen=True)
class PdState:
    x: np.ndarray
    v: np.ndarray
    x_prev: np.ndarray
    v_prev: np.ndarray
    By_prev: np.ndarray
    Bp: np.ndarray
    n: int = 0


def pdbtr_start(inst: PdbtrInstance, x0, v0, x_minus1=None, v_minus1=None) -> PdState:
    x0 = np.asarray(x0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    xm = x0.copy() if x_minus1 is None else np.asarray(x_minus1, dtype=np.float64)
    vm = v0.copy() if v_minus1 is None else np.asarray(v_minus1, dtype=np.float64)
    return PdState(x0, v0, xm, vm, inst.B(xm), inst.B(x0), 0)


def pdbtr_step(inst: PdbtrInstance, s: Schedule, st: PdState, relax_at_iterate=False,
               reflect_iterate=False) -> PdState:
    """One inertial, relaxed PDBTR step.

    The primal resolvent comes first; the dual resolvent reflects the new
    primal point ``p``.  By default relaxation is around the extrapolated
    pair ``(y, w)``; ``relax_at_iterate`` relaxes around ``(x_n, v_n)``
    instead (identical when ``alpha == 0``).
    """
    n = st.n
    a = s.alpha(n)
    tau, sigma = inst.tau, inst.sigma
    y = st.x + a * (st.x - st.x_prev)
    w = st.v + a * (st.v - st.v_prev)
    By = inst.B(y)
    p = inst.resolvent_A1(
        tau, y - tau * inst.L.adjoint_apply(w)
        - tau * (st.Bp + By - st.By_prev + inst.C_tilde(y)))
    q = inst.resolvent_A2inv(sigma, w + sigma * inst.L.apply(2.0 * p - y))
    lam = s.lam
    if relax_at_iterate:
        x1 = (1.0 - lam) * st.x + lam * p
        v1 = (1.0 - lam) * st.v + lam * q
    else:
        x1 = (1.0 - lam) * y + lam * p
        v1 = (1.0 - lam) * w + lam * q
    _check(n, x1, v1)
    Bp = inst.B(x1) if reflect_iterate else inst.B(p)
    return PdState(x1, v1, st.x, st.v, By, Bp, n + 1)


def pdbtr_bundle(inst: PdbtrInstance) -> tuple[OperatorBundle, ProductSpace]:
    """Engine embedding on the product space.

    Kernel ``M(x, v) = (x/tau - Bx - L*v, v/sigma - Lx)`` and metric
    ``S(x, v) = (x - tau L* v, tau v / sigma - tau L x)``.  Then
    ``tau M - S = (-tau B, 0)`` and the warped resolvent is block
    triangular.
    """
    L = inst.L
    tau, sigma = inst.tau, inst.sigma
    sp = ProductSpace(L.domain_shape, L.range_shape)

    def kernel(n, z):
        x, v = sp.unpack(z)
        return sp.pack(x / tau - inst.B(x) - L.adjoint_apply(v), v / sigma - L.apply(x))

    def resolvent(n, z):
        a, b = sp.unpack(z)
        p = inst.resolvent_A1(tau, tau * a)
        q = inst.resolvent_A2inv(sigma, sigma * b + 2.0 * sigma * L.apply(p))
        return sp.pack(p, q)

    def s_apply(z):
        x, v = sp.unpack(z)
        return sp.pack(x - tau * L.adjoint_apply(v), tau * v / sigma - tau * L.apply(x))

    inv_cache = {}

    def s_apply_inv(z):
        if "m" not in inv_cache:
            n = z.size
            cols = [s_apply(e) for e in np.eye(n)]
            mat = np.stack(cols, axis=1)
            inv_cache["m"] = np.linalg.inv(mat)
        return inv_cache["m"] @ z

    def cocoercive(z):
        x, v = sp.unpack(z)
        return sp.pack(inst.C_tilde(x), np.zeros_like(v))

    def t_map(n, gamma, z):
        x, v = sp.unpack(z)
        return sp.pack(-gamma * inst.B(x), np.zeros_like(v))

    # smallest eigenvalue of [[1, -tau L*], [-tau L, tau/sigma]]
    r = tau / sigma
    lb = 0.5 * ((1.0 + r) - np.sqrt((1.0 - r) ** 2 + 4.0 * (tau * inst.L_norm) ** 2))
    metric = Metric(s_apply, s_apply_inv, lb, "pdbtr")
    bundle = OperatorBundle(
        warped_resolvent=resolvent,
        kernel=kernel,
        cocoercive=cocoercive,
        metric=metric,
        mu=inst.mu * inst.pd_kappa,
        zeta=tau * inst.zeta / inst.pd_kappa,
        t_neg_monotone=True,
        t_map=t_map,
    )
    return bundle, sp

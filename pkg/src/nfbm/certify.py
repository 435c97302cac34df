"""Convergence coefficients, parameter certificates and closed-form parameters.

Two families of conditions are evaluated:

* the inertial/relaxed recurrence (``alg1``): ``rho_n >= 0`` and
  ``eta_n - xi_{n+1} >= eps`` together with ``alpha_n`` non-decreasing
  (and ``xi_n`` non-decreasing when ``lambda < 1``);
* the double-inertial recurrence (``alg2``): ``at_n - gamma_n beta_n/(2 mu)
  - zeta_n alpha_n >= 0`` and ``eta_n - xi_{n+1} >= eps`` with
  ``at_n = alpha_n + theta_n`` non-decreasing.

Violations are reported in a :class:`Certificate`, never raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from .errors import InfeasibleParametersError, ParameterError

__all__ = [
    "SAFETY",
    "STRICT_TOL",
    "ProblemConstants",
    "Certificate",
    "CertRow",
    "Coeffs1",
    "Coeffs2",
    "as_seq",
    "coeffs_alg1",
    "coeffs_alg2",
    "certify_alg1",
    "certify_alg2",
    "step_gamma",
    "table_params",
    "TableParams",
    "certify_special",
    "SpecialCertificate",
    "fhrb_constants",
    "METHODS",
]

# Safety factor multiplying every closed-form parameter.
SAFETY = 0.99
# Strict inequalities "> 0" are checked as ">= STRICT_TOL".
STRICT_TOL = 1e-12

METHODS = ("FHRB", "FHRBSI", "FHRBI", "FHRBDI", "FHRBSDI", "FHRBRI")


def as_seq(value) -> Callable[[int], float]:
    """Turn a constant into a constant sequence; leave callables alone."""
    if callable(value):
        return value
    v = float(value)
    return lambda n: v


def _at(seq, n):
    # index -1 is mapped to 0
    return seq(max(n, 0))


@dataclass(frozen=True)
class ProblemConstants:
    """Constants entering the convergence conditions.

    ``zeta_seq(n)`` is the Lipschitz constant of ``gamma_n M_n - S``
    (already multiplied by the step size for FHRB-type instances).
    """

    mu: float
    zeta_seq: Callable[[int], float]
    gamma_seq: Callable[[int], float]
    epsilon_margin: float = STRICT_TOL
    t_neg_monotone: bool = False
    lam: float = 1.0
    epsilon_assump: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "zeta_seq", as_seq(self.zeta_seq))
        object.__setattr__(self, "gamma_seq", as_seq(self.gamma_seq))
        if not 0.0 < self.lam < 2.0:
            raise ParameterError(f"lambda must lie in (0, 2), got {self.lam}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")

    def zeta(self, n):
        return _at(self.zeta_seq, n)

    def gamma(self, n):
        return _at(self.gamma_seq, n)


class Coeffs1(NamedTuple):
    nu: float
    rho: float
    eta: float
    xi: float


class Coeffs2(NamedTuple):
    alpha_tilde: float
    eta: float
    xi: float
    beta_gap: float  # at_n - gamma_n beta_n / (2 mu) - zeta_n alpha_n


def coeffs_alg1(c: ProblemConstants, alpha, n: int) -> Coeffs1:
    """``(nu_n, rho_n, eta_n, xi_n)`` for the inertial/relaxed recurrence."""
    alpha = as_seq(alpha)
    lam = c.lam
    z, zp = c.zeta(n), c.zeta(n - 1)
    a = _at(alpha, n)
    if c.t_neg_monotone and lam >= 1.0:
        nu = zp
    else:
        nu = 2.0 * z + zp
    r = abs(1.0 - lam)
    rho = 2.0 - lam - r * nu - c.gamma(n) / (2.0 * c.mu) - (1.0 + r) * z
    eta = (1.0 - a) * rho / lam - lam * zp
    xi = a * (1.0 + a) + a * (1.0 - a) * rho / lam
    return Coeffs1(nu, rho, eta, xi)


def coeffs_alg2(c: ProblemConstants, alpha, beta, theta, n: int) -> Coeffs2:
    """``(at_n, eta_n, xi_n)`` for the double-inertial recurrence."""
    a = _at(as_seq(alpha), n)
    b = _at(as_seq(beta), n)
    t = _at(as_seq(theta), n)
    g = c.gamma(n) / (2.0 * c.mu)
    z, zp = c.zeta(n), c.zeta(n - 1)
    at = a + t
    eta = 1.0 - at - g * (1.0 - b) - z * (1.0 - a) - zp
    xi = 2.0 * at - g * b * (1.0 - b) - z * a * (1.0 - a)
    return Coeffs2(at, eta, xi, at - g * b - z * a)


class CertRow(NamedTuple):
    n: int
    rho: float  # alg1: rho_n ; alg2: the beta-gap quantity
    nu: float  # alg1: nu_n ; alg2: at_n
    eta: float
    xi_next: float
    margin: float  # eta_n - xi_{n+1} - eps


@dataclass
class Certificate:
    ok: bool
    per_n: list = field(default_factory=list)
    first_violation: tuple | None = None
    variant: str = "alg1"
    mode: str = "sequence"

    def report(self) -> str:
        """Line-oriented human readable report."""
        lines = [f"certificate {self.variant} ({self.mode}): {'OK' if self.ok else 'VIOLATED'}"]
        if self.first_violation is not None:
            n, name = self.first_violation
            lines.append(f"first violation: n={n} {name}")
        head = "rho" if self.variant == "alg1" else "gap"
        second = "nu" if self.variant == "alg1" else "alpha_tilde"
        for row in self.per_n[:20]:
            lines.append(
                f"n={row.n} {head}={row.rho:.6g} {second}={row.nu:.6g} eta={row.eta:.6g} "
                f"xi_next={row.xi_next:.6g} margin={row.margin:.6g}"
            )
        if len(self.per_n) > 20:
            lines.append(f"... {len(self.per_n) - 20} more rows")
        return "\n".join(lines)

    def record(self) -> dict:
        """Flat key/value record (consumed by the benchmark writer)."""
        rec = {"certified": self.ok, "variant": self.variant, "mode": self.mode}
        if self.first_violation is not None:
            rec["violation_n"], rec["violation"] = self.first_violation
        if self.per_n:
            rec["min_margin"] = min(r.margin for r in self.per_n)
        return rec


def _violate(cert, n, name):
    if cert.first_violation is None:
        cert.first_violation = (n, name)
    cert.ok = False


def certify_alg1(c: ProblemConstants, alpha, horizon: int | None = None, n0: int = 0) -> Certificate:
    """Check the convergence conditions of the inertial/relaxed recurrence.

    With ``horizon=None`` the parameters are taken as constant and the
    stationary inequalities are evaluated once (at ``n = n0``).  Otherwise
    every ``n0 <= n < horizon`` is checked, which includes the
    monotonicity requirements on ``alpha_n`` and ``xi_n``.
    """
    alpha = as_seq(alpha)
    mode = "constant" if horizon is None else "sequence"
    cert = Certificate(True, variant="alg1", mode=mode)
    stop = n0 + 1 if horizon is None else horizon
    if stop <= n0:
        raise ValueError("horizon must exceed n0")
    eps = c.epsilon_margin
    prev_xi = None
    for n in range(n0, stop):
        k = coeffs_alg1(c, alpha, n)
        k1 = coeffs_alg1(c, alpha, n + 1)
        margin = k.eta - k1.xi - eps
        cert.per_n.append(CertRow(n, k.rho, k.nu, k.eta, k1.xi, margin))
        if c.zeta(n) > 1.0 - c.epsilon_assump:
            _violate(cert, n, "zeta_n <= 1 - eps")
        if k.rho < 0:
            _violate(cert, n, "rho_n >= 0")
        if margin < 0:
            _violate(cert, n, "eta_n - xi_{n+1} >= eps")
        if horizon is not None:
            if alpha(n + 1) < alpha(n):
                _violate(cert, n, "alpha_n non-decreasing")
            if c.lam < 1.0 and prev_xi is not None and k.xi < prev_xi:
                _violate(cert, n, "xi_n non-decreasing")
        prev_xi = k.xi
    if horizon is not None and c.lam < 1.0:
        k = coeffs_alg1(c, alpha, stop)
        if k.xi < prev_xi:
            _violate(cert, stop - 1, "xi_n non-decreasing")
    return cert


def certify_alg2(c: ProblemConstants, alpha, beta, theta, horizon: int | None = None,
                 n0: int = 0) -> Certificate:
    """Check the convergence conditions of the double-inertial recurrence."""
    alpha, beta, theta = as_seq(alpha), as_seq(beta), as_seq(theta)
    mode = "constant" if horizon is None else "sequence"
    cert = Certificate(True, variant="alg2", mode=mode)
    stop = n0 + 1 if horizon is None else horizon
    if stop <= n0:
        raise ValueError("horizon must exceed n0")
    eps = c.epsilon_margin
    for n in range(n0, stop):
        k = coeffs_alg2(c, alpha, beta, theta, n)
        k1 = coeffs_alg2(c, alpha, beta, theta, n + 1)
        margin = k.eta - k1.xi - eps
        cert.per_n.append(CertRow(n, k.beta_gap, k.alpha_tilde, k.eta, k1.xi, margin))
        if c.zeta(n) > 1.0 - c.epsilon_assump:
            _violate(cert, n, "zeta_n <= 1 - eps")
        if k.beta_gap < 0:
            _violate(cert, n, "alpha_tilde_n - gamma_n beta_n/(2mu) - zeta_n alpha_n >= 0")
        if margin < 0:
            _violate(cert, n, "eta_n - xi_{n+1} >= eps")
        if horizon is not None and k1.alpha_tilde < k.alpha_tilde:
            _violate(cert, n, "alpha_tilde_n non-decreasing")
    return cert


def fhrb_constants(gamma, mu, zeta_b, lam=1.0, epsilon_margin=STRICT_TOL) -> ProblemConstants:
    """Constants of the FHRB embedding: ``zeta_n = gamma * zeta_b``, ``-T`` monotone."""
    return ProblemConstants(mu=mu, zeta_seq=gamma * zeta_b, gamma_seq=gamma,
                            epsilon_margin=epsilon_margin, t_neg_monotone=True, lam=lam)


# --------------------------------------------------------------------------
# closed-form parameters


def step_gamma(step_kappa, mu, zeta) -> float:
    """Step size ``2 mu kappa / (1 + 4 mu zeta)`` (``kappa`` in (0, 1])."""
    if not 0.0 < step_kappa <= 1.0:
        raise ParameterError(f"step kappa must lie in (0, 1], got {step_kappa}")
    return 2.0 * mu * step_kappa / (1.0 + 4.0 * mu * zeta)


def _sqrt(quantity, value):
    if value < 0:
        raise InfeasibleParametersError(quantity, value)
    return math.sqrt(value)


def _nonneg(quantity, value):
    if value < 0:
        raise InfeasibleParametersError(quantity, value)
    return value


def theta1(gamma, mu, zeta, safety=SAFETY):
    gt = gamma * (zeta + 1.0 / (2.0 * mu))
    return _nonneg("theta1", safety / 3.0 * (1.0 - gt - zeta * gamma))


def alpha1(gamma, mu, zeta, safety=SAFETY):
    gt = gamma * (zeta + 1.0 / (2.0 * mu))
    rad = (3.0 - 2.0 * gt) ** 2 + 4.0 * (1.0 - zeta * gamma - gt) * gt
    val = safety / (2.0 * gt) * (2.0 * gt - 3.0 + _sqrt("alpha1 radicand", rad))
    return _nonneg("alpha1", val)


def alpha2(gamma, mu, zeta, beta=1.0, safety=SAFETY):
    zg = zeta * gamma
    rad = (3.0 - 2.0 * zg) ** 2 + 4.0 * zg * (1.0 - 2.0 * zg - (1.0 - beta) ** 2 * gamma / (2.0 * mu))
    val = safety / (2.0 * zg) * (2.0 * zg - 3.0 + _sqrt("alpha2 radicand", rad))
    return _nonneg("alpha2", val)


def theta2(gamma, mu, zeta, beta=1.0, safety=SAFETY):
    val = safety * (1.0 - gamma * (1.0 - beta) ** 2 / (2.0 * mu) - 2.0 * zeta * gamma) / 3.0
    return _nonneg("theta2", val)


def lambda1(gamma, mu, zeta, alpha, safety=SAFETY):
    zg = zeta * gamma
    s = 1.0 + 2.0 * zg + alpha * (1.0 + alpha)
    rad = s ** 2 + 4.0 * zg * (2.0 + zg - gamma / (2.0 * mu))
    val = safety / (2.0 * zg) * (_sqrt("lambda1 radicand", rad) - s)
    val = _nonneg("lambda1", val)
    if val >= 2.0:
        raise InfeasibleParametersError("lambda1 (must be < 2)", val)
    return val


class TableParams(NamedTuple):
    alpha: float
    beta: float
    theta: float
    lam: float


_CASES = {"FHRB": 1, "FHRBSI": 3, "FHRBI": 3, "FHRBDI": 3, "FHRBSDI": 1, "FHRBRI": 4}


def table_params(method: str, case: int, gamma: float, mu: float, zeta: float,
                 beta: float | None = None, safety: float = SAFETY) -> TableParams:
    """Inertial, momentum and relaxation parameters of the FHRB family.

    ``zeta`` is the Lipschitz constant of the reflected operator ``B``.
    FHRBI and FHRBRI run the inertial/relaxed recurrence, where the
    cocoercive operator is evaluated at the extrapolated point, so their
    ``beta`` equals ``alpha``.
    """
    method = method.upper()
    if method not in _CASES:
        raise ParameterError(f"unknown method {method!r}")
    if not 1 <= case <= _CASES[method]:
        raise ParameterError(f"{method} has cases 1..{_CASES[method]}, got {case}")
    if gamma <= 0 or mu <= 0 or zeta <= 0:
        raise ParameterError("gamma, mu and zeta must be positive")
    if method == "FHRB":
        return TableParams(0.0, 0.0, 0.0, 1.0)
    if method == "FHRBSI":
        return TableParams(0.0, 0.0, theta1(gamma, mu, zeta, safety) * case / 3.0, 1.0)
    if method == "FHRBI":
        a = alpha1(gamma, mu, zeta, safety) * case / 3.0
        return TableParams(a, a, 0.0, 1.0)
    if method == "FHRBDI":
        b = 1.0 if beta is None else beta
        return TableParams(alpha2(gamma, mu, zeta, b, safety) * case / 3.0, b, 0.0, 1.0)
    if method == "FHRBSDI":
        b = 1.0 if beta is None else beta
        return TableParams(0.0, b, theta2(gamma, mu, zeta, b, safety), 1.0)
    # FHRBRI
    a = alpha1(gamma, mu, zeta, safety) * (4 - case) / 4.0
    return TableParams(a, a, 0.0, lambda1(gamma, mu, zeta, a, safety))


# --------------------------------------------------------------------------
# closed-form conditions of the special cases


@dataclass
class SpecialCertificate:
    method: str
    ok: bool
    margin: float
    name: str
    derived: dict = field(default_factory=dict)

    def report(self) -> str:
        lines = [f"certificate {self.method}: {'OK' if self.ok else 'VIOLATED'}",
                 f"{self.name}: margin={self.margin:.6g}"]
        lines += [f"{k}={v:.6g}" for k, v in self.derived.items()]
        return "\n".join(lines)

    def record(self) -> dict:
        rec = {"method": self.method, "certified": self.ok, "margin": self.margin,
               "condition": self.name}
        rec.update(self.derived)
        return rec


def fhrb_condition(alpha, lam, gamma, mu, zeta) -> float:
    """Left-hand side of the relaxed inertial FHRB condition (must be > 0)."""
    zg = zeta * gamma
    r = abs(1.0 - lam)
    return ((1.0 - alpha) ** 2 * (2.0 - lam - (1.0 + 2.0 * r) * zg - gamma / (2.0 * mu))
            - lam ** 2 * zg - lam * alpha * (1.0 + alpha))


def fhrb_di_conditions(alpha, beta, theta, gamma, mu, zeta):
    """Both left-hand sides of the double-inertial FHRB conditions (> 0)."""
    zg = zeta * gamma
    first = (1.0 - 3.0 * (alpha + theta) - gamma * (1.0 - beta) ** 2 / (2.0 * mu)
             - zg - zg * (1.0 - alpha) ** 2)
    second = alpha + theta - gamma * beta / (2.0 * mu) - zg * alpha
    return first, second


def certify_special(method: str, *, gamma=None, mu, alpha=0.0, beta=0.0, theta=0.0, lam=1.0,
                    zeta=0.0, sigma=None, tau=None, L_norm=None) -> SpecialCertificate:
    """Closed-form convergence conditions of the named special case.

    ``method`` is one of ``FB`` (relaxed inertial forward-backward),
    ``FB-DI`` (double-inertial FB), ``FHRB`` (relaxed inertial FHRB),
    ``FHRB-DI`` and ``PDBTR`` (block-triangular primal-dual, which takes
    ``sigma``, ``tau`` and ``L_norm`` instead of ``gamma``).
    """
    m = method.upper()
    tol = STRICT_TOL
    if m == "FB":
        val = (1.0 - alpha) ** 2 / lam * (2.0 - lam - gamma / (2.0 * mu)) - alpha * (1.0 + alpha)
        return SpecialCertificate(m, val >= tol, val, "(1-a)^2/l (2-l-g/2mu) - a(1+a) > 0")
    if m == "FB-DI":
        first, second = fhrb_di_conditions(alpha, beta, 0.0, gamma, mu, 0.0)
        ok = second >= 0.0 and first >= tol
        return SpecialCertificate(m, ok, min(first, second),
                                  "a - g b/2mu >= 0 and 1-3a-g(1-b)^2/2mu > 0",
                                  {"first": first, "second": second})
    if m == "FHRB":
        val = fhrb_condition(alpha, lam, gamma, mu, zeta)
        return SpecialCertificate(m, val >= tol, val, "relaxed inertial FHRB condition > 0")
    if m == "FHRB-DI":
        first, second = fhrb_di_conditions(alpha, beta, theta, gamma, mu, zeta)
        ok = first >= tol and second >= tol
        return SpecialCertificate(m, ok, min(first, second),
                                  "double-inertial FHRB conditions > 0",
                                  {"first": first, "second": second})
    if m == "PDBTR":
        if sigma is None or tau is None or L_norm is None:
            raise ParameterError("PDBTR needs sigma, tau and L_norm")
        pd_kappa = 1.0 - sigma * tau * L_norm ** 2
        if pd_kappa <= 0:
            from .errors import MetricError
            raise MetricError(f"1 - sigma tau ||L||^2 = {pd_kappa:.3g} <= 0: "
                              "metric is not strongly monotone")
        zeta_eff = tau * zeta / pd_kappa
        mu_eff = mu * pd_kappa
        r = abs(1.0 - lam)
        val = ((1.0 - alpha) ** 2 * (2.0 - lam - (1.0 + 2.0 * r) * zeta_eff - tau / (2.0 * mu_eff))
               - lam ** 2 * zeta_eff - lam * alpha * (1.0 + alpha))
        return SpecialCertificate(m, val >= tol, val, "relaxed inertial PDBTR condition > 0",
                                  {"pd_kappa": pd_kappa, "zeta_eff": zeta_eff,
                                   "mu_eff": mu_eff})
    raise ParameterError(f"unknown special case {method!r}")

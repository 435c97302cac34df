"""Total-variation deblurring benchmark for the FHRB family.

The problem is ``min_x 1/2 ||K x - b||^2 + rho ||D x||_1`` over the box
``[0, 255]^{N x N}``.  It is solved as a primal-dual inclusion on pairs
``(x, u)`` (image, gradient field) with

* ``A~(x, u) = N_box(x) x d g*(u)`` (resolvent: box clamp, l_inf clamp)
* ``B(x, u) = (D* u, -D x)`` (skew, ``||D||``-Lipschitz)
* ``C(x, u) = (K*(K x - b), 0)`` (``1/||K||^2``-cocoercive)

Every run records the resolved parameters and whether they satisfy the
convergence conditions; runs that do not are labelled ``exploratory``.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .certify import (certify_alg1, certify_alg2, fhrb_constants, step_gamma, table_params)
from .engine import RunRecord
from .errors import InfeasibleParametersError, ParameterError
from .imaging import (average_kernel, blur, blur_adjoint, blur_op, builtin_image, grad,
                      grad_adjoint, grad_op, project_box, project_linf, psnr, read_pgm,
                      rel_error)
from .linops import power_iteration

__all__ = [
    "ALGOS",
    "PRESETS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ImagingProblem",
    "ImagingState",
    "Resolved",
    "build_problem",
    "resolve_params",
    "imaging_start",
    "imaging_step",
    "run_imaging",
    "run_experiment",
    "run_grid",
    "preset_grid",
    "write_csv",
    "emit_plotdata",
    "read_config",
]

log = logging.getLogger(__name__)

ALGOS = ("FHRB", "FHRBSI", "FHRBI", "FHRBDI", "FHRBSDI", "FHRBRI", "FHRBIR")

CSV_COLUMNS = ("algo", "case", "kappa", "alpha", "beta", "theta", "lambda", "N0", "IN_mean",
               "T_mean", "converged_count", "psnr_mean", "gamma", "status")

# default inertia of the restart strategy when --alpha is not given
RESTART_ALPHA = 0.2


@dataclass
class ExperimentConfig:
    """One benchmark cell.  ``None`` overrides mean "use the closed-form value"."""

    algo: str = "FHRB"
    case: int = 1
    kappa: float = 0.5
    alpha: float | None = None
    beta: float | None = None
    theta: float | None = None
    lam: float | None = None
    gamma: float | None = None
    restart_n0: int | None = None
    tol: float = 1e-6
    max_iters: int = 10_000
    seed: int = 0
    realizations: int = 5
    image: str = "builtin"
    n: int = 64
    kernel_size: int = 3
    noise_std: float = 10.0
    rho: float = 5.0
    estimate_zeta: bool = False

    def __post_init__(self):
        self.algo = self.algo.upper()
        if self.algo not in ALGOS:
            raise ParameterError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if not 0.0 < self.kappa <= 1.0:
            raise ParameterError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.tol <= 0:
            raise ParameterError("tol must be positive")
        if self.max_iters < 1 or self.realizations < 1:
            raise ParameterError("max_iters and realizations must be >= 1")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be nonnegative")
        if self.rho <= 0:
            raise ParameterError("rho must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel size must be a positive odd integer, got {self.kernel_size}")


@dataclass
class ImagingProblem:
    x_true: np.ndarray
    b: np.ndarray
    kernel: object
    rho: float
    mu: float
    zeta: float

    def grad_h(self, x):
        return blur_adjoint(blur(x, self.kernel) - self.b, self.kernel)

    def objective(self, x):
        r = blur(x, self.kernel) - self.b
        return 0.5 * float(np.sum(r * r)) + self.rho * float(np.sum(np.abs(grad(x))))


def _load_image(cfg: ExperimentConfig):
    if cfg.image in ("", "builtin"):
        return builtin_image(cfg.n)
    img = read_pgm(cfg.image)
    if img.shape[0] != img.shape[1]:
        raise ParameterError(f"image {cfg.image!r} is not square: {img.shape}")
    return img


def build_problem(cfg: ExperimentConfig, realization: int = 0) -> ImagingProblem:
    """Blurred noisy observation ``b = K x + noise`` of the configured image.

    The noise is Gaussian with standard deviation ``noise_std``, drawn
    from a generator seeded with ``(seed, realization)``.
    """
    x_true = _load_image(cfg)
    n = x_true.shape[0]
    kernel = average_kernel(cfg.kernel_size)
    if kernel.size > n:
        raise ParameterError("kernel larger than image")
    b = blur(x_true, kernel)
    if cfg.noise_std > 0:
        rng = np.random.default_rng([cfg.seed, realization])
        b = b + cfg.noise_std * rng.standard_normal(b.shape)
    # an averaging kernel with symmetric padding is doubly stochastic, so ||K|| = 1
    mu = 1.0
    zeta = math.sqrt(8.0)
    if cfg.estimate_zeta:
        zeta = power_iteration(grad_op(n), seed=cfg.seed, max_iters=5000, tol=1e-10).norm
    return ImagingProblem(x_true, b, kernel, cfg.rho, mu, zeta)


@dataclass
class Resolved:
    """Parameters of one run and their certification verdict."""

    alpha: float = 0.0
    beta: float = 0.0
    theta: float = 0.0
    lam: float = 1.0
    gamma: float = 0.0
    n0: int | None = None
    status: str = "certified"
    certificate: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.status == "certified"

    def alpha_at(self, n):
        if self.n0 is not None and n >= self.n0:
            return 0.0
        return self.alpha

    def as_dict(self):
        d = {"alpha": self.alpha, "beta": self.beta, "theta": self.theta, "lambda": self.lam,
             "gamma": self.gamma, "N0": self.n0, "status": self.status}
        d.update({f"cert_{k}": v for k, v in self.certificate.items()})
        return d


def resolve_params(cfg: ExperimentConfig, mu: float = 1.0, zeta: float = math.sqrt(8.0)) -> Resolved:
    """Closed-form parameters for ``cfg`` with overrides applied, plus the verdict.

    Raises :class:`InfeasibleParametersError` when a closed form has no
    admissible value.
    """
    gamma = cfg.gamma if cfg.gamma is not None else step_gamma(cfg.kappa, mu, zeta)
    n0 = None
    if cfg.algo == "FHRBIR":
        a = RESTART_ALPHA if cfg.alpha is None else cfg.alpha
        b = a if cfg.beta is None else cfg.beta
        th, lam = 0.0, 1.0
        n0 = cfg.restart_n0 if cfg.restart_n0 is not None else max(1, cfg.max_iters // 10)
    else:
        tp = table_params(cfg.algo, cfg.case, gamma, mu, zeta, beta=cfg.beta)
        a, b, th, lam = tp.alpha, tp.beta, tp.theta, tp.lam
        if cfg.alpha is not None:
            a = cfg.alpha
            if cfg.algo in ("FHRBI", "FHRBRI") and cfg.beta is None:
                b = a
        n0 = cfg.restart_n0
    if cfg.theta is not None:
        th = cfg.theta
    if cfg.lam is not None:
        lam = cfg.lam
    res = Resolved(a, b, th, lam, gamma, n0)
    _certify(res, mu, zeta)
    return res


def _certify(res: Resolved, mu, zeta):
    c = fhrb_constants(res.gamma, mu, zeta, lam=res.lam)
    # after a restart only the tail (alpha = 0) matters for convergence
    a = 0.0 if res.n0 is not None else res.alpha
    start = 0 if res.n0 is None else res.n0
    if res.theta == 0.0 and res.beta == res.alpha:
        cert = certify_alg1(c, a, n0=start)
    elif res.lam == 1.0:
        cert = certify_alg2(c, a, res.beta, res.theta, n0=start)
    else:
        res.status = "exploratory"
        res.certificate = {"certified": False, "violation": "no condition covers this combination"}
        return
    res.certificate = cert.record()
    res.status = "certified" if cert.ok else "exploratory"


# --------------------------------------------------------------------------
# the primal-dual iteration


@dataclass(frozen=True)
class ImagingState:
    """Image/dual iterates plus the points used by the reflected term.

    ``r1, r2`` hold the previous resolvent output (or ``x_n`` when
    reflecting the iterate) and ``y1_prev, y2_prev`` the previous
    extrapolation.
    """

    x1: np.ndarray
    x2: np.ndarray
    x1_prev: np.ndarray
    x2_prev: np.ndarray
    y1_prev: np.ndarray
    y2_prev: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    n: int = 0


def imaging_start(problem: ImagingProblem, x1=None, x2=None) -> ImagingState:
    """Start at ``(b, 0)`` with ``x_{-1} = y_{-1} = x_0``."""
    x1 = problem.b.copy() if x1 is None else np.asarray(x1, dtype=np.float64)
    x2 = np.zeros((2,) + x1.shape) if x2 is None else np.asarray(x2, dtype=np.float64)
    return ImagingState(x1, x2, x1, x2, x1, x2, x1, x2, 0)


def imaging_step(problem: ImagingProblem, params: Resolved, st: ImagingState,
                 reflect_iterate=False) -> ImagingState:
    """One step of the inertial, double-inertial, relaxed primal-dual FHRB iteration.

    The resolvent is centred at ``w = y + theta (x_n - x_{n-1})``; with
    ``reflect_iterate`` it is centred at ``x_n + theta (x_n - x_{n-1})`` and the
    reflection uses ``x_n``.  Both forms agree when ``alpha = 0`` and
    ``lambda = 1``.  Costs one gradient of ``h``, one ``D`` and one ``D*``.
    """
    n = st.n
    g = params.gamma
    a = params.alpha_at(n)
    d1 = st.x1 - st.x1_prev
    d2 = st.x2 - st.x2_prev
    y1 = st.x1 + a * d1
    y2 = st.x2 + a * d2
    z1 = st.x1 + params.beta * d1
    c1, c2 = (st.x1, st.x2) if reflect_iterate else (y1, y2)
    w1 = c1 + params.theta * d1
    w2 = c2 + params.theta * d2
    p1 = project_box(w1 - g * (grad_adjoint(st.r2 + y2 - st.y2_prev) + problem.grad_h(z1)))
    p2 = project_linf(w2 + g * grad(st.r1 + y1 - st.y1_prev), problem.rho)
    lam = params.lam
    if lam == 1.0:
        x1, x2 = p1, p2
    else:
        x1 = (1.0 - lam) * y1 + lam * p1
        x2 = (1.0 - lam) * y2 + lam * p2
    r1, r2 = (x1, x2) if reflect_iterate else (p1, p2)
    return ImagingState(x1, x2, st.x1, st.x2, y1, y2, r1, r2, n + 1)


def run_imaging(problem: ImagingProblem, params: Resolved, tol=1e-6, max_iters=10_000,
                reflect_iterate=False, blowup=1e10) -> RunRecord:
    """Iterate until the relative change of the image drops below ``tol``."""
    st = imaging_start(problem)
    rec = RunRecord(params=params.as_dict())
    bound = blowup * max(1.0, float(np.linalg.norm(st.x1)))
    t0 = time.perf_counter()
    for _ in range(max_iters):
        new = imaging_step(problem, params, st, reflect_iterate)
        if not (np.all(np.isfinite(new.x1)) and np.all(np.isfinite(new.x2))):
            rec.diverged = True
            break
        err = rel_error(new.x1, st.x1)
        rec.rel_errors.append(err)
        st = new
        rec.iterations = rec.last_finite = st.n
        if np.linalg.norm(st.x1) > bound:
            rec.diverged = True
            break
        if err < tol:
            rec.converged = True
            break
    rec.wall_time_s = time.perf_counter() - t0
    rec.x = st.x1
    rec.state = st
    rec.psnr = psnr(st.x1, problem.x_true)
    return rec


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    params: Resolved | None
    records: list = field(default_factory=list)
    error: str | None = None

    def row(self) -> dict:
        cfg = self.config
        row = {"algo": cfg.algo, "case": cfg.case, "kappa": cfg.kappa}
        if self.params is None:
            row.update({"status": "infeasible"})
            return row
        p = self.params
        row.update({"alpha": p.alpha, "beta": p.beta, "theta": p.theta, "lambda": p.lam,
                    "N0": p.n0, "gamma": p.gamma, "status": p.status})
        if self.records:
            recs = self.records
            row["IN_mean"] = float(np.mean([r.iterations for r in recs]))
            row["T_mean"] = float(np.mean([r.wall_time_s for r in recs]))
            row["converged_count"] = sum(r.converged for r in recs)
            row["psnr_mean"] = float(np.mean([r.psnr for r in recs]))
        return row


def run_experiment(cfg: ExperimentConfig, keep_iterates=False) -> ExperimentResult:
    """Run all realizations of one configuration."""
    try:
        first = build_problem(cfg, 0)
        params = resolve_params(cfg, first.mu, first.zeta)
    except InfeasibleParametersError as exc:
        log.warning("%s case %d kappa %g: %s", cfg.algo, cfg.case, cfg.kappa, exc)
        return ExperimentResult(cfg, None, error=str(exc))
    if not params.certified:
        log.info("%s case %d kappa %g runs exploratory parameters", cfg.algo, cfg.case, cfg.kappa)
    result = ExperimentResult(cfg, params)
    for r in range(cfg.realizations):
        problem = first if r == 0 else build_problem(cfg, r)
        rec = run_imaging(problem, params, cfg.tol, cfg.max_iters)
        if not keep_iterates:
            rec.state = None
        result.records.append(rec)
    return result


def run_grid(configs, progress=None) -> list:
    """Run every configuration in order and return the CSV rows."""
    rows = []
    for cfg in configs:
        res = run_experiment(cfg)
        rows.append(res.row())
        if progress is not None:
            progress(res)
    return rows


def preset_grid(name: str, base: ExperimentConfig | None = None) -> list:
    """Grid of configurations for one of the standard benchmark sweeps.

    ``kappa-sweep``: all closed-form parameter methods for kappa in 0.5..0.8;
    ``relaxed``: relaxed inertial cases at kappa 0.8; ``exploratory``:
    uncertified constant inertia at kappa 0.99; ``restart``: table
    parameters and restarted inertia at kappa 0.99; ``restart-9x9``: the
    restart strategy with a 9x9 blur and three restart points.
    """
    base = base or ExperimentConfig()
    rep = dataclasses.replace

    def cell(algo, case=1, kappa=0.5, **kw):
        return rep(base, algo=algo, case=case, kappa=kappa, **kw)

    if name == "kappa-sweep":
        out = []
        for k in (0.5, 0.6, 0.7, 0.8):
            out.append(cell("FHRB", 1, k))
            for algo in ("FHRBSI", "FHRBI", "FHRBDI"):
                out += [cell(algo, c, k) for c in (1, 2, 3)]
            out.append(cell("FHRBSDI", 1, k))
        return out
    if name == "relaxed":
        return [cell("FHRB", 1, 0.8)] + [cell("FHRBRI", c, 0.8) for c in (1, 2, 3, 4)]
    if name == "exploratory":
        out = [cell("FHRB", 1, 0.99)]
        out += [cell("FHRBSI", 1, 0.99, theta=t) for t in (0.1, 0.2, 0.25)]
        out += [cell("FHRBI", 1, 0.99, alpha=a, beta=a) for a in (0.1, 0.2, 0.25)]
        out += [cell("FHRBDI", 1, 0.99, alpha=a, beta=1.0) for a in (0.1, 0.2, 0.25)]
        return out
    if name == "restart":
        n0 = base.restart_n0 if base.restart_n0 is not None else max(1, base.max_iters // 10)
        return [cell("FHRB", 1, 0.99), cell("FHRBSI", 3, 0.99), cell("FHRBI", 3, 0.99),
                cell("FHRBDI", 3, 0.99, beta=0.05)] + [
            cell("FHRBIR", 1, 0.99, alpha=a, beta=a, restart_n0=n0) for a in (0.1, 0.2, 0.25)]
    if name == "restart-9x9":
        step = max(1, base.max_iters // 10)
        return [cell("FHRB", 1, 0.99, kernel_size=9)] + [
            cell("FHRBIR", 1, 0.99, alpha=0.2, beta=0.2, restart_n0=m * step, kernel_size=9)
            for m in (1, 2, 3)]
    raise ParameterError(f"unknown preset {name!r}; choose from {PRESETS}")


PRESETS = ("kappa-sweep", "relaxed", "exploratory", "restart", "restart-9x9")


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    return str(v)


def write_csv(rows, path, columns=CSV_COLUMNS):
    """Comma separated, header row, LF line endings, 6 significant digits."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(row.get(c)) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc


def emit_plotdata(record: RunRecord, path):
    """Write ``iter,rel_error,lyapunov`` rows for one run."""
    lyap = record.lyapunov
    # the energy trace has one more entry (the initial state) than rel_errors
    offset = 1 if len(lyap) == len(record.rel_errors) + 1 else 0
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iter", "rel_error", "lyapunov"))
            for i, err in enumerate(record.rel_errors):
                j = i + offset
                w.writerow((i + 1, _fmt(err), _fmt(lyap[j]) if j < len(lyap) else ""))
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc


# --------------------------------------------------------------------------
# config files


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Values stay strings."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OSError(f"cannot read config {os.fspath(path)!r}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{os.fspath(path)}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out

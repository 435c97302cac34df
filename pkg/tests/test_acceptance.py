"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line through the ``acceptance``
fixture; the lines are repeated in the terminal summary.
"""

import dataclasses
import math
import time

import numpy as np
from scipy.optimize import brentq

from instances import BoxQP, lasso_pd, random_fhrb
from nfbm.bench import ExperimentConfig, run_experiment
from nfbm.certify import (alpha1, alpha2, certify_alg1, certify_alg2, coeffs_alg1, coeffs_alg2,
                          fhrb_condition, fhrb_constants, fhrb_di_conditions, lambda1, step_gamma,
                          table_params, theta1, theta2)
from nfbm.engine import (IterateState, Schedule, initial_state, lyapunov_alg1, lyapunov_alg2,
                         lyapunov_start, step_base, step_double_inertial, step_inertial_relaxed)
from nfbm.imaging import (average_kernel, blur_op, grad_op, project_linf, prox_l1)
from nfbm.linops import LinOp, adjoint_mismatch, power_iteration
from nfbm.zoo import PdbtrInstance, fhrb_bundle, pdbtr_start, pdbtr_step

ZETA = math.sqrt(8.0)
KAPPAS = (0.5, 0.6, 0.7, 0.8)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_reduction_equivalence(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        inst, x0, _ = random_fhrb(seed, dim=20)
        b = fhrb_bundle(inst)
        base = one = two = IterateState(x0, x0, np.zeros_like(x0), 0)
        s_base = Schedule(inst.gamma)
        s_one = Schedule(inst.gamma, alpha=0.0, lam=1.0)
        s_two = Schedule(inst.gamma, alpha=0.0, beta=0.0, theta=0.0)
        for _ in range(50):
            base = step_base(b, s_base, base)
            one, _ = step_inertial_relaxed(b, s_one, one)
            two = step_double_inertial(b, s_two, two)
            worst = max(worst, _rel(one.x_curr, base.x_curr), _rel(two.x_curr, base.x_curr))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    acceptance(1, "reduction equivalence", ok, f"max rel diff {worst:.2e}, {elapsed:.2f} s")
    assert ok


def _root(f, lo, hi):
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def test_certificate_extremality(acceptance):
    t0 = time.perf_counter()
    failures = []
    s = 1.0 / 0.99
    for kappa in KAPPAS:
        g = step_gamma(kappa, 1.0, ZETA)
        # each closed form, its defining condition as a function of that parameter
        forms = {
            "theta1": (theta1(g, 1.0, ZETA),
                       lambda t: fhrb_di_conditions(0.0, 0.0, t, g, 1.0, ZETA)[0], 1.0),
            "alpha1": (alpha1(g, 1.0, ZETA),
                       lambda a: fhrb_condition(a, 1.0, g, 1.0, ZETA), 1.0),
            "alpha2": (alpha2(g, 1.0, ZETA),
                       lambda a: fhrb_di_conditions(a, 1.0, 0.0, g, 1.0, ZETA)[0], 1.0),
            "theta2": (theta2(g, 1.0, ZETA),
                       lambda t: fhrb_di_conditions(0.0, 1.0, t, g, 1.0, ZETA)[0], 1.0),
        }
        a1 = alpha1(g, 1.0, ZETA)
        for case in (1, 2, 3, 4):
            a = a1 * (4 - case) / 4.0
            forms[f"lambda1 case {case}"] = (
                lambda1(g, 1.0, ZETA, a),
                lambda lam, a=a: fhrb_condition(a, lam, g, 1.0, ZETA), 2.0)
        for name, (value, cond, hi) in forms.items():
            lo = 1.0 if name.startswith("lambda1") else 0.0
            exact = _root(cond, lo, hi)
            rel = abs(value * s - exact) / exact
            if rel > 1e-6:
                failures.append(f"{name} kappa={kappa}: rel gap {rel:.1e}")
            if cond(1.02 * value * s) >= 0:
                failures.append(f"{name} kappa={kappa}: 2% enlargement not violating")
    g = step_gamma(0.5, 1.0, ZETA)
    spots = {"gamma": (g, 0.081210, 1e-6), "theta1": (theta1(g, 1.0, ZETA), 0.165005, 1e-5),
             "alpha1": (alpha1(g, 1.0, ZETA), 0.196975, 1e-5)}
    for name, (got, want, tol) in spots.items():
        if abs(got - want) > tol:
            failures.append(f"{name}(kappa=0.5)={got:.7f}, expected {want} +- {tol:g}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 1.0:
        failures.append(f"runtime {elapsed:.2f} s")
    detail = "; ".join(failures) if failures else f"{elapsed:.2f} s"
    ok = not failures
    acceptance(2, "certificate extremality", ok, detail)
    assert ok, detail


_DESCENT_CELLS = ([("FHRB", 1)] + [(m, c) for m in ("FHRBSI", "FHRBI", "FHRBDI") for c in (1, 2, 3)]
                  + [("FHRBSDI", 1)] + [("FHRBRI", c) for c in (1, 2, 3, 4)])


def _descent_run(qp, inst, xs, params, max_iters=5000):
    b = fhrb_bundle(inst)
    s = Schedule(inst.gamma, alpha=params.alpha, beta=params.beta, theta=params.theta,
                 lam=params.lam)
    c = fhrb_constants(inst.gamma, inst.mu, inst.zeta_b, lam=params.lam)
    alg1 = params.theta == 0.0 and params.beta == params.alpha
    if alg1:
        cert = certify_alg1(c, params.alpha)
        eps = coeffs_alg1(c, s.alpha, 0).eta - coeffs_alg1(c, s.alpha, 1).xi
    else:
        cert = certify_alg2(c, params.alpha, params.beta, params.theta)
        eps = (coeffs_alg2(c, s.alpha, s.beta, s.theta, 0).eta
               - coeffs_alg2(c, s.alpha, s.beta, s.theta, 1).xi)
    if not cert.ok:
        return None
    st = initial_state(qp.x0)
    energy = [lyapunov_start(b, s, st, xs, "alg1" if alg1 else "alg2")]
    steps = 0.0
    for _ in range(max_iters):
        if alg1:
            new, tr = step_inertial_relaxed(b, s, st)
            energy.append(lyapunov_alg1(b, s, st, new, xs, tr).c_value)
        else:
            new = step_double_inertial(b, s, st)
            energy.append(lyapunov_alg2(b, s, st, new, xs).c_value)
        d = new.x_curr - st.x_curr
        steps += float(d @ d)
        st = new
        if np.linalg.norm(d) <= 1e-13 * max(np.linalg.norm(st.x_curr), 1.0):
            break
    energy = np.array(energy)
    c0 = energy[0]
    return {
        "negative": energy.min() < -1e-9 * c0,
        "increase": float(np.max(np.diff(energy))) > 1e-9 * c0,
        "sum_ok": steps <= c0 / eps + 1e-6,
    }


def test_lyapunov_descent(acceptance):
    t0 = time.perf_counter()
    qp = BoxQP(0, dim=50, ratio=10.0)
    xs = qp.solution(max_iters=1_000_000)
    inst = qp.instance(0.8)
    failures, checked, skipped = [], [], []
    for method, case in _DESCENT_CELLS:
        params = table_params(method, case, inst.gamma, inst.mu, inst.zeta_b)
        out = _descent_run(qp, inst, xs, params)
        label = f"{method}{case}"
        if out is None:
            skipped.append(label)
            continue
        checked.append(label)
        for key, bad in (("negative", out["negative"]), ("increase", out["increase"]),
                         ("partial sums", not out["sum_ok"])):
            if bad:
                failures.append(f"{label}: {key}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 30.0:
        failures.append(f"runtime {elapsed:.1f} s")
    ok = not failures and len(checked) >= 10
    detail = (f"{len(checked)} certified cells checked, uncertified skipped: "
              f"{', '.join(skipped) or 'none'}; {elapsed:.1f} s")
    if failures:
        detail = "; ".join(failures) + "; " + detail
    acceptance(3, "Lyapunov descent", ok, detail)
    assert ok, detail


def test_numerics_toolbox(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    n = 64
    kern = average_kernel(3)
    d_adj = adjoint_mismatch(grad_op(n), lambda: rng.standard_normal((n, n)),
                             lambda: rng.standard_normal((2, n, n)), trials=100)
    k_adj = adjoint_mismatch(blur_op(n, kern), lambda: rng.standard_normal((n, n)),
                             lambda: rng.standard_normal((n, n)), trials=100)
    moreau = 0.0
    for _ in range(20):
        v = 50.0 * rng.standard_normal((2, n, n))
        gam, rho = rng.uniform(0.01, 5.0), rng.uniform(0.1, 10.0)
        recon = prox_l1(v, gam * rho) + gam * project_linf(v / gam, rho)
        moreau = max(moreau, float(np.max(np.abs(recon - v))))
    d_norm = power_iteration(grad_op(256), seed=0, max_iters=3000, tol=1e-10).norm
    k_norm = power_iteration(blur_op(n, kern), seed=0, max_iters=20_000, tol=1e-14).norm
    elapsed = time.perf_counter() - t0
    ok = (d_adj <= 1e-10 and k_adj <= 1e-10 and moreau <= 1e-12
          and 2.82 <= d_norm <= 2.8285 and abs(k_norm - 1.0) <= 1e-6 and elapsed < 10.0)
    detail = (f"adjoint D {d_adj:.1e}, K {k_adj:.1e}; Moreau {moreau:.1e}; "
              f"||D||(256)={d_norm:.6f}; ||K||(64)={k_norm:.9f}; {elapsed:.1f} s")
    acceptance(4, "numerics toolbox", ok, detail)
    assert ok, detail


DESK = ExperimentConfig(n=64, realizations=5, tol=1e-6, max_iters=10_000, seed=0)


def _cell(algo, case=1, kappa=0.5, **kw):
    return run_experiment(dataclasses.replace(DESK, algo=algo, case=case, kappa=kappa, **kw))


def test_desk_scale_trends(acceptance):
    t0 = time.perf_counter()
    failures = []
    fhrb_in, fhrbdi3_in = {}, {}
    for kappa in KAPPAS:
        cells = [("FHRB", 1)] + [(m, c) for m in ("FHRBSI", "FHRBI", "FHRBDI") for c in (1, 2, 3)]
        cells.append(("FHRBSDI", 1))
        for algo, case in cells:
            res = _cell(algo, case, kappa)
            row = res.row()
            if algo == "FHRB":
                fhrb_in[kappa] = row["IN_mean"]
            if (algo, case) == ("FHRBDI", 3):
                fhrbdi3_in[kappa] = row["IN_mean"]
            if row["status"] == "certified" and row["converged_count"] != DESK.realizations:
                failures.append(f"(a) {algo}{case} kappa={kappa} converged "
                                f"{row['converged_count']}/{DESK.realizations}")
    seq = [fhrb_in[k] for k in KAPPAS]
    if not all(a > b for a, b in zip(seq, seq[1:])):
        failures.append(f"(b) FHRB IN not decreasing: {seq}")
    for k in KAPPAS:
        if fhrbdi3_in[k] > fhrb_in[k]:
            failures.append(f"(c) kappa={k}: FHRBDI3 {fhrbdi3_in[k]:g} > FHRB {fhrb_in[k]:g}")
    plain = _cell("FHRB", 1, 0.99).row()["IN_mean"]
    restart = _cell("FHRBIR", 1, 0.99, alpha=0.2, beta=0.2,
                    restart_n0=DESK.max_iters // 10).row()["IN_mean"]
    saving = 1.0 - restart / plain
    if saving < 0.05:
        failures.append(f"(d) restart saves only {100 * saving:.1f}%")
    elapsed = time.perf_counter() - t0
    if elapsed >= 300.0:
        failures.append(f"runtime {elapsed:.0f} s")
    detail = (f"FHRB IN {', '.join(f'{v:g}' for v in seq)}; FHRBDI3 IN "
              f"{', '.join(f'{fhrbdi3_in[k]:g}' for k in KAPPAS)}; restart {restart:g} vs {plain:g} "
              f"({100 * saving:.1f}% fewer); {elapsed:.0f} s")
    if failures:
        detail = "; ".join(failures) + "; " + detail
    ok = not failures
    acceptance(5, "desk-scale trends", ok, detail)
    assert ok, detail


def test_exploratory_regime(acceptance):
    res = _cell("FHRBSI", 1, 0.99, theta=0.2)
    row = res.row()
    failed = DESK.realizations - row["converged_count"]
    labelled = row["status"] == "exploratory" and not res.params.certified
    # the non-convergence count is reported but does not gate the build
    detail = (f"status={row['status']}; {failed}/{DESK.realizations} realizations "
              f"did not converge within {DESK.max_iters} iterations"
              f"{'' if failed >= 4 else ' (fewer than 4, soft criterion)'}")
    acceptance(6, "exploratory regime labelled", labelled, detail)
    assert labelled


def _chambolle_pock(a, c, d, sigma, tau, x, v, iters):
    """Textbook primal-first Chambolle-Pock for min 1/2||x - c||^2 + ||a x - d||_1."""
    out = []
    for _ in range(iters):
        x_new = (x - tau * a.T @ v + tau * c) / (1.0 + tau)
        v = np.clip(v + sigma * (a @ (2.0 * x_new - x)) - sigma * d, -1.0, 1.0)
        x = x_new
        out.append((x.copy(), v.copy()))
    return out


def test_cross_implementation_oracle(acceptance):
    t0 = time.perf_counter()
    a, c = lasso_pd(0)
    d = np.random.default_rng(5).standard_normal(3)
    norm = np.linalg.norm(a, 2)
    sigma, tau = 0.7 / norm, 0.9 / norm
    inst = PdbtrInstance(
        resolvent_A1=lambda t, v: (v + t * c) / (1.0 + t),
        resolvent_A2inv=lambda s, v: np.clip(v - s * d, -1.0, 1.0),
        L=LinOp.from_matrix(a), sigma=sigma, tau=tau)
    x0, v0 = np.ones(4), np.zeros(3)
    ref = _chambolle_pock(a, c, d, sigma, tau, x0, v0, 100)
    st = pdbtr_start(inst, x0, v0)
    s = Schedule(tau, alpha=0.0, lam=1.0)
    worst = 0.0
    for xr, vr in ref:
        st = pdbtr_step(inst, s, st)
        worst = max(worst, float(np.max(np.abs(st.x - xr))), float(np.max(np.abs(st.v - vr))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    acceptance(7, "primal-dual matches reference Chambolle-Pock", ok,
               f"max iterate diff {worst:.1e}, {elapsed:.2f} s")
    assert ok

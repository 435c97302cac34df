import numpy as np
import pytest

from instances import lasso_pd, random_fhrb
from nfbm.certify import certify_special
from nfbm.engine import IterateState, Schedule, StopRule, run, step_double_inertial, step_inertial_relaxed
from nfbm.errors import MetricError
from nfbm.linops import LinOp, inner
from nfbm.zoo import (FbInstance, FhrbInstance, PdbtrInstance, fb_step_relaxed_inertial,
                      fhrb_bundle, fhrb_engine_start, fhrb_start, fhrb_step, pdbtr_bundle,
                      pdbtr_start, pdbtr_step)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("seed", [0, 1])
def test_fhrb_inertial_relaxed_matches_engine(seed):
    inst, x0, _ = random_fhrb(seed)
    xm = x0 + 0.05
    s = Schedule(inst.gamma, alpha=0.08, lam=1.3)
    direct = fhrb_start(inst, x0, xm)
    eng = fhrb_engine_start(inst, x0, xm)
    b = fhrb_bundle(inst)
    for _ in range(50):
        direct = fhrb_step(inst, s, direct, "alg1")
        eng, _ = step_inertial_relaxed(b, s, eng)
        assert _rel(direct.x_curr, eng.x_curr) <= 1e-12


@pytest.mark.parametrize("seed", [0, 1])
def test_fhrb_double_inertial_matches_engine(seed):
    inst, x0, _ = random_fhrb(seed)
    xm = x0 - 0.05
    s = Schedule(inst.gamma, alpha=0.05, beta=0.7, theta=0.04)
    direct = fhrb_start(inst, x0, xm)
    eng = fhrb_engine_start(inst, x0, xm)
    b = fhrb_bundle(inst)
    for _ in range(50):
        direct = fhrb_step(inst, s, direct, "alg2")
        eng = step_double_inertial(b, s, eng)
        assert _rel(direct.x_curr, eng.x_curr) <= 1e-12


def test_iterate_reflection_agrees_without_relaxation():
    inst, x0, _ = random_fhrb(2)
    s = Schedule(inst.gamma, alpha=0.1)
    a = b = fhrb_start(inst, x0)
    for _ in range(20):
        a = fhrb_step(inst, s, a)
        b = fhrb_step(inst, s, b, reflect_iterate=True)
    assert np.array_equal(a.x_curr, b.x_curr)
    relaxed = Schedule(inst.gamma, alpha=0.1, lam=1.4)
    a = b = fhrb_start(inst, x0)
    for _ in range(20):
        a = fhrb_step(inst, relaxed, a)
        b = fhrb_step(inst, relaxed, b, reflect_iterate=True)
    assert _rel(a.x_curr, b.x_curr) > 1e-8


def test_fhrb_without_reflection_is_forward_backward():
    inst, x0, _ = random_fhrb(3)
    flat = FhrbInstance(inst.resolvent_Atilde, lambda x: np.zeros_like(x), 0.0, inst.C,
                        inst.mu, inst.gamma)
    fb = FbInstance(inst.resolvent_Atilde, inst.C, inst.mu, inst.gamma)
    s = Schedule(inst.gamma, alpha=0.1, lam=0.9)
    a = fhrb_start(flat, x0)
    b = IterateState(x0, x0, np.zeros_like(x0), 0)
    for _ in range(30):
        a = fhrb_step(flat, s, a)
        b = fb_step_relaxed_inertial(fb, s, b)
        assert _rel(a.x_curr, b.x_curr) <= 1e-14


def test_fhrb_converges_to_kkt_point():
    inst, x0, bmat = random_fhrb(4)
    rec = run(fhrb_bundle(inst), Schedule(inst.gamma), "base", x0=x0,
              stop=StopRule(tol=1e-13, max_iters=200_000))
    x = rec.x
    # 0 in N_box(x) + Bx + Cx  <=>  x = P_box(x - (Bx + Cx))
    resid = x - np.clip(x - (inst.B(x) + inst.C(x)), -1.0, 1.0)
    assert rec.converged and np.linalg.norm(resid) < 1e-9


def _condat_vu(seed=0, sigma=0.6, tau=0.4, with_b=True):
    a, c = lasso_pd(seed)
    rng = np.random.default_rng(seed + 10)
    skew = rng.standard_normal((4, 4))
    skew = 0.2 * (skew - skew.T)
    L = LinOp.from_matrix(a)
    inst = PdbtrInstance(
        resolvent_A1=lambda t, v: np.clip(v, -2.0, 2.0),
        resolvent_A2inv=lambda s, v: np.clip(v, -1.0, 1.0),
        L=L, sigma=sigma / np.linalg.norm(a, 2), tau=tau / np.linalg.norm(a, 2),
        B=(lambda x: skew @ x) if with_b else None,
        zeta=np.linalg.norm(skew, 2) if with_b else 0.0,
        C_tilde=lambda x: x - c, mu=1.0,
    )
    return inst, a, c


def test_pdbtr_matches_engine_embedding():
    inst, a, c = _condat_vu()
    bundle, sp = pdbtr_bundle(inst)
    s = Schedule(inst.tau, alpha=0.1, lam=1.2)
    x0, v0 = np.ones(4), np.zeros(3)
    direct = pdbtr_start(inst, x0, v0)
    eng = IterateState(sp.pack(x0, v0), sp.pack(x0, v0), np.zeros(7), 0)
    for _ in range(50):
        direct = pdbtr_step(inst, s, direct)
        eng, _ = step_inertial_relaxed(bundle, s, eng)
        x, v = sp.unpack(eng.x_curr)
        assert _rel(direct.x, x) <= 1e-10
        assert _rel(direct.v, v) <= 1e-10


def test_pdbtr_metric_is_positive_definite_and_inverted():
    inst, a, c = _condat_vu()
    bundle, sp = pdbtr_bundle(inst)
    m = bundle.metric
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.standard_normal(7)
        assert inner(m.apply(z), z) >= m.strong_monotonicity_lb * (z @ z) * (1 - 1e-12)
        assert _rel(m.apply_inv(m.apply(z)), z) <= 1e-10


def test_pdbtr_rejects_degenerate_metric():
    a, _ = lasso_pd(0)
    n = np.linalg.norm(a, 2)
    with pytest.raises(MetricError):
        PdbtrInstance(lambda t, v: v, lambda s, v: v, LinOp.from_matrix(a),
                      sigma=1.0 / n, tau=1.0 / n)


def test_pdbtr_energy_descends_when_certified():
    inst, a, c = _condat_vu(with_b=False)
    bundle, sp = pdbtr_bundle(inst)
    s = Schedule(inst.tau, alpha=0.05, lam=1.0)
    cert = certify_special("PDBTR", mu=inst.mu, sigma=inst.sigma, tau=inst.tau,
                           L_norm=inst.L_norm, alpha=0.05, zeta=0.0)
    assert cert.ok
    z0 = sp.pack(np.ones(4), np.zeros(3))
    ref = run(bundle, Schedule(inst.tau), "base", x0=z0, stop=StopRule(tol=1e-15, max_iters=100_000))
    rec = run(bundle, s, "alg1", x0=z0, stop=StopRule(tol=1e-10, max_iters=20_000), monitor=ref.x)
    energy = np.array(rec.lyapunov)
    assert rec.converged
    assert energy.min() >= -1e-9 * energy[0]
    assert np.all(np.diff(energy) <= 1e-9 * energy[0])


def test_relaxation_at_iterate_only_differs_with_inertia():
    inst, a, c = _condat_vu()
    plain = Schedule(inst.tau, alpha=0.0, lam=1.3)
    d1 = d2 = pdbtr_start(inst, np.ones(4), np.zeros(3))
    for _ in range(10):
        d1 = pdbtr_step(inst, plain, d1)
        d2 = pdbtr_step(inst, plain, d2, relax_at_iterate=True)
    assert np.array_equal(d1.x, d2.x)

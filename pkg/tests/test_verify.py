import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpvm.errors import UnsupportedModel
from hpvm.homotopy import HomotopySettings, contraction_factor, run, strongly_convex_constants
from hpvm.oracles import (ElasticNet, L1Norm, LogisticLoss, QuadraticLoss, SimplexIndicator,
                          project_simplex, prox_l1)
from hpvm.oracles.smooth import CovariancePrimal
from hpvm.verify import (AuditReport, ReferencePath, TheoremConstants, audit_theorem, brute_prox,
                         fd_gradient, fd_hessian, one_step_bound, path_residual, record_iterates,
                         reference_solution, tau_recurrence_bounds)

from conftest import random_spd


def test_fd_scalar():
    assert fd_gradient(lambda x: float(x[0] ** 2), np.array([1.0]))[0] == pytest.approx(2.0, abs=1e-8)


def test_fd_logdet_direction(rng):
    E = rng.standard_normal((4, 4))
    E = E + E.T
    f = CovariancePrimal(np.zeros((4, 4)))
    d = fd_gradient(lambda t: f.value(np.eye(4) + t[0] * E), np.zeros(1))[0]
    assert d == pytest.approx(-np.trace(E), abs=1e-6)


def test_fd_logistic_sweep(rng):
    A = rng.standard_normal((30, 6))
    f = LogisticLoss(A, np.sign(rng.standard_normal(30)), 0.01)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(6)
        g = f.gradient(x)
        worst = max(worst, np.linalg.norm(fd_gradient(f.value, x) - g) / max(np.linalg.norm(g), 1e-8))
    assert worst <= 1e-5
    x = rng.standard_normal(6)
    H = f.hessian(x)
    dense = np.column_stack([H.apply(e) for e in np.eye(6)])
    assert np.allclose(fd_hessian(f.gradient, x), dense, atol=1e-7)


def test_fd_shrinks_near_boundary():
    def f(x):
        return float(-np.log(x[0])) if x[0] > 0 else np.inf
    # h = 1e-4 leaves the domain; the shrunken step has O((h/x)^2) error
    assert fd_gradient(f, np.array([5e-5]))[0] == pytest.approx(-2e4, rel=2e-2)


# reference solutions --------------------------------------------------------------

def _separable(b, rho):
    return QuadraticLoss(np.eye(b.size), -b), L1Norm(rho)


@given(st.integers(0, 10 ** 6), st.floats(0.05, 1.0))
def test_reference_soft_threshold(seed, tau):
    rng = np.random.default_rng(seed)
    b = 2 * rng.standard_normal(6)
    f, g = _separable(b, 0.3)
    ref = reference_solution(f, g, np.zeros(6), tau)
    assert np.allclose(ref.x, prox_l1(b, 0.3 / tau), atol=1e-12)
    assert ref.ok


def test_reference_limits(rng):
    Q = random_spd(rng, 5, 20.0)
    f, g = QuadraticLoss(Q, rng.standard_normal(5)), L1Norm(0.2)
    # xi0 strictly inside the subdifferential at x0 = 0 makes x0 the unique limit
    x0 = np.zeros(5)
    xi0 = 0.1 * np.sign(rng.standard_normal(5))
    for tau in (1e-2, 1e-4):
        assert np.linalg.norm(reference_solution(f, g, xi0, tau, x0).x - x0) <= 1e-12
    # a strongly convex g pins the limit even off the origin, at rate O(tau)
    x1 = rng.standard_normal(5)
    en = ElasticNet(0.2, 1.0)
    d = [np.linalg.norm(reference_solution(f, en, en.subgradient(x1), t, x1).x - x1)
         for t in (1e-2, 1e-3, 1e-4)]
    assert d[2] <= 1e-2 and d[1] / d[0] < 0.2 and d[2] / d[1] < 0.2
    one = reference_solution(f, g, xi0, 1.0, x0)
    plain = reference_solution(f, g, None, 1.0)
    assert np.allclose(one.x, plain.x, atol=1e-10)
    again = reference_solution(f, g, xi0, 1.0, one.x)
    assert again.residual <= 1e-12 and np.allclose(again.x, one.x, atol=1e-12)
    assert path_residual(f, g, xi0, 1.0, one.x) <= 1e-10


# brute-force prox ----------------------------------------------------------------

@given(st.integers(0, 10 ** 6), st.floats(0.01, 5.0))
def test_brute_prox_l1(seed, gamma):
    x = 3 * np.random.default_rng(seed).standard_normal(5)
    assert np.allclose(brute_prox(L1Norm(0.7), x, gamma), prox_l1(x, 0.7 * gamma), atol=1e-8)


@given(st.integers(0, 10 ** 6))
def test_brute_prox_simplex(seed):
    x = 2 * np.random.default_rng(seed).standard_normal(6)
    assert np.allclose(brute_prox(SimplexIndicator(), x, 1.0), project_simplex(x), atol=1e-8)


@given(st.integers(0, 10 ** 6), st.floats(0.01, 2.0), st.floats(0.0, 3.0))
def test_brute_prox_elastic_net(seed, gamma, mu):
    x = 3 * np.random.default_rng(seed).standard_normal(5)
    expect = prox_l1(x, 0.4 * gamma) / (1 + gamma * mu)
    assert np.allclose(brute_prox(ElasticNet(0.4, mu), x, gamma), expect, atol=1e-8)


def test_brute_prox_subgradient_mode():
    x = np.array([1.0, -0.2, 0.5])
    u = brute_prox(L1Norm(0.3), x, 1.0, mode="subgradient", iters=20000)
    assert np.allclose(u, prox_l1(x, 0.3), atol=1e-3)
    with pytest.raises(UnsupportedModel):
        brute_prox(SimplexIndicator(), x, 1.0, mode="subgradient")


# audit helpers ---------------------------------------------------------------------

@pytest.mark.parametrize("tau0,M,q", [(0.1, 0.5, 0.9), (0.3, 0.2, 0.5), (0.05, 1.0, 0.95)])
def test_tau_recurrence_bound_tight(tau0, M, q):
    tau = tau0
    for k in range(25):
        bound, _ = tau_recurrence_bounds(tau0, M, q, k)
        assert tau == pytest.approx(bound, abs=1e-12) if k <= 1 else tau <= bound + 1e-12
        # equality recurrence solved for tau_{k+1}
        tau = tau / (1 - M * q ** k * tau)


def test_tau_recurrence_lower_bound_consistent():
    ub, lb = tau_recurrence_bounds(0.1, 0.5, 0.9, 10)
    assert lb == pytest.approx(1 - ub, abs=1e-15)
    assert tau_recurrence_bounds(0.9, 5.0, 0.9, 10) is None


def test_one_step_bound():
    assert one_step_bound(0.0, 1e-3) == 1e-3
    assert one_step_bound(0.5, 0.0) is None
    assert one_step_bound(0.1, 0.0) == pytest.approx(2.8 / 0.62 * 0.01)


def test_audit_strongly_convex_run(rng):
    Q = random_spd(rng, 10, 10.0)
    f, g = QuadraticLoss(Q, rng.standard_normal(10)), L1Norm(0.1)
    x0 = np.zeros(10)
    recs, cb = record_iterates()
    res = run(f, g, x0, None, HomotopySettings(regime="strongly_convex", metric="diagonal",
                                               max_outer=200, eps=1e-14), callback=cb)
    xi = g.subgradient(x0)
    m = f.lipschitz ** 2 / f.mu
    om = contraction_factor(m, m, f.lipschitz, f.mu)
    c = strongly_convex_constants(float(np.linalg.norm(f.gradient(x0) + xi)), g.lipschitz(10),
                                  float(np.linalg.norm(xi)), f.mu, om, res.tau0)
    rep = audit_theorem(recs, "strongly_convex", TheoremConstants(res.tau0, c.sigma, C=c.C),
                        ReferencePath(f, g, xi, x0))
    assert rep.passed and rep.count("dist") == len(recs)
    doc = json.loads(rep.to_json())
    assert len(doc["rows"]) == len(rep.rows) and doc["partial"] is False


def test_audit_flags_missing_reference():
    rec, cb = record_iterates()
    cb(0, np.zeros(2), 0.5)

    def broken(tau):
        raise RuntimeError("no reference")
    rep = audit_theorem(rec, "strongly_convex", TheoremConstants(0.5, 0.9, C=1.0), broken)
    assert rep.partial and not rep.passed


def test_audit_report_violation():
    rep = AuditReport()
    rep.add(0, "x", 1.0, 2.0, 0.0)
    rep.add(1, "x", 3.0, 2.0, 0.0)
    assert [r.k for r in rep.violations] == [1] and rep.rows[0].slack == 1.0

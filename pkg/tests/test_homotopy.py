import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpvm.bench.generators import design_space
from hpvm.errors import InvalidParameter
from hpvm.homotopy import (SIGMA_MIN, HomotopySettings, QuasiNewtonMetric, auxiliary_constants,
                           contraction_factor, damped_step_init, decrement_factor, hpvm_step,
                           kkt_residual, metric_select, omega_fn, run, shifted_gradient,
                           sigma_barrier, sigma_self_concordant, strongly_convex_constants,
                           tau0_strongly_convex_g, tau_next_barrier, tau_next_self_concordant,
                           tau_strongly_convex)
from hpvm.oracles import (L1Norm, LogDetDesign, LogisticLoss, QuadraticLoss,
                          ScaledIdentity, SimplexIndicator, Zero)
from hpvm.verify import ReferencePath, reference_solution

from conftest import random_spd


def test_shifted_gradient_examples():
    f = QuadraticLoss(np.eye(2), np.array([2.0, 0.0]))
    x = np.zeros(2)
    xi = np.array([1.0, 1.0])
    assert np.allclose(shifted_gradient(f, x, 1.0, xi), [2, 0])
    assert np.allclose(shifted_gradient(f, x, 0.3, np.zeros(2)), [2, 0])
    assert np.allclose(shifted_gradient(f, x, 0.5, xi), [1, -1])


def test_step_on_quadratic_lands_on_minimizer():
    b = np.array([1.0, -2.0, 0.5])
    f = QuadraticLoss(np.eye(3), -b)
    st_ = hpvm_step(f, Zero(), np.zeros(3), 1.0, None, ScaledIdentity(1.0, (3,)), 1e-12)
    assert np.allclose(st_.x, b)


def test_step_at_fixed_point(rng):
    f = QuadraticLoss(random_spd(rng, 4), rng.standard_normal(4))
    g = L1Norm(0.3)
    x = reference_solution(f, g, None, 1.0, np.zeros(4)).x
    st_ = hpvm_step(f, g, x, 1.0, None, f.hessian(x), 1e-8)
    assert np.linalg.norm(st_.x - x) <= 1e-8
    assert st_.lambda_est <= 1e-8


def test_sigma_strongly_convex_examples():
    # omega = 0.5, tau0 = 0.5, Gamma = 2: (0.5 + 0.5) / 1.5
    grad_norm, Lg, mu = 2.0, 2.0, 1.0
    c = strongly_convex_constants(grad_norm, Lg, 0.0, mu, 0.5, 0.5)
    assert c.Gamma == pytest.approx(2.0)
    assert c.sigma == pytest.approx(2 / 3)
    tiny = strongly_convex_constants(1e-12, 1.0, 0.0, 1.0, 0.5, 0.5)
    assert tiny.sigma == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(1e-3, 1e3))
def test_sigma_strongly_convex_between_omega_and_one(omega, tau0, gamma):
    c = strongly_convex_constants(gamma * omega, 1.0, 0.0, 1.0, omega, tau0)
    assert omega < c.sigma < 1


def test_tau_strongly_convex():
    assert tau_strongly_convex(0, 0.5, 0.9) == pytest.approx(0.5)
    assert tau_strongly_convex(1, 0.5, 0.9) == pytest.approx(1 - 0.45 / 0.95)
    for k in range(101):
        assert 1 - tau_strongly_convex(k, 0.5, 0.9) <= (0.5 / 0.5) * 0.9 ** k + 1e-15


def test_decrement_factor_examples():
    assert decrement_factor(0.5, 0) == pytest.approx(0.07 - 1 / 18, abs=1e-7)
    assert decrement_factor(1.0, 7) == pytest.approx(math.sqrt(0.99) / 10 - 1 / 18)
    assert decrement_factor(1.0, 7) == pytest.approx(0.0439432, abs=1e-7)


@given(st.floats(SIGMA_MIN + 1e-6, 1.0), st.integers(0, 500))
def test_decrement_factor_range(sigma, k):
    d = decrement_factor(sigma, k)
    assert 0 < d <= 0.0995


def test_tau_updates_examples():
    assert tau_next_self_concordant(0.5, 0, 0.5, 1.0) == pytest.approx(0.5017863, abs=1e-7)
    assert tau_next_barrier(0.5, 0, 0.5, 4.0) == pytest.approx(0.5035599, abs=1e-6)
    # a zero increment leaves tau unchanged
    assert tau_next_barrier(0.5, 0, SIGMA_MIN, 4.0) == pytest.approx(0.5, abs=1e-12)
    assert tau_next_self_concordant(0.5, 0, SIGMA_MIN, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_sigma_feasible():
    assert sigma_self_concordant(0.5, 1e-12) == pytest.approx(0.3187, abs=2e-4)
    assert sigma_barrier(1e-12, 1e12) == 1.0
    for tau0, Lg in [(0.5, 1.0), (0.9, 10.0), (0.99, 3.0)]:
        s = sigma_self_concordant(tau0, Lg)
        a = 2 * Lg * (1 - tau0) * (1 - math.sqrt(s))
        assert a / (tau0 - a) <= math.sqrt(s - 0.01) / 10 - 1 / 18 + 1e-12


def test_metric_select_examples(rng):
    f = QuadraticLoss(np.diag([1.0, 2.0]), np.zeros(2))
    H = metric_select("diagonal", f, np.zeros(2))
    assert H.apply(np.ones(2)) == pytest.approx([4.0, 4.0])
    Q = random_spd(rng, 3)
    assert np.array_equal(metric_select("newton", QuadraticLoss(Q, np.zeros(3)), np.zeros(3)).H,
                          0.5 * (Q + Q.T))
    with pytest.raises(InvalidParameter):
        metric_select("bogus", f, np.zeros(2))


def test_quasi_newton_secant(rng):
    Q = random_spd(rng, 4)
    qn = QuasiNewtonMetric(4, 1.0)
    for _ in range(4):
        s = rng.standard_normal(4)
        qn.update(s, Q @ s)
        assert np.allclose(qn.B @ s, Q @ s)


def test_contraction_factor_diagonal():
    for mu, L in [(1.0, 2.0), (0.1, 5.0), (3.0, 3.0)]:
        m = L * L / mu
        assert contraction_factor(m, m, L, mu) == pytest.approx(math.sqrt(1 - (mu / L) ** 2))


def test_stage1_helpers():
    assert omega_fn(0.045) == pytest.approx(0.045 - math.log(1.045), rel=1e-14)
    assert omega_fn(0.045) == pytest.approx(9.8311e-4, abs=1e-8)
    assert tau0_strongly_convex_g(1.0, 1.0, 1.0, 0.05) == pytest.approx(0.047619, abs=1e-6)
    assert tau0_strongly_convex_g(1.0, 2.0, 1.0, 0.05) == pytest.approx(0.047619 / 2, abs=1e-6)
    t0, theta, _, _ = auxiliary_constants(30.0, 1.0, 1.0, 0.05)
    assert theta == pytest.approx(0.0439432, abs=1e-7)
    assert t0 == pytest.approx(0.9984848, abs=1e-7)
    assert auxiliary_constants(10.0, 1.0, 1.0, 0.05)[0] == 1.0


def test_damped_init_reaches_local_region(rng):
    f = QuadraticLoss(random_spd(rng, 5, 50.0), 5 * rng.standard_normal(5))
    g = L1Norm(0.5)
    x_hat = 10 * rng.standard_normal(5)
    xi = g.subgradient(x_hat)
    init = damped_step_init(f, g, x_hat, xi, 0.5)
    ref = reference_solution(f, g, xi, 0.5, x_hat)
    assert f.hessian(ref.x).norm(init.x - ref.x) <= 0.05


def test_practical_run_quadratic_l1(rng):
    f = QuadraticLoss(random_spd(rng, 20, 100.0), rng.standard_normal(20))
    g = L1Norm(0.2)
    r = run(f, g, np.zeros(20), None, HomotopySettings(practical=True, eps=1e-10))
    assert r.status == "converged"
    assert kkt_residual(f, g, r.x) <= 1e-8
    ref = reference_solution(f, g, None, 1.0, np.zeros(20))
    assert np.linalg.norm(r.x - ref.x) <= 1e-6
    taus = [row["tau"] for row in r.trace]
    assert all(b > a for a, b in zip(taus, taus[1:]) if a < 1)
    assert taus[-1] >= 1 - 1e-10


def test_theory_run_tau_increasing(rng):
    A = rng.standard_normal((30, 5))
    f = LogisticLoss(A, np.sign(rng.standard_normal(30)), 0.1)
    g = L1Norm(0.02)
    r = run(f, g, np.zeros(5), None, HomotopySettings(eps=1e-8, tau0=0.9))
    taus = [row["tau"] for row in r.trace]
    assert r.status == "converged"
    assert all(b > a or b == 1.0 for a, b in zip(taus, taus[1:]))


def test_logistic_decrement_decreases_once_tau_settles(rng):
    A = rng.standard_normal((40, 5))
    f = LogisticLoss(A, np.sign(rng.standard_normal(40)), 0.05)
    r = run(f, L1Norm(0.02), np.zeros(5), None, HomotopySettings(practical=True, eps=1e-10))
    lams = [row["lambda_est"] for row in r.trace if row["tau"] == 1.0][1:]
    assert all(b <= a for a, b in zip(lams, lams[1:]))


def test_exact_steps_contract(rng):
    # with H = (L^2/mu) I and exact inner solves each step contracts toward
    # the next target by omega
    f = QuadraticLoss(random_spd(rng, 6, 4.0), rng.standard_normal(6))
    g = L1Norm(0.3)
    x = rng.standard_normal(6)
    xi = g.subgradient(x)
    H = metric_select("diagonal", f, x)
    om = contraction_factor(H.c, H.c, f.lipschitz, f.mu)
    refs = ReferencePath(f, g, xi, x)
    for k in range(30):
        tau_next = tau_strongly_convex(k + 1, 0.5, 0.9)
        xs = refs(tau_next).x
        x_new = hpvm_step(f, g, x, tau_next, xi, H, 1e-14).x
        if np.linalg.norm(x - xs) > 1e-9:
            assert np.linalg.norm(x_new - xs) <= (om + 1e-9) * np.linalg.norm(x - xs) + 1e-13
        x = x_new


def test_settings_validation():
    with pytest.raises(InvalidParameter):
        HomotopySettings(regime="bogus").validate()
    with pytest.raises(InvalidParameter):
        HomotopySettings(sigma=1.0).validate()
    with pytest.raises(InvalidParameter):
        HomotopySettings(eps=0).validate()
    assert HomotopySettings(practical=True).validate().sigma == 1.0


def test_doptimal_chi1_iterations():
    V = design_space("chi1", 10000)
    r = run(LogDetDesign(V), SimplexIndicator(), np.full(10000, 1e-4), None,
            HomotopySettings(regime="barrier", practical=True, eps=1e-8))
    assert r.iterations <= 15
    assert r.trace[-1]["obj"] == pytest.approx(20.51196, abs=5e-4)

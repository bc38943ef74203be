import numpy as np
import pytest

from hpvm.baselines import BaselineSettings, apg_ls_restart, damped_pn, prox_grad
from hpvm.bench.generators import gen_sparse_invcov
from hpvm.errors import InvalidParameter
from hpvm.homotopy import HomotopySettings, run
from hpvm.oracles import CovariancePrimal, L1Norm, LogisticLoss, QuadraticLoss, Zero

from conftest import random_spd


@pytest.fixture
def lasso(rng):
    A = rng.standard_normal((60, 20))
    b = A @ np.where(rng.random(20) < 0.3, 1.0, 0.0) + 0.1 * rng.standard_normal(60)
    return QuadraticLoss(A.T @ A / 60, -A.T @ b / 60), L1Norm(0.05)


def test_pg_identity_quadratic_one_step():
    b = np.array([1.0, 2.0, -3.0])
    rep = prox_grad(QuadraticLoss(np.eye(3), -b), Zero(), BaselineSettings("PG", eps=1e-12),
                    np.zeros(3))
    assert np.allclose(rep.x, b)
    assert rep.iterations == 1


def test_pg_monotone_and_linear_rate(rng):
    Q = random_spd(rng, 10, 20.0)
    f = QuadraticLoss(Q, rng.standard_normal(10))
    xs = -np.linalg.solve(Q, f.q)
    rep = prox_grad(f, Zero(), BaselineSettings("PG", eps=1e-10, max_iter=3000), np.zeros(10))
    objs = [r["obj"] for r in rep.rows]
    assert all(b <= a + 1e-14 for a, b in zip(objs, objs[1:]))
    gaps = np.array(objs) - f.value(xs)
    k = np.arange(len(gaps))
    mask = (gaps > 1e-13) & (k > 5)
    rate = np.exp(np.polyfit(k[mask], np.log(gaps[mask]), 1)[0])
    # function gaps contract by (1 - mu/L)^2 per step
    theory = (1 - f.mu / f.lipschitz) ** 2
    assert abs(np.log(rate) / np.log(theory) - 1) <= 1.0


def test_apg_beats_pg(lasso):
    f, g = lasso
    s = BaselineSettings("PG", eps=1e-8)
    pg = prox_grad(f, g, s, np.zeros(20))
    apg = apg_ls_restart(f, g, BaselineSettings("APG_LS_Restart", eps=1e-8), np.zeros(20))
    assert pg.converged and apg.converged
    assert apg.iterations <= pg.iterations
    objs = [r["obj"] for r in apg.rows]
    assert all(b <= a + 1e-14 for a, b in zip(objs, objs[1:]))


def test_apg_restart_fires(rng):
    Q = random_spd(rng, 30, 1e3)
    f = QuadraticLoss(Q, rng.standard_normal(30))
    rep = apg_ls_restart(f, L1Norm(0.01), BaselineSettings("APG_LS_Restart", eps=1e-7),
                         np.zeros(30))
    assert rep.converged
    assert rep.restarts > 0


def test_damped_pn_quadratic(rng):
    Q = random_spd(rng, 5)
    f = QuadraticLoss(Q, rng.standard_normal(5))
    rep = damped_pn(f, Zero(), BaselineSettings("DampedPN", eps=1e-10), np.zeros(5))
    assert np.allclose(rep.x, -np.linalg.solve(Q, f.q), atol=1e-9)


def test_damped_pn_quadratic_tail_on_covariance():
    S, _ = gen_sparse_invcov(30, 0.1, seed=1)
    f = CovariancePrimal(S)
    rep = damped_pn(f, L1Norm(0.01), BaselineSettings("DampedPN", eps=1e-10), np.eye(30))
    assert rep.converged
    z = rep.decrements
    tail = [(a, b) for a, b in zip(z, z[1:]) if a < 0.1 and b > 1e-9]
    assert all(b <= 1.1 * a * a for a, b in tail)
    # a dense start spends several iterations in the damped phase
    assert sum(1 for d in z if d > 0.2) >= 3


def test_shared_optimum(lasso, rng):
    f, g = lasso
    eps = 1e-8
    ref = run(f, g, np.zeros(20), None, HomotopySettings(practical=True, eps=1e-10))
    F = ref.trace[-1]["obj"]
    for method, fn in (("PG", prox_grad), ("APG_LS_Restart", apg_ls_restart),
                       ("DampedPN", damped_pn)):
        rep = fn(f, g, BaselineSettings(method, eps=eps), np.zeros(20))
        assert abs(rep.rows[-1]["obj"] - F) <= 10 * eps


def test_cap_reports_unconverged(rng):
    A = rng.standard_normal((50, 10))
    f = LogisticLoss(A, np.sign(rng.standard_normal(50)), 1e-4)
    rep = prox_grad(f, L1Norm(1e-4), BaselineSettings("PG", eps=1e-14, max_iter=50), np.zeros(10))
    assert rep.status == "cap"
    assert rep.summary()["status"] == "cap"


def test_settings_validation():
    with pytest.raises(InvalidParameter):
        BaselineSettings("BFGS").validate()
    with pytest.raises(InvalidParameter):
        BaselineSettings("PG", eps=-1).validate()
    with pytest.raises(InvalidParameter):
        prox_grad(CovariancePrimal(np.eye(2)), Zero(), BaselineSettings(), np.eye(2))

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hpvm.errors import DomainError
from hpvm.oracles import (BoxIndicator, CovarianceDual, CovariancePrimal, DenseMetric,
                          ElasticNet, L1Norm, LogBarrierLinear, LogDetDesign, LogisticLoss,
                          OriginIndicator, PoissonLoss, QuadraticLoss, ScaledIdentity,
                          ScaledOracle, SimplexIndicator, Zero, offdiag_l1, project_simplex,
                          prox_l1, self_concordance_convert, standardizing_scale,
                          subgradient_select)
from hpvm.oracles.smooth import spectral_norm_sq
from hpvm.verify import fd_gradient, fd_hessian, sc_ratio

from conftest import random_spd

finite = st.floats(-50, 50, allow_nan=False)


# proximal maps

def test_project_simplex_examples():
    assert np.allclose(project_simplex(np.array([0.3, 0.7])), [0.3, 0.7])
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    assert np.allclose(project_simplex(np.array([0.5, 0.5, 0.5])), [1 / 3] * 3)


def test_subgradient_select_examples():
    g = L1Norm(0.5)
    assert np.array_equal(subgradient_select(g, np.zeros(3)), np.zeros(3))
    assert np.allclose(subgradient_select(g, np.array([1.0, -2.0])), [0.5, -0.5])
    s = subgradient_select(SimplexIndicator(), np.array([0.2, 0.3, 0.5]))
    assert np.array_equal(s, np.zeros(3))


def test_simplex_interior_subgradient_inequality(rng):
    x = np.array([0.2, 0.3, 0.5])
    s = subgradient_select(SimplexIndicator(), x)
    for _ in range(50):
        u = project_simplex(rng.standard_normal(3))
        assert s @ (u - x) <= 1e-15


@given(arrays(float, 6, elements=finite), st.floats(0.0, 10.0))
def test_prox_l1_is_soft_threshold(v, t):
    out = prox_l1(v, t)
    assert np.all(np.abs(out) <= np.maximum(np.abs(v) - t, 0) + 1e-12)
    assert np.all(out * v >= 0)


@given(arrays(float, 5, elements=finite))
def test_project_simplex_feasible_and_optimal(v):
    x = project_simplex(v)
    assert np.all(x >= 0)
    assert abs(x.sum() - 1) < 1e-9
    # optimality: <v - x, u - x> <= 0 at every vertex u
    for i in range(5):
        u = np.zeros(5)
        u[i] = 1
        assert (v - x) @ (u - x) <= 1e-8 * (1 + np.abs(v).max())


@pytest.mark.parametrize("g", [L1Norm(0.7), ElasticNet(0.3, 0.5), SimplexIndicator(),
                               BoxIndicator(0.4), Zero(), L1Norm(0.2, np.array([1, 0, 2, 1.0]))])
def test_prox_nonexpansive(g, rng):
    for _ in range(200):
        x, y = 3 * rng.standard_normal(4), 3 * rng.standard_normal(4)
        gam = rng.uniform(0.1, 3)
        d = np.linalg.norm(g.prox(x, gam) - g.prox(y, gam))
        assert d <= np.linalg.norm(x - y) + 1e-12


def test_elastic_net_prox_closed_form():
    g = ElasticNet(1.0, 2.0)
    v = np.array([3.0, -0.5, -4.0])
    assert np.allclose(g.prox(v, 0.5), prox_l1(v, 0.5) / (1 + 0.5 * 2.0))


def test_conjugate_pairs():
    assert isinstance(L1Norm(0.3).conjugate(), BoxIndicator)
    assert isinstance(BoxIndicator(0.3).conjugate(), L1Norm)
    assert isinstance(Zero().conjugate(), OriginIndicator)
    assert isinstance(OriginIndicator().conjugate(), Zero)
    g = L1Norm(0.3)
    h = g.conjugate()
    assert h(np.array([0.3, -0.29])) == 0.0
    assert h(np.array([0.31])) == np.inf


def test_offdiag_l1_skips_diagonal():
    g = offdiag_l1(2.0, 3)
    X = np.ones((3, 3))
    assert g(X) == pytest.approx(12.0)
    assert np.allclose(np.diag(g.prox(X, 1.0)), 1.0)


def test_lipschitz_subgradient_bound(rng):
    # sampled subgradients obey |xi|*_x <= L_g / sqrt(mu_f)
    A = rng.standard_normal((30, 5))
    f = LogisticLoss(A, np.sign(rng.standard_normal(30)), 0.2)
    g = L1Norm(0.4)
    bound = g.lipschitz(5) / math.sqrt(f.mu)
    for _ in range(50):
        x = rng.standard_normal(5)
        xi = g.subgradient(rng.standard_normal(5))
        assert f.hessian(x).dual_norm(xi) <= bound + 1e-8


# smooth oracles

def _points(f, rng, n, kind):
    pts = []
    while len(pts) < n:
        if kind == "design":
            x = rng.uniform(0.2, 1.0, f.dim)
        elif kind == "pos":
            x = rng.uniform(0.5, 2.0, f.dim)
        else:
            x = rng.standard_normal(f.dim)
        if f.in_domain(x):
            pts.append(x)
    return pts


def _oracles(rng):
    A = rng.uniform(0, 1, (40, 6))
    V = rng.standard_normal((12, 3))
    return [
        (LogisticLoss(rng.standard_normal((40, 6)), np.sign(rng.standard_normal(40)), 0.01), "any"),
        (PoissonLoss(A, rng.poisson(2.0, 40).astype(float), 0.01), "any"),
        (LogDetDesign(V), "design"),
        (QuadraticLoss(random_spd(rng, 6), rng.standard_normal(6)), "any"),
        (LogBarrierLinear(np.array([1.0, 2.0, 0.5])), "pos"),
    ]


def test_fd_gradient_basic():
    assert fd_gradient(lambda x: float(x @ x), np.array([1.0]))[0] == pytest.approx(2.0, abs=1e-8)
    f = lambda v: float(np.linalg.slogdet(np.eye(2) + v[0] * np.array([[1, 0.3], [0.3, 2]]))[1])  # noqa: E731
    assert fd_gradient(f, np.zeros(1))[0] == pytest.approx(3.0, abs=1e-6)


def test_oracle_derivatives_fd(rng):
    for f, kind in _oracles(rng):
        for x in _points(f, rng, 10, kind):
            g = f.gradient(x)
            gf = fd_gradient(f.value, x)
            assert np.linalg.norm(g - gf) <= 1e-5 * max(1.0, np.linalg.norm(g))
            H = f.hessian(x)
            Hd = np.column_stack([H.apply(e) for e in np.eye(f.dim)])
            Hf = fd_hessian(f.gradient, x)
            assert np.linalg.norm(Hd - Hf) <= 1e-4 * max(1.0, np.linalg.norm(Hd))


def test_covariance_oracles_fd(rng):
    S = random_spd(rng, 3)
    for f in (CovarianceDual(S), CovariancePrimal(S)):
        X = random_spd(rng, 3, 3.0) if isinstance(f, CovariancePrimal) else 0.1 * random_spd(rng, 3)
        X = 0.5 * (X + X.T)
        G = f.gradient(X)
        Gf = fd_gradient(f.value, X)
        assert np.allclose(G, Gf, atol=1e-6)
        E = rng.standard_normal((3, 3))
        E = E + E.T
        HE = f.hessian(X).apply(E)
        HEf = (f.gradient(X + 1e-6 * E) - f.gradient(X - 1e-6 * E)) / 2e-6
        assert np.allclose(HE, HEf, atol=1e-5)


def test_barrier_domain():
    f = LogBarrierLinear(np.ones(2))
    assert not f.in_domain(np.array([1.0, 0.0]))
    d = CovarianceDual(np.eye(2))
    assert d.in_domain(np.zeros((2, 2)))
    assert not d.in_domain(-np.eye(2))
    design = LogDetDesign(np.eye(2))
    with pytest.raises(DomainError):
        design.value(np.array([1.0, 0.0]))


def test_self_concordance_convert_examples():
    assert self_concordance_convert(2.5, 3, 0.1) == 2.5
    assert self_concordance_convert(1.0, 2, 4.0) == pytest.approx(0.5)
    assert standardizing_scale(4.0) == pytest.approx(4.0)


def test_rescaled_logistic_is_standard_self_concordant(rng):
    A = rng.standard_normal((30, 4))
    f = LogisticLoss(A, np.sign(rng.standard_normal(30)), 0.05)
    c = standardizing_scale(f.standard_sc_constant())
    fs = ScaledOracle(f, c)
    for _ in range(30):
        x, u = rng.standard_normal(4), rng.standard_normal(4)
        assert sc_ratio(fs, x, u) <= 2.0 + 1e-3


def test_spectral_norm_power_iteration(rng):
    A = rng.standard_normal((50, 20))
    assert spectral_norm_sq(A) == pytest.approx(np.linalg.norm(A, 2) ** 2, rel=1e-10)
    import scipy.sparse as sp
    assert spectral_norm_sq(sp.csr_matrix(A)) == pytest.approx(np.linalg.norm(A, 2) ** 2, rel=1e-6)


def test_metrics(rng):
    H = random_spd(rng, 4)
    M = DenseMetric(H)
    v = rng.standard_normal(4)
    assert np.allclose(M.apply(M.solve(v)), v)
    assert M.dual_norm(v) == pytest.approx(math.sqrt(v @ np.linalg.solve(H, v)))
    S = ScaledIdentity(4.0, (4,))
    assert S.norm(v) == pytest.approx(2 * np.linalg.norm(v))

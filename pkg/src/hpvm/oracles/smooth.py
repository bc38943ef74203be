"""Smooth convex losses with value/gradient/Hessian oracles.

Each oracle carries the structural constants the homotopy schedules need:
``mu`` (strong convexity), ``lipschitz`` (gradient Lipschitz constant, inf if
unbounded), ``sc_constant``/``kappa`` (generalized self-concordance) and ``nu``
(barrier parameter, None if f is not a barrier).
"""
import numpy as np
import scipy.sparse as sp
from scipy import linalg as sla
from scipy.special import expit

from ..errors import DomainError
from .metrics import (DENSE_LIMIT, CongruenceMetric, DenseMetric,
                      LowRankMetric, OperatorMetric, ScaledMetric,
                      power_iteration)


def self_concordance_convert(M_f, kappa, mu):
    """Constant of standard self-concordance for a (M_f, kappa)-generalized
    self-concordant function that is mu-strongly convex."""
    if mu <= 0:
        raise ValueError("conversion needs mu > 0")
    return M_f / np.sqrt(mu) ** (3.0 - kappa)


def standardizing_scale(M_hat):
    """c such that c*f has self-concordance constant 2."""
    return (M_hat / 2.0) ** 2


def _row_norms(A):
    if sp.issparse(A):
        return np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    return np.linalg.norm(A, axis=1)


def spectral_norm_sq(A):
    """|A|_2^2, exact for moderate sizes, power iteration otherwise."""
    if not sp.issparse(A) and min(A.shape) <= DENSE_LIMIT:
        return float(np.linalg.norm(A, 2) ** 2)
    return power_iteration(lambda u: A.T @ (A @ u), (A.shape[1],), iters=300)


class SmoothOracle:
    mu = 0.0
    lipschitz = np.inf
    sc_constant = None
    kappa = None
    nu = None
    shape = None

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        """Local metric given by the Hessian at x."""
        raise NotImplementedError

    def in_domain(self, x):
        return bool(np.all(np.isfinite(x)))

    def standard_sc_constant(self):
        """Constant of standard self-concordance, or None if unknown."""
        if self.sc_constant is None:
            return None
        if self.kappa == 3:
            return self.sc_constant
        return self_concordance_convert(self.sc_constant, self.kappa, self.mu)

    @property
    def dim(self):
        return int(np.prod(self.shape))


class _GLMOracle(SmoothOracle):
    """(1/n) sum_i l(a_i.x, y_i) + mu/2 |x|^2."""

    kappa = 2

    def __init__(self, A, y, mu):
        self.A = A if sp.issparse(A) else np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n, p = self.A.shape
        self.shape = (p,)
        self.mu = float(mu)
        self.sc_constant = float(_row_norms(self.A).max())

    def _loss(self, t):
        raise NotImplementedError

    def _d1(self, t):
        raise NotImplementedError

    def _d2(self, t):
        raise NotImplementedError

    def value(self, x):
        t = self.A @ x
        return float(np.mean(self._loss(t))) + 0.5 * self.mu * float(x @ x)

    def gradient(self, x):
        t = self.A @ x
        return self.A.T @ self._d1(t) / self.n + self.mu * x

    def hessian(self, x):
        d = self._d2(self.A @ x) / self.n
        p = self.shape[0]
        if p <= DENSE_LIMIT:
            if sp.issparse(self.A):
                H = (self.A.T @ self.A.multiply(d[:, None])).toarray()
            else:
                H = self.A.T @ (self.A * d[:, None])
            H[np.diag_indices(p)] += self.mu
            return DenseMetric(H)
        A, mu = self.A, self.mu
        return OperatorMetric(lambda u: A.T @ (d * (A @ u)) + mu * u, (p,),
                              lambda_min=mu)


class LogisticLoss(_GLMOracle):
    """Regularized logistic loss with labels in {-1, +1}."""

    def __init__(self, A, y, mu):
        super().__init__(A, y, mu)
        self.lipschitz = spectral_norm_sq(self.A) / (2.0 * self.n) + self.mu

    def _loss(self, t):
        return np.logaddexp(0.0, -self.y * t)

    def _d1(self, t):
        return -self.y * expit(-self.y * t)

    def _d2(self, t):
        s = expit(self.y * t)
        return s * (1.0 - s)


class PoissonLoss(_GLMOracle):
    """(1/n) sum_i (y_i exp(-a_i.x/2) + exp(a_i.x/2)) + mu/2 |x|^2."""

    def _loss(self, t):
        return self.y * np.exp(-0.5 * t) + np.exp(0.5 * t)

    def _d1(self, t):
        return 0.5 * (np.exp(0.5 * t) - self.y * np.exp(-0.5 * t))

    def _d2(self, t):
        return 0.25 * (np.exp(0.5 * t) + self.y * np.exp(-0.5 * t))


class QuadraticLoss(SmoothOracle):
    """f(x) = 1/2 x'Qx + q'x with Q positive definite."""

    kappa = 3

    def __init__(self, Q, q):
        self.Q = 0.5 * (np.asarray(Q, float) + np.asarray(Q, float).T)
        self.q = np.asarray(q, float)
        self.shape = (self.q.size,)
        w = sla.eigvalsh(self.Q)
        self.mu, self.lipschitz = float(w[0]), float(w[-1])
        self.sc_constant = 0.0
        self._metric = DenseMetric(self.Q)

    def value(self, x):
        return 0.5 * float(x @ self.Q @ x) + float(self.q @ x)

    def gradient(self, x):
        return self.Q @ x + self.q

    def hessian(self, x):
        return self._metric

    def conj_in_domain(self, u):
        return True

    def conj_value(self, u):
        r = u - self.q
        return 0.5 * float(r @ self._metric.solve(r))

    def conj_gradient(self, u):
        return self._metric.solve(u - self.q)

    def conj_hessian(self, u):
        return DenseMetric(sla.inv(self.Q))


class LogBarrierLinear(SmoothOracle):
    """f(x) = c'x - sum(log x), a p-self-concordant barrier on x > 0."""

    kappa = 3
    sc_constant = 2.0

    def __init__(self, c):
        self.c = np.asarray(c, float)
        self.shape = (self.c.size,)
        self.nu = float(self.c.size)

    def in_domain(self, x):
        return bool(np.all(x > 0))

    def value(self, x):
        if not self.in_domain(x):
            raise DomainError("x must be positive")
        return float(self.c @ x - np.log(x).sum())

    def gradient(self, x):
        return self.c - 1.0 / x

    def hessian(self, x):
        return DenseMetric(np.diag(1.0 / x ** 2))

    def conj_in_domain(self, u):
        return bool(np.all(u < self.c))

    def conj_value(self, u):
        if not self.conj_in_domain(u):
            raise DomainError("conjugate argument out of domain")
        return float(-self.c.size - np.log(self.c - u).sum())

    def conj_gradient(self, u):
        return 1.0 / (self.c - u)

    def conj_hessian(self, u):
        return DenseMetric(np.diag(1.0 / (self.c - u) ** 2))


class LogDetDesign(SmoothOracle):
    """f(w) = -log det(sum_i w_i v_i v_i'), an m-self-concordant barrier."""

    kappa = 3
    sc_constant = 2.0

    def __init__(self, V):
        self.V = np.asarray(V, float)
        p, m = self.V.shape
        self.shape = (p,)
        self.m = m
        self.nu = float(m)
        self._cache = (None, None)

    def info(self, w):
        return self.V.T @ (self.V * w[:, None])

    def _factor(self, w):
        key, val = self._cache
        if key is not None and np.array_equal(key, w):
            return val
        if np.all(w >= 0):
            # QR of W^(1/2) V avoids squaring the condition number of M(w)
            R = np.linalg.qr(np.sqrt(w)[:, None] * self.V, mode="r").T
            d = np.abs(np.diag(R))
            if d.min() <= 1e-13 * d.max() or not np.all(np.isfinite(d)):
                raise DomainError("information matrix is singular")
            R = R * np.sign(np.diag(R))
        else:
            try:
                R = np.linalg.cholesky(self.info(w))
            except np.linalg.LinAlgError:
                raise DomainError("information matrix is not positive definite")
        U = sla.solve_triangular(R, self.V.T, lower=True).T
        self._cache = (np.array(w, copy=True), (R, U))
        return R, U

    def in_domain(self, w):
        try:
            self._factor(w)
        except DomainError:
            return False
        return True

    def value(self, w):
        R, _ = self._factor(w)
        return -2.0 * float(np.log(np.diag(R)).sum())

    def gradient(self, w):
        _, U = self._factor(w)
        return -np.einsum("ij,ij->i", U, U)

    def hessian(self, w):
        _, U = self._factor(w)
        p, m = U.shape
        if p <= DENSE_LIMIT:
            K = U @ U.T
            return DenseMetric(K * K)
        iu, ju = np.triu_indices(m)
        scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
        Phi = U[:, iu] * U[:, ju] * scale
        return LowRankMetric(Phi)


class CovarianceDual(SmoothOracle):
    """phi(Y) = -log det(Y + Sigma) on symmetric matrices.

    The Hessian acts as E -> X E X with X = (Y + Sigma)^{-1}; its inverse is
    the congruence by Y + Sigma, which needs no factorization.
    """

    kappa = 3
    sc_constant = 2.0

    def __init__(self, Sigma):
        self.Sigma = 0.5 * (np.asarray(Sigma, float) + np.asarray(Sigma, float).T)
        self.shape = self.Sigma.shape
        self.nu = float(self.Sigma.shape[0])

    def in_domain(self, Y):
        return bool(np.all(np.isfinite(Y))) and sla.eigvalsh(Y + self.Sigma)[0] > 0

    def value(self, Y):
        sign, ld = np.linalg.slogdet(Y + self.Sigma)
        if sign <= 0:
            raise DomainError("Y + Sigma must be positive definite")
        return -float(ld)

    def gradient(self, Y):
        return -sla.inv(Y + self.Sigma)

    def hessian(self, Y):
        return CongruenceMetric(sla.inv(Y + self.Sigma))

    def inverse_hessian(self, Y):
        return CongruenceMetric(Y + self.Sigma)


class CovariancePrimal(SmoothOracle):
    """f(X) = tr(Sigma X) - log det X on symmetric positive definite X."""

    kappa = 3
    sc_constant = 2.0

    def __init__(self, Sigma):
        self.Sigma = 0.5 * (np.asarray(Sigma, float) + np.asarray(Sigma, float).T)
        self.shape = self.Sigma.shape
        self.nu = float(self.Sigma.shape[0])

    def in_domain(self, X):
        return bool(np.all(np.isfinite(X))) and sla.eigvalsh(X)[0] > 0

    def value(self, X):
        sign, ld = np.linalg.slogdet(X)
        if sign <= 0:
            raise DomainError("X must be positive definite")
        return float(np.vdot(self.Sigma, X)) - float(ld)

    def gradient(self, X):
        return self.Sigma - sla.inv(X)

    def hessian(self, X):
        return CongruenceMetric(sla.inv(X))

    def conj_in_domain(self, U):
        return sla.eigvalsh(self.Sigma - U)[0] > 0

    def conj_value(self, U):
        sign, ld = np.linalg.slogdet(self.Sigma - U)
        if sign <= 0:
            raise DomainError("Sigma - U must be positive definite")
        return -self.Sigma.shape[0] - float(ld)

    def conj_gradient(self, U):
        return sla.inv(self.Sigma - U)


class ScaledOracle(SmoothOracle):
    """c * f for a base oracle f."""

    def __init__(self, base, c):
        if c <= 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.c = float(c)
        self.shape = base.shape
        self.mu = c * base.mu
        self.lipschitz = c * base.lipschitz
        self.nu = base.nu
        M = base.standard_sc_constant()
        self.kappa = 3 if M is not None else None
        self.sc_constant = None if M is None else M / np.sqrt(c)

    def in_domain(self, x):
        return self.base.in_domain(x)

    def value(self, x):
        return self.c * self.base.value(x)

    def gradient(self, x):
        return self.c * self.base.gradient(x)

    def hessian(self, x):
        return ScaledMetric(self.base.hessian(x), self.c)

"""Local metrics: symmetric positive (semi)definite operators used as the
quadratic part of proximal Newton-type models.

Every metric acts on arrays of a fixed shape (vectors, or symmetric matrices
for the covariance dual) through ``apply``.  Extreme eigenvalues are exact for
small dense operators and estimated otherwise.
"""
import numpy as np
from scipy import linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

DENSE_LIMIT = 2000


def power_iteration(apply, shape, iters=100, tol=1e-8, seed=0):
    """Largest eigenvalue of a symmetric PSD operator by power iteration."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(shape)
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(iters):
        w = apply(u)
        lam_new = float(np.vdot(u, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        u = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return lam


def extreme_eigenvalues(S):
    """(lambda_min, lambda_max) of a symmetric matrix.

    Exact below ``DENSE_LIMIT``; Lanczos (matrix-vector products only) above.
    """
    n = S.shape[0]
    if n <= DENSE_LIMIT:
        w = sla.eigvalsh(S)
        return float(w[0]), float(w[-1])
    op = LinearOperator((n, n), matvec=lambda v: S @ v, dtype=float)
    lo = eigsh(op, k=1, which="SA", return_eigenvectors=False, tol=1e-8)[0]
    hi = eigsh(op, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0]
    return float(lo), float(hi)


class LocalMetric:
    """Base class.  Subclasses set ``shape`` and implement ``apply``."""

    shape = None
    can_solve = False

    def apply(self, u):
        raise NotImplementedError

    def inner(self, u, v):
        return float(np.vdot(u, self.apply(v)))

    def norm(self, u):
        return np.sqrt(max(self.inner(u, u), 0.0))

    def solve(self, v):
        raise NotImplementedError(f"{type(self).__name__} cannot solve")

    def dual_norm(self, v):
        return np.sqrt(max(float(np.vdot(v, self.solve(v))), 0.0))

    @property
    def lambda_max(self):
        raise NotImplementedError

    @property
    def lambda_min(self):
        raise NotImplementedError

    def submatrix(self, idx):
        """Dense principal submatrix on flat indices ``idx``."""
        raise NotImplementedError


class DenseMetric(LocalMetric):
    can_solve = True

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        self.H = 0.5 * (H + H.T)
        self.shape = (H.shape[0],)
        self._eig = None

    def _decomp(self):
        if self._eig is None:
            self._eig = sla.eigh(self.H)
        return self._eig

    def apply(self, u):
        return self.H @ u

    def solve(self, v):
        w, Q = self._decomp()
        if w[0] <= 0:
            raise np.linalg.LinAlgError("metric is singular")
        return Q @ ((Q.T @ v) / w)

    @property
    def lambda_max(self):
        return float(self._decomp()[0][-1])

    @property
    def lambda_min(self):
        return max(float(self._decomp()[0][0]), 0.0)

    def submatrix(self, idx):
        return self.H[np.ix_(idx, idx)]


class ScaledIdentity(LocalMetric):
    can_solve = True

    def __init__(self, c, shape):
        if c <= 0:
            raise ValueError("scale must be positive")
        self.c = float(c)
        self.shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape

    def apply(self, u):
        return self.c * u

    def solve(self, v):
        return v / self.c

    @property
    def lambda_max(self):
        return self.c

    @property
    def lambda_min(self):
        return self.c

    def submatrix(self, idx):
        return self.c * np.eye(len(idx))


class LowRankMetric(LocalMetric):
    """H = Phi Phi^T + ridge * I, never formed explicitly."""

    def __init__(self, Phi, ridge=0.0):
        self.Phi = np.asarray(Phi, dtype=float)
        self.ridge = float(ridge)
        self.shape = (self.Phi.shape[0],)
        self._gram = None

    def apply(self, u):
        out = self.Phi @ (self.Phi.T @ u)
        if self.ridge:
            out = out + self.ridge * u
        return out

    def _gram_eigs(self):
        if self._gram is None:
            self._gram = sla.eigvalsh(self.Phi.T @ self.Phi)
        return self._gram

    @property
    def lambda_max(self):
        return float(self._gram_eigs()[-1]) + self.ridge

    @property
    def lambda_min(self):
        p, r = self.Phi.shape
        if p > r:
            return self.ridge
        return max(float(self._gram_eigs()[r - p]), 0.0) + self.ridge

    def submatrix(self, idx):
        P = self.Phi[idx]
        return P @ P.T + self.ridge * np.eye(len(idx))


class CongruenceMetric(LocalMetric):
    """E -> S E S on symmetric matrices, for S symmetric positive definite.

    Its eigenvalues are products of eigenvalues of S, so the extremes are the
    squares of those of S.  No factorization of S is ever taken.
    """

    def __init__(self, S):
        self.S = np.asarray(S, dtype=float)
        self.shape = self.S.shape
        self._ext = None

    def apply(self, E):
        return self.S @ E @ self.S

    def _extremes(self):
        if self._ext is None:
            self._ext = extreme_eigenvalues(self.S)
        return self._ext

    @property
    def lambda_max(self):
        return self._extremes()[1] ** 2

    @property
    def lambda_min(self):
        lo = self._extremes()[0]
        return lo ** 2 if lo > 0 else 0.0


class OperatorMetric(LocalMetric):
    """Generic matrix-free metric with supplied spectral bounds."""

    def __init__(self, apply, shape, lambda_max=None, lambda_min=0.0, solve=None):
        self._apply = apply
        self.shape = tuple(shape)
        self._lmax = lambda_max
        self._lmin = float(lambda_min)
        self._solve = solve
        self.can_solve = solve is not None

    def apply(self, u):
        return self._apply(u)

    def solve(self, v):
        if self._solve is None:
            return super().solve(v)
        return self._solve(v)

    @property
    def lambda_max(self):
        if self._lmax is None:
            self._lmax = 1.01 * power_iteration(self._apply, self.shape)
        return self._lmax

    @property
    def lambda_min(self):
        return self._lmin


class ScaledMetric(LocalMetric):
    """c * H for a base metric H."""

    def __init__(self, base, c):
        self.base = base
        self.c = float(c)
        self.shape = base.shape
        self.can_solve = base.can_solve

    def apply(self, u):
        return self.c * self.base.apply(u)

    def solve(self, v):
        return self.base.solve(v) / self.c

    @property
    def lambda_max(self):
        return self.c * self.base.lambda_max

    @property
    def lambda_min(self):
        return self.c * self.base.lambda_min

    def submatrix(self, idx):
        return self.c * self.base.submatrix(idx)

"""Nonsmooth terms g with cheap proximal maps.

All maps act elementwise on arrays of any shape, except the simplex which is
defined for vectors.  ``prox(v, gamma)`` returns argmin_z g(z) + |z - v|^2/(2 gamma).
"""
import numpy as np


def prox_l1(v, t):
    """Soft thresholding, the prox of t*|.|_1."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_simplex(v, radius=1.0):
    """Euclidean projection onto {x >= 0, sum(x) = radius} by sorting."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("simplex projection expects a vector")
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    r = ind[cond][-1]
    theta = css[r - 1] / r
    return np.maximum(v - theta, 0.0)


class Face:
    """Smooth piece of g around a point, used to polish inner solutions.

    On the free coordinates ``free`` the term behaves like
    <lin, x_free> + curv/2 |x_free|^2, optionally with sum(x_free) fixed;
    every other coordinate stays at ``x_fixed``.
    """

    def __init__(self, free, lin, curv=0.0, sum_fixed=False, x_fixed=None):
        self.free = free
        self.lin = lin
        self.curv = curv
        self.sum_fixed = sum_fixed
        self.x_fixed = x_fixed


class Regularizer:
    is_indicator = False
    mu = 0.0

    def __call__(self, x):
        raise NotImplementedError

    def prox(self, v, gamma):
        raise NotImplementedError

    def lipschitz(self, dim):
        """Euclidean Lipschitz constant on the whole space (inf if none)."""
        return np.inf

    def subgradient(self, x):
        """Minimal-norm element of the subdifferential."""
        raise NotImplementedError

    def in_domain(self, x, tol=1e-10):
        return True

    def fw_gap(self, x, grad):
        """sup over dom g of <grad, x - z>, for compact domains; else None."""
        return None

    def scaled(self, c):
        """The term c * g."""
        raise NotImplementedError

    def perspective(self, tau):
        """The term z -> g(tau z) / tau."""
        raise NotImplementedError

    def face(self, x, weight):
        return None

    def face_consistent(self, x_new, face):
        return True

    def conjugate(self):
        raise NotImplementedError(f"no conjugate for {type(self).__name__}")


class Zero(Regularizer):
    def __call__(self, x):
        return 0.0

    def prox(self, v, gamma):
        return np.array(v, dtype=float, copy=True)

    def lipschitz(self, dim):
        return 0.0

    def subgradient(self, x):
        return np.zeros_like(x, dtype=float)

    def scaled(self, c):
        return self

    def perspective(self, tau):
        return self

    def face(self, x, weight):
        free = np.arange(np.size(x))
        return Face(free, np.zeros(free.size))

    def conjugate(self):
        return OriginIndicator()


class OriginIndicator(Regularizer):
    """Indicator of {0}, the conjugate of the zero function."""

    is_indicator = True

    def __call__(self, x):
        return 0.0 if not np.any(x) else np.inf

    def prox(self, v, gamma):
        return np.zeros_like(v, dtype=float)

    def in_domain(self, x, tol=1e-10):
        return bool(np.max(np.abs(x), initial=0.0) <= tol)

    def subgradient(self, x):
        return np.zeros_like(x, dtype=float)

    def fw_gap(self, x, grad):
        return float(np.vdot(grad, x))

    def scaled(self, c):
        return self

    def perspective(self, tau):
        return self

    def conjugate(self):
        return Zero()


class L1Norm(Regularizer):
    """rho * sum_ij w_ij |x_ij|, with unit weights unless given."""

    def __init__(self, rho, weights=None):
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        self.rho = float(rho)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if self.weights is not None and np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        self._t = self.rho if self.weights is None else self.rho * self.weights

    def __call__(self, x):
        return float((self._t * np.abs(x)).sum())

    def prox(self, v, gamma):
        return prox_l1(v, gamma * self._t)

    def lipschitz(self, dim):
        if self.weights is None:
            return self.rho * np.sqrt(dim)
        return self.rho * float(np.linalg.norm(self.weights))

    def subgradient(self, x):
        return self._t * np.sign(x)

    def scaled(self, c):
        return L1Norm(c * self.rho, self.weights)

    def perspective(self, tau):
        return self

    def face(self, x, weight):
        flat = np.ravel(x)
        free = np.flatnonzero(flat)
        t = np.broadcast_to(self._t, np.shape(x)).ravel()[free]
        return Face(free, weight * t * np.sign(flat[free]), x_fixed=0.0)

    def face_consistent(self, x_new, face):
        old = np.sign(face.lin)
        return bool(np.all(np.sign(np.ravel(x_new)[face.free]) == old))

    def conjugate(self):
        return BoxIndicator(self._t)


def offdiag_l1(rho, p):
    """rho times the l1 norm of the off-diagonal entries of a p x p matrix."""
    return L1Norm(rho, 1.0 - np.eye(p))


class ElasticNet(Regularizer):
    """rho * |x|_1 + mu/2 * |x|^2."""

    def __init__(self, rho, mu):
        if rho < 0 or mu < 0:
            raise ValueError("rho and mu must be nonnegative")
        self.rho = float(rho)
        self.mu = float(mu)

    def __call__(self, x):
        return self.rho * float(np.abs(x).sum()) + 0.5 * self.mu * float(np.vdot(x, x))

    def prox(self, v, gamma):
        return prox_l1(v, gamma * self.rho) / (1.0 + gamma * self.mu)

    def subgradient(self, x):
        return self.rho * np.sign(x) + self.mu * x

    def scaled(self, c):
        return ElasticNet(c * self.rho, c * self.mu)

    def perspective(self, tau):
        return ElasticNet(self.rho, tau * self.mu)

    def face(self, x, weight):
        flat = np.ravel(x)
        free = np.flatnonzero(flat)
        return Face(free, weight * self.rho * np.sign(flat[free]),
                    curv=weight * self.mu, x_fixed=0.0)

    def face_consistent(self, x_new, face):
        old = np.sign(face.lin)
        return bool(np.all(np.sign(np.ravel(x_new)[face.free]) == old))


class SimplexIndicator(Regularizer):
    """Indicator of the unit simplex."""

    is_indicator = True

    def __call__(self, x):
        return 0.0 if self.in_domain(x) else np.inf

    def prox(self, v, gamma):
        return project_simplex(v)

    def in_domain(self, x, tol=1e-10):
        return bool(np.all(x >= -tol) and abs(np.sum(x) - 1.0) <= tol * max(1, np.size(x)))

    def subgradient(self, x):
        return np.zeros_like(x, dtype=float)

    def fw_gap(self, x, grad):
        return float(np.dot(grad, x) - np.min(grad))

    def scaled(self, c):
        return self

    def face(self, x, weight):
        free = np.flatnonzero(x > 0)
        return Face(free, np.zeros(free.size), sum_fixed=True, x_fixed=0.0)

    def face_consistent(self, x_new, face):
        return bool(np.all(x_new[face.free] >= 0))


class BoxIndicator(Regularizer):
    """Indicator of {|x_ij| <= bound_ij}; the conjugate of a weighted l1 norm.

    ``bound`` is a positive scalar or an array of nonnegative entries.
    """

    is_indicator = True

    def __init__(self, bound):
        if np.ndim(bound) == 0:
            if bound <= 0:
                raise ValueError("bound must be positive")
            self.bound = float(bound)
        else:
            self.bound = np.asarray(bound, dtype=float)
            if np.any(self.bound < 0) or not np.any(self.bound > 0):
                raise ValueError("bounds must be nonnegative and not all zero")

    def __call__(self, x):
        return 0.0 if self.in_domain(x) else np.inf

    def prox(self, v, gamma):
        return np.clip(v, -self.bound, self.bound)

    def in_domain(self, x, tol=1e-10):
        return bool(np.all(np.abs(x) <= self.bound * (1 + tol)))

    def subgradient(self, x):
        return np.zeros_like(x, dtype=float)

    def fw_gap(self, x, grad):
        return float(np.vdot(grad, x) + (self.bound * np.abs(grad)).sum())

    def scaled(self, c):
        return self

    def perspective(self, tau):
        return BoxIndicator(self.bound / tau)

    def face(self, x, weight):
        flat = np.ravel(x)
        b = np.broadcast_to(self.bound, np.shape(x)).ravel()
        free = np.flatnonzero(np.abs(flat) < b)
        return Face(free, np.zeros(free.size), x_fixed=None)

    def face_consistent(self, x_new, face):
        b = np.broadcast_to(self.bound, np.shape(x_new)).ravel()
        return bool(np.all(np.abs(np.ravel(x_new)[face.free]) <= b[face.free]))

    def conjugate(self):
        if np.ndim(self.bound) == 0:
            return L1Norm(self.bound)
        return L1Norm(1.0, self.bound)


def subgradient_select(g, x):
    """Deterministic element of the subdifferential of g at x."""
    return g.subgradient(x)

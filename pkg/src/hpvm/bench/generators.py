"""Synthetic instances: design spaces, sparse inverse covariance, GLM data."""
import math

import numpy as np
from scipy import linalg as sla

DESIGN_SPACES = ("chi1", "chi2", "chi3", "chi4", "chi1_8", "chi2_10", "chi3_10")


def _grid_rt(p):
    """Tensor grid for the two-factor spaces: r in (-1, 1], t in (0, 1]."""
    q = math.ceil(math.sqrt(p))
    i = np.arange(1, q + 1)
    r = 2.0 * i / q - 1.0
    t = i / q
    R, T = np.meshgrid(r, t, indexing="ij")
    return R.ravel()[:p], T.ravel()[:p]


def design_space(kind, p):
    """Design vectors (rows) for the named regression model on p grid points."""
    if p < 1:
        raise ValueError("p must be positive")
    i = np.arange(1, p + 1)
    s = 3.0 * i / p
    t = i / p
    if kind == "chi1":
        cols = [np.exp(-s), s * np.exp(-s), np.exp(-2 * s), s * np.exp(-2 * s)]
    elif kind == "chi1_8":
        cols = []
        for a in range(1, 5):
            cols += [np.exp(-a * s), s * np.exp(-a * s)]
    elif kind == "chi2":
        cols = [s ** d for d in range(4)]
    elif kind == "chi2_10":
        cols = [s ** d for d in range(10)]
    elif kind == "chi3":
        r, t2 = _grid_rt(p)
        cols = [np.ones_like(r), r, r ** 2, t2, r * t2]
    elif kind == "chi3_10":
        r, t2 = _grid_rt(p)
        cols = [np.ones_like(r), r, r ** 2, r ** 3, t2, r * t2, t2 * r ** 2,
                t2 ** 2, t2 ** 3, r * t2 ** 2]
    elif kind == "chi4":
        cols = [t, t ** 2, np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]
    else:
        raise ValueError(f"unknown design space {kind!r}")
    return np.column_stack(cols)


def _rng(seed):
    if seed is None:
        raise ValueError("generators need an explicit seed")
    return np.random.default_rng(seed)


def gen_sparse_invcov(p, density, seed):
    """Sparse precision matrix with +-0.5 off-diagonal entries, shifted to be
    positive definite, and its inverse as covariance."""
    if p < 2:
        raise ValueError("p must be at least 2")
    if not 0.0 <= density < 1.0:
        raise ValueError("density must lie in [0, 1)")
    rng = _rng(seed)
    iu = np.triu_indices(p, 1)
    mask = rng.random(iu[0].size) < density
    vals = np.where(rng.random(iu[0].size) < 0.5, -0.5, 0.5) * mask
    Theta = np.zeros((p, p))
    Theta[iu] = vals
    Theta = Theta + Theta.T
    lmin = sla.eigvalsh(Theta)[0]
    Theta[np.diag_indices(p)] += abs(lmin) + 1.0
    Sigma = sla.inv(Theta)
    Sigma = 0.5 * (Sigma + Sigma.T)
    return Sigma, Theta


class Dataset:
    """Design matrix (dense or CSR) with responses."""

    def __init__(self, A, y, x_true=None):
        self.A = A
        self.y = np.asarray(y, dtype=float)
        self.x_true = x_true

    @property
    def shape(self):
        return self.A.shape


def gen_poisson_data(n, p, sparsity, seed, signal=1.0):
    """Min-max scaled features and Poisson counts from the model
    E[y] = exp(a.x_true) at a planted sparse x_true."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    rng = _rng(seed)
    A = rng.standard_normal((n, p))
    lo, hi = A.min(axis=0), A.max(axis=0)
    A = (A - lo) / np.where(hi > lo, hi - lo, 1.0)
    k = int(round(sparsity * p))
    x_true = np.zeros(p)
    if k:
        supp = rng.choice(p, size=k, replace=False)
        x_true[supp] = signal * rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.0, size=k)
    y = rng.poisson(np.exp(A @ x_true)).astype(float)
    return Dataset(A, y, x_true)


def gen_logistic_data(n, p, seed, correlation=0.9, sparsity=0.1):
    """Gaussian features with AR(1) correlation across columns and labels
    drawn from a logistic model at a planted sparse x_true."""
    rng = _rng(seed)
    Z = rng.standard_normal((n, p))
    A = np.empty_like(Z)
    A[:, 0] = Z[:, 0]
    c = math.sqrt(1.0 - correlation ** 2)
    for j in range(1, p):
        A[:, j] = correlation * A[:, j - 1] + c * Z[:, j]
    k = max(1, int(round(sparsity * p)))
    x_true = np.zeros(p)
    x_true[rng.choice(p, size=k, replace=False)] = rng.standard_normal(k)
    prob = 1.0 / (1.0 + np.exp(-A @ x_true))
    y = np.where(rng.random(n) < prob, 1.0, -1.0)
    return Dataset(A, y, x_true)

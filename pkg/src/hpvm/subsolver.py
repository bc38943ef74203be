"""Inexact solver for the strongly convex quadratic-plus-prox subproblems

    q(x) = <b, x - c> + 1/2 |x - c|_H^2 + w * g(x).

A returned point x is certified: q(x) - min q <= delta^2 / 2.  The bound comes
from an explicit subgradient s of q at x (prox-gradient residual), using
q(x) - min q <= |s|^2_{H^-1} / 2 by strong convexity, or the Frank-Wolfe gap
when g is the indicator of a compact set.
"""
from dataclasses import dataclass

import numpy as np

from .errors import SubproblemNotConverged
from .oracles.metrics import ScaledIdentity
from .oracles.regularizers import SimplexIndicator

ITER_CAP = 10000
POLISH_LIMIT = 2000


class QuadraticModel:
    """Proximal model with metric H, linear term b, center c and weight w on g."""

    def __init__(self, metric, b, center, g, weight=1.0):
        self.metric = metric
        self.b = np.asarray(b, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.g = g
        self.weight = float(weight)

    def smooth_grad(self, x):
        return self.b + self.metric.apply(x - self.center)

    def smooth_value(self, x):
        d = x - self.center
        return float(np.vdot(self.b, d)) + 0.5 * self.metric.inner(d, d)

    def value(self, x):
        gx = self.g(x)
        return self.smooth_value(x) + (self.weight * gx if gx != 0 else 0.0)

    def prox(self, v, step):
        return self.g.prox(v, self.weight * step)


@dataclass
class SubResult:
    x: np.ndarray
    gap_bound: float
    iterations: int
    residual: np.ndarray = None
    polished: bool = False


def _certify(model, x, L, use_dual_norm, grad=None):
    """Prox-gradient step from x and a gap bound at the resulting point."""
    if grad is None:
        grad = model.smooth_grad(x)
    xp = model.prox(x - grad / L, 1.0 / L)
    Hd = model.metric.apply(xp - x)
    s = L * (x - xp) + Hd
    bounds = []
    if use_dual_norm:
        bounds.append(0.5 * float(np.vdot(s, model.metric.solve(s))))
    else:
        lmin = model.metric.lambda_min
        if lmin > 0:
            bounds.append(0.5 * float(np.vdot(s, s)) / lmin)
    fw = model.g.fw_gap(xp, grad + Hd) if model.g.is_indicator else None
    if fw is not None:
        bounds.append(max(fw, 0.0))
    gap = min(bounds) if bounds else np.inf
    return xp, gap, s


def _polish(model, x, L, use_dual_norm):
    """Newton correction on the current face of g; returns a certified point
    or None when the face guess was wrong."""
    face = model.g.face(x, model.weight)
    if face is None or face.free.size == 0 or face.free.size > POLISH_LIMIT or x.ndim != 1:
        return None
    S = face.free
    try:
        K = model.metric.submatrix(S)
    except NotImplementedError:
        return None
    if face.curv:
        K = K + face.curv * np.eye(S.size)
    r = model.smooth_grad(x)[S] + face.lin + face.curv * x[S]
    if face.sum_fixed:
        n = S.size
        KKT = np.zeros((n + 1, n + 1))
        KKT[:n, :n] = K
        KKT[:n, n] = 1.0
        KKT[n, :n] = 1.0
        rhs = np.concatenate([-r, [0.0]])
        d = np.linalg.lstsq(KKT, rhs, rcond=None)[0][:n]
    else:
        d = np.linalg.lstsq(K, -r, rcond=None)[0]
    xc = x.copy()
    xc[S] += d
    if not model.g.face_consistent(xc, face):
        return None
    return _certify(model, xc, L, use_dual_norm)


def solve_subproblem(model, delta, x_init=None, iter_cap=ITER_CAP,
                     check_every=5, certificate="auto", polish=True, method="auto"):
    """Solve ``model`` to accuracy delta (gap <= delta^2/2).

    ``certificate='residual'`` forces the dual-norm residual bound, so the
    returned ``residual`` r satisfies |r|_{H^-1} <= delta.
    Raises SubproblemNotConverged carrying the best point if ``iter_cap``
    iterations are not enough.  With ``method='auto'`` simplex-constrained
    models go to the active-set solver, everything else to restart-APG.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if method == "auto" and isinstance(model.g, SimplexIndicator) and model.b.ndim == 1 \
            and certificate != "residual":
        return solve_simplex_qp(model, delta, x_init=x_init)
    target = 0.5 * delta ** 2
    metric = model.metric
    if isinstance(metric, ScaledIdentity):
        c = metric.c
        x = model.prox(model.center - model.b / c, 1.0 / c)
        return SubResult(x, 0.0, 0, np.zeros_like(x))
    use_dual_norm = metric.can_solve and (certificate == "residual" or certificate == "auto")
    L = metric.lambda_max
    if not L > 0:
        raise ValueError("metric has no positive curvature")
    if x_init is None:
        x_init = model.center
    x = model.prox(np.asarray(x_init, dtype=float), 0.0)
    y = x.copy()
    t = 1.0
    best = None
    best_gap = np.inf
    best_res = None
    last_free = None
    polished_faces = 0
    for it in range(1, iter_cap + 1):
        gy = model.smooth_grad(y)
        x_new = model.prox(y - gy / L, 1.0 / L)
        if np.vdot(y - x_new, x_new - x) > 0:
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % check_every and it > 3:
            continue
        xp, gap, s = _certify(model, x, L, use_dual_norm)
        if gap < best_gap:
            best, best_gap, best_res = xp, gap, s
        if best_gap <= target:
            return SubResult(best, best_gap, it, best_res)
        if polish and model.g.face(x, model.weight) is not None and x.ndim == 1:
            free = model.g.face(x, model.weight).free
            if last_free is not None and np.array_equal(free, last_free) and polished_faces < 50:
                polished_faces += 1
                out = _polish(model, x, L, use_dual_norm)
                if out is not None:
                    xq, gq, sq = out
                    if gq < best_gap:
                        best, best_gap, best_res = xq, gq, sq
                        if best_gap <= target:
                            return SubResult(best, best_gap, it, best_res, True)
                        x = y = xq
                        t = 1.0
                last_free = None
            else:
                last_free = free
    raise SubproblemNotConverged(
        f"inner solver reached {iter_cap} iterations (gap bound {best_gap:.3e}, "
        f"target {target:.3e})", best=best, gap_bound=best_gap, iterations=iter_cap)


def _rounding_floor(x, grad):
    """Smallest gap that can be resolved in double precision at x."""
    scale = float(np.abs(grad).max()) * float(np.abs(x).sum()) + abs(float(np.vdot(grad, x)))
    return 64.0 * np.finfo(float).eps * max(scale, 1e-300)


def solve_simplex_qp(model, delta, x_init=None, max_iter=None, support_limit=500):
    """Active-set method for the model when g is the simplex indicator.

    Works for merely positive semidefinite metrics (the Hessian of a design
    objective has rank far below the dimension), needs only matrix-vector
    products plus principal submatrices on the working set, and certifies
    through the Frank-Wolfe gap.
    """
    target = 0.5 * delta ** 2
    p = model.b.size
    max_iter = max_iter or 10 * p + 100
    x0 = None if x_init is None else np.asarray(x_init, dtype=float)
    if x0 is not None and np.all(x0 >= 0) and abs(x0.sum() - 1) < 1e-12 \
            and np.count_nonzero(x0) <= support_limit:
        w = x0.copy()
    else:
        w = np.zeros(p)
        w[int(np.argmin(model.smooth_grad(model.center)))] = 1.0
    S = list(np.flatnonzero(w))
    it = 0
    gap = np.inf
    while it < max_iter:
        it += 1
        # minimize over the affine hull of the working face, with ratio test
        for _ in range(len(S) + 1):
            idx = np.array(S)
            n = idx.size
            if n == 1:
                break
            grad = model.smooth_grad(w)
            Q, _ = np.linalg.qr(np.vstack([np.ones(n), np.eye(n)[:-1]]).T)
            Z = Q[:, 1:]
            lam, U = np.linalg.eigh(Z.T @ model.metric.submatrix(idx) @ Z)
            r = U.T @ (Z.T @ grad[idx])
            flat = lam <= 1e-12 * max(lam[-1], 1e-300)
            if np.any(flat & (np.abs(r) > 1e-14 * (np.abs(r).max() + 1e-300))):
                d = -Z @ (U[:, flat] @ r[flat])
                unbounded = True
            else:
                coef = np.zeros_like(r)
                coef[~flat] = r[~flat] / lam[~flat]
                d = -Z @ (U @ coef)
                unbounded = False
            ws = w[idx]
            neg = d < 0
            ratios = np.where(neg, ws / np.where(neg, -d, 1.0), np.inf)
            alpha = float(ratios.min()) if np.any(neg) else np.inf
            if not unbounded and alpha >= 1.0:
                w[idx] = ws + d
                break
            if not np.isfinite(alpha):
                break
            w[idx] = ws + alpha * d
            w[idx[ratios <= alpha * (1 + 1e-12)]] = 0.0
            S = [i for i in S if w[i] > 0]
        w[w < 0] = 0.0
        w /= w.sum()
        S = [i for i in S if w[i] > 0]
        grad = model.smooth_grad(w)
        j = int(np.argmin(grad))
        gap = max(float(grad @ w - grad[j]), 0.0)
        if gap <= max(target, _rounding_floor(w, grad)):
            return SubResult(w, gap, it)
        if j in S or len(S) >= POLISH_LIMIT:
            break
        S.append(j)
    raise SubproblemNotConverged(
        f"active-set solver stopped after {it} iterations (gap {gap:.3e})",
        best=w, gap_bound=gap, iterations=it)

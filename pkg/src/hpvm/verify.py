"""Independent checks: finite differences, high-accuracy reference points on
the homotopy path, brute-force proximal maps and auditors that evaluate the
convergence inequalities on recorded runs."""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import Bounds, LinearConstraint, minimize

from .errors import DomainError, StepRejected, SubproblemNotConverged, UnsupportedModel
from .homotopy import barrier_bounds, omega_fn, self_concordant_bounds
from .oracles.regularizers import (BoxIndicator, ElasticNet, L1Norm, OriginIndicator,
                                   SimplexIndicator, Zero)
from .subsolver import QuadraticModel, solve_subproblem

FD_STEPS = (1e-4, 1e-5, 1e-6)


# ---------------------------------------------------------------------------
# finite differences

def _safe_eval(fun, x):
    try:
        v = fun(x)
    except DomainError:
        return None
    v = np.asarray(v, dtype=float)
    return v if np.all(np.isfinite(v)) else None


def _central(fun, x, h, shrink=3):
    """Central differences of fun (scalar or array valued) along each entry of x."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    cols = []
    for i in range(flat.size):
        hi = h
        for _ in range(shrink + 1):
            xp, xm = flat.copy(), flat.copy()
            xp[i] += hi
            xm[i] -= hi
            fp = _safe_eval(fun, xp.reshape(x.shape))
            fm = _safe_eval(fun, xm.reshape(x.shape))
            if fp is not None and fm is not None:
                break
            hi /= 10.0
        else:
            raise DomainError(f"finite-difference offsets leave the domain at entry {i}")
        cols.append(np.ravel((fp - fm) / (2.0 * hi)))
    return np.array(cols)


def _adaptive(fun, x, h):
    if h is not None:
        return _central(fun, x, h)
    est = [_central(fun, x, hh) for hh in FD_STEPS]
    diffs = [np.abs(est[i] - est[i + 1]).max() for i in range(len(est) - 1)]
    i = int(np.argmin(diffs))
    return est[i + 1]


def fd_gradient(fun, x, h=None):
    """Central-difference gradient; with h=None the step is chosen among
    1e-4, 1e-5, 1e-6 by the smallest disagreement between neighbours."""
    x = np.asarray(x, dtype=float)
    return _adaptive(fun, x, h).reshape(x.shape)


def fd_hessian(gradfun, x, h=None):
    """Central differences of the gradient, symmetrized, on the flattened x."""
    x = np.asarray(x, dtype=float)
    J = _adaptive(gradfun, x, h)
    return 0.5 * (J + J.T)


def sc_ratio(f, x, u, h=1e-5):
    """|D^3 f(x)[u,u,u]| / (D^2 f(x)[u,u])^{3/2}, which a standard
    self-concordant f keeps below 2."""
    def d2(z):
        return f.hessian(z).inner(u, u)
    d3 = (d2(x + h * u) - d2(x - h * u)) / (2.0 * h)
    return abs(d3) / d2(x) ** 1.5


# ---------------------------------------------------------------------------
# reference points on the path

@dataclass
class ReferenceSolution:
    tau: float
    x: np.ndarray
    residual: float
    method: str
    ok: bool


def tau_objective(f, g, xi0, tau, x):
    """f(x) - (1/tau - 1)<xi0, x> + g(x)/tau."""
    val = f.value(x) + g(x) / tau
    if xi0 is not None:
        val -= (1.0 / tau - 1.0) * float(np.vdot(xi0, x))
    return val


def _tau_grad(f, xi0, tau, x):
    gr = f.gradient(x)
    if xi0 is not None:
        gr = gr - (1.0 / tau - 1.0) * xi0
    return gr


def path_residual(f, g, xi0, tau, x, L=None):
    """Gradient-mapping norm of the tau-problem at x."""
    if L is None:
        L = f.lipschitz if np.isfinite(f.lipschitz) else f.hessian(x).lambda_max
    gr = _tau_grad(f, xi0, tau, x)
    xp = g.prox(x - gr / L, 1.0 / (tau * L))
    return float(np.linalg.norm(x - xp)) * L


def reference_solution(f, g, xi0, tau, x0=None, tol=1e-12, max_newton=200):
    """Minimize the tau-problem by damped then full proximal Newton steps with
    tightly solved models, to gradient-mapping residual ``tol``."""
    if x0 is None:
        x0 = g.prox(np.zeros(f.shape), 1.0)
    x = np.array(x0, dtype=float, copy=True)
    if not f.in_domain(x):
        raise DomainError("reference start is outside the domain of f")
    lam_prev = 1.0
    res = path_residual(f, g, xi0, tau, x)
    stall = 0
    for _ in range(max_newton):
        if res <= tol:
            break
        H = f.hessian(x)
        model = QuadraticModel(H, _tau_grad(f, xi0, tau, x), x, g, 1.0 / tau)
        delta = max(min(1e-2, 0.01 * lam_prev ** 2), 1e-15)
        try:
            s = solve_subproblem(model, delta, x_init=x, iter_cap=50000).x
        except SubproblemNotConverged as err:
            if err.best is None:
                raise
            s = err.best
        lam = H.norm(s - x)
        alpha = 1.0 if lam <= 0.25 else 1.0 / (1.0 + lam)
        while True:
            x_new = x + alpha * (s - x)
            if f.in_domain(x_new):
                break
            alpha *= 0.5
            if alpha < 1e-14:
                raise StepRejected("reference step cannot stay in the domain", x_new)
        new_res = path_residual(f, g, xi0, tau, x_new)
        stall = stall + 1 if new_res >= res else 0
        x, lam_prev = x_new, max(lam, 1e-16)
        res = min(res, new_res) if stall else new_res
        if stall >= 3:
            break
    res = path_residual(f, g, xi0, tau, x)
    return ReferenceSolution(tau, x, res, "prox-newton", res <= max(tol, 1e-10))


class ReferencePath:
    """Cache of reference points keyed by tau, each warm-started from the
    nearest tau already solved."""

    def __init__(self, f, g, xi0, x0=None, tol=1e-12):
        self.f, self.g, self.xi0, self.x0, self.tol = f, g, xi0, x0, tol
        self.cache = {}

    def __call__(self, tau):
        tau = float(tau)
        if tau not in self.cache:
            start = self.x0
            if self.cache:
                near = min(self.cache, key=lambda t: abs(t - tau))
                start = self.cache[near].x
            self.cache[tau] = reference_solution(self.f, self.g, self.xi0, tau, start, self.tol)
        return self.cache[tau]


# ---------------------------------------------------------------------------
# brute-force proximal maps

def _small_qp(P, c, lb, ub, A=None, b=None, x0=None):
    """min 1/2 v'Pv + c'v over lb <= v <= ub (and Av = b): SLSQP, then an exact
    solve of the KKT system on the set of variables off their bounds."""
    n = c.size
    x0 = np.clip(np.zeros(n) if x0 is None else x0, lb, ub)
    cons = [] if A is None else [LinearConstraint(A, b, b)]
    r = minimize(lambda v: 0.5 * v @ P @ v + c @ v, x0, jac=lambda v: P @ v + c,
                 bounds=Bounds(lb, ub), constraints=cons, method="SLSQP",
                 options={"ftol": 1e-16, "maxiter": 1000})
    v = np.clip(r.x, lb, ub)
    tol = 1e-7
    free = (v > lb + tol) & (v < ub - tol)
    fixed = ~free
    vf = v.copy()
    vf[fixed & (np.abs(v - lb) <= np.abs(v - ub))] = lb[fixed & (np.abs(v - lb) <= np.abs(v - ub))]
    vf[fixed & (np.abs(v - lb) > np.abs(v - ub))] = ub[fixed & (np.abs(v - lb) > np.abs(v - ub))]
    F = np.flatnonzero(free)
    if F.size:
        rhs = -c[F] - P[np.ix_(F, fixed)] @ vf[fixed]
        if A is None:
            vF = np.linalg.lstsq(P[np.ix_(F, F)], rhs, rcond=None)[0]
        else:
            m = A.shape[0]
            K = np.block([[P[np.ix_(F, F)], A[:, F].T], [A[:, F], np.zeros((m, m))]])
            r2 = np.concatenate([rhs, b - A[:, fixed] @ vf[fixed]])
            vF = np.linalg.lstsq(K, r2, rcond=None)[0][:F.size]
        vf[F] = vF
    if np.all(vf >= lb - 1e-12) and np.all(vf <= ub + 1e-12):
        obj = lambda v: 0.5 * v @ P @ v + c @ v  # noqa: E731
        if obj(vf) <= obj(v) + 1e-14 * (1 + abs(obj(v))):
            return np.clip(vf, lb, ub)
    return v


def _prox_qp(g, x, gamma):
    """prox as a bound/equality constrained QP, or None if g has no such form."""
    n = x.size
    I = np.eye(n)
    if isinstance(g, (L1Norm, ElasticNet)):
        w = np.broadcast_to(getattr(g, "_t", g.rho), x.shape).ravel()
        mu = g.mu if isinstance(g, ElasticNet) else 0.0
        B = np.hstack([I, -I])
        P = (1.0 / gamma + mu) * B.T @ B
        c = np.concatenate([w, w]) - B.T @ x / gamma
        v0 = np.concatenate([np.maximum(x, 0), np.maximum(-x, 0)])
        v = _small_qp(P, c, np.zeros(2 * n), np.full(2 * n, np.inf), x0=v0)
        return v[:n] - v[n:]
    if isinstance(g, BoxIndicator):
        bnd = np.broadcast_to(g.bound, x.shape).ravel()
        return _small_qp(I / gamma, -x / gamma, -bnd, bnd)
    if isinstance(g, SimplexIndicator):
        return _small_qp(I, -x, np.zeros(n), np.full(n, np.inf), np.ones((1, n)),
                         np.array([getattr(g, "radius", 1.0)]), np.full(n, 1.0 / n))
    if isinstance(g, Zero):
        return x.copy()
    if isinstance(g, OriginIndicator):
        return np.zeros_like(x)
    return None


def brute_prox(g, x, gamma, mode="auto", iters=10 ** 6):
    """argmin_u g(u) + |u - x|^2 / (2 gamma) without using g.prox.

    ``mode='qp'`` rewrites the problem as a small smooth QP (sign splitting for
    l1 terms) solved by SLSQP plus an exact active-set correction;
    ``mode='subgradient'`` runs the subgradient method with steps 1/k.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    flat = x.ravel()
    if mode in ("auto", "qp"):
        u = _prox_qp(g, flat, gamma)
        if u is not None:
            return u.reshape(shape)
        if mode == "qp":
            raise UnsupportedModel(f"no QP form for {type(g).__name__}")
    if g.is_indicator:
        raise UnsupportedModel("subgradient mode needs a finite-valued g")
    u = flat.copy()
    best, best_val = u.copy(), np.inf
    for k in range(1, iters + 1):
        val = g(u.reshape(shape)) + float((u - flat) @ (u - flat)) / (2 * gamma)
        if val < best_val:
            best, best_val = u.copy(), val
        s = np.ravel(g.subgradient(u.reshape(shape))) + (u - flat) / gamma
        # the objective is 1/gamma strongly convex, so steps gamma/k converge
        u = u - (gamma / k) * s
    return best.reshape(shape)


# ---------------------------------------------------------------------------
# theorem audits

@dataclass
class TheoremConstants:
    tau0: float
    sigma: float
    beta: float = 0.05
    C: float = None
    nu: float = None
    c0bar: float = 0.0


@dataclass
class AuditRow:
    k: int
    name: str
    lhs: float
    rhs: float
    ok: bool

    @property
    def slack(self):
        return self.rhs - self.lhs


@dataclass
class AuditReport:
    rows: list = field(default_factory=list)
    partial: bool = False
    notes: list = field(default_factory=list)

    def add(self, k, name, lhs, rhs, atol):
        self.rows.append(AuditRow(k, name, float(lhs), float(rhs), bool(lhs <= rhs + atol)))

    @property
    def violations(self):
        return [r for r in self.rows if not r.ok]

    @property
    def passed(self):
        return not self.violations and not self.partial

    def count(self, name):
        return sum(1 for r in self.rows if r.name == name)

    def to_json(self):
        return json.dumps({"partial": self.partial, "notes": self.notes,
                           "rows": [asdict(r) for r in self.rows]}, indent=1)


@dataclass
class IterateRecord:
    k: int
    tau: float
    x: np.ndarray
    delta: float = None


def record_iterates():
    """A callback for homotopy.run and the list it appends IterateRecords to."""
    out = []

    def cb(k, x, tau):
        out.append(IterateRecord(k, tau, np.array(x, copy=True)))
    return out, cb


def one_step_bound(lam_hat, delta):
    """Right-hand side of the one-step contraction, or None if its
    precondition 1 - 4 lam_hat + 2 lam_hat^2 > 0 fails."""
    den = 1 - 4 * lam_hat + 2 * lam_hat ** 2
    if den <= 0 or lam_hat >= 1:
        return None
    return (3 - 2 * lam_hat) / den * lam_hat ** 2 + delta / (1 - lam_hat)


def tau_recurrence_bounds(tau0, M, q, k):
    """Upper bound on tau_k and lower bound on 1 - tau_k for sequences with
    tau_{k+1} <= tau_k + M q^k tau_k tau_{k+1}."""
    den = 1 - q - tau0 * M * (1 - q ** k)
    if den <= 0:
        return None
    return (tau0 * (1 - q) / den,
            ((1 - tau0) * (1 - q) - tau0 * M + tau0 * M * q ** k) / den)


def audit_theorem(trace, regime, constants, refs, f=None, atol=1e-9, one_step=True):
    """Check the rate inequalities of the chosen regime on recorded iterates.

    ``trace`` is a list of IterateRecord (delta = accuracy used to produce the
    next iterate), ``refs`` maps tau to a ReferenceSolution.  Distances use the
    Euclidean norm in the strongly convex regime and the local norm at the
    reference point otherwise.
    """
    rep = AuditReport()
    c = constants
    local = regime != "strongly_convex"
    if local and f is None:
        raise ValueError("local-norm audits need the smooth oracle f")

    def dist(x, tau):
        try:
            ref = refs(tau)
        except Exception as err:  # a missing reference makes the audit partial
            rep.partial = True
            rep.notes.append(f"no reference at tau={tau}: {err}")
            return None
        if not ref.ok:
            rep.partial = True
            rep.notes.append(f"reference at tau={tau} has residual {ref.residual:.2e}")
        d = x - ref.x
        return f.hessian(ref.x).norm(d) if local else float(np.linalg.norm(d))

    lam = {}
    for rec in trace:
        k = rec.k
        lam[k] = dist(rec.x, rec.tau)
        if lam[k] is None:
            continue
        if regime == "strongly_convex":
            rep.add(k, "dist", lam[k], c.C * c.sigma ** k, atol)
            rep.add(k, "one_minus_tau", 1 - rec.tau, (1 - c.tau0) / c.tau0 * c.sigma ** k, atol)
        elif regime == "self_concordant":
            lb, tb = self_concordant_bounds(k, c.tau0, c.sigma)
            rep.add(k, "lambda", lam[k], c.beta / 0.05 * lb, atol)
            rep.add(k, "one_minus_tau", 1 - rec.tau, tb, atol)
        else:
            lb, tb = barrier_bounds(k, c.sigma, c.nu, c.c0bar)
            rep.add(k, "lambda", lam[k], c.beta / 0.05 * lb, atol)
            rep.add(k, "one_minus_tau", 1 - rec.tau, tb, atol)
    if one_step and local:
        for a, b in zip(trace[:-1], trace[1:]):
            if a.delta is None or lam.get(b.k) is None:
                continue
            lam_hat = dist(a.x, b.tau)
            bound = one_step_bound(lam_hat, a.delta)
            if bound is not None:
                rep.add(b.k, "one_step", lam[b.k], bound, atol)
    return rep


def damped_count_bound(f, g, xi0, tau0, x_hat, ref, beta=0.05):
    """Upper bound on damped proximal Newton steps from x_hat."""
    gap = tau_objective(f, g, xi0, tau0, x_hat) - tau_objective(f, g, xi0, tau0, ref.x)
    return int(math.floor(max(gap, 0.0) / omega_fn(0.9 * beta)))


# ---------------------------------------------------------------------------
# covariance reference

@dataclass
class CovarianceReference:
    X: np.ndarray
    Y: np.ndarray
    residual: float
    iterations: int
    duality_gap: float


def reference_covariance(Sigma, psi, tol=1e-11, max_iter=200000):
    """Solve min -log det(Sigma + Y) over the domain of psi* by accelerated
    projected gradient with explicit inverses, then X = (Sigma + Y)^{-1}."""
    Sigma = 0.5 * (Sigma + Sigma.T)
    p = Sigma.shape[0]
    if isinstance(psi, Zero):
        X = sla.inv(Sigma)
        return CovarianceReference(X, np.zeros_like(Sigma), 0.0, 0, 0.0)
    if not isinstance(psi, L1Norm):
        raise UnsupportedModel("reference covariance solver handles l1 penalties only")
    bound = np.broadcast_to(psi._t, Sigma.shape)
    proj = lambda Y: np.clip(Y, -bound, bound)  # noqa: E731

    def chol(Y):
        try:
            return np.linalg.cholesky(Sigma + Y)
        except np.linalg.LinAlgError:
            return None

    def pd(Y):
        return chol(Y) is not None

    def val(Y, c=None):
        c = chol(Y) if c is None else c
        return np.inf if c is None else -2.0 * float(np.log(np.diag(c)).sum())

    def grad(Y):
        G = -sla.inv(Sigma + Y)
        return 0.5 * (G + G.T)

    w0 = sla.eigvalsh(Sigma)[0]
    Y = proj(max(0.0, 0.1 - w0) * np.eye(p))
    if not pd(Y):
        Y = np.zeros_like(Sigma)
    Z, t, L = Y.copy(), 1.0, 1.0 / max(w0, 1e-3) ** 2
    res = np.inf
    for it in range(1, max_iter + 1):
        G = grad(Z)
        fz = val(Z)
        while True:
            Yn = proj(Z - G / L)
            d = Yn - Z
            if val(Yn) <= fz + np.vdot(G, d) + 0.5 * L * np.vdot(d, d):
                break
            L *= 2.0
        if np.vdot(Z - Yn, Yn - Y) > 0:
            tn, Zn = 1.0, Yn
        else:
            tn = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            Zn = Yn + ((t - 1) / tn) * (Yn - Y)
            if not pd(Zn):
                tn, Zn = 1.0, Yn
        Y, Z, t = Yn, Zn, tn
        L /= 1.5
        if it % 10 == 0:
            Gy = grad(Y)
            Lr = max(L, 1.0)
            res = float(np.linalg.norm(Y - proj(Y - Gy / Lr))) * Lr
            if res <= tol:
                break
    X = sla.inv(Sigma + Y)
    X = 0.5 * (X + X.T)
    primal = float(np.vdot(Sigma, X)) - np.linalg.slogdet(X)[1] + psi(X)
    dual = p + np.linalg.slogdet(Sigma + Y)[1]
    return CovarianceReference(X, Y, res, it, float(primal - dual))

"""Primal-dual-primal homotopy steps.

For the primal problem  min_x f(x) + psi(D x)  the dual is

    min_y Psi(y) = phi(y) + psi*(y),    phi(y) = f*(-D'y).

The homotopy runs on the dual, but every proximal Newton subproblem is solved
through its own dual, which lives in the space of D x and carries psi itself
(cheap prox, sparse iterates) instead of psi*.  The covariance solver at the
bottom applies this to  min_X tr(Sigma X) - log det X + psi(X)  and touches
Y + Sigma only through matrix products inside its loop.
"""
import contextlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (DomainError, HpvmError, InvalidParameter, StepRejected,
                     SubproblemNotConverged, UnsupportedModel)
from .homotopy import HomotopySettings, StepResult, run, tau_next_barrier, sigma_barrier
from .oracles.metrics import CongruenceMetric, DenseMetric, OperatorMetric
from .oracles.regularizers import BoxIndicator, L1Norm, Zero
from .oracles.smooth import QuadraticLoss, SmoothOracle
from .report import SolveReport
from .subsolver import QuadraticModel, solve_subproblem

log = logging.getLogger(__name__)


def conjugate_regularizer(psi):
    try:
        return psi.conjugate()
    except NotImplementedError as err:
        raise UnsupportedModel(str(err)) from None


# ---------------------------------------------------------------------------
# generic dual

class DualOracle(SmoothOracle):
    """phi(y) = f*(-D'y) for a primal oracle exposing conj_value/gradient/hessian."""

    kappa = 3

    def __init__(self, primal, D):
        for name in ("conj_value", "conj_gradient", "conj_hessian", "conj_in_domain"):
            if not hasattr(primal, name):
                raise UnsupportedModel(f"{type(primal).__name__} has no {name}")
        D = np.atleast_2d(np.asarray(D, dtype=float))
        n, p = D.shape
        if n > p or np.linalg.matrix_rank(D) < n:
            raise InvalidParameter("D must have full row rank")
        self.primal = primal
        self.D = D
        self.shape = (n,)
        self.nu = primal.nu
        self.sc_constant = 0.0 if primal.sc_constant == 0 else 2.0
        if isinstance(primal, QuadraticLoss):
            w = sla.eigvalsh(D @ sla.solve(primal.Q, D.T, assume_a="pos"))
            self.mu, self.lipschitz = float(w[0]), float(w[-1])

    def _arg(self, y):
        return -self.D.T @ y

    def in_domain(self, y):
        return bool(np.all(np.isfinite(y))) and self.primal.conj_in_domain(self._arg(y))

    def value(self, y):
        return self.primal.conj_value(self._arg(y))

    def gradient(self, y):
        return -self.D @ self.primal.conj_gradient(self._arg(y))

    def hessian(self, y):
        Hs = self.primal.conj_hessian(self._arg(y))
        return DenseMetric(self.D @ Hs.H @ self.D.T)


@dataclass
class DualProblem:
    primal: SmoothOracle
    D: np.ndarray
    psi: object
    phi: DualOracle
    psi_conj: object

    def objective(self, y):
        return self.phi.value(y) + self.psi_conj(y)

    def primal_objective(self, x):
        return self.primal.value(x) + self.psi(self.D @ x)


def build_dual(f, D, psi):
    """Dual of min f(x) + psi(Dx)."""
    return DualProblem(f, np.atleast_2d(np.asarray(D, float)), psi, DualOracle(f, D),
                       conjugate_regularizer(psi))


def _tau_gradient(dual, y, tau, xi0):
    """Gradient of the tau-problem's smooth part, grad phi(y) - (1/tau - 1) xi0."""
    c = dual.phi.gradient(y)
    if xi0 is not None:
        c = c - (1.0 / tau - 1.0) * xi0
    return c


@dataclass
class DualizedModel:
    model: QuadraticModel
    hessian: DenseMetric
    grad_tau: np.ndarray
    h: np.ndarray


def dualize_subproblem(y, tau, dual, xi0=None, H=None):
    """Model over z with metric grad^2 phi(y)^{-1}, linear term -h and the
    perspective z -> psi(tau z)/tau.  The inverse metric is only applied
    through solves against grad^2 phi(y)."""
    if not dual.phi.in_domain(y):
        raise DomainError("y is outside the domain of phi")
    H = H if H is not None else dual.phi.hessian(y)
    if H.lambda_min <= 0:
        raise np.linalg.LinAlgError("dual Hessian is singular")
    c = _tau_gradient(dual, y, tau, xi0)
    h = y - H.solve(c)
    metric = OperatorMetric(H.solve, y.shape, lambda_max=1.0 / H.lambda_min,
                            lambda_min=1.0 / H.lambda_max, solve=H.apply)
    model = QuadraticModel(metric, -h, np.zeros_like(y), dual.psi.perspective(tau))
    return DualizedModel(model, H, c, h)


def recover_dual_iterate(z, y, tau, dual, e=None, xi0=None, H=None, grad_tau=None):
    """y - grad^2 phi(y)^{-1} (grad phi_tau(y) + z) + e."""
    H = H if H is not None else dual.phi.hessian(y)
    c = grad_tau if grad_tau is not None else _tau_gradient(dual, y, tau, xi0)
    y_new = y - H.solve(c + z)
    if e is not None:
        y_new = y_new + e
    return y_new


def recover_primal(y, dual):
    """x = grad f*(-D'y)."""
    u = -dual.D.T @ y
    if not dual.primal.conj_in_domain(u):
        raise DomainError("-D'y is outside the domain of f*")
    return dual.primal.conj_gradient(u)


def dual_subproblem(y, tau, dual, xi0=None, H=None):
    """The direct proximal Newton model on the dual, for cross-checks."""
    H = H if H is not None else dual.phi.hessian(y)
    c = _tau_gradient(dual, y, tau, xi0)
    return QuadraticModel(H, c, y, dual.psi_conj, 1.0 / tau)


def model_value(model, x):
    """Value of a proximal model including the weighted nonsmooth term."""
    return model.smooth_value(x) + model.weight * model.g(x)


class PDPStepper:
    """Drop-in replacement for the homotopy step that goes through the
    z-space model.  Every trial is kept so accepted steps can be matched
    with their z and residual afterwards."""

    def __init__(self, dual):
        self.dual = dual
        self.trials = []

    def __call__(self, f, g, y, tau_next, xi0, metric, delta, x_warm=None,
                 iter_cap=10000, extra_linear=None):
        dm = dualize_subproblem(y, tau_next, self.dual, xi0, H=metric)
        z_init = None
        if self.trials:
            z_init = self.trials[-1]["z"]
        capped = False
        try:
            res = solve_subproblem(dm.model, delta, x_init=z_init, iter_cap=iter_cap,
                                   certificate="residual")
            z, e, gap, iters = res.x, res.residual, res.gap_bound, res.iterations
        except SubproblemNotConverged as err:
            if err.best is None:
                raise
            log.warning("accepting uncertified dual model solution: %s", err)
            z, gap, iters, capped = err.best, err.gap_bound, err.iterations, True
            e = None
        if e is None:
            e = np.zeros_like(y)
        y_new = recover_dual_iterate(z, y, tau_next, self.dual, e, H=dm.hessian,
                                     grad_tau=dm.grad_tau)
        self.trials.append({"y_prev": y, "y": y_new, "z": z, "e": e, "tau": tau_next,
                            "delta": delta, "xi0": xi0})
        if not self.dual.phi.in_domain(y_new):
            raise StepRejected("recovered dual iterate left the domain", y_new)
        lam = metric.norm(y_new - y)
        return StepResult(y_new, lam, iters, gap, capped)

    def lookup(self, y):
        for t in reversed(self.trials):
            if t["y"] is y:
                return t
        return None


@dataclass
class PDPResult:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    run: object
    steps: list
    D: np.ndarray = None

    @property
    def x_from_z(self):
        """D^{-1} z, available when D is square."""
        if self.z is None or self.D.shape[0] != self.D.shape[1]:
            return None
        return np.linalg.solve(self.D, self.z)


def run_pdp(f, D, psi, y0=None, xi0=None, settings=None, callback=None):
    """Solve min f(x) + psi(Dx) through its dual with z-space subproblems."""
    dual = build_dual(f, D, psi)
    y0 = np.zeros(dual.phi.shape) if y0 is None else np.asarray(y0, dtype=float)
    if not dual.phi.in_domain(y0) or not np.isfinite(dual.psi_conj(y0)):
        raise InvalidParameter("y0 must lie in the domain of the dual objective")
    settings = settings or HomotopySettings(regime="self_concordant", practical=True)
    stepper = PDPStepper(dual)
    steps = []

    def cb(k, y, tau):
        t = stepper.lookup(y)
        if t is not None:
            steps.append(dict(t, k=k))
        if callback is not None:
            callback(k, y, tau)

    res = run(dual.phi, dual.psi_conj, y0, xi0, settings, callback=cb,
              record_kkt=True, step_fn=stepper)
    x = recover_primal(res.x, dual)
    z = steps[-1]["z"] if steps else None
    return PDPResult(res.x, x, z, res, steps, dual.D)


def primal_recovery_terms(dual, y, y_star, x_star):
    """(|x - x*|_{x*}, r) for x = grad f*(-D'y) and r = |y - y*|_{y*}; the
    first is at most r / (1 - r) when r < 1."""
    x = recover_primal(y, dual)
    Hs = dual.primal.conj_hessian(-dual.D.T @ y_star)
    lhs = Hs.dual_norm(x - x_star)
    r = dual.phi.hessian(y_star).norm(y - y_star)
    return lhs, r


def residual_bound_terms(dual, step, y_star, x_star):
    """Both sides of the bound on |z_{k+1} - D x*|*_{y_k} for one recorded
    step; None when |y* - y_k|_{y_k} >= 1."""
    y, H = step["y_prev"], dual.phi.hessian(step["y_prev"])
    r = H.norm(y_star - y)
    if r >= 1:
        return None
    xi0 = step.get("xi0")
    xi_term = 0.0 if xi0 is None else (1.0 / step["tau"] - 1.0) * H.dual_norm(xi0)
    lhs = H.dual_norm(step["z"] - dual.D @ x_star)
    terms = (r * r / (1 - r), H.norm(step["y"] - y_star), xi_term, H.norm(step["e"]))
    return lhs, terms


# ---------------------------------------------------------------------------
# covariance estimation without inversions in the loop

_AUDITED = (
    (np.linalg, ("inv", "cholesky", "solve", "pinv")),
    (sla, ("inv", "cholesky", "cho_factor", "solve", "lu_factor")),
)


class InversionCounter:
    def __init__(self):
        self.calls = {}

    @property
    def total(self):
        return sum(self.calls.values())


@contextlib.contextmanager
def linalg_audit():
    """Count calls to matrix inversion and factorization routines."""
    counter = InversionCounter()
    saved = []

    def wrap(mod, name, fn):
        def counted(*args, **kwargs):
            key = f"{mod.__name__}.{name}"
            counter.calls[key] = counter.calls.get(key, 0) + 1
            return fn(*args, **kwargs)
        return counted

    for mod, names in _AUDITED:
        for name in names:
            fn = getattr(mod, name)
            saved.append((mod, name, fn))
            setattr(mod, name, wrap(mod, name, fn))
    try:
        yield counter
    finally:
        for mod, name, fn in saved:
            setattr(mod, name, fn)


def _min_eig(S):
    return float(sla.eigvalsh(S, subset_by_index=[0, 0])[0])


def _sym(A):
    return 0.5 * (A + A.T)


def covariance_subproblem(Y, Sigma, xi0, tau, psi, S=None):
    """Model -tr(C X) + tr(S X S X)/2 + psi(tau X)/tau with S = Y + Sigma and
    C = 2Y + Sigma + S Xi S, Xi = (1/tau - 1) xi0."""
    S = Y + Sigma if S is None else S
    if _min_eig(S) <= 0:
        raise DomainError("Y + Sigma must be positive definite")
    C = 2.0 * Y + Sigma
    if xi0 is not None and np.any(xi0):
        C = C + S @ ((1.0 / tau - 1.0) * xi0) @ S
    return QuadraticModel(CongruenceMetric(S), -_sym(C), np.zeros_like(Y),
                          psi.perspective(tau))


def covariance_direction(Y, Sigma, Xi, Z):
    """D = S - S Z S + S Xi S with S = Y + Sigma."""
    S = Y + Sigma
    M = Z if Xi is None or not np.any(Xi) else Z - Xi
    return _sym(S - S @ M @ S)


def covariance_update(Y, Sigma, Xi, Z, alpha, D=None):
    """Y + alpha D; raises StepRejected if Y + alpha D + Sigma is not PD."""
    if not 0 <= alpha <= 1:
        raise InvalidParameter("alpha must lie in [0, 1]")
    D = covariance_direction(Y, Sigma, Xi, Z) if D is None else D
    Y_new = Y + alpha * D
    if _min_eig(Y_new + Sigma) <= 0:
        raise StepRejected("Y + Sigma lost positive definiteness", Y_new)
    return Y_new


def newton_decrement_cov(Z, Y, Sigma, Xi=None):
    """(p - 2 tr W + tr W^2)^{1/2} with W = (Z - Xi)(Y + Sigma)."""
    p = Y.shape[0]
    M = Z if Xi is None else Z - Xi
    # tr (I - W)^2 equals the expanded form but avoids cancelling p against tr W
    E = np.eye(p) - M @ (Y + Sigma)
    rad = float(np.sum(E * E.T))
    if rad < 0:
        if rad < -1e-12:
            raise HpvmError(f"negative decrement radicand {rad:.3e}")
        rad = 0.0
    return math.sqrt(rad)


def damped_alpha(lam, dbar0):
    if lam <= dbar0:
        return 1.0
    return (lam - dbar0) / (lam * (1.0 + lam - dbar0))


def default_y0(Sigma, psi_conj):
    """c I with c the smallest shift making Y0 + Sigma >= 0.1 I, clipped to the
    domain of psi*."""
    p = Sigma.shape[0]
    c = max(0.0, 0.1 - float(sla.eigvalsh(Sigma)[0]))
    if isinstance(psi_conj, BoxIndicator):
        c = min(c, float(np.min(np.diag(np.broadcast_to(psi_conj.bound, Sigma.shape)))))
    elif c > 0 and not np.isfinite(psi_conj(c * np.eye(p))):
        c = 0.0
    Y0 = c * np.eye(p)
    if sla.eigvalsh(Y0 + Sigma)[0] <= 0:
        raise InvalidParameter("no feasible diagonal start: Y0 + Sigma is not positive definite")
    return Y0


def y0_from_primal(X0, Sigma, psi_conj, shrink=0.5, max_shrink=60):
    """Dual start from a primal guess: X0^{-1} - Sigma projected onto the
    domain of psi*, pulled toward 0 until Y0 + Sigma is positive definite."""
    Y = _sym(sla.inv(X0) - Sigma)
    Y = psi_conj.prox(Y, 1.0)
    for _ in range(max_shrink):
        if sla.eigvalsh(Y + Sigma)[0] > 0:
            return Y
        Y = shrink * Y
    raise InvalidParameter("could not find a feasible dual start from X0")


@dataclass
class Algorithm2Settings:
    eps: float = 1e-6
    schedule: str = "practical"  # or "barrier"
    tau0: float = None
    sigma: float = None
    accept_radius: float = 0.25
    full_step_below: float = 0.2
    max_iter: int = 500
    sub_iter_cap: int = 20000
    delta_floor: float = 1e-13
    max_halvings: int = 40
    offdiag_only: bool = False

    def validate(self):
        if self.eps <= 0:
            raise InvalidParameter("eps must be positive")
        if self.schedule not in ("practical", "barrier"):
            raise InvalidParameter(f"unknown schedule {self.schedule!r}")
        if self.tau0 is None:
            self.tau0 = 1e-3 if self.schedule == "practical" else 0.5
        if not 0 < self.tau0 < 1:
            raise InvalidParameter("tau0 must lie in (0, 1)")
        return self


@dataclass
class Algorithm2Result:
    Y: np.ndarray
    Z: np.ndarray
    trace: list
    status: str
    inversions: int
    inversion_calls: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.trace)

    def report(self):
        return SolveReport("HomoPN-PDP", list(self.trace), self.Z, self.status)


def run_algorithm2(Sigma, psi, eps=None, settings=None, Y0=None, xi0=None, callback=None):
    """Inexact primal-dual-primal homotopy proximal Newton method for
    min tr(Sigma X) - log det X + psi(X).  Returns Y (dual) and Z (primal)."""
    settings = (settings or Algorithm2Settings()).validate()
    eps = settings.eps if eps is None else float(eps)
    Sigma = _sym(np.asarray(Sigma, dtype=float))
    p = Sigma.shape[0]
    if settings.offdiag_only and isinstance(psi, L1Norm) and psi.weights is None:
        psi = L1Norm(psi.rho, 1.0 - np.eye(p))
    psi_conj = conjugate_regularizer(psi)
    Y = default_y0(Sigma, psi_conj) if Y0 is None else _sym(np.asarray(Y0, dtype=float))
    if _min_eig(Y + Sigma) <= 0:
        raise InvalidParameter("Y0 + Sigma must be positive definite")
    if not np.isfinite(psi_conj(Y)):
        raise InvalidParameter("Y0 is outside the domain of psi*")
    xi0 = psi_conj.subgradient(Y) if xi0 is None else np.asarray(xi0, dtype=float)
    tau_free = not np.any(xi0) and (psi_conj.is_indicator or isinstance(psi, Zero))
    dbar0 = 0.1 * eps
    tau = settings.tau0
    sigma = settings.sigma
    if settings.schedule == "barrier" and sigma is None:
        sigma = sigma_barrier(tau, float(p))

    trace = []
    t_start = time.perf_counter()
    lam_prev = None
    Z = None
    status = "cap"
    with linalg_audit() as audit:
        for k in range(settings.max_iter):
            # tau update
            if tau_free or settings.schedule == "practical":
                tau_next = tau if tau_free else min(1.0, tau + max(tau, 1e-3))
            else:
                tau_next = tau_next_barrier(tau, k, sigma, float(p))
            if 1.0 - tau_next <= eps:
                tau_next = 1.0
            delta = dbar0 if lam_prev is None else min(dbar0, 0.1 * lam_prev ** 2)
            delta = max(delta, settings.delta_floor)
            S = Y + Sigma
            Z, lam, subs, Xi = _cov_solve(Y, Sigma, S, xi0, tau_next, psi, delta,
                                          settings.sub_iter_cap, Z)
            if tau_free and lam <= settings.accept_radius:
                tau_next = 1.0
            elif settings.schedule == "practical" and not tau_free:
                # back off the tau increment while the decrement is too large
                for _ in range(settings.max_halvings):
                    if lam <= settings.accept_radius or tau_next - tau <= 1e-12:
                        break
                    tau_next = tau + 0.5 * (tau_next - tau)
                    Z, lam, s2, Xi = _cov_solve(Y, Sigma, S, xi0, tau_next, psi, delta,
                                                settings.sub_iter_cap, Z)
                    subs += s2
            if lam <= eps and 1.0 - tau_next <= eps:
                _record(trace, k, tau_next, Y, Sigma, lam, 1.0, Z, subs, t_start, 0.0)
                status = "converged"
                break
            D = covariance_direction(Y, Sigma, Xi, Z)
            alpha = damped_alpha(lam, dbar0) if lam > settings.full_step_below else 1.0
            for _ in range(settings.max_halvings):
                try:
                    Y_new = covariance_update(Y, Sigma, Xi, Z, alpha, D)
                    break
                except StepRejected:
                    alpha *= 0.5
            else:
                raise HpvmError(f"iteration {k}: no positive definite step after "
                                f"{settings.max_halvings} halvings")
            margin = _min_eig(Y_new + Sigma)
            _record(trace, k, tau_next, Y_new, Sigma, lam, alpha, Z, subs, t_start, margin)
            Y, tau, lam_prev = Y_new, tau_next, lam
            if callback is not None:
                callback(k, Y, Z, tau)
    return Algorithm2Result(Y, Z, trace, status, audit.total, dict(audit.calls))


def _cov_solve(Y, Sigma, S, xi0, tau, psi, delta, cap, Z_warm):
    model = covariance_subproblem(Y, Sigma, xi0, tau, psi, S)
    try:
        res = solve_subproblem(model, delta, x_init=Z_warm, iter_cap=cap, polish=False)
        Z, subs = res.x, res.iterations
    except SubproblemNotConverged as err:
        if err.best is None:
            raise
        log.warning("covariance subproblem not certified: %s", err)
        Z, subs = err.best, err.iterations
    Z = _sym(Z)
    Xi = (1.0 / tau - 1.0) * xi0 if np.any(xi0) else None
    return Z, newton_decrement_cov(Z, Y, Sigma, Xi), subs, Xi


def _record(trace, k, tau, Y, Sigma, lam, alpha, Z, subs, t_start, margin):
    w = sla.eigvalsh(Y + Sigma)
    trace.append({
        "k": k + 1, "tau": tau,
        "obj": Sigma.shape[0] + float(np.log(w).sum()),
        "lambda_est": lam, "kkt": float("nan"),
        "wall_ms": 1e3 * (time.perf_counter() - t_start),
        "sub_iters": subs, "nnz": int(np.count_nonzero(Z)),
        "alpha": alpha, "min_eig": margin if margin else float(w[0]),
    })


def covariance_objective(Sigma, psi, X):
    """tr(Sigma X) - log det X + psi(X), inf outside the cone."""
    sign, ld = np.linalg.slogdet(X)
    if sign <= 0:
        return np.inf
    return float(np.vdot(Sigma, X)) - float(ld) + psi(X)

"""Homotopy proximal variable-metric method for F = f + g.

The path x*_tau minimizes tau*f(x) - (1 - tau)<xi0, x> + g(x), which starts
at x0 (xi0 in the subdifferential of g at x0) for tau = 0 and reaches a
minimizer of F at tau = 1.  Each outer iteration raises tau by a schedule and
takes one inexact proximal variable-metric step on the rescaled problem

    f(x) - (1/tau - 1)<xi0, x> + (1/tau) g(x).

Three schedules are provided, for strongly convex smooth f, for
self-concordant f with Lipschitz g, and for self-concordant barriers f.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, StepRejected, SubproblemNotConverged
from .oracles.metrics import DenseMetric, ScaledIdentity
from .oracles.smooth import ScaledOracle, standardizing_scale
from .report import SolveReport
from .subsolver import QuadraticModel, solve_subproblem

log = logging.getLogger(__name__)

REGIMES = ("strongly_convex", "self_concordant", "barrier")
METRICS = ("newton", "diagonal", "quasi_newton")
SIGMA_MIN = 0.01 + (10.0 / 18.0) ** 2
DELTA_DIVISOR = 113.0


@dataclass
class HomotopySettings:
    regime: str = "self_concordant"
    practical: bool = False
    metric: str = "newton"
    tau0: float = None
    sigma: float = None
    beta: float = 0.05
    eps: float = 1e-8
    max_outer: int = 2000
    stage1: str = "none"
    c0bar: float = 0.0
    sub_iter_cap: int = 10000
    delta_floor: float = 1e-12
    max_doublings: int = 60
    max_halvings: int = 30
    standardize: bool = True
    ls_radius: float = 0.25

    @property
    def accept_radius(self):
        return self.beta if self.ls_radius is None else self.ls_radius

    def validate(self):
        if self.regime not in REGIMES:
            raise InvalidParameter(f"unknown regime {self.regime!r}")
        if self.metric not in METRICS:
            raise InvalidParameter(f"unknown metric {self.metric!r}")
        if self.practical:
            if self.tau0 is None:
                self.tau0 = 1e-3
            if self.sigma is None:
                self.sigma = 1.0
        if self.tau0 is not None and not 0.0 < self.tau0 < 1.0:
            raise InvalidParameter("tau0 must lie in (0, 1)")
        if self.sigma is not None:
            if not 0.0 < self.sigma <= 1.0:
                raise InvalidParameter("sigma must lie in (0, 1]")
            if self.sigma == 1.0 and not self.practical:
                raise InvalidParameter("sigma = 1 is only allowed in practical mode")
            if self.regime != "strongly_convex" and self.sigma <= SIGMA_MIN:
                raise InvalidParameter(f"sigma must exceed {SIGMA_MIN:.4f}")
        if not self.eps > 0:
            raise InvalidParameter("eps must be positive")
        if not 0.0 < self.beta < 0.08:
            raise InvalidParameter("beta must lie in (0, 0.08)")
        if self.stage1 not in ("none", "damped", "auxiliary"):
            raise InvalidParameter(f"unknown stage1 {self.stage1!r}")
        return self


# ---------------------------------------------------------------------------
# schedules and constants

def contraction_factor(m, L, L_f, mu):
    """omega = sqrt((L - 2 mu) m + L_f^2) / m for metrics mI <= H <= LI."""
    val = (L - 2.0 * mu) * m + L_f ** 2
    return math.sqrt(max(val, 0.0)) / m


@dataclass
class StronglyConvexConstants:
    omega: float
    C: float
    Gamma: float
    sigma: float
    C_hat: float


def strongly_convex_constants(grad0_plus_xi, L_g, xi0_norm, mu, omega, tau0):
    """Constants of the linear rate for strongly convex smooth f.

    ``grad0_plus_xi`` is |grad f(x0) + xi0|_2.
    """
    C = grad0_plus_xi / mu
    Gamma = grad0_plus_xi / (omega * (L_g + xi0_norm))
    sigma = (1 - tau0 + tau0 * omega * Gamma) / (1 - tau0 + tau0 * Gamma)
    C_hat = C + (1 - tau0) * omega * (L_g + xi0_norm) / (tau0 ** 3 * mu)
    return StronglyConvexConstants(omega, C, Gamma, sigma, C_hat)


def tau_strongly_convex(k, tau0, sigma):
    s = (1 - tau0) * sigma ** k
    return 1.0 - s / (tau0 + s)


def decrement_factor(sigma, k):
    """Delta_k = (sqrt(sigma - 0.01)/10 - sqrt(sigma)^k/18) sqrt(sigma)^k."""
    r = math.sqrt(sigma) ** k
    return (math.sqrt(sigma - 0.01) / 10.0 - r / 18.0) * r


def c0(sigma):
    return math.sqrt(sigma - 0.01) / 10.0 - 1.0 / 18.0


def tau_next_self_concordant(tau, k, sigma, L_g):
    d = decrement_factor(sigma, k)
    return min(1.0, (1.0 + d * tau / (2 * L_g * (1 + d) - d * tau)) * tau)


def tau_next_barrier(tau, k, sigma, nu, c0bar=0.0):
    d = decrement_factor(sigma, k)
    return min(1.0, (1.0 + d / ((1 + d) * (math.sqrt(nu) + c0bar))) * tau)


def _bisect_smallest(ok, lo=SIGMA_MIN + 1e-12, hi=1.0 - 1e-12, iters=200):
    if not ok(hi):
        log.warning("no admissible sigma below 1; falling back to sigma = 1")
        return 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def sigma_self_concordant(tau0, L_g):
    """Smallest sigma satisfying the rate condition for Lipschitz g."""
    def ok(s):
        a = 2 * L_g * (1 - tau0) * (1 - math.sqrt(s))
        den = tau0 - a
        return den > 0 and a / den <= c0(s)
    return _bisect_smallest(ok)


def sigma_barrier(tau0, nu, c0bar=0.0):
    """Smallest sigma satisfying the rate condition for barrier f."""
    def ok(s):
        C0 = c0(s)
        rhs = 1 - tau0 * C0 / ((1 - tau0) * (1 + C0) * (math.sqrt(nu) + c0bar))
        return C0 > 0 and rhs > 0 and s >= rhs ** 2
    return _bisect_smallest(ok)


def self_concordant_bounds(k, tau0, sigma):
    """(bound on lambda_k, bound on 1 - tau_k) for Lipschitz g."""
    return 0.05 * sigma ** k, (1 - tau0) / tau0 * math.sqrt(sigma) ** k


def barrier_bounds(k, sigma, nu, c0bar=0.0):
    C0 = c0(sigma)
    r = math.sqrt(sigma)
    if r >= 1.0:
        return 0.05, math.inf
    return 0.05 * sigma ** k, C0 * r ** k / ((1 + C0) * (math.sqrt(nu) + c0bar) * (1 - r))


def barrier_c1(tau0, sigma):
    C0 = c0(sigma)
    return C0 / (tau0 * (1 + C0) * (1 - math.sqrt(sigma)) - C0)


def omega_fn(t):
    return t - math.log1p(t)


def damped_iteration_bound(gap0, beta):
    """Upper bound on damped steps needed to enter the local region."""
    return int(math.floor(gap0 / omega_fn(0.9 * beta)))


def tau0_strongly_convex_g(lmax_hess0, grad0_plus_xi, mu_g, beta):
    """Initial tau making x0 lie within beta of x*_tau0 in local norm."""
    return beta * mu_g / ((1 + beta) * math.sqrt(lmax_hess0) * grad0_plus_xi)


# ---------------------------------------------------------------------------
# metrics

class QuasiNewtonMetric:
    """Damped BFGS approximation with periodic reset to a scaled identity."""

    def __init__(self, dim, scale, reset_every=20):
        self.dim = dim
        self.scale = float(scale)
        self.reset_every = reset_every
        self.B = self.scale * np.eye(dim)
        self.count = 0

    def update(self, s, y):
        self.count += 1
        if self.count % self.reset_every == 0:
            sy = float(s @ y)
            self.B = (float(y @ y) / sy if sy > 0 else self.scale) * np.eye(self.dim)
            return
        Bs = self.B @ s
        sBs = float(s @ Bs)
        if sBs <= 0:
            return
        sy = float(s @ y)
        theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
        r = theta * y + (1 - theta) * Bs
        self.B = self.B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / float(s @ r)

    def metric(self):
        return DenseMetric(self.B)


def metric_select(kind, f, x, qn_state=None):
    if kind == "newton":
        return f.hessian(x)
    if kind == "diagonal":
        if not (np.isfinite(f.lipschitz) and f.mu > 0):
            raise InvalidParameter("diagonal metric needs finite L_f and mu_f > 0")
        return ScaledIdentity(f.lipschitz ** 2 / f.mu, f.shape)
    if kind == "quasi_newton":
        return qn_state.metric()
    raise InvalidParameter(f"unknown metric {kind!r}")


# ---------------------------------------------------------------------------
# one step

@dataclass
class StepResult:
    x: np.ndarray
    lambda_est: float
    sub_iters: int
    gap_bound: float
    capped: bool = False


def shifted_gradient(f, x, tau, xi0):
    """Gradient of f_tau / tau, i.e. grad f(x) - (1/tau - 1) xi0."""
    grad = f.gradient(x)
    if xi0 is None:
        return grad
    return grad - (1.0 / tau - 1.0) * xi0


def hpvm_step(f, g, x, tau_next, xi0, metric, delta, x_warm=None,
              iter_cap=10000, extra_linear=None):
    """One inexact proximal variable-metric step at parameter tau_next."""
    if not 0 < tau_next <= 1:
        raise InvalidParameter("tau must lie in (0, 1]")
    b = shifted_gradient(f, x, tau_next, xi0)
    if extra_linear is not None:
        b = b + extra_linear
    model = QuadraticModel(metric, b, x, g, 1.0 / tau_next)
    capped = False
    try:
        res = solve_subproblem(model, delta, x_init=x if x_warm is None else x_warm,
                               iter_cap=iter_cap)
        x_new, iters, gap = res.x, res.iterations, res.gap_bound
    except SubproblemNotConverged as err:
        if err.best is None:
            raise
        log.warning("accepting uncertified inner solution: %s", err)
        x_new, iters, gap, capped = err.best, err.iterations, err.gap_bound, True
    if not f.in_domain(x_new):
        raise StepRejected("step left the domain of f", x_new)
    lam = metric.norm(x_new - x)
    return StepResult(x_new, lam, iters, gap, capped)


# ---------------------------------------------------------------------------
# diagnostics

def kkt_residual(f, g, x, hess_lmax=None):
    """Scaled prox-gradient residual |x - prox_{g/L}(x - grad/L)| L / max(1, |grad|)."""
    grad = f.gradient(x)
    L = f.lipschitz
    if not np.isfinite(L):
        L = hess_lmax if hess_lmax is not None else f.hessian(x).lambda_max
    xp = g.prox(x - grad / L, 1.0 / L)
    return float(np.linalg.norm(x - xp)) * L / max(1.0, float(np.linalg.norm(grad)))


# ---------------------------------------------------------------------------
# stage 1

@dataclass
class InitResult:
    x: np.ndarray
    iterations: int
    bound: int = None
    sub_iters: int = 0


def _model_solve(f, g, x, tau0, xi0, metric, delta, cap, extra=None):
    b = f.gradient(x) - (1.0 / tau0 - 1.0) * xi0
    if extra is not None:
        b = b + extra
    model = QuadraticModel(metric, b, x, g, 1.0 / tau0)
    try:
        res = solve_subproblem(model, delta, x_init=x, iter_cap=cap)
        return res.x, res.gap_bound, res.iterations
    except SubproblemNotConverged as err:
        if err.best is None:
            raise
        return err.best, err.gap_bound, err.iterations


def damped_step_init(f, g, x_hat, xi_hat, tau0, beta=0.05, max_iter=10000,
                     iter_cap=10000):
    """Damped proximal Newton steps on the tau0 problem until the decrement
    drops below 0.9 beta / (1 + 0.9 beta); returns the final full step."""
    x = np.array(x_hat, dtype=float, copy=True)
    thresh = 0.9 * beta / (1 + 0.9 * beta)
    zeta_prev = beta
    subs = 0
    for j in range(max_iter + 1):
        H = f.hessian(x)
        delta = max(zeta_prev / 10.0, 1e-12)
        while True:
            s, gap, it = _model_solve(f, g, x, tau0, xi_hat, H, delta, iter_cap)
            subs += it
            zeta = H.norm(s - x)
            if math.sqrt(2 * gap) <= zeta / 10.0 or delta <= 1e-12:
                break
            delta = max(zeta / 10.0, 1e-12)
        if zeta <= thresh:
            return InitResult(s, j, None, subs)
        if j == max_iter:
            break
        dh = zeta / 10.0
        alpha = (zeta - dh) / ((1 + zeta - dh) * zeta)
        x = x + alpha * (s - x)
        zeta_prev = zeta
    raise SubproblemNotConverged("damped initialization did not reach the local region",
                                 best=x)


def auxiliary_constants(dual_norm0, eucl_norm0, mu, beta):
    """(t0, Theta, M0, j_max) for the auxiliary path started at x_hat."""
    theta = math.sqrt(99 * beta / 500) - 10 * beta / 9
    if theta <= 0:
        raise InvalidParameter("beta too large for the auxiliary path")
    if dual_norm0 > (1 + 2 * beta) / beta:
        t0 = 1 - beta / ((1 + 2 * beta) * dual_norm0)
    else:
        t0 = 1.0
    M0 = eucl_norm0 / math.sqrt(mu)
    j_max = int(math.floor(t0 * M0 * (1 + theta) / theta)) if M0 > 0 else 0
    return t0, theta, M0, j_max


def auxiliary_homotopy_init(f, g, x_hat, xi_hat, tau0, beta=0.05, iter_cap=10000):
    """Follow the path of tau0-problems tilted by -t(grad f(x_hat) + xi_hat)
    from t0 down to 0; the endpoint is close to x*_tau0."""
    x = np.array(x_hat, dtype=float, copy=True)
    d0 = f.gradient(x) + xi_hat
    H0 = f.hessian(x)
    t0, theta, M0, j_max = auxiliary_constants(H0.dual_norm(d0), float(np.linalg.norm(d0)),
                                               f.mu, beta)
    t = t0
    lam = beta
    j = 0
    subs = 0
    dec = theta / (M0 * (1 + theta)) if M0 > 0 else 1.0
    while t > 0:
        t = max(t - dec, 0.0)
        H = f.hessian(x)
        x_new, _, it = _model_solve(f, g, x, tau0, xi_hat, H,
                                    max(lam / DELTA_DIVISOR, 1e-13), iter_cap, extra=-t * d0)
        subs += it
        lam = max(H.norm(x_new - x), 1e-16)
        x = x_new
        j += 1
    return InitResult(x, j, j_max, subs)


# ---------------------------------------------------------------------------
# driver

@dataclass
class RunResult:
    x: np.ndarray
    tau: float
    iterations: int
    status: str
    trace: list = field(default_factory=list)
    stage1: InitResult = None
    scale: float = 1.0
    sigma: float = None
    tau0: float = None

    def report(self, solver="HomoPN"):
        return SolveReport(solver, list(self.trace), self.x, self.status)


class CompositeProblem:
    """F = f + g."""

    def __init__(self, f, g):
        self.f = f
        self.g = g

    def objective(self, x):
        return self.f.value(x) + self.g(x)


def _prepare(f, g, settings):
    """Rescale f and g so that f is standard self-concordant when needed."""
    if settings.regime == "strongly_convex" or settings.practical or not settings.standardize:
        return f, g, 1.0
    M = f.standard_sc_constant()
    if M is None or M <= 2.0 or not np.isfinite(M):
        return f, g, 1.0
    c = standardizing_scale(M)
    return ScaledOracle(f, c), g.scaled(c), c


def local_lipschitz(f, g):
    """Lipschitz constant of g measured in the local norm of f."""
    Lbar = g.lipschitz(f.dim)
    if f.mu <= 0 or not np.isfinite(Lbar):
        return np.inf
    return Lbar / math.sqrt(f.mu)


def run(f, g, x0, xi0=None, settings=None, delta_rule=None, callback=None,
        record_kkt=True, step_fn=None):
    """Run the homotopy from x0 with xi0 in the subdifferential of g at x0.

    ``delta_rule(k, x, tau_next, lambda_prev)`` overrides the inner accuracy.
    ``callback(k, x, tau)`` is called after every accepted iterate.
    ``step_fn`` replaces ``hpvm_step`` (same signature), e.g. to solve the
    model through its dual.
    """
    step_fn = step_fn or hpvm_step
    settings = (settings or HomotopySettings()).validate()
    f_orig, g_orig = f, g
    f, g, scale = _prepare(f, g, settings)
    x = np.array(x0, dtype=float, copy=True)
    xi0 = g_orig.subgradient(x) if xi0 is None else np.asarray(xi0, dtype=float)
    xi = scale * xi0
    if not f.in_domain(x):
        raise InvalidParameter("x0 is outside the domain of f")

    regime = settings.regime
    L_g = local_lipschitz(f, g) if regime == "self_concordant" else None
    qn = None
    if settings.metric == "quasi_newton":
        L0 = f.lipschitz if np.isfinite(f.lipschitz) else f.hessian(x).lambda_max
        qn = QuasiNewtonMetric(f.dim, L0)

    tau0, sigma = settings.tau0, settings.sigma
    if regime == "strongly_convex":
        if not (f.mu > 0 and np.isfinite(f.lipschitz)):
            raise InvalidParameter("strongly convex regime needs mu_f > 0 and finite L_f")
        if tau0 is None:
            tau0 = 0.5
        if sigma is None:
            if settings.metric == "diagonal":
                m = Lm = f.lipschitz ** 2 / f.mu
            else:
                raise InvalidParameter("give sigma explicitly for non-diagonal metrics")
            omega = contraction_factor(m, Lm, f.lipschitz, f.mu)
            Lbar = g.lipschitz(f.dim)
            gn = float(np.linalg.norm(f.gradient(x) + xi))
            if gn == 0:
                sigma = 0.5
            else:
                sigma = strongly_convex_constants(gn, Lbar, float(np.linalg.norm(xi)),
                                                  f.mu, omega, tau0).sigma
    elif regime == "self_concordant":
        if tau0 is None:
            tau0 = 0.5
        if sigma is None:
            if not np.isfinite(L_g):
                raise InvalidParameter("self-concordant regime needs finite L_g")
            sigma = sigma_self_concordant(tau0, L_g)
    else:
        if f.nu is None:
            raise InvalidParameter("barrier regime needs a barrier parameter nu")
        if tau0 is None:
            tau0 = 0.5
        if sigma is None:
            sigma = sigma_barrier(tau0, f.nu, settings.c0bar)

    def schedule(tau, k):
        if regime == "strongly_convex":
            return tau_strongly_convex(k + 1, tau0, sigma)
        if regime == "barrier":
            return tau_next_barrier(tau, k, sigma, f.nu, settings.c0bar)
        if np.isfinite(L_g):
            return tau_next_self_concordant(tau, k, sigma, L_g)
        return min(1.0, (1.0 + decrement_factor(sigma, k)) * tau)

    init = None
    if settings.stage1 != "none" and not settings.practical:
        if settings.stage1 == "damped":
            init = damped_step_init(f, g, x, xi, tau0, settings.beta)
        else:
            init = auxiliary_homotopy_init(f, g, x, xi, tau0, settings.beta)
        x = init.x

    trace = []
    t_start = time.perf_counter()

    def record(k, x, tau, lam, subs):
        row = {
            "k": k, "tau": tau,
            "obj": f_orig.value(x) + g_orig(x),
            "lambda_est": lam,
            "kkt": kkt_residual(f_orig, g_orig, x) if record_kkt else float("nan"),
            "wall_ms": 1e3 * (time.perf_counter() - t_start),
            "sub_iters": subs,
            "nnz": int(np.count_nonzero(x)),
        }
        trace.append(row)
        if callback is not None:
            callback(k, x, tau)

    tau = tau0
    record(0, x, tau, float("nan"), init.sub_iters if init else 0)
    lam_prev = settings.beta
    # with xi0 = 0 and an indicator g the model does not depend on tau
    tau_free = g.is_indicator and not np.any(xi)
    eps = settings.eps
    status = "cap"
    for k in range(settings.max_outer):
        if 1.0 - tau <= eps:
            tau = 1.0
        H = metric_select(settings.metric, f, x, qn)
        if delta_rule is not None:
            delta = delta_rule(k, x, None, lam_prev)
        else:
            delta = max(min(lam_prev, settings.beta) / DELTA_DIVISOR, settings.delta_floor)
        cap = settings.sub_iter_cap

        if tau >= 1.0:
            tau_next = 1.0
            step = _guarded_step(step_fn, f, g, x, 1.0, xi, H, delta, cap, settings.practical)
        elif settings.practical:
            tau_next, step = _practical_step(step_fn, f, g, x, tau, schedule(tau, k) - tau, xi,
                                             H, delta, cap, settings, tau_free)
        else:
            tau_next = schedule(tau, k)
            if delta_rule is not None:
                delta = delta_rule(k, x, tau_next, lam_prev)
            step = step_fn(f, g, x, tau_next, xi, H, delta, iter_cap=cap)
        if qn is not None:
            qn.update(step.x - x, f.gradient(step.x) - f.gradient(x))
        x, tau, lam_prev = step.x, tau_next, max(step.lambda_est, 1e-300)
        if 1.0 - tau <= eps:
            tau = 1.0
        record(k + 1, x, tau, step.lambda_est, step.sub_iters)
        if step.lambda_est <= eps and 1.0 - tau <= eps:
            status = "converged"
            break
    return RunResult(x, tau, len(trace) - 1, status, trace, init, scale, sigma, tau0)


def _guarded_step(step_fn, f, g, x, tau, xi, H, delta, cap, practical):
    try:
        return step_fn(f, g, x, tau, xi, H, delta, iter_cap=cap)
    except StepRejected as err:
        if not practical:
            raise
        return _damped_from(f, x, err.x_candidate, H)


def _damped_from(f, x, x_full, H):
    lam = H.norm(x_full - x)
    alpha = 1.0 / (1.0 + lam)
    while True:
        x_new = x + alpha * (x_full - x)
        if f.in_domain(x_new):
            return StepResult(x_new, alpha * lam, 0, float("nan"))
        alpha *= 0.5
        if alpha < 1e-12:
            raise StepRejected("damped step could not re-enter the domain")


def _practical_step(step_fn, f, g, x, tau, inc, xi, H, delta, cap, settings, tau_invariant):
    """Longest tau increment (doubling/halving the theoretical one) whose step
    stays in the domain with decrement at most the acceptance radius."""
    beta = settings.accept_radius

    def trial(t):
        try:
            st = step_fn(f, g, x, t, xi, H, delta, iter_cap=cap)
        except StepRejected as err:
            return None, err
        return st, None

    if tau_invariant:
        # the model does not depend on tau, so one solve decides every trial
        t = min(1.0, tau + inc)
        st, err = trial(t)
        if st is None:
            return t, _damped_from(f, x, err.x_candidate, H)
        return (1.0 if st.lambda_est <= beta else t), st

    inc = max(inc, 1e-16)
    t = min(1.0, tau + inc)
    st, err = trial(t)
    if st is not None and st.lambda_est <= beta:
        best_t, best = t, st
        for _ in range(settings.max_doublings):
            if best_t >= 1.0:
                break
            inc *= 2.0
            t = min(1.0, tau + inc)
            st, _ = trial(t)
            if st is None or st.lambda_est > beta:
                break
            best_t, best = t, st
        return best_t, best
    fallback = (t, st, err)
    for _ in range(settings.max_halvings):
        inc *= 0.5
        t = tau + inc
        st2, err2 = trial(t)
        if st2 is not None and st2.lambda_est <= beta:
            return t, st2
        if st2 is not None and fallback[1] is None:
            fallback = (t, st2, None)
    t, st, err = fallback
    if st is not None:
        return t, st
    return t, _damped_from(f, x, err.x_candidate, H)

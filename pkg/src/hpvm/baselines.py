"""Reference solvers for comparisons: proximal gradient, accelerated proximal
gradient with backtracking and restart, and damped proximal Newton."""
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, SubproblemNotConverged
from .homotopy import kkt_residual
from .report import SolveReport
from .subsolver import QuadraticModel, solve_subproblem

METHODS = ("PG", "APG_LS_Restart", "DampedPN")


@dataclass
class BaselineSettings:
    method: str = "PG"
    eps: float = 1e-6
    max_iter: int = 20000
    criterion: str = "kkt"      # "kkt" or "rgap"
    step: float = None          # fixed step for PG; defaults to 1/L_f
    full_step_below: float = 0.2

    def validate(self):
        if self.method not in METHODS:
            raise InvalidParameter(f"unknown method {self.method!r}")
        if not self.eps > 0:
            raise InvalidParameter("eps must be positive")
        if self.criterion not in ("kkt", "rgap"):
            raise InvalidParameter("criterion must be 'kkt' or 'rgap'")
        return self


def _stop_value(crit, kkt, obj):
    return kkt if crit == "kkt" else kkt / max(1.0, abs(obj))


def _row(k, obj, kkt, t0, nnz, lam=float("nan"), subs=0):
    return {"k": k, "tau": 1.0, "obj": obj, "lambda_est": lam, "kkt": kkt,
            "wall_ms": 1e3 * (time.perf_counter() - t0), "sub_iters": subs, "nnz": nnz}


def prox_grad(f, g, settings, x0):
    """x+ = prox_{g/L}(x - grad f(x)/L) with L = L_f."""
    settings = settings.validate()
    if not np.isfinite(f.lipschitz):
        raise InvalidParameter("proximal gradient needs a finite L_f")
    L = 1.0 / settings.step if settings.step else f.lipschitz
    rep = SolveReport("PG")
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float, copy=True)
    for k in range(settings.max_iter + 1):
        grad = f.gradient(x)
        x_new = g.prox(x - grad / L, 1.0 / L)
        # with L_hat = L_f this is exactly the shared KKT residual at x
        kkt = float(np.linalg.norm(x - x_new)) * f.lipschitz / max(1.0, float(np.linalg.norm(grad)))
        if L != f.lipschitz:
            kkt = kkt_residual(f, g, x)
        obj = f.value(x) + g(x)
        rep.rows.append(_row(k, obj, kkt, t0, int(np.count_nonzero(x))))
        if _stop_value(settings.criterion, kkt, obj) <= settings.eps:
            rep.status = "converged"
            break
        if k == settings.max_iter:
            break
        x = x_new
    rep.x = x
    return rep


def apg_ls_restart(f, g, settings, x0, L0=None):
    """FISTA momentum, backtracking by doubling L, function-value restart."""
    settings = settings.validate()
    rep = SolveReport("APG_LS_Restart")
    rep.restarts = 0
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float, copy=True)
    y = x.copy()
    t = 1.0
    if L0 is None:
        L0 = f.lipschitz if np.isfinite(f.lipschitz) else f.hessian(x).lambda_max
    L = L0
    F_x = f.value(x) + g(x)
    rep.rows.append(_row(0, F_x, kkt_residual(f, g, x), t0, int(np.count_nonzero(x))))
    for k in range(1, settings.max_iter + 1):
        fy = f.value(y)
        gy = f.gradient(y)
        while True:
            x_new = g.prox(y - gy / L, 1.0 / L)
            d = x_new - y
            if not f.in_domain(x_new):
                L *= 2.0
                continue
            # accept only if the quadratic upper bound holds at x_new
            if f.value(x_new) <= fy + float(np.vdot(gy, d)) + 0.5 * L * float(np.vdot(d, d)) + 1e-12 * abs(fy):
                break
            L *= 2.0
        F_new = f.value(x_new) + g(x_new)
        if F_new > F_x and t > 1.0:
            # restart: drop momentum and take a plain prox-gradient step from x
            # (a plain step can only increase F by rounding, so it is accepted)
            rep.restarts += 1
            t = 1.0
            y = x.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, F_x = x_new, t_new, F_new
        L = max(L / 1.1, 1e-12)
        kkt = kkt_residual(f, g, x)
        rep.rows.append(_row(k, F_x, kkt, t0, int(np.count_nonzero(x))))
        if _stop_value(settings.criterion, kkt, F_x) <= settings.eps:
            rep.status = "converged"
            break
    rep.x = x
    return rep


def damped_pn(f, g, settings, x0, inner_cap=10000):
    """Proximal Newton at tau = 1: damped steps with
    alpha = (zeta - delta)/((1 + zeta - delta) zeta) while the decrement is
    large, full steps once it drops below ``full_step_below``."""
    settings = settings.validate()
    rep = SolveReport("DampedPN")
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float, copy=True)
    rep.rows.append(_row(0, f.value(x) + g(x), kkt_residual(f, g, x), t0,
                         int(np.count_nonzero(x))))
    zeta_prev = 1.0
    rep.decrements = []
    for k in range(1, settings.max_iter + 1):
        H = f.hessian(x)
        delta = max(0.1 * min(zeta_prev, 1.0) ** 2, 1e-13)
        model = QuadraticModel(H, f.gradient(x), x, g, 1.0)
        subs = 0
        while True:
            try:
                res = solve_subproblem(model, delta, x_init=x, iter_cap=inner_cap)
                s, it = res.x, res.iterations
            except SubproblemNotConverged as err:
                s, it = err.best, err.iterations
            subs += it
            zeta = H.norm(s - x)
            # keep the inner error well below the next decrement, O(zeta^2)
            if delta <= max(0.01 * zeta * zeta, 1e-13):
                break
            delta = max(0.01 * zeta * zeta, 1e-13)
        rep.decrements.append(zeta)
        if zeta > settings.full_step_below:
            dh = min(delta, zeta / 10.0)
            alpha = (zeta - dh) / ((1 + zeta - dh) * zeta)
        else:
            alpha = 1.0
        x_new = x + alpha * (s - x)
        while not f.in_domain(x_new):
            alpha *= 0.5
            x_new = x + alpha * (s - x)
        x = x_new
        zeta_prev = zeta
        obj = f.value(x) + g(x)
        kkt = kkt_residual(f, g, x)
        rep.rows.append(_row(k, obj, kkt, t0, int(np.count_nonzero(x)), zeta, subs))
        if zeta <= settings.eps:
            rep.status = "converged"
            break
    rep.x = x
    return rep

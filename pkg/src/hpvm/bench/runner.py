"""Build problems from a config, run one solver, emit trace and summary."""
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from ..baselines import BaselineSettings, apg_ls_restart, damped_pn, prox_grad
from ..errors import HpvmError, InvalidParameter
from ..homotopy import HomotopySettings, kkt_residual, run
from ..oracles import (CovariancePrimal, ElasticNet, L1Norm, LogDetDesign, LogisticLoss,
                       PoissonLoss, QuadraticLoss, SimplexIndicator, Zero)
from ..pdp import Algorithm2Settings, run_algorithm2
from . import io
from .generators import (design_space, gen_logistic_data, gen_poisson_data,
                         gen_sparse_invcov)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2


@dataclass
class ExperimentConfig:
    model: str
    data: str = "synthetic"
    seed: int = None
    n: int = None
    p: int = None
    density: float = None
    kind: str = None
    mu: float = None
    reg: str = None
    rho: float = None
    reg_mu: float = 0.0
    solver: str = "HomoPN"
    eps: float = 1e-6
    tau0: float = None
    sigma: float = None
    regime: str = None
    max_iter: int = None
    trace: str = None
    summary: str = None

    def validate(self):
        if self.model not in io.MODELS:
            raise InvalidParameter(f"unknown model {self.model!r}")
        if self.solver not in io.SOLVERS:
            raise InvalidParameter(f"unknown solver {self.solver!r}")
        if not self.eps > 0:
            raise InvalidParameter("eps must be positive")
        if self.data == "synthetic" and self.model != "doptimal" and self.seed is None:
            raise InvalidParameter("synthetic data needs a seed")
        return self

    @classmethod
    def from_dict(cls, cfg):
        pr, rg, sv, out = cfg["problem"], cfg["regularizer"], cfg["solver"], cfg["output"]

        def num(v, typ=float):
            return None if v is None else typ(v)

        if pr["model"] is None:
            raise InvalidParameter("config needs [problem] model")
        return cls(
            model=pr["model"], data=pr["data"] or "synthetic", seed=num(pr["seed"], int),
            n=num(pr["n"], int), p=num(pr["p"], int), density=num(pr["density"]),
            kind=pr["kind"], mu=num(pr["mu"]),
            reg=rg["kind"], rho=num(rg["rho"]), reg_mu=num(rg["mu"]) or 0.0,
            solver=sv["name"], eps=float(sv["eps"]), tau0=num(sv["tau0"]),
            sigma=num(sv["sigma"]), regime=sv["regime"], max_iter=num(sv["max_iter"], int),
            trace=out["trace"], summary=out["summary"],
        ).validate()


# ---------------------------------------------------------------------------
# problems

@dataclass
class Problem:
    f: object
    g: object
    x0: np.ndarray
    Sigma: np.ndarray = None


def _load_dataset(cfg, gen):
    if cfg.data != "synthetic":
        if not os.path.exists(cfg.data):
            raise HpvmError(f"data file not found: {cfg.data}")
        return io.parse_libsvm(cfg.data, cfg.p)
    return gen()


def gen_quadratic(n, p, seed):
    """Least squares 1/(2n) |Ax - b|^2 as a QuadraticLoss, with n >= p."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    x_true = np.where(rng.random(p) < 0.2, rng.standard_normal(p), 0.0)
    b = A @ x_true + 0.1 * rng.standard_normal(n)
    return QuadraticLoss(A.T @ A / n, -A.T @ b / n)


def rho_max(f, x0=None):
    """Smallest rho for which 0 solves min f + rho |x|_1."""
    x0 = np.zeros(f.shape) if x0 is None else x0
    return float(np.abs(f.gradient(x0)).max())


def make_regularizer(kind, rho, mu=0.0):
    if kind in (None, "l1"):
        return L1Norm(rho)
    if kind == "elastic_net":
        return ElasticNet(rho, mu)
    if kind == "simplex":
        return SimplexIndicator()
    if kind == "none":
        return Zero()
    raise InvalidParameter(f"unknown regularizer {kind!r}")


def build_problem(cfg):
    m = cfg.model
    if m == "doptimal":
        V = design_space(cfg.kind or "chi1", cfg.p or 1000)
        return Problem(LogDetDesign(V), SimplexIndicator(), np.full(V.shape[0], 1.0 / V.shape[0]))
    if m == "covariance":
        if cfg.data == "synthetic":
            Sigma, _ = gen_sparse_invcov(cfg.p or 50, cfg.density if cfg.density is not None else 0.1,
                                         cfg.seed)
        else:
            if not os.path.exists(cfg.data):
                raise HpvmError(f"matrix file not found: {cfg.data}")
            Sigma = io.read_matrix(cfg.data)
        rho = 0.01 if cfg.rho is None else cfg.rho
        f = CovariancePrimal(Sigma)
        return Problem(f, L1Norm(rho), np.eye(Sigma.shape[0]), Sigma)
    if m == "logistic":
        ds = _load_dataset(cfg, lambda: gen_logistic_data(cfg.n or 2000, cfg.p or 200, cfg.seed))
        f = LogisticLoss(ds.A, ds.y, 1.0 / ds.A.shape[0] if cfg.mu is None else cfg.mu)
    elif m == "poisson":
        ds = _load_dataset(cfg, lambda: gen_poisson_data(cfg.n or 1000, cfg.p or 100, 0.1, cfg.seed))
        f = PoissonLoss(ds.A, ds.y, 1.0 / ds.A.shape[0] if cfg.mu is None else cfg.mu)
    else:
        f = gen_quadratic(cfg.n or 400, cfg.p or 100, cfg.seed)
    x0 = np.zeros(f.shape)
    rho = cfg.rho
    if rho is None and cfg.reg not in ("simplex", "none"):
        rho = tune_rho(f, x0, cfg.reg, cfg.reg_mu)
    return Problem(f, make_regularizer(cfg.reg, rho, cfg.reg_mu), x0)


def tune_rho(f, x0=None, kind="l1", reg_mu=0.0, target=0.1, tol=0.02, max_bisect=12):
    """Bisect rho on a log scale until about ``target`` of the coefficients
    are nonzero at a moderately accurate solution."""
    x0 = np.zeros(f.shape) if x0 is None else x0
    p = f.dim
    hi = rho_max(f, x0)
    lo = 1e-4 * hi
    rho = math.sqrt(lo * hi)
    x_warm = x0
    for _ in range(max_bisect):
        rho = math.sqrt(lo * hi)
        g = make_regularizer(kind, rho, reg_mu)
        res = run(f, g, x_warm, np.zeros(p), _homotopy_settings(f, "HomoPN", 1e-6, None, None,
                                                                None, 200),
                  record_kkt=False)
        frac = np.count_nonzero(res.x) / p
        if abs(frac - target) <= tol:
            break
        if frac > target:
            lo = rho
        else:
            hi = rho
    return rho


# ---------------------------------------------------------------------------
# solvers

def _homotopy_settings(f, solver, eps, tau0, sigma, regime, max_iter):
    if regime is None:
        regime = "barrier" if isinstance(f, LogDetDesign) else "self_concordant"
    return HomotopySettings(
        regime=regime, practical=True, eps=eps, tau0=tau0, sigma=sigma,
        metric="quasi_newton" if solver == "HomoQuasiPN" else "newton",
        max_outer=max_iter or 2000, standardize=False)


def solve(problem, cfg):
    """Run the configured solver; returns a SolveReport."""
    f, g, x0 = problem.f, problem.g, problem.x0
    s = cfg.solver
    if s == "Alg2":
        if problem.Sigma is None:
            raise InvalidParameter("Alg2 only applies to the covariance model")
        res = run_algorithm2(problem.Sigma, g, settings=Algorithm2Settings(
            eps=cfg.eps, max_iter=cfg.max_iter or 500))
        rep = res.report()
        if rep.rows:
            rep.rows[-1]["kkt"] = kkt_residual(f, g, res.Z)
            rep.rows[-1]["obj"] = f.value(res.Z) + g(res.Z)
        rep.x = res.Z
        return rep
    if s in ("HomoPN", "HomoQuasiPN"):
        settings = _homotopy_settings(f, s, cfg.eps, cfg.tau0, cfg.sigma, cfg.regime, cfg.max_iter)
        return run(f, g, x0, None, settings).report(s)
    method = {"PG": "PG", "APG": "APG_LS_Restart", "DampedPN": "DampedPN"}[s]
    bs = BaselineSettings(method, eps=cfg.eps, max_iter=cfg.max_iter or 20000)
    fn = {"PG": prox_grad, "APG": apg_ls_restart, "DampedPN": damped_pn}[s]
    return fn(f, g, bs, x0)


def exit_code(report):
    return EXIT_OK if report.converged else EXIT_CAP


def run_experiment(cfg):
    """Build, solve and write artifacts; returns (report, exit code)."""
    cfg = cfg.validate()
    problem = build_problem(cfg)
    report = solve(problem, cfg)
    for path, writer in ((cfg.trace, report.write_csv), (cfg.summary, report.write_json)):
        if path is None:
            continue
        try:
            writer(path)
        except OSError as err:
            raise HpvmError(f"cannot write {path}: {err.strerror}") from None
    return report, exit_code(report)

"""Command line entry point: ``hpvm solve --config run.ini [flags]``."""
import argparse
import json
import logging
import os
import sys

from ..errors import HpvmError
from . import io
from .runner import EXIT_ERROR, ExperimentConfig, run_experiment

_FLAGS = {
    "model": ("problem", "model"), "data": ("problem", "data"), "seed": ("problem", "seed"),
    "n": ("problem", "n"), "p": ("problem", "p"), "kind": ("problem", "kind"),
    "rho": ("regularizer", "rho"), "reg": ("regularizer", "kind"),
    "solver": ("solver", "name"), "tau0": ("solver", "tau0"), "sigma": ("solver", "sigma"),
    "eps": ("solver", "eps"), "regime": ("solver", "regime"),
    "max_iter": ("solver", "max_iter"),
    "trace": ("output", "trace"), "summary": ("output", "summary"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hpvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", help="run one experiment")
    sp.add_argument("--config", help="INI file with [problem] [regularizer] [solver] [output]")
    sp.add_argument("--model", choices=io.MODELS)
    sp.add_argument("--data", help="LIBSVM file, matrix file, or 'synthetic'")
    sp.add_argument("--solver", choices=io.SOLVERS)
    sp.add_argument("--reg", choices=("l1", "elastic_net", "simplex", "none"))
    sp.add_argument("--kind", help="design space for the doptimal model")
    sp.add_argument("--rho", type=float)
    sp.add_argument("--tau0", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--regime", choices=("strongly_convex", "self_concordant", "barrier"))
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace", help="per-iteration CSV output")
    sp.add_argument("--summary", help="summary JSON output")
    sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _thread_limit():
    val = os.environ.get("HPVM_THREADS")
    if not val:
        return None
    try:
        n = int(val)
    except ValueError:
        raise HpvmError(f"HPVM_THREADS must be an integer, got {val!r}") from None
    if n < 1:
        raise HpvmError("HPVM_THREADS must be positive")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {key: getattr(args, name) for name, key in _FLAGS.items()}
        cfg = ExperimentConfig.from_dict(io.read_config(args.config, overrides))
        threads = _thread_limit()
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                report, code = run_experiment(cfg)
        else:
            report, code = run_experiment(cfg)
    except (HpvmError, ValueError, OSError) as err:
        print(f"hpvm: error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(report.summary(), sort_keys=True, default=float))
    return code


if __name__ == "__main__":
    sys.exit(main())

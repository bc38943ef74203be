"""LIBSVM datasets, covariance matrix files and experiment config files."""
import configparser
import os

import numpy as np
import scipy.sparse as sp

from ..errors import HpvmError
from .generators import Dataset


class ParseError(HpvmError):
    """Malformed input file; the message carries the path and line number."""


def parse_libsvm(path, n_features=None):
    """Read `<label> <idx>:<val> ...` lines (1-based indices) into a CSR matrix."""
    labels, indptr, indices, data = [], [0], [], []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad label {tokens[0]!r}") from None
            seen = set()
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    j, v = int(idx), float(val)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: malformed token {tok!r}") from None
                if j < 1:
                    raise ParseError(f"{path}:{lineno}: index {j} is not 1-based")
                if j in seen:
                    raise ParseError(f"{path}:{lineno}: duplicate index {j}")
                seen.add(j)
                indices.append(j - 1)
                data.append(v)
                max_idx = max(max_idx, j)
            indptr.append(len(indices))
    p = max_idx if n_features is None else int(n_features)
    if max_idx > p:
        raise ParseError(f"{path}: index {max_idx} exceeds n_features={p}")
    A = sp.csr_matrix((np.array(data, float), np.array(indices, np.int64), np.array(indptr)),
                      shape=(len(labels), p))
    A.sort_indices()
    return Dataset(A, np.array(labels))


def _num(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_libsvm(path, A, y):
    A = sp.csr_matrix(A)
    with open(path, "w") as fh:
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            order = np.argsort(A.indices[lo:hi])
            items = [f"{A.indices[lo + t] + 1}:{repr(float(A.data[lo + t]))}" for t in order]
            fh.write(" ".join([_num(y[i])] + items) + "\n")


def read_matrix(path):
    """Square matrix file: first line `p`, then either p*p row-major floats or
    `i j v` triples (0-based) after a line reading `coordinate`."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [(k + 1, ln) for k, ln in enumerate(lines) if ln]
    if not lines:
        raise ParseError(f"{path}: empty matrix file")
    lineno, head = lines[0]
    try:
        p = int(head)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: expected the dimension p, got {head!r}") from None
    if p < 1:
        raise ParseError(f"{path}:{lineno}: dimension must be positive")
    body = lines[1:]
    if body and body[0][1].lower() == "coordinate":
        M = np.zeros((p, p))
        for lineno, ln in body[1:]:
            parts = ln.split()
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
                if len(parts) != 3:
                    raise ValueError
            except (ValueError, IndexError):
                raise ParseError(f"{path}:{lineno}: expected 'i j v', got {ln!r}") from None
            if not (0 <= i < p and 0 <= j < p):
                raise ParseError(f"{path}:{lineno}: index out of range")
            M[i, j] = v
            M[j, i] = v
        return M
    vals = []
    for lineno, ln in body:
        try:
            vals.extend(float(t) for t in ln.split())
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric entry in {ln!r}") from None
    if len(vals) != p * p:
        raise ParseError(f"{path}: expected {p * p} entries, found {len(vals)}")
    return np.array(vals).reshape(p, p)


def write_matrix(path, M, coordinate=False):
    M = np.asarray(M, float)
    p = M.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{p}\n")
        if coordinate:
            fh.write("coordinate\n")
            for i, j in zip(*np.nonzero(np.triu(M))):
                fh.write(f"{i} {j} {repr(float(M[i, j]))}\n")
        else:
            for row in M:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# config files ---------------------------------------------------------------
#
# [problem]   model, data (path or generator name), n, p, seed, density, kind
# [regularizer] kind (l1 | elastic_net | simplex | none), rho, mu
# [solver]    name, eps, tau0, sigma, regime, max_iter
# [output]    trace, summary

MODELS = ("logistic", "poisson", "doptimal", "covariance", "quadratic_l1")
SOLVERS = ("HomoPN", "HomoQuasiPN", "PG", "APG", "DampedPN", "Alg2")

_DEFAULTS = {
    "problem": {"model": None, "data": None, "seed": None, "n": None, "p": None,
                "density": None, "kind": None, "mu": None},
    "regularizer": {"kind": None, "rho": None, "mu": None},
    "solver": {"name": "HomoPN", "eps": "1e-6", "tau0": None, "sigma": None,
               "regime": None, "max_iter": None},
    "output": {"trace": None, "summary": None},
}


def read_config(path=None, overrides=None):
    """Merge an INI file with flag overrides into a nested dict of strings."""
    cfg = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    if path is not None:
        if not os.path.exists(path):
            raise HpvmError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read(path)
        except configparser.Error as err:
            raise ParseError(f"{path}: {err}") from None
        for sec in parser.sections():
            if sec not in cfg:
                raise ParseError(f"{path}: unknown section [{sec}]")
            for key, val in parser.items(sec):
                if key not in cfg[sec]:
                    raise ParseError(f"{path}: unknown key {key!r} in [{sec}]")
                cfg[sec][key] = val
    for (sec, key), val in (overrides or {}).items():
        if val is not None:
            cfg[sec][key] = str(val)
    return cfg

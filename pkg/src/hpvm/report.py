"""Per-iteration traces and run summaries shared by every solver."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = ("k", "tau", "obj", "lambda_est", "kkt", "wall_ms", "sub_iters", "nnz")


@dataclass
class SolveReport:
    solver: str
    rows: list = field(default_factory=list)
    x: np.ndarray = None
    status: str = "cap"

    @property
    def iterations(self):
        return self.rows[-1]["k"] if self.rows else 0

    @property
    def converged(self):
        return self.status == "converged"

    def rgap(self, row=None):
        row = row if row is not None else self.rows[-1]
        return row["kkt"] / max(1.0, abs(row["obj"]))

    def summary(self):
        last = self.rows[-1] if self.rows else {}
        return {
            "solver": self.solver,
            "status": self.status,
            "iterations": self.iterations,
            "time_ms": last.get("wall_ms", 0.0),
            "objective": last.get("obj", float("nan")),
            "kkt": last.get("kkt", float("nan")),
            "rgap": self.rgap() if self.rows else float("nan"),
            "nnz": last.get("nnz", 0),
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in CSV_HEADER])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))

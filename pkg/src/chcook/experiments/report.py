"""CSV/JSON serialization shared by the drivers."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


@dataclass
class ExperimentReport:
    """Tabular result of one driver plus a dictionary of key scalars.

    ``passed`` is None when the driver has no built-in acceptance test.
    """

    name: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: bool | None = None

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()

    def summary_json(self) -> str:
        d = {"experiment": self.name, "passed": self.passed}
        d.update(self.summary)
        return json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{self.name}.csv")
        json_path = os.path.join(out_dir, f"{self.name}.summary.json")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.summary_json())
        return csv_path, json_path

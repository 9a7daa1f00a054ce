"""Convergence reports and their CSV/JSON writers.

CSV layout (one row per kappa, in sweep order)::

    kappa,sup_error,l2_error
    1.5,0.0123,0.0456
    ...
    # slope=0.98

Floats are written with ``repr`` so repeated runs produce identical files.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from core.errors import DomainError

CSV_HEADER = ("kappa", "sup_error", "l2_error")


@dataclass(frozen=True)
class ConvergenceRow:
    kappa: float
    sup_error: float
    l2_error: float

    def to_dict(self) -> Dict[str, float]:
        return {"kappa": self.kappa, "sup_error": self.sup_error, "l2_error": self.l2_error}


@dataclass
class ConvergenceReport:
    """Per-kappa errors of an approximation against the exact operator."""

    rows: List[ConvergenceRow] = field(default_factory=list)
    fitted_slope: float = math.nan
    runtime_seconds: float = 0.0
    field_id: str = ""
    kind: str = "forward"

    @property
    def kappas(self) -> List[float]:
        return [r.kappa for r in self.rows]

    @property
    def sup_errors(self) -> List[float]:
        return [r.sup_error for r in self.rows]

    def is_monotone(self, slack: float = 1.05) -> bool:
        """Errors shrink along the sweep up to a relative ``slack``."""
        errs = self.sup_errors
        return all(b <= a * slack + 1e-300 for a, b in zip(errs, errs[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "field": self.field_id,
            "rows": [r.to_dict() for r in self.rows],
            "fitted_slope": None if math.isnan(self.fitted_slope) else self.fitted_slope,
            "runtime_seconds": self.runtime_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([repr(float(r.kappa)), repr(float(r.sup_error)),
                             repr(float(r.l2_error))])
        buf.write(f"# slope={format_slope(self.fitted_slope)}\n")
        return buf.getvalue()


def format_slope(slope: float) -> str:
    return "nan" if math.isnan(slope) else repr(float(slope))


def fit_slope(kappas: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(kappa - 1).

    Zero errors are left out; with fewer than two usable points the slope is
    undefined and NaN is returned.
    """
    if len(kappas) < 3:
        raise DomainError(f"a convergence sweep needs at least 3 kappa values, got {len(kappas)}")
    k = np.asarray(kappas, dtype=float)
    err = np.asarray(errors, dtype=float)
    mask = err > 0.0
    if np.count_nonzero(mask) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(k[mask] - 1.0), np.log(err[mask]), 1)
    return float(slope)


def write_csv(report: ConvergenceReport, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    return out


def write_json(payload: Any, path: Union[str, Path]) -> Path:
    """Dump ``payload`` (anything with ``to_dict`` or plain JSON data) with sorted keys."""
    data = payload.to_dict() if hasattr(payload, "to_dict") else payload
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out

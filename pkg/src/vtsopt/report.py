"""Structured solve reports plus their text/CSV serialization.

Every optimizer returns a :class:`SolveReport` with one iteration-log row
per outer iteration and a handful of headline numbers. Serialization is
deliberately plain: a ``key: value`` summary file and a CSV iteration log
whose floats are written with shortest round-trip precision, so identical
configurations reproduce byte-identical logs (wall-clock time lives only
in the summary and is excluded from that guarantee).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["SolveReport", "write_csv", "write_summary", "read_summary"]


@dataclass
class SolveReport:
    method: str
    problem: str
    tol: float
    converged: bool
    columns: tuple[str, ...]
    rows: list[tuple]
    count_columns: tuple[str, ...]
    objective: float
    dual_objective: float | None
    gap_scaled: float
    tau_res: float
    volume: float
    rho: np.ndarray
    wall_clock: float
    notes: str = ""
    certificate: str | None = None
    extras: dict = field(default_factory=dict)

    def totals(self) -> dict[str, int]:
        """Per-column sums of the additive iteration counters."""
        out = {}
        for name in self.count_columns:
            i = self.columns.index(name)
            out[name] = int(sum(row[i] for row in self.rows))
        return out

    @property
    def outer_iterations(self) -> int:
        return len(self.rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(report: SolveReport, path) -> None:
    """Write the iteration log; one row per outer iteration."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow([_fmt(v) for v in row])


def write_summary(report: SolveReport, path) -> None:
    """Write the key/value run summary, including the stopping certificate."""
    lines = {
        "problem": report.problem,
        "method": report.method,
        "tol": repr(report.tol),
        "converged": str(report.converged),
        "outer_iterations": str(report.outer_iterations),
        **{f"total_{k}": str(v) for k, v in report.totals().items()},
        "objective": repr(report.objective),
        "dual_objective": "" if report.dual_objective is None else repr(report.dual_objective),
        "gap_scaled": repr(report.gap_scaled),
        "tau_res": repr(report.tau_res),
        "volume": repr(report.volume),
        "wall_clock_s": f"{report.wall_clock:.3f}",
        "certificate": report.certificate or "",
        "notes": report.notes,
    }
    with open(path, "w") as fh:
        for k, v in lines.items():
            fh.write(f"{k}: {v}\n")


def read_summary(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        if ": " in line:
            k, v = line.split(": ", 1)
            out[k] = v
        elif line.endswith(":"):
            out[line[:-1]] = ""
    return out

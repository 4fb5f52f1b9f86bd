"""Aggregation of per-seed evaluation results into the returns table."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

RESULT_HEADER = ["method", "N", "seed", "avg_step_reward",
                 "discounted_return"]
# the random baseline needs no training data; its rows are stored under
# this pseudo dataset size
RANDOM_N = 0


def stderr(values) -> float:
    """Standard error of the mean: sample stddev (ddof=1) / sqrt(n)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1) / np.sqrt(arr.size))


def format_cell(mean: float, err: float) -> str:
    return f"{mean:.2f} ± {err:.2f}"


@dataclass
class EvalReport:
    """Per-seed evaluation rows keyed by (method, dataset size)."""

    rows: dict = field(default_factory=dict)

    def add(self, method: str, n: int, seed: int, avg_step_reward: float,
            discounted_return: float) -> None:
        self.rows.setdefault((method, int(n)), []).append(
            (int(seed), float(avg_step_reward), float(discounted_return)))

    def seed_values(self, method: str, n: int) -> np.ndarray:
        """Per-seed average step rewards, ordered by seed."""
        entries = sorted(self.rows.get((method, int(n)), []))
        return np.array([e[1] for e in entries], dtype=np.float64)

    def cell(self, method: str, n: int) -> str:
        values = self.seed_values(method, n)
        if values.size == 0:
            return ""
        return format_cell(float(values.mean()), stderr(values))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_HEADER)
            for (method, n), entries in sorted(self.rows.items()):
                for seed, avg, disc in sorted(entries):
                    writer.writerow([method, n, seed, repr(float(avg)),
                                     repr(float(disc))])

    @classmethod
    def load_csv(cls, path) -> "EvalReport":
        report = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != RESULT_HEADER:
                raise ContractViolation(
                    f"unexpected results header {header!r}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 5:
                    raise ContractViolation(
                        f"line {lineno}: expected 5 fields, got {len(row)}")
                try:
                    report.add(row[0], int(row[1]), int(row[2]),
                               float(row[3]), float(row[4]))
                except ValueError as exc:
                    raise ContractViolation(
                        f"line {lineno}: {exc}") from exc
        return report


def render_table(report: EvalReport, sizes, methods) -> str:
    """Returns-table text: one row per dataset size, one column per
    method, plus the dataset-size-independent random baseline row.

    The random baseline is evaluated once per seed (no training data
    involved), so its column repeats the same aggregate in every row.
    Missing cells (failed sweep entries) render empty.
    """
    columns = [m for m in ("dagp", "gp", "nfq", "random") if m in methods]
    lines = [",".join(["N"] + columns)]
    for n in sizes:
        cells = []
        for method in columns:
            key_n = RANDOM_N if method == "random" else n
            cells.append(report.cell(method, key_n))
        lines.append(",".join([str(n)] + cells))
    if "random" in columns:
        baseline = [""] * len(columns)
        baseline[columns.index("random")] = report.cell("random", RANDOM_N)
        lines.append(",".join(["random"] + baseline))
    return "\n".join(lines) + "\n"

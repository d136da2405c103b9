"""CSV ingestion and report emission.

Datasets are UTF-8 comma-separated files with a header row and ``.`` decimal
points; rows are grouped into populations by an id column.  Reports are
written three ways at once: a human-readable Markdown table, a sidecar CSV,
and a JSON document.  Floats are serialized with ``repr`` so a re-parsed
report reproduces the in-memory values exactly.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linear import EstimateSummary, PopulationData
from .simulate import MethodResult

logger = logging.getLogger("ebcr")

DEFAULT_MIN_ROWS = 50


@dataclass(frozen=True)
class DatasetSchema:
    id_column: str = "id"
    response_column: str = "y"
    covariate_columns: tuple[str, ...] | None = None  # None: every other column


@dataclass(frozen=True)
class StudyInput:
    populations: list[PopulationData]
    target_id: str | None = None
    target_index: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        widths = {pop.p for pop in self.populations}
        if len(widths) > 1:
            raise ValueError(f"populations disagree on column count: {sorted(widths)}")
        if self.target_id is not None:
            matches = [pop for pop in self.populations if pop.id == self.target_id]
            if len(matches) != 1:
                raise ValueError(f"target_id {self.target_id!r} matches {len(matches)} populations")

    def target(self) -> PopulationData | None:
        if self.target_id is None:
            return None
        return next(pop for pop in self.populations if pop.id == self.target_id)

    def others(self) -> list[PopulationData]:
        return [pop for pop in self.populations if pop.id != self.target_id]


def _parse_cell(raw: str, column: str, row_number: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"non-numeric cell in column {column!r} at row {row_number}: {raw!r}"
        ) from None


def load_dataset(
    path: str | Path,
    schema: DatasetSchema = DatasetSchema(),
    min_rows: int = DEFAULT_MIN_ROWS,
    target_id: str | None = None,
    target_index: int = 0,
    alpha: float = 0.05,
) -> StudyInput:
    """Group CSV rows into populations by id.

    Populations with fewer than ``min_rows`` rows are dropped with a logged
    warning.  Raises ``ValueError`` for a missing column (naming it), a
    non-numeric cell (with its row number), or zero usable populations.
    """
    path = Path(path)
    if not path.exists():
        raise ValueError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        for col in (schema.id_column, schema.response_column):
            if col not in header:
                raise ValueError(f"column not found: {col}")
        covariates = schema.covariate_columns
        if covariates is None:
            covariates = tuple(
                h for h in header if h not in (schema.id_column, schema.response_column)
            )
        for col in covariates:
            if col not in header:
                raise ValueError(f"column not found: {col}")
        id_pos = header.index(schema.id_column)
        y_pos = header.index(schema.response_column)
        x_pos = [header.index(c) for c in covariates]

        grouped: dict[str, tuple[list[list[float]], list[float]]] = {}
        for row_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"row {row_number} has {len(row)} cells, expected {len(header)}")
            pid = row[id_pos].strip()
            xs = [_parse_cell(row[pos], header[pos], row_number) for pos in x_pos]
            yv = _parse_cell(row[y_pos], schema.response_column, row_number)
            bucket = grouped.setdefault(pid, ([], []))
            bucket[0].append(xs)
            bucket[1].append(yv)

    populations = []
    for pid, (xs, ys) in grouped.items():
        if len(ys) < min_rows:
            logger.warning(
                "dropping population %r: %d rows < min_rows=%d", pid, len(ys), min_rows
            )
            continue
        populations.append(PopulationData(id=pid, X=np.array(xs), y=np.array(ys)))
    if not populations:
        raise ValueError("zero usable populations after filtering")
    return StudyInput(
        populations=populations, target_id=target_id, target_index=target_index, alpha=alpha
    )


def write_population_csv(path: str | Path, populations: list[PopulationData]) -> None:
    """Dataset writer matching :func:`load_dataset`; floats round-trip exactly."""
    p = populations[0].p
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "y"] + [f"x{j + 1}" for j in range(p)])
        for pop in populations:
            for i in range(pop.n):
                writer.writerow([pop.id, repr(float(pop.y[i]))] + [repr(float(v)) for v in pop.X[i]])


SUMMARY_COLUMNS = ("id", "theta_hat", "sigma_hat_sq", "n")


def read_summaries_csv(path: str | Path) -> list[EstimateSummary]:
    """Summaries file: CSV with columns id, theta_hat, sigma_hat_sq, n."""
    path = Path(path)
    if not path.exists():
        raise ValueError(f"no such file: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SUMMARY_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"column not found: {missing[0]}")
        for row_number, row in enumerate(reader, start=2):
            out.append(
                EstimateSummary(
                    id=row["id"],
                    theta_hat=_parse_cell(row["theta_hat"], "theta_hat", row_number),
                    sigma_hat_sq=_parse_cell(row["sigma_hat_sq"], "sigma_hat_sq", row_number),
                    n=int(_parse_cell(row["n"], "n", row_number)),
                )
            )
    if not out:
        raise ValueError("summaries file has no rows")
    return out


def write_summaries_csv(path: str | Path, summaries: list[EstimateSummary]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow([s.id, repr(s.theta_hat), repr(s.sigma_hat_sq), s.n])


RESULT_COLUMNS = ("method", "coverage", "mean_measure", "replications", "se_coverage")


def results_markdown(results: list[MethodResult]) -> str:
    lines = [
        "| method | coverage | mean measure | replications | se(coverage) |",
        "|---|---|---|---|---|",
    ]
    for r in results:
        lines.append(
            f"| {r.method} | {r.coverage:.4f} | {r.mean_measure:.4f} "
            f"| {r.replications} | {r.se_coverage:.4f} |"
        )
    return "\n".join(lines) + "\n"


def write_report(results: list[MethodResult], out_prefix: str | Path, extra: dict | None = None) -> dict[str, Path]:
    """Write <prefix>.md, <prefix>.csv and <prefix>.json; returns the paths."""
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "markdown": prefix.with_suffix(".md"),
        "csv": prefix.with_suffix(".csv"),
        "json": prefix.with_suffix(".json"),
    }
    paths["markdown"].write_text(results_markdown(results), encoding="utf-8")
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow(
                [r.method, repr(r.coverage), repr(r.mean_measure), r.replications, repr(r.se_coverage)]
            )
    payload = {
        "results": [
            {
                "method": r.method,
                "coverage": r.coverage,
                "mean_measure": r.mean_measure,
                "replications": r.replications,
                "se_coverage": r.se_coverage,
            }
            for r in results
        ]
    }
    if extra:
        payload.update(extra)
    paths["json"].write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return paths


def read_report_csv(path: str | Path) -> list[MethodResult]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"column not found: {missing[0]}")
        for row in reader:
            out.append(
                MethodResult(
                    method=row["method"],
                    coverage=float(row["coverage"]),
                    mean_measure=float(row["mean_measure"]),
                    replications=int(row["replications"]),
                    se_coverage=float(row["se_coverage"]),
                )
            )
    return out

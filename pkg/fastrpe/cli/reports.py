import csv
import dataclasses
import io
import json
from pathlib import Path

from fastrpe.core.analysis import ApproxCell, ApproxErrorReport, ComplexityReport, TailCell
from fastrpe.shared.protocol import (
    APPROX_CELL_FIELDS, APPROX_FIELDS, APPROX_REPORT_FIELDS, BENCH_FIELDS, TAIL_CELL_FIELDS, TAIL_FIELDS,
    TAIL_REPORT_FIELDS,
)
from fastrpe.shared.utils import log

_CASTS = {
    "variant": str, "n": int, "m": int, "d": int, "repeats": int, "trials": int,
    "median_seconds": float, "mad_seconds": float,
    "R": float, "mean_l1": float, "std_l1": float,
    "n_keys": int, "kind": str, "large_R_threshold": float,
    "epsilon": float, "delta": float, "m_bound": int,
    "failure_rate": float, "failure_rate_4eps": float,
}


def to_json(report) -> str:
    payload = dataclasses.asdict(report) if dataclasses.is_dataclass(report) else report
    return json.dumps(payload, indent=2) + "\n"


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(dataclasses.asdict(row) if dataclasses.is_dataclass(row) else row)
    return buf.getvalue()


def csv_to_rows(text: str, fields) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != tuple(fields):
        raise ValueError(f"unexpected CSV header {reader.fieldnames}, want {list(fields)}")
    return [{k: _CASTS[k](v) for k, v in row.items()} for row in reader]


def _flatten(report, cells, report_fields) -> list[dict]:
    head = {k: getattr(report, k) for k in report_fields}
    return [{**head, **dataclasses.asdict(cell)} for cell in cells]


def _split(rows: list[dict], report_fields, cell_fields) -> tuple[dict, list[dict]]:
    if not rows:
        raise ValueError("report CSV has a header but no rows")
    head = {k: rows[0][k] for k in report_fields}
    for row in rows[1:]:
        if any(row[k] != v for k, v in head.items()):
            raise ValueError(f"report columns differ between rows: {head} vs {row}")
    return head, [{k: row[k] for k in cell_fields} for row in rows]


def approx_to_csv(report: ApproxErrorReport) -> str:
    return rows_to_csv(_flatten(report, report.grid, APPROX_REPORT_FIELDS), APPROX_FIELDS)


def approx_from_csv(text: str) -> ApproxErrorReport:
    head, cells = _split(csv_to_rows(text, APPROX_FIELDS), APPROX_REPORT_FIELDS, APPROX_CELL_FIELDS)
    return ApproxErrorReport(**head, grid=[ApproxCell(**c) for c in cells])


def tail_to_csv(report: ComplexityReport) -> str:
    return rows_to_csv(_flatten(report, report.empirical_tail, TAIL_REPORT_FIELDS), TAIL_FIELDS)


def tail_from_csv(text: str) -> ComplexityReport:
    head, cells = _split(csv_to_rows(text, TAIL_FIELDS), TAIL_REPORT_FIELDS, TAIL_CELL_FIELDS)
    return ComplexityReport(**head, empirical_tail=[TailCell(**c) for c in cells])


def bench_to_csv(records) -> str:
    return rows_to_csv(records, BENCH_FIELDS)


def write_report(path: Path, text: str) -> Path:
    """Write a report file; OSError carries the offending path."""
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise OSError(e.errno, f"cannot write report to {path}: {e.strerror}", str(path)) from e
    log("REPORT", f"wrote {len(text)}B -> {path}")
    return path

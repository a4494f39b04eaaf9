import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from app.config import settings
from app.core.exceptions import ReportWriteError
from app.models.decomposition import IterateTrace
from app.models.experiment import ConvergenceStudy, ExperimentReport
from app.models.protocol import MessageLog
from app.utils.file_utils import ensure_directory_exists, get_lines_hash, safe_filename, write_json

logger = logging.getLogger("app.services.report_writer")

REPORT_COLUMNS = [
    "kind",
    "request_id",
    "accepted",
    "value",
    "contribution",
    "hosts",
    "partitions",
    "iterations",
    "messages",
    "attempts",
    "reason",
    "requested",
    "accepted_count",
    "allocation_ratio",
    "revenue",
    "total_messages",
    "total_bytes",
    "solver_seconds",
    "error",
]

# Excluded from the determinism digest
WALL_CLOCK_COLUMNS = {"solver_seconds", "primal_seconds", "dual_seconds", "elapsed"}

PRIMAL_TRACE_COLUMNS = ["t", "alpha", "phi_sum", "gap", "g_norm", "msgs_cum"]
DUAL_TRACE_COLUMNS = ["t", "alpha", "q_lambda", "best_primal", "gap", "g_norm", "msgs_cum"]
MESSAGE_COLUMNS = ["iter", "from", "to", "kind", "bytes"]
STUDY_COLUMNS = ["t", "primal_gap", "dual_gap", "primal_seconds", "dual_seconds"]


def format_number(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.12g}"
    return str(value)


class ReportWriter:
    """CSV and JSON-lines output for reports, traces and message logs"""

    def __init__(self):
        self.logger = logger

    # ------------------------------------------------------------------
    # Row construction
    # ------------------------------------------------------------------

    def report_rows(self, report: ExperimentReport) -> List[Dict[str, Any]]:
        """
        One row per VN outcome plus a summary row

        An empty report gets a summary row only when it carries an error.
        """
        if not report.outcomes and report.error is None:
            return []
        rows = []
        for outcome in report.outcomes:
            rows.append(
                {
                    "kind": "outcome",
                    "request_id": outcome.request_id,
                    "accepted": outcome.accepted,
                    "value": outcome.value,
                    "contribution": outcome.contribution,
                    "hosts": ";".join("" if host is None else str(host) for host in outcome.hosts),
                    "partitions": outcome.partitions,
                    "iterations": outcome.iterations,
                    "messages": outcome.messages,
                    "attempts": outcome.attempts,
                    "reason": outcome.reason,
                    "solver_seconds": outcome.solver_seconds,
                }
            )
        rows.append(
            {
                "kind": "summary",
                "requested": report.requested,
                "accepted_count": report.accepted,
                "allocation_ratio": report.allocation_ratio,
                "revenue": report.revenue,
                "total_messages": report.overhead.messages,
                "total_bytes": report.overhead.bytes,
                "solver_seconds": report.wall_clock.get("solve", 0.0),
                "error": report.error,
            }
        )
        return rows

    def trace_rows(self, trace: IterateTrace) -> List[Dict[str, Any]]:
        rows = []
        for record in trace.records:
            row = {"t": record.t, "alpha": record.alpha, "gap": record.gap, "g_norm": record.g_norm}
            if trace.algorithm == "dual":
                row.update({"q_lambda": record.objective, "best_primal": record.best_primal})
            else:
                row["phi_sum"] = record.objective
            row["msgs_cum"] = record.msgs_cum
            rows.append(row)
        return rows

    def trace_columns(self, trace: IterateTrace) -> List[str]:
        return DUAL_TRACE_COLUMNS if trace.algorithm == "dual" else PRIMAL_TRACE_COLUMNS

    def message_rows(self, log: MessageLog, with_run: bool = False) -> List[Dict[str, Any]]:
        rows = []
        for record in log.records:
            row = {
                "iter": record.iteration,
                "from": record.sender,
                "to": record.receiver,
                "kind": record.kind.value,
                "bytes": record.payload_size,
            }
            if with_run:
                row["request"] = record.run
            rows.append(row)
        return rows

    # ------------------------------------------------------------------
    # Writers
    # ------------------------------------------------------------------

    def write_table(
        self, path: Path, columns: Sequence[str], rows: Iterable[Dict[str, Any]], fmt: str = "csv"
    ) -> Path:
        """
        Write rows with a fixed column order

        Raises:
            ReportWriteError: with the offending path
        """
        path = Path(path)
        try:
            if not ensure_directory_exists(path.parent):
                raise OSError(f"cannot create {path.parent}")
            with open(path, "w", newline="", encoding="utf-8") as handle:
                if fmt == "jsonl":
                    for row in rows:
                        handle.write(json.dumps({c: _json_value(row.get(c)) for c in columns}) + "\n")
                else:
                    writer = csv.writer(handle, lineterminator="\n")
                    writer.writerow(columns)
                    for row in rows:
                        writer.writerow([format_number(row.get(c)) for c in columns])
        except OSError as e:
            self.logger.error(f"Failed to write {path}: {e}")
            raise ReportWriteError(f"Cannot write {path}", details={"path": str(path), "error": str(e)})
        return path

    def write_trace(self, trace: IterateTrace, path: Path, fmt: str = "csv") -> Path:
        return self.write_table(path, self.trace_columns(trace), self.trace_rows(trace), fmt)

    def write_message_log(self, log: MessageLog, path: Path, with_run: bool = False) -> Path:
        columns = MESSAGE_COLUMNS + (["request"] if with_run else [])
        return self.write_table(path, columns, self.message_rows(log, with_run))

    def emit_report(
        self,
        report: ExperimentReport,
        out_dir: Optional[Path] = None,
        fmt: Optional[str] = None,
        traces: bool = True,
    ) -> List[Path]:
        """
        Write the report table, per-request traces and the message log

        Returns:
            Paths written, report first
        """
        fmt = fmt or settings.report_format
        if fmt not in ("csv", "jsonl"):
            raise ReportWriteError(f"Unknown report format {fmt}", details={"format": fmt})
        out_dir = Path(out_dir or settings.output_dir)
        stem = safe_filename(report.name)
        extension = "jsonl" if fmt == "jsonl" else "csv"

        written = [self.write_table(out_dir / f"{stem}.{extension}", REPORT_COLUMNS, self.report_rows(report), fmt)]
        if traces:
            for request_id, trace in sorted(report.traces.items()):
                written.append(self.write_trace(trace, out_dir / f"{stem}_trace_{request_id}.{extension}", fmt))
        if report.message_log.records:
            written.append(self.write_message_log(report.message_log, out_dir / f"{stem}_messages.csv", True))
        self.logger.info(f"Report written to {written[0]} ({len(written)} files)")
        return written

    def emit_study(self, study: ConvergenceStudy, out_dir: Optional[Path] = None, name: str = "study") -> List[Path]:
        """Aligned gap table, both traces and a JSON summary"""
        out_dir = Path(out_dir or settings.output_dir)
        stem = safe_filename(name)
        rows = [row.model_dump() for row in study.rows]
        written = [self.write_table(out_dir / f"{stem}.csv", STUDY_COLUMNS, rows)]
        for trace in (study.primal, study.dual):
            if trace is not None:
                written.append(self.write_trace(trace, out_dir / f"{stem}_{trace.algorithm}.csv"))
        summary = {
            "reference": _json_value(study.reference),
            "blind": study.blind,
            "messages": study.messages,
        }
        for trace in (study.primal, study.dual):
            if trace is not None:
                summary[trace.algorithm] = {
                    "iterations": trace.iterations,
                    "final_gap": _json_value(trace.final_gap),
                    "stop_reason": trace.stop_reason,
                }
        try:
            written.append(write_json(out_dir / f"{stem}_summary.json", summary))
        except OSError as e:
            raise ReportWriteError(f"Cannot write study summary in {out_dir}", details={"error": str(e)})
        return written

    # ------------------------------------------------------------------
    # Reading back
    # ------------------------------------------------------------------

    def read_report(self, path: Path) -> Dict[str, Any]:
        """Parse an emitted report into outcome rows and the summary row"""
        path = Path(path)
        if path.suffix == ".jsonl":
            with open(path, encoding="utf-8") as handle:
                rows = [json.loads(line) for line in handle if line.strip()]
        else:
            with open(path, newline="", encoding="utf-8") as handle:
                rows = [
                    {key: _parse_cell(value) for key, value in row.items()}
                    for row in csv.DictReader(handle)
                ]
        summary = next((row for row in rows if row["kind"] == "summary"), None)
        return {"outcomes": [row for row in rows if row["kind"] == "outcome"], "summary": summary}

    def report_digest(self, path: Path) -> str:
        """SHA-256 of the report with the wall-clock columns removed"""
        path = Path(path)
        lines = []
        if path.suffix == ".jsonl":
            with open(path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        row = {k: v for k, v in json.loads(line).items() if k not in WALL_CLOCK_COLUMNS}
                        lines.append(json.dumps(row, sort_keys=True))
        else:
            with open(path, newline="", encoding="utf-8") as handle:
                reader = csv.reader(handle)
                header = next(reader, [])
                keep = [i for i, name in enumerate(header) if name not in WALL_CLOCK_COLUMNS]
                lines.append(",".join(header[i] for i in keep))
                for row in reader:
                    lines.append(",".join(row[i] for i in keep))
        return get_lines_hash(lines)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return format_number(value)
    return value


def _parse_cell(value: str) -> Any:
    if value == "":
        return None
    if value in ("true", "false"):
        return value == "true"
    try:
        number = float(value)
    except ValueError:
        return value
    return int(number) if number.is_integer() and "." not in value and "e" not in value else number


# Global instance
report_writer = ReportWriter()

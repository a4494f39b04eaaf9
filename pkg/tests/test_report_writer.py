import csv
import json

import pytest

from app.core.exceptions import ReportWriteError
from app.models.decomposition import IterateRecord, IterateTrace
from app.models.experiment import ConvergenceStudy, ExperimentReport, StudyRow, VnOutcome
from app.models.protocol import MessageKind, MessageLog, MessageRecord, OverheadStats
from app.services.report_writer import REPORT_COLUMNS, format_number, report_writer


def record(t, objective, gap):
    return IterateRecord(
        t=t, alpha=0.5, objective=objective, best_primal=objective, best_bound=objective + gap,
        gap=gap, g_norm=1.0, msgs_cum=4 * t, elapsed=0.01 * t,
    )


@pytest.fixture
def report():
    log = MessageLog()
    log.append(MessageRecord(iteration=1, sender="master", receiver="agent0", kind=MessageKind.SHARE, payload_size=32))
    log.append(MessageRecord(iteration=1, sender="agent0", receiver="master", kind=MessageKind.DUALS, payload_size=40))
    trace = IterateTrace(algorithm="primal", partitions=2, records=(record(1, 5.0, 1.0), record(2, 6.0, 0.0)))
    return ExperimentReport(
        name="demo run",
        algorithm="primal",
        policy="halves",
        outcomes=(
            VnOutcome(request_id=0, accepted=True, value=3.0, contribution=3.0, hosts=(0, 1), iterations=2, messages=2),
            VnOutcome(request_id=1, accepted=False, value=2.0, contribution=0.0, reason="vnodes [0] not placed"),
        ),
        requested=2,
        accepted=1,
        allocation_ratio=0.5,
        revenue=3.0,
        overhead=OverheadStats(messages=2, bytes=72, iterations=1),
        message_log=log,
        traces={0: trace},
        wall_clock={"solve": 0.25},
    )


class TestFormatNumber:
    @pytest.mark.parametrize(
        "value, expected",
        [(None, ""), (True, "true"), (3, "3"), (0.1, "0.1"), (float("inf"), "inf"), (float("nan"), "nan")],
    )
    def test_cells(self, value, expected):
        assert format_number(value) == expected


class TestEmitReport:
    def test_one_row_per_outcome_plus_summary(self, report, tmp_path):
        written = report_writer.emit_report(report, tmp_path)
        assert written[0].name == "demo_run.csv"
        with open(written[0], newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == REPORT_COLUMNS
        assert len(rows) == 1 + 2 + 1

    def test_round_trip_summary(self, report, tmp_path):
        written = report_writer.emit_report(report, tmp_path)
        parsed = report_writer.read_report(written[0])
        assert parsed["summary"]["allocation_ratio"] == 0.5
        assert parsed["summary"]["total_bytes"] == 72
        assert parsed["summary"]["error"] is None
        assert parsed["outcomes"][0]["hosts"] == "0;1"
        assert parsed["outcomes"][0]["accepted"] is True
        assert parsed["outcomes"][1]["reason"] == "vnodes [0] not placed"

    def test_traces_and_messages_are_written(self, report, tmp_path):
        names = {path.name for path in report_writer.emit_report(report, tmp_path)}
        assert names == {"demo_run.csv", "demo_run_trace_0.csv", "demo_run_messages.csv"}
        with open(tmp_path / "demo_run_messages.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert [row["kind"] for row in rows] == ["share", "duals"]
        assert rows[1]["bytes"] == "40"

    def test_jsonl(self, report, tmp_path):
        written = report_writer.emit_report(report, tmp_path, fmt="jsonl", traces=False)
        assert written[0].suffix == ".jsonl"
        lines = written[0].read_text().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[-1])["kind"] == "summary"
        assert report_writer.read_report(written[0])["summary"]["revenue"] == 3.0

    def test_empty_report_has_only_a_header(self, tmp_path):
        empty = ExperimentReport(algorithm="dual", policy="none")
        written = report_writer.emit_report(empty, tmp_path)
        assert written[0].read_text().splitlines() == [",".join(REPORT_COLUMNS)]

    def test_failed_run_keeps_its_error(self, tmp_path):
        failed = ExperimentReport(algorithm="dual", policy="none", error="no requests")
        written = report_writer.emit_report(failed, tmp_path)
        assert len(written[0].read_text().splitlines()) == 2
        parsed = report_writer.read_report(written[0])
        assert parsed["outcomes"] == []
        assert parsed["summary"]["error"] == "no requests"
        assert parsed["summary"]["requested"] == 0
        assert parsed["summary"]["allocation_ratio"] is None

    def test_unknown_format(self, report, tmp_path):
        with pytest.raises(ReportWriteError):
            report_writer.emit_report(report, tmp_path, fmt="xml")

    def test_unwritable_directory(self, report, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        with pytest.raises(ReportWriteError) as excinfo:
            report_writer.emit_report(report, blocker / "out")
        assert "blocker" in excinfo.value.details["path"]

    def test_digest_ignores_wall_clock(self, report, tmp_path):
        first = report_writer.emit_report(report, tmp_path / "a")[0]
        slower = report.model_copy(update={"wall_clock": {"solve": 9.0}})
        second = report_writer.emit_report(slower, tmp_path / "b")[0]
        assert first.read_text() != second.read_text()
        assert report_writer.report_digest(first) == report_writer.report_digest(second)


class TestTraces:
    def test_dual_columns(self, tmp_path):
        trace = IterateTrace(algorithm="dual", partitions=2, records=(record(1, 9.0, 2.0),))
        path = report_writer.write_trace(trace, tmp_path / "dual.csv")
        with open(path, newline="") as handle:
            row = next(csv.DictReader(handle))
        assert row["q_lambda"] == "9"
        assert row["msgs_cum"] == "4"


class TestEmitStudy:
    def test_files_and_summary(self, tmp_path):
        primal = IterateTrace(algorithm="primal", partitions=2, records=(record(1, 5.0, 1.0),), stop_reason="gap")
        dual = IterateTrace(algorithm="dual", partitions=2, records=(record(1, 7.0, 1.0), record(2, 6.5, 0.5)))
        study = ConvergenceStudy(
            reference=6.0,
            primal=primal,
            dual=dual,
            rows=(StudyRow(t=1, primal_gap=1.0, dual_gap=1.0), StudyRow(t=2, dual_gap=0.5)),
            messages={"primal": 4, "dual": 8},
        )
        written = report_writer.emit_study(study, tmp_path, name="study")
        assert [path.name for path in written] == [
            "study.csv", "study_primal.csv", "study_dual.csv", "study_summary.json",
        ]
        summary = json.loads((tmp_path / "study_summary.json").read_text())
        assert summary["reference"] == 6.0
        assert summary["primal"]["stop_reason"] == "gap"
        assert summary["dual"]["iterations"] == 2
        assert len((tmp_path / "study.csv").read_text().splitlines()) == 3

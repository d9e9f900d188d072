"""Tests for the result table."""

import math

import pandas as pd
import pytest

from gaseq.exceptions import ModelParseError
from gaseq.modelfile import load_updates
from gaseq.report import (
    AGGREGATE_COLUMNS,
    HEAD_COLUMNS,
    UNITS_LINE,
    aggregate_discrepancy,
    read_report,
    rederive_aggregates,
    report_frame,
    write_report,
)
from gaseq.scenarios import DeltaReport, run_horizon


@pytest.fixture
def ky2_reports(two_node_model, data_dir):
    """Reports of the seven runs of the sample year."""
    (outcome,) = run_horizon(two_node_model, load_updates(data_dir / "updates_ky2.json"))
    return outcome.reports()


class TestReportFrame:
    """Test the layout of the result table."""

    def test_column_order(self, ky2_reports):
        """Fixed columns lead; country columns come in triples; aggregates and status close."""
        columns = list(report_frame(ky2_reports).frame.columns)
        assert columns[: len(HEAD_COLUMNS)] == HEAD_COLUMNS
        assert columns[-len(AGGREGATE_COLUMNS) - 1 :] == [*AGGREGATE_COLUMNS, "status"]
        first = columns.index("dCS_AA")
        assert columns[first : first + 3] == ["dCS_AA", "dpiC_AA", "dsC_AA"]

    def test_rows_sorted(self, ky2_reports):
        """Rows are ordered by year and simulation id whatever the input order."""
        frame = report_frame(list(reversed(ky2_reports))).frame
        assert list(frame["simulation_id"]) == list(range(7))
        assert list(frame["index"]) == list(range(7))

    def test_reference_column(self, ky2_reports):
        """The reference run has no reference id."""
        frame = report_frame(ky2_reports).frame
        assert pd.isna(frame.loc[0, "reference_id"])
        assert list(frame["reference_id"][1:]) == [0, 0, 0, 3, 3, 3]

    def test_aggregates_match_countries(self, ky2_reports):
        """Stored aggregates agree with sums over the country columns."""
        report = report_frame(ky2_reports)
        assert report.eu_countries == {"AA", "BB"}
        assert aggregate_discrepancy(report) < 1e-9

    def test_failed_run(self, ky2_reports):
        """A run without a summary keeps its row with empty numbers."""
        failed = DeltaReport(2014, 7, "X", 3, None, "iteration_limit")
        report = report_frame([*ky2_reports, failed])
        row = report.frame.iloc[-1]
        assert row["status"] == "iteration_limit"
        assert all(math.isnan(row[c]) for c in AGGREGATE_COLUMNS)
        assert aggregate_discrepancy(report) < 1e-9


class TestReportFile:
    """Test writing and reading report files."""

    def test_identical_bytes(self, tmp_path, ky2_reports):
        """Equal inputs give byte-identical files."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report(ky2_reports, first, {"seed": 7})
        write_report(list(reversed(ky2_reports)), second, {"seed": 7})
        assert first.read_bytes() == second.read_bytes()

    def test_header_comments(self, tmp_path, ky2_reports):
        """Units, metadata and EU countries precede the header."""
        path = tmp_path / "report.csv"
        write_report(ky2_reports, path, {"seed": 7})
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == UNITS_LINE
        assert lines[1] == "# seed: 7"
        assert lines[2] == "# eu_countries: AA BB"
        assert lines[3].startswith("index,year,simulation_id")

    def test_read_back(self, tmp_path, ky2_reports):
        """A written file reads back with the same aggregates."""
        path = tmp_path / "report.csv"
        written = write_report(ky2_reports, path)
        report = read_report(path)
        assert report.eu_countries == written.eu_countries
        assert report.consumer_countries() == ["AA", "BB"]
        assert aggregate_discrepancy(report) < 1e-9
        pd.testing.assert_frame_equal(
            rederive_aggregates(report), rederive_aggregates(written), check_exact=False
        )

    def test_tampered_aggregate(self, tmp_path, ky2_reports):
        """An edited aggregate no longer matches the country columns."""
        path = tmp_path / "report.csv"
        write_report(ky2_reports, path)
        report = read_report(path)
        report.frame.loc[2, "dCS"] += 5.0
        assert aggregate_discrepancy(report) == pytest.approx(5.0)

    def test_not_a_report(self, tmp_path):
        """Plain CSV files are rejected."""
        path = tmp_path / "plain.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ModelParseError, match="not a report"):
            read_report(path)

    def test_missing_columns(self, tmp_path):
        """Report files must carry the fixed columns."""
        path = tmp_path / "short.csv"
        path.write_text(f"{UNITS_LINE}\n# eu_countries: AA\nindex,year\n0,2014\n", encoding="utf-8")
        with pytest.raises(ModelParseError, match="simulation_id"):
            read_report(path)

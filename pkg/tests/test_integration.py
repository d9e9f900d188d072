"""End-to-end tests: model file to report file."""

import time

import pytest

from gaseq import fixtures
from gaseq.modelfile import dump_model, load_model, load_updates
from gaseq.report import aggregate_discrepancy, read_report, write_report
from gaseq.scenarios import ConsumerUpdate, Expansion, ExpansionKind, YearUpdate, run_horizon


def grid_year(model, year=2020):
    """Fifteen expansions and a 2 percent demand shift on every market."""
    consumer = tuple(
        ConsumerUpdate(node, period, curve.s_ref * 1.02, curve.pi_ref)
        for (node, period), curve in sorted(model.demand.items())
    )
    nodes = [n.id for n in model.nodes]
    storage = [
        Expansion(ExpansionKind.STORAGE, node, capacity=5.0, extraction=5.0, volume=900.0, linc=2.0)
        for node in nodes
    ]
    pipelines = [
        Expansion(ExpansionKind.PIPELINE, nodes[i], nodes[i + 5], capacity=20.0, linc=12.0)
        for i in range(5)
    ]
    return YearUpdate(year, consumer=consumer, expansions=(*storage, *pipelines))


class TestWorkflow:
    """Test complete load, run and report workflows."""

    def test_two_year_horizon(self, tmp_path, data_dir):
        """The sample year followed by a quiet year gives 7 + 5 report rows."""
        model = load_model(data_dir / "two_node.json")
        updates = [*load_updates(data_dir / "updates_ky2.json"), YearUpdate(2015)]
        outcomes = run_horizon(model, updates)
        reports = [r for outcome in outcomes for r in outcome.reports()]
        assert all(r.summary is not None for r in reports)

        written = write_report(reports, tmp_path / "report.csv")
        assert list(written.frame["year"]) == [2014] * 7 + [2015] * 5

        report = read_report(tmp_path / "report.csv")
        assert aggregate_discrepancy(report) < 1e-9
        quiet = report.frame[report.frame["year"] == 2015]
        assert quiet["dCS"].iloc[1:].abs().max() == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.slow
    def test_grid_throughput(self, tmp_path):
        """A 10-node, 5-trader model runs a 20-run year within a minute."""
        path = tmp_path / "grid.json"
        dump_model(fixtures.grid(n_nodes=10, n_traders=5), path)

        start = time.perf_counter()
        model = load_model(path)
        (outcome,) = run_horizon(model, [grid_year(model)])
        reports = outcome.reports()
        write_report(reports, tmp_path / "report.csv")
        elapsed = time.perf_counter() - start

        assert len(reports) == 20
        assert all(r.status == "solved" for r in reports)
        assert aggregate_discrepancy(read_report(tmp_path / "report.csv")) < 1e-9
        assert elapsed < 60.0

"""Tests for LCP assembly, solution extraction and equilibrium checks."""

import dataclasses

import numpy as np
import pytest

from gaseq import fixtures
from gaseq.equilibrium import (
    IndexMap,
    Symbol,
    VariableKey,
    assemble_lcp,
    check_equilibrium,
    extract_solution,
    node_balance_slacks,
    solve_model,
    storage_balance_slacks,
)
from gaseq.exceptions import AssemblyError, ModelValidationError, SolverFailedError
from gaseq.lcp import LcpProblem, SolverOptions, SolveStatus, brute_force_lcp, solve_lemke
from gaseq.model import DemandCurve
from gaseq.types import ServiceId, ServiceKind

ALL_FIXTURES = [
    fixtures.monopoly,
    fixtures.competitive,
    fixtures.duopoly,
    fixtures.single_pipeline,
    fixtures.congested_pipeline,
    fixtures.two_node,
    fixtures.new_source,
    lambda: fixtures.new_source(with_pipeline=True),
    fixtures.corridor,
    lambda: fixtures.grid(n_nodes=4, n_traders=2),
]


class TestClosedForm:
    """Markets whose equilibrium is known analytically."""

    def test_monopoly(self, monopoly_model):
        """Marginal revenue equals marginal cost: q=66.667, price 500."""
        solution = solve_model(monopoly_model).require_solved()
        assert solution.sales[("F1", "N1", "year")] == pytest.approx(200.0 / 3.0, abs=1e-6)
        assert solution.price[("N1", "year")] == pytest.approx(500.0, abs=1e-6)
        assert solution.node_price[("F1", "N1", "year")] == pytest.approx(100.0, abs=1e-6)

    def test_competitive(self):
        """Price equals marginal cost: price 100, consumption 133.333."""
        solution = solve_model(fixtures.competitive()).require_solved()
        assert solution.price[("N1", "year")] == pytest.approx(100.0, abs=1e-6)
        assert solution.consumption[("N1", "year")] == pytest.approx(400.0 / 3.0, abs=1e-6)

    def test_duopoly(self, duopoly_model):
        """Symmetric Cournot: 44.444 each at price 366.667."""
        solution = solve_model(duopoly_model).require_solved()
        for trader in ("F1", "F2"):
            assert solution.sales[(trader, "N1", "year")] == pytest.approx(400.0 / 9.0, abs=1e-6)
        assert solution.price[("N1", "year")] == pytest.approx(1100.0 / 3.0, abs=1e-6)

    def test_single_pipeline(self):
        """Price is production plus transport cost."""
        solution = solve_model(fixtures.single_pipeline()).require_solved()
        assert solution.price[("M", "year")] == pytest.approx(110.0, abs=1e-6)
        assert solution.consumption[("M", "year")] == pytest.approx(790.0 / 6.0, abs=1e-6)
        assert solution.pipeline_flow[("F1", "S", "M", "year")] == pytest.approx(790.0 / 6.0, abs=1e-6)

    def test_congested_pipeline(self):
        """A binding 50 mcm/d cap carries a congestion fee of 490."""
        solution = solve_model(fixtures.congested_pipeline()).require_solved()
        pipe = ServiceId(ServiceKind.PIPELINE, "S", "M")
        assert solution.consumption[("M", "year")] == pytest.approx(50.0, abs=1e-6)
        assert solution.price[("M", "year")] == pytest.approx(600.0, abs=1e-6)
        assert solution.congestion[(pipe, "year")] == pytest.approx(490.0, abs=1e-6)
        assert solution.throughput[(pipe, "year")] == pytest.approx(50.0, abs=1e-6)

    def test_annual_capacity(self):
        """An annual cap of 50 mcm/d times 365 days binds the monopolist."""
        solution = solve_model(fixtures.monopoly(annual_cap=50.0 * 365.0)).require_solved()
        producer = ServiceId(ServiceKind.PRODUCTION, "N1")
        assert solution.production[("F1", "N1", "year")] == pytest.approx(50.0, abs=1e-6)
        assert solution.price[("N1", "year")] == pytest.approx(600.0, abs=1e-6)
        assert solution.annual_congestion[producer] == pytest.approx(200.0, abs=1e-6)

    def test_enumeration_agrees(self, duopoly_model):
        """The duopoly system is small enough for the enumeration oracle."""
        problem, index = assemble_lcp(duopoly_model)
        oracle = brute_force_lcp(problem)
        solution = extract_solution(duopoly_model, index, oracle.z)
        assert solution.price[("N1", "year")] == pytest.approx(1100.0 / 3.0, abs=1e-6)


class TestAssembly:
    """Test the structure of the assembled system."""

    def test_two_node_row_count(self, two_node_model):
        """Flows, node prices, storage values, fees and market prices add up to 65 rows."""
        problem, index = assemble_lcp(two_node_model)
        assert problem.dim == 65
        assert index.count(Symbol.CONGESTION) == 18
        assert index.count(Symbol.ANNUAL_CONGESTION) == 1
        assert index.count(Symbol.MARKET_PRICE) == 4
        assert index.count(Symbol.STORAGE_VALUE) == 2

    def test_monopoly_rows(self, monopoly_model):
        """Production, sales, node price, one fee and one market price."""
        problem, index = assemble_lcp(monopoly_model)
        assert problem.dim == 5
        lam = index.index(VariableKey(Symbol.MARKET_PRICE, node="N1", period="year"))
        assert problem.m[lam, lam] == pytest.approx(1.0 / 6.0)
        assert problem.q[lam] == pytest.approx(-150.0)

    def test_skew_couplings(self, two_node_model):
        """Off-diagonal couplings cancel in M + M^T and the diagonal is non-negative."""
        problem, _ = assemble_lcp(two_node_model)
        m = problem.m
        symmetric_part = m + m.T - 2.0 * np.diag(np.diag(m))
        np.testing.assert_allclose(symmetric_part, 0.0, atol=1e-12)
        assert np.all(np.diag(m) >= 0.0)

    def test_period_weighting(self, two_node_model):
        """Sales rows are weighted by duration/365 and carry theta * -SLP on the diagonal."""
        problem, index = assemble_lcp(two_node_model)
        omega = 183.0 / 365.0
        sale = index.index(VariableKey(Symbol.SALES, "F1", "n", period="summer"))
        lam = index.index(VariableKey(Symbol.MARKET_PRICE, node="n", period="summer"))
        assert problem.m[sale, sale] == pytest.approx(omega * 0.5 * 6.0)
        assert problem.m[sale, lam] == pytest.approx(-omega)
        assert problem.m[lam, sale] == pytest.approx(omega)
        assert problem.q[lam] == pytest.approx(omega * 900.0 / -6.0)

    def test_injection_loss(self, two_node_model):
        """Injection enters the storage balance net of its 1% loss."""
        problem, index = assemble_lcp(two_node_model)
        omega = 182.0 / 365.0
        inject = index.index(VariableKey(Symbol.INJECTION, "F2", "n", period="winter"))
        value = index.index(VariableKey(Symbol.STORAGE_VALUE, "F2", "n"))
        assert problem.m[inject, value] == pytest.approx(-omega * 0.99)
        assert problem.q[inject] == pytest.approx(omega * 5.0)

    def test_annual_capacity_row(self, two_node_model):
        """Annual capacity rows hold the cap spread over the year."""
        problem, index = assemble_lcp(two_node_model)
        row = index.index(
            VariableKey(Symbol.ANNUAL_CONGESTION, service=ServiceId(ServiceKind.INJECTION, "n"))
        )
        assert problem.q[row] == pytest.approx(3000.0 / 365.0)

    def test_labels_name_conditions(self, monopoly_model):
        """Row labels name the condition and the variable."""
        problem, _ = assemble_lcp(monopoly_model)
        assert "market_clearing:lambda[N1,year]" in problem.labels
        assert "production:qP[F1,N1,year]" in problem.labels

    def test_invalid_model_rejected(self):
        """Assembly refuses a model with violations and lists them all."""
        with pytest.raises(ModelValidationError) as info:
            assemble_lcp(fixtures.monopoly(theta=1.2))
        assert [d.code for d in info.value.diagnostics] == ["theta_range"]

    def test_duplicate_identity(self):
        """Two variables with one identity are an assembly error."""
        key = VariableKey(Symbol.MARKET_PRICE, node="N1", period="year")
        with pytest.raises(AssemblyError):
            IndexMap([key, key])


class TestSolveModel:
    """Test solving and extraction."""

    @pytest.mark.parametrize("factory", ALL_FIXTURES)
    def test_equilibrium_conditions_hold(self, factory):
        """Every fixture solves to a point that passes every check."""
        model = factory()
        solution = solve_model(model).require_solved()
        assert check_equilibrium(model, solution) == []

    def test_permutation_invariance(self, two_node_model, two_node_solution):
        """Reordering the rows does not change prices or consumption."""
        problem, index = assemble_lcp(two_node_model)
        order = np.random.default_rng(3).permutation(problem.dim)
        shuffled = solve_lemke(problem.permuted(order))
        assert shuffled.solved
        solution = extract_solution(two_node_model, index.permuted(order), shuffled.z)
        for key, price in two_node_solution.price.items():
            assert solution.price[key] == pytest.approx(price, abs=1e-6)
        for key, volume in two_node_solution.consumption.items():
            assert solution.consumption[key] == pytest.approx(volume, abs=1e-6)

    def test_methods_agree(self, two_node_model, two_node_solution):
        """Newton-first solving reaches the same market prices as Lemke."""
        newton = solve_model(two_node_model, SolverOptions(newton_threshold=1)).require_solved()
        for key, price in two_node_solution.price.items():
            assert newton.price[key] == pytest.approx(price, abs=1e-5)

    def test_balances_hold(self, two_node_model, two_node_solution):
        """Node and storage balances are non-negative."""
        assert min(node_balance_slacks(two_node_model, two_node_solution).values()) >= -1e-6
        assert min(storage_balance_slacks(two_node_model, two_node_solution).values()) >= -1e-4

    def test_new_source_isolated(self):
        """Without a pipeline the entrant sells nothing."""
        solution = solve_model(fixtures.new_source()).require_solved()
        assert solution.sales[("NEW", "M", "year")] == pytest.approx(0.0, abs=1e-9)
        assert solution.production[("NEW", "S", "year")] == pytest.approx(0.0, abs=1e-9)

    def test_unsolved_status_kept(self, monopoly_model):
        """A failed solve returns a solution object that refuses require_solved."""
        _, index = assemble_lcp(monopoly_model)
        solution = extract_solution(
            monopoly_model, index, np.zeros(len(index)), SolveStatus.ITERATION_LIMIT
        )
        assert not solution.solved
        with pytest.raises(SolverFailedError):
            solution.require_solved()

    def test_consumption_is_sum_of_sales(self, two_node_solution):
        """Consumption per market adds up the traders' sales."""
        for (node, period), volume in two_node_solution.consumption.items():
            total = sum(
                value for (f, n, t), value in two_node_solution.sales.items() if (n, t) == (node, period)
            )
            assert volume == pytest.approx(total)


def scale_prices(model, factor):
    """Multiply every cost coefficient and every demand curve by ``factor``."""
    specs = [
        dataclasses.replace(
            spec,
            linc={p: v * factor for p, v in spec.linc.items()},
            quac={p: v * factor for p, v in spec.quac.items()},
        )
        for spec in model.services.values()
    ]
    curves = {
        market: DemandCurve(curve.intercept * factor, curve.slope * factor)
        for market, curve in model.demand.items()
    }
    return model.with_services(specs).with_demand(curves)


class TestComparativeStatics:
    """Test how the equilibrium responds to rescaling and added capacity."""

    @pytest.mark.parametrize("factory", [fixtures.two_node, fixtures.congested_pipeline, fixtures.duopoly])
    def test_price_homogeneity(self, factory):
        """Scaling costs and demand prices by 2.5 scales prices and keeps volumes."""
        model = factory()
        base = solve_model(model).require_solved()
        scaled = solve_model(scale_prices(model, 2.5)).require_solved()
        for market, price in base.price.items():
            assert scaled.price[market] == pytest.approx(2.5 * price, rel=1e-6, abs=1e-6)
        for market, volume in base.consumption.items():
            assert scaled.consumption[market] == pytest.approx(volume, rel=1e-6, abs=1e-6)

    def test_congestion_fee_scales(self):
        """The 490 congestion fee becomes 1225 when prices scale by 2.5."""
        pipe = ServiceId(ServiceKind.PIPELINE, "S", "M")
        solution = solve_model(scale_prices(fixtures.congested_pipeline(), 2.5)).require_solved()
        assert solution.congestion[(pipe, "year")] == pytest.approx(1225.0, abs=1e-5)

    def test_more_capacity_does_not_raise_price(self):
        """Raising the binding pipeline cap from 50 to 60 lowers the price to 540."""
        model = fixtures.congested_pipeline()
        pipe = ServiceId(ServiceKind.PIPELINE, "S", "M")
        wider = model.with_services(
            [dataclasses.replace(model.services[pipe], cap_per_period={"year": 60.0})]
        )
        before = solve_model(model).require_solved()
        after = solve_model(wider).require_solved()
        assert after.price[("M", "year")] <= before.price[("M", "year")]
        assert after.consumption[("M", "year")] >= before.consumption[("M", "year")]
        assert after.price[("M", "year")] == pytest.approx(540.0, abs=1e-6)


class TestCheckEquilibrium:
    """Test detection of broken equilibria."""

    def test_flags_wrong_price(self, monopoly_model):
        """Moving the market price off the curve is reported."""
        solution = solve_model(monopoly_model).require_solved()
        broken = solution.price | {("N1", "year"): 450.0}
        codes = {d.code for d in check_equilibrium(monopoly_model, _replace(solution, price=broken))}
        assert "market_clearing" in codes

    def test_flags_capacity_violation(self):
        """Throughput above a cap is reported."""
        model = fixtures.congested_pipeline()
        solution = solve_model(model).require_solved()
        pipe = ServiceId(ServiceKind.PIPELINE, "S", "M")
        broken = _replace(solution, throughput=solution.throughput | {(pipe, "year"): 60.0})
        assert "capacity" in {d.code for d in check_equilibrium(model, broken)}

    def test_flags_negative_flow(self, monopoly_model):
        """Negative flows are reported."""
        problem, index = assemble_lcp(monopoly_model)
        z = solve_lemke(problem).z.copy()
        z[index.index(VariableKey(Symbol.SALES, "F1", "N1", period="year"))] = -5.0
        solution = extract_solution(monopoly_model, index, z)
        assert "negative_flow" in {d.code for d in check_equilibrium(monopoly_model, solution)}

    def test_storage_checks_use_unit_floor(self, two_node_model, two_node_solution):
        """Storage balance and zero flows are checked against the unit floor without error."""
        solution = _replace(
            two_node_solution,
            storage_value={key: 0.0 for key in two_node_solution.storage_value},
        )
        codes = [d.code for d in check_equilibrium(two_node_model, solution)]
        assert "negative_flow" not in codes
        assert check_equilibrium(two_node_model, two_node_solution) == []


def _replace(solution, **changes):
    return dataclasses.replace(solution, **changes)


def test_problem_is_read_only(monopoly_model):
    """The assembled problem cannot be modified."""
    problem, _ = assemble_lcp(monopoly_model)
    assert isinstance(problem, LcpProblem)
    with pytest.raises(ValueError):
        problem.q[0] = 1.0

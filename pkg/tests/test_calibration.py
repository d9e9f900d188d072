"""Tests for calibration of demand anchors and market power."""

import dataclasses
import time

import numpy as np
import pytest

from gaseq import fixtures
from gaseq.calibration import (
    CalibrationBounds,
    CalibrationData,
    CalibrationOptions,
    CalibrationParams,
    adjust_reference_sales,
    apply_calibration,
    calibrate,
    calibration_residuals,
    initial_params,
    project_demand,
    synthesize_calibration_data,
)
from gaseq.equilibrium import solve_model
from gaseq.exceptions import CalibrationDataError, InvalidInputError
from gaseq.types import DEFAULT_PRICE_GROWTH, ServiceId, ServiceKind

MARKET = ("N1", "year")


def monopoly_data(sales=None, consumption=100.0, price=300.0, elasticity=-0.5):
    return CalibrationData(
        consumption={MARKET: consumption},
        price={MARKET: price},
        elasticity={MARKET: elasticity},
        sales=sales if sales is not None else {("F1", "N1", "year"): consumption},
    )


class TestCalibrationData:
    """Test validation of reported data."""

    def test_rejects_non_positive_consumption(self):
        """Consumption must be positive."""
        with pytest.raises(CalibrationDataError, match="consumption"):
            monopoly_data(consumption=0.0)

    def test_rejects_positive_elasticity(self):
        """Elasticities must be negative."""
        with pytest.raises(CalibrationDataError, match="elasticity"):
            monopoly_data(elasticity=0.2)

    def test_rejects_negative_sales(self):
        """Sales cannot be negative."""
        with pytest.raises(CalibrationDataError, match="sales"):
            monopoly_data(sales={("F1", "N1", "year"): -1.0})

    def test_rejects_non_finite(self):
        """NaN values are malformed input."""
        with pytest.raises(InvalidInputError):
            monopoly_data(price=float("nan"))

    def test_incomplete_coverage(self, two_node_model):
        """Every consumer market needs data."""
        data = CalibrationData(
            consumption={("n", "summer"): 100.0},
            price={("n", "summer"): 300.0},
            elasticity={("n", "summer"): -0.5},
            sales={},
        )
        with pytest.raises(CalibrationDataError, match="incomplete"):
            data.check_against(two_node_model)


class TestAdjustReferenceSales:
    """Test the proportional scale-down of reference sales."""

    def test_market_excess_scaled(self, duopoly_model):
        """Sales of 80 + 40 into a 100 market scale by 100/120."""
        data = monopoly_data(sales={("F1", "N1", "year"): 80.0, ("F2", "N1", "year"): 40.0})
        adjusted = adjust_reference_sales(data, duopoly_model).adjusted
        assert adjusted[("F1", "N1", "year")] == pytest.approx(80.0 * 100.0 / 120.0)
        assert adjusted[("F2", "N1", "year")] == pytest.approx(40.0 * 100.0 / 120.0)

    def test_producer_cap(self, monopoly_model):
        """Sales above the 1000 mcm/d production cap are scaled to the cap."""
        data = monopoly_data(consumption=2000.0, sales={("F1", "N1", "year"): 1500.0})
        adjusted = adjust_reference_sales(data, monopoly_model).adjusted
        assert adjusted[("F1", "N1", "year")] == pytest.approx(1000.0)

    def test_never_scaled_up(self, monopoly_model):
        """Consistent sales are left alone."""
        data = monopoly_data(sales={("F1", "N1", "year"): 60.0})
        assert adjust_reference_sales(data, monopoly_model).adjusted == {("F1", "N1", "year"): 60.0}

    def test_zero_sales_warning(self, monopoly_model):
        """A market with consumption but no sales is flagged."""
        result = adjust_reference_sales(monopoly_data(sales={}), monopoly_model)
        assert [d.code for d in result.diagnostics] == ["zero_sales"]

    def test_idempotent(self, duopoly_model):
        """Adjusting data that was already adjusted changes nothing."""
        data = monopoly_data(sales={("F1", "N1", "year"): 80.0, ("F2", "N1", "year"): 40.0})
        once = adjust_reference_sales(data, duopoly_model).adjusted
        again = adjust_reference_sales(
            CalibrationData(data.consumption, data.price, data.elasticity, once), duopoly_model
        ).adjusted
        assert again == pytest.approx(once)
        assert all(once[key] <= value for key, value in data.sales.items())

    def test_producer_cap_across_markets(self, two_node_model):
        """Sales of 60 + 60 from one producer capped at 100 become 50 + 50."""
        producer = ServiceId(ServiceKind.PRODUCTION, "n")
        spec = two_node_model.services[producer]
        model = two_node_model.with_services(
            [dataclasses.replace(spec, cap_per_period={"summer": 100.0, "winter": 100.0})]
        )
        markets = [(n, t) for n in ("n", "m") for t in ("summer", "winter")]
        data = CalibrationData(
            consumption={m: 200.0 for m in markets},
            price={m: 300.0 for m in markets},
            elasticity={m: -0.5 for m in markets},
            sales={("F1", "n", "summer"): 60.0, ("F1", "m", "summer"): 60.0},
        )
        adjusted = adjust_reference_sales(data, model).adjusted
        assert adjusted[("F1", "n", "summer")] == pytest.approx(50.0)
        assert adjusted[("F1", "m", "summer")] == pytest.approx(50.0)


class TestBounds:
    """Test the calibration search box."""

    def test_windows(self, monopoly_model):
        """Price within 15 percent; elasticity within 0.2 and clipped to [-1, -0.3]."""
        bounds = CalibrationBounds.from_data(monopoly_model, monopoly_data())
        assert bounds.price[MARKET].lower == pytest.approx(255.0)
        assert bounds.price[MARKET].upper == pytest.approx(345.0)
        assert bounds.elasticity[MARKET].lower == pytest.approx(-0.7)
        assert bounds.elasticity[MARKET].upper == pytest.approx(-0.3)
        assert bounds.theta[("F1", "N1", "year")].upper == 1.0

    def test_window_clipped_below(self, monopoly_model):
        """An elasticity of -0.9 gets the window [-1, -0.7]."""
        bounds = CalibrationBounds.from_data(monopoly_model, monopoly_data(elasticity=-0.9))
        assert bounds.elasticity[MARKET].lower == pytest.approx(-1.0)
        assert bounds.elasticity[MARKET].upper == pytest.approx(-0.7)

    def test_empty_window(self, monopoly_model):
        """An elasticity far outside [-1, -0.3] leaves no feasible window."""
        with pytest.raises(CalibrationDataError, match="Empty"):
            CalibrationBounds.from_data(monopoly_model, monopoly_data(elasticity=-1.25))

    def test_point_bounds(self):
        """Point bounds contain exactly their parameters."""
        params = CalibrationParams({MARKET: 100.0}, {MARKET: 300.0}, {MARKET: -0.5}, {})
        bounds = CalibrationBounds.points(params)
        assert bounds.contains(params)
        assert not bounds.contains(params.replace("price", MARKET, 301.0))


class TestOptions:
    """Test calibration option validation."""

    def test_bad_start(self):
        """Unknown starting rules are rejected."""
        with pytest.raises(CalibrationDataError):
            CalibrationOptions(initial_theta="zero")

    def test_bad_target(self):
        """The target must be positive."""
        with pytest.raises(InvalidInputError):
            CalibrationOptions(target=0.0)

    def test_random_start_is_seeded(self, duopoly_model):
        """A random start depends only on the seed."""
        data, _ = synthesize_calibration_data(duopoly_model)
        bounds = CalibrationBounds.from_data(duopoly_model, data)
        opts = CalibrationOptions(initial_theta="random", seed=5)
        first = initial_params(duopoly_model, data, bounds, opts)
        second = initial_params(duopoly_model, data, bounds, opts)
        assert first.theta == second.theta
        assert all(0.0 <= v <= 1.0 for v in first.theta.values())


class TestCalibrate:
    """Test the calibration search."""

    def test_roundtrip_duopoly(self, duopoly_model):
        """Data generated by the model is reproduced without any search step."""
        data, _ = synthesize_calibration_data(duopoly_model)
        result = calibrate(duopoly_model, data)
        assert result.converged
        assert result.sweeps == 0
        assert result.metrics.max_consumption_deviation < 1e-6

    def test_roundtrip_point_bounds(self):
        """Point bounds at the generating parameters reproduce every market."""
        model = fixtures.duopoly(theta=0.5)
        data, params = synthesize_calibration_data(model)
        result = calibrate(model, data, bounds=CalibrationBounds.points(params))
        assert result.converged
        for deviation in result.metrics.consumption_deviation.values():
            assert abs(deviation) < 1e-6

    def test_recovers_price_anchor(self, duopoly_model):
        """A price reported 5 percent too high is pulled back within the target."""
        data, _ = synthesize_calibration_data(duopoly_model)
        skewed = CalibrationData(
            data.consumption,
            {k: v * 1.05 for k, v in data.price.items()},
            data.elasticity,
            data.sales,
        )
        result = calibrate(duopoly_model, skewed, opts=CalibrationOptions(target=0.001))
        assert result.converged
        assert result.metrics.max_consumption_deviation <= 0.001
        assert result.bounds.contains(result.params)
        assert list(result.history) == sorted(result.history, reverse=True)

    def test_perturbed_market_power(self, duopoly_model):
        """Starting from theta 0.8 against theta 1 data still meets the 2.5 percent target."""
        data, _ = synthesize_calibration_data(duopoly_model)
        result = calibrate(fixtures.duopoly(theta=0.8), data)
        assert result.converged
        assert result.metrics.max_consumption_deviation <= 0.025
        assert result.bounds.contains(result.params)

    def test_monopoly_point_outside_elasticity_range(self, monopoly_model):
        """The monopoly equilibrium has elasticity -1.25, outside every admissible window."""
        data, _ = synthesize_calibration_data(monopoly_model)
        assert data.elasticity[MARKET] == pytest.approx(-1.25)
        with pytest.raises(CalibrationDataError):
            calibrate(monopoly_model, data)

    @pytest.mark.slow
    def test_grid_round_trip(self):
        """Five nodes and three traders with market power shifted by 0.2 calibrate back within half a minute."""
        model = fixtures.grid(n_nodes=5, n_traders=3)
        data, _ = synthesize_calibration_data(model)
        rng = np.random.default_rng(1)
        shifted = model.with_traders(
            dataclasses.replace(
                trader,
                theta={
                    key: min(1.0, max(0.0, value + float(rng.choice([-0.2, 0.2]))))
                    for key, value in sorted(trader.theta.items())
                },
            )
            for trader in model.traders
        )

        start = time.perf_counter()
        result = calibrate(shifted, data, opts=CalibrationOptions(seed=1))
        elapsed = time.perf_counter() - start

        assert result.converged
        assert result.metrics.max_consumption_deviation <= 0.025
        assert result.bounds.contains(result.params)
        assert elapsed < 30.0

    def test_search_options_validated(self):
        """The line search needs at least one iteration."""
        with pytest.raises(InvalidInputError):
            CalibrationOptions(search_maxiter=0)

    def test_residuals_frame(self, duopoly_model):
        """Statistics come as one column per calibrated quantity."""
        data, params = synthesize_calibration_data(duopoly_model)
        metrics = calibration_residuals(duopoly_model, data, params)
        frame = metrics.to_frame()
        assert list(frame.columns) == ["sC", "piC", "etaC", "qC"]
        assert frame.loc["max_rel", "sC"] == pytest.approx(0.0, abs=1e-9)

    def test_residuals_price_at_upper_bound(self, duopoly_model):
        """A price anchor 15 percent above the data shows as a 15 percent price deviation."""
        data, params = synthesize_calibration_data(duopoly_model)
        raised = params.replace("price", MARKET, data.price[MARKET] * 1.15)
        metrics = calibration_residuals(duopoly_model, data, raised)
        assert metrics.stats["piC"].max_rel == pytest.approx(0.15)
        assert metrics.stats["piC"].max_abs == pytest.approx(0.15 * data.price[MARKET])

    def test_residuals_match_direct_computation(self, duopoly_model):
        """Statistics agree with deviations worked out from the equilibrium itself."""
        data, params = synthesize_calibration_data(duopoly_model)
        shifted = params.replace("theta", ("F1", "N1", "year"), 0.6)
        metrics = calibration_residuals(duopoly_model, data, shifted)
        solution = solve_model(apply_calibration(duopoly_model, shifted)).require_solved()

        rel = (solution.consumption[MARKET] - data.consumption[MARKET]) / data.consumption[MARKET]
        assert metrics.stats["sC"].max_rel == pytest.approx(abs(rel))
        assert metrics.stats["sC"].mean == pytest.approx(rel)

        short = [
            (solution.sales[key] - ref) / ref
            for key, ref in data.sales.items()
            if solution.sales[key] < ref
        ]
        assert short
        assert metrics.stats["qC"].count == len(short)
        assert metrics.stats["qC"].max_rel == pytest.approx(max(abs(g) for g in short))
        expected = rel**2 + 0.1 * sum(g * g for g in short)
        assert metrics.objective == pytest.approx(expected)


class TestApplyAndProject:
    """Test building calibrated and projected models."""

    def test_apply_sets_curve_and_theta(self, monopoly_model):
        """Calibrated anchors and market power replace the model's."""
        params = CalibrationParams(
            {MARKET: 100.0}, {MARKET: 300.0}, {MARKET: -0.5}, {("F1", "N1", "year"): 0.0}
        )
        model = apply_calibration(monopoly_model, params)
        assert model.trader("F1").theta_at("N1", "year") == 0.0
        assert model.demand_curve(*MARKET).intercept == pytest.approx(900.0)
        assert solve_model(model).price[MARKET] == pytest.approx(100.0, abs=1e-6)

    def test_project_two_years(self, monopoly_model):
        """Prices grow by 0.23 percent a year and anchors move to the projection."""
        params = CalibrationParams(
            {MARKET: 100.0}, {MARKET: 300.0}, {MARKET: -0.5}, {("F1", "N1", "year"): 1.0}
        )
        model = project_demand(monopoly_model, params, {MARKET: 110.0}, years=2)
        curve = model.demand_curve(*MARKET)
        assert curve.s_ref == 110.0
        assert curve.pi_ref == pytest.approx(300.0 * (1.0 + DEFAULT_PRICE_GROWTH) ** 2)
        assert curve.eta_ref == -0.5

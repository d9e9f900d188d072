"""Calibration of demand anchors and market power to reference data.

Demand curves are rebuilt from a reported consumption level, a calibrated
price and a calibrated elasticity. A Gauss-Seidel sweep over markets tunes the
price and elasticity with bounded one-dimensional searches, then each trader's
market power against its reference sales.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy import optimize

from .equilibrium import EquilibriumSolution, solve_model
from .exceptions import CalibrationDataError
from .lcp import SolverOptions, SolveStatus
from .model import DemandCurve, Diagnostic, MarketModel, Severity
from .types import (
    DEFAULT_CONSUMPTION_TARGET,
    DEFAULT_MAX_SWEEPS,
    DEFAULT_PRICE_GROWTH,
    ELASTICITY_MAX,
    ELASTICITY_MIN,
    ELASTICITY_WINDOW,
    FLOW_TOL,
    PRICE_BOUND_FACTOR,
    THETA_MAX,
    THETA_MIN,
    NodeId,
    PeriodId,
    ServiceKind,
    TraderId,
)
from .validators import validate_positive_int, validate_positive_real, validate_real_mapping

logger = logging.getLogger(__name__)

Market = tuple[NodeId, PeriodId]
Sale = tuple[TraderId, NodeId, PeriodId]


@dataclass(frozen=True)
class CalibrationData:
    """Reported consumption, prices, elasticities and per-trader sales."""

    consumption: Mapping[Market, float]
    price: Mapping[Market, float]
    elasticity: Mapping[Market, float]
    sales: Mapping[Sale, float]
    adjusted_sales: Mapping[Sale, float] | None = None

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        for name in ("consumption", "price", "elasticity", "sales"):
            object.__setattr__(self, name, validate_real_mapping(getattr(self, name), name))
        if self.adjusted_sales is not None:
            object.__setattr__(
                self, "adjusted_sales", validate_real_mapping(self.adjusted_sales, "adjusted_sales")
            )

        for key, value in self.consumption.items():
            if value <= 0.0:
                raise CalibrationDataError(f"Reported consumption at {key} must be positive, got {value}")
        for key, value in self.price.items():
            if value <= 0.0:
                raise CalibrationDataError(f"Reported price at {key} must be positive, got {value}")
        for key, value in self.elasticity.items():
            if value >= 0.0:
                raise CalibrationDataError(f"Reported elasticity at {key} must be negative, got {value}")
        for key, value in self.sales.items():
            if value < 0.0:
                raise CalibrationDataError(f"Reference sales at {key} must be non-negative, got {value}")

    @property
    def reference_sales(self) -> Mapping[Sale, float]:
        """Adjusted sales when available, otherwise the raw references."""
        return self.adjusted_sales if self.adjusted_sales is not None else self.sales

    def check_against(self, model: MarketModel) -> None:
        """Raise CalibrationDataError unless every consumer market is covered."""
        missing = []
        for node in model.consumer_nodes():
            for period in model.periods:
                market = (node.id, period.id)
                for name in ("consumption", "price", "elasticity"):
                    if market not in getattr(self, name):
                        missing.append(f"{name} {node.id}/{period.id}")
        if missing:
            raise CalibrationDataError(f"Calibration data incomplete: {', '.join(missing)}")


@dataclass(frozen=True)
class SalesAdjustment:
    adjusted: dict[Sale, float]
    diagnostics: tuple[Diagnostic, ...] = ()


def adjust_reference_sales(data: CalibrationData, model: MarketModel) -> SalesAdjustment:
    """Scale reference sales down proportionally until they fit markets and producers.

    Market consistency is enforced first, then each trader's production cap,
    then the market rule is checked once more. Sales are never scaled up.
    """
    data.check_against(model)
    adjusted = dict(data.sales)
    diagnostics: list[Diagnostic] = []

    def market_pass() -> None:
        totals: dict[Market, float] = defaultdict(float)
        for (f, n, t), value in adjusted.items():
            totals[(n, t)] += value
        for market, total in totals.items():
            limit = data.consumption.get(market)
            if limit is not None and total > limit:
                factor = limit / total
                for key in adjusted:
                    if (key[1], key[2]) == market:
                        adjusted[key] *= factor

    market_pass()

    for trader in model.traders:
        spec = model.node_service(ServiceKind.PRODUCTION, trader.source)
        if spec is None:
            continue
        for period in model.periods:
            cap = spec.cap_at(period.id)
            keys = [k for k in adjusted if k[0] == trader.id and k[2] == period.id]
            total = sum(adjusted[k] for k in keys)
            if cap is not None and total > cap:
                for key in keys:
                    adjusted[key] *= cap / total

    market_pass()

    for node in model.consumer_nodes():
        for period in model.periods:
            market = (node.id, period.id)
            sold = sum(v for k, v in adjusted.items() if (k[1], k[2]) == market)
            if sold <= 0.0 and data.consumption.get(market, 0.0) > 0.0:
                diagnostic = Diagnostic(
                    Severity.WARNING,
                    "zero_sales",
                    "no reference sales although consumption is reported",
                    f"{node.id}/{period.id}",
                )
                logger.warning("%s", diagnostic)
                diagnostics.append(diagnostic)
    return SalesAdjustment(adjusted, tuple(diagnostics))


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def contains(self, value: float, tol: float = 1e-12) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def clamp(self, value: float) -> float:
        return min(max(value, self.lower), self.upper)

    @property
    def is_point(self) -> bool:
        return self.upper - self.lower <= 1e-12


@dataclass(frozen=True)
class CalibrationParams:
    """Demand anchors and market power; ``consumption`` is the anchor quantity."""

    consumption: Mapping[Market, float]
    price: Mapping[Market, float]
    elasticity: Mapping[Market, float]
    theta: Mapping[Sale, float]

    def __post_init__(self) -> None:
        """Copy mappings so the params stay immutable."""
        for name in ("consumption", "price", "elasticity", "theta"):
            object.__setattr__(self, name, validate_real_mapping(getattr(self, name), name))

    def replace(self, group: str, key: Any, value: float) -> CalibrationParams:
        values = dict(getattr(self, group))
        values[key] = value
        fields = {
            "consumption": self.consumption,
            "price": self.price,
            "elasticity": self.elasticity,
            "theta": self.theta,
            group: values,
        }
        return CalibrationParams(**fields)

    def fingerprint(self) -> tuple[Any, ...]:
        return tuple(
            tuple(sorted((k, round(v, 12)) for k, v in getattr(self, name).items()))
            for name in ("consumption", "price", "elasticity", "theta")
        )


@dataclass(frozen=True)
class CalibrationBounds:
    """Search box: price within ±15 % of data, elasticity within ±0.2 of data and [-1, -0.3]."""

    price: Mapping[Market, Interval]
    elasticity: Mapping[Market, Interval]
    theta: Mapping[Sale, Interval]

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        for name in ("price", "elasticity", "theta"):
            intervals = dict(getattr(self, name))
            for key, interval in intervals.items():
                if interval.lower > interval.upper:
                    raise CalibrationDataError(
                        f"Empty {name} window at {key}: [{interval.lower:g}, {interval.upper:g}]"
                    )
            object.__setattr__(self, name, intervals)

    @classmethod
    def from_data(
        cls,
        model: MarketModel,
        data: CalibrationData,
        price_factor: float = PRICE_BOUND_FACTOR,
        window: float = ELASTICITY_WINDOW,
    ) -> CalibrationBounds:
        data.check_against(model)
        price = {
            key: Interval((1.0 - price_factor) * value, (1.0 + price_factor) * value)
            for key, value in data.price.items()
        }
        elasticity = {
            key: Interval(max(ELASTICITY_MIN, value - window), min(ELASTICITY_MAX, value + window))
            for key, value in data.elasticity.items()
        }
        theta = {
            (trader.id, node, period.id): Interval(THETA_MIN, THETA_MAX)
            for trader in model.traders
            for node in sorted(trader.markets)
            for period in model.periods
        }
        return cls(price, elasticity, theta)

    @classmethod
    def points(cls, params: CalibrationParams) -> CalibrationBounds:
        """Bounds collapsed onto ``params``."""
        return cls(
            {k: Interval(v, v) for k, v in params.price.items()},
            {k: Interval(v, v) for k, v in params.elasticity.items()},
            {k: Interval(v, v) for k, v in params.theta.items()},
        )

    def contains(self, params: CalibrationParams) -> bool:
        for name in ("price", "elasticity", "theta"):
            intervals = getattr(self, name)
            for key, value in getattr(params, name).items():
                if key in intervals and not intervals[key].contains(value):
                    return False
        return all(ELASTICITY_MIN <= v <= ELASTICITY_MAX for v in params.elasticity.values())


@dataclass(frozen=True)
class CalibrationOptions:
    """Knobs of the calibration search."""

    target: float = DEFAULT_CONSUMPTION_TARGET
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    seed: int = 0
    initial_theta: str = "model"
    sales_weight: float = 0.1
    search_tol: float = 1e-3
    search_maxiter: int = 16
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "target", validate_positive_real(self.target, "target"))
        object.__setattr__(self, "max_sweeps", validate_positive_int(self.max_sweeps, "max_sweeps"))
        if self.initial_theta not in ("model", "random"):
            raise CalibrationDataError(
                f"initial_theta must be 'model' or 'random', got {self.initial_theta!r}"
            )
        if self.sales_weight < 0.0:
            raise CalibrationDataError(f"sales_weight must be non-negative, got {self.sales_weight}")
        object.__setattr__(self, "search_tol", validate_positive_real(self.search_tol, "search_tol"))
        object.__setattr__(
            self, "search_maxiter", validate_positive_int(self.search_maxiter, "search_maxiter")
        )


def initial_params(
    model: MarketModel,
    data: CalibrationData,
    bounds: CalibrationBounds,
    opts: CalibrationOptions | None = None,
) -> CalibrationParams:
    """Start from the data, clamped into bounds; theta from the model or drawn at random."""
    opts = opts or CalibrationOptions()
    rng = np.random.default_rng(opts.seed)
    theta = {}
    for key, interval in bounds.theta.items():
        if opts.initial_theta == "random":
            theta[key] = float(rng.uniform(interval.lower, interval.upper))
        else:
            f, n, t = key
            theta[key] = interval.clamp(model.trader(f).theta_at(n, t))
    return CalibrationParams(
        consumption=dict(data.consumption),
        price={k: bounds.price[k].clamp(v) for k, v in data.price.items()},
        elasticity={k: bounds.elasticity[k].clamp(v) for k, v in data.elasticity.items()},
        theta=theta,
    )


def apply_calibration(model: MarketModel, params: CalibrationParams) -> MarketModel:
    """Copy of ``model`` with demand curves and market power taken from ``params``."""
    curves = {
        market: DemandCurve.from_anchors(
            params.consumption[market], params.price[market], params.elasticity[market]
        )
        for market in params.price
    }
    traders = []
    for trader in model.traders:
        theta = dict(trader.theta)
        for (f, n, t), value in params.theta.items():
            if f == trader.id:
                theta[(n, t)] = value
        traders.append(dataclasses.replace(trader, theta=theta))
    return model.with_demand(curves).with_traders(traders)


def project_demand(
    model: MarketModel,
    params: CalibrationParams,
    consumption: Mapping[Market, float],
    years: int,
    growth: float = DEFAULT_PRICE_GROWTH,
) -> MarketModel:
    """Model for a later year: projected consumption, grown prices, fixed elasticity and theta."""
    factor = (1.0 + growth) ** years
    anchors = dict(params.consumption)
    anchors.update(consumption)
    projected = CalibrationParams(
        consumption=anchors,
        price={k: v * factor for k, v in params.price.items()},
        elasticity=params.elasticity,
        theta=params.theta,
    )
    return apply_calibration(model, projected)


@dataclass(frozen=True)
class DeviationStats:
    """Maximum absolute and relative deviation, mean and median of the signed relative ones."""

    max_abs: float
    max_rel: float
    mean: float
    median: float
    count: int

    @classmethod
    def of(cls, absolute: list[float], relative: list[float]) -> DeviationStats:
        if not relative:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        rel = np.asarray(relative)
        return cls(
            max_abs=float(np.max(np.abs(absolute))),
            max_rel=float(np.max(np.abs(rel))),
            mean=float(np.mean(rel)),
            median=float(np.median(rel)),
            count=len(relative),
        )


@dataclass(frozen=True)
class CalibrationMetrics:
    """Fit statistics for consumption, price, elasticity and sales shortfalls.

    Statistics are unweighted across markets and traders.
    """

    stats: dict[str, DeviationStats]
    consumption_deviation: dict[Market, float]
    shortfalls: dict[Sale, float]
    objective: float
    status: SolveStatus
    weighting: str = "unweighted"

    @property
    def max_consumption_deviation(self) -> float:
        return self.stats["sC"].max_rel

    def to_frame(self) -> pd.DataFrame:
        """Statistics as a table with one column per calibrated quantity."""
        return pd.DataFrame(
            {
                name: {
                    "max_abs": s.max_abs,
                    "max_rel": s.max_rel,
                    "mean": s.mean,
                    "median": s.median,
                    "count": s.count,
                }
                for name, s in self.stats.items()
            }
        )


def _metrics(
    data: CalibrationData,
    params: CalibrationParams,
    solution: EquilibriumSolution,
    sales_weight: float,
) -> CalibrationMetrics:
    s_abs, s_rel = [], []
    deviation = {}
    for market, reported in sorted(data.consumption.items()):
        gap = solution.consumption.get(market, 0.0) - reported
        s_abs.append(gap)
        s_rel.append(gap / reported)
        deviation[market] = gap / reported

    p_abs = [params.price[k] - v for k, v in sorted(data.price.items())]
    p_rel = [(params.price[k] - v) / v for k, v in sorted(data.price.items())]
    e_abs = [params.elasticity[k] - v for k, v in sorted(data.elasticity.items())]
    e_rel = [(params.elasticity[k] - v) / abs(v) for k, v in sorted(data.elasticity.items())]

    q_abs, q_rel = [], []
    shortfalls = {}
    for key, ref in sorted(data.reference_sales.items()):
        if ref <= FLOW_TOL:
            continue
        gap = solution.sales.get(key, 0.0) - ref
        if gap < 0.0:
            q_abs.append(gap)
            q_rel.append(gap / ref)
            shortfalls[key] = -gap

    objective = float(np.sum(np.square(s_rel))) + sales_weight * float(np.sum(np.square(q_rel)))
    if not solution.solved:
        objective = float("inf")
    return CalibrationMetrics(
        stats={
            "sC": DeviationStats.of(s_abs, s_rel),
            "piC": DeviationStats.of(p_abs, p_rel),
            "etaC": DeviationStats.of(e_abs, e_rel),
            "qC": DeviationStats.of(q_abs, q_rel),
        },
        consumption_deviation=deviation,
        shortfalls=shortfalls,
        objective=objective,
        status=solution.status,
    )


def calibration_residuals(
    model: MarketModel,
    data: CalibrationData,
    params: CalibrationParams,
    opts: CalibrationOptions | None = None,
) -> CalibrationMetrics:
    """Solve the calibrated model once and report the fit statistics."""
    opts = opts or CalibrationOptions()
    solution = solve_model(apply_calibration(model, params), opts.solver)
    return _metrics(data, params, solution, opts.sales_weight)


@dataclass(frozen=True)
class CalibrationResult:
    """Best parameters found, their fit and how the search ended."""

    params: CalibrationParams
    metrics: CalibrationMetrics
    bounds: CalibrationBounds
    converged: bool
    sweeps: int
    evaluations: int
    history: tuple[float, ...] = ()
    message: str = ""


class _Search:
    """Cached objective evaluations and the monotone acceptance rule."""

    def __init__(self, model: MarketModel, data: CalibrationData, opts: CalibrationOptions) -> None:
        self.model = model
        self.data = data
        self.opts = opts
        self.cache: dict[tuple[Any, ...], CalibrationMetrics] = {}

    def evaluate(self, params: CalibrationParams) -> CalibrationMetrics:
        key = params.fingerprint()
        if key not in self.cache:
            self.cache[key] = calibration_residuals(self.model, self.data, params, self.opts)
        return self.cache[key]

    def excess(self, metrics: CalibrationMetrics) -> float:
        """Consumption misfit beyond the target, summed over markets."""
        return sum(max(0.0, abs(d) - self.opts.target) for d in metrics.consumption_deviation.values())

    def accepts(self, current: CalibrationMetrics, candidate: CalibrationMetrics) -> bool:
        return (
            candidate.objective < current.objective - 1e-12
            and self.excess(candidate) <= self.excess(current) + 1e-12
        )

    def line_search(
        self, params: CalibrationParams, group: str, key: Any, interval: Interval
    ) -> CalibrationParams:
        if interval.is_point:
            return params.replace(group, key, interval.lower)

        def objective(value: float) -> float:
            return self.evaluate(params.replace(group, key, float(value))).objective

        width = interval.upper - interval.lower
        xatol = self.opts.search_tol * max(width, 1e-9)
        found = optimize.minimize_scalar(
            objective,
            bounds=(interval.lower, interval.upper),
            method="bounded",
            options={"xatol": xatol, "maxiter": self.opts.search_maxiter},
        )
        return params.replace(group, key, interval.clamp(float(found.x)))


def calibrate(
    model: MarketModel,
    data: CalibrationData,
    bounds: CalibrationBounds | None = None,
    opts: CalibrationOptions | None = None,
) -> CalibrationResult:
    """Tune price anchors, elasticities and market power within bounds.

    Each sweep visits markets in a fixed order: the price anchor is searched
    when the market misses the consumption target, then the elasticity if it
    still does, then the market power of every trader short of its reference
    sales. A step is kept only if it lowers the objective without increasing the
    consumption misfit beyond the target. Stops when every market is within
    target, which may end a sweep early, or after ``max_sweeps`` sweeps.
    """
    opts = opts or CalibrationOptions()
    if data.adjusted_sales is None:
        adjustment = adjust_reference_sales(data, model)
        data = CalibrationData(
            data.consumption, data.price, data.elasticity, data.sales, adjustment.adjusted
        )
    bounds = bounds or CalibrationBounds.from_data(model, data)

    search = _Search(model, data, opts)
    params = initial_params(model, data, bounds, opts)
    current = search.evaluate(params)
    history = [current.objective]

    def within_target(metrics: CalibrationMetrics) -> bool:
        return metrics.status is SolveStatus.SOLVED and metrics.max_consumption_deviation <= opts.target

    def attempt(group: str, key: Any, interval: Interval) -> None:
        nonlocal params, current
        candidate = search.line_search(params, group, key, interval)
        result = search.evaluate(candidate)
        if search.accepts(current, result):
            params, current = candidate, result
            history.append(result.objective)

    markets = sorted(bounds.price)
    sweeps = 0
    while sweeps < opts.max_sweeps and not within_target(current):
        sweeps += 1
        before = current.objective
        for market in markets:
            if abs(current.consumption_deviation.get(market, 0.0)) > opts.target:
                attempt("price", market, bounds.price[market])
            if abs(current.consumption_deviation.get(market, 0.0)) > opts.target:
                attempt("elasticity", market, bounds.elasticity[market])
            for key in sorted(bounds.theta):
                if (key[1], key[2]) != market:
                    continue
                if key in current.shortfalls or abs(current.consumption_deviation.get(market, 0.0)) > opts.target:
                    attempt("theta", key, bounds.theta[key])
            if within_target(current):
                break
        logger.info(
            "Calibration sweep %d: objective %.6g, max consumption deviation %.4f",
            sweeps,
            current.objective,
            current.max_consumption_deviation,
        )
        if current.objective >= before:
            break

    converged = within_target(current)
    message = "target met" if converged else "consumption target not reached within bounds"
    if not converged:
        logger.warning(
            "Calibration stopped after %d sweeps: max deviation %.4f above target %.4f",
            sweeps,
            current.max_consumption_deviation,
            opts.target,
        )
    return CalibrationResult(
        params=params,
        metrics=current,
        bounds=bounds,
        converged=converged,
        sweeps=sweeps,
        evaluations=len(search.cache),
        history=tuple(history),
        message=message,
    )


def synthesize_calibration_data(
    model: MarketModel, opts: SolverOptions | None = None
) -> tuple[CalibrationData, CalibrationParams]:
    """Reference data generated from the model's own equilibrium.

    Returns the data and the parameters that reproduce it exactly: the demand
    curve through the equilibrium point and the model's market power.
    """
    solution = solve_model(model, opts).require_solved()
    consumption, price, elasticity = {}, {}, {}
    for node in model.consumer_nodes():
        for period in model.periods:
            market = (node.id, period.id)
            s = solution.consumption[market]
            if s <= FLOW_TOL:
                raise CalibrationDataError(f"No equilibrium consumption at {node.id}/{period.id}")
            consumption[market] = s
            price[market] = solution.price[market]
            elasticity[market] = model.demand_curve(*market).elasticity(s)

    sales = {key: value for key, value in solution.sales.items()}
    theta = {
        (trader.id, node, period.id): trader.theta_at(node, period.id)
        for trader in model.traders
        for node in sorted(trader.markets)
        for period in model.periods
    }
    data = CalibrationData(consumption, price, elasticity, sales)
    return data, CalibrationParams(consumption, price, elasticity, theta)

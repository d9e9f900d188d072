"""Assembly of the market model into a complementarity system and back.

Each variable has exactly one complementarity row. Rows are multiplied by the
period weight ``duration / 365`` and market-clearing rows by ``1 / -SLP`` as well,
so every coupling between a flow and a dual enters the matrix as a skew pair and
the only diagonal terms are non-negative. Scaling a row by a positive constant
leaves its complementarity condition unchanged.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple

import numpy as np

from .exceptions import AssemblyError, ModelValidationError, SolverFailedError
from .lcp import LcpProblem, LcpSolution, SolverOptions, SolveStatus, solve_lcp
from .model import (
    Arc,
    Diagnostic,
    MarketModel,
    ServiceSpec,
    Severity,
    errors_only,
    validate_model,
)
from .types import ArcKind, NodeId, PeriodId, ServiceId, ServiceKind, TraderId
from .validators import validate_vector

logger = logging.getLogger(__name__)


class Symbol(str, Enum):
    """Variable families of the equilibrium system."""

    PRODUCTION = "qP"
    INJECTION = "qI"
    EXTRACTION = "qX"
    PIPELINE = "qA"
    LNG = "qB"
    SALES = "qC"
    NODE_PRICE = "phiN"
    STORAGE_VALUE = "phiS"
    CONGESTION = "alpha"
    ANNUAL_CONGESTION = "alphaT"
    MARKET_PRICE = "lambda"


FLOW_SYMBOLS = frozenset(
    {
        Symbol.PRODUCTION,
        Symbol.INJECTION,
        Symbol.EXTRACTION,
        Symbol.PIPELINE,
        Symbol.LNG,
        Symbol.SALES,
    }
)

CONDITIONS = {
    Symbol.PRODUCTION: "production",
    Symbol.INJECTION: "injection",
    Symbol.EXTRACTION: "extraction",
    Symbol.PIPELINE: "pipeline",
    Symbol.LNG: "lng",
    Symbol.SALES: "sales",
    Symbol.NODE_PRICE: "node_balance",
    Symbol.STORAGE_VALUE: "storage_balance",
    Symbol.CONGESTION: "capacity",
    Symbol.ANNUAL_CONGESTION: "annual_capacity",
    Symbol.MARKET_PRICE: "market_clearing",
}


class VariableKey(NamedTuple):
    """Identity of one variable (and of the row it is complementary to)."""

    symbol: Symbol
    trader: TraderId | None = None
    node: NodeId | None = None
    target: NodeId | None = None
    period: PeriodId | None = None
    service: ServiceId | None = None

    def describe(self) -> str:
        parts = []
        if self.trader is not None:
            parts.append(self.trader)
        if self.service is not None:
            parts.append(self.service.label())
        elif self.target is not None:
            parts.append(f"{self.node}->{self.target}")
        elif self.node is not None:
            parts.append(self.node)
        if self.period is not None:
            parts.append(self.period)
        return f"{self.symbol.value}[{','.join(parts)}]"


class IndexMap:
    """Bidirectional map between variable identities and LCP positions."""

    def __init__(self, keys: Iterable[VariableKey]) -> None:
        self._keys = tuple(keys)
        self._positions: dict[VariableKey, int] = {}
        for position, key in enumerate(self._keys):
            if key in self._positions:
                raise AssemblyError(f"Duplicate variable identity {key.describe()}")
            self._positions[key] = position

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self) -> Iterator[VariableKey]:
        return iter(self._keys)

    def __contains__(self, key: object) -> bool:
        return key in self._positions

    @property
    def keys(self) -> tuple[VariableKey, ...]:
        return self._keys

    def index(self, key: VariableKey) -> int:
        try:
            return self._positions[key]
        except KeyError:
            raise AssemblyError(f"Unknown variable {key.describe()}") from None

    def get(self, key: VariableKey) -> int | None:
        return self._positions.get(key)

    def labels(self) -> tuple[str, ...]:
        return tuple(f"{CONDITIONS[k.symbol]}:{k.describe()}" for k in self._keys)

    def count(self, symbol: Symbol) -> int:
        return sum(1 for k in self._keys if k.symbol is symbol)

    def permuted(self, order: Sequence[int]) -> IndexMap:
        return IndexMap(self._keys[i] for i in order)


def flow_services(model: MarketModel, key: VariableKey) -> list[ServiceSpec]:
    """Service specs whose costs and capacities a flow variable uses."""
    kind_by_symbol = {
        Symbol.PRODUCTION: ServiceKind.PRODUCTION,
        Symbol.INJECTION: ServiceKind.INJECTION,
        Symbol.EXTRACTION: ServiceKind.EXTRACTION,
    }
    if key.symbol in kind_by_symbol:
        spec = model.node_service(kind_by_symbol[key.symbol], key.node or "")
        return [spec] if spec is not None else []
    if key.symbol is Symbol.PIPELINE:
        spec = model.service(ServiceId(ServiceKind.PIPELINE, key.node or "", key.target))
        return [spec] if spec is not None else []
    if key.symbol is Symbol.LNG:
        route = Arc(key.node or "", key.target or "", ArcKind.LNG_ROUTE)
        return list(model.chain_services(route))
    return []


def balance_terms(model: MarketModel, key: VariableKey) -> list[tuple[NodeId, float]]:
    """Node-balance coefficients of a flow: positive supplies the node, negative draws on it."""
    node = key.node or ""
    if key.symbol is Symbol.PRODUCTION:
        return [(node, 1.0 - flow_services(model, key)[0].loss)]
    if key.symbol is Symbol.EXTRACTION:
        return [(node, 1.0 - flow_services(model, key)[0].loss)]
    if key.symbol in (Symbol.INJECTION, Symbol.SALES):
        return [(node, -1.0)]
    if key.symbol is Symbol.PIPELINE:
        return [(node, -1.0), (key.target or "", 1.0 - flow_services(model, key)[0].loss)]
    if key.symbol is Symbol.LNG:
        route = Arc(node, key.target or "", ArcKind.LNG_ROUTE)
        return [(node, -1.0), (key.target or "", 1.0 - model.chain_loss(route))]
    return []


def storage_terms(model: MarketModel, key: VariableKey) -> list[tuple[NodeId, float]]:
    """Annual storage-balance coefficients: injections net of loss fill, extractions draw."""
    if key.symbol is Symbol.INJECTION:
        return [(key.node or "", 1.0 - flow_services(model, key)[0].loss)]
    if key.symbol is Symbol.EXTRACTION:
        return [(key.node or "", -1.0)]
    return []


def _enumerate_variables(model: MarketModel) -> list[VariableKey]:
    keys: list[VariableKey] = []
    for trader in model.traders:
        f = trader.id
        storage = model.trader_storage(trader)
        pipelines = model.trader_pipelines(trader)
        routes = model.trader_routes(trader)
        markets = [n.id for n in model.nodes if n.id in trader.markets]
        reach = [n.id for n in model.nodes if n.id in trader.nodes]
        for period in model.periods:
            t = period.id
            keys.append(VariableKey(Symbol.PRODUCTION, f, trader.source, period=t))
            for node in storage:
                keys.append(VariableKey(Symbol.INJECTION, f, node.id, period=t))
                keys.append(VariableKey(Symbol.EXTRACTION, f, node.id, period=t))
            for arc in pipelines:
                keys.append(VariableKey(Symbol.PIPELINE, f, arc.source, arc.target, t))
            for arc in routes:
                keys.append(VariableKey(Symbol.LNG, f, arc.source, arc.target, t))
            for node_id in markets:
                keys.append(VariableKey(Symbol.SALES, f, node_id, period=t))
            for node_id in reach:
                keys.append(VariableKey(Symbol.NODE_PRICE, f, node_id, period=t))
        for node in storage:
            keys.append(VariableKey(Symbol.STORAGE_VALUE, f, node.id))

    for sid, spec in model.services.items():
        for period in model.periods:
            if spec.cap_at(period.id) is not None:
                keys.append(VariableKey(Symbol.CONGESTION, period=period.id, service=sid))
    for sid, spec in model.services.items():
        if spec.cap_annual is not None:
            keys.append(VariableKey(Symbol.ANNUAL_CONGESTION, service=sid))

    for node in model.consumer_nodes():
        for period in model.periods:
            keys.append(VariableKey(Symbol.MARKET_PRICE, node=node.id, period=period.id))
    return keys


def assemble_lcp(model: MarketModel) -> tuple[LcpProblem, IndexMap]:
    """Build the complementarity system of ``model``.

    Raises:
        ModelValidationError: If validate_model reports any error.
        AssemblyError: If two variables share an identity.
    """
    errors = errors_only(validate_model(model))
    if errors:
        raise ModelValidationError(errors)

    index = IndexMap(_enumerate_variables(model))
    size = len(index)
    m = np.zeros((size, size))
    q = np.zeros(size)
    weights = {p.id: p.weight for p in model.periods}

    def couple(row: VariableKey, dual: VariableKey, coef: float) -> None:
        i, j = index.index(row), index.index(dual)
        m[i, j] += coef
        m[j, i] -= coef

    for key in index:
        if key.symbol not in FLOW_SYMBOLS:
            continue
        t = key.period or ""
        omega = weights[t]
        i = index.index(key)

        for spec in flow_services(model, key):
            q[i] += omega * spec.linc_at(t)
            alpha = VariableKey(Symbol.CONGESTION, period=t, service=spec.service)
            if alpha in index:
                couple(key, alpha, omega)
            alpha_annual = VariableKey(Symbol.ANNUAL_CONGESTION, service=spec.service)
            if alpha_annual in index:
                couple(key, alpha_annual, omega)

        for node, coef in balance_terms(model, key):
            couple(key, VariableKey(Symbol.NODE_PRICE, key.trader, node, period=t), -omega * coef)
        for node, coef in storage_terms(model, key):
            couple(key, VariableKey(Symbol.STORAGE_VALUE, key.trader, node), -omega * coef)

        if key.symbol is Symbol.PRODUCTION:
            m[i, i] += omega * flow_services(model, key)[0].quac_at(t)
        elif key.symbol is Symbol.SALES:
            curve = model.demand_curve(key.node or "", t)
            theta = model.trader(key.trader or "").theta_at(key.node or "", t)
            m[i, i] += omega * theta * -curve.slope
            couple(key, VariableKey(Symbol.MARKET_PRICE, node=key.node, period=t), -omega)

    for key in index:
        i = index.index(key)
        if key.symbol is Symbol.CONGESTION:
            spec = model.services[key.service]  # type: ignore[index]
            q[i] = weights[key.period or ""] * (spec.cap_at(key.period or "") or 0.0)
        elif key.symbol is Symbol.ANNUAL_CONGESTION:
            spec = model.services[key.service]  # type: ignore[index]
            q[i] = (spec.cap_annual or 0.0) / 365.0
        elif key.symbol is Symbol.MARKET_PRICE:
            curve = model.demand_curve(key.node or "", key.period or "")
            omega = weights[key.period or ""]
            m[i, i] += omega / -curve.slope
            q[i] = omega * curve.intercept / curve.slope

    logger.debug("Assembled %s: %d rows", model.name, size)
    return LcpProblem(m=m, q=q, labels=index.labels()), index


@dataclass(frozen=True)
class EquilibriumSolution:
    """Named flows and duals of a solved market.

    Flow keys are ``(trader, node, period)`` or ``(trader, from, to, period)``;
    congestion keys are ``(service, period)``. Consumption and throughput are
    recomputed from the flows.
    """

    production: dict[tuple[str, str, str], float]
    injection: dict[tuple[str, str, str], float]
    extraction: dict[tuple[str, str, str], float]
    pipeline_flow: dict[tuple[str, str, str, str], float]
    lng_flow: dict[tuple[str, str, str, str], float]
    sales: dict[tuple[str, str, str], float]
    node_price: dict[tuple[str, str, str], float]
    storage_value: dict[tuple[str, str], float]
    congestion: dict[tuple[ServiceId, str], float]
    annual_congestion: dict[ServiceId, float]
    price: dict[tuple[str, str], float]
    consumption: dict[tuple[str, str], float]
    throughput: dict[tuple[ServiceId, str], float]
    status: SolveStatus = SolveStatus.SOLVED
    lcp: LcpSolution | None = field(default=None, compare=False, repr=False)

    @property
    def solved(self) -> bool:
        return self.status is SolveStatus.SOLVED

    def require_solved(self) -> EquilibriumSolution:
        if not self.solved:
            detail = f": {self.lcp.message}" if self.lcp is not None and self.lcp.message else ""
            raise SolverFailedError(f"Equilibrium not solved ({self.status.value}){detail}")
        return self

    def flow_entries(self) -> Iterator[tuple[VariableKey, float]]:
        """All flow variables in a fixed order, with their values."""
        three = (
            (Symbol.PRODUCTION, self.production),
            (Symbol.INJECTION, self.injection),
            (Symbol.EXTRACTION, self.extraction),
            (Symbol.SALES, self.sales),
        )
        for symbol, bucket in three:
            for (f, n, t), value in sorted(bucket.items()):
                yield VariableKey(symbol, f, n, period=t), value
        for symbol, arcs in ((Symbol.PIPELINE, self.pipeline_flow), (Symbol.LNG, self.lng_flow)):
            for (f, n, m, t), value in sorted(arcs.items()):
                yield VariableKey(symbol, f, n, m, t), value

    def congestion_total(self, service: ServiceId, period: PeriodId) -> float:
        """Per-period plus annual congestion fee of a service."""
        return self.congestion.get((service, period), 0.0) + self.annual_congestion.get(service, 0.0)


def extract_solution(
    model: MarketModel,
    index_map: IndexMap,
    z: Any,
    status: SolveStatus = SolveStatus.SOLVED,
    lcp: LcpSolution | None = None,
) -> EquilibriumSolution:
    """Map an LCP vector back to named flows and duals."""
    values = validate_vector(z, len(index_map), "z")
    buckets: dict[Symbol, dict[Any, float]] = {symbol: {} for symbol in Symbol}

    for key, value in zip(index_map, values):
        bucket = buckets[key.symbol]
        if key.symbol in (Symbol.PIPELINE, Symbol.LNG):
            bucket[(key.trader, key.node, key.target, key.period)] = float(value)
        elif key.symbol is Symbol.STORAGE_VALUE:
            bucket[(key.trader, key.node)] = float(value)
        elif key.symbol is Symbol.CONGESTION:
            bucket[(key.service, key.period)] = float(value)
        elif key.symbol is Symbol.ANNUAL_CONGESTION:
            bucket[key.service] = float(value)
        elif key.symbol is Symbol.MARKET_PRICE:
            bucket[(key.node, key.period)] = float(value)
        else:
            bucket[(key.trader, key.node, key.period)] = float(value)

    sales = buckets[Symbol.SALES]
    consumption = {}
    for node in model.consumer_nodes():
        for period in model.periods:
            consumption[(node.id, period.id)] = sum(
                sales.get((trader.id, node.id, period.id), 0.0) for trader in model.traders
            )

    solution = EquilibriumSolution(
        production=buckets[Symbol.PRODUCTION],
        injection=buckets[Symbol.INJECTION],
        extraction=buckets[Symbol.EXTRACTION],
        pipeline_flow=buckets[Symbol.PIPELINE],
        lng_flow=buckets[Symbol.LNG],
        sales=sales,
        node_price=buckets[Symbol.NODE_PRICE],
        storage_value=buckets[Symbol.STORAGE_VALUE],
        congestion=buckets[Symbol.CONGESTION],
        annual_congestion=buckets[Symbol.ANNUAL_CONGESTION],
        price=buckets[Symbol.MARKET_PRICE],
        consumption=consumption,
        throughput={},
        status=status,
        lcp=lcp,
    )
    return dataclasses.replace(solution, throughput=_throughput(model, solution))


def _throughput(model: MarketModel, solution: EquilibriumSolution) -> dict[tuple[ServiceId, str], float]:
    totals: dict[tuple[ServiceId, str], float] = {
        (sid, p.id): 0.0 for sid in model.services for p in model.periods
    }
    for key, value in solution.flow_entries():
        for spec in flow_services(model, key):
            totals[(spec.service, key.period or "")] += value
    return totals


def solve_model(
    model: MarketModel, opts: SolverOptions | None = None, start: Any = None
) -> EquilibriumSolution:
    """Validate, assemble, solve and extract in one call.

    An unsolved system still yields a solution object whose ``status`` says so.
    """
    problem, index = assemble_lcp(model)
    result = solve_lcp(problem, opts, start)
    if not result.solved:
        logger.warning(
            "Model %s not solved: %s (worst row %s)", model.name, result.status.value, result.worst_label
        )
    else:
        logger.info("Model %s solved by %s in %d steps", model.name, result.method, result.iterations)
    return extract_solution(model, index, result.z, result.status, result)


def node_balance_slacks(
    model: MarketModel, solution: EquilibriumSolution
) -> dict[tuple[str, str, str], float]:
    """Supply minus withdrawals per trader, node and period (mcm/d)."""
    slacks: dict[tuple[str, str, str], float] = {}
    for trader in model.traders:
        for node in model.nodes:
            if node.id in trader.nodes:
                for period in model.periods:
                    slacks[(trader.id, node.id, period.id)] = 0.0
    for key, value in solution.flow_entries():
        for node, coef in balance_terms(model, key):
            slacks[(key.trader or "", node, key.period or "")] += coef * value
    return slacks


def storage_balance_slacks(
    model: MarketModel, solution: EquilibriumSolution
) -> dict[tuple[str, str], float]:
    """Loss-adjusted injected minus extracted volume per trader and site (mcm/y)."""
    durations = {p.id: p.duration for p in model.periods}
    slacks: dict[tuple[str, str], float] = defaultdict(float)
    for trader in model.traders:
        for node in model.trader_storage(trader):
            slacks[(trader.id, node.id)] = 0.0
    for key, value in solution.flow_entries():
        for node, coef in storage_terms(model, key):
            slacks[(key.trader or "", node)] += coef * value * durations[key.period or ""]
    return dict(slacks)


def reduced_cost(model: MarketModel, solution: EquilibriumSolution, key: VariableKey) -> float:
    """Marginal cost minus marginal value of one unit of a flow (k€/mcm)."""
    t = key.period or ""
    f = key.trader or ""
    total = 0.0
    for spec in flow_services(model, key):
        total += spec.linc_at(t) + solution.congestion_total(spec.service, t)
    for node, coef in balance_terms(model, key):
        total -= coef * solution.node_price.get((f, node, t), 0.0)
    for node, coef in storage_terms(model, key):
        total -= coef * solution.storage_value.get((f, node), 0.0)
    if key.symbol is Symbol.PRODUCTION:
        spec = flow_services(model, key)[0]
        total += spec.quac_at(t) * solution.production.get((f, key.node or "", t), 0.0)
    elif key.symbol is Symbol.SALES:
        node = key.node or ""
        curve = model.demand_curve(node, t)
        theta = model.trader(f).theta_at(node, t)
        total += -solution.price.get((node, t), 0.0) - theta * curve.slope * solution.sales.get(
            (f, node, t), 0.0
        )
    return total


_ARBITRAGE_CODES = {
    Symbol.PRODUCTION: "production_stationarity",
    Symbol.INJECTION: "storage_arbitrage",
    Symbol.EXTRACTION: "storage_arbitrage",
    Symbol.PIPELINE: "pipeline_arbitrage",
    Symbol.LNG: "lng_arbitrage",
    Symbol.SALES: "sales_stationarity",
}


def check_equilibrium(
    model: MarketModel, solution: EquilibriumSolution, tol: float = 1e-6
) -> list[Diagnostic]:
    """Check node balance, capacity, market clearing and no-arbitrage conditions.

    Tolerances are relative to the magnitude of the quantities involved, with a
    floor of one unit. An empty list means every condition holds.
    """
    found: list[Diagnostic] = []

    def fail(code: str, message: str, subject: str) -> None:
        found.append(Diagnostic(Severity.ERROR, code, message, subject))

    def bound(*scale: float) -> float:
        return tol * max((1.0, *(abs(s) for s in scale)))

    for key, value in solution.flow_entries():
        if value < -bound():
            fail("negative_flow", f"flow {value:.6g} is negative", key.describe())
        rc = reduced_cost(model, solution, key)
        limit = bound(rc, value)
        if rc < -limit or (value > limit and abs(rc) > limit):
            fail(_ARBITRAGE_CODES[key.symbol], f"reduced cost {rc:.6g} at flow {value:.6g}", key.describe())

    for (f, n, t), slack in node_balance_slacks(model, solution).items():
        phi = solution.node_price.get((f, n, t), 0.0)
        limit = bound(phi)
        if slack < -limit or (phi > limit and abs(slack) > limit):
            fail("node_balance", f"slack {slack:.6g} with node price {phi:.6g}", f"{f}/{n}/{t}")

    for (f, n), slack in storage_balance_slacks(model, solution).items():
        value = solution.storage_value.get((f, n), 0.0)
        limit = bound(value) * 365.0
        if slack < -limit or (value > bound() and abs(slack) > limit):
            fail("storage_balance", f"slack {slack:.6g} with storage value {value:.6g}", f"{f}/{n}")

    durations = {p.id: p.duration for p in model.periods}
    for sid, spec in model.services.items():
        annual = 0.0
        for period in model.periods:
            flow = solution.throughput.get((sid, period.id), 0.0)
            annual += flow * durations[period.id]
            cap = spec.cap_at(period.id)
            if cap is None:
                continue
            alpha = solution.congestion.get((sid, period.id), 0.0)
            limit = bound(cap)
            if flow > cap + limit:
                fail("capacity", f"throughput {flow:.6g} above capacity {cap:.6g}", f"{sid.label()}/{period.id}")
            if cap - flow > limit and alpha > bound(alpha):
                fail("congestion_slack", f"fee {alpha:.6g} on a slack capacity", f"{sid.label()}/{period.id}")
        if spec.cap_annual is not None:
            limit = bound(spec.cap_annual)
            if annual > spec.cap_annual + limit:
                fail("annual_capacity", f"annual throughput {annual:.6g} above {spec.cap_annual:.6g}", sid.label())

    for (n, t), s in solution.consumption.items():
        curve = model.demand_curve(n, t)
        lam = solution.price.get((n, t), 0.0)
        gap = lam - curve.price(s)
        limit = bound(lam, curve.intercept)
        if gap < -limit or (lam > limit and abs(gap) > limit):
            fail("market_clearing", f"price {lam:.6g} vs curve {curve.price(s):.6g}", f"{n}/{t}")

    return found

"""Welfare, concentration and price-composition analytics of a solved market.

Flows are in mcm/d and prices in k€/mcm, so per-day surpluses come out in k€/d;
period and annual totals are reported in M€.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, NamedTuple

import networkx as nx

from .equilibrium import EquilibriumSolution, Symbol, VariableKey, flow_services
from .exceptions import InvalidInputError, RegionMapError
from .model import Arc, Diagnostic, MarketModel, Severity
from .types import (
    FLOW_TOL,
    HHI_HIGHLY_CONCENTRATED,
    HHI_UNCONCENTRATED,
    ArcKind,
    Country,
    NodeId,
    PeriodId,
    Region,
    ServiceId,
    ServiceKind,
    TraderId,
)

logger = logging.getLogger(__name__)

PS_CONVENTION = "producer surplus excludes congestion rents; they are reported as infrastructure rents"
DOMESTIC = "domestic"


class MarketOutcome(NamedTuple):
    """A model together with its equilibrium."""

    model: MarketModel
    solution: EquilibriumSolution


@dataclass(frozen=True)
class PeriodSurplus:
    """Surplus in one period: a daily rate (k€/d) and the period total (M€)."""

    per_day: float
    total: float


def _period_surplus(per_day: float, duration: float) -> PeriodSurplus:
    return PeriodSurplus(per_day=per_day, total=per_day * duration / 1000.0)


def consumer_surplus(
    model: MarketModel, solution: EquilibriumSolution, node: NodeId, period: PeriodId
) -> PeriodSurplus:
    """Area under the inverse demand curve minus expenditure."""
    curve = model.demand_curve(node, period)
    s = solution.consumption.get((node, period), 0.0)
    lam = solution.price.get((node, period), 0.0)
    per_day = curve.intercept * s + 0.5 * curve.slope * s * s - lam * s
    return _period_surplus(per_day, model.period(period).duration)


def annual_consumer_surplus(model: MarketModel, solution: EquilibriumSolution, node: NodeId) -> float:
    """Consumer surplus of a node summed over the year (M€/y)."""
    return sum(consumer_surplus(model, solution, node, p.id).total for p in model.periods)


def _trader_flows(
    solution: EquilibriumSolution, trader: TraderId, period: PeriodId
) -> Iterable[tuple[VariableKey, float]]:
    for key, value in solution.flow_entries():
        if key.trader == trader and key.period == period:
            yield key, value


def producer_surplus(
    model: MarketModel, solution: EquilibriumSolution, trader: TraderId, period: PeriodId
) -> PeriodSurplus:
    """Sales revenue minus production cost, service charges and congestion fees paid.

    The trader and its producer count as one firm, so production scarcity rents
    stay inside the surplus while fees paid to other services do not.
    """
    per_day = 0.0
    for key, value in _trader_flows(solution, trader, period):
        if key.symbol is Symbol.SALES:
            per_day += solution.price.get((key.node or "", period), 0.0) * value
        elif key.symbol is Symbol.PRODUCTION:
            spec = flow_services(model, key)[0]
            per_day -= spec.linc_at(period) * value + 0.5 * spec.quac_at(period) * value * value
        else:
            for spec in flow_services(model, key):
                fee = spec.linc_at(period) + solution.congestion_total(spec.service, period)
                per_day -= fee * value
    return _period_surplus(per_day, model.period(period).duration)


def annual_producer_surplus(model: MarketModel, solution: EquilibriumSolution, trader: TraderId) -> float:
    """Producer surplus of a trader summed over the year (M€/y)."""
    return sum(producer_surplus(model, solution, trader, p.id).total for p in model.periods)


def infrastructure_rents(model: MarketModel, solution: EquilibriumSolution) -> dict[ServiceId, float]:
    """Congestion rents collected by each non-production service (M€/y)."""
    rents: dict[ServiceId, float] = {}
    for sid in model.services:
        if sid.kind is ServiceKind.PRODUCTION:
            continue
        total = 0.0
        for period in model.periods:
            flow = solution.throughput.get((sid, period.id), 0.0)
            total += solution.congestion_total(sid, period.id) * flow * period.duration / 1000.0
        rents[sid] = total
    return rents


def classify_hhi(hhi: float) -> str:
    if hhi < HHI_UNCONCENTRATED:
        return "unconcentrated"
    if hhi <= HHI_HIGHLY_CONCENTRATED:
        return "moderately concentrated"
    return "highly concentrated"


@dataclass(frozen=True)
class MarketConcentration:
    """Percentage market shares and their Herfindahl-Hirschman index."""

    scope: str
    shares: dict[str, float]
    hhi: float | None
    classification: str | None
    diagnostics: tuple[Diagnostic, ...] = ()


def herfindahl(volumes: Mapping[str, float], scope: str = "market") -> MarketConcentration:
    """Shares in percent of positive volumes and the sum of their squares."""
    active = {k: v for k, v in volumes.items() if v > FLOW_TOL}
    total = sum(active.values())
    if total <= 0.0:
        diagnostic = Diagnostic(Severity.WARNING, "undefined_hhi", "no sales in scope", scope)
        logger.warning("%s", diagnostic)
        return MarketConcentration(scope, {}, None, None, (diagnostic,))

    shares = {k: 100.0 * v / total for k, v in sorted(active.items())}
    hhi = sum(s * s for s in shares.values())
    return MarketConcentration(scope, shares, hhi, classify_hhi(hhi))


def market_shares_and_hhi(
    model: MarketModel,
    solution: EquilibriumSolution,
    node: NodeId | None = None,
    period: PeriodId | None = None,
    eu_aggregate: bool = False,
) -> MarketConcentration:
    """Market shares and HHI for one node or for all EU consumer nodes.

    Without a period the shares use annual volumes. In the EU aggregate,
    suppliers are grouped by the producer's country and gas sold in the country
    where it was produced falls in the ``domestic`` bucket.
    """
    if node is None and not eu_aggregate:
        raise InvalidInputError("either a node or eu_aggregate=True is required")

    if eu_aggregate:
        nodes = [n for n in model.consumer_nodes() if n.region.is_eu]
        scope = "EU"
    else:
        nodes = [model.node(node or "")]
        scope = node or ""
    periods = [model.period(period)] if period is not None else list(model.periods)
    if period is not None:
        scope = f"{scope}/{period}"

    volumes: dict[str, float] = defaultdict(float)
    for trader in model.traders:
        origin = model.trader_country(trader)
        for n in nodes:
            for p in periods:
                sold = solution.sales.get((trader.id, n.id, p.id), 0.0)
                weight = 1.0 if period is not None else p.duration
                if eu_aggregate:
                    bucket = DOMESTIC if origin == n.country else origin
                else:
                    bucket = trader.id
                volumes[bucket] += sold * weight
    return herfindahl(volumes, scope)


@dataclass(frozen=True)
class PriceComposition:
    """Per-unit split of a wholesale price (k€/mcm), volume-weighted across traders."""

    node: NodeId
    period: PeriodId
    price: float
    producer_cost: float = 0.0
    producer_profit: float = 0.0
    service_cost: float = 0.0
    service_profit: float = 0.0
    trader_profit: float = 0.0
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def total(self) -> float:
        return (
            self.producer_cost
            + self.producer_profit
            + self.service_cost
            + self.service_profit
            + self.trader_profit
        )


_COMPONENTS = ("producer_cost", "producer_profit", "service_cost", "service_profit")

# Graph states: ("node", node, period) for a trader's position, ("storage", node)
# for its stock at a storage site.
State = tuple[str, ...]


@dataclass
class _Inflow:
    volume: float
    cost: float = 0.0
    loss: float = 0.0
    producer_cost: float | None = None


def _state_value(solution: EquilibriumSolution, trader: TraderId, state: State) -> float:
    if state[0] == "storage":
        return solution.storage_value.get((trader, state[1]), 0.0)
    return solution.node_price.get((trader, state[1], state[2]), 0.0)


def _flow_graph(
    model: MarketModel, solution: EquilibriumSolution, trader: TraderId
) -> tuple[nx.DiGraph, dict[State, list[_Inflow]]]:
    """Positive-flow graph of one trader's supply chain; production enters as sources."""
    graph = nx.DiGraph()
    production: dict[State, list[_Inflow]] = defaultdict(list)
    durations = {p.id: p.duration for p in model.periods}

    for key, value in solution.flow_entries():
        if key.trader != trader or value <= FLOW_TOL:
            continue
        t = key.period or ""
        here: State = ("node", key.node or "", t)
        specs = flow_services(model, key)
        cost = sum(spec.linc_at(t) for spec in specs)
        if key.symbol is Symbol.PRODUCTION:
            spec = specs[0]
            production[here].append(
                _Inflow(
                    volume=(1.0 - spec.loss) * value,
                    producer_cost=spec.linc_at(t) + 0.5 * spec.quac_at(t) * value,
                )
            )
        elif key.symbol in (Symbol.PIPELINE, Symbol.LNG):
            if key.symbol is Symbol.LNG:
                loss = model.chain_loss(Arc(key.node or "", key.target or "", ArcKind.LNG_ROUTE))
            else:
                loss = specs[0].loss
            there: State = ("node", key.target or "", t)
            _add_edge(graph, here, there, _Inflow((1.0 - loss) * value, cost, loss))
        elif key.symbol is Symbol.INJECTION:
            loss = specs[0].loss
            stock: State = ("storage", key.node or "")
            _add_edge(graph, here, stock, _Inflow((1.0 - loss) * value * durations[t], cost, loss))
        elif key.symbol is Symbol.EXTRACTION:
            loss = specs[0].loss
            stock = ("storage", key.node or "")
            _add_edge(graph, stock, here, _Inflow((1.0 - loss) * value, cost, loss))
    return graph, production


def _add_edge(graph: nx.DiGraph, source: State, target: State, inflow: _Inflow) -> None:
    if graph.has_edge(source, target):
        edge = graph.edges[source, target]["inflow"]
        total = edge.volume + inflow.volume
        edge.cost = (edge.cost * edge.volume + inflow.cost * inflow.volume) / total
        edge.loss = (edge.loss * edge.volume + inflow.loss * inflow.volume) / total
        edge.volume = total
    else:
        graph.add_edge(source, target, inflow=inflow)


def _break_cycles(graph: nx.DiGraph, trader: TraderId) -> list[Diagnostic]:
    found = []
    while True:
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return found
        u, v = min(cycle, key=lambda e: graph.edges[e[0], e[1]]["inflow"].volume)[:2]
        graph.remove_edge(u, v)
        found.append(
            Diagnostic(
                Severity.WARNING,
                "cyclic_flow",
                f"dropped edge {'/'.join(u)} -> {'/'.join(v)} to split a flow cycle",
                trader,
            )
        )


def _decompose_trader(
    model: MarketModel, solution: EquilibriumSolution, trader: TraderId, target: State
) -> tuple[dict[str, float], list[Diagnostic]]:
    """Split the trader's value at ``target`` into producer and service parts."""
    graph, production = _flow_graph(model, solution, trader)
    graph.add_nodes_from(production)
    graph.add_node(target)
    diagnostics = _break_cycles(graph, trader)

    parts: dict[State, dict[str, float]] = {}
    for state in nx.topological_sort(graph):
        value = _state_value(solution, trader, state)
        totals = dict.fromkeys(_COMPONENTS, 0.0)
        weight_sum = 0.0

        for inflow in production.get(state, []):
            cost = inflow.producer_cost or 0.0
            totals["producer_cost"] += inflow.volume * cost
            totals["producer_profit"] += inflow.volume * (value - cost)
            weight_sum += inflow.volume

        for upstream in graph.predecessors(state):
            inflow = graph.edges[upstream, state]["inflow"]
            before = parts[upstream]
            service_cost = inflow.cost + inflow.loss * value
            service_profit = value - _state_value(solution, trader, upstream) - service_cost
            totals["producer_cost"] += inflow.volume * before["producer_cost"]
            totals["producer_profit"] += inflow.volume * before["producer_profit"]
            totals["service_cost"] += inflow.volume * (before["service_cost"] + service_cost)
            totals["service_profit"] += inflow.volume * (before["service_profit"] + service_profit)
            weight_sum += inflow.volume

        if weight_sum > 0.0:
            parts[state] = {k: v / weight_sum for k, v in totals.items()}
        else:
            parts[state] = {**dict.fromkeys(_COMPONENTS, 0.0), "producer_profit": value}
            if state == target and value > FLOW_TOL:
                diagnostics.append(
                    Diagnostic(
                        Severity.WARNING,
                        "no_inflow",
                        f"value {value:.6g} at {'/'.join(state)} has no supplying flow",
                        trader,
                    )
                )
    return parts[target], diagnostics


def price_decomposition(
    model: MarketModel, solution: EquilibriumSolution, node: NodeId, period: PeriodId
) -> PriceComposition:
    """Split the price at a consumer node along each supplying trader's chain.

    Trader profit is the gap between price and the trader's own value at the
    node; that value is traced back through pipelines, LNG routes and storage to
    production, weighting parallel inflows by arriving volume.
    """
    lam = solution.price.get((node, period), 0.0)
    totals = dict.fromkeys((*_COMPONENTS, "trader_profit"), 0.0)
    volume = 0.0
    diagnostics: list[Diagnostic] = []

    for trader in model.traders:
        sold = solution.sales.get((trader.id, node, period), 0.0)
        if sold <= FLOW_TOL:
            continue
        target: State = ("node", node, period)
        parts, found = _decompose_trader(model, solution, trader.id, target)
        diagnostics.extend(found)
        totals["trader_profit"] += sold * (lam - _state_value(solution, trader.id, target))
        for name in _COMPONENTS:
            totals[name] += sold * parts[name]
        volume += sold

    if volume <= 0.0:
        diagnostics.append(
            Diagnostic(Severity.WARNING, "no_consumption", "nothing sold at this node", f"{node}/{period}")
        )
        return PriceComposition(node, period, lam, diagnostics=tuple(diagnostics))

    shares = {k: v / volume for k, v in totals.items()}
    return PriceComposition(node, period, lam, diagnostics=tuple(diagnostics), **shares)


def region_map_from_model(model: MarketModel) -> dict[Country, Region]:
    """Country to region, as tagged on the model's nodes."""
    return {node.country: node.region for node in model.nodes}


@dataclass(frozen=True)
class WelfareSummary:
    """Surplus levels or deltas by country with EU and total aggregates (M€/y).

    ``price`` is the consumption-weighted annual price and ``consumption`` the
    annual average daily consumption of each consumer country.
    """

    cs: dict[Country, float]
    ps: dict[Country, float]
    ps_by_trader: dict[TraderId, float]
    price: dict[Country, float]
    consumption: dict[Country, float]
    eu_countries: frozenset[Country]
    rents: float
    is_delta: bool = False
    notes: tuple[str, ...] = (PS_CONVENTION,)

    @property
    def cs_eu(self) -> float:
        return sum(v for c, v in self.cs.items() if c in self.eu_countries)

    @property
    def ps_eu(self) -> float:
        return sum(v for c, v in self.ps.items() if c in self.eu_countries)

    @property
    def ps_total(self) -> float:
        return sum(self.ps.values())

    @property
    def sw_eu(self) -> float:
        return self.cs_eu + self.ps_eu

    @property
    def sw_total(self) -> float:
        return self.cs_eu + self.ps_total

    @property
    def cs_abs_sum(self) -> float:
        return sum(abs(v) for c, v in self.cs.items() if c in self.eu_countries)

    @property
    def sw_eu_abs_sum(self) -> float:
        return self.cs_abs_sum + sum(abs(v) for c, v in self.ps.items() if c in self.eu_countries)

    @property
    def sw_abs_sum(self) -> float:
        return self.cs_abs_sum + sum(abs(v) for v in self.ps.values())

    def aggregates(self) -> dict[str, float]:
        return {
            "dCS": self.cs_eu,
            "dPS_EU": self.ps_eu,
            "dSW_EU": self.sw_eu,
            "dPS": self.ps_total,
            "dSW": self.sw_total,
            "dCS_abs_sum": self.cs_abs_sum,
            "dSW_EU_abs_sum": self.sw_eu_abs_sum,
            "dSW_tot_abs_sum": self.sw_abs_sum,
        }


def _levels(outcome: MarketOutcome, regions: Mapping[Country, Region]) -> WelfareSummary:
    model, solution = outcome
    cs: dict[Country, float] = defaultdict(float)
    volume: dict[Country, float] = defaultdict(float)
    spend: dict[Country, float] = defaultdict(float)
    prices: dict[Country, list[float]] = defaultdict(list)

    for node in model.consumer_nodes():
        cs[node.country] += annual_consumer_surplus(model, solution, node.id)
        for period in model.periods:
            s = solution.consumption.get((node.id, period.id), 0.0)
            lam = solution.price.get((node.id, period.id), 0.0)
            volume[node.country] += s * period.duration
            spend[node.country] += lam * s * period.duration
            prices[node.country].append(lam)

    price = {
        c: spend[c] / volume[c] if volume[c] > 0.0 else sum(prices[c]) / len(prices[c])
        for c in prices
    }
    consumption = {c: volume[c] / 365.0 for c in prices}

    ps: dict[Country, float] = defaultdict(float)
    ps_by_trader = {}
    for trader in model.traders:
        country = model.trader_country(trader)
        if country not in regions:
            raise RegionMapError(f"Region map has no entry for {country} (trader {trader.id})")
        value = annual_producer_surplus(model, solution, trader.id)
        ps_by_trader[trader.id] = value
        ps[country] += value

    eu = frozenset(c for c, r in regions.items() if Region(r).is_eu)
    return WelfareSummary(
        cs=dict(cs),
        ps=dict(ps),
        ps_by_trader=ps_by_trader,
        price=price,
        consumption=consumption,
        eu_countries=eu,
        rents=sum(infrastructure_rents(model, solution).values()),
    )


def _subtract(a: Mapping[Any, float], b: Mapping[Any, float]) -> dict[Any, float]:
    keys = list(a) + [k for k in b if k not in a]
    return {k: a.get(k, 0.0) - b.get(k, 0.0) for k in keys}


def welfare_summary(
    result: MarketOutcome,
    reference: MarketOutcome | None = None,
    region_map: Mapping[Country, Region] | None = None,
) -> WelfareSummary:
    """Welfare levels of ``result``, or its deltas against ``reference``.

    Raises:
        RegionMapError: If a trader's country is missing from the region map.
    """
    regions = dict(region_map) if region_map is not None else region_map_from_model(result.model)
    current = _levels(result, regions)
    if reference is None:
        return current

    base = _levels(reference, regions)
    return WelfareSummary(
        cs=_subtract(current.cs, base.cs),
        ps=_subtract(current.ps, base.ps),
        ps_by_trader=_subtract(current.ps_by_trader, base.ps_by_trader),
        price=_subtract(current.price, base.price),
        consumption=_subtract(current.consumption, base.consumption),
        eu_countries=current.eu_countries,
        rents=current.rents - base.rents,
        is_delta=True,
    )


@dataclass(frozen=True)
class SurplusTable:
    """Total welfare split used to cross-check the surplus definitions (M€/y)."""

    gross_benefit: float
    cost: float
    consumer: float
    producer: float
    rents: float


def surplus_table(model: MarketModel, solution: EquilibriumSolution) -> SurplusTable:
    """Gross consumer benefit and resource cost next to the surplus buckets.

    Gross benefit minus cost equals consumer plus producer surplus plus rents.
    """
    benefit = 0.0
    for node in model.consumer_nodes():
        for period in model.periods:
            curve = model.demand_curve(node.id, period.id)
            s = solution.consumption.get((node.id, period.id), 0.0)
            benefit += (curve.intercept * s + 0.5 * curve.slope * s * s) * period.duration / 1000.0

    cost = 0.0
    durations = {p.id: p.duration for p in model.periods}
    for key, value in solution.flow_entries():
        t = key.period or ""
        for spec in flow_services(model, key):
            unit = spec.linc_at(t)
            if spec.kind is ServiceKind.PRODUCTION:
                unit += 0.5 * spec.quac_at(t) * value
            cost += unit * value * durations[t] / 1000.0

    consumer = sum(annual_consumer_surplus(model, solution, n.id) for n in model.consumer_nodes())
    producer = sum(annual_producer_surplus(model, solution, t.id) for t in model.traders)
    rents = sum(infrastructure_rents(model, solution).values())
    return SurplusTable(benefit, cost, consumer, producer, rents)

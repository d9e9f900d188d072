"""Gas market network: periods, nodes, arcs, services, traders and demand."""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .exceptions import InvalidElasticityError, InvalidInputError
from .types import (
    DAYS_PER_YEAR,
    ELASTICITY_MAX,
    ELASTICITY_MIN,
    PERIOD_TOTAL_SLACK,
    THETA_MAX,
    THETA_MIN,
    ArcId,
    ArcKind,
    Country,
    NodeId,
    PeriodId,
    Region,
    ServiceId,
    ServiceKind,
    TraderId,
)
from .validators import (
    validate_identifier,
    validate_optional_real,
    validate_real,
    validate_real_mapping,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Period:
    """A season of the model year; durations are in days."""

    id: PeriodId
    duration: float

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "id", validate_identifier(self.id, "period id"))
        object.__setattr__(self, "duration", validate_real(self.duration, "period duration"))

    @property
    def weight(self) -> float:
        """Share of the year covered by this period."""
        return self.duration / DAYS_PER_YEAR


@dataclass(frozen=True)
class Node:
    """A location of the network with its role flags."""

    id: NodeId
    country: Country
    region: Region
    has_producer: bool = False
    has_consumer: bool = False
    has_storage: bool = False
    has_liquefaction: bool = False
    has_regas: bool = False

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "id", validate_identifier(self.id, "node id"))
        object.__setattr__(self, "country", validate_identifier(self.country, "country"))
        try:
            object.__setattr__(self, "region", Region(self.region))
        except ValueError:
            raise InvalidInputError(f"Unknown region {self.region!r} for node {self.id}") from None


@dataclass(frozen=True)
class Arc:
    """A directed pipeline or LNG shipping route."""

    source: NodeId
    target: NodeId
    kind: ArcKind = ArcKind.PIPELINE

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "source", validate_identifier(self.source, "arc source"))
        object.__setattr__(self, "target", validate_identifier(self.target, "arc target"))
        try:
            object.__setattr__(self, "kind", ArcKind(self.kind))
        except ValueError:
            raise InvalidInputError(f"Unknown arc kind {self.kind!r}") from None

    @property
    def id(self) -> ArcId:
        return ArcId(self.source, self.target, self.kind)

    @property
    def service(self) -> ServiceId:
        """The service that moves gas along this arc."""
        kind = ServiceKind.PIPELINE if self.kind is ArcKind.PIPELINE else ServiceKind.SHIPPING
        return ServiceId(kind, self.source, self.target)


@dataclass(frozen=True)
class ServiceSpec:
    """Costs, loss and capacities of one service provider.

    ``linc`` and ``quac`` are per period in k€/mcm; a period missing from
    ``cap_per_period`` has no capacity row. ``cap_annual`` is in mcm/y.
    """

    service: ServiceId
    linc: Mapping[PeriodId, float]
    quac: Mapping[PeriodId, float] = field(default_factory=dict)
    loss: float = 0.0
    cap_per_period: Mapping[PeriodId, float] = field(default_factory=dict)
    cap_annual: float | None = None

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        service = self.service
        if not isinstance(service, ServiceId):
            raise InvalidInputError(f"service must be a ServiceId, got {type(service).__name__}")
        label = service.label()
        object.__setattr__(self, "linc", validate_real_mapping(self.linc, f"{label} linc"))
        object.__setattr__(self, "quac", validate_real_mapping(self.quac, f"{label} quac"))
        object.__setattr__(self, "loss", validate_real(self.loss, f"{label} loss"))
        object.__setattr__(
            self, "cap_per_period", validate_real_mapping(self.cap_per_period, f"{label} cap")
        )
        object.__setattr__(
            self, "cap_annual", validate_optional_real(self.cap_annual, f"{label} annual cap")
        )

    @property
    def kind(self) -> ServiceKind:
        return self.service.kind

    def linc_at(self, period: PeriodId) -> float:
        return self.linc.get(period, 0.0)

    def quac_at(self, period: PeriodId) -> float:
        return self.quac.get(period, 0.0)

    def cap_at(self, period: PeriodId) -> float | None:
        return self.cap_per_period.get(period)


@dataclass(frozen=True)
class DemandCurve:
    """Affine inverse demand ``price = intercept + slope * consumption``."""

    intercept: float
    slope: float
    s_ref: float | None = None
    pi_ref: float | None = None
    eta_ref: float | None = None

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "intercept", validate_real(self.intercept, "intercept"))
        object.__setattr__(self, "slope", validate_real(self.slope, "slope"))
        object.__setattr__(self, "s_ref", validate_optional_real(self.s_ref, "sC*"))
        object.__setattr__(self, "pi_ref", validate_optional_real(self.pi_ref, "piC*"))
        object.__setattr__(self, "eta_ref", validate_optional_real(self.eta_ref, "etaC*"))

    @classmethod
    def from_anchors(cls, consumption: float, price: float, elasticity: float) -> DemandCurve:
        """Build the curve through ``(consumption, price)`` with the given elasticity."""
        intercept, slope = demand_curve_from_calibration(consumption, price, elasticity)
        return cls(intercept, slope, consumption, price, elasticity)

    def price(self, consumption: float) -> float:
        return self.intercept + self.slope * consumption

    def quantity(self, price: float) -> float:
        """Consumption demanded at ``price`` (zero above the choke price)."""
        return max(0.0, (price - self.intercept) / self.slope)

    def elasticity(self, consumption: float) -> float:
        """Point price elasticity at ``consumption``."""
        return self.price(consumption) / (self.slope * consumption)


@dataclass(frozen=True)
class Trader:
    """A supplier's trading arm.

    ``arcs`` restricts which arcs the trader may use; None means every arc
    whose endpoints are both reachable. ``theta`` maps (market, period) to the
    conjectural-variations parameter; missing entries are price-taking.
    """

    id: TraderId
    source: NodeId
    nodes: frozenset[NodeId]
    markets: frozenset[NodeId]
    arcs: frozenset[ArcId] | None = None
    theta: Mapping[tuple[NodeId, PeriodId], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "id", validate_identifier(self.id, "trader id"))
        object.__setattr__(self, "source", validate_identifier(self.source, "trader source"))
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "markets", frozenset(self.markets))
        if self.arcs is not None:
            object.__setattr__(self, "arcs", frozenset(ArcId(*a) for a in self.arcs))
        object.__setattr__(self, "theta", validate_real_mapping(self.theta, f"{self.id} theta"))

    def theta_at(self, node: NodeId, period: PeriodId) -> float:
        return self.theta.get((node, period), 0.0)

    def may_use(self, arc: Arc) -> bool:
        """Whether the trader's arc set and reach admit ``arc``."""
        if arc.source not in self.nodes or arc.target not in self.nodes:
            return False
        return self.arcs is None or arc.id in self.arcs


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One finding of a validation or analysis pass."""

    severity: Severity
    code: str
    message: str
    subject: str | None = None

    def __str__(self) -> str:
        where = f" ({self.subject})" if self.subject else ""
        return f"[{self.severity.value}] {self.code}{where}: {self.message}"

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR


@dataclass(frozen=True)
class MarketModel:
    """The full network. Instances are never mutated; use the ``with_*`` helpers."""

    periods: tuple[Period, ...]
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    services: Mapping[ServiceId, ServiceSpec]
    traders: tuple[Trader, ...]
    demand: Mapping[tuple[NodeId, PeriodId], DemandCurve]
    name: str = "model"

    def __post_init__(self) -> None:
        """Copy containers so callers cannot mutate the model."""
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "services", dict(self.services))
        object.__setattr__(self, "traders", tuple(self.traders))
        object.__setattr__(self, "demand", dict(self.demand))
        object.__setattr__(self, "name", validate_identifier(self.name, "model name"))

    # -- lookups -----------------------------------------------------------

    def period(self, period_id: PeriodId) -> Period:
        for period in self.periods:
            if period.id == period_id:
                return period
        raise KeyError(period_id)

    def node(self, node_id: NodeId) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def trader(self, trader_id: TraderId) -> Trader:
        for trader in self.traders:
            if trader.id == trader_id:
                return trader
        raise KeyError(trader_id)

    def has_node(self, node_id: NodeId) -> bool:
        return any(node.id == node_id for node in self.nodes)

    def service(self, service: ServiceId) -> ServiceSpec | None:
        return self.services.get(service)

    def node_service(self, kind: ServiceKind, node: NodeId) -> ServiceSpec | None:
        return self.services.get(ServiceId(kind, node))

    def demand_curve(self, node: NodeId, period: PeriodId) -> DemandCurve:
        return self.demand[(node, period)]

    def consumer_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.has_consumer]

    def storage_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.has_storage]

    def pipelines(self) -> list[Arc]:
        return [a for a in self.arcs if a.kind is ArcKind.PIPELINE]

    def lng_routes(self) -> list[Arc]:
        return [a for a in self.arcs if a.kind is ArcKind.LNG_ROUTE]

    def trader_country(self, trader: Trader) -> Country:
        """Country of the trader's source node, where its producer sits."""
        return self.node(trader.source).country

    def trader_storage(self, trader: Trader) -> list[Node]:
        return [n for n in self.storage_nodes() if n.id in trader.nodes]

    def trader_pipelines(self, trader: Trader) -> list[Arc]:
        return [a for a in self.pipelines() if trader.may_use(a)]

    def trader_routes(self, trader: Trader) -> list[Arc]:
        """LNG routes the trader can ship on: liquefaction, shipping and regas all present."""
        routes = []
        for arc in self.lng_routes():
            if not trader.may_use(arc):
                continue
            if (
                self.node_service(ServiceKind.LIQUEFACTION, arc.source) is None
                or self.node_service(ServiceKind.REGASIFICATION, arc.target) is None
                or self.service(arc.service) is None
            ):
                continue
            routes.append(arc)
        return routes

    def chain_services(self, route: Arc) -> tuple[ServiceSpec, ServiceSpec, ServiceSpec]:
        """Liquefaction, shipping and regasification specs along an LNG route."""
        liq = self.node_service(ServiceKind.LIQUEFACTION, route.source)
        ship = self.service(route.service)
        regas = self.node_service(ServiceKind.REGASIFICATION, route.target)
        if liq is None or ship is None or regas is None:
            raise KeyError(route.id)
        return liq, ship, regas

    def chain_loss(self, route: Arc) -> float:
        liq, ship, regas = self.chain_services(route)
        return 1.0 - (1.0 - liq.loss) * (1.0 - ship.loss) * (1.0 - regas.loss)

    # -- copy-on-write ------------------------------------------------------

    def replace(self, **changes: Any) -> MarketModel:
        return dataclasses.replace(self, **changes)

    def with_services(self, specs: Iterable[ServiceSpec]) -> MarketModel:
        """Return a copy with the given specs added or replaced."""
        services = dict(self.services)
        for spec in specs:
            services[spec.service] = spec
        return self.replace(services=services)

    def with_demand(self, curves: Mapping[tuple[NodeId, PeriodId], DemandCurve]) -> MarketModel:
        demand = dict(self.demand)
        demand.update(curves)
        return self.replace(demand=demand)

    def with_traders(self, traders: Iterable[Trader]) -> MarketModel:
        """Return a copy with traders replaced by id, keeping order."""
        by_id = {t.id: t for t in traders}
        updated = tuple(by_id.pop(t.id, t) for t in self.traders)
        return self.replace(traders=updated + tuple(by_id.values()))

    def with_arcs(self, arcs: Iterable[Arc]) -> MarketModel:
        known = {a.id for a in self.arcs}
        extra = tuple(a for a in arcs if a.id not in known)
        return self.replace(arcs=self.arcs + extra)

    def with_nodes(self, nodes: Iterable[Node]) -> MarketModel:
        """Return a copy with nodes replaced by id, keeping order."""
        by_id = {n.id: n for n in nodes}
        updated = tuple(by_id.pop(n.id, n) for n in self.nodes)
        return self.replace(nodes=updated + tuple(by_id.values()))


def demand_curve_from_calibration(
    consumption: float, price: float, elasticity: float
) -> tuple[float, float]:
    """Intercept and slope of the affine curve through an anchor point.

    ``INT = (1 - 1/eta) * pi`` and ``SLP = pi / (s * eta)``. A zero consumption or
    elasticity raises ZeroDivisionError.
    """
    consumption = validate_real(consumption, "sC*")
    price = validate_real(price, "piC*")
    elasticity = validate_real(elasticity, "etaC*")

    if elasticity > 0.0:
        raise InvalidElasticityError(f"Price elasticity must be negative, got {elasticity}")
    if consumption < 0.0:
        raise InvalidInputError(f"Reference consumption must be positive, got {consumption}")
    if price <= 0.0:
        raise InvalidInputError(f"Reference price must be positive, got {price}")

    intercept = (1.0 - 1.0 / elasticity) * price
    slope = price / (consumption * elasticity)
    return intercept, slope


def _error(code: str, message: str, subject: str | None = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, subject)


def _warning(code: str, message: str, subject: str | None = None) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, subject)


def _duplicates(ids: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    dupes = []
    for item in ids:
        if item in seen:
            dupes.append(item)
        seen.add(item)
    return dupes


_NODE_FLAGS = {
    ServiceKind.PRODUCTION: "has_producer",
    ServiceKind.INJECTION: "has_storage",
    ServiceKind.EXTRACTION: "has_storage",
    ServiceKind.LIQUEFACTION: "has_liquefaction",
    ServiceKind.REGASIFICATION: "has_regas",
}


def _check_periods(model: MarketModel) -> list[Diagnostic]:
    found = []
    if not model.periods:
        found.append(_error("no_periods", "model has no periods"))
        return found
    for dup in _duplicates(p.id for p in model.periods):
        found.append(_error("duplicate_period", "period id is not unique", dup))
    for period in model.periods:
        if period.duration <= 0.0:
            found.append(_error("period_duration", "duration must be positive", period.id))
    total = sum(p.duration for p in model.periods)
    if abs(total - DAYS_PER_YEAR) > PERIOD_TOTAL_SLACK:
        found.append(
            _error("period_total", f"durations sum to {total:g} days, expected {DAYS_PER_YEAR:g}")
        )
    return found


def _check_nodes(model: MarketModel) -> list[Diagnostic]:
    found = []
    for dup in _duplicates(n.id for n in model.nodes):
        found.append(_error("duplicate_node", "node id is not unique", dup))

    for node in model.nodes:
        for kind, flag in _NODE_FLAGS.items():
            has_flag = getattr(node, flag)
            has_spec = model.node_service(kind, node.id) is not None
            if has_flag and not has_spec:
                found.append(
                    _error("missing_service", f"{flag} is set but no {kind.value} spec", node.id)
                )
            if has_spec and not has_flag:
                found.append(
                    _error("orphan_service", f"{kind.value} spec on a node without {flag}", node.id)
                )
        if node.has_consumer:
            for period in model.periods:
                if (node.id, period.id) not in model.demand:
                    found.append(
                        _error(
                            "missing_demand",
                            f"consumer node has no demand curve for period {period.id}",
                            node.id,
                        )
                    )
    return found


def _check_arcs(model: MarketModel) -> list[Diagnostic]:
    found = []
    seen: set[ArcId] = set()
    for arc in model.arcs:
        subject = arc.service.label()
        if arc.source == arc.target:
            found.append(_error("self_loop", "arc must connect two different nodes", subject))
        for end in (arc.source, arc.target):
            if not model.has_node(end):
                found.append(_error("unknown_node", f"arc endpoint {end} does not exist", subject))
        if arc.id in seen:
            found.append(_error("duplicate_arc", "arc is listed twice", subject))
        seen.add(arc.id)
        if model.service(arc.service) is None:
            found.append(_error("missing_service", "arc has no service spec", subject))
        if arc.kind is ArcKind.LNG_ROUTE and model.has_node(arc.source) and model.has_node(arc.target):
            if not model.node(arc.source).has_liquefaction:
                found.append(_error("lng_origin", "LNG route needs liquefaction at origin", subject))
            if not model.node(arc.target).has_regas:
                found.append(_error("lng_destination", "LNG route needs regas at destination", subject))
    return found


def _check_services(model: MarketModel) -> list[Diagnostic]:
    found = []
    arc_services = {a.service for a in model.arcs}
    period_ids = [p.id for p in model.periods]
    for sid, spec in model.services.items():
        subject = sid.label()
        if spec.service != sid:
            found.append(_error("service_key", "spec is filed under another service id", subject))
        if sid.target is None:
            if not model.has_node(sid.node):
                found.append(_error("unknown_node", f"service node {sid.node} does not exist", subject))
        elif sid not in arc_services:
            found.append(_error("unknown_arc", "service refers to an arc that does not exist", subject))

        for pid in period_ids:
            if pid not in spec.linc:
                found.append(_error("missing_cost", f"no linear cost for period {pid}", subject))
        for pid, value in spec.linc.items():
            if value < 0.0:
                found.append(_error("negative_cost", f"linear cost {value:g} in {pid}", subject))
        for pid, value in spec.quac.items():
            if value < 0.0:
                found.append(_error("negative_cost", f"quadratic cost {value:g} in {pid}", subject))
            if value != 0.0 and sid.kind is not ServiceKind.PRODUCTION:
                found.append(
                    _error("quadratic_cost", "only producers carry a quadratic cost term", subject)
                )
        if not 0.0 <= spec.loss < 1.0:
            found.append(_error("loss_range", f"loss {spec.loss:g} outside [0, 1)", subject))
        elif spec.loss > 0.0 and sid.kind in (ServiceKind.PIPELINE, ServiceKind.REGASIFICATION):
            found.append(
                _warning("nonzero_loss", f"loss {spec.loss:g} where zero loss is expected", subject)
            )
        for pid, value in spec.cap_per_period.items():
            if pid not in period_ids:
                found.append(_error("unknown_period", f"capacity for unknown period {pid}", subject))
            if value < 0.0:
                found.append(_error("negative_capacity", f"capacity {value:g} in {pid}", subject))
        if spec.cap_annual is not None and spec.cap_annual < 0.0:
            found.append(_error("negative_capacity", f"annual capacity {spec.cap_annual:g}", subject))
    return found


def _check_demand(model: MarketModel) -> list[Diagnostic]:
    found = []
    period_ids = {p.id for p in model.periods}
    for (node_id, period_id), curve in model.demand.items():
        subject = f"{node_id}/{period_id}"
        if not model.has_node(node_id) or not model.node(node_id).has_consumer:
            found.append(_error("demand_node", "demand curve on a non-consumer node", subject))
        if period_id not in period_ids:
            found.append(_error("unknown_period", "demand curve for unknown period", subject))
        if curve.slope >= 0.0:
            found.append(
                _error("slope_sign", f"slope {curve.slope:g} must be strictly negative", subject)
            )
        if curve.intercept <= 0.0:
            found.append(
                _error("intercept_sign", f"intercept {curve.intercept:g} must be positive", subject)
            )
        if curve.eta_ref is not None and not ELASTICITY_MIN <= curve.eta_ref <= ELASTICITY_MAX:
            found.append(
                _error(
                    "elasticity_range",
                    f"elasticity {curve.eta_ref:g} outside [{ELASTICITY_MIN:g}, {ELASTICITY_MAX:g}]",
                    subject,
                )
            )
    return found


def _check_traders(model: MarketModel) -> list[Diagnostic]:
    found = []
    period_ids = {p.id for p in model.periods}
    arc_ids = {a.id for a in model.arcs}
    for dup in _duplicates(t.id for t in model.traders):
        found.append(_error("duplicate_trader", "trader id is not unique", dup))

    for trader in model.traders:
        subject = trader.id
        if trader.source not in trader.nodes:
            found.append(
                _error("source_reach", f"source node {trader.source} not in reachable nodes", subject)
            )
        if not model.has_node(trader.source) or not model.node(trader.source).has_producer:
            found.append(
                _error("source_producer", f"source node {trader.source} has no producer", subject)
            )
        for node_id in sorted(trader.nodes):
            if not model.has_node(node_id):
                found.append(_error("unknown_node", f"reachable node {node_id} does not exist", subject))
        for node_id in sorted(trader.markets):
            if node_id not in trader.nodes:
                found.append(_error("market_reach", f"market {node_id} not in reachable nodes", subject))
            if not model.has_node(node_id) or not model.node(node_id).has_consumer:
                found.append(_error("market_consumer", f"market {node_id} is not a consumer", subject))
        for arc_id in sorted(trader.arcs or ()):
            if arc_id not in arc_ids:
                found.append(
                    _error("unknown_arc", f"usable arc {arc_id.source}->{arc_id.target} unknown", subject)
                )
        for (node_id, period_id), value in trader.theta.items():
            if not THETA_MIN <= value <= THETA_MAX:
                found.append(
                    _error(
                        "theta_range",
                        f"theta {value:g} at {node_id}/{period_id} outside [0, 1]",
                        subject,
                    )
                )
            if node_id not in trader.markets or period_id not in period_ids:
                found.append(
                    _error("theta_key", f"theta for {node_id}/{period_id} is not a market", subject)
                )
    return found


def validate_model(model: MarketModel) -> list[Diagnostic]:
    """Return every invariant violation of ``model``; empty means valid.

    Lint findings such as non-zero pipeline or regasification losses are warnings.
    """
    found: list[Diagnostic] = []
    for check in (
        _check_periods,
        _check_nodes,
        _check_arcs,
        _check_services,
        _check_demand,
        _check_traders,
    ):
        found.extend(check(model))

    for diagnostic in found:
        if not diagnostic.is_error:
            logger.warning("%s", diagnostic)
    return found


def errors_only(diagnostics: Iterable[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diagnostics if d.is_error]

"""JSON model, calibration data and year-update files.

A model document looks like::

    {
      "schema_version": 1,
      "name": "two_node",
      "periods": [{"id": "summer", "duration": 183}],
      "nodes": [{"id": "n", "country": "AA", "region": "EU-West", "producer": true}],
      "arcs": [{"source": "n", "target": "m", "kind": "pipeline"}],
      "services": [{"kind": "P", "node": "n", "linc": 200, "quac": 0.5, "cap": 120}],
      "traders": [{"id": "F1", "source": "n", "nodes": ["n"], "markets": ["n"], "theta": 0.5}],
      "demand": [{"node": "n", "period": "summer",
                  "consumption": 100, "price": 300, "elasticity": -0.5}]
    }

Per-period values (``linc``, ``quac``, ``cap``) may be a scalar applied to
every period or an object keyed by period id. ``theta`` may be a scalar, an
object keyed by market, or an object of per-period objects. Units are fixed:
mcm/d for flows, k€/mcm for prices, days for durations, mcm/y for annual caps.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from .calibration import CalibrationData
from .exceptions import (
    InvalidInputError,
    ModelParseError,
    ModelValidationError,
    SchemaVersionError,
)
from .model import (
    Arc,
    DemandCurve,
    MarketModel,
    Node,
    Period,
    ServiceSpec,
    Severity,
    Trader,
    validate_model,
)
from .scenarios import CapacityUpdate, ConsumerUpdate, Expansion, YearUpdate
from .types import MODEL_SCHEMA_VERSION, ArcId, ArcKind, PeriodId, ServiceId, ServiceKind

logger = logging.getLogger(__name__)

_TOP_KEYS = frozenset(
    {"schema_version", "name", "periods", "nodes", "arcs", "services", "traders", "demand",
     "calibration", "updates"}
)
_PERIOD_KEYS = frozenset({"id", "duration"})
_NODE_KEYS = frozenset(
    {"id", "country", "region", "producer", "consumer", "storage", "liquefaction", "regas"}
)
_ARC_KEYS = frozenset({"source", "target", "kind"})
_SERVICE_KEYS = frozenset({"kind", "node", "target", "linc", "quac", "loss", "cap", "cap_annual"})
_TRADER_KEYS = frozenset({"id", "source", "nodes", "markets", "arcs", "theta"})
_DEMAND_KEYS = frozenset(
    {"node", "period", "consumption", "price", "elasticity", "intercept", "slope"}
)


class _Reader:
    """Field access that reports where a document went wrong."""

    def __init__(self, strict: bool) -> None:
        self.strict = strict

    def check_keys(self, obj: Any, allowed: frozenset[str], where: str) -> dict[str, Any]:
        if not isinstance(obj, dict):
            raise ModelParseError(f"{where} must be an object, got {type(obj).__name__}")
        unknown = sorted(set(obj) - allowed)
        if unknown:
            if self.strict:
                raise ModelParseError(f"Unknown field(s) in {where}: {', '.join(unknown)}")
            logger.warning("Ignoring unknown field(s) in %s: %s", where, ", ".join(unknown))
        return obj

    @staticmethod
    def require(obj: Mapping[str, Any], key: str, where: str) -> Any:
        if key not in obj:
            raise ModelParseError(f"{where} is missing required field '{key}'")
        return obj[key]

    @staticmethod
    def items(obj: Mapping[str, Any], key: str, where: str) -> list[Any]:
        value = obj.get(key, [])
        if not isinstance(value, list):
            raise ModelParseError(f"{where}.{key} must be a list")
        return value


def _per_period(value: Any, periods: Iterable[PeriodId], where: str) -> dict[PeriodId, float]:
    periods = list(periods)
    if value is None:
        return {}
    if isinstance(value, dict):
        unknown = sorted(set(value) - set(periods))
        if unknown:
            raise ModelParseError(f"{where} refers to unknown period(s) {', '.join(unknown)}")
        return dict(value)
    return {p: value for p in periods}


def _theta(value: Any, markets: Iterable[str], periods: list[PeriodId], where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        return {(n, p): value for n in markets for p in periods}
    theta = {}
    for node, per_node in value.items():
        for period, v in _per_period(per_node, periods, f"{where}.{node}").items():
            theta[(node, period)] = v
    return theta


def _read_text(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"{path}: {e.msg}", e.lineno, e.colno) from None


def _check_version(doc: Any, path: str | Path) -> None:
    if not isinstance(doc, dict):
        raise ModelParseError(f"{path}: top level must be an object")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: schema_version {version!r} is not supported (expected {MODEL_SCHEMA_VERSION})"
        )


def model_from_dict(doc: Mapping[str, Any], strict: bool = True) -> MarketModel:
    """Build a model from a parsed document without validating it."""
    r = _Reader(strict)
    doc = r.check_keys(doc, _TOP_KEYS, "model")
    try:
        periods = tuple(
            Period(r.require(p, "id", "period"), r.require(p, "duration", "period"))
            for p in (r.check_keys(p, _PERIOD_KEYS, "period") for p in r.items(doc, "periods", "model"))
        )
        period_ids = [p.id for p in periods]

        nodes = []
        for raw in r.items(doc, "nodes", "model"):
            n = r.check_keys(raw, _NODE_KEYS, "node")
            nodes.append(
                Node(
                    r.require(n, "id", "node"),
                    r.require(n, "country", "node"),
                    r.require(n, "region", "node"),
                    has_producer=bool(n.get("producer", False)),
                    has_consumer=bool(n.get("consumer", False)),
                    has_storage=bool(n.get("storage", False)),
                    has_liquefaction=bool(n.get("liquefaction", False)),
                    has_regas=bool(n.get("regas", False)),
                )
            )

        arcs = []
        for raw in r.items(doc, "arcs", "model"):
            a = r.check_keys(raw, _ARC_KEYS, "arc")
            arcs.append(
                Arc(r.require(a, "source", "arc"), r.require(a, "target", "arc"), a.get("kind", "pipeline"))
            )

        services = {}
        for raw in r.items(doc, "services", "model"):
            s = r.check_keys(raw, _SERVICE_KEYS, "service")
            try:
                kind = ServiceKind(r.require(s, "kind", "service"))
            except ValueError:
                raise ModelParseError(f"Unknown service kind {s['kind']!r}") from None
            service = ServiceId(kind, r.require(s, "node", "service"), s.get("target"))
            where = f"service {service.label()}"
            if service in services:
                raise ModelParseError(f"{where} is declared twice")
            services[service] = ServiceSpec(
                service,
                linc=_per_period(r.require(s, "linc", where), period_ids, f"{where}.linc"),
                quac=_per_period(s.get("quac"), period_ids, f"{where}.quac"),
                loss=s.get("loss", 0.0),
                cap_per_period=_per_period(s.get("cap"), period_ids, f"{where}.cap"),
                cap_annual=s.get("cap_annual"),
            )

        traders = []
        for raw in r.items(doc, "traders", "model"):
            f = r.check_keys(raw, _TRADER_KEYS, "trader")
            trader_id = r.require(f, "id", "trader")
            markets = frozenset(r.require(f, "markets", f"trader {trader_id}"))
            arc_set = f.get("arcs")
            traders.append(
                Trader(
                    trader_id,
                    r.require(f, "source", f"trader {trader_id}"),
                    frozenset(r.require(f, "nodes", f"trader {trader_id}")),
                    markets,
                    arcs=None
                    if arc_set is None
                    else frozenset(ArcId(a[0], a[1], ArcKind(a[2] if len(a) > 2 else "pipeline")) for a in arc_set),
                    theta=_theta(f.get("theta"), sorted(markets), period_ids, f"trader {trader_id}.theta"),
                )
            )

        demand = {}
        for raw in r.items(doc, "demand", "model"):
            d = r.check_keys(raw, _DEMAND_KEYS, "demand")
            market = (r.require(d, "node", "demand"), r.require(d, "period", "demand"))
            if "intercept" in d or "slope" in d:
                curve = DemandCurve(
                    r.require(d, "intercept", "demand"),
                    r.require(d, "slope", "demand"),
                    d.get("consumption"),
                    d.get("price"),
                    d.get("elasticity"),
                )
            else:
                curve = DemandCurve.from_anchors(
                    r.require(d, "consumption", "demand"),
                    r.require(d, "price", "demand"),
                    r.require(d, "elasticity", "demand"),
                )
            demand[market] = curve

        return MarketModel(
            periods=periods,
            nodes=tuple(nodes),
            arcs=tuple(arcs),
            services=services,
            traders=tuple(traders),
            demand=demand,
            name=doc.get("name", "model"),
        )
    except (InvalidInputError, ValueError, TypeError, IndexError, ZeroDivisionError) as e:
        raise ModelParseError(str(e)) from None


def load_model(path: str | Path, strict: bool = True) -> MarketModel:
    """Read and validate a JSON model file.

    Raises:
        ModelParseError: Malformed JSON (with line and column) or wrong shape.
        SchemaVersionError: Unsupported ``schema_version``.
        ModelValidationError: Every error-severity finding of ``validate_model``.
        OSError: The file cannot be read.
    """
    doc = _read_text(path)
    _check_version(doc, path)
    model = model_from_dict(doc, strict)

    diagnostics = validate_model(model)
    errors = [d for d in diagnostics if d.severity is Severity.ERROR]
    for d in diagnostics:
        if d.severity is Severity.WARNING:
            logger.warning("%s: %s", path, d)
    if errors:
        raise ModelValidationError(errors)
    logger.info("Loaded %s: %d nodes, %d traders", path, len(model.nodes), len(model.traders))
    return model


def _per_period_out(values: Mapping[PeriodId, float]) -> dict[PeriodId, float]:
    return {p: values[p] for p in sorted(values)}


def model_to_dict(model: MarketModel) -> dict[str, Any]:
    """Document form of ``model``; per-period values are always written out in full."""
    services = []
    for service in sorted(model.services, key=lambda s: (s.kind.value, s.node, s.target or "")):
        spec = model.services[service]
        entry: dict[str, Any] = {"kind": service.kind.value, "node": service.node}
        if service.target is not None:
            entry["target"] = service.target
        entry["linc"] = _per_period_out(spec.linc)
        if spec.quac:
            entry["quac"] = _per_period_out(spec.quac)
        if spec.loss:
            entry["loss"] = spec.loss
        if spec.cap_per_period:
            entry["cap"] = _per_period_out(spec.cap_per_period)
        if spec.cap_annual is not None:
            entry["cap_annual"] = spec.cap_annual
        services.append(entry)

    traders = []
    for trader in model.traders:
        theta: dict[str, dict[str, float]] = {}
        for (node, period), value in sorted(trader.theta.items()):
            theta.setdefault(node, {})[period] = value
        entry = {
            "id": trader.id,
            "source": trader.source,
            "nodes": sorted(trader.nodes),
            "markets": sorted(trader.markets),
            "theta": theta,
        }
        if trader.arcs is not None:
            entry["arcs"] = [[a.source, a.target, a.kind.value] for a in sorted(trader.arcs)]
        traders.append(entry)

    demand = []
    for (node, period), curve in sorted(model.demand.items()):
        entry = {"node": node, "period": period, "intercept": curve.intercept, "slope": curve.slope}
        for key, value in (
            ("consumption", curve.s_ref),
            ("price", curve.pi_ref),
            ("elasticity", curve.eta_ref),
        ):
            if value is not None:
                entry[key] = value
        demand.append(entry)

    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "name": model.name,
        "periods": [{"id": p.id, "duration": p.duration} for p in model.periods],
        "nodes": [
            {
                "id": n.id,
                "country": n.country,
                "region": n.region.value,
                "producer": n.has_producer,
                "consumer": n.has_consumer,
                "storage": n.has_storage,
                "liquefaction": n.has_liquefaction,
                "regas": n.has_regas,
            }
            for n in model.nodes
        ],
        "arcs": [{"source": a.source, "target": a.target, "kind": a.kind.value} for a in model.arcs],
        "services": services,
        "traders": traders,
        "demand": demand,
    }


def dump_model(model: MarketModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


_CALIBRATION_KEYS = frozenset({"schema_version", "markets", "sales", "adjusted_sales"})
_UPDATES_KEYS = frozenset({"schema_version", "years"})


def _section(doc: Any, key: str, path: str | Path) -> Mapping[str, Any]:
    """A standalone file or the matching section embedded in a model file."""
    _check_version(doc, path)
    if key in doc:
        section = doc[key]
        if not isinstance(section, dict):
            raise ModelParseError(f"{path}: '{key}' must be an object")
        return section
    return doc


def load_calibration_data(path: str | Path) -> CalibrationData:
    """Read reported consumption, prices, elasticities and per-trader sales."""
    doc = _section(_read_text(path), "calibration", path)
    r = _Reader(strict=True)
    r.check_keys(doc, _CALIBRATION_KEYS, "calibration")
    consumption, price, elasticity = {}, {}, {}
    try:
        for raw in r.items(doc, "markets", "calibration"):
            m = r.check_keys(raw, frozenset({"node", "period", "consumption", "price", "elasticity"}), "market")
            market = (r.require(m, "node", "market"), r.require(m, "period", "market"))
            consumption[market] = r.require(m, "consumption", "market")
            price[market] = r.require(m, "price", "market")
            elasticity[market] = r.require(m, "elasticity", "market")

        def sales(key: str) -> dict[tuple[str, str, str], float]:
            out = {}
            for raw in r.items(doc, key, "calibration"):
                s = r.check_keys(raw, frozenset({"trader", "node", "period", "volume"}), key)
                out[(r.require(s, "trader", key), r.require(s, "node", key), r.require(s, "period", key))] = (
                    r.require(s, "volume", key)
                )
            return out

        adjusted = sales("adjusted_sales") if "adjusted_sales" in doc else None
        return CalibrationData(consumption, price, elasticity, sales("sales"), adjusted)
    except InvalidInputError as e:
        raise ModelParseError(f"{path}: {e}") from None


def calibration_data_to_dict(data: CalibrationData) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "markets": [
            {
                "node": node,
                "period": period,
                "consumption": data.consumption[(node, period)],
                "price": data.price[(node, period)],
                "elasticity": data.elasticity[(node, period)],
            }
            for node, period in sorted(data.consumption)
        ],
        "sales": [
            {"trader": f, "node": n, "period": t, "volume": v} for (f, n, t), v in sorted(data.sales.items())
        ],
    }
    if data.adjusted_sales is not None:
        doc["adjusted_sales"] = [
            {"trader": f, "node": n, "period": t, "volume": v}
            for (f, n, t), v in sorted(data.adjusted_sales.items())
        ]
    return doc


_EXPANSION_KEYS = frozenset(
    {"kind", "node", "target", "capacity", "extraction", "volume", "linc", "decommission"}
)


def _year_update(raw: Any, r: _Reader) -> YearUpdate:
    y = r.check_keys(raw, frozenset({"year", "calibration_year", "consumer", "capacity", "expansions"}), "year")
    year = r.require(y, "year", "year")
    where = f"year {year}"
    consumer = tuple(
        ConsumerUpdate(
            r.require(c, "node", where),
            r.require(c, "period", where),
            r.require(c, "consumption", where),
            r.require(c, "price", where),
            c.get("elasticity"),
        )
        for c in (
            r.check_keys(c, frozenset({"node", "period", "consumption", "price", "elasticity"}), f"{where}.consumer")
            for c in r.items(y, "consumer", where)
        )
    )
    capacity = []
    for raw_cap in r.items(y, "capacity", where):
        c = r.check_keys(raw_cap, frozenset({"kind", "node", "cap", "cap_annual"}), f"{where}.capacity")
        service = ServiceId(ServiceKind(r.require(c, "kind", where)), r.require(c, "node", where))
        cap = c.get("cap", {})
        if not isinstance(cap, dict):
            raise ModelParseError(f"{where}.capacity caps must be keyed by period")
        capacity.append(CapacityUpdate(service, cap, c.get("cap_annual")))
    expansions = tuple(
        Expansion(
            kind=r.require(e, "kind", where),
            node=r.require(e, "node", where),
            target=e.get("target"),
            capacity=e.get("capacity", 0.0),
            extraction=e.get("extraction", 0.0),
            volume=e.get("volume", 0.0),
            linc=e.get("linc", 0.0),
            decommission=bool(e.get("decommission", False)),
        )
        for e in (r.check_keys(e, _EXPANSION_KEYS, f"{where}.expansion") for e in r.items(y, "expansions", where))
    )
    return YearUpdate(
        year=int(year),
        consumer=consumer,
        capacity=tuple(capacity),
        expansions=expansions,
        calibration_year=bool(y.get("calibration_year", False)),
    )


def load_updates(path: str | Path) -> list[YearUpdate]:
    """Read the year updates, sorted by year.

    Raises:
        ModelParseError: Wrong shape or a repeated year.
        PlanValidationError: An update that is invalid in itself, e.g. a negative delta.
    """
    doc = _section(_read_text(path), "updates", path)
    r = _Reader(strict=True)
    r.check_keys(doc, _UPDATES_KEYS, "updates")
    try:
        updates = [_year_update(raw, r) for raw in r.items(doc, "years", "updates")]
    except (ValueError, TypeError) as e:
        raise ModelParseError(f"{path}: {e}") from None
    years = [u.year for u in updates]
    if len(set(years)) != len(years):
        raise ModelParseError(f"{path}: a year appears more than once")
    return sorted(updates, key=lambda u: u.year)

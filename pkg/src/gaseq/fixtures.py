"""Small reference markets with known equilibria.

The monopoly, competitive, duopoly and pipeline markets have closed-form
solutions; the others are sized so the enumeration solver can check them.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .model import Arc, DemandCurve, MarketModel, Node, Period, ServiceSpec, Trader
from .types import ArcId, ArcKind, PeriodId, Region, ServiceId, ServiceKind

YEAR = (Period("year", 365.0),)
SEASONS = (Period("summer", 183.0), Period("winter", 182.0))


def _flat(value: float, periods: Iterable[Period]) -> dict[PeriodId, float]:
    return {p.id: value for p in periods}


def _producer(
    node: str,
    periods: Iterable[Period],
    linc: float,
    cap: float | None = None,
    quac: float = 0.0,
    cap_annual: float | None = None,
) -> ServiceSpec:
    periods = tuple(periods)
    return ServiceSpec(
        ServiceId(ServiceKind.PRODUCTION, node),
        linc=_flat(linc, periods),
        quac=_flat(quac, periods) if quac else {},
        cap_per_period=_flat(cap, periods) if cap is not None else {},
        cap_annual=cap_annual,
    )


def _service(
    service: ServiceId,
    periods: Iterable[Period],
    linc: float,
    cap: float | None = None,
    loss: float = 0.0,
    cap_annual: float | None = None,
) -> ServiceSpec:
    periods = tuple(periods)
    return ServiceSpec(
        service,
        linc=_flat(linc, periods),
        loss=loss,
        cap_per_period=_flat(cap, periods) if cap is not None else {},
        cap_annual=cap_annual,
    )


def monopoly(theta: float = 1.0, annual_cap: float | None = None) -> MarketModel:
    """One node, one trader: INT 900, SLP -6, marginal cost 100."""
    node = Node("N1", "AA", Region.EU_WEST, has_producer=True, has_consumer=True)
    trader = Trader("F1", "N1", frozenset({"N1"}), frozenset({"N1"}), theta={("N1", "year"): theta})
    return MarketModel(
        periods=YEAR,
        nodes=(node,),
        arcs=(),
        services={
            ServiceId(ServiceKind.PRODUCTION, "N1"): _producer(
                "N1", YEAR, 100.0, cap=1000.0, cap_annual=annual_cap
            )
        },
        traders=(trader,),
        demand={("N1", "year"): DemandCurve.from_anchors(100.0, 300.0, -0.5)},
        name="monopoly",
    )


def competitive() -> MarketModel:
    return monopoly(theta=0.0).replace(name="competitive")


def duopoly(theta: float = 1.0) -> MarketModel:
    """Two symmetric traders drawing on one producer node."""
    base = monopoly(theta)
    second = Trader("F2", "N1", frozenset({"N1"}), frozenset({"N1"}), theta={("N1", "year"): theta})
    return base.replace(traders=base.traders + (second,), name="duopoly")


def single_pipeline(linc: float = 10.0, cap: float | None = None, theta: float = 0.0) -> MarketModel:
    """A non-EU producer S serving market M over one pipeline."""
    nodes = (
        Node("S", "ZZ", Region.NON_EU, has_producer=True),
        Node("M", "AA", Region.EU_WEST, has_consumer=True),
    )
    pipe = Arc("S", "M")
    trader = Trader(
        "F1", "S", frozenset({"S", "M"}), frozenset({"M"}), theta={("M", "year"): theta}
    )
    return MarketModel(
        periods=YEAR,
        nodes=nodes,
        arcs=(pipe,),
        services={
            ServiceId(ServiceKind.PRODUCTION, "S"): _producer("S", YEAR, 100.0, cap=1000.0),
            pipe.service: _service(pipe.service, YEAR, linc, cap=cap),
        },
        traders=(trader,),
        demand={("M", "year"): DemandCurve.from_anchors(100.0, 300.0, -0.5)},
        name="single_pipeline",
    )


def congested_pipeline() -> MarketModel:
    """The single pipeline with a binding 50 mcm/d cap."""
    return single_pipeline(cap=50.0).replace(name="congested_pipeline")


def two_node() -> MarketModel:
    """Two markets with storage at n, pipelines both ways and an LNG route m -> n."""
    periods = SEASONS
    nodes = (
        Node(
            "n", "AA", Region.EU_WEST,
            has_producer=True, has_consumer=True, has_storage=True, has_regas=True,
        ),
        Node("m", "BB", Region.EU_EAST, has_producer=True, has_consumer=True, has_liquefaction=True),
    )
    arcs = (Arc("n", "m"), Arc("m", "n"), Arc("m", "n", ArcKind.LNG_ROUTE))
    services = [
        _producer("n", periods, 200.0, cap=120.0, quac=0.5),
        _producer("m", periods, 150.0, cap=150.0, quac=0.3),
        _service(ServiceId(ServiceKind.INJECTION, "n"), periods, 5.0, cap=30.0, loss=0.01, cap_annual=3000.0),
        _service(ServiceId(ServiceKind.EXTRACTION, "n"), periods, 5.0, cap=30.0),
        _service(ServiceId(ServiceKind.LIQUEFACTION, "m"), periods, 20.0, cap=30.0, loss=0.01),
        _service(ServiceId(ServiceKind.REGASIFICATION, "n"), periods, 5.0, cap=40.0),
        _service(arcs[0].service, periods, 15.0, cap=40.0),
        _service(arcs[1].service, periods, 15.0, cap=40.0),
        _service(arcs[2].service, periods, 10.0, cap=30.0, loss=0.005),
    ]
    demand = {
        ("n", "summer"): DemandCurve.from_anchors(100.0, 300.0, -0.5),
        ("n", "winter"): DemandCurve.from_anchors(140.0, 330.0, -0.5),
        ("m", "summer"): DemandCurve.from_anchors(60.0, 280.0, -0.4),
        ("m", "winter"): DemandCurve.from_anchors(80.0, 310.0, -0.4),
    }
    reach = frozenset({"n", "m"})
    traders = (
        Trader("F1", "n", reach, reach, theta={(n, p.id): 0.5 for n in reach for p in periods}),
        Trader("F2", "m", reach, reach, theta={(n, p.id): 0.3 for n in reach for p in periods}),
    )
    return MarketModel(
        periods=periods,
        nodes=nodes,
        arcs=arcs,
        services={s.service: s for s in services},
        traders=traders,
        demand=demand,
        name="two_node",
    )


def new_source(with_pipeline: bool = False) -> MarketModel:
    """An EU incumbent at M and a cheap non-EU source S that may be connected by pipeline.

    The entrant NEW may only use arcs listed explicitly, so a pipeline added
    later has to be opened to it.
    """
    nodes = (
        Node("M", "AA", Region.EU_WEST, has_producer=True, has_consumer=True),
        Node("S", "ZZ", Region.NON_EU, has_producer=True),
    )
    services = [
        _producer("M", YEAR, 200.0, cap=200.0),
        _producer("S", YEAR, 50.0, cap=100.0),
    ]
    arcs: tuple[Arc, ...] = ()
    if with_pipeline:
        pipe = Arc("S", "M")
        arcs = (pipe,)
        services.append(_service(pipe.service, YEAR, 10.0, cap=60.0))
    traders = (
        Trader("INC", "M", frozenset({"M"}), frozenset({"M"}), theta={("M", "year"): 0.5}),
        Trader(
            "NEW",
            "S",
            frozenset({"S", "M"}),
            frozenset({"M"}),
            arcs=frozenset({ArcId("S", "M", ArcKind.PIPELINE)}) if with_pipeline else frozenset(),
            theta={("M", "year"): 0.5},
        ),
    )
    return MarketModel(
        periods=YEAR,
        nodes=nodes,
        arcs=arcs,
        services={s.service: s for s in services},
        traders=traders,
        demand={("M", "year"): DemandCurve.from_anchors(100.0, 300.0, -0.5)},
        name="new_source",
    )


def corridor() -> MarketModel:
    """Source S, transit T and EU market M with no pipelines yet.

    Gas from S reaches M only when both S->T and T->M exist, so single
    expansions have no effect while the pair does.
    """
    nodes = (
        Node("M", "IT", Region.EU_WEST, has_producer=True, has_consumer=True),
        Node("T", "TR", Region.NON_EU),
        Node("S", "AZ", Region.NON_EU, has_producer=True),
    )
    reach = frozenset({"S", "T", "M"})
    traders = (
        Trader("INC", "M", frozenset({"M"}), frozenset({"M"}), theta={("M", "year"): 0.5}),
        Trader("NEW", "S", reach, frozenset({"M"}), theta={("M", "year"): 0.5}),
    )
    services = [_producer("M", YEAR, 220.0, cap=200.0), _producer("S", YEAR, 40.0, cap=80.0)]
    return MarketModel(
        periods=YEAR,
        nodes=nodes,
        arcs=(),
        services={s.service: s for s in services},
        traders=traders,
        demand={("M", "year"): DemandCurve.from_anchors(100.0, 300.0, -0.5)},
        name="corridor",
    )


def grid(
    n_nodes: int = 10, n_traders: int = 5, periods: tuple[Period, ...] = SEASONS, seed: int = 0
) -> MarketModel:
    """A ring of consumer nodes with producers spread around it.

    Costs, demand anchors and market power are drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    ids = [f"G{i}" for i in range(n_nodes)]
    sources = {ids[(i * n_nodes) // n_traders] for i in range(n_traders)}
    regions = (Region.EU_WEST, Region.EU_EAST)
    nodes = tuple(
        Node(
            node_id,
            f"C{i}",
            regions[i % 2],
            has_producer=node_id in sources,
            has_consumer=True,
        )
        for i, node_id in enumerate(ids)
    )
    arcs = []
    for i in range(n_nodes):
        j = (i + 1) % n_nodes
        arcs.append(Arc(ids[i], ids[j]))
        arcs.append(Arc(ids[j], ids[i]))

    services = []
    for node_id in sorted(sources):
        services.append(
            _producer(node_id, periods, float(rng.uniform(80, 160)), cap=float(rng.uniform(80, 140)))
        )
    for arc in arcs:
        services.append(
            _service(arc.service, periods, float(rng.uniform(5, 20)), cap=float(rng.uniform(20, 60)))
        )

    demand = {}
    for node_id in ids:
        base = float(rng.uniform(20, 60))
        for k, period in enumerate(periods):
            demand[(node_id, period.id)] = DemandCurve.from_anchors(
                base * (1.0 + 0.2 * k), float(rng.uniform(250, 350)), float(rng.uniform(-0.8, -0.4))
            )

    reach = frozenset(ids)
    traders = []
    for k, node_id in enumerate(sorted(sources)):
        theta = {(n, p.id): float(rng.uniform(0.0, 0.6)) for n in ids for p in periods}
        traders.append(Trader(f"F{k + 1}", node_id, reach, reach, theta=theta))

    return MarketModel(
        periods=periods,
        nodes=nodes,
        arcs=tuple(arcs),
        services={s.service: s for s in services},
        traders=tuple(traders),
        demand=demand,
        name=f"grid{n_nodes}",
    )

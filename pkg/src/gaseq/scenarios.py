"""Year-by-year simulation protocol for infrastructure and market updates.

For a year with ``k`` expansions the plan holds ``k + 5`` runs:

====  =========  ==============================================  =========
id    type       applies                                         reference
====  =========  ==============================================  =========
0     REF        nothing                                         none
1     C          consumer block                                  0
2     PL         production and liquefaction block               0
3     PLC        both blocks                                     0
4+i   R, S, A    both blocks and expansion ``i`` (from 0)        3
k+4   RSA&PLC    both blocks and every expansion                 3
====  =========  ==============================================  =========

A calibration year keeps only run ``k+4``, without a reference.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from .analytics import MarketOutcome, WelfareSummary, welfare_summary
from .equilibrium import EquilibriumSolution, solve_model
from .exceptions import GasEqError, InvalidComparisonError, PlanValidationError
from .lcp import SolverOptions, SolveStatus
from .model import Arc, DemandCurve, MarketModel, ServiceSpec, Trader
from .types import ArcKind, Country, NodeId, PeriodId, Region, ServiceId, ServiceKind

logger = logging.getLogger(__name__)

REFERENCE_TYPE = "REF"
ALL_CHANGES_TYPE = "RSA&PLC"


class ExpansionKind(str, Enum):
    """Infrastructure that an expansion adds capacity to."""

    REGAS = "R"
    STORAGE = "S"
    PIPELINE = "A"


CapacityDelta = float | Mapping[PeriodId, float]


def _per_period(value: CapacityDelta, periods: Iterable[PeriodId]) -> dict[PeriodId, float]:
    if isinstance(value, Mapping):
        return {p: float(value.get(p, 0.0)) for p in periods}
    return {p: float(value) for p in periods}


def _values(value: CapacityDelta) -> list[float]:
    return list(value.values()) if isinstance(value, Mapping) else [float(value)]


@dataclass(frozen=True)
class ConsumerUpdate:
    """New demand anchors for one market; elasticity defaults to the current anchor."""

    node: NodeId
    period: PeriodId
    consumption: float
    price: float
    elasticity: float | None = None


@dataclass(frozen=True)
class CapacityUpdate:
    """Absolute production or liquefaction capacity levels."""

    service: ServiceId
    cap_per_period: Mapping[PeriodId, float] = field(default_factory=dict)
    cap_annual: float | None = None

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        if self.service.kind not in (ServiceKind.PRODUCTION, ServiceKind.LIQUEFACTION):
            raise PlanValidationError(
                f"Capacity updates cover production and liquefaction, got {self.service.label()}"
            )
        if any(v < 0.0 for v in self.cap_per_period.values()):
            raise PlanValidationError(f"Negative capacity for {self.service.label()}")
        object.__setattr__(self, "cap_per_period", dict(self.cap_per_period))


@dataclass(frozen=True)
class Expansion:
    """Capacity added to one regas terminal, storage site or pipeline.

    For storage, ``capacity`` is injection, ``extraction`` extraction and
    ``volume`` the working-gas volume (mcm/y). For pipelines and terminals,
    ``volume`` adds to the annual capacity. ``linc`` prices assets that do not
    exist yet.
    """

    kind: ExpansionKind
    node: NodeId
    target: NodeId | None = None
    capacity: CapacityDelta = 0.0
    extraction: CapacityDelta = 0.0
    volume: float = 0.0
    linc: float = 0.0
    decommission: bool = False

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "kind", ExpansionKind(self.kind))
        if (self.kind is ExpansionKind.PIPELINE) != (self.target is not None):
            raise PlanValidationError("Pipeline expansions need a target node; others must not have one")
        if self.node == self.target:
            raise PlanValidationError(f"Pipeline expansion from {self.node} to itself")
        if not self.decommission:
            deltas = _values(self.capacity) + _values(self.extraction) + [self.volume]
            if any(d < 0.0 for d in deltas):
                raise PlanValidationError(
                    f"Negative capacity delta on {self.label()} without the decommission flag"
                )

    @property
    def asset(self) -> tuple[ExpansionKind, NodeId, NodeId | None]:
        return (self.kind, self.node, self.target)

    def label(self) -> str:
        if self.target is None:
            return f"{self.kind.value}:{self.node}"
        return f"{self.kind.value}:{self.node}->{self.target}"


@dataclass(frozen=True)
class YearUpdate:
    """Everything that changes between the reference state and a year's outlook."""

    year: int
    consumer: tuple[ConsumerUpdate, ...] = ()
    capacity: tuple[CapacityUpdate, ...] = ()
    expansions: tuple[Expansion, ...] = ()
    calibration_year: bool = False

    def __post_init__(self) -> None:
        """Copy containers into tuples."""
        object.__setattr__(self, "consumer", tuple(self.consumer))
        object.__setattr__(self, "capacity", tuple(self.capacity))
        object.__setattr__(self, "expansions", tuple(self.expansions))


@dataclass(frozen=True)
class SimulationRun:
    """One run of a plan and the blocks it applies."""

    year: int
    id: int
    type_code: str
    reference: int | None
    consumer: bool
    capacity: bool
    expansions: tuple[int, ...] = ()


@dataclass(frozen=True)
class SimulationPlan:
    base_model: MarketModel
    update: YearUpdate
    runs: tuple[SimulationRun, ...]

    @property
    def year(self) -> int:
        return self.update.year

    def run(self, run_id: int) -> SimulationRun:
        for run in self.runs:
            if run.id == run_id:
                return run
        raise KeyError(run_id)


def _check_update(model: MarketModel, update: YearUpdate) -> None:
    periods = {p.id for p in model.periods}
    problems = []
    for cu in update.consumer:
        if not model.has_node(cu.node) or not model.node(cu.node).has_consumer:
            problems.append(f"consumer update on {cu.node}, which is not a consumer node")
        elif cu.period not in periods:
            problems.append(f"consumer update for unknown period {cu.period}")
        elif cu.elasticity is None and model.demand_curve(cu.node, cu.period).eta_ref is None:
            problems.append(f"consumer update on {cu.node}/{cu.period} needs an elasticity")
    for cap in update.capacity:
        if model.service(cap.service) is None:
            problems.append(f"capacity update on unknown service {cap.service.label()}")
    seen = set()
    for expansion in update.expansions:
        for end in (expansion.node, expansion.target):
            if end is not None and not model.has_node(end):
                problems.append(f"expansion {expansion.label()} refers to unknown node {end}")
        if expansion.asset in seen:
            problems.append(f"asset {expansion.label()} is expanded twice in {update.year}")
        seen.add(expansion.asset)
    if problems:
        raise PlanValidationError("; ".join(problems))


def build_plan(base_model: MarketModel, update: YearUpdate) -> SimulationPlan:
    """Lay out the runs of one year.

    Raises:
        PlanValidationError: If an update does not resolve in the model or one
            asset is expanded twice.
    """
    _check_update(base_model, update)
    year = update.year
    k = len(update.expansions)
    every = tuple(range(k))
    last = SimulationRun(year, k + 4, ALL_CHANGES_TYPE, 3, True, True, every)

    if update.calibration_year:
        runs = (dataclasses.replace(last, reference=None),)
    else:
        runs = (
            SimulationRun(year, 0, REFERENCE_TYPE, None, False, False),
            SimulationRun(year, 1, "C", 0, True, False),
            SimulationRun(year, 2, "PL", 0, False, True),
            SimulationRun(year, 3, "PLC", 0, True, True),
            *(
                SimulationRun(year, 4 + i, e.kind.value, 3, True, True, (i,))
                for i, e in enumerate(update.expansions)
            ),
            last,
        )
    logger.debug("Plan for %d: %d runs", year, len(runs))
    return SimulationPlan(base_model, update, runs)


def _apply_consumer(model: MarketModel, updates: Iterable[ConsumerUpdate]) -> MarketModel:
    curves = {}
    for cu in updates:
        current = model.demand_curve(cu.node, cu.period)
        eta = cu.elasticity if cu.elasticity is not None else current.eta_ref
        curves[(cu.node, cu.period)] = DemandCurve.from_anchors(cu.consumption, cu.price, eta or 0.0)
    return model.with_demand(curves)


def _apply_capacity(model: MarketModel, updates: Iterable[CapacityUpdate]) -> MarketModel:
    specs = []
    for cap in updates:
        spec = model.services[cap.service]
        caps = dict(spec.cap_per_period)
        caps.update(cap.cap_per_period)
        annual = cap.cap_annual if cap.cap_annual is not None else spec.cap_annual
        specs.append(dataclasses.replace(spec, cap_per_period=caps, cap_annual=annual))
    return model.with_services(specs)


def _grow(
    model: MarketModel,
    service: ServiceId,
    delta: CapacityDelta,
    annual: float,
    linc: float,
    loss: float = 0.0,
) -> ServiceSpec:
    """Add capacity to a service, creating it when it does not exist yet.

    Every period of the model receives its delta. A period without a capacity
    row on an existing service is uncapped and stays uncapped; a nonzero delta
    there is reported with a warning.
    """
    periods = [p.id for p in model.periods]
    added = _per_period(delta, periods)
    spec = model.service(service)
    if spec is None:
        return ServiceSpec(
            service,
            linc={p: linc for p in periods},
            loss=loss,
            cap_per_period={p: max(0.0, v) for p, v in added.items()},
            cap_annual=max(0.0, annual) if annual else None,
        )
    caps = dict(spec.cap_per_period)
    uncapped = []
    for p in periods:
        current = spec.cap_at(p)
        if current is None:
            if added[p]:
                uncapped.append(p)
            continue
        caps[p] = max(0.0, current + added[p])
    if uncapped:
        logger.warning(
            "%s has no capacity limit in %s; expansion there has no effect",
            service.label(),
            ", ".join(uncapped),
        )
    cap_annual = spec.cap_annual
    if annual:
        cap_annual = max(0.0, (cap_annual or 0.0) + annual)
    return dataclasses.replace(spec, cap_per_period=caps, cap_annual=cap_annual)


def _admit_pipeline(model: MarketModel, arc: Arc, built: bool = True) -> list[Trader]:
    """Traders whose arc access changes with a newly built pipeline.

    Pipelines with a non-EU end are open only to traders sourcing at the origin
    or at a non-EU node. Explicit arc sets gain the new arc when it is open to
    the trader; a trader without an arc set that is shut out of a newly
    ``built`` arc gets one listing every other arc it could already use.
    """
    both_eu = all(model.node(end).region is not Region.NON_EU for end in (arc.source, arc.target))
    changed = []
    for trader in model.traders:
        if arc.source not in trader.nodes or arc.target not in trader.nodes:
            continue
        open_to = (
            both_eu
            or trader.source == arc.source
            or model.node(trader.source).region is Region.NON_EU
        )
        if trader.arcs is None:
            if built and not open_to:
                usable = frozenset(a.id for a in model.arcs if a.id != arc.id and trader.may_use(a))
                changed.append(dataclasses.replace(trader, arcs=usable))
        elif open_to and arc.id not in trader.arcs:
            changed.append(dataclasses.replace(trader, arcs=trader.arcs | {arc.id}))
    return changed


def _apply_expansion(model: MarketModel, expansion: Expansion) -> MarketModel:
    if expansion.kind is ExpansionKind.PIPELINE:
        arc = Arc(expansion.node, expansion.target or "", ArcKind.PIPELINE)
        built = all(a.id != arc.id for a in model.arcs)
        spec = _grow(model, arc.service, expansion.capacity, expansion.volume, expansion.linc)
        model = model.with_arcs([arc]).with_services([spec])
        return model.with_traders(_admit_pipeline(model, arc, built))

    node = model.node(expansion.node)
    if expansion.kind is ExpansionKind.REGAS:
        spec = _grow(
            model,
            ServiceId(ServiceKind.REGASIFICATION, node.id),
            expansion.capacity,
            expansion.volume,
            expansion.linc,
        )
        return model.with_nodes([dataclasses.replace(node, has_regas=True)]).with_services([spec])

    injection = _grow(
        model,
        ServiceId(ServiceKind.INJECTION, node.id),
        expansion.capacity,
        expansion.volume,
        expansion.linc,
    )
    extraction = _grow(
        model, ServiceId(ServiceKind.EXTRACTION, node.id), expansion.extraction, 0.0, expansion.linc
    )
    return model.with_nodes([dataclasses.replace(node, has_storage=True)]).with_services(
        [injection, extraction]
    )


def materialize_run(plan: SimulationPlan, run: SimulationRun) -> MarketModel:
    """The model a run solves, built as a fresh copy of the plan's base model."""
    model = plan.base_model
    if run.consumer:
        model = _apply_consumer(model, plan.update.consumer)
    if run.capacity:
        model = _apply_capacity(model, plan.update.capacity)
    for index in run.expansions:
        model = _apply_expansion(model, plan.update.expansions[index])
    return model.replace(name=f"{plan.base_model.name}_{run.year}_{run.id}")


@dataclass(frozen=True)
class RunResult:
    run: SimulationRun
    model: MarketModel
    solution: EquilibriumSolution | None
    error: str | None = None

    @property
    def solved(self) -> bool:
        return self.solution is not None and self.solution.solved

    @property
    def status(self) -> str:
        if self.solution is None:
            return "error"
        return self.solution.status.value

    @property
    def outcome(self) -> MarketOutcome:
        if self.solution is None:
            raise InvalidComparisonError(f"Run {self.run.id} has no solution: {self.error}")
        return MarketOutcome(self.model, self.solution)


def _execute(plan: SimulationPlan, run: SimulationRun, opts: SolverOptions | None) -> RunResult:
    model = materialize_run(plan, run)
    try:
        solution = solve_model(model, opts)
    except GasEqError as e:
        logger.warning("Run %d/%d failed: %s", run.year, run.id, e)
        return RunResult(run, model, None, str(e))
    if solution.status is not SolveStatus.SOLVED:
        logger.warning("Run %d/%d ended with %s", run.year, run.id, solution.status.value)
    return RunResult(run, model, solution)


def run_plan(
    plan: SimulationPlan, opts: SolverOptions | None = None, parallel: int = 1
) -> dict[int, RunResult]:
    """Solve every run; failures are recorded in the run's slot and the plan continues."""
    if parallel > 1 and len(plan.runs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(
                pool.map(_execute, [plan] * len(plan.runs), plan.runs, [opts] * len(plan.runs))
            )
    else:
        outcomes = [_execute(plan, run, opts) for run in plan.runs]
    return {result.run.id: result for result in outcomes}


@dataclass(frozen=True)
class DeltaReport:
    """Welfare changes of one run against its reference, or levels without one."""

    year: int
    simulation_id: int
    simulation_type: str
    reference_id: int | None
    summary: WelfareSummary | None
    status: str = "solved"
    start_location: str = ""
    end_location: str = ""
    original_capacity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    added_capacity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def is_delta(self) -> bool:
        return self.reference_id is not None


def _capacity_columns(
    model: MarketModel, expansion: Expansion
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Original and added (flow, extraction, volume) capacity of an expanded asset."""

    def peak(spec: ServiceSpec | None) -> float:
        return max(spec.cap_per_period.values(), default=0.0) if spec is not None else 0.0

    def annual(spec: ServiceSpec | None) -> float:
        return (spec.cap_annual or 0.0) if spec is not None else 0.0

    added = (max(_values(expansion.capacity)), max(_values(expansion.extraction)), expansion.volume)
    if expansion.kind is ExpansionKind.PIPELINE:
        spec = model.service(ServiceId(ServiceKind.PIPELINE, expansion.node, expansion.target))
        return (peak(spec), 0.0, annual(spec)), added
    if expansion.kind is ExpansionKind.REGAS:
        spec = model.service(ServiceId(ServiceKind.REGASIFICATION, expansion.node))
        return (peak(spec), 0.0, annual(spec)), added
    inj = model.service(ServiceId(ServiceKind.INJECTION, expansion.node))
    ext = model.service(ServiceId(ServiceKind.EXTRACTION, expansion.node))
    return (peak(inj), peak(ext), annual(inj)), added


def compare(
    result: RunResult,
    reference: RunResult,
    region_map: Mapping[Country, Region] | None = None,
) -> DeltaReport:
    """Deltas of ``result`` against ``reference``; positive means an increase.

    Raises:
        InvalidComparisonError: If either run is unsolved or the node sets differ.
    """
    if not result.solved or not reference.solved:
        raise InvalidComparisonError(
            f"Cannot compare run {result.run.id} ({result.status}) "
            f"with run {reference.run.id} ({reference.status})"
        )
    ours = {n.id for n in result.model.nodes}
    theirs = {n.id for n in reference.model.nodes}
    if ours != theirs:
        raise InvalidComparisonError(
            f"Node sets differ: {sorted(ours ^ theirs)} appear in only one of the runs"
        )
    summary = welfare_summary(result.outcome, reference.outcome, region_map)
    return DeltaReport(
        year=result.run.year,
        simulation_id=result.run.id,
        simulation_type=result.run.type_code,
        reference_id=reference.run.id,
        summary=summary,
    )


def plan_reports(
    plan: SimulationPlan,
    results: Mapping[int, RunResult],
    region_map: Mapping[Country, Region] | None = None,
) -> list[DeltaReport]:
    """One report per run: levels for runs without a reference, deltas otherwise."""
    reports = []
    for run in plan.runs:
        result = results[run.id]
        if run.reference is None:
            summary = welfare_summary(result.outcome, region_map=region_map) if result.solved else None
            report = DeltaReport(run.year, run.id, run.type_code, None, summary, result.status)
        else:
            reference = results.get(run.reference)
            if reference is not None and result.solved and reference.solved:
                report = compare(result, reference, region_map)
            else:
                status = result.status if not result.solved else "reference_failed"
                report = DeltaReport(run.year, run.id, run.type_code, run.reference, None, status)

        if len(run.expansions) == 1:
            expansion = plan.update.expansions[run.expansions[0]]
            reference_model = results[run.reference].model if run.reference in results else plan.base_model
            original, added = _capacity_columns(reference_model, expansion)
            report = dataclasses.replace(
                report,
                start_location=expansion.node,
                end_location=expansion.target or "",
                original_capacity=original,
                added_capacity=added,
            )
        reports.append(report)
    return reports


@dataclass(frozen=True)
class YearOutcome:
    plan: SimulationPlan
    results: dict[int, RunResult]

    def reports(self, region_map: Mapping[Country, Region] | None = None) -> list[DeltaReport]:
        return plan_reports(self.plan, self.results, region_map)


def run_horizon(
    base_model: MarketModel,
    updates: Sequence[YearUpdate],
    opts: SolverOptions | None = None,
    parallel: int = 1,
) -> list[YearOutcome]:
    """Run consecutive years; each year's all-changes model is the next year's base."""
    outcomes = []
    model = base_model
    for update in sorted(updates, key=lambda u: u.year):
        plan = build_plan(model, update)
        results = run_plan(plan, opts, parallel)
        outcomes.append(YearOutcome(plan, results))
        final = results[plan.runs[-1].id]
        model = final.model.replace(name=base_model.name)
        logger.info("Year %d done: %d runs", update.year, len(plan.runs))
    return outcomes

"""Spatial partial-equilibrium natural gas market model solved as a linear complementarity problem."""

from .analytics import (
    MarketConcentration,
    MarketOutcome,
    PriceComposition,
    WelfareSummary,
    annual_consumer_surplus,
    annual_producer_surplus,
    consumer_surplus,
    infrastructure_rents,
    market_shares_and_hhi,
    price_decomposition,
    producer_surplus,
    welfare_summary,
)
from .calibration import (
    CalibrationBounds,
    CalibrationData,
    CalibrationOptions,
    CalibrationParams,
    CalibrationResult,
    adjust_reference_sales,
    apply_calibration,
    calibrate,
    project_demand,
    synthesize_calibration_data,
)
from .equilibrium import (
    EquilibriumSolution,
    assemble_lcp,
    check_equilibrium,
    extract_solution,
    solve_model,
)
from .exceptions import (
    AssemblyError,
    CalibrationDataError,
    GasEqError,
    InvalidComparisonError,
    InvalidElasticityError,
    InvalidInputError,
    ModelFileError,
    ModelParseError,
    ModelValidationError,
    PlanValidationError,
    RegionMapError,
    SchemaVersionError,
    SizeLimitError,
    SolverFailedError,
    ValidationError,
)
from .lcp import (
    LcpProblem,
    LcpSolution,
    SolverOptions,
    SolveStatus,
    brute_force_lcp,
    solve_fb_newton,
    solve_lcp,
    solve_lemke,
    verify_complementarity,
)
from .model import (
    Arc,
    DemandCurve,
    Diagnostic,
    MarketModel,
    Node,
    Period,
    ServiceSpec,
    Severity,
    Trader,
    demand_curve_from_calibration,
    validate_model,
)
from .modelfile import dump_model, load_calibration_data, load_model, load_updates, model_to_dict
from .report import read_report, write_report
from .scenarios import (
    CapacityUpdate,
    ConsumerUpdate,
    DeltaReport,
    Expansion,
    ExpansionKind,
    RunResult,
    SimulationPlan,
    SimulationRun,
    YearUpdate,
    build_plan,
    compare,
    materialize_run,
    run_horizon,
    run_plan,
)
from .types import ArcId, ArcKind, Region, ServiceId, ServiceKind

__version__ = "1.0.0"

__all__ = [
    # solver
    "LcpProblem",
    "LcpSolution",
    "SolverOptions",
    "SolveStatus",
    "solve_lemke",
    "solve_fb_newton",
    "brute_force_lcp",
    "solve_lcp",
    "verify_complementarity",
    # model
    "Period",
    "Node",
    "Arc",
    "ServiceSpec",
    "DemandCurve",
    "Trader",
    "MarketModel",
    "Diagnostic",
    "Severity",
    "Region",
    "ArcKind",
    "ArcId",
    "ServiceKind",
    "ServiceId",
    "demand_curve_from_calibration",
    "validate_model",
    # equilibrium
    "EquilibriumSolution",
    "assemble_lcp",
    "extract_solution",
    "solve_model",
    "check_equilibrium",
    # calibration
    "CalibrationData",
    "CalibrationParams",
    "CalibrationBounds",
    "CalibrationOptions",
    "CalibrationResult",
    "adjust_reference_sales",
    "calibrate",
    "apply_calibration",
    "project_demand",
    "synthesize_calibration_data",
    # scenarios
    "YearUpdate",
    "ConsumerUpdate",
    "CapacityUpdate",
    "Expansion",
    "ExpansionKind",
    "SimulationRun",
    "SimulationPlan",
    "RunResult",
    "DeltaReport",
    "build_plan",
    "materialize_run",
    "run_plan",
    "compare",
    "run_horizon",
    # analytics
    "MarketOutcome",
    "MarketConcentration",
    "PriceComposition",
    "WelfareSummary",
    "consumer_surplus",
    "annual_consumer_surplus",
    "producer_surplus",
    "annual_producer_surplus",
    "infrastructure_rents",
    "market_shares_and_hhi",
    "price_decomposition",
    "welfare_summary",
    # files
    "load_model",
    "dump_model",
    "model_to_dict",
    "load_calibration_data",
    "load_updates",
    "read_report",
    "write_report",
    # errors
    "GasEqError",
    "ValidationError",
    "InvalidInputError",
    "SizeLimitError",
    "InvalidElasticityError",
    "ModelValidationError",
    "CalibrationDataError",
    "PlanValidationError",
    "InvalidComparisonError",
    "RegionMapError",
    "AssemblyError",
    "SolverFailedError",
    "ModelFileError",
    "ModelParseError",
    "SchemaVersionError",
]

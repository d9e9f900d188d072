"""Type definitions and constants for the gas market equilibrium library."""

from enum import Enum
from typing import NamedTuple

NodeId = str
PeriodId = str
TraderId = str
Country = str

# Units: flows in mcm/d, prices in k€/mcm, durations in days, surpluses in M€.
Flow = float
Price = float


class Region(str, Enum):
    """Market region a node belongs to."""

    EU_WEST = "EU-West"
    EU_EAST = "EU-East"
    NON_EU = "non-EU"

    @property
    def is_eu(self) -> bool:
        return self is not Region.NON_EU


class ArcKind(str, Enum):
    """Transport mode of a directed arc."""

    PIPELINE = "pipeline"
    LNG_ROUTE = "lng_route"


class ServiceKind(str, Enum):
    """Service provider kinds; producers count as a service."""

    PRODUCTION = "P"
    INJECTION = "I"
    EXTRACTION = "X"
    LIQUEFACTION = "L"
    REGASIFICATION = "R"
    PIPELINE = "A"
    SHIPPING = "B"


class ServiceId(NamedTuple):
    """Identity of a service provider: node services have no target."""

    kind: ServiceKind
    node: NodeId
    target: NodeId | None = None

    def label(self) -> str:
        if self.target is None:
            return f"{self.kind.value}:{self.node}"
        return f"{self.kind.value}:{self.node}->{self.target}"


class ArcId(NamedTuple):
    """Identity of a directed arc."""

    source: NodeId
    target: NodeId
    kind: ArcKind


NODE_SERVICES = frozenset(
    {
        ServiceKind.PRODUCTION,
        ServiceKind.INJECTION,
        ServiceKind.EXTRACTION,
        ServiceKind.LIQUEFACTION,
        ServiceKind.REGASIFICATION,
    }
)
ARC_SERVICES = frozenset({ServiceKind.PIPELINE, ServiceKind.SHIPPING})

DAYS_PER_YEAR = 365.0
PERIOD_TOTAL_SLACK = 1.0

# Solver defaults
DEFAULT_FEAS_TOL = 1e-9
DEFAULT_COMP_TOL = 1e-8
DEFAULT_MAX_PIVOTS = 20000
DEFAULT_MAX_NEWTON_ITERS = 200
PIVOT_TOL = 1e-12
NEWTON_THRESHOLD = 500
BRUTE_FORCE_MAX_DIM = 20
FLOW_TOL = 1e-7

# Calibration bounds and defaults
PRICE_BOUND_FACTOR = 0.15
ELASTICITY_WINDOW = 0.2
ELASTICITY_MIN = -1.0
ELASTICITY_MAX = -0.3
THETA_MIN = 0.0
THETA_MAX = 1.0
DEFAULT_CONSUMPTION_TARGET = 0.025
DEFAULT_MAX_SWEEPS = 50
DEFAULT_PRICE_GROWTH = 0.0023

# Market concentration thresholds (HHI on percent shares)
HHI_MAX = 10000.0
HHI_UNCONCENTRATED = 1500.0
HHI_HIGHLY_CONCENTRATED = 2500.0

MODEL_SCHEMA_VERSION = 1

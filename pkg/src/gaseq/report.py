"""Result tables: one CSV row per (year, simulation id).

Column order::

    index, year, simulation_id, simulation_type, reference_id,
    start_location, end_location,
    original_capacity, added_capacity, original_extraction, added_extraction,
    original_volume, added_volume,
    dCS_<c>, dpiC_<c>, dsC_<c>   for each consumer country c
    dPS_<c>                      for each supplier country c
    dCS, dPS_EU, dSW_EU, dPS, dSW, dCS_abs_sum, dSW_EU_abs_sum, dSW_tot_abs_sum,
    status

Rows without a reference hold levels instead of deltas. Comment lines
precede the header: the units, optional run metadata and the EU countries
the aggregates cover.
"""

from __future__ import annotations

import io
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ModelParseError
from .scenarios import DeltaReport
from .types import Country

logger = logging.getLogger(__name__)

UNITS_LINE = "# units: surplus M€/y, price k€/mcm, consumption mcm/d, capacity mcm/d or mcm/y"
EU_PREFIX = "# eu_countries:"

HEAD_COLUMNS = [
    "index",
    "year",
    "simulation_id",
    "simulation_type",
    "reference_id",
    "start_location",
    "end_location",
    "original_capacity",
    "added_capacity",
    "original_extraction",
    "added_extraction",
    "original_volume",
    "added_volume",
]
AGGREGATE_COLUMNS = [
    "dCS",
    "dPS_EU",
    "dSW_EU",
    "dPS",
    "dSW",
    "dCS_abs_sum",
    "dSW_EU_abs_sum",
    "dSW_tot_abs_sum",
]


@dataclass(frozen=True)
class ReportFile:
    frame: pd.DataFrame
    eu_countries: frozenset[Country]

    def consumer_countries(self) -> list[Country]:
        return [c[len("dsC_"):] for c in self.frame.columns if c.startswith("dsC_")]

    def supplier_countries(self) -> list[Country]:
        return [
            c[len("dPS_"):]
            for c in self.frame.columns
            if c.startswith("dPS_") and c != "dPS_EU"
        ]


def report_frame(reports: Sequence[DeltaReport]) -> ReportFile:
    """Lay the reports out in the fixed column order, sorted by (year, simulation id)."""
    ordered = sorted(reports, key=lambda r: (r.year, r.simulation_id))
    summaries = [r.summary for r in ordered if r.summary is not None]
    consumers = sorted({c for s in summaries for c in s.cs})
    suppliers = sorted({c for s in summaries for c in s.ps})
    eu = frozenset(c for s in summaries for c in s.eu_countries)

    rows = []
    for index, report in enumerate(ordered):
        row: dict[str, object] = {
            "index": index,
            "year": report.year,
            "simulation_id": report.simulation_id,
            "simulation_type": report.simulation_type,
            "reference_id": report.reference_id,
            "start_location": report.start_location,
            "end_location": report.end_location,
            "original_capacity": report.original_capacity[0],
            "added_capacity": report.added_capacity[0],
            "original_extraction": report.original_capacity[1],
            "added_extraction": report.added_capacity[1],
            "original_volume": report.original_capacity[2],
            "added_volume": report.added_capacity[2],
        }
        s = report.summary
        for c in consumers:
            row[f"dCS_{c}"] = s.cs.get(c, 0.0) if s else np.nan
            row[f"dpiC_{c}"] = s.price.get(c, 0.0) if s else np.nan
            row[f"dsC_{c}"] = s.consumption.get(c, 0.0) if s else np.nan
        for c in suppliers:
            row[f"dPS_{c}"] = s.ps.get(c, 0.0) if s else np.nan
        aggregates = s.aggregates() if s else {}
        for name in AGGREGATE_COLUMNS:
            row[name] = aggregates.get(name, np.nan)
        row["status"] = report.status
        rows.append(row)

    columns = (
        HEAD_COLUMNS
        + [f"{p}{c}" for c in consumers for p in ("dCS_", "dpiC_", "dsC_")]
        + [f"dPS_{c}" for c in suppliers]
        + AGGREGATE_COLUMNS
        + ["status"]
    )
    frame = pd.DataFrame(rows, columns=columns)
    frame["reference_id"] = frame["reference_id"].astype("Int64")
    return ReportFile(frame, eu)


def render_report(report: ReportFile, metadata: Mapping[str, object] | None = None) -> str:
    buffer = io.StringIO()
    buffer.write(UNITS_LINE + "\n")
    for key, value in sorted((metadata or {}).items()):
        buffer.write(f"# {key}: {value}\n")
    buffer.write(f"{EU_PREFIX} {' '.join(sorted(report.eu_countries))}\n")
    report.frame.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def write_report(
    reports: Sequence[DeltaReport],
    path: str | Path,
    metadata: Mapping[str, object] | None = None,
) -> ReportFile:
    """Write the CSV; rows and columns are ordered so equal inputs give identical bytes."""
    report = report_frame(reports)
    Path(path).write_text(render_report(report, metadata), encoding="utf-8")
    logger.info("Wrote %d report rows to %s", len(report.frame), path)
    return report


def read_report(path: str | Path) -> ReportFile:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header = 0
    while header < len(lines) and lines[header].startswith("#"):
        header += 1
    eu_lines = [line for line in lines[:header] if line.startswith(EU_PREFIX)]
    if not eu_lines or header == len(lines):
        raise ModelParseError(f"{path}: not a report file (missing header comments)")
    eu = frozenset(eu_lines[0][len(EU_PREFIX):].split())
    frame = pd.read_csv(io.StringIO("\n".join(lines[header:])))
    missing = [c for c in HEAD_COLUMNS + AGGREGATE_COLUMNS if c not in frame.columns]
    if missing:
        raise ModelParseError(f"{path}: missing column(s) {', '.join(missing)}")
    return ReportFile(frame, eu)


def rederive_aggregates(report: ReportFile) -> pd.DataFrame:
    """Recompute the aggregate columns from the per-country columns."""
    frame = report.frame
    eu_consumers = [c for c in report.consumer_countries() if c in report.eu_countries]
    suppliers = report.supplier_countries()
    eu_suppliers = [c for c in suppliers if c in report.eu_countries]

    def total(prefix: str, countries: list[Country], absolute: bool = False) -> pd.Series:
        if not countries:
            return pd.Series(0.0, index=frame.index)
        block = frame[[f"{prefix}{c}" for c in countries]]
        return (block.abs() if absolute else block).sum(axis=1, skipna=False)

    cs = total("dCS_", eu_consumers)
    ps_eu = total("dPS_", eu_suppliers)
    ps = total("dPS_", suppliers)
    cs_abs = total("dCS_", eu_consumers, absolute=True)
    return pd.DataFrame(
        {
            "dCS": cs,
            "dPS_EU": ps_eu,
            "dSW_EU": cs + ps_eu,
            "dPS": ps,
            "dSW": cs + ps,
            "dCS_abs_sum": cs_abs,
            "dSW_EU_abs_sum": cs_abs + total("dPS_", eu_suppliers, absolute=True),
            "dSW_tot_abs_sum": cs_abs + total("dPS_", suppliers, absolute=True),
        }
    )


def aggregate_discrepancy(report: ReportFile) -> float:
    """Largest gap between stored and recomputed aggregates over solved rows."""
    stored = report.frame[AGGREGATE_COLUMNS].astype(float)
    derived = rederive_aggregates(report)
    gaps = (stored - derived).abs().to_numpy()
    gaps = gaps[~np.isnan(gaps)]
    return float(gaps.max()) if gaps.size else 0.0

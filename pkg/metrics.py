"""
Aggregate navigation metrics and report writers.

Rates are fractions in [0, 1]; the text table shows them as percentages.
Episodes are sorted by (scene id, seed) before any reduction.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from nav_config import ContractViolation, ScenarioIOError

logger = logging.getLogger(__name__)

METRIC_KEYS = ("tl", "ne", "osr", "sr", "spl", "wc", "nc", "dc_sr", "p_o")
RATE_KEYS = ("osr", "sr", "spl", "wc", "nc", "dc_sr", "p_o")
DECIMALS = 6


def _r(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(float(value), DECIMALS)


def spl_term(success: bool, shortest: float, tl: float) -> float:
    if not success:
        return 0.0
    return shortest / max(tl, shortest)


def nc_term(nav_collisions: int, steps: int) -> float:
    return nav_collisions / steps if steps > 0 else 0.0


def wc_term(waypoint_collisions: int, waypoints: int) -> float:
    return waypoint_collisions / waypoints if waypoints > 0 else 0.0


def episode_wc(terms: Sequence[float]) -> float:
    """Mean waypoint-collision ratio over an episode's planning steps"""
    return float(np.mean(terms)) if len(terms) else 0.0


@dataclass
class MetricsReport:
    aggregate: Dict[str, Optional[float]]
    episodes: List[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "aggregate": self.aggregate, "episodes": self.episodes}

    def check_identities(self) -> bool:
        a = self.aggregate
        return a["spl"] <= a["sr"] + 1e-12 and a["sr"] <= a["osr"] + 1e-12


def _sorted(results) -> list:
    return sorted(results, key=lambda r: (r.scene_id, r.seed))


def episode_row(result, timing: bool = False) -> dict:
    row = {
        "scene": result.scene_id,
        "seed": result.seed,
        "outcome": result.outcome,
        "termination": result.termination,
        "steps": result.steps,
        "tl": _r(result.tl),
        "ne": _r(result.ne),
        "ne_euclid": _r(result.ne_euclid),
        "oracle_hit": result.oracle_hit,
        "shortest": _r(result.shortest),
        "spl": _r(spl_term(result.success, result.shortest, result.tl)),
        "nav_collisions": result.nav_collisions,
        "waypoint_collisions": result.waypoint_collisions,
        "dynamic_collisions": result.dynamic_collisions,
        "nc": _r(nc_term(result.nav_collisions, result.steps)),
        "wc": _r(episode_wc(result.waypoint_terms)),
        "p_o": _r(np.mean(result.occupied_props)) if result.occupied_props else 0.0,
        "fingerprint": result.fingerprint,
    }
    if timing:
        row["plan_ms"] = _r(result.plan_ms)
    return row


def compute_metrics(results, dynamic_results=None, config: Optional[dict] = None, timing: bool = False) -> MetricsReport:
    """Aggregate episode results; dynamic_results (injector enabled) feed D-C SR"""
    results = _sorted(results)
    if not results:
        raise ContractViolation("compute_metrics needs at least one episode")
    success = np.array([r.success for r in results], dtype=float)
    aggregate = {
        "tl": _r(np.mean([r.tl for r in results])),
        "ne": _r(np.mean([r.ne for r in results])),
        "ne_euclid": _r(np.mean([r.ne_euclid for r in results])),
        "osr": _r(np.mean([r.oracle_hit or r.success for r in results])),
        "sr": _r(success.mean()),
        "spl": _r(np.mean([spl_term(r.success, r.shortest, r.tl) for r in results])),
        "wc": _r(np.mean([episode_wc(r.waypoint_terms) for r in results])),
        "nc": _r(np.mean([nc_term(r.nav_collisions, r.steps) for r in results])),
        "dc_sr": None,
        "p_o": _r(np.mean([np.mean(r.occupied_props) if r.occupied_props else 0.0 for r in results])),
        "episodes": len(results),
    }
    if dynamic_results:
        aggregate["dc_sr"] = _r(np.mean([r.success for r in dynamic_results]))
    if timing:
        aggregate["plan_ms"] = _r(np.mean([r.plan_ms for r in results]))
    report = MetricsReport(aggregate, [episode_row(r, timing) for r in results], dict(config or {}))
    if not report.check_identities():
        logger.warning("metric identities violated: %s", aggregate)
    return report


def write_json(report: MetricsReport, path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise ScenarioIOError(f"Error writing report {path}: {e}")


def write_csv(report: MetricsReport, path) -> None:
    """One row per episode followed by an aggregate row with scene 'ALL'"""
    rows = list(report.episodes)
    columns = list(rows[0].keys()) if rows else []
    for key in report.aggregate:
        if key not in columns:
            columns.append(key)
    total = {c: "" for c in columns}
    total.update({"scene": "ALL"})
    total.update({k: ("" if v is None else v) for k, v in report.aggregate.items()})
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, restval="", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
            writer.writerow(total)
    except OSError as e:
        raise ScenarioIOError(f"Error writing report {path}: {e}")


def write_report(report: MetricsReport, path, fmt: str = "json") -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ScenarioIOError(f"Error creating {path.parent}: {e}")
    if fmt == "csv":
        write_csv(report, path)
    else:
        write_json(report, path)


def _cell(key: str, value) -> str:
    if value is None:
        return "-"
    if key in RATE_KEYS:
        return f"{100.0 * value:.1f}"
    return f"{value:.2f}"


def format_table(reports: Dict[str, MetricsReport], keys: Sequence[str] = METRIC_KEYS) -> str:
    """Fixed-width text table, one row per labelled report"""
    width = max([len(label) for label in reports] + [12])
    header = f"{'agent':<{width}} " + " ".join(f"{k.upper():>7}" for k in keys)
    lines = [header, "-" * len(header)]
    for label, report in reports.items():
        cells = " ".join(f"{_cell(k, report.aggregate.get(k)):>7}" for k in keys)
        lines.append(f"{label:<{width}} {cells}")
    return "\n".join(lines)


def combined_report(reports: Dict[str, MetricsReport], config: Optional[dict] = None) -> dict:
    """Single JSON document for matrix runs (compare, sweep, lidar)"""
    return {
        "config": dict(config or {}),
        "rows": [{"label": label, **r.to_dict()} for label, r in reports.items()],
    }


def write_combined(reports: Dict[str, MetricsReport], path, fmt: str = "json", config: Optional[dict] = None) -> None:
    """Matrix report: the combined JSON document, or one aggregate CSV row per label"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            keys = list(next(iter(reports.values())).aggregate) if reports else []
            with open(path, "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["label"] + keys)
                for label, report in reports.items():
                    writer.writerow([label] + ["" if report.aggregate.get(k) is None else report.aggregate[k] for k in keys])
        else:
            with open(path, "w") as f:
                json.dump(combined_report(reports, config), f, indent=2, sort_keys=True)
                f.write("\n")
    except OSError as e:
        raise ScenarioIOError(f"Error writing report {path}: {e}")

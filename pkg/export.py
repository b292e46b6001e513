"""Tabular export: DataFrame builders and CSV / JSON-summary writers.

Column names carry their units (``_in_omega0``, ``t_times_n_gamma0`` ...)
so a CSV can be read without this module.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd

from battery.asymptotics import PowerBoundPoint, energy_analytic, energy_lower_bound
from battery.lindblad import Trajectory
from battery.model import DerivedParams
from battery.steady_ergotropy import ErgotropyReport
from config import logger as root_logger

# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------

logger = root_logger.getChild(__name__)

FLOAT_FORMAT = "%.12g"

# ---------------------------------------------------------------------------
# Frame builders
# ---------------------------------------------------------------------------


def populations_frame(report: ErgotropyReport) -> pd.DataFrame:
    n = report.n_atoms
    return pd.DataFrame(
        {
            "m": np.arange(n + 1) - n / 2,
            "population": report.populations,
        }
    )


def charging_frame(traj: Trajectory, n_atoms: int, derived: DerivedParams | None = None) -> pd.DataFrame:
    """Trajectory columns, plus the analytic curve and its lower bound when Gamma > 0."""
    df = traj.to_frame()
    df.insert(0, "n_atoms", n_atoms)
    if derived is not None and derived.gamma_eff > 0:
        t = traj.times
        df.insert(2, "t_times_n_gamma_minus", t * n_atoms)
        df["energy_per_atom_analytic_in_omega0"] = energy_analytic(t, n_atoms, derived)
        df["energy_lower_bound_in_omega0"] = energy_lower_bound(n_atoms * derived.gamma_eff * t / 2, derived.theta)
    return df


def power_bound_frame(r: float, points: Iterable[PowerBoundPoint]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "r": r,
                "theta": p.theta,
                "charge_fraction": p.charge_fraction,
                "power_bound_per_n2_in_omega0_gamma_minus": p.bound,
                "tau90": p.tau90,
                "admissible": p.admissible,
            }
            for p in points
        ]
    )


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    """Write *df* without index; identical frames give byte-identical files."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError:
        logger.exception("Could not write %s", path)
        raise
    logger.info("Wrote %d rows to %s", len(df), path)
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _jsonable(value.real), "im": _jsonable(value.imag)}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(summary: Mapping[str, Any], path: str | Path) -> Path:
    """Write a JSON run summary; non-finite floats become null."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError:
        logger.exception("Could not write %s", path)
        raise
    logger.info("Wrote run summary to %s", path)
    return path


__all__ = [
    "FLOAT_FORMAT",
    "populations_frame",
    "charging_frame",
    "power_bound_frame",
    "write_csv",
    "write_summary",
]

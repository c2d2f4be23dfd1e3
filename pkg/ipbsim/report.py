# -*- coding: utf-8 -*-
"""
Run directories and the files written into them.

Every run lives in its own `<timestamp>-<name>` directory holding the
`config.yaml` snapshot, the `metadata.json` record, the `run-log.jsonl`
completions and the reports. Reports only depend on the inputs and the seed:
running the same command twice with the mock backend writes the same bytes.
Only `metadata.json` carries timestamps.
"""
from datetime import datetime
import glob
import io
import json
import os
import os.path
from typing import Any, Dict, List, Sequence

from logzero import logger
import pandas as pd
import yaml

from ipbsim import __version__
from ipbsim.domain import BEHAVIOR_POINTS, behavior_ids
from ipbsim.exceptions import InvalidConfiguration
from ipbsim.types import Record, Settings, ValidationReport

__all__ = ["create_run_dir", "write_config_snapshot", "write_metadata",
           "write_json", "write_csv", "write_validation", "write_grid",
           "write_relaxation", "histogram_rows", "grid_slices",
           "reemit_plot_data", "RUN_LOG", "SECRET_KEYS"]

RUN_LOG = "run-log.jsonl"
SECRET_KEYS = ("api_key", "value", "token", "password")


def create_run_dir(out: str, name: str, now: datetime = None) -> str:
    now = now or datetime.utcnow()
    base = os.path.join(out, "{}-{}".format(
        now.strftime("%Y%m%dT%H%M%SZ"), name))
    path, k = base, 1
    while os.path.exists(path):
        k += 1
        path = "{}-{}".format(base, k)
    os.makedirs(path)
    logger.debug("Writing run files to '{}'".format(path))
    return path


def write_config_snapshot(run_dir: str, settings: Settings):
    """
    Snapshot the settings the run used. Literal secrets are redacted,
    environment references are kept as they are.
    """
    with io.open(os.path.join(run_dir, "config.yaml"), "w",
                 encoding="utf-8") as f:
        yaml.safe_dump(_redact(settings or {}), f, default_flow_style=False,
                       sort_keys=True)


def write_metadata(run_dir: str, metadata: Dict[str, Any]):
    record = {"version": __version__}
    record.update(metadata)
    write_json(os.path.join(run_dir, "metadata.json"), record)


def write_json(path: str, data: Any):
    with io.open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(data, sort_keys=True, indent=2))
        f.write("\n")


def write_csv(path: str, rows: Sequence[Dict[str, Any]],
              columns: Sequence[str] = None):
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, encoding="utf-8")
    logger.debug("Wrote {} rows to '{}'".format(len(frame), path))


def write_validation(run_dir: str, reports: Dict[str, ValidationReport]):
    """
    One JSON report and one profile table per strategy, plus the
    per-behavior rows of every strategy in `validation.csv`.
    """
    rows = []
    for name, report in reports.items():
        write_json(
            os.path.join(run_dir, "validation-{}.json".format(name)),
            {k: v for k, v in report.items() if k != "profiles"})
        write_csv(
            os.path.join(run_dir, "profiles-{}.csv".format(name)),
            report["profiles"], PROFILE_COLUMNS)
        for row in report["rows"] + ([report["risk"]]
                                     if report.get("risk") else []):
            rows.append({
                "strategy": name,
                "behavior": row["behavior"],
                "statistic": row["statistic"],
                "p_value": row["p_value"],
                "n_simulated": row["n_simulated"],
                "n_observed": row["n_observed"],
                "passed": row["passed"],
                "counted": row["behavior"] != "risk_perception",
                "pass_rate": report["pass_rate"]
            })
    write_csv(os.path.join(run_dir, "validation.csv"), rows,
              VALIDATION_COLUMNS)
    write_csv(os.path.join(run_dir, "plot-data.csv"),
              histogram_rows(reports), HISTOGRAM_COLUMNS)


def write_grid(run_dir: str, rows: Sequence[Dict[str, Any]],
               settings: Settings = None):
    write_csv(os.path.join(run_dir, "grid-summary.csv"), rows,
              GRID_COLUMNS + behavior_ids(settings))
    write_csv(os.path.join(run_dir, "plot-data-grid.csv"),
              grid_slices(rows, settings=settings), SLICE_COLUMNS)


def write_relaxation(run_dir: str, result: Dict[str, Any],
                     dataset: Dict[str, List[Record]],
                     settings: Settings = None):
    write_csv(os.path.join(run_dir, "relax-summary.csv"), result["summary"],
              ["behavior", "r1_mean", "r2_mean", "r3_mean"])
    write_csv(os.path.join(run_dir, "profiles-relax.csv"),
              result["profiles"], PROFILE_COLUMNS)

    themes = []
    for behavior, table in result["themes"].items():
        for theme, counts in table.items():
            themes.append({"behavior": behavior, "theme": theme,
                           "count": counts["count"],
                           "percent": counts["percent"]})
    write_csv(os.path.join(run_dir, "relax-themes.csv"), themes,
              ["behavior", "theme", "count", "percent"])
    write_json(os.path.join(run_dir, "relax.json"), {
        "condition": result["condition"],
        "risk": result["risk"],
        "summary": result["summary"],
        "themes": result["themes"]
    })

    rows = []
    for survey_round in ("R1", "R2"):
        for record in dataset.get(survey_round) or []:
            for behavior, score in record["behavior_scores"].items():
                rows.append({"group": survey_round, "behavior": behavior,
                             "likert": score})
    for profile in result["profiles"]:
        rows.append({"group": "R3", "behavior": profile["behavior"],
                     "likert": profile["likert"]})
    write_csv(os.path.join(run_dir, "plot-data-relax.csv"),
              _count(rows, ["group", "behavior"], settings),
              ["group", "behavior", "level", "count"])


def histogram_rows(reports: Dict[str, ValidationReport]
                   ) -> List[Dict[str, Any]]:
    """
    Likert histograms of the simulated and observed distributions of every
    validated behavior, one row per level.
    """
    rows = []
    for name, report in reports.items():
        for row in report["rows"] + ([report["risk"]]
                                     if report.get("risk") else []):
            for source in ("simulated", "observed"):
                for level, count in enumerate(row["histogram"][source], 1):
                    rows.append({
                        "strategy": name,
                        "source": source,
                        "behavior": row["behavior"],
                        "level": level,
                        "count": count
                    })
    return rows


def grid_slices(rows: Sequence[Dict[str, Any]], fixed_cfr: float = 0.015,
                fixed_r0: float = 3.0,
                settings: Settings = None) -> List[Dict[str, Any]]:
    """
    Two slices of the grid summary: the R0 sweep at a fixed CFR and the CFR
    sweep at a fixed R0, per tier and behavior. A slice whose fixed level is
    not part of the grid is empty.
    """
    slices = []
    for row in rows:
        for behavior in behavior_ids(settings):
            if row["cfr"] == fixed_cfr:
                slices.append({
                    "slice": "r0_sweep", "tier": row["tier"], "x": row["r0"],
                    "behavior": behavior, "mean": row[behavior]
                })
            if row["r0"] == fixed_r0:
                slices.append({
                    "slice": "cfr_sweep", "tier": row["tier"],
                    "x": row["cfr"], "behavior": behavior,
                    "mean": row[behavior]
                })
    return sorted(slices, key=lambda s: (
        s["slice"], s["tier"], s["behavior"], s["x"]))


def reemit_plot_data(run_dir: str, settings: Settings = None) -> List[str]:
    """
    Write the plot data again from the reports already in `run_dir` and
    return the paths written.
    """
    if not os.path.isdir(run_dir):
        raise InvalidConfiguration(
            'Run directory "{}" does not exist.'.format(run_dir))

    written = []
    reports = {}
    for path in sorted(glob.glob(os.path.join(run_dir, "validation-*.json"))):
        with io.open(path, encoding="utf-8") as f:
            report = json.load(f)
        reports[report["strategy"]] = report
    if reports:
        path = os.path.join(run_dir, "plot-data.csv")
        write_csv(path, histogram_rows(reports), HISTOGRAM_COLUMNS)
        written.append(path)

    grid = os.path.join(run_dir, "grid-summary.csv")
    if os.path.exists(grid):
        rows = pd.read_csv(grid).to_dict(orient="records")
        path = os.path.join(run_dir, "plot-data-grid.csv")
        write_csv(path, grid_slices(rows, settings=settings), SLICE_COLUMNS)
        written.append(path)

    if not written:
        raise InvalidConfiguration(
            "'{}' holds no report to plot".format(run_dir))
    return written


###############################################################################
# Internal functions
###############################################################################
PROFILE_COLUMNS = ["persona", "condition", "risk_level", "behavior",
                   "mean_probability", "likert"]
VALIDATION_COLUMNS = ["strategy", "behavior", "statistic", "p_value",
                      "n_simulated", "n_observed", "passed", "counted",
                      "pass_rate"]
HISTOGRAM_COLUMNS = ["strategy", "source", "behavior", "level", "count"]
GRID_COLUMNS = ["condition", "cfr", "r0", "tier", "personas",
                "mean_risk_score", "mean_risk_level"]
SLICE_COLUMNS = ["slice", "tier", "x", "behavior", "mean"]


def _redact(data: Any) -> Any:
    if isinstance(data, dict):
        if data.get("type") == "env":
            return dict(data)
        return {
            k: "***" if k in SECRET_KEYS and isinstance(v, str)
            else _redact(v)
            for k, v in data.items()
        }
    if isinstance(data, list):
        return [_redact(v) for v in data]
    return data


def _count(rows: Sequence[Dict[str, Any]], keys: Sequence[str],
           settings: Settings = None) -> List[Dict[str, Any]]:
    counts = {}
    for row in rows:
        group = tuple(row[k] for k in keys)
        levels = counts.setdefault(group, [0] * BEHAVIOR_POINTS)
        levels[int(row["likert"]) - 1] += 1

    order = {b: i for i, b in enumerate(behavior_ids(settings))}
    result = []
    for group in sorted(counts, key=lambda g: (g[0], order.get(g[1], 0))):
        for level, count in enumerate(counts[group], 1):
            result.append(dict(zip(keys, group), level=level, count=count))
    return result

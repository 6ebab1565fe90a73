#!/usr/bin/env python3
"""
Report storage for curvflux runs.
One JSON report per experiment, CSV ladders per audited quantity and a summary table.
"""

import os
import json
import math
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

OUT_DIR = os.environ.get("CURVFLUX_OUT_DIR", "reports")

LADDER_COLUMNS = ["level", "h", "value", "error_estimate", "order"]
SUMMARY_COLUMNS = ["id", "kind", "identity", "status", "checks", "failed"]


def _clean(value):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats turned into null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def ladder_frame(result) -> pd.DataFrame:
    return pd.DataFrame(result.ladder_rows(), columns=LADDER_COLUMNS)


def write_report(report, out_dir: Optional[str] = None) -> List[str]:
    """Write <id>.json and one <id>__<quantity>.csv per ladder; returns the written paths."""
    out_dir = out_dir or OUT_DIR
    os.makedirs(out_dir, exist_ok=True)

    written = []
    report_path = os.path.join(out_dir, f"{_safe_name(report.id)}.json")
    with open(report_path, 'w', encoding='utf-8') as f:
        json.dump(_clean(report.to_dict()), f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(report_path)

    for name in sorted(report.ladders):
        path = os.path.join(out_dir, f"{_safe_name(report.id)}__{_safe_name(name)}.csv")
        ladder_frame(report.ladders[name]).to_csv(path, index=False, float_format="%.17g")
        written.append(path)
    return written


def summary_frame(reports) -> pd.DataFrame:
    rows = []
    for report in reports:
        rows.append({
            "id": report.id,
            "kind": report.kind,
            "identity": report.identity,
            "status": report.status,
            "checks": len(report.checks),
            "failed": ";".join(report.failed_checks),
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(reports, out_dir: Optional[str] = None) -> Dict[str, str]:
    """summary.csv plus summary.json with the same rows."""
    out_dir = out_dir or OUT_DIR
    os.makedirs(out_dir, exist_ok=True)

    frame = summary_frame(reports)
    csv_path = os.path.join(out_dir, "summary.csv")
    frame.to_csv(csv_path, index=False)

    json_path = os.path.join(out_dir, "summary.json")
    summary = {
        "passed": all(r.status == "pass" for r in reports),
        "experiments": _clean(frame.to_dict(orient="records")),
    }
    with open(json_path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return {"csv": csv_path, "json": json_path}


def load_report(report_id: str, out_dir: Optional[str] = None) -> Dict[str, object]:
    path = os.path.join(out_dir or OUT_DIR, f"{_safe_name(report_id)}.json")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def list_reports(out_dir: Optional[str] = None) -> List[str]:
    """Print and return the experiment reports found under out_dir."""
    out_dir = out_dir or OUT_DIR

    if not os.path.exists(out_dir):
        print("No reports directory found.")
        return []

    reports = sorted(f for f in os.listdir(out_dir) if f.endswith('.json') and f != "summary.json")

    if not reports:
        print("No reports found.")
        return []

    print(f"\nAvailable reports ({len(reports)}):")
    print("-" * 60)

    for name in reports:
        path = os.path.join(out_dir, name)
        size_kb = os.path.getsize(path) / 1024
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        ladders = [c for c in os.listdir(out_dir) if c.startswith(name[:-5] + "__")]

        print(f"{name}")
        print(f"  Identity: {data.get('identity', 'unknown')}")
        print(f"  Status: {data.get('status', 'unknown')}")
        print(f"  Ladders: {len(ladders)}")
        print(f"  Size: {size_kb:.2f} KB")
        print()
    return reports

"""Delimited and JSON report files. Every format carries a schema version."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import RunResult
from .evaluation import (
    REPORT_SCHEMA_VERSION, EcpReport, Score, SensitivityReport, SweepResult, worst_case,
)
from .scenario import KMH, ScenarioSpec, get_parameter


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def points_summary(points: Sequence[float]) -> dict:
    if not points:
        return {"n": 0}
    arr = np.asarray(points, dtype=float)
    return {
        "n": int(arr.size),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "mean": float(math.fsum(points) / len(points)),
        "p05": float(np.percentile(arr, 5)),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
    }


def write_run_result(outdir: Path, spec: ScenarioSpec, result: RunResult) -> Path:
    doc = {"schema_version": REPORT_SCHEMA_VERSION, "spec": _spec_summary(spec),
           "result": {k: _finite(v) for k, v in result.to_dict().items()}}
    return _write_json(outdir / f"{spec.id}.result.json", doc)


def _spec_summary(spec: ScenarioSpec) -> dict:
    return {
        "id": spec.id, "kind": spec.kind.value,
        "vut_speed": spec.vut_speed, "target_speed": spec.target_speed,
        "target_decel": spec.target_decel, "initial_gap": spec.initial_gap,
        "lateral_offset": spec.lateral_offset, "vut_mass": spec.vut_mass,
        "road_friction": spec.road_friction,
    }


MATRIX_COLUMNS = ("spec_id", "kind", "vut_speed_kmh", "target_speed_kmh", "collided",
                  "impact_speed", "points", "trigger_ttc", "termination")


def write_matrix_report(outdir: Path, specs: Sequence[ScenarioSpec],
                        outcomes: Sequence[tuple[RunResult, Score]]) -> list[Path]:
    rows = []
    for spec, (res, sc) in zip(specs, outcomes):
        rows.append((spec.id, spec.kind.value, _num(spec.vut_speed / KMH), _num(spec.target_speed / KMH),
                     _num(res.collided), _num(res.impact_speed), _num(sc.points),
                     _num(res.trigger_ttc), res.termination))
    points = [sc.points for _, sc in outcomes]
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "cases": len(outcomes),
        "collisions": sum(1 for r, _ in outcomes if r.collided),
        "points": points_summary(points),
        "total_points": math.fsum(points),
    }
    return [_write_csv(outdir / "matrix_scores.csv", MATRIX_COLUMNS, rows),
            _write_json(outdir / "matrix_summary.json", doc)]


def write_sweep_reports(outdir: Path, result: SweepResult,
                        sensitivity: SensitivityReport | None) -> list[Path]:
    paths = [r.path for r in result.plan.ranges]
    header = ("index", "spec_id", *paths, "collided", "impact_speed", "points",
              "trigger_ttc", "seed", "error")
    rows = []
    for e in result.runs:
        res, sc = e.result, e.score
        rows.append((
            e.index, e.spec.id, *(_num(get_parameter(e.spec, p)) for p in paths),
            _num(res.collided) if res else "", _num(res.impact_speed) if res else "",
            _num(sc.points) if sc else "", _num(res.trigger_ttc) if res else "",
            res.seed if res else "", e.error or "",
        ))
    out = [_write_csv(outdir / "sweep_runs.csv", header, rows)]

    scored = result.scored()
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "base_id": result.plan.base.id,
        "strategy": result.plan.strategy.value,
        "seed": result.plan.seed,
        "runs": len(result.runs),
        "failed": len(result.runs) - len(scored),
        "points": points_summary([e.score.points for e in scored]),
    }
    if scored:
        spec, sc = worst_case(result)
        doc["worst_case"] = {"spec_id": spec.id, "points": sc.points, "impact_speed": sc.impact_speed,
                             "parameters": {p: get_parameter(spec, p) for p in paths}}
    if sensitivity is not None:
        doc["main_effect"] = sensitivity.main_effect
        doc["ranking"] = list(sensitivity.ranking)
        out += write_sensitivity(outdir, sensitivity)
    out.append(_write_json(outdir / "sweep_summary.json", doc))
    return out


def write_sensitivity(outdir: Path, report: SensitivityReport) -> list[Path]:
    rows = [(path, _num(m.level), _num(m.mean_points), m.n)
            for path in report.ranking for m in report.marginals[path]]
    doc = {"schema_version": REPORT_SCHEMA_VERSION, "main_effect": report.main_effect,
           "ranking": list(report.ranking)}
    return [_write_csv(outdir / "sensitivity.csv", ("parameter", "level", "mean_points", "n"), rows),
            _write_json(outdir / "sensitivity.json", doc)]


def write_ecp_report(outdir: Path, report: EcpReport) -> list[Path]:
    rows = [(_num(r.offset), r.situation, r.escape_side or "", _num(r.trigger_ttc),
             _num(r.impact_speed), _num(r.points)) for r in report.rows]
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "base_id": report.base_id,
        "all_class_a": report.all_class_a,
        "max_impact_difference": report.max_impact_difference,
        "max_trigger_difference": report.max_trigger_difference,
        "rows": [dict(offset=r.offset, situation=r.situation, escape_side=r.escape_side,
                      trigger_ttc=r.trigger_ttc, impact_speed=r.impact_speed, points=r.points)
                 for r in report.rows],
    }
    header = ("offset", "situation", "escape_side", "trigger_ttc", "impact_speed", "points")
    return [_write_csv(outdir / "ecp_demo.csv", header, rows),
            _write_json(outdir / "ecp_demo.json", doc)]

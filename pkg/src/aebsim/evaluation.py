"""Scoring, tolerance sweeps, main effects, worst case, ECP demo and regression."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .decision import DecisionConfig, SituationClass, classify_situation
from .dynamics import BrakeActuator
from .engine import RunResult, SimConfig, SimulationAborted, run
from .perception import SensorConfig, SensorMode, SensorTrack
from .scenario import (
    DEFAULT_RUN_CAP, ScenarioError, ScenarioKind, ScenarioSpec, Strategy, SweepPlan, SweepPoint,
    expand_sweep_points,
)

BASELINE_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
MC_BINS = 5

EXIT_PASS = 0
EXIT_REGRESSION = 1
EXIT_INCOMPARABLE = 2


class UndefinedScore(ValueError):
    """The run never closed on the target and nothing intervened."""


@dataclass(frozen=True)
class Score:
    spec_id: str
    points: float
    impact_speed: float
    speed_reduction: float
    avoided: bool


def reduction_ratio(reduction: float, initial_closing: float) -> float:
    return min(1.0, max(0.0, reduction / initial_closing))


def score(run_result: RunResult, spec: ScenarioSpec,
          formula: Callable[[float, float], float] = reduction_ratio) -> Score:
    """Points for one run: 1 when avoided, else the clamped relative speed reduction.

    ``formula(speed_reduction, initial_closing_speed)`` can replace the
    default ratio, e.g. with a points table.
    """
    if run_result.spec_id != spec.id:
        raise ValueError(f"run {run_result.spec_id!r} does not belong to spec {spec.id!r}")
    closing = run_result.initial_closing_speed
    if closing is None or closing <= 0:
        if run_result.max_level == 0 and not run_result.collided:
            raise UndefinedScore(f"{spec.id}: no closing speed and no intervention")
        closing = max(spec.vut_speed - spec.target_speed, 0.0)
    if not run_result.collided:
        return Score(spec.id, 1.0, 0.0, closing, True)
    reduction = closing - run_result.impact_speed
    points = formula(reduction, closing) if closing > 0 else 0.0
    return Score(spec.id, points, run_result.impact_speed, reduction, False)


# --------------------------------------------------------------------------
# Sweeps


def derive_seed(plan_seed: int, index: int) -> int:
    """Per-run seed: a SeedSequence keyed by (plan seed, run index).

    Depends only on the pair, never on which worker runs the index.
    """
    seq = np.random.SeedSequence(plan_seed, spawn_key=(index,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SweepEntry:
    index: int
    spec: ScenarioSpec
    result: RunResult | None
    score: Score | None
    assignments: tuple = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.score is not None


@dataclass(frozen=True)
class SweepResult:
    plan: SweepPlan
    runs: tuple[SweepEntry, ...]

    def scored(self) -> list[SweepEntry]:
        return [e for e in self.runs if e.ok]


def _run_point(args) -> tuple:
    point, config, seed = args
    try:
        result, _ = run(point.spec, config, seed, record=False)
    except (SimulationAborted, ScenarioError, ValueError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"
    try:
        return result, score(result, point.spec), None
    except UndefinedScore as exc:
        return result, None, f"UndefinedScore: {exc}"


def run_batch(points: Sequence[SweepPoint], config: SimConfig, seeds: Sequence[int],
              parallelism: int = 1) -> list[tuple]:
    jobs = [(p, config, s) for p, s in zip(points, seeds)]
    if parallelism <= 1 or len(jobs) <= 1:
        return [_run_point(j) for j in jobs]
    chunk = max(1, len(jobs) // (parallelism * 4))
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_point, jobs, chunksize=chunk))


def sweep(plan: SweepPlan, config: SimConfig = SimConfig(), parallelism: int = 1,
          cap: int = DEFAULT_RUN_CAP) -> SweepResult:
    """Run every expanded spec; failed runs become entries with ``error`` set."""
    points = expand_sweep_points(plan, cap)
    seeds = [derive_seed(plan.seed, p.index) for p in points]
    outcomes = run_batch(points, config, seeds, parallelism)
    entries = tuple(
        SweepEntry(p.index, p.spec, res, sc, p.assignments, err)
        for p, (res, sc, err) in zip(points, outcomes)
    )
    return SweepResult(plan, entries)


# --------------------------------------------------------------------------
# Sensitivity


@dataclass(frozen=True)
class MarginalLevel:
    level: float
    mean_points: float
    n: int


@dataclass(frozen=True)
class SensitivityReport:
    marginals: dict[str, tuple[MarginalLevel, ...]]
    main_effect: dict[str, float]
    ranking: tuple[str, ...]


def _mean(values: list[float]) -> float:
    # exact for constant input, so a flat response gives a zero spread
    lo, hi = min(values), max(values)
    return lo if lo == hi else math.fsum(values) / len(values)


def main_effects(result: SweepResult, bins: int = MC_BINS) -> SensitivityReport:
    """Spread of marginal mean points per swept parameter.

    Grid plans group runs by level index; for OneAtATime only the runs
    that vary a parameter count toward its marginals. MonteCarlo values
    are binned into ``bins`` equal-width bins over the range.
    """
    plan = result.plan
    groups: dict[str, dict[int, list[float]]] = {r.path: {} for r in plan.ranges}
    centers: dict[str, dict[int, float]] = {r.path: {} for r in plan.ranges}
    ranges = {r.path: r for r in plan.ranges}
    for entry in result.scored():
        for path, idx, value in entry.assignments:
            if plan.strategy is Strategy.MonteCarlo:
                r = ranges[path]
                width = (r.hi - r.lo) / bins
                idx = 0 if width == 0 else min(bins - 1, int((value - r.lo) / width))
                value = r.lo + (idx + 0.5) * width
            groups[path].setdefault(idx, []).append(entry.score.points)
            centers[path][idx] = value

    marginals = {}
    effects = {}
    for path in groups:
        levels = tuple(
            MarginalLevel(centers[path][i], _mean(pts), len(pts))
            for i, pts in sorted(groups[path].items())
        )
        marginals[path] = levels
        means = [m.mean_points for m in levels]
        effects[path] = (max(means) - min(means)) if len(means) > 1 else 0.0
    ranking = tuple(sorted(effects, key=lambda p: (-effects[p], p)))
    return SensitivityReport(marginals, effects, ranking)


def worst_case(result: SweepResult) -> tuple[ScenarioSpec, Score]:
    """Lowest points; ties go to the higher impact speed, then expansion order."""
    scored = result.scored()
    if not scored:
        raise ValueError("worst_case needs at least one scored run")
    worst = min(scored, key=lambda e: (e.score.points, -e.score.impact_speed, e.index))
    return worst.spec, worst.score


# --------------------------------------------------------------------------
# Equivalence-class demonstration


class EcpPreconditionError(ValueError):
    def __init__(self, offsets: list[float], half_span: float):
        self.offsets = offsets
        listed = ", ".join(f"{o:g}" for o in offsets)
        super().__init__(f"offsets outside class A (|offset| must be < {half_span:g} m): {listed}")


def ecp_config(config: SimConfig = SimConfig()) -> SimConfig:
    """Configuration isolating the autonomous full-brake trigger.

    Ideal sensor, ideal brake actuator (same force limit) and no partial
    braking stage, so the first intervention is the last-point L3 trigger.
    """
    return SimConfig(
        dt=config.dt,
        timeout=config.timeout,
        sensor=SensorConfig(max_range=config.sensor.max_range,
                            fov_half_angle=config.sensor.fov_half_angle,
                            mode=SensorMode.IDEAL),
        decision=dataclasses.replace(config.decision, partial_braking=False,
                                     forced_trigger_ttc=None, enabled=True),
        brake=BrakeActuator.ideal(config.brake.max_force),
    )


@dataclass(frozen=True)
class EcpRow:
    offset: float
    situation: str
    escape_side: str | None
    trigger_ttc: float | None
    impact_speed: float
    points: float


@dataclass(frozen=True)
class EcpReport:
    base_id: str
    rows: tuple[EcpRow, ...]
    max_impact_difference: float
    max_trigger_difference: float
    all_class_a: bool


def ecp_demo(base: ScenarioSpec, offsets: Sequence[float], config: SimConfig = SimConfig(),
             seed: int = 0, isolate_trigger: bool = True) -> EcpReport:
    """Run ``base`` at each lateral offset and compare outcomes inside class A."""
    if base.kind is not ScenarioKind.CCRs:
        raise ValueError("ecp_demo expects a CCRs base scenario")
    if not offsets:
        raise ValueError("ecp_demo needs at least one offset")
    half_span = base.overlap_half_span
    bad = [o for o in offsets if not abs(o) < half_span]
    if bad:
        raise EcpPreconditionError(bad, half_span)
    cfg = ecp_config(config) if isolate_trigger else config
    decision = dataclasses.replace(cfg.decision, vut_width=base.vut_width)

    rows = []
    for off in offsets:
        spec = base.replace(id=f"{base.id}_y{off:+.3f}", lateral_offset=off)
        probe = SensorTrack(spec.initial_gap, spec.vut_speed, 0.0, off, spec.target_width, True)
        cls, _, escape = classify_situation(probe, decision)
        result, _ = run(spec, cfg, seed, record=False)
        sc = score(result, spec)
        rows.append(EcpRow(off, cls.value, escape.value if escape else None,
                           result.trigger_ttc, result.impact_speed, sc.points))
    impacts = [r.impact_speed for r in rows]
    triggers = [r.trigger_ttc for r in rows if r.trigger_ttc is not None]
    return EcpReport(
        base_id=base.id,
        rows=tuple(rows),
        max_impact_difference=max(impacts) - min(impacts),
        max_trigger_difference=(max(triggers) - min(triggers)) if triggers else 0.0,
        all_class_a=all(r.situation == SituationClass.A_NoEvasion.value for r in rows),
    )


# --------------------------------------------------------------------------
# Regression baselines


def config_hash(specs: Iterable[ScenarioSpec], config: SimConfig) -> str:
    """Fingerprint of the test definition: scenario specs, step size and timeout.

    Decision and brake parameters belong to the system under test and are
    deliberately excluded; changing them is what a regression run detects.
    """
    payload = {
        "specs": [_spec_dict(s) for s in specs],
        "dt": config.dt,
        "timeout": config.timeout,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _spec_dict(spec: ScenarioSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["kind"] = spec.kind.value
    for k in ("sensor_overrides", "decision_overrides", "brake_overrides"):
        d[k] = [[key, val] for key, val in getattr(spec, k)]
    return d


@dataclass
class Baseline:
    entries: dict[str, dict]
    config_hash: str
    dt: float
    created: str
    impact_speed_tol: float = 0.01
    points_tol: float = 0.001

    def to_json(self) -> str:
        doc = {
            "schema_version": BASELINE_SCHEMA_VERSION,
            "metadata": {"config_hash": self.config_hash, "dt": self.dt, "created": self.created},
            "tolerances": {"impact_speed_tol": self.impact_speed_tol, "points_tol": self.points_tol},
            "entries": self.entries,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Baseline":
        doc = json.loads(text)
        version = doc.get("schema_version")
        if version != BASELINE_SCHEMA_VERSION:
            raise ValueError(f"unsupported baseline schema version {version!r}")
        meta, tol = doc["metadata"], doc["tolerances"]
        return cls(doc["entries"], meta["config_hash"], meta["dt"], meta["created"],
                   tol["impact_speed_tol"], tol["points_tol"])


def _created_stamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def make_baseline(outcomes: Sequence[tuple[RunResult, Score]], chash: str, dt: float,
                  impact_speed_tol: float = 0.01, points_tol: float = 0.001,
                  created: str | None = None) -> Baseline:
    entries = {
        r.spec_id: {"impact_speed": r.impact_speed, "points": s.points, "trigger_ttc": r.trigger_ttc}
        for r, s in outcomes
    }
    return Baseline(entries, chash, dt, created or _created_stamp(), impact_speed_tol, points_tol)


@dataclass
class RegressionReport:
    verdict: str
    exit_code: int
    cases: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {"schema_version": REPORT_SCHEMA_VERSION, "verdict": self.verdict,
               "exit_code": self.exit_code, "cases": self.cases, "diagnostics": self.diagnostics}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @property
    def failed_ids(self) -> list[str]:
        return [c["spec_id"] for c in self.cases if c["status"] != "PASS"]


def regression_compare(current: Sequence[tuple[RunResult, Score]], baseline: Baseline,
                       current_hash: str) -> RegressionReport:
    """PASS per id iff impact speed and points stay within the baseline tolerances."""
    if current_hash != baseline.config_hash:
        return RegressionReport("INCOMPARABLE", EXIT_INCOMPARABLE, diagnostics=[
            f"config hash mismatch: baseline {baseline.config_hash[:12]}, current {current_hash[:12]}"])

    cases = []
    seen = set()
    for result, sc in current:
        seen.add(result.spec_id)
        ref = baseline.entries.get(result.spec_id)
        if ref is None:
            cases.append({"spec_id": result.spec_id, "status": "FAIL", "reason": "missing from baseline"})
            continue
        d_impact = result.impact_speed - ref["impact_speed"]
        d_points = sc.points - ref["points"]
        ok = abs(d_impact) <= baseline.impact_speed_tol and abs(d_points) <= baseline.points_tol
        case = {"spec_id": result.spec_id, "status": "PASS" if ok else "FAIL",
                "impact_speed": result.impact_speed, "baseline_impact_speed": ref["impact_speed"],
                "delta_impact_speed": d_impact, "points": sc.points,
                "baseline_points": ref["points"], "delta_points": d_points}
        if not ok:
            case["reason"] = "outside tolerance"
        cases.append(case)
    for spec_id in sorted(set(baseline.entries) - seen):
        cases.append({"spec_id": spec_id, "status": "FAIL", "reason": "missing from current run"})

    diagnostics = [f"{c['spec_id']}: {c['reason']}" for c in cases if c["status"] != "PASS"]
    if diagnostics:
        return RegressionReport("FAIL", EXIT_REGRESSION, cases, diagnostics)
    return RegressionReport("PASS", EXIT_PASS, cases, diagnostics)


def run_matrix(specs: Sequence[ScenarioSpec], config: SimConfig = SimConfig(), seed: int = 0,
               parallelism: int = 1) -> list[tuple[RunResult, Score]]:
    """Run each spec with seed ``derive_seed(seed, index)``; raises on failure."""
    points = [SweepPoint(i, s) for i, s in enumerate(specs)]
    seeds = [derive_seed(seed, i) for i in range(len(points))]
    out = []
    for p, (res, sc, err) in zip(points, run_batch(points, config, seeds, parallelism)):
        if err is not None:
            raise RuntimeError(f"{p.spec.id}: {err}")
        out.append((res, sc))
    return out

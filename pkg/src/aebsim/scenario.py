"""Scenario specs, the scenario DSL, the protocol test matrix and sweep expansion.

Internal units are SI throughout (m, s, kg, m/s, m/s^2). km/h and degrees
only exist at the DSL and protocol-config boundary.
"""
from __future__ import annotations

import configparser
import dataclasses
import itertools
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterator, Sequence

import numpy as np

KMH = 1.0 / 3.6
AUTO_GAP_MARGIN = 20.0
DEFAULT_SENSOR_RANGE = 80.0
DEFAULT_RUN_CAP = 1_000_000
MAX_PROTOCOL_SPEED_KMH = 300.0


class ScenarioKind(str, Enum):
    CCRs = "CCRs"
    CCRm = "CCRm"
    CCRb = "CCRb"


class Strategy(str, Enum):
    FullGrid = "FullGrid"
    MonteCarlo = "MonteCarlo"
    OneAtATime = "OneAtATime"


class ScenarioError(ValueError):
    """Invalid scenario, sweep plan or protocol configuration."""


class DslError(ScenarioError):
    def __init__(self, kind: str, message: str, line: int = 0, col: int = 0):
        self.kind = kind
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{kind} error: {message}")


class SweepTooLarge(ScenarioError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"sweep expands to {count} runs, exceeding the cap of {cap}")


Overrides = tuple  # sorted tuple of (name, value) pairs


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    kind: ScenarioKind
    vut_speed: float
    target_speed: float = 0.0
    target_decel: float = 0.0
    initial_gap: float = DEFAULT_SENSOR_RANGE + AUTO_GAP_MARGIN
    lateral_offset: float = 0.0
    vut_mass: float = 1500.0
    road_friction: float = 1.0
    vut_width: float = 1.8
    target_width: float = 1.8
    sensor_overrides: Overrides = ()
    decision_overrides: Overrides = ()
    brake_overrides: Overrides = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        for name in ("sensor_overrides", "decision_overrides", "brake_overrides"):
            value = getattr(self, name)
            if isinstance(value, dict):
                value = value.items()
            object.__setattr__(self, name, tuple(sorted(value)))

    @property
    def headway(self) -> float:
        return self.initial_gap

    @property
    def overlap_half_span(self) -> float:
        return 0.5 * (self.vut_width + self.target_width)

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)


def validate_spec(spec: ScenarioSpec) -> ScenarioSpec:
    """Raise ScenarioError unless every ScenarioSpec invariant holds."""
    if spec.vut_speed < 0 or spec.target_speed < 0:
        raise ScenarioError("speeds must be non-negative")
    if spec.target_decel < 0:
        raise ScenarioError("target deceleration is a magnitude and must be >= 0")
    if spec.vut_mass <= 0:
        raise ScenarioError("vut mass must be positive")
    if spec.vut_width <= 0 or spec.target_width <= 0:
        raise ScenarioError("widths must be positive")
    if not 0 < spec.road_friction <= 1.5:
        raise ScenarioError("road friction must lie in (0, 1.5]")
    if not spec.initial_gap > 0:
        raise ScenarioError("initial gap must be positive")
    for v in (spec.vut_speed, spec.target_speed, spec.target_decel, spec.initial_gap,
              spec.lateral_offset, spec.vut_mass, spec.road_friction):
        if not math.isfinite(v):
            raise ScenarioError("scenario values must be finite")
    if spec.kind is ScenarioKind.CCRs:
        if spec.target_speed != 0:
            raise ScenarioError("CCRs requires stationary target")
        if spec.target_decel != 0:
            raise ScenarioError("CCRs requires zero target deceleration")
    elif spec.kind is ScenarioKind.CCRm:
        if not spec.target_speed > 0:
            raise ScenarioError("CCRm requires moving target")
        if spec.target_decel != 0:
            raise ScenarioError("CCRm requires zero target deceleration")
    else:
        if spec.vut_speed != spec.target_speed:
            raise ScenarioError("CCRb requires equal initial speeds")
        if not spec.target_decel > 0:
            raise ScenarioError("CCRb requires positive target deceleration")
    mode = dict(spec.sensor_overrides).get("mode")
    if mode is not None and mode not in ("Ideal", "Noisy"):
        raise ScenarioError(f"unknown sensor mode '{mode}' (Ideal, Noisy)")
    for group, names in (("sensor", SENSOR_FIELDS), ("decision", DECISION_FIELDS),
                         ("brake", BRAKE_FIELDS)):
        for key, _ in getattr(spec, f"{group}_overrides"):
            if key not in names:
                raise ScenarioError(f"unknown parameter path '{group}.{key}'")
    return spec


# --------------------------------------------------------------------------
# Parameter table: DSL path -> (spec attribute or override group, dimension)

_UNITS = {
    "speed": {"kmh": KMH, "mps": 1.0},
    "length": {"m": 1.0},
    "mass": {"kg": 1.0},
    "accel": {"ms2": 1.0},
    "ratio": {"ratio": 1.0},
    "time": {"s": 1.0},
    "angle": {"deg": math.pi / 180.0, "rad": 1.0},
    "jerk": {"ms3": 1.0},
    "force": {"N": 1.0},
}
ALL_UNITS = {u for table in _UNITS.values() for u in table}
# Canonical unit used when printing a dimension back to DSL (exact round trip).
_PRINT_UNIT = {"speed": "mps", "length": "m", "mass": "kg", "accel": "ms2", "ratio": "ratio",
               "time": "s", "angle": "rad", "jerk": "ms3", "force": "N"}

_SPEC_PARAMS = {
    "vut.speed": ("vut_speed", "speed"),
    "vut.mass": ("vut_mass", "mass"),
    "vut.width": ("vut_width", "length"),
    "target.speed": ("target_speed", "speed"),
    "target.decel": ("target_decel", "accel"),
    "target.lateral_offset": ("lateral_offset", "length"),
    "target.width": ("target_width", "length"),
    "road.friction": ("road_friction", "ratio"),
    "initial_gap": ("initial_gap", "length"),
    "headway": ("initial_gap", "length"),
}
SENSOR_FIELDS = {
    "max_range": "length", "fov_half_angle": "angle", "range_noise_sigma": "length",
    "rate_noise_sigma": "speed", "dropout_prob": "ratio", "latency": "time", "mode": "string",
}
DECISION_FIELDS = {
    "ttc_warn": "time", "ttc_partial": "time", "partial_decel": "accel", "full_decel": "accel",
    "lateral_accel_limit": "accel", "forced_trigger_ttc": "time",
    "latch_full_brake": "flag", "partial_braking": "flag", "enabled": "flag",
}
BRAKE_FIELDS = {"delay": "time", "jerk_limit": "jerk", "max_force": "force"}
_GROUPS = {"sensor": SENSOR_FIELDS, "decision": DECISION_FIELDS, "brake": BRAKE_FIELDS}
_ATTR_ALIASES = {attr: path for path, (attr, _) in _SPEC_PARAMS.items() if path != "headway"}


def canonical_path(path: str) -> str:
    """Map a DSL path or a bare spec attribute name to its canonical DSL path."""
    if path in _ATTR_ALIASES:
        return _ATTR_ALIASES[path]
    if path in _SPEC_PARAMS:
        return "initial_gap" if path == "headway" else path
    group, _, name = path.partition(".")
    if group in _GROUPS and name in _GROUPS[group] and _GROUPS[group][name] not in ("string", "flag"):
        return path
    raise ScenarioError(f"unknown parameter path '{path}'")


def path_dimension(path: str) -> str:
    path = canonical_path(path)
    if path in _SPEC_PARAMS:
        return _SPEC_PARAMS[path][1]
    group, _, name = path.partition(".")
    return _GROUPS[group][name]


def get_parameter(spec: ScenarioSpec, path: str) -> float | None:
    path = canonical_path(path)
    if path in _SPEC_PARAMS:
        return getattr(spec, _SPEC_PARAMS[path][0])
    group, _, name = path.partition(".")
    return dict(getattr(spec, f"{group}_overrides")).get(name)


def apply_parameter(spec: ScenarioSpec, path: str, value: float) -> ScenarioSpec:
    """Return ``spec`` with one parameter set (SI value).

    In CCRb the two vehicles share their initial speed, so setting either
    speed sets both.
    """
    path = canonical_path(path)
    if path in _SPEC_PARAMS:
        attr = _SPEC_PARAMS[path][0]
        changes = {attr: value}
        if spec.kind is ScenarioKind.CCRb and attr in ("vut_speed", "target_speed"):
            changes = {"vut_speed": value, "target_speed": value}
        return spec.replace(**changes)
    group, _, name = path.partition(".")
    attr = f"{group}_overrides"
    items = dict(getattr(spec, attr))
    items[name] = value
    return spec.replace(**{attr: tuple(sorted(items.items()))})


# --------------------------------------------------------------------------
# Sweep plan types


@dataclass(frozen=True)
class ParameterRange:
    path: str
    lo: float
    hi: float
    step: float | None = None
    sample_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "path", canonical_path(self.path))
        if not self.lo <= self.hi:
            raise ScenarioError(f"range for {self.path}: lo > hi")
        if self.step is None and self.sample_count is None:
            raise ScenarioError(f"range for {self.path} needs a step or a sample count")
        if self.step is not None and not self.step > 0:
            raise ScenarioError(f"range for {self.path}: step must be positive")
        if self.sample_count is not None and self.sample_count < 1:
            raise ScenarioError(f"range for {self.path}: sample count must be >= 1")

    @property
    def level_count(self) -> int:
        if self.step is None:
            raise ScenarioError(f"range for {self.path} has no grid step")
        return int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1

    def levels(self) -> list[float]:
        return [self.lo + i * self.step for i in range(self.level_count)]


@dataclass(frozen=True)
class SweepPlan:
    base: ScenarioSpec
    ranges: tuple[ParameterRange, ...]
    strategy: Strategy = Strategy.FullGrid
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "ranges", tuple(self.ranges))
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioError("sweep seed must be a 64-bit unsigned integer")
        paths = [r.path for r in self.ranges]
        dupes = sorted({p for p in paths if paths.count(p) > 1})
        if dupes:
            raise ScenarioError(f"duplicate sweep parameter path '{dupes[0]}'")
        if self.strategy is Strategy.MonteCarlo:
            if any(r.sample_count is None for r in self.ranges):
                raise ScenarioError("MonteCarlo sweeps need a sample count on every range")
            if len({r.sample_count for r in self.ranges}) > 1:
                raise ScenarioError("MonteCarlo ranges must share one sample count")
        elif any(r.step is None for r in self.ranges):
            raise ScenarioError(f"{self.strategy.value} sweeps need a step on every range")

    def run_count(self) -> int:
        if not self.ranges:
            return 1
        if self.strategy is Strategy.FullGrid:
            return math.prod(r.level_count for r in self.ranges)
        if self.strategy is Strategy.OneAtATime:
            return 1 + sum(r.level_count for r in self.ranges)
        return self.ranges[0].sample_count


@dataclass(frozen=True)
class SweepPoint:
    """One expanded run: the spec plus the (path, level index, value) it varies."""

    index: int
    spec: ScenarioSpec
    assignments: tuple[tuple[str, int, float], ...] = ()


def expand_sweep_points(plan: SweepPlan, cap: int = DEFAULT_RUN_CAP) -> list[SweepPoint]:
    count = plan.run_count()
    if count > cap:
        raise SweepTooLarge(count, cap)

    combos: Iterator[tuple[tuple[str, int, float], ...]]
    if plan.strategy is Strategy.FullGrid:
        per_range = [[(r.path, i, v) for i, v in enumerate(r.levels())] for r in plan.ranges]
        combos = itertools.product(*per_range)
    elif plan.strategy is Strategy.OneAtATime:
        def oat():
            yield ()
            for r in plan.ranges:
                for i, v in enumerate(r.levels()):
                    yield ((r.path, i, v),)
        combos = oat()
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(plan.seed)))
        u = rng.random((count, len(plan.ranges)))
        combos = (
            tuple((r.path, -1, r.lo + (r.hi - r.lo) * float(u[n, k]))
                  for k, r in enumerate(plan.ranges))
            for n in range(count)
        )

    width = max(4, len(str(count - 1)))
    points = []
    for index, assignment in enumerate(combos):
        spec = plan.base
        for path, _, value in assignment:
            spec = apply_parameter(spec, path, value)
        spec = spec.replace(id=f"{plan.base.id}_{index:0{width}d}")
        points.append(SweepPoint(index, validate_spec(spec), assignment))
    return points


def expand_sweep(plan: SweepPlan, cap: int = DEFAULT_RUN_CAP) -> list[ScenarioSpec]:
    """Concrete run list for ``plan``, in documented order.

    FullGrid iterates the first range slowest; OneAtATime emits the base
    spec first and then each range's levels in range order; MonteCarlo draws
    uniform samples from a Philox stream seeded by ``plan.seed``.
    """
    return [p.spec for p in expand_sweep_points(plan, cap)]


# --------------------------------------------------------------------------
# DSL lexer / parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<dotdot>\.\.)
  | (?P<number>[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?(?![A-Za-z_\d]|\.(?!\.)))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>[{}:;])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            # a number glued to a unit ("50kmh") lands here too
            num = re.match(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?", text[pos:])
            if num:
                raise DslError("syntax", "number must be separated from its unit by whitespace", line, col)
            raise DslError("syntax", f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, default_sensor_range: float):
        self.toks = _tokenize(text)
        self.i = 0
        self.default_sensor_range = default_sensor_range

    # -- token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> _Tok:
        tok = self.tok
        self.i += 1
        return tok

    def error(self, kind: str, message: str, tok: _Tok | None = None) -> DslError:
        tok = tok or self.tok
        return DslError(kind, message, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise self.error("syntax", f"expected {want}, found {got}")
        return self.advance()

    def at(self, kind: str, text: str | None = None) -> bool:
        return self.tok.kind == kind and (text is None or self.tok.text == text)

    def skip_semi(self):
        if self.at("punct", ";"):
            self.advance()

    # -- values
    def number(self) -> tuple[float, _Tok]:
        tok = self.expect("number")
        return float(tok.text), tok

    def unit(self, num_tok: _Tok, required: bool = True) -> str | None:
        tok = self.tok
        if tok.kind == "ident" and tok.text in ALL_UNITS:
            self.advance()
            return tok.text
        if tok.kind == "ident" and not (self.peek().kind == "punct" and self.peek().text == ":") \
                and tok.text not in ("step", "samples"):
            raise self.error("unit", f"unknown unit '{tok.text}'")
        if required:
            raise self.error("unit", f"missing unit after {num_tok.text}", num_tok)
        return None

    def convert(self, value: float, unit: str, dimension: str, tok: _Tok) -> float:
        table = _UNITS.get(dimension, {})
        if unit not in table:
            allowed = ", ".join(sorted(table)) or "none"
            raise self.error("unit", f"unit '{unit}' does not fit a {dimension} (use {allowed})", tok)
        return value * table[unit]

    def value(self, path: str, dimension: str, name_tok: _Tok):
        tok = self.tok
        if dimension == "string":
            return json_unquote(self.expect("string").text)
        if dimension == "flag":
            t = self.expect("ident")
            if t.text not in ("true", "false"):
                raise self.error("semantic", f"{path} expects true or false", t)
            return t.text == "true"
        if tok.kind == "ident" and tok.text == "auto":
            if path != "initial_gap":
                raise self.error("semantic", f"'auto' is only allowed for initial_gap", tok)
            self.advance()
            return "auto"
        if tok.kind == "string":
            raise self.error("semantic", f"{path} expects a number with a unit", tok)
        value, num_tok = self.number()
        unit = self.unit(num_tok)
        return self.convert(value, unit, dimension, num_tok)

    # -- grammar
    def document(self):
        fields, scenario_tok, kind, name = self.scenario()
        plan_ranges, strategy, seed, sweep_tok = None, None, 0, None
        if self.at("ident", "sweep"):
            sweep_tok = self.tok
            plan_ranges, strategy, seed = self.sweep()
        if not self.at("eof"):
            raise self.error("syntax", f"unexpected {self.tok.text!r} after document")
        spec = self.build_spec(kind, name, fields, scenario_tok)
        if plan_ranges is None:
            return spec, None
        try:
            if strategy is None:
                strategy = (Strategy.MonteCarlo if plan_ranges and all(r.sample_count is not None for r in plan_ranges)
                            else Strategy.FullGrid)
            plan = SweepPlan(spec, tuple(plan_ranges), strategy, seed)
        except ScenarioError as exc:
            raise DslError("semantic", str(exc), sweep_tok.line, sweep_tok.col) from None
        return spec, plan

    def scenario(self):
        scenario_tok = self.expect("ident", "scenario")
        kind_tok = self.expect("ident")
        kinds = {"ccrs": ScenarioKind.CCRs, "ccrm": ScenarioKind.CCRm, "ccrb": ScenarioKind.CCRb}
        if kind_tok.text not in kinds:
            raise self.error("syntax", f"unknown scenario kind '{kind_tok.text}' (ccrs, ccrm, ccrb)", kind_tok)
        name = json_unquote(self.expect("string").text)
        if not name:
            raise self.error("semantic", "scenario id must not be empty", scenario_tok)
        self.expect("punct", "{")
        fields: dict[str, tuple[object, _Tok]] = {}
        while not self.at("punct", "}"):
            name_tok = self.expect("ident")
            if self.at("punct", "{"):
                self.advance()
                group = name_tok.text
                while not self.at("punct", "}"):
                    key_tok = self.expect("ident")
                    self.expect("punct", ":")
                    path = f"{group}.{key_tok.text}"
                    self.store(fields, path, key_tok)
                    self.skip_semi()
                self.expect("punct", "}")
            else:
                self.expect("punct", ":")
                self.store(fields, name_tok.text, name_tok)
            self.skip_semi()
        self.expect("punct", "}")
        return fields, scenario_tok, kinds[kind_tok.text], name

    def store(self, fields, path: str, key_tok: _Tok):
        dimension = self.dimension_of(path, key_tok)
        value = self.value(path, dimension, key_tok)
        if path in fields:
            raise self.error("semantic", f"duplicate parameter '{path}'", key_tok)
        fields[path] = (value, key_tok)

    def dimension_of(self, path: str, tok: _Tok) -> str:
        if path in _SPEC_PARAMS:
            return _SPEC_PARAMS[path][1]
        group, _, name = path.partition(".")
        if group in _GROUPS and name in _GROUPS[group]:
            return _GROUPS[group][name]
        raise self.error("semantic", f"unknown parameter path '{path}'", tok)

    def build_spec(self, kind: ScenarioKind, name: str, fields, scenario_tok: _Tok) -> ScenarioSpec:
        values = {path: v for path, (v, _) in fields.items()}
        if "headway" in values and "initial_gap" in values:
            raise self.error("semantic", "give either headway or initial_gap, not both", fields["headway"][1])
        if "headway" in values and kind is not ScenarioKind.CCRb:
            raise self.error("semantic", "headway is only defined for CCRb", fields["headway"][1])

        vut_speed = values.get("vut.speed")
        if vut_speed is None:
            raise self.error("semantic", "vut.speed is required", scenario_tok)
        defaults = {
            ScenarioKind.CCRs: {"target.speed": 0.0, "target.decel": 0.0},
            ScenarioKind.CCRm: {"target.speed": 20.0 * KMH, "target.decel": 0.0},
            ScenarioKind.CCRb: {"target.speed": vut_speed, "target.decel": 6.0, "headway": 12.0},
        }[kind]
        for path, v in defaults.items():
            if path == "headway":
                if "initial_gap" not in values:
                    values.setdefault("headway", v)
            else:
                values.setdefault(path, v)

        sensor = {k.partition(".")[2]: v for k, v in values.items() if k.startswith("sensor.")}
        decision = {k.partition(".")[2]: v for k, v in values.items() if k.startswith("decision.")}
        brake = {k.partition(".")[2]: v for k, v in values.items() if k.startswith("brake.")}
        gap = values.get("headway", values.get("initial_gap", "auto"))
        if gap == "auto":
            gap = float(sensor.get("max_range", self.default_sensor_range)) + AUTO_GAP_MARGIN

        kwargs = dict(id=name, kind=kind, initial_gap=gap,
                      sensor_overrides=sensor, decision_overrides=decision, brake_overrides=brake)
        for path, (attr, _) in _SPEC_PARAMS.items():
            if path in values and path not in ("headway", "initial_gap"):
                kwargs[attr] = values[path]
        try:
            return validate_spec(ScenarioSpec(**kwargs))
        except ScenarioError as exc:
            raise DslError("semantic", str(exc), scenario_tok.line, scenario_tok.col) from None

    def sweep(self):
        self.expect("ident", "sweep")
        self.expect("punct", "{")
        ranges: list[ParameterRange] = []
        seen: set[str] = set()
        strategy, seed = None, 0
        strategies = {"grid": Strategy.FullGrid, "fullgrid": Strategy.FullGrid,
                      "montecarlo": Strategy.MonteCarlo, "oneatatime": Strategy.OneAtATime}
        while not self.at("punct", "}"):
            path_tok = self.expect("ident")
            self.expect("punct", ":")
            if path_tok.text == "strategy":
                t = self.expect("ident")
                if t.text.lower() not in strategies:
                    raise self.error("semantic", f"unknown strategy '{t.text}'", t)
                strategy = strategies[t.text.lower()]
            elif path_tok.text == "seed":
                t = self.expect("number")
                if not re.fullmatch(r"\d+", t.text) or int(t.text) >= 2 ** 64:
                    raise self.error("semantic", "seed must be a 64-bit unsigned integer", t)
                seed = int(t.text)
            else:
                ranges.append(self.sweep_range(path_tok, seen))
            self.skip_semi()
        self.expect("punct", "}")
        return ranges, strategy, seed

    def sweep_range(self, path_tok: _Tok, seen: set[str]) -> ParameterRange:
        try:
            path = canonical_path(path_tok.text)
        except ScenarioError:
            raise self.error("semantic", f"unknown parameter path '{path_tok.text}'", path_tok) from None
        if path in seen:
            raise self.error("semantic", f"duplicate sweep parameter path '{path}'", path_tok)
        seen.add(path)
        dimension = path_dimension(path)
        lo, lo_tok = self.number()
        self.expect("dotdot")
        hi, hi_tok = self.number()
        unit = self.unit(hi_tok, required=False)
        step = samples = None
        if self.at("ident", "step"):
            self.advance()
            step, step_tok = self.number()
            step_unit = self.unit(step_tok, required=unit is None)
            if unit is not None and step_unit is not None and step_unit != unit:
                raise self.error("unit", "range bounds and step must share one unit", step_tok)
            unit = unit or step_unit
        elif self.at("ident", "samples"):
            self.advance()
            n_tok = self.expect("number")
            if not re.fullmatch(r"\d+", n_tok.text):
                raise self.error("semantic", "samples must be a positive integer", n_tok)
            samples = int(n_tok.text)
            if unit is None:
                unit = self.unit(n_tok, required=False)
            if unit is None:
                raise self.error("unit", f"missing unit for range of {path}", hi_tok)
        else:
            raise self.error("syntax", "expected 'step' or 'samples'")
        conv = lambda x: self.convert(x, unit, dimension, lo_tok)  # noqa: E731
        try:
            return ParameterRange(path, conv(lo), conv(hi),
                                  conv(step) if step is not None else None, samples)
        except ScenarioError as exc:
            raise self.error("semantic", str(exc), path_tok) from None


def json_unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


def parse_scenario(text: str, default_sensor_range: float = DEFAULT_SENSOR_RANGE
                   ) -> tuple[ScenarioSpec, SweepPlan | None]:
    """Parse a DSL document into a validated spec and optional sweep plan.

    >>> spec, plan = parse_scenario('scenario ccrs "c50" { vut { speed: 50 kmh } }')
    >>> round(spec.vut_speed, 6)
    13.888889
    """
    return _Parser(text, default_sensor_range).document()


# --------------------------------------------------------------------------
# DSL printer


def _fmt(value: float, dimension: str) -> str:
    return f"{float(value)!r} {_PRINT_UNIT[dimension]}"


def render_scenario(spec: ScenarioSpec, plan: SweepPlan | None = None) -> str:
    """Render ``spec`` (and ``plan``) as DSL text that parses back to the same values."""
    name = spec.id.replace("\\", "\\\\").replace('"', '\\"')
    lines = [f'scenario {spec.kind.value.lower()} "{name}" {{']
    lines.append(f"  vut {{ speed: {_fmt(spec.vut_speed, 'speed')}; mass: {_fmt(spec.vut_mass, 'mass')}; "
                 f"width: {_fmt(spec.vut_width, 'length')} }}")
    target = [f"speed: {_fmt(spec.target_speed, 'speed')}"]
    if spec.kind is ScenarioKind.CCRb:
        target.append(f"decel: {_fmt(spec.target_decel, 'accel')}")
    target.append(f"lateral_offset: {_fmt(spec.lateral_offset, 'length')}")
    target.append(f"width: {_fmt(spec.target_width, 'length')}")
    lines.append(f"  target {{ {'; '.join(target)} }}")
    lines.append(f"  road {{ friction: {_fmt(spec.road_friction, 'ratio')} }}")
    gap_key = "headway" if spec.kind is ScenarioKind.CCRb else "initial_gap"
    lines.append(f"  {gap_key}: {_fmt(spec.initial_gap, 'length')}")
    for group, table in _GROUPS.items():
        items = getattr(spec, f"{group}_overrides")
        if not items:
            continue
        parts = []
        for key, value in items:
            dim = table[key]
            if dim == "string":
                parts.append(f'{key}: "{value.value if isinstance(value, Enum) else value}"')
            elif dim == "flag":
                parts.append(f"{key}: {'true' if value else 'false'}")
            else:
                parts.append(f"{key}: {_fmt(value, dim)}")
        lines.append(f"  {group} {{ {'; '.join(parts)} }}")
    lines.append("}")
    if plan is not None:
        lines.append("sweep {")
        lines.append(f"  strategy: {plan.strategy.value.lower()}")
        lines.append(f"  seed: {plan.seed}")
        for r in plan.ranges:
            unit = _PRINT_UNIT[path_dimension(r.path)]
            if r.step is not None and plan.strategy is not Strategy.MonteCarlo:
                tail = f"step {float(r.step)!r} {unit}"
            else:
                tail = f"{unit} samples {r.sample_count}"
            lines.append(f"  {r.path}: {float(r.lo)!r} .. {float(r.hi)!r} {tail}")
        lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Protocol test matrix


@dataclass(frozen=True)
class TestMatrix:
    __test__ = False  # not a pytest class

    entries: tuple[ScenarioSpec, ...] = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def _floats(value: str) -> list[float]:
    return [float(x) for x in re.split(r"[,\s]+", value.strip()) if x]


def load_protocol_config(source: str | None = None) -> configparser.ConfigParser:
    """Read a protocol config (INI text). ``None`` loads the bundled default."""
    if source is None:
        source = resources.files("aebsim").joinpath("data/euroncap_default.ini").read_text()
    cp = configparser.ConfigParser()
    cp.read_string(source)
    return cp


def _id_num(x: float) -> str:
    return f"{x:g}".replace(".", "p").replace("-", "m")


def build_euroncap_matrix(protocol_config: configparser.ConfigParser | str | None = None,
                          sensor_range: float = DEFAULT_SENSOR_RANGE) -> TestMatrix:
    """Expand a protocol config into scenario specs.

    Order: CCRs by VUT speed; CCRm by VUT speed then target speed; CCRb by
    speed, headway, then target deceleration. Ids are ``ccrs_v<kmh>``,
    ``ccrm_v<kmh>`` (``_t<kmh>`` appended when several target speeds are
    configured) and ``ccrb_h<m>_d<ms2>`` (``ccrb_v<kmh>_...`` with several
    speeds).
    """
    cp = protocol_config if isinstance(protocol_config, configparser.ConfigParser) \
        else load_protocol_config(protocol_config)

    common = dict(cp["common"]) if cp.has_section("common") else {}
    base = dict(
        vut_mass=float(common.get("vut_mass_kg", 1500.0)),
        vut_width=float(common.get("vut_width_m", 1.8)),
        target_width=float(common.get("target_width_m", 1.8)),
        road_friction=float(common.get("road_friction", 1.0)),
    )
    auto_gap = sensor_range + AUTO_GAP_MARGIN

    def grid(section: str, key: str) -> list[float]:
        if not cp.has_option(section, key):
            raise ScenarioError(f"protocol config lacks {section}.{key}")
        values = _floats(cp.get(section, key))
        if not values:
            raise ScenarioError(f"empty grid: {section}.{key}")
        return values

    def speed_grid(section: str, key: str) -> list[float]:
        values = grid(section, key)
        for v in values:
            if not 0 <= v <= MAX_PROTOCOL_SPEED_KMH:
                raise ScenarioError(f"{section}.{key}: speed {v:g} km/h outside [0, 300] km/h")
        return values

    entries = []
    if cp.has_section("ccrs"):
        for v in speed_grid("ccrs", "vut_speeds_kmh"):
            entries.append(ScenarioSpec(f"ccrs_v{_id_num(v)}", ScenarioKind.CCRs, v * KMH,
                                        initial_gap=auto_gap, **base))
    if cp.has_section("ccrm"):
        targets = speed_grid("ccrm", "target_speeds_kmh")
        for v in speed_grid("ccrm", "vut_speeds_kmh"):
            for vt in targets:
                sid = f"ccrm_v{_id_num(v)}" + (f"_t{_id_num(vt)}" if len(targets) > 1 else "")
                entries.append(ScenarioSpec(sid, ScenarioKind.CCRm, v * KMH, vt * KMH,
                                            initial_gap=auto_gap, **base))
    if cp.has_section("ccrb"):
        speeds = speed_grid("ccrb", "speeds_kmh")
        headways = grid("ccrb", "headways_m")
        decels = grid("ccrb", "target_decels_ms2")
        for v in speeds:
            for h in headways:
                for d in decels:
                    sid = "ccrb_" + (f"v{_id_num(v)}_" if len(speeds) > 1 else "") + \
                          f"h{_id_num(h)}_d{_id_num(d)}"
                    entries.append(ScenarioSpec(sid, ScenarioKind.CCRb, v * KMH, v * KMH, d,
                                                initial_gap=h, **base))
    if not entries:
        raise ScenarioError("protocol config defines no scenario kinds")
    for spec in entries:
        validate_spec(spec)
    return TestMatrix(tuple(entries))


def matrix_from_specs(specs: Sequence[ScenarioSpec]) -> TestMatrix:
    return TestMatrix(tuple(validate_spec(s) for s in specs))

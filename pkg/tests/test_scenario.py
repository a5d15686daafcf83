import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from aebsim.scenario import (
    KMH, DslError, ParameterRange, ScenarioError, ScenarioKind, ScenarioSpec, Strategy, SweepPlan,
    SweepTooLarge, build_euroncap_matrix, expand_sweep, expand_sweep_points, parse_scenario,
    render_scenario, validate_spec,
)

DSL = Path(__file__).parent / "data" / "dsl"
CCRs, CCRm, CCRb = ScenarioKind.CCRs, ScenarioKind.CCRm, ScenarioKind.CCRb

# Expected SI values, written out by hand from the files' literals.
GOLDEN = {
    "01_ccrs_minimal.dsl": dict(id="c50", kind=CCRs, vut_speed=50 / 3.6, target_speed=0.0, initial_gap=100.0),
    "02_ccrs_commented.dsl": dict(id="ccrs_v30", kind=CCRs, vut_speed=30 / 3.6, vut_mass=1650.0,
                                  vut_width=1.9, lateral_offset=0.4, initial_gap=60.0),
    "03_ccrm_default_target.dsl": dict(id="ccrm_v60", kind=CCRm, vut_speed=60 / 3.6, target_speed=20 / 3.6),
    "04_ccrm_explicit.dsl": dict(id="ccrm_v80_t30", kind=CCRm, vut_speed=80 / 3.6, target_speed=30 / 3.6,
                                 target_width=2.0, road_friction=0.8, initial_gap=100.0),
    "05_ccrb_defaults.dsl": dict(id="ccrb_default", kind=CCRb, vut_speed=50 / 3.6, target_speed=50 / 3.6,
                                 target_decel=6.0, initial_gap=12.0),
    "06_ccrb_headway.dsl": dict(id="ccrb_h40_d2", kind=CCRb, target_decel=2.0, initial_gap=40.0),
    "07_overrides.dsl": dict(id="noisy50", initial_gap=140.0, sensor_overrides=(
        ("dropout_prob", 0.05), ("fov_half_angle", math.pi / 6), ("latency", 0.05), ("max_range", 120.0),
        ("mode", "Noisy"), ("range_noise_sigma", 0.2)),
        decision_overrides=(("full_decel", 8.0), ("latch_full_brake", False), ("ttc_warn", 3.0)),
        brake_overrides=(("delay", 0.2), ("jerk_limit", 40.0), ("max_force", 12000.0))),
    "08_sweep_grid.dsl": dict(id="grid"),
    "09_sweep_fullgrid_two.dsl": dict(id="grid2"),
    "10_sweep_montecarlo.dsl": dict(id="mc", initial_gap=40.0),
    "11_sweep_oneatatime.dsl": dict(id="oat"),
    "12_forced_trigger.dsl": dict(id="forced", initial_gap=30.0, sensor_overrides=(("mode", "Ideal"),),
                                  decision_overrides=(("forced_trigger_ttc", 0.5), ("partial_braking", False))),
}
GOLDEN_PLANS = {
    "08_sweep_grid.dsl": (Strategy.FullGrid, 0, [("target.lateral_offset", -0.5, 0.5, 0.25, None)], 5),
    "09_sweep_fullgrid_two.dsl": (Strategy.FullGrid, 0, [("vut.speed", 45 / 3.6, 55 / 3.6, 5 / 3.6, None),
                                                         ("target.lateral_offset", 0.0, 1.0, 0.25, None)], 15),
    "10_sweep_montecarlo.dsl": (Strategy.MonteCarlo, 7, [("target.lateral_offset", -0.5, 0.5, None, 100)], 100),
    "11_sweep_oneatatime.dsl": (Strategy.OneAtATime, 0, [("target.lateral_offset", 0.0, 0.75, 0.375, None),
                                                         ("vut.speed", 49.5 / 3.6, 50.5 / 3.6, 0.5 / 3.6, None)], 7),
}
MALFORMED = {
    "01_missing_unit.dsl": ("unit", 2, 16),
    "02_unknown_unit.dsl": ("unit", 2, 19),
    "03_ccrs_moving_target.dsl": ("semantic", 1, 1),
    "04_unbalanced_brace.dsl": ("syntax", 4, 1),
    "05_duplicate_sweep_path.dsl": ("semantic", 4, 3),
    "06_unknown_path.dsl": ("semantic", 2, 24),
    "07_unknown_kind.dsl": ("syntax", 1, 10),
    "08_glued_unit.dsl": ("syntax", 2, 16),
}


def check_golden(name):
    spec, plan = parse_scenario((DSL / "valid" / name).read_text())
    for attr, want in GOLDEN[name].items():
        got = getattr(spec, attr)
        if isinstance(want, float):
            assert got == pytest.approx(want, rel=1e-12), attr
        else:
            assert got == want, attr
    if name in GOLDEN_PLANS:
        strategy, seed, ranges, count = GOLDEN_PLANS[name]
        assert (plan.strategy, plan.seed) == (strategy, seed)
        for r, (path, lo, hi, step, n) in zip(plan.ranges, ranges):
            assert r.path == path
            assert (r.lo, r.hi) == pytest.approx((lo, hi))
            assert r.step == (None if step is None else pytest.approx(step))
            assert r.sample_count == n
        assert plan.run_count() == count
        assert len(expand_sweep(plan)) == count
    else:
        assert plan is None
    return spec, plan


def check_malformed(name):
    with pytest.raises(DslError) as info:
        parse_scenario((DSL / "malformed" / name).read_text())
    kind, line, col = MALFORMED[name]
    err = info.value
    assert (err.kind, err.line, err.col) == (kind, line, col)
    assert str(err).startswith(f"{line}:{col}: {kind} error")
    return err


def test_corpus_is_complete():
    assert sorted(p.name for p in (DSL / "valid").glob("*.dsl")) == sorted(GOLDEN)
    assert sorted(p.name for p in (DSL / "malformed").glob("*.dsl")) == sorted(MALFORMED)


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_golden_file(name):
    spec, plan = check_golden(name)
    assert parse_scenario(render_scenario(spec, plan)) == (spec, plan)


@pytest.mark.parametrize("name", sorted(MALFORMED))
def test_malformed_file(name):
    check_malformed(name)


def test_parse_inline_examples():
    spec, plan = parse_scenario('scenario ccrs "c50" { vut { speed: 50 kmh } target { speed: 0 kmh } }')
    assert spec.kind is CCRs and spec.vut_speed == pytest.approx(13.888889, abs=1e-6) and plan is None
    with pytest.raises(DslError, match="CCRs requires stationary target"):
        parse_scenario('scenario ccrs "x" { vut { speed: 50 kmh } target { speed: 20 kmh } }')
    _, plan = parse_scenario('scenario ccrs "x" { vut { speed: 50 kmh } }\n'
                             'sweep { target.lateral_offset: -0.5 .. 0.5 step 0.25 m }')
    assert len(plan.ranges) == 1 and plan.ranges[0].level_count == 5


def test_auto_gap_follows_sensor_range():
    spec, _ = parse_scenario('scenario ccrs "x" { vut { speed: 50 kmh } initial_gap: auto }',
                             default_sensor_range=150.0)
    assert spec.initial_gap == 170.0


def test_spec_invariants():
    with pytest.raises(ScenarioError, match="CCRm requires moving target"):
        validate_spec(ScenarioSpec("x", CCRm, 20.0, target_speed=0.0))
    with pytest.raises(ScenarioError, match="equal initial speeds"):
        validate_spec(ScenarioSpec("x", CCRb, 20.0, target_speed=10.0, target_decel=2.0))
    with pytest.raises(ScenarioError):
        validate_spec(ScenarioSpec("x", CCRs, 10.0, road_friction=0.0))


# -- matrix

def test_default_matrix():
    entries = list(build_euroncap_matrix())
    kinds = [e.kind for e in entries]
    assert kinds.count(CCRs) == 9 and kinds.count(CCRb) == 4 and kinds.count(CCRm) == 11
    assert entries[0].id == "ccrs_v10"
    assert {e.id for e in entries if e.kind is CCRb} == {"ccrb_h12_d2", "ccrb_h12_d6", "ccrb_h40_d2", "ccrb_h40_d6"}
    for e in entries:
        validate_spec(e)
        assert 10 * KMH - 1e-9 <= e.vut_speed <= 80 * KMH + 1e-9
    assert [e.id for e in build_euroncap_matrix()] == [e.id for e in entries]


def test_matrix_errors():
    with pytest.raises(ScenarioError, match="empty grid"):
        build_euroncap_matrix("[ccrm]\nvut_speeds_kmh =\ntarget_speeds_kmh = 20\n")
    with pytest.raises(ScenarioError):
        build_euroncap_matrix("[ccrs]\nvut_speeds_kmh = 10, 400\n")


@given(st.lists(st.integers(1, 300), min_size=1, max_size=6, unique=True))
def test_matrix_from_random_grid(speeds):
    cfg = "[ccrs]\nvut_speeds_kmh = " + ", ".join(map(str, speeds)) + "\n"
    entries = list(build_euroncap_matrix(cfg))
    for e in entries:
        validate_spec(e)
        assert 0 <= e.vut_speed <= 300 * KMH + 1e-9


# -- sweep expansion

BASE = ScenarioSpec("b", CCRs, 50 * KMH)
R3 = ParameterRange("vut.speed", 45 * KMH, 55 * KMH, 5 * KMH)
R5 = ParameterRange("target.lateral_offset", -0.5, 0.5, 0.25)


def test_expansion_counts():
    assert len(expand_sweep(SweepPlan(BASE, (R3, R5), Strategy.FullGrid, 0))) == 15
    assert len(expand_sweep(SweepPlan(BASE, (R3, R5), Strategy.OneAtATime, 0))) == 9


def test_fullgrid_order_first_range_slowest():
    specs = expand_sweep(SweepPlan(BASE, (R3, R5), Strategy.FullGrid, 0))
    assert [s.lateral_offset for s in specs[:5]] == pytest.approx([-0.5, -0.25, 0.0, 0.25, 0.5])
    assert {s.vut_speed for s in specs[:5]} == {45 * KMH}


def test_oneatatime_keeps_others_at_base():
    specs = expand_sweep(SweepPlan(BASE, (R3, R5), Strategy.OneAtATime, 0))
    assert specs[0].vut_speed == BASE.vut_speed and specs[0].lateral_offset == 0.0
    assert all(s.lateral_offset == 0.0 for s in specs[1:4])
    assert all(s.vut_speed == BASE.vut_speed for s in specs[4:])


def test_montecarlo_is_deterministic():
    r = ParameterRange("target.lateral_offset", -0.5, 0.5, sample_count=100)
    plan = SweepPlan(BASE, (r,), Strategy.MonteCarlo, 7)
    a, b = expand_sweep(plan), expand_sweep(plan)
    assert len(a) == 100 and a == b
    assert all(-0.5 <= s.lateral_offset <= 0.5 for s in a)
    assert expand_sweep(SweepPlan(BASE, (r,), Strategy.MonteCarlo, 8)) != a


def test_cap_refusal_reports_count():
    with pytest.raises(SweepTooLarge) as info:
        expand_sweep(SweepPlan(BASE, (R3, R5), Strategy.FullGrid, 0), cap=10)
    assert info.value.count == 15


def test_plan_invariants():
    with pytest.raises(ScenarioError):
        SweepPlan(BASE, (R3, R3), Strategy.FullGrid, 0)
    with pytest.raises(ScenarioError):
        SweepPlan(BASE, (R3,), Strategy.MonteCarlo, 0)
    with pytest.raises(ScenarioError):
        SweepPlan(BASE, (ParameterRange("vut.speed", 1, 2, sample_count=3),), Strategy.FullGrid, 0)


def test_ccrb_speed_sweep_moves_both_vehicles():
    base = ScenarioSpec("b", CCRb, 50 * KMH, target_speed=50 * KMH, target_decel=6.0, initial_gap=12.0)
    plan = SweepPlan(base, (ParameterRange("vut.speed", 40 * KMH, 60 * KMH, 10 * KMH),), Strategy.FullGrid, 0)
    for s in expand_sweep(plan):
        assert s.vut_speed == s.target_speed


ranges = st.lists(
    st.tuples(st.sampled_from(["vut.speed", "target.lateral_offset", "vut.mass", "road.friction"]),
              st.integers(1, 4)),
    min_size=1, max_size=4, unique_by=lambda t: t[0])

BOUNDS = {"vut.speed": (5.0, 20.0), "target.lateral_offset": (-1.0, 1.0),
          "vut.mass": (1000.0, 2500.0), "road.friction": (0.3, 1.2)}


@given(ranges)
def test_fullgrid_size_is_product(spec_ranges):
    rs = []
    for path, n in spec_ranges:
        lo, hi = BOUNDS[path]
        rs.append(ParameterRange(path, lo, hi, (hi - lo) / max(n - 1, 1) if n > 1 else (hi - lo) * 2))
    plan = SweepPlan(BASE, tuple(rs), Strategy.FullGrid, 0)
    specs = expand_sweep(plan)
    assert len(specs) == math.prod(r.level_count for r in rs)
    for s in specs:
        validate_spec(s)


@given(ranges, st.integers(0, 2 ** 63), st.integers(1, 30))
def test_montecarlo_pure_function_of_plan(spec_ranges, seed, n):
    rs = tuple(ParameterRange(p, *BOUNDS[p], sample_count=n) for p, _ in spec_ranges)
    plan = SweepPlan(BASE, rs, Strategy.MonteCarlo, seed)
    pts = expand_sweep_points(plan)
    assert pts == expand_sweep_points(plan)
    assert [p.index for p in pts] == list(range(n))
    for p in pts:
        validate_spec(p.spec)


# -- print/parse fixpoint over random specs

KINDS = st.sampled_from([CCRs, CCRm, CCRb])
reals = lambda lo, hi: st.floats(lo, hi, allow_nan=False, allow_infinity=False)  # noqa: E731


@st.composite
def random_specs(draw):
    kind = draw(KINDS)
    v = draw(reals(0.5, 80.0))
    tv, td = 0.0, 0.0
    if kind is CCRm:
        tv = draw(reals(0.1, 60.0))
    elif kind is CCRb:
        tv, td = v, draw(reals(0.5, 9.0))
    sensor = draw(st.dictionaries(st.sampled_from(["max_range", "latency", "range_noise_sigma"]),
                                  reals(0.001, 150.0), max_size=2))
    decision = draw(st.dictionaries(st.sampled_from(["full_decel", "lateral_accel_limit"]),
                                    reals(5.0, 12.0), max_size=2))
    flags = draw(st.dictionaries(st.sampled_from(["latch_full_brake", "partial_braking", "enabled"]),
                                 st.booleans(), max_size=2))
    brake = draw(st.dictionaries(st.sampled_from(["delay", "jerk_limit", "max_force"]),
                                 reals(0.0, 20000.0), max_size=2))
    spec = ScenarioSpec(
        id=draw(st.from_regex(r"[a-z][a-z0-9_]{0,12}", fullmatch=True)), kind=kind,
        vut_speed=v, target_speed=tv, target_decel=td,
        initial_gap=draw(reals(1.0, 300.0)), lateral_offset=draw(reals(-2.0, 2.0)),
        vut_mass=draw(reals(500.0, 4000.0)), road_friction=draw(reals(0.05, 1.5)),
        vut_width=draw(reals(1.0, 2.5)), target_width=draw(reals(1.0, 2.5)),
        sensor_overrides=sensor, decision_overrides={**decision, **flags}, brake_overrides=brake,
    )
    return validate_spec(spec)


@given(random_specs())
def test_print_parse_fixpoint(spec):
    text = render_scenario(spec)
    again, plan = parse_scenario(text)
    assert again == spec and plan is None
    assert render_scenario(again) == text

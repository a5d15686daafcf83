"""Reference FCW/AEB policy: TTC, situation class, four-step warning grade."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

from .perception import SensorTrack

LATCH_RELEASE_INVALID_S = 0.5


class WarningLevel(IntEnum):
    L0_None = 0
    L1_Warn = 1
    L2_PartialBrake = 2
    L3_FullBrake = 3


L0, L1, L2, L3 = WarningLevel


class SituationClass(str, Enum):
    A_NoEvasion = "A"
    B_EvadeLeft = "B"
    C_EvadeRight = "C"
    NotInPath = "NotInPath"


@dataclass(frozen=True)
class DecisionConfig:
    """Thresholds of the reference policy.

    ``forced_trigger_ttc`` replaces the graded policy by a single L3
    trigger at the given TTC (no warning or partial stage); ``enabled=False``
    keeps the system at L0. ``partial_braking=False`` skips the L2 grade so
    the full-brake trigger is the first intervention.
    """

    ttc_warn: float = 2.6
    ttc_partial: float = 1.6
    partial_decel: float = 4.0
    full_decel: float = 9.0
    lateral_accel_limit: float = 5.0
    vut_width: float = 1.8
    latch_full_brake: bool = True
    partial_braking: bool = True
    forced_trigger_ttc: float | None = None
    enabled: bool = True

    def __post_init__(self):
        if not self.ttc_warn > self.ttc_partial > 0:
            raise ValueError("need ttc_warn > ttc_partial > 0")
        if not 0 < self.partial_decel < self.full_decel:
            raise ValueError("need 0 < partial_decel < full_decel")
        if not self.lateral_accel_limit > 0:
            raise ValueError("lateral_accel_limit must be positive")
        if not self.vut_width > 0:
            raise ValueError("vut_width must be positive")
        if self.forced_trigger_ttc is not None and self.forced_trigger_ttc < 0:
            raise ValueError("forced_trigger_ttc must be non-negative")


def compute_ttc(track: SensorTrack) -> float | None:
    """Smallest positive root of gap - vc*t - ac*t**2/2 = 0, or None."""
    if not track.valid:
        return None
    gap, vc, ac = track.gap, track.closing_speed, track.closing_accel
    if gap <= 0.0:
        return 0.0
    if ac == 0.0:
        t = gap / vc if vc > 0.0 else math.inf
        return t if t < math.inf else None
    # 0.5*ac*t^2 + vc*t - gap = 0, solved without cancellation for any signs
    disc = vc * vc + 2.0 * ac * gap
    if disc < 0.0:
        return None
    q = -0.5 * (vc + math.copysign(math.sqrt(disc), vc))
    if q == 0.0:
        return None
    best = None
    for root in (-gap / q, 2.0 * q / ac):
        if 0.0 < root < math.inf and (best is None or root < best):
            best = root
    return best


def classify_situation(track: SensorTrack, config: DecisionConfig) -> tuple[SituationClass, float, SituationClass | None]:
    """Return (class, required lateral clearance, cheaper escape side).

    Braking is the configured response whenever the paths overlap, so any
    overlap is class A; the escape side (B left, C right) is diagnostic.
    """
    half_span = 0.5 * (config.vut_width + track.target_width)
    d_lat = half_span - abs(track.lateral_offset)
    if d_lat <= 0.0:
        return SituationClass.NotInPath, d_lat, None
    escape = SituationClass.B_EvadeLeft if track.lateral_offset < 0 else SituationClass.C_EvadeRight
    return SituationClass.A_NoEvasion, d_lat, escape


def steer_escape_time(d_lat: float, config: DecisionConfig) -> float:
    if d_lat <= 0.0:
        raise ValueError(f"steer_escape_time needs d_lat > 0, got {d_lat}")
    return math.sqrt(2.0 * d_lat / config.lateral_accel_limit)


def brake_last_point(closing_speed: float, config: DecisionConfig) -> float:
    return closing_speed / (2.0 * config.full_decel)


def decide(track: SensorTrack, config: DecisionConfig,
           prev: WarningLevel = WarningLevel.L0_None, *,
           invalid_for: float = 0.0, vut_speed: float | None = None,
           ttc: float | None = ...) -> WarningLevel:
    """Grade the situation.

    ``invalid_for`` is how long the track has been invalid and
    ``vut_speed`` the ego speed; both only feed the L3 latch release.
    A caller that already holds ``compute_ttc(track)`` may pass it as ``ttc``.
    """
    if not config.enabled:
        return L0

    if prev == 3 and config.latch_full_brake:
        standstill = vut_speed is not None and vut_speed <= 0.0
        if not standstill and (track.valid or invalid_for <= LATCH_RELEASE_INVALID_S):
            return L3
    if not track.valid:
        return L0
    if ttc is ...:
        ttc = compute_ttc(track)
    if ttc is None:
        return L0
    d_lat = 0.5 * (config.vut_width + track.target_width) - abs(track.lateral_offset)
    if d_lat <= 0.0:
        return L0  # not in path

    if config.forced_trigger_ttc is not None:
        return L3 if ttc <= config.forced_trigger_ttc else L0

    t_brake = brake_last_point(track.closing_speed, config)
    t_steer = steer_escape_time(d_lat, config)
    if ttc <= (t_brake if t_brake < t_steer else t_steer):
        return L3
    if config.partial_braking and ttc <= config.ttc_partial:
        return L2
    if ttc <= config.ttc_warn:
        return L1
    return L0


def decel_request(level: WarningLevel, config: DecisionConfig) -> float:
    if level == 3:
        return config.full_decel
    if level == 2:
        return config.partial_decel
    return 0.0

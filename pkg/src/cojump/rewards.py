"""Reward terms, the tolerance kernel, and success predicates.

Every term is evaluated for a batch of environments and returns arrays of
shape ``(N,)``. Weighted term maps feed :func:`total_reward`, which keeps the
per-term breakdown for telemetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phases import Phase


@dataclass(frozen=True)
class ToleranceSpec:
    """Band ``[lower, upper]`` with a long-tail decay reaching ``value_at_margin`` at ``margin``."""

    lower: float
    upper: float
    margin: float
    value_at_margin: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"lower ({self.lower}) must not exceed upper ({self.upper})")
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if not 0 < self.value_at_margin < 1:
            raise ValueError(f"value_at_margin must lie in (0, 1), got {self.value_at_margin}")


def tolerance(x, spec: ToleranceSpec):
    """1 inside the band, ``1 / ((z * sqrt(1/v - 1))**2 + 1)`` outside, with ``z = deviation / margin``."""
    x = np.asarray(x, dtype=float)
    below = spec.lower - x
    above = x - spec.upper
    dev = np.maximum(np.maximum(below, above), 0.0)
    z = dev / spec.margin
    scale = math.sqrt(1.0 / spec.value_at_margin - 1.0)
    return 1.0 / ((z * scale) ** 2 + 1.0)


INF = math.inf
HEIGHT_TRACK = ToleranceSpec(0.0, INF, 0.2, 0.2)
VX_TRACK = ToleranceSpec(-INF, 0.2, 0.5, 0.2)
SQUAT = ToleranceSpec(-INF, 0.0, 0.1, 0.5)
HEIGHT_DIFF = ToleranceSpec(0.6, INF, 0.3, 0.2)


@dataclass(frozen=True)
class SuccessSpec:
    min_height: float = 1.0
    max_xy_error: float = 0.4
    flip_min_pitch: float = 1.5 * math.pi


# (block, term) -> weight for (launcher, jumper); None means the term is absent for that robot.
WEIGHTS: dict[str, dict[str, tuple[float | None, float | None]]] = {
    "regu": {
        "pitch_deviation": (-6.0, -6.0),
        "leg_acceleration": (-2.5e-7, -2.5e-7),
        "leg_rate": (-1.0e-4, -1.0e-4),
        "leg_force": (-2.5e-6, -2.5e-5),
        "leg_tracking": (-0.5, -0.5),
        "action_smoothness": (-0.1, -0.1),
        "action_rate": (-0.1, -0.1),
        "front_leg_deviation": (-0.5, -0.5),
        "rear_leg_deviation": (-0.2, -0.2),
        "body_contact": (-0.8, -0.8),
        "upright": (-5.0, None),
        "upright_after_success": (None, -2.0),
    },
    "task": {
        "height_tracking": (8.0, 8.0),
        "vx_tracking": (10.0, 10.0),
        "feet_retraction": (-2.0, -2.0),
        "contact_maintenance": (3.0, 3.0),
        "squat": (2.0, 2.0),
        "asymmetric_contact": (-0.1, -0.1),
        "post_landing": (2.0, 2.0),
    },
    "coop": {
        "height_difference": (6.0, 6.0),
        "jumper_pitch": (-2.0, -2.0),
        "success": (40.0, 40.0),
        "termination": (-2.0, -2.0),
        "jumper_fall": (-2.0, -2.0),
    },
}

# Reward table rows as listed for the quadruped task, mapped to the planar term
# that implements them, or to None with the reason the row has no planar analog.
TABLE_ROWS: list[tuple[str, str, float | None, float | None, str | None, str]] = [
    # (block, row name, weight L, weight J, planar term, note)
    ("regu", "Roll angle deviation penalty", -6.0, -6.0, "pitch_deviation", "roll and yaw collapse onto one planar pitch indicator"),
    ("regu", "Yaw angle deviation penalty", -6.0, -6.0, None, "duplicate of the single planar pitch indicator"),
    ("regu", "Joint acceleration penalty", -2.5e-7, -2.5e-7, "leg_acceleration", ""),
    ("regu", "Joint velocity penalty", -1.0e-4, -1.0e-4, "leg_rate", ""),
    ("regu", "Joint torque penalty", -2.5e-6, -2.5e-5, "leg_force", ""),
    ("regu", "Joint tracking penalty", -0.5, -0.5, "leg_tracking", "tracks the PD leg target"),
    ("regu", "Action smoothness penalty", -0.1, -0.1, "action_smoothness", ""),
    ("regu", "Action rate penalty", -0.1, -0.1, "action_rate", ""),
    ("regu", "Hip joint deviation penalty", -0.5, -0.5, "front_leg_deviation", ""),
    ("regu", "Thigh joint deviation penalty", -0.2, -0.2, "rear_leg_deviation", ""),
    ("regu", "Calf joint deviation penalty", -0.2, -0.2, None, "one prismatic DOF per leg; covered by the rear-leg deviation term"),
    ("regu", "Calf contact penalty", -0.8, -0.8, None, "no calf link in the planar model"),
    ("regu", "Thigh contact penalty", -0.8, -0.8, None, "no thigh link in the planar model"),
    ("regu", "Base contact penalty", -0.8, -0.8, "body_contact", ""),
    ("regu", "Upright posture penalty", -5.0, None, "upright", ""),
    ("regu", "Upright posture penalty after successful jumping", None, -2.0, "upright_after_success", ""),
    ("task", "Command height tracking (flight)", 8.0, 8.0, "height_tracking", ""),
    ("task", "Command v_xy tracking (flight)", 10.0, 10.0, "vx_tracking", "horizontal velocity along x only"),
    ("task", "Desired w_yaw tracking (flight)", 2.0, 2.0, None, "no yaw rotation in the sagittal plane"),
    ("task", "Feet height retraction reward (flight)", -2.0, -2.0, "feet_retraction", ""),
    ("task", "Foot contact maintenance", 3.0, 3.0, "contact_maintenance", ""),
    ("task", "Squatting encouragement (initial)", 2.0, 2.0, "squat", ""),
    ("task", "Asymmetric feet contact penalty", -0.1, -0.1, "asymmetric_contact", "front vs rear foot"),
    ("task", "Post-landing stabilization", 2.0, 2.0, "post_landing", ""),
    ("coop", "Height difference reward", 6.0, 6.0, "height_difference", ""),
    ("coop", "Pitch deviation of Robot J penalty", -2.0, -2.0, "jumper_pitch", ""),
    ("coop", "Success Reward", 40.0, 40.0, "success", ""),
    ("coop", "Termination penalty", -2.0, -2.0, "termination", ""),
    ("coop", "Falling of Robot J penalty", -2.0, -2.0, "jumper_fall", ""),
]


@dataclass
class AgentSnapshot:
    """What one robot's reward terms need for one control step, arrays of shape ``(N, ...)``."""

    height: np.ndarray
    vx: np.ndarray
    pitch: np.ndarray  # wrapped
    gravity_x: np.ndarray  # body-frame gravity, forward component
    leg_length: np.ndarray  # (N, 2)
    leg_rate: np.ndarray
    leg_accel: np.ndarray
    leg_force: np.ndarray
    leg_target: np.ndarray
    default_length: np.ndarray
    feet_contact: np.ndarray  # (N, 2) bool
    body_contact: np.ndarray  # (N,) bool
    action: np.ndarray  # (N, 4)
    prev_action: np.ndarray
    prev_prev_action: np.ndarray
    init_height: np.ndarray


@dataclass
class CoopSnapshot:
    jumper_height: np.ndarray
    launcher_height: np.ndarray
    jumper_pitch: np.ndarray
    success: np.ndarray
    base_force: np.ndarray  # (N,) largest base contact force across robots
    force_limit: float = 1500.0
    fall_height: float = 0.4


def _sq(a):
    return np.sum(np.square(a), axis=-1)


def regularization_reward(s: AgentSnapshot, agent: int, success: np.ndarray) -> dict[str, np.ndarray]:
    """Raw (unweighted) regularization terms for one robot."""
    terms = {
        "pitch_deviation": (np.abs(s.pitch) > math.pi / 12).astype(float),
        "leg_acceleration": _sq(s.leg_accel),
        "leg_rate": _sq(s.leg_rate),
        "leg_force": _sq(s.leg_force),
        "leg_tracking": _sq(s.leg_length - s.leg_target),
        "action_smoothness": _sq(s.action - 2 * s.prev_action + s.prev_prev_action),
        "action_rate": _sq(s.action - s.prev_action),
        "front_leg_deviation": np.square(s.leg_length[:, 0] - s.default_length[:, 0]),
        "rear_leg_deviation": np.square(s.leg_length[:, 1] - s.default_length[:, 1]),
        "body_contact": s.body_contact.astype(float),
    }
    if agent == 0:
        terms["upright"] = np.square(s.gravity_x)
    else:
        terms["upright_after_success"] = np.square(s.gravity_x) * success
    return terms


def task_reward(
    s: AgentSnapshot,
    target_vx: np.ndarray,
    target_height: np.ndarray,
    phase: np.ndarray,
    success: np.ndarray,
) -> dict[str, np.ndarray]:
    """Raw task terms; ``target_height`` is the reference base height for flight tracking."""
    flight = phase == Phase.FLIGHT
    initial = phase == Phase.INITIAL
    landing = phase == Phase.LANDING
    both_feet = s.feet_contact.all(axis=1)
    feet_z = -s.leg_length  # foot height in the base frame
    return {
        "height_tracking": tolerance(s.height - target_height, HEIGHT_TRACK) * flight,
        "vx_tracking": tolerance(s.vx - target_vx, VX_TRACK) * flight,
        "feet_retraction": _sq(feet_z + 0.15) * flight,
        "contact_maintenance": (both_feet & (initial | landing)).astype(float),
        "squat": tolerance(s.height - s.init_height, SQUAT) * initial,
        "asymmetric_contact": (s.feet_contact[:, 0] != s.feet_contact[:, 1]).astype(float),
        "post_landing": (landing & success).astype(float),
    }


def cooperation_reward(c: CoopSnapshot) -> dict[str, np.ndarray]:
    """Raw shared terms; the same values are credited to both robots."""
    return {
        "height_difference": tolerance(c.jumper_height - c.launcher_height, HEIGHT_DIFF),
        "jumper_pitch": ((c.jumper_pitch < 0) | (c.jumper_pitch > math.pi / 4)).astype(float),
        "success": np.asarray(c.success, dtype=float),
        "termination": (c.base_force > c.force_limit).astype(float),
        "jumper_fall": (c.jumper_height < c.fall_height).astype(float),
    }


def check_touchdown(
    height, x, gravity_z, feet_on_target, platform_x, spec: SuccessSpec = SuccessSpec()
) -> np.ndarray:
    """Height, horizontal precision, uprightness, and at least one foot on the target platform."""
    return (
        (np.asarray(height) > spec.min_height)
        & (np.abs(np.asarray(x) - np.asarray(platform_x)) < spec.max_xy_error)
        & (np.asarray(gravity_z) < 0.0)
        & np.asarray(feet_on_target, dtype=bool)
    )


def check_success(td):
    return np.asarray(td, dtype=bool)


def check_flip_success(td, accumulated_pitch, spec: SuccessSpec = SuccessSpec()):
    return np.asarray(td, dtype=bool) & (np.asarray(accumulated_pitch) > spec.flip_min_pitch)


@dataclass
class RewardBreakdown:
    """Weighted per-term rewards for both robots plus block sums.

    ``terms[agent][name] = (raw, weight, weighted)``; ``blocks[agent][block]``
    is the block sum and ``total[agent]`` the step reward (all block
    coefficients are 1).
    """

    terms: list[dict[str, tuple[np.ndarray, float, np.ndarray]]] = field(default_factory=list)
    blocks: list[dict[str, np.ndarray]] = field(default_factory=list)
    total: np.ndarray | None = None  # (N, 2)

    def columns(self) -> dict[str, np.ndarray]:
        """Flat ``{"L/task/height_tracking": weighted, ...}`` map for CSV telemetry."""
        out = {}
        for ag, tag in enumerate("LJ"):
            for name, (_, _, weighted) in self.terms[ag].items():
                out[f"{tag}/{name}"] = weighted
            out[f"{tag}/total"] = self.total[:, ag]
        return out


BLOCK_COEFFS = {"task": 1.0, "regu": 1.0, "coop": 1.0}


def total_reward(
    task: list[dict[str, np.ndarray]],
    regu: list[dict[str, np.ndarray]],
    coop: dict[str, np.ndarray],
) -> RewardBreakdown:
    """Weight raw term maps and sum them per block and per robot."""
    out = RewardBreakdown()
    n = len(next(iter(coop.values())))
    total = np.zeros((n, 2))
    for ag in (0, 1):
        terms: dict[str, tuple[np.ndarray, float, np.ndarray]] = {}
        blocks: dict[str, np.ndarray] = {}
        for block, raw in (("task", task[ag]), ("regu", regu[ag]), ("coop", coop)):
            acc = np.zeros(n)
            for name, value in raw.items():
                w = WEIGHTS[block][name][ag]
                if w is None:
                    continue
                weighted = w * np.asarray(value, dtype=float)
                terms[f"{block}/{name}"] = (value, w, weighted)
                acc = acc + weighted
            blocks[block] = acc
            total[:, ag] += BLOCK_COEFFS[block] * acc
        out.terms.append(terms)
        out.blocks.append(blocks)
    out.total = total
    return out

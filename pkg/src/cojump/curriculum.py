"""Staged schedules: gravity, target space, initialization, settling delay, flip assist.

Gravity is driven by a step counter. The other schedules are driven by the
number of successful episodes: each owns a threshold and advances one stage
per threshold crossing. :class:`CurriculumState` is a plain value owned by the
trainer and handed to environments as an immutable snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY_START = 7.0
GRAVITY_END = 9.81
INIT_STAGES = 15
INIT_HEIGHT_START = 1.0
INIT_HEIGHT_END = 0.77
DELAY_FINAL = (1.0, 1.6)
FLIP_TORQUE = 120.0
FLIP_STEP = 4.0


@dataclass(frozen=True)
class CurriculumConfig:
    gravity_enabled: bool = True
    gravity_start: float = GRAVITY_START
    gravity_end: float = GRAVITY_END
    gravity_checkpoints: tuple[int, ...] = (15_000, 20_000, 25_000)
    gravity_unit: str = "iteration"  # or "env_step"

    target_enabled: bool = True
    target_threshold: int = 25_000
    offset_phases: int = 6
    offset_step: float = 0.1
    height_start: float = 0.8
    height_step: float = 0.1
    height_max: float = 1.0

    init_enabled: bool = True
    init_threshold: int = 25_000
    init_fixed_stage: int = INIT_STAGES  # used when disabled

    delay_enabled: bool = True
    delay_stages: int = 5
    delay_threshold: int = 25_000
    delay_after_init: bool = True

    flip_enabled: bool = False
    flip_threshold: int = 25_000

    def __post_init__(self):
        if self.gravity_unit not in ("iteration", "env_step"):
            raise ValueError(f"gravity_unit must be 'iteration' or 'env_step', got {self.gravity_unit!r}")
        if list(self.gravity_checkpoints) != sorted(self.gravity_checkpoints) or not self.gravity_checkpoints:
            raise ValueError("gravity_checkpoints must be a non-empty ascending sequence")
        for name in ("target_threshold", "init_threshold", "delay_threshold", "flip_threshold", "delay_stages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 <= self.init_fixed_stage <= INIT_STAGES:
            raise ValueError(f"init_fixed_stage must lie in [0, {INIT_STAGES}]")


def gravity_at(step: int, cfg: CurriculumConfig = CurriculumConfig()) -> float:
    """Piecewise-constant gravity with equal increments at each checkpoint."""
    if step < 0:
        raise ValueError("step must be non-negative")
    if not cfg.gravity_enabled:
        return cfg.gravity_end
    k = int(np.searchsorted(np.asarray(cfg.gravity_checkpoints), step, side="right"))
    n = len(cfg.gravity_checkpoints)
    if k == n:
        return cfg.gravity_end
    return cfg.gravity_start + (cfg.gravity_end - cfg.gravity_start) * k / n


@dataclass(frozen=True)
class InitConfig:
    """Jumper start configuration for one initialization stage."""

    height: float  # initial base height above ground
    leg_fraction: float  # 0 standing (default legs), 1 fully retracted


def init_config_at(init_stage: int) -> InitConfig:
    if not 0 <= init_stage <= INIT_STAGES:
        raise ValueError(f"init_stage must lie in [0, {INIT_STAGES}], got {init_stage}")
    frac = init_stage / INIT_STAGES
    return InitConfig(INIT_HEIGHT_START + (INIT_HEIGHT_END - INIT_HEIGHT_START) * frac, frac)


def delay_bounds(delay_stage: int, n_stages: int) -> tuple[float, float]:
    frac = min(max(delay_stage, 0), n_stages) / n_stages
    return DELAY_FINAL[0] * frac, DELAY_FINAL[1] * frac


def delay_at(delay_stage: int, n_stages: int, rng: np.random.Generator, size=None):
    lo, hi = delay_bounds(delay_stage, n_stages)
    if hi == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.uniform(lo, hi, size)


def flip_assist_at(flip_stage: int) -> float:
    return max(FLIP_TORQUE - FLIP_STEP * flip_stage, 0.0)


FLIP_STAGES = int(math.ceil(FLIP_TORQUE / FLIP_STEP))


@dataclass(frozen=True)
class CurriculumState:
    global_step: int = 0  # in the configured gravity unit
    success_count: int = 0
    target_stage: int = 0
    init_stage: int = 0
    delay_stage: int = 0
    flip_stage: int = 0
    target_successes: int = 0  # successes since the last advance of each schedule
    init_successes: int = 0
    delay_successes: int = 0
    flip_successes: int = 0
    cfg: CurriculumConfig = field(default_factory=CurriculumConfig)

    @classmethod
    def start(cls, cfg: CurriculumConfig = CurriculumConfig()) -> "CurriculumState":
        init = 0 if cfg.init_enabled else cfg.init_fixed_stage
        delay = 0 if cfg.delay_enabled else cfg.delay_stages
        return cls(init_stage=init, delay_stage=delay, cfg=cfg)

    @classmethod
    def final(cls, cfg: CurriculumConfig = CurriculumConfig()) -> "CurriculumState":
        """Deployment conditions: every schedule at its last stage (target space kept at start)."""
        return cls(
            global_step=cfg.gravity_checkpoints[-1],
            init_stage=INIT_STAGES,
            delay_stage=cfg.delay_stages,
            flip_stage=FLIP_STAGES,
            cfg=cfg,
        )

    @property
    def gravity(self) -> float:
        return gravity_at(self.global_step, self.cfg)

    @property
    def offset_stage(self) -> int:
        return min(self.target_stage, self.cfg.offset_phases)

    @property
    def height_stage(self) -> int:
        return max(self.target_stage - self.cfg.offset_phases, 0)

    @property
    def unlocked_offset_max(self) -> float:
        return self.offset_stage * self.cfg.offset_step

    @property
    def unlocked_height_max(self) -> float:
        return min(self.cfg.height_start + self.height_stage * self.cfg.height_step, self.cfg.height_max)

    @property
    def max_target_stage(self) -> int:
        n_height = int(round((self.cfg.height_max - self.cfg.height_start) / self.cfg.height_step))
        return self.cfg.offset_phases + max(n_height, 0)

    @property
    def flip_assist(self) -> float:
        return flip_assist_at(self.flip_stage) if self.cfg.flip_enabled else 0.0

    @property
    def init(self) -> InitConfig:
        return init_config_at(self.init_stage)

    def delay_bounds(self) -> tuple[float, float]:
        return delay_bounds(self.delay_stage, self.cfg.delay_stages)

    def sample_delay(self, rng: np.random.Generator, size=None):
        return delay_at(self.delay_stage, self.cfg.delay_stages, rng, size)

    def advance_steps(self, n: int) -> "CurriculumState":
        if n < 0:
            raise ValueError("step increment must be non-negative")
        return replace(self, global_step=self.global_step + n)

    def advance_target(self, new_successes: int) -> "CurriculumState":
        """Count successes toward the target schedule only."""
        return self._advance("target", new_successes)

    def record_successes(self, new_successes: int, flip_successes: int = 0) -> "CurriculumState":
        """Feed successful episodes to every success-driven schedule."""
        if new_successes < 0 or flip_successes < 0:
            raise ValueError("success counts must be non-negative")
        s = replace(self, success_count=self.success_count + new_successes)
        if s.cfg.target_enabled:
            s = s._advance("target", new_successes, count_total=False)
        if s.cfg.init_enabled:
            s = s._advance("init", new_successes, count_total=False)
        if s.cfg.delay_enabled and (not s.cfg.delay_after_init or s.init_stage >= INIT_STAGES):
            s = s._advance("delay", new_successes, count_total=False)
        if s.cfg.flip_enabled:
            s = s._advance("flip", flip_successes, count_total=False)
        return s

    def _advance(self, name: str, n: int, count_total: bool = True) -> "CurriculumState":
        if n < 0:
            raise ValueError("new_successes must be non-negative")
        limits = {
            "target": self.max_target_stage,
            "init": INIT_STAGES,
            "delay": self.cfg.delay_stages,
            "flip": FLIP_STAGES,
        }
        stage = getattr(self, f"{name}_stage")
        acc = getattr(self, f"{name}_successes")
        threshold = getattr(self.cfg, f"{name}_threshold")
        changes = {}
        if count_total:
            changes["success_count"] = self.success_count + n
        if stage >= limits[name]:
            return replace(self, **changes)
        acc += n
        # at most one stage per call, so one crossing changes one range
        if acc >= threshold:
            stage += 1
            acc -= threshold
            if stage >= limits[name]:
                acc = 0
        changes[f"{name}_stage"] = stage
        changes[f"{name}_successes"] = min(acc, threshold - 1)
        return replace(self, **changes)

    def stages(self) -> dict[str, float]:
        return {
            "global_step": self.global_step,
            "success_count": self.success_count,
            "gravity": self.gravity,
            "target_stage": self.target_stage,
            "init_stage": self.init_stage,
            "delay_stage": self.delay_stage,
            "flip_stage": self.flip_stage,
            "unlocked_offset_max": self.unlocked_offset_max,
            "unlocked_height_max": self.unlocked_height_max,
            "flip_assist": self.flip_assist,
        }

    def to_vector(self) -> np.ndarray:
        """Integer counters, for checkpoints (config travels separately)."""
        return np.array(
            [
                self.global_step,
                self.success_count,
                self.target_stage,
                self.init_stage,
                self.delay_stage,
                self.flip_stage,
                self.target_successes,
                self.init_successes,
                self.delay_successes,
                self.flip_successes,
            ],
            dtype=np.int64,
        )

    @classmethod
    def from_vector(cls, v, cfg: CurriculumConfig) -> "CurriculumState":
        names = (
            "global_step", "success_count", "target_stage", "init_stage", "delay_stage", "flip_stage",
            "target_successes", "init_successes", "delay_successes", "flip_successes",
        )
        return cls(cfg=cfg, **{k: int(x) for k, x in zip(names, v)})

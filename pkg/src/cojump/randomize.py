"""Domain randomization: episode perturbations, push disturbances, action lag."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .sim2d import CONTROL_DT, ExternalLoads, PhysParams

# row name -> (min, max); per-robot rows are drawn independently for both robots
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "static_friction": (0.6, 1.0),
    "dynamic_friction": (0.5, 0.9),
    "push_force": (-5.0, 5.0),
    "push_torque": (-0.5, 0.5),
    "actuator_lag": (0.0, 0.010),
    "com_offset": (-0.02, 0.02),
    "stiffness_gain": (0.9, 1.1),
    "damping_gain": (0.9, 1.1),
    "added_mass_J": (-2.0, 2.0),
    "added_mass_L": (-1.0, 1.0),
    "comm_delay": (0.0, 0.005),
    "rel_pos_offset": (-0.02, 0.02),
    "rel_pitch_offset": (-0.08, 0.08),
}
PER_ROBOT = ("actuator_lag", "com_offset", "stiffness_gain", "damping_gain")


@dataclass(frozen=True)
class RandomizationConfig:
    ranges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    enabled: dict[str, bool] = field(default_factory=lambda: {k: True for k in DEFAULT_RANGES})

    def __post_init__(self):
        for k, (lo, hi) in self.ranges.items():
            if k not in DEFAULT_RANGES:
                raise ValueError(f"unknown randomization row {k!r}")
            if not lo <= hi:
                raise ValueError(f"randomization row {k!r}: min {lo} exceeds max {hi}")
        missing = set(DEFAULT_RANGES) - set(self.ranges)
        if missing:
            raise ValueError(f"randomization rows missing a range: {sorted(missing)}")
        for k in self.enabled:
            if k not in DEFAULT_RANGES:
                raise ValueError(f"unknown randomization row {k!r}")

    @classmethod
    def disabled(cls) -> "RandomizationConfig":
        return cls(enabled={k: False for k in DEFAULT_RANGES})

    def is_enabled(self, row: str) -> bool:
        return self.enabled.get(row, True)

    def sample(self, row: str, rng: np.random.Generator, size) -> np.ndarray:
        """Uniform draw inside the row's range, or its midpoint when the row is disabled."""
        lo, hi = self.ranges[row]
        if not self.is_enabled(row):
            return np.full(size, 0.5 * (lo + hi))
        return rng.uniform(lo, hi, size)

    @property
    def max_lag(self) -> float:
        lag = self.ranges["actuator_lag"][1] if self.is_enabled("actuator_lag") else sum(self.ranges["actuator_lag"]) / 2
        com = self.ranges["comm_delay"][1] if self.is_enabled("comm_delay") else sum(self.ranges["comm_delay"]) / 2
        return lag + com


@dataclass
class EpisodePerturbation:
    """One draw per environment; per-robot fields have shape ``(N, 2)``, the rest ``(N,)``."""

    static_friction: np.ndarray
    dynamic_friction: np.ndarray
    com_offset: np.ndarray
    stiffness_gain: np.ndarray
    damping_gain: np.ndarray
    added_mass_J: np.ndarray
    added_mass_L: np.ndarray
    actuator_lag: np.ndarray
    comm_delay: np.ndarray
    rel_pos_offset: np.ndarray
    rel_pitch_offset: np.ndarray

    @property
    def total_lag(self) -> np.ndarray:
        """Actuator lag plus communication delay, per robot ``(N, 2)``."""
        return self.actuator_lag + self.comm_delay[:, None]

    def subset(self, idx) -> "EpisodePerturbation":
        return EpisodePerturbation(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    def assign(self, idx, other: "EpisodePerturbation") -> None:
        for f in fields(self):
            getattr(self, f.name)[idx] = getattr(other, f.name)

    def columns(self) -> dict[str, np.ndarray]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v.ndim == 2:
                out[f"{f.name}_L"] = v[:, 0]
                out[f"{f.name}_J"] = v[:, 1]
            else:
                out[f.name] = v
        return out


def sample_episode_perturbation(cfg: RandomizationConfig, rng: np.random.Generator, n: int = 1) -> EpisodePerturbation:
    draw = {}
    for f in fields(EpisodePerturbation):
        size = (n, 2) if f.name in PER_ROBOT else (n,)
        draw[f.name] = cfg.sample(f.name, rng, size)
    return EpisodePerturbation(**draw)


def apply_perturbation(base: PhysParams, pert: EpisodePerturbation, idx=slice(None)) -> None:
    """Write the perturbed physical parameters of environments ``idx`` into ``base`` in place.

    ``base`` must hold nominal values for those environments beforehand; the
    caller restores them from a nominal copy.
    """
    base.body_mass[idx, 0] += pert.added_mass_L
    base.body_mass[idx, 1] += pert.added_mass_J
    base.com_offset[idx] = pert.com_offset
    base.mu_s[idx] = pert.static_friction
    base.mu_d[idx] = pert.dynamic_friction


def push_disturbance(cfg: RandomizationConfig, rng: np.random.Generator, n: int) -> ExternalLoads:
    """Per-body uniform push force (both axes) and torque for one control step."""
    f = cfg.sample("push_force", rng, (n, 2, 2))
    t = cfg.sample("push_torque", rng, (n, 2, 1))
    return ExternalLoads(np.concatenate([f, t], axis=-1))


class LagBuffer:
    """Ring of recent commanded actions with fractional-step readout.

    A lag of ``k = lag / dt`` control steps returns the action issued
    ``floor(k)`` steps ago blended linearly toward the one before it, so an
    integer ``k`` reads that action exactly and ``k = 0.5`` reads the midpoint
    of the two most recent actions.
    """

    def __init__(self, n_envs: int, n_agents: int, act_dim: int, max_lag: float, dt: float = CONTROL_DT):
        if max_lag < 0:
            raise ValueError("max_lag must be non-negative")
        self.dt = dt
        self.depth = int(np.ceil(max_lag / dt - 1e-12)) + 1
        self.buf = np.zeros((self.depth, n_envs, n_agents, act_dim))
        self.head = 0  # index of the most recent action

    def reset(self, idx=slice(None)) -> None:
        self.buf[:, idx] = 0.0

    def push(self, action: np.ndarray) -> None:
        self.head = (self.head + 1) % self.depth
        self.buf[self.head] = action

    def history(self) -> np.ndarray:
        """Buffered actions, most recent first, ``(depth, N, agents, dim)``."""
        order = (self.head - np.arange(self.depth)) % self.depth
        return self.buf[order]

    def read(self, lag: np.ndarray) -> np.ndarray:
        """Executed action for per-(env, agent) lag in seconds."""
        k = np.asarray(lag, dtype=float) / self.dt
        if np.any(k < 0):
            raise ValueError("lag must be non-negative")
        i0 = np.floor(k + 1e-12).astype(int)
        frac = np.clip(k - i0, 0.0, 1.0)
        if np.any(i0 + (frac > 0) >= self.depth):
            raise ValueError("lag exceeds buffer depth")
        hist = self.history()
        n_idx = np.arange(k.shape[0])[:, None]
        a_idx = np.arange(k.shape[1])[None, :]
        a0 = hist[i0, n_idx, a_idx]
        a1 = hist[np.minimum(i0 + 1, self.depth - 1), n_idx, a_idx]
        return a0 + frac[..., None] * (a1 - a0)


def lagged_action(buffer: list, action, lag: float, control_dt: float = CONTROL_DT):
    """Single-stream form: append ``action`` to ``buffer`` (oldest first) and return the executed action."""
    buffer.append(np.asarray(action, dtype=float))
    k = lag / control_dt
    if k < 0:
        raise ValueError("lag must be non-negative")
    i0 = int(np.floor(k + 1e-12))
    frac = k - i0
    def back(i):
        return buffer[-1 - i] if i < len(buffer) else np.zeros_like(buffer[-1])
    a0 = back(i0)
    if frac <= 1e-12:
        return a0.copy()
    return a0 + frac * (back(i0 + 1) - a0)

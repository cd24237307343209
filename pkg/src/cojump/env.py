"""Vectorized two-robot cooperative jumping environment.

``CoJumpEnv`` steps ``n_envs`` independent episodes in lockstep. Each agent
sees a 14-D local observation; the critic sees the 30-D global state. With
``autoreset`` on, finished environments restart immediately and the final
observation of the finished episode is returned in ``info``.

Observation layout per agent::

    0      pitch rate
    1:3    gravity in the body frame (sin p, -cos p)
    3:5    leg lengths (front, rear)
    5:7    leg rates
    7:9    previous leg commands (front, rear), the pair means of the 4-D action
    9:11   command (target vx, target height)
    11:14  target platform (x, z, half width)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import rewards as R
from .curriculum import INIT_HEIGHT_END, CurriculumState
from .phases import Phase, update_phase
from .randomize import (
    EpisodePerturbation,
    LagBuffer,
    RandomizationConfig,
    apply_perturbation,
    sample_episode_perturbation,
)
from .sim2d import (
    CONTROL_DT,
    JUMPER,
    LAUNCHER,
    N_AGENTS,
    N_SUBSTEPS,
    ContactParams,
    ExternalLoads,
    PhysParams,
    RobotConfig,
    SimState,
    Surface,
    control_step,
    jumper_config,
    launcher_config,
)

OBS_DIM = 14
STATE_DIM = 2 * OBS_DIM + 2
ACT_DIM = 4


class AgentId(enum.IntEnum):
    LAUNCHER = LAUNCHER
    JUMPER = JUMPER


class TerminationReason(enum.IntEnum):
    NONE = 0
    BASE_FORCE = 1
    TIMEOUT = 2
    JUMPER_FELL = 3


@dataclass(frozen=True)
class EnvConfig:
    n_envs: int = 256
    horizon: int = 400
    success_horizon: int = 0  # steps kept after the first touchdown; 0 runs on to the horizon
    control_dt: float = CONTROL_DT
    n_substeps: int = N_SUBSTEPS
    action_scale: float = 0.15
    launcher: RobotConfig = field(default_factory=launcher_config)
    jumper: RobotConfig = field(default_factory=jumper_config)
    contact: ContactParams = field(default_factory=ContactParams)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    success: R.SuccessSpec = field(default_factory=R.SuccessSpec)
    platform_x: float = 1.1
    platform_halfwidth: float = 0.5
    flight_time: float = 0.6
    settle_steps: int = 5  # consecutive both-feet steps before the phase machine engages
    base_force_limit: float = 1500.0
    fall_height: float = 0.4
    success_bonus: str = "every_step"  # or "once"
    flip_mode: bool = False

    def __post_init__(self):
        if self.n_envs < 1 or self.horizon < 1 or self.n_substeps < 1:
            raise ValueError("n_envs, horizon and n_substeps must be positive")
        if self.success_bonus not in ("every_step", "once"):
            raise ValueError(f"success_bonus must be 'every_step' or 'once', got {self.success_bonus!r}")
        if self.success_horizon < 0:
            raise ValueError("success_horizon must be >= 0")
        if self.platform_halfwidth <= 0:
            raise ValueError("platform_halfwidth must be positive")


@dataclass
class Command:
    target_vx: np.ndarray
    target_height: np.ndarray


@dataclass
class ObjectState:
    platform_x: np.ndarray
    platform_z: np.ndarray
    platform_halfwidth: np.ndarray


@dataclass
class EpisodeInfo:
    step_count: np.ndarray
    delay_remaining: np.ndarray
    success: np.ndarray
    terminated_reason: np.ndarray


def gravity_projection(pitch) -> np.ndarray:
    """Gravity direction in the body frame, ``(sin p, -cos p)``."""
    pitch = np.asarray(pitch, dtype=float)
    return np.stack([np.sin(pitch), -np.cos(pitch)], axis=-1)


def assemble_observation(
    state: SimState, agent: int, prev_action: np.ndarray, cmd: np.ndarray, obj: np.ndarray
) -> np.ndarray:
    """Local observation ``(N, 14)`` built only from the agent's own quantities.

    ``prev_action`` is ``(N, 4)``, ``cmd`` ``(N, 2)``, ``obj`` ``(N, 3)``.
    """
    q, qd = state.q[:, agent], state.qd[:, agent]
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        bad = int(np.argwhere(~(np.isfinite(q).all(1) & np.isfinite(qd).all(1)))[0, 0])
        raise FloatingPointError(f"non-finite state for agent {agent} in env {bad}: q={q[bad]}, qd={qd[bad]}")
    pa = np.asarray(prev_action, dtype=float)
    obs = np.empty((state.n_envs, OBS_DIM))
    obs[:, 0] = qd[:, 2]
    obs[:, 1:3] = gravity_projection(q[:, 2])
    obs[:, 3:5] = q[:, 3:5]
    obs[:, 5:7] = qd[:, 3:5]
    obs[:, 7:9] = 0.5 * (pa[:, 0::2] + pa[:, 1::2])
    obs[:, 9:11] = cmd
    obs[:, 11:14] = obj
    return obs


def assemble_global_state(obs_l: np.ndarray, obs_j: np.ndarray, state: SimState) -> np.ndarray:
    """Critic input ``(N, 30)``: both observations plus launcher-minus-jumper base offset."""
    diff = state.q[:, LAUNCHER, :2] - state.q[:, JUMPER, :2]
    return np.concatenate([obs_l, obs_j, diff], axis=1)


def standing_launcher(params: PhysParams, gravity: np.ndarray, contact: ContactParams, stiffness_gain=1.0):
    """Leg length and base height of a launcher resting on its own feet."""
    kp = params.kp[:, LAUNCHER] * stiffness_gain
    l = params.default_rest[:, LAUNCHER, 0] - params.body_mass[:, LAUNCHER] * gravity / (2 * kp)
    pen = params.total_mass[:, LAUNCHER] * gravity / (2 * contact.k_contact)
    return l, l - pen


class CoJumpEnv:
    """Batched environment with per-environment random streams."""

    n_agents = N_AGENTS
    obs_dim = OBS_DIM
    state_dim = STATE_DIM
    act_dim = ACT_DIM

    def __init__(self, cfg: EnvConfig = EnvConfig(), seed: int = 0, curriculum: CurriculumState | None = None,
                 autoreset: bool = True):
        self.cfg = cfg
        self.n = cfg.n_envs
        self.autoreset = autoreset
        self.curriculum = curriculum if curriculum is not None else CurriculumState.start()
        self.nominal = PhysParams.from_configs(self.n, cfg.launcher, cfg.jumper)
        self._seed(seed)
        n = self.n
        self.params = self.nominal.copy()
        self.sim = SimState.zeros(n)
        self.pert = sample_episode_perturbation(RandomizationConfig.disabled(), np.random.default_rng(0), n)
        self.lag = LagBuffer(n, N_AGENTS, ACT_DIM, cfg.randomization.max_lag, cfg.control_dt)
        self.pushes = np.zeros((n, cfg.horizon, N_AGENTS, 3))
        self.command = np.zeros((n, N_AGENTS, 2))
        self.height_ref = np.zeros((n, N_AGENTS))
        self.obj = np.zeros((n, 3))
        self.prev_action = np.zeros((n, N_AGENTS, ACT_DIM))
        self.prev_prev_action = np.zeros((n, N_AGENTS, ACT_DIM))
        self.prev_leg_rate = np.zeros((n, N_AGENTS, 2))
        self.phase = np.zeros((n, N_AGENTS), dtype=np.int8)
        self.engaged = np.zeros((n, N_AGENTS), dtype=bool)
        self.stance_steps = np.zeros((n, N_AGENTS), dtype=np.int64)
        self.h_init = np.zeros((n, N_AGENTS))
        self.delay_remaining = np.zeros(n)
        self.step_count = np.zeros(n, dtype=np.int64)
        self.success = np.zeros(n, dtype=bool)
        self.flip_success = np.zeros(n, dtype=bool)
        self.success_step = np.full(n, -1, dtype=np.int64)
        self.done = np.zeros(n, dtype=bool)
        self.reason = np.zeros(n, dtype=np.int8)
        self._stats_reset(slice(None))

    # ------------------------------------------------------------------ setup
    def _seed(self, seed: int) -> None:
        children = np.random.SeedSequence(seed).spawn(self.n)
        self.rngs = [np.random.default_rng(c) for c in children]

    def set_curriculum(self, curriculum: CurriculumState) -> None:
        """Install the snapshot used by subsequent resets."""
        self.curriculum = curriculum

    def _stats_reset(self, idx) -> None:
        n = self.n
        for name in ("peak_height", "rel_height_sum", "power_sum_L", "power_sum_J", "return_L", "return_J"):
            arr = getattr(self, "_" + name, None)
            if arr is None:
                arr = np.zeros(n)
                setattr(self, "_" + name, arr)
            arr[idx] = 0.0
        if getattr(self, "_target_error", None) is None:
            self._target_error = np.full(n, np.nan)
        self._target_error[idx] = np.nan

    def reset(self, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Reset every environment. Returns ``(obs (N, 2, 14), global state (N, 30))``."""
        if seed is not None:
            self._seed(seed)
        self._reset_envs(np.arange(self.n))
        return self._observe()

    def _reset_envs(self, idx: np.ndarray) -> None:
        cfg, cur = self.cfg, self.curriculum
        idx = np.asarray(idx, dtype=int)
        m = len(idx)
        if m == 0:
            return
        rcfg = cfg.randomization
        perts, delays, offsets, heights, pushes = [], [], [], [], []
        for e in idx:
            rng = self.rngs[e]
            perts.append(sample_episode_perturbation(rcfg, rng, 1))
            delays.append(float(cur.sample_delay(rng)))
            off = cur.unlocked_offset_max
            offsets.append(rng.uniform(-off, off) if off > 0 else 0.0)
            hmax = cur.unlocked_height_max
            heights.append(rng.uniform(cur.cfg.height_start, hmax) if hmax > cur.cfg.height_start else cur.cfg.height_start)
            f = rcfg.sample("push_force", rng, (cfg.horizon, N_AGENTS, 2))
            t = rcfg.sample("push_torque", rng, (cfg.horizon, N_AGENTS, 1))
            pushes.append(np.concatenate([f, t], axis=-1))
        pert = EpisodePerturbation(
            **{k: np.concatenate([getattr(p, k) for p in perts]) for k in perts[0].__dict__}
        )
        self.pert.assign(idx, pert)
        self.pushes[idx] = np.stack(pushes)

        # physical parameters: nominal, then perturbed
        for k, v in self.nominal.__dict__.items():
            getattr(self.params, k)[idx] = v[idx]
        apply_perturbation(self.params, pert, idx)
        sub = self.params
        g = np.full(m, cur.gravity)

        s = self.sim
        s.q[idx] = 0.0
        s.qd[idx] = 0.0
        s.accumulated_pitch[idx] = 0.0
        s.anchor[idx] = np.nan
        s.leg_force[idx] = 0.0
        s.normal_force[idx] = 0.0
        s.tangent_force[idx] = 0.0
        s.contact_active[idx] = False
        s.base_contact_force[idx] = 0.0
        s.gravity[idx] = g
        s.time[idx] = 0.0

        kp_gain = pert.stiffness_gain[:, LAUNCHER]
        l_l = sub.default_rest[idx, LAUNCHER, 0] - sub.body_mass[idx, LAUNCHER] * g / (2 * sub.kp[idx, LAUNCHER] * kp_gain)
        pen = (sub.body_mass[idx, LAUNCHER] + 2 * sub.foot_mass[idx, LAUNCHER]) * g / (2 * cfg.contact.k_contact)
        s.q[idx, LAUNCHER, 1] = l_l - pen
        s.q[idx, LAUNCHER, 3] = l_l
        s.q[idx, LAUNCHER, 4] = l_l

        init = cur.init
        rest_j = sub.default_rest[idx, JUMPER]
        # prone pose: legs tucked so the feet just meet the launcher platform at the final start height
        top = s.q[idx, LAUNCHER, 1] + sub.mount_height[idx]
        l_prone = np.clip(INIT_HEIGHT_END - top, sub.min_length[idx, JUMPER], rest_j.min(axis=1))
        l_j = rest_j + init.leg_fraction * (l_prone[:, None] - rest_j)
        s.q[idx, JUMPER, 0] = pert.rel_pos_offset
        s.q[idx, JUMPER, 1] = init.height
        s.q[idx, JUMPER, 2] = pert.rel_pitch_offset
        s.q[idx, JUMPER, 3:5] = l_j
        s.leg_target[idx] = sub.default_rest[idx]

        px = cfg.platform_x + np.asarray(offsets)
        pz = np.asarray(heights)
        s.platform[idx, 0] = px
        s.platform[idx, 1] = pz
        s.platform[idx, 2] = cfg.platform_halfwidth
        self.obj[idx] = s.platform[idx]

        x0 = s.q[idx, JUMPER, 0]
        self.command[idx, LAUNCHER, 0] = 0.0
        self.command[idx, LAUNCHER, 1] = s.q[idx, LAUNCHER, 1]
        self.command[idx, JUMPER, 0] = (px - x0) / cfg.flight_time
        self.command[idx, JUMPER, 1] = pz
        self.height_ref[idx, LAUNCHER] = s.q[idx, LAUNCHER, 1]
        # the jumper base must clear the platform by a standing leg to land on it
        self.height_ref[idx, JUMPER] = pz + rest_j.mean(axis=1)

        self.h_init[idx] = s.q[idx, :, 1]
        self.prev_action[idx] = 0.0
        self.prev_prev_action[idx] = 0.0
        self.prev_leg_rate[idx] = 0.0
        self.lag.reset(idx)
        self.phase[idx] = Phase.INITIAL
        self.engaged[idx] = False
        self.stance_steps[idx] = 0
        self.delay_remaining[idx] = delays
        self.step_count[idx] = 0
        self.success[idx] = False
        self.flip_success[idx] = False
        self.success_step[idx] = -1
        self.done[idx] = False
        self.reason[idx] = TerminationReason.NONE
        self._stats_reset(idx)

    # ------------------------------------------------------------ observation
    def _observe(self) -> tuple[np.ndarray, np.ndarray]:
        obs_l = assemble_observation(self.sim, LAUNCHER, self.prev_action[:, LAUNCHER], self.command[:, LAUNCHER], self.obj)
        obs_j = assemble_observation(self.sim, JUMPER, self.prev_action[:, JUMPER], self.command[:, JUMPER], self.obj)
        state = assemble_global_state(obs_l, obs_j, self.sim)
        return np.stack([obs_l, obs_j], axis=1), state

    def info(self) -> EpisodeInfo:
        return EpisodeInfo(self.step_count.copy(), self.delay_remaining.copy(), self.success.copy(), self.reason.copy())

    # ------------------------------------------------------------------- step
    def step(self, actions: np.ndarray, with_breakdown: bool = False):
        """Advance one control step.

        ``actions`` has shape ``(N, 2, 4)``. Returns ``(obs, state, rewards
        (N, 2), done (N,), info)``. ``info`` holds ``terminated`` (true
        terminal, no bootstrap), ``truncated``, ``reason``, the pre-reset
        ``final_obs``/``final_state`` and per-episode metrics for finished
        environments.
        """
        cfg = self.cfg
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n, N_AGENTS, ACT_DIM):
            raise ValueError(f"actions must have shape {(self.n, N_AGENTS, ACT_DIM)}, got {actions.shape}")
        if not np.all(np.isfinite(actions)):
            raise ValueError("actions must be finite")
        live = ~self.done
        if not live.any():
            raise RuntimeError("step() called after every episode finished; call reset()")
        if not self.autoreset and self.n == 1 and self.done[0]:
            raise RuntimeError("step() called after the episode finished")

        in_delay = self.delay_remaining > 0
        u = np.where(in_delay[:, None, None], 0.0, np.clip(actions, -1.0, 1.0))
        self.lag.push(u)
        executed = self.lag.read(self.pert.total_lag)

        t_idx = np.minimum(self.step_count, cfg.horizon - 1)
        loads = ExternalLoads(self.pushes[np.arange(self.n), t_idx])
        assist = np.zeros(self.n)
        if cfg.flip_mode:
            assist = np.where(self.phase[:, JUMPER] == Phase.FLIGHT, self.curriculum.flip_assist, 0.0)

        self.sim, base_max = control_step(
            self.sim, self.params, executed, cfg.n_substeps, cfg.control_dt, cfg.contact, loads, assist,
            cfg.action_scale, self.pert.stiffness_gain, self.pert.damping_gain, active=live,
        )
        s = self.sim
        self.delay_remaining = np.where(in_delay & live, np.maximum(self.delay_remaining - cfg.control_dt, 0.0), self.delay_remaining)
        self.step_count += live

        # contacts and phases
        feet = [s.feet_contact(LAUNCHER), s.feet_contact(JUMPER)]
        on_target = s.feet_contact(JUMPER, Surface.TARGET_PLATFORM).any(axis=1)
        for ag in (LAUNCHER, JUMPER):
            any_c = feet[ag].any(axis=1)
            both = feet[ag].all(axis=1)
            new = update_phase(self.phase[:, ag], both, ~any_c)
            # landing bounces right after reset must not count as a jump
            step_phase = self.engaged[:, ag] & live
            self.phase[:, ag] = np.where(step_phase, new, self.phase[:, ag])
            self.stance_steps[:, ag] = np.where(both, self.stance_steps[:, ag] + 1, 0)
            self.engaged[:, ag] |= (self.stance_steps[:, ag] >= cfg.settle_steps) & ~in_delay

        zJ = s.q[:, JUMPER, 1]
        xJ = s.q[:, JUMPER, 0]
        gzJ = -np.cos(s.q[:, JUMPER, 2])
        td = R.check_touchdown(zJ, xJ, gzJ, on_target, s.platform[:, 0], cfg.success)
        qualifying = R.check_flip_success(td, s.accumulated_pitch[:, JUMPER], cfg.success) if cfg.flip_mode else R.check_success(td)
        qualifying &= live
        first = qualifying & ~self.success
        self.success_step = np.where(first, self.step_count, self.success_step)
        self.success |= qualifying
        if cfg.flip_mode:
            self.flip_success |= qualifying
        bonus = first if cfg.success_bonus == "once" else qualifying

        # rewards
        rate = s.qd[..., 3:5]
        accel = (rate - self.prev_leg_rate) / cfg.control_dt
        snaps = []
        for ag in (LAUNCHER, JUMPER):
            snaps.append(
                R.AgentSnapshot(
                    height=s.q[:, ag, 1],
                    vx=s.qd[:, ag, 0],
                    pitch=(s.q[:, ag, 2] + np.pi) % (2 * np.pi) - np.pi,
                    gravity_x=np.sin(s.q[:, ag, 2]),
                    leg_length=s.q[:, ag, 3:5],
                    leg_rate=rate[:, ag],
                    leg_accel=accel[:, ag],
                    leg_force=s.leg_force[:, ag],
                    leg_target=s.leg_target[:, ag],
                    default_length=self.params.default_rest[:, ag],
                    feet_contact=feet[ag],
                    body_contact=base_max[:, ag] > 0,
                    action=u[:, ag],
                    prev_action=self.prev_action[:, ag],
                    prev_prev_action=self.prev_prev_action[:, ag],
                    init_height=self.h_init[:, ag],
                )
            )
        base_force = base_max.max(axis=1)
        coop = R.cooperation_reward(
            R.CoopSnapshot(
                jumper_height=zJ,
                launcher_height=s.q[:, LAUNCHER, 1],
                jumper_pitch=snaps[JUMPER].pitch,
                success=bonus,
                base_force=base_force,
                force_limit=cfg.base_force_limit,
                fall_height=cfg.fall_height,
            )
        )
        task = [
            R.task_reward(snaps[ag], self.command[:, ag, 0], self.height_ref[:, ag], self.phase[:, ag], self.success)
            for ag in (LAUNCHER, JUMPER)
        ]
        regu = [R.regularization_reward(snaps[ag], ag, self.success) for ag in (LAUNCHER, JUMPER)]
        breakdown = R.total_reward(task, regu, coop)
        rew = np.where(live[:, None], breakdown.total, 0.0)

        self.prev_prev_action = self.prev_action.copy()
        self.prev_action = u
        self.prev_leg_rate = rate.copy()

        # termination
        reason = np.full(self.n, TerminationReason.NONE, dtype=np.int8)
        failing = ~self.success
        reason = np.where(failing & (zJ < cfg.fall_height), TerminationReason.JUMPER_FELL, reason)
        reason = np.where(failing & (base_force > cfg.base_force_limit), TerminationReason.BASE_FORCE, reason)
        out_of_time = (self.step_count >= cfg.horizon) | (
            (cfg.success_horizon > 0) & self.success & (self.step_count - self.success_step >= cfg.success_horizon)
        )
        reason = np.where((reason == TerminationReason.NONE) & out_of_time, TerminationReason.TIMEOUT, reason)
        reason = np.where(live, reason, self.reason)
        finished = live & (reason != TerminationReason.NONE)
        self.reason = reason
        self.done |= finished

        # running episode statistics
        self._peak_height = np.where(live, np.maximum(self._peak_height, zJ), self._peak_height)
        self._rel_height_sum += np.where(live, zJ - s.q[:, LAUNCHER, 1], 0.0)
        power = np.abs(s.leg_force * rate).mean(axis=2)
        self._power_sum_L += np.where(live, power[:, LAUNCHER], 0.0)
        self._power_sum_J += np.where(live, power[:, JUMPER], 0.0)
        first_target = live & on_target & np.isnan(self._target_error)
        self._target_error = np.where(first_target, np.abs(xJ - s.platform[:, 0]), self._target_error)
        self._return_L += rew[:, 0]
        self._return_J += rew[:, 1]

        obs, state = self._observe()
        info = {
            "terminated": finished & (reason != TerminationReason.TIMEOUT),
            "truncated": finished & (reason == TerminationReason.TIMEOUT),
            "reason": reason.copy(),
            "finished": finished,
            "touchdown": td & live,
            "base_force": base_force,
        }
        if with_breakdown:
            info["breakdown"] = breakdown
        if finished.any():
            idx = np.flatnonzero(finished)
            info["final_obs"] = obs[idx].copy()
            info["final_state"] = state[idx].copy()
            info["episodes"] = self._episode_metrics(idx)
            if self.autoreset:
                self._reset_envs(idx)
                obs, state = self._observe()
        return obs, state, rew, finished, info

    def _episode_metrics(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        steps = np.maximum(self.step_count[idx], 1)
        err = self._target_error[idx]
        final_err = np.abs(self.sim.q[idx, JUMPER, 0] - self.sim.platform[idx, 0])
        return {
            "env": idx.copy(),
            "success": self.success[idx].copy(),
            "flip_success": self.flip_success[idx].copy(),
            "reason": self.reason[idx].copy(),
            "length": self.step_count[idx].copy(),
            "peak_height": self._peak_height[idx].copy(),
            "mean_relative_height": self._rel_height_sum[idx] / steps,
            "target_error": np.where(np.isnan(err), final_err, err),
            "power_L": self._power_sum_L[idx] / steps,
            "power_J": self._power_sum_J[idx] / steps,
            "return_L": self._return_L[idx].copy(),
            "return_J": self._return_J[idx].copy(),
        }

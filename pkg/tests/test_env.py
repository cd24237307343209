import numpy as np
import pytest

from cojump.curriculum import CurriculumConfig, CurriculumState
from cojump.env import CoJumpEnv, EnvConfig, TerminationReason, gravity_projection
from cojump.phases import Phase
from cojump.randomize import RandomizationConfig
from cojump.sim2d import JUMPER, LAUNCHER


def quiet_env(n=4, **kw):
    cfg = EnvConfig(n_envs=n, randomization=RandomizationConfig.disabled(), **kw)
    return CoJumpEnv(cfg, seed=0, curriculum=CurriculumState.final(), autoreset=False)


def test_shapes():
    env = quiet_env()
    obs, state = env.reset()
    assert obs.shape == (4, 2, env.obs_dim) and state.shape == (4, env.state_dim)
    obs, state, r, done, info = env.step(np.zeros((4, 2, 4)))
    assert r.shape == (4, 2) and done.shape == (4,)
    with pytest.raises(ValueError):
        env.step(np.zeros((4, 2, 3)))
    with pytest.raises(ValueError):
        env.step(np.full((4, 2, 4), np.nan))


def test_gravity_projection_upright():
    assert np.allclose(gravity_projection(0.0), [0.0, -1.0])
    assert np.allclose(gravity_projection(np.pi), [0.0, 1.0], atol=1e-12)


def test_reset_pose_follows_curriculum():
    env = quiet_env()
    env.reset()
    assert np.allclose(env.sim.q[:, JUMPER, 1], 0.77)
    assert np.allclose(env.sim.gravity, 9.81)
    cur = CurriculumState.start(CurriculumConfig())
    env.set_curriculum(cur)
    env.reset()
    assert np.allclose(env.sim.q[:, JUMPER, 1], 1.0)
    assert np.allclose(env.sim.gravity, 7.0)


def test_delay_zeroes_actions():
    env = quiet_env(n=2)
    env.reset()
    env.delay_remaining[:] = [0.1, 0.0]
    env.step(np.ones((2, 2, 4)))
    f = env.sim.leg_target
    assert np.allclose(f[0], env.params.default_rest[0])
    assert not np.allclose(f[1], env.params.default_rest[1])
    assert env.delay_remaining[0] == pytest.approx(0.08)


def test_zero_action_stays_stacked_until_timeout():
    env = quiet_env(n=2, horizon=60)
    env.reset()
    peak = 0.0
    while not env.done.all():
        env.step(np.zeros((2, 2, 4)))
        peak = max(peak, env.sim.q[:, JUMPER, 1].max())
    assert np.all(env.reason == TerminationReason.TIMEOUT)
    assert not env.success.any()
    assert peak < 1.0  # never rises above its starting pose
    assert np.all(env.phase == Phase.INITIAL)


def test_same_seed_same_rollout():
    def run(seed):
        env = CoJumpEnv(EnvConfig(n_envs=3, horizon=30), seed=seed, autoreset=True)
        env.reset()
        rng = np.random.default_rng(0)
        out = []
        for _ in range(30):
            _, _, r, _, _ = env.step(rng.uniform(-1, 1, (3, 2, 4)))
            out.append(r)
        return np.array(out)

    assert np.array_equal(run(1), run(1))
    assert not np.array_equal(run(1), run(2))


def test_step_after_done_raises():
    env = quiet_env(n=1, horizon=2)
    env.reset()
    env.step(np.zeros((1, 2, 4)))
    env.step(np.zeros((1, 2, 4)))
    with pytest.raises(RuntimeError):
        env.step(np.zeros((1, 2, 4)))


def test_autoreset_reports_metrics():
    env = CoJumpEnv(EnvConfig(n_envs=2, horizon=3, randomization=RandomizationConfig.disabled()), seed=0)
    env.reset()
    for _ in range(2):
        *_, info = env.step(np.zeros((2, 2, 4)))
    *_, info = env.step(np.zeros((2, 2, 4)))
    assert info["truncated"].all() and not info["terminated"].any()
    ep = info["episodes"]
    assert ep["length"].tolist() == [3, 3]
    assert np.all(np.isfinite(ep["return_J"]))
    assert np.all(env.step_count == 0)  # already reset


def test_falling_jumper_terminates():
    env = quiet_env(n=1)
    env.reset()
    env.sim.q[0, JUMPER, :2] = [3.0, 0.3]  # on the ground, beside the launcher
    *_, done, info = env.step(np.zeros((1, 2, 4)))
    assert done[0] and info["reason"][0] == TerminationReason.JUMPER_FELL
    assert info["terminated"][0]


def test_success_is_never_a_failure():
    env = quiet_env(n=1)
    env.reset()
    # place the jumper standing on the target platform
    px, pz = env.sim.platform[0, :2]
    legs = env.params.default_rest[0, JUMPER]
    env.sim.q[0, JUMPER] = [px, pz + legs.mean() - 0.002, 0.0, legs[0], legs[1]]
    env.sim.qd[0] = 0.0
    env.sim.anchor[:] = np.nan
    for _ in range(5):
        *_, info = env.step(np.zeros((1, 2, 4)))
    assert env.success[0]
    assert env.reason[0] in (TerminationReason.NONE, TerminationReason.TIMEOUT)
    assert env.sim.q[0, LAUNCHER, 1] > 0.3


def test_success_runs_on_to_the_horizon():
    env = quiet_env(n=1, horizon=30)
    env.reset()
    px, pz = env.sim.platform[0, :2]
    legs = env.params.default_rest[0, JUMPER]
    env.sim.q[0, JUMPER] = [px, pz + legs.mean() - 0.002, 0.0, legs[0], legs[1]]
    env.sim.qd[0] = 0.0
    env.sim.anchor[:] = np.nan
    n = 0
    while not env.done[0]:
        env.step(np.zeros((1, 2, 4)))
        n += 1
    assert env.success[0] and n == 30
    assert env.reason[0] == TerminationReason.TIMEOUT

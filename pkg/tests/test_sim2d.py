import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cojump.sim2d import (
    CONTROL_DT,
    JUMPER,
    LAUNCHER,
    N_SUBSTEPS,
    PAIR_AGENT,
    PAIR_SURFACE,
    TRAJECTORY_COLUMNS,
    BodyState,
    ContactParams,
    PhysParams,
    SimState,
    Surface,
    apply_actions,
    ballistic_oracle,
    control_step,
    integrate,
    jumper_config,
    launcher_config,
    mass_matrix,
    mechanical_energy,
    resolve_contacts,
    substep,
    trajectory_row,
    wrap_angle,
)


def params(n=1):
    return PhysParams.from_configs(n, launcher_config(), jumper_config())


def free_state(n=1):
    """Both bodies far above the ground and away from each other."""
    s = SimState.zeros(n)
    s.platform[:] = [50.0, 0.8, 0.5]
    s.q[:, LAUNCHER] = [-20.0, 30.0, 0.0, 0.45, 0.45]
    s.q[:, JUMPER] = [0.0, 10.0, 0.0, 0.28, 0.28]
    return s


def stacked(n=1):
    s = SimState.zeros(n)
    s.platform[:] = [5.0, 0.8, 0.5]
    s.q[:, LAUNCHER] = [0.0, 0.45, 0.0, 0.45, 0.45]
    s.q[:, JUMPER] = [0.0, 0.45 + 0.15 + 0.28 + 0.001, 0.0, 0.28, 0.28]
    return s


def test_zero_action_at_default_gives_zero_force():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.default_rest[0]
    f, target = apply_actions(s, np.zeros((1, 2, 4)), p)
    assert np.all(f == 0.0)
    assert np.allclose(target, p.default_rest)


def test_full_extension_saturates_at_limit():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.min_length[0][:, None]
    f, _ = apply_actions(s, np.ones((1, 2, 4)), p)
    assert np.array_equal(f[0], np.repeat(p.force_limit[0][:, None], 2, axis=1))


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8))
@settings(max_examples=50, deadline=None)
def test_actions_are_clamped(vals):
    p = params()
    s = free_state()
    u = np.array(vals).reshape(1, 2, 4)
    f1, t1 = apply_actions(s, u, p)
    f2, t2 = apply_actions(s, np.clip(u, -1, 1), p)
    assert np.array_equal(f1, f2) and np.array_equal(t1, t2)
    assert np.all(np.abs(f1) <= p.force_limit[..., None] + 1e-12)


def test_assist_torque_reaches_pitch_equation():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.default_rest[0]
    s.gravity[:] = 0.0
    dt = CONTROL_DT / N_SUBSTEPS
    a = substep(s, p, np.zeros((1, 2, 4)), dt, assist_torque=120.0)
    b = substep(s, p, np.zeros((1, 2, 4)), dt)
    M = mass_matrix(s, p)[0, JUMPER]
    expected = np.linalg.solve(M, np.array([0, 0, 120.0, 0, 0]))[2]
    got = (a.qd[0, JUMPER, 2] - b.qd[0, JUMPER, 2]) / dt
    assert got == pytest.approx(expected, rel=1e-9)
    assert a.qd[0, LAUNCHER, 2] == b.qd[0, LAUNCHER, 2]


def test_foot_above_ground_is_inactive():
    p = params()
    s = stacked()
    s.q[0, LAUNCHER, 1] = 0.46  # feet 1 cm up
    cs = resolve_contacts(s, p)
    recs = [r for r in cs.records() if r.agent == LAUNCHER and r.foot is not None]
    assert recs and not any(r.active for r in recs)
    assert all(r.normal_force == 0.0 and r.tangent_force == 0.0 for r in recs)


@pytest.mark.parametrize("vz, engaged", [(-0.5, True), (0.0, True), (0.5, False)])
def test_shelf_contact_starts_only_from_above(vz, engaged):
    p = params()
    s = free_state()
    s.platform[:] = [0.0, 0.8, 0.5]
    s.q[0, JUMPER] = [0.0, 0.8 + 0.28 - 0.01, 0.0, 0.28, 0.28]  # feet 1 cm into the target
    s.qd[0, JUMPER, 1] = vz
    feet = (PAIR_SURFACE == Surface.TARGET_PLATFORM) & (PAIR_AGENT == JUMPER)
    cs = resolve_contacts(s, p)
    hit = cs.active[0] & feet
    assert hit.any() == engaged
    # once held, a rising foot stays in contact
    s.anchor[0, feet] = 0.0
    assert (resolve_contacts(s, p).active[0] & feet).any()


def test_single_robot_weight_is_supported():
    p = params()
    s = SimState.zeros(1)
    s.platform[:] = [5.0, 0.8, 0.5]
    s.q[0, LAUNCHER] = [0.0, 0.45, 0.0, 0.45, 0.45]
    s.q[0, JUMPER] = [-10.0, 0.28, 0.0, 0.28, 0.28]
    for _ in range(150):
        s, _ = control_step(s, p, np.zeros((1, 2, 4)))
    m = (PAIR_SURFACE == Surface.GROUND) & (PAIR_AGENT == LAUNCHER)
    weight = p.total_mass[0, LAUNCHER] * 9.81
    assert s.normal_force[0, m].sum() == pytest.approx(weight, rel=0.02)


def test_sliding_force_sits_on_dynamic_cone():
    p = params()
    s = stacked()
    s.q[0, LAUNCHER, 1] = 0.44
    s.anchor[:] = -5.0  # stick anchors far behind the feet demand a large tangential force
    cs = resolve_contacts(s, p)
    sl = cs.sliding[0]
    assert sl.any()
    assert np.allclose(np.abs(cs.tangent[0, sl]), p.mu_d[0] * cs.normal[0, sl], rtol=0, atol=1e-12)


def test_contacts_stay_in_cone_during_rollout():
    p = params(4)
    s = stacked(4)
    rng = np.random.default_rng(0)
    cp = ContactParams()
    dt = CONTROL_DT / N_SUBSTEPS
    for k in range(300):
        u = rng.uniform(-1, 1, (4, 2, 4)) if k % 10 == 0 else u
        cs = resolve_contacts(s, p, cp)
        assert np.all(cs.normal >= 0.0)
        stick = cs.active & ~cs.sliding
        mu_s = np.broadcast_to(p.mu_s[:, None], cs.tangent.shape)
        assert np.all(np.abs(cs.tangent[stick]) <= mu_s[stick] * cs.normal[stick] + 1e-9)
        s = substep(s, p, u, dt, cp)


def test_kernel_matches_numpy_substeps():
    p = params(3)
    s = stacked(3)
    s.q[1, JUMPER, 0] = 0.1
    s.q[2, JUMPER, 2] = 0.05
    rng = np.random.default_rng(1)
    ref = s.copy()
    for _ in range(20):
        u = rng.uniform(-1, 1, (3, 2, 4))
        s, _ = control_step(s, p, u)
        for _ in range(N_SUBSTEPS):
            ref = substep(ref, p, u, CONTROL_DT / N_SUBSTEPS)
    assert np.allclose(s.q, ref.q, atol=1e-8)
    assert np.allclose(s.qd, ref.qd, atol=1e-6)


def test_inactive_envs_untouched():
    p = params(2)
    s = stacked(2)
    out, _ = control_step(s, p, np.ones((2, 2, 4)), active=np.array([True, False]))
    assert np.array_equal(out.q[1], s.q[1]) and not np.array_equal(out.q[0], s.q[0])


def test_free_flight_momentum_and_gravity_per_substep():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.default_rest[0]
    s.qd[0, JUMPER, :2] = [1.3, 2.0]
    dt = CONTROL_DT / N_SUBSTEPS
    for _ in range(50):
        nxt = substep(s, p, np.zeros((1, 2, 4)), dt)
        assert nxt.qd[0, JUMPER, 0] == s.qd[0, JUMPER, 0]
        assert nxt.qd[0, JUMPER, 1] - s.qd[0, JUMPER, 1] == pytest.approx(-9.81 * dt, abs=1e-12)
        s = nxt


def test_zero_force_linear_motion():
    p = params()
    s = free_state()
    s.gravity[:] = 0.0
    s.q[0, :, 3:5] = p.default_rest[0]
    s.qd[0, JUMPER, :2] = [0.5, -0.25]
    x0 = s.q[0, JUMPER, :2].copy()
    for k in range(1, 21):
        s = integrate(s, p, np.zeros((1, 2, 5)), 0.002)
        assert np.allclose(s.q[0, JUMPER, :2], x0 + k * 0.002 * np.array([0.5, -0.25]), atol=1e-12)


def test_accumulated_pitch_is_rate_times_time():
    p = params()
    s = free_state()
    s.gravity[:] = 0.0
    s.q[0, :, 3:5] = p.default_rest[0]
    s.qd[0, JUMPER, 2] = 2.0
    s2 = integrate(s, p, np.zeros((1, 2, 5)), 1e-3)
    assert s2.accumulated_pitch[0, JUMPER] - s.accumulated_pitch[0, JUMPER] == pytest.approx(2.0e-3, rel=1e-9)


def test_free_fall_half_second():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.default_rest[0]
    z0 = s.q[0, JUMPER, 1]
    for _ in range(25):
        s, _ = control_step(s, p, np.zeros((1, 2, 4)))
    assert s.q[0, JUMPER, 1] - z0 == pytest.approx(-1.226, rel=0.005)


def test_ballistic_oracle_examples():
    b = BodyState(*(np.zeros(1) for _ in range(7)))
    b.vz[:] = 3.0
    b.vx[:] = 1.0
    assert ballistic_oracle(b, 9.81, 0.0).z == pytest.approx(0.0)
    apex = ballistic_oracle(b, 9.81, 3.0 / 9.81)
    assert apex.z[0] == pytest.approx(0.4587, abs=1e-4)
    assert ballistic_oracle(b, 9.81, 1.0).x[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ballistic_oracle(b, 9.81, -1.0)


def test_energy_drift_contact_free():
    p = params()
    s = free_state()
    s.q[0, :, 3:5] = p.default_rest[0]
    s.qd[0, JUMPER, :3] = [1.0, 3.0, 1.5]
    e0 = mechanical_energy(s, p)[0]
    for _ in range(50):  # 1 s
        s, _ = control_step(s, p, np.zeros((1, 2, 4)))
    # leg PD springs store a little energy when the spin stretches the legs; count it
    spring = 0.5 * (p.kp[0, :, None] * (s.q[0, :, 3:5] - p.default_rest[0]) ** 2).sum()
    e1 = mechanical_energy(s, p)[0] + spring
    assert abs(e1 - e0) / abs(e0) < 1e-3


def test_richardson_first_order():
    # semi-implicit Euler: halving dt halves the position error on a smooth interval
    p = params()
    errs = []
    for n in (5, 10, 20):
        s = free_state()
        s.q[0, :, 3:5] = p.default_rest[0]
        s.qd[0, JUMPER, :2] = [1.8, 3.5]
        start = s.body(JUMPER)
        for _ in range(25):
            s, _ = control_step(s, p, np.zeros((1, 2, 4)), n_substeps=n)
        ref = ballistic_oracle(start, 9.81, 0.5)
        errs.append(abs(s.q[0, JUMPER, 1] - ref.z[0]))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.02)


def test_non_finite_force_names_term():
    p = params()
    s = free_state()
    f = np.zeros((1, 2, 5))
    f[0, JUMPER, 4] = np.nan
    with pytest.raises(FloatingPointError, match="leg_rear"):
        integrate(s, p, f, 1e-3)


@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = float(wrap_angle(a))
    assert -math.pi <= w < math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_trajectory_row_width():
    s = stacked()
    assert len(trajectory_row(s)) == len(TRAJECTORY_COLUMNS)

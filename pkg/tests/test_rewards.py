import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cojump import rewards as R
from cojump.phases import Phase, update_phase

from oracles import tolerance_closed_form

finite = st.floats(-50, 50, allow_nan=False)


@st.composite
def specs(draw):
    lo = draw(st.one_of(st.just(-math.inf), st.floats(-5, 5)))
    width = draw(st.floats(0, 5))
    hi = draw(st.one_of(st.just(math.inf), st.just(lo + width if math.isfinite(lo) else width)))
    margin = draw(st.floats(0.01, 3))
    v = draw(st.floats(0.01, 0.99))
    return R.ToleranceSpec(lo, hi, margin, v)


@given(specs(), finite)
def test_tolerance_matches_closed_form(spec, x):
    dev = max(spec.lower - x, x - spec.upper, 0.0)
    ref = tolerance_closed_form(dev, spec.margin, spec.value_at_margin)
    assert float(R.tolerance(x, spec)) == pytest.approx(ref, rel=1e-12, abs=1e-15)


@given(specs(), finite, finite)
def test_tolerance_range_and_monotone(spec, a, b):
    ta, tb = float(R.tolerance(a, spec)), float(R.tolerance(b, spec))
    assert 0.0 < ta <= 1.0
    # farther from the band never scores higher
    da = max(spec.lower - a, a - spec.upper, 0.0)
    db = max(spec.lower - b, b - spec.upper, 0.0)
    if da <= db:
        assert ta >= tb


@pytest.mark.parametrize(
    "args",
    [(1.0, 0.0, 0.1, 0.2), (0.0, 1.0, 0.0, 0.2), (0.0, 1.0, 0.1, 0.0), (0.0, 1.0, 0.1, 1.0)],
)
def test_invalid_spec_rejected(args):
    with pytest.raises(ValueError):
        R.ToleranceSpec(*args)


def test_height_difference_examples():
    hd = lambda d: 6.0 * float(R.tolerance(d, R.HEIGHT_DIFF))
    assert hd(0.8) == 6.0
    assert hd(0.3) == pytest.approx(1.2, abs=1e-12)


def _agent(n=3, **kw):
    z = np.zeros((n, 2))
    base = dict(
        height=np.full(n, 0.5), vx=np.zeros(n), pitch=np.zeros(n), gravity_x=np.zeros(n),
        leg_length=np.full((n, 2), 0.3), leg_rate=z.copy(), leg_accel=z.copy(), leg_force=z.copy(),
        leg_target=np.full((n, 2), 0.3), default_length=np.full((n, 2), 0.3),
        feet_contact=np.ones((n, 2), bool), body_contact=np.zeros(n, bool),
        action=np.zeros((n, 4)), prev_action=np.zeros((n, 4)), prev_prev_action=np.zeros((n, 4)),
        init_height=np.full(n, 0.5),
    )
    base.update(kw)
    return R.AgentSnapshot(**base)


def _coop(n=3, **kw):
    base = dict(
        jumper_height=np.full(n, 1.3), launcher_height=np.full(n, 0.5), jumper_pitch=np.full(n, 0.1),
        success=np.zeros(n, bool), base_force=np.zeros(n),
    )
    base.update(kw)
    return R.CoopSnapshot(**base)


def test_initial_phase_contact_and_squat():
    s = _agent()
    t = R.task_reward(s, np.zeros(3), np.ones(3), np.full(3, Phase.INITIAL), np.zeros(3, bool))
    assert np.all(t["contact_maintenance"] == 1.0)
    assert np.all(t["squat"] == 1.0)
    assert np.all(t["height_tracking"] == 0.0) and np.all(t["vx_tracking"] == 0.0)


def test_flight_gating():
    s = _agent(feet_contact=np.zeros((3, 2), bool), height=np.full(3, 1.2))
    t = R.task_reward(s, np.zeros(3), np.ones(3), np.full(3, Phase.FLIGHT), np.zeros(3, bool))
    assert np.all(t["height_tracking"] == 1.0)
    assert np.all(t["contact_maintenance"] == 0.0) and np.all(t["squat"] == 0.0)


def test_post_landing_needs_success():
    s = _agent()
    ph = np.full(3, Phase.LANDING)
    succ = np.array([True, False, True])
    t = R.task_reward(s, np.zeros(3), np.ones(3), ph, succ)
    assert t["post_landing"].tolist() == [1.0, 0.0, 1.0]


def _breakdown(n=3, seed=0):
    rng = np.random.default_rng(seed)
    agents = [
        _agent(n, leg_rate=rng.normal(size=(n, 2)), action=rng.uniform(-1, 1, (n, 4)), pitch=rng.normal(0, 0.5, n))
        for _ in range(2)
    ]
    phase = rng.integers(0, 3, n)
    succ = rng.random(n) < 0.5
    task = [R.task_reward(a, np.zeros(n), np.ones(n), phase, succ) for a in agents]
    regu = [R.regularization_reward(a, ag, succ) for ag, a in enumerate(agents)]
    coop = R.cooperation_reward(_coop(n, success=succ, jumper_pitch=rng.normal(0, 1, n)))
    return R.total_reward(task, regu, coop)


@pytest.mark.parametrize("seed", range(5))
def test_breakdown_bookkeeping(seed):
    b = _breakdown(seed=seed)
    for ag in (0, 1):
        term_sum = sum(w for _, _, w in b.terms[ag].values())
        assert np.allclose(term_sum, sum(b.blocks[ag].values()))
        assert np.allclose(b.total[:, ag], sum(b.blocks[ag].values()))
    # shared block is identical for both robots
    assert np.array_equal(b.blocks[0]["coop"], b.blocks[1]["coop"])


def test_indicator_terms_are_zero_or_weight():
    b = _breakdown(n=50, seed=3)
    for ag in (0, 1):
        for name in ("coop/success", "coop/jumper_pitch", "task/contact_maintenance", "regu/pitch_deviation"):
            raw, w, weighted = b.terms[ag][name]
            assert set(np.unique(weighted)) <= {0.0, w}


def test_success_bonus_reaches_both():
    n = 2
    zero = {k: np.zeros(n) for k in R.WEIGHTS["task"]}
    zr = {k: np.zeros(n) for k in R.WEIGHTS["regu"]}
    coop = {k: np.zeros(n) for k in R.WEIGHTS["coop"]}
    coop["success"] = np.ones(n)
    b = R.total_reward([zero, zero], [zr, zr], coop)
    assert np.all(b.total == 40.0)
    coop["success"] = np.zeros(n)
    assert np.all(R.total_reward([zero, zero], [zr, zr], coop).total == 0.0)


@pytest.mark.parametrize(
    "h, err, gz, on, expect",
    [(1.1, 0.2, -0.9, True, True), (0.9, 0.1, -0.9, True, False), (1.2, 0.2, 0.3, True, False),
     (1.1, 0.2, -0.9, False, False), (1.1, 0.45, -0.9, True, False)],
)
def test_touchdown_gates(h, err, gz, on, expect):
    assert bool(R.check_touchdown(h, 1.0 + err, gz, on, 1.0)) is expect


def test_flip_success_threshold():
    assert bool(R.check_flip_success(True, 4.9))
    assert not bool(R.check_flip_success(True, math.pi))
    assert not bool(R.check_flip_success(False, 10.0))


def test_phase_machine_transitions():
    assert update_phase(Phase.INITIAL, False, True) is Phase.FLIGHT
    assert update_phase(Phase.INITIAL, True, False) is Phase.INITIAL
    assert update_phase(Phase.FLIGHT, False, False) is Phase.LANDING
    assert update_phase(Phase.FLIGHT, False, True) is Phase.FLIGHT
    assert update_phase(Phase.LANDING, False, True) is Phase.LANDING
    with pytest.raises(ValueError):
        update_phase(Phase.INITIAL, True, True)


@given(st.lists(st.sampled_from([(True, False), (False, True), (False, False)]), max_size=40))
def test_phase_never_goes_back(seq):
    p = Phase.INITIAL
    for both, none in seq:
        nxt = update_phase(p, both, none)
        assert nxt >= p
        p = nxt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cojump.curriculum import (
    FLIP_STAGES,
    INIT_STAGES,
    CurriculumConfig,
    CurriculumState,
    delay_bounds,
    gravity_at,
    init_config_at,
)


def test_gravity_checkpoints():
    cfg = CurriculumConfig()
    assert gravity_at(0, cfg) == 7.0
    assert gravity_at(15_000, cfg) == pytest.approx(7.0 + 2.81 / 3)
    assert gravity_at(20_000, cfg) == pytest.approx(7.0 + 2 * 2.81 / 3)
    assert gravity_at(10**9, cfg) == 9.81
    with pytest.raises(ValueError):
        gravity_at(-1, cfg)


def test_gravity_disabled_is_constant():
    cfg = CurriculumConfig(gravity_enabled=False)
    assert {gravity_at(k, cfg) for k in (0, 100, 30_000)} == {9.81}


@given(st.lists(st.integers(0, 40_000), min_size=2, max_size=30))
def test_gravity_monotone(steps):
    steps = sorted(steps)
    g = [gravity_at(s) for s in steps]
    assert all(a <= b for a, b in zip(g, g[1:]))


def test_init_schedule_linear():
    h = [init_config_at(k).height for k in range(INIT_STAGES + 1)]
    assert np.allclose(np.diff(h), (0.77 - 1.0) / 15)
    assert init_config_at(0).leg_fraction == 0.0 and init_config_at(15).leg_fraction == 1.0
    with pytest.raises(ValueError):
        init_config_at(-1)


def test_delay_stage_zero_is_zero():
    assert delay_bounds(0, 5) == (0.0, 0.0)
    st0 = CurriculumState(delay_stage=0)
    assert np.all(st0.sample_delay(np.random.default_rng(0), 100) == 0.0)


def test_start_respects_disabled_schedules():
    cfg = CurriculumConfig(init_enabled=False, delay_enabled=False)
    s = CurriculumState.start(cfg)
    assert s.init_stage == INIT_STAGES and s.delay_stage == cfg.delay_stages
    assert s.record_successes(10**6).init_stage == INIT_STAGES


def test_one_stage_per_call():
    cfg = CurriculumConfig(init_threshold=10, delay_threshold=10, target_threshold=10)
    s = CurriculumState.start(cfg).record_successes(1000)
    assert s.init_stage == 1 and s.target_stage == 1
    assert s.success_count == 1000


def test_delay_waits_for_init():
    cfg = CurriculumConfig(init_threshold=5, delay_threshold=5)
    s = CurriculumState.start(cfg)
    while s.init_stage < INIT_STAGES:
        assert s.delay_stage == 0
        s = s.record_successes(5)
    # the batch that completes the init schedule already counts toward the delay schedule
    assert s.delay_stage == 1
    assert s.record_successes(5).delay_stage == 2


def test_target_phases_offset_then_height():
    cfg = CurriculumConfig(target_threshold=1)
    s = CurriculumState.start(cfg)
    seen = []
    for _ in range(12):
        seen.append((s.unlocked_offset_max, s.unlocked_height_max))
        s = s.advance_target(1)
    assert seen[6] == (pytest.approx(0.6), 0.8)
    assert seen[7][1] == pytest.approx(0.9) and seen[8][1] == pytest.approx(1.0)
    assert s.target_stage == s.max_target_stage


def test_flip_assist_follows_stage():
    cfg = CurriculumConfig(flip_enabled=True, flip_threshold=1)
    s = CurriculumState.start(cfg)
    assert s.flip_assist == 120.0
    s = s.record_successes(0, flip_successes=1)
    assert s.flip_assist == 116.0
    assert CurriculumState.start().flip_assist == 0.0
    assert CurriculumState.final(cfg).flip_stage == FLIP_STAGES


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        CurriculumState().record_successes(-1)
    with pytest.raises(ValueError):
        CurriculumState().advance_steps(-1)


@pytest.mark.parametrize(
    "kw", [dict(gravity_checkpoints=(3, 2, 1)), dict(init_threshold=0), dict(gravity_unit="days"), dict(init_fixed_stage=16)]
)
def test_bad_config(kw):
    with pytest.raises(ValueError):
        CurriculumConfig(**kw)


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 5)), max_size=60))
@settings(max_examples=50, deadline=None)
def test_vector_round_trip_and_monotone(events):
    cfg = CurriculumConfig(init_threshold=7, delay_threshold=7, target_threshold=7, flip_enabled=True, flip_threshold=3)
    s = CurriculumState.start(cfg)
    for n, f in events:
        nxt = s.record_successes(n, f).advance_steps(n)
        for name in ("init_stage", "delay_stage", "target_stage", "flip_stage", "global_step", "success_count"):
            assert getattr(nxt, name) >= getattr(s, name)
        assert nxt.gravity >= s.gravity
        assert nxt.flip_assist <= s.flip_assist
        s = nxt
    assert CurriculumState.from_vector(s.to_vector(), cfg) == s

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cojump.marl.checkpoint import (
    CheckpointError,
    decode,
    encode,
    load_into,
    model_tensors,
    read_checkpoint,
    write_checkpoint,
)
from cojump.marl.gae import compute_gae, normalize_advantages
from cojump.marl.mappo import MAPPO, adapt_lr
from cojump.marl.nn import gaussian_entropy, gaussian_log_prob, init_mlp, mlp_forward
from cojump.marl.optim import Adam, make_optimizer
from cojump.marl.standardizer import RunningStandardizer
from cojump.marl.toy import GaussianBandit, MatchingGame

from oracles import gae_bruteforce


@given(
    arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=st.floats(-1e3, 1e3)),
    st.integers(1, 5),
)
@settings(max_examples=60, deadline=None)
def test_standardizer_chunking_matches_numpy(X, n_chunks):
    sd = RunningStandardizer()
    for chunk in np.array_split(X, n_chunks):
        sd.partial_fit(chunk)
    assert sd.count_ == len(X)
    assert np.allclose(sd.mean_, X.mean(axis=0), rtol=1e-9, atol=1e-9)
    assert np.allclose(sd.var_, X.var(axis=0), rtol=1e-7, atol=1e-6)


def test_standardizer_transform_clip_and_inverse():
    rng = np.random.default_rng(0)
    X = rng.normal(3.0, 2.0, (500, 3))
    sd = RunningStandardizer(clip=5.0).fit(X)
    Z = sd.transform(X)
    assert np.allclose(Z.mean(0), 0, atol=1e-9) and np.allclose(Z.std(0), 1, atol=1e-6)
    assert np.allclose(sd.inverse_transform(Z), X)
    assert sd.transform(np.full((1, 3), 1e6)).max() == 5.0
    with pytest.raises(ValueError):
        sd.partial_fit(np.zeros((2, 4)))


def test_standardizer_state_round_trip():
    sd = RunningStandardizer().fit(np.arange(12.0).reshape(4, 3))
    other = RunningStandardizer().load_arrays(sd.state_arrays())
    assert np.array_equal(other.transform(np.ones((1, 3))), sd.transform(np.ones((1, 3))))


def test_gae_two_step_hand_example():
    adv, ret = compute_gae(np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.array([False, True]), 10.0, 0.9, 0.8)
    d1 = 1.0 - 0.5
    d0 = 1.0 + 0.9 * 0.5 - 0.5
    assert adv[1] == pytest.approx(d1)
    assert adv[0] == pytest.approx(d0 + 0.72 * d1)
    assert np.allclose(ret, adv + 0.5)


def test_gae_batched_columns_independent():
    rng = np.random.default_rng(4)
    r, v = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    d = rng.random((8, 3)) < 0.3
    boot = rng.normal(size=3)
    adv, _ = compute_gae(r, v, d, boot, 0.99, 0.95)
    for j in range(3):
        ref, _ = gae_bruteforce(r[:, j], v[:, j], d[:, j], boot[j], 0.99, 0.95)
        assert np.allclose(adv[:, j], ref, atol=1e-12)


def test_normalize_advantages():
    a = normalize_advantages(np.array([1.0, 2.0, 3.0, 4.0]))
    assert a.mean() == pytest.approx(0) and a.std() == pytest.approx(1, rel=1e-6)


@pytest.mark.parametrize("kl, expect", [(1.0, 1e-3 / 1.5), (1e-5, 1.5e-3), (0.016, 1e-3)])
def test_adapt_lr(kl, expect):
    assert adapt_lr(kl, 1e-3) == pytest.approx(expect)


def test_adapt_lr_bounds():
    assert adapt_lr(10.0, 1e-6) == 1e-6
    assert adapt_lr(0.0, 1e-2) == 1e-2
    with pytest.raises(ValueError):
        adapt_lr(0.01, 0.0)


def test_gaussian_log_prob_matches_closed_form():
    rng = np.random.default_rng(1)
    mean, x = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    ls = np.array([-0.3, 0.0, 0.4])
    ref = (-0.5 * ((x - mean) / np.exp(ls)) ** 2 - ls - 0.5 * np.log(2 * np.pi)).sum(-1)
    assert np.allclose(gaussian_log_prob(mean, ls, x), ref)
    assert gaussian_entropy(ls) == pytest.approx((ls + 0.5 * np.log(2 * np.pi * np.e)).sum())


def test_mlp_shapes():
    net = init_mlp([6, 16, 16, 3], np.random.default_rng(0), log_std=0.0)
    out = mlp_forward(net, np.zeros((7, 6)))
    assert out.shape == (7, 3)


def test_adam_minimizes_quadratic():
    x = np.array([3.0, -2.0])
    opt = make_optimizer("adam", [x])
    for _ in range(2000):
        opt.step([2 * (x - 1.0)], 0.01)
    assert np.allclose(x, 1.0, atol=1e-3)
    with pytest.raises(ValueError):
        make_optimizer("lbfgs", [x])


def test_adam_state_round_trip():
    x = np.ones(3)
    a = Adam([x])
    a.step([np.array([1.0, 2.0, 3.0])], 0.1)
    y = np.ones(3)
    b = Adam([y])
    b.load_arrays(a.state_arrays())
    assert b.t == 1 and all(np.array_equal(p, q) for p, q in zip(a.m + a.v, b.m + b.v))


# ---------------------------------------------------------------- checkpoints


def _tensors():
    return {"a/0": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2, 3], dtype=np.int64), "c": np.zeros((0,))}


def test_encode_decode_round_trip():
    out = decode(encode(_tensors()))
    for k, v in _tensors().items():
        assert np.array_equal(out[k], v) and out[k].dtype == v.dtype


def test_truncation_reports_offset():
    blob = encode(_tensors())
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(CheckpointError) as e:
            decode(blob[:cut])
        assert e.value.offset <= cut


def test_corruption_detected():
    blob = bytearray(encode(_tensors()))
    blob[-20] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        decode(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(CheckpointError, match="trailing"):
        decode(encode(_tensors()) + b"\x00")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_checkpoint(tmp_path / "nope.ckpt")


def test_model_round_trip(tmp_path):
    game = MatchingGame(n_envs=8)
    m = MAPPO(seed=3, hidden_sizes=(8,), rollout_steps=4, n_iterations=3).fit(game)
    p = write_checkpoint(tmp_path / "m.ckpt", model_tensors(m))
    m2 = load_into(MAPPO(seed=99), read_checkpoint(p))
    obs = np.random.default_rng(0).normal(size=(5, 2, game.obs_dim))
    assert np.array_equal(m.predict(obs), m2.predict(obs))
    assert m2.iteration_ == m.iteration_


def test_fit_is_deterministic():
    a = MAPPO(seed=5, hidden_sizes=(8,), rollout_steps=4, n_iterations=5).fit(GaussianBandit(n_envs=8))
    b = MAPPO(seed=5, hidden_sizes=(8,), rollout_steps=4, n_iterations=5).fit(GaussianBandit(n_envs=8))
    assert all(np.array_equal(x, y) for x, y in zip(a.actors_[0].tensors(), b.actors_[0].tensors()))


def test_sklearn_params():
    m = MAPPO(lr=1e-3)
    assert m.get_params()["lr"] == 1e-3
    assert m.set_params(gamma=0.9).gamma == 0.9


def test_log_std_upper_bound():
    m = MAPPO(seed=0, hidden_sizes=(8,), rollout_steps=4, n_iterations=20, entropy_coef=1.0, max_log_std=0.0)
    m.fit(GaussianBandit(n_envs=8))
    assert all(np.all(a.log_std <= 0.0) for a in m.actors_)

"""Multi-agent PPO with decentralized Gaussian actors and critics on the global state.

The vectorized environment protocol used by :class:`MAPPO`:

* attributes ``n``; ``reset() -> (obs (N, A, obs_dim), state (N, state_dim))``
* ``step(actions (N, A, act_dim)) -> (obs, state, rewards (N, A), done (N,), info)``
  where ``info`` carries boolean ``terminated`` and ``truncated`` arrays and,
  when any environment finished, ``final_state`` rows for the finished ones
  (in index order, matching ``done``). Finished environments are reset by
  the environment. The environment also exposes ``act_dim``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gae import compute_gae, normalize_advantages
from .nn import (
    MlpParams,
    clip_grad_norm,
    gaussian_log_prob,
    init_mlp,
    mlp_backward,
    mlp_forward,
    policy_sample,
)
from .optim import make_optimizer
from .standardizer import RunningStandardizer


# ---------------------------------------------------------------- loss functions


def actor_loss(actor: MlpParams, obs, actions, old_log_prob, adv, ratio_clip: float = 0.2, entropy_coef: float = 0.0):
    """Clipped surrogate loss and its gradient.

    Returns ``(loss, grads, stats)`` where ``stats`` has ``approx_kl`` and
    ``clip_fraction``.
    """
    mean, cache = mlp_forward(actor, obs, keep_cache=True)
    log_std = actor.log_std
    logp = gaussian_log_prob(mean, log_std, actions)
    log_ratio = logp - old_log_prob
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1.0 - ratio_clip, 1.0 + ratio_clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    n = len(adv)
    entropy = np.sum(log_std) + 0.5 * log_std.size * (1.0 + np.log(2 * np.pi))
    loss = -surr.mean() - entropy_coef * entropy

    inside = (ratio > 1.0 - ratio_clip) & (ratio < 1.0 + ratio_clip)
    flows = inside | (ratio * adv < clipped * adv)
    dlogp = -(adv * ratio * flows) / n  # dL/dlogp per sample
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    d_mean = dlogp[:, None] * diff * inv_var
    grads = mlp_backward(actor, cache, d_mean)
    z2 = diff * diff * inv_var
    grads.log_std = (dlogp[:, None] * (z2 - 1.0)).sum(axis=0) - entropy_coef
    stats = {
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_fraction": float(np.mean(~inside)),
    }
    return float(loss), grads, stats


def critic_loss(critic: MlpParams, states, old_values, returns, value_clip: float = 0.2):
    """Clipped value loss ``mean(max((V-R)^2, (V_old + clip(V - V_old) - R)^2))`` and its gradient.

    ``old_values`` and ``returns`` have shape ``(B, k)`` matching the critic output.
    """
    v, cache = mlp_forward(critic, states, keep_cache=True)
    delta = v - old_values
    v_clip = old_values + np.clip(delta, -value_clip, value_clip)
    l1 = (v - returns) ** 2
    l2 = (v_clip - returns) ** 2
    loss = np.maximum(l1, l2)
    n = v.size
    use1 = l1 >= l2
    inside = np.abs(delta) < value_clip
    g = np.where(use1, 2.0 * (v - returns), 2.0 * (v_clip - returns) * inside) / n
    grads = mlp_backward(critic, cache, g)
    return float(loss.mean()), grads


def adapt_lr(approx_kl: float, lr: float, kl_target: float = 0.016, factor: float = 1.5,
             lr_min: float = 1e-6, lr_max: float = 1e-2, band: float = 2.0) -> float:
    """Shrink the rate when KL overshoots ``band * target``, grow it below ``target / band``."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if approx_kl > band * kl_target:
        return max(lr / factor, lr_min)
    if approx_kl < kl_target / band:
        return min(lr * factor, lr_max)
    return lr


# ------------------------------------------------------------------ rollout data


@dataclass
class TransitionBatch:
    """Time-major rollout storage; ``T`` steps by ``N`` environments by ``A`` agents."""

    obs: np.ndarray  # (T, N, A, obs_dim) standardized as fed to the actors
    states: np.ndarray  # (T, N, state_dim) standardized
    actions: np.ndarray  # (T, N, A, act_dim)
    log_probs: np.ndarray  # (T, N, A)
    values: np.ndarray  # (T, N, A) in return units
    rewards: np.ndarray  # (T, N, A), truncation bootstrap folded in
    dones: np.ndarray  # (T, N)
    raw_obs: np.ndarray | None = None
    raw_states: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def empty(cls, T, N, A, obs_dim, state_dim, act_dim) -> "TransitionBatch":
        return cls(
            obs=np.zeros((T, N, A, obs_dim)),
            states=np.zeros((T, N, state_dim)),
            actions=np.zeros((T, N, A, act_dim)),
            log_probs=np.zeros((T, N, A)),
            values=np.zeros((T, N, A)),
            rewards=np.zeros((T, N, A)),
            dones=np.zeros((T, N)),
            raw_obs=np.zeros((T, N, A, obs_dim)),
            raw_states=np.zeros((T, N, state_dim)),
        )

    @property
    def size(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]


# --------------------------------------------------------------------- estimator


class MAPPO(BaseEstimator):
    """Trainer and policy container for ``A`` agents.

    ``fit(env)`` runs ``n_iterations`` rounds of rollout collection and
    clipped-surrogate updates. ``predict(obs)`` returns deterministic joint
    actions. Actors never see the global state; critics only see it.
    """

    def __init__(
        self,
        hidden_sizes=(128, 128, 64),
        critic_hidden_sizes=None,
        rollout_steps: int = 16,
        epochs: int = 5,
        minibatches: int = 4,
        gamma: float = 0.99,
        lam: float = 0.95,
        lr: float = 5e-4,
        adaptive_lr: bool = True,
        kl_target: float = 0.016,
        lr_min: float = 1e-6,
        lr_max: float = 1e-2,
        grad_norm_clip: float = 1.0,
        ratio_clip: float = 0.2,
        value_clip: float = 0.2,
        entropy_coef: float = 0.0,
        init_log_std: float = 0.0,
        max_log_std: float = 2.0,
        optimizer: str = "adam",
        shared_critic: bool = False,
        standardize_obs: bool = True,
        standardize_values: bool = True,
        n_iterations: int = 100,
        seed: int = 0,
    ):
        self.hidden_sizes = hidden_sizes
        self.critic_hidden_sizes = critic_hidden_sizes
        self.rollout_steps = rollout_steps
        self.epochs = epochs
        self.minibatches = minibatches
        self.gamma = gamma
        self.lam = lam
        self.lr = lr
        self.adaptive_lr = adaptive_lr
        self.kl_target = kl_target
        self.lr_min = lr_min
        self.lr_max = lr_max
        self.grad_norm_clip = grad_norm_clip
        self.ratio_clip = ratio_clip
        self.value_clip = value_clip
        self.entropy_coef = entropy_coef
        self.init_log_std = init_log_std
        self.max_log_std = max_log_std
        self.optimizer = optimizer
        self.shared_critic = shared_critic
        self.standardize_obs = standardize_obs
        self.standardize_values = standardize_values
        self.n_iterations = n_iterations
        self.seed = seed

    # ------------------------------------------------------------ construction
    def initialize(self, n_agents: int, obs_dim: int, state_dim: int, act_dim: int) -> "MAPPO":
        if self.rollout_steps < 1 or self.epochs < 1 or self.minibatches < 1:
            raise ValueError("rollout_steps, epochs and minibatches must be positive")
        if not (0 < self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma must lie in (0, 1] and lam in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        rng = np.random.default_rng(self.seed)
        self.rng_ = rng
        self.n_agents_, self.obs_dim_, self.state_dim_, self.act_dim_ = n_agents, obs_dim, state_dim, act_dim
        hid = list(self.hidden_sizes)
        chid = list(self.critic_hidden_sizes) if self.critic_hidden_sizes is not None else hid
        self.actors_ = [
            init_mlp([obs_dim] + hid + [act_dim], rng, out_gain=0.01, log_std=self.init_log_std) for _ in range(n_agents)
        ]
        if self.shared_critic:
            self.critics_ = [init_mlp([state_dim] + chid + [n_agents], rng, out_gain=1.0)]
        else:
            self.critics_ = [init_mlp([state_dim] + chid + [1], rng, out_gain=1.0) for _ in range(n_agents)]
        self.actor_opts_ = [make_optimizer(self.optimizer, a.tensors()) for a in self.actors_]
        self.critic_opts_ = [make_optimizer(self.optimizer, c.tensors()) for c in self.critics_]
        self.lr_ = np.full(n_agents, float(self.lr))
        self.obs_norm_ = [RunningStandardizer() for _ in range(n_agents)]
        self.state_norm_ = RunningStandardizer()
        self.value_norm_ = [RunningStandardizer(clip=np.inf) for _ in range(n_agents)]
        self.iteration_ = 0
        self.env_steps_ = 0
        self.incidents_ = []
        return self

    # --------------------------------------------------------------- inference
    def _norm_obs(self, obs: np.ndarray) -> np.ndarray:
        if not self.standardize_obs:
            return np.asarray(obs, dtype=float)
        out = np.empty_like(obs, dtype=float)
        for a in range(self.n_agents_):
            sd = self.obs_norm_[a]
            out[:, a] = sd.transform(obs[:, a]) if hasattr(sd, "mean_") else obs[:, a]
        return out

    def _norm_state(self, state: np.ndarray) -> np.ndarray:
        if not self.standardize_obs or not hasattr(self.state_norm_, "mean_"):
            return np.asarray(state, dtype=float)
        return self.state_norm_.transform(state)

    def _value_scale(self, a: int) -> tuple[float, float]:
        vn = self.value_norm_[a]
        if not self.standardize_values or not hasattr(vn, "mean_"):
            return 0.0, 1.0
        return float(vn.mean_[0]), float(np.sqrt(vn.var_[0] + vn.eps))

    def critic_values(self, state_norm: np.ndarray, normalized: bool = False) -> np.ndarray:
        """Values ``(B, A)`` for standardized global states ``(B, state_dim)``."""
        state_norm = np.asarray(state_norm, dtype=float)
        if state_norm.ndim != 2 or state_norm.shape[1] != self.state_dim_:
            raise ValueError(f"critic expects global states of width {self.state_dim_}, got shape {state_norm.shape}")
        if self.shared_critic:
            v = mlp_forward(self.critics_[0], state_norm)
        else:
            v = np.concatenate([mlp_forward(c, state_norm) for c in self.critics_], axis=1)
        if normalized:
            return v
        out = np.empty_like(v)
        for a in range(self.n_agents_):
            mu, sd = self._value_scale(a)
            out[:, a] = v[:, a] * sd + mu
        return out

    def act(self, obs: np.ndarray, deterministic: bool = False):
        """Joint actions and log-probs for raw observations ``(N, A, obs_dim)``."""
        check_is_fitted(self, "actors_")
        o = self._norm_obs(np.asarray(obs, dtype=float))
        acts = np.empty((o.shape[0], self.n_agents_, self.act_dim_))
        logp = np.empty((o.shape[0], self.n_agents_))
        for a in range(self.n_agents_):
            s = policy_sample(self.actors_[a], o[:, a], self.rng_, deterministic)
            acts[:, a] = s.action
            logp[:, a] = s.log_prob
        return acts, logp, o

    def predict(self, obs) -> np.ndarray:
        return self.act(obs, deterministic=True)[0]

    # ---------------------------------------------------------------- training
    def collect(self, env, obs, state):
        """Roll the current policies for ``rollout_steps`` steps.

        Returns ``(batch, obs, state, episodes)`` where ``episodes`` is the
        list of per-episode metric dicts reported by the environment.
        """
        T, N, A = self.rollout_steps, obs.shape[0], self.n_agents_
        batch = TransitionBatch.empty(T, N, A, self.obs_dim_, self.state_dim_, self.act_dim_)
        episodes = []
        for t in range(T):
            actions, logp, o_norm = self.act(obs)
            s_norm = self._norm_state(state)
            values = self.critic_values(s_norm)
            next_obs, next_state, rew, done, info = env.step(actions)
            rew = np.array(rew, dtype=float)
            trunc = np.asarray(info["truncated"], dtype=bool)
            if trunc.any():
                fin = np.flatnonzero(np.asarray(done, dtype=bool))
                rows = np.searchsorted(fin, np.flatnonzero(trunc))
                v_final = self.critic_values(self._norm_state(info["final_state"][rows]))
                rew[trunc] += self.gamma * v_final
            batch.obs[t] = o_norm
            batch.states[t] = s_norm
            batch.raw_obs[t] = obs
            batch.raw_states[t] = state
            batch.actions[t] = actions
            batch.log_probs[t] = logp
            batch.values[t] = values
            batch.rewards[t] = rew
            batch.dones[t] = np.asarray(done, dtype=float)
            if "episodes" in info:
                episodes.append(info["episodes"])
            obs, state = next_obs, next_state
        last_values = self.critic_values(self._norm_state(state))
        adv, ret = compute_gae(batch.rewards, batch.values, np.repeat(batch.dones[..., None], A, axis=2), last_values, self.gamma, self.lam)
        batch.advantages, batch.returns = adv, ret
        self.env_steps_ += T * N
        # moments for the next rollout
        if self.standardize_obs:
            for a in range(A):
                self.obs_norm_[a].partial_fit(batch.raw_obs[:, :, a].reshape(-1, self.obs_dim_))
            self.state_norm_.partial_fit(batch.raw_states.reshape(-1, self.state_dim_))
        return batch, obs, state, episodes

    def update(self, batch: TransitionBatch) -> dict[str, float]:
        """Clipped-surrogate epochs over shuffled minibatches; returns mean statistics."""
        T, N, A = batch.rewards.shape
        B = T * N
        obs = batch.obs.reshape(B, A, self.obs_dim_)
        states = batch.states.reshape(B, self.state_dim_)
        actions = batch.actions.reshape(B, A, self.act_dim_)
        old_logp = batch.log_probs.reshape(B, A)
        returns = batch.returns.reshape(B, A)
        old_values = batch.values.reshape(B, A)
        adv = np.stack([normalize_advantages(batch.advantages[..., a].reshape(B)) for a in range(A)], axis=1)

        if self.standardize_values:
            for a in range(A):
                self.value_norm_[a].partial_fit(returns[:, a])
        ret_n = np.empty_like(returns)
        old_v_n = np.empty_like(old_values)
        for a in range(A):
            mu, sd = self._value_scale(a)
            ret_n[:, a] = (returns[:, a] - mu) / sd
            old_v_n[:, a] = (old_values[:, a] - mu) / sd

        mb = max(B // self.minibatches, 1)
        sums = {"policy_loss": 0.0, "value_loss": 0.0, "approx_kl": 0.0, "grad_norm": 0.0, "clip_fraction": 0.0}
        count = 0
        for _ in range(self.epochs):
            perm = self.rng_.permutation(B)
            epoch_kl = np.zeros(A)
            n_mb = 0
            for k in range(self.minibatches):
                idx = perm[k * mb : (k + 1) * mb] if k < self.minibatches - 1 else perm[k * mb :]
                if len(idx) == 0:
                    continue
                step_stats = self._minibatch_step(obs[idx], states[idx], actions[idx], old_logp[idx], adv[idx], old_v_n[idx], ret_n[idx])
                if step_stats is None:
                    continue
                for key in sums:
                    sums[key] += step_stats[key]
                epoch_kl += step_stats["kl_per_agent"]
                count += 1
                n_mb += 1
            if self.adaptive_lr and n_mb:
                epoch_kl /= n_mb
                for a in range(A):
                    self.lr_[a] = adapt_lr(epoch_kl[a], self.lr_[a], self.kl_target, lr_min=self.lr_min, lr_max=self.lr_max)
        self.iteration_ += 1
        out = {k: v / max(count, 1) for k, v in sums.items()}
        out["lr"] = float(self.lr_.mean())
        out["log_std"] = float(np.mean([a.log_std.mean() for a in self.actors_]))
        return out

    def _minibatch_step(self, obs, states, actions, old_logp, adv, old_v, ret):
        A = self.n_agents_
        pl, kl, cf, gn = np.zeros(A), np.zeros(A), np.zeros(A), 0.0
        actor_grads = []
        for a in range(A):
            loss, grads, st = actor_loss(self.actors_[a], obs[:, a], actions[:, a], old_logp[:, a], adv[:, a], self.ratio_clip, self.entropy_coef)
            pl[a], kl[a], cf[a] = loss, st["approx_kl"], st["clip_fraction"]
            actor_grads.append(grads)
        critic_grads, vls = [], []
        if self.shared_critic:
            vl, g = critic_loss(self.critics_[0], states, old_v, ret, self.value_clip)
            critic_grads.append(g)
            vls.append(vl)
        else:
            for a in range(A):
                vl, g = critic_loss(self.critics_[a], states, old_v[:, a : a + 1], ret[:, a : a + 1], self.value_clip)
                critic_grads.append(g)
                vls.append(vl)
        all_grads = actor_grads + critic_grads
        if not all(np.isfinite(pl)) or not all(np.isfinite(vls)) or not all(
            np.all(np.isfinite(t)) for g in all_grads for t in g.tensors()
        ):
            self.incidents_.append({"iteration": self.iteration_, "kind": "non-finite loss"})
            return None
        for a in range(A):
            gn += clip_grad_norm(actor_grads[a], self.grad_norm_clip)
            self.actor_opts_[a].step(actor_grads[a].tensors(), self.lr_[a])
            self.actors_[a].clamp_log_std(hi=self.max_log_std)
        for c, g in enumerate(critic_grads):
            gn += clip_grad_norm(g, self.grad_norm_clip)
            lr_c = self.lr_.mean() if self.shared_critic else self.lr_[c]
            self.critic_opts_[c].step(g.tensors(), lr_c)
        return {
            "policy_loss": float(pl.mean()),
            "value_loss": float(np.mean(vls)),
            "approx_kl": float(kl.mean()),
            "clip_fraction": float(cf.mean()),
            "grad_norm": gn / len(all_grads),
            "kl_per_agent": kl,
        }

    def fit(self, env, y=None, n_iterations: int | None = None, callback=None):
        """Train for ``n_iterations`` (defaults to the constructor value).

        ``callback(model, stats, episodes)`` runs after each update; returning
        ``False`` stops training early.
        """
        obs, state = env.reset()
        if not hasattr(self, "actors_"):
            self.initialize(obs.shape[1], obs.shape[2], state.shape[1], env.act_dim)
        iters = self.n_iterations if n_iterations is None else n_iterations
        for _ in range(iters):
            stats, obs, state, episodes = self.train_iteration(env, obs, state)
            if callback is not None and callback(self, stats, episodes) is False:
                break
        return self

    def train_iteration(self, env, obs, state):
        """One rollout plus one update; returns ``(stats, obs, state, episodes)``."""
        batch, obs, state, episodes = self.collect(env, obs, state)
        stats = self.update(batch)
        return stats, obs, state, episodes

"""Fixed-graph MLP with a hand-written backward pass.

Hidden layers are affine followed by ELU; the output layer is affine. The
forward pass returns a cache that :func:`mlp_backward` consumes to produce
gradients with the same structure as the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class MlpParams:
    """Layer weights ``W`` (in, out) and biases ``b`` (out,); optional Gaussian ``log_std``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_std: np.ndarray | None = None

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def tensors(self) -> list[np.ndarray]:
        """Flat list of parameter arrays in a fixed order (weights and biases interleaved)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.log_std is None else self.log_std.copy(),
        )

    def clamp_log_std(self, lo: float = LOG_STD_MIN, hi: float = LOG_STD_MAX) -> None:
        if self.log_std is not None:
            np.clip(self.log_std, lo, hi, out=self.log_std)

    @classmethod
    def from_tensors(cls, tensors: list[np.ndarray], has_log_std: bool) -> "MlpParams":
        t = list(tensors)
        log_std = t.pop() if has_log_std else None
        return cls(t[0::2], t[1::2], log_std)

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors())


def init_mlp(sizes, rng: np.random.Generator, out_gain: float = 1.0, log_std: float | None = None) -> MlpParams:
    """Orthogonal init with gain sqrt(2) on hidden layers and ``out_gain`` on the head, zero biases."""
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output sizes")
    ws, bs = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        a = rng.normal(size=(max(fan_in, fan_out), min(fan_in, fan_out)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        w = q if fan_in >= fan_out else q.T
        ws.append(gain * w[:fan_in, :fan_out].copy())
        bs.append(np.zeros(fan_out))
    ls = None if log_std is None else np.full(sizes[-1], float(log_std))
    return MlpParams(ws, bs, ls)


def mlp_forward(params: MlpParams, x: np.ndarray, keep_cache: bool = False):
    """Evaluate the network on a batch ``(B, in)``; returns the output (and cache)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"input dimension {x.shape[-1]} does not match network input {params.weights[0].shape[0]}")
    acts = [x]
    pres = []
    h = x
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < n - 1:
            pres.append(z)
            h = elu(z)
            acts.append(h)
        else:
            h = z
    if keep_cache:
        return h, (acts, pres)
    return h


def mlp_backward(params: MlpParams, cache, grad_out: np.ndarray) -> MlpParams:
    """Gradients of a scalar loss given ``dL/d(output)``; ``log_std`` grad is zero here."""
    acts, pres = cache
    n = len(params.weights)
    gw = [None] * n
    gb = [None] * n
    g = grad_out
    for i in range(n - 1, -1, -1):
        gw[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * elu_grad(pres[i - 1])
    ls = None if params.log_std is None else np.zeros_like(params.log_std)
    return MlpParams(gw, gb, ls)


def global_norm(grads: MlpParams) -> float:
    return float(np.sqrt(sum(np.sum(t * t) for t in grads.tensors())))


def clip_grad_norm(grads: MlpParams, max_norm: float) -> float:
    """Scale gradients in place so their joint norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if np.isfinite(max_norm) and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for t in grads.tensors():
            t *= scale
    return norm


# diagonal Gaussian policy head -------------------------------------------------

LOG_2PI = np.log(2.0 * np.pi)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + LOG_2PI))


@dataclass
class PolicySample:
    action: np.ndarray
    log_prob: np.ndarray
    mean: np.ndarray = field(repr=False)


def policy_sample(actor: MlpParams, obs: np.ndarray, rng: np.random.Generator | None, deterministic: bool = False) -> PolicySample:
    """Draw ``action ~ N(mlp(obs), exp(log_std))``; the mean when ``deterministic``."""
    mean = mlp_forward(actor, obs)
    log_std = np.clip(actor.log_std, LOG_STD_MIN, LOG_STD_MAX)
    if deterministic:
        action = mean.copy()
    else:
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return PolicySample(action, gaussian_log_prob(mean, log_std, action), mean)

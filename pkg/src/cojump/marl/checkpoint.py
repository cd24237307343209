"""Binary checkpoint format.

Little-endian layout::

    b"CJCK"  u32 version
    u32 n_tensors
    n_tensors x (u16 name_len, name utf-8, u8 dtype code, u8 ndim, ndim x u32 dims)
    raw tensor data in table order (float64 or int64)
    b"CEND"  u32 crc32 of every preceding byte

Writes go to a temporary file that replaces the target only once complete,
so an interrupted write leaves the previous checkpoint intact.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"CJCK"
END = b"CEND"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def encode(tensors: dict[str, np.ndarray]) -> bytes:
    head = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    body = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = np.dtype("<i8") if np.issubdtype(arr.dtype, np.integer) else np.dtype("<f8")
        arr = np.ascontiguousarray(arr, dtype=dt)
        raw = name.encode("utf-8")
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", _CODES[dt], arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(arr.tobytes())
    blob = b"".join(head + body) + END
    return blob + struct.pack("<I", zlib.crc32(blob))


def decode(blob: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint while reading {what}", pos)
        out = blob[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic, not a checkpoint file", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}", 4)
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    table = []
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2, "name length"))
        name = take(n, "name").decode("utf-8")
        start = pos
        code, ndim = struct.unpack("<BB", take(2, "tensor header"))
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for tensor {name!r}", start)
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "shape"))
        table.append((name, _DTYPES[code], shape))
    out = {}
    for name, dt, shape in table:
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        out[name] = np.frombuffer(take(nbytes, f"data of {name!r}"), dtype=dt).reshape(shape).copy()
    end_at = pos
    if take(4, "end marker") != END:
        raise CheckpointError("missing end marker", end_at)
    (crc,) = struct.unpack("<I", take(4, "checksum"))
    if zlib.crc32(blob[: pos - 4]) != crc:
        raise CheckpointError("checksum mismatch", pos - 4)
    if pos != len(blob):
        raise CheckpointError("trailing bytes after checksum", pos)
    return out


def write_checkpoint(path, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(encode(tensors))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())


# ----------------------------------------------------------------- model glue


def model_tensors(model, curriculum_vector=None) -> dict[str, np.ndarray]:
    """Everything needed to resume or evaluate a :class:`MAPPO` model."""
    t: dict[str, np.ndarray] = {
        "meta/dims": np.array([model.n_agents_, model.obs_dim_, model.state_dim_, model.act_dim_], dtype=np.int64),
        "meta/shared_critic": np.array([int(model.shared_critic)], dtype=np.int64),
        "meta/counters": np.array([model.iteration_, model.env_steps_], dtype=np.int64),
        "train/lr": model.lr_.copy(),
    }
    for kind, nets in (("actor", model.actors_), ("critic", model.critics_)):
        for i, net in enumerate(nets):
            for j, arr in enumerate(net.tensors()):
                t[f"{kind}{i}/{j}"] = arr
    for i, opt in enumerate(model.actor_opts_ + model.critic_opts_):
        for j, arr in enumerate(opt.state_arrays()):
            t[f"opt{i}/{j}"] = arr
    norms = [("obs", sd) for sd in model.obs_norm_] + [("state", model.state_norm_)] + [("value", v) for v in model.value_norm_]
    for k, (kind, sd) in enumerate(norms):
        if hasattr(sd, "mean_"):
            for j, arr in enumerate(sd.state_arrays()):
                t[f"norm{k}/{j}"] = arr
    if curriculum_vector is not None:
        t["curriculum"] = np.asarray(curriculum_vector, dtype=np.int64)
    return t


def _group(tensors, prefix):
    keys = sorted((k for k in tensors if k.startswith(prefix + "/")), key=lambda k: int(k.split("/")[1]))
    return [tensors[k] for k in keys]


def load_into(model, tensors: dict[str, np.ndarray]):
    """Restore a model from checkpoint tensors; builds the networks from the stored shapes."""
    from .nn import MlpParams

    dims = tensors["meta/dims"]
    A, obs_dim, state_dim, act_dim = (int(x) for x in dims)
    shared = bool(tensors["meta/shared_critic"][0])
    if shared != bool(model.shared_critic):
        raise ValueError(f"checkpoint shared_critic={shared} does not match model shared_critic={model.shared_critic}")
    actor0 = _group(tensors, "actor0")
    critic0 = _group(tensors, "critic0")
    hidden = tuple(int(w.shape[1]) for w in actor0[0:-1:2][:-1])
    chidden = tuple(int(w.shape[1]) for w in critic0[0::2][:-1])
    model.set_params(hidden_sizes=hidden, critic_hidden_sizes=chidden)
    model.initialize(A, obs_dim, state_dim, act_dim)
    model.actors_ = [MlpParams.from_tensors(_group(tensors, f"actor{i}"), True) for i in range(A)]
    n_critics = 1 if shared else A
    model.critics_ = [MlpParams.from_tensors(_group(tensors, f"critic{i}"), False) for i in range(n_critics)]
    from .optim import make_optimizer

    model.actor_opts_ = [make_optimizer(model.optimizer, a.tensors()) for a in model.actors_]
    model.critic_opts_ = [make_optimizer(model.optimizer, c.tensors()) for c in model.critics_]
    for i, opt in enumerate(model.actor_opts_ + model.critic_opts_):
        arrays = _group(tensors, f"opt{i}")
        if arrays:
            opt.load_arrays(arrays)
    norms = list(model.obs_norm_) + [model.state_norm_] + list(model.value_norm_)
    for k, sd in enumerate(norms):
        arrays = _group(tensors, f"norm{k}")
        if arrays:
            sd.load_arrays(arrays)
    model.lr_ = tensors["train/lr"].copy()
    model.iteration_, model.env_steps_ = (int(x) for x in tensors["meta/counters"])
    return model

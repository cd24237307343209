"""Training loop: curriculum bookkeeping, telemetry, and checkpoints around :class:`MAPPO`."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState
from .env import CoJumpEnv, EnvConfig
from .marl.checkpoint import load_into, model_tensors, read_checkpoint, write_checkpoint
from .marl.mappo import MAPPO

STATS_COLUMNS = [
    "iteration", "env_steps", "policy_loss", "value_loss", "approx_kl", "clip_fraction", "grad_norm", "lr",
    "log_std", "episodes", "successes", "success_rate", "mean_return_L", "mean_return_J", "mean_peak_height",
    "gravity", "target_stage", "init_stage", "delay_stage", "flip_stage",
]
STATS_VERSION = 1
EVENT_COLUMNS = ["iteration", "env_steps", "schedule", "old", "new"]


def default_mappo_params() -> dict:
    params = MAPPO().get_params()
    params.pop("seed")
    params.pop("n_iterations")
    return params


@dataclass(frozen=True)
class TrainConfig:
    n_iterations: int = 1220
    checkpoint_every: int = 100
    mappo: dict = field(default_factory=default_mappo_params)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def make_model(cfg: RunConfig) -> MAPPO:
    return MAPPO(seed=cfg.seed, **cfg.train.mappo)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Trainer:
    """Owns the environment, model, and curriculum for one run directory."""

    def __init__(self, cfg: RunConfig, out_dir, warm_start=None, log=print):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.log = log
        self.curriculum = CurriculumState.start(cfg.curriculum)
        self.env = CoJumpEnv(cfg.env, seed=cfg.seed, curriculum=self.curriculum)
        self.model = make_model(cfg)
        if warm_start is not None:
            # fine-tune path: weights, moments and curriculum from a checkpoint; physics from this config
            tensors = read_checkpoint(warm_start)
            load_into(self.model, tensors)
            if "curriculum" in tensors:
                self.curriculum = CurriculumState.from_vector(tensors["curriculum"], cfg.curriculum)
                self.env.set_curriculum(self.curriculum)
        self.history: list[dict] = []

    def _stages(self) -> dict:
        c = self.curriculum
        return {"gravity": c.gravity, "target_stage": c.target_stage, "init_stage": c.init_stage,
                "delay_stage": c.delay_stage, "flip_stage": c.flip_stage}

    def checkpoint(self, name: str) -> Path:
        return write_checkpoint(self.out / "checkpoints" / name, model_tensors(self.model, self.curriculum.to_vector()))

    def run(self, n_iterations: int | None = None, stop=None) -> Path:
        from .config import dump_config

        cfg = self.cfg
        n_iter = cfg.train.n_iterations if n_iterations is None else n_iterations
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.snapshot").write_text(dump_config(cfg))
        stats_f = open(self.out / "stats.csv", "w", newline="")
        events_f = open(self.out / "events.csv", "w", newline="")
        stats_w = csv.writer(stats_f)
        events_w = csv.writer(events_f)
        stats_f.write(f"# stats v{STATS_VERSION}\n")
        events_f.write(f"# events v{STATS_VERSION}\n")
        stats_w.writerow(STATS_COLUMNS)
        events_w.writerow(EVENT_COLUMNS)
        t0 = time.time()
        try:
            obs, state = self.env.reset()
            if not hasattr(self.model, "actors_"):
                self.model.initialize(self.env.n_agents, self.env.obs_dim, self.env.state_dim, self.env.act_dim)
            for _ in range(n_iter):
                stats, obs, state, episodes = self.model.train_iteration(self.env, obs, state)
                row = self._after_iteration(stats, episodes, events_w)
                stats_w.writerow([_fmt(row[c]) for c in STATS_COLUMNS])
                stats_f.flush()
                events_f.flush()
                it = self.model.iteration_
                if cfg.train.checkpoint_every and it % cfg.train.checkpoint_every == 0:
                    self.checkpoint(f"iter_{it}.ckpt")
                if it % 10 == 0:
                    self.log(
                        f"iter {it} steps {self.model.env_steps_} succ {row['success_rate']:.3f} "
                        f"ret {row['mean_return_J']:.1f} g {row['gravity']:.2f} init {row['init_stage']} "
                        f"delay {row['delay_stage']} lr {row['lr']:.2e} std {np.exp(row['log_std']):.3f} "
                        f"[{time.time() - t0:.0f}s]"
                    )
                if stop is not None and stop(self, row):
                    break
        finally:
            stats_f.close()
            events_f.close()
        self.checkpoint(f"iter_{self.model.iteration_}.ckpt")
        self.checkpoint("final.ckpt")
        return self.out

    def _after_iteration(self, stats: dict, episodes: list[dict], events_w) -> dict:
        n_eps = sum(len(e["env"]) for e in episodes)
        succ = int(sum(int(e["success"].sum()) for e in episodes))
        flips = int(sum(int(e["flip_success"].sum()) for e in episodes))

        def mean_of(key):
            vals = [e[key] for e in episodes]
            return float(np.concatenate(vals).mean()) if n_eps else float("nan")

        before = self._stages()
        c = self.curriculum
        step_inc = 1 if c.cfg.gravity_unit == "iteration" else self.model.rollout_steps * self.env.n
        self.curriculum = c.advance_steps(step_inc).record_successes(succ, flips)
        self.env.set_curriculum(self.curriculum)
        after = self._stages()
        for k in before:
            if before[k] != after[k]:
                events_w.writerow([self.model.iteration_, self.model.env_steps_, k, _fmt(before[k]), _fmt(after[k])])
        row = dict(stats)
        row.update(
            iteration=self.model.iteration_,
            env_steps=self.model.env_steps_,
            episodes=n_eps,
            successes=succ,
            success_rate=succ / n_eps if n_eps else 0.0,
            mean_return_L=mean_of("return_L"),
            mean_return_J=mean_of("return_J"),
            mean_peak_height=mean_of("peak_height"),
        )
        row.update(after)
        self.history.append(row)
        return row


def train(cfg: RunConfig, out_dir, warm_start=None, log=print, n_iterations=None, stop=None) -> Path:
    return Trainer(cfg, out_dir, warm_start=warm_start, log=log).run(n_iterations, stop=stop)


def load_model(path, cfg: RunConfig | None = None) -> tuple[MAPPO, CurriculumState | None]:
    cfg = cfg or RunConfig()
    tensors = read_checkpoint(path)
    model = load_into(make_model(cfg), tensors)
    cur = CurriculumState.from_vector(tensors["curriculum"], cfg.curriculum) if "curriculum" in tensors else None
    return model, cur


def with_variant(cfg: RunConfig, variant: str) -> RunConfig:
    """Ablation variants of a run configuration."""
    if variant == "full":
        return cfg
    if variant == "no_gravity_curriculum":
        return replace(cfg, curriculum=replace(cfg.curriculum, gravity_enabled=False))
    if variant == "no_init_curriculum":
        return replace(cfg, curriculum=replace(cfg.curriculum, init_enabled=False, init_fixed_stage=15))
    raise ValueError(f"unknown variant {variant!r}; expected full, no_gravity_curriculum or no_init_curriculum")


VARIANTS = ("full", "no_gravity_curriculum", "no_init_curriculum")
VARIANT_LABELS = {
    "full": "Ours (Base)",
    "no_gravity_curriculum": "Ours w/o gravity curriculum",
    "no_init_curriculum": "Ours w/o initialization curriculum",
}

"""Frozen-policy evaluation, trajectory replay, and the curriculum ablation harness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .curriculum import CurriculumState
from .env import CoJumpEnv, TerminationReason
from .marl.mappo import MAPPO
from .sim2d import TRAJECTORY_COLUMNS, trajectory_row
from .train import VARIANT_LABELS, RunConfig, load_model, train, with_variant

METRIC_COLUMNS = ["success", "mean_relative_height", "target_error", "peak_height", "power_L", "power_J"]
EPISODE_COLUMNS = ["seed", "episode", *METRIC_COLUMNS, "reason", "length"]
REPORT_COLUMNS = [
    "method", "target_height", "episodes", "seeds",
    "success_rate", "success_rate_std",
    "mean_relative_height", "mean_relative_height_std",
    "mean_target_error", "mean_target_error_std",
    "mean_peak_height", "mean_peak_height_std",
    "mean_power_L", "mean_power_L_std",
    "mean_power_J", "mean_power_J_std",
]
CSV_VERSION = 1


@dataclass
class MetricsReport:
    """Aggregate of completed evaluation episodes.

    Success rate is reported as mean ± std over per-seed rates; the other
    columns as mean ± std over episodes. ``episodes`` keeps the raw
    per-episode values.
    """

    seeds: tuple[int, ...]
    episodes: dict[str, np.ndarray]
    target_height: float = float("nan")
    method: str = ""

    @property
    def n_episodes(self) -> int:
        return len(self.episodes["success"])

    def _stat(self, key: str) -> tuple[float, float]:
        v = np.asarray(self.episodes[key], dtype=float)
        return float(v.mean()), float(v.std())

    @property
    def seed_success_rates(self) -> np.ndarray:
        seeds = self.episodes["seed"]
        return np.array([self.episodes["success"][seeds == s].mean() for s in self.seeds])

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.episodes["success"]))

    @property
    def success_rate_std(self) -> float:
        return float(self.seed_success_rates.std())

    @property
    def mean_relative_height(self) -> float:
        return self._stat("mean_relative_height")[0]

    @property
    def mean_target_error(self) -> float:
        return self._stat("target_error")[0]

    @property
    def mean_peak_height(self) -> float:
        return self._stat("peak_height")[0]

    @property
    def mean_power(self) -> tuple[float, float]:
        return self._stat("power_L")[0], self._stat("power_J")[0]

    def row(self) -> dict[str, float | str | int]:
        out: dict[str, float | str | int] = {
            "method": self.method,
            "target_height": self.target_height,
            "episodes": self.n_episodes,
            "seeds": " ".join(str(s) for s in self.seeds),
            "success_rate": self.success_rate,
            "success_rate_std": self.success_rate_std,
        }
        for name, key in (
            ("mean_relative_height", "mean_relative_height"),
            ("mean_target_error", "target_error"),
            ("mean_peak_height", "peak_height"),
            ("mean_power_L", "power_L"),
            ("mean_power_J", "power_J"),
        ):
            out[name], out[name + "_std"] = self._stat(key)
        return out

    def write_csv(self, path) -> Path:
        return write_report_csv(path, [self])

    def write_episodes_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# episodes v{CSV_VERSION}\n")
            w = csv.writer(fh)
            w.writerow(EPISODE_COLUMNS)
            for i in range(self.n_episodes):
                w.writerow([_fmt(self.episodes[c][i]) for c in EPISODE_COLUMNS])
        return path

    def table(self) -> str:
        return format_table([self])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_report_csv(path, reports: list[MetricsReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# report v{CSV_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.row()
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    return path


def format_table(reports: list[MetricsReport]) -> str:
    """Plain-text table: method, target height, success (%), h_diff, xy error, peak height, power L/J."""
    head = ["Method", "h_tgt (m)", "Success (%)", "h_diff (m)", "err_xy (m)", "h_max J (m)", "Power L (W)", "Power J (W)"]
    rows = []
    for r in reports:
        d = r.row()

        def pm(key, scale=1.0, digits=2):
            return f"{d[key] * scale:.{digits}f} ± {d[key + '_std'] * scale:.{digits}f}"

        rows.append([
            r.method or "policy",
            f"{r.target_height:.1f}",
            pm("success_rate", 100.0, 1),
            pm("mean_relative_height"),
            pm("mean_target_error"),
            pm("mean_peak_height"),
            pm("mean_power_L"),
            pm("mean_power_J"),
        ])
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(head)]
    buf = io.StringIO()
    buf.write("  ".join(h.ljust(w) for h, w in zip(head, widths)) + "\n")
    buf.write("  ".join("-" * w for w in widths) + "\n")
    for row in rows:
        buf.write("  ".join(c.ljust(w) for c, w in zip(row, widths)) + "\n")
    return buf.getvalue()


# ------------------------------------------------------------------ evaluation


def _resolve(policy, cfg: RunConfig):
    """Accept a fitted model or a checkpoint path; returns ``(model, curriculum or None)``."""
    if isinstance(policy, MAPPO):
        return policy, None
    return load_model(policy, cfg)


def _check_dims(model: MAPPO, env: CoJumpEnv) -> None:
    want = (env.n_agents, env.obs_dim, env.state_dim, env.act_dim)
    got = (model.n_agents_, model.obs_dim_, model.state_dim_, model.act_dim_)
    if want != got:
        raise ValueError(f"checkpoint dimensions (agents, obs, state, act) = {got} do not match environment {want}")


def eval_curriculum(cfg: RunConfig) -> CurriculumState:
    """Deployment conditions: full gravity, final init stage and delay, target space at its start."""
    return CurriculumState.final(cfg.curriculum)


def run_episodes(model: MAPPO, cfg: RunConfig, n_episodes: int, seed: int, curriculum=None) -> dict[str, np.ndarray]:
    """One deterministic episode per environment, ``n_episodes`` environments in parallel."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    curriculum = curriculum or eval_curriculum(cfg)
    env = CoJumpEnv(replace(cfg.env, n_envs=n_episodes), seed=seed, curriculum=curriculum, autoreset=False)
    _check_dims(model, env)
    obs, _ = env.reset()
    collected: list[dict] = []
    while not env.done.all():
        obs, _, _, _, info = env.step(model.predict(obs))
        if "episodes" in info:
            collected.append(info["episodes"])
    ep = {k: np.concatenate([c[k] for c in collected]) for k in collected[0]}
    order = np.argsort(ep["env"], kind="stable")
    return {k: v[order] for k, v in ep.items()}


def evaluate(policy, cfg: RunConfig | None = None, n_episodes: int = 64, seeds=(0,), method: str = "",
             curriculum=None) -> MetricsReport:
    """Evaluate a frozen policy in deterministic mode over every seed in ``seeds``.

    ``policy`` is a fitted :class:`MAPPO` or a checkpoint path.
    """
    cfg = cfg or RunConfig()
    model, _ = _resolve(policy, cfg)
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    parts = []
    for s in seeds:
        ep = run_episodes(model, cfg, n_episodes, s, curriculum)
        ep["seed"] = np.full(len(ep["env"]), s)
        ep["episode"] = ep["env"]
        parts.append(ep)
    episodes = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    cur = curriculum or eval_curriculum(cfg)
    return MetricsReport(seeds=seeds, episodes=episodes, target_height=cur.unlocked_height_max, method=method)


# ---------------------------------------------------------------------- replay

REPLAY_EXTRA = ["step", "phase_L", "phase_J", "target_x", "target_z", "reward_L", "reward_J", "success", "reason"]


def replay(policy, cfg: RunConfig | None = None, seed: int = 0, path=None, curriculum=None):
    """Roll one deterministic episode and record every control step.

    Columns: the simulator trajectory columns, phases, target platform,
    per-agent reward, and every reward term per agent. Returns ``(rows,
    columns, episode_metrics)`` and writes a CSV when ``path`` is given.
    """
    cfg = cfg or RunConfig()
    model, _ = _resolve(policy, cfg)
    curriculum = curriculum or eval_curriculum(cfg)
    env = CoJumpEnv(replace(cfg.env, n_envs=1), seed=seed, curriculum=curriculum, autoreset=False)
    _check_dims(model, env)
    obs, _ = env.reset()
    rows: list[list] = []
    columns = None
    metrics = None
    step = 0
    while not env.done[0]:
        obs, _, rew, _, info = env.step(model.predict(obs), with_breakdown=True)
        step += 1
        terms = info["breakdown"].columns()
        if columns is None:
            columns = list(TRAJECTORY_COLUMNS) + REPLAY_EXTRA + sorted(terms)
        row = trajectory_row(env.sim, 0) + [
            step, int(env.phase[0, 0]), int(env.phase[0, 1]),
            float(env.sim.platform[0, 0]), float(env.sim.platform[0, 1]),
            float(rew[0, 0]), float(rew[0, 1]), int(env.success[0]), TerminationReason(int(info["reason"][0])).name,
        ] + [float(terms[k][0]) for k in sorted(terms)]
        rows.append(row)
        if "episodes" in info:
            metrics = {k: v[0] for k, v in info["episodes"].items()}
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# trajectory v{CSV_VERSION}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    return rows, columns, metrics


def power_from_trajectory(rows, columns, agent: str) -> float:
    """Mean absolute leg power of one agent ("L" or "J") recomputed from replay rows."""
    col = {c: i for i, c in enumerate(columns)}
    a = np.asarray([[r[col[f"{agent}_leg{j}_force"]] * r[col[f"{agent}_leg{j}_rate"]] for j in (0, 1)] for r in rows])
    return float(np.abs(a).mean(axis=1).mean())


# -------------------------------------------------------------------- ablation


@dataclass
class AblationResult:
    variant: str
    report: MetricsReport
    baseline: MetricsReport | None = None
    run_dirs: dict[str, Path] = field(default_factory=dict)

    def table(self) -> str:
        reports = [self.report] + ([self.baseline] if self.baseline is not None else [])
        return format_table(reports)


def ablation_run(variant: str, cfg: RunConfig, out_dir, n_episodes: int = 64, eval_seeds=(0,),
                 baseline: MetricsReport | None = None, log=print, n_iterations: int | None = None) -> AblationResult:
    """Train ``variant`` from scratch, evaluate it, and pair it with the full-curriculum baseline.

    The baseline is trained too unless a report is passed in or the variant is itself ``full``.
    """
    out = Path(out_dir)
    dirs = {}

    def run(v):
        vcfg = with_variant(cfg, v)
        d = train(vcfg, out / v, log=log, n_iterations=n_iterations)
        dirs[v] = d
        rep = evaluate(d / "checkpoints" / "final.ckpt", vcfg, n_episodes, eval_seeds, method=VARIANT_LABELS[v])
        rep.write_csv(d / "eval" / "report.csv")
        rep.write_episodes_csv(d / "eval" / "episodes.csv")
        return rep

    report = run(variant)
    if baseline is None and variant != "full":
        baseline = run("full")
    result = AblationResult(variant, report, baseline, dirs)
    reports = [report] + ([baseline] if baseline is not None else [])
    write_report_csv(out / f"ablation_{variant}.csv", reports)
    return result

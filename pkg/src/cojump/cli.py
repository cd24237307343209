"""Command line: ``cojump {train,eval,replay,ablate}``."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .marl.checkpoint import CheckpointError
from .train import VARIANTS, RunConfig, train


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def read_stats(path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [[float(v) for v in row] for row in reader]


def plot_stats(stats_csv, out_dir, columns=("success_rate", "mean_return_J", "mean_peak_height", "gravity",
                                             "init_stage", "delay_stage", "approx_kl", "lr")) -> list[Path]:
    """One SVG line chart per stats column against iteration."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = read_stats(stats_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    it = [r[header.index("iteration")] for r in rows]
    paths = []
    for col in columns:
        if col not in header:
            continue
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(it, [r[header.index(col)] for r in rows])
        ax.set_xlabel("iteration")
        ax.set_ylabel(col)
        fig.tight_layout()
        p = out / f"{col}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out or "runs/train")
    warm = _require(args.checkpoint) if args.checkpoint else None
    train(cfg, out, warm_start=warm, n_iterations=args.iterations)
    if args.plot:
        plot_stats(out / "stats.csv", out / "plots")
    print(f"run directory: {out}")
    return 0


def _seeds(args) -> tuple[int, ...]:
    if args.eval_seeds:
        return tuple(args.eval_seeds)
    base = 0 if args.seed is None else args.seed
    return tuple(range(base, base + args.n_seeds))


def cmd_eval(args) -> int:
    from .evalkit import evaluate

    cfg = _config(args)
    ckpt = _require(args.checkpoint)
    report = evaluate(ckpt, cfg, args.episodes, _seeds(args), method=args.name)
    out = Path(args.out) if args.out else ckpt.parent.parent / "eval"
    report.write_csv(out / f"{args.name}.csv")
    report.write_episodes_csv(out / f"{args.name}_episodes.csv")
    print(report.table(), end="")
    return 0


def cmd_replay(args) -> int:
    from .evalkit import replay

    cfg = _config(args)
    ckpt = _require(args.checkpoint)
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out) if args.out else ckpt.parent.parent / "eval" / f"replay_seed{seed}.csv"
    rows, _, metrics = replay(ckpt, cfg, seed=seed, path=out)
    print(f"{len(rows)} steps, success={bool(metrics['success'])}, written to {out}")
    return 0


def cmd_ablate(args) -> int:
    from .evalkit import ablation_run

    cfg = _config(args)
    out = Path(args.out or "runs/ablate")
    res = ablation_run(args.variant, cfg, out, n_episodes=args.episodes, eval_seeds=_seeds(args),
                       n_iterations=args.iterations)
    if args.plot:
        for v, d in res.run_dirs.items():
            plot_stats(d / "stats.csv", d / "plots")
    print(res.table(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cojump", description="Cooperative launcher/jumper training and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory or file")

    sp = sub.add_parser("train", help="train from scratch or fine-tune from --checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", help="warm-start checkpoint")
    sp.add_argument("--iterations", type=int, help="override train.n_iterations")
    sp.add_argument("--plot", action="store_true", help="write SVG charts of stats columns")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int, default=64, help="episodes per seed")
    sp.add_argument("--n-seeds", type=int, default=10, help="number of consecutive seeds starting at --seed")
    sp.add_argument("--eval-seeds", type=int, nargs="*", help="explicit seed list")
    sp.add_argument("--name", default="report")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("replay", help="record one deterministic episode to a trajectory CSV")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("ablate", help="train a curriculum ablation and compare with the full curriculum")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, required=True)
    sp.add_argument("--episodes", type=int, default=64)
    sp.add_argument("--n-seeds", type=int, default=3)
    sp.add_argument("--eval-seeds", type=int, nargs="*")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

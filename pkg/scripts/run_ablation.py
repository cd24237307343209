"""Train and evaluate every curriculum variant for several seeds; writes summary.csv.

Each run trains from scratch with the given config, then evaluates the final
checkpoint at the final curriculum stage. The summary is what
``tests/ablation_results.py`` checks.
"""

import argparse
import csv
import shutil
import time
from dataclasses import replace
from pathlib import Path

from cojump.cli import read_stats
from cojump.config import load_config
from cojump.evalkit import evaluate
from cojump.train import VARIANT_LABELS, VARIANTS, train, with_variant

COLUMNS = ["seed", "variant", "success_rate", "env_steps", "n_envs", "target_height", "train_seconds", "eval_episodes"]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/desk.ini")
    p.add_argument("--out", default="results/ablation")
    p.add_argument("--runs", default="runs/ablation", help="where full run directories go")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS)
    p.add_argument("--episodes", type=int, default=64, help="episodes per eval seed")
    p.add_argument("--eval-seeds", type=int, nargs="+", default=[1000, 1001])
    args = p.parse_args(argv)

    base = load_config(args.config)
    out, runs = Path(args.out), Path(args.runs)
    out.mkdir(parents=True, exist_ok=True)
    summary = out / "summary.csv"
    done = set()
    if summary.exists():
        with open(summary, newline="") as fh:
            done = {(int(r["seed"]), r["variant"]) for r in csv.DictReader(fh)}
    else:
        with open(summary, "w", newline="") as fh:
            csv.writer(fh).writerow(COLUMNS)

    for seed in args.seeds:
        for v in args.variants:
            if (seed, v) in done:
                continue
            cfg = replace(with_variant(base, v), seed=seed)
            d = runs / f"{v}_seed{seed}"
            t0 = time.perf_counter()
            train(cfg, d, log=lambda s: print(f"[{v} seed {seed}] {s}", flush=True))
            dt = time.perf_counter() - t0
            rep = evaluate(d / "checkpoints" / "final.ckpt", cfg, args.episodes, tuple(args.eval_seeds),
                           method=VARIANT_LABELS[v])
            header, rows = read_stats(d / "stats.csv")
            steps = int(rows[-1][header.index("env_steps")])
            keep = out / f"{v}_seed{seed}"
            keep.mkdir(exist_ok=True)
            shutil.copy(d / "stats.csv", keep / "stats.csv")
            rep.write_csv(keep / "report.csv")
            with open(summary, "a", newline="") as fh:
                csv.writer(fh).writerow(
                    [seed, v, f"{rep.success_rate:.6f}", steps, cfg.env.n_envs, f"{rep.target_height:.3f}",
                     f"{dt:.1f}", rep.n_episodes]
                )
            print(f"{v} seed {seed}: success {rep.success_rate:.3f} after {steps} steps in {dt / 60:.1f} min", flush=True)


if __name__ == "__main__":
    main()

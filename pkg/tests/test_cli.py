import csv

import numpy as np
import pytest

from cojump.cli import main, read_stats
from cojump.evalkit import (
    EPISODE_COLUMNS,
    REPORT_COLUMNS,
    MetricsReport,
    evaluate,
    format_table,
    power_from_trajectory,
    replay,
)
from cojump.config import parse_config
from cojump.train import train

TINY = """
[env]
n_envs = 8
horizon = 40
[curriculum]
gravity_checkpoints = 2 3 4
[train]
n_iterations = 3
checkpoint_every = 2
[train.mappo]
hidden_sizes = 16 16
rollout_steps = 8
"""


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "tiny.ini"
    ini.write_text(TINY)
    out = root / "run"
    assert main(["train", "--config", str(ini), "--out", str(out), "--plot"]) == 0
    return root, ini, out


def test_train_outputs(run_dir):
    _, _, out = run_dir
    for rel in ("config.snapshot", "stats.csv", "events.csv", "checkpoints/final.ckpt", "checkpoints/iter_2.ckpt"):
        assert (out / rel).exists(), rel
    header, rows = read_stats(out / "stats.csv")
    assert len(rows) == 3 and "success_rate" in header
    assert (out / "plots" / "success_rate.svg").exists()
    assert parse_config((out / "config.snapshot").read_text()).env.n_envs == 8


def test_eval_writes_report(run_dir, capsys):
    root, ini, out = run_dir
    code = main(["eval", "--config", str(ini), "--checkpoint", str(out / "checkpoints/final.ckpt"),
                 "--episodes", "4", "--n-seeds", "2", "--out", str(root / "ev")])
    assert code == 0
    text = (root / "ev" / "report.csv").read_text().splitlines()
    assert text[0] == "# report v1" and text[1].split(",") == REPORT_COLUMNS
    assert "Success (%)" in capsys.readouterr().out
    with open(root / "ev" / "report_episodes.csv") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    assert rows[0] == EPISODE_COLUMNS and len(rows) == 1 + 8


def test_replay_is_deterministic(run_dir):
    root, ini, out = run_dir
    ck = str(out / "checkpoints/final.ckpt")
    a, b = root / "a.csv", root / "b.csv"
    assert main(["replay", "--config", str(ini), "--checkpoint", ck, "--seed", "3", "--out", str(a)]) == 0
    assert main(["replay", "--config", str(ini), "--checkpoint", ck, "--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# trajectory v1\n")


def test_power_recomputed_from_replay(run_dir):
    _, ini, out = run_dir
    cfg = parse_config(ini.read_text())
    rows, cols, metrics = replay(out / "checkpoints/final.ckpt", cfg, seed=1)
    for ag in ("L", "J"):
        assert power_from_trajectory(rows, cols, ag) == pytest.approx(metrics[f"power_{ag}"], rel=1e-9, abs=1e-9)
    assert len(rows) == metrics["length"]


def test_untrained_policy_never_succeeds(run_dir):
    _, ini, out = run_dir
    cfg = parse_config(ini.read_text())
    rep = evaluate(out / "checkpoints/final.ckpt", cfg, n_episodes=4, seeds=(0, 1), method="tiny")
    assert rep.success_rate == 0.0 and rep.n_episodes == 8
    assert rep.seed_success_rates.shape == (2,)
    assert "tiny" in rep.table()


def test_eval_mismatched_dims(run_dir, tmp_path):
    _, ini, out = run_dir
    cfg = parse_config(ini.read_text())
    from cojump.marl.mappo import MAPPO
    from cojump.marl.toy import MatchingGame

    m = MAPPO(hidden_sizes=(4,), n_iterations=1, rollout_steps=2).fit(MatchingGame(n_envs=4))
    with pytest.raises(ValueError, match="dimensions"):
        evaluate(m, cfg, n_episodes=2)


def test_missing_checkpoint_exit_code(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt")]) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[env]\nbogus = 1\n")
    assert main(["train", "--config", str(ini), "--out", str(tmp_path / "r")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_corrupt_checkpoint_exit_code(tmp_path, capsys):
    ck = tmp_path / "bad.ckpt"
    ck.write_bytes(b"CJCK\x01\x00")
    assert main(["replay", "--checkpoint", str(ck)]) == 2
    assert "byte offset" in capsys.readouterr().err


def test_warm_start_continues(run_dir, tmp_path):
    _, ini, out = run_dir
    cfg = parse_config(ini.read_text())
    d = train(cfg, tmp_path / "warm", warm_start=out / "checkpoints/final.ckpt", log=lambda s: None, n_iterations=1)
    _, rows = read_stats(d / "stats.csv")
    assert rows[0][0] == 4.0  # iteration counter resumes


def test_table_column_order():
    ep = {k: np.zeros(2) for k in EPISODE_COLUMNS if k not in ("reason",)}
    ep["seed"] = np.array([0, 0])
    rep = MetricsReport(seeds=(0,), episodes=ep, target_height=0.8, method="m")
    head = format_table([rep]).splitlines()[0].split()
    assert head[0] == "Method" and "Success" in head[3]

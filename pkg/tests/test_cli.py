import json
import os
import shutil

import pytest

from pipeforge.cli import main
from pipeforge.config import config_hash, default_config, dump_config, parse_config
from pipeforge.demos import load_demo

MICRO_CFG = """\
# small scene + short run, for tests
radial_segments = 24
axial_segments = 2
include_edge_pairs = false
max_step = 2000

total_steps = 3000
bc_steps = 500
buffer_size = 512
batch_size = 128
max_episode_steps = 200
summary_every = 1000
checkpoints_kept = 2
hidden_units = 32
seed = 5
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One micro pipeline: config -> 2 force demos -> trained checkpoint."""
    os.environ.pop("PIPEFORGE_SEED", None)
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "micro.cfg"
    cfg_path.write_text(MICRO_CFG)

    demo_dir = root / "demos"
    rc = main(["gen-demos", "--config", str(cfg_path), "--group", "force",
               "--count", "2", "--out", str(demo_dir)])
    assert rc == 0

    train_dir = root / "run"
    rc = main(["train", "--config", str(cfg_path), "--demos", str(demo_dir),
               "--obs", "force", "--out", str(train_dir)])
    assert rc == 0
    return {"root": root, "cfg": cfg_path, "demos": demo_dir, "train": train_dir}


# ---------------------------------------------------------------------------
# top-level behavior
# ---------------------------------------------------------------------------

def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "gen-demos" in capsys.readouterr().out


def test_dump_default_config_round_trips(capsys):
    assert main(["--dump-default-config"]) == 0
    text = capsys.readouterr().out
    assert text == dump_config()
    assert parse_config(text) == default_config()


def test_unknown_config_key_is_named(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("dt = 0.02\nwarp_speed = 9\n")
    rc = main(["gen-demos", "--config", str(bad), "--group", "force",
               "--count", "1", "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "warp_speed" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# gen-demos
# ---------------------------------------------------------------------------

def test_gen_demos_files_and_manifest(workspace):
    demo_dir = workspace["demos"]
    names = sorted(os.listdir(demo_dir))
    assert names == ["demo_force_000000.jsonl", "demo_force_000001.jsonl",
                     "manifest.json"]
    manifest = json.loads((demo_dir / "manifest.json").read_text())
    assert manifest["command"] == "gen-demos"
    assert manifest["seed"] == 0  # the --seed flag, not the config's training seed
    assert set(manifest["artifacts"]) == {"demo_force_000000.jsonl",
                                          "demo_force_000001.jsonl"}
    assert manifest["config_hash"] == config_hash(manifest["config"])


def test_gen_demos_reruns_byte_identical(workspace, tmp_path):
    out2 = tmp_path / "again"
    rc = main(["gen-demos", "--config", str(workspace["cfg"]), "--group", "force",
               "--count", "2", "--out", str(out2)])
    assert rc == 0
    for name in ("demo_force_000000.jsonl", "demo_force_000001.jsonl"):
        a = (workspace["demos"] / name).read_bytes()
        b = (out2 / name).read_bytes()
        assert a == b


def test_gen_demos_visual_group(workspace, tmp_path):
    out = tmp_path / "vis"
    rc = main(["gen-demos", "--config", str(workspace["cfg"]), "--group", "visual",
               "--count", "1", "--out", str(out)])
    assert rc == 0
    demo = load_demo(str(out / "demo_visual_000000.jsonl"))
    assert demo.group == "visual"
    assert len(demo.transitions[0].observation) == 258


def test_seed_env_var_wins(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("PIPEFORGE_SEED", "7")
    out = tmp_path / "seeded"
    rc = main(["gen-demos", "--config", str(workspace["cfg"]), "--group", "force",
               "--count", "1", "--seed", "0", "--out", str(out)])
    assert rc == 0
    assert (out / "demo_force_000007.jsonl").exists()
    assert json.loads((out / "manifest.json").read_text())["seed"] == 7


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_outputs(workspace):
    train_dir = workspace["train"]
    files = sorted(os.listdir(train_dir))
    assert "policy_final.npz" in files
    assert "metrics.csv" in files
    assert "manifest.json" in files
    ckpts = [f for f in files if f.startswith("checkpoint_")]
    assert 1 <= len(ckpts) <= 2  # checkpoints_kept = 2
    assert "checkpoint_000003000.npz" in ckpts

    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["obs_mode"] == "force"
    assert len(manifest["demos"]) == 2
    header = (train_dir / "metrics.csv").read_text().splitlines()[0]
    assert header == "step,cum_reward,success_rate,disc_expert,disc_policy"


def test_train_baseline_without_demos(workspace, tmp_path):
    out = tmp_path / "rl"
    rc = main(["train", "--config", str(workspace["cfg"]), "--demos", "none",
               "--obs", "baseline", "--out", str(out)])
    assert rc == 0
    assert (out / "policy_final.npz").exists()
    # without demos the discriminator columns are empty markers
    first_row = (out / "metrics.csv").read_text().splitlines()[1]
    assert first_row.endswith(",nan,nan")


def test_train_baseline_rejects_demos(workspace, tmp_path, capsys):
    rc = main(["train", "--config", str(workspace["cfg"]),
               "--demos", str(workspace["demos"]),
               "--obs", "baseline", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "no demonstrations" in capsys.readouterr().err


def test_train_rejects_group_mismatch(workspace, tmp_path, capsys):
    rc = main(["train", "--config", str(workspace["cfg"]),
               "--demos", str(workspace["demos"]),
               "--obs", "visual", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "does not match" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_writes_reports(workspace, tmp_path):
    ckpt = workspace["train"] / "policy_final.npz"
    out = tmp_path / "ev"
    rc = main(["eval", "--checkpoint", str(ckpt), "--condition", "1",
               "--trials", "5", "--seed", "3", "--out", str(out)])
    assert rc == 0
    trials = (out / "trials.csv").read_text().splitlines()
    assert trials[0] == "trial,success,length"
    assert len(trials) == 6
    assert (out / "summary.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "eval"
    assert manifest["condition"] == "cond1"

    out2 = tmp_path / "ev2"
    rc = main(["eval", "--checkpoint", str(ckpt), "--condition", "1",
               "--trials", "5", "--seed", "3", "--out", str(out2)])
    assert rc == 0
    assert (out / "trials.csv").read_bytes() == (out2 / "trials.csv").read_bytes()


def test_eval_refuses_config_drift(workspace, tmp_path, capsys):
    run2 = tmp_path / "run2"
    shutil.copytree(workspace["train"], run2)
    manifest = json.loads((run2 / "manifest.json").read_text())
    manifest["config"]["dt"] = 0.05
    (run2 / "manifest.json").write_text(json.dumps(manifest))
    rc = main(["eval", "--checkpoint", str(run2 / "policy_final.npz"),
               "--trials", "2", "--out", str(tmp_path / "ev")])
    assert rc == 1
    assert "refusing" in capsys.readouterr().err


def test_eval_requires_manifest(workspace, tmp_path, capsys):
    lone = tmp_path / "lone"
    lone.mkdir()
    shutil.copy(workspace["train"] / "policy_final.npz", lone)
    rc = main(["eval", "--checkpoint", str(lone / "policy_final.npz"),
               "--trials", "2", "--out", str(tmp_path / "ev")])
    assert rc == 1
    assert "manifest" in capsys.readouterr().err

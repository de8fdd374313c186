"""Command-line entry point: demo generation, training, evaluation, teleop service.

Every command writes a manifest.json into its output directory recording the
resolved configuration, the seed, and sha256 hashes of the artifacts it
produced, so a run can be reproduced from the manifest alone. The
PIPEFORGE_SEED environment variable overrides any seed, from flag or config.
"""
import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .config import ConfigError, default_config, dump_config, load_config, config_hash, sim_config_mapping
from .demos import ScriptedExpert, load_demo, record_demo, save_demo, validate_demo, GROUPS
from .env import InsertionEnv, SimConfig, OBS_DIMS
from .errors import ProtocolError, SchemaViolationError
from .learn import TrainConfig, load_checkpoint, train

_CONDITIONS = {"fixed": "fixed", "1": "cond1", "2": "cond2",
               "cond1": "cond1", "cond2": "cond2"}


def _resolve_config(path):
    cfg = load_config(path) if path else default_config()
    return cfg, config_hash(cfg)


def _seed_override(seed):
    env_seed = os.environ.get("PIPEFORGE_SEED")
    if env_seed is not None:
        try:
            return int(env_seed)
        except ValueError:
            raise ConfigError(f"PIPEFORGE_SEED must be an integer, got {env_seed!r}")
    return seed


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config_path, cfg, seed, extra=None):
    artifacts = {}
    for root, _, files in os.walk(out_dir):
        for name in sorted(files):
            if name == "manifest.json":
                continue
            p = os.path.join(root, name)
            artifacts[os.path.relpath(p, out_dir)] = _hash_file(p)
    manifest = {
        "command": command,
        "config_path": config_path,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "out_dir": os.path.abspath(out_dir),
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _make_env(cfg, obs_mode):
    return InsertionEnv(SimConfig(**sim_config_mapping(cfg)), obs_mode=obs_mode)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_demos(args) -> int:
    cfg, chash = _resolve_config(args.config)
    seed = _seed_override(args.seed)
    condition = _CONDITIONS[args.condition]
    os.makedirs(args.out, exist_ok=True)

    env = _make_env(cfg, args.group)
    expert = ScriptedExpert(env.config)
    written = []
    for k in range(args.count):
        demo_seed = seed + k
        demo = record_demo(env, expert, args.group, demo_seed, condition=condition,
                           config_mapping=cfg)
        report = validate_demo(demo, env.config)
        if not report.passed:
            print(f"demo seed {demo_seed} failed validation: "
                  + "; ".join(report.reasons), file=sys.stderr)
            return 1
        path = os.path.join(args.out, f"demo_{args.group}_{demo_seed:06d}.jsonl")
        save_demo(demo, path)
        written.append(path)
        print(f"wrote {path} ({len(demo.transitions)} transitions)")
    _write_manifest(args.out, "gen-demos", args.config, cfg, seed,
                    {"group": args.group, "count": args.count, "condition": condition})
    return 0


def _load_demo_pool(demo_dir, obs_mode, sim):
    """Load, validate, and pool every demo in a directory; returns (obs, act)."""
    paths = sorted(
        os.path.join(demo_dir, f) for f in os.listdir(demo_dir) if f.endswith(".jsonl")
    )
    if not paths:
        raise ConfigError(f"no .jsonl demo files in {demo_dir}")
    obs_all, act_all = [], []
    for p in paths:
        demo = load_demo(p)
        if demo.group != obs_mode:
            raise ConfigError(
                f"{p}: demo group {demo.group!r} does not match --obs {obs_mode!r}"
            )
        report = validate_demo(demo, sim)
        if not report.passed:
            raise ConfigError(f"{p}: invalid demo: " + "; ".join(report.reasons))
        for tr in demo.transitions:
            obs_all.append(tr.observation)
            act_all.append(tr.action)
    return np.asarray(obs_all), np.asarray(act_all), paths


def cmd_train(args) -> int:
    cfg, chash = _resolve_config(args.config)
    if os.environ.get("PIPEFORGE_SEED") is not None:
        cfg = dict(cfg, seed=_seed_override(cfg["seed"]))
        chash = config_hash(cfg)
    os.makedirs(args.out, exist_ok=True)

    env = _make_env(cfg, args.obs)
    tc = TrainConfig.from_mapping(cfg)
    expert_data = None
    demo_paths = []
    if args.demos != "none":
        if args.obs not in GROUPS:
            raise ConfigError(
                f"--obs {args.obs!r} takes no demonstrations; pass --demos none"
            )
        obs_arr, act_arr, demo_paths = _load_demo_pool(args.demos, args.obs, env.config)
        expert_data = (obs_arr, act_arr)
        print(f"pooled {len(obs_arr)} transitions from {len(demo_paths)} demos")

    result = train(env, tc, expert_data, out_dir=args.out, obs_mode=args.obs,
                   config_hash=chash, log=print)
    _write_manifest(args.out, "train", args.config, cfg, tc.seed,
                    {"obs_mode": args.obs, "demos": demo_paths or "none"})
    if result.final_checkpoint is None or not os.path.exists(result.final_checkpoint):
        print("training produced no final checkpoint", file=sys.stderr)
        return 1
    print(f"final checkpoint: {result.final_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .eval_harness import run_trials, write_summary_csv, write_trial_csv, GroupReport

    seed = _seed_override(args.seed)
    condition = _CONDITIONS[args.condition]
    policy, meta = load_checkpoint(args.checkpoint)

    # the training manifest beside the checkpoint carries the resolved config
    manifest_path = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)),
                                 "manifest.json")
    if not os.path.exists(manifest_path):
        print(f"no manifest.json beside {args.checkpoint}; cannot recover the "
              "training configuration", file=sys.stderr)
        return 1
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = manifest["config"]
    if config_hash(cfg) != meta.get("config_hash"):
        print(
            f"refusing to evaluate: checkpoint was trained under config hash "
            f"{meta.get('config_hash')!r} but the manifest resolves to "
            f"{config_hash(cfg)!r}", file=sys.stderr,
        )
        return 1

    obs_mode = meta.get("obs_mode", "force")
    env = _make_env(cfg, obs_mode)
    if policy.mean.in_dim != OBS_DIMS[obs_mode]:
        print(f"checkpoint expects {policy.mean.in_dim}-dim observations but "
              f"mode {obs_mode!r} emits {OBS_DIMS[obs_mode]}", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    stats = run_trials(policy, condition, args.trials, seed, env=env)
    write_trial_csv(stats, os.path.join(args.out, "trials.csv"))
    write_summary_csv(GroupReport(obs_mode, [stats]),
                      os.path.join(args.out, "summary.csv"))
    _write_manifest(args.out, "eval", None, cfg, seed,
                    {"checkpoint": os.path.abspath(args.checkpoint),
                     "condition": condition, "trials": args.trials,
                     "successes": stats.successes})
    mean = "n/a" if stats.mean_len is None else f"{stats.mean_len:.1f}"
    print(f"{stats.successes}/{stats.trials} successes, mean length {mean}")
    return 0


def cmd_serve(args) -> int:
    from .teleop_service import serve

    cfg, _ = _resolve_config(args.config)
    serve(args.port, cfg, record_dir=args.record_dir)
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipeforge",
        description="Pipe-insertion simulator: demos, training, evaluation, teleop.",
    )
    parser.add_argument("--dump-default-config", action="store_true",
                        help="print the full default config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-demos", help="record scripted-expert demonstrations")
    p.add_argument("--config", default=None)
    p.add_argument("--group", choices=GROUPS, required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--condition", choices=sorted(_CONDITIONS), default="fixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train", help="behavioral cloning + adversarial imitation + PPO")
    p.add_argument("--config", default=None)
    p.add_argument("--demos", default="none",
                   help="directory of demo .jsonl files, or 'none' to disable "
                        "cloning and the discriminator")
    p.add_argument("--obs", choices=("force", "visual", "baseline"), default="force")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run deterministic evaluation trials")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--condition", choices=sorted(_CONDITIONS), default="1")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the teleop WebSocket service")
    p.add_argument("--config", default=None)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--record-dir", default="recordings")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_default_config:
        sys.stdout.write(dump_config(default_config()))
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (ConfigError, ProtocolError, SchemaViolationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

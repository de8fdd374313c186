"""Flat key=value configuration files.

One namespace covers the simulator and the trainer; `DEFAULTS` is the
schema (key names and value types). Files look like:

    # comment
    dt = 0.02
    total_steps = 200000
    include_edge_pairs = false

Unknown keys are rejected by name. `dump_config` is canonical (fixed key
order, repr-exact floats), so `config_hash` identifies a configuration
byte-for-byte; demos and checkpoints embed that hash to refuse silent
config drift.
"""
import hashlib

from .errors import ConfigError

# fmt: off
DEFAULTS = {
    # simulation
    "dt": 0.02,
    "handler_mass": 1.0,
    "viscous_damping": 2.0,
    "action_clamp": 10.0,
    "max_step": 10_000,
    "inner_radius": 0.05,
    "inner_length": 0.6,
    "outer_inner_radius": 0.06,
    "outer_outer_radius": 0.07,
    "outer_length": 0.7,
    "target_depth": 0.5,
    "n_ray": 16,
    "visual_rays": 64,
    "visual_max_range": 2.0,
    "visual_cone_half_angle": 1.0471975511965976,  # 60 degrees
    "radial_segments": 48,
    "axial_segments": 8,
    "include_edge_pairs": True,
    "proximity_tol": 0.001,
    # training
    "batch_size": 128,
    "buffer_size": 2048,
    "learning_rate": 3e-4,
    "epochs": 3,
    "gae_lambda": 0.95,
    "gamma": 0.99,
    "extrinsic_strength": 1.0,
    "gail_strength": 0.01,
    "gail_gamma": 0.99,
    "bc_strength": 1.0,
    "bc_steps": 10_000,
    "total_steps": 5_000_000,
    "max_episode_steps": 10_000,
    "summary_every": 12_000,
    "checkpoints_kept": 5,
    "ppo_clip": 0.2,
    "entropy_coef": 0.005,
    "value_coef": 0.5,
    "hidden_units": 256,
    "seed": 0,
}
# fmt: on

_SIM_KEYS = (
    "dt", "handler_mass", "viscous_damping", "action_clamp", "max_step",
    "inner_radius", "inner_length", "outer_inner_radius", "outer_outer_radius",
    "outer_length", "target_depth", "n_ray", "visual_rays", "visual_max_range",
    "visual_cone_half_angle", "radial_segments", "axial_segments",
    "include_edge_pairs", "proximity_tol",
)


def default_config() -> dict:
    return dict(DEFAULTS)


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(
            f"key {key!r}: expected {type(default).__name__}, got {raw!r}"
        ) from None
    return raw


def parse_config(text: str) -> dict:
    """Defaults overlaid with the file's key=value lines."""
    cfg = default_config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        cfg[key] = _coerce(key, raw)
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: dict | None = None) -> str:
    """Canonical text form: every schema key, fixed order."""
    cfg = default_config() if cfg is None else cfg
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    lines = []
    for key, default in DEFAULTS.items():
        value = cfg.get(key, default)
        if isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict | None = None) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:12]


def sim_config_mapping(cfg: dict) -> dict:
    """The subset of keys that parameterize the simulator."""
    return {k: cfg[k] for k in _SIM_KEYS}

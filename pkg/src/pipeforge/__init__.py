"""Contact-rich pipe insertion: simulator, imitation learning, teleop.

The moving ("inner") pipe must be driven into the bore of a fixed outer pipe
until its leading edge reaches a target pad. The package provides the rigid
simulator with impedance-style contact forces, three observation encodings
(contact forces, a ray-scan image, or positions only), a scripted expert,
demonstration recording/validation, a from-scratch BC + adversarial-imitation
+ PPO trainer, an evaluation harness, and a WebSocket teleop service for
collecting human demonstrations.
"""
from .config import (
    ConfigError,
    config_hash,
    default_config,
    dump_config,
    load_config,
    parse_config,
)
from .demos import (
    GROUPS,
    ContactProbeExpert,
    Demonstration,
    ScriptedExpert,
    Transition,
    load_demo,
    record_demo,
    save_demo,
    validate_demo,
)
from .env import (
    OBS_DIMS,
    EnvState,
    InsertionEnv,
    SimConfig,
    StepResult,
    compute_reward,
    observe_baseline,
    observe_force,
    observe_visual,
    success_check,
)
from .errors import DegenerateGeometryError, ProtocolError, SchemaViolationError
from .eval_harness import (
    ComparisonRecord,
    GroupReport,
    TrialStats,
    compare_groups,
    run_trials,
    summarize,
    write_summary_csv,
    write_trial_csv,
)
from .learn import (
    PolicyParams,
    TrainConfig,
    TrainResult,
    bc_update,
    gail_reward,
    load_checkpoint,
    policy_act,
    ppo_update,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ComparisonRecord",
    "ConfigError",
    "ContactProbeExpert",
    "DegenerateGeometryError",
    "Demonstration",
    "EnvState",
    "GROUPS",
    "GroupReport",
    "InsertionEnv",
    "OBS_DIMS",
    "PolicyParams",
    "ProtocolError",
    "SchemaViolationError",
    "ScriptedExpert",
    "SimConfig",
    "StepResult",
    "TrainConfig",
    "TrainResult",
    "Transition",
    "TrialStats",
    "bc_update",
    "compare_groups",
    "compute_reward",
    "config_hash",
    "default_config",
    "dump_config",
    "gail_reward",
    "load_checkpoint",
    "load_demo",
    "observe_baseline",
    "observe_force",
    "observe_visual",
    "parse_config",
    "policy_act",
    "ppo_update",
    "record_demo",
    "run_trials",
    "save_checkpoint",
    "save_demo",
    "success_check",
    "summarize",
    "train",
    "validate_demo",
    "write_summary_csv",
    "write_trial_csv",
]

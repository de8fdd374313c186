"""Demonstration recording and the scripted insertion experts.

Two controllers can stand in for a human operator. `ScriptedExpert` is a
waypoint phase controller: fly to a staging point in front of the
opening, center on the bore axis, push in, and back off along the
rubbing direction whenever the contact normal force spikes. It steers
from privileged state (it knows where the bore axis is), which makes it
strong on any start but a poor teacher: two visits to the same sensed
situation can carry different labels, so behavior cloned from its
demonstrations falls apart as soon as a rollout drifts.

`ContactProbeExpert` exists for exactly that reason: every action is a
function of the force observation alone, so its demonstrations form a
single-valued observation-to-action map that a network can actually fit.
Blind to where the hole is, it presses the face, pecks sideways, and
lets the rim's reaction force funnel the tip into the opening.

Gaussian jitter on every command keeps the resulting demonstrations
from being carbon copies of each other.

Files are newline-delimited JSON: one header object, then one transition
per line. Serialization is byte-exact (floats round-trip through repr),
so identical seeds produce identical files.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .config import config_hash
from .env import OBS_DIMS, EnvState, InsertionEnv, SimConfig, observe_force
from .errors import SchemaViolationError
from .scene import pipe_tip

GROUPS = ("force", "visual")
_SCHEMA_VERSION = 1


@dataclass
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    done: bool


@dataclass
class Demonstration:
    group: str
    condition: str
    seed: int
    source: str
    config_hash: str
    transitions: list
    created_at: str | None = None  # informational; never serialized

    def __eq__(self, other):
        if not isinstance(other, Demonstration):
            return NotImplemented
        if (self.group, self.condition, self.seed, self.source, self.config_hash) != (
            other.group,
            other.condition,
            other.seed,
            other.source,
            other.config_hash,
        ):
            return False
        if len(self.transitions) != len(other.transitions):
            return False
        return all(
            np.array_equal(a.observation, b.observation)
            and np.array_equal(a.action, b.action)
            and a.reward == b.reward
            and a.done == b.done
            for a, b in zip(self.transitions, other.transitions)
        )

    @property
    def successful(self) -> bool:
        """True when the final step collected the success bonus."""
        return bool(self.transitions) and self.transitions[-1].reward > 0.5


# ---------------------------------------------------------------------------
# scripted expert
# ---------------------------------------------------------------------------

@dataclass
class ScriptedExpert:
    """Force-reactive insertion controller working from privileged state."""

    config: SimConfig
    approach_standoff: float = 0.1  # staging point this far before the opening
    align_tol: float = 0.005
    kp: float = 60.0
    kd: float = 14.0
    insert_force: float = 8.0
    retreat_threshold: float = 0.5  # N of normal force that triggers a retreat
    retreat_gain: float = 2.0
    jitter_frac: float = 0.01  # of the action clamp, per component

    def action(self, state: EnvState, rng) -> np.ndarray:
        cfg = self.config
        rotated = not state.outer_pose.is_identity_rotation
        tip = pipe_tip(state.handler_pos, cfg.inner_length)
        local = state.outer_pose.inverse_transform_points(tip[None, :])[0]
        vel = state.velocity
        if rotated:
            vel = state.outer_pose.rotation.T @ vel
        lateral = np.array([0.0, local[1], local[2]])
        axis_x = float(local[0])

        if axis_x < -self.approach_standoff - 0.01 or (
            axis_x < 0.0 and np.hypot(local[1], local[2]) > self.align_tol
        ):
            # approach, then align: PD drive toward the staging waypoint on
            # the bore axis; insertion waits until the lateral offset is gone
            waypoint = np.array([-self.approach_standoff, 0.0, 0.0])
            a = self.kp * (waypoint - local) - self.kd * vel
        else:
            # insert: push down the axis, firmly recentering
            a = np.array([self.insert_force, 0.0, 0.0]) - 2.0 * self.kp * lateral
            a -= self.kd * np.array([0.0, vel[1], vel[2]])

        fs = state.force_state
        if fs.delta_coll == 1 and np.linalg.norm(fs.f_normal) > self.retreat_threshold:
            # rubbing: back off along the direction the friction force opposes
            retreat = -self.retreat_gain * fs.f_friction
            if rotated:
                retreat = state.outer_pose.rotation.T @ retreat
            a = a + retreat

        if rotated:
            a = state.outer_pose.rotation @ a
        a = a + rng.normal(0.0, self.jitter_frac * cfg.action_clamp, 3)
        return np.clip(a, -cfg.action_clamp, cfg.action_clamp)


def scripted_expert_action(state: EnvState, rng, config: SimConfig) -> np.ndarray:
    """One action from a default-tuned `ScriptedExpert`."""
    return ScriptedExpert(config).action(state, rng)


@dataclass
class ContactProbeExpert:
    """Insertion controller driven purely by the force observation.

    Knows nothing the policy network cannot see: it decides from
    [F_normal, F_friction, depth, distance] only. Far out it flies
    straight at the opening; on face contact it pecks — retreat plus a
    sideways drift impulse — crawling across the face until the tip
    catches the rim, where the reaction force finally points somewhere
    useful and prying along it funnels the tip into the bore.
    """

    config: SimConfig
    cruise: float = 2.2          # far-approach drive
    press: float = 1.6           # near-mouth push
    push: float = 6.0            # in-bore drive toward the pad
    retreat: float = 3.0         # backs out of a face press
    retreat_wedge: float = 2.5   # backs out of a mouth wedge
    drift: float = 1.0           # sideways crawl impulse while pressed
    assist: float = 0.9          # in-bore recentering gain on F_normal
    escape: float = 1.2          # wedge recentering gain on F_normal
    unpin: float = 3.0           # rim-rub pry-off force along the normal
    contact_thr: float = 0.3     # N of normal force that counts as pressed
    wedge_thr: float = 1.5       # N of normal force that counts as wedged
    rub_thr: float = 1.0         # N of friction that flags a rim rub
    d_in: float = 0.004          # m of depth that counts as entered
    d_wall: float = 0.03         # m of depth that clears the mouth lip
    l_go: float = 0.56           # switch from cruise to press below this
    ramp_width: float = 0.08     # cruise fade-in distance
    jitter: float = 0.05

    def action(self, state: EnvState, rng=None) -> np.ndarray:
        cfg = self.config
        obs = observe_force(state, cfg)
        fn, ff, d, l = obs[0:3], obs[3:6], obs[6], obs[7]
        fmag = float(np.linalg.norm(fn))
        fn_lat = float(np.hypot(fn[1], fn[2]))
        if d > self.d_wall:
            a = np.array([self.push, self.assist * fn[1], self.assist * fn[2]])
        elif d > self.d_in:
            if fmag > self.wedge_thr:
                a = np.array([-self.retreat_wedge,
                              self.escape * fn[1], self.escape * fn[2]])
            else:
                a = np.array([self.push,
                              self.assist * fn[1], self.assist * fn[2]])
        elif np.linalg.norm(ff) > self.rub_thr and fn_lat > 1e-9:
            # rim rub: the push lands in the friction channel while the
            # weak normal points off the wall — pry loose along it
            a = np.array([-self.retreat,
                          self.unpin * fn[1] / fn_lat,
                          self.unpin * fn[2] / fn_lat])
        elif fmag > self.contact_thr:
            a = np.array([-self.retreat, self.drift, 0.0])
        elif l > self.l_go:
            gain = min((l - self.l_go) / self.ramp_width, 1.0)
            a = np.array([self.cruise * gain + self.press, 0.0, 0.0])
        else:
            a = np.array([self.press, 0.0, 0.0])
        if self.jitter > 0.0 and rng is not None:
            a = a + rng.normal(0.0, self.jitter, 3)
        return np.clip(a, -cfg.action_clamp, cfg.action_clamp)


# ---------------------------------------------------------------------------
# recording
# ---------------------------------------------------------------------------

def record_demo(
    env: InsertionEnv,
    expert: ScriptedExpert,
    group: str,
    seed: int,
    condition: str = "fixed",
    config_mapping: dict | None = None,
) -> Demonstration:
    """Roll the expert through one episode and capture every transition."""
    if group not in GROUPS:
        raise ValueError(f"group must be one of {GROUPS}, got {group!r}")
    if env.obs_mode != group:
        raise ValueError(
            f"env observes {env.obs_mode!r} but the demo group is {group!r}"
        )
    obs = env.reset(condition, seed)
    expert_rng = np.random.default_rng([seed, 0xE])
    transitions = []
    while not env.done:
        action = expert.action(env.state, expert_rng)
        result = env.step(action)
        transitions.append(Transition(obs, action, result.reward, result.done))
        obs = result.observation
    return Demonstration(
        group=group,
        condition=condition,
        seed=seed,
        source="scripted",
        config_hash=config_hash(config_mapping) if config_mapping else config_hash(),
        transitions=transitions,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_demo(demo: Demonstration, path) -> None:
    lines = [
        json.dumps(
            {
                "schema_version": _SCHEMA_VERSION,
                "group": demo.group,
                "condition": demo.condition,
                "seed": demo.seed,
                "source": demo.source,
                "config_hash": demo.config_hash,
            },
            separators=(", ", ": "),
        )
    ]
    for i, tr in enumerate(demo.transitions):
        lines.append(
            json.dumps(
                {
                    "step": i,
                    "obs": list(tr.observation),
                    "action": list(tr.action),
                    "reward": tr.reward,
                    "done": tr.done,
                },
                separators=(", ", ": "),
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _demand(cond, lineno: int, message: str):
    if not cond:
        raise SchemaViolationError(f"line {lineno}: {message}")


def load_demo(path) -> Demonstration:
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines:
        raise SchemaViolationError("line 1: empty demonstration file")

    def parse(lineno, text):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolationError(f"line {lineno}: malformed JSON ({exc.msg})") from None

    header = parse(1, raw_lines[0])
    _demand(isinstance(header, dict), 1, "header must be an object")
    for key in ("schema_version", "group", "condition", "seed", "source", "config_hash"):
        _demand(key in header, 1, f"header missing {key!r}")
    _demand(
        header["schema_version"] == _SCHEMA_VERSION,
        1,
        f"unsupported schema_version {header['schema_version']!r}",
    )
    _demand(header["group"] in GROUPS, 1, f"unknown group {header['group']!r}")

    transitions = []
    for lineno, text in enumerate(raw_lines[1:], start=2):
        if not text.strip():
            continue
        rec = parse(lineno, text)
        _demand(isinstance(rec, dict), lineno, "transition must be an object")
        for key in ("step", "obs", "action", "reward", "done"):
            _demand(key in rec, lineno, f"transition missing {key!r}")
        _demand(rec["step"] == len(transitions), lineno, f"step index {rec['step']} out of order")
        _demand(
            isinstance(rec["action"], list) and len(rec["action"]) == 3,
            lineno,
            "action must have 3 components",
        )
        transitions.append(
            Transition(
                observation=np.asarray(rec["obs"], dtype=np.float64),
                action=np.asarray(rec["action"], dtype=np.float64),
                reward=float(rec["reward"]),
                done=bool(rec["done"]),
            )
        )
    _demand(transitions, 2, "demonstration has no transitions")
    return Demonstration(
        group=header["group"],
        condition=header["condition"],
        seed=int(header["seed"]),
        source=str(header["source"]),
        config_hash=str(header["config_hash"]),
        transitions=transitions,
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    passed: bool
    reasons: list = field(default_factory=list)


def validate_demo(demo: Demonstration, config: SimConfig) -> ValidationReport:
    """Quality gate: dimensions, clamp compliance, encoding, terminal flag."""
    reasons = []
    want_dim = OBS_DIMS[demo.group]
    for i, tr in enumerate(demo.transitions):
        if tr.observation.shape != (want_dim,):
            reasons.append(
                f"transition {i}: {demo.group} observation has length "
                f"{tr.observation.shape[0] if tr.observation.ndim == 1 else tr.observation.shape}, expected {want_dim}"
            )
            break
    clamp = config.action_clamp + 1e-9
    bad = [
        i
        for i, tr in enumerate(demo.transitions)
        if np.any(np.abs(tr.action) > clamp)
    ]
    if bad:
        reasons.append(f"transition {bad[0]}: action exceeds the {config.action_clamp} N clamp")
    if demo.group == "visual" and not reasons:
        for i, tr in enumerate(demo.transitions):
            blocks = tr.observation[:256].reshape(64, 4)[:, :3]
            if not np.allclose(blocks.sum(axis=1), 1.0, atol=1e-12):
                reasons.append(f"transition {i}: one-hot class block does not sum to 1")
                break
    if not demo.transitions:
        reasons.append("demonstration has no transitions")
    else:
        if not demo.transitions[-1].done:
            reasons.append("final transition is not terminal")
        mid_done = [i for i, tr in enumerate(demo.transitions[:-1]) if tr.done]
        if mid_done:
            reasons.append(f"transition {mid_done[0]}: done before the final step")
        if not demo.successful:
            reasons.append("episode did not end in success")
    return ValidationReport(passed=not reasons, reasons=reasons)

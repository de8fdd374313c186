"""The pipe-insertion task as a step/reset environment.

A translation-only handler carries the inner pipe toward the outer pipe
along +x. Contact is handled by the anchor-spring pipeline in
:mod:`pipeforge.forces`; the integrator additionally caps displacement
from the anchor at the spring's static equilibrium for the commanded
force, so a fast handler cannot tunnel through the wall in one step,
and a first touch is bisected back to the wall surface so the contact
anchor never starts buried inside the material.

Observations come in three flavors: an 8-dim force observation
[F_normal, F_friction, depth, distance], a 258-dim visual observation
(64 cone rays, each one-hot class + hit distance, plus depth and
distance), and a minimal 2-dim [depth, distance] used as the
no-demonstration baseline.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError
from .forces import ContactConfig, ForceState, ImpedanceGains, contact_pipeline, delta_mov, impedance_force
from .geometry import Pose
from .scene import (
    inner_pipe_mesh,
    insertion_depth,
    outer_pipe_mesh,
    pipe_separation,
    pipe_tip,
    scan_outer_pipe,
    tip_lateral_offset,
    visual_ray_directions,
)
from .validation import check_positive, check_vec3

FORCE_OBS_DIM = 8
VISUAL_OBS_DIM = 258
BASELINE_OBS_DIM = 2

OBS_DIMS = {"force": FORCE_OBS_DIM, "visual": VISUAL_OBS_DIM, "baseline": BASELINE_OBS_DIM}

_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# deepest allowed penetration on a first-contact frame (m)
_SURFACE_BAND = 5e-4


@dataclass
class SimConfig:
    """Task parameters. Lengths in meters, forces in newtons."""

    dt: float = 0.02
    handler_mass: float = 1.0
    viscous_damping: float = 2.0
    action_clamp: float = 10.0
    max_step: int = 10_000
    inner_radius: float = 0.05  # moving pipe outer radius
    inner_length: float = 0.6
    outer_inner_radius: float = 0.06
    outer_outer_radius: float = 0.07
    outer_length: float = 0.7
    target_depth: float = 0.5
    n_ray: int = 16
    visual_rays: int = 64
    visual_max_range: float = 2.0
    visual_cone_half_angle: float = np.pi / 3
    # discretization / contact knobs (training configs may coarsen these)
    radial_segments: int = 48
    axial_segments: int = 8
    include_edge_pairs: bool = True
    proximity_tol: float = 0.001

    def __post_init__(self):
        for name in (
            "dt",
            "handler_mass",
            "viscous_damping",
            "action_clamp",
            "inner_radius",
            "inner_length",
            "outer_inner_radius",
            "outer_outer_radius",
            "outer_length",
            "target_depth",
            "visual_max_range",
            "visual_cone_half_angle",
            "proximity_tol",
        ):
            check_positive(getattr(self, name), name)
        self.max_step = int(self.max_step)
        if self.max_step < 1:
            raise ValueError("max_step must be >= 1")
        if self.inner_radius >= self.outer_inner_radius:
            raise ValueError("the moving pipe must fit inside the outer pipe's bore")
        if self.outer_inner_radius >= self.outer_outer_radius:
            raise ValueError("outer pipe wall must have positive thickness")
        if self.target_depth >= self.outer_length:
            raise ValueError("target_depth must lie inside the outer pipe")
        if int(self.visual_rays) != 64:
            raise ValueError("the visual scan is fixed at 64 rays")

    @property
    def clearance(self) -> float:
        """Radial play between the pipes when coaxial."""
        return self.outer_inner_radius - self.inner_radius


@dataclass
class EnvState:
    handler_pos: np.ndarray
    prev_pos: np.ndarray
    velocity: np.ndarray
    inner_pose: Pose
    outer_pose: Pose
    target_center: np.ndarray
    step_count: int
    force_state: ForceState
    prev_force_norms: tuple


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    success: bool
    info: dict = field(default_factory=dict)


def compute_reward(prev_norms, cur_norms, success: bool, max_step: int) -> float:
    """Per-step reward: force-easing shaping, time penalty, success bonus.

    The shaping term is +1/max_step only when both the normal and friction
    force norms strictly decreased, 0 when both are exactly unchanged
    (the usual free-flight 0 == 0 case), and -1/max_step otherwise.
    """
    pn, pf = prev_norms
    cn, cf = cur_norms
    if cn < pn and cf < pf:
        shaping = 1.0 / max_step
    elif cn == pn and cf == pf:
        shaping = 0.0
    else:
        shaping = -1.0 / max_step
    return shaping - 1.0 / max_step + (1.0 if success else 0.0)


def success_check(state: EnvState, config: SimConfig) -> bool:
    """Leading edge reached the pad while staying within the bore."""
    tip = pipe_tip(state.handler_pos, config.inner_length)
    depth = insertion_depth(tip, state.outer_pose)
    if depth < config.target_depth:
        return False
    return tip_lateral_offset(tip, state.outer_pose) <= config.clearance + 1e-9


def observe_force(state: EnvState, config: SimConfig) -> np.ndarray:
    fs = state.force_state
    tip = pipe_tip(state.handler_pos, config.inner_length)
    d = insertion_depth(tip, state.outer_pose)
    l = float(np.linalg.norm(tip - state.target_center))
    return np.concatenate([fs.f_normal, fs.f_friction, [d, l]])


def observe_baseline(state: EnvState, config: SimConfig) -> np.ndarray:
    tip = pipe_tip(state.handler_pos, config.inner_length)
    d = insertion_depth(tip, state.outer_pose)
    l = float(np.linalg.norm(tip - state.target_center))
    return np.array([d, l])


def observe_visual(state: EnvState, config: SimConfig) -> np.ndarray:
    """64-ray cone scan from the leading face, plus depth and distance.

    Per ray: one-hot over {outer pipe, target pad, none} then the hit
    distance (misses report the max range).
    """
    tip = pipe_tip(state.handler_pos, config.inner_length)
    dirs = visual_ray_directions(8, 8, config.visual_cone_half_angle)
    origins = np.broadcast_to(tip, dirs.shape)
    classes, distances = scan_outer_pipe(
        origins,
        dirs,
        state.outer_pose,
        inner_radius=config.outer_inner_radius,
        outer_radius=config.outer_outer_radius,
        length=config.outer_length,
        pad_depth=config.target_depth,
        max_range=config.visual_max_range,
    )
    per_ray = np.zeros((len(dirs), 4))
    per_ray[np.arange(len(dirs)), classes] = 1.0
    per_ray[:, 3] = distances
    d = insertion_depth(tip, state.outer_pose)
    l = float(np.linalg.norm(tip - state.target_center))
    return np.concatenate([per_ray.ravel(), [d, l]])


_OBSERVERS = {"force": observe_force, "visual": observe_visual, "baseline": observe_baseline}


def make_sim_config(cfg: dict) -> SimConfig:
    """SimConfig from a flat config mapping (see pipeforge.config)."""
    from .config import sim_config_mapping

    return SimConfig(**sim_config_mapping(cfg))


class InsertionEnv:
    """step/reset environment around the contact pipeline.

    Single-threaded; hold one instance per worker. All randomness comes
    from the seed passed to reset, so identical seeds and action
    sequences reproduce identical trajectories bit for bit.
    """

    def __init__(self, config: SimConfig | None = None, obs_mode: str = "force"):
        if obs_mode not in _OBSERVERS:
            raise ValueError(f"obs_mode must be one of {sorted(_OBSERVERS)}, got {obs_mode!r}")
        self.config = config if config is not None else SimConfig()
        self.obs_mode = obs_mode
        self.gains = ImpedanceGains()
        self.contact_config = ContactConfig(
            proximity_tol=self.config.proximity_tol,
            n_ray=self.config.n_ray,
            include_edge_pairs=self.config.include_edge_pairs,
        )
        self._inner_mesh = inner_pipe_mesh(
            self.config.inner_radius,
            self.config.inner_length,
            self.config.radial_segments,
            self.config.axial_segments,
        )
        self._outer_mesh = outer_pipe_mesh(
            self.config.outer_inner_radius,
            self.config.outer_outer_radius,
            self.config.outer_length,
            self.config.radial_segments,
            self.config.axial_segments,
        )
        self._state: EnvState | None = None
        self._done = False

    # -- episode control ------------------------------------------------

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise ProtocolError("environment has not been reset")
        return self._state

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, condition: str = "fixed", seed: int = 0) -> np.ndarray:
        cfg = self.config
        rng = np.random.default_rng(seed)
        entry = np.zeros(3)
        if condition == "cond2":
            # the outer pipe moves too; the relative start envelope is
            # enforced below regardless
            entry = entry + np.concatenate(
                [[rng.uniform(-0.15, 0.15)], _disc_sample(rng, 0.10)]
            )
        outer_pose = Pose(entry, _IDENTITY_QUAT.copy())
        target = entry + np.array([cfg.target_depth, 0.0, 0.0])

        if condition == "fixed":
            tip = target + np.array([-0.7, 0.0, 0.0])
        elif condition == "cond1":
            tip = target + np.concatenate([[-rng.uniform(0.6, 0.8)], _disc_sample(rng, 0.15)])
        elif condition == "cond2":
            tip = self._collision_free_start(rng, target, entry)
        else:
            raise ValueError(f"unknown condition {condition!r}")

        handler = tip - np.array([cfg.inner_length / 2.0, 0.0, 0.0])
        self._state = EnvState(
            handler_pos=handler,
            prev_pos=handler.copy(),
            velocity=np.zeros(3),
            inner_pose=Pose(handler.copy(), _IDENTITY_QUAT.copy()),
            outer_pose=outer_pose,
            target_center=target,
            step_count=0,
            force_state=ForceState.no_contact(),
            prev_force_norms=(0.0, 0.0),
        )
        self._done = False
        return self._observe()

    def _separation(self, handler_pos, outer_pose) -> float:
        cfg = self.config
        return pipe_separation(handler_pos, outer_pose, cfg.inner_radius,
                               cfg.inner_length, cfg.outer_inner_radius,
                               cfg.outer_outer_radius, cfg.outer_length)

    def _collision_free_start(self, rng, target, entry):
        """Draw a cond2 start until the pipes do not interpenetrate at spawn."""
        cfg = self.config
        for _ in range(1000):
            tip = target + np.concatenate([[-rng.uniform(0.4, 1.0)], _disc_sample(rng, 0.20)])
            tail_x = tip[0] - cfg.inner_length
            overlaps = tip[0] > entry[0] - 0.002 and tail_x < entry[0] + cfg.outer_length + 0.002
            lateral = float(np.hypot(tip[1] - entry[1], tip[2] - entry[2]))
            if not overlaps or lateral + cfg.inner_radius <= cfg.outer_inner_radius - 0.002:
                return tip
        raise RuntimeError("could not draw a collision-free start")  # pragma: no cover

    def step(self, action) -> StepResult:
        if self._state is None:
            raise ProtocolError("environment has not been reset")
        if self._done:
            raise ProtocolError("episode is over; reset the environment")
        cfg = self.config
        s = self._state
        a = np.clip(check_vec3(action, "action"), -cfg.action_clamp, cfg.action_clamp)

        fs = s.force_state
        # the anchor spring resists while the pipe is actually inside the
        # wall; in the narrow phase's proximity band (contact reported but
        # separation >= 0) it must not act, or a retreating handler would
        # hang at the force balance point inside the band forever
        if fs.delta_coll == 1 and self._separation(s.handler_pos, s.outer_pose) < 0.0:
            resist = impedance_force(
                s.handler_pos - fs.anchor,
                s.velocity,
                np.zeros(3),
                self.gains,
                fs.delta_mov,
                fs.delta_coll,
            )
        else:
            resist = np.zeros(3)

        net = a - cfg.viscous_damping * s.velocity - resist
        v_new = s.velocity + (cfg.dt / cfg.handler_mass) * net
        x_new = s.handler_pos + cfg.dt * v_new

        # in sustained contact, cap displacement from the anchor at the
        # spring equilibrium for the commanded force so one integrator step
        # can never carry the handler through the wall; the cap binds only
        # while sinking deeper — escaping motion must stay free
        if (fs.delta_coll == 1
                and delta_mov(s.handler_pos, x_new, fs.anchor) == 1
                and self._separation(x_new, s.outer_pose)
                    < self._separation(s.handler_pos, s.outer_pose)):
            disp = x_new - fs.anchor
            dist = float(np.linalg.norm(disp))
            cap = float(np.linalg.norm(a)) / self.gains.k_c
            if dist > cap:
                x_new = fs.anchor + disp * (cap / dist)
                v_new = (x_new - s.handler_pos) / cfg.dt

        # a first touch must land on the wall surface: if the integrator
        # overshoots into the material, the contact anchor gets buried there
        # and the anchor spring then holds the handler inside the wall
        # against any escape force the action clamp allows
        if fs.delta_coll == 0 and self._separation(x_new, s.outer_pose) < -_SURFACE_BAND:
            seg = x_new - s.handler_pos
            lo, hi = 0.0, 1.0
            for _ in range(16):
                mid = 0.5 * (lo + hi)
                if self._separation(s.handler_pos + mid * seg, s.outer_pose) < -_SURFACE_BAND:
                    hi = mid
                else:
                    lo = mid
            x_new = s.handler_pos + hi * seg
            v_new = (x_new - s.handler_pos) / cfg.dt

        inner_pose = Pose(x_new.copy(), _IDENTITY_QUAT.copy())
        scene = [
            (self._inner_mesh, inner_pose, "inner"),
            (self._outer_mesh, s.outer_pose, "outer"),
        ]
        new_fs = contact_pipeline(
            s.handler_pos,
            x_new,
            cfg.dt,
            cfg.handler_mass,
            scene,
            self.contact_config,
            prev_state=fs,
            applied_force=a,
        )

        s.prev_pos = s.handler_pos
        s.handler_pos = x_new
        s.velocity = v_new
        s.inner_pose = inner_pose
        s.step_count += 1
        s.force_state = new_fs

        cur_norms = (
            float(np.linalg.norm(new_fs.f_normal)),
            float(np.linalg.norm(new_fs.f_friction)),
        )
        success = success_check(s, cfg)
        done = success or s.step_count >= cfg.max_step
        reward = compute_reward(s.prev_force_norms, cur_norms, success, cfg.max_step)
        s.prev_force_norms = cur_norms
        self._done = done

        tip = pipe_tip(s.handler_pos, cfg.inner_length)
        info = {
            "f_normal": cur_norms[0],
            "f_friction": cur_norms[1],
            "depth": insertion_depth(tip, s.outer_pose),
            "distance": float(np.linalg.norm(tip - s.target_center)),
            "step": s.step_count,
        }
        return StepResult(self._observe(), reward, done, success, info)

    def _observe(self) -> np.ndarray:
        return _OBSERVERS[self.obs_mode](self._state, self.config)


def _disc_sample(rng, radius: float) -> np.ndarray:
    """Uniform draw from a disc of the given radius (y-z components)."""
    r = radius * np.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([r * np.cos(phi), r * np.sin(phi)])

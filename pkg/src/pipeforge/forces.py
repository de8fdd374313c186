"""Contact force model for the handler-driven pipe.

The response to contact has two regimes: a single-frame impulse when contact
first begins (reflecting the approach velocity off the fitted surface), and a
spring-damper resistance force while contact is sustained.  Both are gated by
two binary indicators: ``delta_coll`` (is there any contact this frame) and
``delta_mov`` (is the handler still pushing away from the collision anchor).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import (
    ContactSet,
    broad_phase,
    closest_contact,
    fit_plane_normal_svd,
    mesh_aabb,
    narrow_phase_contacts,
    ray_cast_fan,
    ray_fan,
)
from .validation import check_positive, check_unit, check_vec3


@dataclass
class ImpedanceGains:
    """Spring/damper/inertia gains of the resistance force, plus a constant
    bias force (zero here: the task is gravity-compensated)."""

    m_c: float = 0.0  # kg
    b_c: float = 50.0  # N*s/m
    k_c: float = 5000.0  # N/m
    g_c: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N

    def __post_init__(self):
        for name in ("m_c", "b_c", "k_c"):
            value = float(getattr(self, name))
            if value < 0.0 or not np.isfinite(value):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
            setattr(self, name, value)
        self.g_c = check_vec3(self.g_c, "g_c")


@dataclass
class ForceState:
    """Per-frame contact force summary.

    f_impulse is nonzero only on the frame contact begins.  f_normal and
    f_friction decompose the force pressed through the contact along/against
    the fitted surface normal.  anchor is the handler position at first
    contact, held until separation.
    """

    f_impulse: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_normal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_friction: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_coll: int = 0
    delta_mov: int = 1
    anchor: np.ndarray | None = None
    fitted_normal: np.ndarray | None = None

    def __post_init__(self):
        self.f_impulse = check_vec3(self.f_impulse, "f_impulse")
        self.f_normal = check_vec3(self.f_normal, "f_normal")
        self.f_friction = check_vec3(self.f_friction, "f_friction")
        if self.delta_coll not in (0, 1) or self.delta_mov not in (0, 1):
            raise ValueError("delta_coll and delta_mov must be 0 or 1")
        if self.delta_coll == 0:
            if np.any(self.f_normal) or np.any(self.f_friction):
                raise ValueError("contact forces must be zero without contact")
            if self.anchor is not None:
                raise ValueError("anchor must be absent without contact")
        if self.fitted_normal is not None:
            dot = abs(float(self.f_friction @ self.fitted_normal))
            if dot > 1e-9:
                raise ValueError(f"friction not tangential: residual {dot}")

    @classmethod
    def no_contact(cls) -> "ForceState":
        return cls()


def handler_velocity(x_prev, x_cur, dt: float) -> np.ndarray:
    """Finite-difference velocity of the handler over one frame."""
    x_prev = check_vec3(x_prev, "x_prev")
    x_cur = check_vec3(x_cur, "x_cur")
    check_positive(dt, "dt")
    return (x_cur - x_prev) / dt


def delta_coll(contacts: ContactSet) -> int:
    return 0 if contacts.empty else 1


def delta_mov(x_prev, x_cur, x0, eps: float = 1e-6) -> int:
    """1 while the handler keeps pressing past the collision anchor.

    A stationary handler (or one sitting exactly on the anchor) counts as
    still pressing — otherwise the resistance force would release while the
    pipe is parked inside the wall and let it drift through.  Otherwise the
    sign of the cosine between the current step direction and the
    anchor-to-previous direction decides.
    """
    x_prev = check_vec3(x_prev, "x_prev")
    x_cur = check_vec3(x_cur, "x_cur")
    x0 = check_vec3(x0, "x0")
    step = x_cur - x_prev
    depart = x_prev - x0
    if np.linalg.norm(step) < eps or np.linalg.norm(depart) < eps:
        return 1
    cos = float(step @ depart) / (np.linalg.norm(step) * np.linalg.norm(depart))
    return 1 if cos >= 0.0 else 0


def impulse_magnitude(mass: float, velocity, dt: float) -> float:
    """|p|/dt for a full stop of the handler mass in one frame."""
    check_positive(mass, "mass")
    check_positive(dt, "dt")
    velocity = check_vec3(velocity, "velocity")
    return float(mass * np.linalg.norm(velocity) / dt)


def impulse_direction(normal, velocity, mirror: bool = False) -> np.ndarray:
    """Unit direction of the collision impulse.

    The default form folds the approach direction into the surface normal,
    n - 2(v_hat . n) n, and normalizes the result.  ``mirror=True`` selects
    the plain mirror reflection of the approach direction instead, for
    sensitivity studies.  Degenerate inputs (no motion, vanishing fold) fall
    back to the surface normal.
    """
    n = check_unit(normal, "normal")
    v = check_vec3(velocity, "velocity")
    speed = float(np.linalg.norm(v))
    if speed < 1e-9:
        return n.copy()
    v_hat = v / speed
    if mirror:
        raw = v_hat - 2.0 * float(v_hat @ n) * n
    else:
        raw = n - 2.0 * float(v_hat @ n) * n
    norm = float(np.linalg.norm(raw))
    if norm < 1e-9:
        return n.copy()
    return raw / norm


def impulse_vector(magnitude: float, direction) -> np.ndarray:
    direction = check_vec3(direction, "direction")
    magnitude = float(magnitude)
    if magnitude < 0.0 or not np.isfinite(magnitude):
        raise ValueError(f"magnitude must be finite and >= 0, got {magnitude}")
    return magnitude * direction


def decompose_contact_force(f_on, normal):
    """Split a force into its component along the unit normal and the
    tangential remainder.  Reconstruction is exact: the parts sum to f_on."""
    n = check_unit(normal, "normal")
    f = check_vec3(f_on, "f_on")
    f_normal = float(f @ n) * n
    return f_normal, f - f_normal


def impedance_force(x_dis, x_dis_vel, x_dis_acc, gains: ImpedanceGains,
                    d_mov: int, d_coll: int) -> np.ndarray:
    """Gated spring-damper-inertia resistance plus the constant bias force."""
    x_dis = check_vec3(x_dis, "x_dis")
    x_dis_vel = check_vec3(x_dis_vel, "x_dis_vel")
    x_dis_acc = check_vec3(x_dis_acc, "x_dis_acc")
    core = gains.m_c * x_dis_acc + gains.b_c * x_dis_vel + gains.k_c * x_dis
    return float(d_mov) * float(d_coll) * core + gains.g_c


@dataclass
class ContactConfig:
    """Knobs of the contact pipeline."""

    proximity_tol: float = 0.001  # m
    cluster_radius: float = 0.1  # m
    n_ray: int = 16
    max_half_angle: float = np.pi / 4
    stationary_eps: float = 1e-6  # m
    mirror_impulse: bool = False
    include_edge_pairs: bool = True

    def __post_init__(self):
        check_positive(self.proximity_tol, "proximity_tol")
        check_positive(self.cluster_radius, "cluster_radius")
        if int(self.n_ray) < 4:
            raise ValueError(f"n_ray must be >= 4, got {self.n_ray}")
        self.n_ray = int(self.n_ray)
        check_positive(self.max_half_angle, "max_half_angle")


def _fit_contact_normal(origin, contact, obstacles, config: ContactConfig):
    """Surface normal at the contact, from a fan of rays and a plane fit.

    Falls back to the narrow-phase contact normal when the rays return too
    few points for a plane (grazing geometry, tiny obstacles).
    """
    reach = np.linalg.norm(contact.point - origin)
    if reach < 1e-12:
        return contact.normal
    dirs = ray_fan(origin, contact.point, config.n_ray, config.max_half_angle)
    # hits far past the contact belong to distant geometry, not the local
    # surface patch we are fitting
    max_range = 2.0 * reach / max(np.cos(config.max_half_angle), 0.1)
    _, points, hit = ray_cast_fan(origin, dirs, obstacles, max_distance=max_range)
    points = points[hit]
    if len(points) >= 3:
        try:
            return fit_plane_normal_svd(points, orient_toward=origin)
        except DegenerateGeometryError:
            pass
    return contact.normal


def contact_pipeline(
    prev_pos,
    cur_pos,
    dt: float,
    mass: float,
    scene,
    config: ContactConfig | None = None,
    prev_state: ForceState | None = None,
    applied_force=None,
) -> ForceState:
    """One frame of contact bookkeeping for the handler-driven pipe.

    scene: list of (mesh, pose, object_id); the first entry is the moving
    pipe, the rest are obstacles.  prev_state carries the collision anchor
    across frames; applied_force is the external force pressed through a
    sustained contact this frame (e.g. the commanded handler force).
    """
    if config is None:
        config = ContactConfig()
    prev_pos = check_vec3(prev_pos, "prev_pos")
    cur_pos = check_vec3(cur_pos, "cur_pos")
    check_positive(dt, "dt")
    check_positive(mass, "mass")
    if len(scene) < 2:
        raise ValueError("scene needs the moving mesh plus at least one obstacle")

    mover_mesh, mover_pose, _ = scene[0]
    obstacles = list(scene[1:])
    mover_box = mesh_aabb(mover_mesh, mover_pose)

    all_points, all_normals, all_depths = [], [], []
    for mesh, pose, _ in obstacles:
        if not broad_phase(mover_box, mesh_aabb(mesh, pose), margin=config.proximity_tol):
            continue
        contacts = narrow_phase_contacts(
            mover_mesh,
            mover_pose,
            mesh,
            pose,
            config.proximity_tol,
            cluster_radius=config.cluster_radius,
            include_edge_pairs=config.include_edge_pairs,
        )
        if not contacts.empty:
            all_points.append(contacts.points)
            all_normals.append(contacts.normals)
            all_depths.append(contacts.depths)

    if not all_points:
        return ForceState.no_contact()

    contacts = ContactSet(
        np.concatenate(all_points),
        np.concatenate(all_normals),
        np.concatenate(all_depths),
    )
    closest = closest_contact(contacts, cur_pos)
    normal = _fit_contact_normal(cur_pos, closest, obstacles, config)

    first_frame = prev_state is None or prev_state.delta_coll == 0
    if first_frame:
        anchor = cur_pos.copy()
        velocity = handler_velocity(prev_pos, cur_pos, dt)
        f_impulse = impulse_vector(
            impulse_magnitude(mass, velocity, dt),
            impulse_direction(normal, velocity, mirror=config.mirror_impulse),
        )
        f_on = f_impulse
    else:
        anchor = prev_state.anchor.copy()
        f_impulse = np.zeros(3)
        f_on = np.zeros(3) if applied_force is None else check_vec3(applied_force, "applied_force")

    f_normal, f_friction = decompose_contact_force(f_on, normal)
    return ForceState(
        f_impulse=f_impulse,
        f_normal=f_normal,
        f_friction=f_friction,
        delta_coll=1,
        delta_mov=delta_mov(prev_pos, cur_pos, anchor, config.stationary_eps),
        anchor=anchor,
        fitted_normal=normal,
    )

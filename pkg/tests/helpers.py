"""Independent oracles used by the test suite.

Everything here is deliberately written from first principles (signed
distance fields, per-triangle plane tests, normal-equation solves) so the
library code under test is never exercised to produce its own expected
values.  Keep it that way.
"""
import numpy as np

from pipeforge.geometry import (
    Pose,
    TriangleMesh,
    flip_mesh,
    make_annulus_mesh,
    make_cylinder_mesh,
    merge_meshes,
)

# canonical task geometry (meters)
TUBE_RADIUS = 0.05
TUBE_LENGTH = 0.6
WALL_INNER_RADIUS = 0.06
WALL_OUTER_RADIUS = 0.07
WALL_LENGTH = 0.7

RADIAL_SEGMENTS = 48
AXIAL_SEGMENTS = 8


def make_inner_tube_mesh():
    return make_cylinder_mesh(TUBE_RADIUS, TUBE_LENGTH, RADIAL_SEGMENTS, AXIAL_SEGMENTS)


def make_outer_wall_mesh():
    """Closed outer pipe: bore (inward normals), shell, and two end rims."""
    bore = flip_mesh(
        make_cylinder_mesh(WALL_INNER_RADIUS, WALL_LENGTH, RADIAL_SEGMENTS, AXIAL_SEGMENTS)
    )
    shell = make_cylinder_mesh(WALL_OUTER_RADIUS, WALL_LENGTH, RADIAL_SEGMENTS, AXIAL_SEGMENTS)
    rims = [
        make_annulus_mesh(WALL_INNER_RADIUS, WALL_OUTER_RADIUS, -WALL_LENGTH / 2, RADIAL_SEGMENTS, facing=-1),
        make_annulus_mesh(WALL_INNER_RADIUS, WALL_OUTER_RADIUS, WALL_LENGTH / 2, RADIAL_SEGMENTS, facing=1),
    ]
    return merge_meshes([bore, shell] + rims)


def wall_solid_sdf(points):
    """Signed distance to the outer pipe's material, in the wall's frame.

    The wall solid is the revolution of the rectangle
    |x| <= L/2, r_in <= rho <= r_out, so its exact 3D signed distance is the
    2D box distance in the (x, rho) half-plane.
    """
    points = np.asarray(points, dtype=np.float64)
    x = points[..., 0]
    rho = np.hypot(points[..., 1], points[..., 2])
    half_len = WALL_LENGTH / 2
    mid_r = (WALL_INNER_RADIUS + WALL_OUTER_RADIUS) / 2
    half_thick = (WALL_OUTER_RADIUS - WALL_INNER_RADIUS) / 2
    qx = np.abs(x) - half_len
    qr = np.abs(rho - mid_r) - half_thick
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qr, 0.0))
    inside = np.minimum(np.maximum(qx, qr), 0.0)
    return outside + inside


# Sampling density for the clearance oracle.  The clearance field is
# 1-Lipschitz over the tube surface, so the sampled minimum overshoots the
# true minimum by at most half the sample diagonal: with 640 axial x 768
# azimuthal samples that is ~0.51 mm, well inside the 2 mm agreement band.
_ORACLE_AXIAL = 640
_ORACLE_AZIMUTHAL = 768


def min_wall_clearance(tube_pose: Pose, wall_pose: Pose | None = None) -> float:
    """Minimum signed distance from the ideal tube surface to the wall solid.

    Negative means the surfaces interpenetrate.  This is the contact oracle:
    it never touches the mesh narrow phase.
    """
    t = np.linspace(-TUBE_LENGTH / 2, TUBE_LENGTH / 2, _ORACLE_AXIAL)
    theta = np.linspace(0.0, 2 * np.pi, _ORACLE_AZIMUTHAL, endpoint=False)
    tt, th = np.meshgrid(t, theta, indexing="ij")
    local = np.stack(
        [tt.ravel(), TUBE_RADIUS * np.cos(th.ravel()), TUBE_RADIUS * np.sin(th.ravel())],
        axis=1,
    )
    world = tube_pose.transform_points(local)
    if wall_pose is not None and not (
        wall_pose.is_identity_rotation and np.all(wall_pose.position == 0.0)
    ):
        world = wall_pose.inverse_transform_points(world)
    return float(wall_solid_sdf(world).min())


def brute_force_ray(origin, direction, scene, min_t=1e-9):
    """Nearest ray hit by testing every triangle of every scene object.

    Plane intersection plus a same-side containment test — an intentionally
    different formulation from any production ray caster.  Returns
    (distance, object_id) or None.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    best_t = np.inf
    best_id = None
    for mesh, pose, object_id in scene:
        verts = pose.transform_points(mesh.vertices)
        a = verts[mesh.triangles[:, 0]]
        b = verts[mesh.triangles[:, 1]]
        c = verts[mesh.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        denom = n @ direction
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.einsum("ij,ij->i", n, a - origin) / denom
        p = origin[None, :] + t[:, None] * direction[None, :]
        inside = (
            (np.einsum("ij,ij->i", np.cross(b - a, p - a), n) >= -1e-12)
            & (np.einsum("ij,ij->i", np.cross(c - b, p - b), n) >= -1e-12)
            & (np.einsum("ij,ij->i", np.cross(a - c, p - c), n) >= -1e-12)
        )
        ok = (np.abs(denom) > 1e-14) & (t > min_t) & inside
        if np.any(ok):
            k = np.argmin(np.where(ok, t, np.inf))
            if t[k] < best_t:
                best_t = float(t[k])
                best_id = object_id
    if best_id is None:
        return None
    return best_t, best_id


def plane_normal_by_normal_equations(points):
    """Least-squares plane fit z = ax + by + c via an explicit normal-equation
    solve; returns the unit normal (a, b, -1)/norm.  Only valid for planes
    that are graphs over (x, y) — fine for the cases it oracles.
    """
    points = np.asarray(points, dtype=np.float64)
    design = np.column_stack([points[:, 0], points[:, 1], np.ones(len(points))])
    gram = design.T @ design
    coef = np.linalg.solve(gram, design.T @ points[:, 2])
    n = np.array([coef[0], coef[1], -1.0])
    return n / np.linalg.norm(n)


def exhaustive_closest(points, query):
    points = np.asarray(points, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    d = np.linalg.norm(points - query, axis=1)
    return int(np.argmin(d))


def random_unit_vector(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_tube_pose(rng, x_range, max_offset, max_tilt):
    """Pose drawn from the insertion-task neighborhood."""
    from pipeforge.geometry import quat_from_axis_angle

    x = rng.uniform(*x_range)
    offset = rng.uniform(0.0, max_offset)
    azimuth = rng.uniform(0.0, 2 * np.pi)
    position = np.array([x, offset * np.cos(azimuth), offset * np.sin(azimuth)])
    tilt = rng.uniform(0.0, max_tilt)
    # tilt axis perpendicular to the tube axis
    phi = rng.uniform(0.0, 2 * np.pi)
    axis = np.array([0.0, np.cos(phi), np.sin(phi)])
    return Pose(position, quat_from_axis_angle(axis, tilt))


def single_triangle_mesh(a, b, c):
    return TriangleMesh(
        np.array([a, b, c], dtype=np.float64), np.array([[0, 1, 2]], dtype=np.int64)
    )

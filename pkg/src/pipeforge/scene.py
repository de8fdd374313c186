"""Scene assembly for the insertion task.

Builds the two pipe meshes from a config, tracks the frames involved
(the outer pipe's local frame has its entry plane at x=0 with the bore
running toward +x), and provides the analytic ray model the visual sensor
uses. The analytic scan exists because the sensor fires 64 rays every
step: intersecting cylinders and discs directly is two orders of
magnitude cheaper than walking the triangle mesh, and the tests pin it
against the mesh caster.
"""
import numpy as np

from .geometry import (
    Pose,
    TriangleMesh,
    flip_mesh,
    make_annulus_mesh,
    make_cylinder_mesh,
    merge_meshes,
)

# visual-scan object classes, in one-hot order
CLASS_PIPE = 0
CLASS_PAD = 1
CLASS_NONE = 2

_RAY_EPS = 1e-9


def inner_pipe_mesh(radius: float, length: float, radial_segments: int = 48,
                    axial_segments: int = 8) -> TriangleMesh:
    """Open tube for the moving pipe, centered on its local origin."""
    return make_cylinder_mesh(radius, length, radial_segments, axial_segments)


def outer_pipe_mesh(inner_radius: float, outer_radius: float, length: float,
                    radial_segments: int = 48, axial_segments: int = 8) -> TriangleMesh:
    """Closed outer pipe: bore (inward normals), shell, and both end rims.

    Local frame: entry plane at x=0, bore running toward +x.
    """
    bore = flip_mesh(
        make_cylinder_mesh(inner_radius, length, radial_segments, axial_segments)
    )
    shell = make_cylinder_mesh(outer_radius, length, radial_segments, axial_segments)
    rims = [
        make_annulus_mesh(inner_radius, outer_radius, -length / 2, radial_segments, facing=-1),
        make_annulus_mesh(inner_radius, outer_radius, length / 2, radial_segments, facing=1),
    ]
    mesh = merge_meshes([bore, shell] + rims)
    mesh.vertices[:, 0] += length / 2  # entry plane to x=0
    return TriangleMesh(mesh.vertices, mesh.triangles)


def pipe_tip(handler_pos, inner_length: float) -> np.ndarray:
    """Center of the moving pipe's leading face (the +x end)."""
    tip = np.array(handler_pos, dtype=np.float64).copy()
    tip[0] += inner_length / 2.0
    return tip


def insertion_depth(tip_world, outer_pose: Pose) -> float:
    """Axial travel of the tip past the outer pipe's entry plane (>= 0)."""
    local = outer_pose.inverse_transform_points(np.asarray(tip_world)[None, :])[0]
    return max(0.0, float(local[0]))


def tip_lateral_offset(tip_world, outer_pose: Pose) -> float:
    """Radial distance of the tip center from the outer pipe's axis."""
    local = outer_pose.inverse_transform_points(np.asarray(tip_world)[None, :])[0]
    return float(np.hypot(local[1], local[2]))


def pipe_separation(handler_pos, outer_pose: Pose, inner_radius: float,
                    inner_length: float, outer_inner_radius: float,
                    outer_outer_radius: float, outer_length: float) -> float:
    """Signed separation between the moving pipe and the outer wall solid.

    Exact for the translation-only, axis-parallel scene: the solids overlap
    iff their axial intervals and radial intervals both overlap, so the
    signed separation is the larger of the axial and radial gaps (negative =
    penetrating by that much along the easiest escape direction).
    """
    local = outer_pose.inverse_transform_points(
        np.asarray(handler_pos, dtype=np.float64)[None, :])[0]
    tip_x = local[0] + inner_length / 2.0
    tail_x = local[0] - inner_length / 2.0
    r = float(np.hypot(local[1], local[2]))
    sep_axial = max(-tip_x, tail_x - outer_length)
    sep_radial = max(outer_inner_radius - (r + inner_radius),
                     (r - inner_radius) - outer_outer_radius)
    return max(sep_axial, sep_radial)


def _min_positive(*candidates):
    """Elementwise min over candidate hit distances, ignoring NaN/negatives."""
    out = np.full_like(candidates[0], np.inf)
    for t in candidates:
        valid = np.isfinite(t) & (t > _RAY_EPS)
        out = np.where(valid & (t < out), t, out)
    return out


def _cylinder_hits(o, d, radius: float, length: float):
    """Nearest crossing of the (double-sided) cylinder rho=radius, x in [0,L].

    o, d: (n, 3) ray origins and unit directions in the outer pipe's local
    frame. Returns (n,) distances, inf where there is no hit.
    """
    a = d[:, 1] ** 2 + d[:, 2] ** 2
    b = 2.0 * (o[:, 1] * d[:, 1] + o[:, 2] * d[:, 2])
    c = o[:, 1] ** 2 + o[:, 2] ** 2 - radius**2
    disc = b**2 - 4.0 * a * c
    safe_a = np.where(a > 1e-16, a, 1.0)
    sq = np.sqrt(np.maximum(disc, 0.0))
    ok = (disc >= 0.0) & (a > 1e-16)

    hits = []
    for t in ((-b - sq) / (2.0 * safe_a), (-b + sq) / (2.0 * safe_a)):
        x = o[:, 0] + t * d[:, 0]
        hits.append(np.where(ok & (t > _RAY_EPS) & (x >= 0.0) & (x <= length), t, np.inf))
    return np.minimum(hits[0], hits[1])


def _disc_hits(o, d, x_plane: float, r_lo: float, r_hi: float):
    """Crossing of the annulus r_lo <= rho <= r_hi in the plane x=x_plane."""
    dx = d[:, 0]
    safe = np.where(np.abs(dx) > 1e-16, dx, 1.0)
    t = (x_plane - o[:, 0]) / safe
    y = o[:, 1] + t * d[:, 1]
    z = o[:, 2] + t * d[:, 2]
    rho = np.hypot(y, z)
    ok = (np.abs(dx) > 1e-16) & (t > _RAY_EPS) & (rho >= r_lo) & (rho <= r_hi)
    return np.where(ok, t, np.inf)


def scan_outer_pipe(origins, directions, outer_pose: Pose, *,
                    inner_radius: float, outer_radius: float, length: float,
                    pad_depth: float, max_range: float):
    """Analytic ray scan against the outer pipe and its target pad.

    origins/directions: (n, 3) world-frame rays (unit directions).
    Returns (classes, distances): class CLASS_PIPE for any pipe surface,
    CLASS_PAD for the pad disc, CLASS_NONE for misses (distance=max_range).
    """
    o = outer_pose.inverse_transform_points(np.asarray(origins, dtype=np.float64))
    d = np.asarray(directions, dtype=np.float64)
    if not outer_pose.is_identity_rotation:
        d = d @ outer_pose.rotation

    t_pipe = _min_positive(
        _cylinder_hits(o, d, inner_radius, length),
        _cylinder_hits(o, d, outer_radius, length),
        _disc_hits(o, d, 0.0, inner_radius, outer_radius),
        _disc_hits(o, d, length, inner_radius, outer_radius),
    )
    t_pad = _disc_hits(o, d, pad_depth, 0.0, inner_radius)

    t_best = np.minimum(t_pipe, t_pad)
    classes = np.where(t_pad < t_pipe, CLASS_PAD, CLASS_PIPE)
    miss = ~np.isfinite(t_best) | (t_best > max_range)
    classes = np.where(miss, CLASS_NONE, classes)
    distances = np.where(miss, max_range, t_best)
    return classes, distances


def visual_ray_directions(n_rings: int, n_azimuths: int, half_angle: float) -> np.ndarray:
    """Deterministic forward cone of rays along local +x.

    Ring i (i = 0..n_rings-1) sits at polar angle half_angle * i/(n_rings-1),
    so the innermost ring degenerates to the cone axis; within a ring the
    azimuths are evenly spaced. Returns (n_rings * n_azimuths, 3).
    """
    if n_rings < 2 or n_azimuths < 1:
        raise ValueError("need at least 2 rings and 1 azimuth")
    theta = half_angle * np.arange(n_rings) / (n_rings - 1)
    phi = 2.0 * np.pi * np.arange(n_azimuths) / n_azimuths
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack(
        [
            np.cos(th.ravel()),
            np.sin(th.ravel()) * np.cos(ph.ravel()),
            np.sin(th.ravel()) * np.sin(ph.ravel()),
        ],
        axis=1,
    )
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

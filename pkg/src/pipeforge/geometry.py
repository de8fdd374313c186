"""Mesh geometry: cylinder/annulus builders, poses, AABBs, proximity
contacts, ray casting, and plane fitting.

Conventions
-----------
* Vectors are numpy float64 arrays of shape (3,).
* Quaternions are (w, x, y, z), unit norm.
* Cylinder meshes are open tubes along the local +x axis, centered at the
  origin; triangle winding makes face normals point away from the axis.
* Contact normals are separation directions for mesh A: moving A along the
  normal increases clearance from B.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, EmptyContactsError
from .validation import check_array, check_positive, check_vec3

_EPS = 1e-12


# ---------------------------------------------------------------------------
# quaternions / poses
# ---------------------------------------------------------------------------

def quat_normalize(q) -> np.ndarray:
    q = check_array(q, (4,), "quaternion")
    n = float(np.linalg.norm(q))
    if n < _EPS:
        raise ValueError("quaternion has zero norm")
    return q / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = check_vec3(axis, "axis")
    n = float(np.linalg.norm(axis))
    if n < _EPS:
        raise ValueError("axis has zero norm")
    axis = axis / n
    half = 0.5 * float(angle)
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_rotation_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass
class Pose:
    """Rigid transform: world_point = R(quaternion) @ local_point + position.

    Treated as immutable after construction (the rotation matrix is cached).
    """

    position: np.ndarray
    quaternion: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0])
    )

    def __post_init__(self):
        self.position = check_vec3(self.position, "position")
        q = check_array(self.quaternion, (4,), "quaternion")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion must be unit norm, got {n}")
        self.quaternion = q / n
        self._rot = None

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3))

    @property
    def rotation(self) -> np.ndarray:
        if self._rot is None:
            self._rot = quat_rotation_matrix(self.quaternion)
        return self._rot

    @property
    def is_identity_rotation(self) -> bool:
        return abs(abs(float(self.quaternion[0])) - 1.0) < 1e-12

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if self.is_identity_rotation:
            return pts + self.position
        return pts @ self.rotation.T + self.position

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if self.is_identity_rotation:
            return pts - self.position
        return (pts - self.position) @ self.rotation


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class TriangleMesh:
    """Indexed triangle mesh. vertices: (N, 3) float, triangles: (M, 3) int."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = check_array(self.vertices, (None, 3), "vertices")
        self.triangles = np.asarray(self.triangles)
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(
                f"triangles must have shape (M, 3), got {self.triangles.shape}"
            )
        self.triangles = self.triangles.astype(np.int64)
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertices must be finite")
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        if len(self.triangles):
            areas = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            if np.any(areas < _EPS):
                raise ValueError("mesh contains degenerate (zero-area) triangles")
        # lazily built acceleration caches
        self._tri_normals = None
        self._vertex_normals = None
        self._edges = None
        self._edge_normals = None
        self._feature_mask = None
        self._grids: dict = {}
        self._local_aabb = None
        self._ray_tables = None

    # -- derived quantities, cached -----------------------------------------

    @property
    def triangle_normals(self) -> np.ndarray:
        if self._tri_normals is None:
            a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
            n = np.cross(b - a, c - a)
            self._tri_normals = n / np.linalg.norm(n, axis=1, keepdims=True)
        return self._tri_normals

    @property
    def vertex_normals(self) -> np.ndarray:
        if self._vertex_normals is None:
            a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
            face = np.cross(b - a, c - a)  # area-weighted
            acc = np.zeros_like(self.vertices)
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], face)
            norms = np.linalg.norm(acc, axis=1, keepdims=True)
            norms[norms < _EPS] = 1.0
            self._vertex_normals = acc / norms
        return self._vertex_normals

    def _build_edge_tables(self):
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        face_of_pair = np.tile(np.arange(len(t)), 3)
        self._edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        fn = self.triangle_normals
        acc = np.zeros((len(self._edges), 3))
        np.add.at(acc, inverse, fn[face_of_pair])
        counts = np.bincount(inverse, minlength=len(self._edges))
        norms = np.linalg.norm(acc, axis=1, keepdims=True)
        norms[norms < _EPS] = 1.0
        self._edge_normals = acc / norms
        # feature edges: boundary edges, or edges whose faces meaningfully
        # bend.  Interior edges of a flat region carry no surface information
        # beyond their faces (and give misleading penetration signs), so the
        # edge-edge narrow phase skips them.
        sq = np.einsum("ij,ij->i", acc, acc)
        flat = (counts == 2) & (sq >= (2.0 - 1e-6) ** 2)
        self._feature_mask = ~flat

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (E, 2)."""
        if self._edges is None:
            self._build_edge_tables()
        return self._edges

    @property
    def edge_normals(self) -> np.ndarray:
        """Per-edge normal: average of adjacent face normals."""
        if self._edge_normals is None:
            self._build_edge_tables()
        return self._edge_normals

    @property
    def feature_edge_mask(self) -> np.ndarray:
        """True for boundary edges and edges with a non-flat dihedral."""
        if self._feature_mask is None:
            self._build_edge_tables()
        return self._feature_mask

    @property
    def local_aabb(self) -> "Aabb":
        if self._local_aabb is None:
            self._local_aabb = Aabb(self.vertices.min(axis=0), self.vertices.max(axis=0))
        return self._local_aabb


def make_cylinder_mesh(
    radius: float, length: float, radial_segments: int = 32, axial_segments: int = 4
) -> TriangleMesh:
    """Open tube of given radius along local +x, centered at the origin.

    Vertex 0 of every ring sits at azimuth 0 (the +y direction); faces wind
    so normals point away from the axis.
    """
    radius = check_positive(radius, "radius")
    length = check_positive(length, "length")
    if radial_segments < 3:
        raise ValueError("radial_segments must be >= 3")
    if axial_segments < 1:
        raise ValueError("axial_segments must be >= 1")

    theta = 2.0 * np.pi * np.arange(radial_segments) / radial_segments
    xs = np.linspace(-length / 2.0, length / 2.0, axial_segments + 1)
    ring = np.stack([np.zeros_like(theta), radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    verts = np.concatenate([ring + [x, 0.0, 0.0] for x in xs])

    tris = []
    for i in range(axial_segments):
        base0 = i * radial_segments
        base1 = (i + 1) * radial_segments
        for j in range(radial_segments):
            j1 = (j + 1) % radial_segments
            a, b = base0 + j, base0 + j1
            c, d = base1 + j, base1 + j1
            tris.append((a, b, d))
            tris.append((a, d, c))
    return TriangleMesh(verts, np.array(tris))


def make_annulus_mesh(
    inner_radius: float,
    outer_radius: float,
    x_offset: float = 0.0,
    radial_segments: int = 32,
    facing: int = 1,
) -> TriangleMesh:
    """Flat ring in the plane x = x_offset; normals face +x (facing=1) or -x."""
    inner_radius = check_positive(inner_radius, "inner_radius")
    outer_radius = check_positive(outer_radius, "outer_radius")
    if outer_radius <= inner_radius:
        raise ValueError("outer_radius must exceed inner_radius")
    if facing not in (1, -1):
        raise ValueError("facing must be +1 or -1")

    theta = 2.0 * np.pi * np.arange(radial_segments) / radial_segments
    cs, sn = np.cos(theta), np.sin(theta)
    inner = np.stack([np.full_like(theta, x_offset), inner_radius * cs, inner_radius * sn], axis=1)
    outer = np.stack([np.full_like(theta, x_offset), outer_radius * cs, outer_radius * sn], axis=1)
    verts = np.concatenate([inner, outer])

    n = radial_segments
    tris = []
    for j in range(n):
        j1 = (j + 1) % n
        if facing == 1:
            tris.append((j, n + j, n + j1))
            tris.append((j, n + j1, j1))
        else:
            tris.append((j, n + j1, n + j))
            tris.append((j, j1, n + j1))
    return TriangleMesh(verts, np.array(tris))


def flip_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Reverse winding so face normals flip."""
    return TriangleMesh(mesh.vertices.copy(), mesh.triangles[:, [0, 2, 1]].copy())


def merge_meshes(meshes) -> TriangleMesh:
    if not meshes:
        raise ValueError("need at least one mesh")
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


# ---------------------------------------------------------------------------
# AABBs / broad phase
# ---------------------------------------------------------------------------

@dataclass
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = check_vec3(self.lo, "lo")
        self.hi = check_vec3(self.hi, "hi")
        if np.any(self.hi < self.lo):
            raise ValueError("aabb hi must be >= lo componentwise")


def mesh_aabb(mesh: TriangleMesh, pose: Pose) -> Aabb:
    """Exact AABB of the transformed vertices."""
    pts = pose.transform_points(mesh.vertices)
    return Aabb(pts.min(axis=0), pts.max(axis=0))


def broad_phase(a: Aabb, b: Aabb, margin: float = 0.0) -> bool:
    """True when the boxes, grown by margin, overlap."""
    m = float(margin)
    return bool(np.all(a.lo - m <= b.hi + m) and np.all(b.lo - m <= a.hi + m))


# ---------------------------------------------------------------------------
# closest-point primitives (vectorized over pairs)
# ---------------------------------------------------------------------------

def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle (a, b, c) to p, all shaped (K, 3)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        if np.any(m):
            out[m] = value[m] if value.ndim == 2 else value
            done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)  # vertex region A
    assign((d3 >= 0) & (d4 <= d3), b)  # vertex region B
    assign((d6 >= 0) & (d5 <= d6), c)  # vertex region C

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(np.abs(d1 - d3) > _EPS, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)  # edge AB

    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(np.abs(d2 - d6) > _EPS, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)  # edge AC

    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(np.abs(denom_bc) > _EPS, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))

    if not np.all(done):  # interior region
        m = ~done
        denom = va[m] + vb[m] + vc[m]
        denom = np.where(np.abs(denom) > _EPS, denom, 1.0)
        v = (vb[m] / denom)[:, None]
        w = (vc[m] / denom)[:, None]
        out[m] = a[m] + v * ab[m] + w * ac[m]
    return out


def closest_points_on_segments(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2], shaped (K, 3).

    Returns (c1, c2): the closest point on each segment.
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    cc = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > _EPS, np.clip((b * f - cc * e) / np.where(denom > _EPS, denom, 1.0), 0.0, 1.0), 0.0)
        e_safe = np.where(e > _EPS, e, 1.0)
        t = np.where(e > _EPS, (b * s + f) / e_safe, 0.0)

        a_safe = np.where(a > _EPS, a, 1.0)
        s = np.where(t < 0.0, np.clip(-cc / a_safe, 0.0, 1.0), s)
        s = np.where(t > 1.0, np.clip((b - cc) / a_safe, 0.0, 1.0), s)
        t = np.clip(t, 0.0, 1.0)

    c1 = p1 + s[:, None] * d1
    c2 = p2 + t[:, None] * d2
    return c1, c2


# ---------------------------------------------------------------------------
# uniform grid acceleration
# ---------------------------------------------------------------------------

class _CellIndex:
    """Dense uniform grid over item AABBs in mesh-local coordinates.

    Stores the cell -> item lists in CSR form so point queries can gather
    (point, item) candidate pairs without python-level loops.
    """

    _MAX_CELLS = 2_000_000

    def __init__(self, boxes_lo, boxes_hi, cell_size: float, inflate: float):
        self.cell = float(cell_size)
        self.item_lo = boxes_lo
        self.item_hi = boxes_hi
        lo = boxes_lo.min(axis=0) - inflate
        hi = boxes_hi.max(axis=0) + inflate
        self.origin = lo
        # coarsen the grid for spatially huge meshes so the dense cell table
        # stays bounded; coarser cells only add candidates, never drop them
        dims = np.maximum(np.ceil((hi - lo) / self.cell), 1)
        n = float(np.prod(dims))
        if n > self._MAX_CELLS:
            self.cell *= (n / self._MAX_CELLS) ** (1.0 / 3.0)
        self.dims = np.maximum(np.ceil((hi - lo) / self.cell).astype(np.int64), 1)
        nx, ny, nz = (int(d) for d in self.dims)
        n_cells = nx * ny * nz

        ilo = np.floor((boxes_lo - inflate - lo) / self.cell).astype(np.int64)
        ihi = np.floor((boxes_hi + inflate - lo) / self.cell).astype(np.int64)
        ilo = np.clip(ilo, 0, self.dims - 1)
        ihi = np.clip(ihi, 0, self.dims - 1)

        cell_lists: list = []
        item_lists: list = []
        for item in range(len(boxes_lo)):
            xs = np.arange(ilo[item, 0], ihi[item, 0] + 1)
            ys = np.arange(ilo[item, 1], ihi[item, 1] + 1)
            zs = np.arange(ilo[item, 2], ihi[item, 2] + 1)
            flat = ((xs[:, None] * ny + ys[None, :])[:, :, None] * nz + zs).ravel()
            cell_lists.append(flat)
            item_lists.append(np.full(len(flat), item, dtype=np.int64))
        cells = np.concatenate(cell_lists)
        items = np.concatenate(item_lists)
        order = np.argsort(cells, kind="stable")
        cells, self.items = cells[order], items[order]
        self.counts = np.bincount(cells, minlength=n_cells).astype(np.int64)
        self.starts = np.concatenate(([0], np.cumsum(self.counts)))

    def candidate_pairs(self, pts: np.ndarray):
        """(point index, item index) arrays for points in occupied cells."""
        ijk = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        inside = np.all((ijk >= 0) & (ijk < self.dims), axis=1)
        flat = (ijk[:, 0] * self.dims[1] + ijk[:, 1]) * self.dims[2] + ijk[:, 2]
        flat = np.where(inside, flat, 0)
        counts = np.where(inside, self.counts[flat], 0)
        hit = counts > 0
        if not np.any(hit):
            return None
        p_idx = np.nonzero(hit)[0]
        c = counts[p_idx]
        total = int(c.sum())
        offsets = self.starts[flat[p_idx]]
        base = np.repeat(np.cumsum(c) - c, c)
        gather = np.repeat(offsets, c) + (np.arange(total) - base)
        return np.repeat(p_idx, c), self.items[gather]

    def prune_pairs(self, pts, p_idx, items, tolerance):
        """Drop pairs whose point-to-item-AABB distance exceeds tolerance."""
        p = pts[p_idx]
        clamped = np.clip(p, self.item_lo[items], self.item_hi[items])
        d2 = np.einsum("ij,ij->i", p - clamped, p - clamped)
        keep = d2 <= tolerance * tolerance
        return p_idx[keep], items[keep]


_TRI_CELL = 0.008
_EDGE_CELL = 0.012


def _tri_grid(mesh: TriangleMesh, inflate: float) -> _CellIndex:
    key = ("tri", round(inflate, 9))
    if key not in mesh._grids:
        corners = mesh.vertices[mesh.triangles]  # (M, 3, 3)
        mesh._grids[key] = _CellIndex(
            corners.min(axis=1), corners.max(axis=1), _TRI_CELL, inflate
        )
    return mesh._grids[key]


def _edge_grid(mesh: TriangleMesh, inflate: float):
    """Grid over the mesh's feature edges; returns (grid, feature indices)."""
    key = ("edge", round(inflate, 9))
    if key not in mesh._grids:
        feat = np.nonzero(mesh.feature_edge_mask)[0]
        if len(feat) == 0:
            mesh._grids[key] = (None, feat)
        else:
            ends = mesh.vertices[mesh.edges[feat]]  # (F, 2, 3)
            grid = _CellIndex(ends.min(axis=1), ends.max(axis=1), _EDGE_CELL, inflate)
            mesh._grids[key] = (grid, feat)
    return mesh._grids[key]


_EDGE_SAMPLE_SPACING = _EDGE_CELL / 2.0


def _edge_samples(mesh: TriangleMesh):
    """Points sampled along every feature edge at <= half a cell spacing.

    Sample ids are global edge indices.
    """
    key = "edge_samples"
    if key not in mesh._grids:
        feat = np.nonzero(mesh.feature_edge_mask)[0]
        p = mesh.vertices[mesh.edges[feat, 0]]
        q = mesh.vertices[mesh.edges[feat, 1]]
        lengths = np.linalg.norm(q - p, axis=1)
        pts, ids = [], []
        for k, e in enumerate(feat):
            n = max(int(np.ceil(lengths[k] / _EDGE_SAMPLE_SPACING)) + 1, 2)
            ts = np.linspace(0.0, 1.0, n)[:, None]
            pts.append(p[k] + ts * (q[k] - p[k]))
            ids.append(np.full(n, e, dtype=np.int64))
        mesh._grids[key] = (np.concatenate(pts), np.concatenate(ids))
    return mesh._grids[key]


# ---------------------------------------------------------------------------
# contacts
# ---------------------------------------------------------------------------

@dataclass
class ContactPoint:
    point: np.ndarray  # world
    normal: np.ndarray  # world, unit; separation direction for mesh A
    depth: float  # signed distance, negative = penetrating


@dataclass
class ContactSet:
    points: np.ndarray  # (K, 3)
    normals: np.ndarray  # (K, 3)
    depths: np.ndarray  # (K,)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for i in range(len(self.points)):
            yield ContactPoint(self.points[i], self.normals[i], float(self.depths[i]))

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    @classmethod
    def none(cls) -> "ContactSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))


def closest_contact(contacts: ContactSet, point) -> ContactPoint:
    """The contact nearest to a query point (e.g. the handler position)."""
    if len(contacts) == 0:
        raise EmptyContactsError("contact set is empty")
    point = check_vec3(point, "point")
    i = int(np.argmin(np.linalg.norm(contacts.points - point, axis=1)))
    return ContactPoint(contacts.points[i], contacts.normals[i], float(contacts.depths[i]))


def _relative_transform(pose_a: Pose, pose_b: Pose):
    """(R, t) mapping A-local points into B-local coordinates."""
    if pose_a.is_identity_rotation and pose_b.is_identity_rotation:
        return None, pose_a.position - pose_b.position
    r = pose_b.rotation.T @ pose_a.rotation
    t = pose_b.rotation.T @ (pose_a.position - pose_b.position)
    return r, t


def _apply(r, t, pts):
    return pts + t if r is None else pts @ r.T + t


def _collect_vertex_face(verts_in_b, mesh_b, tolerance):
    """Proximity pairs of points vs mesh_b triangles, in B-local frame.

    Returns (point idx, face idx, closest point on B face, signed distance):
    the deepest in-tolerance pair per point, or None.
    """
    grid = _tri_grid(mesh_b, tolerance)
    pairs = grid.candidate_pairs(verts_in_b)
    if pairs is None:
        return None
    vi, ti = pairs
    p = verts_in_b[vi]
    tri = mesh_b.triangles[ti]
    cp = closest_points_on_triangles(
        p, mesh_b.vertices[tri[:, 0]], mesh_b.vertices[tri[:, 1]], mesh_b.vertices[tri[:, 2]]
    )
    delta = p - cp
    dist = np.linalg.norm(delta, axis=1)
    n = mesh_b.triangle_normals[ti]
    side = np.einsum("ij,ij->i", delta, n)
    # a pair counts as penetrating only when the point projects onto the
    # face interior (delta anti-parallel to the normal); boundary pairs are
    # plain proximity pairs, which avoids phantom depth at open rims
    aligned = np.abs(side) >= dist * (1.0 - 1e-9)
    signed = np.where(aligned & (side < 0.0), -dist, dist)
    # the *nearest* face decides each vertex's standing: a vertex behind one
    # face but nearer to another (free) face of the same solid is outside the
    # material, so selecting by unsigned distance before applying the
    # tolerance filter is what makes the sign match the solid, not one face
    order = np.lexsort((dist, vi))
    vi_k, ti_k = vi[order], ti[order]
    cp_k, s_k = cp[order], signed[order]
    first = np.concatenate(([True], vi_k[1:] != vi_k[:-1]))
    vi_k, ti_k, cp_k, s_k = vi_k[first], ti_k[first], cp_k[first], s_k[first]
    # keep pairs within tolerance outside, or penetrating; cap the depth at
    # the grid reach, past which the nearest true face may not be a candidate
    keep = (s_k <= tolerance) & (s_k >= -2.0 * _TRI_CELL)
    if not np.any(keep):
        return None
    return vi_k[keep], ti_k[keep], cp_k[keep], s_k[keep]


def _collect_edge_edge(mesh_a, mesh_b, r_ab, t_ab, tolerance):
    """Edge-edge proximity pairs; returns points/normals/depths in B frame.

    Keeps the deepest in-tolerance pair per mesh-A edge.
    """
    # inflate by half the sample spacing so sampled query points can't slip
    # between cells registered for a nearby edge
    grid, feat_b = _edge_grid(mesh_b, tolerance + _EDGE_SAMPLE_SPACING / 2.0)
    if grid is None:
        return None
    samples_a, sample_edge = _edge_samples(mesh_a)
    if len(samples_a) == 0:
        return None
    samples_b = _apply(r_ab, t_ab, samples_a)
    pairs = grid.candidate_pairs(samples_b)
    if pairs is None:
        return None
    si, eb = grid.prune_pairs(
        samples_b, *pairs, tolerance + _EDGE_SAMPLE_SPACING / 2.0
    )
    if len(si) == 0:
        return None
    eb = feat_b[eb]  # grid items -> global edge indices
    packed = sample_edge[si] * np.int64(len(mesh_b.edges)) + eb
    packed = np.unique(packed)
    ea = packed // len(mesh_b.edges)
    eb = packed % len(mesh_b.edges)

    a_ends = mesh_a.vertices[mesh_a.edges[ea]]  # (K, 2, 3) in A frame
    p1 = _apply(r_ab, t_ab, a_ends[:, 0])
    q1 = _apply(r_ab, t_ab, a_ends[:, 1])
    b_ends = mesh_b.vertices[mesh_b.edges[eb]]
    c1, c2 = closest_points_on_segments(p1, q1, b_ends[:, 0], b_ends[:, 1])
    delta = c1 - c2
    dist = np.linalg.norm(delta, axis=1)
    n_all = mesh_b.edge_normals[eb]
    side = np.einsum("ij,ij->i", delta, n_all)
    aligned = np.abs(side) >= dist * (1.0 - 1e-9)
    signed_all = np.where(aligned & (side < 0.0), -dist, dist)
    # nearest mesh-B edge per mesh-A edge decides the sign (see the
    # vertex-face collector for why unsigned selection comes first)
    order = np.lexsort((dist, ea))
    ea_k = ea[order]
    cp_k, n_k, s_k = c2[order], n_all[order], signed_all[order]
    first = np.concatenate(([True], ea_k[1:] != ea_k[:-1]))
    cp_k, n_k, s_k = cp_k[first], n_k[first], s_k[first]
    keep = s_k <= tolerance
    if not np.any(keep):
        return None
    return cp_k[keep], n_k[keep], s_k[keep]


def _lattice_dedup(points, normals, depths, cell: float):
    """Keep only the deepest candidate per `cell`-sized lattice voxel.

    Bounds the cluster-stage input by contact-zone volume instead of by
    tessellation density.
    """
    idx = np.floor((points + 16.0) / cell).astype(np.int64)
    key = (idx[:, 0] << 42) | (idx[:, 1] << 21) | idx[:, 2]
    order = np.lexsort((depths, key))
    first = np.concatenate(([True], key[order][1:] != key[order][:-1]))
    keep = order[first]
    return points[keep], normals[keep], depths[keep]


def _cluster_representatives(points, normals, depths, radius: float):
    """Single-linkage clusters; keep the deepest contact per cluster."""
    points, normals, depths = _lattice_dedup(points, normals, depths, radius / 4.0)
    k = len(points)
    if k <= 1:
        return points, normals, depths
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    close = d2 <= radius * radius

    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ii, jj = np.nonzero(close)
    for i, j in zip(ii.tolist(), jj.tolist()):
        if i < j:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
    labels = np.array([find(i) for i in range(k)])

    order = np.lexsort((depths, labels))
    first = np.concatenate(([True], labels[order][1:] != labels[order][:-1]))
    keep = np.sort(order[first])
    return points[keep], normals[keep], depths[keep]


def narrow_phase_contacts(
    mesh_a: TriangleMesh,
    pose_a: Pose,
    mesh_b: TriangleMesh,
    pose_b: Pose,
    tolerance: float = 0.001,
    cluster_radius: float = 0.1,
    include_edge_pairs: bool = True,
) -> ContactSet:
    """Proximity contacts between two meshes.

    Candidate pairs (vertex-face both ways plus edge-edge) within
    `tolerance` are clustered by single linkage at `cluster_radius`, and the
    deepest candidate of each cluster is reported. Points and normals are in
    world coordinates; normals are mesh B's surface normals at the contacts,
    oriented toward the mesh-A side; depths are signed distances (negative =
    penetrating).

    `include_edge_pairs=False` skips the edge-edge phase; the two vertex-face
    phases already cover every closest-pair type except skew edge crossings,
    which cannot occur for axis-parallel cylinder pairs.
    """
    tolerance = check_positive(tolerance, "tolerance")
    cluster_radius = check_positive(cluster_radius, "cluster_radius")

    pts, nrm, dep = [], [], []

    # mesh A vertices vs mesh B faces (work in B frame)
    r_ab, t_ab = _relative_transform(pose_a, pose_b)
    verts_in_b = _apply(r_ab, t_ab, mesh_a.vertices)
    vf = _collect_vertex_face(verts_in_b, mesh_b, tolerance)
    if vf is not None:
        _, ti, cp, s = vf
        n = mesh_b.triangle_normals[ti]
        pts.append(pose_b.transform_points(cp))
        nrm.append(n if pose_b.is_identity_rotation else n @ pose_b.rotation.T)
        dep.append(s)

    # mesh B vertices vs mesh A faces (work in A frame); the reported normal
    # is still mesh B's surface normal (its vertex normal) per convention
    r_ba, t_ba = _relative_transform(pose_b, pose_a)
    verts_in_a = _apply(r_ba, t_ba, mesh_b.vertices)
    fv = _collect_vertex_face(verts_in_a, mesh_a, tolerance)
    if fv is not None:
        bi, _, _, s = fv
        world_pts = pose_b.transform_points(mesh_b.vertices[bi])
        n_b = mesh_b.vertex_normals[bi]
        pts.append(world_pts)
        nrm.append(n_b if pose_b.is_identity_rotation else n_b @ pose_b.rotation.T)
        dep.append(s)

    # edge-edge (work in B frame)
    ee = (
        _collect_edge_edge(mesh_a, mesh_b, r_ab, t_ab, tolerance)
        if include_edge_pairs
        else None
    )
    if ee is not None:
        cp, n, s = ee
        pts.append(pose_b.transform_points(cp))
        nrm.append(n if pose_b.is_identity_rotation else n @ pose_b.rotation.T)
        dep.append(s)

    if not pts:
        return ContactSet.none()

    points = np.concatenate(pts)
    normals = np.concatenate(nrm)
    depths = np.concatenate(dep)
    points, normals, depths = _cluster_representatives(points, normals, depths, cluster_radius)
    return ContactSet(points, normals, depths)


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

@dataclass
class RayHit:
    point: np.ndarray
    normal: np.ndarray
    distance: float
    object_id: object
    triangle_index: int


_RAY_MIN_T = 1e-9


def ray_cast(origin, direction, scene, max_distance: float = np.inf) -> RayHit | None:
    """First intersection of a ray with a scene of (mesh, pose, object_id).

    `direction` must already be unit length. Hits at distance <= 1e-9 are
    ignored so rays can start on a surface.
    """
    origin = check_vec3(origin, "origin")
    direction = check_vec3(direction, "direction")
    if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-9:
        raise ValueError("direction must be unit length")

    best = None
    for mesh, pose, object_id in scene:
        o = pose.inverse_transform_points(origin[None, :])[0]
        d = direction if pose.is_identity_rotation else pose.rotation.T @ direction
        a = mesh.vertices[mesh.triangles[:, 0]]
        b = mesh.vertices[mesh.triangles[:, 1]]
        c = mesh.vertices[mesh.triangles[:, 2]]
        e1 = b - a
        e2 = c - a
        pv = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pv)
        ok = np.abs(det) > _EPS
        inv = np.where(ok, det, 1.0)
        tv = o - a
        u = np.einsum("ij,ij->i", tv, pv) / inv
        ok &= (u >= -1e-12) & (u <= 1.0 + 1e-12)
        qv = np.cross(tv, e1)
        v = qv @ d / inv
        ok &= (v >= -1e-12) & (u + v <= 1.0 + 1e-12)
        t = np.einsum("ij,ij->i", e2, qv) / inv
        ok &= (t > _RAY_MIN_T) & (t <= max_distance)
        if not np.any(ok):
            continue
        ti = int(np.argmin(np.where(ok, t, np.inf)))
        dist = float(t[ti])
        if best is None or dist < best.distance:
            point = origin + dist * direction
            normal = mesh.triangle_normals[ti]
            if not pose.is_identity_rotation:
                normal = pose.rotation @ normal
            best = RayHit(point, normal, dist, object_id, ti)
    return best


def _mesh_ray_tables(mesh: TriangleMesh):
    if mesh._ray_tables is None:
        a = mesh.vertices[mesh.triangles[:, 0]]
        b = mesh.vertices[mesh.triangles[:, 1]]
        c = mesh.vertices[mesh.triangles[:, 2]]
        e1 = b - a
        e2 = c - a
        center = (a + b + c) / 3.0
        radius = np.sqrt(
            np.maximum(
                np.einsum("ij,ij->i", a - center, a - center),
                np.maximum(
                    np.einsum("ij,ij->i", b - center, b - center),
                    np.einsum("ij,ij->i", c - center, c - center),
                ),
            )
        )
        mesh._ray_tables = (a, e1, e2, np.cross(e2, e1), center, radius)
    return mesh._ray_tables


def ray_cast_fan(origin, directions, scene, max_distance: float = np.inf):
    """First hits for a bundle of rays sharing one origin.

    The intersection test is the same as `ray_cast`'s but rearranged into
    scalar triple products (det = d.(e2 x e1), u = d.(e2 x tv),
    v = d.(tv x e1)) so the whole bundle is a handful of matrix products.
    Returns (distances, points, hit_mask); misses have distance inf.
    """
    origin = check_vec3(origin, "origin")
    dirs = check_array(directions, (None, 3), "directions")
    if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > 1e-9):
        raise ValueError("directions must be unit length")
    n = len(dirs)
    best_t = np.full(n, np.inf)
    for mesh, pose, _object_id in scene:
        o = pose.inverse_transform_points(origin[None, :])[0]
        d = dirs if pose.is_identity_rotation else dirs @ pose.rotation
        a, e1, e2, c1, center, radius = _mesh_ray_tables(mesh)
        if np.isfinite(max_distance):
            # any triangle farther from the shared origin than the range
            # limit cannot be hit within it
            near = (
                np.einsum("ij,ij->i", center - o, center - o)
                <= (radius + max_distance) ** 2
            )
            if not np.any(near):
                continue
            if not np.all(near):
                a, e1, e2, c1 = a[near], e1[near], e2[near], c1[near]
        tv = o - a
        qv = np.cross(tv, e1)
        t_num = np.einsum("ij,ij->i", e2, qv)
        det = d @ c1.T  # (n_ray, n_tri)
        ok = np.abs(det) > _EPS
        inv = np.where(ok, det, 1.0)
        u = (d @ np.cross(e2, tv).T) / inv
        ok &= (u >= -1e-12) & (u <= 1.0 + 1e-12)
        v = (d @ qv.T) / inv
        ok &= (v >= -1e-12) & (u + v <= 1.0 + 1e-12)
        t = t_num[None, :] / inv
        ok &= (t > _RAY_MIN_T) & (t <= max_distance)
        t = np.where(ok, t, np.inf)
        best_t = np.minimum(best_t, t.min(axis=1))
    hit = np.isfinite(best_t)
    points = origin[None, :] + np.where(hit, best_t, 0.0)[:, None] * dirs
    return best_t, points, hit


def ray_fan(origin, toward, n_ray: int, max_half_angle: float) -> np.ndarray:
    """Deterministic fan of `n_ray` unit directions within a cone.

    The cone axis runs from `origin` toward the point `toward`; the first
    direction is the axis itself and the rest spiral outward to the cone
    boundary (golden-angle azimuths). Returns an (n_ray, 3) array.
    """
    origin = check_vec3(origin, "origin")
    toward = check_vec3(toward, "toward")
    axis = toward - origin
    n = float(np.linalg.norm(axis))
    if n < _EPS:
        raise ValueError("origin and toward must be distinct points")
    axis = axis / n
    if n_ray < 4:
        raise ValueError("n_ray must be >= 4")
    max_half_angle = float(max_half_angle)
    if not 0.0 < max_half_angle <= np.pi / 2:
        raise ValueError("max_half_angle must be in (0, pi/2]")

    # orthonormal basis around the axis
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(axis)))] = 1.0
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)

    i = np.arange(1, n_ray)
    theta = max_half_angle * np.sqrt(i / (n_ray - 1))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = i * golden
    dirs = np.empty((n_ray, 3))
    dirs[0] = axis
    dirs[1:] = (
        np.cos(theta)[:, None] * axis
        + np.sin(theta)[:, None]
        * (np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v)
    )
    return dirs


# ---------------------------------------------------------------------------
# plane fitting
# ---------------------------------------------------------------------------

def fit_plane_normal_svd(points, orient_toward=None) -> np.ndarray:
    """Unit normal of the best-fit plane through `points` (least squares).

    The normal is the singular direction of least variance of the centered
    points. If `orient_toward` is given the normal is flipped, if needed, to
    point from the centroid toward that side.
    """
    pts = check_array(points, (None, 3), "points")
    if len(pts) < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    centroid = pts.mean(axis=0)
    q = pts - centroid
    _, s, vt = np.linalg.svd(q, full_matrices=False)
    if s[1] <= max(s[0] * 1e-10, 1e-14):
        raise DegenerateGeometryError(
            "points are collinear or coincident; plane is undefined"
        )
    normal = vt[2]
    if orient_toward is not None:
        ref = check_vec3(orient_toward, "orient_toward")
        if float(np.dot(ref - centroid, normal)) < 0.0:
            normal = -normal
    return normal / np.linalg.norm(normal)

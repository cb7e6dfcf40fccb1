"""
Coordinate conventions and the shield-shaped shell.

Lab frame: x forward (direction of travel), y left, z up; the beams are hinged
on the lab y-axis at ``x = 0, z = 0``. Body frame (double-primed axes): origin
at the geometric centre of the uncropped shell, x'' forward, y'' left, z'' up.
Units are mm and radians throughout.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .exceptions import InvalidParameterError, NoContactError
from .utils import wrap_angle

logger = logging.getLogger(__name__)

SURFACE = 'surface'
EDGE = 'edge'

# Rim distances within this of the surface distance count as touching the rim (mm).
RIM_SNAP = 1e-6

HALF_LEFT = 0
HALF_RIGHT = 1

_AXES = ('x', 'y', 'z', 'alpha', 'beta', 'gamma')
_ANGLES = ('alpha', 'beta', 'gamma')


@dataclass(frozen=True)
class Pose:
    """
    Body configuration in the lab frame.

    ``x, y, z`` locate the geometric centre (mm); ``alpha`` (roll), ``beta``
    (pitch) and ``gamma`` (yaw) are intrinsic Z-Y'-X'' Tait-Bryan angles in
    radians, normalised to (-pi, pi]. A negative ``beta`` tilts the nose up.
    """
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in _AXES:
            value = float(getattr(self, name))
            if name in _ANGLES:
                value = wrap_angle(value)
            object.__setattr__(self, name, value)

    @classmethod
    def from_degrees(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0,
                     alpha: float = 0.0, beta: float = 0.0, gamma: float = 0.0) -> 'Pose':
        """Build a pose from angles given in degrees."""
        return cls(x, y, z, math.radians(alpha), math.radians(beta), math.radians(gamma))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        return pose_rotation(self)

    def perturbed(self, axis: str, delta: float) -> 'Pose':
        """Return a copy with ``delta`` added to one coordinate."""
        if axis not in _AXES:
            raise InvalidParameterError(f"Unknown pose axis '{axis}'")
        return replace(self, **{axis: getattr(self, axis) + delta})

    def mirrored(self) -> 'Pose':
        """Reflect the pose through the lab x-z plane."""
        return Pose(self.x, -self.y, self.z, -self.alpha, self.beta, -self.gamma)

    def degrees(self) -> Dict[str, float]:
        return {
            'x_mm': self.x, 'y_mm': self.y, 'z_mm': self.z,
            'alpha_deg': math.degrees(self.alpha),
            'beta_deg': math.degrees(self.beta),
            'gamma_deg': math.degrees(self.gamma),
        }


def pose_rotation(pose: Pose) -> np.ndarray:
    """
    Rotation matrix taking body-frame vectors to the lab frame.

    Args:
        pose: Body pose

    Returns:
        3x3 orthonormal matrix ``Rz(gamma) @ Ry(beta) @ Rx(alpha)``
    """
    ca, sa = math.cos(pose.alpha), math.sin(pose.alpha)
    cb, sb = math.cos(pose.beta), math.sin(pose.beta)
    cg, sg = math.cos(pose.gamma), math.sin(pose.gamma)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def to_lab(points: np.ndarray, pose: Pose, rotation: Optional[np.ndarray] = None) -> np.ndarray:
    """Map body-frame points (..., 3) to lab coordinates."""
    rot = pose_rotation(pose) if rotation is None else rotation
    return np.asarray(points) @ rot.T + pose.position


def to_body(points: np.ndarray, pose: Pose, rotation: Optional[np.ndarray] = None) -> np.ndarray:
    """Map lab-frame points (..., 3) to body coordinates."""
    rot = pose_rotation(pose) if rotation is None else rotation
    return (np.asarray(points) - pose.position) @ rot


@dataclass(frozen=True)
class BodyParams:
    """
    Inertial parameters of the body.

    Attributes:
        mass: Body mass (kg)
        com_offset: Distance of the centre of mass below the geometric centre along -z'' (mm)
        gravity: Gravitational acceleration (mm/s^2)
        reference_height: Height of the geometric centre at which gravitational PE is zero (mm)
    """
    mass: float = 0.53
    com_offset: float = 8.0
    gravity: float = 9810.0
    reference_height: float = 138.0

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidParameterError(f"mass must be > 0, got {self.mass}")
        if not self.com_offset >= 0:
            raise InvalidParameterError(f"com_offset must be >= 0, got {self.com_offset}")
        if not self.gravity > 0:
            raise InvalidParameterError(f"gravity must be > 0, got {self.gravity}")

    @property
    def weight(self) -> float:
        """Weight in N (kg * mm/s^2 is 1e-3 N)."""
        return self.mass * self.gravity * 1e-3


@dataclass(frozen=True)
class ShellParams:
    """
    Shape of the shield and of its crop.

    The uncropped counterpart is the part of an ellipsoid with semi-axes
    ``(length/2, width/2, height)`` lying above ``z'' = -rim_depth``; the rim at
    that height is the sharp edge. The sensed shell removes a midline strip, a
    head gap at the front centre and everything behind ``rear_crop_x``.
    """
    length: float = 180.0
    width: float = 160.0
    height: float = 60.0
    rim_depth: float = 30.0
    midline_gap: float = 2.0
    head_gap_x: float = 0.0
    head_gap_half_width: float = 20.0
    rear_crop_x: float = -60.0
    cell_max_snap: float = 25.0
    cell_max_normal_deg: float = 5.0
    edge_sections_per_half: int = 3
    edge_tolerance: float = 0.5
    query_tolerance: float = 1.0

    @property
    def semi_axes(self) -> Tuple[float, float, float]:
        return self.length / 2.0, self.width / 2.0, self.height

    @property
    def rim_polar_angle(self) -> float:
        """Polar angle (from +z'') of the rim on the ellipsoid."""
        return math.acos(-self.rim_depth / self.height)

    def validate(self) -> None:
        a, b, c = self.semi_axes
        if min(a, b, c) <= 0:
            raise InvalidParameterError(f"Shell semi-axes must be positive, got {(a, b, c)}")
        if not 0 <= self.rim_depth < self.height:
            raise InvalidParameterError(
                f"rim_depth must lie in [0, height), got {self.rim_depth} "
                f"with height {self.height}")
        if self.midline_gap < 0 or self.head_gap_half_width < self.midline_gap / 2.0:
            raise InvalidParameterError(
                "Crop widths must satisfy 0 <= midline_gap/2 <= head_gap_half_width")
        if not -a < self.rear_crop_x < self.head_gap_x < a:
            raise InvalidParameterError(
                "Crop planes must satisfy -length/2 < rear_crop_x < head_gap_x < length/2")
        if self.edge_sections_per_half < 1:
            raise InvalidParameterError("edge_sections_per_half must be >= 1")
        if self.cell_max_snap <= 0 or not 0 < self.cell_max_normal_deg < 90:
            raise InvalidParameterError("Touch-cell limits must be positive")


@dataclass(eq=False)
class TouchCell:
    """A group of triangles sensed as one touch location."""
    id: int
    half: int
    center: np.ndarray
    normal: np.ndarray
    faces: np.ndarray


@dataclass(eq=False)
class EdgeSection:
    """One of the sections of the front sharp edge."""
    id: int
    half: int
    center: np.ndarray
    normal: np.ndarray
    faces: np.ndarray


@dataclass(frozen=True, eq=False)
class SurfaceHit:
    """Result of a surface query in body coordinates."""
    cell: int
    normal: np.ndarray
    contact_type: str
    face: int
    point: np.ndarray
    distance: float
    section: int = -1


@dataclass(eq=False)
class ShellMesh:
    """
    Triangulated shell in body coordinates.

    Attributes:
        vertices: (V, 3) vertex positions
        faces: (F, 3) vertex indices, wound so normals point outward
        half: (F,) ``HALF_LEFT`` or ``HALF_RIGHT``
        face_cell: (F,) touch-cell id of each face
        cells: Touch cells
        face_section: (F,) edge-section id or -1
        edge_sections: Sections of the front sharp edge
        rim_segments: (S, 2, 3) front rim polyline segments
        rim_section: (S,) edge-section id of each rim segment
    """
    params: ShellParams
    resolution: float
    cropped: bool
    vertices: np.ndarray
    faces: np.ndarray
    half: np.ndarray
    face_cell: np.ndarray
    cells: List[TouchCell]
    face_section: np.ndarray
    edge_sections: List[EdgeSection]
    rim_segments: np.ndarray
    rim_section: np.ndarray
    info: Dict[str, float] = field(default_factory=dict)

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def normals(self) -> np.ndarray:
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.triangles.mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as (E, 2) vertex indices."""
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                                self.faces[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    @cached_property
    def _max_extent(self) -> float:
        return float(np.linalg.norm(self.triangles - self.centroids[:, None, :], axis=2).max())

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def to_frames(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """
        Indexed triangle list for visualisation.

        Returns:
            Tuple of (vertex table, face table)
        """
        vertex_df = pd.DataFrame({
            'vertex': np.arange(len(self.vertices)),
            'x_mm': self.vertices[:, 0],
            'y_mm': self.vertices[:, 1],
            'z_mm': self.vertices[:, 2],
        })
        face_df = pd.DataFrame({
            'face': np.arange(len(self.faces)),
            'v0': self.faces[:, 0],
            'v1': self.faces[:, 1],
            'v2': self.faces[:, 2],
            'half': np.where(self.half == HALF_LEFT, 'left', 'right'),
            'cell': self.face_cell,
            'edge_section': self.face_section,
        })
        return vertex_df, face_df


def _half_ellipsoid(a: float, b: float, c: float, t_max: float,
                    resolution: float) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """Left half (y'' >= 0) of the cap on a (polar, azimuth) grid with a fan at the pole."""
    n_u = max(8, int(math.ceil(math.pi * max(a, b) / resolution)))
    n_t = max(4, int(math.ceil(t_max * max(a, b, c) / resolution)))
    t = np.linspace(0.0, t_max, n_t + 1)[1:]
    u = np.linspace(0.0, math.pi, n_u + 1)
    sin_u = np.sin(u)
    cos_u = np.cos(u)
    sin_u[[0, -1]] = 0.0
    cos_u[[0, -1]] = [1.0, -1.0]

    st = np.sin(t)[:, None]
    ring = np.stack([a * st * cos_u[None, :],
                     b * st * sin_u[None, :],
                     np.broadcast_to(c * np.cos(t)[:, None], (n_t, n_u + 1))], axis=-1)
    vertices = np.vstack([[[0.0, 0.0, c]], ring.reshape(-1, 3)])

    def idx(i, j):
        return 1 + i * (n_u + 1) + j

    j = np.arange(n_u)
    faces = [np.stack([np.zeros(n_u, dtype=int), idx(0, j), idx(0, j + 1)], axis=1)]
    for i in range(n_t - 1):
        faces.append(np.stack([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)], axis=1))
        faces.append(np.stack([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)], axis=1))
    return vertices, np.concatenate(faces).astype(np.int64), n_t, n_u


def _orient_outward(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    # The cap is star-shaped about the body origin.
    tri = vertices[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum('ij,ij->i', normal, tri.mean(axis=1)) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def _cell_summary(ids: np.ndarray, centroids: np.ndarray, normals: np.ndarray,
                  areas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w = areas[ids]
    normal = (normals[ids] * w[:, None]).sum(axis=0)
    normal /= np.linalg.norm(normal)
    mean = (centroids[ids] * w[:, None]).sum(axis=0) / w.sum()
    nearest = ids[np.argmin(np.linalg.norm(centroids[ids] - mean, axis=1))]
    return centroids[nearest].copy(), normal


def _partition_cells(face_ids: np.ndarray, triangles: np.ndarray, centroids: np.ndarray,
                     normals: np.ndarray, areas: np.ndarray, max_snap: float,
                     max_normal_deg: float) -> List[np.ndarray]:
    """Median-split faces until every cell meets the snap-distance and normal-spread limits."""
    cos_limit = math.cos(math.radians(max_normal_deg))
    stack = [face_ids]
    cells = []
    while stack:
        ids = stack.pop()
        if len(ids) == 0:
            continue
        center, normal = _cell_summary(ids, centroids, normals, areas)
        snap = np.linalg.norm(triangles[ids] - center, axis=2).max()
        spread = (normals[ids] @ normal).min()
        if len(ids) == 1 or (snap < max_snap and spread > cos_limit):
            cells.append(ids)
            continue
        axis = int(np.argmax(np.ptp(centroids[ids], axis=0)))
        order = np.argsort(centroids[ids, axis], kind='stable')
        mid = len(ids) // 2
        stack.append(ids[order[mid:]])
        stack.append(ids[order[:mid]])
    return cells


def shell_build(params: Optional[ShellParams] = None, mesh_resolution: float = 2.0,
                cropped: bool = True) -> ShellMesh:
    """
    Build the triangulated shell.

    The left half is tessellated and mirrored onto the right half, so the two
    halves are exact mirror images. The uncropped counterpart (``cropped=False``)
    shares the tessellation of the sensed shell.

    Args:
        params: Shape and crop parameters (defaults when None)
        mesh_resolution: Target edge length (mm)
        cropped: Apply the midline, head-gap and rear crops

    Returns:
        ShellMesh with touch cells and edge sections assigned

    Raises:
        InvalidParameterError: For degenerate parameters
    """
    params = params or ShellParams()
    params.validate()
    if not mesh_resolution > 0:
        raise InvalidParameterError(f"mesh_resolution must be > 0, got {mesh_resolution}")

    a, b, c = params.semi_axes
    t_max = params.rim_polar_angle
    left_v, left_f, n_t, n_u = _half_ellipsoid(a, b, c, t_max, mesh_resolution)

    # Seam vertices (pole, u = 0 and u = pi) are shared by both halves.
    n_left = len(left_v)
    grid_j = np.concatenate([[0], np.tile(np.arange(n_u + 1), n_t)])
    on_seam = (grid_j == 0) | (grid_j == n_u)
    on_seam[0] = True
    mirror_index = np.arange(n_left)
    mirror_index[~on_seam] = n_left + np.arange(int((~on_seam).sum()))
    right_v = left_v[~on_seam] * np.array([1.0, -1.0, 1.0])
    vertices = np.vstack([left_v, right_v])

    left_f = _orient_outward(vertices, left_f)
    right_f = mirror_index[left_f][:, [0, 2, 1]]
    faces = np.vstack([left_f, right_f])
    n_half = len(left_f)
    half = np.repeat(np.array([HALF_LEFT, HALF_RIGHT], dtype=np.int8), n_half)

    rim_ring = 1 + (n_t - 1) * (n_u + 1) + np.arange(n_u + 1)

    tri = vertices[faces]
    centroids = tri.mean(axis=1)
    keep = np.ones(len(faces), dtype=bool)
    if cropped:
        cx, cy = centroids[:, 0], np.abs(centroids[:, 1])
        keep &= cy >= params.midline_gap / 2.0
        keep &= ~((cx > params.head_gap_x) & (cy < params.head_gap_half_width))
        keep &= cx >= params.rear_crop_x
    # The crop is mirror symmetric, so both halves keep the same positions.
    keep_half = keep[:n_half] & keep[n_half:]

    # Front rim: boundary triangles carrying two rim vertices.
    rim_lookup = np.zeros(len(left_v), dtype=bool)
    rim_lookup[rim_ring] = True
    on_rim = rim_lookup[left_f].sum(axis=1) >= 1
    rim_edge_face = rim_lookup[left_f].sum(axis=1) == 2
    n_sec = params.edge_sections_per_half
    left_centroid = centroids[:n_half]
    azimuth = np.arctan2(left_centroid[:, 1] / b, left_centroid[:, 0] / a)
    section_half = np.full(n_half, -1, dtype=np.int64)
    front = on_rim & (left_centroid[:, 0] > 0) & keep_half
    section_half[front] = np.minimum(n_sec - 1,
                                     (azimuth[front] / (math.pi / 2) * n_sec).astype(int))

    # Rim segments between consecutive rim vertices, kept where their boundary face is kept.
    seg_a = left_v[rim_ring[:-1]]
    seg_b = left_v[rim_ring[1:]]
    seg_face = np.flatnonzero(rim_edge_face)
    seg_owner = np.full(n_u, -1, dtype=np.int64)
    for fi in seg_face:
        js = np.sort(np.searchsorted(rim_ring, left_f[fi][rim_lookup[left_f[fi]]]))
        seg_owner[js[0]] = fi
    seg_mid = 0.5 * (seg_a + seg_b)
    seg_keep = (seg_owner >= 0) & (seg_mid[:, 0] > 0)
    seg_keep &= keep_half[np.maximum(seg_owner, 0)]
    seg_section = np.minimum(
        n_sec - 1,
        (np.arctan2(seg_mid[:, 1] / b, seg_mid[:, 0] / a) / (math.pi / 2) * n_sec).astype(int))
    left_segments = np.stack([seg_a, seg_b], axis=1)[seg_keep]
    left_seg_section = seg_section[seg_keep]
    right_segments = left_segments * np.array([1.0, -1.0, 1.0])
    rim_segments = np.concatenate([left_segments, right_segments])
    rim_section = np.concatenate([left_seg_section, left_seg_section + n_sec])

    # Touch cells on the left half, mirrored onto the right.
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(normals, axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    left_cells = _partition_cells(np.flatnonzero(keep_half), tri, centroids, normals, areas,
                                  params.cell_max_snap, params.cell_max_normal_deg)

    # Compact to the kept faces and vertices.
    kept = np.concatenate([np.flatnonzero(keep_half), n_half + np.flatnonzero(keep_half)])
    new_face_index = np.full(len(faces), -1, dtype=np.int64)
    new_face_index[kept] = np.arange(len(kept))
    used = np.unique(faces[kept])
    new_vertex_index = np.full(len(vertices), -1, dtype=np.int64)
    new_vertex_index[used] = np.arange(len(used))
    out_vertices = vertices[used]
    out_faces = new_vertex_index[faces[kept]]
    out_half = half[kept]

    cells: List[TouchCell] = []
    face_cell = np.full(len(kept), -1, dtype=np.int64)
    for side in (HALF_LEFT, HALF_RIGHT):
        offset = 0 if side == HALF_LEFT else n_half
        for ids in left_cells:
            full_ids = ids + offset
            center, normal = _cell_summary(full_ids, centroids, normals, areas)
            local = new_face_index[full_ids]
            cell = TouchCell(id=len(cells), half=side, center=center, normal=normal, faces=local)
            face_cell[local] = cell.id
            cells.append(cell)

    face_section = np.full(len(kept), -1, dtype=np.int64)
    sections: List[EdgeSection] = []
    for side in (HALF_LEFT, HALF_RIGHT):
        offset = 0 if side == HALF_LEFT else n_half
        seg_side = rim_segments[rim_section // n_sec == side]
        sec_side = rim_section[rim_section // n_sec == side]
        for s in range(n_sec):
            sid = s + side * n_sec
            members = np.flatnonzero(section_half == s) + offset
            local = new_face_index[members]
            face_section[local] = sid
            segs = seg_side[sec_side == sid]
            if len(segs) == 0:
                continue
            points = segs.reshape(-1, 3)
            mean = points.mean(axis=0)
            center = points[np.argmin(np.linalg.norm(points - mean, axis=1))]
            normal = _rim_normals(segs).sum(axis=0)
            normal /= np.linalg.norm(normal)
            sections.append(EdgeSection(id=sid, half=side, center=center, normal=normal,
                                        faces=local))

    mesh = ShellMesh(
        params=params, resolution=mesh_resolution, cropped=cropped,
        vertices=out_vertices, faces=out_faces, half=out_half,
        face_cell=face_cell, cells=cells, face_section=face_section, edge_sections=sections,
        rim_segments=rim_segments, rim_section=rim_section,
        info={'rings': n_t, 'segments_per_half': n_u},
    )
    logger.info(f"Built {'cropped' if cropped else 'uncropped'} shell: {len(out_faces)} faces, "
                f"{len(cells)} touch cells, {len(sections)} edge sections")
    return mesh


def _rim_normals(segments: np.ndarray) -> np.ndarray:
    """Outward horizontal normals of rim segments (S, 2, 3)."""
    tangent = segments[:, 1] - segments[:, 0]
    normal = np.stack([tangent[:, 1], -tangent[:, 0], np.zeros(len(tangent))], axis=1)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    mid = segments.mean(axis=1)
    outward = np.einsum('ij,ij->i', normal[:, :2], mid[:, :2]) >= 0
    return np.where(outward[:, None], normal, -normal)


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                                c: np.ndarray) -> np.ndarray:
    """
    Closest point to ``p`` on each triangle ``(a[i], b[i], c[i])``.

    Region tests follow the usual Voronoi-region walk (vertex, edge, face);
    the first matching region wins.
    """
    ab, ac, ap = b - a, c - a, p - a
    bp, cp = p - b, p - c
    d1 = np.einsum('ij,ij->i', ab, ap)
    d2 = np.einsum('ij,ij->i', ac, ap)
    d3 = np.einsum('ij,ij->i', ab, bp)
    d4 = np.einsum('ij,ij->i', ac, bp)
    d5 = np.einsum('ij,ij->i', ab, cp)
    d6 = np.einsum('ij,ij->i', ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide='ignore', invalid='ignore'):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        result = a + ab * v[:, None] + ac * w[:, None]

        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        in_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        result[in_bc] = (b + (c - b) * t_bc[:, None])[in_bc]

        t_ac = d2 / (d2 - d6)
        in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        result[in_ac] = (a + ac * t_ac[:, None])[in_ac]

        in_c = (d6 >= 0) & (d5 <= d6)
        result[in_c] = c[in_c]

        t_ab = d1 / (d1 - d3)
        in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        result[in_ab] = (a + ab * t_ab[:, None])[in_ab]

        in_b = (d3 >= 0) & (d4 <= d3)
        result[in_b] = b[in_b]

        in_a = (d1 <= 0) & (d2 <= 0)
        result[in_a] = a[in_a]
    return result


def _segment_distances(p: np.ndarray, segments: np.ndarray) -> np.ndarray:
    start, end = segments[:, 0], segments[:, 1]
    d = end - start
    t = np.clip(np.einsum('ij,ij->i', p - start, d) / np.einsum('ij,ij->i', d, d), 0.0, 1.0)
    return np.linalg.norm(start + d * t[:, None] - p, axis=1)


def surface_query(mesh: ShellMesh, point: np.ndarray,
                  tolerance: Optional[float] = None) -> SurfaceHit:
    """
    Locate a body-frame point on the shell.

    A point whose nearest shell point lies on the front rim, within the edge
    tolerance, is an edge contact and gets a normal perpendicular to z'' and to
    the rim tangent. A point nearer to a face than to the rim is a surface
    contact even inside the edge band, and gets the averaged normal of its
    touch cell.

    Args:
        mesh: Shell to query
        point: Body-frame point (mm)
        tolerance: Maximum distance from the surface (defaults to the shell's query tolerance)

    Returns:
        SurfaceHit with owning cell, reported normal and contact type

    Raises:
        NoContactError: If the point is farther than ``tolerance`` from the shell
    """
    point = np.asarray(point, dtype=float)
    tol = mesh.params.query_tolerance if tolerance is None else tolerance
    candidates = mesh._centroid_tree.query_ball_point(point, r=mesh._max_extent + tol)
    if not candidates:
        raise NoContactError(f"Point {point.tolist()} is not on the shell")
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    tri = mesh.triangles[candidates]
    closest = closest_points_on_triangles(np.broadcast_to(point, tri[:, 0].shape),
                                          tri[:, 0], tri[:, 1], tri[:, 2])
    dist = np.linalg.norm(closest - point, axis=1)
    best = int(np.argmin(dist))
    if dist[best] > tol:
        raise NoContactError(
            f"Point {point.tolist()} is {dist[best]:.3f} mm from the shell (tolerance {tol} mm)")
    face = int(candidates[best])
    cell = int(mesh.face_cell[face])

    if len(mesh.rim_segments) and point[0] > 0:
        rim_dist = _segment_distances(point, mesh.rim_segments)
        seg = int(np.argmin(rim_dist))
        if rim_dist[seg] < mesh.params.edge_tolerance and rim_dist[seg] <= dist[best] + RIM_SNAP:
            normal = _rim_normals(mesh.rim_segments[seg:seg + 1])[0]
            return SurfaceHit(cell=cell, normal=normal, contact_type=EDGE, face=face,
                              point=closest[best], distance=float(dist[best]),
                              section=int(mesh.rim_section[seg]))

    return SurfaceHit(cell=cell, normal=mesh.cells[cell].normal, contact_type=SURFACE,
                      face=face, point=closest[best], distance=float(dist[best]))

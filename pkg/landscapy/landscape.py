"""
Ground-truth potential energy landscape.

The body traverses two plates hinged on the lab y-axis. Each plate rests on
the body at the smallest forward deflection that clears the shell, and the
landscape is gravitational energy plus the torsional-spring energy of both
hinges.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from scipy.spatial import ConvexHull, QhullError
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from .exceptions import InfeasiblePoseError, InvalidParameterError, NoContactError
from .geometry import BodyParams, Pose, ShellMesh, pose_rotation, surface_query, to_body

logger = logging.getLogger(__name__)

DEFLECTION_CAP = math.radians(89.0)
DEFLECTION_XTOL = 1e-6

FEATURE_VERTEX = 'vertex'
FEATURE_SIDE = 'side'
FEATURE_TIP = 'tip'
UNCOVERED = 'uncovered'

GRID_COLUMNS = ['x_mm', 'alpha_deg', 'beta_deg', 'PE_Nmm']
GRADIENT_COLUMNS = ['dPE_dx', 'dPE_dalpha', 'dPE_dbeta']

POSE_AXES = ('x', 'y', 'z', 'alpha', 'beta', 'gamma')

# Forward and backward differences disagreeing beyond this share of their size
# are re-checked at half the step.
JUMP_RATIO = 0.5
JUMP_FLOOR = 1e-6


@dataclass(frozen=True)
class Beam:
    """
    Plate obstacle on a torsional hinge.

    Attributes:
        name: Label used in record columns (``'L'`` or ``'R'``)
        hinge_y: Lateral position of the plate centre line (mm)
        k: Torsional stiffness (N*mm/rad)
        tau: Preload torque at zero deflection (N*mm)
        width: Plate width along y (mm)
        height: Plate length from hinge to tip (mm)
        theta: Forward deflection (rad)
    """
    name: str
    hinge_y: float
    k: float
    tau: float
    width: float = 30.0
    height: float = 200.0
    theta: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidParameterError(f"Beam {self.name}: k must be > 0, got {self.k}")
        if not self.tau >= 0:
            raise InvalidParameterError(f"Beam {self.name}: tau must be >= 0, got {self.tau}")
        if not self.theta >= 0:
            raise InvalidParameterError(f"Beam {self.name}: theta must be >= 0, got {self.theta}")
        if not (self.width > 0 and self.height > 0):
            raise InvalidParameterError(f"Beam {self.name}: plate dimensions must be positive")

    @property
    def y_range(self) -> Tuple[float, float]:
        return self.hinge_y - self.width / 2.0, self.hinge_y + self.width / 2.0

    def deflected(self, theta: float) -> 'Beam':
        return replace(self, theta=theta)

    def restoring_torque(self, theta: Optional[float] = None) -> float:
        theta = self.theta if theta is None else theta
        return self.k * theta + self.tau

    def energy(self, theta: Optional[float] = None) -> float:
        theta = self.theta if theta is None else theta
        return 0.5 * self.k * theta ** 2 + self.tau * theta

    def mirrored(self, name: Optional[str] = None) -> 'Beam':
        return replace(self, name=name or self.name, hinge_y=-self.hinge_y)


def default_beams(gap: float = 130.0, width: float = 30.0, height: float = 200.0,
                  left: Tuple[float, float] = (285.0, 91.0),
                  right: Tuple[float, float] = (324.0, 77.0)) -> Tuple[Beam, Beam]:
    """
    Build the beam pair on either side of a midline gap.

    Args:
        gap: Clear distance between the inner plate edges (mm)
        width: Plate width (mm)
        height: Plate length (mm)
        left: (k, tau) of the left beam
        right: (k, tau) of the right beam

    Returns:
        Tuple of (left beam, right beam)
    """
    offset = gap / 2.0 + width / 2.0
    return (Beam('L', offset, left[0], left[1], width, height),
            Beam('R', -offset, right[0], right[1], width, height))


@dataclass(frozen=True, eq=False)
class BeamContact:
    """
    Deflection state of one beam resting on the body.

    ``direction`` is the common normal of the touching features scaled so its
    component along the plate normal is 1; the force on the body is
    ``-(k*theta + tau) / radius * direction``.
    """
    beam: str
    theta: float
    point: Optional[np.ndarray] = None
    direction: Optional[np.ndarray] = None
    radius: float = float('nan')
    feature: Optional[str] = None
    contact_type: Optional[str] = None

    @property
    def in_contact(self) -> bool:
        return self.point is not None

    @property
    def normal(self) -> np.ndarray:
        return self.direction / np.linalg.norm(self.direction)

    @property
    def moment_arm(self) -> float:
        """Distance of the contact line of action from the hinge axis (mm)."""
        return self.radius / float(np.linalg.norm(self.direction))


@dataclass
class _Candidates:
    points: np.ndarray
    radius: np.ndarray
    phi: np.ndarray
    feature: np.ndarray
    edge: np.ndarray

    def __len__(self):
        return len(self.phi)


def _contact_candidates(lab_vertices: np.ndarray, edges: np.ndarray, beam: Beam) -> _Candidates:
    """Body points that can touch the plate: strip vertices and strip-boundary edge crossings."""
    y0, y1 = beam.y_range
    reach2 = beam.height ** 2
    y = lab_vertices[:, 1]
    r2 = lab_vertices[:, 0] ** 2 + lab_vertices[:, 2] ** 2

    vertex_mask = (y >= y0) & (y <= y1) & (r2 <= reach2)
    points = [lab_vertices[vertex_mask]]
    feature = [np.full(int(vertex_mask.sum()), 0)]
    edge_vectors = [np.zeros((int(vertex_mask.sum()), 3))]

    pa = lab_vertices[edges[:, 0]]
    pb = lab_vertices[edges[:, 1]]
    d = pb - pa
    ya, yb = pa[:, 1], pb[:, 1]

    for y_side in (y0, y1):
        straddle = (ya - y_side) * (yb - y_side) < 0
        if not straddle.any():
            continue
        s = (y_side - ya[straddle]) / d[straddle, 1]
        p = pa[straddle] + d[straddle] * s[:, None]
        inside = p[:, 0] ** 2 + p[:, 2] ** 2 <= reach2
        points.append(p[inside])
        feature.append(np.full(int(inside.sum()), 1))
        edge_vectors.append(d[straddle][inside])

    ra2, rb2 = r2[edges[:, 0]], r2[edges[:, 1]]
    crossing = (ra2 - reach2) * (rb2 - reach2) < 0
    if crossing.any():
        a_xz = pa[crossing][:, [0, 2]]
        d_xz = d[crossing][:, [0, 2]]
        qa = np.einsum('ij,ij->i', d_xz, d_xz)
        qb = np.einsum('ij,ij->i', a_xz, d_xz)
        qc = np.einsum('ij,ij->i', a_xz, a_xz) - reach2
        root = np.sqrt(np.maximum(qb ** 2 - qa * qc, 0.0))
        s = np.where(ra2[crossing] < reach2, (-qb + root) / qa, (-qb - root) / qa)
        p = pa[crossing] + d[crossing] * s[:, None]
        in_strip = (p[:, 1] >= y0) & (p[:, 1] <= y1)
        points.append(p[in_strip])
        feature.append(np.full(int(in_strip.sum()), 2))
        edge_vectors.append(d[crossing][in_strip])

    points = np.concatenate(points)
    return _Candidates(
        points=points,
        radius=np.hypot(points[:, 0], points[:, 2]),
        phi=np.arctan2(points[:, 0], points[:, 2]),
        feature=np.concatenate(feature),
        edge=np.concatenate(edge_vectors),
    )


def _clearance(theta: float, candidates: _Candidates) -> float:
    # Signed distance of the nearest in-reach body point from the plate plane.
    delta = np.clip(theta - candidates.phi, -math.pi / 2, math.pi / 2)
    return float(np.min(candidates.radius * np.sin(delta)))


def _contact_direction(candidates: _Candidates, i: int, theta: float) -> np.ndarray:
    n_f = np.array([math.cos(theta), 0.0, -math.sin(theta)])
    kind = candidates.feature[i]
    if kind == 0:
        return n_f
    e = candidates.edge[i]
    if kind == 1:
        return n_f - (n_f @ e) / e[1] * np.array([0.0, 1.0, 0.0])
    e_r = np.array([math.sin(theta), 0.0, math.cos(theta)])
    return n_f - (n_f @ e) / (e_r @ e) * e_r


_FEATURE_NAMES = {0: FEATURE_VERTEX, 1: FEATURE_SIDE, 2: FEATURE_TIP}


def clearance_function(pose: Pose, mesh: ShellMesh, beam: Beam) -> Callable[[float], float]:
    """
    Plate-to-shell clearance as a function of deflection, for a fixed pose.

    Negative values mean the plate at that angle would cut into the shell.
    """
    lab = mesh.vertices @ pose_rotation(pose).T + pose.position
    candidates = _contact_candidates(lab, mesh.edges, beam)
    if len(candidates) == 0:
        return lambda theta: float('inf')
    return partial(_clearance, candidates=candidates)


def beam_deflection(pose: Pose, mesh: ShellMesh, beam: Beam, classify: bool = True,
                    lab_vertices: Optional[np.ndarray] = None) -> BeamContact:
    """
    Solve the deflection of one beam for a body pose.

    The clearance root is bracketed by bisection on [0, 89 deg] to 1e-6 rad.
    The body point whose own root lies in that bracket is the active contact,
    and its angle fixes the deflection exactly.

    Args:
        pose: Body pose
        mesh: Shell used for the mechanics (normally the uncropped counterpart)
        beam: Beam parameters
        classify: Run a surface query on ``mesh`` to set ``contact_type``
        lab_vertices: Precomputed lab-frame vertices of ``mesh`` at ``pose``

    Returns:
        BeamContact; ``theta = 0`` and no point when the plate does not touch the body

    Raises:
        InfeasiblePoseError: If the shell still cuts the plate at the deflection cap
    """
    if lab_vertices is None:
        lab_vertices = mesh.vertices @ pose_rotation(pose).T + pose.position
    candidates = _contact_candidates(lab_vertices, mesh.edges, beam)
    if len(candidates) == 0 or candidates.phi.max() <= 0.0:
        return BeamContact(beam=beam.name, theta=0.0)

    if candidates.phi.max() > DEFLECTION_CAP:
        raise InfeasiblePoseError(
            f"Beam {beam.name} cannot clear the shell at {pose.degrees()}: "
            f"needs {math.degrees(candidates.phi.max()):.2f} deg")

    root = bisect(_clearance, 0.0, DEFLECTION_CAP, args=(candidates,), xtol=DEFLECTION_XTOL)
    # Candidates whose own root lies in the final bracket; the last of them to clear binds.
    near = np.flatnonzero(np.abs(candidates.phi - root) <= 2 * DEFLECTION_XTOL)
    if len(near) == 0:
        logger.warning(f"Beam {beam.name}: no contact candidate within {2 * DEFLECTION_XTOL} rad "
                       f"of the bisection root {root:.8f} at {pose.degrees()}; "
                       f"using the largest candidate angle")
        near = np.arange(len(candidates))
    active = int(near[np.argmax(candidates.phi[near])])
    theta = float(candidates.phi[active])

    point = candidates.points[active].copy()
    contact_type = None
    if classify:
        try:
            contact_type = surface_query(mesh, to_body(point, pose)).contact_type
        except NoContactError:
            contact_type = UNCOVERED
    return BeamContact(
        beam=beam.name,
        theta=theta,
        point=point,
        direction=_contact_direction(candidates, active, theta),
        radius=float(candidates.radius[active]),
        feature=_FEATURE_NAMES[int(candidates.feature[active])],
        contact_type=contact_type,
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Gravitational and per-beam elastic energy at one pose (N*mm)."""
    gravity: float
    beams: Tuple[float, ...]
    contacts: Tuple[BeamContact, ...] = field(default=())

    @property
    def total(self) -> float:
        return self.gravity + sum(self.beams)


def gravity_energy(pose: Pose, body: BodyParams) -> float:
    """
    Gravitational potential energy, zero at the reference height with a level body.

    Args:
        pose: Body pose
        body: Inertial parameters

    Returns:
        Energy in N*mm
    """
    tilt = math.cos(pose.alpha) * math.cos(pose.beta) - 1.0
    return body.weight * ((pose.z - body.reference_height) - body.com_offset * tilt)


def gravity_generalized_force(pose: Pose, body: BodyParams) -> np.ndarray:
    """Negative gradient of the gravitational energy over (x, y, z, alpha, beta, gamma)."""
    w, h = body.weight, body.com_offset
    return np.array([
        0.0,
        0.0,
        -w,
        -w * h * math.sin(pose.alpha) * math.cos(pose.beta),
        -w * h * math.cos(pose.alpha) * math.sin(pose.beta),
        0.0,
    ])


def energy_breakdown(pose: Pose, mesh: ShellMesh, beams: Sequence[Beam], body: BodyParams,
                     classify: bool = False) -> EnergyBreakdown:
    """Solve both beams at ``pose`` and split the energy into its terms."""
    lab = mesh.vertices @ pose_rotation(pose).T + pose.position
    contacts = tuple(beam_deflection(pose, mesh, beam, classify=classify, lab_vertices=lab)
                     for beam in beams)
    return EnergyBreakdown(
        gravity=gravity_energy(pose, body),
        beams=tuple(beam.energy(c.theta) for beam, c in zip(beams, contacts)),
        contacts=contacts,
    )


def potential_energy(pose: Pose, mesh: ShellMesh, beams: Sequence[Beam], body: BodyParams) -> float:
    """
    Total potential energy at a pose.

    Raises:
        InfeasiblePoseError: If either beam cannot clear the shell
    """
    return energy_breakdown(pose, mesh, beams, body).total


@dataclass(frozen=True)
class GradientResult:
    """Central-difference gradient with flags for axes that fell back to one-sided differences."""
    values: np.ndarray
    axes: Tuple[str, ...]
    one_sided: Tuple[bool, ...]

    def __getitem__(self, axis: str) -> float:
        return float(self.values[self.axes.index(axis)])

    @property
    def any_one_sided(self) -> bool:
        return any(self.one_sided)


def _feasible_energy(pose: Pose, mesh: ShellMesh, beams: Sequence[Beam],
                     body: BodyParams) -> Optional[float]:
    try:
        return potential_energy(pose, mesh, beams, body)
    except InfeasiblePoseError:
        return None


def axis_derivative(energy: Callable[[float], Optional[float]], centre: float,
                    step: float) -> Tuple[Optional[float], bool]:
    """
    Derivative at offset 0 of a one-dimensional energy profile.

    Forward and backward differences that disagree by more than half their
    combined size are compared again at half the step. A disagreement that
    shrinks means a smooth profile and the half-step central difference is
    used. One that grows means the deflection root jumps inside the stencil;
    the one-sided difference whose full and half steps agree, which stays on
    the branch of the centre, is used instead.

    Args:
        energy: Energy at an offset along the axis, None where infeasible
        centre: Energy at offset 0
        step: Perturbation

    Returns:
        Tuple of (derivative, one_sided); the derivative is None when both
        perturbations are infeasible
    """
    plus, minus = energy(step), energy(-step)
    if plus is None and minus is None:
        return None, True
    if plus is None:
        return (centre - minus) / step, True
    if minus is None:
        return (plus - centre) / step, True

    forward, backward = (plus - centre) / step, (centre - minus) / step
    mismatch = abs(forward - backward)
    if mismatch <= JUMP_RATIO * (abs(forward) + abs(backward)) + JUMP_FLOOR:
        return (plus - minus) / (2.0 * step), False

    half = 0.5 * step
    plus, minus = energy(half), energy(-half)
    if plus is None or minus is None:
        return min(forward, backward, key=abs), True
    half_forward, half_backward = (plus - centre) / half, (centre - minus) / half
    if abs(half_forward - half_backward) < mismatch:
        return (plus - minus) / step, False
    # The smooth side gives the same slope at both steps.
    if abs(half_forward - forward) <= abs(half_backward - backward):
        return forward, True
    return backward, True


def gradient_central_diff(pose: Pose, mesh: ShellMesh, beams: Sequence[Beam], body: BodyParams,
                          step: float = 1e-4, axes: Sequence[str] = POSE_AXES) -> GradientResult:
    """
    Numerical gradient of the potential energy.

    Central differences are used where the energy is smooth across the
    stencil. Axes with an infeasible neighbour, or with a deflection jump
    inside the stencil, fall back to a one-sided difference and are flagged.

    Args:
        pose: Body pose
        mesh: Shell used for the mechanics
        beams: Beam pair
        body: Inertial parameters
        step: Perturbation (mm for translations, rad for rotations)
        axes: Pose coordinates to differentiate along

    Returns:
        GradientResult in N (translations) and N*mm/rad (rotations)

    Raises:
        InfeasiblePoseError: If the pose, or both perturbed poses along an axis, are infeasible
    """
    centre = potential_energy(pose, mesh, beams, body)
    values = np.zeros(len(axes))
    one_sided = []
    for i, axis in enumerate(axes):
        def energy(offset: float, axis: str = axis) -> Optional[float]:
            return _feasible_energy(pose.perturbed(axis, offset), mesh, beams, body)

        value, flagged = axis_derivative(energy, centre, step)
        if value is None:
            raise InfeasiblePoseError(
                f"Both perturbations along {axis} are infeasible at {pose.degrees()}")
        if flagged:
            logger.warning(f"One-sided difference along {axis} at {pose.degrees()}")
        values[i] = value
        one_sided.append(flagged)
    return GradientResult(values=values, axes=tuple(axes), one_sided=tuple(one_sided))


@dataclass(eq=False)
class LandscapeGrid:
    """
    PE over a regular x-alpha-beta grid.

    Attributes:
        x: x axis (mm)
        alpha: Roll axis (rad)
        beta: Pitch axis (rad)
        pe: PE per node (N*mm), shape (nx, nalpha, nbeta); +inf marks infeasible nodes
        grad: Optional (nx, nalpha, nbeta, 3) gradient in N, N*mm/rad, N*mm/rad
    """
    x: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    pe: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ('x', 'alpha', 'beta'):
            axis = np.asarray(getattr(self, name), dtype=float)
            if axis.ndim != 1 or len(axis) == 0 or np.any(np.diff(axis) <= 0):
                raise InvalidParameterError(f"Grid axis {name} must be strictly increasing")
            setattr(self, name, axis)
        shape = (len(self.x), len(self.alpha), len(self.beta))
        self.pe = np.asarray(self.pe, dtype=float).reshape(shape)
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=float).reshape(shape + (3,))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.pe.shape

    def nodes(self) -> np.ndarray:
        """All nodes as (N, 3) rows of (x mm, alpha rad, beta rad) in C order."""
        mesh = np.meshgrid(self.x, self.alpha, self.beta, indexing='ij')
        return np.stack([m.ravel() for m in mesh], axis=1)

    def same_axes(self, other: 'LandscapeGrid') -> bool:
        return (self.shape == other.shape and np.array_equal(self.x, other.x)
                and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.beta, other.beta))

    def to_frame(self) -> pd.DataFrame:
        nodes = self.nodes()
        df = pd.DataFrame({
            'x_mm': nodes[:, 0],
            'alpha_deg': np.degrees(nodes[:, 1]),
            'beta_deg': np.degrees(nodes[:, 2]),
            'PE_Nmm': self.pe.ravel(),
        })
        if self.grad is not None:
            flat = self.grad.reshape(-1, 3)
            for j, col in enumerate(GRADIENT_COLUMNS):
                df[col] = flat[:, j]
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> 'LandscapeGrid':
        df = df.sort_values(['x_mm', 'alpha_deg', 'beta_deg'], kind='stable')
        x = np.unique(df['x_mm'].to_numpy())
        alpha = np.radians(np.unique(df['alpha_deg'].to_numpy()))
        beta = np.radians(np.unique(df['beta_deg'].to_numpy()))
        pe = df['PE_Nmm'].to_numpy(dtype=float)
        grad = None
        if all(col in df.columns for col in GRADIENT_COLUMNS):
            grad = df[GRADIENT_COLUMNS].to_numpy(dtype=float)
        return cls(x=x, alpha=alpha, beta=beta, pe=pe, grad=grad)

    def slice_at(self, x: float) -> pd.DataFrame:
        """
        Alpha-beta section at one x, linearly interpolated between grid planes.

        Raises:
            InvalidParameterError: If ``x`` lies outside the x axis
        """
        if not self.x[0] <= x <= self.x[-1]:
            raise InvalidParameterError(
                f"x = {x} mm is outside the grid [{self.x[0]}, {self.x[-1]}]")
        hi = int(np.searchsorted(self.x, x, side='left'))
        if self.x[hi] == x:
            plane = self.pe[hi]
        else:
            lo = hi - 1
            w = (x - self.x[lo]) / (self.x[hi] - self.x[lo])
            with np.errstate(invalid='ignore'):
                plane = (1.0 - w) * self.pe[lo] + w * self.pe[hi]
        a, b = np.meshgrid(self.alpha, self.beta, indexing='ij')
        return pd.DataFrame({
            'x_mm': float(x),
            'alpha_deg': np.degrees(a.ravel()),
            'beta_deg': np.degrees(b.ravel()),
            'PE_Nmm': plane.ravel(),
        })


def _model_node(node: Tuple[float, float, float], mesh: ShellMesh, beams: Sequence[Beam],
                body: BodyParams, y: float, z: float, gamma: float, gradients: bool,
                step: float) -> Tuple[float, np.ndarray]:
    x, alpha, beta = node
    pose = Pose(x, y, z, alpha, beta, gamma)
    try:
        pe = potential_energy(pose, mesh, beams, body)
    except InfeasiblePoseError:
        return float('inf'), np.full(3, np.nan)
    grad = np.full(3, np.nan)
    if gradients:
        try:
            grad = gradient_central_diff(pose, mesh, beams, body, step=step,
                                         axes=('x', 'alpha', 'beta')).values
        except InfeasiblePoseError:
            pass
    return pe, grad


def _map_nodes(func: Callable, nodes: np.ndarray, workers: int, desc: str) -> List:
    items = [tuple(row) for row in nodes]
    if workers > 1:
        chunksize = max(1, len(items) // (workers * 8))
        return process_map(func, items, max_workers=workers, chunksize=chunksize,
                           desc=desc, disable=None)
    return [func(item) for item in tqdm(items, desc=desc, unit='node', disable=None)]


def landscape_grid(x_axis: Sequence[float], alpha_axis: Sequence[float], beta_axis: Sequence[float],
                   mesh: ShellMesh, beams: Sequence[Beam], body: BodyParams,
                   y: float = -6.0, z: float = 138.0, gamma: float = 0.0,
                   gradients: bool = False, step: float = 1e-4, workers: int = 1) -> LandscapeGrid:
    """
    Evaluate the model landscape on a grid.

    Args:
        x_axis: x values (mm)
        alpha_axis: Roll values (rad)
        beta_axis: Pitch values (rad)
        mesh: Shell used for the mechanics
        beams: Beam pair
        body: Inertial parameters
        y, z, gamma: Fixed pose coordinates
        gradients: Also evaluate central-difference gradients along x, alpha, beta
        step: Finite-difference step
        workers: Worker processes (1 evaluates in-process)

    Returns:
        LandscapeGrid; infeasible nodes hold +inf PE and NaN gradients
    """
    grid = LandscapeGrid(x=x_axis, alpha=alpha_axis, beta=beta_axis, pe=np.zeros(
        (len(x_axis), len(alpha_axis), len(beta_axis))))
    func = partial(_model_node, mesh=mesh, beams=tuple(beams), body=body, y=y, z=z,
                   gamma=gamma, gradients=gradients, step=step)
    results = _map_nodes(func, grid.nodes(), workers, 'Model landscape')
    grid.pe = np.array([r[0] for r in results]).reshape(grid.shape)
    if gradients:
        grid.grad = np.array([r[1] for r in results]).reshape(grid.shape + (3,))
    infeasible = int(np.isinf(grid.pe).sum())
    if infeasible:
        logger.warning(f"{infeasible} of {grid.pe.size} landscape nodes are infeasible")
    return grid


#
# Rigid-geometry baseline
#

def _section_points(lab_vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """(y, z) points where shell edges cross the plane x = 0."""
    xa = lab_vertices[edges[:, 0], 0]
    xb = lab_vertices[edges[:, 1], 0]
    points = [lab_vertices[np.abs(lab_vertices[:, 0]) == 0.0][:, [1, 2]]]
    crossing = xa * xb < 0
    if crossing.any():
        pa = lab_vertices[edges[crossing, 0]]
        pb = lab_vertices[edges[crossing, 1]]
        s = -pa[:, 0] / (pb[:, 0] - pa[:, 0])
        p = pa + (pb - pa) * s[:, None]
        points.append(p[:, [1, 2]])
    return np.concatenate(points)


def _convex_polygon(points: np.ndarray) -> np.ndarray:
    if len(points) < 3:
        return points
    try:
        hull = ConvexHull(points)
    except QhullError:
        return points[[np.argmin(points[:, 0]), np.argmax(points[:, 0])]]
    return points[hull.vertices]


def _clip_half_plane(polygon: np.ndarray, y_limit: float, keep_above: bool) -> np.ndarray:
    # Sutherland-Hodgman against y >= y_limit (or y <= y_limit).
    if len(polygon) == 0:
        return polygon
    sign = 1.0 if keep_above else -1.0
    out = []
    n = len(polygon)
    for i in range(n):
        cur, nxt = polygon[i], polygon[(i + 1) % n]
        cur_in = sign * (cur[0] - y_limit) >= 0
        nxt_in = sign * (nxt[0] - y_limit) >= 0
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (y_limit - cur[0]) / (nxt[0] - cur[0])
            out.append(cur + t * (nxt - cur))
    return np.array(out).reshape(-1, 2)


def _strip_floor(polygon: np.ndarray, beam: Beam) -> Optional[float]:
    """Lowest z of the section inside the beam strip, or None if they do not overlap."""
    y0, y1 = beam.y_range
    clipped = _clip_half_plane(_clip_half_plane(polygon, y0, True), y1, False)
    if len(clipped) == 0:
        return None
    return float(clipped[:, 1].min())


def rigid_lift(pose: Pose, mesh: ShellMesh, beams: Sequence[Beam],
               search_range: Tuple[float, float] = (0.0, 300.0), tolerance: float = 0.1) -> float:
    """
    Smallest upward shift that keeps the body off rigid vertical plates.

    Args:
        pose: Body pose
        mesh: Shell used for the mechanics
        beams: Beam pair (held at zero deflection)
        search_range: Lift interval searched (mm)
        tolerance: Bisection tolerance (mm)

    Returns:
        Lift in mm, or +inf when no lift in range clears the plates
    """
    lab = mesh.vertices @ pose_rotation(pose).T + pose.position
    polygon = _convex_polygon(_section_points(lab, mesh.edges))
    floors = [(f, beam.height) for beam in beams
              for f in [_strip_floor(polygon, beam)] if f is not None]

    def collides(dz: float) -> bool:
        return any(floor + dz < top for floor, top in floors)

    lo, hi = search_range
    if not collides(lo):
        return float(lo)
    if collides(hi):
        return float('inf')
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if collides(mid):
            lo = mid
        else:
            hi = mid
    return float(hi)


def rigid_geometry_landscape(x: float, alpha: float, beta: float, mesh: ShellMesh,
                             beams: Sequence[Beam], body: BodyParams, y: float = -6.0,
                             z: float = 138.0, gamma: float = 0.0,
                             search_range: Tuple[float, float] = (0.0, 300.0),
                             tolerance: float = 0.1) -> float:
    """
    PE when the beams are rigid and the body rises to pass over them.

    Returns:
        Gravitational PE at the lifted height (N*mm), +inf if no lift in range works
    """
    pose = Pose(x, y, z, alpha, beta, gamma)
    lift = rigid_lift(pose, mesh, beams, search_range, tolerance)
    if math.isinf(lift):
        return float('inf')
    return gravity_energy(replace(pose, z=z + lift), body)


def _rigid_node(node: Tuple[float, float, float], mesh: ShellMesh, beams: Sequence[Beam],
                body: BodyParams, y: float, z: float, gamma: float,
                search_range: Tuple[float, float], tolerance: float) -> float:
    x, alpha, beta = node
    return rigid_geometry_landscape(x, alpha, beta, mesh, beams, body, y, z, gamma,
                                    search_range, tolerance)


def rigid_landscape_grid(x_axis: Sequence[float], alpha_axis: Sequence[float],
                         beta_axis: Sequence[float], mesh: ShellMesh, beams: Sequence[Beam],
                         body: BodyParams, y: float = -6.0, z: float = 138.0, gamma: float = 0.0,
                         search_range: Tuple[float, float] = (0.0, 300.0), tolerance: float = 0.1,
                         workers: int = 1) -> LandscapeGrid:
    """Rigid-geometry landscape on the same grid layout as :func:`landscape_grid`."""
    grid = LandscapeGrid(x=x_axis, alpha=alpha_axis, beta=beta_axis, pe=np.zeros(
        (len(x_axis), len(alpha_axis), len(beta_axis))))
    func = partial(_rigid_node, mesh=mesh, beams=tuple(beams), body=body, y=y, z=z, gamma=gamma,
                   search_range=search_range, tolerance=tolerance)
    values = _map_nodes(func, grid.nodes(), workers, 'Rigid landscape')
    grid.pe = np.array(values).reshape(grid.shape)
    return grid


def protocol_axes(x_range: Tuple[float, float] = (-100.0, 100.0), x_step: float = 5.0,
                  alpha_range_deg: Tuple[float, float] = (0.0, 40.0), alpha_step_deg: float = 2.5,
                  beta_range_deg: Tuple[float, float] = (-40.0, -10.0),
                  beta_step_deg: float = 2.5) -> Dict[str, np.ndarray]:
    """Inclusive grid axes (x in mm, angles in rad) from ranges and steps."""
    def inclusive(lo, hi, step):
        n = int(round((hi - lo) / step))
        return lo + step * np.arange(n + 1)

    return {
        'x': inclusive(*x_range, x_step),
        'alpha': np.radians(inclusive(*alpha_range_deg, alpha_step_deg)),
        'beta': np.radians(inclusive(*beta_range_deg, beta_step_deg)),
    }

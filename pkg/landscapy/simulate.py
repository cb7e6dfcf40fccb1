"""
Quasi-static traverse simulator.

The body is driven forward at constant speed with prescribed roll and pitch
while the beams rest on it; every sample emits the contact force of each
beam as a sensor on the shell would report it.
"""
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from .exceptions import (IllConditionedContactError, InfeasiblePoseError, InvalidParameterError,
                         NoContactError, TrialAbortedError)
from .geometry import EDGE, BodyParams, Pose, ShellMesh, pose_rotation, surface_query
from .landscape import (UNCOVERED, Beam, BeamContact, beam_deflection, gradient_central_diff,
                        gravity_energy, gravity_generalized_force)
from .utils import read_frame, read_json, write_frame, write_json

logger = logging.getLogger(__name__)

ARM_FLOOR = 1.0
VELOCITY_FLOOR = 1e-6
NO_CONTACT = 'none'
ILL_CONDITIONED = 'ill_conditioned'

_Y_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class TrialConfig:
    """
    One prescribed-orientation traverse.

    Angles are in degrees, lengths in mm, ``f`` and ``sample_rate`` in Hz.
    The wobble fields add a sinusoidal roll/pitch perturbation (off by default).
    """
    alpha_deg: float = 0.0
    beta_deg: float = -20.0
    f: float = 0.0
    mu: float = 0.3
    noise: bool = True
    seed: int = 0
    speed: float = 20.0
    travel: float = 500.0
    start_x: float = -200.0
    y: float = -6.0
    z: float = 138.0
    gamma_deg: float = 0.0
    sample_rate: float = 50.0
    noise_sigma: float = 0.004
    head_amplitude_deg: float = 20.0
    head_pivot_x: float = -40.0
    wobble_roll_deg: float = 0.0
    wobble_pitch_deg: float = 0.0
    wobble_frequency: float = 0.2
    reference_gradient: bool = True
    gradient_step: float = 1e-4
    repetition: int = 0
    index: int = 0

    def __post_init__(self):
        if not self.speed > 0:
            raise InvalidParameterError(f"speed must be > 0, got {self.speed}")
        if not self.f >= 0:
            raise InvalidParameterError(f"f must be >= 0, got {self.f}")
        if not 0 <= self.mu < 1.5:
            raise InvalidParameterError(f"mu must lie in [0, 1.5), got {self.mu}")
        if not (self.travel > 0 and self.sample_rate > 0 and self.noise_sigma >= 0):
            raise InvalidParameterError("travel and sample_rate must be > 0, noise_sigma >= 0")
        if not 0 <= self.wobble_roll_deg <= 10 or not 0 <= self.wobble_pitch_deg <= 5:
            raise InvalidParameterError(
                "wobble amplitudes must stay within 10 deg roll and 5 deg pitch")

    @property
    def n_samples(self) -> int:
        return int(round(self.travel / self.speed * self.sample_rate)) + 1

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrialConfig':
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def head_angle(t: float, f: float, phase: float = 0.0,
               amplitude: float = math.radians(20.0)) -> Tuple[float, float]:
    """
    Head flexion and its rate.

    Args:
        t: Time (s)
        f: Oscillation frequency (Hz); 0 keeps the head aligned with the body
        phase: Phase offset (rad)
        amplitude: Peak-to-peak head angle (rad)

    Returns:
        Tuple of (angle rad, rate rad/s); the angle stays within [0, amplitude]
    """
    if f == 0:
        return 0.0, 0.0
    omega = 2.0 * math.pi * f
    arg = omega * t + phase
    return 0.5 * amplitude * (1.0 - math.cos(arg)), 0.5 * amplitude * omega * math.sin(arg)


def head_frequency_from_phases(amplitudes_deg: Sequence[float],
                               angular_velocities_deg_s: Sequence[float]) -> float:
    """
    Oscillation frequency from the amplitude and mean angular speed of each phase of a cycle.

    One cycle lasts the sum over phases of amplitude / angular speed.
    """
    period = sum(a / w for a, w in zip(amplitudes_deg, angular_velocities_deg_s))
    return 1.0 / period


def matched_head_frequency(reference_frequency: float, reference_duration: float,
                           traverse_duration: float) -> float:
    """Frequency giving the same number of head cycles over a traverse of a different duration."""
    return reference_frequency * reference_duration / traverse_duration


@dataclass(frozen=True, eq=False)
class ContactKinematics:
    """
    Velocities at a contact point, lab frame.

    Attributes:
        body_velocity: Velocity of the shell material point from body motion (mm/s)
        head_rate: Head flexion rate applied to the point (rad/s), 0 off the head
        head_axis: Lab direction of the head flexion axis
        head_pivot: Lab position of the head pivot
        beam_rate: Deflection rate of the beam (rad/s)
    """
    body_velocity: np.ndarray
    head_rate: float = 0.0
    head_axis: np.ndarray = field(default_factory=lambda: _Y_AXIS.copy())
    head_pivot: Optional[np.ndarray] = None
    beam_rate: float = 0.0

    def surface_velocity(self, point: np.ndarray) -> np.ndarray:
        velocity = np.asarray(self.body_velocity, dtype=float)
        if self.head_rate and self.head_pivot is not None:
            velocity = velocity + self.head_rate * np.cross(self.head_axis, point - self.head_pivot)
        return velocity

    def beam_velocity(self, point: np.ndarray) -> np.ndarray:
        # Hinge axis is the lab y-axis through the origin.
        return self.beam_rate * np.cross(_Y_AXIS, point)


@dataclass(frozen=True, eq=False)
class ContactWrench:
    """Force of one beam on the body and its split into normal and friction parts."""
    force: np.ndarray
    normal_force: np.ndarray
    friction: np.ndarray
    normal: np.ndarray
    magnitude: float
    moment_arm: float
    relative_velocity: np.ndarray


def contact_wrench(contact: BeamContact, beam: Beam, kinematics: ContactKinematics,
                   mu: float, arm_floor: float = ARM_FLOOR) -> ContactWrench:
    """
    Contact force from the massless-beam torque balance plus Coulomb friction.

    Args:
        contact: Solved deflection state (must be in contact)
        beam: Beam parameters
        kinematics: Velocities at the contact point
        mu: Friction coefficient
        arm_floor: Smallest accepted moment arm (mm)

    Returns:
        ContactWrench with the force acting on the body

    Raises:
        NoContactError: If the beam is not touching the body
        IllConditionedContactError: If the moment arm is below ``arm_floor``
    """
    if not contact.in_contact:
        raise NoContactError(f"Beam {contact.beam} is not in contact")
    arm = contact.moment_arm
    if arm < arm_floor:
        raise IllConditionedContactError(
            f"Beam {contact.beam}: moment arm {arm:.4f} mm is below {arm_floor} mm")
    magnitude = beam.restoring_torque(contact.theta) / arm
    normal = contact.normal
    normal_force = -magnitude * normal

    v_rel = kinematics.surface_velocity(contact.point) - kinematics.beam_velocity(contact.point)
    v_t = v_rel - (v_rel @ normal) * normal
    speed = float(np.linalg.norm(v_t))
    if mu > 0 and speed >= VELOCITY_FLOOR:
        friction = -mu * magnitude * v_t / speed
    else:
        friction = np.zeros(3)
    return ContactWrench(
        force=normal_force + friction,
        normal_force=normal_force,
        friction=friction,
        normal=normal,
        magnitude=magnitude,
        moment_arm=arm,
        relative_velocity=v_rel,
    )


#
# Record layout
#

BEAM_NAMES = ('L', 'R')


def beam_columns(name: str) -> List[str]:
    """Per-beam record columns."""
    return [
        f'Fx_{name}_N', f'Fy_{name}_N', f'Fz_{name}_N',
        f'px_{name}_mm', f'py_{name}_mm', f'pz_{name}_mm',
        f'nx_{name}', f'ny_{name}', f'nz_{name}',
        f'contact_type_{name}',
        f'N_{name}_N',
        f'T_alpha_{name}_Nmm', f'T_beta_{name}_Nmm', f'T_gamma_{name}_Nmm',
        f'F_x_normal_{name}_N',
        f'T_alpha_normal_{name}_Nmm', f'T_beta_normal_{name}_Nmm', f'T_gamma_normal_{name}_Nmm',
    ]


BASE_COLUMNS = ['t_s', 'x_mm', 'y_mm', 'z_mm', 'alpha_deg', 'beta_deg', 'gamma_deg', 'head_deg',
                'theta_L_deg', 'theta_R_deg']
TOTAL_COLUMNS = ['F_x_N', 'T_alpha_Nmm', 'T_beta_Nmm', 'T_gamma_Nmm',
                 'F_x_normal_N', 'T_alpha_normal_Nmm', 'T_beta_normal_Nmm', 'T_gamma_normal_Nmm']
GRAVITY_COLUMNS = ['G_x_N', 'G_alpha_Nmm', 'G_beta_Nmm']
REFERENCE_COLUMNS = ['PE_Nmm', 'dPE_dx_N', 'dPE_dalpha_Nmm', 'dPE_dbeta_Nmm', 'gradient_one_sided']

RECORD_COLUMNS = (BASE_COLUMNS + [c for b in BEAM_NAMES for c in beam_columns(b)]
                  + TOTAL_COLUMNS + GRAVITY_COLUMNS + REFERENCE_COLUMNS)


def force_channels(source: str, beam: Optional[str] = None) -> Tuple[str, str, str]:
    """
    Column names of (F_x, T_alpha, T_beta) for a force source.

    Args:
        source: ``'raw'`` or ``'normal'``
        beam: Restrict to one beam (``'L'`` or ``'R'``); totals when None
    """
    if source not in ('raw', 'normal'):
        raise InvalidParameterError(f"Unknown force source '{source}'")
    if beam is None:
        if source == 'raw':
            return 'F_x_N', 'T_alpha_Nmm', 'T_beta_Nmm'
        return 'F_x_normal_N', 'T_alpha_normal_Nmm', 'T_beta_normal_Nmm'
    if source == 'raw':
        return f'Fx_{beam}_N', f'T_alpha_{beam}_Nmm', f'T_beta_{beam}_Nmm'
    return f'F_x_normal_{beam}_N', f'T_alpha_normal_{beam}_Nmm', f'T_beta_normal_{beam}_Nmm'


# Channels smoothed before averaging.
FILTERED_CHANNELS = ([c for b in BEAM_NAMES for c in (
    f'Fx_{b}_N', f'Fy_{b}_N', f'Fz_{b}_N', f'N_{b}_N',
    f'T_alpha_{b}_Nmm', f'T_beta_{b}_Nmm', f'T_gamma_{b}_Nmm',
    f'F_x_normal_{b}_N', f'T_alpha_normal_{b}_Nmm', f'T_beta_normal_{b}_Nmm',
    f'T_gamma_normal_{b}_Nmm')] + TOTAL_COLUMNS)


@dataclass(eq=False)
class TrialRecord:
    """Time series of one traverse plus the configuration that produced it."""
    frame: pd.DataFrame
    config: TrialConfig
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def nominal(self) -> Tuple[float, float, float]:
        return self.config.alpha_deg, self.config.beta_deg, self.config.f

    def save(self, csv_path: Union[str, Path]) -> Path:
        """Write the CSV and its JSON sidecar (same stem)."""
        csv_path = Path(csv_path)
        write_frame(self.frame, csv_path)
        write_json({'config': self.config.to_dict(), 'metadata': self.metadata},
                   csv_path.with_suffix('.json'))
        return csv_path

    @classmethod
    def load(cls, csv_path: Union[str, Path]) -> 'TrialRecord':
        csv_path = Path(csv_path)
        sidecar = read_json(csv_path.with_suffix('.json'))
        frame = read_frame(csv_path)
        for name in BEAM_NAMES:
            col = f'contact_type_{name}'
            if col in frame.columns:
                frame[col] = frame[col].fillna(NO_CONTACT).astype(str)
        return cls(frame=frame, config=TrialConfig.from_dict(sidecar['config']),
                   metadata=sidecar.get('metadata', {}))


def _empty_beam_row(name: str, row: Dict[str, Any]) -> None:
    for col in beam_columns(name):
        row[col] = 0.0
    for col in (f'px_{name}_mm', f'py_{name}_mm', f'pz_{name}_mm',
                f'nx_{name}', f'ny_{name}', f'nz_{name}'):
        row[col] = np.nan
    row[f'contact_type_{name}'] = NO_CONTACT


def run_trial(config: TrialConfig, mesh: ShellMesh, counterpart: ShellMesh,
              beams: Sequence[Beam], body: BodyParams) -> TrialRecord:
    """
    Simulate one traverse.

    Args:
        config: Trial configuration
        mesh: Sensed (cropped) shell
        counterpart: Uncropped shell used for the mechanics
        beams: Beam pair, named ``'L'`` and ``'R'``
        body: Inertial parameters

    Returns:
        TrialRecord with one row per sample

    Raises:
        TrialAbortedError: If a pose along the traverse is infeasible
    """
    rng = np.random.default_rng(config.seed)
    head_phase = float(rng.uniform(0.0, 2.0 * math.pi))
    wobble_phase = rng.uniform(0.0, 2.0 * math.pi, size=2)
    amplitude = math.radians(config.head_amplitude_deg)
    sections = {s.id: s for s in mesh.edge_sections}
    dt = config.dt

    rows = []
    prev_theta = {beam.name: 0.0 for beam in beams}
    prev_pose: Optional[Pose] = None
    prev_rot: Optional[np.ndarray] = None
    counts = {UNCOVERED: 0, EDGE: 0, ILL_CONDITIONED: 0}

    for i in range(config.n_samples):
        t = i * dt
        wobble = 2.0 * math.pi * config.wobble_frequency * t
        pose = Pose(
            x=config.start_x + config.speed * t,
            y=config.y,
            z=config.z,
            alpha=math.radians(config.alpha_deg
                               + config.wobble_roll_deg * math.sin(wobble + wobble_phase[0])),
            beta=math.radians(config.beta_deg
                              + config.wobble_pitch_deg * math.sin(wobble + wobble_phase[1])),
            gamma=math.radians(config.gamma_deg),
        )
        rot = pose_rotation(pose)
        pos = pose.position
        lab = counterpart.vertices @ rot.T + pos
        delta, delta_rate = head_angle(t, config.f, head_phase, amplitude)

        try:
            contacts = [beam_deflection(pose, counterpart, beam, classify=False, lab_vertices=lab)
                        for beam in beams]
        except InfeasiblePoseError as e:
            logger.error(f"Trial {config.index} aborted at t = {t:.2f} s: {e}")
            raise TrialAbortedError(f"Trial {config.index} aborted at x = {pose.x:.1f} mm: {e}",
                                    time=t, x=pose.x) from e

        row: Dict[str, Any] = {'t_s': t, **pose.degrees(), 'head_deg': math.degrees(delta)}
        totals = np.zeros(len(TOTAL_COLUMNS))
        for beam, contact in zip(beams, contacts):
            name = beam.name
            row[f'theta_{name}_deg'] = math.degrees(contact.theta)
            beam_rate = (contact.theta - prev_theta[name]) / dt if i > 0 else 0.0
            prev_theta[name] = contact.theta
            _empty_beam_row(name, row)
            if not contact.in_contact:
                continue

            body_point = (contact.point - pos) @ rot
            if prev_pose is None:
                body_velocity = np.array([config.speed, 0.0, 0.0])
            else:
                body_velocity = (contact.point - (prev_rot @ body_point + prev_pose.position)) / dt
            on_head = body_point[0] >= config.head_pivot_x
            kinematics = ContactKinematics(
                body_velocity=body_velocity,
                head_rate=delta_rate if on_head else 0.0,
                head_axis=rot[:, 1],
                head_pivot=pos + rot @ np.array([config.head_pivot_x, 0.0, 0.0]),
                beam_rate=beam_rate,
            )
            try:
                wrench = contact_wrench(contact, beam, kinematics, config.mu)
            except IllConditionedContactError as e:
                logger.warning(f"Trial {config.index}, t = {t:.2f} s: {e}")
                counts[ILL_CONDITIONED] += 1
                row[f'contact_type_{name}'] = ILL_CONDITIONED
                continue

            try:
                hit = surface_query(mesh, body_point)
            except NoContactError:
                hit = None
            if hit is None:
                contact_type = UNCOVERED
                reported_point, reported_normal = contact.point, wrench.normal
            else:
                contact_type = hit.contact_type
                if config.noise:
                    if contact_type == EDGE and hit.section in sections:
                        center = sections[hit.section].center
                    else:
                        center = mesh.cells[hit.cell].center
                    reported_point = pos + rot @ center
                    reported_normal = rot @ hit.normal
                else:
                    reported_point, reported_normal = contact.point, wrench.normal
            if contact_type in counts:
                counts[contact_type] += 1

            force = wrench.force
            if config.noise and config.noise_sigma > 0:
                force = force + rng.normal(0.0, config.noise_sigma, size=3)
            normal_force = (force @ reported_normal) * reported_normal
            arm = reported_point - pos
            torque = np.cross(arm, force)
            torque_n = np.cross(arm, normal_force)

            values = [
                force[0], torque @ rot[:, 0], torque @ rot[:, 1], torque @ rot[:, 2],
                normal_force[0], torque_n @ rot[:, 0], torque_n @ rot[:, 1], torque_n @ rot[:, 2],
            ]
            totals += values
            row.update({
                f'Fx_{name}_N': force[0], f'Fy_{name}_N': force[1], f'Fz_{name}_N': force[2],
                f'px_{name}_mm': reported_point[0], f'py_{name}_mm': reported_point[1],
                f'pz_{name}_mm': reported_point[2],
                f'nx_{name}': reported_normal[0], f'ny_{name}': reported_normal[1],
                f'nz_{name}': reported_normal[2],
                f'contact_type_{name}': contact_type,
                f'N_{name}_N': float(force @ reported_normal),
                f'T_alpha_{name}_Nmm': values[1], f'T_beta_{name}_Nmm': values[2],
                f'T_gamma_{name}_Nmm': values[3],
                f'F_x_normal_{name}_N': values[4],
                f'T_alpha_normal_{name}_Nmm': values[5], f'T_beta_normal_{name}_Nmm': values[6],
                f'T_gamma_normal_{name}_Nmm': values[7],
            })

        row.update(dict(zip(TOTAL_COLUMNS, totals)))
        gravity = gravity_generalized_force(pose, body)
        row.update({'G_x_N': gravity[0], 'G_alpha_Nmm': gravity[3], 'G_beta_Nmm': gravity[4]})

        if config.reference_gradient:
            pe = (sum(beam.energy(c.theta) for beam, c in zip(beams, contacts))
                  + gravity_energy(pose, body))
            try:
                grad = gradient_central_diff(pose, counterpart, beams, body,
                                             step=config.gradient_step,
                                             axes=('x', 'alpha', 'beta'))
                row.update({'PE_Nmm': pe, 'dPE_dx_N': grad['x'], 'dPE_dalpha_Nmm': grad['alpha'],
                            'dPE_dbeta_Nmm': grad['beta'],
                            'gradient_one_sided': grad.any_one_sided})
            except InfeasiblePoseError:
                row.update({'PE_Nmm': pe, 'dPE_dx_N': np.nan, 'dPE_dalpha_Nmm': np.nan,
                            'dPE_dbeta_Nmm': np.nan, 'gradient_one_sided': True})
        rows.append(row)
        prev_pose, prev_rot = pose, rot

    frame = pd.DataFrame(rows)
    frame = frame[[c for c in RECORD_COLUMNS if c in frame.columns]]
    metadata = {
        'head_phase_rad': head_phase,
        'uncovered_samples': counts[UNCOVERED],
        'edge_samples': counts[EDGE],
        'ill_conditioned_samples': counts[ILL_CONDITIONED],
    }
    if counts[UNCOVERED]:
        logger.debug(f"Trial {config.index}: {counts[UNCOVERED]} contacts off the sensed shell")
    return TrialRecord(frame=frame, config=config, metadata=metadata)


def tangential_force_summary(record: TrialRecord) -> float:
    """
    Magnitude of the time-averaged tangential (friction) force over the in-contact samples.

    Uses the reported normals, so it is exact for noise-free records.
    """
    frame = record.frame
    total = np.zeros(3)
    count = 0
    for name in BEAM_NAMES:
        in_contact = frame[f'N_{name}_N'] != 0
        if not in_contact.any():
            continue
        force = frame.loc[in_contact, [f'Fx_{name}_N', f'Fy_{name}_N', f'Fz_{name}_N']].to_numpy()
        normal = frame.loc[in_contact, [f'nx_{name}', f'ny_{name}', f'nz_{name}']].to_numpy()
        tangential = force - np.einsum('ij,ij->i', force, normal)[:, None] * normal
        total += tangential.sum(axis=0)
        count += len(force)
    if count == 0:
        return 0.0
    return float(np.linalg.norm(total / count))


#
# Sweeps
#

def derive_seed(master_seed: int, index: int) -> int:
    """Deterministic per-trial seed from the master seed and the trial index."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class SweepPlan:
    """
    Grid of traverses.

    Every (alpha, beta, f) combination is repeated ``repetitions`` times;
    ``trial_overrides`` sets any other TrialConfig field for all trials.
    """
    alphas_deg: Tuple[float, ...] = tuple(float(a) for a in range(0, 45, 5))
    betas_deg: Tuple[float, ...] = tuple(float(b) for b in range(-10, -45, -5))
    frequencies: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    repetitions: int = 5
    mu: float = 0.3
    noise: bool = True
    master_seed: int = 0
    trial_overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise InvalidParameterError("repetitions must be >= 1")
        if not (self.alphas_deg and self.betas_deg and self.frequencies):
            raise InvalidParameterError("Sweep plan axes must be non-empty")

    @property
    def size(self) -> int:
        return len(self.alphas_deg) * len(self.betas_deg) * len(self.frequencies) * self.repetitions

    def trials(self) -> List[TrialConfig]:
        configs = []
        combos = itertools.product(self.alphas_deg, self.betas_deg, self.frequencies,
                                   range(self.repetitions))
        for index, (alpha, beta, f, rep) in enumerate(combos):
            configs.append(TrialConfig(**{
                **self.trial_overrides,
                'alpha_deg': float(alpha), 'beta_deg': float(beta), 'f': float(f),
                'mu': self.mu, 'noise': self.noise, 'repetition': rep, 'index': index,
                'seed': derive_seed(self.master_seed, index),
            }))
        return configs


@dataclass(eq=False)
class SweepResult:
    """Completed records plus the trials that aborted, with their diagnostics."""
    records: List[TrialRecord]
    aborted: List[Tuple[TrialConfig, str]] = field(default_factory=list)


def _sweep_worker(config: TrialConfig, mesh: ShellMesh, counterpart: ShellMesh,
                  beams: Tuple[Beam, ...], body: BodyParams) -> Tuple[TrialConfig, Any]:
    try:
        return config, run_trial(config, mesh, counterpart, beams, body)
    except TrialAbortedError as e:
        return config, str(e)


def sweep(plan: Union[SweepPlan, Sequence[TrialConfig]], mesh: ShellMesh, counterpart: ShellMesh,
          beams: Sequence[Beam], body: BodyParams, workers: int = 1) -> SweepResult:
    """
    Run every trial of a plan; aborted trials are logged and the sweep continues.

    Args:
        plan: SweepPlan or explicit list of trial configurations
        mesh: Sensed shell
        counterpart: Mechanics shell
        beams: Beam pair
        body: Inertial parameters
        workers: Worker processes (1 runs in-process)

    Returns:
        SweepResult with records in plan order
    """
    configs = plan.trials() if isinstance(plan, SweepPlan) else list(plan)
    func = partial(_sweep_worker, mesh=mesh, counterpart=counterpart, beams=tuple(beams), body=body)
    if workers > 1:
        outcomes = process_map(func, configs, max_workers=workers, chunksize=1,
                               desc='Sweep', unit='trial', disable=None)
    else:
        outcomes = [func(c) for c in tqdm(configs, desc='Sweep', unit='trial', disable=None)]

    result = SweepResult(records=[])
    for config, outcome in outcomes:
        if isinstance(outcome, TrialRecord):
            result.records.append(outcome)
        else:
            logger.warning(f"Trial {config.index} (alpha={config.alpha_deg}, "
                           f"beta={config.beta_deg}, f={config.f}) aborted: {outcome}")
            result.aborted.append((config, outcome))
    logger.info(f"Sweep finished: {len(result.records)} records, {len(result.aborted)} aborted")
    return result

"""
Run configuration: a tree of dataclasses stored as one JSON document.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import (Any, Dict, List, Optional, Tuple, Union, get_args, get_origin,
                    get_type_hints)

from .exceptions import InvalidParameterError, LandscapyValidationError
from .geometry import BodyParams, ShellParams
from .landscape import Beam, default_beams, protocol_axes
from .reconstruct import SOURCES
from .simulate import SweepPlan, TrialConfig
from .utils import read_json, write_json

logger = logging.getLogger(__name__)

# Defaults that are modelling choices rather than measured values.
ASSUMPTIONS = {
    'shell.length': 'shell footprint approximated by an ellipsoid',
    'shell.width': 'shell footprint approximated by an ellipsoid',
    'shell.height': 'shell height above the geometric centre',
    'shell.rim_depth': 'rim placed below the geometric centre',
    'shell.head_gap_half_width': 'width of the uncovered head region',
    'shell.rear_crop_x': 'sensed shell ends behind the beam-contactable band',
    'shell.cell_max_snap': 'touch-cell size limit',
    'shell.cell_max_normal_deg': 'touch-cell flatness limit',
    'shell.edge_sections_per_half': 'rim sensor segmentation',
    'beams.width': 'plate width',
    'beams.height': 'plate length from hinge to tip',
    'body.reference_height': 'zero of gravitational energy at the traverse height',
    'simulation.mu': 'friction coefficient not measured',
    'simulation.head_pivot_x': 'head pivot position on the body axis',
    'simulation.mesh_resolution': 'tessellation edge length',
    'simulation.gradient_step': 'central-difference step',
    'reconstruction.sigma': 'kernel width from median centre spacing when null',
    'reconstruction.ridge': 'relative ridge regularisation',
    'evaluation.rigid_search_range': 'lift interval searched for the rigid baseline',
    'evaluation.rigid_tolerance': 'lift search tolerance',
}


@dataclass(frozen=True)
class BeamParams:
    """Torsional spring of one beam."""
    k: float
    tau: float


@dataclass(frozen=True)
class BeamsConfig:
    gap: float = 130.0
    width: float = 30.0
    height: float = 200.0
    left: BeamParams = BeamParams(285.0, 91.0)
    right: BeamParams = BeamParams(324.0, 77.0)

    def build(self) -> Tuple[Beam, Beam]:
        return default_beams(self.gap, self.width, self.height,
                             (self.left.k, self.left.tau), (self.right.k, self.right.tau))


def _inclusive_range(lo: float, hi: float, step: float) -> List[float]:
    n = int(round((hi - lo) / step))
    return [lo + step * i for i in range(n + 1)]


@dataclass(frozen=True)
class SweepParams:
    """Traverse grid; every combination is repeated ``repetitions`` times."""
    alphas_deg: Tuple[float, ...] = tuple(_inclusive_range(0.0, 40.0, 5.0))
    betas_deg: Tuple[float, ...] = tuple(_inclusive_range(-10.0, -40.0, -5.0))
    frequencies: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    repetitions: int = 5


@dataclass(frozen=True)
class SimulationParams:
    mu: float = 0.3
    noise: bool = True
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
    gradient_step: float = 1e-4
    mesh_resolution: float = 2.0

    def trial_overrides(self) -> Dict[str, Any]:
        """Fields passed to every TrialConfig (mu and noise travel through the sweep plan)."""
        names = {f.name for f in dataclasses.fields(TrialConfig)} - {'mu', 'noise'}
        return {k: v for k, v in dataclasses.asdict(self).items() if k in names}


@dataclass(frozen=True)
class FilterParams:
    order: int = 6
    average_x_range: Tuple[float, float] = (-100.0, 200.0)
    average_x_step: float = 1.0
    display_cutoff: float = 1.0


@dataclass(frozen=True)
class ReconstructionParams:
    k: int = 500
    sigma: Optional[float] = None
    ridge: float = 1e-6
    repeats: int = 1
    drop_fraction: float = 0.0
    x_range: Tuple[float, float] = (-100.0, 100.0)
    x_stride: float = 1.0
    ratio: float = 0.01
    sources: Tuple[str, ...] = SOURCES
    chunk_size: int = 256


@dataclass(frozen=True)
class EvaluationGrid:
    """Grid on which landscapes are evaluated and compared."""
    x_range: Tuple[float, float] = (-100.0, 100.0)
    x_step: float = 10.0
    alpha_range_deg: Tuple[float, float] = (0.0, 40.0)
    alpha_step_deg: float = 5.0
    beta_range_deg: Tuple[float, float] = (-40.0, -10.0)
    beta_step_deg: float = 5.0
    rigid: bool = True
    rigid_search_range: Tuple[float, float] = (0.0, 300.0)
    rigid_tolerance: float = 0.1
    slices_x: Tuple[float, ...] = (-88.0, -48.0, -8.0)

    def axes(self) -> Dict[str, Any]:
        return protocol_axes(self.x_range, self.x_step, self.alpha_range_deg, self.alpha_step_deg,
                             self.beta_range_deg, self.beta_step_deg)


@dataclass(frozen=True)
class RunConfig:
    """
    Complete configuration of a pipeline run.

    Defaults reproduce the desk-scale preset; see :meth:`full` for the complete protocol.
    """
    shell: ShellParams = ShellParams()
    beams: BeamsConfig = BeamsConfig()
    body: BodyParams = BodyParams()
    sweep: SweepParams = SweepParams(repetitions=1)
    simulation: SimulationParams = SimulationParams()
    filter: FilterParams = FilterParams()
    reconstruction: ReconstructionParams = ReconstructionParams()
    evaluation: EvaluationGrid = EvaluationGrid()
    seed: int = 0
    workers: int = 1
    assumptions: Dict[str, str] = field(default_factory=lambda: dict(ASSUMPTIONS), compare=False)

    #
    # Presets
    #

    @classmethod
    def desk(cls) -> 'RunConfig':
        """k = 500 centres, one repetition, 10 mm x 5 deg evaluation grid."""
        return cls()

    @classmethod
    def full(cls) -> 'RunConfig':
        """k = 2000 centres, five repetitions, 5 mm x 2.5 deg evaluation grid."""
        return cls(
            sweep=SweepParams(repetitions=5),
            reconstruction=ReconstructionParams(k=2000, repeats=5),
            evaluation=EvaluationGrid(x_step=5.0, alpha_step_deg=2.5, beta_step_deg=2.5),
        )

    @classmethod
    def preset(cls, name: str) -> 'RunConfig':
        presets = {'desk': cls.desk, 'full': cls.full}
        if name not in presets:
            raise LandscapyValidationError(
                f"preset: unknown preset '{name}' (expected desk or full)")
        return presets[name]()

    #
    # Derived objects
    #

    def sweep_plan(self, seed: Optional[int] = None) -> SweepPlan:
        return SweepPlan(
            alphas_deg=tuple(self.sweep.alphas_deg),
            betas_deg=tuple(self.sweep.betas_deg),
            frequencies=tuple(self.sweep.frequencies),
            repetitions=self.sweep.repetitions,
            mu=self.simulation.mu,
            noise=self.simulation.noise,
            master_seed=self.seed if seed is None else seed,
            trial_overrides=self.simulation.trial_overrides(),
        )

    #
    # Validation
    #

    def validate(self) -> 'RunConfig':
        """
        Check every field.

        Returns:
            self, for chaining

        Raises:
            LandscapyValidationError: Message starts with the dotted path of the offending field
        """
        try:
            self.shell.validate()
        except InvalidParameterError as e:
            raise LandscapyValidationError(f"shell: {e}") from e

        for side in ('left', 'right'):
            beam = getattr(self.beams, side)
            _check(beam.k > 0, f"beams.{side}.k", "must be > 0")
            _check(beam.tau >= 0, f"beams.{side}.tau", "must be >= 0")
        _check(self.beams.gap > 0, 'beams.gap', "must be > 0")
        _check(self.beams.width > 0, 'beams.width', "must be > 0")
        _check(self.beams.height > 0, 'beams.height', "must be > 0")

        sweep = self.sweep
        for name in ('alphas_deg', 'betas_deg', 'frequencies'):
            _check(len(getattr(sweep, name)) > 0, f"sweep.{name}", "must not be empty")
        _check(all(f >= 0 for f in sweep.frequencies), 'sweep.frequencies', "must be >= 0")
        _check(sweep.repetitions >= 1, 'sweep.repetitions', "must be >= 1")

        sim = self.simulation
        _check(sim.speed > 0, 'simulation.speed', "must be > 0")
        _check(0 <= sim.mu < 1.5, 'simulation.mu', "must lie in [0, 1.5)")
        _check(sim.travel > 0, 'simulation.travel', "must be > 0")
        _check(sim.sample_rate > 0, 'simulation.sample_rate', "must be > 0")
        _check(sim.noise_sigma >= 0, 'simulation.noise_sigma', "must be >= 0")
        _check(0 <= sim.wobble_roll_deg <= 10, 'simulation.wobble_roll_deg', "must lie in [0, 10]")
        _check(0 <= sim.wobble_pitch_deg <= 5, 'simulation.wobble_pitch_deg', "must lie in [0, 5]")
        _check(sim.gradient_step > 0, 'simulation.gradient_step', "must be > 0")
        _check(sim.mesh_resolution > 0, 'simulation.mesh_resolution', "must be > 0")

        flt = self.filter
        _check(flt.order >= 1, 'filter.order', "must be >= 1")
        _check(flt.average_x_range[0] < flt.average_x_range[1], 'filter.average_x_range',
               "must be increasing")
        _check(flt.average_x_step > 0, 'filter.average_x_step', "must be > 0")
        _check(flt.display_cutoff > 0, 'filter.display_cutoff', "must be > 0")

        rec = self.reconstruction
        _check(rec.k >= 1, 'reconstruction.k', "must be >= 1")
        _check(rec.sigma is None or rec.sigma > 0, 'reconstruction.sigma', "must be null or > 0")
        _check(rec.ridge >= 0, 'reconstruction.ridge', "must be >= 0")
        _check(rec.repeats >= 1, 'reconstruction.repeats', "must be >= 1")
        _check(0 <= rec.drop_fraction < 1, 'reconstruction.drop_fraction', "must lie in [0, 1)")
        _check(rec.x_range[0] < rec.x_range[1], 'reconstruction.x_range', "must be increasing")
        _check(rec.x_stride > 0, 'reconstruction.x_stride', "must be > 0")
        _check(rec.ratio > 0, 'reconstruction.ratio', "must be > 0")
        _check(len(rec.sources) > 0 and set(rec.sources) <= set(SOURCES), 'reconstruction.sources',
               f"must be a non-empty subset of {list(SOURCES)}")
        _check(rec.chunk_size >= 1, 'reconstruction.chunk_size', "must be >= 1")

        ev = self.evaluation
        for name in ('x', 'alpha', 'beta'):
            lo, hi = getattr(ev, f"{name}_range" if name == 'x' else f"{name}_range_deg")
            step = getattr(ev, f"{name}_step" if name == 'x' else f"{name}_step_deg")
            _check(lo < hi, f"evaluation.{name}_range", "must be increasing")
            _check(step > 0, f"evaluation.{name}_step", "must be > 0")
        _check(ev.rigid_tolerance > 0, 'evaluation.rigid_tolerance', "must be > 0")

        _check(self.workers >= 1, 'workers', "must be >= 1")
        return self

    #
    # Serialisation
    #

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data['assumptions'] = dict(ASSUMPTIONS)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """
        Build and validate a configuration; missing keys take their defaults.

        Raises:
            LandscapyValidationError: On unknown keys, wrong types or invalid values
        """
        data = dict(data)
        data.pop('assumptions', None)
        return _build(cls, data, '').validate()

    def to_json(self, path: Union[str, Path]) -> Path:
        return write_json(self.to_dict(), path)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'RunConfig':
        return cls.from_dict(read_json(path))


def _check(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise LandscapyValidationError(f"{path}: {message}")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise LandscapyValidationError(f"{path or 'config'}: expected an object")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise LandscapyValidationError(f"{_join(path, unknown[0])}: unknown key")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        sub_path = _join(path, name)
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, sub_path)
        else:
            kwargs[name] = _coerce(hint, value, sub_path)
    try:
        return cls(**kwargs)
    except (InvalidParameterError, TypeError) as e:
        raise LandscapyValidationError(f"{path or 'config'}: {e}") from e


def _coerce(hint: Any, value: Any, path: str) -> Any:
    """Check a leaf value against its annotation; ints are accepted where floats are expected."""
    origin, args = get_origin(hint), get_args(hint)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise LandscapyValidationError(f"{path}: expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise LandscapyValidationError(
                f"{path}: expected {len(args)} values, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if hint is bool:
        if not isinstance(value, bool):
            raise LandscapyValidationError(f"{path}: expected true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not float(value).is_integer():
            raise LandscapyValidationError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise LandscapyValidationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise LandscapyValidationError(f"{path}: expected a string, got {value!r}")
        return value
    return tuple(value) if isinstance(value, list) else value


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name

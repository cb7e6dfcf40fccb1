"""
Stage runner writing every intermediate result to an artifact directory.

Stages run in the fixed order model, simulate, filter, reconstruct, evaluate,
report; each reads its inputs from the directory, so a stage can be rerun
on its own once its upstream artifacts exist.
"""
import logging
import time
from dataclasses import replace
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig
from .exceptions import (InvalidParameterError, LandscapyError, MetricsError,
                         MissingArtifactError, NoContactError)
from .geometry import ShellMesh, shell_build
from .landscape import LandscapeGrid, landscape_grid, rigid_landscape_grid
from .metrics import (LandscapeErrors, TrialErrors, TraversalWindow, error_bars, format_report,
                      model_force_series, relative_error_field, report_table, trial_errors,
                      variability_table)
from .reconstruct import (ReconstructionModel, align_gauge, assemble_samples, fit_landscape,
                          reconstruct_landscape)
from .signal import (AveragedTrial, filter_trial, group_by_nominal, resample_average,
                     smooth_for_display)
from .simulate import TrialRecord, derive_seed, force_channels, sweep
from .utils import (config_digest, file_digest, frequency_tag, read_frame, read_json,
                    select_and_reorder_columns, write_frame, write_json)

logger = logging.getLogger(__name__)

STAGES = ('model', 'simulate', 'filter', 'reconstruct', 'evaluate', 'report')
EXPORT_KINDS = ('landscape_slice', 'force_vs_x', 'error_bars')

MANIFEST = 'manifest.json'
RUN_LOG = 'run_log.json'
CONFIG = 'config.json'
MODEL_LANDSCAPE = 'landscape_model.csv'
RIGID_LANDSCAPE = 'landscape_rigid.csv'
ERRORS = 'errors.csv'

ERROR_COLUMNS = ['kind', 'source', 'f_Hz', 'alpha_deg', 'beta_deg', 'repeat',
                 'eps_x', 'eps_alpha', 'eps_beta', 'eps_PE', 'eps_grad',
                 'x_a_mm', 'x_d_mm', 'i_a', 'i_d']


def parse_stages(stages: Union[str, Iterable[str]]) -> List[str]:
    """
    Normalise a stage list (comma-separated string or iterable) into run order.

    Raises:
        InvalidParameterError: On an unknown stage name
    """
    if isinstance(stages, str):
        stages = [s.strip() for s in stages.split(',') if s.strip()]
    stages = list(stages)
    if not stages or stages == ['all']:
        return list(STAGES)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise InvalidParameterError(
            f"Unknown stage(s) {unknown}; expected a subset of {list(STAGES)}")
    return [s for s in STAGES if s in stages]


def export_mesh_csv(mesh: ShellMesh, directory: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the vertex and face tables of a shell."""
    directory = Path(directory)
    vertices, faces = mesh.to_frames()
    return (write_frame(vertices, directory / 'mesh_vertices.csv'),
            write_frame(faces, directory / 'mesh_faces.csv'))


class LandscapePipeline:
    """
    Runs the stages of one configuration into one artifact directory.

    Args:
        config: Validated run configuration
        out_dir: Artifact directory (created if needed)
        seed: Master seed; overrides ``config.seed`` when given
        workers: Worker processes; overrides ``config.workers`` when given
    """

    def __init__(self, config: RunConfig, out_dir: Union[str, Path], seed: Optional[int] = None,
                 workers: Optional[int] = None):
        overrides = {}
        if seed is not None:
            overrides['seed'] = int(seed)
        if workers is not None:
            overrides['workers'] = int(workers)
        self.config = replace(config, **overrides).validate()
        self.out_dir = Path(out_dir)
        self.timings: Dict[str, float] = {}

    #
    # Shared objects
    #

    @cached_property
    def mesh(self) -> ShellMesh:
        return shell_build(self.config.shell, self.config.simulation.mesh_resolution, cropped=True)

    @cached_property
    def counterpart(self) -> ShellMesh:
        return shell_build(self.config.shell, self.config.simulation.mesh_resolution, cropped=False)

    @cached_property
    def beams(self):
        return self.config.beams.build()

    @property
    def body(self):
        return self.config.body

    @cached_property
    def axes(self):
        return self.config.evaluation.axes()

    def path(self, *parts: str) -> Path:
        return self.out_dir.joinpath(*parts)

    #
    # Driver
    #

    def run(self, stages: Union[str, Iterable[str]] = STAGES) -> Path:
        """
        Execute the requested stages in order and refresh the manifest.

        Returns:
            The artifact directory
        """
        stages = parse_stages(stages)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config.to_json(self.path(CONFIG))
        for stage in stages:
            logger.info(f"Stage '{stage}' started")
            start = time.perf_counter()
            try:
                getattr(self, f'stage_{stage}')()
            except LandscapyError as e:
                logger.error(f"Stage '{stage}' failed: {e}")
                raise
            self.timings[stage] = time.perf_counter() - start
            logger.info(f"Stage '{stage}' finished in {self.timings[stage]:.1f} s")
        self.write_manifest(stages)
        return self.out_dir

    def write_manifest(self, stages: Sequence[str]) -> Path:
        """Content hashes of every artifact; timings go to a separate run log."""
        files = {}
        for p in sorted(self.out_dir.rglob('*')):
            rel = p.relative_to(self.out_dir).as_posix()
            if p.is_file() and rel not in (MANIFEST, RUN_LOG):
                files[rel] = file_digest(p)
        manifest = {
            'version': __version__,
            'config_digest': config_digest(self.config.to_dict()),
            'seed': self.config.seed,
            'stages': list(stages),
            'files': files,
        }
        write_json({'finished_utc': datetime.now(timezone.utc).isoformat(),
                    'stage_seconds': self.timings}, self.path(RUN_LOG))
        return write_json(manifest, self.path(MANIFEST))

    #
    # Stages
    #

    def stage_model(self) -> None:
        """Shell tables plus the flexible-beam and rigid-geometry landscapes."""
        export_mesh_csv(self.mesh, self.out_dir)
        sim, ev = self.config.simulation, self.config.evaluation
        grid = landscape_grid(self.axes['x'], self.axes['alpha'], self.axes['beta'],
                              self.counterpart, self.beams, self.body, y=sim.y, z=sim.z,
                              gamma=np.radians(sim.gamma_deg), gradients=True,
                              step=sim.gradient_step, workers=self.config.workers)
        write_frame(grid.to_frame(), self.path(MODEL_LANDSCAPE))
        if ev.rigid:
            rigid = rigid_landscape_grid(self.axes['x'], self.axes['alpha'], self.axes['beta'],
                                         self.counterpart, self.beams, self.body, y=sim.y, z=sim.z,
                                         gamma=np.radians(sim.gamma_deg),
                                         search_range=tuple(ev.rigid_search_range),
                                         tolerance=ev.rigid_tolerance, workers=self.config.workers)
            write_frame(rigid.to_frame(), self.path(RIGID_LANDSCAPE))

    def stage_simulate(self) -> None:
        result = sweep(self.config.sweep_plan(), self.mesh, self.counterpart, self.beams, self.body,
                       workers=self.config.workers)
        for record in result.records:
            record.save(self.path('trials', f'trial_{record.config.index:04d}.csv'))
        columns = ['index', 'alpha_deg', 'beta_deg', 'f_Hz', 'repetition', 'reason']
        aborted = pd.DataFrame([{'index': c.index, 'alpha_deg': c.alpha_deg, 'beta_deg': c.beta_deg,
                                 'f_Hz': c.f, 'repetition': c.repetition, 'reason': reason}
                                for c, reason in result.aborted], columns=columns)
        write_frame(aborted, self.path('trials', 'aborted.csv'))

    def load_trials(self) -> List[TrialRecord]:
        paths = sorted(self.path('trials').glob('trial_*.csv'))
        if not paths:
            raise MissingArtifactError(self.path('trials', 'trial_0000.csv'))
        return [TrialRecord.load(p) for p in paths]

    def stage_filter(self) -> None:
        flt = self.config.filter
        grid = np.arange(flt.average_x_range[0], flt.average_x_range[1] + 0.5 * flt.average_x_step,
                         flt.average_x_step)
        filtered = [filter_trial(r, order=flt.order) for r in self.load_trials()]
        for group in group_by_nominal(filtered).values():
            resample_average(group, grid=grid).save(self.path('averaged'))

    def load_averaged(self) -> List[AveragedTrial]:
        paths = sorted(self.path('averaged').glob('avg_*.csv'))
        if not paths:
            raise MissingArtifactError(self.path('averaged'))
        return [AveragedTrial.load(p) for p in paths]

    def load_landscape(self, name: str = MODEL_LANDSCAPE) -> LandscapeGrid:
        return LandscapeGrid.from_frame(read_frame(self.path(name)))

    def model_path(self, source: str, f: float, repeat: int) -> Path:
        return self.path('models', f'hhd_{source}_f{frequency_tag(f)}_r{repeat}.json')

    def stage_reconstruct(self) -> None:
        rec = self.config.reconstruction
        reference = self.load_landscape()
        averaged = self.load_averaged()
        frequencies = sorted({a.f for a in averaged})
        for source in rec.sources:
            for f in frequencies:
                samples = assemble_samples([a for a in averaged if a.f == f], source, self.body,
                                           x_range=tuple(rec.x_range), x_stride=rec.x_stride,
                                           ratio=rec.ratio)
                for repeat in range(rec.repeats):
                    seed = derive_seed(self.config.seed, repeat)
                    fit_samples = samples.drop(rec.drop_fraction, seed=seed)
                    model = fit_landscape(fit_samples, rec.k, seed=seed, sigma=rec.sigma,
                                          ridge=rec.ridge, chunk_size=rec.chunk_size)
                    model = align_gauge(model, reference)
                    model = replace(model, info={**model.info, 'f_Hz': f, 'repeat': repeat})
                    model.save(self.model_path(source, f, repeat))
                    if repeat == 0:
                        grid = reconstruct_landscape(model, reference.x, reference.alpha,
                                                     reference.beta)
                        name = f'landscape_{source}_f{frequency_tag(f)}.csv'
                        write_frame(grid.to_frame(), self.path(name))

    def stage_evaluate(self) -> None:
        rec = self.config.reconstruction
        reference = self.load_landscape()
        rows = []
        for avg in self.load_averaged():
            for source in [s for s in rec.sources if s != 'model']:
                try:
                    e = trial_errors(avg, source)
                except (NoContactError, MetricsError) as err:
                    logger.warning(f"No series errors for alpha={avg.alpha_deg}, "
                                   f"beta={avg.beta_deg}, f={avg.f} ({source}): {err}")
                    continue
                rows.append({'kind': 'series', 'source': source, 'f_Hz': e.f,
                             'alpha_deg': e.alpha_deg, 'beta_deg': e.beta_deg, 'eps_x': e.eps_x,
                             'eps_alpha': e.eps_alpha, 'eps_beta': e.eps_beta,
                             'x_a_mm': e.window.x_a, 'x_d_mm': e.window.x_d,
                             'i_a': e.window.i_a, 'i_d': e.window.i_d})

        model_paths = sorted(self.path('models').glob('hhd_*.json'))
        if not model_paths:
            raise MissingArtifactError(self.path('models'))
        for p in model_paths:
            model = ReconstructionModel.load(p)
            f, repeat = float(model.info['f_Hz']), int(model.info['repeat'])
            grid = reconstruct_landscape(model, reference.x, reference.alpha, reference.beta,
                                         reference=reference)
            eps_pe, eps_grad = relative_error_field(grid, reference, ratio=model.ratio)
            rows.append({'kind': 'landscape', 'source': model.source, 'f_Hz': f, 'repeat': repeat,
                         'eps_PE': eps_pe, 'eps_grad': eps_grad})

        if self.path(RIGID_LANDSCAPE).exists():
            rigid = self.load_landscape(RIGID_LANDSCAPE)
            eps_pe, _ = relative_error_field(rigid, reference)
            rows.append({'kind': 'rigid', 'source': 'rigid', 'eps_PE': eps_pe})
        write_frame(pd.DataFrame(rows, columns=ERROR_COLUMNS), self.path(ERRORS))

    def stage_report(self) -> None:
        errors = read_frame(self.path(ERRORS))
        series = [TrialErrors(source=r.source, alpha_deg=r.alpha_deg, beta_deg=r.beta_deg, f=r.f_Hz,
                              eps_x=r.eps_x, eps_alpha=r.eps_alpha, eps_beta=r.eps_beta,
                              window=TraversalWindow(r.x_a_mm, r.x_d_mm, int(r.i_a), int(r.i_d)))
                  for r in errors[errors['kind'] == 'series'].itertuples(index=False)]
        fields = [LandscapeErrors(source=r.source, f=r.f_Hz, repeat=int(r.repeat), eps_PE=r.eps_PE,
                                  eps_grad=r.eps_grad)
                  for r in errors[errors['kind'] == 'landscape'].itertuples(index=False)]
        rigid_rows = errors[errors['kind'] == 'rigid']
        rigid = float(rigid_rows['eps_PE'].iloc[0]) if not rigid_rows.empty else None
        variability = variability_table(self.load_averaged())

        for source in self.config.reconstruction.sources:
            table = report_table([e for e in series if e.source == source],
                                 [e for e in fields if e.source == source],
                                 variability=variability, rigid_eps_pe=rigid)
            write_frame(table, self.path(f'report_{source}.csv'))
            with open(self.path(f'report_{source}.txt'), 'w', encoding='utf-8', newline='\n') as fh:
                fh.write(format_report(table))
            logger.info(f"Report written: {self.path(f'report_{source}.txt')}")


#
# Plot data
#

def _config_of(artifact: Path) -> RunConfig:
    try:
        return RunConfig.from_json(artifact / CONFIG)
    except MissingArtifactError:
        logger.warning(f"No {CONFIG} in {artifact}; using defaults")
        return RunConfig()


def _force_vs_x(artifact: Path, beam: Optional[str], smooth: bool,
                display_cutoff: float, speed: float) -> pd.DataFrame:
    paths = sorted((artifact / 'averaged').glob('avg_*.csv'))
    if not paths:
        raise MissingArtifactError(artifact / 'averaged')
    frames = []
    for p in paths:
        avg = AveragedTrial.load(p)
        if smooth:
            avg = smooth_for_display(avg, cutoff=display_cutoff, speed=speed)
        df = avg.valid
        model = model_force_series(df)
        for source in ('raw', 'normal', 'model'):
            if source == 'model':
                values = model
            else:
                values = df[list(force_channels(source, beam))].to_numpy(dtype=float)
            frames.append(pd.DataFrame({
                'alpha_deg': avg.alpha_deg, 'beta_deg': avg.beta_deg, 'f_Hz': avg.f,
                'source': source, 'x_mm': df['x_mm'].to_numpy(),
                'F_x': values[:, 0], 'T_alpha': values[:, 1], 'T_beta': values[:, 2],
            }))
    out = pd.concat(frames, ignore_index=True)
    if beam is not None:
        out['beam'] = beam
    return select_and_reorder_columns(out, ['x_mm', 'F_x', 'T_alpha', 'T_beta'])


def export_plotdata(artifact: Union[str, Path], kind: str, out: Union[str, Path],
                    x_values: Optional[Sequence[float]] = None, beam: Optional[str] = None,
                    landscape: str = 'model', smooth: bool = False) -> Path:
    """
    Write long-format plot data from an artifact directory.

    Args:
        artifact: Artifact directory of a run
        kind: ``landscape_slice``, ``force_vs_x`` or ``error_bars``
        out: Output CSV
        x_values: Slice positions for ``landscape_slice`` (mm); configured slices when None
        beam: ``'left'`` or ``'right'`` to restrict ``force_vs_x`` to one beam
        landscape: Landscape to slice: ``model``, ``rigid`` or ``<source>_f<tag>``
        smooth: Apply the display smoothing pass to ``force_vs_x``

    Returns:
        Path of the written file

    Raises:
        InvalidParameterError: On an unknown kind or beam
        MissingArtifactError: If a required artifact is absent
    """
    artifact = Path(artifact)
    if kind not in EXPORT_KINDS:
        raise InvalidParameterError(
            f"Unknown export kind '{kind}'; expected one of {list(EXPORT_KINDS)}")
    beams = {None: None, 'left': 'L', 'right': 'R', 'L': 'L', 'R': 'R'}
    if beam not in beams:
        raise InvalidParameterError(f"Unknown beam '{beam}'; expected left or right")
    config = _config_of(artifact)

    if kind == 'landscape_slice':
        grid = LandscapeGrid.from_frame(read_frame(artifact / f'landscape_{landscape}.csv'))
        positions = config.evaluation.slices_x if x_values is None else x_values
        df = pd.concat([grid.slice_at(float(x)) for x in positions], ignore_index=True)
    elif kind == 'force_vs_x':
        df = _force_vs_x(artifact, beams[beam], smooth, config.filter.display_cutoff,
                         config.simulation.speed)
    else:
        tables = []
        for source in config.reconstruction.sources:
            path = artifact / f'report_{source}.csv'
            if path.exists():
                tables.append(error_bars(read_frame(path), source))
        if not tables:
            raise MissingArtifactError(artifact / f'report_{config.reconstruction.sources[0]}.csv')
        df = pd.concat(tables, ignore_index=True)
    path = write_frame(df, out)
    logger.info(f"Exported {kind} ({len(df)} rows) to {path}")
    return path


def run_pipeline(config: RunConfig, stages: Union[str, Iterable[str]], out_dir: Union[str, Path],
                 seed: Optional[int] = None, workers: Optional[int] = None) -> Path:
    """Functional entry point: build a :class:`LandscapePipeline` and run it."""
    return LandscapePipeline(config, out_dir, seed=seed, workers=workers).run(stages)


def read_manifest(artifact: Union[str, Path]) -> Dict:
    return read_json(Path(artifact) / MANIFEST)

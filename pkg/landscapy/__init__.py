__version__ = "0.1.0"

from .config import RunConfig
from .geometry import BodyParams, Pose, ShellParams, shell_build, surface_query
from .landscape import (Beam, LandscapeGrid, beam_deflection, default_beams, landscape_grid,
                        potential_energy)
from .pipeline import LandscapePipeline, export_plotdata, run_pipeline
from .reconstruct import ReconstructionModel, fit_landscape, hhd_fit, reconstruct_landscape
from .simulate import SweepPlan, TrialConfig, run_trial, sweep

__all__ = [
    'Beam', 'BodyParams', 'LandscapeGrid', 'LandscapePipeline', 'Pose', 'ReconstructionModel',
    'RunConfig', 'ShellParams', 'SweepPlan', 'TrialConfig', 'beam_deflection', 'default_beams',
    'export_plotdata', 'fit_landscape', 'hhd_fit', 'landscape_grid', 'potential_energy',
    'reconstruct_landscape', 'run_pipeline', 'run_trial', 'shell_build', 'surface_query', 'sweep',
]

"""
Zero-phase smoothing of trial records and averaging of repetitions over x.
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal as sps

from .exceptions import SignalError
from .simulate import BEAM_NAMES, FILTERED_CHANNELS, TrialRecord
from .utils import angle_tag, frequency_tag, read_frame, write_frame

logger = logging.getLogger(__name__)

FILTER_ORDER = 6
SAMPLE_RATE = 50.0
AVERAGE_GRID = np.arange(-100.0, 201.0, 1.0)

# Averaged without smoothing: pose, beam angles and model references.
PASSTHROUGH_CHANNELS = [
    'alpha_deg', 'beta_deg', 'head_deg',
    *(f'theta_{b}_deg' for b in BEAM_NAMES),
    'G_x_N', 'G_alpha_Nmm', 'G_beta_Nmm',
    'PE_Nmm', 'dPE_dx_N', 'dPE_dalpha_Nmm', 'dPE_dbeta_Nmm',
]
VARIABILITY_CHANNELS = ('F_x_N', 'T_alpha_Nmm', 'T_beta_Nmm')


def cutoff_for_frequency(f: float) -> float:
    """Low-pass cut-off for a head frequency: 1.5 Hz up to 0.5 Hz, then three times ``f``."""
    return max(1.5, 3.0 * f)


def zero_phase_filter(series: Sequence[float], cutoff: float, order: int = FILTER_ORDER,
                      fs: float = SAMPLE_RATE) -> np.ndarray:
    """
    Forward-backward Butterworth low-pass.

    The ends are extended by odd reflection over ``3 * order`` samples.

    Args:
        series: Samples at rate ``fs``
        cutoff: Cut-off frequency (Hz)
        order: Filter order of the single pass
        fs: Sample rate (Hz)

    Returns:
        Filtered series with zero phase shift

    Raises:
        SignalError: If the series is too short or the cut-off is not below Nyquist
    """
    x = np.asarray(series, dtype=float)
    padlen = 3 * order
    if x.ndim != 1 or len(x) <= padlen:
        raise SignalError(f"Series of length {x.size} is too short for order-{order} "
                          f"zero-phase filtering (needs more than {padlen} samples)")
    if not 0 < cutoff < fs / 2.0:
        raise SignalError(f"Cut-off {cutoff} Hz must lie in (0, {fs / 2.0}) Hz")
    sos = sps.butter(order, cutoff, btype='lowpass', fs=fs, output='sos')
    return sps.sosfiltfilt(sos, x, padtype='odd', padlen=padlen)


def filter_trial(record: TrialRecord, cutoff: Optional[float] = None,
                 channels: Sequence[str] = FILTERED_CHANNELS,
                 order: int = FILTER_ORDER) -> TrialRecord:
    """
    Smooth the force and torque channels of a trial.

    Args:
        record: Raw trial
        cutoff: Cut-off (Hz); chosen from the head frequency when None
        channels: Columns to smooth (missing columns are skipped)
        order: Filter order

    Returns:
        New TrialRecord; the input is left unchanged
    """
    cutoff = cutoff_for_frequency(record.config.f) if cutoff is None else cutoff
    frame = record.frame.copy()
    fs = record.config.sample_rate
    for col in channels:
        if col in frame.columns:
            frame[col] = zero_phase_filter(frame[col].to_numpy(dtype=float), cutoff, order, fs)
    metadata = {**record.metadata, 'filter_cutoff_hz': cutoff, 'filter_order': order}
    return replace(record, frame=frame, metadata=metadata)


@dataclass(eq=False)
class AveragedTrial:
    """
    Repetitions of one (alpha, beta, f) interpolated onto a common x grid and averaged.

    ``frame`` holds ``x_mm``, one column per channel (mean), ``<channel>_std`` and a
    boolean ``missing`` column for grid points not covered by every repetition.
    """
    frame: pd.DataFrame
    alpha_deg: float
    beta_deg: float
    f: float
    n_trials: int

    @property
    def nominal(self) -> Tuple[float, float, float]:
        return self.alpha_deg, self.beta_deg, self.f

    @property
    def x(self) -> np.ndarray:
        return self.frame['x_mm'].to_numpy()

    @property
    def valid(self) -> pd.DataFrame:
        """Rows covered by every repetition."""
        return self.frame[~self.frame['missing']]

    @property
    def file_name(self) -> str:
        return (f"avg_a{angle_tag(self.alpha_deg)}_b{angle_tag(self.beta_deg)}"
                f"_f{frequency_tag(self.f)}.csv")

    def channel(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)

    def save(self, directory: Union[str, Path]) -> Path:
        out = self.frame.copy()
        out.insert(1, 'nominal_alpha_deg', self.alpha_deg)
        out.insert(2, 'nominal_beta_deg', self.beta_deg)
        out.insert(3, 'f_Hz', self.f)
        out.insert(4, 'n_trials', self.n_trials)
        return write_frame(out, Path(directory) / self.file_name)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'AveragedTrial':
        df = read_frame(path)
        if df.empty:
            raise SignalError(f"Averaged trial {path} has no rows")
        head = df.iloc[0]
        frame = df.drop(columns=['nominal_alpha_deg', 'nominal_beta_deg', 'f_Hz', 'n_trials'])
        frame['missing'] = frame['missing'].astype(bool)
        return cls(frame=frame, alpha_deg=float(head['nominal_alpha_deg']),
                   beta_deg=float(head['nominal_beta_deg']), f=float(head['f_Hz']),
                   n_trials=int(head['n_trials']))


def _interpolate(record: TrialRecord, column: str, grid: np.ndarray) -> np.ndarray:
    x = record.frame['x_mm'].to_numpy(dtype=float)
    y = record.frame[column].to_numpy(dtype=float)
    return np.interp(grid, x, y, left=np.nan, right=np.nan)


def resample_average(records: Sequence[TrialRecord], grid: Optional[np.ndarray] = None,
                     channels: Optional[Sequence[str]] = None) -> AveragedTrial:
    """
    Interpolate repetitions onto the x grid and take pointwise mean and standard deviation.

    Args:
        records: Filtered repetitions of one nominal configuration
        grid: x grid (mm); -100..200 mm at 1 mm when None
        channels: Columns to average; smoothed and pass-through channels when None

    Returns:
        AveragedTrial

    Raises:
        SignalError: If ``records`` is empty, nominal configurations differ or x is not increasing
    """
    if not records:
        raise SignalError("No trials to average")
    nominal = {r.nominal for r in records}
    if len(nominal) > 1:
        raise SignalError(
            f"Trials to average have different nominal configurations: {sorted(nominal)}")
    grid = AVERAGE_GRID if grid is None else np.asarray(grid, dtype=float)
    for r in records:
        if np.any(np.diff(r.frame['x_mm'].to_numpy()) <= 0):
            raise SignalError(f"Trial {r.config.index}: x is not strictly increasing")
    if channels is None:
        columns = records[0].frame.columns
        channels = [c for c in FILTERED_CHANNELS + PASSTHROUGH_CHANNELS if c in columns]

    covered = np.ones(len(grid), dtype=bool)
    for r in records:
        x = r.frame['x_mm'].to_numpy()
        covered &= (grid >= x[0]) & (grid <= x[-1])

    data: Dict[str, np.ndarray] = {'x_mm': grid}
    for col in channels:
        stack = np.stack([_interpolate(r, col, grid) for r in records])
        mean = np.full(len(grid), np.nan)
        std = np.full(len(grid), np.nan)
        mean[covered] = stack[:, covered].mean(axis=0)
        std[covered] = stack[:, covered].std(axis=0, ddof=0)
        data[col] = mean
        data[f'{col}_std'] = std
    frame = pd.DataFrame(data)
    frame['missing'] = ~covered

    n_missing = int((~covered).sum())
    alpha, beta, f = records[0].nominal
    if n_missing:
        logger.warning(f"Averaged trial alpha={alpha}, beta={beta}, f={f}: "
                       f"{n_missing} grid points lack coverage")
    return AveragedTrial(frame=frame, alpha_deg=alpha, beta_deg=beta, f=f, n_trials=len(records))


def group_by_nominal(
        records: Sequence[TrialRecord]) -> Dict[Tuple[float, float, float], List[TrialRecord]]:
    """Group repetitions by (alpha, beta, f), keeping first-seen order."""
    groups: Dict[Tuple[float, float, float], List[TrialRecord]] = {}
    for r in records:
        groups.setdefault(r.nominal, []).append(r)
    return groups


def coefficient_of_variation(averaged: AveragedTrial,
                             channels: Sequence[str] = VARIABILITY_CHANNELS,
                             floor: float = 0.01) -> Dict[str, Tuple[float, float]]:
    """
    Repetition variability of an averaged trial.

    The per-point coefficient of variation is std / |mean|; points whose
    |mean| is below ``floor`` times the channel's largest |mean| are skipped.

    Returns:
        Mapping channel -> (x-average CV, maximum CV), both as fractions
    """
    result = {}
    valid = averaged.valid
    for col in channels:
        mean = np.abs(valid[col].to_numpy(dtype=float))
        std = valid[f'{col}_std'].to_numpy(dtype=float)
        if mean.size == 0 or not np.any(mean > 0):
            result[col] = (0.0, 0.0)
            continue
        keep = mean > floor * mean.max()
        cv = std[keep] / mean[keep]
        result[col] = (float(cv.mean()), float(cv.max()))
    return result


def smooth_for_display(averaged: AveragedTrial, cutoff: float = 1.0, speed: float = 20.0,
                       order: int = FILTER_ORDER) -> AveragedTrial:
    """
    Second zero-phase pass on the averaged means, for plots only.

    The x grid is treated as a time series sampled at ``speed / dx``. Runs of
    covered points too short to filter are left as they are.
    """
    frame = averaged.frame.copy()
    x = frame['x_mm'].to_numpy()
    fs = speed / float(np.median(np.diff(x)))
    covered = ~frame['missing'].to_numpy()
    # Boundaries of contiguous covered runs.
    edges = np.flatnonzero(np.diff(np.concatenate([[0], covered.astype(int), [0]])))
    runs = list(zip(edges[::2], edges[1::2]))
    channels = [c for c in frame.columns
                if c not in ('x_mm', 'missing') and not c.endswith('_std')]
    for col in channels:
        values = frame[col].to_numpy(dtype=float).copy()
        for start, stop in runs:
            if stop - start > 3 * order:
                values[start:stop] = zero_phase_filter(values[start:stop], cutoff, order, fs)
        frame[col] = values
    return replace(averaged, frame=frame)

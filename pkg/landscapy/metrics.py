"""
Attach/detach windows, relative errors and the summary report.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import MetricsError, NoContactError
from .landscape import LandscapeGrid
from .reconstruct import UNIFICATION_RATIO
from .signal import VARIABILITY_CHANNELS, AveragedTrial, coefficient_of_variation
from .simulate import TrialRecord, force_channels

logger = logging.getLogger(__name__)

ATTACH_THRESHOLD_DEG = 3.0
MODEL_CHANNELS = ('dPE_dx_N', 'dPE_dalpha_Nmm', 'dPE_dbeta_Nmm')
GRAVITY_CHANNELS = ('G_x_N', 'G_alpha_Nmm', 'G_beta_Nmm')
SERIES_METRICS = ('eps_x', 'eps_alpha', 'eps_beta')
FIELD_METRICS = ('eps_PE', 'eps_grad')
REPORT_METRICS = SERIES_METRICS + FIELD_METRICS
REPORT_SOURCES = ('raw', 'normal', 'model')


@dataclass(frozen=True)
class TraversalWindow:
    """Stretch of a traverse from first contact with both beams to the first beam peak."""
    x_a: float
    x_d: float
    i_a: int
    i_d: int

    def __post_init__(self):
        if not self.x_a < self.x_d:
            raise MetricsError(f"Attach position {self.x_a} mm is not before detach {self.x_d} mm")

    def contains(self, x: np.ndarray) -> np.ndarray:
        return (x >= self.x_a) & (x <= self.x_d)


def _frame_of(data: Union[TrialRecord, AveragedTrial, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(data, AveragedTrial):
        return data.valid.reset_index(drop=True)
    if isinstance(data, TrialRecord):
        return data.frame
    return data.reset_index(drop=True)


def attach_detach(data: Union[TrialRecord, AveragedTrial, pd.DataFrame],
                  threshold_deg: float = ATTACH_THRESHOLD_DEG) -> TraversalWindow:
    """
    Attach and detach positions of a traverse.

    Attach is the first frame where both beam angles exceed ``threshold_deg``;
    detach is the first frame where either beam reaches its own maximum
    (the earlier of the two).

    Raises:
        NoContactError: If the beams never both exceed the threshold
    """
    frame = _frame_of(data)
    theta_l = frame['theta_L_deg'].to_numpy(dtype=float)
    theta_r = frame['theta_R_deg'].to_numpy(dtype=float)
    attached = np.flatnonzero((theta_l > threshold_deg) & (theta_r > threshold_deg))
    if attached.size == 0:
        raise NoContactError(f"Beams never both exceed {threshold_deg} deg")
    i_a = int(attached[0])
    i_d = int(min(np.argmax(theta_l), np.argmax(theta_r)))
    x = frame['x_mm'].to_numpy(dtype=float)
    return TraversalWindow(x_a=float(x[i_a]), x_d=float(x[i_d]), i_a=i_a, i_d=i_d)


def relative_error_series(y: Sequence[float], r: Sequence[float]) -> float:
    """
    Mean absolute difference normalised by the range of the reference, in percent.

    Raises:
        MetricsError: If the series differ in length or the reference is constant
    """
    y = np.asarray(y, dtype=float)
    r = np.asarray(r, dtype=float)
    if y.shape != r.shape:
        raise MetricsError(f"Series shapes differ: {y.shape} vs {r.shape}")
    keep = np.isfinite(y) & np.isfinite(r)
    if not keep.any():
        raise MetricsError("No finite samples to compare")
    y, r = y[keep], r[keep]
    span = float(r.max() - r.min())
    if span == 0:
        raise MetricsError("Reference series is constant; relative error is undefined")
    return float(np.mean(np.abs(y - r)) / span * 100.0)


def relative_error_field(y: LandscapeGrid, r: LandscapeGrid,
                         ratio: float = UNIFICATION_RATIO) -> Tuple[float, float]:
    """
    Landscape and gradient errors of ``y`` against the reference ``r``.

    PE is compared after mean alignment over nodes finite in both grids and
    normalised by the reference range. Gradients are compared in unified
    units (x-component divided by ``ratio``) and normalised by the largest
    reference gradient norm.

    Returns:
        Tuple of (PE error %, gradient error %); the gradient error is NaN when
        either grid has no gradient

    Raises:
        MetricsError: If the grids have different axes or no common finite node
    """
    if not y.same_axes(r):
        raise MetricsError("Landscape grids have different axes")
    ype, rpe = y.pe.ravel(), r.pe.ravel()
    keep = np.isfinite(ype) & np.isfinite(rpe)
    if not keep.any():
        raise MetricsError("Landscapes share no finite node")
    aligned = ype[keep] - ype[keep].mean() + rpe[keep].mean()
    eps_pe = relative_error_series(aligned, rpe[keep])

    if y.grad is None or r.grad is None:
        return eps_pe, float('nan')
    scale = np.array([1.0 / ratio, 1.0, 1.0])
    yg = y.grad.reshape(-1, 3) * scale
    rg = r.grad.reshape(-1, 3) * scale
    keep = np.all(np.isfinite(yg), axis=1) & np.all(np.isfinite(rg), axis=1)
    if not keep.any():
        return eps_pe, float('nan')
    peak = float(np.linalg.norm(rg[keep], axis=1).max())
    if peak == 0:
        raise MetricsError("Reference gradient vanishes; relative error is undefined")
    eps_grad = float(np.mean(np.linalg.norm(yg[keep] - rg[keep], axis=1)) / peak * 100.0)
    return eps_pe, eps_grad


@dataclass(frozen=True)
class TrialErrors:
    """Series errors of one averaged trial for one force source."""
    source: str
    alpha_deg: float
    beta_deg: float
    f: float
    eps_x: float
    eps_alpha: float
    eps_beta: float
    window: TraversalWindow


@dataclass(frozen=True)
class LandscapeErrors:
    """Landscape errors of one fitted model."""
    source: str
    f: float
    repeat: int
    eps_PE: float
    eps_grad: float


def model_force_series(frame: pd.DataFrame) -> np.ndarray:
    """Beam force the model predicts, -grad(PE) - G, as (n, 3) over (x, alpha, beta)."""
    grad = frame[list(MODEL_CHANNELS)].to_numpy(dtype=float)
    gravity = frame[list(GRAVITY_CHANNELS)].to_numpy(dtype=float)
    return -grad - gravity


def trial_errors(averaged: AveragedTrial, source: str, beam: Optional[str] = None,
                 window: Optional[TraversalWindow] = None) -> TrialErrors:
    """
    Compare sensed F_x, T_alpha and T_beta with the model over the traverse window.

    Args:
        averaged: Averaged trial carrying sensed and model channels
        source: ``'raw'`` or ``'normal'``
        beam: Compare one beam only (the model total is still the reference)
        window: Override the attach/detach window

    Returns:
        TrialErrors
    """
    frame = _frame_of(averaged)
    window = attach_detach(frame) if window is None else window
    inside = window.contains(frame['x_mm'].to_numpy(dtype=float))
    sensed = frame.loc[inside, list(force_channels(source, beam))].to_numpy(dtype=float)
    reference = model_force_series(frame[inside])
    eps = [relative_error_series(sensed[:, j], reference[:, j]) for j in range(3)]
    return TrialErrors(source=source, alpha_deg=averaged.alpha_deg, beta_deg=averaged.beta_deg,
                       f=averaged.f, eps_x=eps[0], eps_alpha=eps[1], eps_beta=eps[2], window=window)


def variability_table(averaged: Sequence[AveragedTrial],
                      channels: Sequence[str] = VARIABILITY_CHANNELS) -> pd.DataFrame:
    """
    Coefficient of variation over repetitions, averaged over the trials of each frequency.

    Returns:
        One row per frequency with ``cv_mean_<channel>`` and ``cv_max_<channel>`` in percent
    """
    rows = []
    for avg in averaged:
        cv = coefficient_of_variation(avg, channels)
        row = {'f_Hz': avg.f}
        for col, (mean_cv, max_cv) in cv.items():
            row[f'cv_mean_{col}'] = mean_cv * 100.0
            row[f'cv_max_{col}'] = max_cv * 100.0
        rows.append(row)
    if not rows:
        return pd.DataFrame(columns=['f_Hz'])
    return pd.DataFrame(rows).groupby('f_Hz', sort=True).mean().reset_index()


def report_table(series: Sequence[TrialErrors], landscapes: Sequence[LandscapeErrors],
                 variability: Optional[pd.DataFrame] = None,
                 rigid_eps_pe: Optional[float] = None) -> pd.DataFrame:
    """
    Summary over sources and frequencies.

    Every metric has a ``_mean`` and ``_std`` column (population std over
    averaged trials for the series metrics, over fit repeats for the field
    metrics). The ``model`` source has no series metrics. A ``rigid`` row holds
    the PE error of the rigid-geometry landscape when given.

    Raises:
        MetricsError: If there is nothing to report
    """
    if not series and not landscapes and rigid_eps_pe is None:
        raise MetricsError("Nothing to report")
    series_df = pd.DataFrame([{'source': e.source, 'f_Hz': e.f, 'eps_x': e.eps_x,
                               'eps_alpha': e.eps_alpha, 'eps_beta': e.eps_beta} for e in series],
                             columns=['source', 'f_Hz'] + list(SERIES_METRICS))
    field_df = pd.DataFrame([{'source': e.source, 'f_Hz': e.f, 'eps_PE': e.eps_PE,
                              'eps_grad': e.eps_grad} for e in landscapes],
                            columns=['source', 'f_Hz'] + list(FIELD_METRICS))

    keys = pd.concat([series_df[['source', 'f_Hz']],
                      field_df[['source', 'f_Hz']]]).drop_duplicates()
    order = {s: i for i, s in enumerate(REPORT_SOURCES)}
    keys = keys.assign(_order=keys['source'].map(order).fillna(len(order)))
    keys = keys.sort_values(['_order', 'f_Hz']).drop(columns='_order')

    rows = []
    for source, f in keys.itertuples(index=False):
        row: Dict[str, object] = {'source': source, 'f_Hz': f}
        s = series_df[(series_df['source'] == source) & (series_df['f_Hz'] == f)]
        fl = field_df[(field_df['source'] == source) & (field_df['f_Hz'] == f)]
        row['n_trials'] = len(s)
        row['n_fits'] = len(fl)
        for metric in SERIES_METRICS:
            row.update(_mean_std(s[metric], metric))
        for metric in FIELD_METRICS:
            row.update(_mean_std(fl[metric], metric))
        rows.append(row)
    if rigid_eps_pe is not None:
        row = {'source': 'rigid', 'f_Hz': np.nan, 'n_trials': 0, 'n_fits': 0}
        for metric in REPORT_METRICS:
            row.update(_mean_std(pd.Series(dtype=float), metric))
        row['eps_PE_mean'] = float(rigid_eps_pe)
        row['eps_PE_std'] = 0.0
        rows.append(row)
    table = pd.DataFrame(rows)
    if variability is not None and not variability.empty:
        table = table.merge(variability, on='f_Hz', how='left')
    return table


def _mean_std(values: pd.Series, metric: str) -> Dict[str, float]:
    values = values.dropna()
    if values.empty:
        return {f'{metric}_mean': np.nan, f'{metric}_std': np.nan}
    return {f'{metric}_mean': float(values.mean()), f'{metric}_std': float(values.std(ddof=0))}


def format_report(table: pd.DataFrame) -> str:
    """Plain-text table with ``mean ± std`` cells (percent)."""
    out = table[['source', 'f_Hz']].copy()
    out['f_Hz'] = out['f_Hz'].map(lambda v: '-' if pd.isna(v) else f'{v:g}')
    for metric in REPORT_METRICS:
        mean, std = table[f'{metric}_mean'], table[f'{metric}_std']
        out[metric] = [('-' if pd.isna(m) else f'{m:.2f} ± {s:.2f}') for m, s in zip(mean, std)]
    cv_cols = [c for c in table.columns if c.startswith('cv_')]
    for col in cv_cols:
        out[col] = table[col].map(lambda v: '-' if pd.isna(v) else f'{v:.1f}')
    return out.to_string(index=False) + '\n'


def error_bars(table: pd.DataFrame, source: str) -> pd.DataFrame:
    """
    Long-format mean/std per frequency and metric for one source.

    Raises:
        MetricsError: If the source has no rows
    """
    rows = table[table['source'] == source]
    if rows.empty:
        raise MetricsError(f"Report has no rows for source '{source}'")
    records: List[Dict[str, object]] = []
    for _, row in rows.iterrows():
        for metric in REPORT_METRICS:
            records.append({'source': source, 'f_Hz': row['f_Hz'], 'metric': metric,
                            'mean': row[f'{metric}_mean'], 'std': row[f'{metric}_std']})
    return pd.DataFrame(records)

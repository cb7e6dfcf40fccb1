"""
Meshless Helmholtz-Hodge reconstruction of the landscape from force and torque samples.

Samples live in a unified x-alpha-beta space where x is scaled by ``ratio``
(mm -> unified units) and the x-component of every vector by ``1 / ratio``,
so a base-vector product keeps its N*mm units. The field is fitted as

    f(u) = -grad(Phi) + curl(A),  Phi = sum a_i phi_i,  A = sum phi_i b_i

with Gaussian kernels ``phi_i(u) = exp(-sigma |u - c_i|^2)``. Phi is the
reconstructed landscape.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh
from scipy.spatial import cKDTree
from sklearn.cluster import KMeans
from tqdm import tqdm

from .exceptions import ReconstructionError
from .geometry import BodyParams
from .landscape import LandscapeGrid
from .signal import AveragedTrial
from .simulate import force_channels
from .utils import read_json, write_json

logger = logging.getLogger(__name__)

UNIFICATION_RATIO = 0.01
CENTER_REJECTION = 1e-4
DEFAULT_RIDGE = 1e-6
SOURCES = ('raw', 'normal', 'model')


def to_unified(nodes: np.ndarray, ratio: float = UNIFICATION_RATIO) -> np.ndarray:
    """(x mm, alpha rad, beta rad) rows -> unified coordinates."""
    out = np.array(nodes, dtype=float, copy=True).reshape(-1, 3)
    out[:, 0] *= ratio
    return out


@dataclass(eq=False)
class VectorFieldSamples:
    """
    Scattered samples of the negative landscape gradient.

    Attributes:
        bases: (n, 3) unified coordinates
        vectors: (n, 3) field values, x-component per unified unit
        source: ``'raw'``, ``'normal'`` or ``'model'``
        ratio: x scaling used for the bases
    """
    bases: np.ndarray
    vectors: np.ndarray
    source: str
    ratio: float = UNIFICATION_RATIO

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=float).reshape(-1, 3)
        self.vectors = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        if len(self.bases) != len(self.vectors):
            raise ReconstructionError(
                f"{len(self.bases)} bases but {len(self.vectors)} vectors")

    def __len__(self) -> int:
        return len(self.bases)

    def drop(self, fraction: float, seed: int = 0) -> 'VectorFieldSamples':
        """Delete a random ``fraction`` of the samples (seeded)."""
        if not 0 <= fraction < 1:
            raise ReconstructionError(f"drop fraction must lie in [0, 1), got {fraction}")
        if fraction == 0:
            return self
        rng = np.random.default_rng(seed)
        n_keep = max(1, int(round(len(self) * (1.0 - fraction))))
        keep = np.sort(rng.choice(len(self), size=n_keep, replace=False))
        return replace(self, bases=self.bases[keep], vectors=self.vectors[keep])


def gravity_terms(alpha: np.ndarray, beta: np.ndarray, body: BodyParams) -> np.ndarray:
    """Gravitational generalized force along (x, alpha, beta) for arrays of angles (rad)."""
    w, h = body.weight, body.com_offset
    return np.stack([
        np.zeros_like(alpha),
        -w * h * np.sin(alpha) * np.cos(beta),
        -w * h * np.cos(alpha) * np.sin(beta),
    ], axis=1)


def assemble_samples(averaged: Sequence[AveragedTrial], source: str, body: BodyParams,
                     x_range: Tuple[float, float] = (-100.0, 100.0), x_stride: float = 1.0,
                     ratio: float = UNIFICATION_RATIO) -> VectorFieldSamples:
    """
    Combine averaged trials into samples of -grad(PE).

    For the ``raw`` and ``normal`` sources each vector is the measured
    (F_x, T_alpha, T_beta) plus the analytic gravity terms; for ``model`` it is
    the negative model gradient recorded alongside the trial. Bases use the
    averaged pose, so perturbed trials give heterogeneous bases.

    Args:
        averaged: Averaged trials
        source: Force source
        body: Inertial parameters for the gravity terms
        x_range: Inclusive x window (mm)
        x_stride: Keep grid points every ``x_stride`` mm
        ratio: x unification ratio

    Returns:
        VectorFieldSamples

    Raises:
        ReconstructionError: If the source is unknown or no sample survives
    """
    if source not in SOURCES:
        raise ReconstructionError(f"Unknown sample source '{source}'")
    bases, vectors = [], []
    for avg in averaged:
        df = avg.valid
        x = df['x_mm'].to_numpy(dtype=float)
        offset = np.mod(x - x_range[0], x_stride)
        on_stride = np.isclose(offset, 0.0, atol=1e-9) | np.isclose(offset, x_stride, atol=1e-9)
        df = df[(x >= x_range[0]) & (x <= x_range[1]) & on_stride]
        if df.empty:
            continue
        alpha = np.radians(df['alpha_deg'].to_numpy(dtype=float))
        beta = np.radians(df['beta_deg'].to_numpy(dtype=float))
        if source == 'model':
            vec = -df[['dPE_dx_N', 'dPE_dalpha_Nmm', 'dPE_dbeta_Nmm']].to_numpy(dtype=float)
        else:
            vec = df[list(force_channels(source))].to_numpy(dtype=float)
            vec = vec + gravity_terms(alpha, beta, body)
        base = np.column_stack([df['x_mm'].to_numpy(dtype=float), alpha, beta])
        bases.append(base)
        vectors.append(vec)
    if not bases:
        raise ReconstructionError(f"No {source} samples inside x = {x_range} mm")
    bases = to_unified(np.concatenate(bases), ratio)
    vectors = np.concatenate(vectors)
    vectors[:, 0] /= ratio
    finite = np.all(np.isfinite(bases), axis=1) & np.all(np.isfinite(vectors), axis=1)
    if not finite.any():
        raise ReconstructionError(f"All {source} samples are non-finite")
    if not finite.all():
        logger.warning(f"Dropping {int((~finite).sum())} non-finite {source} samples")
    return VectorFieldSamples(bases=bases[finite], vectors=vectors[finite], source=source,
                              ratio=ratio)


def kmeans_centers(bases: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
                   tol: float = 1e-8, rejection: float = CENTER_REJECTION) -> np.ndarray:
    """
    Kernel centres by k-means++ seeded Lloyd iterations on the bases.

    Centres closer than ``rejection`` to any base are dropped.

    Args:
        bases: (n, 3) unified bases
        k: Requested number of centres; reduced to the number of distinct bases if larger
        seed: Random state for the seeding
        max_iter: Lloyd iteration budget
        tol: KMeans convergence tolerance, relative to the mean per-axis variance of the
            bases (not an absolute shift in centre position)
        rejection: Minimum centre-to-base distance

    Returns:
        (k', 3) centres, k' <= k

    Raises:
        ReconstructionError: If ``k < 1`` or there are no bases
    """
    bases = np.asarray(bases, dtype=float).reshape(-1, 3)
    if k < 1:
        raise ReconstructionError(f"k must be >= 1, got {k}")
    if len(bases) == 0:
        raise ReconstructionError("No bases to cluster")
    n_distinct = len(np.unique(bases, axis=0))
    if k > n_distinct:
        logger.warning(f"Reducing k from {k} to the {n_distinct} distinct bases")
        k = n_distinct
    kmeans = KMeans(n_clusters=k, init='k-means++', n_init=1, max_iter=max_iter, tol=tol,
                    random_state=seed)
    kmeans.fit(bases)
    centers = kmeans.cluster_centers_
    distance, _ = cKDTree(bases).query(centers)
    keep = distance >= rejection
    if not keep.all():
        logger.info(f"Rejected {int((~keep).sum())} centres within {rejection} of a base")
    return centers[keep]


def default_sigma(centers: np.ndarray) -> float:
    """Kernel sharpness 1 / (2 d^2) with d the median nearest-centre spacing."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    if len(centers) < 2:
        return 1.0
    distance, _ = cKDTree(centers).query(centers, k=2)
    spacing = float(np.median(distance[:, 1]))
    if spacing <= 0:
        raise ReconstructionError("Centres coincide; cannot choose a kernel width")
    return 1.0 / (2.0 * spacing ** 2)


def _kernel_terms(points: np.ndarray, centers: np.ndarray,
                  sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Kernel values (m, k) and gradients (m, k, 3) at the points."""
    d = points[:, None, :] - centers[None, :, :]
    phi = np.exp(-sigma * np.einsum('mkj,mkj->mk', d, d))
    return phi, -2.0 * sigma * d * phi[:, :, None]


def _design_block(points: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Design rows for the points: columns [a_1..a_k, b_1x, b_1y, b_1z, ...]."""
    m, k = len(points), len(centers)
    _, grad = _kernel_terms(points, centers, sigma)
    gx, gy, gz = grad[..., 0], grad[..., 1], grad[..., 2]
    zero = np.zeros_like(gx)
    # grad(phi) x b as a matrix acting on b
    cross = np.stack([
        np.stack([zero, -gz, gy], axis=-1),
        np.stack([gz, zero, -gx], axis=-1),
        np.stack([-gy, gx, zero], axis=-1),
    ], axis=1)
    block = np.empty((m, 3, 4 * k))
    block[:, :, :k] = -np.transpose(grad, (0, 2, 1))
    block[:, :, k:] = cross.reshape(m, 3, 3 * k)
    return block.reshape(3 * m, 4 * k)


@dataclass(eq=False)
class ReconstructionModel:
    """
    Fitted kernel decomposition.

    Attributes:
        centers: (k, 3) unified centres
        sigma: Kernel sharpness (unified units^-2)
        a: (k,) scalar-potential coefficients
        b: (k, 3) vector-potential coefficients
        ridge: Regularisation added to the normal equations
        gauge: Constant added to Phi
        ratio: x unification ratio
        source: Sample source the model was fitted to
        seed: k-means seed
        info: Fit diagnostics
    """
    centers: np.ndarray
    sigma: float
    a: np.ndarray
    b: np.ndarray
    ridge: float = 0.0
    gauge: float = 0.0
    ratio: float = UNIFICATION_RATIO
    source: str = 'model'
    seed: int = 0
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1, 3)
        k = len(self.centers)
        if k < 1 or len(self.a) != k or len(self.b) != k:
            raise ReconstructionError("Model needs k >= 1 centres with matching coefficients")

    @property
    def k(self) -> int:
        return len(self.centers)

    def _chunks(self, points: np.ndarray, chunk_size: int = 4096):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        for start in range(0, len(points), chunk_size):
            yield points[start:start + chunk_size]

    def potential(self, points: np.ndarray) -> np.ndarray:
        """Phi at unified points (N*mm)."""
        out = [_kernel_terms(p, self.centers, self.sigma)[0] @ self.a
               for p in self._chunks(points)]
        return np.concatenate(out) + self.gauge if out else np.zeros(0)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """grad(Phi) at unified points, x-component per unified unit."""
        out = [np.einsum('mkj,k->mj', _kernel_terms(p, self.centers, self.sigma)[1], self.a)
               for p in self._chunks(points)]
        return np.concatenate(out) if out else np.zeros((0, 3))

    def field(self, points: np.ndarray) -> np.ndarray:
        """Full fitted field -grad(Phi) + curl(A)."""
        out = []
        for p in self._chunks(points):
            _, grad = _kernel_terms(p, self.centers, self.sigma)
            curl = np.cross(grad, self.b[None, :, :]).sum(axis=1)
            out.append(-np.einsum('mkj,k->mj', grad, self.a) + curl)
        return np.concatenate(out) if out else np.zeros((0, 3))

    def evaluate(self, point: Sequence[float]) -> Tuple[float, np.ndarray]:
        """
        Phi and grad(Phi) at one unified point.

        Returns:
            Tuple of (Phi in N*mm, gradient in unified units)
        """
        p = np.asarray(point, dtype=float).reshape(1, 3)
        return float(self.potential(p)[0]), self.gradient(p)[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'centers': self.centers, 'sigma': self.sigma, 'a': self.a, 'b': self.b,
            'ridge': self.ridge, 'gauge': self.gauge, 'ratio': self.ratio,
            'source': self.source, 'seed': self.seed, 'info': self.info,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ReconstructionModel':
        return cls(centers=np.array(data['centers'], dtype=float), sigma=float(data['sigma']),
                   a=np.array(data['a'], dtype=float), b=np.array(data['b'], dtype=float),
                   ridge=float(data['ridge']), gauge=float(data['gauge']),
                   ratio=float(data['ratio']), source=data['source'], seed=int(data['seed']),
                   info=data.get('info', {}))

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ReconstructionModel':
        return cls.from_dict(read_json(path))


def evaluate(model: ReconstructionModel, point: Sequence[float]) -> Tuple[float, np.ndarray]:
    """Module-level form of :meth:`ReconstructionModel.evaluate`."""
    return model.evaluate(point)


def hhd_fit(samples: VectorFieldSamples, centers: np.ndarray, sigma: Optional[float] = None,
            ridge: float = DEFAULT_RIDGE, chunk_size: int = 256,
            seed: int = 0) -> ReconstructionModel:
    """
    Ridge least-squares fit of the kernel decomposition.

    The normal equations are accumulated over row chunks and solved with a
    Cholesky factorisation. The regularisation is ``ridge`` times the largest
    diagonal entry of the normal matrix.

    Args:
        samples: Field samples
        centers: (k, 3) kernel centres
        sigma: Kernel sharpness; median-spacing heuristic when None
        ridge: Relative regularisation
        chunk_size: Samples per accumulation chunk
        seed: Recorded with the model

    Returns:
        ReconstructionModel with residual diagnostics in ``info``

    Raises:
        ReconstructionError: On empty input or when the regularised system is not positive definite
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    if len(samples) == 0:
        raise ReconstructionError("No samples to fit")
    if len(centers) == 0:
        raise ReconstructionError("No kernel centres")
    sigma = default_sigma(centers) if sigma is None else float(sigma)
    if not sigma > 0:
        raise ReconstructionError(f"sigma must be > 0, got {sigma}")
    k = len(centers)
    if len(samples) < 4 * k:
        logger.warning(f"{len(samples)} samples for {4 * k} coefficients; "
                       f"the fit is underdetermined without regularisation")

    ata = np.zeros((4 * k, 4 * k))
    atb = np.zeros(4 * k)
    btb = 0.0
    starts = range(0, len(samples), chunk_size)
    for start in tqdm(starts, desc='Design matrix', unit='chunk', disable=None):
        block = _design_block(samples.bases[start:start + chunk_size], centers, sigma)
        rhs = samples.vectors[start:start + chunk_size].reshape(-1)
        ata += block.T @ block
        atb += block.T @ rhs
        btb += float(rhs @ rhs)

    lam = ridge * float(np.max(np.diag(ata)))
    system = ata + lam * np.eye(4 * k)
    try:
        if not np.all(np.isfinite(system)):
            raise LinAlgError("non-finite normal matrix")
        factor = cho_factor(system, lower=True, check_finite=False)
    except LinAlgError as e:
        eig = eigvalsh(system)
        condition = float(abs(eig[-1]) / abs(eig[0])) if eig[0] != 0 else math.inf
        logger.error(f"HHD fit failed: {e} (condition estimate {condition:.3g})")
        raise ReconstructionError(f"Normal equations are not positive definite: {e}",
                                  condition=condition) from e
    coef = cho_solve(factor, atb, check_finite=False)

    residual = max(btb - 2.0 * float(coef @ atb) + float(coef @ ata @ coef), 0.0)
    info = {
        'n_samples': len(samples),
        'k': k,
        'residual_rms': math.sqrt(residual / (3 * len(samples))),
        'residual_relative': math.sqrt(residual / btb) if btb > 0 else 0.0,
    }
    logger.info(f"HHD fit ({samples.source}): k={k}, n={len(samples)}, "
                f"relative residual {info['residual_relative']:.4f}")
    return ReconstructionModel(centers=centers, sigma=sigma, a=coef[:k], b=coef[k:].reshape(k, 3),
                               ridge=lam, ratio=samples.ratio, source=samples.source, seed=seed,
                               info=info)


def fit_landscape(samples: VectorFieldSamples, k: int, seed: int = 0, sigma: Optional[float] = None,
                  ridge: float = DEFAULT_RIDGE, chunk_size: int = 256) -> ReconstructionModel:
    """k-means centres followed by :func:`hhd_fit`."""
    centers = kmeans_centers(samples.bases, k, seed=seed)
    return hhd_fit(samples, centers, sigma=sigma, ridge=ridge, chunk_size=chunk_size, seed=seed)


def align_gauge(model: ReconstructionModel, reference: LandscapeGrid) -> ReconstructionModel:
    """
    Set the gauge so the mean of Phi equals the mean of ``reference`` over its finite nodes.

    Raises:
        ReconstructionError: If the reference has no finite node
    """
    finite = np.isfinite(reference.pe.ravel())
    if not finite.any():
        raise ReconstructionError("Reference landscape has no finite nodes")
    nodes = to_unified(reference.nodes()[finite], model.ratio)
    raw = replace(model, gauge=0.0).potential(nodes)
    return replace(model, gauge=float(reference.pe.ravel()[finite].mean() - raw.mean()))


def reconstruct_landscape(model: ReconstructionModel, x_axis: Sequence[float],
                          alpha_axis: Sequence[float], beta_axis: Sequence[float],
                          reference: Optional[LandscapeGrid] = None) -> LandscapeGrid:
    """
    Evaluate Phi and grad(Phi) on a grid.

    Args:
        model: Fitted model
        x_axis: x values (mm)
        alpha_axis: Roll values (rad)
        beta_axis: Pitch values (rad)
        reference: Landscape used for mean alignment of the gauge

    Returns:
        LandscapeGrid with the gradient converted back to N, N*mm/rad, N*mm/rad
    """
    if reference is not None:
        model = align_gauge(model, reference)
    grid = LandscapeGrid(x=x_axis, alpha=alpha_axis, beta=beta_axis,
                         pe=np.zeros((len(x_axis), len(alpha_axis), len(beta_axis))))
    nodes = to_unified(grid.nodes(), model.ratio)
    grid.pe = model.potential(nodes).reshape(grid.shape)
    grad = model.gradient(nodes)
    grad[:, 0] *= model.ratio
    grid.grad = grad.reshape(grid.shape + (3,))
    return grid

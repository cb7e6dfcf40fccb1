import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import pandas as pd

from .exceptions import MissingArtifactError

PathLike = Union[str, Path]

# Enough digits that a CSV reread reproduces every float64 exactly.
CSV_FLOAT_FORMAT = '%.17g'


def wrap_angle(angle: float) -> float:
    """
    Wrap an angle into the half-open interval (-pi, pi].

    Args:
        angle: Angle in radians

    Returns:
        Equivalent angle in (-pi, pi]
    """
    wrapped = angle - 2.0 * math.pi * math.ceil((angle - math.pi) / (2.0 * math.pi))
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def angle_tag(value_deg: float) -> str:
    """Encode an angle in degrees for use in a file name (``-12.5`` -> ``m12p5``)."""
    text = f"{value_deg:g}".replace('-', 'm').replace('.', 'p')
    return text


def frequency_tag(value_hz: float) -> str:
    """Encode a frequency in Hz for use in a file name (``0.5`` -> ``0p5``)."""
    return f"{value_hz:g}".replace('.', 'p')


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy scalars and arrays (possibly nested) into plain JSON types.

    Args:
        obj: Object to convert

    Returns:
        Structure made of dicts, lists, floats, ints, strings and None
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj: Any, path: PathLike) -> Path:
    """Write ``obj`` as sorted, indented JSON and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write('\n')
    return path


def read_json(path: PathLike) -> Any:
    """
    Read a JSON document.

    Raises:
        MissingArtifactError: If the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path)
    with open(path, 'r', encoding='utf-8') as fh:
        return json.load(fh)


def write_frame(df: pd.DataFrame, path: PathLike) -> Path:
    """Write a DataFrame as CSV with a fixed float format so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    return path


def read_frame(path: PathLike) -> pd.DataFrame:
    """
    Read a CSV written by :func:`write_frame`.

    Raises:
        MissingArtifactError: If the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path)
    return pd.read_csv(path, float_precision='round_trip')


def file_digest(path: PathLike) -> str:
    """Return the SHA-256 hex digest of a file's content."""
    sha = hashlib.sha256()
    with open(path, 'rb') as fh:
        for block in iter(lambda: fh.read(1 << 16), b''):
            sha.update(block)
    return sha.hexdigest()


def config_digest(config: Dict[str, Any]) -> str:
    """Return the SHA-256 hex digest of a configuration mapping in canonical JSON form."""
    text = json.dumps(to_jsonable(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def select_and_reorder_columns(df: pd.DataFrame, leading: Iterable[str]) -> pd.DataFrame:
    """
    Put the ``leading`` columns first (when present) and keep every other column after them.

    Args:
        df: Input DataFrame
        leading: Column names that should come first, in order

    Returns:
        DataFrame with reordered columns
    """
    leading_present: List[str] = [col for col in leading if col in df.columns]
    others = [col for col in df.columns if col not in leading_present]
    return df[leading_present + others]

"""
Data loading and report writing:
- Datasets from CSV (header optional) or the JSON envelope {n, d, bounds, points}
- Discrete distributions and mixture specs from JSON, validated with jsonschema
- Objective traces and tabular reports as CSV
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import jsonschema
import numpy as np
import pandas as pd

from lassokmeans.config import DATASET_SCHEMA, DISTRIBUTION_SCHEMA, MIXTURE_SPEC_SCHEMA, TRACE_COLUMNS
from lassokmeans.core import Dataset, DiscreteDistribution, InvalidDataError, InvalidSpecError
from lassokmeans.synth.mixture import MixtureSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def file_sha256(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidDataError(f"{Path(path).name} is not valid JSON: {e}") from e


def _validate(data: Dict[str, Any], schema: Dict[str, Any], what: str, error=InvalidDataError) -> None:
    try:
        jsonschema.validate(instance=data, schema=schema)
    except jsonschema.ValidationError as e:
        raise error(f"invalid {what}: {e.message}") from e


def save_json(data: Dict[str, Any], path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")


def _read_numeric_csv(path: PathLike) -> pd.DataFrame:
    """Read a headerless or headed numeric CSV; floats parse back bit-exactly."""
    try:
        df = pd.read_csv(path, header=None, float_precision="round_trip")
        if any(dtype == object for dtype in df.dtypes):
            df = pd.read_csv(path, header=0, float_precision="round_trip")
    except (FileNotFoundError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InvalidDataError(f"could not read {path}: {e}") from e
    try:
        df = df.apply(pd.to_numeric)
    except (ValueError, TypeError) as e:
        raise InvalidDataError(f"{path} contains non-numeric values") from e
    if df.empty:
        raise InvalidDataError(f"{path} contains no rows")
    if df.isna().any().any():
        raise InvalidDataError(f"{path} has missing values")
    return df


def load_dataset(path: PathLike, bounds: Optional[Sequence[float]] = None) -> Dataset:
    """
    Load a dataset from CSV or a JSON envelope.

    Args:
        path: CSV file (one row per point) or JSON with keys n, d, bounds, points
        bounds: per-coordinate M_p overriding the file; defaults to the empirical max-abs

    Returns:
        Dataset: validated dataset
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = _read_json(path)
        _validate(data, DATASET_SCHEMA, "dataset envelope")
        if bounds is not None:
            data = {**data, "bounds": list(bounds)}
        dataset = Dataset.from_dict(data)
    else:
        df = _read_numeric_csv(path)
        dataset = Dataset.from_points(df.to_numpy(dtype=np.float64), bounds)
    logger.info(f"Loaded dataset {path.name}: n={dataset.n}, d={dataset.d}")
    return dataset


def save_dataset_csv(X: Dataset, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(X.points, columns=[f"x{p}" for p in range(X.d)])
    df.to_csv(path, index=False)
    logger.info(f"Wrote {X.n} points to {path}")


def load_distribution(path: PathLike) -> DiscreteDistribution:
    data = _read_json(path)
    _validate(data, DISTRIBUTION_SCHEMA, "discrete distribution")
    return DiscreteDistribution.from_dict(data)


def load_input(path: PathLike) -> Union[Dataset, DiscreteDistribution]:
    """A discrete distribution when the JSON carries `atoms`, otherwise a dataset."""
    path = Path(path)
    if path.suffix.lower() == ".json" and "atoms" in _read_json(path):
        return load_distribution(path)
    return load_dataset(path)


def mixture_spec_from_dict(data: Dict[str, Any]) -> MixtureSpec:
    _validate(data, MIXTURE_SPEC_SCHEMA, "mixture spec", error=InvalidSpecError)
    return MixtureSpec.from_dict(data)


def load_mixture_spec(path: PathLike) -> MixtureSpec:
    try:
        data = _read_json(path)
    except InvalidDataError as e:
        raise InvalidSpecError(str(e)) from e
    return mixture_spec_from_dict(data)


def save_trace_csv(trace: Sequence[float], path: PathLike) -> None:
    df = pd.DataFrame({"iter": np.arange(len(trace)), "objective": list(trace)}, columns=TRACE_COLUMNS)
    save_frame(df, path)


def save_frame(df: pd.DataFrame, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    logger.info(f"Wrote {len(df)} rows to {path}")


def read_frame(path: PathLike, columns: List[str]) -> pd.DataFrame:
    """Read a report CSV and check it carries exactly the declared columns."""
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (FileNotFoundError, pd.errors.EmptyDataError) as e:
        raise InvalidDataError(f"could not read {path}: {e}") from e
    if list(df.columns) != list(columns):
        raise InvalidDataError(f"{path} has columns {list(df.columns)}, expected {list(columns)}")
    return df

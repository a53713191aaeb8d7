"""All file I/O of the CLI: JSON reports with round-trip floats and CSV tables."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from ..errors import DataError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def _finite(obj: Any) -> Any:
    """Replaces non-finite floats by None all the way down"""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _numpy_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj: Any, indent: int = 2) -> str:
    """JSON with round-trip float precision; NaN and infinities become null"""
    return json.dumps(_finite(obj), indent=indent, default=_numpy_default, allow_nan=False)


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(obj) + '\n', encoding='utf-8')
    logger.info(f"📄 Wrote {path}")
    return path


def write_csv(path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"📄 Wrote {path} ({len(frame)} rows)")
    return path


def read_records(path, layout: Dict[str, List[str]]) -> Tuple[np.ndarray, Dict[str, int], List[str]]:
    """Reads the layout's columns in role order.

    Returns the (n, width) record matrix, the width of each role and the
    column names. Errors carry the 1-based file line (the header is line 1).
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"data file {path} is empty", line=1) from e
    except pd.errors.ParserError as e:
        raise DataError(f"cannot parse {path}: {e}") from e

    columns = [name for names in layout.values() for name in names]
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise DataError(f"missing column(s) {', '.join(repr(m) for m in missing)} in {path}", line=1)
    if frame.empty:
        raise DataError(f"data file {path} has no rows", line=2)

    values = frame[columns].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        bad_col = columns[int(np.flatnonzero(~np.isfinite(values[row]))[0])]
        raise DataError(f"non-numeric or non-finite value in column '{bad_col}'", line=row + 2)
    return values, {role: len(names) for role, names in layout.items()}, columns

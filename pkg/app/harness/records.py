# app/harness/records.py
from __future__ import annotations
import csv
import logging
from pathlib import Path
from typing import Iterable, Sequence, Union

import pandas as pd

from app.config import CSV_SCHEMA_VERSION

logger = logging.getLogger(__name__)

SCHEMA_LINE = f"# svi-lab v{CSV_SCHEMA_VERSION}"

PATH_COLUMNS = ["path_id", "k", "metric_name", "value"]
AGGREGATE_COLUMNS = ["k", "metric_name", "mean", "std", "count"]
TIKHONOV_COLUMNS = ["k", "mean_sq_error", "gamma_over_eta_eps2", "ratio"]


def _fmt(v):
    # repr keeps every bit of a float so reruns compare byte for byte
    return repr(float(v)) if isinstance(v, float) else v


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(SCHEMA_LINE + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    logger.debug("wrote %s", path)
    return path


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(SCHEMA_LINE + "\n")
        frame.to_csv(f, index=False, lineterminator="\n", float_format="%.6e")
    logger.debug("wrote %s", path)
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Reads a file written by this module, skipping the schema line."""
    return pd.read_csv(path, comment="#")

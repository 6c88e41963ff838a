import re
from functools import lru_cache
from logging import Logger, getLogger
from typing import Optional

import numpy as np
import pandas as pd

from openloop_fw import exceptions
from openloop_fw.settings import app_settings


class rewrite_exceptions:
    """Context manager that swallows numpy, pandas and I/O exceptions and
    raises the matching openloop_fw exception instead, so the CLI can map
    every failure to an exit code.

    To aid in debugging, this context manager accepts an optional logger
    argument that will be used to log the original exception.
    """

    def __init__(self, logger: Optional[Logger] = None, source: str = ""):
        self.logger = logger
        self.source = source

    def log_exception(self, exc: Exception):
        if self.logger:
            self.logger.exception(exc)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None or issubclass(exc_type, exceptions.FrankWolfeError):
            return False
        if issubclass(exc_type, FileNotFoundError):
            self.log_exception(exc_val)
            raise exceptions.DatasetNotFound(path=self.source or str(exc_val.filename)) from exc_val
        elif issubclass(exc_type, pd.errors.EmptyDataError):
            self.log_exception(exc_val)
            raise exceptions.ParseError(detail="The file contains no observations.", path=self.source) from exc_val
        elif issubclass(exc_type, pd.errors.ParserError):
            self.log_exception(exc_val)
            line = _line_from_message(str(exc_val))
            raise exceptions.ParseError(detail=str(exc_val), path=self.source, line=line) from exc_val
        elif issubclass(exc_type, np.linalg.LinAlgError):
            self.log_exception(exc_val)
            raise exceptions.NumericalInconsistency(detail=f"Linear algebra failure: {exc_val}") from exc_val
        elif issubclass(exc_type, FloatingPointError):
            self.log_exception(exc_val)
            raise exceptions.NumericalInconsistency(detail=f"Floating point failure: {exc_val}") from exc_val
        return False


def _line_from_message(message: str) -> Optional[int]:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else None


@lru_cache(maxsize=1)
def get_exception_logger() -> Optional[Logger]:
    logger_name = app_settings.FW_EXCEPTION_LOGGER_NAME
    if logger_name:
        return getLogger(logger_name)
    return None


def slugify(value: str) -> str:
    """Turn a schedule or region spec like ``fixed:2`` into ``fixed-2``."""
    return re.sub(r"[^A-Za-z0-9.]+", "-", value).strip("-").lower()


def as_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise exceptions.DimensionMismatch(detail=f"{name} must be one-dimensional.", shape=arr.shape)
    if not np.all(np.isfinite(arr)):
        raise exceptions.InvalidParameter(detail=f"{name} contains non-finite entries.")
    return arr


def as_matrix(a, name: str = "A") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise exceptions.DimensionMismatch(detail=f"{name} must be two-dimensional.", shape=arr.shape)
    if not np.all(np.isfinite(arr)):
        raise exceptions.InvalidParameter(detail=f"{name} contains non-finite entries.")
    return arr


def spawn_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for child ``stream`` of ``seed``.

    Children never share draws with ``default_rng(seed)``, which synthetic
    instances are built from.
    """
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(stream + 1)[stream])

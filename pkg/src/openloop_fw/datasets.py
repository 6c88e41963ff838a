"""Dataset loading and synthetic instance generation.

Dense regression data comes from a CSV with a header row and a named target
column; every column is Z-scored. Ratings data comes in the MovieLens
``u.data`` layout: tab-separated ``user item rating timestamp`` with 1-based
ids.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from openloop_fw import exceptions
from openloop_fw.linalg import least_squares
from openloop_fw.objectives import CompletionObjective, RegressionObjective
from openloop_fw.utils import get_exception_logger, rewrite_exceptions

logger = logging.getLogger(__name__)

DENSE = "dense"
RATINGS = "ratings"

IDENTITY = "identity"
GAUSSIAN = "gaussian"

MOVIELENS_COLUMNS = ("user", "item", "rating", "timestamp")


@dataclass(frozen=True)
class DatasetBundle:
    kind: str
    source: str = ""
    # dense
    A: Optional[np.ndarray] = field(default=None, repr=False)
    y: Optional[np.ndarray] = field(default=None, repr=False)
    feature_names: tuple[str, ...] = ()
    target: Optional[str] = None
    means: Optional[pd.Series] = field(default=None, repr=False)
    stds: Optional[pd.Series] = field(default=None, repr=False)
    # ratings
    row_index: Optional[np.ndarray] = field(default=None, repr=False)
    col_index: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    rows: int = 0
    cols: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        if self.kind == DENSE:
            return self.A.shape
        return (self.rows, self.cols)

    @property
    def n_observed(self) -> int:
        return int(self.values.size) if self.kind == RATINGS else int(self.A.shape[0])

    def objective(self, rho: float = 1.0):
        if self.kind == DENSE:
            return RegressionObjective(self.A, self.y)
        return CompletionObjective(self.row_index, self.col_index, self.values, (self.rows, self.cols), rho=rho)


def zscore(frame: pd.DataFrame) -> tuple[pd.DataFrame, pd.Series, pd.Series]:
    """Center every column and scale it to unit (population) standard deviation."""
    means = frame.mean()
    stds = frame.std(ddof=0)
    scale = np.maximum(frame.abs().max(), 1.0)
    for column in frame.columns:
        if not stds[column] > 1e-12 * scale[column]:
            raise exceptions.ZScoreDegenerate(column=column)
    return (frame - means) / stds, means, stds


def _numeric_frame(frame: pd.DataFrame, path: str) -> pd.DataFrame:
    numeric = {}
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = values.isna() | ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            # Line 1 is the header.
            raise exceptions.ParseError(
                detail="Non-numeric or missing cell.",
                path=path,
                row=row,
                line=row + 2,
                column=column,
                value=frame[column].iloc[row],
            )
        numeric[column] = values.astype(float)
    return pd.DataFrame(numeric, columns=frame.columns)


def load_dense_csv(path, target_column: str) -> DatasetBundle:
    """Z-scored design matrix and target from a numeric CSV with a header row."""
    path = str(path)
    with rewrite_exceptions(logger=get_exception_logger(), source=path):
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    if frame.empty:
        raise exceptions.ParseError(detail="The file contains no observations.", path=path)
    if target_column not in frame.columns:
        raise exceptions.ParseError(detail=f"Target column {target_column!r} is missing.", path=path, column=target_column)

    numeric = _numeric_frame(frame, path)
    normalized, means, stds = zscore(numeric)
    features = [column for column in normalized.columns if column != target_column]
    if not features:
        raise exceptions.ParseError(detail="The file has no feature columns.", path=path)
    logger.info("Loaded %s: m=%d, n=%d, target %s", path, len(normalized), len(features), target_column)
    return DatasetBundle(
        kind=DENSE,
        source=path,
        A=normalized[features].to_numpy(dtype=float),
        y=normalized[target_column].to_numpy(dtype=float),
        feature_names=tuple(features),
        target=target_column,
        means=means,
        stds=stds,
    )


def _densest(ids: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    unique, counts = np.unique(ids, return_counts=True)
    if unique.size <= cap:
        return unique
    # Random tie-break among equally dense ids, then most ratings first.
    shuffled = rng.permutation(unique.size)
    order = shuffled[np.argsort(-counts[shuffled], kind="stable")]
    return np.sort(unique[order[:cap]])


def load_movielens(path, subsample: Optional[tuple[int, int, int]] = None) -> DatasetBundle:
    """Observed ratings with ids remapped to dense 0-based indices.

    ``subsample = (max_users, max_items, seed)`` keeps the users with most
    ratings, then among their ratings the items with most ratings.
    """
    path = str(path)
    with rewrite_exceptions(logger=get_exception_logger(), source=path):
        frame = pd.read_csv(path, sep="\t", header=None, names=list(MOVIELENS_COLUMNS), dtype=str)
    if frame.empty:
        raise exceptions.ParseError(detail="The file contains no observations.", path=path)

    parsed = {name: pd.to_numeric(frame[name], errors="coerce") for name in ("user", "item", "rating")}
    bad = parsed["user"].isna() | parsed["item"].isna() | parsed["rating"].isna()
    for name in ("user", "item"):
        ids = parsed[name]
        bad |= (ids < 1) | (ids != np.floor(ids))
    bad |= ~np.isfinite(parsed["rating"])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise exceptions.ParseError(detail="Malformed rating row.", path=path, line=row + 1)

    users = parsed["user"].to_numpy(dtype=np.int64)
    items = parsed["item"].to_numpy(dtype=np.int64)
    ratings = parsed["rating"].to_numpy(dtype=float)

    if subsample is not None:
        max_users, max_items, seed = subsample
        if max_users < 1 or max_items < 1:
            raise exceptions.InvalidParameter(detail="Subsample caps must be positive.", subsample=subsample)
        rng = np.random.default_rng(seed)
        keep = np.isin(users, _densest(users, max_users, rng))
        users, items, ratings = users[keep], items[keep], ratings[keep]
        keep = np.isin(items, _densest(items, max_items, rng))
        users, items, ratings = users[keep], items[keep], ratings[keep]
        if not ratings.size:
            raise exceptions.ParseError(detail="The subsample contains no observations.", path=path)

    user_ids, row_index = np.unique(users, return_inverse=True)
    item_ids, col_index = np.unique(items, return_inverse=True)
    logger.info("Loaded %s: %d users, %d items, %d ratings", path, user_ids.size, item_ids.size, ratings.size)
    return DatasetBundle(
        kind=RATINGS,
        source=path,
        row_index=row_index.astype(np.intp),
        col_index=col_index.astype(np.intp),
        values=ratings,
        rows=int(user_ids.size),
        cols=int(item_ids.size),
    )


def synth_regression(seed: int, m: int, n: int, kind: str = IDENTITY) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(A, y, x_unc)`` for a reproducible regression instance.

    ``identity`` uses ``A = I_n`` (so ``m`` must equal ``n`` and ``x_unc = y``);
    ``gaussian`` draws ``A`` with i.i.d. standard normal entries. ``y`` is
    standard normal in both cases.
    """
    if n < 1 or m < n:
        raise exceptions.InvalidParameter(detail="Need m >= n >= 1.", m=m, n=n)
    rng = np.random.default_rng(seed)
    if kind == IDENTITY:
        if m != n:
            raise exceptions.InvalidParameter(detail="Identity instances are square.", m=m, n=n)
        A = np.eye(n)
        y = rng.standard_normal(n)
        return A, y, y.copy()
    if kind == GAUSSIAN:
        A = rng.standard_normal((m, n))
        y = rng.standard_normal(m)
        return A, y, least_squares(A, y)
    raise exceptions.InvalidParameter(detail=f"Unknown synthetic kind {kind!r}. Use identity or gaussian.", kind=kind)


def synthetic_bundle(seed: int, m: int, n: int, kind: str = IDENTITY) -> DatasetBundle:
    A, y, _ = synth_regression(seed, m, n, kind)
    return DatasetBundle(kind=DENSE, source=f"synthetic:{kind}:{seed}", A=A, y=y)


def write_movielens(path, row_index, col_index, values) -> Path:
    """Write ratings in the ``u.data`` layout with 1-based ids and zero timestamps."""
    frame = pd.DataFrame(
        {
            "user": np.asarray(row_index, dtype=np.int64) + 1,
            "item": np.asarray(col_index, dtype=np.int64) + 1,
            "rating": np.asarray(values),
            "timestamp": 0,
        }
    )
    path = Path(path)
    frame.to_csv(path, sep="\t", header=False, index=False, lineterminator="\n")
    return path

"""Interaction ingestion, activity filtering and strong-generalization splits."""

import logging
from pathlib import Path
from typing import Dict, Iterable, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .models import ConfigError, DataError, EvalSplit, Interaction, InteractionMatrix, MalformedRowError

_log = logging.getLogger(__name__)

_COLUMNS = ["user", "item", "value"]
_EXTRA = "_extra"


def _read_frame(path: Union[str, Path], delimiter: str, header: bool) -> pd.DataFrame:
    offset = 1 if header else 0

    def keep_long_row(fields):
        # rows with extra fields stay in place so line numbers line up
        return fields[:len(_COLUMNS)] + [delimiter.join(fields[len(_COLUMNS):])]

    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            header=None,
            names=_COLUMNS + [_EXTRA],
            dtype=str,
            na_filter=False,
            skip_blank_lines=False,
            skiprows=offset,
            engine="python",
            on_bad_lines=keep_long_row,
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"No interactions found in {path}")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataError(f"Cannot read interactions from {path}: {exc}") from exc

    frame = frame.fillna("").astype(str)
    frame["line"] = np.arange(1, len(frame) + 1) + offset
    extra = (frame[_EXTRA].str.strip() != "").to_numpy()
    if extra.any():
        raise MalformedRowError(int(frame["line"].iloc[np.argmax(extra)]), "expected user,item[,value]")
    return frame.drop(columns=_EXTRA)


def _parse_rows(frame: pd.DataFrame) -> pd.DataFrame:
    """Validate raw string rows and return (user, item, value) with float values."""
    for col in _COLUMNS:
        frame[col] = frame[col].astype(str).str.strip()

    blank = (frame["user"] == "") & (frame["item"] == "") & (frame["value"] == "")
    frame = frame.loc[~blank]

    missing = (frame["user"] == "") | (frame["item"] == "")
    if missing.any():
        first = frame.loc[missing].iloc[0]
        raise MalformedRowError(int(first["line"]), "expected user,item[,value]")

    raw_values = frame["value"].where(frame["value"] != "", "1")
    values = pd.to_numeric(raw_values, errors="coerce")
    bad = values.isna() | ~np.isfinite(values) | (values < 0)
    if bad.any():
        first = frame.loc[bad].iloc[0]
        raise MalformedRowError(int(first["line"]), f"invalid value {first['value']!r}")

    return pd.DataFrame({"user": frame["user"], "item": frame["item"], "value": values.astype(np.float64)})


def build_matrix(frame: pd.DataFrame) -> InteractionMatrix:
    """Collapse duplicate (user, item) pairs to their max value and index IDs in sorted order."""
    if frame.empty:
        raise DataError("No interactions to build a matrix from.")

    dedup = frame.groupby(["user", "item"], sort=True)["value"].max().reset_index()
    user_codes, user_index = pd.factorize(dedup["user"], sort=True)
    item_codes, item_index = pd.factorize(dedup["item"], sort=True)

    matrix = sp.csr_matrix(
        (dedup["value"].to_numpy(dtype=np.float64), (user_codes, item_codes)),
        shape=(len(user_index), len(item_index)),
    )
    matrix.sort_indices()
    return InteractionMatrix(
        matrix=matrix,
        user_index=pd.Index(user_index, dtype=object, name="user"),
        item_index=pd.Index(item_index, dtype=object, name="item"),
    )


def from_interactions(rows: Iterable[Interaction]) -> InteractionMatrix:
    """Build a matrix from in-memory interactions, with the same max-dedup as file ingest."""
    frame = pd.DataFrame(
        [(row.user_id, row.item_id, row.value) for row in rows],
        columns=_COLUMNS,
    )
    frame["value"] = frame["value"].astype(np.float64)
    bad = ~np.isfinite(frame["value"]) | (frame["value"] < 0)
    if bad.any():
        first = frame.loc[bad].iloc[0]
        raise DataError(f"invalid value {first['value']!r} for ({first['user']}, {first['item']})")
    return build_matrix(frame)


def load_frame(path: Union[str, Path], delimiter: str = ",", binarize: bool = True, header: bool = False) -> pd.DataFrame:
    frame = _parse_rows(_read_frame(path, delimiter, header))
    if frame.empty:
        raise DataError(f"No interactions found in {path}")
    if binarize:
        frame["value"] = 1.0
    return frame


def load_interactions(
    path: Union[str, Path],
    delimiter: str = ",",
    binarize: bool = True,
    header: bool = False,
) -> InteractionMatrix:
    """Read ``user,item[,value]`` rows into an InteractionMatrix.

    Duplicate pairs keep their maximum value. Malformed rows raise
    MalformedRowError with the 1-based line number in the file.
    """
    frame = load_frame(path, delimiter=delimiter, binarize=binarize, header=header)
    mat = build_matrix(frame)
    _log.info(
        "loaded %d interactions (%d users x %d items) from %s",
        mat.nnz, mat.n_users, mat.n_items, path,
    )
    return mat


def to_frame(mat: InteractionMatrix) -> pd.DataFrame:
    coo = mat.matrix.tocoo()
    return pd.DataFrame({
        "user": mat.user_index.to_numpy()[coo.row],
        "item": mat.item_index.to_numpy()[coo.col],
        "value": coo.data,
    })


def filter_by_activity(mat: InteractionMatrix, min_user_count: int = 0, min_item_count: int = 0) -> InteractionMatrix:
    """Drop rare items, then inactive users (one pass each). Zero disables a filter."""
    if min_user_count <= 0 and min_item_count <= 0:
        return mat

    frame = to_frame(mat)
    if min_item_count > 0:
        counts = frame.groupby("item")["user"].count()
        frame = frame[frame["item"].isin(counts[counts >= min_item_count].index)]
    if min_user_count > 0:
        counts = frame.groupby("user")["item"].count()
        frame = frame[frame["user"].isin(counts[counts >= min_user_count].index)]

    if frame.empty:
        raise DataError(
            f"Activity filters (users >= {min_user_count}, items >= {min_item_count}) removed every interaction."
        )
    filtered = build_matrix(frame)
    _log.info(
        "activity filter kept %d/%d users, %d/%d items",
        filtered.n_users, mat.n_users, filtered.n_items, mat.n_items,
    )
    return filtered


def item_popularity(mat: InteractionMatrix) -> np.ndarray:
    """Number of users per item."""
    return np.diff(mat.matrix.tocsc().indptr).astype(np.int64)


def submatrix_users(mat: InteractionMatrix, users: Iterable[int]) -> InteractionMatrix:
    """Restrict to a user subset; items left without interactions are dropped."""
    users = np.sort(np.asarray(list(users), dtype=np.int64))
    if len(users) == 0:
        raise DataError("Cannot build a matrix from an empty user set.")
    rows = mat.matrix[users]
    kept_items = np.flatnonzero(np.diff(rows.tocsc().indptr) > 0)
    if len(kept_items) < mat.n_items:
        _log.info("%d items have no interactions among the selected users", mat.n_items - len(kept_items))
    sub = rows[:, kept_items].tocsr()
    sub.sort_indices()
    return InteractionMatrix(
        matrix=sub,
        user_index=mat.user_index[users],
        item_index=mat.item_index[kept_items],
    )


def user_vectors(mat: InteractionMatrix, rows: Dict[int, np.ndarray], item_positions: np.ndarray, m: int) -> sp.csr_matrix:
    """Stack the given per-user item subsets into a len(rows) x m CSR matrix.

    ``item_positions`` maps the data's item indices into the target item space
    (-1 for items the target does not know); unknown items are dropped.
    """
    indptr = [0]
    indices = []
    data = []
    for user, items in rows.items():
        items = np.asarray(items, dtype=np.int64)
        values = mat.matrix.getrow(user).toarray().ravel()[items]
        targets = item_positions[items]
        known = targets >= 0
        indices.append(targets[known])
        data.append(values[known])
        indptr.append(indptr[-1] + int(known.sum()))
    out = sp.csr_matrix(
        (
            np.concatenate(data) if data else np.empty(0),
            np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
            np.asarray(indptr),
        ),
        shape=(len(rows), m),
    )
    out.sum_duplicates()
    out.sort_indices()
    return out


def _partition_items(rng: np.random.Generator, items: np.ndarray, fold_in_frac: float):
    n_fold = int(np.floor(fold_in_frac * len(items) + 0.5))
    n_fold = min(max(n_fold, 1), len(items) - 1)
    shuffled = rng.permutation(items)
    return np.sort(shuffled[:n_fold]), np.sort(shuffled[n_fold:])


def split_strong_generalization(
    mat: InteractionMatrix,
    val_frac: float = 0.1,
    test_frac: float = 0.1,
    fold_in_frac: float = 0.8,
    seed: int = 98765,
) -> EvalSplit:
    """Partition users into train/validation/test and split held-out users' items.

    Held-out users with fewer than two interactions are moved to the training set,
    since both their fold-in and held-out parts must be nonempty.
    """
    if not (val_frac > 0 and test_frac > 0 and val_frac + test_frac < 1):
        raise ConfigError(
            f"val_frac and test_frac must be positive with a sum below 1, got {val_frac} and {test_frac}"
        )
    if not 0 < fold_in_frac < 1:
        raise ConfigError(f"fold_in_frac must lie in (0, 1), got {fold_in_frac}")

    n = mat.n_users
    n_test = int(np.floor(test_frac * n + 0.5))
    n_val = int(np.floor(val_frac * n + 0.5))
    if n_test < 1 or n_val < 1 or n - n_test - n_val < 1:
        raise DataError(f"{n} users are too few to populate train, validation and test sets.")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_pool = perm[:n_test]
    val_pool = perm[n_test:n_test + n_val]
    train = list(perm[n_test + n_val:])

    counts = np.diff(mat.matrix.indptr)
    fold_in: Dict[int, np.ndarray] = {}
    held_out: Dict[int, np.ndarray] = {}
    partitions = []
    moved = 0
    for pool in (val_pool, test_pool):
        kept = []
        for user in np.sort(pool):
            if counts[user] < 2:
                train.append(user)
                moved += 1
                continue
            fold_in[int(user)], held_out[int(user)] = _partition_items(rng, mat.user_items(user), fold_in_frac)
            kept.append(int(user))
        partitions.append(np.asarray(kept, dtype=np.int64))

    if moved:
        _log.warning("%d held-out users with fewer than 2 interactions moved to training", moved)
    validation, test = partitions
    if len(validation) == 0 or len(test) == 0:
        raise DataError("Too few users with at least 2 interactions to populate validation and test sets.")

    _log.info("split %d users into %d train / %d validation / %d test", n, len(train), len(validation), len(test))
    return EvalSplit(
        train_users=np.sort(np.asarray(train, dtype=np.int64)),
        validation_users=validation,
        test_users=test,
        fold_in=fold_in,
        held_out=held_out,
        seed=seed,
    )


__all__ = [
    "build_matrix",
    "filter_by_activity",
    "item_popularity",
    "load_frame",
    "load_interactions",
    "split_strong_generalization",
    "submatrix_users",
    "to_frame",
    "user_vectors",
]

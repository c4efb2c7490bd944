"""Model artifact: a plain-text header followed by a little-endian triplet payload.

Layout::

    MRFREC-MODEL <version>\\n
    <header JSON, one line>\\n
    <nnz records of (row: uint32, col: uint32, value: float64)>

Rows and columns are positions in the header's item ID table, so the payload refers
to items by external ID. Exact zeros (including the diagonal) are not stored.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .models import DataError, PreprocessStats, WeightMatrix

_log = logging.getLogger(__name__)

MAGIC = b"MRFREC-MODEL"
FORMAT_VERSION = 1
TRIPLET = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


@dataclass
class ModelFile:
    weights: WeightMatrix
    stats: PreprocessStats
    extra: Dict[str, Any]

    @property
    def header(self) -> Dict[str, Any]:
        return _build_header(self.weights, self.stats, self.extra, self.weights.nnz)


def _triplets(weights: WeightMatrix) -> np.ndarray:
    """Nonzero entries ordered by column, then row."""
    if weights.is_sparse:
        B = weights.B.tocsc(copy=True)
        B.eliminate_zeros()
        B.sort_indices()
        cols = np.repeat(np.arange(B.shape[1]), np.diff(B.indptr))
        rows, values = B.indices, B.data
    else:
        cols, rows = np.nonzero(np.asarray(weights.B).T)
        values = np.asarray(weights.B)[rows, cols]
    out = np.empty(len(values), dtype=TRIPLET)
    out["row"] = rows
    out["col"] = cols
    out["value"] = values
    return out


def _build_header(weights: WeightMatrix, stats: PreprocessStats, extra: Dict[str, Any], nnz: int) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "m": weights.m,
        "storage": "sparse" if weights.is_sparse else "dense",
        "nnz": int(nnz),
        "payload": "row:<u4,col:<u4,value:<f8",
        "model": weights.metadata(),
        "item_ids": [str(item) for item in weights.item_ids],
        "stats": stats.to_dict(),
        "extra": extra,
    }


def save_model(
    path: Union[str, Path],
    weights: WeightMatrix,
    stats: PreprocessStats,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write the model atomically (temporary sibling, then rename)."""
    if stats.m != weights.m:
        raise DataError(f"Statistics cover {stats.m} items but the weights cover {weights.m}.")
    path = Path(path)
    payload = _triplets(weights)
    header = _build_header(weights, stats, extra or {}, len(payload))

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b" " + str(FORMAT_VERSION).encode("ascii") + b"\n")
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8") + b"\n")
        fh.write(payload.tobytes())
    os.replace(tmp, path)
    _log.info("saved %d weights for %d items to %s", len(payload), weights.m, path)
    return path


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = _read(path, with_payload=False)
    return header


def _read(path: Union[str, Path], with_payload: bool = True):
    try:
        with open(path, "rb") as fh:
            magic = fh.readline().rstrip(b"\n").split(b" ")
            if len(magic) != 2 or magic[0] != MAGIC:
                raise DataError(f"{path} is not a model file.")
            if int(magic[1]) != FORMAT_VERSION:
                raise DataError(f"{path} has format version {int(magic[1])}, expected {FORMAT_VERSION}.")
            header = json.loads(fh.readline().decode("utf-8"))
            payload = fh.read() if with_payload else b""
    except OSError as exc:
        raise DataError(f"Cannot read model {path}: {exc}") from exc
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"Model header of {path} is corrupt: {exc}") from exc

    if header.get("m") != len(header.get("item_ids", [])):
        raise DataError(f"Model header of {path}: m={header.get('m')} does not match the item ID table.")
    return header, payload


def load_model(path: Union[str, Path]) -> ModelFile:
    header, payload = _read(path)
    m = header["m"]
    if len(payload) != header["nnz"] * TRIPLET.itemsize:
        raise DataError(f"Model payload of {path} is truncated.")
    triplets = np.frombuffer(payload, dtype=TRIPLET)
    rows = triplets["row"].astype(np.int64)
    cols = triplets["col"].astype(np.int64)
    values = triplets["value"].astype(np.float64)
    if len(rows) and (rows.max() >= m or cols.max() >= m):
        raise DataError(f"Model payload of {path} references items outside the ID table.")

    if header["storage"] == "sparse":
        B = sp.csc_matrix((values, (rows, cols)), shape=(m, m))
    else:
        B = np.zeros((m, m))
        B[rows, cols] = values

    meta = header["model"]
    weights = WeightMatrix(
        B=B,
        item_ids=pd.Index(header["item_ids"], dtype=object, name="item"),
        solver=meta["solver"],
        lam=meta["lambda"],
        alpha=meta["alpha"],
        center=meta["center"],
        r=meta.get("r"),
        density=meta.get("density"),
        cap=meta.get("cap"),
    )
    return ModelFile(weights=weights, stats=PreprocessStats.from_dict(header["stats"]), extra=header.get("extra", {}))


__all__ = ["FORMAT_VERSION", "ModelFile", "load_model", "read_header", "save_model"]

"""Optional on-disk cache of imputed hourly grids.

Flat little-endian layout per grid file:

    magic       4 bytes  b"ICGR"
    version     uint16   (currently 1)
    stay_id     int64
    n_hours     int32
    n_numeric   uint16
    n_cat       uint16
    numeric     float64[n_hours * n_numeric]   row-major
    mask        uint8[n_hours * n_numeric]     row-major
    n_strings   uint16                         local category string table
    strings     n_strings * (uint16 length + utf-8 bytes)
    cat_index   uint16[n_hours * n_cat]        row-major, into the table

The cache directory is keyed by a sha256 content hash of the source files
plus the binning policy, so stale entries can never be read against
different inputs.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .preprocessing import BinPolicy
from .schema import HourlyGrid

MAGIC = b"ICGR"
VERSION = 1
_HEADER = struct.Struct("<4sHqiHH")


def write_grid(path, grid: HourlyGrid) -> None:
    n, n_num = grid.numeric.shape
    n_cat = grid.cat_labels.shape[1]
    strings: list[str] = []
    string_ids: dict[str, int] = {}
    index = np.empty((n, n_cat), dtype=np.uint16)
    for k in range(n_cat):
        for h in range(n):
            v = grid.cat_labels[h, k]
            if v not in string_ids:
                string_ids[v] = len(strings)
                strings.append(v)
            index[h, k] = string_ids[v]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.stay_id, n, n_num, n_cat))
        fh.write(np.ascontiguousarray(grid.numeric, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(grid.observed_mask, dtype=np.uint8).tobytes())
        fh.write(struct.pack("<H", len(strings)))
        for s in strings:
            raw = s.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(index.astype("<u2").tobytes())


def read_grid(path) -> HourlyGrid:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DataError(f"{path}: truncated grid header")
        magic, version, stay_id, n, n_num, n_cat = _HEADER.unpack(header)
        if magic != MAGIC or version != VERSION:
            raise DataError(f"{path}: not a version-{VERSION} grid file")
        numeric = np.frombuffer(fh.read(8 * n * n_num), dtype="<f8").reshape(n, n_num).copy()
        mask = np.frombuffer(fh.read(n * n_num), dtype=np.uint8).reshape(n, n_num).astype(bool)
        (n_strings,) = struct.unpack("<H", fh.read(2))
        strings = []
        for _ in range(n_strings):
            (length,) = struct.unpack("<H", fh.read(2))
            strings.append(fh.read(length).decode("utf-8"))
        index = np.frombuffer(fh.read(2 * n * n_cat), dtype="<u2").reshape(n, n_cat)
        cat_labels = np.empty((n, n_cat), dtype=object)
        for k in range(n_cat):
            cat_labels[:, k] = [strings[i] for i in index[:, k]]
    return HourlyGrid(stay_id=stay_id, numeric=numeric, cat_labels=cat_labels, observed_mask=mask)


def content_key(paths: Iterable, policy: BinPolicy) -> str:
    """sha256 over the source file bytes and the policy settings."""
    digest = hashlib.sha256()
    for p in sorted(str(p) for p in paths):
        digest.update(Path(p).name.encode("utf-8"))
        try:
            digest.update(Path(p).read_bytes())
        except OSError as exc:
            raise DataError(f"cannot hash cache input {p}: {exc}") from exc
    digest.update(repr(policy).encode("utf-8"))
    return digest.hexdigest()


class GridCache:
    """Directory of cached grids under one content key."""

    def __init__(self, cache_dir, key: str):
        self.root = Path(cache_dir) / key
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, stay_id: int) -> Path:
        return self.root / f"stay_{stay_id}.grid"

    def get(self, stay_id: int) -> HourlyGrid | None:
        path = self._path(stay_id)
        return read_grid(path) if path.exists() else None

    def put(self, grid: HourlyGrid) -> None:
        write_grid(self._path(grid.stay_id), grid)

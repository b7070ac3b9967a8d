"""Embedding store: load, validate, index, and persist labeled embedding vectors.

The canonical on-disk representation is the FSEB binary format:

    magic   6 bytes   46 53 45 42 31 00  ("FSEB1\\0")
    D       u32 LE    vector dimension
    N       u64 LE    record count
    L       u32 LE    byte length of the label-map JSON
    map     L bytes   UTF-8 JSON object {"<label_id>": "<species name>"}
    records N times   [u64 record_id][u32 label_id][u8 split][D x f32 LE]

with split encoded as 0=Train, 1=Val, 2=Test. A CSV form with header
``record_id,label_id,split,v0,...,v{D-1}`` is accepted for fixtures and
tests; Binary is the canonical format because it round-trips bit-exactly.

Vectors are stored as 32-bit floats; every reduction downstream (means,
norms, losses) accumulates in 64-bit. Stores are immutable once built and
safe to share across concurrent readers.
"""

from __future__ import annotations

import csv
import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import FileFormatError, ZeroNormError

MAGIC = b"FSEB1\x00"
_HEADER = struct.Struct("<IQI")  # D, N, L


class Split(enum.IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2

    @classmethod
    def parse(cls, text: str) -> "Split":
        key = text.strip().lower()
        names = {"train": cls.TRAIN, "val": cls.VAL, "test": cls.TEST}
        if key in names:
            return names[key]
        if key in {"0", "1", "2"}:
            return cls(int(key))
        raise ValueError(f"unknown split {text!r} (expected train/val/test or 0/1/2)")


ALL_SPLITS = frozenset({Split.TRAIN, Split.VAL, Split.TEST})


class StoreFormat(enum.Enum):
    BINARY = "binary"
    CSV = "csv"


@dataclass(frozen=True)
class EmbeddingRecord:
    """One labeled embedding: id, class, split, and a float32 vector."""

    record_id: int
    label_id: int
    split: Split
    vector: np.ndarray


def _record_dtype(dimension: int) -> np.dtype:
    return np.dtype(
        [
            ("record_id", "<u8"),
            ("label_id", "<u4"),
            ("split", "u1"),
            ("vector", "<f4", (dimension,)),
        ]
    )


class EmbeddingStore:
    """Immutable collection of labeled, split-tagged embedding vectors.

    Validates on construction: unique record ids, finite components, a
    label map covering every label, and per-record dimension D. Exposes a
    label index (label_id -> positions, partitioned by split) for samplers
    and prototype builders.
    """

    def __init__(
        self,
        dimension: int,
        record_ids: np.ndarray,
        label_ids: np.ndarray,
        splits: np.ndarray,
        vectors: np.ndarray,
        label_map: Mapping[int, str] | None = None,
    ):
        if dimension <= 0:
            raise ValueError(f"dimension must be positive, got {dimension}")
        n = len(record_ids)
        record_ids = np.ascontiguousarray(record_ids, dtype=np.uint64)
        label_ids = np.ascontiguousarray(label_ids, dtype=np.uint32)
        splits = np.ascontiguousarray(splits, dtype=np.uint8)
        vectors = np.ascontiguousarray(vectors, dtype=np.float32).reshape(n, dimension)
        if not (len(label_ids) == len(splits) == len(vectors) == n):
            raise ValueError("record field arrays disagree in length")
        if np.any(splits > int(Split.TEST)):
            bad = int(np.argmax(splits > int(Split.TEST)))
            raise FileFormatError(
                f"invalid split value {splits[bad]}", position=f"record {bad}"
            )
        finite = np.isfinite(vectors).all(axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise FileFormatError(
                "non-finite vector component", position=f"record {bad}"
            )
        if n:
            _, first = np.unique(record_ids, return_index=True)
            if len(first) != n:
                dup_mask = np.ones(n, dtype=bool)
                dup_mask[first] = False
                bad = int(np.argmax(dup_mask))
                raise FileFormatError(
                    f"duplicate record_id {int(record_ids[bad])}",
                    position=f"record {bad}",
                )

        present = [int(label) for label in np.unique(label_ids)]
        if label_map is None:
            label_map = {label: f"label_{label}" for label in present}
        else:
            label_map = {int(k): str(v) for k, v in label_map.items()}
            missing = [label for label in present if label not in label_map]
            if missing:
                raise FileFormatError(
                    f"label map missing entries for labels {missing}"
                )

        for arr in (record_ids, label_ids, splits, vectors):
            arr.setflags(write=False)

        self._dimension = dimension
        self._record_ids = record_ids
        self._label_ids = label_ids
        self._splits = splits
        self._vectors = vectors
        self._label_map = dict(label_map)

        index: dict[int, Mapping[Split, np.ndarray]] = {}
        for label in present:
            by_split: dict[Split, np.ndarray] = {}
            label_mask = label_ids == label
            for split in Split:
                pos = np.flatnonzero(label_mask & (splits == int(split)))
                pos.setflags(write=False)
                by_split[split] = pos
            index[label] = MappingProxyType(by_split)
        self._label_index = MappingProxyType(index)

    # -- accessors ---------------------------------------------------------

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def record_ids(self) -> np.ndarray:
        return self._record_ids

    @property
    def label_ids(self) -> np.ndarray:
        return self._label_ids

    @property
    def splits(self) -> np.ndarray:
        return self._splits

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def label_map(self) -> dict[int, str]:
        return dict(self._label_map)

    @property
    def label_index(self) -> Mapping[int, Mapping[Split, np.ndarray]]:
        return self._label_index

    @property
    def labels(self) -> list[int]:
        return sorted(self._label_index)

    def __len__(self) -> int:
        return len(self._record_ids)

    def record(self, position: int) -> EmbeddingRecord:
        return EmbeddingRecord(
            record_id=int(self._record_ids[position]),
            label_id=int(self._label_ids[position]),
            split=Split(int(self._splits[position])),
            vector=self._vectors[position],
        )

    def iter_records(self) -> Iterator[EmbeddingRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def positions(
        self, label_id: int, splits: Iterable[Split] = ALL_SPLITS
    ) -> np.ndarray:
        """Ascending record positions carrying ``label_id`` in the given splits."""
        by_split = self._label_index.get(int(label_id))
        if by_split is None:
            return np.empty(0, dtype=np.intp)
        parts = [by_split[s] for s in sorted(splits)]
        if not parts:
            return np.empty(0, dtype=np.intp)
        return np.sort(np.concatenate(parts))

    def split_positions(self, splits: Iterable[Split]) -> np.ndarray:
        """Ascending positions of every record in the given splits."""
        mask = np.isin(self._splits, [int(s) for s in splits])
        return np.flatnonzero(mask)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        records: Sequence[EmbeddingRecord],
        dimension: int | None = None,
        label_map: Mapping[int, str] | None = None,
    ) -> "EmbeddingStore":
        if dimension is None:
            if not records:
                raise ValueError("dimension is required for an empty store")
            dimension = len(records[0].vector)
        n = len(records)
        record_ids = np.empty(n, dtype=np.uint64)
        label_ids = np.empty(n, dtype=np.uint32)
        splits = np.empty(n, dtype=np.uint8)
        vectors = np.empty((n, dimension), dtype=np.float32)
        for i, rec in enumerate(records):
            if len(rec.vector) != dimension:
                raise FileFormatError(
                    f"vector has {len(rec.vector)} components, expected {dimension}",
                    position=f"record {i}",
                )
            record_ids[i] = rec.record_id
            label_ids[i] = rec.label_id
            splits[i] = int(rec.split)
            vectors[i] = rec.vector
        return cls(dimension, record_ids, label_ids, splits, vectors, label_map)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self._dimension == other._dimension
            and np.array_equal(self._record_ids, other._record_ids)
            and np.array_equal(self._label_ids, other._label_ids)
            and np.array_equal(self._splits, other._splits)
            and np.array_equal(self._vectors, other._vectors)
            and self._label_map == other._label_map
        )

    def __repr__(self) -> str:
        return (
            f"EmbeddingStore(n={len(self)}, dimension={self._dimension}, "
            f"classes={len(self._label_index)})"
        )


# -- vector helpers ---------------------------------------------------------


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale vectors to unit Euclidean norm, accumulating in 64-bit.

    Accepts a single vector or an array of row vectors (norm over the last
    axis). Raises :class:`ZeroNormError` for any zero row rather than
    propagating a silent NaN.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroNormError("cannot L2-normalize a zero vector")
    return v / norms


def class_counts(
    store: EmbeddingStore, split_set: Iterable[Split]
) -> dict[int, int]:
    """Number of records per label within the chosen splits."""
    mask = np.isin(store.splits, [int(s) for s in split_set])
    labels, counts = np.unique(store.label_ids[mask], return_counts=True)
    return {int(label): int(count) for label, count in zip(labels, counts)}


# -- binary (FSEB) i/o ------------------------------------------------------


def _encode_label_map(label_map: Mapping[int, str]) -> bytes:
    as_str = {str(k): label_map[k] for k in sorted(label_map)}
    return json.dumps(
        as_str, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the FSEB binary form; :func:`load_store` inverts it exactly."""
    map_bytes = _encode_label_map(store.label_map)
    dtype = _record_dtype(store.dimension)
    records = np.empty(len(store), dtype=dtype)
    records["record_id"] = store.record_ids
    records["label_id"] = store.label_ids
    records["split"] = store.splits
    records["vector"] = store.vectors
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(store.dimension, len(store), len(map_bytes)))
        fh.write(map_bytes)
        fh.write(records.tobytes())


def _load_binary(path: Path) -> EmbeddingStore:
    data = path.read_bytes()
    if len(data) < len(MAGIC):
        raise FileFormatError("file shorter than magic", position="byte 0")
    if data[: len(MAGIC)] != MAGIC:
        raise FileFormatError(
            f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}", position="byte 0"
        )
    offset = len(MAGIC)
    if len(data) < offset + _HEADER.size:
        raise FileFormatError("truncated header", position=f"byte {len(data)}")
    dimension, n, map_len = _HEADER.unpack_from(data, offset)
    offset += _HEADER.size
    if dimension == 0:
        raise FileFormatError("dimension must be positive", position="byte 6")
    if len(data) < offset + map_len:
        raise FileFormatError("truncated label map", position=f"byte {len(data)}")
    try:
        raw_map = json.loads(data[offset : offset + map_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"invalid label-map JSON: {exc}", position=f"byte {offset}")
    if not isinstance(raw_map, dict):
        raise FileFormatError("label map is not a JSON object", position=f"byte {offset}")
    try:
        label_map = {int(k): str(v) for k, v in raw_map.items()}
    except ValueError as exc:
        raise FileFormatError(f"non-integer label-map key: {exc}", position=f"byte {offset}")
    offset += map_len

    dtype = _record_dtype(dimension)
    body = len(data) - offset
    if body != n * dtype.itemsize:
        if body < n * dtype.itemsize:
            got = body // dtype.itemsize
            raise FileFormatError(
                f"truncated records: header promises {n}, file holds {got} complete",
                position=f"record {got}",
            )
        raise FileFormatError(
            f"{body - n * dtype.itemsize} trailing bytes after record {n - 1}"
            if n
            else f"{body} trailing bytes after header",
        )
    records = np.frombuffer(data, dtype=dtype, count=n, offset=offset)
    return EmbeddingStore(
        dimension,
        records["record_id"],
        records["label_id"],
        records["split"],
        records["vector"],
        label_map,
    )


# -- csv fixtures -----------------------------------------------------------


def _load_csv(path: Path) -> EmbeddingStore:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError("empty CSV file", position="row 0")
        if header[:3] != ["record_id", "label_id", "split"]:
            raise FileFormatError(
                f"bad CSV header {header[:3]}, expected record_id,label_id,split,v0,...",
                position="row 0",
            )
        dimension = len(header) - 3
        if dimension <= 0:
            raise FileFormatError("CSV header declares no vector columns", position="row 0")
        records = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != dimension + 3:
                raise FileFormatError(
                    f"row has {max(len(row) - 3, 0)} vector components, expected {dimension}",
                    position=f"row {row_num}",
                )
            try:
                rec = EmbeddingRecord(
                    record_id=int(row[0]),
                    label_id=int(row[1]),
                    split=Split.parse(row[2]),
                    vector=np.array([float(x) for x in row[3:]], dtype=np.float32),
                )
            except ValueError as exc:
                raise FileFormatError(str(exc), position=f"row {row_num}")
            records.append(rec)
    try:
        return EmbeddingStore.from_records(records, dimension=dimension)
    except FileFormatError as exc:
        # reposition array-level validation errors as 1-based CSV rows
        raise FileFormatError(_strip_position(exc), position=_as_row(exc))


def _strip_position(exc: FileFormatError) -> str:
    msg = str(exc)
    if exc.position is not None and msg.endswith(f" (at {exc.position})"):
        return msg[: -len(f" (at {exc.position})")]
    return msg


def _as_row(exc: FileFormatError) -> str | None:
    if exc.position and exc.position.startswith("record "):
        return f"row {int(exc.position.split()[1]) + 1}"
    return exc.position


def load_store(
    path: str | Path, format: StoreFormat = StoreFormat.BINARY
) -> EmbeddingStore:
    """Read a store file; record order equals file order."""
    path = Path(path)
    if format is StoreFormat.BINARY:
        return _load_binary(path)
    if format is StoreFormat.CSV:
        return _load_csv(path)
    raise ValueError(f"unknown store format {format!r}")

"""Writer for the FSEB embedding store format.

Layout: magic "FSEB1\\0", little-endian u32 dimension, u64 record count,
u32 label-map byte length, the label map as UTF-8 JSON
({"<label_id>": "<species name>"}), then per record
[u64 record_id][u32 label_id][u8 split][dimension x f32 LE]
with split 0=train, 1=val, 2=test.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MAGIC = b"FSEB1\x00"
SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


def write_store(
    path: str | Path,
    dimension: int,
    records: Sequence[tuple[int, int, int, np.ndarray]],
    label_map: Mapping[int, str],
) -> None:
    """Write (record_id, label_id, split_code, vector) tuples as FSEB."""
    map_bytes = json.dumps(
        {str(k): label_map[k] for k in sorted(label_map)},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQI", dimension, len(records), len(map_bytes)))
        fh.write(map_bytes)
        for record_id, label_id, split_code, vector in records:
            vector = np.ascontiguousarray(vector, dtype="<f4")
            if vector.shape != (dimension,):
                raise ValueError(
                    f"record {record_id}: vector shape {vector.shape}, "
                    f"expected ({dimension},)"
                )
            fh.write(struct.pack("<QIB", record_id, label_id, split_code))
            fh.write(vector.tobytes())

"""Run an encoder over an image directory and emit an FSEB store.

The metadata CSV names each image's species and split (columns
``filename,species,split``; extra columns are ignored). Rows are
processed in sorted-filename order, label ids are assigned to species in
first-seen order, and record ids count emitted records from zero, so a
rerun over the same inputs produces an identical file. Embeddings are
written raw; any normalization is left to the consumer so there is a
single normalization code path downstream.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import Encoder, get_encoder
from .fseb import SPLIT_CODES, write_store


@dataclass(frozen=True)
class ExtractionManifest:
    image_root: Path
    metadata_path: Path
    encoder: str = "rp512"
    batch_size: int = 32
    out_path: Path = Path("embeddings.fseb")

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ExtractionResult:
    n_records: int
    dimension: int
    labels: dict[int, str]
    skipped: list[str] = field(default_factory=list)


def read_metadata(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"filename", "species", "split"}
        fields = set(reader.fieldnames or [])
        if not required <= fields:
            raise ValueError(
                f"metadata must have columns filename,species,split; got {sorted(fields)}"
            )
        rows = list(reader)
    for i, row in enumerate(rows):
        split = row["split"].strip().lower()
        if split not in SPLIT_CODES:
            raise ValueError(
                f"metadata row {i + 1}: unknown split {row['split']!r}"
            )
    return sorted(rows, key=lambda row: row["filename"])


def extract(manifest: ExtractionManifest, log=None) -> ExtractionResult:
    """Encode every resolvable image and write the FSEB store + sidecar."""
    log = log if log is not None else sys.stderr
    encoder: Encoder = get_encoder(manifest.encoder)
    rows = read_metadata(manifest.metadata_path)

    label_ids: dict[str, int] = {}
    pending: list[tuple[Image.Image, int, int]] = []  # image, label, split
    records: list[tuple[int, int, int, np.ndarray]] = []
    skipped: list[str] = []

    def flush():
        if not pending:
            return
        vectors = encoder.embed_batch([img for img, _, _ in pending])
        for (img, label, split), vector in zip(pending, vectors):
            records.append((len(records), label, split, vector))
            img.close()
        pending.clear()

    for row in rows:
        path = manifest.image_root / row["filename"]
        try:
            image = Image.open(path)
            image.load()
        except (OSError, UnidentifiedImageError) as exc:
            skipped.append(row["filename"])
            print(f"skipping {row['filename']}: {exc}", file=log)
            continue
        species = row["species"].strip()
        if species not in label_ids:
            label_ids[species] = len(label_ids)
        pending.append(
            (image, label_ids[species], SPLIT_CODES[row["split"].strip().lower()])
        )
        if len(pending) >= manifest.batch_size:
            flush()
    flush()

    if not records:
        raise RuntimeError("no images could be read; nothing to write")

    label_map = {v: k for k, v in label_ids.items()}
    write_store(manifest.out_path, encoder.width, records, label_map)
    sidecar = {
        "encoder": encoder.name,
        "width": encoder.width,
        "input_size": encoder.input_size,
        "n_records": len(records),
        "n_labels": len(label_map),
        "skipped": skipped,
    }
    with open(Path(str(manifest.out_path) + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExtractionResult(
        n_records=len(records),
        dimension=encoder.width,
        labels=label_map,
        skipped=skipped,
    )

"""Fixture images and metadata for extractor tests."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

SPECIES = ["Agaricus fixture", "Boletus fixture", "Cantharellus fixture"]


def make_image(path: Path, seed: int, size=(48, 40)) -> None:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(pixels, mode="RGB").save(path)


@pytest.fixture
def fixture_dataset(tmp_path) -> tuple[Path, Path]:
    """Ten PNGs across three species with train/val/test splits."""
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    rows = []
    splits = ["train", "train", "train", "train", "val", "val",
              "test", "test", "test", "test"]
    for i in range(10):
        name = f"img_{i:03d}.png"
        make_image(image_dir / name, seed=i)
        rows.append(
            {"filename": name, "species": SPECIES[i % 3], "split": splits[i]}
        )
    metadata = tmp_path / "metadata.csv"
    with open(metadata, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["filename", "species", "split"])
        writer.writeheader()
        writer.writerows(rows)
    return image_dir, metadata

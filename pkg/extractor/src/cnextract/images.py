"""Frozen image feature dumping.

Encoders expose `dim` and `encode(path) -> vector`. `GridStatsEncoder` is the
offline deterministic backend (grayscale grid means + standard deviations);
real CNN backbones can be slotted in behind the same interface.
"""

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .cmvec import write_assignments, write_cmvec


class GridStatsEncoder:
    """Per-cell mean and standard deviation over a grid x grid grayscale
    partition; dim = 2 * grid * grid."""

    def __init__(self, grid=4):
        if grid < 1:
            raise ValueError("grid must be >= 1")
        self.grid = grid
        self.dim = 2 * grid * grid

    def encode(self, path):
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        cells_y = np.array_split(gray, self.grid, axis=0)
        out = np.empty(self.dim)
        i = 0
        for band in cells_y:
            for cell in np.array_split(band, self.grid, axis=1):
                out[i] = cell.mean() if cell.size else 0.0
                out[i + 1] = cell.std() if cell.size else 0.0
                i += 2
        return out


def load_encoder(spec):
    """"grid" or "grid:<n>" for the offline encoder."""
    if spec == "grid":
        return GridStatsEncoder()
    if spec.startswith("grid:"):
        return GridStatsEncoder(grid=int(spec.split(":", 1)[1]))
    raise ValueError(f"unknown encoder {spec!r}")


def read_manifest(path):
    """CSV with header image_id,class_name,path -> list of rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "class_name", "path"]:
            raise ValueError(f"{path}: bad manifest header {header!r}")
        rows = []
        for row in reader:
            if len(row) != 3:
                raise ValueError(f"{path}: expected 3 columns, got {row!r}")
            rows.append(tuple(row))
    return rows


def dump_features(entries, encoder, out_vectors, out_assignments):
    """entries: (image_id, class_name, path) triples. Writes one CMVEC record
    per image and the id -> class CSV."""
    entries = list(entries)
    if not entries:
        raise ValueError("no images to encode")
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in manifest")
    vectors = np.stack([encoder.encode(path) for _, _, path in entries])
    write_cmvec(ids, vectors, out_vectors)
    write_assignments(((i, cls) for i, cls, _ in entries), out_assignments)
    return vectors

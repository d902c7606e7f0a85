"""Writers for the toolkit's wire formats (CMVEC vectors, assignments CSV).

Implemented against the documented format, independently of the consumer:
CMVEC is magic "CMV1", u32-LE record count, u32-LE dim, then per record a
u16-LE label byte length, the UTF-8 label, and dim float32-LE values.
"""

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CMV1"


def write_cmvec(labels, vectors, path):
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(labels):
        raise ValueError("need one vector row per label")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("vectors contain non-finite values")
    values = vectors.astype("<f4")
    chunks = [MAGIC, struct.pack("<II", len(labels), vectors.shape[1])]
    for i, label in enumerate(labels):
        raw = str(label).encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"label too long: {label[:40]!r}...")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(values[i].tobytes())
    Path(path).write_bytes(b"".join(chunks))


def write_assignments(rows, path):
    """rows: iterable of (image_id, class_name). LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "class_name"])
        for image_id, class_name in rows:
            writer.writerow([image_id, class_name])

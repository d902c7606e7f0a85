"""Data model and persistence: embedding tables, visual feature stores,
class splits, and the CMVEC/CMMAT binary formats.

On-disk floats are 32-bit (matching common embedding dumps); everything is
widened to float64 on load. Entry order in a file defines in-memory order.
Class names are opaque UTF-8 keys matched by exact string equality.
"""

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

VEC_MAGIC = b"CMV1"
MAT_MAGIC = b"CMM1"


@dataclass(frozen=True)
class EmbeddingTable:
    """Labeled vectors of one modality/variant, in a fixed order."""

    labels: tuple
    vectors: np.ndarray  # (n, dim) float64
    variant: str = ""
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DataError("embedding vectors must form a 2-D array")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != vectors.shape[0]:
            raise DataError(
                f"{len(self.labels)} labels for {vectors.shape[0]} vectors"
            )
        if not np.all(np.isfinite(vectors)):
            raise DataError("embedding vectors contain non-finite values")
        index = {}
        for i, label in enumerate(self.labels):
            if label in index:
                raise DataError(f"duplicate label {label!r}")
            index[label] = i
        object.__setattr__(self, "_index", index)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def vector(self, label):
        try:
            return self.vectors[self._index[label]]
        except KeyError:
            raise DataError(f"label {label!r} not in table") from None

    def rows(self, labels):
        """Stack the vectors of `labels` in the given order."""
        return np.stack([self.vector(label) for label in labels])


@dataclass(frozen=True)
class VisualFeatureStore:
    """Image features plus image -> class assignments, immutable after load."""

    features: dict  # image id -> float64 vector
    assignment: dict  # image id -> class name
    images_by_class: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        dims = {v.shape for v in self.features.values()}
        if len(dims) > 1:
            raise DataError(f"feature dims not uniform: {sorted(dims)}")
        by_class = {}
        for image_id, cls in self.assignment.items():
            if image_id not in self.features:
                raise DataError(f"assigned image {image_id!r} has no feature vector")
            by_class.setdefault(cls, []).append(image_id)
        object.__setattr__(self, "images_by_class", by_class)

    @property
    def dim(self):
        if not self.features:
            raise DataError("empty feature store")
        return next(iter(self.features.values())).shape[0]

    def feature(self, image_id):
        try:
            return self.features[image_id]
        except KeyError:
            raise DataError(f"no feature for image {image_id!r}") from None

    def images_of(self, cls):
        try:
            return self.images_by_class[cls]
        except KeyError:
            raise DataError(f"class {cls!r} has no assigned images") from None


@dataclass(frozen=True)
class ClassSplit:
    base: tuple
    val: tuple
    novel: tuple

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "val", tuple(self.val))
        object.__setattr__(self, "novel", tuple(self.novel))
        if not self.base:
            raise DataError("base split is empty")
        if not self.novel:
            raise DataError("novel split is empty")
        for name_a, a, name_b, b in (
            ("base", self.base, "val", self.val),
            ("base", self.base, "novel", self.novel),
            ("val", self.val, "novel", self.novel),
        ):
            overlap = set(a) & set(b)
            if overlap:
                raise DataError(f"{name_a}/{name_b} splits overlap: {sorted(overlap)}")

    def section(self, name):
        if name not in ("base", "val", "novel"):
            raise DataError(f"unknown split section {name!r}")
        return getattr(self, name)


class _Reader:
    """Byte cursor that raises FormatError with the failing offset."""

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f32s(self, count, what):
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4", count=count)

    def expect_magic(self, magic):
        if self.data[:4] != magic:
            raise FormatError(
                f"{self.path}: bad magic {self.data[:4]!r}, expected {magic!r}", 0
            )
        self.pos = 4

    def expect_end(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: trailing data after last record", self.pos)


def load_embeddings(path, variant=""):
    """Read a CMVEC file into an EmbeddingTable (float64 in memory)."""
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    r.expect_magic(VEC_MAGIC)
    count = r.u32("record count")
    dim = r.u32("dimension")
    labels = []
    seen = set()
    vectors = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        record_start = r.pos
        label_len = r.u16("label length")
        raw = r.take(label_len, "label")
        try:
            label = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: label is not valid UTF-8", record_start) from None
        if label in seen:
            raise FormatError(f"{path}: duplicate label {label!r}", record_start)
        seen.add(label)
        labels.append(label)
        vectors[i] = r.f32s(dim, f"vector of {label!r}")
    r.expect_end()
    return EmbeddingTable(labels=tuple(labels), vectors=vectors, variant=variant)


def write_embeddings(table, path):
    """Write an EmbeddingTable as CMVEC (values narrowed to float32)."""
    chunks = [VEC_MAGIC, struct.pack("<II", len(table), table.dim)]
    values = table.vectors.astype("<f4")
    for i, label in enumerate(table.labels):
        raw = label.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"label too long for format: {label[:40]!r}...")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(values[i].tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_matrix(path):
    """Read a CMMAT file into a float64 array."""
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    r.expect_magic(MAT_MAGIC)
    rows = r.u32("row count")
    cols = r.u32("column count")
    values = r.f32s(rows * cols, "matrix values").astype(np.float64)
    r.expect_end()
    return values.reshape(rows, cols)


def write_matrix(matrix, path):
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise DataError("matrix must be 2-D")
    payload = struct.pack("<II", a.shape[0], a.shape[1]) + a.astype("<f4").tobytes()
    Path(path).write_bytes(MAT_MAGIC + payload)


def concat_tables(tables):
    """Concatenate tables sharing one label set; vectors join in argument order."""
    tables = list(tables)
    if not tables:
        raise DataError("no tables to concatenate")
    first = tables[0]
    for other in tables[1:]:
        if set(other.labels) != set(first.labels):
            missing = sorted(set(first.labels) ^ set(other.labels))
            raise DataError(f"label sets differ; symmetric difference: {missing}")
    vectors = np.concatenate(
        [t.rows(first.labels) for t in tables], axis=1
    )
    variant = "+".join(t.variant for t in tables if t.variant)
    return EmbeddingTable(labels=first.labels, vectors=vectors, variant=variant)


def average_synonyms(table, synsets):
    """One entry per class: the mean of its synonym name vectors."""
    labels = []
    vectors = []
    for cls, names in synsets.items():
        if not names:
            raise DataError(f"class {cls!r} has an empty synonym list")
        vectors.append(np.mean([table.vector(n) for n in names], axis=0))
        labels.append(cls)
    return EmbeddingTable(labels=tuple(labels), vectors=np.stack(vectors), variant=table.variant)


def load_split(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: splits file must be a JSON object")
    for key in ("base", "val", "novel"):
        if key not in raw:
            raise FormatError(f"{path}: missing key {key!r}")
        if not isinstance(raw[key], list) or not all(isinstance(c, str) for c in raw[key]):
            raise FormatError(f"{path}: {key!r} must be an array of strings")
    return ClassSplit(base=raw["base"], val=raw["val"], novel=raw["novel"])


def write_split(split, path):
    payload = {"base": list(split.base), "val": list(split.val), "novel": list(split.novel)}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_assignments(path, features):
    """Build a VisualFeatureStore from an assignments CSV and a features table."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty assignments file") from None
        if header != ["image_id", "class_name"]:
            raise FormatError(f"{path}: bad header {header!r}")
        assignment = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise FormatError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            image_id, cls = row
            if image_id in assignment:
                raise FormatError(f"{path}: line {lineno}: duplicate image id {image_id!r}")
            assignment[image_id] = cls
    feature_map = {label: features.vector(label) for label in features.labels}
    return VisualFeatureStore(features=feature_map, assignment=assignment)


def write_assignments(assignment, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "class_name"])
        for image_id, cls in assignment.items():
            writer.writerow([image_id, cls])


def load_synsets(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(raw, dict) or not all(
        isinstance(v, list) and all(isinstance(n, str) for n in v) for v in raw.values()
    ):
        raise FormatError(f"{path}: synsets file must map class -> array of names")
    return raw


def check_split_coverage(split, store):
    """Every split class must have at least one assigned image."""
    missing = [
        cls
        for cls in split.base + split.val + split.novel
        if cls not in store.images_by_class
    ]
    if missing:
        raise DataError(f"split classes without assigned images: {missing}")

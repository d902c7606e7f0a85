"""Visual prototypes: per-episode means over support features and
global per-class means over the full training set."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class PrototypeSet:
    classes: tuple
    matrix: np.ndarray  # (n_classes, m_v) float64

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "classes", tuple(self.classes))
        if matrix.ndim != 2 or matrix.shape[0] != len(self.classes):
            raise DataError("prototype matrix must have one row per class")
        if not np.all(np.isfinite(matrix)):
            raise DataError("prototypes contain non-finite values")

    @property
    def dim(self):
        return self.matrix.shape[1]

    def index(self, cls):
        try:
            return self.classes.index(cls)
        except ValueError:
            raise DataError(f"class {cls!r} not in prototype set") from None


def episode_prototypes(support, store):
    """Mean support feature per class; class order is first appearance in `support`."""
    if not support:
        raise DataError("empty support set")
    order = []
    groups = {}
    for image_id, cls in support:
        if cls not in groups:
            order.append(cls)
            groups[cls] = []
        groups[cls].append(store.feature(image_id))
    matrix = np.stack([np.mean(groups[cls], axis=0, dtype=np.float64) for cls in order])
    return PrototypeSet(classes=tuple(order), matrix=matrix)


def global_prototypes(store, classes):
    """Mean feature over all assigned images of each class, in the given order."""
    rows = []
    for cls in classes:
        images = store.images_of(cls)
        rows.append(np.mean([store.feature(i) for i in images], axis=0, dtype=np.float64))
    return PrototypeSet(classes=tuple(classes), matrix=np.stack(rows))

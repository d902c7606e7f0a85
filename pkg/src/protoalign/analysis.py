"""Nearest-class inspection: rank classes by cosine similarity of their
embeddings, optionally after projecting through a fitted pair."""

import csv

from .cem import project_text
from .errors import DataError
from .scoring import cosine


def nearest_classes(table, target, k, pair=None):
    """The k classes most similar to `target`, as (class, cosine) pairs.

    Similarities are cosine (matching the textual score term), descending,
    ties broken lexicographically; the target never appears in its own list.
    """
    if target not in table:
        raise DataError(f"target class {target!r} not in table")
    if not 0 <= k < len(table):
        raise DataError(f"k must be in [0, {len(table) - 1}], got {k}")
    vectors = table.vectors
    if pair is not None:
        vectors = project_text(pair, vectors)
    anchor = vectors[table.labels.index(target)]
    scored = [
        (label, cosine(anchor, vectors[i]))
        for i, label in enumerate(table.labels)
        if label != target
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def format_neighbors(rows):
    if not rows:
        return ""
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {sim: .6f}" for label, sim in rows)


def neighbors_to_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "cosine"])
        for label, sim in rows:
            writer.writerow([label, repr(sim)])

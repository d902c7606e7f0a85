"""Similarity scores for query classification and the softmax head.

All three variants share the squared-Euclidean visual term; the textual term
is added as lambda * cosine between the query feature and a class-name
representation (mapped through the shallow network for s2, projected through
a fitted pair for s3). With lambda = 0 every variant reduces bitwise to the
visual-only score.
"""

import numpy as np

from .cem import project_text, project_visual
from .errors import DataError, NumericalError

NORM_FLOOR = 1e-12


def cosine(x, y):
    """Cosine similarity; 0 when either vector has near-zero norm."""
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx < NORM_FLOOR or ny < NORM_FLOOR:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def _query_vector(q, dim):
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (dim,):
        raise DataError(f"query has shape {q.shape}, prototypes have dim {dim}")
    return q


def _textual_cosines(anchor, per_class_vectors):
    return np.array([cosine(anchor, v) for v in per_class_vectors])


def score_s1(q, protos):
    """Negative squared Euclidean distance to each prototype."""
    q = _query_vector(q, protos.dim)
    diffs = protos.matrix - q
    return -np.einsum("ij,ij->i", diffs, diffs)


def score_s2(q, protos, names, net, lam):
    """Visual distance plus lambda * cos(query, mapped class-name embedding)."""
    from .mapnet import forward

    scores = score_s1(q, protos)
    if lam != 0:
        mapped = forward(net, np.atleast_2d(np.asarray(names, dtype=np.float64)))
        if mapped.shape[0] != len(protos.classes):
            raise DataError("one class-name embedding per class expected")
        q = _query_vector(q, protos.dim)
        scores = scores + lam * _textual_cosines(q, mapped)
    return scores


def score_s3(q, protos, names, pair, lam):
    """Visual distance plus lambda * cos of the pair-projected query and name."""
    scores = score_s1(q, protos)
    if lam != 0:
        names = np.atleast_2d(np.asarray(names, dtype=np.float64))
        if names.shape[0] != len(protos.classes):
            raise DataError("one class-name embedding per class expected")
        q_shared = project_visual(pair, _query_vector(q, protos.dim))
        names_shared = project_text(pair, names)
        scores = scores + lam * _textual_cosines(q_shared, names_shared)
    return scores


def softmax_ce(scores, true_index):
    """Numerically stable softmax probabilities and cross-entropy loss."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DataError("scores must be a non-empty vector")
    if not np.all(np.isfinite(s)):
        raise NumericalError("scores contain non-finite values")
    if not 0 <= true_index < s.size:
        raise IndexError(f"true index {true_index} out of range for {s.size} scores")
    shifted = s - s.max()
    exps = np.exp(shifted)
    total = exps.sum()
    probs = exps / total
    loss = float(np.log(total) - shifted[true_index])
    return probs, loss


def classify(scores):
    """Index of the maximum score; ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise DataError("cannot classify empty score vector")
    return int(np.argmax(s))

"""Cross-modal alignment between class-name embeddings and visual prototypes.

Fits the paired linear maps A (text side) and B (visual side) as a chain of
transformations: whitening of each space, orthogonal alignment via the SVD of
the whitened cross-product, optional de-whitening that restores the original
variances, and truncation to the leading d components. The plain chain is
classical CCA; with de-whitening enabled the final maps reduce, for full-rank
square inputs, to the orthogonal alignment alone.

Class counts are usually far below embedding dimensionality, so the Gram
matrices are rank-deficient; all square roots are pseudo-inverses with a
relative eigenvalue floor, and requesting more dimensions than the numerical
rank of the whitened cross-product is a hard error.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import load_matrix, write_matrix
from .errors import DataError, FormatError, NumericalError, RankError
from .linalg import inv_sqrt_psd, sqrt_psd, svd

METHODS = ("cca", "cca+d")


@dataclass(frozen=True)
class AlignmentConfig:
    d: int
    method: str = "cca"
    eps_rel: float = 1e-10
    center: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.d < 1:
            raise DataError(f"target dimension must be >= 1, got {self.d}")
        if not (self.eps_rel > 0):
            raise DataError("eps_rel must be positive")


@dataclass(frozen=True)
class ProjectionPair:
    """Fitted maps A (m_t x d) and B (m_v x d) plus fit metadata."""

    a: np.ndarray
    b: np.ndarray
    config: AlignmentConfig
    correlations: np.ndarray  # first d singular values of the whitened cross-product
    classes_used: int
    text_mean: np.ndarray | None = None
    visual_mean: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        corr = np.asarray(self.correlations, dtype=np.float64)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "correlations", corr)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(corr))):
            raise NumericalError("projection pair contains non-finite values")
        if a.shape[1] != self.config.d or b.shape[1] != self.config.d:
            raise DataError("projection widths disagree with configured d")
        if corr.shape != (self.config.d,):
            raise DataError("one canonical correlation per kept dimension expected")
        if np.any(corr < -1e-9) or np.any(corr > 1 + 1e-9):
            raise NumericalError("canonical correlations outside [0, 1] tolerance band")
        if np.any(np.diff(corr) > 0):
            raise NumericalError("canonical correlations must be non-increasing")

    @property
    def m_t(self):
        return self.a.shape[0]

    @property
    def m_v(self):
        return self.b.shape[0]


def fit(x0, y0, config):
    """Fit a ProjectionPair from class-name embeddings x0 and visual prototypes y0.

    Rows of x0 (C x m_t) and y0 (C x m_v) correspond to the same classes, one
    per class.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    if x0.ndim != 2 or y0.ndim != 2:
        raise DataError("x0 and y0 must be 2-D")
    if x0.shape[0] != y0.shape[0]:
        raise DataError(f"row counts differ: {x0.shape[0]} vs {y0.shape[0]}")
    if x0.shape[0] < 2:
        raise DataError("need at least 2 classes to fit")
    m_t, m_v = x0.shape[1], y0.shape[1]
    if config.d > min(m_t, m_v):
        raise RankError(
            f"d={config.d} exceeds min(m_t, m_v)={min(m_t, m_v)}", min(m_t, m_v)
        )

    text_mean = visual_mean = None
    if config.center:
        text_mean = x0.mean(axis=0)
        visual_mean = y0.mean(axis=0)
        x0 = x0 - text_mean
        y0 = y0 - visual_mean
    if not np.any(x0):
        raise NumericalError("text modality is degenerate (all zero after centering)")
    if not np.any(y0):
        raise NumericalError("visual modality is degenerate (all zero after centering)")

    gram_x = x0.T @ x0
    gram_y = y0.T @ y0
    a1 = inv_sqrt_psd(gram_x, config.eps_rel)
    b1 = inv_sqrt_psd(gram_y, config.eps_rel)
    x1 = x0 @ a1
    y1 = y0 @ b1

    a2, s, b2t = svd(x1.T @ y1)
    rank = int(np.sum(s > max(m_t, m_v) * np.finfo(np.float64).eps * s[0])) if s.size else 0
    if config.d > rank:
        raise RankError(
            f"d={config.d} exceeds numerical rank {rank} of the whitened cross-product",
            rank,
        )
    b2 = b2t.T

    if config.method == "cca+d":
        a3 = a2.T @ sqrt_psd(gram_x, config.eps_rel) @ a2
        b3 = b2.T @ sqrt_psd(gram_y, config.eps_rel) @ b2
        a = (a1 @ a2 @ a3)[:, : config.d]
        b = (b1 @ b2 @ b3)[:, : config.d]
    else:
        a = (a1 @ a2)[:, : config.d]
        b = (b1 @ b2)[:, : config.d]

    return ProjectionPair(
        a=a,
        b=b,
        config=config,
        correlations=s[: config.d].copy(),
        classes_used=x0.shape[0],
        text_mean=text_mean,
        visual_mean=visual_mean,
    )


def project_text(pair, vectors):
    """Map text-side vector(s) into the shared d-dimensional space."""
    return _project(vectors, pair.a, pair.text_mean, "text")


def project_visual(pair, vectors):
    """Map visual-side vector(s) into the shared d-dimensional space."""
    return _project(vectors, pair.b, pair.visual_mean, "visual")


def _project(vectors, matrix, mean, side):
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != matrix.shape[0]:
        raise DataError(
            f"{side} vector has dim {v.shape[-1]}, projection expects {matrix.shape[0]}"
        )
    if mean is not None:
        v = v - mean
    return v @ matrix


def save_pair(pair, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(pair.a, directory / "A.cmm")
    write_matrix(pair.b, directory / "B.cmm")
    meta = {
        "method": pair.config.method,
        "d": pair.config.d,
        "eps_rel": pair.config.eps_rel,
        "center": pair.config.center,
        "m_t": pair.m_t,
        "m_v": pair.m_v,
        "correlations": pair.correlations.tolist(),
        "classes_used": pair.classes_used,
    }
    if pair.config.center:
        meta["text_mean"] = pair.text_mean.tolist()
        meta["visual_mean"] = pair.visual_mean.tolist()
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_pair(directory):
    directory = Path(directory)
    meta_path = directory / "meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{directory}: missing meta.json") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{meta_path}: invalid JSON: {e}") from None
    config = AlignmentConfig(
        d=meta["d"],
        method=meta["method"],
        eps_rel=meta["eps_rel"],
        center=meta["center"],
    )
    a = load_matrix(directory / "A.cmm")
    b = load_matrix(directory / "B.cmm")
    if a.shape != (meta["m_t"], meta["d"]) or b.shape != (meta["m_v"], meta["d"]):
        raise FormatError(f"{directory}: matrix shapes disagree with meta.json")
    return ProjectionPair(
        a=a,
        b=b,
        config=config,
        correlations=np.asarray(meta["correlations"], dtype=np.float64),
        classes_used=meta.get("classes_used", 0),
        text_mean=np.asarray(meta["text_mean"], dtype=np.float64) if config.center else None,
        visual_mean=np.asarray(meta["visual_mean"], dtype=np.float64) if config.center else None,
    )

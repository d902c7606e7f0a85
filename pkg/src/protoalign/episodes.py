"""Episode sampling, the evaluation harness, confidence intervals,
hyperparameter sweeps, and a synthetic data generator.

Episode i of an evaluation draws its generator from a counter-based stream
keyed by (master seed, i), so reports are bit-identical regardless of how
many worker threads execute the episodes.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cem import project_text, project_visual
from .data import (
    ClassSplit,
    EmbeddingTable,
    VisualFeatureStore,
    load_assignments,
    load_embeddings,
    load_split,
    write_assignments,
    write_embeddings,
    write_split,
)
from .errors import DataError
from .mapnet import forward
from .prototypes import episode_prototypes
from .scoring import NORM_FLOOR

VARIANTS = ("s1", "s2", "s3")
Z_95 = 1.96


@dataclass(frozen=True)
class Episode:
    n_way: int
    k_shot: int
    n_query: int
    support: tuple  # ((image_id, class), ...)
    query: tuple

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "query", tuple(self.query))
        classes = {cls for _, cls in self.support}
        if len(classes) != self.n_way:
            raise DataError(f"expected {self.n_way} classes, got {len(classes)}")
        for name, items, per_class in (
            ("support", self.support, self.k_shot),
            ("query", self.query, self.n_query),
        ):
            counts = {}
            for _, cls in items:
                counts[cls] = counts.get(cls, 0) + 1
            if set(counts) != classes or any(v != per_class for v in counts.values()):
                raise DataError(f"{name} set must hold exactly {per_class} images per class")
        support_ids = {i for i, _ in self.support}
        query_ids = {i for i, _ in self.query}
        if support_ids & query_ids:
            raise DataError("support and query sets overlap")


@dataclass(frozen=True)
class DataBundle:
    text: EmbeddingTable
    store: VisualFeatureStore
    split: ClassSplit


@dataclass(frozen=True)
class EvalConfig:
    variant: str
    lam: float = 0.0
    n_way: int = 5
    k_shot: int = 5
    n_query: int = 15
    section: str = "novel"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DataError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DataError("lambda must be a finite non-negative number")
        for name in ("n_way", "k_shot", "n_query"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")

    def echo(self):
        return {
            "variant": self.variant,
            "lambda": self.lam,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "n_query": self.n_query,
            "section": self.section,
        }


@dataclass(frozen=True)
class EvalReport:
    mean_accuracy: float
    ci95_half_width: float
    episodes: int
    seed: int
    config: dict
    per_episode: tuple

    def __post_init__(self):
        if not all(0.0 <= a <= 1.0 for a in self.per_episode):
            raise DataError("per-episode accuracies must lie in [0, 1]")
        if self.ci95_half_width < 0:
            raise DataError("confidence half-width must be non-negative")


def episode_rng(seed, index):
    """Independent per-episode generator from a counter-based (seed, index) key."""
    if seed < 0 or index < 0:
        raise DataError("seed and episode index must be non-negative")
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def sample_episode(classes, store, n_way, k_shot, n_query, rng):
    """Uniformly sample an N-way K-shot episode with Q queries per class."""
    classes = list(classes)
    if len(classes) < n_way:
        raise DataError(f"need {n_way} classes, section has {len(classes)}")
    picked = [classes[i] for i in rng.choice(len(classes), size=n_way, replace=False)]
    support = []
    query = []
    for cls in picked:
        images = store.images_of(cls)
        needed = k_shot + n_query
        if len(images) < needed:
            raise DataError(
                f"class {cls!r} has {len(images)} images, episode needs {needed}"
            )
        chosen = rng.choice(len(images), size=needed, replace=False)
        support.extend((images[i], cls) for i in chosen[:k_shot])
        query.extend((images[i], cls) for i in chosen[k_shot:])
    return Episode(
        n_way=n_way, k_shot=k_shot, n_query=n_query,
        support=tuple(support), query=tuple(query),
    )


def _cosine_matrix(a, b):
    """Pairwise cosines between rows of a and rows of b, 0 at the norm floor."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    a_ok = na >= NORM_FLOOR
    b_ok = nb >= NORM_FLOOR
    safe_a = np.where(a_ok, na, 1.0)
    safe_b = np.where(b_ok, nb, 1.0)
    c = (a @ b.T) / (safe_a[:, None] * safe_b[None, :])
    c *= a_ok[:, None] & b_ok[None, :]
    return c


def episode_predictions(config, bundle, index, seed, *, pair=None, net=None):
    """Predicted and true class indices for every query of episode `index`."""
    rng = episode_rng(seed, index)
    episode = sample_episode(
        bundle.split.section(config.section), bundle.store,
        config.n_way, config.k_shot, config.n_query, rng,
    )
    protos = episode_prototypes(episode.support, bundle.store)
    class_index = {c: i for i, c in enumerate(protos.classes)}

    queries = np.stack([bundle.store.feature(i) for i, _ in episode.query])
    true_indices = np.array([class_index[c] for _, c in episode.query])
    diffs = queries[:, None, :] - protos.matrix[None, :, :]
    scores = -np.einsum("qcj,qcj->qc", diffs, diffs)

    if config.variant != "s1" and config.lam != 0:
        names = bundle.text.rows(protos.classes)
        if config.variant == "s2":
            anchor_q = queries
            anchor_t = forward(net, names)
        else:
            anchor_q = project_visual(pair, queries)
            anchor_t = project_text(pair, names)
        scores = scores + config.lam * _cosine_matrix(anchor_q, anchor_t)

    predictions = np.argmax(scores, axis=1)  # ties resolve to the lowest index
    return predictions, true_indices


def _episode_accuracy(config, bundle, index, seed, pair, net):
    predictions, true_indices = episode_predictions(
        config, bundle, index, seed, pair=pair, net=net
    )
    return float(np.mean(predictions == true_indices))


def evaluate(config, bundle, episodes, seed, *, pair=None, net=None, threads=1):
    """Run `episodes` sampled tasks and report accuracy statistics.

    The report is a pure function of (data, config, seed); worker thread
    count only affects wall time.
    """
    if config.variant == "s2" and net is None:
        raise DataError("variant s2 requires a mapping network")
    if config.variant == "s3" and pair is None:
        raise DataError("variant s3 requires a projection pair")
    if episodes < 2:
        raise DataError("need at least 2 episodes for the confidence interval")
    if net is not None and net.mode != "eval":
        raise DataError("evaluation requires the network in eval mode")

    def run(index):
        return _episode_accuracy(config, bundle, index, seed, pair, net)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accuracies = list(pool.map(run, range(episodes)))
    else:
        accuracies = [run(i) for i in range(episodes)]

    mean, half = confidence_interval(accuracies)
    return EvalReport(
        mean_accuracy=mean,
        ci95_half_width=half,
        episodes=episodes,
        seed=seed,
        config=config.echo(),
        per_episode=tuple(accuracies),
    )


def confidence_interval(values):
    """Mean and 95% half-width: 1.96 * sample std (n-1 denominator) / sqrt(n)."""
    a = np.asarray(values, dtype=np.float64)
    if a.size < 2:
        raise DataError("confidence interval needs at least 2 values")
    mean = float(a.mean())
    half = float(Z_95 * a.std(ddof=1) / np.sqrt(a.size))
    return mean, half


def report_to_json(report):
    payload = {
        "mean_accuracy": report.mean_accuracy,
        "ci95_half_width": report.ci95_half_width,
        "episodes": report.episodes,
        "seed": report.seed,
        "config": report.config,
        "per_episode": list(report.per_episode),
    }
    return json.dumps(payload, indent=2) + "\n"


def save_report(report, path):
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def sweep(lambdas, dims, bundle, *, method="cca+d", eps_rel=1e-10, center=False,
          fit_section="base", variant="s3", n_way=5, k_shot=5, n_query=15,
          section="novel", episodes=600, seed=0, threads=1):
    """Evaluate every (lambda, d) grid point, fitting one pair per d.

    Every cell shares the evaluation seed, so rows are paired comparisons
    over identical episodes.
    """
    from .cem import AlignmentConfig, fit
    from .prototypes import global_prototypes

    lambdas = list(lambdas)
    dims = list(dims)
    if not lambdas or not dims:
        raise DataError("sweep grids must be non-empty")
    fit_classes = bundle.split.section(fit_section)
    x0 = bundle.text.rows(fit_classes)
    y0 = global_prototypes(bundle.store, fit_classes).matrix
    rows = []
    for d in dims:
        pair = fit(x0, y0, AlignmentConfig(d=d, method=method, eps_rel=eps_rel, center=center))
        for lam in lambdas:
            config = EvalConfig(
                variant=variant, lam=lam, n_way=n_way, k_shot=k_shot,
                n_query=n_query, section=section,
            )
            report = evaluate(config, bundle, episodes, seed, pair=pair, threads=threads)
            rows.append((lam, d, report))
    return rows


def sweep_to_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "d", "mean_accuracy", "ci95_half_width"])
        for lam, d, report in rows:
            writer.writerow([lam, d, repr(report.mean_accuracy), repr(report.ci95_half_width)])


def gen_synthetic(classes, images_per_class, dim_text, dim_vis, signal, noise,
                  seed, out_dir):
    """Write a seeded synthetic data bundle where class visual means are a
    fixed linear image of the class-name embeddings.

    Produces text.cmv, features.cmv, assignments.csv, splits.json,
    synsets.json and params.json under `out_dir`; byte-identical for
    identical arguments.
    """
    if min(classes, images_per_class, dim_text, dim_vis) < 1:
        raise DataError("all synthetic sizes must be positive")
    rng = np.random.default_rng(seed)
    width = max(3, len(str(classes - 1)))
    names = [f"class_{i:0{width}d}" for i in range(classes)]

    name_vecs = rng.standard_normal((classes, dim_text))
    mix = rng.standard_normal((dim_text, dim_vis)) / np.sqrt(dim_text)
    means = signal * (name_vecs @ mix)

    features = {}
    assignment = {}
    for c, cls in enumerate(names):
        draws = means[c] + noise * rng.standard_normal((images_per_class, dim_vis))
        for i in range(images_per_class):
            image_id = f"img_{c:0{width}d}_{i:05d}"
            features[image_id] = draws[i]
            assignment[image_id] = cls

    n_novel = max(1, classes // 5)
    n_val = max(1, classes // 5) if classes - n_novel > 1 else 0
    split = ClassSplit(
        base=names[: classes - n_val - n_novel],
        val=names[classes - n_val - n_novel : classes - n_novel],
        novel=names[classes - n_novel :],
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = EmbeddingTable(labels=tuple(names), vectors=name_vecs, variant="synthetic")
    write_embeddings(text, out / "text.cmv")
    feature_table = EmbeddingTable(
        labels=tuple(features), vectors=np.stack(list(features.values())), variant="features"
    )
    write_embeddings(feature_table, out / "features.cmv")
    write_assignments(assignment, out / "assignments.csv")
    write_split(split, out / "splits.json")
    (out / "synsets.json").write_text(
        json.dumps({n: [n] for n in names}, indent=2) + "\n", encoding="utf-8"
    )
    params = {
        "classes": classes, "images_per_class": images_per_class,
        "dim_text": dim_text, "dim_vis": dim_vis,
        "signal": signal, "noise": noise, "seed": seed,
    }
    (out / "params.json").write_text(json.dumps(params, indent=2) + "\n", encoding="utf-8")
    return load_bundle(out)


def load_bundle(directory):
    """Load a data bundle directory written by `gen_synthetic` (or hand-built
    with the same file names)."""
    directory = Path(directory)
    text = load_embeddings(directory / "text.cmv")
    feature_table = load_embeddings(directory / "features.cmv")
    store = load_assignments(directory / "assignments.csv", feature_table)
    split = load_split(directory / "splits.json")
    return DataBundle(text=text, store=store, split=split)

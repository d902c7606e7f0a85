"""Sentence bags: for each class name, the corpus sentences that mention it,
length-filtered and sampled with a fixed seed."""

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_TMAX = 64
DEFAULT_M = 1000


@dataclass(frozen=True)
class SentenceBag:
    name: str
    sentences: tuple
    sample_size: int  # requested m
    available: int  # matching sentences before sampling

    def __post_init__(self):
        if len(self.sentences) > self.sample_size:
            raise ValueError("bag holds more sentences than the sample size")


def _name_pattern(name):
    return re.compile(r"(?<!\w)" + re.escape(name) + r"(?!\w)", re.IGNORECASE)


def _bag_rng(seed, name):
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(int.from_bytes(digest, "little"),))
    )


def read_corpus(path):
    """One sentence per line; blank lines skipped. Sentence splitting beyond
    this is the corpus builder's job."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def build_bag(sentences, name, model, t_max=DEFAULT_TMAX, m=DEFAULT_M, seed=0):
    """Sample up to m sentences mentioning `name`, none longer than t_max
    word-pieces; when fewer exist, all are kept and `available` records it."""
    pattern = _name_pattern(name)
    matching = [
        s for s in sentences
        if pattern.search(s) and len(model.tokenize(s)) <= t_max
    ]
    if len(matching) > m:
        rng = _bag_rng(seed, name)
        picks = sorted(rng.choice(len(matching), size=m, replace=False))
        sampled = tuple(matching[i] for i in picks)
    else:
        sampled = tuple(matching)
    return SentenceBag(name=name, sentences=sampled, sample_size=m, available=len(matching))


def build_bags(sentences, synsets, model, t_max=DEFAULT_TMAX, m=DEFAULT_M, seed=0):
    """One bag per synonym name, grouped by class."""
    return {
        cls: [build_bag(sentences, name, model, t_max=t_max, m=m, seed=seed) for name in names]
        for cls, names in synsets.items()
    }

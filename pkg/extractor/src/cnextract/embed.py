"""Class-name embedding extraction.

Mask strategy: the first occurrence of the name in each sentence is replaced
by the model's single mask token; the output vector at the mask position is
the sentence's contribution. This handles names spanning several word-pieces,
since the whole name collapses to one position.

No-mask strategy: the sentence is encoded unmodified and the vectors of the
name's word-piece span(s) are averaged.

Per name, sentence vectors are averaged; per class, the synonym-name vectors
are averaged again.
"""

import numpy as np

from .corpus import _name_pattern


def _mask_sentence_vector(sentence, name, model):
    pattern = _name_pattern(name)
    if not pattern.search(sentence):
        raise ValueError(f"name {name!r} does not occur in sentence: {sentence[:60]!r}")
    masked = pattern.sub(model.mask_token, sentence, count=1)
    tokens = model.tokenize(masked)
    try:
        position = tokens.index(model.mask_token)
    except ValueError:
        raise ValueError(
            f"tokenizer did not keep the mask token atomic in: {masked[:60]!r}"
        ) from None
    return model.encode(tokens)[position]


def _nomask_sentence_vector(sentence, name, model):
    tokens = model.tokenize(sentence)
    name_pieces = model.tokenize(name)
    if not name_pieces:
        raise ValueError(f"name {name!r} tokenizes to nothing")
    span = len(name_pieces)
    positions = [
        i
        for i in range(len(tokens) - span + 1)
        if tokens[i : i + span] == name_pieces
    ]
    if not positions:
        raise ValueError(
            f"could not locate the word-piece span of {name!r} in: {sentence[:60]!r}"
        )
    outputs = model.encode(tokens)
    spans = [outputs[i : i + span].mean(axis=0) for i in positions]
    return np.mean(spans, axis=0)


def _name_vector(bag, model, sentence_vector):
    if not bag.sentences:
        raise ValueError(f"empty sentence bag for name {bag.name!r}")
    vectors = [sentence_vector(s, bag.name, model) for s in bag.sentences]
    return np.mean(vectors, axis=0)


def _extract(bags_by_class, model, sentence_vector, variant):
    labels = []
    rows = []
    for cls, bags in bags_by_class.items():
        if not bags:
            raise ValueError(f"class {cls!r} has no synonym bags")
        name_vectors = [_name_vector(bag, model, sentence_vector) for bag in bags]
        labels.append(cls)
        rows.append(np.mean(name_vectors, axis=0))
    return labels, np.stack(rows), variant


def extract_mask(bags_by_class, model):
    """-> (labels, vectors, "mask"); vector dim = model hidden size."""
    return _extract(bags_by_class, model, _mask_sentence_vector, "mask")


def extract_nomask(bags_by_class, model):
    """-> (labels, vectors, "nomask")."""
    return _extract(bags_by_class, model, _nomask_sentence_vector, "nomask")

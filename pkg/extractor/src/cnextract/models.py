"""Text models exposing per-token contextual output vectors.

Two backends share one interface (tokenize / encode / mask_token /
hidden_size):

- `HFTextModel` wraps any Hugging Face masked-LM checkpoint (requires the
  optional `transformers` + `torch` extras and downloadable/local weights).
- `HashTextModel` is a deterministic offline stand-in: every word-piece gets
  a hash-seeded static vector and the encoder mixes in the sentence mean, so
  outputs are contextual, reproducible across processes, and need no weights.
"""

import hashlib
import re

import numpy as np

_TOKEN_RUNS = re.compile(r"\[mask\]|[a-z0-9]+")


class HashTextModel:
    MASK = "[MASK]"
    PIECE = 4  # chars per word-piece chunk

    def __init__(self, hidden_size=64):
        self.hidden_size = hidden_size
        self.mask_token = self.MASK
        self._cache = {}

    def tokenize(self, text):
        """Lowercase word-piece-style tokenization: alphanumeric runs longer
        than PIECE chars split into chunks, continuations prefixed with ##;
        the mask token stays atomic."""
        tokens = []
        for run in _TOKEN_RUNS.findall(text.lower()):
            if run == "[mask]":
                tokens.append(self.MASK)
            elif len(run) <= self.PIECE:
                tokens.append(run)
            else:
                tokens.append(run[: self.PIECE])
                tokens.extend(
                    "##" + run[start : start + self.PIECE]
                    for start in range(self.PIECE, len(run), self.PIECE)
                )
        return tokens

    def _static(self, token):
        if token not in self._cache:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            self._cache[token] = rng.standard_normal(self.hidden_size)
        return self._cache[token]

    def encode(self, tokens):
        """Per-token output = static vector + half the sentence mean."""
        if not tokens:
            raise ValueError("cannot encode an empty token sequence")
        static = np.stack([self._static(t) for t in tokens])
        return static + 0.5 * static.mean(axis=0)


class HFTextModel:
    """Masked-LM backend over `transformers`; encodes one sentence at a time
    and strips the special tokens so positions align with `tokenize` output."""

    def __init__(self, name_or_path, device="cpu"):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModel.from_pretrained(name_or_path).to(device).eval()
        self.device = device
        self.hidden_size = int(self.model.config.hidden_size)
        self.mask_token = self.tokenizer.mask_token

    def tokenize(self, text):
        return self.tokenizer.tokenize(text)

    def encode(self, tokens):
        ids = self.tokenizer.convert_tokens_to_ids(tokens)
        ids = self.tokenizer.build_inputs_with_special_tokens(ids)
        batch = self._torch.tensor([ids], device=self.device)
        with self._torch.no_grad():
            hidden = self.model(batch).last_hidden_state[0]
        # drop the leading/trailing special tokens added above
        lead = len(ids) - len(tokens) - self._trailing_specials()
        out = hidden[lead : lead + len(tokens)]
        return out.double().cpu().numpy()

    def _trailing_specials(self):
        probe = self.tokenizer.build_inputs_with_special_tokens([self.tokenizer.mask_token_id])
        return len(probe) - 1 - probe.index(self.tokenizer.mask_token_id)


def load_text_model(spec):
    """Build a model from a CLI string: "toy" or "toy:<dim>" for the offline
    stand-in, anything else is a Hugging Face checkpoint name or path."""
    if spec == "toy":
        return HashTextModel()
    if spec.startswith("toy:"):
        return HashTextModel(hidden_size=int(spec.split(":", 1)[1]))
    return HFTextModel(spec)

"""Input embeddings for plain words, anonymised slots and slot-value bundles.

S1/AS look every token up in the word table. S2 embeds a bundle as the mean
word vector over all words of all its values. S3 runs a width-3 convolution
over each value's word vectors, mean-pools over positions, projects back to
the embedding width, then averages the per-value phrase vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import SlotValueBundle, Vocab

VARIANTS = ("S1", "AS", "S2", "S3")


class MalformedInput(ValueError):
    pass


@dataclass
class EmbeddingConfig:
    variant: str = "AS"
    embed_dim: int = 128
    conv_channels: int = 128
    kernel: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown embedding variant {self.variant!r}")
        if self.kernel != 3:
            raise ValueError("only kernel size 3 is supported")
        if self.embed_dim < 1 or self.conv_channels < 1:
            raise ValueError("embedding sizes must be positive")


def variant_for_format(fmt: str) -> str:
    return {"O": "S1", "AS": "AS", "ASP": "AS", "S2P": "S2", "S3P": "S3"}[fmt]


def positional_encoding(length: int, dim: int) -> np.ndarray:
    if dim % 2:
        raise ValueError(f"positional encoding needs an even dimension, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.zeros((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe.astype(np.float32)


class InputEmbedder:
    def __init__(self, config: EmbeddingConfig, vocab_size: int, rng: np.random.Generator,
                 prefix: str = "src_embed"):
        self.config = config
        d, c, k = config.embed_dim, config.conv_channels, config.kernel
        self.params: dict[str, tc.Tensor] = {f"{prefix}.table": tc.embedding_init(rng, vocab_size, d)}
        self.prefix = prefix
        if config.variant == "S3":
            self.params[f"{prefix}.conv_w"] = tc.xavier_uniform(rng, (k, d, c), k * d, k * c)
            self.params[f"{prefix}.conv_b"] = tc.zeros((c,))
            self.params[f"{prefix}.dense_w"] = tc.xavier_uniform(rng, (c, d), c, d)
            self.params[f"{prefix}.dense_b"] = tc.zeros((d,))

    def _p(self, name: str) -> tc.Tensor:
        return self.params[f"{self.prefix}.{name}"]

    @property
    def table(self) -> tc.Tensor:
        return self._p("table")

    def bundle_embeddings(self, bundles: Sequence[SlotValueBundle], vocab: Vocab) -> tc.Tensor:
        """[len(bundles), embed_dim] embeddings for S2/S3 bundles."""
        for b in bundles:
            if not b.values or any(len(v) == 0 for v in b.values):
                raise MalformedInput(f"empty bundle for slot {b.slot_name!r}")
        table = self.table
        if self.config.variant == "S2":
            ids, rows, weights = [], [], []
            for r, b in enumerate(bundles):
                words = [w for v in b.values for w in v]
                ids.extend(vocab.id(w) for w in words)
                rows.extend([r] * len(words))
                weights.extend([1.0 / len(words)] * len(words))
            avg = np.zeros((len(bundles), len(ids)), dtype=np.float32)
            avg[rows, np.arange(len(ids))] = weights
            return tc.matmul(tc.Tensor(avg), tc.embedding_lookup(table, ids))

        if self.config.variant != "S3":
            raise MalformedInput(f"variant {self.config.variant} does not embed bundles")
        values = [v for b in bundles for v in b.values]
        longest = max(len(v) for v in values)
        ids = np.full((len(values), longest), vocab.pad, dtype=np.int64)
        mask = np.zeros((len(values), longest), dtype=np.float32)
        for i, v in enumerate(values):
            ids[i, :len(v)] = [vocab.id(w) for w in v]
            mask[i, :len(v)] = 1.0
        # zeroed padding == same-length zero padding for the shorter values
        x = tc.mul(tc.embedding_lookup(table, ids), tc.Tensor(mask[:, :, None]))
        h = tc.relu(tc.conv1d(x, self._p("conv_w"), self._p("conv_b")))
        pool = (mask / mask.sum(axis=1, keepdims=True))[:, None, :]
        pooled = tc.reshape(tc.matmul(tc.Tensor(pool), h), (len(values), -1))
        phrase = tc.add(tc.matmul(pooled, self._p("dense_w")), self._p("dense_b"))
        per_bundle = np.zeros((len(bundles), len(values)), dtype=np.float32)
        col = 0
        for r, b in enumerate(bundles):
            per_bundle[r, col:col + len(b.values)] = 1.0 / len(b.values)
            col += len(b.values)
        return tc.matmul(tc.Tensor(per_bundle), phrase)

    def embed_batch(self, sequences: Sequence[Sequence], vocab: Vocab) -> tuple[tc.Tensor, np.ndarray]:
        """Embed padded sequences -> ([B, L, D] tensor, [B, L] bool mask of real tokens)."""
        batch = len(sequences)
        length = max(len(s) for s in sequences)
        bundles: list[SlotValueBundle] = []
        slot_of: dict[SlotValueBundle, int] = {}
        ids = np.full((batch, length), vocab.pad, dtype=np.int64)
        keep = np.zeros((batch, length), dtype=bool)
        n_vocab = self.table.shape[0]
        for i, seq in enumerate(sequences):
            for j, tok in enumerate(seq):
                keep[i, j] = True
                if isinstance(tok, SlotValueBundle):
                    if tok not in slot_of:
                        slot_of[tok] = len(bundles)
                        bundles.append(tok)
                    ids[i, j] = n_vocab + slot_of[tok]
                else:
                    ids[i, j] = vocab.id(tok)
        if bundles:
            table = tc.concat([self.table, self.bundle_embeddings(bundles, vocab)], axis=0)
        else:
            table = self.table
        return tc.embedding_lookup(table, ids), keep

    def embed_sequence(self, tokens: Sequence, vocab: Vocab) -> tc.Tensor:
        """[len(tokens), embed_dim] embedding of one sequence."""
        emb, _ = self.embed_batch([tokens], vocab)
        return tc.reshape(emb, (len(tokens), self.config.embed_dim))

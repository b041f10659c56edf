"""Transformer encoder-decoder whose output layer spans copy and vocabulary classes.

At every decoder step the output scores are ``[a_1..a_n, s_1..s_|V|]``: ``a_i``
are the final decoder layer's cross-attention logits for source position
``i`` (pre-softmax, averaged over heads) and ``s_j`` the dot product of the
decoder state with the output embedding of word ``j``. Class ``i < n`` means
"copy source token i", class ``n + j`` means "emit word j".
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import FormattedPair, SlotValueBundle, Vocab, pointer_index
from .embedder import EmbeddingConfig, InputEmbedder, positional_encoding


class DataError(ValueError):
    pass


class LengthError(ValueError):
    pass


@dataclass
class ModelConfig:
    heads: int = 4
    layers: int = 2
    hidden: int = 128
    ffn: int = 256
    dropout: float = 0.1
    max_len: int = 32
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    copy_heads: str = "mean"  # "mean" or "max" over heads

    def __post_init__(self):
        if isinstance(self.embedding, dict):
            self.embedding = EmbeddingConfig(**self.embedding)
        if min(self.heads, self.layers, self.hidden, self.ffn, self.max_len) < 1:
            raise ValueError("model sizes must be positive")
        if self.hidden % self.heads:
            raise ValueError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.embedding.embed_dim != self.hidden:
            raise ValueError("embedding width must equal the hidden size")
        if self.copy_heads not in ("mean", "max"):
            raise ValueError("copy_heads must be 'mean' or 'max'")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EncoderMemory:
    states: tc.Tensor  # [B, n, hidden]
    keep: np.ndarray  # [B, n] real-token mask
    source_tokens: list

    @property
    def n(self) -> int:
        return self.states.shape[1]


@dataclass
class PointerLogits:
    copy_scores: np.ndarray  # [..., n]
    vocab_scores: np.ndarray  # [..., |V|]

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.copy_scores, self.vocab_scores], axis=-1)


def output_distribution(logits: PointerLogits | np.ndarray) -> np.ndarray:
    scores = logits.combined if isinstance(logits, PointerLogits) else np.asarray(logits)
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _linear(x, w, b):
    return tc.add(tc.matmul(x, w), b)


class PointerTransformer:
    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0):
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        d, f = config.hidden, config.ffn
        self.embedder = InputEmbedder(config.embedding, len(vocab), rng)
        p: dict[str, tc.Tensor] = dict(self.embedder.params)
        # decoder inputs: vocabulary words plus one learned row per copied position
        p["tgt_embed.table"] = tc.embedding_init(rng, len(vocab) + config.max_len, d)
        p["out_embed.table"] = tc.embedding_init(rng, len(vocab), d)

        def attn(prefix):
            for n in ("q", "k", "v", "o"):
                p[f"{prefix}.w{n}"] = tc.xavier_uniform(rng, (d, d), d, d)
                p[f"{prefix}.b{n}"] = tc.zeros((d,))

        def ffn(prefix):
            p[f"{prefix}.w1"] = tc.xavier_uniform(rng, (d, f), d, f)
            p[f"{prefix}.b1"] = tc.zeros((f,))
            p[f"{prefix}.w2"] = tc.xavier_uniform(rng, (f, d), f, d)
            p[f"{prefix}.b2"] = tc.zeros((d,))

        def norm(prefix):
            p[f"{prefix}.gain"] = tc.ones((d,))
            p[f"{prefix}.bias"] = tc.zeros((d,))

        for i in range(config.layers):
            attn(f"enc{i}.self")
            norm(f"enc{i}.ln1")
            ffn(f"enc{i}.ffn")
            norm(f"enc{i}.ln2")
        for i in range(config.layers):
            attn(f"dec{i}.self")
            norm(f"dec{i}.ln1")
            attn(f"dec{i}.cross")
            norm(f"dec{i}.ln2")
            ffn(f"dec{i}.ffn")
            norm(f"dec{i}.ln3")
        self.params = p
        self._pe = positional_encoding(config.max_len + 2, d)

    # ------------------------------------------------------------ plumbing

    def parameters(self) -> list[tc.Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in state or state[k].shape != t.shape:
                raise DataError(f"checkpoint tensor {k!r} missing or misshapen")
            t.data = state[k].astype(np.float32).copy()

    def _ln(self, x, prefix):
        return tc.layer_norm(x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"])

    def _ffn(self, x, prefix):
        p = self.params
        h = tc.relu(_linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
        return _linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])

    def _attention(self, q_in, kv_in, prefix, keep):
        """Multi-head attention; returns (output [B,Lq,D], logits [B,H,Lq,Lk])."""
        p = self.params
        b, lq, d = q_in.shape
        lk = kv_in.shape[1]
        h = self.config.heads
        dk = d // h
        q = tc.transpose(tc.reshape(_linear(q_in, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), (b, lq, h, dk)), (0, 2, 1, 3))
        k = tc.transpose(tc.reshape(_linear(kv_in, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), (b, lk, h, dk)), (0, 2, 3, 1))
        v = tc.transpose(tc.reshape(_linear(kv_in, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), (b, lk, h, dk)), (0, 2, 1, 3))
        logits = tc.scale(tc.matmul(q, k), 1.0 / math.sqrt(dk))
        att = tc.masked_softmax(logits, keep)
        ctx = tc.reshape(tc.transpose(tc.matmul(att, v), (0, 2, 1, 3)), (b, lq, d))
        return _linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"]), logits

    def _drop(self, x, training, rng):
        return tc.dropout(x, self.config.dropout, rng, training)

    # ------------------------------------------------------------ forward

    def encode(self, sources: Sequence[Sequence], training: bool = False,
               rng: np.random.Generator | None = None) -> EncoderMemory:
        for s in sources:
            if not 1 <= len(s) <= self.config.max_len:
                raise LengthError(f"source length {len(s)} outside [1, {self.config.max_len}]")
        emb, keep = self.embedder.embed_batch(sources, self.vocab)
        n = emb.shape[1]
        x = tc.add(tc.scale(emb, math.sqrt(self.config.hidden)), tc.Tensor(self._pe[:n]))
        x = self._drop(x, training, rng)
        key_keep = keep[:, None, None, :]
        for i in range(self.config.layers):
            a, _ = self._attention(x, x, f"enc{i}.self", key_keep)
            x = self._ln(tc.add(x, self._drop(a, training, rng)), f"enc{i}.ln1")
            x = self._ln(tc.add(x, self._drop(self._ffn(x, f"enc{i}.ffn"), training, rng)), f"enc{i}.ln2")
        return EncoderMemory(x, keep, list(sources))

    def decode(self, memory: EncoderMemory, dec_in: np.ndarray, training: bool = False,
               rng: np.random.Generator | None = None) -> tuple[tc.Tensor, tc.Tensor]:
        """Teacher-forced decoder pass.

        dec_in: [B, T] ids into the decoder input table (word id, or
        |V| + i for a token copied from source position i).
        Returns (copy scores [B,T,n], vocab scores [B,T,|V|]).
        """
        b, t = dec_in.shape
        if t > self.config.max_len + 1:
            raise LengthError(f"decoder prefix of {t} exceeds max_len")
        y = tc.embedding_lookup(self.params["tgt_embed.table"], dec_in)
        y = tc.add(tc.scale(y, math.sqrt(self.config.hidden)), tc.Tensor(self._pe[:t]))
        y = self._drop(y, training, rng)
        causal = np.tril(np.ones((t, t), dtype=bool))[None, None]
        src_keep = memory.keep[:, None, None, :]
        cross_logits = None
        for i in range(self.config.layers):
            a, _ = self._attention(y, y, f"dec{i}.self", causal)
            y = self._ln(tc.add(y, self._drop(a, training, rng)), f"dec{i}.ln1")
            a, cross_logits = self._attention(y, memory.states, f"dec{i}.cross", src_keep)
            y = self._ln(tc.add(y, self._drop(a, training, rng)), f"dec{i}.ln2")
            y = self._ln(tc.add(y, self._drop(self._ffn(y, f"dec{i}.ffn"), training, rng)), f"dec{i}.ln3")
        if self.config.copy_heads == "mean":
            copy = tc.mean_pool(cross_logits, axis=1)
        else:
            copy = tc.max_pool(cross_logits, axis=1)
        copy = tc.masked_fill(copy, ~memory.keep[:, None, :])
        vocab_scores = tc.matmul(y, tc.transpose(self.params["out_embed.table"], (1, 0)))
        return copy, vocab_scores

    def logits(self, sources: Sequence[Sequence], dec_in: np.ndarray, training: bool = False,
               rng: np.random.Generator | None = None) -> tuple[tc.Tensor, int]:
        """Combined [B, T, n + |V|] scores and the padded source length n."""
        memory = self.encode(sources, training, rng)
        copy, vocab_scores = self.decode(memory, dec_in, training, rng)
        return tc.concat([copy, vocab_scores], axis=-1), memory.n

    def decode_step(self, memory: EncoderMemory, prefix: np.ndarray) -> PointerLogits:
        """Scores for the next token after each prefix row ([K, t] decoder-input ids).

        ``memory`` holds a single source and is shared by all K prefixes.
        """
        prefix = np.atleast_2d(np.asarray(prefix, dtype=np.int64))
        k = prefix.shape[0]
        with tc.no_grad():
            if memory.states.shape[0] != k:
                states = tc.Tensor(np.repeat(memory.states.data[:1], k, axis=0))
                memory = EncoderMemory(states, np.repeat(memory.keep[:1], k, axis=0), memory.source_tokens)
            copy, vocab_scores = self.decode(memory, prefix)
        return PointerLogits(copy.data[:, -1, :].copy(), vocab_scores.data[:, -1, :].copy())

    # ------------------------------------------------------------ targets

    def decoder_input_id(self, cls: int, n: int) -> int:
        """Map an output class to the id fed back into the decoder."""
        if cls < n:
            return len(self.vocab) + cls
        return cls - n

    def target_classes(self, pair: FormattedPair, n: int) -> list[int]:
        """Output classes for ``pair.target`` + EOS, with ``n`` copy slots in front."""
        out = []
        for tok in pair.target:
            i = pointer_index(tok)
            if i is not None:
                if i >= len(pair.source):
                    raise DataError(f"pair {pair.pair_id}: pointer {tok} beyond source length {len(pair.source)}")
                out.append(i)
            else:
                out.append(n + self.vocab.id(tok))
        out.append(n + self.vocab.eos)
        return out


def batch_arrays(model: PointerTransformer, pairs: Sequence[FormattedPair]):
    """Teacher-forcing inputs/targets for a batch sharing one format."""
    if len({p.format for p in pairs}) > 1:
        raise DataError("a batch must contain a single data format")
    n = max(len(p.source) for p in pairs)
    classes = [model.target_classes(p, n) for p in pairs]
    t = max(len(c) for c in classes)
    if t > model.config.max_len + 1:
        raise LengthError(f"target length {t - 1} exceeds max_len {model.config.max_len}")
    dec_in = np.full((len(pairs), t), model.vocab.pad, dtype=np.int64)
    targets = np.zeros((len(pairs), t), dtype=np.int64)
    weights = np.zeros((len(pairs), t), dtype=np.float32)
    for r, cls in enumerate(classes):
        dec_in[r, 0] = model.vocab.bos
        for j, c in enumerate(cls[:-1]):
            dec_in[r, j + 1] = model.decoder_input_id(c, n)
        targets[r, :len(cls)] = cls
        weights[r, :len(cls)] = 1.0
    return dec_in, targets, weights


def training_loss(pairs: Sequence[FormattedPair], model: PointerTransformer, training: bool = False,
                  rng: np.random.Generator | None = None) -> tc.Tensor:
    """Mean token cross-entropy over the n + |V| classes (padding excluded)."""
    dec_in, targets, weights = batch_arrays(model, pairs)
    combined, _ = model.logits([p.source for p in pairs], dec_in, training, rng)
    return tc.cross_entropy(combined, targets, weights)


def source_has_bundles(tokens) -> bool:
    return any(isinstance(t, SlotValueBundle) for t in tokens)

"""Small joint intent classifier + BIO slot tagger used for extrinsic evaluation.

Encoder: each token is represented by the concatenated embeddings of itself
and its two neighbours, passed through a ReLU layer. The intent head reads
the mean of those token states; the tag head reads each token state
together with that mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import SlotCatalog, slots_in, stable_seed
from .generator import GeneratedUtterance, lexicalize_with_spans
from .metrics import repair_bio

PAD, UNK = "<pad>", "<unk>"


class TrainingError(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


def spans_to_bio(n: int, spans: Iterable[tuple[int, int, str]]) -> list[str]:
    tags = ["O"] * n
    for s, e, name in spans:
        tags[s] = "B-" + name
        for i in range(s + 1, e):
            tags[i] = "I-" + name
    return tags


@dataclass(frozen=True)
class NluExample:
    words: tuple[str, ...]
    intent: str
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) != len(self.tags):
            raise ValueError("words and tags differ in length")
        if list(self.tags) != repair_bio(self.tags)[0]:
            raise ValueError(f"malformed BIO tags {self.tags}")

    @classmethod
    def from_spans(cls, words, intent, spans) -> "NluExample":
        return cls(tuple(words), intent, tuple(spans_to_bio(len(words), spans)))


@dataclass
class NluConfig:
    embed_dim: int = 32
    hidden: int = 64
    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 16
    seed: int = 0


class NluModel:
    def __init__(self, words: Sequence[str], intents: Sequence[str], slot_names: Sequence[str],
                 config: NluConfig):
        self.config = config
        self.words = [PAD, UNK] + sorted(set(words) - {PAD, UNK})
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.intents = sorted(intents)
        self.tags = ["O"] + [f"{p}-{s}" for s in sorted(slot_names) for p in ("B", "I")]
        self.tag_index = {t: i for i, t in enumerate(self.tags)}
        rng = np.random.default_rng([config.seed, 7])
        e, h = config.embed_dim, config.hidden
        self.params = {
            "embed": tc.embedding_init(rng, len(self.words), e),
            "w1": tc.xavier_uniform(rng, (3 * e, h), 3 * e, h),
            "b1": tc.zeros((h,)),
            "wi": tc.xavier_uniform(rng, (h, len(self.intents)), h, len(self.intents)),
            "bi": tc.zeros((len(self.intents),)),
            "wt": tc.xavier_uniform(rng, (2 * h, len(self.tags)), 2 * h, len(self.tags)),
            "bt": tc.zeros((len(self.tags),)),
        }

    def ids(self, words: Sequence[str]) -> list[int]:
        return [self.word_index.get(w, 1) for w in words]

    def forward(self, batch: Sequence[Sequence[str]]):
        p = self.params
        b = len(batch)
        length = max(len(u) for u in batch)
        ids = np.zeros((b, length + 2), dtype=np.int64)
        mask = np.zeros((b, length), dtype=np.float32)
        for i, u in enumerate(batch):
            ids[i, 1:len(u) + 1] = self.ids(u)
            mask[i, :len(u)] = 1.0
        x = tc.concat([tc.embedding_lookup(p["embed"], ids[:, k:k + length]) for k in range(3)], axis=-1)
        h = tc.relu(tc.add(tc.matmul(x, p["w1"]), p["b1"]))  # [B, L, H]
        pool = (mask / mask.sum(axis=1, keepdims=True))[:, None, :]
        sent = tc.matmul(tc.Tensor(pool), h)  # [B, 1, H]
        intent_logits = tc.reshape(tc.add(tc.matmul(sent, p["wi"]), p["bi"]), (b, len(self.intents)))
        spread = tc.matmul(tc.Tensor(np.ones((b, length, 1), dtype=np.float32)), sent)
        tag_logits = tc.add(tc.matmul(tc.concat([h, spread], axis=-1), p["wt"]), p["bt"])
        return intent_logits, tag_logits, mask

    def loss(self, examples: Sequence[NluExample]) -> tc.Tensor:
        intent_logits, tag_logits, mask = self.forward([e.words for e in examples])
        intents = np.array([self.intents.index(e.intent) for e in examples])
        tags = np.zeros(mask.shape, dtype=np.int64)
        for i, e in enumerate(examples):
            tags[i, :len(e.tags)] = [self.tag_index.get(t, 0) for t in e.tags]
        return tc.add(tc.cross_entropy(intent_logits, intents), tc.cross_entropy(tag_logits, tags, mask))

    def predict_batch(self, utterances: Sequence[Sequence[str]]) -> list[tuple[str, list[str]]]:
        for u in utterances:
            if len(u) == 0:
                raise DegenerateInput("cannot classify an empty utterance")
        out = []
        with tc.no_grad():
            for start in range(0, len(utterances), 256):
                chunk = utterances[start:start + 256]
                il, tl, _ = self.forward(chunk)
                for i, u in enumerate(chunk):
                    intent = self.intents[int(np.argmax(il.data[i]))]
                    tags = [self.tags[int(k)] for k in np.argmax(tl.data[i, :len(u)], axis=-1)]
                    out.append((intent, repair_bio(tags)[0]))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}


def predict(model: NluModel, utterance: Sequence[str]) -> tuple[str, list[str]]:
    return model.predict_batch([list(utterance)])[0]


def _vocabulary(samples, catalog: SlotCatalog) -> set[str]:
    words = {w for toks, _ in samples for w in toks if not w.startswith("{")}
    for name in catalog.names():
        words.update(w for v in catalog[name] for w in v)
    return words


def train_nlu(samples: Sequence[tuple[Sequence[str], str]], catalog: SlotCatalog,
              config: NluConfig = NluConfig(), fixed: Sequence[NluExample] = ()) -> NluModel:
    """Train on delexicalised (tokens, intent) samples, lexicalised afresh each epoch.

    ``fixed`` holds already-lexicalised examples used every epoch as is.
    """
    if not samples and not fixed:
        raise TrainingError("no training data")
    intents = sorted({i for _, i in samples} | {e.intent for e in fixed})
    if not intents:
        raise TrainingError("no intents in training data")
    words = _vocabulary(samples, catalog) | {w for e in fixed for w in e.words}
    model = NluModel(words, intents, catalog.names(), config)
    params = [model.params[k] for k in sorted(model.params)]
    opt = tc.Adam(params, beta2=0.999, eps=1e-8)
    order_rng = np.random.default_rng([config.seed, 11])
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, 13, epoch])
        data = list(fixed)
        for toks, intent in samples:
            w, spans = lexicalize_with_spans(toks, catalog, rng)
            data.append(NluExample.from_spans(w, intent, spans))
        order = order_rng.permutation(len(data))
        for s in range(0, len(data), config.batch_size):
            batch = [data[i] for i in order[s:s + config.batch_size]]
            opt.zero_grad()
            tc.backward(model.loss(batch))
            opt.step(config.lr)
    return model


def skill_samples(skill) -> list[tuple[tuple[str, ...], str]]:
    return [(u.tokens, u.intent) for u in skill.sample_utterances]


@dataclass
class FilterResult:
    retained: list[tuple[GeneratedUtterance, str]]
    total: int

    @property
    def rate(self) -> float | None:
        return len(self.retained) / self.total if self.total else None


def intent_filter(paraphrases: Sequence[tuple[GeneratedUtterance, str]], model: NluModel,
                  catalog: SlotCatalog, seed: int = 0, fillings: int = 1) -> FilterResult:
    """Keep paraphrases whose lexicalised form is classified into their source intent.

    With ``fillings > 1`` each paraphrase is lexicalised several times and
    the majority prediction decides.
    """
    retained = []
    for idx, (g, intent) in enumerate(paraphrases):
        rng = np.random.default_rng([seed, idx])
        votes = []
        for _ in range(fillings):
            words, _ = lexicalize_with_spans(g.delex_tokens, catalog, rng)
            if not words:
                votes.append(None)
                continue
            votes.append(predict(model, words)[0])
        agree = sum(v == intent for v in votes)
        if agree * 2 > fillings:
            retained.append((g, intent))
    return FilterResult(retained, len(paraphrases))


def augment_and_retrain(samples: Sequence[tuple[Sequence[str], str]], catalog: SlotCatalog,
                        retained: Sequence[tuple[GeneratedUtterance, str]],
                        config: NluConfig = NluConfig()) -> NluModel:
    """Retrain on the original samples plus the retained paraphrases (same seed policy)."""
    extra = [(tuple(g.delex_tokens), intent) for g, intent in retained]
    return train_nlu(list(samples) + extra, catalog, config)


def skill_seed(seed: int, skill_name: str) -> int:
    return stable_seed(seed, skill_name) % (2 ** 31)


def slot_names_of(tokens) -> set[str]:
    return set(slots_in(tokens))

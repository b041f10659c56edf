"""Beam-search decoding over copy+vocabulary classes, pointer resolution, lexicalisation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import (SlotCatalog, SlotOccurrence, SlotValueBundle, deanonymize, is_slot_ref,
                     ref_name, reformat_source, slot_ref)
from .model import EncoderMemory, PointerTransformer
from . import tensorcore as tc

StepFn = Callable[[list[tuple[int, ...]]], np.ndarray]


class LexicalizationError(KeyError):
    pass


class PointerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    classes: tuple[int, ...]  # emitted classes, EOS excluded
    logprob: float
    finished: bool = False
    forced: bool = False  # hit max_len without emitting EOS

    def length(self) -> int:
        return len(self.classes) + (1 if self.finished and not self.forced else 0)

    def score(self, normalize: bool = True) -> float:
        if not normalize:
            return self.logprob
        return self.logprob / max(self.length(), 1)


@dataclass
class GeneratedUtterance:
    delex_tokens: tuple[str, ...]
    source_id: object = None
    score: float = 0.0
    forced: bool = False


def _rank_key(h: Hypothesis, normalize: bool):
    return (-h.score(normalize), h.classes)


def beam_search(step_fn: StepFn, beam: int, nbest: int, max_len: int, eos: int,
                normalize: bool = True) -> list[Hypothesis]:
    """Length-synchronous beam search.

    ``step_fn`` maps a list of class prefixes to a [K, C] array of
    log-probabilities for the next class. Finished hypotheses leave the beam
    for a pool; the best ``nbest`` of the pool are returned. Ties are broken
    by the class-id sequence, smallest first.
    """
    if nbest > beam:
        raise ValueError(f"nbest ({nbest}) must not exceed beam ({beam})")
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be positive")
    alive = [Hypothesis((), 0.0)]
    pool: list[Hypothesis] = []
    for _ in range(max_len):
        logp = np.asarray(step_fn([h.classes for h in alive]), dtype=np.float64)
        total = np.array([h.logprob for h in alive])[:, None] + logp
        flat = total.reshape(-1)
        finite = np.isfinite(flat)
        if not finite.any():
            break
        k = min(beam, int(finite.sum()))
        cutoff = np.partition(flat[finite], -k)[-k]
        cand = np.flatnonzero(finite & (flat >= cutoff))
        n_cls = total.shape[1]
        ranked = sorted(
            ((float(flat[i]), alive[i // n_cls].classes + (int(i % n_cls),)) for i in cand),
            key=lambda x: (-x[0], x[1]),
        )[:k]
        alive = []
        for lp, seq in ranked:
            if seq[-1] == eos:
                pool.append(Hypothesis(seq[:-1], lp, finished=True))
            else:
                alive.append(Hypothesis(seq, lp))
        if not alive:
            break
        if len(pool) >= nbest:
            worst_kept = sorted(h.score(normalize) for h in pool)[-nbest]
            # log-probabilities only decrease; with normalisation the best an
            # alive prefix can still reach is logprob / (max_len + 1)
            best_alive = max(h.logprob for h in alive)
            if normalize:
                best_alive /= max_len + 1
            if best_alive <= worst_kept:
                break
    if len(pool) < nbest and alive:
        pool.extend(Hypothesis(h.classes, h.logprob, finished=True, forced=True) for h in alive)
    pool.sort(key=lambda h: _rank_key(h, normalize))
    return pool[:nbest]


def greedy_decode(step_fn: StepFn, max_len: int, eos: int) -> Hypothesis:
    classes: tuple[int, ...] = ()
    lp = 0.0
    for _ in range(max_len):
        scores = np.asarray(step_fn([classes]), dtype=np.float64)[0]
        c = int(np.argmax(scores))
        lp += float(scores[c])
        if c == eos:
            return Hypothesis(classes, lp, finished=True)
        classes = classes + (c,)
    return Hypothesis(classes, lp, finished=True, forced=True)


def model_step_fn(model: PointerTransformer, memory: EncoderMemory) -> StepFn:
    n = memory.n
    vocab = model.vocab
    banned = np.array([n + vocab.pad, n + vocab.bos])

    def step(prefixes):
        rows = [[vocab.bos] + [model.decoder_input_id(c, n) for c in p] for p in prefixes]
        logits = model.decode_step(memory, np.array(rows, dtype=np.int64)).combined.astype(np.float64)
        logits[:, banned] = -np.inf
        return tc.log_softmax_np(logits, axis=-1)

    return step


def decode_source(model: PointerTransformer, source_tokens: Sequence, beam: int = 5, nbest: int = 3,
                  max_len: int | None = None, normalize: bool = True) -> list[Hypothesis]:
    with tc.no_grad():
        memory = model.encode([source_tokens])
    max_len = max_len or model.config.max_len
    step = model_step_fn(model, memory)
    eos = memory.n + model.vocab.eos
    if beam == 1 and nbest == 1:
        return [greedy_decode(step, max_len, eos)]
    return beam_search(step, beam, nbest, max_len, eos, normalize)


def resolve_pointers(h: Hypothesis, source_tokens: Sequence, vocab_tokens: Sequence[str]) -> list[str]:
    """Turn output classes into tokens: copies take the source token, bundles become slot references."""
    n = len(source_tokens)
    out = []
    for c in h.classes:
        if c < n:
            tok = source_tokens[c]
            out.append(slot_ref(tok.slot_name) if isinstance(tok, SlotValueBundle) else tok)
        elif c - n < len(vocab_tokens):
            out.append(vocab_tokens[c - n])
        else:
            raise PointerError(f"class {c} outside {n} copy + {len(vocab_tokens)} vocabulary classes")
    return out


def to_generated(h: Hypothesis, source_tokens: Sequence, slot_map: Sequence[SlotOccurrence],
                 vocab_tokens: Sequence[str], normalize: bool = True, source_id=None) -> GeneratedUtterance:
    tokens = deanonymize(resolve_pointers(h, source_tokens, vocab_tokens), slot_map)
    return GeneratedUtterance(tokens, source_id, h.score(normalize), h.forced)


def paraphrase(model: PointerTransformer, delex_source: Sequence[str], fmt: str,
               catalog: SlotCatalog | None = None, beam: int = 5, nbest: int = 3,
               normalize: bool = True, seed: int = 0, max_values: int = 8,
               source_id=None) -> list[GeneratedUtterance]:
    """n-best delexicalised paraphrases of one source, duplicates removed."""
    src, slot_map = reformat_source(delex_source, fmt, catalog, seed, max_values)
    hyps = decode_source(model, src, beam, nbest, normalize=normalize)
    seen, out = set(), []
    for h in hyps:
        g = to_generated(h, src, slot_map, model.vocab.tokens, normalize, source_id)
        if g.delex_tokens not in seen:
            seen.add(g.delex_tokens)
            out.append(g)
    return out


def lexicalize_with_spans(tokens: Sequence[str], catalog: SlotCatalog, rng: np.random.Generator):
    """Fill each slot reference with a uniformly drawn catalog value.

    Returns (words, [(start, end, slot_name), ...]).
    """
    words: list[str] = []
    spans = []
    for tok in tokens:
        if is_slot_ref(tok):
            name = ref_name(tok)
            if name not in catalog:
                raise LexicalizationError(f"slot {name!r} not in catalog")
            values = catalog[name]
            value = values[int(rng.integers(len(values)))]
            spans.append((len(words), len(words) + len(value), name))
            words.extend(value)
        else:
            words.append(tok)
    return words, spans


def lexicalize(g: GeneratedUtterance | Sequence[str], catalog: SlotCatalog, seed) -> list[str]:
    tokens = g.delex_tokens if isinstance(g, GeneratedUtterance) else g
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return lexicalize_with_spans(tokens, catalog, rng)[0]

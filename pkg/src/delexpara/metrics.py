"""Intrinsic and extrinsic paraphrase metrics.

Undefined values (empty denominators) are returned as ``None`` and written
as not-available in reports.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NA = None


def _unique(corpus: Iterable[Sequence[str]]) -> set[tuple[str, ...]]:
    return {tuple(u) for u in corpus}


@dataclass
class MetricsCorpus:
    train: set  # D
    generated: set  # G(D)

    def __init__(self, train: Iterable[Sequence[str]], generated: Iterable[Sequence[str]]):
        self.train = _unique(train)
        self.generated = _unique(generated)


def slot_copy_rate(pairs: Iterable[tuple[Iterable[str], Iterable[str]]]) -> float | None:
    """Share of pairs whose generated slot set equals the source slot set; slotless sources skipped."""
    hits = total = 0
    for src, gen in pairs:
        src = set(src)
        if not src:
            continue
        total += 1
        hits += src == set(gen)
    return hits / total if total else NA


def novelty(c: MetricsCorpus) -> float | None:
    if not c.generated:
        return NA
    return len(c.generated - c.train) / len(c.generated)


def diversity(c: MetricsCorpus) -> int:
    return len(c.generated)


def trigrams(utterances: Iterable[Sequence[str]]) -> set[tuple[str, str, str]]:
    out = set()
    for u in utterances:
        u = tuple(u)
        out.update(u[i:i + 3] for i in range(len(u) - 2))
    return out


def trigram_diversity(c: MetricsCorpus) -> int | None:
    tri = trigrams(c.generated)
    return len(tri) if tri else NA


def trigram_novelty(c: MetricsCorpus) -> float | None:
    tri = trigrams(c.generated)
    if not tri:
        return NA
    return len(tri - trigrams(c.train)) / len(tri)


# ---------------------------------------------------------------- slot / intent errors

@dataclass
class AlignmentCounts:
    S: int = 0
    I: int = 0
    Dd: int = 0
    IE: int = 0
    total_ref_slots: int = 0
    repaired: bool = False
    utterances: int = 0

    def __add__(self, other: "AlignmentCounts") -> "AlignmentCounts":
        return AlignmentCounts(self.S + other.S, self.I + other.I, self.Dd + other.Dd,
                               self.IE + other.IE, self.total_ref_slots + other.total_ref_slots,
                               self.repaired or other.repaired, self.utterances + other.utterances)


def repair_bio(tags: Sequence[str]) -> tuple[list[str], bool]:
    """Rewrite an I-s that does not continue an s entity as B-s."""
    out, changed = [], False
    prev = "O"
    for t in tags:
        if t.startswith("I-") and prev[2:] != t[2:]:
            t = "B-" + t[2:]
            changed = True
        out.append(t)
        prev = t
    return out, changed


def entities(tags: Sequence[str]) -> set[tuple[int, int, str]]:
    tags, _ = repair_bio(tags)
    spans = set()
    start = label = None
    for i, t in enumerate(list(tags) + ["O"]):
        if start is not None and not (t.startswith("I-") and t[2:] == label):
            spans.add((start, i, label))
            start = label = None
        if t.startswith("B-"):
            start, label = i, t[2:]
    return spans


def entity_alignment(ref_tags: Sequence[str], hyp_tags: Sequence[str],
                     ref_intent: str | None = None, hyp_intent: str | None = None) -> AlignmentCounts:
    if len(ref_tags) != len(hyp_tags):
        raise ValueError(f"tag sequences differ in length: {len(ref_tags)} vs {len(hyp_tags)}")
    _, r_fix = repair_bio(ref_tags)
    _, h_fix = repair_bio(hyp_tags)
    ref = entities(ref_tags)
    hyp = entities(hyp_tags)
    ref_spans = {(s, e): lab for s, e, lab in ref}
    hyp_spans = {(s, e): lab for s, e, lab in hyp}
    subs = sum(1 for span, lab in ref_spans.items() if span in hyp_spans and hyp_spans[span] != lab)
    dels = sum(1 for span in ref_spans if span not in hyp_spans)
    ins = sum(1 for span in hyp_spans if span not in ref_spans)
    ie = int(ref_intent is not None and ref_intent != hyp_intent)
    return AlignmentCounts(subs, ins, dels, ie, len(ref), r_fix or h_fix, 1)


def ser(counts: AlignmentCounts) -> float | None:
    if counts.total_ref_slots < 1:
        return NA
    return (counts.S + counts.I + counts.Dd) / counts.total_ref_slots


def semer(counts: AlignmentCounts) -> float:
    # the intent is one extra slot per utterance
    return (counts.S + counts.I + counts.Dd + counts.IE) / (counts.total_ref_slots + max(counts.utterances, 1))


def intent_error_rate(predictions: Sequence[str], golds: Sequence[str]) -> float | None:
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds differ in length")
    if not golds:
        return NA
    return sum(p != g for p, g in zip(predictions, golds)) / len(golds)


# ---------------------------------------------------------------- rank correlation

def fractional_ranks(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation of average ranks; None when either side is constant."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("spearman needs two equal-length sequences of length >= 2")
    rx, ry = fractional_ranks(x), fractional_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return NA
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


def spearman_permutation_pvalue(x, y, rounds: int = 2000, seed: int = 0) -> float | None:
    """Two-sided permutation p-value for the Spearman coefficient."""
    rho = spearman(x, y)
    if rho is None:
        return NA
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=np.float64)
    hits = 0
    for _ in range(rounds):
        r = spearman(x, rng.permutation(y))
        hits += r is not None and abs(r) >= abs(rho) - 1e-12
    return (hits + 1) / (rounds + 1)


# ---------------------------------------------------------------- reports

def slot_copy_by_count(pairs: Iterable[tuple[Iterable[str], Iterable[str]]]) -> dict[int, float | None]:
    """Slot copy rate grouped by the number of distinct source slots."""
    groups: dict[int, list] = {}
    for src, gen in pairs:
        src = set(src)
        if src:
            groups.setdefault(len(src), []).append((src, gen))
    return {k: slot_copy_rate(v) for k, v in sorted(groups.items())}


def intrinsic_report(train: Iterable[Sequence[str]], generated: Sequence[Sequence[str]],
                     copy_pairs: Sequence[tuple[Iterable[str], Iterable[str]]]) -> dict:
    c = MetricsCorpus(train, generated)
    return {
        "slot_copy_rate": slot_copy_rate(copy_pairs),
        "slot_copy_pairs": sum(1 for s, _ in copy_pairs if set(s)),
        "novelty": novelty(c),
        "diversity": diversity(c),
        "trigram_novelty": trigram_novelty(c),
        "trigram_diversity": trigram_diversity(c),
        "train_size": len(c.train),
        "generated_size": len(c.generated),
        "slot_copy_by_count": {str(k): v for k, v in slot_copy_by_count(copy_pairs).items()},
    }

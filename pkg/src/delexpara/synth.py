"""Synthetic skills built from shared carrier-phrase families.

Every skill draws a subset of each family's carrier phrases as its sample
utterances; the remaining carriers are held out and only used to build the
skill's test utterances. Because other skills sample the held-out carriers,
a paraphrase model trained on all skills can propose them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import (AnnotatedUtterance, SampleUtterance, SkillDefinition, SlotCatalog, is_slot_ref,
                     ref_name, tokenize)

# role placeholders {X}, {Y}, {Z} are mapped to skill slot names
FAMILIES: dict[str, list[str]] = {
    "Play": [
        "play {X}", "play {X} please", "can you play {X}", "i want to listen to {X}",
        "put on {X}", "start playing {X}", "let me hear {X}",
    ],
    "Search": [
        "search for {X}", "find {X}", "look up {X}", "tell me about {X}",
        "what do you know about {X}", "show me {X}", "give me info on {X}",
    ],
    "Stop": [
        "stop", "stop playing", "pause", "pause the music", "be quiet", "turn it off", "that is enough",
    ],
    "Add": [
        "add {X} to {Y}", "put {X} on {Y}", "add {X} to my {Y} list", "save {X} in {Y}",
        "include {X} in {Y}", "i want {X} in {Y}", "please add {X} into {Y}",
    ],
    "Book": [
        "book {X} in {Y} on {Z}", "reserve {X} at {Y} for {Z}", "i need {X} in {Y} on {Z}",
        "get me {X} at {Y} on {Z}", "book {X} for {Z} in {Y}", "find me {X} near {Y} for {Z}",
        "on {Z} book {X} in {Y}",
    ],
}

DOMAINS = ["music", "radio", "podcast", "cinema", "books", "recipes", "travel", "games", "news", "sports"]
_SYLLABLES = ["ka", "lo", "mi", "ru", "ta", "ne", "zo", "vi", "pa", "se", "do", "gu", "fi", "ha", "jo", "be"]


@dataclass
class SynthConfig:
    n_skills: int = 5
    families: tuple[str, ...] = ("Play", "Search", "Stop", "Add", "Book")
    samples_per_intent: tuple[int, ...] = (3, 4, 5)
    values_per_slot: int = 6
    test_per_carrier: int = 3
    seed: int = 0


def _pseudo_word(rng: np.random.Generator) -> str:
    return "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=int(rng.integers(2, 4))))


def _values(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        words = [_pseudo_word(rng) for _ in range(int(rng.integers(1, 3)))]
        v = " ".join(words)
        if v not in taken:
            taken.add(v)
            out.append(v)
    return out


def _fill(carrier: str, roles: dict[str, str]) -> tuple[str, ...]:
    toks = []
    for t in tokenize(carrier):
        toks.append("{" + roles[ref_name(t)] + "}" if is_slot_ref(t) else t)
    return tuple(toks)


def make_corpus(config: SynthConfig = SynthConfig()):
    """Return (skills, test utterances, held-out carriers per (skill, intent))."""
    rng = np.random.default_rng([config.seed, 101])
    skills: list[SkillDefinition] = []
    tests: list[AnnotatedUtterance] = []
    held_out: dict[tuple[str, str], list[tuple[str, ...]]] = {}
    taken: set[str] = set()
    for s in range(config.n_skills):
        domain = DOMAINS[s % len(DOMAINS)]
        name = f"{domain}_{s}"
        roles = {"X": f"{domain}_item", "Y": f"{domain}_place", "Z": f"{domain}_time"}
        catalog = SlotCatalog({roles[r]: _values(rng, config.values_per_slot, taken) for r in ("X", "Y", "Z")})
        # skills differ in how many carriers they see, so per-skill features vary
        k = config.samples_per_intent[s % len(config.samples_per_intent)]
        samples = []
        for fam in config.families:
            carriers = FAMILIES[fam]
            chosen = sorted(rng.choice(len(carriers), size=k, replace=False))
            intent = f"{fam}Intent"
            for i, c in enumerate(carriers):
                delex = _fill(c, roles)
                if i in chosen:
                    samples.append(SampleUtterance(len(samples), intent, delex))
                else:
                    held_out.setdefault((name, intent), []).append(delex)
                for _ in range(config.test_per_carrier):
                    tests.append(_lexicalize_annotated(delex, name, intent, catalog, rng))
        skills.append(SkillDefinition(name, samples, catalog))
    return skills, tests, held_out


def _lexicalize_annotated(delex, skill: str, intent: str, catalog: SlotCatalog,
                          rng: np.random.Generator) -> AnnotatedUtterance:
    words: list[str] = []
    spans = []
    for t in delex:
        if is_slot_ref(t):
            values = catalog[ref_name(t)]
            v = values[int(rng.integers(len(values)))]
            spans.append((len(words), len(words) + len(v), ref_name(t)))
            words.extend(v)
        else:
            words.append(t)
    return AnnotatedUtterance(tuple(words), skill, intent, tuple(spans))


def overfit_pairs(n: int = 50, seed: int = 0, vocab_size: int = 40):
    """``n`` delexicalised (source, target) pairs with distinct sources.

    Sources and targets are random word strings with one to three slots;
    the target holds the same slots in a shuffled order.
    """
    rng = np.random.default_rng([seed, 202])
    words = [f"w{i}" for i in range(vocab_size)]
    seen = set()
    pairs = []
    while len(pairs) < n:
        k = int(rng.integers(1, 4))
        slots = [f"{{S{j}}}" for j in range(k)]
        src = [words[int(i)] for i in rng.integers(0, vocab_size, size=int(rng.integers(2, 6)))]
        for sl in slots:
            src.insert(int(rng.integers(0, len(src) + 1)), sl)
        tgt = [words[int(i)] for i in rng.integers(0, vocab_size, size=int(rng.integers(2, 6)))]
        for sl in rng.permutation(slots):
            tgt.insert(int(rng.integers(0, len(tgt) + 1)), str(sl))
        key = tuple("SLOT" if t.startswith("{") else t for t in src)
        if key in seen:
            continue
        seen.add(key)
        pairs.append((tuple(src), tuple(tgt)))
    return pairs

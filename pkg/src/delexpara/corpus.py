"""Skill ingestion, signature-keyed paraphrase sets and training-data formats.

Token conventions used throughout the package:

* words are lowercase strings,
* a slot reference is ``{SlotName}``,
* an anonymised slot is ``SLOT1``, ``SLOT2``, ... numbered by source occurrence,
* a pointer is ``@ptr<i>`` with ``i`` a 0-based source position,
* in S2P/S3P sources a slot position holds a :class:`SlotValueBundle`.
"""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

FORMATS = ("O", "AS", "ASP", "S2P", "S3P")
POINTER_FORMATS = ("ASP", "S2P", "S3P")

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)

_SLOT_REF = re.compile(r"^\{([^{}\s]+)\}$")
_MARKER = re.compile(r"^SLOT(\d+)$")
_POINTER = re.compile(r"^@ptr(\d+)$")

DelexUtterance = tuple  # tuple[str, ...]


class MalformedAnnotation(ValueError):
    pass


class PairRejected(ValueError):
    """A training pair that fails the noisy-data cleanup rules."""


class CorpusError(ValueError):
    pass


def is_slot_ref(tok) -> bool:
    return isinstance(tok, str) and _SLOT_REF.match(tok) is not None


def slot_ref(name: str) -> str:
    return "{" + name + "}"


def ref_name(tok: str) -> str:
    m = _SLOT_REF.match(tok)
    if m is None:
        raise ValueError(f"not a slot reference: {tok!r}")
    return m.group(1)


def is_marker(tok) -> bool:
    return isinstance(tok, str) and _MARKER.match(tok) is not None


def pointer_token(i: int) -> str:
    return f"@ptr{i}"


def pointer_index(tok) -> int | None:
    if not isinstance(tok, str):
        return None
    m = _POINTER.match(tok)
    return int(m.group(1)) if m else None


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace tokenisation; words are lowercased, slot references kept verbatim."""
    text = re.sub(r"(\{[^{}\s]+\})", r" \1 ", text)
    return tuple(t if is_slot_ref(t) else t.lower() for t in text.split())


def split_value(value) -> tuple[str, ...]:
    """A catalog value may be a word list, a spaced phrase or an underscored phrase."""
    if isinstance(value, (list, tuple)):
        words = tuple(str(w).lower() for w in value)
    else:
        words = tuple(w.lower() for w in re.split(r"[\s_]+", str(value).strip()) if w)
    if not words:
        raise CorpusError(f"empty slot value {value!r}")
    return words


def slots_in(tokens: Iterable) -> list[str]:
    return [ref_name(t) for t in tokens if is_slot_ref(t)]


# ---------------------------------------------------------------- domain types

@dataclass(frozen=True)
class SlotValueBundle:
    slot_name: str
    values: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.values or any(len(v) == 0 for v in self.values):
            raise CorpusError(f"bundle for {self.slot_name!r} has an empty value list or value")

    def text(self) -> str:
        return ",".join("_".join(v) for v in self.values)

    def to_json(self) -> dict:
        return {"slot": self.slot_name, "values": [list(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict) -> "SlotValueBundle":
        return cls(obj["slot"], tuple(tuple(v) for v in obj["values"]))


class SlotCatalog:
    """Slot name -> ordered list of values (each a word tuple)."""

    def __init__(self, entries: dict[str, Sequence] | None = None):
        self.entries: dict[str, list[tuple[str, ...]]] = {}
        for name, values in (entries or {}).items():
            vals = [split_value(v) for v in values]
            if not vals:
                raise CorpusError(f"slot {name!r} has no values")
            if len(set(vals)) != len(vals):
                raise CorpusError(f"slot {name!r} has duplicate values")
            self.entries[name] = vals

    def __contains__(self, name) -> bool:
        return name in self.entries

    def __getitem__(self, name) -> list[tuple[str, ...]]:
        return self.entries[name]

    def names(self) -> list[str]:
        return list(self.entries)

    def merged(self, other: "SlotCatalog") -> "SlotCatalog":
        cat = SlotCatalog()
        cat.entries = {**self.entries, **other.entries}
        return cat

    @classmethod
    def from_json(cls, slots) -> "SlotCatalog":
        # accepts the skill-JSON list form or a plain mapping
        if isinstance(slots, dict):
            return cls(slots)
        return cls({s["name"]: s["values"] for s in slots})

    def to_json(self) -> list[dict]:
        return [{"name": n, "values": [" ".join(v) for v in vals]} for n, vals in self.entries.items()]


@dataclass(frozen=True)
class SampleUtterance:
    id: int
    intent: str
    tokens: tuple[str, ...]


@dataclass
class SkillDefinition:
    skill_name: str
    sample_utterances: list[SampleUtterance]
    slots: SlotCatalog

    def __post_init__(self):
        ids = [u.id for u in self.sample_utterances]
        if len(set(ids)) != len(ids):
            raise CorpusError(f"skill {self.skill_name!r}: duplicate utterance ids")
        for u in self.sample_utterances:
            for name in slots_in(u.tokens):
                if name not in self.slots:
                    raise CorpusError(
                        f"skill {self.skill_name!r}: utterance {u.id} uses unknown slot {name!r}")

    def intents(self) -> list[str]:
        return sorted({u.intent for u in self.sample_utterances})

    @classmethod
    def from_json(cls, obj: dict) -> "SkillDefinition":
        samples = [SampleUtterance(int(s["id"]), s["intent"], tokenize(s["text"]))
                   for s in obj["sample_utterances"]]
        return cls(obj["skill_name"], samples, SlotCatalog.from_json(obj.get("slots", [])))

    def to_json(self) -> dict:
        return {
            "skill_name": self.skill_name,
            "sample_utterances": [
                {"id": u.id, "intent": u.intent, "text": " ".join(u.tokens)}
                for u in self.sample_utterances
            ],
            "slots": self.slots.to_json(),
        }


def load_skills(path) -> list[SkillDefinition]:
    """Read one skill object, a JSON list of skills, or JSONL (one skill per line)."""
    text = Path(path).read_text()
    if not text.strip():
        return []
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        skills = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                skills.append(SkillDefinition.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
        return skills
    objs = obj if isinstance(obj, list) else [obj]
    try:
        return [SkillDefinition.from_json(o) for o in objs]
    except KeyError as exc:
        raise CorpusError(f"{path}: missing field {exc}") from None


def save_skills(path, skills: Sequence[SkillDefinition]) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_json() for s in skills], fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True)
class AnnotatedUtterance:
    tokens: tuple[str, ...]
    domain_or_skill: str
    intent: str
    slot_spans: tuple[tuple[int, int, str], ...] = ()

    def __post_init__(self):
        prev_end = 0
        for start, end, name in sorted(self.slot_spans):
            if not (0 <= start < end <= len(self.tokens)):
                raise MalformedAnnotation(f"span ({start},{end},{name}) outside {len(self.tokens)} tokens")
            if start < prev_end:
                raise MalformedAnnotation(f"overlapping span ({start},{end},{name})")
            prev_end = end

    def to_json(self) -> dict:
        return {"skill": self.domain_or_skill, "intent": self.intent,
                "tokens": list(self.tokens), "spans": [list(s) for s in self.slot_spans]}

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotatedUtterance":
        tokens = obj["tokens"] if "tokens" in obj else obj["text"].split()
        return cls(tuple(tokens), obj.get("skill", obj.get("domain", "")), obj["intent"],
                   tuple((int(s), int(e), str(n)) for s, e, n in obj.get("spans", [])))


def load_annotated(path) -> list[AnnotatedUtterance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(AnnotatedUtterance.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class Signature:
    domain_or_skill: str
    intent: str
    slot_names: frozenset

    def key(self) -> tuple:
        return (self.domain_or_skill, self.intent, tuple(sorted(self.slot_names)))


@dataclass(frozen=True)
class SlotOccurrence:
    position: int
    slot_name: str
    marker: str

    def to_json(self) -> dict:
        return {"position": self.position, "slot": self.slot_name, "marker": self.marker}


@dataclass
class FormattedPair:
    format: str
    source: list
    target: list[str]
    slot_map: tuple[SlotOccurrence, ...] = ()
    pair_id: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.pair_id,
            "format": self.format,
            "source": [t.to_json() if isinstance(t, SlotValueBundle) else t for t in self.source],
            "target": list(self.target),
            "slot_map": [s.to_json() for s in self.slot_map],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FormattedPair":
        source = [SlotValueBundle.from_json(t) if isinstance(t, dict) else t for t in obj["source"]]
        slot_map = tuple(SlotOccurrence(s["position"], s["slot"], s["marker"]) for s in obj["slot_map"])
        pair = cls(obj["format"], source, list(obj["target"]), slot_map, obj.get("id"))
        validate_pair(pair)
        return pair

    def to_text(self) -> tuple[str, str]:
        """Render source and target the way Table-style listings show them."""
        src = " ".join(t.text() if isinstance(t, SlotValueBundle) else t for t in self.source)
        return src, " ".join(self.target)


def validate_pair(pair: FormattedPair) -> None:
    if pair.format not in FORMATS:
        raise CorpusError(f"unknown format {pair.format!r}")
    n = len(pair.source)
    for tok in pair.target:
        i = pointer_index(tok)
        if i is not None and (pair.format not in POINTER_FORMATS or i >= n):
            raise CorpusError(f"pair {pair.pair_id}: invalid pointer {tok} for source length {n}")


# ---------------------------------------------------------------- operations

def delexicalize(u: AnnotatedUtterance) -> DelexUtterance:
    out: list[str] = []
    pos = 0
    for start, end, name in sorted(u.slot_spans):
        if start < pos:
            raise MalformedAnnotation(f"overlapping span ({start},{end},{name})")
        out.extend(u.tokens[pos:start])
        out.append(slot_ref(name))
        pos = end
    out.extend(u.tokens[pos:])
    return tuple(out)


def signature_of(u: AnnotatedUtterance) -> Signature:
    return Signature(u.domain_or_skill, u.intent, frozenset(name for _, _, name in u.slot_spans))


def signature_of_sample(skill_name: str, sample: SampleUtterance) -> Signature:
    return Signature(skill_name, sample.intent, frozenset(slots_in(sample.tokens)))


def acceptable_length(tokens: Sequence, min_len: int = 1, max_len: int = 32) -> bool:
    return min_len <= len(tokens) <= max_len


def build_paraphrase_sets(corpus: Iterable[AnnotatedUtterance],
                          min_len: int = 1, max_len: int = 32) -> dict[Signature, frozenset]:
    sets: dict[Signature, set] = {}
    for u in corpus:
        d = delexicalize(u)
        if acceptable_length(d, min_len, max_len):
            sets.setdefault(signature_of(u), set()).add(d)
    return {k: frozenset(v) for k, v in sets.items()}


def paraphrase_sets_from_skills(skills: Iterable[SkillDefinition],
                                min_len: int = 1, max_len: int = 32) -> dict[Signature, frozenset]:
    sets: dict[Signature, set] = {}
    for skill in skills:
        for s in skill.sample_utterances:
            if acceptable_length(s.tokens, min_len, max_len):
                sets.setdefault(signature_of_sample(skill.skill_name, s), set()).add(s.tokens)
    return {k: frozenset(v) for k, v in sets.items()}


def stable_seed(*parts) -> int:
    h = hashlib.sha256(repr(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def sample_training_pairs(sets: dict[Signature, frozenset], seed: int,
                          pairs_per_utterance: int = 2) -> list[tuple[DelexUtterance, DelexUtterance]]:
    """Two (source, target) pairs per utterance, targets drawn from its own set.

    Each draw is seeded by (seed, signature, utterance) so results do not
    depend on dictionary order. Targets may repeat across the two pairs.
    """
    pairs = []
    for sig in sorted(sets, key=Signature.key):
        members = sorted(sets[sig])
        if len(members) < 2:
            continue
        for u in members:
            others = [m for m in members if m != u]
            rng = np.random.default_rng(stable_seed(seed, sig.key(), u))
            for j in rng.integers(0, len(others), size=pairs_per_utterance):
                pairs.append((u, others[int(j)]))
    return pairs


def _bundle_for(name: str, catalog: SlotCatalog, seed: int, max_values: int) -> SlotValueBundle:
    if name not in catalog:
        raise PairRejected(f"slot {name!r} missing from catalog")
    values = catalog[name]
    if len(values) > max_values:
        rng = np.random.default_rng(stable_seed(seed, name))
        keep = sorted(rng.choice(len(values), size=max_values, replace=False))
        values = [values[i] for i in keep]
    return SlotValueBundle(name, tuple(values))


def reformat_source(source: Sequence[str], fmt: str, catalog: SlotCatalog | None = None,
                    seed: int = 0, max_values: int = 8) -> tuple[list, tuple[SlotOccurrence, ...]]:
    """Encode a delexicalised source in ``fmt``; returns tokens and the slot map."""
    if fmt not in FORMATS:
        raise CorpusError(f"unknown format {fmt!r}")
    tokens: list = []
    slot_map = []
    k = 0
    for pos, tok in enumerate(source):
        if not is_slot_ref(tok):
            tokens.append(tok)
            continue
        k += 1
        name = ref_name(tok)
        marker = f"SLOT{k}"
        slot_map.append(SlotOccurrence(pos, name, marker))
        if fmt == "O":
            tokens.append(tok)
        elif fmt in ("AS", "ASP"):
            tokens.append(marker)
        else:
            if catalog is None:
                raise CorpusError(f"format {fmt} needs a slot catalog")
            tokens.append(_bundle_for(name, catalog, seed, max_values))
    return tokens, tuple(slot_map)


def reformat(pair: tuple[Sequence[str], Sequence[str]], fmt: str, catalog: SlotCatalog | None = None,
             seed: int = 0, max_values: int = 8, pair_id: str | None = None) -> FormattedPair:
    source, target = pair
    src_tokens, slot_map = reformat_source(source, fmt, catalog, seed, max_values)
    by_name: dict[str, list[SlotOccurrence]] = {}
    for occ in slot_map:
        by_name.setdefault(occ.slot_name, []).append(occ)
    used: Counter = Counter()
    tgt: list[str] = []
    for tok in target:
        if not is_slot_ref(tok):
            tgt.append(tok)
            continue
        name = ref_name(tok)
        occs = by_name.get(name, [])
        if used[name] >= len(occs):
            raise PairRejected(f"target slot {name!r} has no matching source slot")
        occ = occs[used[name]]
        used[name] += 1
        if fmt == "O":
            tgt.append(tok)
        elif fmt == "AS":
            tgt.append(occ.marker)
        else:
            tgt.append(pointer_token(occ.position))
    return FormattedPair(fmt, src_tokens, tgt, slot_map, pair_id)


def deanonymize(tokens: Sequence[str], slot_map: Sequence[SlotOccurrence]) -> tuple[str, ...]:
    """Map SLOTk markers back to slot references using the pair's slot map."""
    names = {occ.marker: occ.slot_name for occ in slot_map}
    return tuple(slot_ref(names[t]) if t in names else t for t in tokens)


def resolve_gold_target(pair: FormattedPair) -> tuple[str, ...]:
    """Undo reformatting on a target: pointers and markers become slot references."""
    by_pos = {occ.position: occ for occ in pair.slot_map}
    out = []
    for tok in pair.target:
        i = pointer_index(tok)
        if i is not None:
            out.append(slot_ref(by_pos[i].slot_name))
        else:
            out.append(tok)
    return deanonymize(out, pair.slot_map)


def original_source(pair: FormattedPair) -> tuple[str, ...]:
    by_pos = {occ.position: occ for occ in pair.slot_map}
    return tuple(slot_ref(by_pos[i].slot_name) if i in by_pos else t for i, t in enumerate(pair.source))


def parse_text_pair(source_text: str, target_text: str, fmt: str,
                    slot_map: Sequence[SlotOccurrence]) -> FormattedPair:
    """Read the comma/underscore text form back into a pair.

    Bundle positions are taken from ``slot_map``; there a token is split on
    commas into values and on underscores into words.
    """
    src: list = source_text.split()
    if fmt in ("S2P", "S3P"):
        for occ in slot_map:
            values = tuple(tuple(v.split("_")) for v in src[occ.position].split(","))
            src[occ.position] = SlotValueBundle(occ.slot_name, values)
    pair = FormattedPair(fmt, src, target_text.split(), tuple(slot_map))
    validate_pair(pair)
    return pair


def write_pairs(path, pairs: Iterable[FormattedPair]) -> int:
    n = 0
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_pairs(path) -> list[FormattedPair]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(FormattedPair.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


# ---------------------------------------------------------------- vocabulary

@dataclass
class Vocab:
    tokens: list[str]
    counts: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok) -> bool:
        return tok in self.index

    def id(self, tok: str) -> int:
        return self.index.get(tok, self.index[UNK])

    @property
    def pad(self) -> int:
        return self.index[PAD]

    @property
    def bos(self) -> int:
        return self.index[BOS]

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def unk(self) -> int:
        return self.index[UNK]

    def dumps(self) -> str:
        return "".join(f"{t}\t{c}\n" for t, c in zip(self.tokens, self.counts))

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens, counts = [], []
        for line in Path(path).read_text().splitlines():
            tok, _, cnt = line.partition("\t")
            tokens.append(tok)
            counts.append(int(cnt or 0))
        return cls(tokens, counts)


def pair_words(pair: FormattedPair) -> list[str]:
    words = []
    for t in pair.source:
        if isinstance(t, SlotValueBundle):
            words.extend(w for v in t.values for w in v)
        else:
            words.append(t)
    words.extend(t for t in pair.target if pointer_index(t) is None)
    return words


def build_vocab(pairs: Iterable[FormattedPair], min_count: int = 1,
                extra_words: Iterable[str] = ()) -> Vocab:
    counts: Counter = Counter()
    for p in pairs:
        counts.update(pair_words(p))
    counts.update(extra_words)
    kept = sorted((w for w, c in counts.items() if c >= min_count and w not in SPECIALS),
                  key=lambda w: (-counts[w], w))
    return Vocab(list(SPECIALS) + kept, [0] * len(SPECIALS) + [counts[w] for w in kept])


Token = Union[str, SlotValueBundle]

"""Exact-match acceptor over delexicalised rules with slot arcs expanded to catalog values.

Rules share prefixes in a token trie; a slot arc enters that slot's value
trie and returns to the rule trie after any complete value. Acceptance runs
a subset simulation, i.e. the deterministic automaton built on the fly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import SlotCatalog, is_slot_ref, ref_name, tokenize


class BuildError(KeyError):
    pass


@dataclass
class RuleSet:
    rules: frozenset
    catalog: SlotCatalog

    def __init__(self, rules: Iterable[Sequence[str]], catalog: SlotCatalog):
        self.rules = frozenset(tuple(r) for r in rules)
        self.catalog = catalog

    def union(self, extra: Iterable[Sequence[str]]) -> "RuleSet":
        return RuleSet(set(self.rules) | {tuple(r) for r in extra}, self.catalog)


@dataclass
class _Node:
    words: dict = field(default_factory=dict)
    slots: dict = field(default_factory=dict)
    rule: tuple | None = None


@dataclass
class _ValueNode:
    words: dict = field(default_factory=dict)
    final: bool = False


@dataclass
class Match:
    rule: tuple[str, ...]
    spans: list[tuple[int, int, str]]


class MatcherAutomaton:
    def __init__(self, ruleset: RuleSet):
        self.nodes: list[_Node] = [_Node()]
        self.value_tries: dict[str, list[_ValueNode]] = {}
        for rule in sorted(ruleset.rules):
            self._add(rule, ruleset.catalog)

    def _value_trie(self, name: str, catalog: SlotCatalog) -> list[_ValueNode]:
        if name not in self.value_tries:
            if name not in catalog:
                raise BuildError(f"rule uses slot {name!r} missing from the catalog")
            trie = [_ValueNode()]
            for value in catalog[name]:
                cur = 0
                for w in value:
                    nxt = trie[cur].words.get(w)
                    if nxt is None:
                        trie.append(_ValueNode())
                        nxt = trie[cur].words[w] = len(trie) - 1
                    cur = nxt
                trie[cur].final = True
            self.value_tries[name] = trie
        return self.value_tries[name]

    def _add(self, rule: tuple[str, ...], catalog: SlotCatalog) -> None:
        cur = 0
        for tok in rule:
            if is_slot_ref(tok):
                self._value_trie(ref_name(tok), catalog)
                arcs = self.nodes[cur].slots
                key = ref_name(tok)
            else:
                arcs = self.nodes[cur].words
                key = tok
            nxt = arcs.get(key)
            if nxt is None:
                self.nodes.append(_Node())
                nxt = arcs[key] = len(self.nodes) - 1
            cur = nxt
        self.nodes[cur].rule = rule

    # ------------------------------------------------------------ acceptance

    def _close(self, states: set) -> set:
        """Add rule-trie states reachable by finishing a slot value."""
        out = set(states)
        for st in states:
            if st[0] == "v":
                _, name, vnode, after = st
                if self.value_tries[name][vnode].final:
                    out.add(("r", after))
        return out

    def accepts(self, words: Sequence[str]) -> bool:
        states = {("r", 0)}
        for w in words:
            nxt = set()
            for st in states:
                if st[0] == "r":
                    node = self.nodes[st[1]]
                    if w in node.words:
                        nxt.add(("r", node.words[w]))
                    for name, after in node.slots.items():
                        child = self.value_tries[name][0].words.get(w)
                        if child is not None:
                            nxt.add(("v", name, child, after))
                else:
                    _, name, vnode, after = st
                    child = self.value_tries[name][vnode].words.get(w)
                    if child is not None:
                        nxt.add(("v", name, child, after))
            states = self._close(nxt)
            if not states:
                return False
        return any(st[0] == "r" and self.nodes[st[1]].rule is not None for st in states)

    # ------------------------------------------------------------ parses

    def _parses(self, words, pos, node_id, spans):
        node = self.nodes[node_id]
        if pos == len(words) and node.rule is not None:
            yield Match(node.rule, list(spans))
        if pos < len(words) and words[pos] in node.words:
            yield from self._parses(words, pos + 1, node.words[words[pos]], spans)
        for name, after in node.slots.items():
            trie = self.value_tries[name]
            ends = []
            cur, j = 0, pos
            while j < len(words) and words[j] in trie[cur].words:
                cur = trie[cur].words[words[j]]
                j += 1
                if trie[cur].final:
                    ends.append(j)
            for end in reversed(ends):  # longest value first
                spans.append((pos, end, name))
                yield from self._parses(words, end, after, spans)
                spans.pop()

    def match(self, words: Sequence[str]) -> Match | None:
        """Best parse of an accepted utterance, or None.

        Preference: fewer slot tokens in the rule, then the rule's token
        sequence, then longer expansions for earlier slots.
        """
        words = [w.lower() for w in words]
        if not self.accepts(words):
            return None
        parses = list(self._parses(words, 0, 0, []))
        return min(parses, key=lambda m: (sum(map(is_slot_ref, m.rule)), m.rule,
                                          tuple(s - e for s, e, _ in m.spans)))


def build(ruleset: RuleSet) -> MatcherAutomaton:
    return MatcherAutomaton(ruleset)


def match(automaton: MatcherAutomaton, utterance: Sequence[str]) -> Match | None:
    return automaton.match(utterance)


@dataclass
class MatchReport:
    new_matches: int
    new_rules: int
    test_size: int
    baseline_matches: int
    augmented_matches: int

    @property
    def unmatched_pool(self) -> int:
        return self.test_size - self.baseline_matches

    @property
    def new_match_percentage(self) -> float | None:
        """New matches as a share of the utterances the baseline missed."""
        if self.unmatched_pool == 0:
            return None
        return self.new_matches / self.unmatched_pool

    def to_json(self) -> dict:
        return {"new_matches": self.new_matches, "new_rules": self.new_rules,
                "test_size": self.test_size, "baseline_matches": self.baseline_matches,
                "augmented_matches": self.augmented_matches, "unmatched_pool": self.unmatched_pool,
                "new_match_percentage": self.new_match_percentage}


def new_match_count(baseline: RuleSet, augmented: RuleSet, test: Sequence[Sequence[str]]) -> MatchReport:
    base = build(baseline)
    aug = build(augmented)
    new = base_hits = aug_hits = 0
    for utt in test:
        words = [w.lower() for w in utt]
        b = base.accepts(words)
        a = aug.accepts(words)
        base_hits += b
        aug_hits += a
        new += a and not b
    return MatchReport(new, len(augmented.rules - baseline.rules), len(test), base_hits, aug_hits)


def read_rules(path) -> list[tuple[str, ...]]:
    return [tokenize(line) for line in Path(path).read_text().splitlines() if line.strip()]

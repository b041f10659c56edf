import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delexpara.corpus import (AnnotatedUtterance, CorpusError, FormattedPair, MalformedAnnotation, PairRejected,
                              SampleUtterance, SkillDefinition, SlotCatalog, SlotValueBundle, build_paraphrase_sets,
                              build_vocab, delexicalize, deanonymize, load_annotated, load_skills, original_source,
                              paraphrase_sets_from_skills, parse_text_pair, pointer_index, read_pairs, reformat,
                              resolve_gold_target, sample_training_pairs, signature_of, slots_in, tokenize,
                              write_pairs, Vocab)
from delexpara.pipeline import prepare_pairs
from delexpara.synth import SynthConfig, make_corpus

SRC = tokenize("play {MusicName} by {ArtistName} please")
TGT = tokenize("i want to listen to {ArtistName} 's {MusicName}")
CATALOG = SlotCatalog({"MusicName": ["frozen", "shape of you"], "ArtistName": ["taylor swift", "disney"]})

# hand-written expected rows
GOLDEN = {
    "O": ("play {MusicName} by {ArtistName} please", "i want to listen to {ArtistName} 's {MusicName}"),
    "AS": ("play SLOT1 by SLOT2 please", "i want to listen to SLOT2 's SLOT1"),
    "ASP": ("play SLOT1 by SLOT2 please", "i want to listen to @ptr3 's @ptr1"),
    "S2P": ("play frozen,shape_of_you by taylor_swift,disney please", "i want to listen to @ptr3 's @ptr1"),
    "S3P": ("play frozen,shape_of_you by taylor_swift,disney please", "i want to listen to @ptr3 's @ptr1"),
}


@pytest.mark.parametrize("fmt", list(GOLDEN))
def test_reformat_table_rows(fmt):
    pair = reformat((SRC, TGT), fmt, CATALOG)
    assert pair.to_text() == GOLDEN[fmt]


def test_text_form_parses_back():
    pair = reformat((SRC, TGT), "S2P", CATALOG)
    again = parse_text_pair(*GOLDEN["S2P"], "S2P", pair.slot_map)
    assert again.source == pair.source and again.target == pair.target


def test_tokenize_and_slot_refs():
    assert tokenize("Play {MusicName}  NOW") == ("play", "{MusicName}", "now")
    assert slots_in(SRC) == ["MusicName", "ArtistName"]
    assert pointer_index("@ptr12") == 12 and pointer_index("ptr") is None


def test_repeated_slot_names_match_by_occurrence():
    src = tokenize("from {City} to {City}")
    tgt = tokenize("{City} then {City} please")
    assert reformat((src, tgt), "ASP").target == ["@ptr1", "then", "@ptr3", "please"]
    assert reformat((src, tgt), "AS").target == ["SLOT1", "then", "SLOT2", "please"]


def test_target_slot_missing_from_source_is_rejected():
    with pytest.raises(PairRejected):
        reformat((tokenize("play {A}"), tokenize("play {B}")), "ASP")


def test_bundles_are_capped_and_seeded():
    cat = SlotCatalog({"X": [f"v{i}" for i in range(20)]})
    a = reformat((("x", "{X}"), ("{X}",)), "S2P", cat, seed=3, max_values=8)
    b = reformat((("x", "{X}"), ("{X}",)), "S2P", cat, seed=3, max_values=8)
    assert len(a.source[1].values) == 8
    assert a.source[1] == b.source[1]


def test_catalog_rejects_duplicates_and_empty():
    with pytest.raises(CorpusError):
        SlotCatalog({"X": ["a", "a"]})
    with pytest.raises(CorpusError):
        SlotCatalog({"X": []})


def test_annotation_validation():
    with pytest.raises(MalformedAnnotation):
        AnnotatedUtterance(("a", "b"), "s", "I", ((1, 3, "X"),))
    with pytest.raises(MalformedAnnotation):
        AnnotatedUtterance(("a", "b", "c"), "s", "I", ((0, 2, "X"), (1, 3, "Y")))


def test_delexicalize_and_signature():
    u = AnnotatedUtterance(tokenize("play shape of you by disney"), "music", "PlayIntent",
                           ((1, 4, "MusicName"), (5, 6, "ArtistName")))
    assert delexicalize(u) == SRC[:-1]
    sig = signature_of(u)
    assert sig.slot_names == frozenset({"MusicName", "ArtistName"})


def _skill():
    samples = [SampleUtterance(i, "PlayIntent", tokenize(t)) for i, t in enumerate([
        "play {MusicName} by {ArtistName} please",
        "i want to listen to {ArtistName} 's {MusicName}",
        "put on {MusicName} from {ArtistName}",
        "play {MusicName}",
        "start {MusicName}",
        "stop",
    ])]
    return SkillDefinition("music", samples, CATALOG)


def test_two_pairs_per_utterance_within_signature():
    sets = paraphrase_sets_from_skills([_skill()])
    pairs = sample_training_pairs(sets, seed=0)
    # the singleton signature {} contributes no pairs
    assert len(pairs) == 2 * 5
    sig_of = {u: s for s, members in sets.items() for u in members}
    for src, tgt in pairs:
        assert src != tgt
        assert sig_of[src] == sig_of[tgt]


def test_round_trip_and_pointer_validity_on_synthetic_corpus():
    skills, _, _ = make_corpus(SynthConfig(seed=4))
    for fmt in ("AS", "ASP", "S2P", "S3P"):
        pairs, _ = prepare_pairs(skills, fmt, seed=4)
        o_pairs, _ = prepare_pairs(skills, "O", seed=4)
        assert len(pairs) == len(o_pairs)
        for p, o in zip(pairs, o_pairs):
            assert original_source(p) == tuple(o.source)
            assert resolve_gold_target(p) == tuple(o.target)
            for pos, tok in enumerate(p.target):
                i = pointer_index(tok)
                if i is not None:
                    assert i < len(p.source)
                    assert o.target[pos] == "{" + next(x.slot_name for x in p.slot_map if x.position == i) + "}"


def test_as_renaming_is_invertible():
    pair = reformat((SRC, TGT), "AS")
    assert deanonymize(pair.source, pair.slot_map) == SRC
    assert deanonymize(pair.target, pair.slot_map) == TGT


def test_serialization_is_deterministic(tmp_path):
    skills, _, _ = make_corpus(SynthConfig(seed=1))
    for run in ("a", "b"):
        pairs, _ = prepare_pairs(skills, "S3P", seed=9)
        write_pairs(tmp_path / f"{run}.jsonl", pairs)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    back = read_pairs(tmp_path / "a.jsonl")
    assert [p.to_json() for p in back] == [p.to_json() for p in pairs]


def test_annotated_corpus_contributes_to_sets(tmp_path):
    rows = [
        {"skill": "music", "intent": "PlayIntent", "tokens": ["play", "frozen", "now"], "spans": [[1, 2, "MusicName"]]},
        {"skill": "music", "intent": "PlayIntent", "tokens": ["put", "on", "frozen"], "spans": [[2, 3, "MusicName"]]},
    ]
    path = tmp_path / "ann.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    ann = load_annotated(path)
    sets = build_paraphrase_sets(ann)
    assert len(sets) == 1 and len(next(iter(sets.values()))) == 2
    path.write_text('{"skill": "m", "intent": "I"}\nnot json\n')
    with pytest.raises(CorpusError, match=":1:"):
        load_annotated(path)


def test_load_skills_accepts_object_list_and_jsonl(tmp_path):
    obj = _skill().to_json()
    for text in (json.dumps(obj), json.dumps([obj, obj]), json.dumps(obj) + "\n" + json.dumps(obj) + "\n"):
        (tmp_path / "s.json").write_text(text)
        skills = load_skills(tmp_path / "s.json")
        assert skills[0].sample_utterances == _skill().sample_utterances
    (tmp_path / "s.json").write_text("")
    assert load_skills(tmp_path / "s.json") == []


def test_skill_with_unknown_slot_is_rejected():
    with pytest.raises(CorpusError):
        SkillDefinition("s", [SampleUtterance(0, "I", ("play", "{Nope}"))], CATALOG)


def test_vocab_order_hash_and_file(tmp_path):
    pairs = [reformat((SRC, TGT), "S2P", CATALOG)]
    v = build_vocab(pairs)
    assert v.tokens[:4] == ["<pad>", "<bos>", "<eos>", "<unk>"]
    assert "frozen" in v and "shape" in v
    v.save(tmp_path / "v.txt")
    assert Vocab.load(tmp_path / "v.txt").hash() == v.hash()
    assert v.id("never-seen") == v.unk


def test_bundle_json_roundtrip():
    b = SlotValueBundle("X", (("a", "b"), ("c",)))
    assert SlotValueBundle.from_json(b.to_json()) == b
    assert b.text() == "a_b,c"
    pair = FormattedPair("S2P", ["x", b], ["@ptr1"])
    assert FormattedPair.from_json(pair.to_json()).source == pair.source


slot_names = st.sampled_from(["A", "B", "C"])
words = st.sampled_from(["go", "to", "the", "now", "please"])
utterance = st.lists(st.one_of(words, slot_names.map(lambda s: "{" + s + "}")), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(utterance, st.randoms(use_true_random=False))
def test_pointer_targets_resolve_for_any_permutation(src, rnd):
    tgt = list(src)
    rnd.shuffle(tgt)
    for fmt in ("AS", "ASP"):
        p = reformat((tuple(src), tuple(tgt)), fmt)
        assert resolve_gold_target(p) == tuple(tgt)
        assert original_source(p) == tuple(src)

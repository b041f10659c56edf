import numpy as np
import pytest

import _oracles as oracle
from delexpara.metrics import (AlignmentCounts, MetricsCorpus, diversity, entities, entity_alignment,
                               fractional_ranks, intent_error_rate, novelty, repair_bio, semer, ser, slot_copy_by_count,
                               slot_copy_rate, spearman, spearman_permutation_pvalue, trigram_diversity,
                               trigram_novelty)


def _slots(u):
    return [t[1:-1] for t in u if t.startswith("{")]


@pytest.mark.parametrize("seed", range(100))
def test_intrinsic_metrics_match_oracle(seed):
    rng = np.random.default_rng(seed)
    train, gen = oracle.random_corpus(rng), oracle.random_corpus(rng)
    c = MetricsCorpus(train, gen)
    assert novelty(c) == oracle.novelty(train, gen) or abs(novelty(c) - oracle.novelty(train, gen)) <= 1e-9
    assert diversity(c) == oracle.diversity(gen)
    assert trigram_diversity(c) == oracle.trigram_diversity(gen)
    tn, to = trigram_novelty(c), oracle.trigram_novelty(train, gen)
    assert (tn is None and to is None) or abs(tn - to) <= 1e-9
    pairs = [(_slots(a), _slots(b)) for a, b in zip(gen, train)]
    sc, so = slot_copy_rate(pairs), oracle.slot_copy_rate(pairs)
    assert (sc is None and so is None) or abs(sc - so) <= 1e-9


@pytest.mark.parametrize("seed", range(100))
def test_error_rates_match_oracle(seed):
    rng = np.random.default_rng([seed, 1])
    examples = []
    for _ in range(int(rng.integers(1, 8))):
        n = int(rng.integers(1, 7))
        examples.append((oracle.random_bio(rng, n), oracle.random_bio(rng, n),
                         str(rng.integers(3)), str(rng.integers(3))))
    counts = AlignmentCounts()
    for r, h, ri, hi in examples:
        counts = counts + entity_alignment(r, h, ri, hi)
    s, o = ser(counts), oracle.ser(examples)
    assert (s is None and o is None) or abs(s - o) <= 1e-9
    assert abs(semer(counts) - oracle.semer(examples)) <= 1e-9
    preds, golds = [e[3] for e in examples], [e[2] for e in examples]
    assert abs(intent_error_rate(preds, golds) - oracle.intent_error(preds, golds)) <= 1e-9


@pytest.mark.parametrize("seed", range(100))
def test_spearman_matches_oracle(seed):
    rng = np.random.default_rng([seed, 2])
    n = int(rng.integers(2, 12))
    x = rng.integers(0, 5, size=n).tolist()
    y = (rng.integers(0, 5, size=n) + rng.random(n) * (seed % 2)).tolist()
    a, b = spearman(x, y), oracle.spearman(x, y)
    assert (a is None and b is None) or abs(a - b) <= 1e-9


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 1, 1], [1, 2, 3]) is None
    np.testing.assert_allclose(fractional_ranks([10, 20, 20, 5]), [2, 3.5, 3.5, 1])
    with pytest.raises(ValueError):
        spearman([1], [1])


def test_permutation_pvalue():
    x = list(range(10))
    assert spearman_permutation_pvalue(x, x, rounds=500) < 0.01
    p = spearman_permutation_pvalue(x, [3, 9, 0, 5, 1, 8, 2, 7, 4, 6], rounds=500)
    assert 0.05 < p <= 1.0
    assert spearman_permutation_pvalue(x, [1] * 10) is None


def test_novelty_complement_identity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        train, gen = oracle.random_corpus(rng), oracle.random_corpus(rng)
        c = MetricsCorpus(train, gen)
        if c.generated:
            assert novelty(c) + len(c.generated & c.train) / len(c.generated) == 1.0


def test_worked_examples():
    c = MetricsCorpus([("play", "{X}")], [("play", "{X}"), ("put", "on", "{X}"), ("put", "on", "{X}")])
    assert diversity(c) == 2 and novelty(c) == 0.5
    assert trigram_diversity(c) == 1 and trigram_novelty(c) == 1.0
    assert novelty(MetricsCorpus([], [])) is None
    # one substitution, one deletion, one insertion, wrong intent
    ref = ["B-A", "I-A", "O", "B-B", "O", "O"]
    hyp = ["B-C", "I-C", "O", "O", "O", "B-D"]
    counts = entity_alignment(ref, hyp, "I1", "I2")
    assert (counts.S, counts.Dd, counts.I, counts.IE, counts.total_ref_slots) == (1, 1, 1, 1, 2)
    assert ser(counts) == 1.5 and semer(counts) == pytest.approx(4 / 3)
    assert ser(entity_alignment(["O"], ["O"])) is None


def test_bio_repair():
    tags, changed = repair_bio(["I-A", "I-A", "O", "B-B", "I-A"])
    assert tags == ["B-A", "I-A", "O", "B-B", "B-A"] and changed
    assert entities(["B-A", "I-A", "B-A"]) == {(0, 2, "A"), (2, 3, "A")}


def test_slot_copy_variants():
    pairs = [(["X"], ["X"]), (["X", "Y"], ["X"]), ([], []), (["X", "Y", "Z"], ["Z", "Y", "X"])]
    assert slot_copy_rate(pairs) == pytest.approx(2 / 3)
    assert slot_copy_by_count(pairs) == {1: 1.0, 2: 0.0, 3: 1.0}
    assert slot_copy_rate([([], ["X"])]) is None


def test_metrics_are_order_independent():
    rng = np.random.default_rng(5)
    train, gen = oracle.random_corpus(rng), oracle.random_corpus(rng)
    a = MetricsCorpus(train, gen)
    b = MetricsCorpus(train[::-1], gen[::-1])
    assert (novelty(a), trigram_novelty(a), trigram_diversity(a)) == (novelty(b), trigram_novelty(b),
                                                                       trigram_diversity(b))

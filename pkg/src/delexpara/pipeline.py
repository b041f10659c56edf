"""Data preparation, paraphrase generation and the two evaluation suites."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict
from typing import Sequence

import numpy as np

from .corpus import (AnnotatedUtterance, FormattedPair, PairRejected, SkillDefinition, SlotCatalog,
                     build_paraphrase_sets, paraphrase_sets_from_skills, reformat, sample_training_pairs,
                     slots_in, tokenize)
from .fst import RuleSet, new_match_count
from .generator import GeneratedUtterance, paraphrase
from .metrics import (AlignmentCounts, entity_alignment, intent_error_rate, intrinsic_report, semer, ser,
                      spearman)
from .model import PointerTransformer
from .nlu import (NluConfig, augment_and_retrain, intent_filter, skill_samples, skill_seed, spans_to_bio,
                  train_nlu)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- prepare

def prepare_pairs(skills: Sequence[SkillDefinition], fmt: str, seed: int = 0,
                  annotated: Sequence[AnnotatedUtterance] = (), min_len: int = 1, max_len: int = 32,
                  max_values: int = 8) -> tuple[list[FormattedPair], dict]:
    sets = paraphrase_sets_from_skills(skills, min_len, max_len)
    for sig, members in build_paraphrase_sets(annotated, min_len, max_len).items():
        sets[sig] = sets.get(sig, frozenset()) | members
    catalogs = {s.skill_name: s.slots for s in skills}
    raw = sample_training_pairs(sets, seed)
    sig_of = {}
    for sig, members in sets.items():
        for m in members:
            sig_of.setdefault(m, sig)
    pairs, rejected = [], Counter()
    for idx, (src, tgt) in enumerate(raw):
        skill = sig_of[src].domain_or_skill
        try:
            pairs.append(reformat((src, tgt), fmt, catalogs.get(skill), seed, max_values,
                                  pair_id=f"{fmt}-{idx}"))
        except PairRejected:
            rejected["target_slot_not_in_source"] += 1
    summary = {
        "format": fmt,
        "signatures": len(sets),
        "candidate_pairs": len(raw),
        "pairs": len(pairs),
        "rejected": sum(rejected.values()),
        "rejection_reasons": dict(sorted(rejected.items())),
    }
    return pairs, summary


# ---------------------------------------------------------------- generate

def generate_records(model: PointerTransformer, skills: Sequence[SkillDefinition], fmt: str,
                     beam: int = 5, nbest: int = 3, normalize: bool = True, seed: int = 0,
                     max_values: int = 8) -> list[dict]:
    records = []
    for skill in skills:
        for u in skill.sample_utterances:
            if not 1 <= len(u.tokens) <= model.config.max_len:
                continue
            outs = paraphrase(model, u.tokens, fmt, skill.slots, beam, nbest, normalize, seed,
                              max_values, source_id=u.id)
            records.append({
                "skill": skill.skill_name,
                "source_id": u.id,
                "intent": u.intent,
                "source": " ".join(u.tokens),
                "paraphrases": [{"delex_text": " ".join(g.delex_tokens), "score": round(g.score, 6)}
                                for g in outs],
            })
    return records


def records_by_skill(records: Sequence[dict]) -> dict[str, list[tuple[GeneratedUtterance, str]]]:
    out: dict[str, list] = {}
    for r in records:
        bucket = out.setdefault(r["skill"], [])
        for p in r["paraphrases"]:
            bucket.append((GeneratedUtterance(tokenize(p["delex_text"]), r["source_id"], p["score"]),
                           r["intent"]))
    return out


# ---------------------------------------------------------------- intrinsic

def intrinsic_eval(skills: Sequence[SkillDefinition], records: Sequence[dict], per_source: bool = False) -> dict:
    """Novelty/diversity over unique delexicalised strings; slot copy per generated utterance.

    ``per_source`` counts slot copy on each source's top hypothesis only.
    """
    train = [u.tokens for s in skills for u in s.sample_utterances]
    generated, copy_pairs = [], []
    for r in records:
        src_slots = slots_in(tokenize(r["source"]))
        paras = r["paraphrases"][:1] if per_source else r["paraphrases"]
        for p in r["paraphrases"]:
            generated.append(tokenize(p["delex_text"]))
        for p in paras:
            copy_pairs.append((src_slots, slots_in(tokenize(p["delex_text"]))))
    report = intrinsic_report(train, generated, copy_pairs)
    report["slot_copy_mode"] = "per_source" if per_source else "per_generated"
    report["sources"] = len(records)
    return report


# ---------------------------------------------------------------- extrinsic

def _nlu_scores(model, tests: Sequence[AnnotatedUtterance]) -> dict:
    preds = model.predict_batch([list(t.tokens) for t in tests])
    counts = AlignmentCounts()
    for t, (intent, tags) in zip(tests, preds):
        c = entity_alignment(spans_to_bio(len(t.tokens), t.slot_spans), tags, t.intent, intent)
        counts = counts + c
    return {
        "intent_error": intent_error_rate([p[0] for p in preds], [t.intent for t in tests]),
        "slot_error": ser(counts),
        "semantic_error": semer(counts) if tests else None,
        "substitutions": counts.S,
        "insertions": counts.I,
        "deletions": counts.Dd,
        "intent_errors": counts.IE,
        "reference_slots": counts.total_ref_slots,
    }


def _relative(new, old):
    if new is None or old is None or old == 0:
        return None
    return (new - old) / old


def skill_features(skill: SkillDefinition) -> dict:
    delex = {u.tokens for u in skill.sample_utterances}
    intents = skill.intents()
    return {
        "intents": len(intents),
        "slots": len(skill.slots.names()),
        "unique_delex": len(delex),
        "unique_delex_per_intent": len(delex) / max(len(intents), 1),
    }


def evaluate_skill(skill: SkillDefinition, tests: Sequence[AnnotatedUtterance],
                   paraphrases: Sequence[tuple[GeneratedUtterance, str]], nlu_config: NluConfig,
                   seed: int = 0, fillings: int = 1) -> dict:
    cfg = NluConfig(**{**asdict(nlu_config), "seed": skill_seed(seed, skill.skill_name)})
    samples = skill_samples(skill)
    usable = [(g, i) for g, i in paraphrases
              if all(n in skill.slots for n in slots_in(g.delex_tokens)) and g.delex_tokens]
    baseline = train_nlu(samples, skill.slots, cfg)
    filt = intent_filter(usable, baseline, skill.slots, seed=cfg.seed, fillings=fillings)
    retained, seen = [], set()
    for g, intent in filt.retained:
        if (g.delex_tokens, intent) not in seen:
            seen.add((g.delex_tokens, intent))
            retained.append((g, intent))
    base_rules = RuleSet([t for t, _ in samples], skill.slots)
    aug_rules = base_rules.union(g.delex_tokens for g, _ in retained)
    fst = new_match_count(base_rules, aug_rules, [t.tokens for t in tests])
    augmented = augment_and_retrain(samples, skill.slots, retained, cfg)
    before = _nlu_scores(baseline, tests)
    after = _nlu_scores(augmented, tests)
    return {
        "skill": skill.skill_name,
        "paraphrases": len(paraphrases),
        "unusable_paraphrases": len(paraphrases) - len(usable),
        "intent_filter_rate": filt.rate,
        "filter_total": filt.total,
        "filter_retained": len(filt.retained),
        "retained": len(retained),
        "fst": fst.to_json(),
        "baseline": before,
        "augmented": after,
        "relative_change": {k: _relative(after[k], before[k])
                            for k in ("intent_error", "slot_error", "semantic_error")},
        "features": skill_features(skill),
    }


def extrinsic_eval(skills: Sequence[SkillDefinition], tests: Sequence[AnnotatedUtterance],
                   records: Sequence[dict], nlu_config: NluConfig = NluConfig(), seed: int = 0,
                   fillings: int = 1) -> dict:
    by_skill = records_by_skill(records)
    per_skill = []
    for skill in sorted(skills, key=lambda s: s.skill_name):
        skill_tests = [t for t in tests if t.domain_or_skill == skill.skill_name]
        if not skill_tests:
            continue
        log.info("extrinsic evaluation of %s", skill.skill_name)
        per_skill.append(evaluate_skill(skill, skill_tests, by_skill.get(skill.skill_name, []),
                                        nlu_config, seed, fillings))
    return {"skills": per_skill, "aggregate": aggregate(per_skill)}


def _pooled(per_skill: Sequence[dict], side: str) -> dict:
    tot = Counter()
    n_tests = 0
    for r in per_skill:
        s = r[side]
        for k in ("substitutions", "insertions", "deletions", "intent_errors", "reference_slots"):
            tot[k] += s[k]
        n_tests += r["fst"]["test_size"]
    slot_err = tot["substitutions"] + tot["insertions"] + tot["deletions"]
    return {
        "intent_error": tot["intent_errors"] / n_tests if n_tests else None,
        "slot_error": slot_err / tot["reference_slots"] if tot["reference_slots"] else None,
        "semantic_error": (slot_err + tot["intent_errors"]) / (tot["reference_slots"] + n_tests)
        if n_tests else None,
    }


def aggregate(per_skill: Sequence[dict]) -> dict:
    total_para = sum(r["filter_total"] for r in per_skill)
    retained_raw = sum(r["filter_retained"] for r in per_skill)
    base = _pooled(per_skill, "baseline")
    aug = _pooled(per_skill, "augmented")
    out = {
        "skills": len(per_skill),
        "intent_filter_rate": retained_raw / total_para if total_para else None,
        "fst_new_rules": sum(r["fst"]["new_rules"] for r in per_skill),
        "fst_new_matches": sum(r["fst"]["new_matches"] for r in per_skill),
        "fst_unmatched_pool": sum(r["fst"]["unmatched_pool"] for r in per_skill),
        "test_utterances": sum(r["fst"]["test_size"] for r in per_skill),
        "baseline": base,
        "augmented": aug,
        "relative_change": {k: _relative(aug[k], base[k]) for k in base},
    }
    pool = out["fst_unmatched_pool"]
    out["fst_new_match_percentage"] = out["fst_new_matches"] / pool if pool else None
    # rank correlation of per-skill SEMER improvement with skill features
    improvements = [r["relative_change"]["semantic_error"] for r in per_skill]
    corr = {}
    if len(per_skill) >= 2 and all(v is not None for v in improvements):
        for feat in per_skill[0]["features"]:
            rho = spearman([-v for v in improvements], [r["features"][feat] for r in per_skill])
            corr[feat] = rho
    out["spearman_semer_improvement"] = corr
    return out


def mean_or_none(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None

"""Command-line entry point: ``delexpara <command> [options]``.

Every option can also come from a JSON document passed with ``--config``;
options given on the command line win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import plots, reports
from .corpus import (FORMATS, AnnotatedUtterance, CorpusError, SlotCatalog, build_vocab, load_annotated, load_skills,
                     read_pairs, save_skills, tokenize, write_pairs, Vocab)
from .embedder import EmbeddingConfig, variant_for_format
from .fst import RuleSet, build, read_rules
from .model import ModelConfig
from .nlu import NluConfig
from .pipeline import extrinsic_eval, generate_records, intrinsic_eval, prepare_pairs
from .synth import SynthConfig, make_corpus
from .training import TrainConfig, UsageError, load_model, save_model, train

log = logging.getLogger("delexpara")


class CommandError(RuntimeError):
    pass


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CommandError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skills, tests, _ = make_corpus(SynthConfig(n_skills=args.n_skills, seed=args.seed,
                                               test_per_carrier=args.test_per_carrier))
    save_skills(out / "skills.json", skills)
    reports.write_jsonl(out / "test.jsonl", (t.to_json() for t in tests))
    return {"skills": len(skills), "test_utterances": len(tests)}


def cmd_prepare(args) -> dict:
    skills = load_skills(_require(args.skills, "skill file"))
    annotated = load_annotated(_require(args.annotated, "annotated corpus")) if args.annotated else []
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for fmt in args.formats.split(","):
        if fmt not in FORMATS:
            raise CommandError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
        pairs, info = prepare_pairs(skills, fmt, args.seed, annotated, args.min_len, args.max_len,
                                    args.max_values)
        write_pairs(out / f"pairs.{fmt}.jsonl", pairs)
        build_vocab(pairs, args.min_count).save(out / f"vocab.{fmt}.txt")
        summary[fmt] = info
    reports.write_json(out / "prepare_summary.json", summary)
    return summary


def model_config_from(args, fmt: str) -> ModelConfig:
    emb = EmbeddingConfig(variant_for_format(fmt), args.hidden, args.conv_channels)
    return ModelConfig(heads=args.heads, layers=args.layers, hidden=args.hidden, ffn=args.ffn,
                       dropout=args.dropout, max_len=args.max_len, embedding=emb, copy_heads=args.copy_heads)


def cmd_train(args) -> dict:
    pairs = read_pairs(_require(args.pairs, "pair file"))
    vocab = Vocab.load(_require(args.vocab, "vocabulary"))
    if not pairs:
        raise CommandError("the pair file is empty")
    fmt = pairs[0].format
    mcfg = model_config_from(args, fmt)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, accumulate=args.accumulate,
                       noam_base=args.noam_base, warmup=args.warmup, seed=args.seed)
    result = train(mcfg, pairs, vocab, tcfg)
    out = save_model(args.out, result.model, vocab, fmt, tcfg, args.epochs)
    reports.write_tsv(out / "loss.tsv", ["epoch", "loss"],
                      [(0, result.initial_loss)] + [(i + 1, v) for i, v in enumerate(result.epoch_losses)])
    plots.loss_curve([result.initial_loss] + result.epoch_losses, out / "loss.png", f"{fmt} training loss")
    return {"format": fmt, "pairs": len(pairs), "initial_loss": result.initial_loss,
            "final_loss": result.epoch_losses[-1], "updates": result.updates}


def cmd_generate(args) -> dict:
    vocab = Vocab.load(_require(args.vocab, "vocabulary"))
    model, manifest = load_model(_require(args.checkpoint, "checkpoint"), vocab)
    skills = load_skills(_require(args.skills, "skill file"))
    if args.nbest > args.beam:
        raise CommandError("nbest must not exceed beam")
    records = generate_records(model, skills, manifest["format"], args.beam, args.nbest,
                               not args.no_normalize, args.seed, args.max_values)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    n = reports.write_jsonl(args.out, records)
    return {"sources": n, "paraphrases": sum(len(r["paraphrases"]) for r in records)}


def cmd_eval_intrinsic(args) -> dict:
    skills = load_skills(_require(args.skills, "skill file"))
    records = reports.read_jsonl(_require(args.paraphrases, "paraphrase file"))
    report = intrinsic_eval(skills, records, per_source=args.per_source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports.write_json(out / "intrinsic.json", report)
    reports.write_tsv(out / "intrinsic.tsv", ["metric", "value"], reports.intrinsic_rows(report))
    by_count = {int(k): v for k, v in report["slot_copy_by_count"].items()}
    reports.write_tsv(out / "slot_copy_by_count.tsv", ["slots", "copy_rate"], sorted(by_count.items()))
    if by_count:
        plots.slot_copy_by_count({args.label: by_count}, out / "slot_copy_by_count.png")
    return report


def cmd_eval_extrinsic(args) -> dict:
    skills = load_skills(_require(args.skills, "skill file"))
    tests = [AnnotatedUtterance.from_json(r) for r in reports.read_jsonl(_require(args.test, "test file"))]
    records = reports.read_jsonl(_require(args.paraphrases, "paraphrase file"))
    nlu_cfg = NluConfig(epochs=args.nlu_epochs, seed=args.seed)
    report = extrinsic_eval(skills, tests, records, nlu_cfg, args.seed, args.fillings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports.write_json(out / "extrinsic.json", report)
    header, rows = reports.extrinsic_rows(report)
    reports.write_tsv(out / "extrinsic.tsv", header, rows)
    scored = [r for r in report["skills"] if r["relative_change"]["semantic_error"] is not None]
    if scored:
        plots.improvement_scatter([r["features"]["unique_delex"] for r in scored],
                                  [-r["relative_change"]["semantic_error"] for r in scored],
                                  [r["skill"] for r in scored], out / "semer_improvement.png")
    return report["aggregate"]


def _catalog_for(args) -> SlotCatalog:
    if not args.skill:
        return SlotCatalog()
    cat = SlotCatalog()
    for s in load_skills(_require(args.skill, "skill file")):
        cat = cat.merged(s.slots)
    return cat


def cmd_fst(args) -> dict:
    rules = read_rules(_require(args.rules, "rules file"))
    automaton = build(RuleSet(rules, _catalog_for(args)))
    if args.fst_command == "build":
        return {"rules": len(set(rules)), "states": len(automaton.nodes),
                "slot_tries": {k: len(v) for k, v in sorted(automaton.value_tries.items())}}
    lines = Path(_require(args.utterances, "utterance file")).read_text().splitlines()
    results = []
    for line in lines:
        if not line.strip():
            continue
        m = automaton.match(tokenize(line))
        results.append({"utterance": line.strip(), "accepted": m is not None,
                        "rule": " ".join(m.rule) if m else None,
                        "spans": [list(s) for s in m.spans] if m else []})
    if args.out:
        reports.write_jsonl(args.out, results)
    else:
        for r in results:
            print(json.dumps(r))
    return {"utterances": len(results), "accepted": sum(r["accepted"] for r in results)}


# ---------------------------------------------------------------- parser

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="delexpara", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["synth"] = sub.add_parser("synth", help="write the synthetic skill corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-skills", type=int, default=5)
    p.add_argument("--test-per-carrier", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = subs["prepare"] = sub.add_parser("prepare", help="build training pairs and vocabularies")
    p.add_argument("--skills", required=True)
    p.add_argument("--annotated")
    p.add_argument("--formats", default="ASP")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--max-values", type=int, default=8)
    p.add_argument("--min-count", type=int, default=1)

    p = subs["train"] = sub.add_parser("train", help="train a paraphrase model")
    p.add_argument("--pairs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--accumulate", type=int, default=1)
    p.add_argument("--noam-base", type=float, default=0.35)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--ffn", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--conv-channels", type=int, default=128)
    p.add_argument("--copy-heads", choices=("mean", "max"), default="mean")

    p = subs["generate"] = sub.add_parser("generate", help="n-best paraphrases for skill samples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--skills", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--nbest", type=int, default=3)
    p.add_argument("--no-normalize", action="store_true", help="rank by raw log-probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-values", type=int, default=8)

    p = subs["eval-intrinsic"] = sub.add_parser("eval-intrinsic", help="slot copy, novelty, diversity")
    p.add_argument("--skills", required=True)
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-source", action="store_true")
    p.add_argument("--label", default="model")

    p = subs["eval-extrinsic"] = sub.add_parser("eval-extrinsic", help="FST matches and NLU error rates")
    p.add_argument("--skills", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nlu-epochs", type=int, default=30)
    p.add_argument("--fillings", type=int, default=1)

    p = subs["fst"] = sub.add_parser("fst", help="build or run the exact-match acceptor")
    p.add_argument("fst_command", choices=("build", "match"))
    p.add_argument("--rules", required=True)
    p.add_argument("--skill")
    p.add_argument("--utterances")
    p.add_argument("--out")
    return parser, subs


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "generate": cmd_generate,
    "eval-intrinsic": cmd_eval_intrinsic,
    "eval-extrinsic": cmd_eval_extrinsic,
    "fst": cmd_fst,
}


def parse_args(argv=None) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser, subs = build_parser()
    if known.config:
        with open(known.config) as fh:
            conf = json.load(fh)
        for name, sub in subs.items():
            section = conf.get(name, {k: v for k, v in conf.items() if not isinstance(v, dict)})
            keys = {k.replace("-", "_"): v for k, v in section.items()}
            dests = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in keys.items() if k in dests})
            # required options may now come from the file
            for action in sub._actions:
                if action.dest in keys:
                    action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except (CommandError, CorpusError, UsageError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"delexpara {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True, indent=1, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""JSON / TSV report writers. ``None`` is written as ``NA`` in TSV files."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def write_tsv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def intrinsic_rows(report: dict) -> list[tuple[str, object]]:
    keys = ("slot_copy_rate", "novelty", "diversity", "trigram_novelty", "trigram_diversity",
            "train_size", "generated_size", "sources")
    rows = [(k, report[k]) for k in keys]
    rows += [(f"slot_copy_rate_{k}_slots", v) for k, v in report["slot_copy_by_count"].items()]
    return rows


def extrinsic_rows(report: dict) -> tuple[list[str], list[list]]:
    header = ["skill", "intent_filter_rate", "fst_new_rules", "fst_new_matches", "unmatched_pool",
              "intent_error_base", "intent_error_aug", "slot_error_base", "slot_error_aug",
              "semer_base", "semer_aug"]
    rows = []
    for r in report["skills"]:
        rows.append([r["skill"], r["intent_filter_rate"], r["fst"]["new_rules"], r["fst"]["new_matches"],
                     r["fst"]["unmatched_pool"], r["baseline"]["intent_error"], r["augmented"]["intent_error"],
                     r["baseline"]["slot_error"], r["augmented"]["slot_error"],
                     r["baseline"]["semantic_error"], r["augmented"]["semantic_error"]])
    a = report["aggregate"]
    rows.append(["ALL", a["intent_filter_rate"], a["fst_new_rules"], a["fst_new_matches"], a["fst_unmatched_pool"],
                 a["baseline"]["intent_error"], a["augmented"]["intent_error"],
                 a["baseline"]["slot_error"], a["augmented"]["slot_error"],
                 a["baseline"]["semantic_error"], a["augmented"]["semantic_error"]])
    return header, rows

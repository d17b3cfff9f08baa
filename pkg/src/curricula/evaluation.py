"""Corpus BLEU, run reports, and ranked-subset overlap analysis.

BLEU here is the standard corpus-level 4-gram score with clipped
precisions and the exponential brevity penalty, computed directly on
the corpus module's tokens (no retokenization; synthetic corpora have
no detokenized surface form).  add_one smoothing (numerator and
denominator + 1 for n >= 2) is the default since desk-scale sentences
are short; exact-match tests use smoothing "none".
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .exceptions import DataError, UsageError
from .model import TranslationModel, translate_greedy
from .scorers import Ranking, top_fraction
from .util import chunk_spans, thread_count, thread_map

SMOOTHINGS = ("none", "add_one")

BLEU_ORDER = 4


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hyps, refs, smoothing: str = "add_one") -> BleuResult:
    """Corpus-level BLEU over single-reference token sequences."""
    if smoothing not in SMOOTHINGS:
        raise UsageError(f"smoothing must be one of {SMOOTHINGS}, got {smoothing!r}")
    if len(hyps) != len(refs):
        raise DataError(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise DataError("cannot score an empty corpus")
    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp = list(hyp)
        ref = list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, BLEU_ORDER + 1):
            hc = _ngram_counts(hyp, n)
            if not hc:
                continue
            rc = _ngram_counts(ref, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += len(hyp) - n + 1
    if hyp_len == 0:
        return BleuResult(score=0.0, precisions=(0.0,) * 4, brevity_penalty=0.0,
                          hyp_len=0, ref_len=ref_len)
    precisions = []
    for n in range(1, BLEU_ORDER + 1):
        num, den = matches[n - 1], totals[n - 1]
        if smoothing == "add_one" and n >= 2:
            num, den = num + 1, den + 1
        precisions.append(num / den if den > 0 else 0.0)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / BLEU_ORDER) * 100.0
    return BleuResult(score=score, precisions=tuple(precisions), brevity_penalty=bp,
                      hyp_len=hyp_len, ref_len=ref_len)


def decode_corpus(model: TranslationModel, corpus: Corpus) -> list[list[str]]:
    """Greedy-decode every source side, fanned out over threads."""
    spans = chunk_spans(len(corpus), thread_count())

    def run_span(span):
        lo, hi = span
        return [translate_greedy(model, corpus[i].src) for i in range(lo, hi)]

    out: list[list[str]] = []
    for part in thread_map(run_span, spans):
        out.extend(part)
    return out


def evaluate_bleu(model: TranslationModel, corpus: Corpus,
                  smoothing: str = "add_one") -> float:
    """Greedy-decode the corpus and score against its target sides."""
    if len(corpus) == 0:
        raise DataError("cannot evaluate on an empty corpus")
    hyps = decode_corpus(model, corpus)
    refs = [list(p.tgt) for p in corpus]
    return corpus_bleu(hyps, refs, smoothing).score


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    selected_size: int
    valid_bleu: float


@dataclass
class RunReport:
    """Everything a strategy run reports.

    eval_history rows are (updates into the run, valid BLEU, test BLEU);
    test BLEU is observational and never drives early stopping.
    wall_time is informational and deliberately kept out of emitted
    report files so reruns reproduce them bit-exactly.
    """

    strategy: str
    epochs: list[EpochRecord] = field(default_factory=list)
    total_updates: int = 0
    best_valid_bleu: float = 0.0
    best_test_bleu: float = 0.0
    best_update: int = 0
    wall_time: float = 0.0
    eval_history: list[tuple[int, float, float]] = field(default_factory=list)
    selections: list = field(default_factory=list)


def write_report_json(report: RunReport, path: str | Path) -> None:
    """Persist a run report; wall_time is intentionally omitted so the
    file is identical across reruns."""
    doc = {
        "strategy": report.strategy,
        "total_updates": report.total_updates,
        "best_valid_bleu": report.best_valid_bleu,
        "best_test_bleu": report.best_test_bleu,
        "best_update": report.best_update,
        "epochs": [{"epoch": e.epoch, "selected_size": e.selected_size,
                    "valid_bleu": e.valid_bleu} for e in report.epochs],
        "eval_history": [[u, v, t] for u, v, t in report.eval_history],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_report_json(path: str | Path) -> RunReport:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such report file: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{p}: invalid report JSON: {e}") from None
    try:
        return RunReport(
            strategy=doc["strategy"],
            epochs=[EpochRecord(epoch=e["epoch"], selected_size=e["selected_size"],
                                valid_bleu=e["valid_bleu"]) for e in doc["epochs"]],
            total_updates=doc["total_updates"],
            best_valid_bleu=doc["best_valid_bleu"],
            best_test_bleu=doc["best_test_bleu"],
            best_update=doc["best_update"],
            eval_history=[(u, v, t) for u, v, t in doc["eval_history"]],
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"{p}: malformed report: {e}") from None


# ---------------------------------------------------------------------------
# Overlap analysis
# ---------------------------------------------------------------------------


def overlap_fraction(ra: Ranking, rb: Ranking, p: float) -> float:
    """Percentage overlap of the two rankings' top-p subsets."""
    if set(ra.ids) != set(rb.ids):
        raise DataError("rankings cover different pair-id universes")
    ta = set(top_fraction(ra, p))
    tb = set(top_fraction(rb, p))
    return 100.0 * len(ta & tb) / len(ta)


@dataclass(frozen=True)
class OverlapRow:
    method_a: str
    method_b: str
    p: float
    overlap_pct: float


def overlap_matrix(rankings: dict[str, Ranking], p_grid) -> list[OverlapRow]:
    """Pairwise top-p overlap for every method pair (self included) at
    every grid point."""
    if len(rankings) < 2:
        raise UsageError(f"need at least 2 rankings to compare, got {len(rankings)}")
    methods = list(rankings)
    rows = []
    for i, a in enumerate(methods):
        for b in methods[i:]:
            for p in p_grid:
                rows.append(OverlapRow(a, b, float(p),
                                       overlap_fraction(rankings[a], rankings[b], p)))
    return rows


def save_overlap_csv(rows: list[OverlapRow], path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method_a", "method_b", "p", "overlap_pct"])
            for r in rows:
                w.writerow([r.method_a, r.method_b, repr(r.p), repr(r.overlap_pct)])
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from None


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


COMPARISON_COLUMNS = ("strategy", "best_valid_bleu", "best_test_bleu",
                      "total_updates", "best_update", "n_epochs")


def emit_report(reports: list[RunReport], out_dir: str | Path, svg: bool = False) -> None:
    """Write comparison.csv, per-strategy epoch and evaluation CSVs, and
    optionally an update-count SVG bar chart."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COMPARISON_COLUMNS)
            for r in reports:
                w.writerow([r.strategy, repr(r.best_valid_bleu), repr(r.best_test_bleu),
                            r.total_updates, r.best_update, len(r.epochs)])
        for r in reports:
            with open(out / f"{r.strategy}_epochs.csv", "w", encoding="utf-8",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["epoch", "selected_size", "valid_bleu"])
                for e in r.epochs:
                    w.writerow([e.epoch, e.selected_size, repr(e.valid_bleu)])
            with open(out / f"{r.strategy}_evals.csv", "w", encoding="utf-8",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["updates", "valid_bleu", "test_bleu"])
                for upd, vb, tb in r.eval_history:
                    w.writerow([upd, repr(vb), repr(tb)])
        if svg:
            _write_update_chart(reports, out / "updates.svg")
    except OSError as e:
        raise DataError(f"cannot write report to {out}: {e}") from None


def load_comparison_csv(path: str | Path) -> list[dict]:
    """Re-read an emitted comparison table with exact float round-trip."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "strategy": rec["strategy"],
                "best_valid_bleu": float(rec["best_valid_bleu"]),
                "best_test_bleu": float(rec["best_test_bleu"]),
                "total_updates": int(rec["total_updates"]),
                "best_update": int(rec["best_update"]),
                "n_epochs": int(rec["n_epochs"]),
            })
    return rows


def _write_update_chart(reports: list[RunReport], path: Path) -> None:
    """Bar chart of total update counts, bars in input order."""
    bar_h = 28
    gap = 10
    left = 170
    width = 640
    top = 30
    n = len(reports)
    height = top + n * (bar_h + gap) + 20
    peak = max((r.total_updates for r in reports), default=0) or 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="18" font-size="14">updates per strategy</text>',
    ]
    for i, r in enumerate(reports):
        y = top + i * (bar_h + gap)
        w = (width - left - 80) * r.total_updates / peak
        parts.append(f'<text x="{left - 8}" y="{y + bar_h - 9}" '
                     f'text-anchor="end">{r.strategy}</text>')
        parts.append(f'<rect x="{left}" y="{y}" width="{w:.1f}" height="{bar_h}" '
                     f'fill="#4878a8"/>')
        parts.append(f'<text x="{left + w + 6:.1f}" y="{y + bar_h - 9}">'
                     f'{r.total_updates}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")

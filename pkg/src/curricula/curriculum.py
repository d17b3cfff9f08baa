"""Two-stage curriculum training: warm-up, then fine-tuning on selected
subsets of the in-domain data.

Strategies
----------
- deterministic: fix D_s once as the top fraction of an external
  scorer's ranking, then fine-tune on it every epoch.
- online (static or dynamic window): re-score all of D_d with the
  emerging model's prediction scores at each epoch start, rank
  easiest-first, and train one pass over a window of that ranking.
  Dynamic windows resize per epoch via a scheduler and stay inside a
  rank band; static windows drop fixed easy/hard fractions.
- hybrid: intersect the three external scorers' top-50% subsets once,
  then run the online strategy restricted to that candidate set with a
  10/10 static window.
- traditional fine-tuning (100% of D_d) and the converged baseline
  (keep training on general data, no meta-parameter reset) are the
  comparison points.

Fine-tuning "epoch" means one pass over the currently selected subset.
All fine-tuning runs reset the optimizer moments, learning rate, and
batching stream when leaving warm-up, keep the cumulative update
counter, evaluate validation BLEU every eval_interval updates, and
early-stop after `patience` evaluations without improvement, so update
counts are comparable across strategies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .evaluation import EpochRecord, RunReport, evaluate_bleu
from .exceptions import DataError, UsageError
from .model import (Checkpoint, EncodedCorpus, TranslationModel, TrainerState,
                    _apply_batch, _GradBuffer, encode_corpus, reset_meta, snapshot,
                    train_until_converged, train_updates)
from .scorers import (HIGHER_IS_BETTER, Ranking, ScoreRecord, prediction_values,
                      rank, top_fraction)
from .util import digest_lines, frac_floor

SCHEDULER_KINDS = ("linear", "exponential", "sqrt")
SCHEDULER_MODES = ("expansion", "shrink")
WINDOW_KINDS = ("static", "dynamic")
STRATEGIES = ("converged_baseline", "traditional_ft", "deterministic",
              "online_static", "online_expand", "online_shrink", "hybrid")

HYBRID_METHODS = ("laser_csls", "dcce", "mml")
HYBRID_TOP_FRACTION = 0.5
HYBRID_DISCARD = 0.10

# λ(t) is rounded to this many decimals before clamping so the decimal
# sequences of the published schedules come out exactly (0.1 + 0.05*2
# is 0.20000000000000004 in binary floating point).
_LAMBDA_DECIMALS = 12


# ---------------------------------------------------------------------------
# Schedulers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchedulerSpec:
    """Window-size schedule λ(t) over fine-tune epochs t = 0, 1, ...

    Expansion grows from lambda_init and clamps at lambda_max; shrink
    decays from lambda_init and clamps at lambda_min.  Linear moves by
    l_inc/l_dec per epoch, exponential multiplies by E_inc (divides by
    E_dec), and sqrt interpolates lambda^2 linearly toward C1/C2
    (default: the squared bound) over S_inc/S_dec epochs.
    """

    kind: str = "linear"
    mode: str = "expansion"
    lambda_init: float = 0.10
    lambda_max: float = 0.40
    lambda_min: float = 0.10
    l_inc: float = 0.05
    l_dec: float = 0.05
    E_inc: float = 1.5
    E_dec: float = 1.5
    S_inc: int = 6
    S_dec: int = 6
    C1: float | None = None
    C2: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise UsageError(f"scheduler kind must be one of {SCHEDULER_KINDS}, "
                             f"got {self.kind!r}")
        if self.mode not in SCHEDULER_MODES:
            raise UsageError(f"scheduler mode must be one of {SCHEDULER_MODES}, "
                             f"got {self.mode!r}")
        for name in ("lambda_init", "lambda_max", "lambda_min"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise UsageError(f"{name} must be in (0, 1], got {v}")
        if self.mode == "expansion" and self.lambda_init > self.lambda_max:
            raise UsageError(f"expansion requires lambda_init <= lambda_max "
                             f"({self.lambda_init} > {self.lambda_max})")
        if self.mode == "shrink" and self.lambda_init < self.lambda_min:
            raise UsageError(f"shrink requires lambda_init >= lambda_min "
                             f"({self.lambda_init} < {self.lambda_min})")
        if self.l_inc <= 0.0 or self.l_dec <= 0.0:
            raise UsageError("linear rates l_inc/l_dec must be positive")
        if self.E_inc <= 1.0 or self.E_dec <= 1.0:
            raise UsageError("exponential multipliers E_inc/E_dec must exceed 1")
        if self.S_inc < 1 or self.S_dec < 1:
            raise UsageError("sqrt horizons S_inc/S_dec must be >= 1")

    def peak(self) -> float:
        """Largest λ(t) the schedule can emit."""
        return self.lambda_max if self.mode == "expansion" else self.lambda_init


def scheduler_eval(spec: SchedulerSpec, t: int) -> float:
    """λ(t): exact schedule value with clamping at the bound."""
    if t < 0:
        raise UsageError(f"epoch index must be >= 0, got {t}")
    if spec.mode == "expansion":
        if spec.kind == "linear":
            v = spec.lambda_init + spec.l_inc * t
        elif spec.kind == "exponential":
            v = spec.lambda_init * spec.E_inc ** t
        else:
            c1 = spec.lambda_max ** 2 if spec.C1 is None else spec.C1
            v = np.sqrt(spec.lambda_init ** 2
                        + (c1 - spec.lambda_init ** 2) * (t / spec.S_inc))
        return min(round(float(v), _LAMBDA_DECIMALS), spec.lambda_max)
    if spec.kind == "linear":
        v = spec.lambda_init - spec.l_dec * t
    elif spec.kind == "exponential":
        v = spec.lambda_init * spec.E_dec ** (-t)
    else:
        c2 = spec.lambda_min ** 2 if spec.C2 is None else spec.C2
        radicand = spec.lambda_init ** 2 + (c2 - spec.lambda_init ** 2) * (t / spec.S_dec)
        v = spec.lambda_min if radicand < 0.0 else np.sqrt(radicand)
    return max(round(float(v), _LAMBDA_DECIMALS), spec.lambda_min)


# ---------------------------------------------------------------------------
# Selection windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """How each epoch's subset is cut out of the prediction ranking."""

    kind: str = "static"
    discard_easy: float = 0.30
    discard_hard: float = 0.30
    band: tuple[float, float] = (0.30, 0.70)
    scheduler: SchedulerSpec | None = None
    anchor: str = "band_center"

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise UsageError(f"window kind must be one of {WINDOW_KINDS}, got {self.kind!r}")
        if self.kind == "static":
            for name in ("discard_easy", "discard_hard"):
                v = getattr(self, name)
                if not 0.0 <= v < 1.0:
                    raise UsageError(f"{name} must be in [0, 1), got {v}")
            if self.discard_easy + self.discard_hard >= 1.0:
                raise UsageError("discard_easy + discard_hard must be < 1, got "
                                 f"{self.discard_easy} + {self.discard_hard}")
            return
        lo, hi = self.band
        if not (0.0 <= lo < hi <= 1.0):
            raise UsageError(f"band must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]")
        if self.anchor != "band_center":
            raise UsageError(f"unknown window anchor {self.anchor!r}")
        if self.scheduler is None:
            raise UsageError("dynamic windows need a scheduler")
        # the band width 0.7 - 0.3 is 0.39999... in binary floats; round
        # so the published defaults validate
        if self.scheduler.peak() > round(hi - lo, _LAMBDA_DECIMALS):
            raise UsageError(f"scheduler can emit lambda={self.scheduler.peak()} but the "
                             f"band only holds {hi - lo:.6g}")


def _require_easiest_first(ranking: Ranking) -> None:
    if ranking.direction != HIGHER_IS_BETTER:
        raise UsageError("selection windows expect an easiest-first ranking "
                         "(higher_is_better prediction scores)")


def select_static_window(ranking: Ranking, discard_easy: float,
                         discard_hard: float) -> list[int]:
    """Drop floor(e*N) easiest and floor(h*N) hardest; keep the middle."""
    _require_easiest_first(ranking)
    if not 0.0 <= discard_easy < 1.0 or not 0.0 <= discard_hard < 1.0:
        raise UsageError("discard fractions must be in [0, 1)")
    if discard_easy + discard_hard >= 1.0:
        raise UsageError("discard fractions must sum to < 1")
    n = len(ranking)
    k_e = frac_floor(discard_easy, n)
    k_h = frac_floor(discard_hard, n)
    middle = ranking.ids[k_e:n - k_h]
    if not middle:
        raise UsageError(f"static window kept no pairs (N={n}, "
                         f"discard {discard_easy}/{discard_hard})")
    return list(middle)


def select_dynamic_window(ranking: Ranking, lam: float,
                          band: tuple[float, float]) -> list[int]:
    """A floor(lam*N)-wide rank slice centered at the band midpoint,
    shifted just enough to stay inside [floor(lo*N), floor(hi*N))."""
    _require_easiest_first(ranking)
    lo, hi = band
    if not (0.0 <= lo < hi <= 1.0):
        raise UsageError(f"band must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]")
    if lam > round(hi - lo, _LAMBDA_DECIMALS):
        raise UsageError(f"window fraction {lam} exceeds the band width {hi - lo:.6g}")
    n = len(ranking)
    k = frac_floor(lam, n)
    if k == 0:
        raise UsageError(f"window fraction {lam} selects zero of {n} pairs")
    lo_pos = frac_floor(lo, n)
    hi_pos = frac_floor(hi, n)
    if k > hi_pos - lo_pos:
        raise UsageError(f"window of {k} pairs cannot fit rank positions "
                         f"[{lo_pos}, {hi_pos})")
    mid = frac_floor((lo + hi) / 2.0, n)
    start = max(lo_pos, min(mid - k // 2, hi_pos - k))
    return list(ranking.ids[start:start + k])


def hybrid_candidates(rankings: dict[str, Ranking]) -> list[int]:
    """Intersection of the three scorers' top-50% subsets, id-sorted."""
    if set(rankings) != set(HYBRID_METHODS):
        raise UsageError(f"hybrid needs rankings for exactly {set(HYBRID_METHODS)}, "
                         f"got {set(rankings)}")
    subsets = [set(top_fraction(rankings[m], HYBRID_TOP_FRACTION)) for m in HYBRID_METHODS]
    common = set.intersection(*subsets)
    if not common:
        raise DataError("the three top-50% subsets share no pair; "
                        "increase the top fraction or inspect the rankings")
    return sorted(common)


# ---------------------------------------------------------------------------
# Epoch selection log
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochSelection:
    epoch: int
    selected_ids: tuple[int, ...]
    window_size_frac: float
    score_snapshot_digest: str


def ranking_digest(ranking: Ranking) -> str:
    """Hash of the full score snapshot behind a selection."""
    return digest_lines([f"{pid}\t{val:.17g}"
                         for pid, val in zip(ranking.ids, ranking.values)])


def save_selection_log(selections: list[EpochSelection], path,
                       dump_ids: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\twindow_size_frac\tn_selected\tdigest\n")
        for s in selections:
            fh.write(f"{s.epoch}\t{float(s.window_size_frac)!r}\t"
                     f"{len(s.selected_ids)}\t{s.score_snapshot_digest}\n")
    if dump_ids:
        ids_path = str(path) + ".ids"
        with open(ids_path, "w", encoding="utf-8") as fh:
            for s in selections:
                fh.write(f"{s.epoch}\t" + ",".join(str(i) for i in s.selected_ids) + "\n")


def load_selection_log(path) -> list[tuple[int, float, int, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "epoch\twindow_size_frac\tn_selected\tdigest":
            raise DataError(f"{path}: not a selection log")
        for line in fh:
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 4:
                raise DataError(f"{path}: malformed selection log row {line!r}")
            rows.append((int(cols[0]), float(cols[1]), int(cols[2]), cols[3]))
    return rows


# ---------------------------------------------------------------------------
# Fine-tuning engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinetunePlan:
    """Knobs shared by every fine-tuning strategy."""

    n_epochs: int = 50
    patience: int = 5
    eval_interval: int = 200
    lr: float = 5e-4
    seed: int = 3
    p: float = 0.4
    window: WindowSpec | None = None
    prediction_mean: str = "arithmetic"

    def __post_init__(self):
        if self.n_epochs < 1:
            raise UsageError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if self.patience < 1:
            raise UsageError(f"patience must be >= 1, got {self.patience}")
        if self.eval_interval < 1:
            raise UsageError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if not 0.0 < self.p <= 1.0:
            raise UsageError(f"top fraction p must be in (0, 1], got {self.p}")


def _plan_subset_pass(enc: EncodedCorpus, positions: np.ndarray, batch_size: int,
                      rng: np.random.Generator) -> list[np.ndarray]:
    # same batching discipline as full passes: shuffle, group by target
    # length, shuffle batch order
    n = positions.shape[0]
    order = positions[rng.permutation(n)]
    grouped = order[np.argsort(enc.tgt_lens[order], kind="stable")]
    batches = [grouped[i:i + batch_size] for i in range(0, n, batch_size)]
    return [batches[j] for j in rng.permutation(len(batches))]


def _finetune_engine(model: TranslationModel, state: TrainerState, train: Corpus,
                     valid: Corpus, test: Corpus, plan: FinetunePlan, select_fn,
                     strategy: str) -> tuple[Checkpoint, RunReport]:
    """Run the per-epoch select/train/evaluate loop for one strategy.

    select_fn(epoch, model) -> (ids, window_size_frac, digest) picks the
    epoch's subset; the model argument is the live emerging model.
    """
    t0 = time.perf_counter()
    start_updates = state.update_count
    enc = encode_corpus(train, model.src_vocab, model.tgt_vocab)
    id_to_pos = {int(pid): i for i, pid in enumerate(enc.ids)}
    grads = _GradBuffer(model)

    valid_bleu = evaluate_bleu(model, valid)
    test_bleu = evaluate_bleu(model, test)
    best = snapshot(model, state, "finetuned")
    best_valid = valid_bleu
    best_test = test_bleu
    best_update = 0
    history = [(0, valid_bleu, test_bleu)]
    bad = 0
    next_eval = plan.eval_interval
    epochs: list[EpochRecord] = []
    selections: list[EpochSelection] = []
    stop = False

    for epoch in range(plan.n_epochs):
        ids, frac, digest = select_fn(epoch, model)
        selections.append(EpochSelection(epoch=epoch, selected_ids=tuple(ids),
                                         window_size_frac=float(frac),
                                         score_snapshot_digest=digest))
        try:
            positions = np.array([id_to_pos[int(i)] for i in ids], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"selected pair id {e.args[0]} is not in the "
                            f"fine-tuning corpus") from None
        for batch in _plan_subset_pass(enc, positions, state.batch_size, state.rng):
            _apply_batch(model, state, enc, batch, grads)
            done = state.update_count - start_updates
            if done >= next_eval:
                next_eval += plan.eval_interval
                valid_bleu = evaluate_bleu(model, valid)
                test_bleu = evaluate_bleu(model, test)
                history.append((done, valid_bleu, test_bleu))
                if valid_bleu > best_valid:
                    best_valid = valid_bleu
                    best_test = test_bleu
                    best_update = done
                    best = snapshot(model, state, "finetuned")
                    bad = 0
                else:
                    bad += 1
                    if bad >= plan.patience:
                        stop = True
                        break
        epochs.append(EpochRecord(epoch=epoch, selected_size=len(ids),
                                  valid_bleu=history[-1][1]))
        if stop:
            break

    report = RunReport(strategy=strategy, epochs=epochs,
                       total_updates=state.update_count - start_updates,
                       best_valid_bleu=best_valid, best_test_bleu=best_test,
                       best_update=best_update, wall_time=time.perf_counter() - t0,
                       eval_history=history)
    report.selections = selections
    return best, report


def _check_ranking_covers(ranking: Ranking, corpus: Corpus) -> None:
    if set(ranking.ids) != set(corpus.ids()):
        raise DataError(f"ranking does not cover corpus {corpus.name!r} "
                        f"({len(ranking)} ranked vs {len(corpus)} pairs)")


def _id_digest(ids) -> str:
    return digest_lines([str(i) for i in ids])


# ---------------------------------------------------------------------------
# Strategy runners
# ---------------------------------------------------------------------------


def run_warmup(model: TranslationModel, state: TrainerState, d_g: Corpus,
               k_updates: int) -> Checkpoint:
    """Stage 1: exactly K updates on the general corpus."""
    if k_updates < 1:
        raise UsageError(f"warm-up needs K >= 1 updates, got {k_updates}")
    train_updates(model, state, d_g, k_updates)
    return snapshot(model, state, "warmup")


def run_deterministic(model: TranslationModel, state: TrainerState, d_d: Corpus,
                      valid: Corpus, test: Corpus, ranking: Ranking,
                      plan: FinetunePlan) -> tuple[Checkpoint, RunReport]:
    """Algorithm: fix D_s = top fraction of an external ranking, then
    fine-tune on that same subset every epoch."""
    _check_ranking_covers(ranking, d_d)
    if frac_floor(plan.p, len(ranking)) == 0:
        raise UsageError(f"p={plan.p} selects zero of {len(ranking)} pairs")
    ids = top_fraction(ranking, plan.p)
    digest = ranking_digest(ranking)
    reset_meta(state, plan.lr, plan.seed)

    def select(epoch, current):
        return ids, plan.p, digest

    return _finetune_engine(model, state, d_d, valid, test, plan, select,
                            strategy=f"deterministic_{ranking.method}")


def _online_select_fn(enc: EncodedCorpus, window: WindowSpec, mean: str,
                      restrict_ids: list[int] | None = None):
    def select(epoch, current):
        values = prediction_values(enc, current, mean)
        records = [ScoreRecord(pair_id=int(pid), method="prediction", value=float(v))
                   for pid, v in zip(enc.ids, values)]
        ranking = rank(records)
        digest = ranking_digest(ranking)
        if window.kind == "static":
            ids = select_static_window(ranking, window.discard_easy, window.discard_hard)
            frac = len(ids) / len(ranking)
        else:
            frac = scheduler_eval(window.scheduler, epoch)
            ids = select_dynamic_window(ranking, frac, window.band)
        return ids, frac, digest

    return select


def run_online(model: TranslationModel, state: TrainerState, d_d: Corpus,
               valid: Corpus, test: Corpus,
               plan: FinetunePlan) -> tuple[Checkpoint, RunReport]:
    """Re-select D_s every epoch from the emerging model's prediction
    scores, frozen at epoch start."""
    if plan.window is None:
        raise UsageError("online fine-tuning needs a window spec")
    reset_meta(state, plan.lr, plan.seed)
    enc = encode_corpus(d_d, model.src_vocab, model.tgt_vocab)
    if plan.window.kind == "static":
        strategy = "online_static"
    else:
        strategy = ("online_expand" if plan.window.scheduler.mode == "expansion"
                    else "online_shrink")
    select = _online_select_fn(enc, plan.window, plan.prediction_mean)
    return _finetune_engine(model, state, d_d, valid, test, plan, select, strategy)


def run_hybrid(model: TranslationModel, state: TrainerState, d_d: Corpus,
               valid: Corpus, test: Corpus, rankings: dict[str, Ranking],
               plan: FinetunePlan) -> tuple[Checkpoint, RunReport]:
    """Online fine-tuning restricted to the intersection of the three
    external scorers' top halves, with a 10/10 static window."""
    for r in rankings.values():
        _check_ranking_covers(r, d_d)
    candidates = hybrid_candidates(rankings)
    window = WindowSpec(kind="static", discard_easy=HYBRID_DISCARD,
                        discard_hard=HYBRID_DISCARD)
    reset_meta(state, plan.lr, plan.seed)
    cand_set = set(candidates)
    cand_pairs = tuple(p for p in d_d if p.id in cand_set)
    cand_corpus = Corpus(cand_pairs, name=f"{d_d.name}/hybrid-candidates",
                         domain_tag=d_d.domain_tag)
    enc = encode_corpus(cand_corpus, model.src_vocab, model.tgt_vocab)
    select = _online_select_fn(enc, window, plan.prediction_mean)
    return _finetune_engine(model, state, d_d, valid, test, plan, select,
                            strategy="hybrid")


def run_traditional_ft(model: TranslationModel, state: TrainerState, d_d: Corpus,
                       valid: Corpus, test: Corpus,
                       plan: FinetunePlan) -> tuple[Checkpoint, RunReport]:
    """Baseline: fine-tune on 100% of D_d with the same early stopping."""
    reset_meta(state, plan.lr, plan.seed)
    all_ids = list(d_d.ids())
    digest = _id_digest(all_ids)

    def select(epoch, current):
        return all_ids, 1.0, digest

    return _finetune_engine(model, state, d_d, valid, test, plan, select,
                            strategy="traditional_ft")


def run_converged_baseline(model: TranslationModel, state: TrainerState, d_g: Corpus,
                           valid: Corpus, test: Corpus, patience: int = 5,
                           eval_interval: int = 200,
                           max_updates: int | None = None
                           ) -> tuple[Checkpoint, RunReport]:
    """Baseline: keep training on general data, no meta-parameter reset."""
    t0 = time.perf_counter()
    start_updates = state.update_count
    ckpt, history = train_until_converged(
        model, state, d_g, patience, lambda m: evaluate_bleu(m, valid),
        eval_interval=eval_interval, max_updates=max_updates, stage="converged")
    best_test = evaluate_bleu(ckpt.model, test)
    if history:
        best_valid = max(v for _, v in history)
        best_update = min(u for u, v in history if v == best_valid) - start_updates
    else:
        best_valid = evaluate_bleu(ckpt.model, valid)
        best_update = state.update_count - start_updates
    report = RunReport(strategy="converged_baseline", epochs=[],
                       total_updates=state.update_count - start_updates,
                       best_valid_bleu=best_valid, best_test_bleu=best_test,
                       best_update=best_update, wall_time=time.perf_counter() - t0,
                       eval_history=[(u - start_updates, v, float("nan"))
                                     for u, v in history])
    report.selections = []
    return ckpt, report


def run_no_warmup(src_vocab, tgt_vocab, d_d: Corpus, valid: Corpus, test: Corpus,
                  ranking: Ranking, p: float, total_updates: int, d: int = 64,
                  seed: int = 0, lr: float = 1e-3, batch_size: int = 32,
                  eval_interval: int = 200) -> tuple[Checkpoint, RunReport]:
    """Ablation: train a fresh model only on the ranking's top fraction,
    for a fixed total update budget (no warm-up stage)."""
    from .model import init_model, init_trainer

    _check_ranking_covers(ranking, d_d)
    if total_updates < 1:
        raise UsageError(f"total_updates must be >= 1, got {total_updates}")
    t0 = time.perf_counter()
    ids = set(top_fraction(ranking, p))
    subset = Corpus(tuple(pair for pair in d_d if pair.id in ids),
                    name=f"{d_d.name}/top-{p:g}", domain_tag=d_d.domain_tag)
    model = init_model(src_vocab, tgt_vocab, d=d, seed=seed)
    state = init_trainer(model, lr=lr, batch_size=batch_size, seed=seed)
    ckpt, history = train_until_converged(
        model, state, subset, patience=10 ** 9,
        eval_fn=lambda m: evaluate_bleu(m, valid),
        eval_interval=eval_interval, max_updates=total_updates, stage="finetuned")
    best_test = evaluate_bleu(ckpt.model, test)
    if history:
        best_valid = max(v for _, v in history)
        best_update = min(u for u, v in history if v == best_valid)
    else:
        best_valid = evaluate_bleu(ckpt.model, valid)
        best_update = state.update_count
    report = RunReport(strategy="no_warmup", epochs=[],
                       total_updates=state.update_count,
                       best_valid_bleu=best_valid, best_test_bleu=best_test,
                       best_update=best_update, wall_time=time.perf_counter() - t0,
                       eval_history=[(u, v, float("nan")) for u, v in history])
    report.selections = []
    return ckpt, report

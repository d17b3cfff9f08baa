"""Config-driven runs and the full strategy-comparison suite.

Each public run_*_config function is the working half of a CLI
subcommand: it takes an effective-config dict, loads whatever inputs
the config names, executes the run, and writes the outputs plus the
effective config snapshot into cfg["out_dir"].  run_experiment_suite
chains them: it prepares shared assets (corpora, warm-up checkpoint,
scorer models, rankings) once, fans out over the strategy list, and
emits one comparison table.  Re-running any emitted effective config
reproduces its numbers exactly.
"""

from __future__ import annotations

import copy
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (DEFAULT_CONFIG, _merge, derived_seeds, load_config,
                     write_effective_config)
from .corpus import (Corpus, SynthSpec, build_vocab, in_domain_subset, load_corpus_tsv,
                     load_mapping, save_corpus_tsv, save_mapping, synth_generate)
from .curriculum import (FinetunePlan, SchedulerSpec, WindowSpec, run_converged_baseline,
                         run_deterministic, run_hybrid, run_online, run_traditional_ft,
                         run_warmup, save_selection_log)
from .evaluation import (RunReport, corpus_bleu, decode_corpus, emit_report,
                         write_report_json)
from .exceptions import DataError, UsageError
from .lm import load_lm, save_lm, train_ngram
from .model import init_model, init_trainer, load_checkpoint, save_checkpoint
from .scorers import (Ranking, SentenceFileProvider, TokenTableProvider, load_ranking,
                      load_scores, load_sentence_file, load_token_table, rank,
                      save_ranking, save_scores, score_corpus_csls, score_corpus_dcce,
                      score_corpus_mml, score_corpus_prediction)

DETERMINISTIC_METHODS = ("laser_csls", "dcce", "mml")


# ---------------------------------------------------------------------------
# Synthetic aligned embeddings
# ---------------------------------------------------------------------------


def synthetic_aligned_embeddings(mapping: dict[str, str], tgt_tokens=(),
                                 dim: int = 32, seed: int = 11,
                                 jitter: float = 0.05) -> dict[str, np.ndarray]:
    """Build a token-embedding table where each source token and its
    cipher image share (almost) the same unit vector.

    This plays the role of pretrained cross-lingual embeddings for the
    synthetic corpora: aligned pairs mean-pool to nearby vectors, while
    mismatched pairs pool unrelated ones.  jitter perturbs the target
    copy so the two sides are correlated rather than identical.  Extra
    target tokens outside the mapping image get independent vectors.
    """
    if dim < 2:
        raise UsageError(f"embedding dim must be >= 2, got {dim}")
    if not mapping:
        raise DataError("empty token mapping")
    rng = np.random.Generator(np.random.PCG64(seed))
    table: dict[str, np.ndarray] = {}

    def unit(vec: np.ndarray) -> np.ndarray:
        return vec / np.linalg.norm(vec)

    for src_tok in sorted(mapping):
        base = unit(rng.standard_normal(dim))
        table[src_tok] = base
        table[mapping[src_tok]] = unit(base + jitter * rng.standard_normal(dim))
    for tok in sorted(tgt_tokens):
        if tok not in table:
            table[tok] = unit(rng.standard_normal(dim))
    return table


# ---------------------------------------------------------------------------
# Config plumbing helpers
# ---------------------------------------------------------------------------


def _load_corpus(path, what: str, domain_tag: str = "general") -> Corpus:
    if not path:
        raise UsageError(f"config is missing data.{what}")
    return load_corpus_tsv(path, name=what, domain_tag=domain_tag)


def _load_run_corpora(cfg: dict) -> tuple[Corpus, Corpus, Corpus, Corpus]:
    """(D_g, D_d, valid, test); D_d falls back to D_g (low-resource)."""
    data = cfg["data"]
    d_g = _load_corpus(data["general_tsv"], "general_tsv")
    d_d = (load_corpus_tsv(data["in_domain_tsv"], name="in_domain_tsv")
           if data["in_domain_tsv"] else d_g)
    valid = _load_corpus(data["valid_tsv"], "valid_tsv")
    test = _load_corpus(data["test_tsv"], "test_tsv")
    return d_g, d_d, valid, test


def _require(cfg_section: dict, section: str, keys: list[str]) -> None:
    missing = [f"{section}.{k}" for k in keys if not cfg_section[k]]
    if missing:
        raise UsageError("missing required config values: " + ", ".join(missing))


def _finetune_plan(cfg: dict, window: WindowSpec | None) -> FinetunePlan:
    tr = cfg["trainer"]
    ft = cfg["finetune"]
    return FinetunePlan(n_epochs=ft["n_epochs"], patience=tr["patience"],
                        eval_interval=tr["eval_interval"], lr=tr["finetune_lr"],
                        seed=derived_seeds(cfg["seed"])["finetune"], p=ft["p"],
                        window=window, prediction_mean=ft["prediction_mean"])


def _scheduler_from_config(sch: dict, mode: str) -> SchedulerSpec:
    # shrink schedules start at the configured ceiling by convention
    # (the published defaults run 0.4 down to 0.1)
    lambda_init = sch["lambda_init"] if mode == "expansion" else sch["lambda_max"]
    return SchedulerSpec(kind=sch["kind"], mode=mode, lambda_init=lambda_init,
                         lambda_max=sch["lambda_max"], lambda_min=sch["lambda_min"],
                         l_inc=sch["l_inc"], l_dec=sch["l_dec"], E_inc=sch["E_inc"],
                         E_dec=sch["E_dec"], S_inc=sch["S_inc"], S_dec=sch["S_dec"],
                         C1=sch["C1"], C2=sch["C2"])


def _window_from_config(cfg: dict, strategy: str) -> WindowSpec | None:
    w = cfg["finetune"]["window"]
    if strategy == "online_static":
        return WindowSpec(kind="static", discard_easy=w["discard_easy"],
                          discard_hard=w["discard_hard"])
    if strategy in ("online_expand", "online_shrink"):
        mode = "expansion" if strategy == "online_expand" else "shrink"
        return WindowSpec(kind="dynamic", band=tuple(w["band"]),
                          scheduler=_scheduler_from_config(w["scheduler"], mode),
                          anchor=w["anchor"])
    return None


# ---------------------------------------------------------------------------
# Subcommand cores
# ---------------------------------------------------------------------------


def run_synth_config(cfg: dict) -> Path:
    """Generate a synthetic corpus (and mapping) per cfg["synth"]."""
    s = cfg["synth"]
    _require(s, "synth", ["out_tsv"])
    noise = {k: s[k] for k in ("misaligned", "copied", "truncated") if s[k] > 0.0}
    spec = SynthSpec(n_pairs=s["n_pairs"], vocab_size_src=s["vocab_size_src"],
                     vocab_size_tgt=s["vocab_size_tgt"],
                     len_range=(s["len_min"], s["len_max"]), noise_fracs=noise,
                     in_domain_frac=s["in_domain_frac"], seed=s["seed"],
                     mapping_seed=s["mapping_seed"])
    corpus, mapping = synth_generate(spec)
    out = Path(s["out_tsv"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus_tsv(corpus, out)
    if s["mapping_out"]:
        save_mapping(mapping, s["mapping_out"])
    return out


def run_warmup_config(cfg: dict) -> Path:
    """Train the stage-1 base model and save its checkpoint."""
    seeds = derived_seeds(cfg["seed"])
    d_g, _, _, _ = _load_run_corpora(cfg)
    src_vocab = build_vocab(d_g, "src", min_count=cfg["data"]["min_count"])
    tgt_vocab = build_vocab(d_g, "tgt", min_count=cfg["data"]["min_count"])
    model = init_model(src_vocab, tgt_vocab, d=cfg["model"]["d"], seed=seeds["model"])
    state = init_trainer(model, lr=cfg["trainer"]["warmup_lr"],
                         batch_size=cfg["trainer"]["batch_size"], seed=seeds["warmup"])
    ckpt = run_warmup(model, state, d_g, cfg["warmup"]["k_updates"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = Path(cfg["warmup"]["checkpoint"] or out / "warmup.ckpt")
    save_checkpoint(ckpt, path)
    cfg = copy.deepcopy(cfg)
    cfg["warmup"]["checkpoint"] = str(path)
    write_effective_config(cfg, out)
    return path


def run_converged_config(cfg: dict) -> tuple[Path, RunReport]:
    """Continue warm-up training on D_g without a meta reset."""
    _require(cfg["warmup"], "warmup", ["checkpoint"])
    d_g, _, valid, test = _load_run_corpora(cfg)
    base = load_checkpoint(cfg["warmup"]["checkpoint"])
    model, state = base.model, base.state
    ckpt, report = run_converged_baseline(
        model, state, d_g, valid, test, patience=cfg["trainer"]["patience"],
        eval_interval=cfg["trainer"]["eval_interval"],
        max_updates=cfg["converged"]["max_updates"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "converged.ckpt"
    save_checkpoint(ckpt, path)
    write_report_json(report, out / "report.json")
    cfg = copy.deepcopy(cfg)
    cfg["strategy"] = "converged_baseline"
    write_effective_config(cfg, out)
    return path, report


def score_config(cfg: dict, method: str, corpus_path: str, out_path: str) -> Path:
    """Score a corpus with one method and dump the score TSV."""
    corpus = load_corpus_tsv(corpus_path, name="scoring-corpus")
    if method == "laser_csls":
        c = cfg["csls"]
        if c["embeddings"]:
            provider = load_token_table(c["embeddings"])
        elif c["src_sentence_vecs"] or c["tgt_sentence_vecs"]:
            _require(c, "csls", ["src_sentence_vecs", "tgt_sentence_vecs"])
            provider = SentenceFileProvider(load_sentence_file(c["src_sentence_vecs"]),
                                            load_sentence_file(c["tgt_sentence_vecs"]))
        elif c["mapping"]:
            mapping = load_mapping(c["mapping"])
            table = synthetic_aligned_embeddings(
                mapping, tgt_tokens=(), dim=c["dim"], seed=c["embed_seed"],
                jitter=c["jitter"])
            provider = TokenTableProvider(table)
        else:
            raise UsageError("csls scoring needs one of: csls.embeddings, "
                             "csls.src_sentence_vecs + csls.tgt_sentence_vecs, "
                             "or csls.mapping")
        records = score_corpus_csls(corpus, provider, k=cfg["csls"]["k"])
    elif method == "dcce":
        _require(cfg["dcce"], "dcce", ["fwd_checkpoint", "bwd_checkpoint"])
        fwd = load_checkpoint(cfg["dcce"]["fwd_checkpoint"]).model
        bwd = load_checkpoint(cfg["dcce"]["bwd_checkpoint"]).model
        records = score_corpus_dcce(corpus, fwd, bwd, normalize=cfg["dcce"]["normalize"])
    elif method == "mml":
        _require(cfg["mml"], "mml",
                 ["lm_src_in", "lm_src_gen", "lm_tgt_in", "lm_tgt_gen"])
        records = score_corpus_mml(
            corpus, load_lm(cfg["mml"]["lm_src_in"]), load_lm(cfg["mml"]["lm_src_gen"]),
            load_lm(cfg["mml"]["lm_tgt_in"]), load_lm(cfg["mml"]["lm_tgt_gen"]),
            normalize=cfg["mml"]["normalize"])
    elif method == "prediction":
        _require(cfg["warmup"], "warmup", ["checkpoint"])
        model = load_checkpoint(cfg["warmup"]["checkpoint"]).model
        records = score_corpus_prediction(corpus, model,
                                          mean=cfg["finetune"]["prediction_mean"])
    else:
        raise UsageError(f"unknown scoring method {method!r}")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scores(records, out)
    return out


def run_finetune_config(cfg: dict) -> tuple[Path, RunReport]:
    """Stage 2 for one strategy, from a warm-up checkpoint."""
    strategy = cfg["strategy"]
    _require(cfg["warmup"], "warmup", ["checkpoint"])
    _, d_d, valid, test = _load_run_corpora(cfg)
    base = load_checkpoint(cfg["warmup"]["checkpoint"])
    model, state = base.model, base.state
    window = _window_from_config(cfg, strategy)
    plan = _finetune_plan(cfg, window)

    if strategy == "deterministic":
        if not cfg["finetune"]["ranking"]:
            raise UsageError("deterministic fine-tuning needs finetune.ranking")
        ranking = load_ranking(cfg["finetune"]["ranking"])
        ckpt, report = run_deterministic(model, state, d_d, valid, test, ranking, plan)
    elif strategy in ("online_static", "online_expand", "online_shrink"):
        ckpt, report = run_online(model, state, d_d, valid, test, plan)
    elif strategy == "hybrid":
        paths = cfg["finetune"]["rankings"]
        missing = [f"finetune.rankings.{m}" for m in DETERMINISTIC_METHODS
                   if not paths.get(m)]
        if missing:
            raise UsageError("missing required config values: " + ", ".join(missing))
        rankings = {m: load_ranking(paths[m]) for m in DETERMINISTIC_METHODS}
        ckpt, report = run_hybrid(model, state, d_d, valid, test, rankings, plan)
    elif strategy == "traditional_ft":
        ckpt, report = run_traditional_ft(model, state, d_d, valid, test, plan)
    elif strategy == "converged_baseline":
        raise UsageError("use the train-converged command for the converged baseline")
    else:
        raise UsageError(f"unknown strategy {strategy!r}")

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "best.ckpt")
    write_report_json(report, out / "report.json")
    save_selection_log(report.selections, out / "selections.tsv",
                       dump_ids=cfg["finetune"]["dump_ids"])
    write_effective_config(cfg, out)
    return out / "best.ckpt", report


def evaluate_config(checkpoint_path: str, corpus_path: str,
                    smoothing: str = "add_one") -> float:
    model = load_checkpoint(checkpoint_path).model
    corpus = load_corpus_tsv(corpus_path, name="eval-corpus")
    hyps = decode_corpus(model, corpus)
    refs = [list(p.tgt) for p in corpus]
    return corpus_bleu(hyps, refs, smoothing).score


# ---------------------------------------------------------------------------
# The comparison suite
# ---------------------------------------------------------------------------


def _synth_suite_corpora(cfg: dict, out: Path):
    """Generate the general/valid/test corpora and mapping, write them
    into the suite directory, and point cfg["data"] at the files."""
    s = cfg["synth"]
    noise = {k: s[k] for k in ("misaligned", "copied", "truncated") if s[k] > 0.0}
    spec = SynthSpec(n_pairs=s["n_pairs"], vocab_size_src=s["vocab_size_src"],
                     vocab_size_tgt=s["vocab_size_tgt"],
                     len_range=(s["len_min"], s["len_max"]), noise_fracs=noise,
                     in_domain_frac=s["in_domain_frac"], seed=s["seed"],
                     mapping_seed=s["mapping_seed"])
    general, mapping = synth_generate(spec)
    # clean, fully in-domain held-out sets: the adaptation target
    held = replace(spec, noise_fracs={}, in_domain_frac=1.0)
    valid, _ = synth_generate(replace(held, n_pairs=s["n_valid"], seed=s["seed"] + 7001))
    test, _ = synth_generate(replace(held, n_pairs=s["n_test"], seed=s["seed"] + 7002))
    save_corpus_tsv(general, out / "general.tsv")
    save_corpus_tsv(valid, out / "valid.tsv")
    save_corpus_tsv(test, out / "test.tsv")
    save_mapping(mapping, out / "mapping.tsv")
    cfg["data"]["general_tsv"] = str(out / "general.tsv")
    cfg["data"]["valid_tsv"] = str(out / "valid.tsv")
    cfg["data"]["test_tsv"] = str(out / "test.tsv")
    cfg["csls"]["mapping"] = str(out / "mapping.tsv")


def _train_dcce_models(cfg: dict, d_g: Corpus, out: Path) -> None:
    """Train the forward and backward scoring models unless the config
    already points at checkpoints."""
    if cfg["dcce"]["fwd_checkpoint"] and cfg["dcce"]["bwd_checkpoint"]:
        return
    seeds = derived_seeds(cfg["seed"])
    src_vocab = build_vocab(d_g, "src", min_count=cfg["data"]["min_count"])
    tgt_vocab = build_vocab(d_g, "tgt", min_count=cfg["data"]["min_count"])
    swapped = Corpus(tuple(replace(p, src=p.tgt, tgt=p.src) for p in d_g),
                     name=f"{d_g.name}/swapped", domain_tag=d_g.domain_tag)
    for name, corpus, sv, tv, seed_shift in (
            ("fwd", d_g, src_vocab, tgt_vocab, 100),
            ("bwd", swapped, tgt_vocab, src_vocab, 200)):
        model = init_model(sv, tv, d=cfg["dcce"]["d"], seed=seeds["model"] + seed_shift)
        state = init_trainer(model, lr=cfg["trainer"]["warmup_lr"],
                             batch_size=cfg["trainer"]["batch_size"],
                             seed=seeds["warmup"] + seed_shift)
        ckpt = run_warmup(model, state, corpus, cfg["dcce"]["train_updates"])
        save_checkpoint(ckpt, out / f"dcce_{name}.ckpt")
        cfg["dcce"][f"{name}_checkpoint"] = str(out / f"dcce_{name}.ckpt")


def _train_mml_lms(cfg: dict, d_g: Corpus, out: Path) -> None:
    if all(cfg["mml"][k] for k in ("lm_src_in", "lm_src_gen", "lm_tgt_in", "lm_tgt_gen")):
        return
    src_vocab = build_vocab(d_g, "src", min_count=cfg["data"]["min_count"])
    tgt_vocab = build_vocab(d_g, "tgt", min_count=cfg["data"]["min_count"])
    d_in = in_domain_subset(d_g)
    order = cfg["mml"]["order"]
    disc = cfg["mml"]["discount"]
    for key, corpus, side, vocab in (
            ("lm_src_in", d_in, "src", src_vocab),
            ("lm_src_gen", d_g, "src", src_vocab),
            ("lm_tgt_in", d_in, "tgt", tgt_vocab),
            ("lm_tgt_gen", d_g, "tgt", tgt_vocab)):
        lm = train_ngram(corpus, side, order=order, vocab=vocab, discount=disc)
        save_lm(lm, out / f"{key}.nglm")
        cfg["mml"][key] = str(out / f"{key}.nglm")


def _suite_rankings(cfg: dict, out: Path) -> dict[str, Ranking]:
    d_d_path = cfg["data"]["in_domain_tsv"] or cfg["data"]["general_tsv"]
    rankings = {}
    for method in DETERMINISTIC_METHODS:
        scores_path = out / f"scores_{method}.tsv"
        rank_path = out / f"ranking_{method}.tsv"
        score_config(cfg, method, d_d_path, str(scores_path))
        ranking = rank(load_scores(scores_path))
        save_ranking(ranking, rank_path)
        rankings[method] = ranking
    return rankings


def run_experiment_suite(config, out_dir: str | None = None) -> list[RunReport]:
    """Run every configured strategy from one shared warm-up model and
    emit the row-per-strategy comparison."""
    if isinstance(config, dict):
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        _merge(cfg, config, "")
    else:
        cfg = load_config(config)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    if not cfg["data"]["general_tsv"]:
        _synth_suite_corpora(cfg, out)
    d_g, _, _, _ = _load_run_corpora(cfg)

    # shared assets: base model, scorer models, rankings
    warm_cfg = copy.deepcopy(cfg)
    warm_cfg["out_dir"] = str(out)
    warm_cfg["warmup"]["checkpoint"] = str(out / "warmup.ckpt")
    ckpt_path = run_warmup_config(warm_cfg)
    cfg["warmup"]["checkpoint"] = str(ckpt_path)
    _train_dcce_models(cfg, d_g, out)
    _train_mml_lms(cfg, d_g, out)
    _suite_rankings(cfg, out)

    reports: list[RunReport] = []
    for row in cfg["suite"]["strategies"]:
        run_cfg = copy.deepcopy(cfg)
        run_cfg["out_dir"] = str(out / row)
        try:
            if row == "converged_baseline":
                run_cfg["strategy"] = row
                _, report = run_converged_config(run_cfg)
            else:
                if row.startswith("deterministic_"):
                    method = row[len("deterministic_"):]
                    if method not in DETERMINISTIC_METHODS:
                        raise UsageError(f"unknown deterministic method {method!r}")
                    run_cfg["strategy"] = "deterministic"
                    run_cfg["finetune"]["method"] = method
                    run_cfg["finetune"]["ranking"] = str(out / f"ranking_{method}.tsv")
                elif row == "hybrid":
                    run_cfg["strategy"] = row
                    run_cfg["finetune"]["rankings"] = {
                        m: str(out / f"ranking_{m}.tsv") for m in DETERMINISTIC_METHODS}
                elif row in ("traditional_ft", "online_static", "online_expand",
                             "online_shrink"):
                    run_cfg["strategy"] = row
                else:
                    raise UsageError(f"unknown suite strategy {row!r}")
                _, report = run_finetune_config(run_cfg)
        except Exception as e:
            # name the failing strategy but keep the original error type
            # so exit codes stay truthful
            e.args = (f"suite strategy {row!r} failed: {e}",)
            raise
        reports.append(report)

    emit_report(reports, out, svg=cfg["suite"]["svg"])
    write_effective_config(cfg, out)
    return reports

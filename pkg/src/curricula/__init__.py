"""Curriculum-style data selection and two-stage training for small
neural translation models.

The pipeline: build or load a bitext (corpus), score every pair with
cross-lingual similarity, dual cross-entropy, or language-model domain
fit (scorers), rank the pairs, warm up a base model on everything
(model), then fine-tune on selected subsets with deterministic, online,
or hybrid curricula (curriculum).  Evaluation is corpus BLEU over
greedy decodes (evaluation); experiments.run_experiment_suite chains a
full strategy comparison from one config.
"""

from .corpus import (BitextPair, Corpus, SynthSpec, build_vocab, clean_dedup,
                     in_domain_subset, load_bitext, load_corpus_tsv, save_corpus_tsv,
                     split, synth_generate)
from .curriculum import (EpochSelection, FinetunePlan, SchedulerSpec, WindowSpec,
                         hybrid_candidates, run_converged_baseline, run_deterministic,
                         run_hybrid, run_no_warmup, run_online, run_traditional_ft,
                         run_warmup, scheduler_eval, select_dynamic_window,
                         select_static_window)
from .evaluation import (BleuResult, RunReport, corpus_bleu, evaluate_bleu,
                         overlap_fraction, overlap_matrix)
from .exceptions import CurriculaError, DataError, TrainingDiverged, UsageError
from .experiments import run_experiment_suite, synthetic_aligned_embeddings
from .lm import NGramLM, lm_negloglik, train_ngram
from .model import (Checkpoint, TranslationModel, init_model, init_trainer,
                    load_checkpoint, prediction_score, save_checkpoint, sentence_loss,
                    train_until_converged, train_updates, translate_greedy)
from .scorers import (Ranking, ScoreRecord, csls_score, dcce_score, rank,
                      score_corpus_csls, score_corpus_dcce, score_corpus_mml,
                      score_corpus_prediction, top_fraction)

__version__ = "0.1.0"

__all__ = [
    "BitextPair", "Corpus", "SynthSpec", "build_vocab", "clean_dedup",
    "in_domain_subset", "load_bitext", "load_corpus_tsv", "save_corpus_tsv",
    "split", "synth_generate",
    "EpochSelection", "FinetunePlan", "SchedulerSpec", "WindowSpec",
    "hybrid_candidates", "run_converged_baseline", "run_deterministic", "run_hybrid",
    "run_no_warmup", "run_online", "run_traditional_ft", "run_warmup",
    "scheduler_eval", "select_dynamic_window", "select_static_window",
    "BleuResult", "RunReport", "corpus_bleu", "evaluate_bleu", "overlap_fraction",
    "overlap_matrix",
    "CurriculaError", "DataError", "TrainingDiverged", "UsageError",
    "run_experiment_suite", "synthetic_aligned_embeddings",
    "NGramLM", "lm_negloglik", "train_ngram",
    "Checkpoint", "TranslationModel", "init_model", "init_trainer",
    "load_checkpoint", "prediction_score", "save_checkpoint", "sentence_loss",
    "train_until_converged", "train_updates", "translate_greedy",
    "Ranking", "ScoreRecord", "csls_score", "dcce_score", "rank",
    "score_corpus_csls", "score_corpus_dcce", "score_corpus_mml",
    "score_corpus_prediction", "top_fraction",
    "__version__",
]

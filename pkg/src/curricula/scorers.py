"""Bitext quality scorers and ranking.

Four scoring methods share one record format:

- laser_csls: margin-adjusted cosine between aligned sentence embeddings
  (higher is better).
- dcce: agreement of forward and backward translation cross-entropies
  (lower is better).
- mml: in-domain vs general language-model cross-entropy difference,
  summed over both sides (lower is better).
- prediction: the current translation model's own mean token probability
  (higher is better); this is the online curriculum's difficulty signal.

Corpus-level scoring is chunked across threads (capped by
CURRICULA_THREADS); every scorer is pure, so threaded results are
identical to sequential ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import BOS_ID, EOS_ID, BitextPair, Corpus
from .exceptions import DataError, UsageError
from .lm import NGramLM, lm_negloglik
from .model import EncodedCorpus, TranslationModel, encode_corpus
from .util import chunk_spans, frac_floor, thread_count, thread_map

METHODS = ("laser_csls", "dcce", "mml", "prediction")

HIGHER_IS_BETTER = "higher_is_better"
LOWER_IS_BETTER = "lower_is_better"

METHOD_DIRECTION = {
    "laser_csls": HIGHER_IS_BETTER,
    "prediction": HIGHER_IS_BETTER,
    "dcce": LOWER_IS_BETTER,
    "mml": LOWER_IS_BETTER,
}

DEFAULT_CSLS_K = 10

_BLOCK = 1024


@dataclass(frozen=True)
class ScoreRecord:
    pair_id: int
    method: str
    value: float


@dataclass(frozen=True)
class Ranking:
    """Pair ids ordered best-first with their score values."""

    method: str
    direction: str
    ids: tuple[int, ...]
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.ids)


def rank(records: list[ScoreRecord], direction: str | None = None) -> Ranking:
    """Order records best-first; ties break toward the smaller pair id."""
    if not records:
        raise DataError("cannot rank an empty score list")
    methods = {r.method for r in records}
    if len(methods) > 1:
        raise DataError(f"refusing to rank mixed methods: {sorted(methods)}")
    method = records[0].method
    if direction is None:
        if method not in METHOD_DIRECTION:
            raise UsageError(f"unknown method {method!r}; pass an explicit direction")
        direction = METHOD_DIRECTION[method]
    if direction not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
        raise UsageError(f"unknown direction {direction!r}")
    seen: set[int] = set()
    for r in records:
        if r.pair_id in seen:
            raise DataError(f"duplicate pair id {r.pair_id} in scores")
        seen.add(r.pair_id)
        if not np.isfinite(r.value):
            raise DataError(f"non-finite score for pair {r.pair_id}")
    sign = -1.0 if direction == HIGHER_IS_BETTER else 1.0
    ordered = sorted(records, key=lambda r: (sign * r.value, r.pair_id))
    return Ranking(method=method, direction=direction,
                   ids=tuple(r.pair_id for r in ordered),
                   values=tuple(r.value for r in ordered))


def top_fraction(ranking: Ranking, p: float) -> list[int]:
    """The best max(1, floor(p * N)) pair ids, in rank order."""
    if not 0.0 < p <= 1.0:
        raise UsageError(f"fraction p must be in (0, 1], got {p}")
    n = len(ranking)
    if n == 0:
        raise DataError("cannot take a fraction of an empty ranking")
    return list(ranking.ids[:max(1, frac_floor(p, n))])


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------


UNK_EMBEDDING_TOKEN = "<unk>"


def _check_vector(vec: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise DataError(f"{what}: non-finite embedding vector")
    if not np.any(vec):
        raise DataError(f"{what}: zero embedding vector")


class TokenTableProvider:
    """Token -> vector table; sentences embed as the L2-normalized mean.

    Unknown tokens use the table's "<unk>" vector when present and are
    otherwise dropped from the mean; a sentence with no known token and
    no unk vector cannot be embedded.
    """

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise DataError("empty embedding table")
        dims = {v.shape[0] for v in table.values()}
        if len(dims) != 1:
            raise DataError(f"inconsistent embedding dims: {sorted(dims)}")
        for tok, vec in table.items():
            _check_vector(vec, f"token {tok!r}")
        self.table = {t: v.astype(np.float64) for t, v in table.items()}
        self.dim = next(iter(dims))

    def embed(self, tokens) -> np.ndarray:
        vecs = []
        unk = self.table.get(UNK_EMBEDDING_TOKEN)
        for t in tokens:
            v = self.table.get(t, unk)
            if v is not None:
                vecs.append(v)
        if not vecs:
            raise DataError(
                "sentence has no embeddable token (all unknown, no <unk> vector): "
                f"{list(tokens)[:8]}")
        mean = np.mean(vecs, axis=0)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise DataError("sentence embedding collapsed to the zero vector")
        return mean / norm


class SentenceFileProvider:
    """Precomputed sentence vectors, line-aligned with a corpus."""

    def __init__(self, src_vectors: np.ndarray, tgt_vectors: np.ndarray):
        if src_vectors.shape != tgt_vectors.shape:
            raise DataError(
                f"source/target sentence embedding shapes differ: "
                f"{src_vectors.shape} vs {tgt_vectors.shape}")
        for i, row in enumerate(src_vectors):
            _check_vector(row, f"source line {i + 1}")
        for i, row in enumerate(tgt_vectors):
            _check_vector(row, f"target line {i + 1}")
        self.src_vectors = src_vectors.astype(np.float64)
        self.tgt_vectors = tgt_vectors.astype(np.float64)


def load_token_table(path: str | Path) -> TokenTableProvider:
    """Read a word2vec-style text table: "count dim" header, then one
    token and dim floats per line."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    with open(p, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise DataError(f"{p}: expected 'count dim' header")
        try:
            count, dim = int(head[0]), int(head[1])
        except ValueError:
            raise DataError(f"{p}: bad header {head!r}") from None
        table: dict[str, np.ndarray] = {}
        for i, line in enumerate(fh):
            cols = line.rstrip("\n").split(" ")
            if len(cols) != dim + 1:
                raise DataError(f"{p}: line {i + 2}: expected token + {dim} floats, "
                                f"got {len(cols)} columns")
            if cols[0] in table:
                raise DataError(f"{p}: duplicate token {cols[0]!r}")
            table[cols[0]] = np.array([float(x) for x in cols[1:]])
    if len(table) != count:
        raise DataError(f"{p}: header promises {count} vectors, found {len(table)}")
    return TokenTableProvider(table)


def save_token_table(table: dict[str, np.ndarray], path: str | Path) -> None:
    items = list(table.items())
    dim = items[0][1].shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(items)} {dim}\n")
        for tok, vec in items:
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_sentence_file(path: str | Path) -> np.ndarray:
    """Read line-aligned sentence vectors (whitespace-separated floats)."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    rows = []
    dim = None
    with open(p, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            vals = [float(x) for x in line.split()]
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise DataError(f"{p}: line {i + 1}: expected {dim} floats, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"empty sentence embedding file: {p}")
    return np.array(rows)


def sentence_embed(provider: TokenTableProvider, tokens) -> np.ndarray:
    return provider.embed(tokens)


# ---------------------------------------------------------------------------
# CSLS
# ---------------------------------------------------------------------------


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DataError("zero vector in embedding pool")
    return mat / norms


def _topk_means(sims: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries per row, summed in ascending order
    so a sort-based oracle reproduces the result bit-exactly."""
    n = sims.shape[1]
    part = np.partition(sims, n - k, axis=1)[:, n - k:]
    part.sort(axis=1)
    return part.mean(axis=1)


def csls_score(x: np.ndarray, y: np.ndarray, x_pool: np.ndarray, y_pool: np.ndarray,
               k: int = DEFAULT_CSLS_K) -> float:
    """Margin-adjusted cosine: 2*cos(x, y) minus the mean cosine of each
    vector to its k nearest neighbors in the opposite-language pool."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if k > x_pool.shape[0] or k > y_pool.shape[0]:
        raise UsageError(
            f"k={k} exceeds pool size ({x_pool.shape[0]} source / {y_pool.shape[0]} target)")
    xu = x / np.linalg.norm(x)
    yu = y / np.linalg.norm(y)
    xp = _unit_rows(x_pool)
    yp = _unit_rows(y_pool)
    r_y = _topk_means(np.dot(yp, xu)[None, :], k)[0]
    r_x = _topk_means(np.dot(xp, yu)[None, :], k)[0]
    return float(2.0 * np.dot(xu, yu) - r_y - r_x)


def _pair_vectors(corpus: Corpus, provider) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(provider, SentenceFileProvider):
        if provider.src_vectors.shape[0] != len(corpus):
            raise DataError(
                f"sentence embeddings cover {provider.src_vectors.shape[0]} lines but "
                f"corpus {corpus.name!r} has {len(corpus)} pairs")
        return provider.src_vectors, provider.tgt_vectors
    if isinstance(provider, TokenTableProvider):
        spans = chunk_spans(len(corpus), thread_count())

        def embed_span(span):
            lo, hi = span
            xs = np.empty((hi - lo, provider.dim))
            ys = np.empty((hi - lo, provider.dim))
            for i in range(lo, hi):
                xs[i - lo] = provider.embed(corpus[i].src)
                ys[i - lo] = provider.embed(corpus[i].tgt)
            return xs, ys

        parts = thread_map(embed_span, spans)
        return (np.concatenate([p[0] for p in parts]),
                np.concatenate([p[1] for p in parts]))
    raise UsageError(f"unsupported embedding provider {type(provider).__name__}")


def score_corpus_csls(corpus: Corpus, provider, k: int = DEFAULT_CSLS_K) -> list[ScoreRecord]:
    """CSLS for every pair, each side pooled against the whole corpus."""
    n = len(corpus)
    if n == 0:
        raise DataError("cannot score an empty corpus")
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if k > n:
        raise UsageError(f"k={k} exceeds pool size {n}")
    x, y = _pair_vectors(corpus, provider)
    xu = _unit_rows(x)
    yu = _unit_rows(y)
    diag = np.einsum("ij,ij->i", xu, yu)
    r_y = np.empty(n)
    r_x = np.empty(n)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        r_y[lo:hi] = _topk_means(np.dot(xu[lo:hi], yu.T), k)
        r_x[lo:hi] = _topk_means(np.dot(yu[lo:hi], xu.T), k)
    return [ScoreRecord(pair_id=corpus[i].id, method="laser_csls",
                        value=float(2.0 * diag[i] - r_y[i] - r_x[i]))
            for i in range(n)]


# ---------------------------------------------------------------------------
# DCCE
# ---------------------------------------------------------------------------


def dcce_score(h_f: float, h_b: float) -> float:
    """Disagreement plus average of the two directional cross-entropies."""
    return abs(h_f - h_b) + 0.5 * (h_f + h_b)


def _swap_corpus(corpus: Corpus) -> Corpus:
    pairs = tuple(BitextPair(id=p.id, src=p.tgt, tgt=p.src, oracle=p.oracle,
                             in_domain=p.in_domain) for p in corpus)
    return Corpus(pairs, name=f"{corpus.name}/swapped", domain_tag=corpus.domain_tag)


def corpus_pass_arrays(enc: EncodedCorpus,
                       model: TranslationModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pair (sum log-prob, sum token prob, scored length), fanned out
    over threads in corpus order."""
    args = model.params.as_args()
    spans = chunk_spans(enc.ids.shape[0], thread_count())

    def run_span(span):
        lo, hi = span
        fs = enc.flat_src[enc.off_src[lo]:enc.off_src[hi]]
        os_ = enc.off_src[lo:hi + 1] - enc.off_src[lo]
        ft = enc.flat_tgt[enc.off_tgt[lo]:enc.off_tgt[hi]]
        ot = enc.off_tgt[lo:hi + 1] - enc.off_tgt[lo]
        return kernels.corpus_pass(fs, os_, ft, ot, BOS_ID, EOS_ID, *args)

    parts = thread_map(run_span, spans)
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]))


def _model_nll_pass(corpus: Corpus, model: TranslationModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair (summed NLL, scored length) under a translation model."""
    enc = encode_corpus(corpus, model.src_vocab, model.tgt_vocab)
    lp_sums, _, lens = corpus_pass_arrays(enc, model)
    return -lp_sums, lens


def score_corpus_dcce(corpus: Corpus, fwd: TranslationModel, bwd: TranslationModel,
                      normalize: bool = True) -> list[ScoreRecord]:
    """Score every pair with forward and backward translation models.

    The models must be mutual inverses over the same vocabularies.
    Cross-entropies are per-token by default (normalize=False sums).
    """
    if (fwd.src_vocab.tokens != bwd.tgt_vocab.tokens
            or fwd.tgt_vocab.tokens != bwd.src_vocab.tokens):
        raise DataError("vocabulary mismatch: backward model must invert the forward model")
    if len(corpus) == 0:
        raise DataError("cannot score an empty corpus")
    h_f, len_f = _model_nll_pass(corpus, fwd)
    h_b, len_b = _model_nll_pass(_swap_corpus(corpus), bwd)
    if normalize:
        h_f = h_f / len_f
        h_b = h_b / len_b
    return [ScoreRecord(pair_id=corpus[i].id, method="dcce",
                        value=dcce_score(float(h_f[i]), float(h_b[i])))
            for i in range(len(corpus))]


def prediction_values(enc: EncodedCorpus, model: TranslationModel,
                      mean: str = "arithmetic") -> np.ndarray:
    """Mean token probability per pair, aligned with enc order."""
    if mean not in ("arithmetic", "geometric"):
        raise UsageError(f"unknown mean {mean!r} (expected arithmetic or geometric)")
    lp_sums, p_sums, lens = corpus_pass_arrays(enc, model)
    if mean == "arithmetic":
        return p_sums / lens
    return np.exp(lp_sums / lens)


def score_corpus_prediction(corpus: Corpus, model: TranslationModel,
                            mean: str = "arithmetic") -> list[ScoreRecord]:
    """The model's own mean token probability per pair (higher = easier)."""
    if len(corpus) == 0:
        raise DataError("cannot score an empty corpus")
    enc = encode_corpus(corpus, model.src_vocab, model.tgt_vocab)
    values = prediction_values(enc, model, mean)
    return [ScoreRecord(pair_id=corpus[i].id, method="prediction", value=float(values[i]))
            for i in range(len(corpus))]


# ---------------------------------------------------------------------------
# MML
# ---------------------------------------------------------------------------


def score_corpus_mml(corpus: Corpus, lm_src_in: NGramLM, lm_src_gen: NGramLM,
                     lm_tgt_in: NGramLM, lm_tgt_gen: NGramLM,
                     normalize: bool = True) -> list[ScoreRecord]:
    """In-domain minus general LM cross-entropy, summed over both sides."""
    expected = {
        "lm_src_in": (lm_src_in, "src", "in_domain"),
        "lm_src_gen": (lm_src_gen, "src", "general"),
        "lm_tgt_in": (lm_tgt_in, "tgt", "in_domain"),
        "lm_tgt_gen": (lm_tgt_gen, "tgt", "general"),
    }
    problems = []
    for name, (m, side, domain) in expected.items():
        if m.side_tag != side or m.domain_tag != domain:
            problems.append(f"{name} is tagged {m.side_tag}/{m.domain_tag}, "
                            f"expected {side}/{domain}")
    if problems:
        raise DataError("language model tags do not match their roles: " + "; ".join(problems))
    if len(corpus) == 0:
        raise DataError("cannot score an empty corpus")
    spans = chunk_spans(len(corpus), thread_count())

    def run_span(span):
        lo, hi = span
        out = np.empty(hi - lo)
        for i in range(lo, hi):
            p = corpus[i]
            out[i - lo] = (
                (lm_negloglik(lm_src_in, p.src, normalize)
                 - lm_negloglik(lm_src_gen, p.src, normalize))
                + (lm_negloglik(lm_tgt_in, p.tgt, normalize)
                   - lm_negloglik(lm_tgt_gen, p.tgt, normalize)))
        return out

    values = np.concatenate(thread_map(run_span, spans))
    return [ScoreRecord(pair_id=corpus[i].id, method="mml", value=float(values[i]))
            for i in range(len(corpus))]


# ---------------------------------------------------------------------------
# Score and ranking files
# ---------------------------------------------------------------------------


def save_scores(records: list[ScoreRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("pair_id\tmethod\tvalue\n")
        for r in records:
            fh.write(f"{r.pair_id}\t{r.method}\t{float(r.value)!r}\n")


def load_scores(path: str | Path) -> list[ScoreRecord]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    records = []
    with open(p, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "pair_id\tmethod\tvalue":
            raise DataError(f"{p}: not a score file (bad header {header!r})")
        for i, line in enumerate(fh):
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 3:
                raise DataError(f"{p}: line {i + 2}: expected 3 columns, got {len(cols)}")
            records.append(ScoreRecord(pair_id=int(cols[0]), method=cols[1],
                                       value=float(cols[2])))
    if not records:
        raise DataError(f"empty score file: {p}")
    return records


def save_ranking(ranking: Ranking, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"method\t{ranking.method}\tdirection\t{ranking.direction}\n")
        fh.write("position\tpair_id\tvalue\n")
        for pos, (pid, val) in enumerate(zip(ranking.ids, ranking.values)):
            fh.write(f"{pos}\t{pid}\t{float(val)!r}\n")


def load_ranking(path: str | Path) -> Ranking:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    with open(p, encoding="utf-8") as fh:
        meta = fh.readline().rstrip("\n").split("\t")
        if len(meta) != 4 or meta[0] != "method" or meta[2] != "direction":
            raise DataError(f"{p}: not a ranking file")
        header = fh.readline().rstrip("\n")
        if header != "position\tpair_id\tvalue":
            raise DataError(f"{p}: bad ranking column header {header!r}")
        ids = []
        values = []
        for i, line in enumerate(fh):
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 3:
                raise DataError(f"{p}: line {i + 3}: expected 3 columns, got {len(cols)}")
            if int(cols[0]) != i:
                raise DataError(f"{p}: line {i + 3}: positions out of order")
            ids.append(int(cols[1]))
            values.append(float(cols[2]))
    if not ids:
        raise DataError(f"empty ranking file: {p}")
    return Ranking(method=meta[1], direction=meta[3], ids=tuple(ids), values=tuple(values))

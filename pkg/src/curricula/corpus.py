"""Parallel-corpus handling: loading, cleaning, vocabulary, splits, synthesis.

A corpus is an immutable tuple of sentence pairs.  Pair ids are stable
handles: they equal the 0-based position after ingestion, are reassigned
only by clean_dedup, and are preserved by split and by the labeled TSV
round-trip, so score files and rankings can always be joined back onto
their corpus.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, UsageError
from .util import frac_floor

SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

NOISE_LABELS = ("clean", "misaligned", "copied", "truncated")
DOMAIN_TAGS = ("general", "in_domain")

MAX_RAW_LEN = 250


def tokenize(text: str, mode: str = "whitespace") -> tuple[str, ...]:
    """Split a raw line into tokens.

    whitespace: split on runs of whitespace.  char: one token per
    character, with whitespace runs collapsed to a single "▁" marker so
    word boundaries survive the round-trip through space-joined files.
    """
    if mode == "whitespace":
        return tuple(text.split())
    if mode == "char":
        out: list[str] = []
        for piece in text.split():
            if out:
                out.append("▁")
            out.extend(piece)
        return tuple(out)
    raise UsageError(f"unknown tokenize mode {mode!r} (expected whitespace or char)")


@dataclass(frozen=True)
class BitextPair:
    """One sentence pair; oracle carries a synthetic noise label when known."""

    id: int
    src: tuple[str, ...]
    tgt: tuple[str, ...]
    oracle: str | None = None
    in_domain: bool = False


@dataclass(frozen=True)
class Corpus:
    pairs: tuple[BitextPair, ...]
    name: str = "corpus"
    domain_tag: str = "general"
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.domain_tag not in DOMAIN_TAGS:
            raise DataError(f"unknown domain tag {self.domain_tag!r}")
        index = {}
        for p in self.pairs:
            if p.id in index:
                raise DataError(f"duplicate pair id {p.id} in corpus {self.name!r}")
            index[p.id] = p
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i: int) -> BitextPair:
        return self.pairs[i]

    def ids(self) -> list[int]:
        return [p.id for p in self.pairs]

    def pair_by_id(self, pair_id: int) -> BitextPair:
        try:
            return self._index[pair_id]
        except KeyError:
            raise DataError(f"pair id {pair_id} not in corpus {self.name!r}") from None


@dataclass(frozen=True)
class CleanSummary:
    kept: int
    dropped_by_length: int
    dropped_duplicates: int


def _read_lines(path: str | Path) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    with open(p, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def load_bitext(src_path: str | Path | None = None,
                tgt_path: str | Path | None = None,
                tsv_path: str | Path | None = None,
                name: str | None = None,
                tokenize_mode: str = "whitespace") -> Corpus:
    """Load a parallel corpus from two line-aligned files or a 2-column TSV.

    Ids are assigned by position.  Empty or overlong pairs are kept here
    and removed by clean_dedup.
    """
    if tsv_path is not None:
        if src_path is not None or tgt_path is not None:
            raise UsageError("pass either tsv_path or src_path+tgt_path, not both")
        lines = _read_lines(tsv_path)
        if not lines:
            raise DataError(f"empty corpus file: {tsv_path}")
        pairs = []
        for i, line in enumerate(lines):
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(
                    f"{tsv_path}: line {i + 1}: expected 2 tab-separated columns, got {len(cols)}")
            pairs.append(BitextPair(id=i,
                                    src=tokenize(cols[0], tokenize_mode),
                                    tgt=tokenize(cols[1], tokenize_mode)))
        return Corpus(tuple(pairs), name=name or str(tsv_path))
    if src_path is None or tgt_path is None:
        raise UsageError("pass tsv_path, or both src_path and tgt_path")
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise DataError(
            f"line count mismatch: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)} lines")
    if not src_lines:
        raise DataError(f"empty corpus files: {src_path}, {tgt_path}")
    pairs = [BitextPair(id=i,
                        src=tokenize(s, tokenize_mode),
                        tgt=tokenize(t, tokenize_mode))
             for i, (s, t) in enumerate(zip(src_lines, tgt_lines))]
    return Corpus(tuple(pairs), name=name or str(src_path))


def clean_dedup(corpus: Corpus, max_len: int = MAX_RAW_LEN) -> tuple[Corpus, CleanSummary]:
    """Drop empty/overlong pairs and exact duplicate pairs (keep first).

    Ids are reassigned to 0..M-1 in surviving order.  Idempotent.
    """
    if max_len < 1:
        raise UsageError(f"max_len must be >= 1, got {max_len}")
    seen: set[tuple[tuple[str, ...], tuple[str, ...]]] = set()
    kept: list[BitextPair] = []
    dropped_len = 0
    dropped_dup = 0
    for p in corpus:
        if not p.src or not p.tgt or len(p.src) > max_len or len(p.tgt) > max_len:
            dropped_len += 1
            continue
        key = (p.src, p.tgt)
        if key in seen:
            dropped_dup += 1
            continue
        seen.add(key)
        kept.append(BitextPair(id=len(kept), src=p.src, tgt=p.tgt,
                               oracle=p.oracle, in_domain=p.in_domain))
    summary = CleanSummary(kept=len(kept), dropped_by_length=dropped_len,
                           dropped_duplicates=dropped_dup)
    return Corpus(tuple(kept), name=corpus.name, domain_tag=corpus.domain_tag), summary


@dataclass(frozen=True)
class Vocab:
    """Token <-> id bijection with reserved specials in the lowest id range."""

    tokens: tuple[str, ...]
    side: str
    min_count: int
    _to_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_to_id", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._to_id.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]


def build_vocab(corpus: Corpus, side: str, min_count: int = 1) -> Vocab:
    """Frequency vocabulary: specials first, then tokens by descending
    count with lexicographic tie-break.  Rarer tokens map to <unk>.
    """
    if side not in ("src", "tgt"):
        raise UsageError(f"side must be src or tgt, got {side!r}")
    if len(corpus) == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise UsageError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for p in corpus:
        counts.update(getattr(p, side))
    items = [(t, c) for t, c in counts.items() if c >= min_count and t not in SPECIALS]
    items.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocab(tokens=SPECIALS + tuple(t for t, _ in items), side=side, min_count=min_count)


def split(corpus: Corpus, fracs: dict[str, float], seed: int) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded disjoint train/valid/test partition covering the corpus.

    Valid and test get floor(frac * N) pairs; the remainder goes to
    train.  Pair ids are preserved; each split keeps original order.
    """
    expected = {"train", "valid", "test"}
    if set(fracs) != expected:
        raise UsageError(f"fracs must have keys {sorted(expected)}, got {sorted(fracs)}")
    if any(f <= 0 for f in fracs.values()):
        raise UsageError(f"all split fractions must be positive, got {fracs}")
    if abs(sum(fracs.values()) - 1.0) > 1e-9:
        raise UsageError(f"split fractions must sum to 1, got {sum(fracs.values())}")
    n = len(corpus)
    if n == 0:
        raise DataError("cannot split an empty corpus")
    n_valid = frac_floor(fracs["valid"], n)
    n_test = frac_floor(fracs["test"], n)
    n_train = n - n_valid - n_test
    if n_train < 1 or n_valid < 1 or n_test < 1:
        raise DataError(
            f"corpus of {n} pairs too small for fractions {fracs} (a split would be empty)")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    picks = {
        "train": sorted(perm[:n_train].tolist()),
        "valid": sorted(perm[n_train:n_train + n_valid].tolist()),
        "test": sorted(perm[n_train + n_valid:].tolist()),
    }
    out = []
    for part in ("train", "valid", "test"):
        pairs = tuple(corpus[i] for i in picks[part])
        out.append(Corpus(pairs, name=f"{corpus.name}/{part}", domain_tag=corpus.domain_tag))
    return out[0], out[1], out[2]


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic cipher corpus with oracle noise labels.

    Clean pairs map each source token through a seeded bijective token
    mapping.  Noise shares replace the target: misaligned pairs get the
    image of an independently drawn source, copied pairs repeat the
    source tokens verbatim, truncated pairs lose the last ceil(len/2)
    target tokens.  in_domain_frac of pairs draw source tokens from the
    first half of the source vocabulary and are flagged in_domain.
    """

    n_pairs: int
    vocab_size_src: int = 100
    vocab_size_tgt: int = 100
    len_range: tuple[int, int] = (3, 12)
    noise_fracs: dict[str, float] = field(default_factory=dict)
    in_domain_frac: float = 0.0
    seed: int = 0
    mapping_seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise UsageError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.vocab_size_src < 2:
            raise UsageError(f"vocab_size_src must be >= 2, got {self.vocab_size_src}")
        if self.vocab_size_tgt < self.vocab_size_src:
            raise UsageError(
                "vocab_size_tgt must be >= vocab_size_src for a bijective token mapping "
                f"({self.vocab_size_tgt} < {self.vocab_size_src})")
        lo, hi = self.len_range
        if lo < 1 or hi < lo:
            raise UsageError(f"len_range must satisfy 1 <= lo <= hi, got {self.len_range}")
        for label, frac in self.noise_fracs.items():
            if label not in NOISE_LABELS[1:]:
                raise UsageError(f"unknown noise label {label!r}")
            if not 0.0 <= frac <= 1.0:
                raise UsageError(f"noise fraction for {label!r} out of [0,1]: {frac}")
        if sum(self.noise_fracs.values()) > 1.0 + 1e-9:
            raise UsageError(f"noise fractions sum past 1: {self.noise_fracs}")
        if self.noise_fracs.get("truncated", 0.0) > 0.0 and lo < 2:
            raise UsageError(
                "truncated noise needs len_range[0] >= 2 so a truncated target keeps a token")
        if not 0.0 <= self.in_domain_frac <= 1.0:
            raise UsageError(f"in_domain_frac out of [0,1]: {self.in_domain_frac}")


def synth_generate(spec: SynthSpec) -> tuple[Corpus, dict[str, str]]:
    """Generate a labeled synthetic corpus and its token mapping."""
    width = max(5, len(str(max(spec.vocab_size_src, spec.vocab_size_tgt) - 1)))
    src_tokens = [f"s{i:0{width}d}" for i in range(spec.vocab_size_src)]
    tgt_tokens = [f"t{i:0{width}d}" for i in range(spec.vocab_size_tgt)]
    map_rng = np.random.Generator(np.random.PCG64(spec.mapping_seed))
    image = map_rng.permutation(spec.vocab_size_tgt)
    mapping = {src_tokens[i]: tgt_tokens[image[i]] for i in range(spec.vocab_size_src)}

    n = spec.n_pairs
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    labels = ["clean"] * n
    noise_perm = rng.permutation(n)
    pos = 0
    for label in ("misaligned", "copied", "truncated"):
        count = int(round(spec.noise_fracs.get(label, 0.0) * n))
        for i in noise_perm[pos:pos + count]:
            labels[i] = label
        pos += count
    in_domain = [False] * n
    for i in rng.permutation(n)[:int(round(spec.in_domain_frac * n))]:
        in_domain[i] = True

    lo, hi = spec.len_range
    half = spec.vocab_size_src // 2

    def draw_source(domain_limited: bool) -> list[int]:
        bound = half if domain_limited else spec.vocab_size_src
        length = int(rng.integers(lo, hi + 1))
        return rng.integers(0, bound, size=length).tolist()

    pairs = []
    for i in range(n):
        src_ids = draw_source(in_domain[i])
        src = tuple(src_tokens[j] for j in src_ids)
        label = labels[i]
        if label == "misaligned":
            tgt = tuple(mapping[src_tokens[j]] for j in draw_source(in_domain[i]))
        elif label == "copied":
            tgt = src
        elif label == "truncated":
            keep = len(src) - math.ceil(len(src) / 2)
            tgt = tuple(mapping[t] for t in src[:keep])
        else:
            tgt = tuple(mapping[t] for t in src)
        pairs.append(BitextPair(id=i, src=src, tgt=tgt, oracle=label,
                                in_domain=in_domain[i]))
    return Corpus(tuple(pairs), name=f"synth-{spec.seed}"), mapping


def in_domain_subset(corpus: Corpus) -> Corpus:
    """The in-domain pairs of a general corpus, ids preserved."""
    pairs = tuple(p for p in corpus if p.in_domain)
    if not pairs:
        raise DataError(f"corpus {corpus.name!r} has no in-domain pairs")
    return Corpus(pairs, name=f"{corpus.name}/in_domain", domain_tag="in_domain")


def save_mapping(mapping: dict[str, str], path: str | Path) -> None:
    """Persist a cipher token mapping as a 2-column TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        for src_tok, tgt_tok in mapping.items():
            fh.write(f"{src_tok}\t{tgt_tok}\n")


def load_mapping(path: str | Path) -> dict[str, str]:
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"empty mapping file: {path}")
    mapping: dict[str, str] = {}
    for i, line in enumerate(lines):
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"{path}: line {i + 1}: expected 2 columns, got {len(cols)}")
        if cols[0] in mapping:
            raise DataError(f"{path}: line {i + 1}: duplicate source token {cols[0]!r}")
        mapping[cols[0]] = cols[1]
    return mapping


# ---------------------------------------------------------------------------
# Labeled TSV round-trip (id, src, tgt, oracle_label, domain)
# ---------------------------------------------------------------------------


def save_corpus_tsv(corpus: Corpus, path: str | Path) -> None:
    """Write the labeled 5-column TSV (id, src, tgt, oracle, domain);
    "-" marks an absent oracle label."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus:
            domain = DOMAIN_TAGS[1] if p.in_domain else DOMAIN_TAGS[0]
            fh.write(f"{p.id}\t{' '.join(p.src)}\t{' '.join(p.tgt)}\t"
                     f"{p.oracle or '-'}\t{domain}\n")


def load_corpus_tsv(path: str | Path, name: str | None = None,
                    domain_tag: str = "general") -> Corpus:
    """Read a labeled 5-column TSV, keeping the stored pair ids."""
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"empty corpus file: {path}")
    pairs = []
    for i, line in enumerate(lines):
        cols = line.split("\t")
        if len(cols) != 5:
            raise DataError(
                f"{path}: line {i + 1}: expected 5 tab-separated columns, got {len(cols)}")
        try:
            pair_id = int(cols[0])
        except ValueError:
            raise DataError(f"{path}: line {i + 1}: bad pair id {cols[0]!r}") from None
        oracle = None if cols[3] == "-" else cols[3]
        if oracle is not None and oracle not in NOISE_LABELS:
            raise DataError(f"{path}: line {i + 1}: unknown oracle label {oracle!r}")
        if cols[4] not in DOMAIN_TAGS:
            raise DataError(f"{path}: line {i + 1}: unknown domain tag {cols[4]!r}")
        pairs.append(BitextPair(id=pair_id, src=tuple(cols[1].split()),
                                tgt=tuple(cols[2].split()), oracle=oracle,
                                in_domain=cols[4] == DOMAIN_TAGS[1]))
    return Corpus(tuple(pairs), name=name or str(path), domain_tag=domain_tag)

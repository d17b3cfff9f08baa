"""Interpolated Kneser-Ney n-gram language models over token sequences.

Raw counts at the top order, continuation counts below, a fixed discount
at every level, and a final uniform floor over the predictable event
space (all vocabulary entries except the padding and begin markers, plus
the unknown and end markers).  Every conditional is therefore strictly
positive and sums to one for any context, seen or unseen.  The end
marker is scored; begin markers pad contexts only.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Corpus, Vocab, build_vocab
from .exceptions import DataError, UsageError

MAGIC = b"NGLM"
VERSION = 1

MAX_ORDER = 5


def _sanitize(ids: np.ndarray) -> list[int]:
    # pad/bos are context markers, never events; a query token whose
    # surface collides with them scores as unknown.
    return [UNK_ID if i in (PAD_ID, BOS_ID) else int(i) for i in ids]


@dataclass
class NGramLM:
    order: int
    discount: float
    side_tag: str
    domain_tag: str
    vocab: Vocab
    # grams[k] maps a k-token id tuple to its count (raw at k=order,
    # continuation counts below); ctx[k] aggregates per-context totals
    # and distinct-follower counts and is derived from grams[k].
    grams: dict[int, dict[tuple, int]] = field(default_factory=dict)
    ctx: dict[int, dict[tuple, tuple[int, int]]] = field(default_factory=dict)

    @property
    def event_space(self) -> int:
        return self.vocab.size - 2

    def _rebuild_ctx(self) -> None:
        self.ctx = {}
        for k, table in self.grams.items():
            agg: dict[tuple, list[int]] = {}
            for gram, count in table.items():
                ent = agg.setdefault(gram[:-1], [0, 0])
                ent[0] += count
                ent[1] += 1
            self.ctx[k] = {c: (t, d) for c, (t, d) in agg.items()}

    def _p(self, k: int, ctx: tuple, w: int) -> float:
        if k == 0:
            return 1.0 / self.event_space
        total, distinct = self.ctx[k].get(ctx, (0, 0))
        if total == 0:
            return self._p(k - 1, ctx[1:], w)
        count = self.grams[k].get(ctx + (w,), 0)
        head = max(count - self.discount, 0.0) / total
        backoff = self.discount * distinct / total
        return head + backoff * self._p(k - 1, ctx[1:], w)

    def conditional(self, w_id: int, ctx_ids: tuple) -> float:
        """P(w | context); the context keeps only its last order-1 ids."""
        ctx = tuple(ctx_ids)[-(self.order - 1):] if self.order > 1 else ()
        return self._p(self.order, ctx, int(w_id))

    def event_ids(self) -> list[int]:
        return [i for i in range(self.vocab.size) if i not in (PAD_ID, BOS_ID)]


def train_ngram(corpus: Corpus, side: str, order: int = 3,
                vocab: Vocab | None = None, discount: float = 0.75) -> NGramLM:
    """Count one side of a corpus into an interpolated Kneser-Ney model.

    The model's side/domain tags record what it was trained on so
    downstream consumers can verify they received the right four models.
    """
    if side not in ("src", "tgt"):
        raise UsageError(f"side must be src or tgt, got {side!r}")
    if not 1 <= order <= MAX_ORDER:
        raise UsageError(f"order must be in 1..{MAX_ORDER}, got {order}")
    if not 0.0 < discount < 1.0:
        raise UsageError(f"discount must be in (0,1), got {discount}")
    if len(corpus) == 0:
        raise DataError("cannot train a language model on an empty corpus")
    if vocab is None:
        vocab = build_vocab(corpus, side)

    top: dict[tuple, int] = {}
    pad = (BOS_ID,) * (order - 1)
    for pair in corpus:
        ids = _sanitize(vocab.encode(getattr(pair, side)))
        stream = ids + [EOS_ID]
        ctx = pad
        for w in stream:
            gram = ctx + (w,)
            top[gram] = top.get(gram, 0) + 1
            if order > 1:
                ctx = gram[1:]

    lm = NGramLM(order=order, discount=discount, side_tag=side,
                 domain_tag=corpus.domain_tag, vocab=vocab)
    lm.grams[order] = top
    for k in range(order, 1, -1):
        lower: dict[tuple, int] = {}
        for gram in lm.grams[k]:
            suffix = gram[1:]
            lower[suffix] = lower.get(suffix, 0) + 1
        lm.grams[k - 1] = lower
    lm._rebuild_ctx()
    return lm


def lm_negloglik(lm: NGramLM, tokens, normalize: bool = True) -> float:
    """Negative log-likelihood (natural log) of one token sequence.

    Scores every token plus the end marker; per-token average unless
    normalize=False, which returns the plain sum.
    """
    ids = _sanitize(lm.vocab.encode(tokens))
    stream = ids + [EOS_ID]
    ctx = (BOS_ID,) * (lm.order - 1)
    nll = 0.0
    for w in stream:
        p = lm._p(lm.order, ctx, w)
        nll -= float(np.log(p))
        if lm.order > 1:
            ctx = (ctx + (w,))[1:]
    if normalize:
        nll /= len(stream)
    return nll


# ---------------------------------------------------------------------------
# Versioned binary serialization
# ---------------------------------------------------------------------------


def _write_table(fh, k: int, table: dict[tuple, int]) -> None:
    n = len(table)
    keys = np.empty((n, k), dtype=np.int64)
    vals = np.empty(n, dtype=np.int64)
    for i, (gram, count) in enumerate(table.items()):
        keys[i] = gram
        vals[i] = count
    fh.write(struct.pack("<II", k, n))
    fh.write(keys.tobytes())
    fh.write(vals.tobytes())


def _read_table(fh) -> tuple[int, dict[tuple, int]]:
    k, n = struct.unpack("<II", fh.read(8))
    keys = np.frombuffer(fh.read(8 * n * k), dtype=np.int64).reshape(n, k)
    vals = np.frombuffer(fh.read(8 * n), dtype=np.int64)
    table = {tuple(int(x) for x in keys[i]): int(vals[i]) for i in range(n)}
    return k, table


def save_lm(lm: NGramLM, path: str | Path) -> None:
    header = {
        "order": lm.order,
        "discount": lm.discount,
        "side_tag": lm.side_tag,
        "domain_tag": lm.domain_tag,
        "vocab_tokens": list(lm.vocab.tokens),
        "vocab_side": lm.vocab.side,
        "vocab_min_count": lm.vocab.min_count,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(lm.grams)))
        for k in sorted(lm.grams, reverse=True):
            _write_table(fh, k, lm.grams[k])


def load_lm(path: str | Path) -> NGramLM:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    with open(p, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{p}: not a language model file (bad magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise DataError(f"{p}: unsupported language model version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        vocab = Vocab(tokens=tuple(header["vocab_tokens"]), side=header["vocab_side"],
                      min_count=header["vocab_min_count"])
        lm = NGramLM(order=header["order"], discount=header["discount"],
                     side_tag=header["side_tag"], domain_tag=header["domain_tag"],
                     vocab=vocab)
        (n_tables,) = struct.unpack("<I", fh.read(4))
        for _ in range(n_tables):
            k, table = _read_table(fh)
            lm.grams[k] = table
    lm._rebuild_ctx()
    return lm

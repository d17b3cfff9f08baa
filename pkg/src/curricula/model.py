"""Toy recurrent translation model with exact analytic gradients.

Single-layer gated recurrent encoder and decoder sharing one width d,
dot-product attention through a learned projection, and an output
projection over the target vocabulary.  The loss is the summed per-token
negative log-likelihood under teacher forcing; gradients are exact (the
test suite checks them against central finite differences).  All heavy
lifting happens in kernels.py; this module owns parameter layout,
batching, the adaptive-moment optimizer, and checkpoint serialization.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import BOS_ID, EOS_ID, Corpus, Vocab
from .exceptions import DataError, TrainingDiverged, UsageError

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1

STAGES = ("warmup", "converged", "finetuned")

INIT_SCALE = 0.08
MAX_DECODE_LEN = 250

# Canonical parameter order; kernels take these arrays positionally.
_GATE_NAMES = ("wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")


def _param_shapes(d: int, v_src: int, v_tgt: int) -> list[tuple[str, tuple[int, ...]]]:
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("emb_src", (v_src, d)),
        ("emb_tgt", (v_tgt, d)),
    ]
    for side in ("enc", "dec"):
        for gate in _GATE_NAMES:
            shape = (d,) if gate.startswith("b") else (d, d)
            shapes.append((f"{side}_{gate}", shape))
    shapes.append(("attn", (d, d)))
    shapes.append(("out_w", (2 * d, v_tgt)))
    shapes.append(("out_b", (v_tgt,)))
    return shapes


class Params:
    """Named views over one flat float64 vector."""

    def __init__(self, d: int, v_src: int, v_tgt: int, flat: np.ndarray | None = None):
        self.d = d
        self.v_src = v_src
        self.v_tgt = v_tgt
        shapes = _param_shapes(d, v_src, v_tgt)
        total = sum(int(np.prod(s)) for _, s in shapes)
        if flat is None:
            flat = np.zeros(total)
        if flat.shape != (total,):
            raise DataError(f"parameter vector has {flat.shape[0]} entries, expected {total}")
        self.flat = flat
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self.views[name] = flat[offset:offset + size].reshape(shape)
            offset += size

    def as_args(self) -> tuple[np.ndarray, ...]:
        return tuple(self.views[name] for name, _ in _param_shapes(self.d, self.v_src, self.v_tgt))

    def copy(self) -> "Params":
        return Params(self.d, self.v_src, self.v_tgt, self.flat.copy())


@dataclass
class TranslationModel:
    src_vocab: Vocab
    tgt_vocab: Vocab
    d: int
    seed: int
    params: Params

    def copy(self) -> "TranslationModel":
        return TranslationModel(self.src_vocab, self.tgt_vocab, self.d, self.seed,
                                self.params.copy())


def init_model(src_vocab: Vocab, tgt_vocab: Vocab, d: int = 64, seed: int = 0) -> TranslationModel:
    """Fresh model, every parameter drawn uniform(-0.08, 0.08) from the seed."""
    if d < 1:
        raise UsageError(f"model width must be >= 1, got {d}")
    params = Params(d, src_vocab.size, tgt_vocab.size)
    rng = np.random.Generator(np.random.PCG64(seed))
    params.flat[:] = rng.uniform(-INIT_SCALE, INIT_SCALE, params.flat.shape[0])
    return TranslationModel(src_vocab, tgt_vocab, d, seed, params)


# ---------------------------------------------------------------------------
# Corpus encoding for the kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedCorpus:
    """Token ids packed flat; pair i spans off[i]:off[i+1]."""

    ids: np.ndarray
    flat_src: np.ndarray
    off_src: np.ndarray
    flat_tgt: np.ndarray
    off_tgt: np.ndarray
    tgt_lens: np.ndarray


def encode_corpus(corpus: Corpus, src_vocab: Vocab, tgt_vocab: Vocab) -> EncodedCorpus:
    n = len(corpus)
    if n == 0:
        raise DataError("cannot encode an empty corpus")
    off_src = np.zeros(n + 1, dtype=np.int64)
    off_tgt = np.zeros(n + 1, dtype=np.int64)
    ids = np.empty(n, dtype=np.int64)
    for i, p in enumerate(corpus):
        if not p.src or not p.tgt:
            raise DataError(f"pair {p.id} has an empty side; run clean_dedup first")
        ids[i] = p.id
        off_src[i + 1] = off_src[i] + len(p.src)
        off_tgt[i + 1] = off_tgt[i] + len(p.tgt)
    flat_src = np.empty(off_src[-1], dtype=np.int64)
    flat_tgt = np.empty(off_tgt[-1], dtype=np.int64)
    for i, p in enumerate(corpus):
        flat_src[off_src[i]:off_src[i + 1]] = src_vocab.encode(p.src)
        flat_tgt[off_tgt[i]:off_tgt[i + 1]] = tgt_vocab.encode(p.tgt)
    tgt_lens = (off_tgt[1:] - off_tgt[:-1]).astype(np.int64)
    return EncodedCorpus(ids=ids, flat_src=flat_src, off_src=off_src,
                         flat_tgt=flat_tgt, off_tgt=off_tgt, tgt_lens=tgt_lens)


# ---------------------------------------------------------------------------
# Per-pair inference
# ---------------------------------------------------------------------------


def _encode_pair(model: TranslationModel, src_tokens, tgt_tokens):
    if not len(src_tokens) or not len(tgt_tokens):
        raise DataError("cannot score a pair with an empty side")
    return model.src_vocab.encode(src_tokens), model.tgt_vocab.encode(tgt_tokens)


def forward_logprobs(model: TranslationModel, src_tokens, tgt_tokens) -> np.ndarray:
    """Teacher-forced token log-probabilities, len(tgt) + 1 entries
    (the final entry scores the end marker)."""
    src, tgt = _encode_pair(model, src_tokens, tgt_tokens)
    return kernels.pair_logprobs(src, tgt, BOS_ID, EOS_ID, *model.params.as_args())


def sentence_loss(model: TranslationModel, src_tokens, tgt_tokens) -> float:
    """Summed negative log-likelihood of the pair."""
    return float(-forward_logprobs(model, src_tokens, tgt_tokens).sum())


def prediction_score(model: TranslationModel, src_tokens, tgt_tokens,
                     mean: str = "arithmetic") -> float:
    """Mean token probability of the target given the source.

    Arithmetic mean by default; mean="geometric" gives the
    length-normalized joint probability instead.  Higher is easier.
    """
    lp = forward_logprobs(model, src_tokens, tgt_tokens)
    if mean == "arithmetic":
        return float(np.exp(lp).mean())
    if mean == "geometric":
        return float(np.exp(lp.mean()))
    raise UsageError(f"unknown mean {mean!r} (expected arithmetic or geometric)")


def translate_greedy(model: TranslationModel, src_tokens, max_len: int | None = None) -> list[str]:
    """Greedy argmax decode; ties pick the lowest token id."""
    if not len(src_tokens):
        raise DataError("cannot translate an empty source")
    if max_len is None:
        max_len = min(2 * len(src_tokens) + 5, MAX_DECODE_LEN)
    src = model.src_vocab.encode(src_tokens)
    out = kernels.greedy_decode(src, BOS_ID, EOS_ID, max_len, *model.params.as_args())
    return model.tgt_vocab.decode(out)


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


@dataclass
class TrainerState:
    """Adaptive-moment optimizer state plus the batching stream.

    update_count accumulates across stages; adam_t and the moment
    vectors reset when a stage change resets meta-parameters.
    """

    lr: float
    beta1: float
    beta2: float
    eps: float
    batch_size: int
    seed: int
    update_count: int
    adam_t: int
    m: np.ndarray
    v: np.ndarray
    rng: np.random.Generator

    def copy(self) -> "TrainerState":
        fresh = TrainerState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                             batch_size=self.batch_size, seed=self.seed,
                             update_count=self.update_count, adam_t=self.adam_t,
                             m=self.m.copy(), v=self.v.copy(),
                             rng=np.random.Generator(np.random.PCG64()))
        fresh.rng.bit_generator.state = self.rng.bit_generator.state
        return fresh


def init_trainer(model: TranslationModel, lr: float = 1e-3, batch_size: int = 32,
                 seed: int = 0, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> TrainerState:
    if lr < 0:
        raise UsageError(f"learning rate must be >= 0, got {lr}")
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    n = model.params.flat.shape[0]
    return TrainerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, batch_size=batch_size,
                        seed=seed, update_count=0, adam_t=0,
                        m=np.zeros(n), v=np.zeros(n),
                        rng=np.random.Generator(np.random.PCG64(seed)))


def reset_meta(state: TrainerState, lr: float, seed: int) -> None:
    """Stage-change reset: new learning rate, zeroed moments, fresh
    batching stream.  The cumulative update count is kept."""
    state.lr = lr
    state.seed = seed
    state.adam_t = 0
    state.m[:] = 0.0
    state.v[:] = 0.0
    state.rng = np.random.Generator(np.random.PCG64(seed))


def _plan_pass(enc: EncodedCorpus, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of batches: pairs grouped by similar target length,
    order seeded-shuffled within and across batches."""
    n = enc.ids.shape[0]
    order = rng.permutation(n)
    grouped = order[np.argsort(enc.tgt_lens[order], kind="stable")]
    batches = [grouped[i:i + batch_size] for i in range(0, n, batch_size)]
    return [batches[j] for j in rng.permutation(len(batches))]


class _GradBuffer:
    def __init__(self, model: TranslationModel):
        self.params = Params(model.d, model.src_vocab.size, model.tgt_vocab.size)

    def zero(self) -> None:
        self.params.flat[:] = 0.0


def _apply_batch(model: TranslationModel, state: TrainerState, enc: EncodedCorpus,
                 idx: np.ndarray, grads: _GradBuffer) -> float:
    grads.zero()
    total = kernels.batch_loss_grads(
        enc.flat_src, enc.off_src, enc.flat_tgt, enc.off_tgt, idx, BOS_ID, EOS_ID,
        *model.params.as_args(), *grads.params.as_args())
    if not np.isfinite(total):
        raise TrainingDiverged(state.update_count + 1)
    b = idx.shape[0]
    grads.params.flat /= b
    state.adam_t += 1
    kernels.adam_step(model.params.flat, grads.params.flat, state.m, state.v,
                      state.adam_t, state.lr, state.beta1, state.beta2, state.eps)
    state.update_count += 1
    return float(total) / b


def train_updates(model: TranslationModel, state: TrainerState,
                  data: Corpus | EncodedCorpus, k_updates: int) -> list[float]:
    """Run exactly k_updates optimizer steps, cycling seeded-shuffled
    passes over the data.  Returns the per-batch mean losses."""
    if k_updates < 0:
        raise UsageError(f"k_updates must be >= 0, got {k_updates}")
    enc = data if isinstance(data, EncodedCorpus) else encode_corpus(
        data, model.src_vocab, model.tgt_vocab)
    grads = _GradBuffer(model)
    losses: list[float] = []
    batches: list[np.ndarray] = []
    while len(losses) < k_updates:
        if not batches:
            batches = _plan_pass(enc, state.batch_size, state.rng)
        idx = batches.pop(0)
        losses.append(_apply_batch(model, state, enc, idx, grads))
    return losses


@dataclass
class Checkpoint:
    model: TranslationModel
    state: TrainerState
    stage: str

    def __post_init__(self):
        if self.stage not in STAGES:
            raise UsageError(f"stage must be one of {STAGES}, got {self.stage!r}")


def snapshot(model: TranslationModel, state: TrainerState, stage: str) -> Checkpoint:
    return Checkpoint(model=model.copy(), state=state.copy(), stage=stage)


def train_until_converged(model: TranslationModel, state: TrainerState,
                          data: Corpus | EncodedCorpus, patience: int,
                          eval_fn, eval_interval: int = 200,
                          max_updates: int | None = None,
                          stage: str = "converged") -> tuple[Checkpoint, list[tuple[int, float]]]:
    """Train until the evaluation metric stops improving.

    eval_fn(model) runs every eval_interval updates; training stops when
    it fails to improve patience consecutive times (strict >) or when
    max_updates steps have been taken.  Returns the best checkpoint and
    the (update_count, value) evaluation history.
    """
    if patience < 1:
        raise UsageError(f"patience must be >= 1, got {patience}")
    if eval_interval < 1:
        raise UsageError(f"eval_interval must be >= 1, got {eval_interval}")
    enc = data if isinstance(data, EncodedCorpus) else encode_corpus(
        data, model.src_vocab, model.tgt_vocab)
    grads = _GradBuffer(model)
    history: list[tuple[int, float]] = []
    best: Checkpoint | None = None
    best_value = -np.inf
    bad = 0
    steps = 0
    batches: list[np.ndarray] = []
    while max_updates is None or steps < max_updates:
        if not batches:
            batches = _plan_pass(enc, state.batch_size, state.rng)
        _apply_batch(model, state, enc, batches.pop(0), grads)
        steps += 1
        if steps % eval_interval == 0:
            value = float(eval_fn(model))
            history.append((state.update_count, value))
            if value > best_value:
                best_value = value
                best = snapshot(model, state, stage)
                bad = 0
            else:
                bad += 1
            if bad >= patience:
                break
    if best is None:
        # budget shorter than one evaluation interval: keep the end state
        best = snapshot(model, state, stage)
    return best, history


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    m = ckpt.model
    s = ckpt.state
    header = {
        "stage": ckpt.stage,
        "d": m.d,
        "seed": m.seed,
        "src_vocab": {"tokens": list(m.src_vocab.tokens), "side": m.src_vocab.side,
                      "min_count": m.src_vocab.min_count},
        "tgt_vocab": {"tokens": list(m.tgt_vocab.tokens), "side": m.tgt_vocab.side,
                      "min_count": m.tgt_vocab.min_count},
        "trainer": {"lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps,
                    "batch_size": s.batch_size, "seed": s.seed,
                    "update_count": s.update_count, "adam_t": s.adam_t,
                    "rng_state": s.rng.bit_generator.state},
        "n_params": int(m.params.flat.shape[0]),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<H", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(m.params.flat.tobytes())
        fh.write(s.m.tobytes())
        fh.write(s.v.tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    with open(p, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise DataError(f"{p}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != CKPT_VERSION:
            raise DataError(f"{p}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n = header["n_params"]
        flat = np.frombuffer(fh.read(8 * n)).copy()
        mom_m = np.frombuffer(fh.read(8 * n)).copy()
        mom_v = np.frombuffer(fh.read(8 * n)).copy()
    src_vocab = Vocab(tokens=tuple(header["src_vocab"]["tokens"]),
                      side=header["src_vocab"]["side"],
                      min_count=header["src_vocab"]["min_count"])
    tgt_vocab = Vocab(tokens=tuple(header["tgt_vocab"]["tokens"]),
                      side=header["tgt_vocab"]["side"],
                      min_count=header["tgt_vocab"]["min_count"])
    params = Params(header["d"], src_vocab.size, tgt_vocab.size, flat)
    model = TranslationModel(src_vocab, tgt_vocab, header["d"], header["seed"], params)
    t = header["trainer"]
    state = TrainerState(lr=t["lr"], beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
                         batch_size=t["batch_size"], seed=t["seed"],
                         update_count=t["update_count"], adam_t=t["adam_t"],
                         m=mom_m, v=mom_v,
                         rng=np.random.Generator(np.random.PCG64()))
    state.rng.bit_generator.state = t["rng_state"]
    return Checkpoint(model=model, state=state, stage=header["stage"])

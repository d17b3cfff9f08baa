"""Recurrent translation model: gradients, training loop, checkpoints.

The gradient test is the load-bearing oracle: analytic gradients from
the backward kernel are compared against central finite differences of
the forward loss, touching several entries of every parameter array.
"""

import numpy as np
import pytest

from curricula import kernels
from curricula.corpus import (BOS_ID, EOS_ID, SynthSpec, build_vocab,
                              synth_generate)
from curricula.exceptions import DataError, TrainingDiverged, UsageError
from curricula.model import (Params, _GradBuffer, encode_corpus,
                             forward_logprobs, init_model, init_trainer,
                             load_checkpoint, prediction_score, reset_meta,
                             save_checkpoint, sentence_loss, snapshot,
                             train_until_converged, train_updates,
                             translate_greedy)

FD_STEP = 1e-4
FD_TOL = 1e-4


@pytest.fixture(scope="module")
def tiny():
    spec = SynthSpec(n_pairs=40, vocab_size_src=12, vocab_size_tgt=12,
                     len_range=(3, 6), seed=3, mapping_seed=4)
    corpus, _ = synth_generate(spec)
    src_vocab = build_vocab(corpus, "src")
    tgt_vocab = build_vocab(corpus, "tgt")
    model = init_model(src_vocab, tgt_vocab, d=5, seed=2)
    return corpus, src_vocab, tgt_vocab, model


# ---------------------------------------------------------------------------
# Gradient oracle
# ---------------------------------------------------------------------------


def test_analytic_gradients_match_finite_differences(tiny):
    corpus, src_vocab, tgt_vocab, model = tiny
    model = model.copy()
    pair = corpus[0]
    src = src_vocab.encode(pair.src)
    tgt = tgt_vocab.encode(pair.tgt)

    grads = _GradBuffer(model)
    grads.zero()
    loss = kernels.pair_loss_grads(src, tgt, BOS_ID, EOS_ID,
                                   *model.params.as_args(),
                                   *grads.params.as_args())
    assert loss == pytest.approx(sentence_loss(model, pair.src, pair.tgt), abs=1e-10)

    # a handful of coordinates from every named parameter array, > 100 total
    rng = np.random.default_rng(17)
    flat = model.params.flat
    g = grads.params.flat
    checked = 0
    offset = 0
    for name, view in model.params.views.items():
        size = view.size
        picks = rng.choice(size, size=min(5, size), replace=False)
        for j in picks:
            i = offset + int(j)
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = sentence_loss(model, pair.src, pair.tgt)
            flat[i] = orig - FD_STEP
            down = sentence_loss(model, pair.src, pair.tgt)
            flat[i] = orig
            fd = (up - down) / (2 * FD_STEP)
            rel = abs(fd - g[i]) / max(abs(fd) + abs(g[i]), 1e-6)
            assert rel <= FD_TOL, f"{name}[{j}]: analytic {g[i]} vs numeric {fd}"
            checked += 1
        offset += size
    assert checked >= 100


def test_batch_gradients_sum_pair_gradients(tiny):
    corpus, src_vocab, tgt_vocab, model = tiny
    enc = encode_corpus(corpus, src_vocab, tgt_vocab)
    idx = np.array([0, 3, 7], dtype=np.int64)

    batch = _GradBuffer(model)
    batch.zero()
    total = kernels.batch_loss_grads(enc.flat_src, enc.off_src, enc.flat_tgt,
                                     enc.off_tgt, idx, BOS_ID, EOS_ID,
                                     *model.params.as_args(),
                                     *batch.params.as_args())
    acc = _GradBuffer(model)
    acc.zero()
    loss_sum = 0.0
    for i in idx:
        pair = corpus[int(i)]
        loss_sum += kernels.pair_loss_grads(src_vocab.encode(pair.src),
                                            tgt_vocab.encode(pair.tgt),
                                            BOS_ID, EOS_ID,
                                            *model.params.as_args(),
                                            *acc.params.as_args())
    assert total == pytest.approx(loss_sum, rel=1e-12)
    np.testing.assert_allclose(batch.params.flat, acc.params.flat, rtol=1e-12)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def test_logprobs_score_target_plus_end_marker(tiny):
    corpus, _, _, model = tiny
    pair = corpus[1]
    lp = forward_logprobs(model, pair.src, pair.tgt)
    assert lp.shape == (len(pair.tgt) + 1,)
    assert np.all(lp < 0.0)
    assert sentence_loss(model, pair.src, pair.tgt) == pytest.approx(-lp.sum())


def test_prediction_score_means(tiny):
    corpus, _, _, model = tiny
    pair = corpus[2]
    lp = forward_logprobs(model, pair.src, pair.tgt)
    arith = prediction_score(model, pair.src, pair.tgt)
    geo = prediction_score(model, pair.src, pair.tgt, mean="geometric")
    assert arith == pytest.approx(float(np.exp(lp).mean()))
    assert geo == pytest.approx(float(np.exp(lp.mean())))
    assert 0.0 < geo <= arith < 1.0  # means inequality
    with pytest.raises(UsageError):
        prediction_score(model, pair.src, pair.tgt, mean="harmonic")


def test_scoring_rejects_empty_sides(tiny):
    _, _, _, model = tiny
    with pytest.raises(DataError):
        sentence_loss(model, (), ("t00004",))
    with pytest.raises(DataError):
        translate_greedy(model, ())


def test_greedy_decode_is_deterministic_and_bounded(tiny):
    corpus, _, _, model = tiny
    pair = corpus[3]
    first = translate_greedy(model, pair.src)
    second = translate_greedy(model, pair.src)
    assert first == second
    assert len(first) <= 2 * len(pair.src) + 5
    capped = translate_greedy(model, pair.src, max_len=2)
    assert len(capped) <= 2


def test_greedy_ties_pick_lowest_id(tiny):
    # zero parameters make every logit identical at every step, so the
    # argmax must repeatedly choose token id 0
    _, src_vocab, tgt_vocab, _ = tiny
    model = init_model(src_vocab, tgt_vocab, d=5, seed=0)
    model.params.flat[:] = 0.0
    out = translate_greedy(model, ("s00001",), max_len=4)
    assert out == [tgt_vocab.tokens[0]] * 4


# ---------------------------------------------------------------------------
# Initialization and encoding
# ---------------------------------------------------------------------------


def test_init_is_seeded_uniform(tiny):
    _, src_vocab, tgt_vocab, _ = tiny
    a = init_model(src_vocab, tgt_vocab, d=7, seed=5)
    b = init_model(src_vocab, tgt_vocab, d=7, seed=5)
    c = init_model(src_vocab, tgt_vocab, d=7, seed=6)
    assert np.array_equal(a.params.flat, b.params.flat)
    assert not np.array_equal(a.params.flat, c.params.flat)
    assert np.abs(a.params.flat).max() <= 0.08
    with pytest.raises(UsageError):
        init_model(src_vocab, tgt_vocab, d=0)


def test_params_layout_round_trip(tiny):
    _, src_vocab, tgt_vocab, model = tiny
    views = model.params.views
    assert views["emb_src"].shape == (src_vocab.size, 5)
    assert views["out_w"].shape == (10, tgt_vocab.size)
    # views alias the flat vector
    views["out_b"][0] = 123.0
    assert model.params.flat[-tgt_vocab.size] == 123.0
    views["out_b"][0] = 0.0
    with pytest.raises(DataError):
        Params(5, src_vocab.size, tgt_vocab.size, np.zeros(3))


def test_encode_corpus_offsets(tiny):
    corpus, src_vocab, tgt_vocab, _ = tiny
    enc = encode_corpus(corpus, src_vocab, tgt_vocab)
    assert enc.ids.tolist() == corpus.ids()
    for i, p in enumerate(corpus):
        assert enc.off_src[i + 1] - enc.off_src[i] == len(p.src)
        assert enc.tgt_lens[i] == len(p.tgt)
        got = enc.flat_src[enc.off_src[i]:enc.off_src[i + 1]]
        assert got.tolist() == src_vocab.encode(p.src).tolist()


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def test_training_is_deterministic(tiny):
    corpus, _, _, model = tiny
    runs = []
    for _ in range(2):
        m = model.copy()
        state = init_trainer(m, lr=1e-3, batch_size=8, seed=9)
        runs.append((train_updates(m, state, corpus, 10), m.params.flat.copy()))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1], runs[1][1])


def test_training_reduces_loss(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, lr=5e-3, batch_size=8, seed=9)
    losses = train_updates(m, state, corpus, 60)
    assert np.mean(losses[-10:]) < np.mean(losses[:10])
    assert state.update_count == 60


def test_train_updates_validates_and_zero_is_noop(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, seed=1)
    before = m.params.flat.copy()
    assert train_updates(m, state, corpus, 0) == []
    assert np.array_equal(m.params.flat, before)
    with pytest.raises(UsageError):
        train_updates(m, state, corpus, -1)


def test_reset_meta_keeps_progress_zeroes_moments(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, lr=1e-3, batch_size=8, seed=9)
    train_updates(m, state, corpus, 5)
    theta = m.params.flat.copy()
    assert state.adam_t == 5 and np.abs(state.m).max() > 0
    reset_meta(state, lr=5e-4, seed=77)
    assert state.update_count == 5  # cumulative budget is kept
    assert state.adam_t == 0
    assert np.all(state.m == 0.0) and np.all(state.v == 0.0)
    assert state.lr == 5e-4 and state.seed == 77
    assert np.array_equal(m.params.flat, theta)


def test_divergence_raises_with_update_index(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, seed=1)
    train_updates(m, state, corpus, 3)
    m.params.views["out_b"][0] = np.nan  # poisons every softmax
    with pytest.raises(TrainingDiverged) as exc:
        train_updates(m, state, corpus, 1)
    assert exc.value.update_index == 4
    assert "update 4" in str(exc.value)


# ---------------------------------------------------------------------------
# Convergence driver
# ---------------------------------------------------------------------------


def test_convergence_stops_after_patience(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, batch_size=8, seed=4)
    values = iter([1.0, 2.0, 2.0, 2.0, 2.0])
    best, history = train_until_converged(m, state, corpus, patience=3,
                                          eval_fn=lambda _: next(values),
                                          eval_interval=1)
    assert [v for _, v in history] == [1.0, 2.0, 2.0, 2.0, 2.0]
    assert state.update_count == 5
    assert best.state.update_count == 2  # snapshot from the best evaluation
    assert best.stage == "converged"


def test_convergence_respects_exact_budget(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, batch_size=8, seed=4)
    best, history = train_until_converged(m, state, corpus, patience=5,
                                          eval_fn=lambda _: 0.0,
                                          eval_interval=100, max_updates=7)
    assert state.update_count == 7
    assert history == []
    assert best.state.update_count == 7  # end state when nothing was evaluated
    with pytest.raises(UsageError):
        train_until_converged(m, state, corpus, patience=0, eval_fn=lambda _: 0.0)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_resumes_identically(tiny, tmp_path):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, lr=1e-3, batch_size=8, seed=9)
    train_updates(m, state, corpus, 6)
    ckpt = snapshot(m, state, "warmup")
    save_checkpoint(ckpt, tmp_path / "model.ckpt")
    loaded = load_checkpoint(tmp_path / "model.ckpt")

    assert loaded.stage == "warmup"
    assert loaded.model.src_vocab.tokens == m.src_vocab.tokens
    assert np.array_equal(loaded.model.params.flat, m.params.flat)
    assert loaded.state.update_count == 6

    # the loaded trainer must continue exactly like the live one
    live = train_updates(m, state, corpus, 5)
    resumed = train_updates(loaded.model, loaded.state, corpus, 5)
    assert live == resumed
    assert np.array_equal(m.params.flat, loaded.model.params.flat)


def test_snapshot_is_independent_of_later_training(tiny):
    corpus, _, _, model = tiny
    m = model.copy()
    state = init_trainer(m, batch_size=8, seed=2)
    ckpt = snapshot(m, state, "warmup")
    frozen = ckpt.model.params.flat.copy()
    train_updates(m, state, corpus, 4)
    assert np.array_equal(ckpt.model.params.flat, frozen)
    assert ckpt.state.update_count == 0


def test_checkpoint_rejects_foreign_files(tiny, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError):
        load_checkpoint(bad)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.ckpt")
    with pytest.raises(UsageError):
        snapshot(tiny[3], init_trainer(tiny[3]), "bogus_stage")

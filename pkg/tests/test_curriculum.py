"""Schedulers, selection windows, and the fine-tuning engine.

Scheduler assertions freeze the exact decimal sequences the schedule
definitions produce (values are rounded to 12 decimals before clamping,
so 0.1 + 2*0.05 really is 0.2).  Window tests compare against loop-based
oracles and the centered-placement property.
"""

import numpy as np
import pytest

from curricula.corpus import SynthSpec, build_vocab, split, synth_generate
from curricula.curriculum import (FinetunePlan, SchedulerSpec, WindowSpec,
                                  _finetune_engine, hybrid_candidates,
                                  load_selection_log, ranking_digest,
                                  run_converged_baseline, run_deterministic,
                                  run_hybrid, run_no_warmup, run_online,
                                  run_traditional_ft, run_warmup,
                                  save_selection_log, scheduler_eval,
                                  select_dynamic_window, select_static_window)
from curricula.exceptions import DataError, UsageError
from curricula.model import init_model, init_trainer
from curricula.scorers import ScoreRecord, rank
from curricula.util import frac_floor


def prediction_ranking(values, ids=None):
    ids = list(range(len(values))) if ids is None else ids
    records = [ScoreRecord(pair_id=i, method="prediction", value=float(v))
               for i, v in zip(ids, values)]
    return rank(records)


# ---------------------------------------------------------------------------
# Scheduler sequences
# ---------------------------------------------------------------------------


def test_linear_expansion_sequence():
    spec = SchedulerSpec(kind="linear", mode="expansion")
    got = [scheduler_eval(spec, t) for t in range(8)]
    assert got == [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.40]


def test_linear_shrink_sequence():
    spec = SchedulerSpec(kind="linear", mode="shrink",
                         lambda_init=0.40, lambda_min=0.10)
    got = [scheduler_eval(spec, t) for t in range(8)]
    assert got == [0.40, 0.35, 0.30, 0.25, 0.20, 0.15, 0.10, 0.10]


def test_exponential_expansion_sequence():
    spec = SchedulerSpec(kind="exponential", mode="expansion")
    assert scheduler_eval(spec, 0) == 0.10
    assert scheduler_eval(spec, 1) == 0.15
    assert scheduler_eval(spec, 2) == 0.225
    assert scheduler_eval(spec, 3) == 0.3375
    assert scheduler_eval(spec, 4) == 0.40  # 0.50625 clamped


def test_exponential_shrink_sequence():
    spec = SchedulerSpec(kind="exponential", mode="shrink",
                         lambda_init=0.40, lambda_min=0.10)
    assert scheduler_eval(spec, 0) == 0.40
    assert scheduler_eval(spec, 1) == 0.266666666667  # 0.4/1.5 to 12 decimals
    assert scheduler_eval(spec, 2) == 0.177777777778
    assert scheduler_eval(spec, 8) == 0.10  # decayed past the floor


def test_sqrt_expansion_hits_bound_at_horizon():
    spec = SchedulerSpec(kind="sqrt", mode="expansion")
    assert scheduler_eval(spec, 0) == 0.10
    assert scheduler_eval(spec, 3) == 0.291547594742  # sqrt(0.01 + 0.025*3)
    assert scheduler_eval(spec, 6) == 0.40
    assert scheduler_eval(spec, 9) == 0.40


def test_sqrt_shrink_negative_radicand_floors():
    spec = SchedulerSpec(kind="sqrt", mode="shrink",
                         lambda_init=0.40, lambda_min=0.10)
    assert scheduler_eval(spec, 0) == 0.40
    assert scheduler_eval(spec, 6) == 0.10  # sqrt(0.01) at the horizon
    assert scheduler_eval(spec, 7) == 0.10  # radicand < 0 falls to the floor


def test_sqrt_custom_squared_targets():
    spec = SchedulerSpec(kind="sqrt", mode="expansion", lambda_max=0.9, C1=0.09)
    assert scheduler_eval(spec, 6) == 0.30  # C1 overrides the squared bound


def test_schedules_are_monotone():
    for kind in ("linear", "exponential", "sqrt"):
        up = SchedulerSpec(kind=kind, mode="expansion")
        down = SchedulerSpec(kind=kind, mode="shrink",
                             lambda_init=0.40, lambda_min=0.10)
        ups = [scheduler_eval(up, t) for t in range(20)]
        downs = [scheduler_eval(down, t) for t in range(20)]
        assert ups == sorted(ups), kind
        assert downs == sorted(downs, reverse=True), kind
        assert max(ups) <= up.lambda_max and min(downs) >= down.lambda_min


def test_scheduler_validation():
    with pytest.raises(UsageError):
        SchedulerSpec(kind="cubic")
    with pytest.raises(UsageError):
        SchedulerSpec(mode="oscillate")
    with pytest.raises(UsageError):
        SchedulerSpec(lambda_init=0.0)
    with pytest.raises(UsageError):
        SchedulerSpec(lambda_init=0.5, lambda_max=0.4)  # expansion must grow
    with pytest.raises(UsageError):
        SchedulerSpec(mode="shrink", lambda_init=0.05, lambda_min=0.1)
    with pytest.raises(UsageError):
        SchedulerSpec(l_inc=0.0)
    with pytest.raises(UsageError):
        SchedulerSpec(E_inc=1.0)
    with pytest.raises(UsageError):
        SchedulerSpec(S_inc=0)
    with pytest.raises(UsageError):
        scheduler_eval(SchedulerSpec(), -1)


def test_scheduler_peak():
    assert SchedulerSpec(mode="expansion").peak() == 0.40
    assert SchedulerSpec(mode="shrink", lambda_init=0.35).peak() == 0.35


# ---------------------------------------------------------------------------
# Static windows
# ---------------------------------------------------------------------------


def test_static_window_hand_cases():
    ranking = prediction_ranking(range(10, 0, -1))  # ids 0..9 easiest first
    assert select_static_window(ranking, 0.3, 0.3) == [3, 4, 5, 6]
    assert select_static_window(ranking, 0.1, 0.1) == list(range(1, 9))
    assert select_static_window(ranking, 0.0, 0.0) == list(range(10))


def test_static_window_brute_force():
    rng = np.random.default_rng(80)
    for trial in range(60):
        n = int(rng.integers(2, 60))
        values = rng.integers(0, 6, size=n).astype(float)
        e, h = rng.uniform(0.0, 0.49, size=2)
        ranking = prediction_ranking(values)
        # loop oracle: easiest-first order, drop floor counts at each end
        order = sorted(range(n), key=lambda i: (-values[i], i))
        k_e = int(np.floor(e * n + 1e-9))
        k_h = int(np.floor(h * n + 1e-9))
        expected = order[k_e:n - k_h]
        assert select_static_window(ranking, e, h) == expected, trial


def test_static_window_requires_easiest_first():
    records = [ScoreRecord(pair_id=i, method="dcce", value=float(i)) for i in range(5)]
    with pytest.raises(UsageError):
        select_static_window(rank(records), 0.1, 0.1)


def test_static_window_validates_fractions():
    ranking = prediction_ranking(range(10))
    with pytest.raises(UsageError):
        select_static_window(ranking, 0.5, 0.5)
    with pytest.raises(UsageError):
        select_static_window(ranking, -0.1, 0.0)


# ---------------------------------------------------------------------------
# Dynamic windows
# ---------------------------------------------------------------------------


def test_dynamic_window_hand_cases():
    ranking = prediction_ranking(range(100, 0, -1))  # ids 0..99 easiest first
    assert select_dynamic_window(ranking, 0.40, (0.30, 0.70)) == list(range(30, 70))
    assert select_dynamic_window(ranking, 0.10, (0.30, 0.70)) == list(range(45, 55))
    assert select_dynamic_window(ranking, 0.20, (0.30, 0.70)) == list(range(40, 60))


def test_dynamic_window_accepts_full_band_width():
    # 0.7 - 0.3 is 0.39999... in floats; the width check must not reject
    # a 0.4 window, and the spec construction must accept the defaults
    ranking = prediction_ranking(range(50, 0, -1))
    assert len(select_dynamic_window(ranking, 0.40, (0.30, 0.70))) == 20
    WindowSpec(kind="dynamic", scheduler=SchedulerSpec())  # must not raise


def test_dynamic_window_centering_property():
    # the window must sit at the feasible start closest to the band
    # midpoint; scanning every feasible start is the oracle
    rng = np.random.default_rng(81)
    for trial in range(200):
        n = int(rng.integers(4, 120))
        values = rng.normal(size=n)
        lo = float(rng.uniform(0.0, 0.5))
        hi = float(rng.uniform(lo + 0.2, 1.0))
        lam = float(rng.uniform(0.01, hi - lo))
        ranking = prediction_ranking(values)
        k = frac_floor(lam, n)
        lo_pos, hi_pos = frac_floor(lo, n), frac_floor(hi, n)
        if k == 0 or k > hi_pos - lo_pos:
            continue
        got = select_dynamic_window(ranking, lam, (lo, hi))
        assert len(got) == k
        starts = list(range(lo_pos, hi_pos - k + 1))
        mid = frac_floor((lo + hi) / 2.0, n)
        best_start = min(starts, key=lambda s: abs(s + k // 2 - mid))
        assert got == list(ranking.ids[best_start:best_start + k]), trial


def test_dynamic_window_validation():
    ranking = prediction_ranking(range(20))
    with pytest.raises(UsageError):
        select_dynamic_window(ranking, 0.5, (0.3, 0.7))  # wider than the band
    with pytest.raises(UsageError):
        select_dynamic_window(ranking, 0.01, (0.3, 0.7))  # selects zero pairs
    with pytest.raises(UsageError):
        select_dynamic_window(ranking, 0.1, (0.7, 0.3))


def test_window_spec_validation():
    with pytest.raises(UsageError):
        WindowSpec(kind="sliding")
    with pytest.raises(UsageError):
        WindowSpec(discard_easy=0.6, discard_hard=0.6)
    with pytest.raises(UsageError):
        WindowSpec(kind="dynamic")  # needs a scheduler
    with pytest.raises(UsageError):
        WindowSpec(kind="dynamic", band=(0.8, 0.2), scheduler=SchedulerSpec())
    with pytest.raises(UsageError):
        WindowSpec(kind="dynamic", scheduler=SchedulerSpec(),
                   anchor="left_edge")
    with pytest.raises(UsageError):
        WindowSpec(kind="dynamic", scheduler=SchedulerSpec(lambda_max=0.41),
                   band=(0.3, 0.7))  # peak exceeds the band width


# ---------------------------------------------------------------------------
# Hybrid candidates
# ---------------------------------------------------------------------------


def three_rankings(values_by_method, ids=None):
    out = {}
    for method, values in values_by_method.items():
        ids_ = list(range(len(values))) if ids is None else ids
        records = [ScoreRecord(pair_id=i, method=method, value=float(v))
                   for i, v in zip(ids_, values)]
        out[method] = rank(records)
    return out


def test_hybrid_identical_rankings_give_top_half():
    values = list(range(10, 0, -1))
    rankings = three_rankings({"laser_csls": values,
                               "dcce": [-v for v in values],
                               "mml": [-v for v in values]})
    # all three agree that smaller ids are better
    assert hybrid_candidates(rankings) == [0, 1, 2, 3, 4]


def test_hybrid_matches_brute_force():
    rng = np.random.default_rng(82)
    for n in (7, 33, 1000):
        vals = {m: rng.normal(size=n) for m in ("laser_csls", "dcce", "mml")}
        rankings = three_rankings(vals)
        halves = []
        for m, values in vals.items():
            higher = m == "laser_csls"
            order = sorted(range(n),
                           key=lambda i: ((-values[i] if higher else values[i]), i))
            halves.append(set(order[:max(1, int(np.floor(0.5 * n + 1e-9)))]))
        expected = sorted(halves[0] & halves[1] & halves[2])
        if expected:
            assert hybrid_candidates(rankings) == expected, n
        else:
            with pytest.raises(DataError):
                hybrid_candidates(rankings)


def test_hybrid_disjoint_top_halves_error():
    up = list(range(10))
    down = list(range(10, 0, -1))
    rankings = three_rankings({"laser_csls": up, "dcce": up, "mml": down})
    # csls favors high ids, dcce and mml favor low ids: no overlap
    with pytest.raises(DataError):
        hybrid_candidates(rankings)


def test_hybrid_requires_exact_method_set():
    values = list(range(6))
    rankings = three_rankings({"laser_csls": values, "dcce": values, "mml": values})
    del rankings["mml"]
    with pytest.raises(UsageError):
        hybrid_candidates(rankings)


# ---------------------------------------------------------------------------
# Selection log
# ---------------------------------------------------------------------------


def test_ranking_digest_tracks_content():
    a = prediction_ranking([3.0, 2.0, 1.0])
    b = prediction_ranking([3.0, 2.0, 1.0])
    c = prediction_ranking([3.0, 2.0, 1.5])
    assert ranking_digest(a) == ranking_digest(b)
    assert ranking_digest(a) != ranking_digest(c)


def test_selection_log_round_trip(tmp_path):
    from curricula.curriculum import EpochSelection
    selections = [
        EpochSelection(epoch=0, selected_ids=(3, 1, 2), window_size_frac=0.1,
                       score_snapshot_digest="aa" * 32),
        EpochSelection(epoch=1, selected_ids=(5,), window_size_frac=0.15,
                       score_snapshot_digest="bb" * 32),
    ]
    path = tmp_path / "selections.tsv"
    save_selection_log(selections, path, dump_ids=True)
    rows = load_selection_log(path)
    assert rows == [(0, 0.1, 3, "aa" * 32), (1, 0.15, 1, "bb" * 32)]
    ids_lines = (tmp_path / "selections.tsv.ids").read_text().splitlines()
    assert ids_lines == ["0\t3,1,2", "1\t5"]
    bad = tmp_path / "bad.tsv"
    bad.write_text("nope\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_selection_log(bad)


def test_finetune_plan_validation():
    with pytest.raises(UsageError):
        FinetunePlan(n_epochs=0)
    with pytest.raises(UsageError):
        FinetunePlan(patience=0)
    with pytest.raises(UsageError):
        FinetunePlan(eval_interval=0)
    with pytest.raises(UsageError):
        FinetunePlan(p=0.0)


# ---------------------------------------------------------------------------
# Strategy runners on a tiny corpus
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_run():
    spec = SynthSpec(n_pairs=60, vocab_size_src=14, vocab_size_tgt=14,
                     len_range=(3, 6), seed=13, mapping_seed=14)
    corpus, _ = synth_generate(spec)
    train, valid, test = split(corpus, {"train": 0.7, "valid": 0.15, "test": 0.15},
                               seed=1)
    src_vocab = build_vocab(corpus, "src")
    tgt_vocab = build_vocab(corpus, "tgt")
    return train, valid, test, src_vocab, tgt_vocab


def fresh_model(tiny_run, lr=1e-3):
    train, valid, test, src_vocab, tgt_vocab = tiny_run
    model = init_model(src_vocab, tgt_vocab, d=5, seed=7)
    state = init_trainer(model, lr=lr, batch_size=8, seed=8)
    return model, state


def external_ranking(train, method="dcce", seed=83):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=len(train))
    records = [ScoreRecord(pair_id=p.id, method=method, value=float(values[i]))
               for i, p in enumerate(train)]
    return rank(records)


def test_warmup_runs_exact_updates(tiny_run):
    train, _, _, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    ckpt = run_warmup(model, state, train, 11)
    assert ckpt.stage == "warmup"
    assert ckpt.state.update_count == 11
    with pytest.raises(UsageError):
        run_warmup(model, state, train, 0)


def test_deterministic_fixes_one_subset(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    ranking = external_ranking(train)
    plan = FinetunePlan(n_epochs=3, patience=5, eval_interval=10_000, p=0.4, seed=3)
    best, report = run_deterministic(model, state, train, valid, test, ranking, plan)
    assert report.strategy == "deterministic_dcce"
    expected_ids = tuple(ranking.ids[:frac_floor(0.4, len(train))])
    assert len(report.selections) == 3
    for sel in report.selections:
        assert sel.selected_ids == expected_ids
        assert sel.window_size_frac == 0.4
        assert sel.score_snapshot_digest == ranking_digest(ranking)
    assert best.stage == "finetuned"


def test_deterministic_rejects_zero_subset(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    ranking = external_ranking(train)
    plan = FinetunePlan(n_epochs=2, p=0.01)
    with pytest.raises(UsageError):
        run_deterministic(model, state, train, valid, test, ranking, plan)


def test_deterministic_requires_covering_ranking(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    ranking = external_ranking(valid)  # wrong id set
    plan = FinetunePlan(n_epochs=2, p=0.5)
    with pytest.raises(DataError):
        run_deterministic(model, state, train, valid, test, ranking, plan)


def test_online_static_reselects_each_epoch(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    window = WindowSpec(kind="static", discard_easy=0.2, discard_hard=0.2)
    plan = FinetunePlan(n_epochs=3, eval_interval=10_000, window=window, seed=3)
    n = len(train)
    kept = n - 2 * frac_floor(0.2, n)
    best, report = run_online(model, state, train, valid, test, plan)
    assert report.strategy == "online_static"
    assert [len(s.selected_ids) for s in report.selections] == [kept] * 3
    # training moves the model, so the per-epoch score snapshots differ
    digests = [s.score_snapshot_digest for s in report.selections]
    assert len(set(digests)) > 1


def test_online_frozen_model_yields_identical_epochs(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    window = WindowSpec(kind="static", discard_easy=0.2, discard_hard=0.2)
    plan = FinetunePlan(n_epochs=3, eval_interval=10_000, window=window,
                        lr=0.0, seed=3)
    best, report = run_online(model, state, train, valid, test, plan)
    digests = {s.score_snapshot_digest for s in report.selections}
    id_sets = {s.selected_ids for s in report.selections}
    assert len(digests) == 1  # zero learning rate: scores never move
    assert len(id_sets) == 1
    assert report.best_update == 0


def test_online_dynamic_sizes_follow_schedule(tiny_run):
    train, valid, test, _, _ = tiny_run
    sch = SchedulerSpec(kind="linear", mode="expansion")
    window = WindowSpec(kind="dynamic", band=(0.3, 0.7), scheduler=sch)
    model, state = fresh_model(tiny_run)
    plan = FinetunePlan(n_epochs=4, eval_interval=10_000, window=window, seed=3)
    best, report = run_online(model, state, train, valid, test, plan)
    assert report.strategy == "online_expand"
    n = len(train)
    for epoch, sel in enumerate(report.selections):
        lam = scheduler_eval(sch, epoch)
        assert sel.window_size_frac == lam
        assert len(sel.selected_ids) == frac_floor(lam, n)


def test_online_shrink_strategy_name(tiny_run):
    train, valid, test, _, _ = tiny_run
    sch = SchedulerSpec(kind="linear", mode="shrink",
                        lambda_init=0.4, lambda_min=0.1)
    window = WindowSpec(kind="dynamic", band=(0.3, 0.7), scheduler=sch)
    model, state = fresh_model(tiny_run)
    plan = FinetunePlan(n_epochs=2, eval_interval=10_000, window=window, seed=3)
    _, report = run_online(model, state, train, valid, test, plan)
    assert report.strategy == "online_shrink"


def test_online_requires_window(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    with pytest.raises(UsageError):
        run_online(model, state, train, valid, test, FinetunePlan(n_epochs=2))


def test_hybrid_trains_inside_candidate_set(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    rankings = {m: external_ranking(train, method=m, seed=90 + i)
                for i, m in enumerate(("laser_csls", "dcce", "mml"))}
    candidates = set(hybrid_candidates(rankings))
    plan = FinetunePlan(n_epochs=3, eval_interval=10_000, seed=3)
    best, report = run_hybrid(model, state, train, valid, test, rankings, plan)
    assert report.strategy == "hybrid"
    for sel in report.selections:
        assert set(sel.selected_ids) <= candidates


def test_traditional_ft_uses_everything(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    plan = FinetunePlan(n_epochs=2, eval_interval=10_000, seed=3)
    best, report = run_traditional_ft(model, state, train, valid, test, plan)
    assert report.strategy == "traditional_ft"
    for sel in report.selections:
        assert sel.window_size_frac == 1.0
        assert set(sel.selected_ids) == set(train.ids())


def test_engine_counts_updates_and_stops_early(tiny_run):
    # zero learning rate freezes the validation score, so strict-improvement
    # early stopping fires after exactly `patience` evaluations
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    plan = FinetunePlan(n_epochs=50, patience=2, eval_interval=1, lr=0.0, seed=3)
    best, report = run_traditional_ft(model, state, train, valid, test, plan)
    assert report.total_updates == 2
    assert report.best_update == 0  # the warm-start model was never beaten
    assert len(report.eval_history) == 3  # initial + two stagnant evals
    assert report.eval_history[0][0] == 0
    assert best.state.update_count == 0


def test_engine_rejects_foreign_selection_ids(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    plan = FinetunePlan(n_epochs=1, eval_interval=10_000)

    def bad_select(epoch, current):
        return [999_999], 0.1, "ff" * 32

    with pytest.raises(DataError):
        _finetune_engine(model, state, train, valid, test, plan, bad_select,
                         strategy="traditional_ft")


def test_engine_meta_reset_preserves_update_count(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    run_warmup(model, state, train, 7)
    plan = FinetunePlan(n_epochs=1, eval_interval=10_000, seed=3)
    _, report = run_traditional_ft(model, state, train, valid, test, plan)
    # report counts only fine-tune updates, not the warm-up ones
    assert state.update_count == 7 + report.total_updates


def test_converged_baseline_budget_and_nan_test_column(tiny_run):
    train, valid, test, _, _ = tiny_run
    model, state = fresh_model(tiny_run)
    ckpt, report = run_converged_baseline(model, state, train, valid, test,
                                          patience=100, eval_interval=5,
                                          max_updates=12)
    assert report.strategy == "converged_baseline"
    assert report.total_updates == 12
    assert ckpt.stage == "converged"
    assert report.selections == []
    assert [u for u, _, _ in report.eval_history] == [5, 10]
    assert all(np.isnan(t) for _, _, t in report.eval_history)


def test_no_warmup_spends_exact_budget(tiny_run):
    train, valid, test, src_vocab, tgt_vocab = tiny_run
    ranking = external_ranking(train)
    ckpt, report = run_no_warmup(src_vocab, tgt_vocab, train, valid, test,
                                 ranking, p=0.5, total_updates=9, d=5,
                                 seed=2, batch_size=8, eval_interval=4)
    assert report.strategy == "no_warmup"
    assert report.total_updates == 9
    with pytest.raises(UsageError):
        run_no_warmup(src_vocab, tgt_vocab, train, valid, test, ranking,
                      p=0.5, total_updates=0, d=5)

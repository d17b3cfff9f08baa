"""Time the hot kernels on the active backend, or compare both backends.

Single run: times a scoring pass, a block of training updates, and a
greedy decode sweep on whatever backend the current process selected,
then prints one table row per workload.  With --both the script re-runs
itself in two subprocesses (CURRICULA_JIT=1 and =0) and prints a
comparison table with speedups.  Timings are best-of-N wall clock with
one untimed warm-up call, so compilation cost never leaks into a row.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

HERE = os.path.abspath(__file__)
RESULT_TAG = "@RESULT"
WORKLOADS = ("scoring_pass", "training_updates", "greedy_decode")


def build_fixture(args):
    from curricula.corpus import SynthSpec, build_vocab, synth_generate
    from curricula.model import encode_corpus, init_model, init_trainer

    spec = SynthSpec(n_pairs=args.pairs, vocab_size_src=args.vocab,
                     vocab_size_tgt=args.vocab, len_range=(4, 14),
                     seed=9, mapping_seed=9)
    corpus, _ = synth_generate(spec)
    src_vocab = build_vocab(corpus, "src")
    tgt_vocab = build_vocab(corpus, "tgt")
    model = init_model(src_vocab, tgt_vocab, d=args.d, seed=1)
    enc = encode_corpus(corpus, src_vocab, tgt_vocab)
    trainer = lambda m: init_trainer(m, lr=1e-3, batch_size=args.batch, seed=2)
    return corpus, enc, model, trainer


def time_workload(fn, repeats: int) -> float:
    fn()  # warm-up: JIT compilation and cache population stay untimed
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_single(args) -> int:
    from curricula.evaluation import decode_corpus
    from curricula.kernels import BACKEND
    from curricula.model import train_updates
    from curricula.scorers import prediction_values

    corpus, enc, model, trainer = build_fixture(args)
    decode_sub = corpus.pairs[:args.decode_pairs]

    def scoring_pass():
        prediction_values(enc, model)

    def training_updates():
        m = model.copy()
        train_updates(m, trainer(m), enc, args.updates)

    def greedy_decode():
        from curricula.model import translate_greedy
        for p in decode_sub:
            translate_greedy(model, p.src)

    print(f"backend: {BACKEND}")
    print(f"{'workload':<18} {'best (s)':>10} {'throughput':>16}")
    for name, fn, unit, n in (
        ("scoring_pass", scoring_pass, "pairs/s", len(corpus)),
        ("training_updates", training_updates, "updates/s", args.updates),
        ("greedy_decode", greedy_decode, "pairs/s", len(decode_sub)),
    ):
        secs = time_workload(fn, args.repeats)
        print(f"{name:<18} {secs:>10.4f} {n / secs:>10.1f} {unit}")
        print(f"{RESULT_TAG} {name} {secs:.6f}")
    return 0


def run_both(args) -> int:
    child = [sys.executable, HERE,
             "--pairs", str(args.pairs), "--vocab", str(args.vocab),
             "--d", str(args.d), "--batch", str(args.batch),
             "--updates", str(args.updates),
             "--decode-pairs", str(args.decode_pairs),
             "--repeats", str(args.repeats)]
    results = {}
    for label, jit in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, CURRICULA_JIT=jit, CURRICULA_THREADS="1")
        proc = subprocess.run(child, env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return proc.returncode
        timings = {}
        for line in proc.stdout.splitlines():
            if line.startswith(RESULT_TAG):
                _, name, secs = line.split()
                timings[name] = float(secs)
        results[label] = timings

    print(f"{'workload':<18} {'numpy (s)':>10} {'numba (s)':>10} {'speedup':>8}")
    for name in WORKLOADS:
        np_s = results["numpy"][name]
        nb_s = results["numba"][name]
        print(f"{name:<18} {np_s:>10.4f} {nb_s:>10.4f} {np_s / nb_s:>7.1f}x")
    return 0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=512)
    ap.add_argument("--vocab", type=int, default=200)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--updates", type=int, default=16)
    ap.add_argument("--decode-pairs", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--both", action="store_true",
                    help="compare the numba and numpy backends in subprocesses")
    args = ap.parse_args()
    return run_both(args) if args.both else run_single(args)


if __name__ == "__main__":
    sys.exit(main())

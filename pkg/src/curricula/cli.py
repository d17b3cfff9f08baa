"""Command-line interface.

All state flows through one JSON config (see config.py).  Flags name
config leaves: --seed matches the top-level key, nested leaves are
addressed by their dotted path (--finetune.window.discard-easy 0.1)
or, when the leaf name is unique in the schema, by the bare name
(--discard-easy 0.1).  Flag overrides win over config-file values, and
every run directory gets an effective_config.json snapshot that
reproduces the run.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 training diverged.
"""

from __future__ import annotations

import difflib
import sys
from pathlib import Path

from .config import DEFAULT_CONFIG, leaf_paths, load_config, write_effective_config
from .corpus import clean_dedup, load_bitext, save_corpus_tsv, split
from .evaluation import load_report_json, overlap_matrix, save_overlap_csv, emit_report
from .exceptions import CurriculaError, DataError, TrainingDiverged, UsageError
from .experiments import (evaluate_config, run_converged_config, run_finetune_config,
                          run_synth_config, run_warmup_config, score_config)
from .scorers import METHODS, load_ranking, load_scores, rank, save_ranking

COMMANDS = ("synth", "prepare", "train-warmup", "train-converged", "score",
            "rank", "finetune", "evaluate", "overlap", "report")

# flags owned by a subcommand rather than the config schema; True means
# the flag is a bare boolean
_EXTRA_FLAGS: dict[str, dict[str, bool]] = {
    "synth": {},
    "prepare": {},
    "train-warmup": {},
    "train-converged": {},
    "score": {"method": False, "corpus": False, "out": False},
    "rank": {"scores": False, "out": False, "direction": False},
    "finetune": {},
    "evaluate": {"checkpoint": False, "corpus": False, "smoothing": False,
                 "out": False},
    "overlap": {"rankings": False, "methods": False, "grid": False, "out": False,
                "dir": False},
    "report": {"runs": False, "out": False, "svg": True},
}

_USAGE = """\
usage: curricula <command> [--config FILE] [--flag value ...]

commands:
  synth            generate a labeled synthetic cipher corpus
  prepare          clean, deduplicate and split a raw bitext
  train-warmup     stage 1: train the base model for K updates
  train-converged  baseline: keep training on general data (no reset)
  score            score a corpus: laser_csls | dcce | mml | prediction
  rank             turn a score TSV into a best-first ranking TSV
  finetune         stage 2: fine-tune with a curriculum strategy
  evaluate         greedy-decode a corpus and print BLEU
  overlap          pairwise top-p overlap between rankings
  report           merge run reports into comparison CSV/SVG

Flags mirror config leaves by dotted path (--trainer.patience 3) or by
unique leaf name (--patience 3).  See config.DEFAULT_CONFIG for the
schema.
"""


def _leaf_index() -> dict[str, list[str]]:
    index: dict[str, list[str]] = {}
    for path in leaf_paths(DEFAULT_CONFIG):
        index.setdefault(path.rsplit(".", 1)[-1], []).append(path)
    return index


def _resolve_flag(name: str, command: str) -> tuple[str, str, bool]:
    """Classify --name as (kind, key, is_bool); kind is extra|config."""
    extras = _EXTRA_FLAGS[command]
    snake = name.replace("-", "_")
    if snake in extras:
        return "extra", snake, extras[snake]
    if snake == "config":
        return "meta", "config", False
    all_paths = leaf_paths(DEFAULT_CONFIG)
    if snake in all_paths:
        return "config", snake, False
    index = _leaf_index()
    if snake in index:
        paths = index[snake]
        if len(paths) == 1:
            return "config", paths[0], False
        raise UsageError(f"flag --{name} is ambiguous: use one of "
                         + ", ".join(f"--{p}" for p in sorted(paths)))
    candidates = (list(extras) + ["config"] + all_paths
                  + [leaf for leaf, paths in index.items() if len(paths) == 1])
    close = difflib.get_close_matches(snake, candidates, n=1)
    hint = f" (did you mean --{close[0].replace('_', '-')}?)" if close else ""
    raise UsageError(f"unknown flag --{name}{hint}")


def _parse_args(command: str, argv: list[str]) -> tuple[dict, dict]:
    """Split argv into config overrides (dotted) and extra flag values."""
    overrides: dict[str, str] = {}
    extras: dict[str, str | bool] = {}
    i = 0
    while i < len(argv):
        arg = argv[i]
        if not arg.startswith("--"):
            raise UsageError(f"unexpected argument {arg!r} (flags look like --name value)")
        name, eq, inline = arg[2:].partition("=")
        kind, key, is_bool = _resolve_flag(name, command)
        if is_bool and not eq:
            extras[key] = True
            i += 1
            continue
        if eq:
            value = inline
            i += 1
        else:
            if i + 1 >= len(argv):
                raise UsageError(f"flag --{name} needs a value")
            value = argv[i + 1]
            i += 2
        if kind == "extra":
            extras[key] = value
        elif kind == "meta":
            extras["config"] = value
        else:
            overrides[key] = value
    return overrides, extras


def _load(extras: dict, overrides: dict) -> dict:
    return load_config(extras.get("config"), overrides)


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(x) for x in parts)
    except ValueError:
        raise UsageError(f"grid must be numeric, got {text!r}") from None
    if step <= 0 or start <= 0 or stop < start:
        raise UsageError(f"grid needs 0 < start <= stop and step > 0, got {text!r}")
    count = int((stop - start) / step + 1e-9) + 1
    grid = [round(start + i * step, 12) for i in range(count)]
    if any(not 0.0 < g <= 1.0 for g in grid):
        raise UsageError(f"grid points must lie in (0, 1], got {grid}")
    return grid


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------


def _cmd_synth(cfg: dict, extras: dict) -> int:
    out = run_synth_config(cfg)
    print(f"wrote {out}")
    return 0


def _cmd_prepare(cfg: dict, extras: dict) -> int:
    p = cfg["prepare"]
    if not p["tsv"] and not (p["src"] and p["tgt"]):
        raise UsageError("prepare needs prepare.tsv or prepare.src + prepare.tgt")
    corpus = load_bitext(src_path=p["src"], tgt_path=p["tgt"], tsv_path=p["tsv"],
                         name=p["name"], tokenize_mode=cfg["data"]["tokenize"])
    cleaned, summary = clean_dedup(corpus, max_len=cfg["data"]["max_len"])
    fracs = {"train": 1.0 - p["valid_frac"] - p["test_frac"],
             "valid": p["valid_frac"], "test": p["test_frac"]}
    train, valid, test = split(cleaned, fracs, seed=cfg["seed"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for corp, stem in ((train, "train"), (valid, "valid"), (test, "test")):
        save_corpus_tsv(corp, out / f"{stem}.tsv")
    write_effective_config(cfg, out)
    print(f"kept {summary.kept} pairs "
          f"(dropped {summary.dropped_by_length} by length, "
          f"{summary.dropped_duplicates} duplicates); "
          f"split {len(train)}/{len(valid)}/{len(test)} into {out}")
    return 0


def _cmd_train_warmup(cfg: dict, extras: dict) -> int:
    path = run_warmup_config(cfg)
    print(f"wrote {path}")
    return 0


def _cmd_train_converged(cfg: dict, extras: dict) -> int:
    path, report = run_converged_config(cfg)
    print(f"wrote {path} (best test BLEU {report.best_test_bleu:.2f} "
          f"after {report.total_updates} updates)")
    return 0


def _cmd_score(cfg: dict, extras: dict) -> int:
    method = extras.get("method") or cfg["finetune"]["method"]
    if method not in METHODS:
        raise UsageError(f"--method must be one of {METHODS}, got {method!r}")
    corpus = (extras.get("corpus") or cfg["data"]["in_domain_tsv"]
              or cfg["data"]["general_tsv"])
    if not corpus:
        raise UsageError("score needs --corpus or data.in_domain_tsv/general_tsv")
    out = extras.get("out") or str(Path(cfg["out_dir"]) / f"scores_{method}.tsv")
    Path(cfg["out_dir"]).mkdir(parents=True, exist_ok=True)
    path = score_config(cfg, method, corpus, out)
    print(f"wrote {path}")
    return 0


def _cmd_rank(cfg: dict, extras: dict) -> int:
    if "scores" not in extras:
        raise UsageError("rank needs --scores <file>")
    records = load_scores(extras["scores"])
    ranking = rank(records, direction=extras.get("direction"))
    out = extras.get("out") or str(Path(cfg["out_dir"]) / f"ranking_{ranking.method}.tsv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_ranking(ranking, out)
    print(f"wrote {out}")
    return 0


def _cmd_finetune(cfg: dict, extras: dict) -> int:
    path, report = run_finetune_config(cfg)
    print(f"wrote {path} (strategy {report.strategy}, best test BLEU "
          f"{report.best_test_bleu:.2f}, {report.total_updates} updates)")
    return 0


def _cmd_evaluate(cfg: dict, extras: dict) -> int:
    for need in ("checkpoint", "corpus"):
        if need not in extras:
            raise UsageError(f"evaluate needs --{need} <path>")
    smoothing = extras.get("smoothing", "add_one")
    score = evaluate_config(extras["checkpoint"], extras["corpus"], smoothing)
    print(f"BLEU\t{score!r}")
    if "out" in extras:
        Path(extras["out"]).write_text(f"{score!r}\n", encoding="utf-8")
    return 0


def _cmd_overlap(cfg: dict, extras: dict) -> int:
    grid = _parse_grid(extras.get("grid", "0.1:0.9:0.1"))
    rankings = {}
    if "rankings" in extras:
        for item in extras["rankings"].split(","):
            r = load_ranking(item)
            rankings[r.method] = r
    else:
        base = Path(extras.get("dir") or cfg["out_dir"])
        methods = (extras.get("methods") or "laser_csls,dcce,mml").split(",")
        for m in methods:
            path = base / f"ranking_{m}.tsv"
            if not path.exists():
                raise UsageError(f"no ranking file for {m!r} at {path}; "
                                 "pass --rankings or --dir")
            rankings[m] = load_ranking(path)
    if "methods" in extras:
        wanted = extras["methods"].split(",")
        missing = [m for m in wanted if m not in rankings]
        if missing:
            raise UsageError(f"no rankings loaded for: {', '.join(missing)}")
        rankings = {m: rankings[m] for m in wanted}
    rows = overlap_matrix(rankings, grid)
    out = extras.get("out") or str(Path(cfg["out_dir"]) / "overlap.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_overlap_csv(rows, out)
    print(f"wrote {out}")
    return 0


def _cmd_report(cfg: dict, extras: dict) -> int:
    if "runs" not in extras:
        raise UsageError("report needs --runs dir1,dir2,...")
    reports = []
    for run_dir in extras["runs"].split(","):
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise DataError(f"no report.json under {run_dir}")
        reports.append(load_report_json(path))
    out = extras.get("out") or cfg["out_dir"]
    emit_report(reports, out, svg=bool(extras.get("svg")))
    print(f"wrote {Path(out) / 'comparison.csv'}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train-warmup": _cmd_train_warmup,
    "train-converged": _cmd_train_converged,
    "score": _cmd_score,
    "rank": _cmd_rank,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "overlap": _cmd_overlap,
    "report": _cmd_report,
}


def dispatch(argv: list[str]) -> int:
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE, end="")
        return 0 if argv else 1
    command = argv[0]
    try:
        if command not in COMMANDS:
            close = difflib.get_close_matches(command, COMMANDS, n=1)
            hint = f" (did you mean {close[0]!r}?)" if close else ""
            raise UsageError(f"unknown command {command!r}{hint}")
        overrides, extras = _parse_args(command, argv[1:])
        cfg = _load(extras, overrides)
        return _HANDLERS[command](cfg, extras)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CurriculaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

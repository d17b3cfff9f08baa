"""Experiment configuration: one JSON document per run.

The schema below is the single source of defaults.  Loading merges a
config file over the defaults, rejecting unknown keys at any depth, and
then applies command-line overrides addressed by dotted leaf paths
(e.g. finetune.window.discard_easy).  Every run writes the resulting
effective config next to its outputs; re-running from that snapshot
reproduces the run.

All randomness flows from the top-level seed, split per component:
data splitting uses seed, model init seed+1, warm-up batching seed+2,
fine-tune batching seed+3.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from . import kernels
from .exceptions import UsageError

DEFAULT_CONFIG: dict = {
    "strategy": "deterministic",
    "seed": 0,
    "out_dir": "run_out",
    "data": {
        "general_tsv": None,
        "in_domain_tsv": None,
        "valid_tsv": None,
        "test_tsv": None,
        "tokenize": "whitespace",
        "max_len": 250,
        "min_count": 1,
    },
    "model": {"d": 64},
    "trainer": {
        "batch_size": 32,
        "warmup_lr": 0.001,
        "finetune_lr": 0.0005,
        "eval_interval": 200,
        "patience": 5,
    },
    "warmup": {
        "k_updates": 2000,
        "checkpoint": None,
    },
    "converged": {"max_updates": None},
    "finetune": {
        "n_epochs": 50,
        "p": 0.4,
        "method": "dcce",
        "ranking": None,
        "rankings": {"laser_csls": None, "dcce": None, "mml": None},
        "prediction_mean": "arithmetic",
        "dump_ids": False,
        "window": {
            "kind": "static",
            "discard_easy": 0.3,
            "discard_hard": 0.3,
            "band": [0.3, 0.7],
            "anchor": "band_center",
            "scheduler": {
                "kind": "linear",
                "mode": "expansion",
                "lambda_init": 0.1,
                "lambda_max": 0.4,
                "lambda_min": 0.1,
                "l_inc": 0.05,
                "l_dec": 0.05,
                "E_inc": 1.5,
                "E_dec": 1.5,
                "S_inc": 6,
                "S_dec": 6,
                "C1": None,
                "C2": None,
            },
        },
    },
    "dcce": {
        "fwd_checkpoint": None,
        "bwd_checkpoint": None,
        "normalize": True,
        "train_updates": 2000,
        "d": 48,
    },
    "mml": {
        "lm_src_in": None,
        "lm_src_gen": None,
        "lm_tgt_in": None,
        "lm_tgt_gen": None,
        "order": 3,
        "discount": 0.75,
        "normalize": True,
    },
    "csls": {
        "k": 10,
        "embeddings": None,
        "src_sentence_vecs": None,
        "tgt_sentence_vecs": None,
        "mapping": None,
        "dim": 32,
        "embed_seed": 11,
        "jitter": 0.05,
    },
    "synth": {
        "n_pairs": 2000,
        "vocab_size_src": 100,
        "vocab_size_tgt": 100,
        "len_min": 3,
        "len_max": 12,
        "misaligned": 0.0,
        "copied": 0.0,
        "truncated": 0.0,
        "in_domain_frac": 0.0,
        "seed": 0,
        "mapping_seed": 0,
        "n_valid": 400,
        "n_test": 400,
        "out_tsv": None,
        "mapping_out": None,
    },
    "prepare": {
        "src": None,
        "tgt": None,
        "tsv": None,
        "name": "corpus",
        "valid_frac": 0.05,
        "test_frac": 0.05,
    },
    "suite": {
        "strategies": ["converged_baseline", "traditional_ft",
                       "deterministic_laser_csls", "deterministic_dcce",
                       "deterministic_mml", "online_static", "online_expand",
                       "online_shrink", "hybrid"],
        "svg": True,
    },
    "environment": {
        "kernel_backend": None,
        "threads": None,
    },
}


def _merge(base: dict, override: dict, path: str) -> None:
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise UsageError(f"unknown config key {here!r}")
        if isinstance(base[key], dict) and base[key]:
            if not isinstance(value, dict):
                raise UsageError(f"config key {here!r} must be an object")
            _merge(base[key], value, here)
        else:
            base[key] = value


def leaf_paths(schema: dict | None = None, prefix: str = "") -> list[str]:
    """All dotted leaf paths of the config schema."""
    if schema is None:
        schema = DEFAULT_CONFIG
    out = []
    for key, value in schema.items():
        here = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict) and value:
            out.extend(leaf_paths(value, here))
        else:
            out.append(here)
    return out


def _coerce(raw: str):
    # flag values arrive as strings; JSON covers numbers, bools, null
    # and lists, anything else stays a plain string
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def set_by_path(cfg: dict, dotted: str, raw_value: str) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise UsageError(f"unknown config key {dotted!r}")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise UsageError(f"unknown config key {dotted!r}")
    if isinstance(node[parts[-1]], dict) and node[parts[-1]]:
        raise UsageError(f"config key {dotted!r} is a section, not a value")
    node[parts[-1]] = _coerce(raw_value) if isinstance(raw_value, str) else raw_value


def load_config(path: str | Path | None = None,
                overrides: dict[str, str] | None = None) -> dict:
    """Defaults, then the config file, then dotted-path overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"no such config file: {p}")
        try:
            loaded = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"{p}: invalid JSON: {e}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"{p}: config root must be a JSON object")
        _merge(cfg, loaded, "")
    for dotted, value in (overrides or {}).items():
        set_by_path(cfg, dotted, value)
    return cfg


def derived_seeds(seed: int) -> dict[str, int]:
    return {
        "data": seed,
        "model": seed + 1,
        "warmup": seed + 2,
        "finetune": seed + 3,
    }


def write_effective_config(cfg: dict, out_dir: str | Path) -> Path:
    """Snapshot the config (with the active kernel backend) so the run
    can be reproduced from it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    effective = copy.deepcopy(cfg)
    effective["environment"]["kernel_backend"] = kernels.BACKEND
    path = out / "effective_config.json"
    path.write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path

"""Command-line entry point.

Subcommands: gen-data, train, decode, eval, grad-check, oracle-check,
report.  Every experiment is reproducible from one JSON config file;
individual values can be overridden with repeatable ``--set key.sub=value``
flags.  Unknown keys are rejected, not ignored.

Exit codes: 0 success, 2 usage/config errors, 3 numeric/runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import numerics as nm
from .data import (
    HEAD_EVAL,
    PAUSE_EVAL,
    SPLITS,
    TAIL_EVAL,
    UNPAIRED_TRAIN,
    CorpusSpec,
    generate_corpus,
    load_split,
)
from .errors import (
    AnnotationError,
    ConfigError,
    MultihatError,
    TokenizationError,
)
from .labelkit import CAP_ID, EOS_ID, NON_CAP_ID, NON_PAUSE_ID, LabelBundle, load_vocab
from .loss import e2e_losses, enumerate_nll, ilm_losses, jeit_total, rnnt_nll_from_posteriors
from .model import ModelConfig, ModelParams, load_checkpoint
from .numerics import Tensor, grad_check
from .train import TrainConfig, evaluate_split, run_experiment

DEFAULT_MODEL_DIMS = {
    "D_a": 16,
    "D_p": 32,
    "D_h": 32,
    "embed_dim": 32,
    "encoder_width": 32,
    "encoder_layers": 2,
}


def default_config() -> dict:
    return {
        "corpus": asdict(CorpusSpec()),
        "model": dict(DEFAULT_MODEL_DIMS),
        "train": asdict(TrainConfig()),
        "paths": {"data_dir": "data", "run_dir": "runs/exp"},
    }


def _merge(defaults: dict, override: dict, prefix: str = "") -> dict:
    out = dict(defaults)
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, prefix=dotted + ".")
        else:
            out[key] = value
    return out


def _parse_value(current, raw: str):
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, str):
        return raw
    # None, lists, tuples: accept JSON
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None


def _apply_overrides(config: dict, pairs: list[str]) -> None:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        dotted, raw = pair.split("=", 1)
        keys = dotted.split(".")
        node = config
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[key]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node[leaf] = _parse_value(node[leaf], raw)


def load_config(path: str | None, overrides: list[str]) -> dict:
    config = default_config()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p, encoding="utf-8") as f:
            try:
                loaded = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        config = _merge(config, loaded)
    _apply_overrides(config, overrides)
    return config


def _corpus_spec(section: dict) -> CorpusSpec:
    fixed = dict(section)
    for key in ("frames_per_piece", "silence_frames"):
        fixed[key] = tuple(fixed[key])
    for key in ("head_entities", "tail_entities"):
        if fixed[key] is not None:
            fixed[key] = tuple(fixed[key])
    return CorpusSpec(**fixed)


def _print_table(headers: list[str], rows: list[list[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("-" * len(line))
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = load_config(args.config, args.set)
    spec = _corpus_spec(config["corpus"])
    counts = generate_corpus(spec, config["paths"]["data_dir"])
    for split in SPLITS:
        print(f"{split}: {counts[split]} utterances")
    print(f"wrote {config['paths']['data_dir']}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, args.set)
    cfg = TrainConfig(**config["train"])
    run_dir = args.out or config["paths"]["run_dir"]
    report = run_experiment(cfg, config["model"], config["paths"]["data_dir"], run_dir)
    sets = report["sets"]
    _print_table(
        ["regime", "WER%", "head UER%", "tail UER%", "eos P%", "eos R%"],
        [
            [
                cfg.regime,
                _pct(sets[HEAD_EVAL]["wer"]),
                _pct(sets[HEAD_EVAL]["uer"]),
                _pct(sets[TAIL_EVAL]["uer"]),
                _pct(sets[PAUSE_EVAL]["eos_precision"]),
                _pct(sets[PAUSE_EVAL]["eos_recall"]),
            ]
        ],
    )
    print(f"wrote {run_dir}")
    return 0


def _load_checkpoint_or_fail(path: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"checkpoint not found: {p}")
    return load_checkpoint(p)


def cmd_decode(args) -> int:
    from .decode import greedy_decode

    config = load_config(args.config, args.set)
    _, params = _load_checkpoint_or_fail(args.checkpoint)
    vocab = load_vocab(Path(config["paths"]["data_dir"]) / "vocab.txt")
    if params.config.V != vocab.n_symbols:
        raise ConfigError(
            f"checkpoint vocabulary size {params.config.V} != corpus {vocab.n_symbols}"
        )
    examples = load_split(config["paths"]["data_dir"], args.split, vocab)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for ex in examples:
            result = greedy_decode(ex.features, params, vocab, cap_threshold=args.cap_threshold)
            record = {"id": ex.id, **result.to_dict()}
            out.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"decoded {len(examples)} utterances -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config, args.set)
    data_dir = config["paths"]["data_dir"]
    vocab = load_vocab(Path(data_dir) / "vocab.txt")
    eval_sets = {split: load_split(data_dir, split, vocab) for split in (HEAD_EVAL, TAIL_EVAL, PAUSE_EVAL)}

    rows = []
    results = {}
    for ckpt in args.checkpoint:
        _, params = _load_checkpoint_or_fail(ckpt)
        if params.config.V != vocab.n_symbols:
            raise ConfigError(
                f"{ckpt}: checkpoint vocabulary size {params.config.V} != corpus {vocab.n_symbols}"
            )
        sets = {name: evaluate_split(params, vocab, examples).to_dict() for name, examples in eval_sets.items()}
        results[ckpt] = sets
        rows.append(
            [
                ckpt,
                _pct(sets[HEAD_EVAL]["wer"]),
                _pct(sets[HEAD_EVAL]["uer"]),
                _pct(sets[TAIL_EVAL]["uer"]),
                _pct(sets[PAUSE_EVAL]["eos_precision"]),
                _pct(sets[PAUSE_EVAL]["eos_recall"]),
            ]
        )
    _print_table(["checkpoint", "WER%", "head UER%", "tail UER%", "eos P%", "eos R%"], rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(results, f, sort_keys=True, indent=2)
            f.write("\n")
        print(f"wrote {args.out}")
    return 0


def _toy_setup(V: int = 16, T: int = 3, U: int = 2, seed: int = 0):
    cfg = ModelConfig(
        V=V, D_a=4, D_p=6, D_h=5, embed_dim=4, encoder_width=6, encoder_layers=2, feature_dim=3
    )
    rng = np.random.default_rng(seed)
    params = ModelParams(cfg, rng)
    features = rng.normal(size=(T, cfg.feature_dim))
    asr = tuple(int(rng.integers(1, V + 1)) for _ in range(U))
    cap = tuple(int(rng.integers(CAP_ID, NON_CAP_ID + 1)) for _ in range(U))
    pause = tuple([NON_PAUSE_ID] * (U - 1) + [EOS_ID]) if U else ()
    bundle = LabelBundle(asr, cap, pause, text="")
    paired = [SimpleNamespace(id="toy-paired", features=features, bundle=bundle)]
    u_asr = tuple(int(rng.integers(1, V + 1)) for _ in range(U + 1))
    u_cap = tuple(int(rng.integers(CAP_ID, NON_CAP_ID + 1)) for _ in range(U + 1))
    u_pause = tuple([NON_PAUSE_ID] * U + [EOS_ID])
    unpaired = [SimpleNamespace(id="toy-unpaired", bundle=LabelBundle(u_asr, u_cap, u_pause, text=""))]
    return cfg, params, paired, unpaired


def cmd_grad_check(args) -> int:
    checks = []

    _, params, _, _ = _toy_setup(V=8, seed=1)
    tensors = params.named_tensors()

    def f_quad():
        return nm.weighted_sum([(1.0, nm.total(nm.mul(t, t))) for _, t in tensors])

    checks.append(("sum of squares", grad_check(f_quad, tensors, eps=args.eps), 1e-6))

    _, params, paired, unpaired = _toy_setup(V=16, T=3, U=2, seed=args.seed)
    tensors = params.named_tensors()

    def f_jeit():
        return jeit_total(
            e2e_losses(paired, params), ilm_losses(unpaired, params), 0.2, 0.1, 0.3
        ).total

    checks.append(("full jeit loss (T=3, U=2)", grad_check(f_jeit, tensors, eps=args.eps), 1e-4))

    def f_const():
        return Tensor(np.float64(3.5))

    checks.append(("constant", grad_check(f_const, tensors, eps=args.eps), 1e-6))

    failed = False
    for name, err, tol in checks:
        status = "PASS" if err < tol else "FAIL"
        failed = failed or err >= tol
        print(f"[{status}] {name}: max relative error {err:.3e} (tolerance {tol:.0e})")
    return 3 if failed else 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        T = int(rng.integers(1, 5))
        U = int(rng.integers(0, 4))
        K = int(rng.integers(2, 5))
        post = rng.random((T, U + 1, K)) + 1e-3
        post /= post.sum(axis=2, keepdims=True)
        labels = [int(rng.integers(1, K)) for _ in range(U)]
        dp = rnnt_nll_from_posteriors(np.log(post), labels).item()
        brute = enumerate_nll(post, labels)
        worst = max(worst, abs(dp - brute))
    ok = worst < args.tolerance
    print(
        f"[{'PASS' if ok else 'FAIL'}] transducer DP vs. alignment enumeration over "
        f"{args.trials} random instances: max |difference| {worst:.3e} "
        f"(tolerance {args.tolerance:.0e})"
    )
    return 0 if ok else 3


def cmd_report(args) -> int:
    rows = []
    combined = {}
    for run_dir in args.runs:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise ConfigError(f"no report.json under {run_dir}")
        with open(path, encoding="utf-8") as f:
            report = json.load(f)
        combined[str(run_dir)] = report
        sets = report["sets"]
        rows.append(
            [
                f"{report['regime']} (seed {report['seed']})",
                _pct(sets[HEAD_EVAL]["wer"]),
                _pct(sets[HEAD_EVAL]["uer"]),
                _pct(sets[TAIL_EVAL]["uer"]),
                _pct(sets[PAUSE_EVAL]["eos_precision"]),
                _pct(sets[PAUSE_EVAL]["eos_recall"]),
            ]
        )
    _print_table(["run", "WER%", "head UER%", "tail UER%", "eos P%", "eos R%"], rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(combined, f, sort_keys=True, indent=2)
            f.write("\n")
        print(f"wrote {args.out}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multihat",
        description="Desk-scale multi-output transducer with text-injection training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (defaults used when omitted)")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override, repeatable",
        )

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one regime and evaluate it")
    add_common(p)
    p.add_argument("--out", help="run directory (default: paths.run_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="greedy-decode a split with a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default=HEAD_EVAL, choices=[s for s in SPLITS if s != UNPAIRED_TRAIN])
    p.add_argument("--cap-threshold", type=float, default=0.5)
    p.add_argument("--out", help="output jsonl (default: stdout)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="evaluate checkpoints on all eval sets")
    add_common(p)
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--out", help="write the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    add_common(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("oracle-check", help="lattice DP vs. brute-force enumeration")
    add_common(p)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="combine run reports into one table")
    p.add_argument("--runs", required=True, nargs="+")
    p.add_argument("--out", help="write the combined report as JSON")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TokenizationError, AnnotationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MultihatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

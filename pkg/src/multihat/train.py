"""Training loop: paired-only baseline and text-injected (jeit) regimes.

Each step consumes one paired batch and, in the jeit regime, one
unpaired batch in lockstep.  Optimization is plain momentum SGD with
global-norm gradient clipping; everything is driven by a single seed so
(seed, configs) reproduce bit-identical checkpoints on one platform.
"""

from __future__ import annotations

import json
import statistics
from bisect import bisect_right
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import (
    HEAD_EVAL,
    PAIRED_TRAIN,
    PAUSE_EVAL,
    TAIL_EVAL,
    UNPAIRED_TRAIN,
    batcher,
    load_split,
)
from .decode import greedy_decode
from .errors import ConfigError, ContractError, NumericError
from .labelkit import EOS_ID, MARK_EOS, Vocab, load_vocab
from .loss import LossReport, e2e_losses, ilm_losses, jeit_total, zero_task_losses
from .metrics import EvalSummary, add_utterance
from .model import ModelConfig, ModelParams, save_checkpoint
from .numerics import Tape

PAIRED_ONLY = "paired_only"
JEIT = "jeit"
REGIMES = (PAIRED_ONLY, JEIT)


@dataclass(frozen=True)
class TrainConfig:
    regime: str = JEIT
    beta: float = 0.2
    alpha_cap: float = 0.1
    alpha_pause: float = 0.3
    lr: float = 0.1
    momentum: float = 0.9
    steps: int = 1200
    batch_paired: int = 16
    batch_unpaired: int = 16
    seed: int = 0
    checkpoint_interval: int = 0  # 0: only the final checkpoint
    clip_norm: float = 1.0

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        for name in ("beta", "alpha_cap", "alpha_pause", "clip_norm"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.steps < 0 or self.batch_paired < 1 or self.batch_unpaired < 1:
            raise ConfigError("steps must be >= 0 and batch sizes >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------


def global_grad_norm(params: ModelParams) -> float:
    acc = 0.0
    for _, t in params.named_tensors():
        if t.grad is not None:
            acc += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(acc))


def sgd_update(params: ModelParams, velocities: dict[str, np.ndarray], cfg: TrainConfig) -> None:
    """Momentum SGD with global-norm clipping; clip_norm == 0 freezes the
    parameters entirely."""
    if cfg.clip_norm == 0:
        return
    norm = global_grad_norm(params)
    scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0
    for name, t in params.named_tensors():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        v = velocities.setdefault(name, np.zeros_like(t.data))
        v *= cfg.momentum
        v += scale * g
        t.data = t.data - cfg.lr * v


# --------------------------------------------------------------------------
# One optimization step
# --------------------------------------------------------------------------


def train_step(
    params: ModelParams,
    velocities: dict[str, np.ndarray],
    paired_batch,
    unpaired_batch,
    cfg: TrainConfig,
) -> LossReport:
    """Forward all applicable losses, backprop, clip, update.

    The unpaired batch must be present exactly when the regime is jeit;
    the paired-only regime excludes the ILM terms regardless of beta, and
    a jeit run with beta == 0 skips them too (so the two produce
    bit-identical updates under a shared seed).
    """
    if cfg.regime == JEIT and unpaired_batch is None:
        raise ContractError("jeit regime needs an unpaired batch each step")
    if cfg.regime == PAIRED_ONLY and unpaired_batch is not None:
        raise ContractError("paired_only regime must not receive unpaired batches")

    batch_ids = [ex.id for ex in paired_batch if hasattr(ex, "id")]
    if unpaired_batch:
        batch_ids += [ex.id for ex in unpaired_batch if hasattr(ex, "id")]
    use_ilm = cfg.regime == JEIT and cfg.beta > 0
    try:
        with Tape() as tape:
            e2e = e2e_losses(paired_batch, params)
            ilm = ilm_losses(unpaired_batch, params) if use_ilm else zero_task_losses()
            report = jeit_total(
                e2e, ilm, cfg.beta if use_ilm else 0.0, cfg.alpha_cap, cfg.alpha_pause
            )
        params.zero_grads()
        tape.backward(report.total)
    except NumericError as exc:
        raise NumericError(f"{exc} (batch: {' '.join(batch_ids) or 'synthetic'})") from exc
    sgd_update(params, velocities, cfg)
    if not params.all_finite():
        raise NumericError(f"non-finite parameters after update (batch: {' '.join(batch_ids)})")
    return report


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def evaluate_split(params: ModelParams, vocab: Vocab, examples, window: int = 0) -> EvalSummary:
    """Greedy-decode every utterance and aggregate WER/UER/eos metrics."""
    summary = EvalSummary()
    for ex in examples:
        result = greedy_decode(ex.features, params, vocab)
        ref = ex.bundle
        ref_eos = [u for u, tag in enumerate(ref.pause) if tag == EOS_ID]
        hyp_eos = [
            bisect_right(result.frames, frame) - 1
            for frame, kind in result.pause_events
            if kind == MARK_EOS
        ]
        add_utterance(
            summary,
            ref.text.lower().split(),
            result.text.lower().split(),
            ref.text,
            result.text,
            list(ref.asr),
            list(result.tokens),
            ref_eos,
            hyp_eos,
            window,
        )
    return summary


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def run_experiment(
    cfg: TrainConfig,
    model_dims: dict,
    data_dir,
    out_dir,
) -> dict:
    """Train one regime on a generated corpus, evaluate, write artifacts.

    Produces ``train_log.jsonl`` (one loss line per step),
    ``checkpoint.bin``, and ``report.json`` in ``out_dir``; returns the
    report dict.
    """
    data_dir = Path(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = load_vocab(data_dir / "vocab.txt")

    paired = load_split(data_dir, PAIRED_TRAIN, vocab)
    unpaired = load_split(data_dir, UNPAIRED_TRAIN, vocab) if cfg.regime == JEIT else None
    feature_dim = int(paired[0].features.shape[1])
    mcfg = ModelConfig(V=vocab.n_symbols, feature_dim=feature_dim, **model_dims)

    root = np.random.SeedSequence(cfg.seed)
    init_ss, paired_ss, unpaired_ss = root.spawn(3)
    params = ModelParams(mcfg, np.random.default_rng(init_ss))
    velocities: dict[str, np.ndarray] = {}

    paired_stream = batcher(paired, cfg.batch_paired, int(paired_ss.generate_state(1)[0]))
    unpaired_stream = (
        batcher(unpaired, cfg.batch_unpaired, int(unpaired_ss.generate_state(1)[0]))
        if unpaired
        else None
    )

    with open(out / "train_log.jsonl", "w", encoding="utf-8") as log:
        for step in range(cfg.steps):
            paired_batch = next(paired_stream)
            unpaired_batch = next(unpaired_stream) if cfg.regime == JEIT else None
            report = train_step(params, velocities, paired_batch, unpaired_batch, cfg)
            line = {"step": step, **report.to_dict()}
            log.write(json.dumps(line, sort_keys=True) + "\n")
            if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
                save_checkpoint(out / f"checkpoint-{step + 1:06d}.bin", mcfg, params)

    save_checkpoint(out / "checkpoint.bin", mcfg, params)

    sets = {}
    for split in (HEAD_EVAL, TAIL_EVAL, PAUSE_EVAL):
        examples = load_split(data_dir, split, vocab)
        sets[split] = evaluate_split(params, vocab, examples).to_dict()

    report_dict = {
        "regime": cfg.regime,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "beta": cfg.beta,
        "alpha_cap": cfg.alpha_cap,
        "alpha_pause": cfg.alpha_pause,
        "sets": sets,
    }
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report_dict, f, sort_keys=True, indent=2)
        f.write("\n")
    return report_dict


_MEDIAN_FIELDS = (
    ("head_wer", HEAD_EVAL, "wer"),
    ("head_uer", HEAD_EVAL, "uer"),
    ("tail_uer", TAIL_EVAL, "uer"),
    ("eos_precision", PAUSE_EVAL, "eos_precision"),
    ("eos_recall", PAUSE_EVAL, "eos_recall"),
)


def run_comparison(
    cfg: TrainConfig,
    model_dims: dict,
    data_dir,
    out_root,
    seeds=(0, 1, 2),
) -> dict:
    """Run baseline and jeit over several seeds and summarize medians.

    Both regimes share each seed, so initializations are controlled; the
    comparison lands in ``out_root/comparison.json``.
    """
    out_root = Path(out_root)
    runs: dict[str, list[dict]] = {PAIRED_ONLY: [], JEIT: []}
    for seed in seeds:
        for regime in REGIMES:
            run_cfg = TrainConfig(**{**asdict(cfg), "regime": regime, "seed": seed})
            report = run_experiment(
                run_cfg, model_dims, data_dir, out_root / f"{regime}-seed{seed}"
            )
            runs[regime].append(report)

    medians = {
        regime: {
            name: statistics.median(r["sets"][split][key] for r in reports)
            for name, split, key in _MEDIAN_FIELDS
        }
        for regime, reports in runs.items()
    }
    comparison = {"seeds": list(seeds), "runs": runs, "medians": medians}
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "comparison.json", "w", encoding="utf-8") as f:
        json.dump(comparison, f, sort_keys=True, indent=2)
        f.write("\n")
    return comparison

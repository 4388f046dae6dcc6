"""Transducer lattice losses, internal-LM losses, and the joint objective.

The end-to-end loss for each head is a full transducer negative
log-likelihood over its factored posterior grid.  The cap head shares
the asr blank grid (its tag may only be emitted with an asr token); the
pause head owns its blank, so pause emissions may land on other frames.

Internal-LM losses feed the label history through the prediction network
with the encoder output mocked by zeros and score next-token log
probabilities from the softmax over non-blank logits.  The total is

    total = e2e_asr + beta*ilm_asr
          + alpha_cap*(e2e_cap + beta*ilm_cap)
          + alpha_pause*(e2e_pause + beta*ilm_pause)

All lattice recursions run in log domain; probability-domain DP is only
used by the brute-force enumeration oracle on tiny instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .labelkit import LabelBundle
from .lattice import lattice_forward, lattice_grads
from .model import ModelParams, encode, history_rows, ilm_logit_rows, joint_grid, predict_rows
from .numerics import Tensor


# --------------------------------------------------------------------------
# Lattice NLL as a fused tape op
# --------------------------------------------------------------------------


def rnnt_nll(log_blank, log_emit) -> Tensor:
    """Negative log-likelihood of one transducer lattice.

    ``log_blank`` is (T, U+1) with the log blank probability at each
    (frame, emitted-count) cell; ``log_emit`` is (T, U) with the log
    probability of emitting label u+1.  The final blank at (T-1, U)
    consumes the last frame.  Gradients flow to both grids.
    """
    lb = log_blank if isinstance(log_blank, Tensor) else Tensor(np.asarray(log_blank, dtype=np.float64))
    le = log_emit if isinstance(log_emit, Tensor) else Tensor(np.asarray(log_emit, dtype=np.float64))
    T, U1 = lb.shape
    if T < 1 or le.shape != (T, U1 - 1):
        raise ShapeError(f"lattice grids disagree: blank {lb.shape}, emit {le.shape}")
    lb_arr = np.ascontiguousarray(lb.data)
    le_arr = np.ascontiguousarray(le.data)
    loglike, alpha = lattice_forward(lb_arr, le_arr)
    if not np.isfinite(loglike):
        raise NumericError("lattice log-likelihood is not finite")

    def backward(g):
        g_blank, g_emit = lattice_grads(lb_arr, le_arr, alpha, loglike)
        return (g * g_blank, g * g_emit)

    return nm.record_op("rnnt_nll", np.float64(-loglike), (lb, le), backward)


@dataclass(frozen=True)
class Lattice:
    """Diagnostic view of one forward pass over a lattice."""

    log_blank: np.ndarray
    log_emit: np.ndarray
    log_alpha: np.ndarray
    log_like: float


def lattice(log_blank: np.ndarray, log_emit: np.ndarray) -> Lattice:
    loglike, alpha = lattice_forward(
        np.ascontiguousarray(log_blank, dtype=np.float64),
        np.ascontiguousarray(log_emit, dtype=np.float64),
    )
    return Lattice(np.asarray(log_blank), np.asarray(log_emit), alpha, float(loglike))


def head_grids(log_posteriors: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Slice a (T, U+1, K) per-cell log-posterior table (ordered
    [blank, symbols...]) into the blank and emission grids."""
    log_posteriors = np.asarray(log_posteriors, dtype=np.float64)
    T, U1, _ = log_posteriors.shape
    labels = list(labels)
    if len(labels) != U1 - 1:
        raise ShapeError(f"{len(labels)} labels for a table with U={U1 - 1}")
    if any(lab == 0 for lab in labels):
        raise ContractError("labels must not contain the blank id 0")
    lb = log_posteriors[:, :, 0].copy()
    le = np.empty((T, U1 - 1))
    for u, lab in enumerate(labels):
        le[:, u] = log_posteriors[:, u, lab]
    return lb, le


def rnnt_nll_from_posteriors(log_posteriors: np.ndarray, labels) -> Tensor:
    """Transducer NLL from a dense per-cell log-posterior table."""
    lb, le = head_grids(log_posteriors, labels)
    return rnnt_nll(lb, le)


def enumerate_nll(posteriors: np.ndarray, labels) -> float:
    """Brute-force oracle: sum probabilities over every monotonic
    alignment by direct recursion in probability domain.

    ``posteriors`` is (T, U+1, K) in probability (not log) domain.  Only
    feasible for tiny instances; used to validate the DP.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    T, _, _ = posteriors.shape
    labels = list(labels)
    if any(lab == 0 for lab in labels):
        raise ContractError("labels must not contain the blank id 0")
    U = len(labels)

    def weight(t: int, u: int) -> float:
        acc = 0.0
        if u < U:
            acc += posteriors[t, u, labels[u]] * weight(t, u + 1)
        if t < T - 1:
            acc += posteriors[t, u, 0] * weight(t + 1, u)
        if t == T - 1 and u == U:
            acc += posteriors[t, u, 0]
        return acc

    return -math.log(weight(0, 0))


# --------------------------------------------------------------------------
# Per-batch E2E and ILM losses
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskLosses:
    asr: Tensor
    cap: Tensor
    pause: Tensor

    def values(self) -> dict[str, float]:
        return {"asr": self.asr.item(), "cap": self.cap.item(), "pause": self.pause.item()}


def _zero_scalar() -> Tensor:
    return Tensor(np.zeros(()))


def zero_task_losses() -> TaskLosses:
    return TaskLosses(_zero_scalar(), _zero_scalar(), _zero_scalar())


def _utterance_e2e(features: np.ndarray, bundle: LabelBundle, params: ModelParams):
    c = params.config
    frames = encode(features, params)
    T = frames.shape[0]
    U = len(bundle)
    if T < U + 1:
        raise ContractError(f"need T >= U+1 frames, got T={T}, U={U}")
    if any(lab == 0 for lab in bundle.asr):
        raise ContractError("labels must not contain the blank id 0")
    preds = predict_rows(history_rows(bundle.asr, U + 1, c), params)

    # Row t*(U+1)+u of each grid matrix corresponds to lattice cell (t, u).
    rows = np.repeat(np.arange(T), U) * (U + 1) + np.tile(np.arange(U), T)

    s_asr = joint_grid(frames, preds, "asr", params)
    s0 = nm.column(s_asr, 0)
    log_b = nm.log_sigmoid(s0)
    log_nb = nm.log_sigmoid(nm.neg(s0))
    lb_asr = nm.reshape(log_b, (T, U + 1))
    emit_nb = nm.take(log_nb, rows)

    ls_asr = nm.log_softmax_rows(nm.slice_cols(s_asr, 1, c.V + 1))
    asr_cols = np.asarray(bundle.asr, dtype=np.intp) - 1
    le_asr = nm.reshape(
        nm.add(nm.gather_elems(ls_asr, rows, np.tile(asr_cols, T)), emit_nb), (T, U)
    )
    nll_asr = rnnt_nll(lb_asr, le_asr)

    s_cap = joint_grid(frames, preds, "cap", params)
    ls_cap = nm.log_softmax_rows(s_cap)
    cap_cols = np.asarray(bundle.cap, dtype=np.intp) - 1
    le_cap = nm.reshape(
        nm.add(nm.gather_elems(ls_cap, rows, np.tile(cap_cols, T)), emit_nb), (T, U)
    )
    nll_cap = rnnt_nll(lb_asr, le_cap)  # shared blank grid (Eq. 6 coupling)

    s_pause = joint_grid(frames, preds, "pause", params)
    s0_p = nm.column(s_pause, 0)
    lb_pause = nm.reshape(nm.log_sigmoid(s0_p), (T, U + 1))
    emit_nb_p = nm.take(nm.log_sigmoid(nm.neg(s0_p)), rows)
    ls_pause = nm.log_softmax_rows(nm.slice_cols(s_pause, 1, 4))
    pause_cols = np.asarray(bundle.pause, dtype=np.intp) - 1
    le_pause = nm.reshape(
        nm.add(nm.gather_elems(ls_pause, rows, np.tile(pause_cols, T)), emit_nb_p), (T, U)
    )
    nll_pause = rnnt_nll(lb_pause, le_pause)

    return nll_asr, nll_cap, nll_pause


def e2e_losses(batch, params: ModelParams) -> TaskLosses:
    """Batch-mean transducer NLL per head over (features, bundle) pairs.

    Every head's prediction-network input is the asr label history.
    """
    if not batch:
        return zero_task_losses()
    per_head: list[list[Tensor]] = [[], [], []]
    for example in batch:
        nlls = _utterance_e2e(example.features, example.bundle, params)
        for acc, nll in zip(per_head, nlls):
            acc.append(nll)
    w = 1.0 / len(batch)
    return TaskLosses(*(nm.weighted_sum([(w, t) for t in head]) for head in per_head))


def _utterance_ilm(bundle: LabelBundle, params: ModelParams):
    c = params.config
    U = len(bundle)
    preds = predict_rows(history_rows(bundle.asr, U, c), params)
    rows = np.arange(U)

    s_asr = ilm_logit_rows(preds, "asr", params)
    ls_asr = nm.log_softmax_rows(nm.slice_cols(s_asr, 1, c.V + 1))
    ll_asr = nm.gather_elems(ls_asr, rows, np.asarray(bundle.asr, dtype=np.intp) - 1)

    s_cap = ilm_logit_rows(preds, "cap", params)
    ls_cap = nm.log_softmax_rows(s_cap)
    ll_cap = nm.gather_elems(ls_cap, rows, np.asarray(bundle.cap, dtype=np.intp) - 1)

    s_pause = ilm_logit_rows(preds, "pause", params)
    ls_pause = nm.log_softmax_rows(nm.slice_cols(s_pause, 1, 4))
    ll_pause = nm.gather_elems(ls_pause, rows, np.asarray(bundle.pause, dtype=np.intp) - 1)

    return (nm.neg(nm.total(ll_asr)), nm.neg(nm.total(ll_cap)), nm.neg(nm.total(ll_pause)))


def ilm_losses(batch, params: ModelParams) -> TaskLosses:
    """Internal-LM NLL per head over text-only bundles, normalized by the
    total token count of the batch."""
    sums: list[list[Tensor]] = [[], [], []]
    n_tokens = 0
    for example in batch:
        bundle = example.bundle
        if len(bundle) == 0:
            continue
        n_tokens += len(bundle)
        for acc, nll in zip(sums, _utterance_ilm(bundle, params)):
            acc.append(nll)
    if n_tokens == 0:
        return zero_task_losses()
    w = 1.0 / n_tokens
    return TaskLosses(*(nm.weighted_sum([(w, t) for t in head]) for head in sums))


# --------------------------------------------------------------------------
# Joint objective
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LossReport:
    """Component losses for one step; ``total`` carries the gradient."""

    e2e: TaskLosses
    ilm: TaskLosses
    total: Tensor
    beta: float
    alpha_cap: float
    alpha_pause: float

    def to_dict(self) -> dict[str, float]:
        out = {f"e2e_{k}": v for k, v in self.e2e.values().items()}
        out.update({f"ilm_{k}": v for k, v in self.ilm.values().items()})
        for task, weight in (("asr", 1.0), ("cap", self.alpha_cap), ("pause", self.alpha_pause)):
            out[f"jeit_{task}"] = out[f"e2e_{task}"] + self.beta * out[f"ilm_{task}"]
        out["total"] = self.total.item()
        out["beta"] = self.beta
        out["alpha_cap"] = self.alpha_cap
        out["alpha_pause"] = self.alpha_pause
        return out


def jeit_total(
    e2e: TaskLosses, ilm: TaskLosses, beta: float, alpha_cap: float, alpha_pause: float
) -> LossReport:
    """Combine the six component losses into the weighted total."""
    for name, value in (("beta", beta), ("alpha_cap", alpha_cap), ("alpha_pause", alpha_pause)):
        if value < 0:
            raise ConfigError(f"{name} must be >= 0, got {value}")
    total = nm.weighted_sum(
        [
            (1.0, e2e.asr),
            (beta, ilm.asr),
            (alpha_cap, e2e.cap),
            (alpha_cap * beta, ilm.cap),
            (alpha_pause, e2e.pause),
            (alpha_pause * beta, ilm.pause),
        ]
    )
    return LossReport(e2e, ilm, total, beta, alpha_cap, alpha_pause)


def recombine(report_dict: dict[str, float]) -> float:
    """Recompute the total from a logged report line (consistency check)."""
    beta = report_dict["beta"]
    return (
        report_dict["e2e_asr"]
        + beta * report_dict["ilm_asr"]
        + report_dict["alpha_cap"] * (report_dict["e2e_cap"] + beta * report_dict["ilm_cap"])
        + report_dict["alpha_pause"] * (report_dict["e2e_pause"] + beta * report_dict["ilm_pause"])
    )

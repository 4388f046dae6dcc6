"""Evaluation metrics: WER, uppercase error rate, eos precision/recall.

UER follows the deletion rule: remove every lowercase character from both
transcripts, keep the remaining characters of each word grouped, drop
words left without uppercase, and score standard WER over the residual
words.  eos hypotheses are matched to references through the edit
alignment of the asr token sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

_MATCH, _SUB, _DEL, _INS = "match", "sub", "del", "ins"


@dataclass(frozen=True)
class WerCounts:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return self.errors / max(self.ref_len, 1)

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "ref_len": self.ref_len,
        }


def edit_alignment(ref: Sequence, hyp: Sequence) -> tuple[WerCounts, list[tuple[str, int | None, int | None]]]:
    """Levenshtein alignment with unit costs.

    Returns the counts and the op list [(op, ref index, hyp index)], with
    ties broken in favor of substitution over insertion+deletion.
    """
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub_cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            dist[i][j] = min(
                dist[i - 1][j - 1] + sub_cost,
                dist[i - 1][j] + 1,
                dist[i][j - 1] + 1,
            )
    ops: list[tuple[str, int | None, int | None]] = []
    i, j = n, m
    subs = ins = dels = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] == hyp[j - 1]:
                ops.append((_MATCH, i - 1, j - 1))
            else:
                ops.append((_SUB, i - 1, j - 1))
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append((_DEL, i - 1, None))
            dels += 1
            i -= 1
        else:
            ops.append((_INS, None, j - 1))
            ins += 1
            j -= 1
    ops.reverse()
    return WerCounts(subs, ins, dels, n), ops


def wer(ref: Sequence, hyp: Sequence) -> WerCounts:
    """Word error rate counts over two token sequences."""
    return edit_alignment(ref, hyp)[0]


# --------------------------------------------------------------------------
# Uppercase error rate
# --------------------------------------------------------------------------


def residual_uppercase_words(text: str) -> list[str]:
    """Delete lowercase characters; keep each word's residue grouped and
    drop words left without any uppercase letter."""
    out = []
    for word in text.split():
        residue = "".join(c for c in word if not c.islower())
        if any(c.isupper() for c in residue):
            out.append(residue)
    return out


def uer(ref_text: str, hyp_text: str) -> float:
    """Uppercase error rate between two cased transcripts."""
    ref_res = residual_uppercase_words(ref_text)
    hyp_res = residual_uppercase_words(hyp_text)
    if not ref_res:
        # Degenerate case: nothing uppercase in the reference; count any
        # hypothesis residue as insertions over a denominator of 1.
        return float(len(hyp_res))
    return wer(ref_res, hyp_res).rate


def uer_counts(ref_text: str, hyp_text: str) -> WerCounts:
    ref_res = residual_uppercase_words(ref_text)
    hyp_res = residual_uppercase_words(hyp_text)
    return wer(ref_res, hyp_res)


# --------------------------------------------------------------------------
# eos precision / recall
# --------------------------------------------------------------------------


def match_eos(
    ref_tokens: Sequence[int],
    hyp_tokens: Sequence[int],
    ref_eos_positions: Sequence[int],
    hyp_eos_positions: Sequence[int],
    window: int = 0,
) -> tuple[int, int, int]:
    """(TP, FP, FN) for one utterance.

    Positions index tokens in their own sequence (the token immediately
    preceding the eos).  A hypothesis eos is a true positive iff its
    aligned reference position carries an unmatched reference eos within
    ``window`` token positions.
    """
    _, ops = edit_alignment(ref_tokens, hyp_tokens)
    hyp_to_ref: dict[int, int] = {}
    last_ref = -1
    for op, i, j in ops:
        if op in (_MATCH, _SUB):
            last_ref = i
            hyp_to_ref[j] = i
        elif op == _DEL:
            last_ref = i
        else:  # insertion: attach to the last consumed reference token
            hyp_to_ref[j] = last_ref
    unmatched = list(ref_eos_positions)
    tp = fp = 0
    for pos in hyp_eos_positions:
        mapped = hyp_to_ref.get(pos, last_ref if pos >= len(hyp_tokens) else -1)
        hit = None
        for k, ref_pos in enumerate(unmatched):
            if abs(ref_pos - mapped) <= window:
                hit = k
                break
        if hit is None:
            fp += 1
        else:
            tp += 1
            unmatched.pop(hit)
    return tp, fp, len(unmatched)


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    """P and R with the 0/0 -> 1.0 convention."""
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    return precision, recall


# --------------------------------------------------------------------------
# Corpus-level summary
# --------------------------------------------------------------------------


@dataclass
class EvalSummary:
    """Aggregated metrics over one evaluation set.

    eos precision/recall are corpus-level (micro); the per-utterance
    macro averages are reported as secondary columns.
    """

    wer_counts: WerCounts = field(default_factory=lambda: WerCounts(0, 0, 0, 0))
    uer_errors: int = 0
    uer_ref_len: int = 0
    eos_tp: int = 0
    eos_fp: int = 0
    eos_fn: int = 0
    n_utterances: int = 0
    macro_precision_sum: float = 0.0
    macro_recall_sum: float = 0.0

    @property
    def wer(self) -> float:
        return self.wer_counts.rate

    @property
    def uer(self) -> float:
        return self.uer_errors / max(self.uer_ref_len, 1)

    @property
    def eos_precision(self) -> float:
        return precision_recall(self.eos_tp, self.eos_fp, self.eos_fn)[0]

    @property
    def eos_recall(self) -> float:
        return precision_recall(self.eos_tp, self.eos_fp, self.eos_fn)[1]

    def to_dict(self) -> dict:
        return {
            "wer": self.wer,
            "uer": self.uer,
            "eos_precision": self.eos_precision,
            "eos_recall": self.eos_recall,
            "eos_precision_macro": self.macro_precision_sum / max(self.n_utterances, 1),
            "eos_recall_macro": self.macro_recall_sum / max(self.n_utterances, 1),
            "counts": {
                **self.wer_counts.to_dict(),
                "eos_tp": self.eos_tp,
                "eos_fp": self.eos_fp,
                "eos_fn": self.eos_fn,
                "n_utterances": self.n_utterances,
            },
        }


def add_utterance(
    summary: EvalSummary,
    ref_words: Sequence[str],
    hyp_words: Sequence[str],
    ref_text: str,
    hyp_text: str,
    ref_tokens: Sequence[int],
    hyp_tokens: Sequence[int],
    ref_eos_positions: Sequence[int],
    hyp_eos_positions: Sequence[int],
    window: int = 0,
) -> None:
    """Fold one utterance's metrics into the running summary."""
    w = wer(ref_words, hyp_words)
    summary.wer_counts = WerCounts(
        summary.wer_counts.substitutions + w.substitutions,
        summary.wer_counts.insertions + w.insertions,
        summary.wer_counts.deletions + w.deletions,
        summary.wer_counts.ref_len + w.ref_len,
    )
    ref_res = residual_uppercase_words(ref_text)
    hyp_res = residual_uppercase_words(hyp_text)
    if ref_res:
        u = wer(ref_res, hyp_res)
        summary.uer_errors += u.errors
        summary.uer_ref_len += u.ref_len
    else:
        summary.uer_errors += len(hyp_res)
        summary.uer_ref_len += 1 if hyp_res else 0
    tp, fp, fn = match_eos(ref_tokens, hyp_tokens, ref_eos_positions, hyp_eos_positions, window)
    summary.eos_tp += tp
    summary.eos_fp += fp
    summary.eos_fn += fn
    p, r = precision_recall(tp, fp, fn)
    summary.macro_precision_sum += p
    summary.macro_recall_sum += r
    summary.n_utterances += 1

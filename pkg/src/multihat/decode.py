"""Greedy frame-synchronous decoding.

Per frame: emit asr tokens while the asr posterior argmax is non-blank
(up to a per-frame cap), deciding capitalization for every emitted token
from the cap head's conditional probability; then read the pause head
once with the settled history and record a pause/eos event when one of
those symbols is the argmax of the pause posterior (which owns its
blank, so pause events are not tied to asr emissions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .labelkit import CAP_ID, EOS_ID, MARK_EOS, MARK_PAUSE, NON_CAP_ID, PAUSE_ID, Vocab, render
from .model import ModelParams, encode, joint, predict
from .numerics import Tensor, _sigmoid_array


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def _hat_posterior(logits: np.ndarray) -> np.ndarray:
    """[b, (1-b)*softmax(rest)] from [blank logit, symbol logits...]."""
    b = float(_sigmoid_array(logits[0]))
    return np.concatenate([[b], (1.0 - b) * _softmax(logits[1:])])


@dataclass(frozen=True)
class DecodeResult:
    """Emitted tokens with frame indices, cap decisions, and pause events."""

    tokens: tuple[int, ...]
    frames: tuple[int, ...]
    cap_flags: tuple[bool, ...]
    pause_events: tuple[tuple[int, str], ...]  # (frame, "pause"|"eos")
    text: str

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens": list(self.tokens),
            "frames": list(self.frames),
            "cap_flags": list(self.cap_flags),
            "pause_events": [[f, k] for f, k in self.pause_events],
        }


def greedy_decode(
    features: np.ndarray,
    params: ModelParams,
    vocab: Vocab,
    cap_threshold: float = 0.5,
    max_symbols_per_frame: int = 8,
) -> DecodeResult:
    """Decode one utterance; degenerate audio yields an empty result.

    A token is flagged capitalized iff P(cap | emission) exceeds
    ``cap_threshold`` strictly.  ``max_symbols_per_frame`` guards against
    degenerate non-blank loops.
    """
    if not 0.0 < cap_threshold < 1.0:
        raise ContractError(f"cap threshold must lie in (0, 1), got {cap_threshold}")
    if max_symbols_per_frame < 1:
        raise ContractError("max_symbols_per_frame must be >= 1")
    frames_enc = encode(features, params).data

    history: list[int] = []
    tokens: list[int] = []
    frames: list[int] = []
    cap_flags: list[bool] = []
    events: list[tuple[int, str]] = []

    g = predict(history, params)
    for t in range(frames_enc.shape[0]):
        f_t = Tensor(frames_enc[t])
        emitted = 0
        while emitted < max_symbols_per_frame:
            asr_post = _hat_posterior(joint(f_t, g, "asr", params).data)
            token = int(np.argmax(asr_post))
            if token == 0:
                break
            p_cap = float(_softmax(joint(f_t, g, "cap", params).data)[0])
            tokens.append(token)
            frames.append(t)
            cap_flags.append(p_cap > cap_threshold)
            history.append(token)
            g = predict(history, params)
            emitted += 1
        pause_post = _hat_posterior(joint(f_t, g, "pause", params).data)
        symbol = int(np.argmax(pause_post))
        if symbol == PAUSE_ID:
            events.append((t, MARK_PAUSE))
        elif symbol == EOS_ID:
            events.append((t, MARK_EOS))

    cap_ids = [CAP_ID if flag else NON_CAP_ID for flag in cap_flags]
    text = render(tokens, cap_ids, vocab)
    return DecodeResult(tuple(tokens), tuple(frames), tuple(cap_flags), tuple(events), text)

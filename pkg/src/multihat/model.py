"""Multi-output HAT transducer: encoder, prediction network, three heads.

The three task heads (asr, cap, pause) share the encoder frame f_t and
the prediction feature g_u but own disjoint joint parameters.  Each head
computes

    h = P.f_t + Q.g_u + b_h        s = A.tanh(h) + b_s

The asr head emits V+1 logits (blank slot + V wordpieces), the pause
head 4 (its own blank + non-pause/pause/eos), and the cap head just 2
(cap/non-cap): capitalization never owns a blank, it borrows the asr
blank so a cap tag is emitted exactly when an asr token is.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ContractError, ShapeError
from .numerics import Tensor

HEADS = ("asr", "cap", "pause")

# Pause-head posterior is [blank, non-pause, pause, eos]; cap-head logits
# are [cap, non-cap] with the shared blank prepended in the posterior.
CAP_LOGITS = 2
PAUSE_LOGITS = 4

_CHECKPOINT_FORMAT = "multihat-checkpoint-v1"


@dataclass(frozen=True)
class ModelConfig:
    """Toy-scale dimensions; defaults train on a CPU in minutes."""

    V: int
    D_a: int = 16
    D_p: int = 32
    D_h: int = 32
    embed_dim: int = 32
    encoder_width: int = 32
    encoder_layers: int = 2
    feature_dim: int = 8
    context: int = 2  # previous asr tokens fed to the prediction network

    def __post_init__(self) -> None:
        if self.V < 2:
            raise ConfigError(f"V must be >= 2, got {self.V}")
        for name in ("D_a", "D_p", "D_h", "embed_dim", "encoder_width", "feature_dim", "context"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.encoder_layers < 1:
            raise ConfigError("encoder_layers must be >= 1")

    @property
    def sentinel_id(self) -> int:
        """Start-of-sequence embedding row (one past the real tokens)."""
        return self.V + 1

    def head_logits(self, head: str) -> int:
        if head == "asr":
            return self.V + 1
        if head == "cap":
            return CAP_LOGITS
        if head == "pause":
            return PAUSE_LOGITS
        raise ContractError(f"unknown head {head!r}")


class ModelParams:
    """All learnable weights, addressable by name.

    Creation order (and therefore RNG consumption) is fixed, so a given
    (config, seed) pair always produces bit-identical parameters.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None) -> None:
        self.config = config
        self._tensors: dict[str, Tensor] = {}

        def make(name: str, shape: tuple[int, ...], fan_in: int | None) -> None:
            if rng is None:
                data = np.zeros(shape)
            elif fan_in is None:
                data = np.zeros(shape)
            else:
                data = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
            self._tensors[name] = Tensor(data)

        c = config
        in_dim = 2 * c.feature_dim  # current frame plus one frame of left context
        widths = [in_dim] + [c.encoder_width] * (c.encoder_layers - 1) + [c.D_a]
        for i in range(c.encoder_layers):
            make(f"enc.w{i}", (widths[i + 1], widths[i]), widths[i])
            make(f"enc.b{i}", (widths[i + 1],), None)
        rows = c.V + 2  # blank row (unused) + V tokens + sentinel
        for slot in range(c.context):
            make(f"pred.emb{slot}", (rows, c.embed_dim), c.embed_dim)
        make("pred.w", (c.D_p, c.context * c.embed_dim), c.context * c.embed_dim)
        make("pred.b", (c.D_p,), None)
        for head in HEADS:
            out = c.head_logits(head)
            make(f"{head}.p", (c.D_h, c.D_a), c.D_a)
            make(f"{head}.q", (c.D_h, c.D_p), c.D_p)
            make(f"{head}.bh", (c.D_h,), None)
            make(f"{head}.a", (out, c.D_h), c.D_h)
            make(f"{head}.bs", (out,), None)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return sorted(self._tensors.items())

    def zero_grads(self) -> None:
        nm.zero_grads(t for _, t in self.named_tensors())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self._tensors.values())


# --------------------------------------------------------------------------
# Forward components
# --------------------------------------------------------------------------


def encode(features: np.ndarray, params: ModelParams) -> Tensor:
    """Map (T, F) features to (T, D_a) frames, strictly causally.

    Each layer-0 input is the current frame concatenated with the
    previous one, so f_t depends on features[0..t] only.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ContractError(f"encode needs a nonempty (T, F) array, got shape {feats.shape}")
    if feats.shape[1] != params.config.feature_dim:
        raise ShapeError(
            f"feature dim {feats.shape[1]} != configured {params.config.feature_dim}"
        )
    x = Tensor(feats)
    h = nm.concat_cols(nm.shift_rows_down(x), x)
    for i in range(params.config.encoder_layers):
        h = nm.tanh(nm.linear(h, params[f"enc.w{i}"], params[f"enc.b{i}"]))
    return h


def history_rows(labels, n_rows: int, config: ModelConfig) -> np.ndarray:
    """Token-history matrix: row u holds the last ``context`` tokens before
    position u, left-padded with the sentinel id."""
    out = np.full((n_rows, config.context), config.sentinel_id, dtype=np.intp)
    for u in range(n_rows):
        hist = labels[max(0, u - config.context) : u]
        if hist:
            out[u, -len(hist) :] = hist
    return out


def _check_token_ids(ids: np.ndarray, config: ModelConfig) -> None:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 1 or ids.max() > config.V):
        bad = int(ids.min()) if ids.min() < 1 else int(ids.max())
        raise ContractError(f"token id {bad} outside the vocabulary [1, {config.V}]")


def predict_rows(histories: np.ndarray, params: ModelParams) -> Tensor:
    """Prediction features for a batch of token histories: (n, N) -> (n, D_p)."""
    c = params.config
    histories = np.asarray(histories, dtype=np.intp)
    if histories.ndim != 2 or histories.shape[1] != c.context:
        raise ShapeError(f"histories must be (n, {c.context}), got {histories.shape}")
    real = histories[histories != c.sentinel_id]
    _check_token_ids(real, c)
    cat = nm.gather_rows(params["pred.emb0"], histories[:, 0])
    for slot in range(1, c.context):
        cat = nm.concat_cols(cat, nm.gather_rows(params[f"pred.emb{slot}"], histories[:, slot]))
    return nm.linear(cat, params["pred.w"], params["pred.b"])


def predict(history, params: ModelParams) -> Tensor:
    """Prediction feature g_u for one history (last ``context`` token ids)."""
    c = params.config
    hist = list(history)[-c.context :]
    row = [c.sentinel_id] * (c.context - len(hist)) + hist
    return nm.reshape(predict_rows(np.array([row], dtype=np.intp), params), (c.D_p,))


def joint_rows(frames: Tensor, preds: Tensor, head: str, params: ModelParams) -> Tensor:
    """Per-head logits for aligned (frame, prediction) row pairs."""
    if head not in HEADS:
        raise ContractError(f"unknown head {head!r}")
    h = nm.add(
        nm.linear(frames, params[f"{head}.p"], params[f"{head}.bh"]),
        nm.matmul_t(preds, params[f"{head}.q"]),
    )
    return nm.linear(nm.tanh(h), params[f"{head}.a"], params[f"{head}.bs"])


def joint(f_t: Tensor, g_u: Tensor, head: str, params: ModelParams) -> Tensor:
    """Head logits s_{t,u} for a single (f_t, g_u) pair."""
    c = params.config
    frames = nm.reshape(f_t, (1, c.D_a))
    preds = nm.reshape(g_u, (1, c.D_p))
    return nm.reshape(joint_rows(frames, preds, head, params), (c.head_logits(head),))


def joint_grid(frames: Tensor, preds: Tensor, head: str, params: ModelParams) -> Tensor:
    """Logits for the full (frame x prediction) grid, row-major with the
    prediction index fastest: row t*n_pred + u."""
    n_pred = preds.shape[0]
    t_frames = frames.shape[0]
    return joint_rows(
        nm.repeat_rows(frames, n_pred),
        nm.tile_rows(preds, t_frames),
        head,
        params,
    )


def ilm_logit_rows(preds: Tensor, head: str, params: ModelParams) -> Tensor:
    """Head logits with the encoder mocked by zero vectors (text-only mode)."""
    if head not in HEADS:
        raise ContractError(f"unknown head {head!r}")
    h = nm.add(nm.matmul_t(preds, params[f"{head}.q"]), params[f"{head}.bh"])
    return nm.linear(nm.tanh(h), params[f"{head}.a"], params[f"{head}.bs"])


# --------------------------------------------------------------------------
# Posteriors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSlice:
    """HAT-factored output distributions for all three heads at one (t, u)."""

    asr: np.ndarray  # [blank, V tokens]
    cap: np.ndarray  # [shared blank, cap, non-cap]
    pause: np.ndarray  # [own blank, non-pause, pause, eos]
    asr_logits: np.ndarray
    cap_logits: np.ndarray
    pause_logits: np.ndarray


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def posterior(s_asr, s_cap, s_pause, V: int) -> PosteriorSlice:
    """Combine raw head logits into the three factored posteriors.

    The emission probability b = sigmoid(s_asr[0]) scales the asr and cap
    token probabilities; the pause head factors its own blank the same way.
    """
    s_asr, s_cap, s_pause = _as_array(s_asr), _as_array(s_cap), _as_array(s_pause)
    if s_asr.shape != (V + 1,):
        raise ShapeError(f"asr logits must have length V+1={V + 1}, got {s_asr.shape}")
    if s_cap.shape != (CAP_LOGITS,):
        raise ShapeError(f"cap logits must have length {CAP_LOGITS}, got {s_cap.shape}")
    if s_pause.shape != (PAUSE_LOGITS,):
        raise ShapeError(f"pause logits must have length {PAUSE_LOGITS}, got {s_pause.shape}")
    b = float(nm._sigmoid_array(s_asr[0]))
    asr = np.concatenate([[b], (1.0 - b) * _softmax(s_asr[1:])])
    cap = np.concatenate([[b], (1.0 - b) * _softmax(s_cap)])
    bp = float(nm._sigmoid_array(s_pause[0]))
    pause = np.concatenate([[bp], (1.0 - bp) * _softmax(s_pause[1:])])
    return PosteriorSlice(asr, cap, pause, s_asr, s_cap, s_pause)


def ilm_next_token_distribution(history, head: str, params: ModelParams) -> np.ndarray:
    """Next-token probabilities from the internal LM (audio ignored).

    The blank slot is dropped and the remaining logits renormalized; the
    cap head has no blank slot, so its two logits are used as-is.
    """
    g = nm.reshape(predict(history, params), (1, params.config.D_p))
    s = ilm_logit_rows(g, head, params).data[0]
    if head == "cap":
        return _softmax(s)
    return _softmax(s[1:])


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(path, config: ModelConfig, params: ModelParams) -> None:
    """Write a self-describing dump: one json header line, then raw
    little-endian float64 tensor data in header order."""
    names = [name for name, _ in params.named_tensors()]
    header = {
        "format": _CHECKPOINT_FORMAT,
        "config": asdict(config),
        "tensors": [[name, list(params[name].shape)] for name in names],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in names:
            f.write(params[name].data.astype("<f8").tobytes())


def load_checkpoint(path, expect_config: ModelConfig | None = None):
    """Read a checkpoint, failing loudly on any config or shape mismatch.

    Returns (config, params).
    """
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: not a checkpoint file ({exc})") from None
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: unknown checkpoint format {header.get('format')!r}")
        config = ModelConfig(**header["config"])
        if expect_config is not None and config != expect_config:
            raise ConfigError(
                f"{path}: checkpoint config {config} does not match expected {expect_config}"
            )
        params = ModelParams(config, rng=None)
        expected = [[name, list(t.shape)] for name, t in params.named_tensors()]
        if header["tensors"] != expected:
            raise ConfigError(f"{path}: tensor table does not match the declared config")
        for name, shape in header["tensors"]:
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise ConfigError(f"{path}: truncated tensor data for {name!r}")
            params._tensors[name] = Tensor(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        if f.read(1):
            raise ConfigError(f"{path}: trailing bytes after tensor data")
    return config, params

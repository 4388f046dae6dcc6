"""Synthetic corpus generation and dataset loading.

Utterances are short assistant-style queries built from templates whose
slots hold either a capitalized named entity or a lowercase filler, so
capitalization is a lexical property of the slot word rather than of the
carrier phrase.  Head and tail entity inventories are disjoint: tail
entities never occur in paired training data but dominate the unpaired
text, which is where a text-injected model can learn them.

"Audio" is a per-wordpiece signature vector repeated for a few frames
plus Gaussian noise; pause and eos positions insert near-silent frames.
Capitalization leaves no acoustic trace.  Paired-train pause labels drop
the terminal eos with a configurable probability, standing in for the
noisy alignment-based labeling that upstream pipelines produce; eval
references keep the full truth.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .labelkit import (
    EOS_ID,
    MARK_EOS,
    MARK_PAUSE,
    PAUSE_ID,
    AnnotatedTranscript,
    LabelBundle,
    Vocab,
    build_vocab,
    factorize,
    save_vocab,
    unpaired_transcript,
)

PAIRED_TRAIN = "paired_train"
UNPAIRED_TRAIN = "unpaired_train"
HEAD_EVAL = "head_eval"
TAIL_EVAL = "tail_eval"
PAUSE_EVAL = "pause_eval"
SPLITS = (PAIRED_TRAIN, UNPAIRED_TRAIN, HEAD_EVAL, TAIL_EVAL, PAUSE_EVAL)

_SYLLABLES = (
    "ba", "be", "bo", "da", "de", "do", "ga", "ge", "go", "ka", "ke", "ko",
    "la", "le", "lo", "ma", "me", "mo", "na", "ne", "no", "pa", "pe", "po",
    "ra", "re", "ro", "sa", "se", "so", "ta", "te", "to", "va", "ve", "vo",
)

# (template, lowercase fillers for the slot); the pause, when sampled,
# lands in the gap just before the slot.
_ENTITY_TEMPLATES = (
    ("directions to {}", ("home", "work", "school", "the airport", "the station")),
    ("call {}", ("mom", "dad", "home", "work", "the office")),
    ("play {}", ("music", "jazz", "news", "the radio", "podcasts")),
    ("how far is {}", ("home", "work", "the beach", "downtown")),
    ("navigate to {}", ("home", "work", "the gym", "the park")),
    ("driving time to {}", ("home", "work", "the mall")),
)

_PLAIN_UTTERANCES = (
    "what time is it",
    "set a timer for ten minutes",
    "turn on the lights",
    "turn off the lights",
    "volume up",
    "volume down",
    "stop the music",
    "what day is it",
    "open the garage",
    "good morning",
    "tell me a joke",
    "will it rain tomorrow",
)

# Sub-stream tags for seeding; fixed so runs are reproducible per split.
_STREAMS = {name: i for i, name in enumerate(("entities", *SPLITS, "signatures"))}


@dataclass(frozen=True)
class CorpusSpec:
    """Everything needed to regenerate the corpus byte-for-byte."""

    seed: int = 0
    n_paired_train: int = 2000
    n_unpaired_train: int = 4000
    n_head_eval: int = 200
    n_tail_eval: int = 200
    n_pause_eval: int = 200
    n_head_entities: int = 40
    n_tail_entities: int = 40
    head_entities: tuple[str, ...] | None = None
    tail_entities: tuple[str, ...] | None = None
    entity_fill_prob: float = 0.6
    plain_prob: float = 0.2
    pause_prob: float = 0.35
    eos_label_dropout: float = 0.5
    unpaired_tail_fraction: float = 0.75
    feature_dim: int = 8
    frames_per_piece: tuple[int, int] = (2, 4)
    silence_frames: tuple[int, int] = (2, 3)
    noise_amplitude: float = 0.1
    vocab_size: int = 200

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        for name in (
            "entity_fill_prob", "plain_prob", "pause_prob",
            "eos_label_dropout", "unpaired_tail_fraction",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("frames_per_piece", "silence_frames"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} must be an increasing range with min >= 1")
        if self.noise_amplitude < 0:
            raise ConfigError("noise_amplitude must be >= 0")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")


def _rng(spec: CorpusSpec, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((spec.seed, _STREAMS[stream])))


def _utterance_rng(spec: CorpusSpec, utt_id: str) -> np.random.Generator:
    digest = hashlib.sha256(utt_id.encode("utf-8")).digest()
    entropy = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence((spec.seed, entropy)))


# --------------------------------------------------------------------------
# Text sampling
# --------------------------------------------------------------------------


def _make_entity(rng: np.random.Generator) -> str:
    words = []
    for _ in range(2 if rng.random() < 0.7 else 1):
        n_syll = 2 + int(rng.random() < 0.5)
        word = "".join(_SYLLABLES[rng.integers(0, len(_SYLLABLES))] for _ in range(n_syll))
        words.append(word.capitalize())
    return " ".join(words)


def _make_entity_sets(spec: CorpusSpec) -> tuple[tuple[str, ...], tuple[str, ...]]:
    rng = _rng(spec, "entities")
    taken: set[str] = set()

    def draw(count: int) -> tuple[str, ...]:
        out = []
        while len(out) < count:
            name = _make_entity(rng)
            if name not in taken:
                taken.add(name)
                out.append(name)
        return tuple(out)

    head = spec.head_entities if spec.head_entities is not None else draw(spec.n_head_entities)
    taken.update(head)
    tail = spec.tail_entities if spec.tail_entities is not None else draw(spec.n_tail_entities)
    if set(head) & set(tail):
        raise ConfigError(
            f"head and tail entity lists overlap: {sorted(set(head) & set(tail))}"
        )
    return tuple(head), tuple(tail)


def _sample_text(
    rng: np.random.Generator,
    spec: CorpusSpec,
    entities: tuple[str, ...],
    force_entity: bool = False,
) -> tuple[str, tuple[tuple[int, str], ...]]:
    """One utterance: cased text plus ground-truth pause marks (eos last)."""
    marks: list[tuple[int, str]] = []
    if not force_entity and rng.random() < spec.plain_prob:
        text = _PLAIN_UTTERANCES[rng.integers(0, len(_PLAIN_UTTERANCES))]
        words = text.split()
        if len(words) > 1 and rng.random() < spec.pause_prob:
            marks.append((int(rng.integers(0, len(words) - 1)), MARK_PAUSE))
    else:
        template, fillers = _ENTITY_TEMPLATES[rng.integers(0, len(_ENTITY_TEMPLATES))]
        if force_entity or rng.random() < spec.entity_fill_prob:
            slot = entities[rng.integers(0, len(entities))]
        else:
            slot = fillers[rng.integers(0, len(fillers))]
        text = template.format(slot)
        words = text.split()
        slot_start = len(template.split("{}")[0].split())
        if rng.random() < spec.pause_prob:
            marks.append((slot_start - 1, MARK_PAUSE))
    words = text.split()
    marks.append((len(words) - 1, MARK_EOS))
    return text, tuple(marks)


# --------------------------------------------------------------------------
# Feature synthesis
# --------------------------------------------------------------------------


def piece_signatures(spec: CorpusSpec, vocab: Vocab) -> np.ndarray:
    """Fixed per-wordpiece acoustic signature vectors, (len(vocab), F)."""
    rng = _rng(spec, "signatures")
    return rng.normal(0.0, 1.0, size=(len(vocab), spec.feature_dim))


def synthesize_features(
    bundle: LabelBundle,
    spec: CorpusSpec,
    signatures: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Render a bundle to (T, F) frames.

    Each wordpiece's signature repeats for a sampled number of frames;
    pause and eos positions append near-silent frames.  Empty bundles get
    a single silence frame.
    """
    kmin, kmax = spec.frames_per_piece
    smin, smax = spec.silence_frames
    rows: list[np.ndarray] = []
    silence = np.zeros(spec.feature_dim)
    for pid, ptag in zip(bundle.asr, bundle.pause):
        k = int(rng.integers(kmin, kmax + 1))
        rows.extend([signatures[pid]] * k)
        if ptag in (PAUSE_ID, EOS_ID):
            rows.extend([silence] * int(rng.integers(smin, smax + 1)))
    if not rows:
        rows.append(silence)
    feats = np.stack(rows)
    if spec.noise_amplitude > 0:
        feats = feats + rng.normal(0.0, spec.noise_amplitude, size=feats.shape)
    return feats


# --------------------------------------------------------------------------
# Corpus generation
# --------------------------------------------------------------------------


def generate_corpus(spec: CorpusSpec, out_dir) -> dict[str, int]:
    """Write the vocab and all five splits; returns per-split counts.

    Deterministic: identical specs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head, tail = _make_entity_sets(spec)

    split_texts: dict[str, list[tuple[str, tuple[tuple[int, str], ...]]]] = {}

    rng = _rng(spec, PAIRED_TRAIN)
    split_texts[PAIRED_TRAIN] = [
        _sample_text(rng, spec, head) for _ in range(spec.n_paired_train)
    ]
    rng = _rng(spec, UNPAIRED_TRAIN)
    unpaired: list[str] = []
    for _ in range(spec.n_unpaired_train):
        if rng.random() < spec.unpaired_tail_fraction:
            text, _marks = _sample_text(rng, spec, tail, force_entity=True)
        else:
            text, _marks = _sample_text(rng, spec, head)
        unpaired.append(text)
    rng = _rng(spec, HEAD_EVAL)
    split_texts[HEAD_EVAL] = [_sample_text(rng, spec, head) for _ in range(spec.n_head_eval)]
    rng = _rng(spec, TAIL_EVAL)
    split_texts[TAIL_EVAL] = [
        _sample_text(rng, spec, tail, force_entity=True) for _ in range(spec.n_tail_eval)
    ]
    rng = _rng(spec, PAUSE_EVAL)
    split_texts[PAUSE_EVAL] = [_sample_text(rng, spec, head) for _ in range(spec.n_pause_eval)]

    corpus_texts = [t for t, _ in split_texts[PAIRED_TRAIN]] + unpaired
    vocab = build_vocab(corpus_texts, spec.vocab_size)
    save_vocab(vocab, out / "vocab.txt")
    signatures = piece_signatures(spec, vocab)

    counts: dict[str, int] = {}
    drop_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, len(_STREAMS))))
    for split, items in split_texts.items():
        path = out / f"{split}.jsonl"
        with open(path, "w", encoding="utf-8") as f:
            for i, (text, truth_marks) in enumerate(items):
                utt_id = f"{split}-{i:06d}"
                truth = AnnotatedTranscript(text, truth_marks)
                bundle = factorize(truth, vocab)
                feats = synthesize_features(bundle, spec, signatures, _utterance_rng(spec, utt_id))
                stored_marks = truth_marks
                if split == PAIRED_TRAIN and spec.eos_label_dropout > 0:
                    if drop_rng.random() < spec.eos_label_dropout:
                        stored_marks = tuple(m for m in truth_marks if m[1] != MARK_EOS)
                record = {
                    "id": utt_id,
                    "cased_text": text,
                    "pause_marks": [[w, k] for w, k in stored_marks],
                    "features": [[float(x) for x in row] for row in feats],
                }
                f.write(json.dumps(record, sort_keys=True) + "\n")
        counts[split] = len(items)

    path = out / f"{UNPAIRED_TRAIN}.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        for i, text in enumerate(unpaired):
            utt_id = f"{UNPAIRED_TRAIN}-{i:06d}"
            t = unpaired_transcript(text)
            record = {
                "id": utt_id,
                "cased_text": text,
                "pause_marks": [[w, k] for w, k in t.marks],
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    counts[UNPAIRED_TRAIN] = len(unpaired)

    meta = {
        "head_entities": list(head),
        "tail_entities": list(tail),
        "vocab_pieces": len(vocab),
        "counts": counts,
    }
    with open(out / "corpus_meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
        f.write("\n")
    return counts


# --------------------------------------------------------------------------
# Loading and batching
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedExample:
    id: str
    features: np.ndarray
    bundle: LabelBundle

    def __post_init__(self) -> None:
        if self.features.shape[0] < len(self.bundle) + 1:
            raise ContractError(
                f"{self.id}: {self.features.shape[0]} frames cannot fit "
                f"{len(self.bundle)} labels plus a final blank"
            )


@dataclass(frozen=True)
class UnpairedExample:
    id: str
    bundle: LabelBundle


def load_split(data_dir, split: str, vocab: Vocab):
    """Read one split; paired-style splits carry features, text-only not."""
    path = Path(data_dir) / f"{split}.jsonl"
    if not path.exists():
        raise ConfigError(f"missing split file: {path}")
    examples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            record = json.loads(line)
            marks = tuple((int(w), str(k)) for w, k in record["pause_marks"])
            bundle = factorize(AnnotatedTranscript(record["cased_text"], marks), vocab)
            if "features" in record:
                feats = np.asarray(record["features"], dtype=np.float64)
                examples.append(PairedExample(record["id"], feats, bundle))
            else:
                examples.append(UnpairedExample(record["id"], bundle))
    return examples


def batcher(examples, batch_size: int, seed: int):
    """Infinite deterministic batch stream; epoch-level shuffle keyed by
    (seed, epoch); the final partial batch of each epoch is kept."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if not examples:
        raise ConfigError("cannot batch an empty split")
    epoch = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence((seed, epoch)))
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), batch_size):
            yield [examples[k] for k in order[start : start + batch_size]]
        epoch += 1

"""Wordpiece vocabulary, transcript annotation, and label factorization.

An annotated transcript (cased text plus pause marks) is factored into
three parallel label sequences of equal length:

* ``asr``   lowercase wordpiece ids,
* ``cap``   one capitalization tag per wordpiece,
* ``pause`` one turn-taking tag per wordpiece.

All three channels index into their head's posterior vector, which is
ordered ``[blank, symbols...]``; id 0 (blank) never appears in labels.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AnnotationError, ConfigError, ContractError, TokenizationError

BLANK = "⟨blank⟩"
CAP = "⟨cap⟩"
NON_CAP = "⟨non-cap⟩"
PAUSE = "⟨pause⟩"
NON_PAUSE = "⟨non-pause⟩"
EOS = "⟨eos⟩"

MARKER = "_"  # word-boundary prefix on boundary-initial pieces

# Posterior-vector ids per channel (0 is each head's blank slot).
CAP_ID, NON_CAP_ID = 1, 2
NON_PAUSE_ID, PAUSE_ID, EOS_ID = 1, 2, 3

CAP_SYMBOLS = (CAP, NON_CAP)
PAUSE_SYMBOLS = (NON_PAUSE, PAUSE, EOS)

MARK_PAUSE = "pause"
MARK_EOS = "eos"


# --------------------------------------------------------------------------
# Vocabulary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocab:
    """Ordered wordpiece inventory; index 0 is reserved for the blank."""

    pieces: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.pieces or self.pieces[0] != BLANK:
            raise ConfigError(f"vocab index 0 must be {BLANK!r}")
        seen = set()
        for piece in self.pieces[1:]:
            decoded = piece[1:] if piece.startswith(MARKER) else piece
            if not decoded or decoded != decoded.lower() or MARKER in decoded or " " in decoded:
                raise ConfigError(f"invalid wordpiece {piece!r}")
            if piece in seen:
                raise ConfigError(f"duplicate wordpiece {piece!r}")
            seen.add(piece)

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def n_symbols(self) -> int:
        """Number of real wordpieces (the model's V)."""
        return len(self.pieces) - 1

    def id_of(self, piece: str) -> int:
        try:
            return self.pieces.index(piece)
        except ValueError:
            raise TokenizationError(f"piece {piece!r} not in vocab") from None


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for piece in vocab.pieces:
            f.write(piece + "\n")


def load_vocab(path) -> Vocab:
    with open(path, encoding="utf-8") as f:
        pieces = tuple(line.rstrip("\n") for line in f)
    if not pieces or pieces[0] != BLANK:
        raise ConfigError(f"vocab file {path}: line 0 must be {BLANK!r}")
    return Vocab(pieces)


def build_vocab(corpus: list[str], target_size: int) -> Vocab:
    """Greedy byte-pair merges over the lowercased corpus.

    Starts from all single characters (plain and boundary-marked) and
    repeatedly merges the most frequent adjacent pair until the vocab
    holds ``target_size`` pieces or no pairs remain.  Ties are broken by
    the lexicographically smallest pair, so the result is deterministic.
    """
    if not corpus:
        raise ConfigError("build_vocab: corpus is empty")
    if target_size < 30:
        raise ConfigError(f"build_vocab: target size must be >= 30, got {target_size}")

    word_counts: dict[tuple[str, ...], int] = {}
    chars: set[str] = set()
    for text in corpus:
        for word in text.lower().split():
            chars.update(word)
            symbols = (MARKER + word[0],) + tuple(word[1:])
            word_counts[symbols] = word_counts.get(symbols, 0) + 1

    base = sorted(chars) + sorted(MARKER + c for c in chars)
    if target_size < 1 + len(base):
        raise ConfigError(
            f"build_vocab: target size {target_size} is smaller than the "
            f"alphabet ({1 + len(base)} pieces)"
        )

    merged: list[str] = []
    while 1 + len(base) + len(merged) < target_size:
        pair_counts: dict[tuple[str, str], int] = {}
        for symbols, count in word_counts.items():
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + count
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merged.append(best[0] + best[1])
        new_counts: dict[tuple[str, ...], int] = {}
        for symbols, count in word_counts.items():
            out: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    out.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            key = tuple(out)
            new_counts[key] = new_counts.get(key, 0) + count
        word_counts = new_counts

    return Vocab((BLANK, *base, *merged))


# --------------------------------------------------------------------------
# Tokenization
# --------------------------------------------------------------------------


def _tokenize_word(word: str, piece_ids: dict[str, int], max_len: int) -> list[int]:
    s = MARKER + word
    out: list[int] = []
    i = 0
    while i < len(s):
        for length in range(min(max_len, len(s) - i), 0, -1):
            pid = piece_ids.get(s[i : i + length])
            if pid is not None:
                out.append(pid)
                i += length
                break
        else:
            ch = s[i] if s[i] != MARKER or i > 0 else s[i + 1]
            raise TokenizationError(f"character {ch!r} is not coverable by the vocabulary")
    return out


def tokenize(text: str, vocab: Vocab) -> tuple[int, ...]:
    """Greedy longest-match segmentation of lowercase text into piece ids."""
    piece_ids = {p: i for i, p in enumerate(vocab.pieces[1:], start=1)}
    max_len = max((len(p) for p in vocab.pieces[1:]), default=0)
    out: list[int] = []
    for word in text.split():
        out.extend(_tokenize_word(word, piece_ids, max_len))
    return tuple(out)


def detokenize(ids, vocab: Vocab) -> str:
    words: list[str] = []
    for pid in ids:
        piece = vocab.pieces[pid]
        if piece.startswith(MARKER):
            words.append(piece[1:])
        elif words:
            words[-1] += piece
        else:
            words.append(piece)
    return " ".join(words)


# --------------------------------------------------------------------------
# Annotated transcripts and label bundles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedTranscript:
    """Cased text plus pause marks, each mark sitting in the gap after the
    word with the given index."""

    text: str
    marks: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        n_words = len(self.text.split())
        last = -1
        for word_idx, kind in self.marks:
            if kind not in (MARK_PAUSE, MARK_EOS):
                raise AnnotationError(f"unknown mark kind {kind!r}")
            if word_idx <= last:
                raise AnnotationError("marks must be sorted with at most one per word gap")
            if not 0 <= word_idx < n_words:
                raise AnnotationError(
                    f"mark at word {word_idx} is beyond the {n_words}-word transcript"
                )
            if kind == MARK_EOS and word_idx != n_words - 1:
                raise AnnotationError("eos must attach after the final word")
            last = word_idx


def unpaired_transcript(text: str) -> AnnotatedTranscript:
    """Annotation rule for text-only data: just append the eos mark."""
    n_words = len(text.split())
    marks = ((n_words - 1, MARK_EOS),) if n_words else ()
    return AnnotatedTranscript(text, marks)


@dataclass(frozen=True)
class LabelBundle:
    """Three equal-length parallel label sequences plus the raw transcript."""

    asr: tuple[int, ...]
    cap: tuple[int, ...]
    pause: tuple[int, ...]
    text: str

    def __post_init__(self) -> None:
        if not (len(self.asr) == len(self.cap) == len(self.pause)):
            raise ContractError(
                f"parallel sequences must have equal length, got "
                f"{len(self.asr)}/{len(self.cap)}/{len(self.pause)}"
            )

    def __len__(self) -> int:
        return len(self.asr)


def factorize(t: AnnotatedTranscript, vocab: Vocab) -> LabelBundle:
    """Split an annotated transcript into the three parallel channels.

    A wordpiece is tagged ⟨cap⟩ iff its first written character is
    uppercase in the cased text; pause and eos tags land on the wordpiece
    immediately preceding the mark.
    """
    words = t.text.split()
    marks = dict(t.marks)
    piece_ids = {p: i for i, p in enumerate(vocab.pieces[1:], start=1)}
    max_len = max((len(p) for p in vocab.pieces[1:]), default=0)

    asr: list[int] = []
    cap: list[int] = []
    pause: list[int] = []
    for word_idx, word in enumerate(words):
        ids = _tokenize_word(word.lower(), piece_ids, max_len)
        offset = 0
        for pid in ids:
            piece = vocab.pieces[pid]
            decoded_len = len(piece) - 1 if piece.startswith(MARKER) else len(piece)
            asr.append(pid)
            cap.append(CAP_ID if word[offset].isupper() else NON_CAP_ID)
            pause.append(NON_PAUSE_ID)
            offset += decoded_len
        mark = marks.get(word_idx)
        if mark is not None:
            pause[-1] = EOS_ID if mark == MARK_EOS else PAUSE_ID
    return LabelBundle(tuple(asr), tuple(cap), tuple(pause), text=t.text)


def render(asr_ids, cap_ids, vocab: Vocab) -> str:
    """Inverse of factorize on the cap channel: detokenize and uppercase
    the first character of every ⟨cap⟩-tagged piece."""
    if len(asr_ids) != len(cap_ids):
        raise ContractError(
            f"render: {len(asr_ids)} pieces vs {len(cap_ids)} cap tags"
        )
    words: list[str] = []
    for pid, cid in zip(asr_ids, cap_ids):
        piece = vocab.pieces[pid]
        new_word = piece.startswith(MARKER)
        decoded = piece[1:] if new_word else piece
        if cid == CAP_ID:
            decoded = decoded[0].upper() + decoded[1:]
        if new_word or not words:
            words.append(decoded)
        else:
            words[-1] += decoded
    return " ".join(words)


def pause_marks_of(bundle: LabelBundle, vocab: Vocab) -> tuple[tuple[int, str], ...]:
    """Recover (word index, kind) pause marks from a bundle's channels."""
    marks: list[tuple[int, str]] = []
    word_idx = -1
    for pid, tag in zip(bundle.asr, bundle.pause):
        if vocab.pieces[pid].startswith(MARKER):
            word_idx += 1
        if tag == PAUSE_ID:
            marks.append((word_idx, MARK_PAUSE))
        elif tag == EOS_ID:
            marks.append((word_idx, MARK_EOS))
    return tuple(marks)

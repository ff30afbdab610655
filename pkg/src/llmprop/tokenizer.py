"""Subword tokenization with corpus-trained vocabulary and special tokens.

The vocabulary is learned with byte-pair merges over whitespace-delimited
words (a word-final symbol carries a '</w>' marker). Encoding matches the
longest vocabulary token at each position, so a persisted vocabulary file
is all that is needed to re-encode text. The special tokens [CLS], [NUM]
and [ANG] are always single ids, never split.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .textprep import ANG_TOKEN, CLS_TOKEN, NUM_TOKEN

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Reserved ids; every trained vocabulary starts with these.
SPECIAL_TOKEN_IDS: Dict[str, int] = {
    CLS_TOKEN: 0,
    NUM_TOKEN: 1,
    ANG_TOKEN: 2,
    PAD_TOKEN: 3,
    UNK_TOKEN: 4,
}

END_MARKER = "</w>"

MAX_LENGTH_DEFAULT = 888
MAX_LENGTH_SHORT = 512

_SPECIAL_SPLIT_RE = re.compile(r"(\[CLS\]|\[NUM\]|\[ANG\])")

# Alphabet of the corpus-free fallback vocabulary: printable ASCII plus the
# unit/sign characters that occur in crystal descriptions.
_STOCK_ALPHABET = tuple(chr(c) for c in range(33, 127)) + (
    "Å",
    "°",
    "–",
    "—",
    "¹",
    "²",
    "³",
    "⁺",
    "⁻",
)


@dataclass(frozen=True)
class TokenizedExample:
    """Encoded text: ids, matching attention mask, and pre-truncation length."""

    ids: Tuple[int, ...]
    attention_mask: Tuple[int, ...]
    original_length: int

    def __post_init__(self):
        if len(self.ids) != len(self.attention_mask):
            raise ValueError("ids and attention_mask must have equal length")


def _words(text: str) -> List[str]:
    """Whitespace-delimited words with special tokens split out atomically."""
    out: List[str] = []
    for piece in _SPECIAL_SPLIT_RE.split(text):
        if piece in SPECIAL_TOKEN_IDS:
            out.append(piece)
        else:
            out.extend(piece.split())
    return out


def _word_symbols(word: str) -> Tuple[str, ...]:
    """Character symbols with the final character carrying the end marker."""
    return tuple(word[:-1]) + (word[-1] + END_MARKER,)


class TokenizerBundle:
    """A trained vocabulary plus encoding policy (max length, padding)."""

    def __init__(self, vocab: Dict[str, int], max_length: int = MAX_LENGTH_DEFAULT):
        for token, token_id in SPECIAL_TOKEN_IDS.items():
            if vocab.get(token) != token_id:
                raise ValueError(f"special token {token!r} must map to id {token_id}")
        ids = sorted(vocab.values())
        if ids != list(range(len(vocab))):
            raise ValueError("token ids must be contiguous from 0")
        if max_length <= 0:
            raise ValueError("max_length must be positive")
        self.vocab = dict(vocab)
        self.max_length = max_length
        self._id_to_token = {i: t for t, i in vocab.items()}
        self._max_token_len = max(len(t) for t in vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return SPECIAL_TOKEN_IDS[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return SPECIAL_TOKEN_IDS[UNK_TOKEN]

    def _encode_word(self, word: str) -> List[int]:
        s = word + END_MARKER
        ids: List[int] = []
        pos = 0
        while pos < len(s):
            best = None
            limit = min(len(s), pos + self._max_token_len)
            for end in range(limit, pos, -1):
                candidate = s[pos:end]
                if candidate in self.vocab:
                    best = candidate
                    break
            if best is None:
                ids.append(self.unk_id)
                pos += 1
                if s[pos:] == END_MARKER:  # marker belonged to the unknown char
                    break
            else:
                ids.append(self.vocab[best])
                pos += len(best)
        return ids

    def encode(self, text: str, max_length: Optional[int] = None) -> TokenizedExample:
        """Encode text, truncating to max_length while keeping the front."""
        limit = self.max_length if max_length is None else max_length
        ids: List[int] = []
        for word in _words(text):
            if word in SPECIAL_TOKEN_IDS:
                ids.append(SPECIAL_TOKEN_IDS[word])
            else:
                ids.extend(self._encode_word(word))
        original_length = len(ids)
        ids = ids[:limit]
        return TokenizedExample(
            ids=tuple(ids),
            attention_mask=(1,) * len(ids),
            original_length=original_length,
        )

    def decode(self, ids: Iterable[int]) -> str:
        """Inverse of encode up to whitespace normalization around subwords."""
        parts: List[str] = []
        for token_id in ids:
            token = self._id_to_token[int(token_id)]
            if token == PAD_TOKEN:
                continue
            if token in SPECIAL_TOKEN_IDS or token == UNK_TOKEN:
                parts.append(token + " ")
            elif token.endswith(END_MARKER):
                parts.append(token[: -len(END_MARKER)] + " ")
            else:
                parts.append(token)
        return "".join(parts).strip()

    # --- persistence: 'token<TAB>id' lines with a special-token header ---

    def save(self, path) -> None:
        lines = ["# vocabulary v1"]
        for token, token_id in SPECIAL_TOKEN_IDS.items():
            lines.append(f"# special\t{token}\t{token_id}")
        lines.append(f"# max_length\t{self.max_length}")
        for token, token_id in sorted(self.vocab.items(), key=lambda kv: kv[1]):
            lines.append(f"{token}\t{token_id}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TokenizerBundle":
        vocab: Dict[str, int] = {}
        max_length = MAX_LENGTH_DEFAULT
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            # header lines are '# ...'; a bare '#' token line is '#<TAB>id'
            if line.startswith("# "):
                fields = line[2:].split("\t")
                if fields[0] == "max_length":
                    max_length = int(fields[1])
                continue
            if not line:
                continue
            token, _, token_id = line.rpartition("\t")
            vocab[token] = int(token_id)
        return cls(vocab, max_length=max_length)


def _merge_symbols(symbols: Tuple[str, ...], pair: Tuple[str, str]) -> Tuple[str, ...]:
    merged = pair[0] + pair[1]
    out: List[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def train_vocab(
    corpus: Iterable[str],
    vocab_size: int,
    max_length: int = MAX_LENGTH_DEFAULT,
) -> TokenizerBundle:
    """Learn a vocabulary of (up to) vocab_size tokens by byte-pair merges.

    Deterministic: pair selection is by highest corpus frequency with
    lexicographic tie-breaking, so identical corpora give identical
    vocabularies. Special tokens occupy the reserved low ids.
    """
    word_freq: Counter = Counter()
    for text in corpus:
        for word in _words(text):
            if word not in SPECIAL_TOKEN_IDS:
                word_freq[word] += 1
    if not word_freq:
        raise ValueError("cannot train a vocabulary on an empty corpus")

    alphabet = sorted({ch for word in word_freq for ch in word})
    base_tokens = list(alphabet) + [ch + END_MARKER for ch in alphabet]
    minimum = len(SPECIAL_TOKEN_IDS) + len(base_tokens)
    if vocab_size < minimum:
        raise ValueError(f"vocab_size {vocab_size} below minimum {minimum} for this corpus")

    vocab: Dict[str, int] = dict(SPECIAL_TOKEN_IDS)
    for token in base_tokens:
        vocab[token] = len(vocab)

    # Working state: unique words as symbol tuples, with incremental pair counts.
    words: List[Tuple[str, ...]] = []
    freqs: List[int] = []
    for word, freq in sorted(word_freq.items()):
        words.append(_word_symbols(word))
        freqs.append(freq)

    pair_counts: Counter = Counter()
    pair_to_words: Dict[Tuple[str, str], set] = {}
    for w_idx, symbols in enumerate(words):
        for a, b in zip(symbols, symbols[1:]):
            pair_counts[(a, b)] += freqs[w_idx]
            pair_to_words.setdefault((a, b), set()).add(w_idx)

    while len(vocab) < vocab_size and pair_counts:
        best_pair = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        merged_token = best_pair[0] + best_pair[1]
        for w_idx in sorted(pair_to_words.get(best_pair, ())):
            old = words[w_idx]
            new = _merge_symbols(old, best_pair)
            if new == old:
                continue
            freq = freqs[w_idx]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                members = pair_to_words.get(pair)
                if members is not None:
                    members.discard(w_idx)
                    if not members:
                        del pair_to_words[pair]
            for pair in zip(new, new[1:]):
                pair_counts[pair] += freq
                pair_to_words.setdefault(pair, set()).add(w_idx)
            words[w_idx] = new
        if merged_token not in vocab:
            vocab[merged_token] = len(vocab)

    return TokenizerBundle(vocab, max_length=max_length)


def stock_vocab(max_length: int = MAX_LENGTH_DEFAULT) -> TokenizerBundle:
    """Corpus-free character-level vocabulary (the untrained baseline)."""
    vocab: Dict[str, int] = dict(SPECIAL_TOKEN_IDS)
    for ch in _STOCK_ALPHABET:
        vocab[ch] = len(vocab)
    for ch in _STOCK_ALPHABET:
        vocab[ch + END_MARKER] = len(vocab)
    return TokenizerBundle(vocab, max_length=max_length)


class SubwordTokenizer(BaseEstimator, TransformerMixin):
    """sklearn-style tokenizer: fit trains the vocabulary, transform encodes.

    With retrain=False the corpus-free character vocabulary is used instead
    of learning merges from the fit corpus.
    """

    def __init__(
        self,
        vocab_size: int = 2000,
        max_length: int = MAX_LENGTH_DEFAULT,
        retrain: bool = True,
    ):
        self.vocab_size = vocab_size
        self.max_length = max_length
        self.retrain = retrain

    def fit(self, X, y=None):
        if self.retrain:
            self.bundle_ = train_vocab(X, self.vocab_size, max_length=self.max_length)
        else:
            self.bundle_ = stock_vocab(max_length=self.max_length)
        return self

    def transform(self, X) -> List[TokenizedExample]:
        if not hasattr(self, "bundle_"):
            raise NotFittedError("SubwordTokenizer must be fit before transform")
        return [self.bundle_.encode(text) for text in X]


def pad_batch(
    examples: Sequence[TokenizedExample],
    to_length: int,
    pad_id: int = SPECIAL_TOKEN_IDS[PAD_TOKEN],
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack examples into rectangular (ids, mask) int64 arrays."""
    if not examples:
        return np.zeros((0, to_length), dtype=np.int64), np.zeros((0, to_length), dtype=np.int64)
    ids = np.full((len(examples), to_length), pad_id, dtype=np.int64)
    masks = np.zeros((len(examples), to_length), dtype=np.int64)
    for i, ex in enumerate(examples):
        if len(ex.ids) > to_length:
            raise ValueError(f"example {i} has {len(ex.ids)} ids > to_length {to_length}")
        ids[i, : len(ex.ids)] = ex.ids
        masks[i, : len(ex.ids)] = ex.attention_mask
    return ids, masks

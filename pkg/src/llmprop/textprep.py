"""Text transforms applied to crystal descriptions before tokenization.

Four composable transforms, applied in a fixed order by :func:`preprocess`:

1. replace bond lengths ("3.03 Å") with the [NUM] token,
2. replace bond angles ("120 degrees", "120°") with the [ANG] token,
3. remove stopwords (digits, special tokens and sign/unit symbols are
   never touched),
4. prepend a [CLS] token.

All transforms are pure functions; each can be toggled off independently
for ablation runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import FrozenSet, Iterable, List, Tuple

from sklearn.base import BaseEstimator, TransformerMixin

CLS_TOKEN = "[CLS]"
NUM_TOKEN = "[NUM]"
ANG_TOKEN = "[ANG]"
SPECIAL_TEXT_TOKENS = (CLS_TOKEN, NUM_TOKEN, ANG_TOKEN)

# Decimal number with optional sign; scientific notation does not occur in
# the description corpus.
_NUMBER = r"[+-]?\d+(?:\.\d+)?"
# Length units: Å plus ASCII fallbacks for exported data.
_LENGTH_RE = re.compile(rf"{_NUMBER}\s*(?:Å|Angstrom|angstrom)")
# Angle units: "degrees"/"degree" as whole words, or the degree sign.
_ANGLE_RE = re.compile(rf"{_NUMBER}\s*(?:degrees?\b|°)")

_PURE_NUMBER_RE = re.compile(rf"^{_NUMBER}$")
# Characters that mark a word as carrying unit/sign/charge information.
_SIGN_CHARS = set("Åå°–+¹²³⁺⁻")
# Punctuation stripped from word edges when matching against the stopword list.
_EDGE_PUNCT = ".,;:!?()[]{}\"'`"
# Trailing punctuation that survives removal by attaching to the previous word.
_SENTENCE_PUNCT = set(".,;")


def replace_bond_lengths(text: str) -> Tuple[str, int]:
    """Replace every '<number> <length-unit>' span with [NUM].

    Returns the rewritten text and the number of substitutions.
    """
    return _LENGTH_RE.subn(NUM_TOKEN, text)


def replace_bond_angles(text: str) -> Tuple[str, int]:
    """Replace every '<number> degrees' or '<number>°' span with [ANG]."""
    return _ANGLE_RE.subn(ANG_TOKEN, text)


def _is_protected(word: str, core: str) -> bool:
    """Words that must never be removed, whatever the stopword list says."""
    if any(tok in word for tok in SPECIAL_TEXT_TOKENS):
        return True
    if any(ch.isdigit() for ch in word):
        # covers plain digits, decimals, charged species (Na1+) and formulas (OAc4)
        return True
    if _SIGN_CHARS.intersection(word):
        return True
    return bool(_PURE_NUMBER_RE.match(core)) if core else True


def remove_stopwords(text: str, stopwords: Iterable[str]) -> Tuple[str, int]:
    """Whole-word, case-insensitive stopword removal.

    Matching strips edge punctuation from each whitespace-delimited word.
    Sentence-ending punctuation (. , ;) trailing a removed word is attached
    to the previous kept word; other punctuation is dropped with the word.
    Whitespace is re-normalized to single spaces.
    """
    stopset = {w.lower() for w in stopwords}
    kept: List[str] = []
    removed = 0
    for word in text.split():
        core = word.strip(_EDGE_PUNCT)
        if core.lower() in stopset and not _is_protected(word, core):
            removed += 1
            trailing = word[len(word.rstrip(_EDGE_PUNCT)) :]
            if trailing and kept and all(ch in _SENTENCE_PUNCT for ch in trailing):
                kept[-1] += trailing
            continue
        kept.append(word)
    return " ".join(kept), removed


def prepend_cls(text: str) -> str:
    """Prefix the literal '[CLS] ' marker. Not idempotent; apply once."""
    return f"{CLS_TOKEN} {text}"


def load_stopwords(path) -> FrozenSet[str]:
    """Read a stopword resource: one lowercase word per line, '#' comments.

    Entries that are purely numeric or contain unit/sign symbols are
    dropped so the loaded set always satisfies the config invariant.
    """
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if not word or word.startswith("#"):
            continue
        if _PURE_NUMBER_RE.match(word) or _SIGN_CHARS.intersection(word):
            continue
        if any(ch.isdigit() for ch in word):
            continue
        words.add(word)
    return frozenset(words)


def default_stopwords() -> FrozenSet[str]:
    """The stopword list shipped with the package."""
    ref = importlib_resources.files("llmprop.resources").joinpath("stopwords.txt")
    with importlib_resources.as_file(ref) as path:
        return load_stopwords(path)


@dataclass(frozen=True)
class PreprocessConfig:
    """Which transforms are active, plus the stopword list to use."""

    replace_num: bool = True
    replace_ang: bool = True
    remove_stopwords: bool = True
    prepend_cls: bool = True
    stopword_list: FrozenSet[str] = field(default_factory=default_stopwords)

    def __post_init__(self):
        for word in self.stopword_list:
            if (
                _PURE_NUMBER_RE.match(word)
                or any(ch.isdigit() for ch in word)
                or _SIGN_CHARS.intersection(word)
            ):
                raise ValueError(
                    f"stopword list must not contain numbers or unit/sign symbols: {word!r}"
                )

    def to_dict(self) -> dict:
        return {
            "replace_num": self.replace_num,
            "replace_ang": self.replace_ang,
            "remove_stopwords": self.remove_stopwords,
            "prepend_cls": self.prepend_cls,
            "stopword_list": sorted(self.stopword_list),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessConfig":
        return cls(
            replace_num=data["replace_num"],
            replace_ang=data["replace_ang"],
            remove_stopwords=data["remove_stopwords"],
            prepend_cls=data["prepend_cls"],
            stopword_list=frozenset(data["stopword_list"]),
        )


@dataclass(frozen=True)
class ProcessedText:
    """A transformed description plus substitution counts."""

    text: str
    num_substitutions: int = 0
    ang_substitutions: int = 0
    stopwords_removed: int = 0


def preprocess(description: str, config: PreprocessConfig) -> ProcessedText:
    """Apply the active transforms in fixed order: lengths, angles, stopwords, [CLS]."""
    text = description
    n_num = n_ang = n_stop = 0
    if config.replace_num:
        text, n_num = replace_bond_lengths(text)
    if config.replace_ang:
        text, n_ang = replace_bond_angles(text)
    if config.remove_stopwords:
        text, n_stop = remove_stopwords(text, config.stopword_list)
    if config.prepend_cls:
        text = prepend_cls(text)
    return ProcessedText(
        text=text,
        num_substitutions=n_num,
        ang_substitutions=n_ang,
        stopwords_removed=n_stop,
    )


class TextPreprocessor(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper over :func:`preprocess` for pipelines.

    Stateless: ``fit`` only resolves the stopword list. ``transform`` maps an
    iterable of raw descriptions to processed strings.
    """

    def __init__(
        self,
        replace_num: bool = True,
        replace_ang: bool = True,
        remove_stopwords: bool = True,
        prepend_cls: bool = True,
        stopwords=None,
    ):
        self.replace_num = replace_num
        self.replace_ang = replace_ang
        self.remove_stopwords = remove_stopwords
        self.prepend_cls = prepend_cls
        self.stopwords = stopwords

    def _config(self) -> PreprocessConfig:
        words = self.stopwords if self.stopwords is not None else default_stopwords()
        return PreprocessConfig(
            replace_num=self.replace_num,
            replace_ang=self.replace_ang,
            remove_stopwords=self.remove_stopwords,
            prepend_cls=self.prepend_cls,
            stopword_list=frozenset(words),
        )

    def fit(self, X, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X) -> List[str]:
        config = getattr(self, "config_", None) or self._config()
        return [preprocess(text, config).text for text in X]

    def transform_detailed(self, X) -> List[ProcessedText]:
        """Like transform but keeps substitution counts per description."""
        config = getattr(self, "config_", None) or self._config()
        return [preprocess(text, config) for text in X]

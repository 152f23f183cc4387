"""French analysis chain shared by indexing and topic modeling.

Order of operations for every token:

    split on non-letters -> strip elided articles -> case fold
    -> drop stopwords -> stem -> optional diacritic fold

Tokens that end up empty or in the stopword set after the last step are
dropped too, so the output never contains a stopword.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

from ..kvconfig import ConfigError, as_bool, read_kv
from . import light_fr, snowball_fr

ELISIONS = ("l", "d", "j", "qu", "n", "s", "t", "c", "m")

STEMMERS: dict[str, Callable[[str], str] | None] = {
    "none": None,
    "french-light": light_fr.stem,
    "french-snowball": snowball_fr.stem,
}

_MARKS = "\u0300-\u036f\u1ab0-\u1aff\u1dc0-\u1dff\u20d0-\u20ff\ufe20-\ufe2f"
_LETTER = rf"[^\W\d_][{_MARKS}]*"
_APOS = "'’"
TOKEN_RE = re.compile(rf"(?:{_LETTER})+(?:[{_APOS}](?:{_LETTER})+)*")
_ELISION_RE = re.compile(rf"^(?:{'|'.join(ELISIONS)})[{_APOS}]", re.IGNORECASE)

_LIGATURES = str.maketrans({"œ": "oe", "Œ": "OE", "æ": "ae", "Æ": "AE"})


def load_stopwords(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.casefold())
    return frozenset(words)


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    ref = resources.files("tempir") / "data" / "stopwords_fr.txt"
    with resources.as_file(ref) as path:
        return load_stopwords(path)


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    split_elisions: bool = True
    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    stemmer: str = "french-light"
    fold_diacritics: bool = False

    def __post_init__(self):
        if self.stemmer not in STEMMERS:
            raise ConfigError(f"unknown stemmer {self.stemmer!r}; choose from {sorted(STEMMERS)}")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def to_dict(self) -> dict:
        """Serialisable form; the stopword set is summarised by a digest."""
        digest = hashlib.sha256("\n".join(sorted(self.stopwords)).encode()).hexdigest()
        return {
            "lowercase": self.lowercase,
            "split_elisions": self.split_elisions,
            "stopwords_sha256": digest,
            "stopwords_count": len(self.stopwords),
            "stemmer": self.stemmer,
            "fold_diacritics": self.fold_diacritics,
        }


def topic_model_config(full: bool = False) -> AnalyzerConfig:
    """Analyzer for the topic models: raw terms unless ``full`` is set."""
    if full:
        return AnalyzerConfig(stemmer="none")
    return AnalyzerConfig(stopwords=frozenset(), stemmer="none")


def load_analyzer_config(path: str | Path) -> AnalyzerConfig:
    """Read an analyzer config file.

    Keys: ``lowercase``, ``split_elisions``, ``fold_diacritics`` (booleans),
    ``stemmer`` (none | french-light | french-snowball) and ``stopwords``
    (``default``, ``none`` or a path to a one-term-per-line file, relative
    to the config file).
    """
    path = Path(path)
    kv = read_kv(path)
    return analyzer_from_kv(kv, base=path.parent)


def analyzer_from_kv(kv: dict[str, str], base: Path | None = None) -> AnalyzerConfig:
    stop = kv.get("stopwords", "default")
    if stop == "default":
        stopwords = default_stopwords()
    elif stop == "none":
        stopwords = frozenset()
    else:
        p = Path(stop)
        if base is not None and not p.is_absolute():
            p = base / p
        stopwords = load_stopwords(p)
    return AnalyzerConfig(
        lowercase=as_bool(kv.get("lowercase", "true")),
        split_elisions=as_bool(kv.get("split_elisions", "true")),
        stopwords=stopwords,
        stemmer=kv.get("stemmer", "french-light"),
        fold_diacritics=as_bool(kv.get("fold_diacritics", "false")),
    )


def fold_diacritics(term: str) -> str:
    decomposed = unicodedata.normalize("NFD", term.translate(_LIGATURES))
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", stripped)


def _strip_elisions(token: str) -> str:
    while True:
        m = _ELISION_RE.match(token)
        if m is None:
            return token
        token = token[m.end():]


def analyze(text: str, config: AnalyzerConfig | None = None) -> list[str]:
    """Analyze ``text`` into a list of terms."""
    if config is None:
        config = AnalyzerConfig()
    stem = STEMMERS[config.stemmer]
    stop = config.stopwords
    out = []
    for m in TOKEN_RE.finditer(unicodedata.normalize("NFC", text)):
        term = m.group()
        if config.split_elisions:
            term = _strip_elisions(term)
        if config.lowercase:
            term = unicodedata.normalize("NFC", term.casefold())
        if not term or term in stop:
            continue
        if stem is not None:
            term = stem(term)
        if config.fold_diacritics:
            term = fold_diacritics(term)
        if term and term not in stop:
            out.append(term)
    return out

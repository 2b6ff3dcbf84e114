"""Tokenization, identifier splitting, and the text measurements behind
scoring and dataset-quality analysis.

All functions here are pure: same input, same output, no hidden state. The
token rule is deliberately minimal (maximal alphanumeric runs of length >= 2)
so that two independent implementations can agree token-for-token.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import TracekitError

LAYER_KIND_NL = "natural-language"
LAYER_KIND_CODE = "source-code"
LAYER_KINDS = (LAYER_KIND_NL, LAYER_KIND_CODE)

BUILTIN_STOPWORDS = "builtin:english"

# Word runs: alphanumerics plus underscore, like the usual \w\w+ rule.
_WORD_RUN = re.compile(r"\w+", re.UNICODE)
# Identifier pieces: digit runs, acronym runs (upper letters not followed by a
# lower one), capitalized words, lowercase runs. "parseHTTPResponse" yields
# parse / HTTP / Response.
_IDENT_PIECE = re.compile(r"[0-9]+|[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+")
_SENTENCE_BREAK = re.compile(r"[.!?]+")
_VOWEL_RUN = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class TokenizerProfile:
    """Fully serializable description of how text becomes tokens.

    ``stopwords`` is a reference, not a word set: ``None`` (keep everything),
    the sentinel ``builtin:english`` for the bundled list, or a filesystem
    path to a one-word-per-line file. Keeping the reference in the profile
    means a run manifest pins the exact tokenization.
    """

    lowercase: bool = True
    token_rule: str = "alnum-runs-min2"
    split_identifiers: bool = False
    stopwords: str | None = None

    def __post_init__(self) -> None:
        if self.token_rule != "alnum-runs-min2":
            raise TracekitError(f"unsupported token rule: {self.token_rule!r}")

    def to_json_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "token_rule": self.token_rule,
            "split_identifiers": self.split_identifiers,
            "stopwords": self.stopwords,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "TokenizerProfile":
        return cls(
            lowercase=bool(data.get("lowercase", True)),
            token_rule=str(data.get("token_rule", "alnum-runs-min2")),
            split_identifiers=bool(data.get("split_identifiers", False)),
            stopwords=data.get("stopwords"),
        )


def vsm_profile(layer_kind: str = LAYER_KIND_NL) -> TokenizerProfile:
    """Scoring profile: mirrors the stock TF-IDF vectorizer defaults.

    No stopwords, no stemming; identifier splitting is enabled only for
    source-code layers so camelCase/snake_case names meet prose vocabulary.
    """
    _check_kind(layer_kind)
    return TokenizerProfile(split_identifiers=layer_kind == LAYER_KIND_CODE)


def analysis_profile(layer_kind: str = LAYER_KIND_NL) -> TokenizerProfile:
    """Quality-analysis profile: the VSM profile plus the bundled stopword list."""
    _check_kind(layer_kind)
    return TokenizerProfile(
        split_identifiers=layer_kind == LAYER_KIND_CODE,
        stopwords=BUILTIN_STOPWORDS,
    )


def _check_kind(layer_kind: str) -> None:
    if layer_kind not in LAYER_KINDS:
        raise TracekitError(f"unknown layer kind: {layer_kind!r}")


# ---------------------------------------------------------------------------
# Stopwords
# ---------------------------------------------------------------------------


def load_stopwords(reference: str) -> frozenset[str]:
    """Load a stopword list from a reference understood by TokenizerProfile."""
    if reference == BUILTIN_STOPWORDS:
        text = (
            resources.files("tracekit").joinpath("data/stopwords.txt").read_text("utf-8")
        )
        return _parse_stopwords(text)
    path = Path(reference)
    try:
        stat = path.stat()
    except OSError as exc:
        raise TracekitError(f"stopword file not readable: {reference}") from exc
    return _cached_file_stopwords(str(path), stat.st_mtime_ns, stat.st_size)


@lru_cache(maxsize=64)
def _cached_file_stopwords(path: str, mtime_ns: int, size: int) -> frozenset[str]:
    return _parse_stopwords(Path(path).read_text("utf-8"))


def _parse_stopwords(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word)
    return frozenset(words)


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def tokenize(text: str, profile: TokenizerProfile) -> list[str]:
    """Turn text into the ordered token list the profile describes.

    Tokens are maximal runs of word characters, at least two characters long.
    With ``split_identifiers`` the underscore acts as a separator and camelCase
    runs are decomposed; otherwise the underscore is an ordinary word
    character (so ``SCM_DCI_SR`` stays one token).
    """
    runs = _WORD_RUN.findall(text)
    if profile.split_identifiers:
        pieces: list[str] = []
        for run in runs:
            for part in run.split("_"):
                pieces.extend(_IDENT_PIECE.findall(part))
    else:
        pieces = runs
    tokens = [p for p in pieces if len(p) >= 2]
    if profile.lowercase:
        tokens = [t.lower() for t in tokens]
    if profile.stopwords is not None:
        stop = load_stopwords(profile.stopwords)
        tokens = [t for t in tokens if t not in stop]
    return tokens


def split_identifier(token: str) -> list[str]:
    """Split one identifier on underscores and case transitions, lowercased.

    ``getErrorQueue`` -> get/error/queue, ``DPU_CCM`` -> dpu/ccm,
    ``parseHTTPResponse`` -> parse/http/response. Single-character pieces are
    kept; length filtering is tokenize's concern.
    """
    if not token:
        raise TracekitError("split_identifier requires a non-empty token")
    pieces: list[str] = []
    for part in token.split("_"):
        pieces.extend(_IDENT_PIECE.findall(part))
    return [p.lower() for p in pieces]


def bag_of_words(text: str, profile: TokenizerProfile) -> Counter:
    """Token counts for one text under the given profile."""
    return Counter(tokenize(text, profile))


# ---------------------------------------------------------------------------
# Readability primitives
# ---------------------------------------------------------------------------


def count_sentences(text: str) -> int:
    """Number of sentence segments, splitting on runs of ``.``, ``!``, ``?``.

    A segment counts when it carries at least one word character; any
    non-blank text counts as at least one sentence even without terminators.
    """
    if not text.strip():
        return 0
    segments = _SENTENCE_BREAK.split(text)
    count = sum(1 for seg in segments if _WORD_RUN.search(seg))
    return max(count, 1)


def count_words(text: str) -> int:
    """Whitespace-separated tokens that contain at least one letter."""
    return sum(1 for tok in text.split() if any(c.isalpha() for c in tok))


def count_syllables(word: str) -> int:
    """Approximate syllables as maximal vowel runs (aeiouy), minimum 1.

    A silent final 'e' (word ends in 'e' but not 'le', and has more than one
    vowel run) subtracts one. Surrounding punctuation is ignored.
    """
    core = re.sub(r"^[^a-z0-9]+|[^a-z0-9]+$", "", word.lower())
    runs = _VOWEL_RUN.findall(core)
    count = len(runs)
    if count > 1 and core.endswith("e") and not core.endswith("le"):
        count -= 1
    return max(count, 1)


# ---------------------------------------------------------------------------
# Vocabulary statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TermStats:
    collection_frequency: int
    document_frequency: int


@dataclass(frozen=True)
class VocabularyStats:
    """Corpus-level term statistics under one tokenizer profile."""

    terms: Mapping[str, TermStats]
    total_token_count: int
    document_count: int

    def term_share(self, term: str) -> float:
        """Fraction of total token mass this term accounts for."""
        if self.total_token_count == 0:
            return 0.0
        stats = self.terms.get(term)
        return stats.collection_frequency / self.total_token_count if stats else 0.0


def build_vocabulary(texts: Iterable[str], profile: TokenizerProfile) -> VocabularyStats:
    """Collection and document frequencies over the tokenized texts."""
    cf: Counter = Counter()
    df: Counter = Counter()
    total = 0
    documents = 0
    for text in texts:
        documents += 1
        bag = bag_of_words(text, profile)
        cf.update(bag)
        df.update(bag.keys())
        total += sum(bag.values())
    terms = {
        term: TermStats(collection_frequency=cf[term], document_frequency=df[term])
        for term in cf
    }
    return VocabularyStats(terms=terms, total_token_count=total, document_count=documents)


def merge_bags(bags: Sequence[Counter]) -> Counter:
    """Additive merge of per-document bags (frequency additivity)."""
    merged: Counter = Counter()
    for bag in bags:
        merged.update(bag)
    return merged

"""Dataset-health and error analyses: orphan artifacts, readability,
frequency bands, out-of-vocabulary terms, per-link lexical features, and
cross-model misprediction agreement.

None of these make causal claims; they surface properties that correlate
with hard datasets and hard links.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Sequence

from .corpus import Dataset, Pair
from .errors import TracekitError
from .experiment import HALF_THRESHOLD, RunRecord, classify_at
from .textpipe import (
    VocabularyStats,
    analysis_profile,
    build_vocabulary,
    count_sentences,
    count_syllables,
    tokenize,
)

DEFAULT_LOW_FREQUENCY = 0.001
DEFAULT_HIGH_FREQUENCY = 0.01


# ---------------------------------------------------------------------------
# Orphan artifacts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrphanReport:
    """Artifacts of one query that appear in zero of its true links."""

    query_id: str
    source_orphans: tuple[str, ...]
    target_orphans: tuple[str, ...]

    @property
    def total(self) -> int:
        return len(self.source_orphans) + len(self.target_orphans)

    def to_json_dict(self) -> dict:
        return {
            "query": self.query_id,
            "source_orphans": list(self.source_orphans),
            "target_orphans": list(self.target_orphans),
            "total": self.total,
        }


def detect_orphans(dataset: Dataset, query_id: str) -> OrphanReport:
    """Participating artifacts with no true link in this query, both sides."""
    links = dataset.links_for(query_id)
    linked_sources = {s for s, _ in links}
    linked_targets = {t for _, t in links}
    sources, targets = dataset.participants(query_id)
    return OrphanReport(
        query_id=query_id,
        source_orphans=tuple(a for a in sources if a not in linked_sources),
        target_orphans=tuple(a for a in targets if a not in linked_targets),
    )


def prune_orphans(dataset: Dataset, query_id: str) -> Dataset:
    """New dataset with this query's orphans excluded from its candidate set.

    True links are untouched (orphans have none by definition) and other
    queries keep the artifacts.
    """
    report = detect_orphans(dataset, query_id)
    if report.total == 0:
        return dataset
    return dataset.with_exclusions(query_id, report.source_orphans + report.target_orphans)


# ---------------------------------------------------------------------------
# Readability
# ---------------------------------------------------------------------------


def readability(texts: Sequence[str]) -> float:
    """Flesch-Kincaid grade level over the concatenated texts.

    0.39 * (words/sentences) + 11.8 * (syllables/words) - 15.59, using the
    toolkit's sentence/word/syllable rules. Ratios are scale-invariant, so
    duplicating the corpus leaves the grade unchanged.
    """
    joined = " ".join(texts)
    words = [tok for tok in joined.split() if any(c.isalpha() for c in tok)]
    n_words = len(words)
    n_sentences = count_sentences(joined)
    if n_words == 0 or n_sentences == 0:
        raise TracekitError("readability undefined for blank input")
    n_syllables = sum(count_syllables(w) for w in words)
    return 0.39 * (n_words / n_sentences) + 11.8 * (n_syllables / n_words) - 15.59


# ---------------------------------------------------------------------------
# Frequency bands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandProportions:
    low_proportion: float
    high_proportion: float

    def to_json_dict(self) -> dict:
        return {"low_proportion": self.low_proportion, "high_proportion": self.high_proportion}


def frequency_bands(
    stats: VocabularyStats, low_threshold: float, high_threshold: float
) -> BandProportions:
    """Fractions of distinct terms whose token-mass share is below/above the cuts.

    A term is low-frequency when share < low_threshold and high-frequency when
    share > high_threshold (both strict, so equal thresholds make both bands
    empty at the boundary).
    """
    if not (0 < low_threshold <= high_threshold < 1):
        raise TracekitError(
            f"invalid frequency thresholds ({low_threshold}, {high_threshold}):"
            " need 0 < low <= high < 1"
        )
    n_terms = len(stats.terms)
    if n_terms == 0:
        return BandProportions(low_proportion=0.0, high_proportion=0.0)
    low = high = 0
    for term in stats.terms:
        share = stats.term_share(term)
        if share < low_threshold:
            low += 1
        elif share > high_threshold:
            high += 1
    return BandProportions(low_proportion=low / n_terms, high_proportion=high / n_terms)


def frequency_profile(
    dataset: Dataset,
    low_threshold: float = DEFAULT_LOW_FREQUENCY,
    high_threshold: float = DEFAULT_HIGH_FREQUENCY,
) -> dict[str, BandProportions]:
    """Per-layer frequency bands, stopwords removed first (analysis profile)."""
    result = {}
    for layer in dataset.layers:
        stats = _layer_vocabulary(dataset, layer.id)
        result[layer.id] = frequency_bands(stats, low_threshold, high_threshold)
    return result


def _layer_vocabulary(dataset: Dataset, layer_id: str) -> VocabularyStats:
    layer = dataset.layer(layer_id)
    profile = analysis_profile(layer.kind)
    bodies = [dataset.artifact(layer_id, a).body for a in dataset.artifact_ids(layer_id)]
    return build_vocabulary(bodies, profile)


# ---------------------------------------------------------------------------
# Out-of-vocabulary terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OovReport:
    layer_id: str
    count: int
    terms: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {"layer": self.layer_id, "count": self.count, "terms": list(self.terms)}


def load_wordlist(path: str | Path) -> frozenset[str]:
    """One lowercase word per line; '#' comments and blanks ignored."""
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise TracekitError(f"cannot read word list {path}: {exc}") from exc
    words = set()
    for line in text.splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word.lower())
    return frozenset(words)


def oov_report(dataset: Dataset, vocab_file: str | Path) -> dict[str, OovReport]:
    """Per-layer terms that the given vocabulary does not know (sorted)."""
    vocab = load_wordlist(vocab_file)
    result = {}
    for layer in dataset.layers:
        stats = _layer_vocabulary(dataset, layer.id)
        missing = tuple(sorted(t for t in stats.terms if t not in vocab))
        result[layer.id] = OovReport(layer_id=layer.id, count=len(missing), terms=missing)
    return result


# ---------------------------------------------------------------------------
# Layer health rollup
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerHealth:
    layer_id: str
    fk_grade: float | None
    bands: BandProportions
    oov: OovReport | None

    def to_json_dict(self) -> dict:
        return {
            "layer": self.layer_id,
            "fk_grade": self.fk_grade,
            **self.bands.to_json_dict(),
            "oov": self.oov.to_json_dict() if self.oov else None,
        }


@dataclass(frozen=True)
class HealthReport:
    dataset_name: str
    layers: tuple[LayerHealth, ...]
    low_threshold: float
    high_threshold: float
    vocab_file: str | None

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset_name,
            "config": {
                "low_threshold": self.low_threshold,
                "high_threshold": self.high_threshold,
                "vocab_file": self.vocab_file,
            },
            "layers": [l.to_json_dict() for l in self.layers],
        }


def dataset_health(
    dataset: Dataset,
    vocab_file: str | Path | None = None,
    low_threshold: float = DEFAULT_LOW_FREQUENCY,
    high_threshold: float = DEFAULT_HIGH_FREQUENCY,
) -> HealthReport:
    """Readability, frequency bands, and optional OOV listing per layer."""
    oov = oov_report(dataset, vocab_file) if vocab_file else None
    layers = []
    for layer in dataset.layers:
        bodies = [dataset.artifact(layer.id, a).body for a in dataset.artifact_ids(layer.id)]
        try:
            grade = readability(bodies)
        except TracekitError:
            grade = None
        stats = _layer_vocabulary(dataset, layer.id)
        layers.append(
            LayerHealth(
                layer_id=layer.id,
                fk_grade=grade,
                bands=frequency_bands(stats, low_threshold, high_threshold),
                oov=oov[layer.id] if oov else None,
            )
        )
    return HealthReport(
        dataset_name=dataset.name,
        layers=tuple(layers),
        low_threshold=low_threshold,
        high_threshold=high_threshold,
        vocab_file=str(vocab_file) if vocab_file else None,
    )


# ---------------------------------------------------------------------------
# Misprediction sets and agreement
# ---------------------------------------------------------------------------


def misprediction_set(
    run: RunRecord, truths: Collection[Pair], threshold: float = HALF_THRESHOLD
) -> frozenset[Pair]:
    """False positives plus false negatives over the eval partition."""
    truths = set(truths)
    eval_scored = [c for c in run.scored if c.pair in run.partition.eval]
    positives, _ = classify_at(eval_scored, truths, threshold)
    eval_trues = {c.pair for c in eval_scored if c.pair in truths}
    false_positives = positives - eval_trues
    false_negatives = eval_trues - positives
    return frozenset(false_positives | false_negatives)


@dataclass(frozen=True)
class AgreementReport:
    size_a: int
    size_b: int
    intersection: int
    jaccard: float

    def to_json_dict(self) -> dict:
        return {
            "size_a": self.size_a,
            "size_b": self.size_b,
            "intersection": self.intersection,
            "jaccard": self.jaccard,
        }


def agreement(set_a: Collection, set_b: Collection) -> AgreementReport:
    """Intersection size and Jaccard index; two empty sets agree perfectly."""
    a, b = set(set_a), set(set_b)
    union = a | b
    inter = a & b
    return AgreementReport(
        size_a=len(a),
        size_b=len(b),
        intersection=len(inter),
        jaccard=len(inter) / len(union) if union else 1.0,
    )


# ---------------------------------------------------------------------------
# Per-link lexical features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lexicon:
    """Symmetric synonym/antonym pairs loaded from a TSV resource."""

    synonyms: frozenset[frozenset[str]]
    antonyms: frozenset[frozenset[str]]


def load_lexicon(path: str | Path) -> Lexicon:
    """Parse `term<TAB>syn|ant<TAB>term` lines into symmetric pair sets."""
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise TracekitError(f"cannot read lexicon {path}: {exc}") from exc
    syn: set[frozenset[str]] = set()
    ant: set[frozenset[str]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise TracekitError(f"{path}:{lineno}: expected term<TAB>rel<TAB>term")
        left, rel, right = (p.strip().lower() for p in parts)
        if rel not in ("syn", "ant"):
            raise TracekitError(f"{path}:{lineno}: unknown relation {rel!r}")
        if left == right or not left or not right:
            raise TracekitError(f"{path}:{lineno}: bad term pair {left!r}/{right!r}")
        (syn if rel == "syn" else ant).add(frozenset((left, right)))
    return Lexicon(synonyms=frozenset(syn), antonyms=frozenset(ant))


@dataclass(frozen=True)
class LinkFeatureReport:
    overlap_count: int
    synonym_pair_count: int
    antonym_pair_count: int
    misspelled_count: int
    oov_count: int

    def to_json_dict(self) -> dict:
        return {
            "overlap_count": self.overlap_count,
            "synonym_pair_count": self.synonym_pair_count,
            "antonym_pair_count": self.antonym_pair_count,
            "misspelled_count": self.misspelled_count,
            "oov_count": self.oov_count,
        }


def _cross_pairs(
    relation: frozenset[frozenset[str]], left: set[str], right: set[str]
) -> int:
    count = 0
    for pair in relation:
        a, b = tuple(pair)
        if (a in left and b in right) or (b in left and a in right):
            count += 1
    return count


def link_features(
    dataset: Dataset,
    query_id: str,
    source_id: str,
    target_id: str,
    lexicon_file: str | Path,
    dictionary_file: str | Path,
    vocab_file: str | Path,
    project_recurrence: int = 2,
) -> LinkFeatureReport:
    """Lexical features of one candidate link under the analysis profile.

    overlap counts shared distinct terms; synonym/antonym counts are distinct
    cross-artifact term pairs the lexicon relates; a token is misspelled when
    it is in neither the dictionary nor the recurring project vocabulary
    (collection frequency >= ``project_recurrence``); OOV means absent from
    the model vocabulary file. All counts are symmetric in the two artifacts.
    """
    query = dataset.query(query_id)
    lexicon = load_lexicon(lexicon_file)
    dictionary = load_wordlist(dictionary_file)
    model_vocab = load_wordlist(vocab_file)

    src_layer = dataset.layer(query.source_layer_id)
    tgt_layer = dataset.layer(query.target_layer_id)
    src_tokens = set(
        tokenize(dataset.artifact(src_layer.id, source_id).body, analysis_profile(src_layer.kind))
    )
    tgt_tokens = set(
        tokenize(dataset.artifact(tgt_layer.id, target_id).body, analysis_profile(tgt_layer.kind))
    )

    project_vocab = _project_recurring_vocabulary(dataset, project_recurrence)
    union = src_tokens | tgt_tokens
    misspelled = {t for t in union if t not in dictionary and t not in project_vocab}
    oov = {t for t in union if t not in model_vocab}

    return LinkFeatureReport(
        overlap_count=len(src_tokens & tgt_tokens),
        synonym_pair_count=_cross_pairs(lexicon.synonyms, src_tokens, tgt_tokens),
        antonym_pair_count=_cross_pairs(lexicon.antonyms, src_tokens, tgt_tokens),
        misspelled_count=len(misspelled),
        oov_count=len(oov),
    )


def _project_recurring_vocabulary(dataset: Dataset, min_occurrences: int) -> frozenset[str]:
    """Terms whose total collection frequency across all layers meets the bar."""
    totals: dict[str, int] = {}
    for layer in dataset.layers:
        stats = _layer_vocabulary(dataset, layer.id)
        for term, ts in stats.terms.items():
            totals[term] = totals.get(term, 0) + ts.collection_frequency
    return frozenset(t for t, n in totals.items() if n >= min_occurrences)

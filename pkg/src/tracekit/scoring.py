"""Similarity scorers behind one contract: every scorer maps candidate pairs
to scores in [0, 1].

Two kinds exist. The built-in VSM scorer fits TF-IDF vectors over the query's
artifacts and takes cosines; it is unsupervised, so it never sees labels or
splits. External scorers (e.g. fine-tuned neural models) are reached over a
batch wire protocol and are trusted only as far as the protocol validates.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import httpx

from .corpus import Dataset, Pair, generate_candidates
from .errors import ScorerProtocolError, TracekitError, UnknownIdError
from .textpipe import TokenizerProfile, tokenize, vsm_profile

DocKey = Hashable

KIND_VSM = "vsm"
KIND_EXTERNAL = "external"

DEFAULT_MAX_BATCH = 64
DEFAULT_TIMEOUT_S = 120.0


@dataclass(frozen=True)
class ScorerSpec:
    """Names a scorer and how to run it; serialized into run manifests."""

    name: str
    kind: str = KIND_VSM
    profile_override: TokenizerProfile | None = None  # vsm: None = per-layer defaults
    endpoint: str | None = None  # external: "cmd:<argv>" or an http(s) URL
    max_batch: int = DEFAULT_MAX_BATCH
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if self.kind not in (KIND_VSM, KIND_EXTERNAL):
            raise TracekitError(f"unknown scorer kind {self.kind!r}")
        if self.kind == KIND_EXTERNAL and not self.endpoint:
            raise TracekitError("external scorer requires an endpoint")
        if self.max_batch < 1:
            raise TracekitError("max_batch must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "profile_override": self.profile_override.to_json_dict()
            if self.profile_override
            else None,
            "endpoint": self.endpoint,
            "max_batch": self.max_batch,
            "timeout_s": self.timeout_s,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ScorerSpec":
        override = data.get("profile_override")
        return cls(
            name=data["name"],
            kind=data.get("kind", KIND_VSM),
            profile_override=TokenizerProfile.from_json_dict(override) if override else None,
            endpoint=data.get("endpoint"),
            max_batch=int(data.get("max_batch", DEFAULT_MAX_BATCH)),
            timeout_s=float(data.get("timeout_s", DEFAULT_TIMEOUT_S)),
        )


def parse_scorer_arg(text: str) -> ScorerSpec:
    """CLI scorer syntax: ``vsm`` or ``external:cmd:<argv>`` / ``external:<url>``."""
    if text == "vsm":
        return ScorerSpec(name="vsm", kind=KIND_VSM)
    if text.startswith("external:"):
        endpoint = text[len("external:"):]
        if not endpoint:
            raise TracekitError("external scorer needs an endpoint after 'external:'")
        return ScorerSpec(name=text, kind=KIND_EXTERNAL, endpoint=endpoint)
    raise TracekitError(f"unknown scorer {text!r} (expected 'vsm' or 'external:<endpoint>')")


@dataclass(frozen=True)
class ScoredCandidate:
    query_id: str
    source_id: str
    target_id: str
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise TracekitError(
                f"score out of range for ({self.source_id}, {self.target_id}): {self.score}"
            )

    @property
    def pair(self) -> Pair:
        return (self.source_id, self.target_id)


# ---------------------------------------------------------------------------
# VSM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VsmModel:
    """TF-IDF document vectors, L2-normalized, keyed by caller-chosen doc keys."""

    vocabulary: Mapping[str, int]
    idf: Mapping[str, float]
    vectors: Mapping[DocKey, Mapping[str, float]]


def fit_vsm(documents: Sequence[tuple[DocKey, str]], profile: TokenizerProfile) -> VsmModel:
    """Fit TF-IDF over raw texts with one tokenizer profile."""
    return fit_vsm_tokens([(key, tokenize(text, profile)) for key, text in documents])


def fit_vsm_tokens(documents: Sequence[tuple[DocKey, Sequence[str]]]) -> VsmModel:
    """Fit TF-IDF over pre-tokenized documents.

    tf is the raw term count; idf(t) = ln((1+N)/(1+df(t))) + 1 (the smoothed
    variant, always > 0); each document vector is tf*idf scaled to unit L2
    norm. A document with no tokens maps to the zero vector (empty mapping).
    """
    n_docs = len(documents)
    df: dict[str, int] = {}
    bags: list[tuple[DocKey, dict[str, int]]] = []
    for key, tokens in documents:
        bag: dict[str, int] = {}
        for tok in tokens:
            bag[tok] = bag.get(tok, 0) + 1
        for term in bag:
            df[term] = df.get(term, 0) + 1
        bags.append((key, bag))

    vocabulary = {term: idx for idx, term in enumerate(sorted(df))}
    idf = {term: math.log((1 + n_docs) / (1 + df[term])) + 1.0 for term in vocabulary}

    vectors: dict[DocKey, dict[str, float]] = {}
    for key, bag in bags:
        if key in vectors:
            raise TracekitError(f"duplicate document key {key!r} in VSM fit")
        weighted = {term: count * idf[term] for term, count in bag.items()}
        norm = math.sqrt(sum(w * w for w in weighted.values()))
        if norm == 0.0:
            vectors[key] = {}
        else:
            vectors[key] = {term: w / norm for term, w in weighted.items()}
    return VsmModel(vocabulary=vocabulary, idf=idf, vectors=vectors)


def score_pair(model: VsmModel, source_key: DocKey, target_key: DocKey) -> float:
    """Cosine similarity of two stored vectors; 0.0 if either is the zero vector."""
    try:
        a = model.vectors[source_key]
        b = model.vectors[target_key]
    except KeyError as exc:
        raise UnknownIdError(f"document {exc.args[0]!r} not in VSM model") from None
    if len(b) < len(a):
        a, b = b, a
    # fsum rounds once, so the result is independent of term order and the
    # cosine is bit-identical under argument swap
    dot = math.fsum(w * b[t] for t, w in a.items() if t in b)
    # unit vectors: cosine already in [0, 1]; clamp float noise at the edges
    return min(max(dot, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Scoring a query's candidate list
# ---------------------------------------------------------------------------


def score_candidates(spec: ScorerSpec, dataset: Dataset, query_id: str) -> list[ScoredCandidate]:
    """Score every candidate pair of a query, canonical order preserved."""
    query = dataset.query(query_id)
    candidates = generate_candidates(dataset, query_id)
    if not candidates:
        return []
    if spec.kind == KIND_VSM:
        scores = _vsm_scores(spec, dataset, query_id, candidates)
    else:
        pairs = []
        for source_id, target_id in candidates:
            pairs.append(
                {
                    "source_id": source_id,
                    "target_id": target_id,
                    "source_text": dataset.artifact(query.source_layer_id, source_id).body,
                    "target_text": dataset.artifact(query.target_layer_id, target_id).body,
                }
            )
        scores = external_score(
            spec.endpoint or "", pairs, max_batch=spec.max_batch, timeout_s=spec.timeout_s
        )
    return [
        ScoredCandidate(query_id=query_id, source_id=s, target_id=t, score=score)
        for (s, t), score in zip(candidates, scores)
    ]


def _vsm_scores(
    spec: ScorerSpec, dataset: Dataset, query_id: str, candidates: Sequence[Pair]
) -> list[float]:
    model = fit_query_vsm(dataset, query_id, spec.profile_override)
    query = dataset.query(query_id)
    src_layer, tgt_layer = query.source_layer_id, query.target_layer_id
    return [score_pair(model, (src_layer, s), (tgt_layer, t)) for s, t in candidates]


def fit_query_vsm(
    dataset: Dataset, query_id: str, profile_override: TokenizerProfile | None = None
) -> VsmModel:
    """Fit VSM on the union of both layers' artifact bodies for one query.

    Documents are keyed (layer_id, artifact_id) since ids are only unique per
    layer. Each layer is tokenized with its own default profile (identifier
    splitting for source code) unless an override is given.
    """
    query = dataset.query(query_id)
    docs: list[tuple[DocKey, Sequence[str]]] = []
    for layer_id in (query.source_layer_id, query.target_layer_id):
        profile = profile_override or vsm_profile(dataset.layer(layer_id).kind)
        source_ids, target_ids = dataset.participants(query_id)
        ids = source_ids if layer_id == query.source_layer_id else target_ids
        for art_id in ids:
            body = dataset.artifact(layer_id, art_id).body
            docs.append(((layer_id, art_id), tokenize(body, profile)))
    return fit_vsm_tokens(docs)


# ---------------------------------------------------------------------------
# External scorer wire protocol
# ---------------------------------------------------------------------------


def external_score(
    endpoint: str,
    pairs: Sequence[Mapping[str, str]],
    *,
    max_batch: int = DEFAULT_MAX_BATCH,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> list[float]:
    """Send pairs to an external scorer in order-preserving batches.

    ``endpoint`` is either ``cmd:<argv>`` (newline-delimited JSON over the
    child's stdin/stdout, one request line per batch) or an http(s) URL
    (one POST per batch). Any protocol violation aborts the whole run with a
    diagnostic naming the offending pair.
    """
    if not pairs:
        return []
    batches = [list(pairs[i : i + max_batch]) for i in range(0, len(pairs), max_batch)]
    if endpoint.startswith("cmd:"):
        replies = _score_via_subprocess(endpoint[len("cmd:"):], batches, timeout_s)
    elif endpoint.startswith(("http://", "https://")):
        replies = _score_via_http(endpoint, batches, timeout_s)
    else:
        raise ScorerProtocolError(
            f"unsupported external endpoint {endpoint!r} (expected cmd:<argv> or http[s] URL)"
        )

    scores: list[float] = []
    offset = 0
    for batch, reply in zip(batches, replies):
        scores.extend(_validate_scores(reply, batch, offset))
        offset += len(batch)
    return scores


def _validate_scores(reply: object, batch: Sequence[Mapping[str, str]], offset: int) -> list[float]:
    if not isinstance(reply, dict) or "scores" not in reply:
        raise ScorerProtocolError(f"malformed response (no 'scores'): {_clip(reply)}")
    raw = reply["scores"]
    if not isinstance(raw, list):
        raise ScorerProtocolError(f"malformed response ('scores' not a list): {_clip(reply)}")
    if len(raw) != len(batch):
        raise ScorerProtocolError(
            f"length mismatch: {len(raw)} scores for {len(batch)} pairs"
        )
    out = []
    for i, (value, pair) in enumerate(zip(raw, batch)):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
            raise ScorerProtocolError(
                f"non-numeric score at pair #{offset + i}"
                f" ({pair['source_id']} -> {pair['target_id']}): {value!r}"
            )
        if not (0.0 <= float(value) <= 1.0):
            raise ScorerProtocolError(
                f"score out of range at pair #{offset + i}"
                f" ({pair['source_id']} -> {pair['target_id']}): {value}"
            )
        out.append(float(value))
    return out


def _score_via_http(url: str, batches: Sequence[list], timeout_s: float) -> list[object]:
    replies = []
    try:
        with httpx.Client(timeout=timeout_s) as client:
            for batch in batches:
                response = client.post(url, json={"pairs": batch})
                if response.status_code != 200:
                    raise ScorerProtocolError(
                        f"external scorer returned HTTP {response.status_code}: {_clip(response.text)}"
                    )
                try:
                    replies.append(response.json())
                except ValueError as exc:
                    raise ScorerProtocolError(f"malformed JSON response: {exc}") from exc
    except httpx.TimeoutException as exc:
        raise ScorerProtocolError(f"external scorer timed out after {timeout_s}s") from exc
    except httpx.HTTPError as exc:
        raise ScorerProtocolError(f"external scorer transport failure: {exc}") from exc
    return replies


def _score_via_subprocess(command: str, batches: Sequence[list], timeout_s: float) -> list[object]:
    argv = shlex.split(command)
    if not argv:
        raise ScorerProtocolError("empty scorer command")
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        raise ScorerProtocolError(f"cannot spawn scorer {argv[0]!r}: {exc}") from exc

    replies = []
    try:
        assert proc.stdin is not None and proc.stdout is not None
        for batch in batches:
            proc.stdin.write(json.dumps({"pairs": batch}) + "\n")
            proc.stdin.flush()
            line = _readline_with_timeout(proc.stdout, timeout_s)
            if line is None:
                raise ScorerProtocolError(f"scorer timed out after {timeout_s}s per batch")
            if not line:
                stderr = proc.stderr.read() if proc.stderr else ""
                raise ScorerProtocolError(
                    f"scorer closed its stdout early (exit={proc.poll()}): {_clip(stderr)}"
                )
            try:
                replies.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ScorerProtocolError(f"malformed JSON response line: {_clip(line)}") from exc
    except BrokenPipeError as exc:
        raise ScorerProtocolError("scorer process closed stdin (crashed?)") from exc
    finally:
        try:
            proc.kill()
        except OSError:
            pass
        proc.wait()
    return replies


def _readline_with_timeout(stream, timeout_s: float) -> str | None:
    """Read one line from a pipe with a timeout; None = timed out."""
    box: dict[str, str] = {}

    def reader() -> None:
        box["line"] = stream.readline()

    thread = threading.Thread(target=reader, daemon=True)
    thread.start()
    thread.join(timeout_s)
    if thread.is_alive():
        return None
    return box.get("line", "")


def _clip(value: object, limit: int = 200) -> str:
    text = str(value)
    return text if len(text) <= limit else text[: limit - 3] + "..."

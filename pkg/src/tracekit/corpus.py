"""Data model and ingestion for multi-layer traceability datasets.

A dataset is a set of artifact layers plus trace queries; each query names a
source layer, a target layer, and an answer matrix of true links. Unlisted
(source, target) pairs are treated as negatives throughout the toolkit.

The normalized on-disk form is a JSON manifest pointing at per-layer artifact
files (a directory of ``*.txt`` or a CSV) and per-query answer CSVs; see
``docs/manifest-format.md``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IngestError, UnknownIdError
from .textpipe import LAYER_KINDS

Pair = tuple[str, str]

LABEL_TRUE = "true-link"
LABEL_UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Layer:
    id: str
    name: str
    kind: str  # one of textpipe.LAYER_KINDS


@dataclass(frozen=True)
class Artifact:
    id: str
    layer_id: str
    body: str
    title: str | None = None


@dataclass(frozen=True)
class TraceQuery:
    """One tracing direction: source layer -> target layer."""

    id: str
    source_layer_id: str
    target_layer_id: str


@dataclass(frozen=True)
class TraceLink:
    query_id: str
    source_id: str
    target_id: str
    label: str = LABEL_TRUE


@dataclass
class IngestReport:
    """Non-fatal findings from loading a dataset.

    Unknown references are hard errors and never land here; empty bodies and
    collapsed duplicate answer rows are kept but flagged.
    """

    empty_bodies: list[tuple[str, str]] = field(default_factory=list)  # (layer, artifact)
    duplicate_links: list[tuple[str, str, str]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "empty_bodies": [list(x) for x in self.empty_bodies],
            "duplicate_links_collapsed": [list(x) for x in self.duplicate_links],
        }


class Dataset:
    """Immutable, fully indexed traceability dataset.

    ``excluded`` carries per-query artifact exclusions (the result of orphan
    pruning): the artifacts stay in their layers for other queries but drop
    out of the pruned query's candidate universe.
    """

    def __init__(
        self,
        name: str,
        layers: Iterable[Layer],
        artifacts: Iterable[Artifact],
        queries: Iterable[TraceQuery],
        true_links: Iterable[TraceLink],
        excluded: Mapping[str, Iterable[str]] | None = None,
    ) -> None:
        self.name = name
        self.layers = tuple(layers)
        self.artifacts = tuple(artifacts)
        self.queries = tuple(queries)
        self.true_links = tuple(true_links)
        self.excluded: dict[str, frozenset[str]] = {
            qid: frozenset(ids) for qid, ids in (excluded or {}).items() if ids
        }

        self._layer_by_id: dict[str, Layer] = {}
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS:
                raise IngestError(f"layer {layer.id!r}: unknown kind {layer.kind!r}")
            if layer.id in self._layer_by_id:
                raise IngestError(f"duplicate layer id {layer.id!r}")
            self._layer_by_id[layer.id] = layer

        self._artifact_by_key: dict[tuple[str, str], Artifact] = {}
        self._ids_by_layer: dict[str, list[str]] = {l.id: [] for l in self.layers}
        for art in self.artifacts:
            if not art.id:
                raise IngestError(f"layer {art.layer_id!r}: artifact with empty id")
            if art.layer_id not in self._layer_by_id:
                raise IngestError(f"artifact {art.id!r} references unknown layer {art.layer_id!r}")
            key = (art.layer_id, art.id)
            if key in self._artifact_by_key:
                raise IngestError(f"duplicate artifact id {art.id!r} in layer {art.layer_id!r}")
            self._artifact_by_key[key] = art
            self._ids_by_layer[art.layer_id].append(art.id)
        for ids in self._ids_by_layer.values():
            ids.sort()

        self._query_by_id: dict[str, TraceQuery] = {}
        for query in self.queries:
            if query.id in self._query_by_id:
                raise IngestError(f"duplicate query id {query.id!r}")
            for layer_id in (query.source_layer_id, query.target_layer_id):
                if layer_id not in self._layer_by_id:
                    raise IngestError(f"query {query.id!r} references unknown layer {layer_id!r}")
            if query.source_layer_id == query.target_layer_id:
                raise IngestError(f"query {query.id!r}: source and target layers must differ")
            self._query_by_id[query.id] = query

        self._links_by_query: dict[str, set[Pair]] = {q.id: set() for q in self.queries}
        for link in self.true_links:
            query = self._query_by_id.get(link.query_id)
            if query is None:
                raise IngestError(f"true link references unknown query {link.query_id!r}")
            if (query.source_layer_id, link.source_id) not in self._artifact_by_key:
                raise IngestError(
                    f"unknown artifact in answer file: {link.source_id!r} (query {link.query_id!r})"
                )
            if (query.target_layer_id, link.target_id) not in self._artifact_by_key:
                raise IngestError(
                    f"unknown artifact in answer file: {link.target_id!r} (query {link.query_id!r})"
                )
            pair = (link.source_id, link.target_id)
            if pair in self._links_by_query[link.query_id]:
                raise IngestError(
                    f"duplicate true link {pair!r} in query {link.query_id!r}"
                    " (collapse duplicates at load time)"
                )
            self._links_by_query[link.query_id].add(pair)

        for qid, ids in self.excluded.items():
            query = self._query_by_id.get(qid)
            if query is None:
                raise IngestError(f"exclusion references unknown query {qid!r}")
            member_layers = (query.source_layer_id, query.target_layer_id)
            for art_id in ids:
                if not any((lid, art_id) in self._artifact_by_key for lid in member_layers):
                    raise IngestError(
                        f"exclusion {art_id!r} not an artifact of query {qid!r}"
                    )
            linked = {a for pair in self._links_by_query[qid] for a in pair}
            overlap = ids & linked
            if overlap:
                raise IngestError(
                    f"cannot exclude linked artifacts from query {qid!r}: {sorted(overlap)}"
                )

    # -- lookups ------------------------------------------------------------

    def layer(self, layer_id: str) -> Layer:
        try:
            return self._layer_by_id[layer_id]
        except KeyError:
            raise UnknownIdError(f"unknown layer {layer_id!r}") from None

    def query(self, query_id: str) -> TraceQuery:
        try:
            return self._query_by_id[query_id]
        except KeyError:
            raise UnknownIdError(f"unknown query {query_id!r}") from None

    def artifact(self, layer_id: str, artifact_id: str) -> Artifact:
        try:
            return self._artifact_by_key[(layer_id, artifact_id)]
        except KeyError:
            raise UnknownIdError(
                f"unknown artifact {artifact_id!r} in layer {layer_id!r}"
            ) from None

    def artifact_ids(self, layer_id: str) -> list[str]:
        """All artifact ids of a layer, sorted (before any query exclusion)."""
        self.layer(layer_id)
        return list(self._ids_by_layer[layer_id])

    def links_for(self, query_id: str) -> frozenset[Pair]:
        self.query(query_id)
        return frozenset(self._links_by_query[query_id])

    def participants(self, query_id: str) -> tuple[list[str], list[str]]:
        """Sorted (source ids, target ids) taking part in a query, after exclusions."""
        query = self.query(query_id)
        dropped = self.excluded.get(query_id, frozenset())
        sources = [a for a in self._ids_by_layer[query.source_layer_id] if a not in dropped]
        targets = [a for a in self._ids_by_layer[query.target_layer_id] if a not in dropped]
        return sources, targets

    def with_exclusions(self, query_id: str, artifact_ids: Iterable[str]) -> "Dataset":
        """New dataset with additional per-query exclusions."""
        self.query(query_id)
        merged = dict(self.excluded)
        merged[query_id] = frozenset(merged.get(query_id, frozenset())) | frozenset(artifact_ids)
        return Dataset(self.name, self.layers, self.artifacts, self.queries, self.true_links, merged)

    # -- equality -----------------------------------------------------------

    def _canonical(self) -> tuple:
        return (
            self.name,
            tuple(sorted(self.layers, key=lambda l: l.id)),
            tuple(sorted(self.artifacts, key=lambda a: (a.layer_id, a.id))),
            tuple(sorted(self.queries, key=lambda q: q.id)),
            tuple(sorted((l.query_id, l.source_id, l.target_id) for l in self.true_links)),
            tuple(sorted((q, tuple(sorted(ids))) for q, ids in self.excluded.items())),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __repr__(self) -> str:
        return (
            f"Dataset({self.name!r}, layers={len(self.layers)},"
            f" artifacts={len(self.artifacts)}, queries={len(self.queries)},"
            f" true_links={len(self.true_links)})"
        )


# ---------------------------------------------------------------------------
# Candidate generation and summaries
# ---------------------------------------------------------------------------


def generate_candidates(dataset: Dataset, query_id: str) -> list[Pair]:
    """Full source x target cross product in canonical order.

    Canonical order is byte-lexicographic by source id then target id (UTF-8
    byte order equals code-point order, so plain string sort is exact).
    """
    sources, targets = dataset.participants(query_id)
    return [(s, t) for s in sources for t in targets]


@dataclass(frozen=True)
class QuerySummary:
    query_id: str
    source_count: int
    target_count: int
    candidate_count: int
    true_count: int


def dataset_summary(dataset: Dataset) -> list[QuerySummary]:
    """Per-query artifact/candidate/true-link counts (the dataset table)."""
    rows = []
    for query in dataset.queries:
        sources, targets = dataset.participants(query.id)
        rows.append(
            QuerySummary(
                query_id=query.id,
                source_count=len(sources),
                target_count=len(targets),
                candidate_count=len(sources) * len(targets),
                true_count=len(dataset.links_for(query.id)),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------


def load_dataset(manifest_path: str | Path) -> tuple[Dataset, IngestReport]:
    """Load a dataset from its JSON manifest.

    Raises :class:`IngestError` on structural problems: unreadable files,
    duplicate ids, links or queries referencing unknown ids. Empty artifact
    bodies and duplicate answer rows are kept but flagged in the report.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except OSError as exc:
        raise IngestError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc

    for key in ("name", "layers", "queries"):
        if key not in manifest:
            raise IngestError(f"manifest missing required key {key!r}")

    base = manifest_path.parent
    report = IngestReport()

    layers: list[Layer] = []
    artifacts: list[Artifact] = []
    for spec in manifest["layers"]:
        for key in ("id", "name", "kind", "path"):
            if key not in spec:
                raise IngestError(f"layer entry missing key {key!r}: {spec!r}")
        layer = Layer(id=spec["id"], name=spec["name"], kind=spec["kind"])
        layers.append(layer)
        artifacts.extend(_read_layer_artifacts(layer, base / spec["path"], report))

    queries: list[TraceQuery] = []
    links: list[TraceLink] = []
    for spec in manifest["queries"]:
        for key in ("id", "source", "target", "answers"):
            if key not in spec:
                raise IngestError(f"query entry missing key {key!r}: {spec!r}")
        query = TraceQuery(
            id=spec["id"],
            source_layer_id=spec["source"],
            target_layer_id=spec["target"],
        )
        queries.append(query)
        links.extend(_read_answers(query, base / spec["answers"], report))

    dataset = Dataset(
        name=manifest["name"],
        layers=layers,
        artifacts=artifacts,
        queries=queries,
        true_links=links,
    )
    return dataset, report


def _read_layer_artifacts(layer: Layer, path: Path, report: IngestReport) -> list[Artifact]:
    if path.is_dir():
        artifacts = []
        for file in sorted(path.glob("*.txt")):
            body = _read_text(file)
            artifacts.append(Artifact(id=file.stem, layer_id=layer.id, body=body))
    elif path.is_file():
        artifacts = _read_artifact_csv(layer, path)
    else:
        raise IngestError(f"layer {layer.id!r}: path does not exist: {path}")
    for art in artifacts:
        if not art.body.strip():
            report.empty_bodies.append((layer.id, art.id))
    return artifacts


def _read_artifact_csv(layer: Layer, path: Path) -> list[Artifact]:
    rows = _read_csv(path)
    if not rows:
        raise IngestError(f"layer {layer.id!r}: artifact CSV {path} is empty")
    header = rows[0]
    if header[:2] != ["id", "body"] or header not in (["id", "body"], ["id", "body", "title"]):
        raise IngestError(
            f"layer {layer.id!r}: artifact CSV must have header id,body[,title], got {header!r}"
        )
    has_title = len(header) == 3
    artifacts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise IngestError(f"layer {layer.id!r}: malformed row {lineno} in {path}")
        title = row[2] if has_title and row[2] else None
        artifacts.append(Artifact(id=row[0], layer_id=layer.id, body=row[1], title=title))
    return artifacts


def _read_answers(query: TraceQuery, path: Path, report: IngestReport) -> list[TraceLink]:
    rows = _read_csv(path)
    if not rows:
        raise IngestError(f"query {query.id!r}: answer CSV {path} is empty")
    if rows[0] != ["source_id", "target_id"]:
        raise IngestError(
            f"query {query.id!r}: answer CSV must have header source_id,target_id, got {rows[0]!r}"
        )
    seen: set[Pair] = set()
    links = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise IngestError(f"query {query.id!r}: malformed row {lineno} in {path}")
        pair = (row[0], row[1])
        if pair in seen:
            report.duplicate_links.append((query.id, pair[0], pair[1]))
            continue
        seen.add(pair)
        links.append(TraceLink(query_id=query.id, source_id=pair[0], target_id=pair[1]))
    return links


def _read_csv(path: Path) -> list[list[str]]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _read_text(path: Path) -> str:
    try:
        return path.read_text("utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Manifest export
# ---------------------------------------------------------------------------


def export_dataset(dataset: Dataset, out_dir: str | Path, manifest_filename: str = "manifest.json") -> Path:
    """Write a dataset back out in the manifest format; returns the manifest path.

    Per-query exclusions are materialized by dropping the excluded artifacts
    from the written layer files. That is only well-defined when no other
    query shares the layer, otherwise the export refuses.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    exclusions_by_layer: dict[str, set[str]] = {}
    for qid, ids in dataset.excluded.items():
        query = dataset.query(qid)
        for layer_id in (query.source_layer_id, query.target_layer_id):
            layer_ids = set(dataset.artifact_ids(layer_id))
            touched = ids & layer_ids
            if not touched:
                continue
            users = [
                q.id
                for q in dataset.queries
                if layer_id in (q.source_layer_id, q.target_layer_id)
            ]
            if len(users) > 1:
                raise IngestError(
                    f"cannot materialize exclusions: layer {layer_id!r} is shared by queries {users}"
                )
            exclusions_by_layer.setdefault(layer_id, set()).update(touched)

    layer_entries = []
    for idx, layer in enumerate(dataset.layers):
        filename = f"layer-{idx:03d}.csv"
        dropped = exclusions_by_layer.get(layer.id, set())
        with (out_dir / filename).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "body", "title"])
            for art_id in dataset.artifact_ids(layer.id):
                if art_id in dropped:
                    continue
                art = dataset.artifact(layer.id, art_id)
                writer.writerow([art.id, art.body, art.title or ""])
        layer_entries.append(
            {"id": layer.id, "name": layer.name, "kind": layer.kind, "path": filename}
        )

    query_entries = []
    for idx, query in enumerate(dataset.queries):
        filename = f"answers-{idx:03d}.csv"
        with (out_dir / filename).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source_id", "target_id"])
            for source_id, target_id in sorted(dataset.links_for(query.id)):
                writer.writerow([source_id, target_id])
        query_entries.append(
            {
                "id": query.id,
                "source": query.source_layer_id,
                "target": query.target_layer_id,
                "answers": filename,
            }
        )

    manifest = {"name": dataset.name, "layers": layer_entries, "queries": query_entries}
    manifest_path = out_dir / manifest_filename
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return manifest_path


# ---------------------------------------------------------------------------
# Inline JSON form (used by the review service and tests)
# ---------------------------------------------------------------------------


def dataset_to_inline(dataset: Dataset) -> dict:
    """Self-contained JSON form: artifacts and links embedded, no file refs."""
    return {
        "name": dataset.name,
        "layers": [
            {
                "id": layer.id,
                "name": layer.name,
                "kind": layer.kind,
                "artifacts": [
                    {
                        "id": art.id,
                        "body": art.body,
                        **({"title": art.title} if art.title else {}),
                    }
                    for art_id in dataset.artifact_ids(layer.id)
                    for art in [dataset.artifact(layer.id, art_id)]
                ],
            }
            for layer in dataset.layers
        ],
        "queries": [
            {
                "id": q.id,
                "source": q.source_layer_id,
                "target": q.target_layer_id,
                "true_links": [list(p) for p in sorted(dataset.links_for(q.id))],
            }
            for q in dataset.queries
        ],
        "excluded": {qid: sorted(ids) for qid, ids in dataset.excluded.items()},
    }


def dataset_from_inline(obj: Mapping) -> Dataset:
    """Inverse of :func:`dataset_to_inline`, with full validation."""
    for key in ("name", "layers", "queries"):
        if key not in obj:
            raise IngestError(f"inline dataset missing required key {key!r}")
    layers = []
    artifacts = []
    for spec in obj["layers"]:
        layers.append(Layer(id=spec["id"], name=spec.get("name", spec["id"]), kind=spec["kind"]))
        for art in spec.get("artifacts", []):
            artifacts.append(
                Artifact(
                    id=art["id"],
                    layer_id=spec["id"],
                    body=art.get("body", ""),
                    title=art.get("title"),
                )
            )
    queries = []
    links = []
    for spec in obj["queries"]:
        queries.append(
            TraceQuery(id=spec["id"], source_layer_id=spec["source"], target_layer_id=spec["target"])
        )
        for pair in spec.get("true_links", []):
            links.append(TraceLink(query_id=spec["id"], source_id=pair[0], target_id=pair[1]))
    return Dataset(
        name=obj["name"],
        layers=layers,
        artifacts=artifacts,
        queries=queries,
        true_links=links,
        excluded={qid: ids for qid, ids in (obj.get("excluded") or {}).items()},
    )

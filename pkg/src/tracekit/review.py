"""Human-in-the-loop review projects: score once, queue by similarity,
record engineer verdicts durably, export approvals as training data.

Persistence is event-sourced per project directory:

    project.json     immutable creation record (dataset snapshot, scorer,
                     initial scores, ground truth if the dataset has one)
    decisions.jsonl  append-only verdict log, fsync'd before a decision call
                     returns (a crash after return never loses it)
    scores.json      current scores, atomically replaced by rescore
    snapshot.json    periodic state snapshot so replay stays cheap

Replaying decisions.jsonl over the initial all-pending state always
reproduces the live state; snapshots are an optimization, never the truth.
"""

from __future__ import annotations

import io
import csv
import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Dataset, dataset_from_inline, dataset_to_inline
from .errors import ReviewError
from .scoring import ScorerSpec, score_candidates
from .textpipe import analysis_profile, tokenize

STATE_PENDING = "pending"
STATE_APPROVED = "approved"
STATE_REJECTED = "rejected"

VERDICT_APPROVE = "approve"
VERDICT_REJECT = "reject"

_VERDICT_TO_STATE = {VERDICT_APPROVE: STATE_APPROVED, VERDICT_REJECT: STATE_REJECTED}
_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")

SNAPSHOT_INTERVAL = 500


def make_pair_id(query_id: str, source_id: str, target_id: str) -> str:
    return f"{query_id}::{source_id}::{target_id}"


@dataclass(frozen=True)
class DecisionLogEntry:
    seq: int
    pair_id: str
    verdict: str
    reviewer: str
    ts_ms: int

    def to_json_dict(self) -> dict:
        return {
            "seq": self.seq,
            "pair_id": self.pair_id,
            "verdict": self.verdict,
            "reviewer": self.reviewer,
            "ts_ms": self.ts_ms,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "DecisionLogEntry":
        return cls(
            seq=int(data["seq"]),
            pair_id=str(data["pair_id"]),
            verdict=str(data["verdict"]),
            reviewer=str(data["reviewer"]),
            ts_ms=int(data["ts_ms"]),
        )


@dataclass(frozen=True)
class ReviewItem:
    """One queue entry, ready for display."""

    pair_id: str
    query_id: str
    source_id: str
    target_id: str
    source_body: str
    target_body: str
    score: float
    overlap_terms: tuple[str, ...]
    state: str

    def to_json_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "query_id": self.query_id,
            "source_id": self.source_id,
            "target_id": self.target_id,
            "source_body": self.source_body,
            "target_body": self.target_body,
            "score": self.score,
            "overlap_terms": list(self.overlap_terms),
            "state": self.state,
        }


@dataclass
class ReviewProject:
    """In-memory view of one project; mutated only through the store."""

    id: str
    created_ts_ms: int
    scorer: dict
    dataset: Dataset
    pair_keys: dict[str, tuple[str, str, str]]  # pair_id -> (query, source, target)
    order: list[str]  # pair ids, canonical order
    scores: dict[str, float]
    states: dict[str, str]
    truths: frozenset[str]  # pair ids of true links
    last_seq: int

    def counts(self) -> dict[str, int]:
        approved = sum(1 for s in self.states.values() if s == STATE_APPROVED)
        rejected = sum(1 for s in self.states.values() if s == STATE_REJECTED)
        pending = len(self.states) - approved - rejected
        return {
            "items": len(self.states),
            "pending": pending,
            "approved": approved,
            "rejected": rejected,
            "decided": approved + rejected,
        }


class ProjectStore:
    """Single-writer-per-project file store rooted at one home directory."""

    def __init__(self, home: str | Path) -> None:
        self.home = Path(home)
        self.home.mkdir(parents=True, exist_ok=True)
        self._projects: dict[str, ReviewProject] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._master = threading.Lock()

    # -- helpers ------------------------------------------------------------

    def _lock(self, project_id: str) -> threading.RLock:
        with self._master:
            return self._locks.setdefault(project_id, threading.RLock())

    def project_dir(self, project_id: str) -> Path:
        return self.home / project_id

    def exists(self, project_id: str) -> bool:
        return (self.project_dir(project_id) / "project.json").is_file()

    def list_project_ids(self) -> list[str]:
        if not self.home.is_dir():
            return []
        return sorted(p.parent.name for p in self.home.glob("*/project.json"))

    # -- creation -----------------------------------------------------------

    def create_project(
        self,
        dataset: Dataset,
        scorer_spec: ScorerSpec,
        project_id: str | None = None,
    ) -> ReviewProject:
        """Score every candidate pair of the dataset and persist the project."""
        project_id = project_id or uuid.uuid4().hex[:12]
        if not _ID_RE.match(project_id):
            raise ReviewError(f"invalid project id {project_id!r}")
        with self._lock(project_id):
            pdir = self.project_dir(project_id)
            if self.exists(project_id):
                raise ReviewError(f"project exists: {project_id}")

            items = []
            seen: set[str] = set()
            for query in dataset.queries:
                for cand in score_candidates(scorer_spec, dataset, query.id):
                    pair_id = make_pair_id(query.id, cand.source_id, cand.target_id)
                    if pair_id in seen:
                        raise ReviewError(
                            f"pair id collision on {pair_id!r}; artifact ids containing '::'"
                            " are not reviewable"
                        )
                    seen.add(pair_id)
                    items.append(
                        {
                            "pair_id": pair_id,
                            "query": query.id,
                            "source": cand.source_id,
                            "target": cand.target_id,
                            "score": cand.score,
                        }
                    )
            items.sort(key=lambda it: (it["query"], it["source"], it["target"]))

            record = {
                "id": project_id,
                "created_ts_ms": int(time.time() * 1000),
                "scorer": scorer_spec.to_json_dict(),
                "dataset": dataset_to_inline(dataset),
                "items": items,
            }
            pdir.mkdir(parents=True, exist_ok=False)
            _write_json_durable(pdir / "project.json", record)
            (pdir / "decisions.jsonl").touch()
            _fsync_dir(pdir)
            return self._install(record, [], pdir)

    # -- loading ------------------------------------------------------------

    def get(self, project_id: str) -> ReviewProject:
        """Cached in-memory project, loading from disk on first touch."""
        with self._lock(project_id):
            if project_id not in self._projects:
                self._projects[project_id] = self._load(project_id)
            return self._projects[project_id]

    def _load(self, project_id: str) -> ReviewProject:
        pdir = self.project_dir(project_id)
        path = pdir / "project.json"
        if not path.is_file():
            raise ReviewError(f"unknown project: {project_id}")
        record = json.loads(path.read_text("utf-8"))
        entries = read_decision_log(pdir / "decisions.jsonl")
        return self._install(record, entries, pdir)

    def _install(
        self, record: Mapping, entries: Sequence[DecisionLogEntry], pdir: Path
    ) -> ReviewProject:
        dataset = dataset_from_inline(record["dataset"])
        pair_keys = {}
        order = []
        scores = {}
        for item in record["items"]:
            pair_id = item["pair_id"]
            pair_keys[pair_id] = (item["query"], item["source"], item["target"])
            order.append(pair_id)
            scores[pair_id] = float(item["score"])

        scores_path = pdir / "scores.json"
        scorer = dict(record["scorer"])
        if scores_path.is_file():
            current = json.loads(scores_path.read_text("utf-8"))
            scorer = dict(current["scorer"])
            for pair_id, score in current["scores"].items():
                if pair_id in scores:
                    scores[pair_id] = float(score)

        states = {pair_id: STATE_PENDING for pair_id in order}
        last_seq = 0
        snap_path = pdir / "snapshot.json"
        if snap_path.is_file():
            snap = json.loads(snap_path.read_text("utf-8"))
            last_seq = int(snap["last_seq"])
            for pair_id, state in snap["states"].items():
                if pair_id in states:
                    states[pair_id] = state
        states, last_seq = replay_decisions(states, entries, from_seq=last_seq)

        truths = frozenset(
            make_pair_id(q.id, s, t) for q in dataset.queries for s, t in dataset.links_for(q.id)
        )
        project = ReviewProject(
            id=record["id"],
            created_ts_ms=int(record["created_ts_ms"]),
            scorer=scorer,
            dataset=dataset,
            pair_keys=pair_keys,
            order=order,
            scores=scores,
            states=states,
            truths=truths,
            last_seq=last_seq,
        )
        self._projects[project.id] = project
        return project

    def drop_cache(self, project_id: str | None = None) -> None:
        """Forget in-memory state so the next access re-reads disk."""
        with self._master:
            if project_id is None:
                self._projects.clear()
            else:
                self._projects.pop(project_id, None)

    # -- mutations ----------------------------------------------------------

    def record_decision(
        self, project_id: str, pair_id: str, verdict: str, reviewer: str
    ) -> DecisionLogEntry:
        """Append a verdict durably, then apply it. Latest verdict wins."""
        if verdict not in _VERDICT_TO_STATE:
            raise ReviewError(f"invalid verdict {verdict!r} (expected approve or reject)")
        with self._lock(project_id):
            project = self.get(project_id)
            if pair_id not in project.states:
                raise ReviewError(f"unknown pair {pair_id!r} in project {project_id}")
            entry = DecisionLogEntry(
                seq=project.last_seq + 1,
                pair_id=pair_id,
                verdict=verdict,
                reviewer=reviewer,
                ts_ms=int(time.time() * 1000),
            )
            log_path = self.project_dir(project_id) / "decisions.jsonl"
            _append_durable(log_path, json.dumps(entry.to_json_dict(), sort_keys=True) + "\n")
            project.states[pair_id] = _VERDICT_TO_STATE[verdict]
            project.last_seq = entry.seq
            if entry.seq % SNAPSHOT_INTERVAL == 0:
                self._write_snapshot(project)
            return entry

    def _write_snapshot(self, project: ReviewProject) -> None:
        _write_json_durable(
            self.project_dir(project.id) / "snapshot.json",
            {"last_seq": project.last_seq, "states": project.states},
        )

    def rescore(self, project_id: str, scorer_spec: ScorerSpec) -> ReviewProject:
        """Re-score all candidates with a new scorer; decided states untouched.

        Scores are computed before anything is written, so a scorer failure
        leaves the project exactly as it was.
        """
        with self._lock(project_id):
            project = self.get(project_id)
            new_scores: dict[str, float] = {}
            for query in project.dataset.queries:
                for cand in score_candidates(scorer_spec, project.dataset, query.id):
                    pair_id = make_pair_id(query.id, cand.source_id, cand.target_id)
                    new_scores[pair_id] = cand.score
            missing = set(project.scores) - set(new_scores)
            if missing:
                raise ReviewError(f"rescore did not cover {len(missing)} pairs")
            _write_json_durable(
                self.project_dir(project_id) / "scores.json",
                {"scorer": scorer_spec.to_json_dict(), "scores": new_scores},
            )
            project.scores.update(new_scores)
            project.scorer = scorer_spec.to_json_dict()
            return project

    # -- queries ------------------------------------------------------------

    def next_batch(self, project_id: str, k: int, offset: int = 0) -> list[ReviewItem]:
        """The k highest-scored pending items (ties broken canonically)."""
        if k < 1:
            raise ReviewError("batch size k must be >= 1")
        with self._lock(project_id):
            project = self.get(project_id)
            pending = [pid for pid in project.order if project.states[pid] == STATE_PENDING]
            pending.sort(key=lambda pid: (-project.scores[pid], project.pair_keys[pid]))
            return [self._item(project, pid) for pid in pending[offset : offset + k]]

    def item(self, project_id: str, pair_id: str) -> ReviewItem:
        with self._lock(project_id):
            project = self.get(project_id)
            if pair_id not in project.states:
                raise ReviewError(f"unknown pair {pair_id!r} in project {project_id}")
            return self._item(project, pair_id)

    def _item(self, project: ReviewProject, pair_id: str) -> ReviewItem:
        query_id, source_id, target_id = project.pair_keys[pair_id]
        query = project.dataset.query(query_id)
        src_layer = project.dataset.layer(query.source_layer_id)
        tgt_layer = project.dataset.layer(query.target_layer_id)
        source = project.dataset.artifact(src_layer.id, source_id)
        target = project.dataset.artifact(tgt_layer.id, target_id)
        src_tokens = set(tokenize(source.body, analysis_profile(src_layer.kind)))
        tgt_tokens = set(tokenize(target.body, analysis_profile(tgt_layer.kind)))
        return ReviewItem(
            pair_id=pair_id,
            query_id=query_id,
            source_id=source_id,
            target_id=target_id,
            source_body=source.body,
            target_body=target.body,
            score=project.scores[pair_id],
            overlap_terms=tuple(sorted(src_tokens & tgt_tokens)),
            state=project.states[pair_id],
        )

    def export_training(self, project_id: str, query_id: str | None = None) -> str:
        """Answer-file CSV of the approved pairs, canonically ordered."""
        with self._lock(project_id):
            project = self.get(project_id)
            rows = [
                project.pair_keys[pid]
                for pid in project.order
                if project.states[pid] == STATE_APPROVED
                and (query_id is None or project.pair_keys[pid][0] == query_id)
            ]
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["source_id", "target_id"])
        for _, source_id, target_id in rows:
            writer.writerow([source_id, target_id])
        return buffer.getvalue()

    def vetted_metrics(self, project_id: str) -> dict:
        """Progress counts, plus approval precision when ground truth exists."""
        with self._lock(project_id):
            project = self.get(project_id)
            counts = project.counts()
            approved_ids = [
                pid for pid, state in project.states.items() if state == STATE_APPROVED
            ]
            precision = None
            if project.truths and approved_ids:
                hits = sum(1 for pid in approved_ids if pid in project.truths)
                precision = hits / len(approved_ids)
            counts["precision_vs_truth"] = precision
            return counts


# ---------------------------------------------------------------------------
# Log plumbing
# ---------------------------------------------------------------------------


def read_decision_log(path: str | Path) -> list[DecisionLogEntry]:
    path = Path(path)
    if not path.is_file():
        return []
    entries = []
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append(DecisionLogEntry.from_json_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ReviewError(f"{path}:{lineno}: corrupt decision log entry: {exc}") from exc
    return entries


def replay_decisions(
    states: dict[str, str], entries: Iterable[DecisionLogEntry], from_seq: int = 0
) -> tuple[dict[str, str], int]:
    """Apply log entries (seq > from_seq) to a state map; latest verdict wins."""
    last = from_seq
    for entry in entries:
        if entry.seq <= from_seq:
            continue
        if entry.seq != last + 1:
            raise ReviewError(f"decision log gap: expected seq {last + 1}, got {entry.seq}")
        state = _VERDICT_TO_STATE.get(entry.verdict)
        if state is None:
            raise ReviewError(f"corrupt decision log: unknown verdict {entry.verdict!r}")
        if entry.pair_id in states:
            states[entry.pair_id] = state
        last = entry.seq
    return states, last


def _append_durable(path: Path, text: str) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


def _write_json_durable(path: Path, obj: object) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)
    _fsync_dir(path.parent)


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)

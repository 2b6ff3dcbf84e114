"""Seeded candidate splits, ranking/classification metrics, and multi-seed
aggregation.

The split is pinned down to the bit: candidates are sorted canonically, then
Fisher-Yates-shuffled by a splitmix64 generator (j = next_u64() mod (i+1),
i = n-1 .. 1), then cut into train/val/eval by floor arithmetic on the
fractions. Two implementations that follow this recipe produce identical
partitions for the same seed. See docs/determinism.md.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Collection, Mapping, Sequence

from .corpus import Dataset, Pair, generate_candidates
from .errors import TracekitError, UndefinedMetricError
from .scoring import ScoredCandidate, ScorerSpec, score_candidates
from .textpipe import vsm_profile

_MASK64 = (1 << 64) - 1

DEFAULT_FRACTIONS = (0.35, 0.10, 0.55)
HALF_THRESHOLD = 0.5


class SplitMix64:
    """The splitmix64 generator; 64-bit state, 64-bit outputs."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def fisher_yates(items: list, rng: SplitMix64) -> None:
    """In-place Fisher-Yates shuffle; bounded draw is next_u64() mod (i+1)."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class SplitSpec:
    """Fractions plus seed; defaults are the 35/10/55 protocol."""

    seed: int
    train_fraction: float = DEFAULT_FRACTIONS[0]
    val_fraction: float = DEFAULT_FRACTIONS[1]
    eval_fraction: float = DEFAULT_FRACTIONS[2]

    def __post_init__(self) -> None:
        fractions = (self.train_fraction, self.val_fraction, self.eval_fraction)
        if any(f < 0 for f in fractions):
            raise TracekitError("split fractions must be nonnegative")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise TracekitError(f"split fractions must sum to 1, got {fractions}")
        if not (0 <= self.seed <= _MASK64):
            raise TracekitError("seed must fit in 64 unsigned bits")

    def part_sizes(self, n: int) -> tuple[int, int, int]:
        """(train, val, eval) sizes: floor(train*n), floor(val*n), remainder.

        Exact decimal arithmetic so float noise can never shift a boundary.
        """
        train = int(Fraction(str(self.train_fraction)) * n)
        val = int(Fraction(str(self.val_fraction)) * n)
        return train, val, n - train - val

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "val_fraction": self.val_fraction,
            "eval_fraction": self.eval_fraction,
        }


@dataclass(frozen=True)
class Partition:
    """Disjoint train/val/eval pair sets covering the full candidate set."""

    train: frozenset[Pair]
    val: frozenset[Pair]
    eval: frozenset[Pair]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.eval)

    def all_pairs(self) -> frozenset[Pair]:
        return self.train | self.val | self.eval

    def to_json_dict(self) -> dict:
        return {
            "train": [list(p) for p in sorted(self.train)],
            "val": [list(p) for p in sorted(self.val)],
            "eval": [list(p) for p in sorted(self.eval)],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Partition":
        return cls(
            train=frozenset((p[0], p[1]) for p in data["train"]),
            val=frozenset((p[0], p[1]) for p in data["val"]),
            eval=frozenset((p[0], p[1]) for p in data["eval"]),
        )


def split_candidates(candidates: Sequence[Pair], spec: SplitSpec) -> Partition:
    """Deterministic seeded partition of a candidate list.

    Input order does not matter: the list is sorted canonically before the
    shuffle, so pair -> part assignment depends only on (pairs, seed,
    fractions).
    """
    ordered = sorted(candidates)
    rng = SplitMix64(spec.seed)
    fisher_yates(ordered, rng)
    n_train, n_val, _ = spec.part_sizes(len(ordered))
    return Partition(
        train=frozenset(ordered[:n_train]),
        val=frozenset(ordered[n_train : n_train + n_val]),
        eval=frozenset(ordered[n_train + n_val :]),
    )


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------


def average_precision(ranked_labels: Sequence[bool]) -> float:
    """Mean of precision@rank over the relevant ranks."""
    precisions = []
    seen_true = 0
    for rank, label in enumerate(ranked_labels, start=1):
        if label:
            seen_true += 1
            precisions.append(seen_true / rank)
    if not precisions:
        raise UndefinedMetricError("average precision undefined without a true label")
    return sum(precisions) / len(precisions)


@dataclass(frozen=True)
class RunRecord:
    """One (scorer, seed) scoring pass over one query's candidates."""

    scorer_name: str
    seed: int
    dataset_name: str
    query_id: str
    partition: Partition
    scored: tuple[ScoredCandidate, ...]
    profile_info: Mapping | None = None
    fit_score_seconds: float | None = None


def _check_partition_covers(run: RunRecord) -> None:
    if run.partition.all_pairs() != {c.pair for c in run.scored}:
        raise TracekitError("partition does not match candidate set")


def mean_average_precision(run: RunRecord, truths: Collection[Pair]) -> tuple[float | None, int]:
    """Per-source MAP over the eval partition.

    Each source artifact ranks only its eval-partition targets (ties broken
    by canonical target order). Sources without an eval-partition true link
    do not get an AP; they are counted and reported separately. Returns
    (map or None when every source is excluded, excluded_source_count).
    """
    _check_partition_covers(run)
    truths = set(truths)
    by_source: dict[str, list[ScoredCandidate]] = {}
    for cand in run.scored:
        by_source.setdefault(cand.source_id, [])
        if cand.pair in run.partition.eval:
            by_source[cand.source_id].append(cand)

    aps = []
    excluded = 0
    for source_id in sorted(by_source):
        ranked = sorted(by_source[source_id], key=lambda c: (-c.score, c.target_id))
        labels = [c.pair in truths for c in ranked]
        if not any(labels):
            excluded += 1
            continue
        aps.append(average_precision(labels))
    if not aps:
        return None, excluded
    return sum(aps) / len(aps), excluded


# ---------------------------------------------------------------------------
# Threshold metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f2(self) -> float:
        p, r = self.precision, self.recall
        return 5 * p * r / (4 * p + r) if (4 * p + r) > 0 else 0.0

    def to_json_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class ThresholdPoint:
    threshold: float
    confusion: Confusion

    def to_json_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            **self.confusion.to_json_dict(),
            "precision": self.confusion.precision,
            "recall": self.confusion.recall,
            "f2": self.confusion.f2,
        }


def confusion_at(
    scored: Sequence[ScoredCandidate], truths: Collection[Pair], threshold: float
) -> Confusion:
    truths = set(truths)
    tp = fp = tn = fn = 0
    for cand in scored:
        positive = cand.score >= threshold
        true = cand.pair in truths
        if positive and true:
            tp += 1
        elif positive:
            fp += 1
        elif true:
            fn += 1
        else:
            tn += 1
    return Confusion(tp=tp, fp=fp, tn=tn, fn=fn)


def classify_at(
    scored: Sequence[ScoredCandidate],
    truths: Collection[Pair],
    threshold: float = HALF_THRESHOLD,
) -> tuple[frozenset[Pair], Confusion]:
    """Predicted-positive pairs (score >= threshold, inclusive) plus confusion."""
    positives = frozenset(c.pair for c in scored if c.score >= threshold)
    return positives, confusion_at(scored, truths, threshold)


def threshold_sweep(
    scored: Sequence[ScoredCandidate], truths: Collection[Pair]
) -> list[ThresholdPoint]:
    """Confusions at every distinct score plus the fixed 0.5 cut, descending."""
    thresholds = sorted({c.score for c in scored} | {HALF_THRESHOLD}, reverse=True)
    truths = set(truths)
    total_true = sum(1 for c in scored if c.pair in truths)
    total = len(scored)

    by_score = sorted(scored, key=lambda c: -c.score)
    points = []
    idx = 0
    tp = fp = 0
    for t in thresholds:
        while idx < total and by_score[idx].score >= t:
            if by_score[idx].pair in truths:
                tp += 1
            else:
                fp += 1
            idx += 1
        fn = total_true - tp
        tn = total - total_true - fp
        points.append(ThresholdPoint(threshold=t, confusion=Confusion(tp, fp, tn, fn)))
    return points


def max_f2(
    scored: Sequence[ScoredCandidate], truths: Collection[Pair]
) -> tuple[float, float]:
    """(threshold, value) maximizing F2 over the sweep.

    The value is the maximum over all swept cuts (distinct scores and 0.5);
    the returned threshold is the smallest observed score attaining it, so
    the reported cut always corresponds to an actual decision boundary.
    """
    if not scored:
        raise UndefinedMetricError("max F2 undefined on an empty eval partition")
    truths = set(truths)
    if not any(c.pair in truths for c in scored):
        raise UndefinedMetricError("max F2 undefined without a true link in eval")
    points = threshold_sweep(scored, truths)
    best_value = max(p.confusion.f2 for p in points)
    observed = {c.score for c in scored}
    best_threshold = min(
        p.threshold
        for p in points
        if p.confusion.f2 == best_value and p.threshold in observed
    )
    return best_threshold, best_value


# ---------------------------------------------------------------------------
# Per-run report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one run; None marks a metric undefined for this run."""

    scorer_name: str
    seed: int
    dataset_name: str
    query_id: str
    map: float | None
    excluded_query_sources: int
    max_f2: float | None
    max_f2_threshold: float | None
    precision_at_half: float
    recall_at_half: float
    f2_at_half: float
    confusion_at_half: Confusion
    threshold_curve: tuple[ThresholdPoint, ...]
    eval_size: int
    eval_true_count: int

    def to_json_dict(self, include_curve: bool = True) -> dict:
        data = {
            "scorer": self.scorer_name,
            "seed": self.seed,
            "dataset": self.dataset_name,
            "query": self.query_id,
            "map": self.map,
            "excluded_query_sources": self.excluded_query_sources,
            "max_f2": self.max_f2,
            "max_f2_threshold": self.max_f2_threshold,
            "precision_at_half": self.precision_at_half,
            "recall_at_half": self.recall_at_half,
            "f2_at_half": self.f2_at_half,
            "confusion_at_half": self.confusion_at_half.to_json_dict(),
            "eval_size": self.eval_size,
            "eval_true_count": self.eval_true_count,
        }
        if include_curve:
            data["threshold_curve"] = [p.to_json_dict() for p in self.threshold_curve]
        return data


def evaluate_run(run: RunRecord, truths: Collection[Pair]) -> MetricsReport:
    """Compute the full metric set for one run against ground truth."""
    _check_partition_covers(run)
    truths = set(truths)
    map_value, excluded = mean_average_precision(run, truths)
    eval_scored = [c for c in run.scored if c.pair in run.partition.eval]
    eval_true = sum(1 for c in eval_scored if c.pair in truths)

    curve = tuple(threshold_sweep(eval_scored, truths)) if eval_scored else ()
    try:
        best_threshold, best_value = max_f2(eval_scored, truths)
    except UndefinedMetricError:
        best_threshold, best_value = None, None

    at_half = confusion_at(eval_scored, truths, HALF_THRESHOLD)
    return MetricsReport(
        scorer_name=run.scorer_name,
        seed=run.seed,
        dataset_name=run.dataset_name,
        query_id=run.query_id,
        map=map_value,
        excluded_query_sources=excluded,
        max_f2=best_value,
        max_f2_threshold=best_threshold,
        precision_at_half=at_half.precision,
        recall_at_half=at_half.recall,
        f2_at_half=at_half.f2,
        confusion_at_half=at_half,
        threshold_curve=curve,
        eval_size=len(eval_scored),
        eval_true_count=eval_true,
    )


# ---------------------------------------------------------------------------
# Aggregation across seeds
# ---------------------------------------------------------------------------

AGGREGATED_METRICS = (
    "map",
    "max_f2",
    "precision_at_half",
    "recall_at_half",
    "f2_at_half",
)


@dataclass(frozen=True)
class MetricStat:
    mean: float | None
    min: float | None
    max: float | None
    defined_count: int
    undefined_count: int

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "defined_count": self.defined_count,
            "undefined_count": self.undefined_count,
        }


@dataclass(frozen=True)
class AggregateReport:
    """Mean/min/max per metric across a set of runs (typically the seeds)."""

    scorer_name: str
    dataset_name: str
    query_id: str
    run_count: int
    metrics: Mapping[str, MetricStat]

    def to_json_dict(self) -> dict:
        return {
            "scorer": self.scorer_name,
            "dataset": self.dataset_name,
            "query": self.query_id,
            "run_count": self.run_count,
            "metrics": {name: stat.to_json_dict() for name, stat in self.metrics.items()},
        }


def aggregate(reports: Sequence[MetricsReport]) -> AggregateReport:
    """Aggregate runs of one (dataset, query, scorer) cell across seeds.

    Undefined metrics are skipped per-metric and surface as undefined_count.
    """
    if not reports:
        raise TracekitError("cannot aggregate zero reports")
    first = reports[0]
    for rep in reports:
        if (rep.dataset_name, rep.query_id, rep.scorer_name) != (
            first.dataset_name,
            first.query_id,
            first.scorer_name,
        ):
            raise TracekitError("aggregate expects runs of one (dataset, query, scorer) cell")
    stats = {}
    for name in AGGREGATED_METRICS:
        values = [getattr(r, name) for r in reports]
        defined = [v for v in values if v is not None]
        if defined:
            low, high = min(defined), max(defined)
            # clamp float summation noise so min <= mean <= max holds exactly
            mean = min(max(math.fsum(defined) / len(defined), low), high)
            stats[name] = MetricStat(
                mean=mean,
                min=low,
                max=high,
                defined_count=len(defined),
                undefined_count=len(values) - len(defined),
            )
        else:
            stats[name] = MetricStat(
                mean=None, min=None, max=None, defined_count=0, undefined_count=len(values)
            )
    return AggregateReport(
        scorer_name=first.scorer_name,
        dataset_name=first.dataset_name,
        query_id=first.query_id,
        run_count=len(reports),
        metrics=stats,
    )


# ---------------------------------------------------------------------------
# Matrix orchestration (scorers x seeds, per query)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    query_id: str
    scorer_name: str
    seed: int
    report: MetricsReport
    fit_score_seconds: float
    partition: Partition


@dataclass(frozen=True)
class MatrixResult:
    dataset_name: str
    cells: tuple[CellResult, ...]
    aggregates: tuple[AggregateReport, ...]


def run_cell(
    dataset: Dataset,
    query_id: str,
    spec: ScorerSpec,
    seed: int,
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
) -> CellResult:
    """Score one query with one scorer under one seed and evaluate it."""
    split_spec = SplitSpec(
        seed=seed,
        train_fraction=fractions[0],
        val_fraction=fractions[1],
        eval_fraction=fractions[2],
    )
    candidates = generate_candidates(dataset, query_id)
    partition = split_candidates(candidates, split_spec)

    started = time.perf_counter()
    scored = tuple(score_candidates(spec, dataset, query_id))
    elapsed = time.perf_counter() - started

    if spec.profile_override is not None:
        profile_info: Mapping = {"override": spec.profile_override.to_json_dict()}
    else:
        profile_info = {
            kind: vsm_profile(kind).to_json_dict()
            for kind in ("natural-language", "source-code")
        }
    run = RunRecord(
        scorer_name=spec.name,
        seed=seed,
        dataset_name=dataset.name,
        query_id=query_id,
        partition=partition,
        scored=scored,
        profile_info=profile_info,
        fit_score_seconds=elapsed,
    )
    report = evaluate_run(run, dataset.links_for(query_id))
    return CellResult(
        query_id=query_id,
        scorer_name=spec.name,
        seed=seed,
        report=report,
        fit_score_seconds=elapsed,
        partition=partition,
    )


def run_matrix(
    dataset: Dataset,
    specs: Sequence[ScorerSpec],
    seeds: Sequence[int],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    jobs: int = 1,
    query_ids: Sequence[str] | None = None,
) -> MatrixResult:
    """Run every (query, scorer, seed) cell and aggregate each cell group."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise TracekitError(f"scorer names must be unique within a run matrix: {names}")
    if query_ids is None:
        query_ids = [q.id for q in dataset.queries]
    tasks = [
        (query_id, spec, seed) for query_id in query_ids for spec in specs for seed in seeds
    ]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(lambda t: run_cell(dataset, t[0], t[1], t[2], fractions), tasks))
    else:
        cells = [run_cell(dataset, qid, spec, seed, fractions) for qid, spec, seed in tasks]

    cells.sort(key=lambda c: (c.query_id, c.scorer_name, c.seed))
    aggregates = []
    for query_id in query_ids:
        for spec in specs:
            group = [c.report for c in cells if c.query_id == query_id and c.scorer_name == spec.name]
            if group:
                aggregates.append(aggregate(group))
    return MatrixResult(dataset_name=dataset.name, cells=tuple(cells), aggregates=tuple(aggregates))

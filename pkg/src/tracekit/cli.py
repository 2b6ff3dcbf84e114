"""Command-line frontend.

Machine-readable results go to files (JSON/CSV, deterministic byte-for-byte
for identical inputs); human-readable summaries go to stdout as markdown;
diagnostics go to stderr. Exit codes: 0 success, 1 domain error, 2 usage
error.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import click

from . import quality
from .corpus import (
    Dataset,
    dataset_summary,
    export_dataset,
    generate_candidates,
    load_dataset,
)
from .errors import TracekitError
from .experiment import (
    AggregateReport,
    Partition,
    RunRecord,
    SplitSpec,
    evaluate_run,
    run_matrix,
    split_candidates,
)
from .scoring import ScoredCandidate, parse_scorer_arg, score_candidates
from .textpipe import vsm_profile

UNDEFINED_CELL = "—"  # em dash stands for an undefined metric value


def _write_json(path: str | Path, obj: object) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", "utf-8")


def _load_dataset_arg(manifest: str) -> Dataset:
    dataset, report = load_dataset(manifest)
    for layer_id, artifact_id in report.empty_bodies:
        click.echo(f"note: empty body: {layer_id}/{artifact_id}", err=True)
    for query_id, source_id, target_id in report.duplicate_links:
        click.echo(
            f"note: duplicate answer row collapsed: {query_id}: {source_id},{target_id}",
            err=True,
        )
    return dataset


def _resolve_query(dataset: Dataset, query_id: str | None) -> str:
    if query_id is not None:
        dataset.query(query_id)
        return query_id
    if len(dataset.queries) == 1:
        return dataset.queries[0].id
    raise TracekitError(
        f"dataset has {len(dataset.queries)} queries; pick one with --query"
    )


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise TracekitError(f"--split expects three comma-separated fractions, got {text!r}")
    try:
        train, val, eval_ = (float(p) for p in parts)
    except ValueError as exc:
        raise TracekitError(f"bad fraction in --split: {text!r}") from exc
    return train, val, eval_


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise TracekitError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise TracekitError("need at least one seed")
    return seeds


def _pct(value: float | None) -> str:
    return UNDEFINED_CELL if value is None else f"{value * 100:.1f}"


def _fmt_time(seconds: float | None) -> str:
    if seconds is None:
        return UNDEFINED_CELL
    if seconds < 1.0:
        return "<1s"
    if seconds < 120.0:
        return f"{seconds:.1f}s"
    return f"{seconds / 60.0:.1f}m"


def render_table(
    aggregates: Sequence[AggregateReport],
    train_times: Mapping[tuple[str, str], float] | None = None,
    multi_query: bool = False,
) -> str:
    """Markdown results table: one row per (dataset, scorer) aggregate.

    Metrics are percentages with one decimal; the range columns show the
    min-max across seeds; undefined metrics render as an em dash with a
    footnote.
    """
    lines = [
        "| Dataset | Model | MAP | MAP range | F2 | F2 range | Train Time |",
        "|---|---|---|---|---|---|---|",
    ]
    any_undefined = False
    for agg in aggregates:
        dataset_cell = f"{agg.dataset_name}:{agg.query_id}" if multi_query else agg.dataset_name
        map_stat = agg.metrics["map"]
        f2_stat = agg.metrics["max_f2"]
        if map_stat.mean is None or f2_stat.mean is None:
            any_undefined = True
        map_range = (
            UNDEFINED_CELL
            if map_stat.min is None
            else f"{_pct(map_stat.min)}–{_pct(map_stat.max)}"
        )
        f2_range = (
            UNDEFINED_CELL
            if f2_stat.min is None
            else f"{_pct(f2_stat.min)}–{_pct(f2_stat.max)}"
        )
        seconds = (train_times or {}).get((agg.query_id, agg.scorer_name))
        lines.append(
            f"| {dataset_cell} | {agg.scorer_name} | {_pct(map_stat.mean)} | {map_range}"
            f" | {_pct(f2_stat.mean)} | {f2_range} | {_fmt_time(seconds)} |"
        )
    if any_undefined:
        lines.append("")
        lines.append(
            f"{UNDEFINED_CELL} metric undefined for every seed"
            " (no source artifact had an eval-split true link)."
        )
    return "\n".join(lines)


class _DomainErrorGroup(click.Group):
    """Map domain errors to exit code 1 with the message on stderr."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except TracekitError as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_DomainErrorGroup)
def cli() -> None:
    """Trace-link recovery toolkit."""


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--dataset", "manifest", required=True, type=click.Path(), help="Dataset manifest JSON.")
@click.option("--json", "json_out", type=click.Path(), default=None, help="Write the summary as JSON.")
def ingest(manifest: str, json_out: str | None) -> None:
    """Validate a manifest and print per-query dataset statistics."""
    dataset = _load_dataset_arg(manifest)
    rows = dataset_summary(dataset)
    click.echo(f"# {dataset.name}")
    click.echo("")
    click.echo("| Query | Sources | Targets | Candidate Links | True Links |")
    click.echo("|---|---|---|---|---|")
    for row in rows:
        click.echo(
            f"| {row.query_id} | {row.source_count} | {row.target_count}"
            f" | {row.candidate_count} | {row.true_count} |"
        )
    if json_out:
        _write_json(
            json_out,
            {
                "dataset": dataset.name,
                "queries": [
                    {
                        "query": r.query_id,
                        "source_count": r.source_count,
                        "target_count": r.target_count,
                        "candidate_count": r.candidate_count,
                        "true_count": r.true_count,
                    }
                    for r in rows
                ],
            },
        )


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--scorer", "scorer_arg", default="vsm", show_default=True,
              help="vsm or external:<endpoint>.")
@click.option("--query", "query_id", default=None)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Scored-candidates CSV.")
def score(manifest: str, scorer_arg: str, query_id: str | None, out_path: str) -> None:
    """Score every candidate pair of a query into a CSV."""
    dataset = _load_dataset_arg(manifest)
    query_id = _resolve_query(dataset, query_id)
    spec = parse_scorer_arg(scorer_arg)
    scored = score_candidates(spec, dataset, query_id)
    with Path(out_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "source_id", "target_id", "score"])
        for cand in scored:
            writer.writerow([cand.query_id, cand.source_id, cand.target_id, repr(cand.score)])
    click.echo(f"scored {len(scored)} candidates with {spec.name} -> {out_path}")


def _read_scores_csv(path: str | Path) -> list[ScoredCandidate]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["query_id", "source_id", "target_id", "score"]:
        raise TracekitError(f"{path}: expected header query_id,source_id,target_id,score")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != 4:
            raise TracekitError(f"{path}: malformed row {row!r}")
        out.append(
            ScoredCandidate(
                query_id=row[0], source_id=row[1], target_id=row[2], score=float(row[3])
            )
        )
    return out


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--query", "query_id", default=None)
@click.option("--seed", required=True, type=int)
@click.option("--split", "fractions_arg", default="0.35,0.10,0.55", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def split(manifest: str, query_id: str | None, seed: int, fractions_arg: str, out_path: str) -> None:
    """Write a deterministic seeded train/val/eval partition file."""
    dataset = _load_dataset_arg(manifest)
    query_id = _resolve_query(dataset, query_id)
    fractions = _parse_fractions(fractions_arg)
    spec = SplitSpec(
        seed=seed,
        train_fraction=fractions[0],
        val_fraction=fractions[1],
        eval_fraction=fractions[2],
    )
    candidates = generate_candidates(dataset, query_id)
    partition = split_candidates(candidates, spec)
    _write_json(
        out_path,
        {
            "dataset": dataset.name,
            "query": query_id,
            "seed": seed,
            "fractions": {
                "train": fractions[0],
                "val": fractions[1],
                "eval": fractions[2],
            },
            "sizes": list(partition.sizes),
            **partition.to_json_dict(),
        },
    )
    sizes = partition.sizes
    click.echo(f"split {len(candidates)} candidates -> train {sizes[0]}, val {sizes[1]}, eval {sizes[2]}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@cli.command("eval")
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--query", "query_id", default=None)
@click.option("--scores", "scores_path", required=True, type=click.Path())
@click.option("--partition", "partition_path", required=True, type=click.Path())
@click.option("--scorer-name", default=None, help="Label for the report; defaults to the scores file stem.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mispredictions", "mispred_path", type=click.Path(), default=None,
              help="Also write the FP+FN pair set at threshold 0.5.")
def eval_cmd(
    manifest: str,
    query_id: str | None,
    scores_path: str,
    partition_path: str,
    scorer_name: str | None,
    out_path: str,
    mispred_path: str | None,
) -> None:
    """Evaluate scored candidates against a partition file and ground truth."""
    dataset = _load_dataset_arg(manifest)
    query_id = _resolve_query(dataset, query_id)
    scored = _read_scores_csv(scores_path)
    try:
        partition_doc = json.loads(Path(partition_path).read_text("utf-8"))
        partition = Partition.from_json_dict(partition_doc)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise TracekitError(f"cannot read partition file {partition_path}: {exc}") from exc

    candidates = set(generate_candidates(dataset, query_id))
    if partition.all_pairs() != candidates or {c.pair for c in scored} != candidates:
        raise TracekitError("partition does not match candidate set")

    run = RunRecord(
        scorer_name=scorer_name or Path(scores_path).stem,
        seed=int(partition_doc.get("seed", 0)),
        dataset_name=dataset.name,
        query_id=query_id,
        partition=partition,
        scored=tuple(scored),
    )
    truths = dataset.links_for(query_id)
    report = evaluate_run(run, truths)
    _write_json(out_path, report.to_json_dict())
    if mispred_path:
        pairs = quality.misprediction_set(run, truths)
        _write_json(
            mispred_path,
            {
                "dataset": dataset.name,
                "query": query_id,
                "scorer": run.scorer_name,
                "seed": run.seed,
                "threshold": 0.5,
                "pairs": [list(p) for p in sorted(pairs)],
            },
        )
    click.echo(
        f"| {dataset.name} | {run.scorer_name} | {_pct(report.map)} | {_pct(report.max_f2)} | {UNDEFINED_CELL} |"
    )


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _load_run_config(path: str) -> dict:
    try:
        config = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TracekitError(f"cannot read run config {path}: {exc}") from exc
    if "dataset" in config:
        config["dataset"] = str((Path(path).parent / config["dataset"]).resolve())
    return config


@cli.command()
@click.option("--dataset", "manifest", default=None, type=click.Path())
@click.option("--scorer", "scorer_args", multiple=True, default=(),
              help="vsm or external:<endpoint>; repeatable. [default: vsm]")
@click.option("--seeds", "seeds_arg", default=None, help="[default: 1,2,3]")
@click.option("--split", "fractions_arg", default=None, help="[default: 0.35,0.10,0.55]")
@click.option("--query", "query_ids", multiple=True, default=())
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Run-manifest JSON {dataset, scorers, seeds, split, queries};"
                   " command-line flags override its fields.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--curve/--no-curve", default=False, show_default=True,
              help="Include full threshold curves in the results JSON.")
def run(
    manifest: str | None,
    scorer_args: tuple[str, ...],
    seeds_arg: str | None,
    fractions_arg: str | None,
    query_ids: tuple[str, ...],
    jobs: int,
    config_path: str | None,
    out_path: str,
    curve: bool,
) -> None:
    """Run the scorers x seeds matrix and write reports plus aggregates."""
    config = _load_run_config(config_path) if config_path else {}
    manifest = manifest or config.get("dataset")
    if not manifest:
        raise TracekitError("no dataset: pass --dataset or a --config with a dataset field")
    scorer_list = list(scorer_args) or list(config.get("scorers", [])) or ["vsm"]
    seeds_text = seeds_arg or config.get("seeds") or "1,2,3"
    if isinstance(seeds_text, list):
        seeds_text = ",".join(str(s) for s in seeds_text)
    split_field = fractions_arg or config.get("split") or "0.35,0.10,0.55"
    if isinstance(split_field, dict):
        split_field = f"{split_field['train']},{split_field['val']},{split_field['eval']}"
    query_ids = query_ids or tuple(config.get("queries", ()))

    dataset = _load_dataset_arg(manifest)
    seeds = _parse_seeds(seeds_text)
    fractions = _parse_fractions(split_field)
    specs = [parse_scorer_arg(arg) for arg in scorer_list]
    wall_start = time.perf_counter()
    result = run_matrix(
        dataset,
        specs,
        seeds,
        fractions=fractions,
        jobs=jobs,
        query_ids=list(query_ids) or None,
    )
    wall = time.perf_counter() - wall_start

    _write_json(
        out_path,
        {
            "dataset": dataset.name,
            "seeds": seeds,
            "fractions": {"train": fractions[0], "val": fractions[1], "eval": fractions[2]},
            "scorers": [s.to_json_dict() for s in specs],
            # effective defaults when a scorer has no profile_override
            "tokenizer_profiles": {
                kind: vsm_profile(kind).to_json_dict()
                for kind in ("natural-language", "source-code")
            },
            "runs": [c.report.to_json_dict(include_curve=curve) for c in result.cells],
            "aggregates": [a.to_json_dict() for a in result.aggregates],
        },
    )
    train_times: dict[tuple[str, str], float] = {}
    cell_seconds = []
    for cell in result.cells:
        key = (cell.query_id, cell.scorer_name)
        train_times[key] = max(train_times.get(key, 0.0), cell.fit_score_seconds)
        cell_seconds.append(
            {
                "query": cell.query_id,
                "scorer": cell.scorer_name,
                "seed": cell.seed,
                "fit_score_seconds": cell.fit_score_seconds,
            }
        )
    _write_json(
        str(out_path) + ".meta.json",
        {
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "wall_seconds": wall,
            "cells": cell_seconds,
        },
    )
    click.echo(
        render_table(result.aggregates, train_times, multi_query=len(dataset.queries) > 1)
    )


# ---------------------------------------------------------------------------
# orphans
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--query", "query_ids", multiple=True, default=())
@click.option("--prune", is_flag=True, default=False, help="Write a pruned manifest.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory for --prune.")
@click.option("--json", "json_out", type=click.Path(), default=None)
def orphans(
    manifest: str,
    query_ids: tuple[str, ...],
    prune: bool,
    out_dir: str | None,
    json_out: str | None,
) -> None:
    """Report artifacts with no true links; optionally prune them."""
    dataset = _load_dataset_arg(manifest)
    targets = list(query_ids) or [q.id for q in dataset.queries]
    reports = [quality.detect_orphans(dataset, qid) for qid in targets]
    for report in reports:
        click.echo(
            f"{report.total} orphan artifacts in query {report.query_id}"
            f" ({len(report.source_orphans)} source-side, {len(report.target_orphans)} target-side)"
        )
    if json_out:
        _write_json(json_out, {"dataset": dataset.name, "queries": [r.to_json_dict() for r in reports]})
    if prune:
        if not out_dir:
            raise TracekitError("--prune needs --out <directory> for the new manifest")
        pruned = dataset
        for qid in targets:
            pruned = quality.prune_orphans(pruned, qid)
        manifest_path = export_dataset(pruned, out_dir)
        click.echo(f"pruned manifest written to {manifest_path}")


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


@cli.group()
def analyze() -> None:
    """Dataset-health and misprediction analyses."""


@analyze.command()
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--vocab", "vocab_file", type=click.Path(), default=None)
@click.option("--low", default=quality.DEFAULT_LOW_FREQUENCY, show_default=True, type=float)
@click.option("--high", default=quality.DEFAULT_HIGH_FREQUENCY, show_default=True, type=float)
@click.option("--out", "out_path", type=click.Path(), default=None)
def health(manifest: str, vocab_file: str | None, low: float, high: float, out_path: str | None) -> None:
    """Per-layer readability, frequency bands, and OOV counts."""
    dataset = _load_dataset_arg(manifest)
    report = quality.dataset_health(dataset, vocab_file, low, high)
    click.echo("| Layer | FK grade | Low-freq terms | High-freq terms | OOV terms |")
    click.echo("|---|---|---|---|---|")
    for layer in report.layers:
        grade = UNDEFINED_CELL if layer.fk_grade is None else f"{layer.fk_grade:.2f}"
        oov = UNDEFINED_CELL if layer.oov is None else str(layer.oov.count)
        click.echo(
            f"| {layer.layer_id} | {grade} | {layer.bands.low_proportion:.3f}"
            f" | {layer.bands.high_proportion:.3f} | {oov} |"
        )
    if out_path:
        _write_json(out_path, report.to_json_dict())


@analyze.command()
@click.option("--dataset", "manifest", required=True, type=click.Path())
@click.option("--query", "query_id", default=None)
@click.option("--source", "source_id", required=True)
@click.option("--target", "target_id", required=True)
@click.option("--lexicon", "lexicon_file", required=True, type=click.Path())
@click.option("--dictionary", "dictionary_file", required=True, type=click.Path())
@click.option("--vocab", "vocab_file", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
def features(
    manifest: str,
    query_id: str | None,
    source_id: str,
    target_id: str,
    lexicon_file: str,
    dictionary_file: str,
    vocab_file: str,
    out_path: str | None,
) -> None:
    """Lexical features of one candidate link."""
    dataset = _load_dataset_arg(manifest)
    query_id = _resolve_query(dataset, query_id)
    report = quality.link_features(
        dataset, query_id, source_id, target_id, lexicon_file, dictionary_file, vocab_file
    )
    for key, value in report.to_json_dict().items():
        click.echo(f"{key}: {value}")
    if out_path:
        _write_json(
            out_path,
            {
                "dataset": dataset.name,
                "query": query_id,
                "source": source_id,
                "target": target_id,
                **report.to_json_dict(),
            },
        )


@analyze.command()
@click.option("--a", "path_a", required=True, type=click.Path())
@click.option("--b", "path_b", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
def agreement(path_a: str, path_b: str, out_path: str | None) -> None:
    """Overlap of two misprediction files (from `eval --mispredictions`)."""
    set_a = _read_pair_set(path_a)
    set_b = _read_pair_set(path_b)
    report = quality.agreement(set_a, set_b)
    click.echo(
        f"|A| = {report.size_a}, |B| = {report.size_b},"
        f" intersection = {report.intersection}, Jaccard = {report.jaccard:.4f}"
    )
    if out_path:
        _write_json(out_path, report.to_json_dict())


def _read_pair_set(path: str) -> set[tuple[str, str]]:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TracekitError(f"cannot read pair set {path}: {exc}") from exc
    pairs = doc["pairs"] if isinstance(doc, dict) else doc
    return {(p[0], p[1]) for p in pairs}


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--home", "home_dir", default=None, type=click.Path(),
              help="Project-store root; defaults to $TRACEKIT_HOME or ~/.tracekit.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8340, show_default=True, type=int)
def serve(home_dir: str | None, host: str, port: int) -> None:
    """Start the review service."""
    from .service import serve as run_service

    home = home_dir or os.environ.get("TRACEKIT_HOME") or str(Path.home() / ".tracekit")
    click.echo(f"serving review projects from {home} on http://{host}:{port}", err=True)
    run_service(home, host=host, port=port)


def main() -> None:
    try:
        cli(standalone_mode=True)
    except TracekitError as exc:
        # belt and braces: anything escaping the group's mapping
        click.echo(f"Error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()

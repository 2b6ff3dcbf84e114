from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from tracekit.cli import cli, render_table
from tracekit.corpus import export_dataset, load_dataset
from tracekit.experiment import MetricsReport, aggregate
from tracekit.quality import detect_orphans


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def cm1_manifest(tmp_path_factory):
    import synth

    planted = synth.cm1_like()
    out = tmp_path_factory.mktemp("cm1-data")
    return str(export_dataset(planted.dataset, out)), planted


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    import synth

    small = synth.make_traceable_dataset(
        "small", n_sources=4, n_targets=5, n_links=4, linked_sources=3, linked_targets=4, seed=3
    )
    out = tmp_path_factory.mktemp("small-data")
    return str(export_dataset(small.dataset, out)), small


ALL_COMMANDS = [
    ["ingest"],
    ["score"],
    ["split"],
    ["eval"],
    ["run"],
    ["orphans"],
    ["analyze"],
    ["analyze", "health"],
    ["analyze", "features"],
    ["analyze", "agreement"],
    ["serve"],
]


class TestHelp:
    @pytest.mark.parametrize("command", ALL_COMMANDS, ids=lambda c: "-".join(c))
    def test_every_subcommand_help_exits_zero(self, runner, command):
        result = runner.invoke(cli, command + ["--help"])
        assert result.exit_code == 0
        assert "--help" in result.output or "Usage" in result.output

    def test_usage_error_exits_two(self, runner):
        result = runner.invoke(cli, ["score"])  # missing required flags
        assert result.exit_code == 2


class TestIngest:
    def test_summary_table(self, runner, cm1_manifest):
        manifest, _ = cm1_manifest
        result = runner.invoke(cli, ["ingest", "--dataset", manifest])
        assert result.exit_code == 0
        assert "| cm1-like-q | 22 | 53 | 1166 | 45 |" in result.output

    def test_json_output(self, runner, cm1_manifest, tmp_path):
        manifest, _ = cm1_manifest
        out = tmp_path / "summary.json"
        result = runner.invoke(cli, ["ingest", "--dataset", manifest, "--json", str(out)])
        assert result.exit_code == 0
        data = json.loads(out.read_text("utf-8"))
        assert data["queries"][0]["candidate_count"] == 1166

    def test_bad_manifest_exits_one(self, runner, tmp_path):
        result = runner.invoke(cli, ["ingest", "--dataset", str(tmp_path / "no.json")])
        assert result.exit_code == 1


class TestScoreSplitEval:
    def test_pipeline(self, runner, tiny_manifest, tmp_path):
        manifest, planted = tiny_manifest
        scores = tmp_path / "scores.csv"
        partition = tmp_path / "partition.json"
        metrics = tmp_path / "metrics.json"
        mispred = tmp_path / "mispredictions.json"

        result = runner.invoke(cli, ["score", "--dataset", manifest, "--out", str(scores)])
        assert result.exit_code == 0, result.output
        assert len(scores.read_text("utf-8").strip().splitlines()) == 21  # header + 4*5

        result = runner.invoke(
            cli, ["split", "--dataset", manifest, "--seed", "1", "--out", str(partition)]
        )
        assert result.exit_code == 0, result.output
        sizes = json.loads(partition.read_text("utf-8"))["sizes"]
        assert sizes == [7, 2, 11]

        result = runner.invoke(
            cli,
            [
                "eval",
                "--dataset", manifest,
                "--scores", str(scores),
                "--partition", str(partition),
                "--scorer-name", "vsm",
                "--out", str(metrics),
                "--mispredictions", str(mispred),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(metrics.read_text("utf-8"))
        assert report["scorer"] == "vsm"
        assert report["eval_size"] == 11
        assert json.loads(mispred.read_text("utf-8"))["threshold"] == 0.5

    def test_eval_pipeline_matches_run_cell(self, runner, tiny_manifest, tmp_path):
        # score -> split -> eval through files must reproduce the in-process path
        from tracekit.experiment import run_cell
        from tracekit.scoring import ScorerSpec

        manifest, planted = tiny_manifest
        scores = tmp_path / "scores.csv"
        partition = tmp_path / "partition.json"
        metrics = tmp_path / "metrics.json"
        runner.invoke(cli, ["score", "--dataset", manifest, "--out", str(scores)])
        runner.invoke(cli, ["split", "--dataset", manifest, "--seed", "2", "--out", str(partition)])
        result = runner.invoke(
            cli,
            [
                "eval",
                "--dataset", manifest,
                "--scores", str(scores),
                "--partition", str(partition),
                "--scorer-name", "vsm",
                "--out", str(metrics),
            ],
        )
        assert result.exit_code == 0, result.output
        via_files = json.loads(metrics.read_text("utf-8"))
        cell = run_cell(planted.dataset, planted.query_id, ScorerSpec(name="vsm"), 2)
        direct = cell.report.to_json_dict()
        for key in ("map", "max_f2", "max_f2_threshold", "f2_at_half", "eval_size"):
            assert via_files[key] == direct[key]

    def test_split_files_are_byte_identical(self, runner, tiny_manifest, tmp_path):
        manifest, _ = tiny_manifest
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            result = runner.invoke(
                cli, ["split", "--dataset", manifest, "--seed", "7", "--out", str(out)]
            )
            assert result.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_partition_from_other_dataset_exits_one(self, runner, tiny_manifest, cm1_manifest, tmp_path):
        small_manifest, _ = tiny_manifest
        big_manifest, _ = cm1_manifest
        scores = tmp_path / "scores.csv"
        partition = tmp_path / "partition.json"
        runner.invoke(cli, ["score", "--dataset", small_manifest, "--out", str(scores)])
        runner.invoke(cli, ["split", "--dataset", big_manifest, "--seed", "1", "--out", str(partition)])
        result = runner.invoke(
            cli,
            [
                "eval",
                "--dataset", small_manifest,
                "--scores", str(scores),
                "--partition", str(partition),
                "--out", str(tmp_path / "m.json"),
            ],
        )
        assert result.exit_code == 1
        assert "partition does not match candidate set" in result.output


class TestRun:
    def test_matrix_outputs(self, runner, tiny_manifest, tmp_path):
        manifest, _ = tiny_manifest
        out = tmp_path / "results.json"
        result = runner.invoke(
            cli,
            ["run", "--dataset", manifest, "--scorer", "vsm", "--seeds", "1,2,3", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "| Dataset | Model | MAP |" in result.output
        assert "| small | vsm |" in result.output
        data = json.loads(out.read_text("utf-8"))
        assert len(data["runs"]) == 3
        assert len(data["aggregates"]) == 1
        meta = json.loads((tmp_path / "results.json.meta.json").read_text("utf-8"))
        assert len(meta["cells"]) == 3

    def test_run_config_file(self, runner, tiny_manifest, tmp_path):
        manifest, _ = tiny_manifest
        config = tmp_path / "run.json"
        config.write_text(
            json.dumps(
                {
                    "dataset": manifest,
                    "scorers": ["vsm"],
                    "seeds": [1, 2],
                    "split": {"train": 0.35, "val": 0.10, "eval": 0.55},
                }
            ),
            "utf-8",
        )
        out = tmp_path / "results.json"
        result = runner.invoke(cli, ["run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        data = json.loads(out.read_text("utf-8"))
        assert data["seeds"] == [1, 2]
        assert data["tokenizer_profiles"]["source-code"]["split_identifiers"] is True

    def test_run_without_dataset_exits_one(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "--out", str(tmp_path / "r.json")])
        assert result.exit_code == 1
        assert "no dataset" in result.output

    def test_results_json_is_deterministic(self, runner, tiny_manifest, tmp_path):
        manifest, _ = tiny_manifest
        a, b = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (a, b):
            result = runner.invoke(
                cli,
                ["run", "--dataset", manifest, "--scorer", "vsm", "--seeds", "1,2", "--out", str(out)],
            )
            assert result.exit_code == 0
        assert a.read_bytes() == b.read_bytes()


class TestOrphans:
    def test_count_line(self, runner, cm1_manifest):
        manifest, _ = cm1_manifest
        result = runner.invoke(cli, ["orphans", "--dataset", manifest])
        assert result.exit_code == 0
        assert "26 orphan artifacts" in result.output

    def test_prune_writes_orphan_free_manifest(self, runner, cm1_manifest, tmp_path):
        manifest, planted = cm1_manifest
        out_dir = tmp_path / "pruned"
        result = runner.invoke(
            cli, ["orphans", "--dataset", manifest, "--prune", "--out", str(out_dir)]
        )
        assert result.exit_code == 0, result.output
        pruned, _ = load_dataset(out_dir / "manifest.json")
        assert detect_orphans(pruned, planted.query_id).total == 0
        sources, targets = pruned.participants(planted.query_id)
        assert len(sources) + len(targets) == 49

    def test_prune_without_out_exits_one(self, runner, cm1_manifest):
        manifest, _ = cm1_manifest
        result = runner.invoke(cli, ["orphans", "--dataset", manifest, "--prune"])
        assert result.exit_code == 1


class TestAnalyze:
    def test_health(self, runner, cm1_manifest, tmp_path):
        manifest, _ = cm1_manifest
        out = tmp_path / "health.json"
        result = runner.invoke(
            cli, ["analyze", "health", "--dataset", manifest, "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "| Layer | FK grade |" in result.output
        data = json.loads(out.read_text("utf-8"))
        assert len(data["layers"]) == 2

    def test_features(self, runner, tiny_manifest, tmp_path):
        manifest, planted = tiny_manifest
        lexicon = tmp_path / "lex.tsv"
        lexicon.write_text("error\tsyn\tfault\n", "utf-8")
        words = tmp_path / "words.txt"
        words.write_text("system\ndata\nerror\n", "utf-8")
        link = sorted(planted.dataset.links_for(planted.query_id))[0]
        result = runner.invoke(
            cli,
            [
                "analyze", "features",
                "--dataset", manifest,
                "--source", link[0],
                "--target", link[1],
                "--lexicon", str(lexicon),
                "--dictionary", str(words),
                "--vocab", str(words),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "overlap_count:" in result.output

    def test_agreement(self, runner, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"pairs": [["s1", "t1"], ["s1", "t2"], ["s2", "t1"]]}), "utf-8")
        b.write_text(json.dumps({"pairs": [["s1", "t2"], ["s2", "t1"], ["s9", "t9"]]}), "utf-8")
        result = runner.invoke(cli, ["analyze", "agreement", "--a", str(a), "--b", str(b)])
        assert result.exit_code == 0
        assert "intersection = 2" in result.output
        assert "Jaccard = 0.5000" in result.output


class TestRenderTable:
    def make_aggregate(self, map_values, scorer="vsm"):
        reports = [
            MetricsReport(
                scorer_name=scorer,
                seed=i,
                dataset_name="CM1",
                query_id="q",
                map=v,
                excluded_query_sources=0,
                max_f2=(v / 2 if v is not None else None),
                max_f2_threshold=0.4,
                precision_at_half=0.1,
                recall_at_half=0.2,
                f2_at_half=0.15,
                confusion_at_half=None,
                threshold_curve=(),
                eval_size=10,
                eval_true_count=3,
            )
            for i, v in enumerate(map_values)
        ]
        return aggregate(reports)

    def test_percent_formatting(self):
        table = render_table([self.make_aggregate([0.714, 0.714, 0.714])], {("q", "vsm"): 0.2})
        assert "| CM1 | vsm | 71.4 |" in table
        assert "<1s" in table

    def test_undefined_renders_dash_with_footnote(self):
        table = render_table([self.make_aggregate([None, None])])
        assert "—" in table
        assert "undefined" in table

    def test_empty_input_headers_only(self):
        table = render_table([])
        assert table.splitlines()[0].startswith("| Dataset | Model |")
        assert len(table.splitlines()) == 2

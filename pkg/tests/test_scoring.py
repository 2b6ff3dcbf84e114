from __future__ import annotations

import json
import math
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tracekit.corpus import Artifact, Dataset, Layer, TraceQuery
from tracekit.errors import ScorerProtocolError, TracekitError, UnknownIdError
from tracekit.scoring import (
    ScoredCandidate,
    ScorerSpec,
    external_score,
    fit_query_vsm,
    fit_vsm,
    fit_vsm_tokens,
    parse_scorer_arg,
    score_candidates,
    score_pair,
)
from tracekit.textpipe import vsm_profile

import oracles
from conftest import mock_endpoint

NL = vsm_profile("natural-language")


def random_token_corpus(rng: random.Random) -> list[list[str]]:
    """<= 10 docs over <= 20 terms; some docs may be empty."""
    vocab = [f"t{i}" for i in range(rng.randint(1, 20))]
    docs = []
    for _ in range(rng.randint(2, 10)):
        length = rng.randint(0, 12)
        docs.append([rng.choice(vocab) for _ in range(length)])
    return docs


class TestFitVsm:
    def test_idf_fixture(self):
        model = fit_vsm([("d1", "alpha beta"), ("d2", "beta gamma")], NL)
        assert model.idf["beta"] == pytest.approx(1.0, abs=1e-12)
        expected = math.log(1.5) + 1
        assert model.idf["alpha"] == pytest.approx(expected, abs=1e-9)
        assert model.idf["gamma"] == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(1.405465, abs=1e-6)

    def test_single_document_idf_is_one(self):
        model = fit_vsm([("d1", "alpha beta beta")], NL)
        assert set(model.idf.values()) == {1.0}

    def test_empty_document_gets_zero_vector(self):
        model = fit_vsm([("d1", "alpha"), ("d2", "")], NL)
        assert model.vectors["d2"] == {}

    def test_empty_corpus(self):
        model = fit_vsm([], NL)
        assert model.vocabulary == {}
        assert model.vectors == {}

    def test_vectors_are_unit_norm_or_zero(self):
        rng = random.Random(5)
        for _ in range(20):
            docs = random_token_corpus(rng)
            model = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
            for vec in model.vectors.values():
                norm = math.sqrt(sum(w * w for w in vec.values()))
                assert norm == 0.0 or norm == pytest.approx(1.0, abs=1e-12)

    def test_idf_always_positive(self):
        rng = random.Random(6)
        docs = random_token_corpus(rng)
        model = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
        assert all(v > 0 for v in model.idf.values())

    def test_duplicate_doc_key_rejected(self):
        with pytest.raises(TracekitError, match="duplicate document key"):
            fit_vsm([("d", "a b"), ("d", "c d")], NL)


class TestScorePair:
    def test_hand_computed_cosine_fixture(self):
        model = fit_vsm([("d1", "alpha beta"), ("d2", "beta gamma")], NL)
        value = score_pair(model, "d1", "d2")
        assert value == pytest.approx(0.3361, abs=1e-4)
        oracle = oracles.dense_cosine([["alpha", "beta"], ["beta", "gamma"]], 0, 1)
        assert value == pytest.approx(oracle, abs=1e-9)

    def test_identical_documents_score_one(self):
        model = fit_vsm([("d1", "alpha beta gamma"), ("d2", "alpha beta gamma")], NL)
        assert score_pair(model, "d1", "d2") == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_vocabularies_score_zero(self):
        model = fit_vsm([("d1", "alpha beta"), ("d2", "gamma delta")], NL)
        assert score_pair(model, "d1", "d2") == 0.0

    def test_zero_vector_scores_zero(self):
        model = fit_vsm([("d1", "alpha beta"), ("d2", "")], NL)
        assert score_pair(model, "d1", "d2") == 0.0

    def test_unknown_id(self):
        model = fit_vsm([("d1", "alpha")], NL)
        with pytest.raises(UnknownIdError):
            score_pair(model, "d1", "nope")

    def test_brute_force_equivalence_100_corpora(self):
        rng = random.Random(42)
        for _ in range(100):
            docs = random_token_corpus(rng)
            model = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
            i = rng.randrange(len(docs))
            j = rng.randrange(len(docs))
            assert score_pair(model, i, j) == pytest.approx(
                oracles.dense_cosine(docs, i, j), abs=1e-9
            )

    def test_symmetry(self):
        rng = random.Random(7)
        for _ in range(30):
            docs = random_token_corpus(rng)
            model = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
            i = rng.randrange(len(docs))
            j = rng.randrange(len(docs))
            assert score_pair(model, i, j) == score_pair(model, j, i)

    def test_ranking_scale_invariance(self):
        rng = random.Random(8)
        docs = random_token_corpus(rng)
        doubled = [d + d for d in docs]
        m1 = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
        m2 = fit_vsm_tokens([(i, d) for i, d in enumerate(doubled)])
        for i in range(len(docs)):
            for j in range(len(docs)):
                assert score_pair(m1, i, j) == pytest.approx(score_pair(m2, i, j), abs=1e-12)

    def test_determinism_bit_identical(self):
        rng = random.Random(9)
        docs = random_token_corpus(rng)
        m1 = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
        m2 = fit_vsm_tokens([(i, d) for i, d in enumerate(docs)])
        scores1 = [score_pair(m1, i, j) for i in range(len(docs)) for j in range(len(docs))]
        scores2 = [score_pair(m2, i, j) for i in range(len(docs)) for j in range(len(docs))]
        assert scores1 == scores2


class TestScoreCandidates:
    def test_planted_cm1_shape(self, cm1_planted):
        spec = ScorerSpec(name="vsm")
        scored = score_candidates(spec, cm1_planted.dataset, cm1_planted.query_id)
        assert len(scored) == 1166
        assert all(0.0 <= c.score <= 1.0 for c in scored)
        pairs = [c.pair for c in scored]
        assert pairs == sorted(pairs)

    def test_code_layer_gets_identifier_splitting(self):
        dataset = Dataset(
            name="nl-code",
            layers=[
                Layer(id="req", name="req", kind="natural-language"),
                Layer(id="src", name="src", kind="source-code"),
            ],
            artifacts=[
                Artifact(id="R1", layer_id="req", body="handle error queue overflow"),
                Artifact(id="F1", layer_id="src", body="void handleErrorQueue() {}"),
                Artifact(id="F2", layer_id="src", body="int openChannel() {}"),
            ],
            queries=[TraceQuery(id="q", source_layer_id="req", target_layer_id="src")],
            true_links=[],
        )
        scored = {c.pair: c.score for c in score_candidates(ScorerSpec(name="vsm"), dataset, "q")}
        assert scored[("R1", "F1")] > 0.3
        assert scored[("R1", "F1")] > scored[("R1", "F2")]

    def test_empty_target_layer_yields_empty_list(self):
        dataset = Dataset(
            name="empty",
            layers=[
                Layer(id="a", name="a", kind="natural-language"),
                Layer(id="b", name="b", kind="natural-language"),
            ],
            artifacts=[Artifact(id="A1", layer_id="a", body="text")],
            queries=[TraceQuery(id="q", source_layer_id="a", target_layer_id="b")],
            true_links=[],
        )
        assert score_candidates(ScorerSpec(name="vsm"), dataset, "q") == []

    def test_mock_constant_scorer_passthrough(self, tiny_dataset):
        spec = ScorerSpec(name="const", kind="external", endpoint=mock_endpoint("constant", "0.5"))
        scored = score_candidates(spec, tiny_dataset, "q1")
        assert len(scored) == 9
        assert {c.score for c in scored} == {0.5}

    def test_fit_is_over_participants_of_both_layers(self, tiny_dataset):
        model = fit_query_vsm(tiny_dataset, "q1")
        assert len(model.vectors) == 6


class TestExternalProtocol:
    def pairs(self, n=5):
        return [
            {
                "source_id": f"S{i}",
                "target_id": f"T{i}",
                "source_text": f"text {i}",
                "target_text": f"text {i}",
            }
            for i in range(n)
        ]

    def test_constant_scores_order_and_length(self):
        scores = external_score(mock_endpoint("constant", "0.25"), self.pairs(5))
        assert scores == [0.25] * 5

    def test_batching_preserves_order(self, tmp_path):
        answers = tmp_path / "answers.csv"
        answers.write_text("source_id,target_id\nS1,T1\nS3,T3\n", "utf-8")
        scores = external_score(
            mock_endpoint("oracle", str(answers)), self.pairs(5), max_batch=2
        )
        assert scores == [0.0, 1.0, 0.0, 1.0, 0.0]

    def test_out_of_range_score_aborts(self):
        with pytest.raises(ScorerProtocolError, match="out of range at pair #0"):
            external_score(mock_endpoint("out-of-range"), self.pairs(2))

    def test_length_mismatch_aborts(self):
        with pytest.raises(ScorerProtocolError, match="length mismatch"):
            external_score(mock_endpoint("length-mismatch"), self.pairs(3))

    def test_garbage_response_aborts(self):
        with pytest.raises(ScorerProtocolError, match="malformed JSON"):
            external_score(mock_endpoint("garbage"), self.pairs(2))

    def test_timeout_aborts(self):
        with pytest.raises(ScorerProtocolError, match="timed out"):
            external_score(mock_endpoint("sleep", "5"), self.pairs(2), timeout_s=0.3)

    def test_unknown_endpoint_scheme(self):
        with pytest.raises(ScorerProtocolError, match="unsupported external endpoint"):
            external_score("ftp://nope", self.pairs(1))

    def test_empty_pairs_short_circuit(self):
        assert external_score("cmd:false", []) == []

    def test_unspawnable_command(self):
        with pytest.raises(ScorerProtocolError, match="cannot spawn"):
            external_score("cmd:/nonexistent/binary", self.pairs(1))


class _HttpScorer(BaseHTTPRequestHandler):
    mode = "ok"

    def do_POST(self):  # noqa: N802  (stdlib naming)
        length = int(self.headers["Content-Length"])
        request = json.loads(self.rfile.read(length))
        n = len(request["pairs"])
        if self.mode == "ok":
            payload = {"scores": [0.75] * n}
        elif self.mode == "range":
            payload = {"scores": [2.0] * n}
        else:
            payload = {"wrong": []}
        body = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # silence
        pass


@pytest.fixture
def http_scorer():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _HttpScorer)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/score", _HttpScorer
    server.shutdown()


class TestExternalHttp:
    def test_http_scores(self, http_scorer):
        url, handler = http_scorer
        handler.mode = "ok"
        pairs = TestExternalProtocol().pairs(3)
        assert external_score(url, pairs) == [0.75] * 3

    def test_http_out_of_range(self, http_scorer):
        url, handler = http_scorer
        handler.mode = "range"
        with pytest.raises(ScorerProtocolError, match="out of range"):
            external_score(url, TestExternalProtocol().pairs(2))

    def test_http_malformed(self, http_scorer):
        url, handler = http_scorer
        handler.mode = "malformed"
        with pytest.raises(ScorerProtocolError, match="no 'scores'"):
            external_score(url, TestExternalProtocol().pairs(2))


class TestSpecs:
    def test_parse_vsm(self):
        spec = parse_scorer_arg("vsm")
        assert spec.kind == "vsm"

    def test_parse_external(self):
        spec = parse_scorer_arg("external:http://localhost:9/score")
        assert spec.kind == "external"
        assert spec.endpoint == "http://localhost:9/score"

    def test_parse_unknown(self):
        with pytest.raises(TracekitError):
            parse_scorer_arg("lsi")

    def test_external_requires_endpoint(self):
        with pytest.raises(TracekitError):
            ScorerSpec(name="x", kind="external")

    def test_scored_candidate_range_validation(self):
        with pytest.raises(TracekitError):
            ScoredCandidate(query_id="q", source_id="a", target_id="b", score=1.5)

    def test_spec_serialization_round_trip(self):
        spec = ScorerSpec(name="ext", kind="external", endpoint="cmd:foo", max_batch=8)
        assert ScorerSpec.from_json_dict(spec.to_json_dict()) == spec

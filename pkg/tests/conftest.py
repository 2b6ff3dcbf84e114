from __future__ import annotations

import sys
from pathlib import Path

import pytest

from tracekit.corpus import Artifact, Dataset, Layer, TraceLink, TraceQuery

import synth

TESTS_DIR = Path(__file__).parent
MOCK_SCORER = TESTS_DIR / "mock_scorer.py"


def mock_endpoint(mode: str, arg: str | None = None) -> str:
    """cmd: endpoint for the NDJSON mock scorer."""
    suffix = f" {arg}" if arg is not None else ""
    return f"cmd:{sys.executable} {MOCK_SCORER} {mode}{suffix}"


@pytest.fixture
def tiny_dataset() -> Dataset:
    """3 x 3 two-layer dataset with 2 true links; small enough to hand-check."""
    return Dataset(
        name="tiny",
        layers=[
            Layer(id="req", name="Requirements", kind="natural-language"),
            Layer(id="des", name="Designs", kind="natural-language"),
        ],
        artifacts=[
            Artifact(id="R1", layer_id="req", body="The error queue shall hold codes."),
            Artifact(id="R2", layer_id="req", body="Telemetry frames are sent downlink."),
            Artifact(id="R3", layer_id="req", body="Operator display shows alarms."),
            Artifact(id="D1", layer_id="des", body="Error codes are queued for the queue."),
            Artifact(id="D2", layer_id="des", body="Downlink telemetry frame encoder."),
            Artifact(id="D3", layer_id="des", body="Watchdog timer reset logic."),
        ],
        queries=[TraceQuery(id="q1", source_layer_id="req", target_layer_id="des")],
        true_links=[
            TraceLink(query_id="q1", source_id="R1", target_id="D1"),
            TraceLink(query_id="q1", source_id="R2", target_id="D2"),
        ],
    )


@pytest.fixture(scope="session")
def cm1_planted() -> synth.PlantedDataset:
    return synth.cm1_like()


@pytest.fixture(scope="session")
def dpl_planted() -> synth.PlantedDataset:
    return synth.dpl_like()

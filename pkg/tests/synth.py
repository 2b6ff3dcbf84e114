"""Deterministic synthetic datasets shaped like the study corpora.

The generator plants structure up front (which artifacts participate in true
links, which words two linked artifacts share), so tests can check detectors
against ground truth chosen independently of the code under test. Shapes
mirror the real corpora: cm1_like is 22x53 with 45 links and exactly 26
planted orphans; dpl_like is 99x458 with 232 links and 327 planted orphans.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from tracekit.corpus import Artifact, Dataset, Layer, TraceLink, TraceQuery

_PROSE = (
    "system shall provide data processing unit status register error queue "
    "message control telemetry command interface module memory buffer table "
    "record event timer watchdog reset power sensor value limit range check "
    "valid input output packet frame header field code flag mask bit word "
    "report log monitor display operator ground station uplink downlink "
    "schedule task priority state machine mode configuration parameter "
    "threshold alarm warning critical safety requirement design component "
    "software hardware test case verify validate trace link document section"
).split()

_JARGON = (
    "tmali dci scm dpu ccm scui nvm eeprom crc fifo dma spw mil1553 "
    "housekeeping subframe apid pus tc tm obdh aocs"
).split()

_CODE_WORDS = (
    "getStatus setMode parseFrame sendPacket readBuffer writeRegister "
    "initDevice resetTimer checkCrc handleError queueMessage dispatchEvent "
    "updateState loadConfig storeValue computeChecksum validateInput "
    "openChannel closeChannel pollSensor"
).split()


@dataclass(frozen=True)
class PlantedDataset:
    dataset: Dataset
    query_id: str
    orphan_sources: tuple[str, ...]
    orphan_targets: tuple[str, ...]

    @property
    def orphans(self) -> tuple[str, ...]:
        return self.orphan_sources + self.orphan_targets


def make_traceable_dataset(
    name: str,
    n_sources: int,
    n_targets: int,
    n_links: int,
    linked_sources: int,
    linked_targets: int,
    seed: int,
    target_kind: str = "natural-language",
) -> PlantedDataset:
    """Build one-query dataset with a planted participant/orphan structure."""
    assert linked_sources <= n_sources and linked_targets <= n_targets
    assert n_links >= max(linked_sources, linked_targets)
    assert linked_targets >= linked_sources, "round-robin coverage needs |T'| >= |S'|"
    rng = random.Random(seed)

    source_ids = [f"HL-{i:03d}" for i in range(1, n_sources + 1)]
    target_ids = [f"LL-{i:03d}" for i in range(1, n_targets + 1)]
    participants_s = sorted(rng.sample(source_ids, linked_sources))
    participants_t = sorted(rng.sample(target_ids, linked_targets))

    # Round robin covers every participant on both sides, then random extras.
    pairs = {(participants_s[i % linked_sources], t) for i, t in enumerate(participants_t)}
    while len(pairs) < n_links:
        pairs.add((rng.choice(participants_s), rng.choice(participants_t)))

    words_by_artifact: dict[tuple[str, str], list[str]] = {}
    for sid in source_ids:
        words_by_artifact[("src", sid)] = rng.sample(_PROSE, 10) + [rng.choice(_JARGON)]
    word_pool = _CODE_WORDS if target_kind == "source-code" else _PROSE
    for tid in target_ids:
        words_by_artifact[("tgt", tid)] = rng.sample(word_pool, 8) + [rng.choice(_JARGON)]

    # Linked pairs share topic words so a lexical scorer has real signal.
    for sid, tid in sorted(pairs):
        topic = rng.sample(_PROSE, 3)
        words_by_artifact[("src", sid)].extend(topic)
        words_by_artifact[("tgt", tid)].extend(topic)

    def prose_body(words: list[str]) -> str:
        chunks = []
        for i in range(0, len(words), 7):
            chunks.append(" ".join(words[i : i + 7]).capitalize() + ".")
        return " ".join(chunks)

    def code_body(words: list[str]) -> str:
        return "\n".join(f"void {w}() {{ /* {w} */ }}" for w in words)

    artifacts = [
        Artifact(id=sid, layer_id="high", body=prose_body(words_by_artifact[("src", sid)]))
        for sid in source_ids
    ]
    make_body = code_body if target_kind == "source-code" else prose_body
    artifacts += [
        Artifact(id=tid, layer_id="low", body=make_body(words_by_artifact[("tgt", tid)]))
        for tid in target_ids
    ]

    query_id = f"{name}-q"
    dataset = Dataset(
        name=name,
        layers=[
            Layer(id="high", name="High-level artifacts", kind="natural-language"),
            Layer(id="low", name="Low-level artifacts", kind=target_kind),
        ],
        artifacts=artifacts,
        queries=[TraceQuery(id=query_id, source_layer_id="high", target_layer_id="low")],
        true_links=[
            TraceLink(query_id=query_id, source_id=s, target_id=t) for s, t in sorted(pairs)
        ],
    )
    return PlantedDataset(
        dataset=dataset,
        query_id=query_id,
        orphan_sources=tuple(s for s in source_ids if s not in participants_s),
        orphan_targets=tuple(t for t in target_ids if t not in participants_t),
    )


def cm1_like(seed: int = 7) -> PlantedDataset:
    """22 x 53 requirements, 45 true links, exactly 26 planted orphans."""
    return make_traceable_dataset(
        "cm1-like",
        n_sources=22,
        n_targets=53,
        n_links=45,
        linked_sources=19,
        linked_targets=30,
        seed=seed,
    )


def dpl_like(seed: int = 11) -> PlantedDataset:
    """99 designs x 458 code modules, 232 true links, 327 planted orphans."""
    return make_traceable_dataset(
        "dpl-like",
        n_sources=99,
        n_targets=458,
        n_links=232,
        linked_sources=80,
        linked_targets=150,
        seed=seed,
        target_kind="source-code",
    )

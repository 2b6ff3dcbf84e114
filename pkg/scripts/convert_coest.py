#!/usr/bin/env python3
"""Convert open traceability corpora (coest.org distributions) into the
tracekit manifest format.

The open corpora ship in two common shapes:

  1. COEST XML: an artifact collection file per layer
     (<artifacts><artifact><id>..</id><content>..</content>..) plus an
     answer-set file (<links><link><source_artifact_id>..</..>
     <target_artifact_id>..</..>).
  2. Plain files: a directory of .txt artifacts per layer plus a delimited
     answer list (CSV/TSV/whitespace pairs, or grouped lines where the first
     token is the source and the rest are its targets).

Usage (one query per output dataset):

  convert_coest.py --name cm1 \
      --source-layer high natural-language CM1-sourceArtifacts.xml \
      --target-layer low natural-language CM1-targetArtifacts.xml \
      --answers CM1-answerSet.xml \
      --out data/coest/cm1

Then validate with: tracekit ingest --dataset data/coest/cm1/manifest.json

This script is best-effort over the known shapes; see
docs/converting-coest-datasets.md for per-dataset walkthroughs.
"""

from __future__ import annotations

import argparse
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

from tracekit.corpus import Artifact, Dataset, Layer, TraceLink, TraceQuery, export_dataset


def read_artifacts_xml(path: Path, layer_id: str) -> list[Artifact]:
    root = ET.parse(path).getroot()
    artifacts = []
    for node in root.iter():
        if node.tag.lower().endswith("artifact") and not node.tag.lower().endswith("artifacts"):
            art_id = None
            content = None
            title = None
            for child in node:
                tag = child.tag.lower()
                text = (child.text or "").strip()
                if art_id is None and tag.endswith("id") and "parent" not in tag:
                    art_id = text
                elif "content" in tag or tag == "body":
                    content = child.text or ""
                elif "title" in tag or "name" in tag:
                    title = text or None
            if art_id:
                artifacts.append(
                    Artifact(id=art_id, layer_id=layer_id, body=content or "", title=title)
                )
    if not artifacts:
        raise SystemExit(f"{path}: found no <artifact> elements")
    return artifacts


def read_artifacts_dir(path: Path, layer_id: str) -> list[Artifact]:
    artifacts = [
        Artifact(id=f.stem, layer_id=layer_id, body=f.read_text("utf-8", errors="replace"))
        for f in sorted(path.glob("*.txt"))
    ]
    if not artifacts:
        raise SystemExit(f"{path}: no *.txt artifact files")
    return artifacts


def read_answers_xml(path: Path) -> list[tuple[str, str]]:
    root = ET.parse(path).getroot()
    pairs = []
    for node in root.iter():
        if node.tag.lower().endswith("link"):
            source = target = None
            for child in node:
                tag = child.tag.lower()
                text = (child.text or "").strip()
                if "source" in tag:
                    source = text
                elif "target" in tag:
                    target = text
            if source and target:
                pairs.append((source, target))
    if not pairs:
        raise SystemExit(f"{path}: found no <link> elements")
    return pairs


def read_answers_list(path: Path, grouped: bool) -> list[tuple[str, str]]:
    pairs = []
    for raw in path.read_text("utf-8", errors="replace").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for delim in ("\t", ",", "%", ":"):
            if delim in line:
                fields = [f.strip() for f in line.split(delim) if f.strip()]
                break
        else:
            fields = line.split()
        if len(fields) < 2:
            continue
        if grouped:
            source = fields[0]
            # grouped target fields may themselves be space separated
            targets = [t for field in fields[1:] for t in field.split()]
            pairs.extend((source, t) for t in targets)
        else:
            pairs.append((fields[0], fields[1]))
    if not pairs:
        raise SystemExit(f"{path}: no answer pairs parsed")
    return pairs


def load_layer(spec: tuple[str, str, str]) -> tuple[Layer, list[Artifact]]:
    layer_id, kind, path_text = spec
    path = Path(path_text)
    layer = Layer(id=layer_id, name=layer_id, kind=kind)
    if path.is_dir():
        return layer, read_artifacts_dir(path, layer_id)
    if path.suffix.lower() == ".xml":
        return layer, read_artifacts_xml(path, layer_id)
    raise SystemExit(f"layer {layer_id}: expected a directory or an .xml file, got {path}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--name", required=True, help="dataset name (manifest field)")
    parser.add_argument(
        "--source-layer",
        nargs=3,
        metavar=("ID", "KIND", "PATH"),
        required=True,
        help="layer id, kind (natural-language|source-code), artifacts path",
    )
    parser.add_argument("--target-layer", nargs=3, metavar=("ID", "KIND", "PATH"), required=True)
    parser.add_argument("--answers", required=True, help="answer set (.xml or delimited list)")
    parser.add_argument(
        "--grouped-answers",
        action="store_true",
        help="answer list lines are 'SOURCE T1 T2 ...' instead of one pair per line",
    )
    parser.add_argument("--query-id", default=None, help="defaults to <name>-q")
    parser.add_argument("--out", required=True, help="output directory for the manifest")
    args = parser.parse_args()

    source_layer, source_artifacts = load_layer(tuple(args.source_layer))
    target_layer, target_artifacts = load_layer(tuple(args.target_layer))

    answers_path = Path(args.answers)
    if answers_path.suffix.lower() == ".xml":
        pairs = read_answers_xml(answers_path)
    else:
        pairs = read_answers_list(answers_path, grouped=args.grouped_answers)
    # hand-made answer sets routinely contain duplicate rows
    pairs = sorted(set(pairs))

    query_id = args.query_id or f"{args.name}-q"
    dataset = Dataset(
        name=args.name,
        layers=[source_layer, target_layer],
        artifacts=source_artifacts + target_artifacts,
        queries=[
            TraceQuery(
                id=query_id,
                source_layer_id=source_layer.id,
                target_layer_id=target_layer.id,
            )
        ],
        true_links=[
            TraceLink(query_id=query_id, source_id=s, target_id=t) for s, t in pairs
        ],
    )
    manifest = export_dataset(dataset, args.out)
    sources = len(source_artifacts)
    targets = len(target_artifacts)
    print(
        f"wrote {manifest}: {sources} x {targets} artifacts,"
        f" {sources * targets} candidates, {len(pairs)} true links",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()

"""Format conformance and the end-to-end toy run against the training toolkit.

The exporter's sole correctness bar is that its outputs load through the
toolkit's loaders with zero validation errors and drive the full pipeline.
"""

import json
import math
import os

import numpy as np
import pytest
from PIL import Image

from embex.cli import run as embex_run

from spmll.cli import run as spmll_run
from spmll.corrgraph import load_class_semantics
from spmll.data import dataset_stats, load_jsonl


@pytest.fixture
def workdir(tmp_path):
    rng = np.random.default_rng(11)
    paths = []
    for i in range(10):
        pixels = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        path = tmp_path / f"img_{i}.png"
        Image.fromarray(pixels).save(path)
        paths.append(path)
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        "".join(
            json.dumps(
                {
                    "id": f"img{i}",
                    "path": str(p),
                    "positive": i % 10,
                    "labels": sorted({i % 10, (i + 3) % 10}),
                }
            )
            + "\n"
            for i, p in enumerate(paths)
        )
    )
    definitions = tmp_path / "definitions.jsonl"
    definitions.write_text(
        "".join(
            json.dumps(
                {"class_id": i, "name": f"verb_{i}", "definition": f"the act numbered {i}"}
            )
            + "\n"
            for i in range(10)
        )
    )
    return tmp_path


def test_outputs_load_through_primary_loaders(workdir):
    emb = workdir / "records.jsonl"
    classes = workdir / "classes.jsonl"
    assert embex_run(["extract-images", "--manifest", str(workdir / "manifest.jsonl"),
                      "--backbone", "toy-pixel:24", "--out", str(emb)]) == 0
    assert embex_run(["extract-classes", "--definitions", str(workdir / "definitions.jsonl"),
                      "--encoder", "toy-hash:16", "--out", str(classes)]) == 0

    dataset = load_jsonl(emb, expect_labels=True, split="test")
    assert len(dataset) == 10 and dataset.l == 10 and dataset.d_in == 24
    assert np.abs(np.linalg.norm(dataset.embeddings, axis=1) - 1.0).max() < 1e-9
    stats = dataset_stats(dataset)
    assert stats["total_images"] == 10

    semantics = load_class_semantics(classes)
    assert [s.class_id for s in semantics] == list(range(10))


def test_end_to_end_toy_run(workdir, capsys):
    emb = workdir / "records.jsonl"
    classes = workdir / "classes.jsonl"
    graph = workdir / "graph.json"
    ckpt = workdir / "model.json"
    metrics = workdir / "metrics.json"
    conf = workdir / "run.conf"
    conf.write_text("epochs=2\nbatch=4\nhidden=16\nembed_dim=8\nlr=1e-3\ngcn_layers=2\n")

    assert embex_run(["extract-images", "--manifest", str(workdir / "manifest.jsonl"),
                      "--backbone", "toy-pixel:24", "--out", str(emb)]) == 0
    assert embex_run(["extract-classes", "--definitions", str(workdir / "definitions.jsonl"),
                      "--encoder", "toy-hash:16", "--out", str(classes)]) == 0
    assert spmll_run(["build-graph", "--classes", str(classes), "--k", "3", "--s", "0.5",
                      "--out", str(graph)]) == 0
    assert spmll_run(["train", "--train", str(emb), "--graph", str(graph),
                      "--config", str(conf), "--seed", "0", "--out", str(ckpt)]) == 0
    assert spmll_run(["eval", "--ckpt", str(ckpt), "--test", str(emb),
                      "--metrics", str(metrics)]) == 0

    log_records = [json.loads(l) for l in open(f"{ckpt}.log.jsonl")]
    losses = [rec["mean_loss"] for rec in log_records if "mean_loss" in rec]
    assert len(losses) == 2
    assert all(math.isfinite(v) for v in losses)
    report = json.loads(metrics.read_text())
    assert report["map"] is not None and 0.0 <= report["map"] <= 1.0


IMSITU_ENV = "SPMLL_IMSITU_TEST_JSONL"


@pytest.mark.skipif(IMSITU_ENV not in os.environ, reason=f"set {IMSITU_ENV} to run")
def test_imsitu_test_annotations_match_published_statistics():
    dataset = load_jsonl(os.environ[IMSITU_ENV], expect_labels=True, split="test")
    stats = dataset_stats(dataset)
    assert stats["total_images"] == 25_200
    assert stats["total_label_occurrences"] == 119_372
    assert round(stats["average_labels_per_image"], 2) == 4.74
    assert stats["median_labels_per_image"] == 4
    assert stats["min_labels_per_image"] == 1
    assert stats["max_labels_per_image"] == 21

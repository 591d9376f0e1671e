# Copyright 2026 The memoe-lab Authors
# SPDX-License-Identifier: Apache-2.0

import json
import math

import pytest

import memoe


def test_average_reproduces_table_values():
    assert memoe.average(100.0, 90.30, 100.0) == pytest.approx(96.77, abs=0.005)
    assert memoe.average(0.5, 0.5, 0.5) == 0.5
    with pytest.raises(ValueError):
        memoe.average(100.0, 0.5, 100.0)


def test_gate_keeps_softmax_values_without_renormalizing():
    logits = [0.3, -1.0, 2.0, 0.5]
    g = memoe.gate_from_logits(logits, 2)
    z = [math.exp(x - max(logits)) for x in logits]
    p = [v / sum(z) for v in z]
    assert g["selected"] == [2, 3]
    assert g["gate"][2] == pytest.approx(p[2], abs=1e-12)
    assert g["gate"][0] == 0.0
    assert sum(g["gate"]) < 1.0
    assert sum(memoe.gate_from_logits(logits, 4)["gate"]) == pytest.approx(1.0, abs=1e-12)


def test_load_balance_calibration():
    assert memoe.load_balance_loss([0, 1, 2, 3], 4, 0.01) == pytest.approx(0.01, abs=1e-9)
    assert memoe.load_balance_loss([1, 1, 1], 4, 0.01) == pytest.approx(0.04, abs=1e-9)


def test_consistency_fixture():
    traces = [
        ("a1", "A", "train", [0]), ("a2", "A", "train", [0]), ("a3", "A", "train", [0]),
        ("b1", "B", "train", [1]), ("b2", "B", "train", [1]), ("b3", "B", "train", [2]),
        ("c1", "C", "train", [2]), ("c2", "C", "train", [0]), ("c3", "C", "train", [1]),
    ]
    overall, groups = memoe.consistency(traces)
    assert overall == pytest.approx(2 / 3, abs=1e-15)
    assert [g for g, _ in groups] == ["A", "B", "C"]
    with pytest.raises(ValueError):
        memoe.consistency(traces, grouping="other")


def test_spherical_kmeans_splits_orthogonal_families():
    pts = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.9], [0.9, 0.0, 0.1], [0.1, 0.8, 1.0]]
    labels = memoe.spherical_kmeans(pts, 2, seed=3)
    assert labels[0] == labels[2]
    assert labels[1] == labels[3]
    assert labels[0] != labels[1]


def test_generate_corpus_is_seeded():
    a = memoe.generate_corpus(10, 42)
    assert len(a) == 10
    assert a == memoe.generate_corpus(10, 42)
    assert a != memoe.generate_corpus(10, 7)
    assert set(a[0]) >= {"record_id", "prompt", "target_new", "rephrase_prompt", "locality_prompt", "group_id"}


def test_cli_pipeline(tmp_path):
    out = str(tmp_path)
    code, _, err = memoe.run_cli(["gen-data", "--facts", "6", "--out", out, "--name", "py"])
    assert code == 0, err
    code, _, err = memoe.run_cli(["train-base", "--out", out, "--name", "py", "--d-model", "16", "--heads", "2",
                                  "--d-ff", "32", "--steps", "20", "--lr", "1e-2"])
    assert code == 0, err
    code, stdout, err = memoe.run_cli(["edit", "--out", out, "--name", "py", "--steps", "5", "--lambda", "0"])
    assert code == 0, err
    assert stdout.splitlines()[0].startswith("mode,seed")
    metrics = json.loads((tmp_path / "py" / "metrics-batch-42.json").read_text())
    assert metrics["locality"] == 1.0
    assert memoe.run_cli(["edit", "--out", out, "--name", "py", "--topk", "5", "--experts", "4"])[0] == 2

import math

import numpy as np
import pytest

import flowcontrast as fc


def test_defaults():
    cfg = fc.default_config()
    assert cfg["encoder.layers"] == "1"
    assert cfg["encoder.heads"] == "3"
    assert cfg["encoder.activation"] == "relu"
    assert cfg["optimizer"] == "adam"


def test_encode_graph_shapes_and_concatenation():
    rng = np.random.default_rng(0)
    src = [0, 1, 2, 3, 0]
    dst = [1, 2, 3, 0, 2]
    nodes, edges = fc.encode_graph(4, src, dst, rng.normal(size=(5, 3)))
    assert nodes.shape == (4, 96)
    assert edges.shape == (5, 192)
    for e, (a, b) in enumerate(zip(src, dst)):
        assert np.array_equal(edges[e, :96], nodes[a])
        assert np.array_equal(edges[e, 96:], nodes[b])


def test_encode_graph_rejects_bad_endpoints():
    with pytest.raises(ValueError):
        fc.encode_graph(2, [0], [5], np.zeros((1, 2)))


def test_sinkhorn_marginals():
    cost = np.array([[0.0, 1.0, 0.4], [1.0, 0.0, 0.7]])
    r = fc.sinkhorn_wd(cost)
    plan = r["plan"]
    assert r["converged"]
    assert np.allclose(plan.sum(axis=1), 0.5, atol=1e-8)
    assert np.allclose(plan.sum(axis=0), 1 / 3, atol=1e-8)
    assert r["value"] >= 0.0


def test_sinkhorn_zero_cost():
    assert fc.sinkhorn_wd(np.zeros((3, 3)))["value"] == 0.0


def test_gromov_self_distance_small():
    pairs = [(0, 1, 0.3), (1, 0, 0.3), (1, 2, 0.8), (2, 1, 0.8)]
    r = fc.gromov_wd(3, pairs, 3, pairs)
    assert 0.0 <= r["value"] < 0.05
    trace = r["objective_trace"]
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_loss_closed_forms():
    tau = 0.2
    assert fc.contrastive_loss([(0.0, 0.0)], [[]], tau)[0] == 0.0
    d = tau * math.log(2)
    assert abs(fc.contrastive_loss([(d, d)], [[]], tau)[0] - 2 * math.log(2)) < 1e-9
    assert math.isfinite(fc.contrastive_loss([(0.1, 0.1)], [[(0.0, 0.0)]], tau)[0])


def test_metrics_worked_example():
    truth = [1] * 50 + [0] * 10 + [1] * 10 + [0] * 30
    pred = [1] * 50 + [1] * 10 + [0] * 10 + [0] * 30
    r = fc.compute_metrics(truth, pred, ["benign", "attack"], positive=1)
    assert round(r["accuracy"], 2) == 80.00
    for key in ("precision", "recall", "f1"):
        assert round(r["positive"][key], 2) == 83.33


def test_roc_and_clustering():
    assert fc.roc_auc([0.9, 0.8, 0.1], [True, True, False]) == 1.0
    assert fc.roc_auc([0.1, 0.2], [True, True]) is None
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(size=(30, 2)), rng.normal(size=(30, 2)) + 10.0])
    labels = [0] * 30 + [1] * 30
    assign, centroids, _ = fc.kmeans(x, 2, seed=3)
    assert centroids.shape == (2, 2)
    _, acc = fc.map_clusters(assign, labels)
    assert acc == 1.0


def test_gradcheck():
    ok = fc.gradcheck()
    assert ok["max_rel_error"] < 1e-4
    assert len(ok["blocks"]) > 0
    assert fc.gradcheck(corrupt=True)["max_rel_error"] > 1e-4


def test_pipeline_roundtrip(tmp_path):
    out = str(tmp_path)
    small = ["synth.classes=3", "synth.nodes=30", "synth.edges=240", "synth.feature_dim=4",
             "contrast.centers=8", "contrast.epochs=2", "encoder.proj_dim=8",
             "encoder.out_dim=8", "contrast.generator_proj_dim=8",
             f"data={out}/synth.csv", f"schema={out}/synth.schema"]
    for command in ("synth", "preprocess", "train", "embed", "eval"):
        written, _ = fc.run(command, overrides=small, out=out)
        assert written
    assert (tmp_path / "metrics_clustering.json").exists()
    with pytest.raises(fc.ConfigError):
        fc.run("preprocess", overrides=small + ["fraction=0"], out=out)

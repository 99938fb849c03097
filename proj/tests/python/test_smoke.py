import json

import pytest

import vtm


def test_version():
    assert isinstance(vtm.__version__, str) and vtm.__version__


def test_scene_and_blobs():
    image, truth, tags = vtm.generate_scene(3)
    assert image.shape == (104, 104)
    assert len(truth) == 169
    assert len(tags) == 169
    assert 0.0 <= image.min() and image.max() <= 1.0
    found = vtm.detect_blobs(image)
    hits = vtm.match(found, truth, 2.0)
    assert hits["pt"] > 150


def test_decode_zero_logits():
    pts = vtm.decode([0.0] * (52 * 52 * 3), 416, 52, 1)
    assert len(pts) == 52 * 52
    assert pts[0] == (4.0, 4.0, 0.5)
    with pytest.raises(vtm.ConfigError):
        vtm.decode([0.0] * 10, 416, 52, 1)


def test_match_and_metrics():
    truth = [(10, 10, 1), (20, 10, 1), (30, 10, 1)]
    pred = [(10.5, 10, 1), (50, 50, 1), (20, 11, 1), (29, 10.5, 1), (0, 40, 1)]
    r = vtm.match(pred, truth, 2.0)
    assert (r["pt"], r["pf"], r["t"]) == (3, 2, 3)
    assert r["pred_to_truth"] == [0, -1, 1, 2, -1]
    m = vtm.metrics(r["pt"], r["pf"], r["t"], r["d"])
    assert m["precision"] == pytest.approx(0.6)
    assert m["recall"] == 1.0
    empty = vtm.metrics(0, 0, 0)
    assert empty["precision"] is None and empty["recall"] is None and empty["loss"] is None


def test_feature_and_dedup():
    pts = [(0, 0, 0.3), (3, 4, 0.9), (6, 8, 0.5)]
    f = vtm.build_feature(0, pts, 208.0)
    assert len(f) == 11
    assert f[:2] == [5.0, 10.0]
    assert f[2:10] == [208.0] * 8
    assert f[10] == 0.3
    kept = vtm.dedup([(10, 10, 0.9), (11, 10, 0.8), (30, 30, 0.5)], 2.0)
    assert kept == [(10, 10, 0.9), (30, 30, 0.5)]


def test_small_dataset(tmp_path):
    info = vtm.make_dataset(tmp_path / "data", 10, seed=3)
    assert (len(info["train"]), len(info["val"]), len(info["test"])) == (6, 2, 2)
    assert info["tau"] == 2.0
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
    assert set(manifest["difficulty"]) == set(info["test"])
    img = vtm.read_pgm(tmp_path / "data" / "images" / (info["test"][0] + ".pgm"))
    assert img.shape == (104, 104)
    with pytest.raises(vtm.ConfigError):
        vtm.make_dataset(tmp_path / "bad", 3)


def test_detector_errors(tmp_path):
    with pytest.raises(vtm.IoError):
        vtm.Detector(tmp_path / "missing.weights")

"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import tadml


def test_tiou():
    assert tadml.tiou(0.0, 10.0, 0.0, 10.0) == 1.0
    assert tadml.tiou(0.0, 10.0, 20.0, 30.0) == 0.0
    assert tadml.tiou(0.0, 2.0, 1.0, 3.0) == pytest.approx(1.0 / 3.0)


def test_beta_giou_loss():
    assert tadml.beta_giou_loss(0.0, 1.0, 0.0, 1.0) == pytest.approx(0.0)
    assert tadml.beta_giou_loss(0.0, 1.0, 2.0, 3.0, beta=3.0) == pytest.approx(
        1.0 + 1.0 / 27.0
    )
    assert tadml.beta_giou_loss(0.0, 2.0, 1.0, 3.0) == pytest.approx(2.0 / 3.0)


def test_mechanics_mix_law_of_cosines():
    rng = np.random.default_rng(0)
    t, d = 4, 6
    x = rng.normal(size=(t, d))
    wa = rng.normal(size=(d, d)) * 0.5
    wb = rng.normal(size=(d, d)) * 0.5
    ba = np.zeros(d)
    bb = np.zeros(d)
    theta = np.full(d, math.pi / 2.0)
    y = tadml.mechanics_mix(x, wa, ba, wb, bb, theta)
    fa = x @ wa
    fb = x @ wb
    np.testing.assert_allclose(y, np.sqrt(fa**2 + fb**2), rtol=1e-9)


def test_soft_nms_decay():
    dets = [
        {"start": 0.0, "end": 10.0, "class": 0, "score": 0.9},
        {"start": 0.0, "end": 10.0, "class": 0, "score": 0.8},
    ]
    out = tadml.soft_nms(dets, sigma=0.5)
    assert len(out) == 2
    assert out[0]["score"] == pytest.approx(0.9)
    assert out[1]["score"] == pytest.approx(0.8 * math.exp(-2.0))


def test_synth_train_infer_eval_roundtrip(tmp_path):
    data = tadml.synth_dataset(
        {
            "num_videos": 6,
            "T": 64,
            "D": 8,
            "num_classes": 2,
            "min_action_len": 8,
            "max_action_len": 24,
            "noise_level": 0.2,
            "seed": 3,
        }
    )
    assert len(data) == 6
    video_id, feats, gts = data[0]
    assert feats.shape == (64, 8)
    assert all(0.0 <= g["start"] < g["end"] <= 64.0 for g in gts)

    cfg = {
        "epochs": 2,
        "batch_size": 2,
        "base_lr": 1e-3,
        "warmup_epochs": 1,
        "seed": 7,
        "max_len": 64,
        "input_dim": 8,
        "width": 16,
        "num_levels": 2,
        "neck_stages": 2,
        "num_classes": 2,
    }
    out = tadml.train(cfg, data, str(tmp_path))
    assert not out["aborted_nan"]
    assert len(out["log"]) == 2
    assert all(math.isfinite(e["total"]) for e in out["log"])

    dets = tadml.infer(str(tmp_path / "latest.ckpt"), feats)
    assert all(0.0 <= d["start"] < d["end"] for d in dets)

    gt_map = {video_id: {"duration_frames": 64.0, "annotations": list(gts)}}
    det_map = {video_id: list(gts and [dict(g, score=0.9) for g in gts])}
    report = tadml.mean_ap(det_map, gt_map, [0.5])
    assert report["average_map"] == pytest.approx(1.0)

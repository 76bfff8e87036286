import math

import numpy as np
import pytest

import radsynth as rs


def test_png_round_trip(tmp_path):
    img = np.linspace(0, 1, 32 * 16).reshape(16, 32)
    path = str(tmp_path / "a.png")
    rs.save_png(img, path, bits=16)
    back = rs.load_png(path)
    assert back.shape == (16, 32)
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12


def test_schedule_endpoints():
    s = rs.cosine_schedule(1000)
    assert s.steps == 1000
    assert s.alpha_bar(0) == 1.0
    assert s.alpha_bar(1000) < 1e-4
    assert all(0 < b <= 0.999 for b in s.betas)


def test_gaussian_oracle_moments():
    s = rs.cosine_schedule(200)
    xs = rs.sample_gaussian_oracle(s, mean=0.3, var=0.25, width=4, height=2, count=400,
                                   inference_steps=50, seed=3)
    v = np.concatenate([x.ravel() for x in xs])
    se = math.sqrt(0.25 / v.size)
    assert abs(v.mean() - 0.3) < 4 * se * math.sqrt(8)
    assert abs(v.var() - 0.25) < 0.05


def test_degradation_q100_and_pair_shapes():
    hr = rs.toy_corpus(1, 64, 32, seed=2)[0]
    assert np.max(np.abs(rs.jpeg_compress(hr, 100) - hr)) <= 2 / 255
    hr2, lr = rs.degrade_pair(hr, {"scale": 4, "seed": 5})
    assert hr2.shape == (32, 64) and lr.shape == (8, 16)
    again = rs.degrade_pair(hr, {"scale": 4, "seed": 5})[1]
    assert np.array_equal(lr, again)
    with pytest.raises(ValueError):
        rs.degrade_pair(hr, {"jpeg_quality": 0})


def test_fid_and_roc():
    a = rs.toy_corpus(12, 32, 16, seed=1)
    assert abs(rs.fid(a, a)) < 1e-6
    noise = [np.random.default_rng(i).random((16, 32)) for i in range(12)]
    assert rs.fid(a, noise) > 1.0
    fpr, tpr, thr, auc = rs.roc_curve([0.1, 0.4, 0.35, 0.8], [False, False, True, True])
    assert auc == pytest.approx(0.75)
    assert (fpr[0], tpr[0]) == (0.0, 0.0)
    mean, std = rs.inception_score([[0.1] * 10] * 20, splits=2)
    assert mean == pytest.approx(1.0) and std == pytest.approx(0.0)


def test_study_scoring():
    r = rs.score_responses([True, True, False, False], [1.0, 0.75, 0.5, 0.0])
    assert r["TP"] == pytest.approx(1.75)
    assert r["FN"] == pytest.approx(0.25)
    assert r["FP"] == pytest.approx(0.5)
    assert r["TN"] == pytest.approx(1.5)
    assert r["U"] == 1
    assert r["TP"] + r["FN"] + r["FP"] + r["TN"] == pytest.approx(4)


def test_tiny_pipeline(tmp_path):
    out = rs.run_toy_pipeline(str(tmp_path / "run"), corpus_size=6, hr_width=32, hr_height=16,
                              timesteps=20, diffusion_steps=5, diffusion_batch=2,
                              inference_steps=5, samples=3, sr_steps=2, seed=5)
    assert out["synthetic_count"] == 3
    assert (tmp_path / "run" / "run.json").exists()
    img = rs.load_png(str(tmp_path / "run" / "samples_sr" / "sample_0000.png"))
    assert img.shape == (16, 32)
    with pytest.raises(ValueError):
        rs.run_toy_pipeline(str(tmp_path / "bad"), hr_width=30)

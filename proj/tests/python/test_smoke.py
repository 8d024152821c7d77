# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import trajdiff as td


def test_schedule_and_coefficients():
    s = td.make_linear_schedule(10, 0.01, 0.2)
    assert s.steps == 10
    expected = np.cumprod(1.0 - np.linspace(0.01, 0.2, 10))
    assert np.allclose(s.alpha_bars, expected, rtol=1e-12)
    eta_l, eta_k = td.tid_coefficients(s, 4, 0.05)
    one_minus = 1.0 - s.alpha_bar(4)
    assert eta_l == pytest.approx(0.05 * one_minus)
    assert eta_k == pytest.approx(math.sqrt(0.05 * 1.95 * one_minus))
    with pytest.raises(td.ConfigError):
        td.make_linear_schedule(0, 0.01, 0.2)


def test_masks():
    self_mask = td.build_self_mask([1, 0, 1])
    assert self_mask.tolist() == [[1, 0, 1], [0, 1, 0], [1, 0, 1]]
    assert td.build_cross_mask([1, 0], [0, 1, 1]).tolist() == [[0, 1, 1], [1, 0, 0]]
    grid = td.rasterize_boxes(8, 8, [[0, 0, 4, 4]], 2, 2)
    assert grid == [[1, 0, 0, 0]]
    assert td.masks_active(0, 50, 4) and not td.masks_active(4, 50, 4)


def test_attention_rows_sum_to_one_and_block_mask():
    rng = np.random.default_rng(0)
    q, k, v = (rng.standard_normal((4, 3)) for _ in range(3))
    mask = td.build_self_mask([1, 1, 0, 0])
    out = td.attention(q, k, v, mask)
    logits = q @ k.T / math.sqrt(3)
    logits[mask == 0] = -np.inf
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    assert np.allclose(out, w @ v)


def test_efdm_is_sorted_assignment():
    rng = np.random.default_rng(1)
    am, au = rng.standard_normal(9), rng.standard_normal(9)
    out = np.array(td.efdm_match(am, au))
    expected = np.empty(9)
    expected[np.argsort(am, kind="stable")] = np.sort(au)
    assert np.array_equal(out, expected)
    m = rng.standard_normal((3, 5))
    u = rng.standard_normal((3, 5))
    rows = td.mask_normalize(m, u)
    for i in range(3):
        assert np.array_equal(rows[i], td.efdm_match(m[i], u[i]))


def test_tau_and_gradient():
    assert td.pearson([1, 2, 3], [2, 4, 8]) == pytest.approx(0.98198, abs=1e-5)
    rng = np.random.default_rng(2)
    z = rng.standard_normal((3, 1, 6, 6))
    boxes = [[0, 0, 3, 3], [1, 1, 4, 4], [2, 2, 5, 5]]
    value = td.tau(6, 6, boxes, z)
    assert -1.0 <= value <= 1.0
    assert td.tau(6, 6, boxes, 2.0 * z + 1.0) == pytest.approx(value, abs=1e-12)
    grad = td.tau_gradient(6, 6, boxes, z)
    h = 1e-6
    idx = (1, 0, 2, 2)
    zp, zm = z.copy(), z.copy()
    zp[idx] += h
    zm[idx] -= h
    fd = (td.tau(6, 6, boxes, zp) - td.tau(6, 6, boxes, zm)) / (2 * h)
    assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)
    with pytest.raises(td.DegenerateError):
        td.tau(6, 6, boxes, np.zeros((3, 1, 6, 6)))


def test_gaussian_generation_is_deterministic():
    s = td.make_linear_schedule(20, 1e-3, 0.3)
    boxes = [[0, 0, 4, 4], [2, 2, 6, 6], [4, 4, 8, 8]]
    a = td.generate_gaussian(8, 8, boxes, 1, s, seed=5)
    b = td.generate_gaussian(8, 8, boxes, 1, s, seed=5)
    assert a.shape == (3, 1, 8, 8)
    assert np.array_equal(a, b)
    c = td.generate_gaussian(8, 8, boxes, 1, s, mode="plain", seed=6)
    assert not np.array_equal(a, c)
    with pytest.raises(td.ConfigError):
        td.generate_gaussian(8, 8, boxes, 1, s, colour=1)


def test_blob_sample_evaluates_against_its_own_trajectory():
    video, boxes, identity = td.blob_sample(7)
    assert video.shape == (8, 2, 16, 16)
    assert 0 <= identity
    report = td.evaluate(video, 16, 16, boxes)
    assert report["coverage_hit"]
    assert report["miou"] > 0.5
    assert td.iou([0, 0, 2, 2], [1, 0, 3, 2]) == pytest.approx(1 / 3)
    assert td.detect_blob(np.zeros((4, 4))) is None


def test_toy_denoiser_trains_and_generates():
    s = td.make_linear_schedule(8, 1e-3, 0.3)
    model, losses = td.train_toy_denoiser(4, 1, s, epochs=2, seed=3)
    assert len(losses) == 2 and all(np.isfinite(losses))
    _, boxes, identity = td.blob_sample(3)
    out = model.generate(identity, 16, 16, boxes, mode="tid", cg=1.0, seed=1)
    assert out.shape == (8, 2, 16, 16)
    assert np.all(np.isfinite(out))
    eps = model.predict_noise(out, 3)
    assert eps.shape == out.shape

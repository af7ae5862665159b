# Copyright 2026 The mfs Authors
# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import mfs


def test_cost_arithmetic():
    assert mfs.conv_flops(3, 3, 4, 4, 8) == 6784
    assert mfs.conv_params(3, 3, 8) == 224
    assert mfs.regularized_latency(10, 5, 2) == pytest.approx(4.9992, abs=1e-12)


def test_metrics_small_example():
    truth = np.array([[0, 1], [1, 1]])
    pred = np.array([[0, 0], [1, 1]])
    r = mfs.segmentation_metrics(truth, pred, 2)
    assert r["pa"] == 0.75
    assert r["mpa"] == pytest.approx(5 / 6)
    assert r["miou"] == pytest.approx(7 / 12)


def test_metrics_ignore_and_errors():
    truth = np.array([0, 2, 1, 2])
    pred = np.array([0, 0, 1, 1])
    r = mfs.segmentation_metrics(truth, pred, 3, ignore=2)
    assert r["pa"] == 1.0
    with pytest.raises(ValueError):
        mfs.segmentation_metrics(truth, pred[:3], 3)


def test_temperature_softmax_matches_numpy():
    z = np.random.default_rng(0).normal(size=(2, 5, 3, 4))
    for t in (0.5, 1.0, 4.0):
        e = np.exp((z - z.max(axis=1, keepdims=True)) / t)
        want = e / e.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(mfs.temperature_softmax(z, t), want, atol=1e-12)
    with pytest.raises(ValueError):
        mfs.temperature_softmax(z, 0.0)


def test_gumbel_sample_frequencies():
    gamma = [0.2, 0.5, 0.3]
    draws = np.array(mfs.gumbel_sample(gamma, 1.0, 3, 20000))
    freq = np.bincount(draws, minlength=3) / draws.size
    np.testing.assert_allclose(freq, gamma, atol=0.02)


def test_pipeline(tmp_path):
    train_dir = mfs.generate_synthetic(tmp_path, "train", 4, 32, 64, 3, 1)
    val_dir = mfs.generate_synthetic(tmp_path, "val", 2, 32, 64, 3, 2)
    train, val = mfs.Dataset.load(train_dir), mfs.Dataset.load(val_dir)
    assert len(train) == 4 and train.num_classes == 3
    assert train.image(0).shape == (3, 32, 64)
    assert train.labels(0).shape == (32, 64)

    cfg = mfs.SearchSpaceConfig()
    cfg.num_classes = 3
    table = mfs.benchmark_table(cfg, 32, 64, 3)
    assert len(table) > 0
    result = mfs.search(cfg, train, table, iterations=2, seed=0)
    assert len(result.history) == 2
    assert result.teacher.fingerprint == result.student.fingerprint
    assert result.teacher.max_expansion() == 12
    assert result.student.max_expansion() <= cfg.student_max_expansion
    assert mfs.NetworkSpec.parse(result.student.dump()).to_dict() == result.student.to_dict()

    config = mfs.TrainConfig()
    config.epochs = 1
    config.batch_size = 2
    teacher_w = result.weights.copy()
    report = mfs.train_teacher(result.teacher, teacher_w, train, val, config)
    assert len(report) == 1
    student_w = result.weights.copy()
    report = mfs.distill_student(result.student, student_w, result.teacher, teacher_w, train, val,
                                 config)
    assert math.isfinite(report[0]["val_miou"])

    scores = mfs.evaluate(result.student, student_w, val)
    labels = mfs.predict(result.student, student_w, np.stack([val.image(0), val.image(1)]))
    assert labels.shape == (2, 32, 64)
    direct = mfs.segmentation_metrics(np.stack([val.labels(0), val.labels(1)]), labels, 3)
    assert direct["miou"] == pytest.approx(scores["miou"], abs=1e-12)

    assert 0 < mfs.network_params(result.student) < student_w.total_values()
    assert mfs.network_flops(result.student, 32, 64) > 0
    assert mfs.network_latency(table, result.student) > 0

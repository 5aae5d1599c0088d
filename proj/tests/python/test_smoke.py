import math

import numpy as np
import pytest

import cacl


def test_svd_reconstructs_and_ranks_are_sorted():
    a = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
    u, s, v = cacl.svd(a)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose(u @ np.diag(s) @ v.T, a, atol=1e-5)
    np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-5)


def test_rank_k_error_matches_tail_energy():
    a = np.random.default_rng(1).normal(size=(6, 6)).astype(np.float32)
    u, s, v = cacl.svd(a)
    ak = cacl.rank_k_approx(u, s, v, 2)
    err = np.sum((a.astype(np.float64) - ak) ** 2)
    assert err == pytest.approx(np.sum(s[2:].astype(np.float64) ** 2), rel=1e-4)


def test_regularizer_worked_values():
    eye = np.eye(2, dtype=np.float32)
    assert cacl.l_orth([(2 * eye, np.ones(2, np.float32), eye)]) == pytest.approx(3 * math.sqrt(2) / 4)
    assert cacl.l_sparse([(eye, np.array([3, 4], np.float32), eye)]) == pytest.approx(1.4)


def test_energy_traces():
    assert cacl.energy_topk(np.array([3, 2, 1, 0.001], np.float32), 1e-5) == 3
    assert cacl.energy_topk(np.array([5, 0, 0], np.float32), 1e-5) == 1
    assert cacl.energy_topk(np.array([2, 1], np.float32), 0.5) == 1
    with pytest.raises(cacl.ConfigError):
        cacl.energy_topk(np.array([1], np.float32), 1.0)


def test_compress_sorts_and_folds_signs():
    u = np.eye(2, dtype=np.float32)
    (cu, cs, cv), = cacl.compress([(u, np.array([-4, 1], np.float32), u)], energy_e=0.0)
    np.testing.assert_array_equal(cs, [4, 1])
    np.testing.assert_allclose(cu @ np.diag(cs) @ cv.T, np.diag([-4, 1]), atol=1e-6)


def test_metrics_formulas():
    m = cacl.compute_metrics([[0.9, float("nan")], [0.8, 0.6]], [10, 20])
    assert m["acc"] == pytest.approx(0.7)
    assert m["bwt"] == pytest.approx(-0.1)


def test_expansion_rank():
    assert cacl.expansion_rank(64, 64, 3, 3) == 57


SMALL = {
    "tasks": 2, "samples_per_class": 30, "input_channels": 2, "input_height": 5, "input_width": 5,
    "conv_channels": [4, 6], "conv_kernels": [3, 3], "conv_strides": [2, 1], "conv_padding": [1, 0],
    "epochs": 5, "batch_size": 16, "base_lr": 0.01, "lr_drop_epochs": [3], "lambda_sparse": 0.01,
}


def test_run_save_load_and_extract(tmp_path):
    out = cacl.run(SMALL)
    space = out["space"]
    assert out["metrics"]["bwt"] == 0.0
    assert space.num_tasks == 2
    assert len(space.rank_table) == 2
    path = str(tmp_path / "m.cacl")
    space.save(path)
    back = cacl.SharedSpace.load(path)
    assert back == space
    assert cacl.SharedSpace.from_bytes(space.to_bytes()) == space
    weights, head_w, head_b = back.extract_subnetwork(1)
    assert weights[0].shape == (4, 18)
    assert head_w.shape[1] == 2 and head_b.shape == (1, 2)
    x = np.zeros((3, 50), np.float32)
    np.testing.assert_array_equal(back.logits(1, x), space.logits(1, x))
    with pytest.raises(cacl.FormatError):
        cacl.SharedSpace.from_bytes(space.to_bytes()[:40])


def test_single_task_mode_returns_one_space_per_task():
    out = cacl.run(dict(SMALL, mode="st"))
    assert [s.num_tasks for s in out["spaces"]] == [1, 1]


def test_bad_config_raises():
    with pytest.raises(cacl.ConfigError):
        cacl.run({"epoch": 3})

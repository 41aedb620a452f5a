"""baseline: the fully supervised DNN trained on oracle labels."""

import numpy as np
import pytest

from mpqpnet import baseline as bl
from mpqpnet.errors import FingerprintMismatch, ParseError, ValidationError
from mpqpnet.oracle import solve_active_set

from conftest import theta_e


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


def test_make_solution_dataset_labels(tiny):
    points = [theta_e(tiny, t) for t in (0.2, 0.7, 1.0)]
    ds = bl.make_solution_dataset(tiny, points)
    assert len(ds) == 3
    assert ds.inputs.shape == (3, 1)
    assert ds.targets.shape == (3, 5)  # n + m1 + m2
    for i, p in enumerate(points):
        s = solve_active_set(tiny, p).solution
        assert np.array_equal(ds.targets[i], np.concatenate([s.x, s.lam, s.mu]))


def test_make_solution_dataset_skips_infeasible(tiny):
    points = [theta_e(tiny, t) for t in (0.5, 1.2, 0.8)]
    ds = bl.make_solution_dataset(tiny, points)
    assert len(ds) == 2
    assert ds.meta["infeasible"] == 1


# ---------------------------------------------------------------------------
# network mechanics
# ---------------------------------------------------------------------------


def test_init_dnn_shapes(tiny):
    cfg = bl.BaselineConfig(hidden=(16, 8), seed=0)
    model = bl.init_dnn(tiny, cfg)
    assert model.sizes == (1, 16, 8, 5)
    assert [W.shape for W in model.weights] == [(16, 1), (8, 16), (5, 8)]
    assert [b.shape for b in model.biases] == [(16,), (8,), (5,)]


def test_dnn_forward_single_vs_batch(tiny):
    model = bl.init_dnn(tiny, bl.BaselineConfig(hidden=(8,), seed=1))
    row = np.array([0.4])
    single = bl.dnn_forward(model, row)
    batch = bl.dnn_forward(model, row[None, :])
    assert single.shape == (5,)
    assert np.array_equal(single, batch[0])


def test_constant_target_regression(tiny):
    # degenerate regression: any constant map must be learnable to high
    # precision (the biases alone can represent it)
    rng = np.random.default_rng(0)
    X = rng.uniform(0.0, 1.0, size=(64, 1))
    Y = np.full((64, 5), 0.7)
    train = bl.SolutionDataset(inputs=X, targets=Y)
    val = bl.SolutionDataset(inputs=X[:16], targets=Y[:16])
    cfg = bl.BaselineConfig(hidden=(8,), learning_rate=1e-2, max_epochs=1500,
                            batch_size=32, patience=1500, seed=0)
    model = bl.init_dnn(tiny, cfg)
    trained, history = bl.train_baseline(model, train, val, cfg)
    assert history["val"][-1] < 1e-6


def test_early_stopping_restores_best(tiny, tiny_data, tiny_val):
    # oracle-labeled TINY data; patience small so the stop triggers
    targets = np.hstack([
        np.zeros((len(tiny_data), 3)), tiny_data.targets])
    train = bl.SolutionDataset(inputs=tiny_data.inputs, targets=targets)
    vt = np.hstack([np.zeros((len(tiny_val), 3)), tiny_val.targets])
    val = bl.SolutionDataset(inputs=tiny_val.inputs, targets=vt)
    cfg = bl.BaselineConfig(hidden=(16,), max_epochs=200, patience=10,
                            batch_size=64, seed=0)
    model = bl.init_dnn(tiny, cfg)
    trained, history = bl.train_baseline(model, train, val, cfg)
    assert history["epochs"] <= 200
    assert history["best_val"] <= min(history["val"]) + 1e-15


def test_gradient_check(tiny):
    model = bl.init_dnn(tiny, bl.BaselineConfig(hidden=(12, 12), seed=3))
    rng = np.random.default_rng(4)
    X = rng.normal(size=(32, 1))
    Y = rng.normal(size=(32, 5))
    assert bl.gradient_check(model, X, Y) < 1e-4


def test_baseline_config_validation():
    with pytest.raises(ValidationError):
        bl.BaselineConfig(hidden=()).validate()
    with pytest.raises(ValidationError):
        bl.BaselineConfig(learning_rate=-1.0).validate()
    with pytest.raises(ValidationError):
        bl.BaselineConfig(patience=0).validate()


# ---------------------------------------------------------------------------
# prediction and persistence
# ---------------------------------------------------------------------------


def test_predict_single_matches_batch(tiny):
    model = bl.init_dnn(tiny, bl.BaselineConfig(hidden=(8,), seed=5))
    p = theta_e(tiny, 0.6)
    sol = bl.dnn_predict(model, tiny, p)
    X, LAM, MU = bl.dnn_predict_batch(model, tiny, np.array([[0.6]]))
    assert np.array_equal(sol.x, X[0])
    assert np.array_equal(sol.lam, LAM[0])
    assert np.array_equal(sol.mu, MU[0])


def test_predict_fingerprint_mismatch(tiny, prob6):
    model = bl.init_dnn(tiny, bl.BaselineConfig(hidden=(8,), seed=6))
    with pytest.raises(FingerprintMismatch):
        bl.dnn_predict(model, prob6, theta_e(tiny, 0.5))


def test_baseline_json_round_trip(tiny):
    model = bl.init_dnn(tiny, bl.BaselineConfig(hidden=(8, 4), seed=7))
    clone = bl.baseline_from_json(bl.baseline_to_json(model))
    assert clone.sizes == model.sizes
    assert clone.fingerprint == model.fingerprint
    for a, b in zip(clone.weights, model.weights):
        assert np.array_equal(a, b)
    for a, b in zip(clone.biases, model.biases):
        assert np.array_equal(a, b)


def test_baseline_rejects_wrong_type(tiny, tiny_atlas):
    from mpqpnet import psnn as ps
    net = ps.build_mu_net(tiny_atlas, seed=0)
    psnn_text = ps.model_to_json(ps.build_model(tiny, net))
    with pytest.raises(ParseError):
        bl.baseline_from_json(psnn_text)


def test_solution_dataset_csv_round_trip(tiny):
    points = [theta_e(tiny, t) for t in (0.2, 0.9)]
    ds = bl.make_solution_dataset(tiny, points)
    clone = bl.solution_dataset_from_csv(bl.solution_dataset_to_csv(ds))
    assert np.array_equal(clone.inputs, ds.inputs)
    assert np.array_equal(clone.targets, ds.targets)

"""MLP forward/backward math, checked against finite differences."""

import math

import numpy as np
import pytest

from hetbench.data import generate_synthetic
from hetbench.errors import InvalidInput, ShapeMismatch
from hetbench.model import (
    LossReport,
    MlpModel,
    SgdState,
    evaluate,
    forward,
    init_mlp,
    local_train,
    loss_and_grad,
    model_from_params,
    model_to_params,
)
from hetbench.vecmath import ParamVector


def numeric_gradient(model, x, y, step=1e-5):
    """Central finite differences over every coordinate."""
    pv = model_to_params(model)
    grad = np.zeros_like(pv.flat)
    for i in range(pv.flat.size):
        flat_hi = pv.flat.copy()
        flat_hi[i] += step
        flat_lo = pv.flat.copy()
        flat_lo[i] -= step
        hi, _ = loss_and_grad(model_from_params(ParamVector(flat_hi, pv.shapes)), x, y)
        lo, _ = loss_and_grad(model_from_params(ParamVector(flat_lo, pv.shapes)), x, y)
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def test_gradient_matches_finite_differences_many_seeds():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        hidden = ((), (4,), (5, 3))[seed % 3]
        model = init_mlp(3, hidden, 3, seed=seed)
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 3, size=6)
        _, grad = loss_and_grad(model, x, y)
        numeric = numeric_gradient(model, x, y)
        rel = np.linalg.norm(grad.flat - numeric) / max(
            np.linalg.norm(grad.flat), np.linalg.norm(numeric)
        )
        assert rel < 1e-4, f"seed {seed}: rel err {rel}"


def test_zero_model_uniform_and_log_c_loss():
    model = init_mlp(4, (8,), 10, seed=0)
    zeros = model_to_params(model)
    model = model_from_params(ParamVector(np.zeros_like(zeros.flat), zeros.shapes))
    x = np.random.default_rng(1).normal(size=(32, 4))
    probs = forward(model, x)
    assert np.allclose(probs, 0.1, atol=1e-12)
    y = np.random.default_rng(2).integers(0, 10, size=32)
    loss, _ = loss_and_grad(model, x, y)
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_zero_model_accuracy_near_chance():
    model = init_mlp(4, (), 10, seed=0)
    pv = model_to_params(model)
    model = model_from_params(ParamVector(np.zeros_like(pv.flat), pv.shapes))
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10_000, 4))
    y = rng.integers(0, 10, size=10_000)
    report = evaluate(model, x, y)
    assert abs(report.accuracy - 0.1) <= 0.01


def test_forward_rows_are_distributions():
    model = init_mlp(5, (7,), 4, seed=9)
    x = np.random.default_rng(4).normal(size=(11, 5)) * 50.0
    probs = forward(model, x)
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_init_deterministic_and_bounded():
    a = init_mlp(6, (8,), 3, seed=42)
    b = init_mlp(6, (8,), 3, seed=42)
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)
        assert np.all(bb == 0.0)
    limit0 = math.sqrt(6.0 / (6 + 8))
    assert np.all(np.abs(a.layers[0][0]) <= limit0)
    c = init_mlp(6, (8,), 3, seed=43)
    assert not np.array_equal(a.layers[0][0], c.layers[0][0])


def test_init_rejects_too_deep():
    with pytest.raises(InvalidInput):
        init_mlp(4, (8, 8, 8, 8), 3, seed=0)
    with pytest.raises(InvalidInput):
        init_mlp(4, (8,), 1, seed=0)


def test_local_train_pure_and_deterministic():
    ds = generate_synthetic(3, 4, 30, 1.0, seed=5)
    model = init_mlp(4, (8,), 3, seed=1)
    before = model_to_params(model).flat.copy()
    sgd = SgdState(learning_rate=0.05, momentum=0.9)
    t1 = local_train(model, ds.features, ds.labels, 3, 16, sgd, seed=7)
    t2 = local_train(model, ds.features, ds.labels, 3, 16, sgd, seed=7)
    assert np.array_equal(model_to_params(t1).flat, model_to_params(t2).flat)
    assert np.array_equal(model_to_params(model).flat, before)
    t3 = local_train(model, ds.features, ds.labels, 3, 16, sgd, seed=8)
    assert not np.array_equal(model_to_params(t1).flat, model_to_params(t3).flat)


def test_local_train_zero_epochs_identity():
    model = init_mlp(4, (8,), 3, seed=1)
    out = local_train(model, np.zeros((4, 4)), np.zeros(4, dtype=np.int64),
                      0, 2, SgdState(), seed=0)
    assert np.array_equal(model_to_params(out).flat, model_to_params(model).flat)


def test_single_step_momentum_math():
    model = init_mlp(2, (), 2, seed=3)
    x = np.array([[1.0, -2.0], [0.5, 0.25]])
    y = np.array([0, 1])
    loss, grad = loss_and_grad(model, x, y)
    sgd = SgdState(learning_rate=0.1, momentum=0.9)
    stepped = local_train(model, x, y, 1, 2, sgd, seed=0)
    expected = model_to_params(model).flat - 0.1 * grad.flat
    assert np.allclose(model_to_params(stepped).flat, expected, atol=1e-15)


def test_training_reduces_loss_and_separable_data_fits():
    ds = generate_synthetic(4, 6, 25, 0.0, seed=2)
    model = init_mlp(6, (), 4, seed=0)
    before = evaluate(model, ds.features, ds.labels)
    sgd = SgdState(learning_rate=0.1, momentum=0.9)
    trained = local_train(model, ds.features, ds.labels, 200, 64, sgd, seed=1)
    after = evaluate(trained, ds.features, ds.labels)
    assert after.mean_loss < before.mean_loss
    assert after.accuracy == 1.0


def test_evaluate_validation():
    model = init_mlp(3, (4,), 2, seed=0)
    with pytest.raises(ShapeMismatch):
        evaluate(model, np.zeros((2, 4)), np.zeros(2, dtype=np.int64))
    with pytest.raises(InvalidInput):
        evaluate(model, np.zeros((2, 3)), np.array([0, 5]))
    report = evaluate(model, np.zeros((2, 3)), np.array([0, 1]))
    assert isinstance(report, LossReport)
    assert report.count == 2


def test_sgd_state_validation():
    with pytest.raises(InvalidInput):
        SgdState(learning_rate=0.0)
    with pytest.raises(InvalidInput):
        SgdState(momentum=1.0)


def test_model_param_round_trip_bitwise():
    model = init_mlp(5, (6, 4), 3, seed=11)
    pv = model_to_params(model)
    back = model_from_params(pv)
    for (w0, b0), (w1, b1) in zip(model.layers, back.layers):
        assert np.array_equal(w0, w1)
        assert np.array_equal(b0, b1)

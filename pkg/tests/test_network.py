import json
import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st
from hypothesis.extra import numpy as hnp

from oracles import central_differences, naive_forward, naive_smooth_loss, random_network
from spinn.exceptions import NumericError, ShapeError, ValidationError
from spinn.network import (
    Dataset,
    NetworkArchitecture,
    NetworkParameters,
    Task,
    evaluate_smooth,
    forward,
    pointwise_loss,
    predict,
    ridge_term,
    smooth_loss,
    smooth_loss_gradient,
)


def rel_error(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# --- architecture / parameter containers ---

@pytest.mark.parametrize("widths", [(3, 1), (3,), (3, 0, 1), (3, 4, 2), (-1, 2, 1)])
def test_bad_architectures_rejected(widths):
    with pytest.raises(ValidationError):
        NetworkArchitecture(widths)


def test_architecture_counts():
    arch = NetworkArchitecture((7, 5, 3, 1))
    assert arch.n_features == 7
    assert arch.hidden == (5, 3)
    assert arch.n_hidden_layers == 2
    assert arch.n_parameters == 5 * 8 + 3 * 6 + 1 * 4
    assert NetworkArchitecture.from_dict(arch.to_dict()) == arch


def test_parameters_shape_mismatch():
    with pytest.raises(ShapeError):
        NetworkParameters((np.zeros((4, 3)), np.zeros((1, 5))), (np.zeros(4), np.zeros(1)))
    with pytest.raises(ShapeError):
        NetworkParameters((np.zeros((4, 3)), np.zeros((2, 4))), (np.zeros(4), np.zeros(2)))
    params = NetworkParameters.zeros(NetworkArchitecture((3, 4, 1)))
    with pytest.raises(ShapeError):
        params.check(NetworkArchitecture((3, 5, 1)))


@given(
    widths=st.lists(st.integers(1, 6), min_size=2, max_size=4),
    seed=st.integers(0, 2**31),
)
def test_flatten_unflatten_roundtrip(widths, seed):
    arch = NetworkArchitecture((*widths, 1))
    vec = np.random.default_rng(seed).normal(size=arch.n_parameters)
    params = NetworkParameters.unflatten(vec, arch)
    assert np.array_equal(params.flatten(), vec)
    assert params.size == arch.n_parameters
    again = NetworkParameters.from_dict(json.loads(json.dumps(params.to_dict())))
    assert again.equals(params)


# --- forward pass ---

@pytest.mark.parametrize("task", ["regression", "classification"])
@pytest.mark.parametrize("activation", ["tanh", "sigmoid"])
def test_forward_matches_scalar_loop(task, activation):
    # [DERIVED] oracle: explicit loops over nodes
    rng = np.random.default_rng(3)
    for _ in range(20):
        arch, params = random_network(rng, task=task, activation=activation)
        X = rng.uniform(-1, 2, size=(7, arch.n_features))
        batch = predict(params, arch, X)
        for i, x in enumerate(X):
            want = naive_forward(params.weights, params.intercepts, x, activation,
                                 task == "classification")
            assert batch[i] == pytest.approx(want, rel=1e-12, abs=1e-12)
            assert forward(params, arch, x) == batch[i]


def test_zero_parameters_give_trivial_outputs():
    # [TRIVIAL]
    X = np.random.default_rng(0).normal(size=(5, 3))
    reg = NetworkArchitecture((3, 4, 1))
    clf = NetworkArchitecture((3, 4, 1), Task.CLASSIFICATION)
    assert np.all(predict(NetworkParameters.zeros(reg), reg, X) == 0.0)
    assert np.all(predict(NetworkParameters.zeros(clf), clf, X) == 0.5)


def test_predict_rejects_wrong_width():
    arch = NetworkArchitecture((3, 2, 1))
    with pytest.raises(ShapeError, match="expected 3 features"):
        predict(NetworkParameters.zeros(arch), arch, np.zeros((2, 4)))


def test_dead_first_layer_column_ignores_feature():
    rng = np.random.default_rng(1)
    arch, params = random_network(rng, p=4, hidden=(3,))
    w0 = params.weights[0].copy()
    w0[:, 2] = 0.0
    params = NetworkParameters((w0, *params.weights[1:]), params.intercepts)
    X = rng.normal(size=(6, 4))
    X2 = X.copy()
    X2[:, 2] = rng.normal(size=6) * 100
    assert np.array_equal(predict(params, arch, X), predict(params, arch, X2))


# --- losses ---

def test_smooth_loss_matches_loop(rng):
    for task in ("regression", "classification"):
        arch, params = random_network(rng, p=3, hidden=(4, 2), task=task)
        X = rng.uniform(size=(9, 3))
        y = (rng.uniform(size=9) < 0.5).astype(float) if task == "classification" else rng.normal(size=9)
        got = smooth_loss(params, arch, Dataset(X, y, task), 0.03)
        want = naive_smooth_loss(params.weights, params.intercepts, X, y, 0.03, "tanh",
                                 task == "classification")
        assert got == pytest.approx(want, rel=1e-12)


def test_ridge_term_skips_first_layer():
    arch = NetworkArchitecture((2, 3, 1))
    params = NetworkParameters(
        (np.full((3, 2), 100.0), np.array([[1.0, 2.0, 2.0]])), (np.full(3, 5.0), np.array([7.0]))
    )
    assert ridge_term(params, 0.5) == 0.5 * 9.0
    assert ridge_term(params, 0.0) == 0.0


def test_clamped_log_loss_is_finite():
    y = np.array([1.0, 0.0])
    loss = pointwise_loss(y, np.array([0.0, 1.0]), Task.CLASSIFICATION)
    assert np.all(np.isfinite(loss))
    assert loss[0] == pytest.approx(-math.log(1e-12))


def test_nonfinite_smooth_loss_raises():
    arch = NetworkArchitecture((1, 1, 1))
    params = NetworkParameters((np.array([[1.0]]), np.array([[1e200]])), (np.zeros(1), np.zeros(1)))
    data = Dataset(np.array([[1.0]]), np.array([0.0]))
    with pytest.raises(NumericError):
        smooth_loss(params, arch, data, 0.0)
    with pytest.raises(ValidationError):
        smooth_loss(params, arch, data, -1.0)


# --- gradient ---

@pytest.mark.parametrize("task", ["regression", "classification"])
def test_gradient_matches_central_differences(task):
    # [DERIVED] oracle: central differences, h = 1e-5
    rng = np.random.default_rng(11 if task == "regression" else 12)
    worst = 0.0
    for i in range(25):
        activation = "sigmoid" if i % 3 == 0 else "tanh"
        arch, params = random_network(rng, task=task, activation=activation)
        n = int(rng.integers(1, 21))
        X = rng.uniform(size=(n, arch.n_features))
        y = (rng.uniform(size=n) < 0.5).astype(float) if task == "classification" else rng.normal(size=n)
        data = Dataset(X, y, task)
        lambda0 = float(rng.uniform(0, 0.1))
        got = smooth_loss_gradient(params, arch, data, lambda0).flatten()
        fd = central_differences(
            lambda v: smooth_loss(NetworkParameters.unflatten(v, arch), arch, data, lambda0),
            params.flatten(),
        )
        worst = max(worst, rel_error(got, fd))
    assert worst < 1e-5


def test_gradient_with_cache_is_identical(rng, small_regression, arch5):
    _, params = random_network(rng, p=5, hidden=(4,))
    _, cache = evaluate_smooth(params, arch5, small_regression, 0.01)
    a = smooth_loss_gradient(params, arch5, small_regression, 0.01)
    b = smooth_loss_gradient(params, arch5, small_regression, 0.01, cache=cache)
    assert a.equals(b)


def test_ridge_does_not_touch_first_layer_gradient(rng, small_regression, arch5):
    _, params = random_network(rng, p=5, hidden=(4,))
    g0 = smooth_loss_gradient(params, arch5, small_regression, 0.0)
    g1 = smooth_loss_gradient(params, arch5, small_regression, 0.7)
    assert np.array_equal(g0.weights[0], g1.weights[0])
    assert np.array_equal(g0.intercepts[1], g1.intercepts[1])
    assert np.allclose(g1.weights[1] - g0.weights[1], 1.4 * params.weights[1])


# --- dataset validation ---

def test_dataset_nan_reports_row_and_column():
    X = np.ones((4, 3))
    X[2, 1] = np.nan
    with pytest.raises(ValidationError, match="row 2, column 1"):
        Dataset(X, np.zeros(4))


def test_dataset_rejects_bad_labels_and_shapes():
    with pytest.raises(ValidationError, match="0 or 1"):
        Dataset(np.ones((3, 2)), np.array([0.0, 1.0, 2.0]), "classification")
    with pytest.raises(ShapeError):
        Dataset(np.ones((3, 2)), np.zeros(4))
    with pytest.raises(ShapeError):
        Dataset(np.ones(3), np.zeros(3))


@given(hnp.arrays(np.float64, (5, 3), elements=st.floats(-1e3, 1e3)))
def test_dataset_subset_preserves_rows(X):
    data = Dataset(X, X[:, 0])
    sub = data.subset([4, 0])
    assert np.array_equal(sub.features, X[[4, 0]])
    assert np.array_equal(sub.responses, X[[4, 0], 0])


# --- hand-computed cases ---

def test_single_tanh_node_at_origin():
    arch = NetworkArchitecture((1, 1, 1))
    params = NetworkParameters((np.array([[1.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1)))
    assert forward(params, arch, np.array([0.0])) == 0.0


def test_zero_network_losses():
    X = np.array([[0.3, -1.0]])
    reg = NetworkArchitecture((2, 3, 1))
    clf = NetworkArchitecture((2, 3, 1), Task.CLASSIFICATION)
    assert smooth_loss(NetworkParameters.zeros(reg), reg, Dataset(X, [2.0]), 0.0) == 4.0
    got = smooth_loss(NetworkParameters.zeros(clf), clf, Dataset(X, [1.0], "classification"), 0.0)
    assert got == pytest.approx(math.log(2), rel=1e-15)


def test_zero_network_output_intercept_gradient():
    arch = NetworkArchitecture((2, 3, 1))
    g = smooth_loss_gradient(NetworkParameters.zeros(arch), arch, Dataset([[0.5, 1.0]], [2.0]), 0.0)
    assert g.intercepts[-1][0] == -4.0
    # tanh'(0) = 1 but the output weights are zero, so nothing reaches lower layers
    assert not np.any(g.weights[0]) and not np.any(g.weights[1])


def test_zero_feature_column_has_zero_gradient(rng):
    arch, params = random_network(rng, p=4, hidden=(3, 2))
    X = rng.normal(size=(10, 4))
    X[:, 1] = 0.0
    g = smooth_loss_gradient(params, arch, Dataset(X, rng.normal(size=10)), 0.0)
    assert np.all(g.weights[0][:, 1] == 0.0)


# --- symmetries ---

@given(seed=st.integers(0, 10_000))
def test_loss_invariant_to_hidden_node_permutation(seed):
    rng = np.random.default_rng(seed)
    arch, params = random_network(rng, p=4, hidden=(3, 5))
    data = Dataset(rng.uniform(size=(9, 4)), rng.normal(size=9))
    perm = rng.permutation(5)
    w1, w2, w3 = params.weights
    t1, t2, t3 = params.intercepts
    swapped = NetworkParameters((w1, w2[perm], w3[:, perm]), (t1, t2[perm], t3))
    assert smooth_loss(swapped, arch, data, 0.05) == pytest.approx(smooth_loss(params, arch, data, 0.05), rel=1e-13)


@given(seed=st.integers(0, 10_000), node=st.integers(0, 3))
def test_tanh_sign_flip_leaves_output_unchanged(seed, node):
    rng = np.random.default_rng(seed)
    arch, params = random_network(rng, p=3, hidden=(4,))
    w1, w2 = (w.copy() for w in params.weights)
    t1 = params.intercepts[0].copy()
    w1[node] *= -1
    t1[node] *= -1
    w2[:, node] *= -1
    flipped = NetworkParameters((w1, w2), (t1, params.intercepts[1]))
    X = rng.uniform(size=(7, 3))
    assert np.allclose(predict(flipped, arch, X), predict(params, arch, X), rtol=0, atol=1e-13)


@given(seed=st.integers(0, 10_000), scale=st.sampled_from([0.1, 1.0, 5.0]))
@example(seed=79, scale=5.0)  # saturates the sigmoid in double precision
def test_classification_output_strictly_inside_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    arch, params = random_network(rng, p=3, task="classification", scale=scale)
    out = predict(params, arch, 3 * rng.normal(size=(20, 3)))
    assert np.all((out > 0) & (out < 1))

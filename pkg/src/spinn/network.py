"""Dense feedforward networks with a single output node.

Parameters are stored layer by layer: ``weights[a]`` maps layer ``a`` to
layer ``a + 1`` and has shape ``(m_{a+1}, m_a)``, so ``weights[0]`` is the
first-layer matrix whose columns correspond to input features.

All functions here are pure; they never mutate their arguments.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import NumericError, ShapeError, ValidationError

# Predictions are clamped to [eps, 1 - eps] before the logistic loss is taken.
PROB_CLIP = 1e-12


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class Activation(str, enum.Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"


def _sigmoid(z):
    # split by sign so that exp never overflows
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _probability(score):
    # keep saturated outputs strictly inside (0, 1)
    return np.clip(_sigmoid(score), np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def _activate(z, activation):
    if activation is Activation.TANH:
        return np.tanh(z)
    return _sigmoid(z)


def _activation_derivative(h, activation):
    """Derivative expressed through the activation output ``h``."""
    if activation is Activation.TANH:
        return 1.0 - h * h
    return h * (1.0 - h)


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer widths ``[p, m_1, ..., m_L, 1]`` plus task and activation."""

    layer_widths: tuple[int, ...]
    task: Task = Task.REGRESSION
    activation: Activation = Activation.TANH

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "activation", Activation(self.activation))
        if len(widths) < 3:
            raise ValidationError(
                "an architecture needs an input width, at least one hidden "
                f"layer and an output width; got {list(widths)}"
            )
        if any(w < 1 for w in widths):
            raise ValidationError(f"layer widths must be positive, got {list(widths)}")
        if widths[-1] != 1:
            raise ValidationError(f"output width must be 1, got {widths[-1]}")

    @classmethod
    def from_hidden(cls, n_features, hidden, task=Task.REGRESSION,
                    activation=Activation.TANH):
        return cls((int(n_features), *[int(h) for h in hidden], 1), task, activation)

    @property
    def n_features(self) -> int:
        return self.layer_widths[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.layer_widths[1:-1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_widths) - 2

    @property
    def n_parameters(self) -> int:
        w = self.layer_widths
        return sum(w[a] * (w[a - 1] + 1) for a in range(1, len(w)))

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.layer_widths),
            "task": self.task.value,
            "activation": self.activation.value,
        }

    @classmethod
    def from_dict(cls, d) -> "NetworkArchitecture":
        return cls(tuple(d["layer_widths"]), Task(d["task"]), Activation(d["activation"]))


@dataclass(frozen=True)
class NetworkParameters:
    """Weight matrices and intercept vectors for every layer."""

    weights: tuple[np.ndarray, ...]
    intercepts: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        ts = tuple(np.array(t, dtype=float, ndmin=1) for t in self.intercepts)
        if len(ws) != len(ts) or len(ws) < 2:
            raise ShapeError(
                f"need matching weight/intercept lists of length >= 2, "
                f"got {len(ws)} and {len(ts)}"
            )
        for a, (w, t) in enumerate(zip(ws, ts)):
            if w.ndim != 2 or t.ndim != 1 or t.shape[0] != w.shape[0]:
                raise ShapeError(
                    f"layer {a + 1}: weights {w.shape} and intercepts {t.shape} disagree"
                )
            if a > 0 and w.shape[1] != ws[a - 1].shape[0]:
                raise ShapeError(
                    f"layer {a + 1} expects {w.shape[1]} inputs but layer {a} "
                    f"has {ws[a - 1].shape[0]} outputs"
                )
        if ws[-1].shape[0] != 1:
            raise ShapeError(f"output layer must have one node, got {ws[-1].shape[0]}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "intercepts", ts)

    @classmethod
    def _trusted(cls, weights, intercepts) -> "NetworkParameters":
        """Build from float arrays already known to be consistent (hot path)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "weights", tuple(weights))
        object.__setattr__(obj, "intercepts", tuple(intercepts))
        return obj

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *[w.shape[0] for w in self.weights])

    @property
    def first_layer(self) -> np.ndarray:
        return self.weights[0]

    @property
    def size(self) -> int:
        return sum(w.size for w in self.weights) + sum(t.size for t in self.intercepts)

    def check(self, arch: NetworkArchitecture) -> None:
        if self.layer_widths != arch.layer_widths:
            raise ShapeError(
                f"parameters have widths {list(self.layer_widths)} but the "
                f"architecture expects {list(arch.layer_widths)}"
            )

    @classmethod
    def zeros(cls, arch: NetworkArchitecture) -> "NetworkParameters":
        w = arch.layer_widths
        return cls(
            tuple(np.zeros((w[a], w[a - 1])) for a in range(1, len(w))),
            tuple(np.zeros(w[a]) for a in range(1, len(w))),
        )

    def flatten(self) -> np.ndarray:
        parts = []
        for w, t in zip(self.weights, self.intercepts):
            parts.append(w.ravel())
            parts.append(t)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, vec, arch: NetworkArchitecture) -> "NetworkParameters":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (arch.n_parameters,):
            raise ShapeError(
                f"expected a vector of {arch.n_parameters} parameters, got {vec.shape}"
            )
        w = arch.layer_widths
        weights, intercepts, pos = [], [], 0
        for a in range(1, len(w)):
            k = w[a] * w[a - 1]
            weights.append(vec[pos:pos + k].reshape(w[a], w[a - 1]))
            pos += k
            intercepts.append(vec[pos:pos + w[a]].copy())
            pos += w[a]
        return cls(tuple(weights), tuple(intercepts))

    def map(self, fn, other: "NetworkParameters | None" = None) -> "NetworkParameters":
        """Apply ``fn`` slot-wise (optionally zipping with ``other``)."""
        if other is None:
            return NetworkParameters._trusted(
                tuple(fn(w) for w in self.weights), tuple(fn(t) for t in self.intercepts)
            )
        return NetworkParameters._trusted(
            tuple(fn(a, b) for a, b in zip(self.weights, other.weights)),
            tuple(fn(a, b) for a, b in zip(self.intercepts, other.intercepts)),
        )

    def sq_distance(self, other: "NetworkParameters") -> float:
        d = 0.0
        for a, b in zip(self.weights, other.weights):
            d += float(np.sum((a - b) ** 2))
        for a, b in zip(self.intercepts, other.intercepts):
            d += float(np.sum((a - b) ** 2))
        return d

    def equals(self, other: "NetworkParameters") -> bool:
        """Bit-exact equality of every slot."""
        return self.layer_widths == other.layer_widths and all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.intercepts, other.weights + other.intercepts)
        )

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "intercepts": [t.tolist() for t in self.intercepts],
        }

    @classmethod
    def from_dict(cls, d) -> "NetworkParameters":
        return cls(
            tuple(np.array(w, dtype=float, ndmin=2) for w in d["weights"]),
            tuple(np.array(t, dtype=float, ndmin=1) for t in d["intercepts"]),
        )


# A gradient has exactly the layout of the parameters it differentiates.
Gradient = NetworkParameters


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``features`` (n x p) and response vector ``responses``."""

    features: np.ndarray
    responses: np.ndarray
    task: Task = Task.REGRESSION
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.responses, dtype=float).ravel()
        task = Task(self.task)
        if X.ndim != 2:
            raise ShapeError(f"features must be a 2-d array, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValidationError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ShapeError(f"{n} feature rows but {y.shape[0]} responses")
        bad = np.argwhere(~np.isfinite(X))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"non-finite feature value at row {i}, column {j}")
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise ValidationError(f"non-finite response at row {bad[0]}")
        if task is Task.CLASSIFICATION:
            bad = np.flatnonzero((y != 0.0) & (y != 1.0))
            if bad.size:
                raise ValidationError(
                    f"classification responses must be 0 or 1; row {bad[0]} has {y[bad[0]]!r}"
                )
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "task", task)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.responses[idx], self.task, self.feature_names)


def _check_inputs(params, arch, X):
    params.check(arch)
    if X.shape[-1] != arch.n_features:
        raise ShapeError(f"expected {arch.n_features} features, got {X.shape[-1]}")


def _forward_batch(params, arch, X, rowwise=False):
    """Return hidden activations per layer and the pre-output score.

    With ``rowwise`` each row is reduced in a fixed order, so a row's output
    does not depend on which other rows share the batch (BLAS kernels may
    block differently for one row than for many).
    """
    if rowwise:
        def affine(h, w, t):
            return np.einsum("ij,kj->ik", h, w) + t
    else:
        def affine(h, w, t):
            return h @ w.T + t
    acts = [X]
    h = X
    for w, t in zip(params.weights[:-1], params.intercepts[:-1]):
        h = _activate(affine(h, w, t), arch.activation)
        acts.append(h)
    score = affine(h, params.weights[-1], params.intercepts[-1])[:, 0]
    return acts, score


def predict(params: NetworkParameters, arch: NetworkArchitecture, X) -> np.ndarray:
    """Network output for each row of ``X`` (probabilities for classification)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-d feature matrix, got shape {X.shape}")
    _check_inputs(params, arch, X)
    _, score = _forward_batch(params, arch, X, rowwise=True)
    if arch.task is Task.CLASSIFICATION:
        return _probability(score)
    return score


def forward(params: NetworkParameters, arch: NetworkArchitecture, x) -> float:
    """Network output for a single input vector ``x`` of length p."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a length-{arch.n_features} vector, got shape {x.shape}")
    return float(predict(params, arch, x[None, :])[0])


def ridge_term(params: NetworkParameters, lambda0: float) -> float:
    """``lambda0`` times the squared Frobenius norms of all non-first-layer weights."""
    if lambda0 == 0:
        return 0.0
    return lambda0 * sum(float(np.sum(w * w)) for w in params.weights[1:])


def pointwise_loss(y, pred, task: Task) -> np.ndarray:
    """Squared error or (clamped) logistic loss for each observation."""
    if Task(task) is Task.REGRESSION:
        return (y - pred) ** 2
    pr = np.clip(pred, PROB_CLIP, 1.0 - PROB_CLIP)
    return -y * np.log(pr) - (1.0 - y) * np.log1p(-pr)


def empirical_loss(params, arch, data: Dataset) -> float:
    pred = predict(params, arch, data.features)
    return float(np.mean(pointwise_loss(data.responses, pred, arch.task)))


def _output(score, task):
    return _probability(score) if task is Task.CLASSIFICATION else score


def evaluate_smooth(params, arch, data, lambda0):
    """Smooth loss together with the forward-pass cache used by backprop."""
    _check_inputs(params, arch, data.features)
    acts, score = _forward_batch(params, arch, data.features)
    loss = np.mean(pointwise_loss(data.responses, _output(score, arch.task), arch.task))
    value = float(loss) + ridge_term(params, lambda0)
    return value, (acts, score)


def smooth_loss(params: NetworkParameters, arch: NetworkArchitecture,
                data: Dataset, lambda0: float) -> float:
    """Average loss plus the ridge penalty on the upper-layer weights."""
    if lambda0 < 0:
        raise ValidationError(f"lambda0 must be nonnegative, got {lambda0}")
    with np.errstate(over="ignore", invalid="ignore"):
        value, _ = evaluate_smooth(params, arch, data, lambda0)
    if not np.isfinite(value):
        raise NumericError(f"smooth loss is not finite ({value})")
    return value


def smooth_loss_gradient(params: NetworkParameters, arch: NetworkArchitecture,
                         data: Dataset, lambda0: float, cache=None) -> Gradient:
    """Exact gradient of :func:`smooth_loss` by backpropagation.

    ``cache`` is the forward-pass cache returned by :func:`evaluate_smooth`
    for the same ``params``; it saves one forward pass.
    """
    if lambda0 < 0:
        raise ValidationError(f"lambda0 must be nonnegative, got {lambda0}")
    X, y = data.features, data.responses
    if cache is None:
        _check_inputs(params, arch, X)
        cache = _forward_batch(params, arch, X)
    acts, score = cache
    n = X.shape[0]

    if arch.task is Task.REGRESSION:
        delta = -2.0 * (y - score) / n
    else:
        prob = _sigmoid(score)
        # the clamp is flat outside [eps, 1 - eps]
        inside = (prob > PROB_CLIP) & (prob < 1.0 - PROB_CLIP)
        delta = np.where(inside, prob - y, 0.0) / n
    if not np.all(np.isfinite(delta)):
        raise NumericError("non-finite residuals in backpropagation")

    n_layers = len(params.weights)
    gw: list = [None] * n_layers
    gt: list = [None] * n_layers
    gw[-1] = (delta @ acts[-1])[None, :]
    gt[-1] = np.array([delta.sum()])
    back = delta[:, None] * params.weights[-1]  # n x m_L
    for a in range(n_layers - 2, -1, -1):
        back = back * _activation_derivative(acts[a + 1], arch.activation)
        gw[a] = back.T @ acts[a]
        gt[a] = back.sum(axis=0)
        if a > 0:
            back = back @ params.weights[a]
    if lambda0:
        for a in range(1, n_layers):
            gw[a] = gw[a] + 2.0 * lambda0 * params.weights[a]
    return NetworkParameters._trusted(gw, gt)

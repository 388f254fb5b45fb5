"""Proximal gradient training with a monotone backtracking line search.

Each iteration takes a gradient step on the smooth part of the objective,
applies the sparse group lasso proximal map to the first-layer weights and
keeps the gradient-stepped upper layers.  The step size starts from
``gamma_init`` and is multiplied by ``shrink`` until the proposal satisfies

    F(new) <= F(old) - t * gamma * ||new - old||^2,

so the accepted objective sequence never increases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FitError, NumericError, ValidationError
from .network import (
    Dataset,
    NetworkArchitecture,
    NetworkParameters,
    predict,
    smooth_loss_gradient,
)
from .penalty import PenaltyConfig, evaluate_objective, full_objective, sgl_prox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    gamma_init: float = 1.0
    shrink: float = 0.5
    line_search_t: float = 0.1
    max_iters: int = 5000
    rel_tol: float = 1e-6
    max_backtracks: int = 50
    n_restarts: int = 3
    seed: int = 0
    # weights start uniform on +-init_scale / sqrt(fan_in)
    init_scale: float = 0.5
    # fit on centred, unit-variance features; the shift/scale travel with the result
    standardize: bool = False

    def __post_init__(self):
        if not self.gamma_init > 0:
            raise ValidationError(f"gamma_init must be positive, got {self.gamma_init}")
        if not 0 < self.shrink < 1:
            raise ValidationError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.line_search_t < 1:
            raise ValidationError(f"line_search_t must lie in (0, 1), got {self.line_search_t}")
        if not self.rel_tol > 0:
            raise ValidationError(f"rel_tol must be positive, got {self.rel_tol}")
        if not self.init_scale > 0:
            raise ValidationError(f"init_scale must be positive, got {self.init_scale}")
        for name in ("max_iters", "max_backtracks", "n_restarts"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if int(self.seed) < 0:
            raise ValidationError(f"seed must be nonnegative, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "gamma_init": self.gamma_init,
            "shrink": self.shrink,
            "line_search_t": self.line_search_t,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "max_backtracks": self.max_backtracks,
            "n_restarts": self.n_restarts,
            "seed": self.seed,
            "init_scale": self.init_scale,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValidationError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FitResult:
    architecture: NetworkArchitecture
    params: NetworkParameters
    objective_trace: list[float]
    n_iters: int
    converged: bool
    selected_features: tuple[int, ...]
    n_active_hidden: int
    restart_objectives: list[float]
    final_step: float
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def transform_inputs(self, X) -> np.ndarray:
        """Map raw features to the coordinates the network was trained on."""
        X = np.asarray(X, dtype=float)
        if self.input_shift is None:
            return X
        return (X - self.input_shift) / self.input_scale

    def predict(self, X) -> np.ndarray:
        return predict(self.params, self.architecture, self.transform_inputs(X))


def standardization(X) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard deviations (constant columns get scale 1)."""
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def selected_columns(theta1) -> tuple[int, ...]:
    """Indices of first-layer columns with at least one nonzero entry."""
    return tuple(int(j) for j in np.flatnonzero(np.any(theta1 != 0, axis=0)))


def active_hidden_nodes(theta1) -> int:
    return int(np.count_nonzero(np.any(theta1 != 0, axis=1)))


def gist_step(params: NetworkParameters, arch: NetworkArchitecture, data: Dataset,
              penalty: PenaltyConfig, gamma: float, grad=None) -> NetworkParameters:
    """One proximal gradient proposal with step size ``gamma``.

    ``grad`` may be passed to reuse a gradient already computed at ``params``.
    """
    if not gamma > 0:
        raise ValidationError(f"step size must be positive, got {gamma}")
    if grad is None:
        grad = smooth_loss_gradient(params, arch, data, penalty.lambda0)
    stepped = params.map(lambda p, g: p - gamma * g, grad)
    theta1 = sgl_prox(stepped.weights[0], gamma, penalty.lam, penalty.alpha)
    return NetworkParameters._trusted((theta1, *stepped.weights[1:]), stepped.intercepts)


def line_search_accept(obj_new: float, obj_old: float, params_new: NetworkParameters,
                       params_old: NetworkParameters, gamma: float, t: float) -> bool:
    if not 0 < t < 1:
        raise ValidationError(f"t must lie in (0, 1), got {t}")
    if not np.isfinite(obj_new):
        return False
    return obj_new <= obj_old - t * gamma * params_new.sq_distance(params_old)


def init_parameters(arch: NetworkArchitecture, rng: np.random.Generator,
                    init_scale: float = 0.5) -> NetworkParameters:
    w = arch.layer_widths
    weights = []
    for a in range(1, len(w)):
        bound = init_scale / np.sqrt(w[a - 1])
        weights.append(rng.uniform(-bound, bound, size=(w[a], w[a - 1])))
    return NetworkParameters(tuple(weights), tuple(np.zeros(w[a]) for a in range(1, len(w))))


def _run(params, arch, data, penalty, config):
    """Iterate from ``params``; returns (params, trace, converged, last gamma)."""
    with np.errstate(over="ignore", invalid="ignore"):
        obj, cache = evaluate_objective(params, arch, data, penalty)
    if not np.isfinite(obj):
        raise NumericError("objective is not finite at the initial parameters")
    trace = [obj]
    gamma = config.gamma_init
    converged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(config.max_iters):
            grad = smooth_loss_gradient(params, arch, data, penalty.lambda0, cache=cache)
            if not all(np.all(np.isfinite(g)) for g in grad.weights + grad.intercepts):
                raise NumericError(f"non-finite gradient at iteration {k + 1}")
            gamma = config.gamma_init
            for _ in range(config.max_backtracks):
                cand = gist_step(params, arch, data, penalty, gamma, grad=grad)
                obj_new, cand_cache = evaluate_objective(cand, arch, data, penalty)
                if line_search_accept(obj_new, obj, cand, params, gamma, config.line_search_t):
                    break
                gamma *= config.shrink
            else:
                # no step size makes progress: treat current params as converged
                converged = True
                break
            change = obj - obj_new
            params, obj, cache = cand, obj_new, cand_cache
            trace.append(obj)
            if change <= config.rel_tol * max(abs(obj), np.finfo(float).tiny):
                converged = True
                break
    return params, trace, converged, gamma


def fit(arch: NetworkArchitecture, data: Dataset, penalty: PenaltyConfig,
        config: TrainConfig = TrainConfig(), init: NetworkParameters | None = None) -> FitResult:
    """Fit the penalized network; the best of ``config.n_restarts`` runs is kept.

    Restart ``r`` draws its initialization from the ``r``-th child of
    ``SeedSequence(config.seed)``.  When ``init`` is given it replaces the
    first restart's random draw.  With ``config.standardize`` the network
    (and ``init``) live in standardized feature coordinates; use
    :meth:`FitResult.predict` for raw inputs.
    """
    if data.n_features != arch.n_features:
        raise ValidationError(
            f"data has {data.n_features} features but the architecture expects {arch.n_features}"
        )
    if data.task is not arch.task:
        raise ValidationError(f"data task {data.task.value} != architecture task {arch.task.value}")
    shift = scale = None
    if config.standardize:
        shift, scale = standardization(data.features)
        data = Dataset((data.features - shift) / scale, data.responses, data.task)
    seeds = np.random.SeedSequence(int(config.seed)).spawn(config.n_restarts)
    best = None
    finals = []
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        start = init if (r == 0 and init is not None) else init_parameters(arch, rng, config.init_scale)
        try:
            run = _run(start, arch, data, penalty, config)
        except NumericError as exc:
            logger.warning("restart %d failed: %s", r, exc)
            finals.append(float("inf"))
            continue
        finals.append(run[1][-1])
        # strict < keeps the lowest restart index on ties
        if best is None or run[1][-1] < best[1][-1]:
            best = run
    if best is None:
        raise FitError("all restarts produced non-finite objectives")
    params, trace, converged, gamma = best
    theta1 = params.first_layer
    return FitResult(
        architecture=arch,
        params=params,
        objective_trace=trace,
        n_iters=len(trace) - 1,
        converged=converged,
        selected_features=selected_columns(theta1),
        n_active_hidden=active_hidden_nodes(theta1),
        restart_objectives=finals,
        final_step=gamma,
        penalty=penalty,
        input_shift=shift,
        input_scale=scale,
    )

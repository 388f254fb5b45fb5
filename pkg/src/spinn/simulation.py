"""Synthetic scenarios and the experiment drivers built on them.

Covariates are i.i.d. Uniform(0, 1); responses are ``f*(x) + sigma * eps``
with standard normal ``eps``.  The noise scale is calibrated once per
scenario so that ``sd(f*(X)) / sigma`` equals the requested signal to noise
ratio, with ``sd(f*(X))`` estimated from a fixed Monte Carlo sample.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .exceptions import FitError, ValidationError
from .network import (
    Activation,
    Dataset,
    NetworkArchitecture,
    NetworkParameters,
    Task,
    predict,
)
from .optimizer import FitResult, TrainConfig, fit
from .parallel import parallel_map
from .penalty import PenaltyConfig, column_omegas

logger = logging.getLogger(__name__)

N_CALIBRATION_DRAWS = 100_000
_CALIBRATION_SEED = 20180101
RELEVANT = tuple(range(6))


class Scenario(str, enum.Enum):
    TEACHER_NET = "teacher"
    ADDITIVE_UNIVARIATE = "additive"
    COMPLEX_MULTIVARIATE = "complex"
    HIGH_DIM_ADDITIVE_MULTIVARIATE = "highdim"


# --- ground-truth functions (all take an n x p matrix, use columns 0..5) ---

_TEACHER_ROWS = np.array([
    [1.0, 2.0, -3.0, 2.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, -2.0, 2.0],
    [0.0, -1.0, -1.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, -0.5, 0.0, 1.0, 0.5],
])
_TEACHER_OUT = np.array([[1.0, 2.0, 1.0, 1.0]])


def teacher_parameters(p: int) -> NetworkParameters:
    """Exact parameters of the one-hidden-layer, four-node teacher network."""
    if p < 6:
        raise ValidationError(f"the teacher network needs p >= 6, got {p}")
    theta1 = np.zeros((4, p))
    theta1[:, :6] = _TEACHER_ROWS
    return NetworkParameters((theta1, _TEACHER_OUT.copy()), (np.zeros(4), np.zeros(1)))


def teacher_architecture(p: int) -> NetworkArchitecture:
    return NetworkArchitecture((p, 4, 1), Task.REGRESSION, Activation.TANH)


def _teacher(X):
    # evaluated through the network itself so a copied teacher has zero excess loss
    p = X.shape[1]
    return predict(teacher_parameters(p), teacher_architecture(p), X)


def _additive(X):
    return (
        np.sin(2 * X[:, 0]) + np.cos(5 * X[:, 1]) + X[:, 2] ** 3
        - np.sin(X[:, 3]) + X[:, 4] - X[:, 5] ** 2
    )


def _complex(X):
    x1, x2, x3, x4, x5, x6 = (X[:, j] for j in range(6))
    return np.sin(x1 * (x1 + x2)) * np.cos(x3 + x4 * x5) * np.sin(np.exp(x5) + np.exp(x6) - x2)


def _highdim(X):
    x1, x2, x3, x4, x5, x6 = (X[:, j] for j in range(6))
    return (
        np.minimum(x1, x2) * np.cos(1.5 * x3 + 2 * x4)
        + np.exp(x5 + np.sin(x4)) * x2
        + np.sin(np.maximum(x6, x3)) * (x5 - x1)
    )


TRUTHS: dict[Scenario, Callable[[np.ndarray], np.ndarray]] = {
    Scenario.TEACHER_NET: _teacher,
    Scenario.ADDITIVE_UNIVARIATE: _additive,
    Scenario.COMPLEX_MULTIVARIATE: _complex,
    Scenario.HIGH_DIM_ADDITIVE_MULTIVARIATE: _highdim,
}


def truth_function(kind) -> Callable[[np.ndarray], np.ndarray]:
    return TRUTHS[Scenario(kind)]


@lru_cache(maxsize=None)
def signal_sd(kind, n_draws: int = N_CALIBRATION_DRAWS, seed: int = _CALIBRATION_SEED) -> float:
    """Monte Carlo standard deviation of ``f*(X)`` for X uniform on the unit cube.

    Only the six relevant coordinates matter, so the estimate is shared by
    every ``p``.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_draws, len(RELEVANT)))
    return float(np.std(truth_function(kind)(X), ddof=1))


def noise_sd(kind, snr: float = 2.0) -> float:
    return signal_sd(Scenario(kind)) / snr


@dataclass(frozen=True)
class ScenarioSpec:
    kind: Scenario = Scenario.TEACHER_NET
    p: int = 10
    n_train: int = 200
    n_test: int = 2000
    snr: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Scenario(self.kind))
        if self.p < len(RELEVANT):
            raise ValidationError(f"p must be at least {len(RELEVANT)}, got {self.p}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValidationError("n_train and n_test must be positive")
        if not self.snr > 0:
            raise ValidationError(f"snr must be positive, got {self.snr}")

    @property
    def relevant(self) -> tuple[int, ...]:
        return RELEVANT

    def replace(self, **kw) -> "ScenarioSpec":
        d = dict(kind=self.kind, p=self.p, n_train=self.n_train, n_test=self.n_test,
                 snr=self.snr, seed=self.seed)
        d.update(kw)
        return ScenarioSpec(**d)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p, "n_train": self.n_train,
                "n_test": self.n_test, "snr": self.snr, "seed": self.seed}


def _draw(rng, n, p, f, sigma):
    X = rng.uniform(size=(n, p))
    eps = rng.standard_normal(n)
    return X, f(X) + sigma * eps


def generate(spec: ScenarioSpec) -> tuple[Dataset, Dataset, Callable]:
    """Draw independent train and test sets; returns ``(train, test, f*)``.

    The train stream is the first child of ``SeedSequence(spec.seed)`` and
    the test stream the second.  Within a stream the feature matrix is drawn
    first, then the noise vector.
    """
    f = truth_function(spec.kind)
    sigma = noise_sd(spec.kind, spec.snr)
    train_ss, test_ss = np.random.SeedSequence(int(spec.seed)).spawn(2)
    Xtr, ytr = _draw(np.random.default_rng(train_ss), spec.n_train, spec.p, f, sigma)
    Xte, yte = _draw(np.random.default_rng(test_ss), spec.n_test, spec.p, f, sigma)
    return Dataset(Xtr, ytr), Dataset(Xte, yte), f


def _params_arch(fit_or_params, arch=None):
    if isinstance(fit_or_params, FitResult):
        return fit_or_params.params, fit_or_params.architecture
    if arch is None:
        raise ValidationError("an architecture is required alongside raw parameters")
    return fit_or_params, arch


def excess_loss(fit_result, truth: Callable, test_x, arch=None) -> float:
    """Mean of ``(f*(x) - f_hat(x))^2`` over the rows of ``test_x``."""
    test_x = np.asarray(test_x, dtype=float)
    if test_x.ndim != 2 or test_x.shape[0] == 0:
        raise ValidationError("test_x must be a non-empty 2-d array")
    if isinstance(fit_result, FitResult):
        fitted = fit_result.predict(test_x)
    else:
        params, arch = _params_arch(fit_result, arch)
        fitted = predict(params, arch, test_x)
    diff = truth(test_x) - fitted
    return float(np.mean(diff * diff))


def irrelevant_penalty_mass(fit_result, relevant: Sequence[int], alpha: float) -> float:
    """Sum of ``Omega_alpha`` over first-layer columns outside ``relevant``."""
    params = fit_result.params if isinstance(fit_result, FitResult) else fit_result
    theta1 = params.first_layer
    mask = np.ones(theta1.shape[1], dtype=bool)
    mask[list(relevant)] = False
    return float(np.sum(column_omegas(theta1[:, mask], alpha)))


# --- rate experiments ---

class Axis(str, enum.Enum):
    N = "n"
    P = "p"
    M1 = "m1"


def theory_lambda(scale: float) -> Callable[[int, int], float]:
    """Penalty rule ``scale * sqrt(log(p) * log(n) / n)``."""
    def rule(n, p):
        return scale * math.sqrt(math.log(p) * math.log(n) / n)
    return rule


@dataclass(frozen=True)
class Regression:
    """OLS coefficients (intercept first) and whether the design was degenerate."""

    coef: tuple[float, ...]
    degenerate: bool = False

    @property
    def intercept(self):
        return self.coef[0]

    @property
    def slope(self):
        return self.coef[1] if len(self.coef) > 1 else float("nan")


def ols(regressors, response) -> Regression:
    """Ordinary least squares of ``response`` on columns of ``regressors`` plus an intercept."""
    Z = np.asarray(regressors, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(response, dtype=float)
    nan = (float("nan"),) * (Z.shape[1] + 1)
    if len(y) < Z.shape[1] + 1:
        return Regression(nan, True)
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        return Regression(nan, True)
    design = np.column_stack([np.ones(len(y)), Z])
    centered = Z - Z.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(Z).max())) < Z.shape[1]:
        return Regression(nan, True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return Regression(tuple(float(c) for c in coef))


def log_rate_slope(n_values, values) -> Regression:
    """Regress ``log(values)`` on ``log(log n / n)``."""
    n = np.asarray(n_values, dtype=float)
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return ols(np.log(np.log(n) / n), np.log(v))


@dataclass
class RateExperimentResult:
    axis: Axis
    grid: list
    mean_excess: list[float]
    se_excess: list[float]
    mean_irrelevant: list[float]
    se_irrelevant: list[float]
    replicates: int
    n_failed: list[int]
    excess_fit: Regression
    irrelevant_fit: Regression
    lambdas: list[float] = field(default_factory=list)

    @property
    def slope(self) -> float:
        return self.excess_fit.slope

    @property
    def degenerate(self) -> bool:
        return self.excess_fit.degenerate

    def rows(self) -> list[dict]:
        return [
            {
                "grid_value": g,
                "lambda": lam,
                "mean_excess_loss": me,
                "se_excess_loss": se,
                "mean_irrelevant_mass": mi,
                "se_irrelevant_mass": si,
                "n_failed": nf,
            }
            for g, lam, me, se, mi, si, nf in zip(
                self.grid, self.lambdas, self.mean_excess, self.se_excess,
                self.mean_irrelevant, self.se_irrelevant, self.n_failed,
            )
        ]

    def summary(self) -> dict:
        out = {"axis": self.axis.value, "replicates": self.replicates}
        if self.axis is Axis.N:
            out["excess_slope"] = self.excess_fit.slope
            out["excess_intercept"] = self.excess_fit.intercept
            out["irrelevant_slope"] = self.irrelevant_fit.slope
            out["irrelevant_intercept"] = self.irrelevant_fit.intercept
        elif self.axis is Axis.P:
            out["excess_coef_p"], out["excess_coef_log_p"] = self.excess_fit.coef[1:]
            out["excess_intercept"] = self.excess_fit.intercept
            out["irrelevant_coef_p"], out["irrelevant_coef_sqrt_log_p"] = self.irrelevant_fit.coef[1:]
            out["irrelevant_intercept"] = self.irrelevant_fit.intercept
        else:
            finite = [v for v in self.mean_excess if np.isfinite(v)]
            out["excess_max_over_min"] = max(finite) / min(finite) if finite else float("nan")
        out["excess_degenerate"] = self.excess_fit.degenerate
        out["irrelevant_degenerate"] = self.irrelevant_fit.degenerate
        return out


def _replicate_seed(base_seed, point_index, rep):
    # independent of execution order; distinct streams per (point, replicate)
    return int(np.random.SeedSequence([int(base_seed), point_index, rep]).generate_state(1)[0])


def _rate_unit(axis, value, spec, penalty, train_config, seed):
    if axis is Axis.N:
        spec = spec.replace(n_train=int(value), seed=seed)
        arch = teacher_architecture(spec.p)
    elif axis is Axis.P:
        spec = spec.replace(p=int(value), seed=seed)
        arch = teacher_architecture(spec.p)
    else:
        spec = spec.replace(seed=seed)
        arch = NetworkArchitecture((spec.p, int(value), 1))
    train, test, truth = generate(spec)
    cfg = TrainConfig(**{**train_config.to_dict(), "seed": seed})
    try:
        result = fit(arch, train, penalty, cfg)
    except FitError:
        return None
    return (
        excess_loss(result, truth, test.features),
        irrelevant_penalty_mass(result, spec.relevant, penalty.alpha),
    )


def rate_experiment(axis, grid: Sequence, base_spec: ScenarioSpec, penalty: PenaltyConfig,
                    train_config: TrainConfig = TrainConfig(), replicates: int = 5,
                    lambda_rule: Callable[[int, int], float] | None = None,
                    min_n_irrelevant: int = 400, n_jobs: int | None = None) -> RateExperimentResult:
    """Average excess loss and irrelevant mass over replicates at each grid point.

    For ``axis="n"`` and ``axis="p"`` the fitted network matches the teacher
    (one hidden layer of four nodes); for ``axis="m1"`` the grid gives the
    hidden width.  When ``lambda_rule`` is given, the sparse group lasso
    weight at each point is ``lambda_rule(n, p)`` instead of ``penalty.lam``.
    Replicate ``r`` at point ``i`` uses a seed derived from
    ``(base_spec.seed, i, r)``.
    """
    axis = Axis(axis)
    grid = list(grid)
    if len(grid) < 3 or any(g <= 0 for g in grid):
        raise ValidationError("a rate experiment needs at least 3 positive grid values")
    if replicates < 1:
        raise ValidationError("replicates must be positive")

    lambdas, units = [], []
    for i, g in enumerate(grid):
        n = int(g) if axis is Axis.N else base_spec.n_train
        p = int(g) if axis is Axis.P else base_spec.p
        pen = penalty
        if lambda_rule is not None:
            pen = PenaltyConfig(penalty.lambda0, lambda_rule(n, p), penalty.alpha)
        lambdas.append(pen.lam)
        for r in range(replicates):
            units.append((axis, g, base_spec, pen, train_config,
                          _replicate_seed(base_spec.seed, i, r)))
    results = parallel_map(_rate_unit, units, n_jobs=n_jobs)

    mean_ex, se_ex, mean_irr, se_irr, failed = [], [], [], [], []
    for i, g in enumerate(grid):
        chunk = [res for res in results[i * replicates:(i + 1) * replicates] if res is not None]
        failed.append(replicates - len(chunk))
        if not chunk:
            raise FitError(f"every replicate failed at grid value {g}")
        ex = np.array([c[0] for c in chunk])
        irr = np.array([c[1] for c in chunk])
        mean_ex.append(float(ex.mean()))
        mean_irr.append(float(irr.mean()))
        se_ex.append(float(ex.std(ddof=1) / np.sqrt(len(ex))) if len(ex) > 1 else float("nan"))
        se_irr.append(float(irr.std(ddof=1) / np.sqrt(len(irr))) if len(irr) > 1 else float("nan"))

    g_arr = np.asarray(grid, dtype=float)
    if axis is Axis.N:
        excess_fit = log_rate_slope(g_arr, mean_ex)
        keep = g_arr >= min_n_irrelevant
        irrelevant_fit = log_rate_slope(g_arr[keep], np.asarray(mean_irr)[keep])
    elif axis is Axis.P:
        excess_fit = ols(np.column_stack([g_arr, np.log(g_arr)]), mean_ex)
        irrelevant_fit = ols(np.column_stack([g_arr, np.sqrt(np.log(g_arr))]), mean_irr)
    else:
        excess_fit = ols(g_arr, mean_ex)
        irrelevant_fit = ols(g_arr, mean_irr)
    return RateExperimentResult(axis, grid, mean_ex, se_ex, mean_irr, se_irr, replicates,
                                failed, excess_fit, irrelevant_fit, lambdas)


def injected_rate_result(grid: Sequence, exponent: float, scale: float = 1.0) -> RateExperimentResult:
    """N-axis result whose excess loss is exactly ``scale * (log n / n) ** exponent``.

    Exercises the regression machinery without fitting any network.
    """
    g = np.asarray(grid, dtype=float)
    ex = scale * (np.log(g) / g) ** exponent
    irr = np.sqrt(ex)
    fit_ex = log_rate_slope(g, ex)
    fit_irr = log_rate_slope(g, irr)
    nan = [float("nan")] * len(g)
    return RateExperimentResult(Axis.N, list(grid), ex.tolist(), nan, irr.tolist(), nan, 0,
                                [0] * len(g), fit_ex, fit_irr, nan)


def spearman(values, order=None) -> float:
    """Spearman rank correlation of ``values`` with their position (or ``order``)."""
    values = np.asarray(values, dtype=float)
    order = np.arange(len(values)) if order is None else np.asarray(order, dtype=float)
    return float(stats.spearmanr(order, values).statistic)


# --- lasso vs group lasso sweep ---

@dataclass(frozen=True)
class SweepCell:
    lasso_weight: float
    group_weight: float
    mse: float
    relevant_share: float
    irrelevant_share: float
    empty: bool


def split_penalty(lasso_weight: float, group_weight: float) -> tuple[float, float]:
    """Map separate lasso/group weights to ``(lam, alpha)``."""
    lam = lasso_weight + group_weight
    if lam == 0:
        return 0.0, 0.5
    return lam, group_weight / lam


def _sweep_unit(lw, gw, spec, arch, lambda0, train_config):
    train, test, truth = generate(spec)
    lam, alpha = split_penalty(lw, gw)
    result = fit(arch, train, PenaltyConfig(lambda0, lam, alpha), train_config)
    mse = excess_loss(result, truth, test.features)
    mass = column_omegas(result.params.first_layer, alpha)
    total = float(mass.sum())
    if total == 0:
        return SweepCell(lw, gw, mse, 0.0, 0.0, True)
    rel = float(mass[list(spec.relevant)].sum())
    return SweepCell(lw, gw, mse, rel / total, (total - rel) / total, False)


def alpha_sweep(lasso_grid: Sequence[float], group_grid: Sequence[float],
                spec: ScenarioSpec | None = None, train_config: TrainConfig = TrainConfig(),
                arch: NetworkArchitecture | None = None, lambda0: float = 0.001,
                n_jobs: int | None = None) -> list[SweepCell]:
    """Fit every (lasso weight, group weight) pair on one dataset.

    The penalty ``lw * ||.||_1 + gw * ||.||_2`` per column is expressed as
    ``lam = lw + gw`` and ``alpha = gw / lam``.  Shares report how the
    resulting first-layer penalty mass splits between relevant and
    irrelevant columns; a cell whose first layer is entirely zero is flagged
    ``empty`` with both shares 0.
    """
    if spec is None:
        spec = ScenarioSpec(Scenario.COMPLEX_MULTIVARIATE, p=50, n_train=250)
    if arch is None:
        arch = NetworkArchitecture((spec.p, 10, 1))
    units = [(lw, gw, spec, arch, lambda0, train_config) for lw in lasso_grid for gw in group_grid]
    return parallel_map(_sweep_unit, units, n_jobs=n_jobs)

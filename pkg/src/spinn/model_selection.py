"""K-fold cross-validation over penalty weights and architectures."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import FitError, ValidationError
from .network import Dataset, NetworkArchitecture, pointwise_loss
from .optimizer import FitResult, TrainConfig, fit
from .parallel import parallel_map
from .penalty import PenaltyConfig

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_ARCHITECTURES = ((5,), (10,), (15,), (10, 5))


def kfold_split(n: int, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle ``0..n-1`` and cut it into ``k`` folds whose sizes differ by at most one."""
    n, k = int(n), int(k)
    if k < 2 or k > n:
        raise ValidationError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(int(seed)).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(val)))
    return out


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values for cross-validation.

    ``architectures`` holds hidden-layer width tuples (or full
    :class:`NetworkArchitecture` objects).  ``lambdas=None`` asks
    :func:`cross_validate` to build a log-spaced grid ending at
    :func:`lambda_max`.
    """

    lambdas: tuple[float, ...] | None = None
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    lambda0: float = 0.001
    architectures: tuple = DEFAULT_ARCHITECTURES
    n_lambdas: int = 10
    lambda_min_ratio: float = 1e-2

    def __post_init__(self):
        if self.lambdas is not None:
            lams = tuple(float(v) for v in self.lambdas)
            if not lams or any(v < 0 or not math.isfinite(v) for v in lams):
                raise ValidationError(f"lambdas must be a non-empty list of nonnegative values: {lams}")
            object.__setattr__(self, "lambdas", lams)
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas or any(not 0 <= a <= 1 for a in alphas):
            raise ValidationError(f"alphas must be a non-empty list in [0, 1]: {alphas}")
        object.__setattr__(self, "alphas", alphas)
        if self.lambda0 < 0:
            raise ValidationError(f"lambda0 must be nonnegative, got {self.lambda0}")
        archs = tuple(
            a if isinstance(a, NetworkArchitecture) else tuple(int(h) for h in a)
            for a in self.architectures
        )
        if not archs:
            raise ValidationError("at least one architecture is required")
        object.__setattr__(self, "architectures", archs)
        if self.n_lambdas < 1 or not 0 < self.lambda_min_ratio < 1:
            raise ValidationError("n_lambdas must be positive and lambda_min_ratio in (0, 1)")

    def resolve_architectures(self, data: Dataset, activation="tanh") -> list[NetworkArchitecture]:
        out = []
        for a in self.architectures:
            if isinstance(a, NetworkArchitecture):
                if a.n_features != data.n_features or a.task is not data.task:
                    raise ValidationError(
                        f"architecture {list(a.layer_widths)} ({a.task.value}) does not match "
                        f"data with {data.n_features} features ({data.task.value})"
                    )
                out.append(a)
            else:
                out.append(NetworkArchitecture.from_hidden(data.n_features, a, data.task, activation))
        return out

    def to_dict(self) -> dict:
        return {
            "lambdas": None if self.lambdas is None else list(self.lambdas),
            "alphas": list(self.alphas),
            "lambda0": self.lambda0,
            "architectures": [
                list(a.hidden) if isinstance(a, NetworkArchitecture) else list(a)
                for a in self.architectures
            ],
            "n_lambdas": self.n_lambdas,
            "lambda_min_ratio": self.lambda_min_ratio,
        }

    @classmethod
    def from_dict(cls, d) -> "HyperGrid":
        known = {"lambdas", "alphas", "lambda0", "architectures", "n_lambdas", "lambda_min_ratio"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown grid options: {sorted(unknown)}")
        kw = dict(d)
        if "architectures" in kw:
            kw["architectures"] = tuple(tuple(a) for a in kw["architectures"])
        if kw.get("lambdas") is not None:
            kw["lambdas"] = tuple(kw["lambdas"])
        if "alphas" in kw:
            kw["alphas"] = tuple(kw["alphas"])
        return cls(**kw)


@dataclass
class CVCell:
    lam: float
    alpha: float
    architecture: NetworkArchitecture
    seed: int
    fold_losses: list[float] = field(default_factory=list)
    fold_fits: list[FitResult] = field(default_factory=list, repr=False)
    failed: bool = False

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.fold_losses)) if not self.failed else float("inf")

    @property
    def se(self) -> float:
        if self.failed or len(self.fold_losses) < 2:
            return float("nan")
        return float(np.std(self.fold_losses, ddof=1) / math.sqrt(len(self.fold_losses)))

    @property
    def penalty_key(self):
        return (self.lam, self.alpha, self.architecture.layer_widths)

    def sort_key(self):
        # lowest loss; ties go to larger lambda, then the smaller network
        return (self.mean_loss, -self.lam, self.architecture.n_parameters,
                self.architecture.layer_widths, self.alpha)


@dataclass
class CVReport:
    cells: list[CVCell]
    best: CVCell
    refit: FitResult
    lambda0: float
    k: int
    folds: list[tuple[np.ndarray, np.ndarray]] = field(repr=False, default_factory=list)

    @property
    def best_penalty(self) -> PenaltyConfig:
        return PenaltyConfig(self.lambda0, self.best.lam, self.best.alpha)

    def rows(self) -> list[dict]:
        return [
            {
                "lambda": c.lam,
                "alpha": c.alpha,
                "hidden": "-".join(str(h) for h in c.architecture.hidden),
                "mean_loss": c.mean_loss,
                "se": c.se,
                "failed": c.failed,
                "best": c is self.best,
            }
            for c in self.cells
        ]


def _float_bits(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


def cell_seed(master_seed: int, lam: float, alpha: float, arch: NetworkArchitecture) -> int:
    """Seed that depends on the cell's contents, never on its grid position."""
    entropy = [int(master_seed), _float_bits(lam), _float_bits(alpha), *arch.layer_widths]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def validation_loss(fit_result: FitResult, data: Dataset) -> float:
    """Squared error (regression) or logistic loss (classification) on ``data``."""
    pred = fit_result.predict(data.features)
    return float(np.mean(pointwise_loss(data.responses, pred, data.task)))


def _fold_unit(data, train_idx, val_idx, arch, penalty, config):
    try:
        res = fit(arch, data.subset(train_idx), penalty, config)
    except FitError as exc:
        logger.warning("fold fit failed: %s", exc)
        return None
    return validation_loss(res, data.subset(val_idx)), res


def lambda_max(data: Dataset, arch: NetworkArchitecture, alpha: float, lambda0: float,
               config: TrainConfig = TrainConfig(), n_bisect: int = 20,
               start: float = 1.0) -> float:
    """Smallest penalty (to bisection accuracy) whose full-data fit selects no features.

    The bracket is found by doubling/halving from ``start``; ``n_bisect``
    geometric bisection steps follow.
    """
    def empty(lam):
        return not fit(arch, data, PenaltyConfig(lambda0, lam, alpha), config).selected_features

    hi = float(start)
    for _ in range(60):
        if empty(hi):
            break
        hi *= 2.0
    else:
        raise FitError("could not find a penalty large enough to remove every feature")
    lo = hi / 2.0
    for _ in range(60):
        if not empty(lo):
            break
        hi, lo = lo, lo / 2.0
    for _ in range(n_bisect):
        mid = math.sqrt(lo * hi)
        if empty(mid):
            hi = mid
        else:
            lo = mid
    return hi


def lambda_grid(lam_max: float, n_lambdas: int = 10, min_ratio: float = 1e-2) -> tuple[float, ...]:
    """Log-spaced values from ``lam_max`` down to ``min_ratio * lam_max``."""
    if n_lambdas == 1:
        return (float(lam_max),)
    return tuple(float(v) for v in np.geomspace(lam_max, lam_max * min_ratio, n_lambdas))


def cross_validate(data: Dataset, grid: HyperGrid, k: int = 3,
                   train_config: TrainConfig = TrainConfig(), activation="tanh",
                   n_jobs: int | None = None) -> CVReport:
    """Score every grid cell by k-fold validation loss and refit the best one.

    Folds are drawn once from ``train_config.seed``.  Each cell trains with
    a seed derived from the master seed and the cell's own values, so the
    report does not depend on grid order or on how work is scheduled.
    """
    archs = grid.resolve_architectures(data, activation)
    lambdas = grid.lambdas
    if lambdas is None:
        lam_max = lambda_max(data, archs[0], max(grid.alphas), grid.lambda0, train_config)
        lambdas = lambda_grid(lam_max, grid.n_lambdas, grid.lambda_min_ratio)
    folds = kfold_split(data.n_samples, k, train_config.seed)

    cells = []
    for lam, alpha, arch in itertools.product(lambdas, grid.alphas, archs):
        cells.append(CVCell(lam, alpha, arch, cell_seed(train_config.seed, lam, alpha, arch)))

    units = []
    for cell in cells:
        pen = PenaltyConfig(grid.lambda0, cell.lam, cell.alpha)
        cfg = TrainConfig(**{**train_config.to_dict(), "seed": cell.seed})
        for tr, va in folds:
            units.append((data, tr, va, cell.architecture, pen, cfg))
    results = parallel_map(_fold_unit, units, n_jobs=n_jobs)

    for i, cell in enumerate(cells):
        chunk = results[i * k:(i + 1) * k]
        if any(r is None for r in chunk):
            cell.failed = True
            continue
        cell.fold_losses = [r[0] for r in chunk]
        cell.fold_fits = [r[1] for r in chunk]
    ok = [c for c in cells if not c.failed]
    if not ok:
        raise FitError("every cross-validation cell failed")
    best = min(ok, key=CVCell.sort_key)
    refit_cfg = TrainConfig(**{**train_config.to_dict(), "seed": best.seed})
    refit = fit(best.architecture, data, PenaltyConfig(grid.lambda0, best.lam, best.alpha), refit_cfg)
    return CVReport(cells, best, refit, grid.lambda0, k, folds)


@dataclass(frozen=True)
class FeatureReport:
    included: tuple[int, ...]
    count: int
    group_norms: np.ndarray


def feature_report(fit_result, p: int | None = None) -> FeatureReport:
    """Features whose first-layer weight column has nonzero Euclidean norm."""
    params = fit_result.params if isinstance(fit_result, FitResult) else fit_result
    theta1 = params.first_layer
    if p is not None and theta1.shape[1] != p:
        raise ValidationError(f"fit has {theta1.shape[1]} input columns, expected {p}")
    norms = np.sqrt(np.sum(theta1 * theta1, axis=0))
    # test entries, not norms: squaring can underflow a tiny nonzero column to 0
    included = tuple(int(j) for j in np.flatnonzero(np.any(theta1 != 0, axis=0)))
    return FeatureReport(included, len(included), norms)

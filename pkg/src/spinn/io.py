"""On-disk formats: numeric CSV tables and versioned JSON model files."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .network import Dataset, NetworkArchitecture, NetworkParameters, Task, predict
from .optimizer import FitResult, selected_columns
from .penalty import PenaltyConfig

MODEL_FORMAT = "spinn-model"
MODEL_FORMAT_VERSION = 1
FLOAT_FMT = "%.17g"


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_table(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV; a first row that does not parse as numbers is a header."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValidationError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValidationError(f"{path}: row {i}, column {j}: not a number: {cell!r}") from None
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: non-finite value at row {i}, column {j}")
    return values, header


def write_table(path, values, header: Sequence[str] | None = None) -> None:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in values:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_dataset(path, task=Task.REGRESSION) -> Dataset:
    """Features are every column but the last; the last column is the response."""
    values, header = read_table(path)
    if values.shape[1] < 2:
        raise ValidationError(f"{path}: need at least one feature column and a response column")
    names = tuple(header[:-1]) if header else None
    return Dataset(values[:, :-1], values[:, -1], Task(task), names)


def write_dataset(path, data: Dataset) -> None:
    p = data.n_features
    header = list(data.feature_names) if data.feature_names else [f"x{j + 1}" for j in range(p)]
    write_table(path, np.column_stack([data.features, data.responses]), header + ["y"])


def read_features(path, n_features: int | None = None) -> np.ndarray:
    X, _ = read_table(path)
    if n_features is not None and X.shape[1] != n_features:
        raise ValidationError(
            f"{path}: model expects p={n_features} feature columns, data has {X.shape[1]}"
        )
    return X


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dump_json(obj))


@dataclass
class ModelFile:
    """Everything needed to reload a trained network and audit how it was fit."""

    architecture: NetworkArchitecture
    params: NetworkParameters
    penalty: PenaltyConfig
    training: dict = field(default_factory=dict)
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def selected_features(self) -> tuple[int, ...]:
        return selected_columns(self.params.first_layer)

    @classmethod
    def from_fit(cls, result: FitResult, seed: int | None = None) -> "ModelFile":
        training = {
            "seed": seed,
            "n_iters": result.n_iters,
            "converged": result.converged,
            "final_objective": result.objective,
        }
        return cls(result.architecture, result.params, result.penalty, training,
                   result.input_shift, result.input_scale)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.architecture.n_features:
            raise ValidationError(
                f"model expects p={self.architecture.n_features} features, got "
                f"{X.shape[1] if X.ndim == 2 else X.shape}"
            )
        if self.input_shift is not None:
            X = (X - self.input_shift) / self.input_scale
        return predict(self.params, self.architecture, X)

    def to_dict(self) -> dict:
        pre = None
        if self.input_shift is not None:
            pre = {"shift": self.input_shift.tolist(), "scale": self.input_scale.tolist()}
        return {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "architecture": self.architecture.to_dict(),
            "parameters": self.params.to_dict(),
            "penalty": self.penalty.to_dict(),
            "preprocessing": pre,
            "training": self.training,
            "selected_features": list(self.selected_features),
        }

    @classmethod
    def from_dict(cls, d) -> "ModelFile":
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a {MODEL_FORMAT} file (format={d.get('format')!r})")
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValidationError(
                f"unsupported model format version {d.get('format_version')!r}; "
                f"this build reads version {MODEL_FORMAT_VERSION}"
            )
        arch = NetworkArchitecture.from_dict(d["architecture"])
        params = NetworkParameters.from_dict(d["parameters"])
        params.check(arch)
        pre = d.get("preprocessing")
        shift = scale = None
        if pre is not None:
            shift = np.asarray(pre["shift"], dtype=float)
            scale = np.asarray(pre["scale"], dtype=float)
            if shift.shape != (arch.n_features,) or scale.shape != (arch.n_features,):
                raise ValidationError("preprocessing vectors do not match the input width")
        model = cls(arch, params, PenaltyConfig.from_dict(d["penalty"]),
                    dict(d.get("training", {})), shift, scale)
        listed = tuple(d.get("selected_features", model.selected_features))
        if listed != model.selected_features:
            raise ValidationError("selected_features disagrees with the stored weights")
        return model

    def dumps(self) -> str:
        return dump_json(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ModelFile":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path

"""Command line entry point: ``spinn {train,predict,cv,simulate,rates,sweep}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numeric or fit
failure, 4 file system error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .exceptions import FitError, NumericError, ShapeError, ValidationError
from .model_selection import HyperGrid, cross_validate
from .network import Activation, Dataset, NetworkArchitecture, Task, empirical_loss
from .optimizer import TrainConfig, fit
from .penalty import PenaltyConfig
from .simulation import (
    Axis,
    Scenario,
    ScenarioSpec,
    alpha_sweep,
    generate,
    injected_rate_result,
    noise_sd,
    rate_experiment,
    signal_sd,
    theory_lambda,
)

logger = logging.getLogger("spinn")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# defaults for the rate experiments, per axis
RATE_DEFAULTS = {
    Axis.N: {"p": 10, "n": 200, "lambda_scale": 0.05},
    Axis.P: {"p": 10, "n": 200, "lambda_scale": 0.2},
    Axis.M1: {"p": 50, "n": 200, "lambda_scale": 0.05},
}
RATE_TRAIN = {"n_restarts": 1, "rel_tol": 1e-8, "max_iters": 20000, "gamma_init": 0.125}


@dataclass
class RunConfig:
    """Everything a ``train`` or ``cv`` run needs.

    Exactly one of ``penalty`` (train) and ``grid`` (cv) is set.  Relative
    data paths are resolved against the directory holding the config file.
    """

    data: str
    out_dir: str
    task: Task = Task.REGRESSION
    activation: Activation = Activation.TANH
    hidden: tuple[int, ...] = (10,)
    penalty: PenaltyConfig | None = None
    grid: HyperGrid | None = None
    k: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    n_jobs: int | None = None

    KEYS = ("data", "out_dir", "task", "activation", "hidden", "penalty", "grid", "k",
            "train", "n_jobs")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path("."), mode: str = "train") -> "RunConfig":
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("data", "out_dir"):
            if key not in d:
                raise ValidationError(f"config is missing {key!r}")
        data = Path(d["data"])
        if not data.is_absolute():
            data = (base_dir / data).resolve()
        out_dir = Path(d["out_dir"])
        if not out_dir.is_absolute():
            out_dir = (base_dir / out_dir).resolve()
        try:
            task = Task(d.get("task", "regression"))
            activation = Activation(d.get("activation", "tanh"))
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        penalty = grid = None
        if mode == "train":
            penalty = PenaltyConfig.from_dict(d.get("penalty", {}))
        else:
            if "grid" not in d:
                raise ValidationError("a cv config needs a 'grid' section")
            grid = HyperGrid.from_dict(d["grid"])
        hidden = tuple(int(h) for h in d.get("hidden", (10,)))
        return cls(str(data), str(out_dir), task, activation, hidden, penalty, grid,
                   int(d.get("k", 3)), TrainConfig.from_dict(d.get("train", {})), d.get("n_jobs"))

    def to_dict(self) -> dict:
        out = {
            "data": self.data,
            "out_dir": self.out_dir,
            "task": self.task.value,
            "activation": self.activation.value,
            "train": self.train.to_dict(),
            "n_jobs": self.n_jobs,
        }
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
            out["k"] = self.k
        else:
            out["hidden"] = list(self.hidden)
            out["penalty"] = self.penalty.to_dict()
        return out


def _load_config(path, mode) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return RunConfig.from_dict(d, path.parent.resolve(), mode)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fit_metrics(result, data) -> dict:
    return {
        "final_objective": result.objective,
        "n_iters": result.n_iters,
        "converged": result.converged,
        "objective_trace": result.objective_trace,
        "n_selected_features": len(result.selected_features),
        "selected_features": list(result.selected_features),
        "n_active_hidden": result.n_active_hidden,
        "restart_objectives": result.restart_objectives,
        "training_loss": empirical_loss(
            result.params, result.architecture,
            Dataset(result.transform_inputs(data.features), data.responses, data.task),
        ),
    }


def cmd_train(args) -> int:
    cfg = _load_config(args.config, "train")
    if args.out:
        cfg.out_dir = str(Path(args.out).resolve())
    data = io.read_dataset(cfg.data, cfg.task)
    arch = NetworkArchitecture.from_hidden(data.n_features, cfg.hidden, cfg.task, cfg.activation)
    result = fit(arch, data, cfg.penalty, cfg.train)
    out = io.ensure_dir(cfg.out_dir)
    io.write_json(out / "config.json", cfg.to_dict())
    io.ModelFile.from_fit(result, cfg.train.seed).save(out / "model.json")
    io.write_json(out / "metrics.json", _fit_metrics(result, data))
    logger.info("objective %.6g after %d iterations; %d features selected",
                result.objective, result.n_iters, len(result.selected_features))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = io.ModelFile.load(args.model)
    X = io.read_features(args.data, model.architecture.n_features)
    pred = model.predict(X)
    io.write_table(args.out, pred, ["prediction"])
    return EXIT_OK


def _write_rows(path, rows) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (io.FLOAT_FMT % v if isinstance(v, float) else v) for k, v in row.items()})


def cmd_cv(args) -> int:
    cfg = _load_config(args.config, "cv")
    if args.out:
        cfg.out_dir = str(Path(args.out).resolve())
    data = io.read_dataset(cfg.data, cfg.task)
    report = cross_validate(data, cfg.grid, cfg.k, cfg.train, cfg.activation, n_jobs=cfg.n_jobs)
    out = io.ensure_dir(cfg.out_dir)
    io.write_json(out / "config.json", cfg.to_dict())
    _write_rows(out / "cv_report.csv", report.rows())
    io.ModelFile.from_fit(report.refit, report.best.seed).save(out / "model.json")
    best = report.best
    metrics = _fit_metrics(report.refit, data)
    metrics["best"] = {
        "lambda": best.lam,
        "alpha": best.alpha,
        "hidden": list(best.architecture.hidden),
        "mean_loss": best.mean_loss,
        "se": best.se,
        "seed": best.seed,
    }
    io.write_json(out / "metrics.json", metrics)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = ScenarioSpec(args.scenario, p=args.p, n_train=args.n, n_test=args.n_test,
                        snr=args.snr, seed=args.seed)
    train, test, _ = generate(spec)
    out = io.ensure_dir(args.out)
    io.write_json(out / "config.json", spec.to_dict())
    io.write_dataset(out / "train.csv", train)
    io.write_dataset(out / "test.csv", test)
    meta = {
        **spec.to_dict(),
        "sigma": noise_sd(spec.kind, spec.snr),
        "signal_sd": signal_sd(spec.kind),
        "relevant": list(spec.relevant),
        "stream": "SeedSequence(seed).spawn(2): train then test; X drawn before noise",
    }
    io.write_json(out / "metadata.json", meta)
    return EXIT_OK


def _rate_settings(args) -> dict:
    axis = Axis(args.axis)
    defaults = RATE_DEFAULTS[axis]
    train = {**RATE_TRAIN, "standardize": args.standardize}
    for key, flag in (("n_restarts", "restarts"), ("rel_tol", "rel_tol"),
                      ("max_iters", "max_iters"), ("gamma_init", "gamma_init")):
        if getattr(args, flag) is not None:
            train[key] = getattr(args, flag)
    return {
        "axis": axis.value,
        "grid": args.grid,
        "replicates": args.replicates,
        "scenario": Scenario(args.scenario).value,
        "p": args.p if args.p is not None else defaults["p"],
        "n": args.n if args.n is not None else defaults["n"],
        "n_test": args.n_test,
        "snr": args.snr,
        "seed": args.seed,
        "lambda0": args.lambda0,
        "alpha": args.alpha,
        "lambda": args.lam,
        "lambda_scale": (args.lambda_scale if args.lambda_scale is not None
                         else defaults["lambda_scale"]) if args.lam is None else None,
        "min_n_irrelevant": args.min_n_irrelevant,
        "inject_exponent": args.inject_exponent,
        "train": TrainConfig.from_dict({**train, "seed": args.seed}).to_dict(),
    }


def cmd_rates(args) -> int:
    s = _rate_settings(args)
    if s["inject_exponent"] is not None:
        if s["axis"] != Axis.N.value:
            raise ValidationError("--inject-exponent is only defined for --axis n")
        result = injected_rate_result(s["grid"], s["inject_exponent"])
    else:
        spec = ScenarioSpec(s["scenario"], p=s["p"], n_train=s["n"], n_test=s["n_test"],
                            snr=s["snr"], seed=s["seed"])
        penalty = PenaltyConfig(s["lambda0"], s["lambda"] or 0.0, s["alpha"])
        rule = None if s["lambda"] is not None else theory_lambda(s["lambda_scale"])
        result = rate_experiment(s["axis"], s["grid"], spec, penalty,
                                 TrainConfig.from_dict(s["train"]), s["replicates"],
                                 lambda_rule=rule, min_n_irrelevant=s["min_n_irrelevant"],
                                 n_jobs=args.jobs)
    out = io.ensure_dir(args.out)
    io.write_json(out / "config.json", s)
    _write_rows(out / "rates.csv", result.rows())
    io.write_json(out / "summary.json", result.summary())
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = ScenarioSpec(args.scenario, p=args.p, n_train=args.n, n_test=args.n_test,
                        snr=args.snr, seed=args.seed)
    train = TrainConfig(seed=args.seed, n_restarts=args.restarts, standardize=args.standardize)
    arch = NetworkArchitecture((spec.p, args.hidden, 1))
    cells = alpha_sweep(args.lasso, args.group, spec, train, arch, args.lambda0, n_jobs=args.jobs)
    out = io.ensure_dir(args.out)
    io.write_json(out / "config.json", {
        "scenario": spec.to_dict(), "lasso": args.lasso, "group": args.group,
        "hidden": args.hidden, "lambda0": args.lambda0, "train": train.to_dict(),
    })
    _write_rows(out / "sweep.csv", [
        {"lasso_weight": c.lasso_weight, "group_weight": c.group_weight, "mse": c.mse,
         "relevant_share": c.relevant_share, "irrelevant_share": c.irrelevant_share,
         "empty": c.empty}
        for c in cells
    ])
    return EXIT_OK


def _scenario_args(p, default_n, default_p):
    p.add_argument("--scenario", default="teacher", choices=[s.value for s in Scenario])
    p.add_argument("--n", type=int, default=default_n, help="training rows")
    p.add_argument("--p", type=int, default=default_p, help="number of features")
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--snr", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinn", description="Train and evaluate sparse-input neural networks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one penalized network")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's out_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="k-fold cross-validation and refit")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's out_dir")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="write synthetic train/test CSVs")
    _scenario_args(p, 200, 10)
    p.set_defaults(scenario="complex")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="excess loss along n, p or hidden width")
    p.add_argument("--axis", required=True, choices=[a.value for a in Axis])
    p.add_argument("--grid", type=_floats, required=True)
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--out", required=True)
    _scenario_args(p, None, None)
    p.add_argument("--lambda0", type=float, default=0.001)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, help="fixed penalty at every grid point")
    p.add_argument("--lambda-scale", type=float,
                   help="penalty scale * sqrt(log p log n / n) (default depends on --axis)")
    p.add_argument("--min-n-irrelevant", type=int, default=400)
    p.add_argument("--inject-exponent", type=float,
                   help="skip fitting; use excess loss (log n / n)^exponent to check the slope fit")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--gamma-init", type=float)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("sweep", help="lasso weight vs group weight grid")
    _scenario_args(p, 250, 50)
    p.set_defaults(scenario="complex")
    p.add_argument("--lasso", type=_floats, default=[0.0, 0.01, 0.02, 0.04])
    p.add_argument("--group", type=_floats, default=[0.0, 0.01, 0.02, 0.04])
    p.add_argument("--hidden", type=int, default=10)
    p.add_argument("--lambda0", type=float, default=0.001)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ShapeError, ValueError) as exc:
        print(f"spinn: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, FitError, FloatingPointError) as exc:
        print(f"spinn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"spinn: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

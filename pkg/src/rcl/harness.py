"""Experiment configuration, dispatch and report files.

A run directory holds::

    metrics.csv            after_task, eval_task, accuracy (lower-triangular, long form)
    trials.csv             one row per child network evaluated
    summary.json           averages, parameter counts, timings, accuracy matrix
    effective-config.yaml  every config key with defaults filled in

Timing lives only in ``summary.json`` so the CSV files are byte-reproducible.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional, Sequence, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .baselines import BaselineConfig, run_fixed_expansion, run_single_network
from .datasets import TaskSequenceSpec, build_tasks
from .trainer import ContinualResult, RewardRecord, TrainerConfig, run_continual, write_trials

log = logging.getLogger(__name__)

DEFAULT_ALPHA = {"permutations": 0.0003, "mix": 0.0002, "synthetic": 0.0003}


class ConfigError(ValueError):
    pass


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal["rcl", "single-network", "fixed-expansion"]
    dataset: Literal["permutations", "mix", "synthetic"]
    seed: int = Field(ge=0)

    tasks: int = Field(10, ge=1)
    data_dir: str = "data/mnist"
    train_size: int = Field(55000, ge=1)
    val_size: int = Field(5000, ge=1)
    test_size: int = Field(10000, ge=1)
    angles: Optional[list[float]] = None
    synthetic_dim: int = Field(20, ge=2)
    synthetic_classes: int = Field(10, ge=2)
    synthetic_spread: float = Field(0.05, ge=0)

    layers: list[int] = [784, 312, 128, 10]
    lr: float = Field(0.001, gt=0)
    epochs: int = Field(15, ge=1)
    batch_size: int = Field(32, ge=1)

    alpha: Optional[float] = Field(None, ge=0)
    search_space: Union[int, list[int]] = 30
    controller_epochs: int = Field(10, ge=1)
    children: int = Field(2, ge=1)
    controller_lr: float = Field(0.001, gt=0)
    critic_lr: float = Field(0.005, gt=0)
    controller_hidden: int = Field(100, ge=1)
    controller_layers: int = Field(2, ge=1)

    expansion: Optional[list[int]] = None
    workers: int = Field(1, ge=1)
    output_dir: str = "runs/latest"

    @field_validator("layers", mode="before")
    @classmethod
    def _layers(cls, v):
        if isinstance(v, str):
            v = [int(s) for s in v.replace(",", "-").split("-") if s.strip()]
        return v

    @field_validator("layers")
    @classmethod
    def _layers_ok(cls, v):
        if len(v) < 3 or min(v) < 1:
            raise ValueError("need input, >= 1 hidden and output sizes, all positive")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        depth = len(self.layers) - 2
        spaces = self.search_space if isinstance(self.search_space, list) else [self.search_space]
        if min(spaces) < 1:
            raise ValueError("search_space entries must be >= 1")
        if isinstance(self.search_space, list) and len(spaces) != depth:
            raise ValueError(f"search_space has {len(spaces)} entries for {depth} hidden layers")
        if self.expansion is not None and (len(self.expansion) != depth or min(self.expansion) < 0):
            raise ValueError(f"expansion needs {depth} non-negative counts")
        return self

    # resolved views -------------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.layers) - 2

    @property
    def spaces(self) -> tuple[int, ...]:
        if isinstance(self.search_space, list):
            return tuple(self.search_space)
        return (self.search_space,) * self.depth

    @property
    def resolved_alpha(self) -> float:
        return DEFAULT_ALPHA[self.dataset] if self.alpha is None else self.alpha

    @property
    def resolved_expansion(self) -> tuple[int, ...]:
        if self.expansion is not None:
            return tuple(self.expansion)
        return tuple(n // 2 for n in self.spaces)

    def effective(self) -> dict[str, Any]:
        d = self.model_dump()
        d["alpha"] = self.resolved_alpha
        d["expansion"] = list(self.resolved_expansion)
        return d

    def sequence_spec(self) -> TaskSequenceSpec:
        return TaskSequenceSpec(
            kind=self.dataset, n_tasks=self.tasks, seed=self.seed, train_size=self.train_size,
            val_size=self.val_size, test_size=self.test_size,
            angles=tuple(self.angles) if self.angles is not None else None,
            dim=self.synthetic_dim, classes=self.synthetic_classes, spread=self.synthetic_spread)

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            alpha=self.resolved_alpha, controller_epochs=self.controller_epochs,
            children=self.children, controller_lr=self.controller_lr, critic_lr=self.critic_lr,
            task_lr=self.lr, task_epochs=self.epochs, task_batch=self.batch_size,
            spaces=self.spaces, controller_hidden=self.controller_hidden,
            controller_layers=self.controller_layers, workers=self.workers)

    def baseline_config(self) -> BaselineConfig:
        kind = "fixed-expansion" if self.method == "fixed-expansion" else "single-network"
        return BaselineConfig(kind=kind, expansion=self.resolved_expansion,
                              task_epochs=self.epochs, task_lr=self.lr, task_batch=self.batch_size)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<config>"
        msg = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        lines.append(f"{key}: {msg}")
    return "; ".join(lines)


def parse_config(source: Union[str, Path, dict, None] = None,
                 overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    """Build a validated config from a YAML file (or mapping) plus overrides."""
    data: dict[str, Any] = {}
    if isinstance(source, dict):
        data.update(source)
    elif source is not None:
        path = Path(source)
        try:
            loaded = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a flat key-value mapping")
        data.update(loaded)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.effective(), sort_keys=True))


@dataclass
class MetricsReport:
    method: str
    accuracy: list[list[float]]
    param_counts: list[int]
    seconds: list[float]
    trials: list[RewardRecord] = field(default_factory=list, repr=False)
    config: Optional[ExperimentConfig] = field(default=None, repr=False)

    @property
    def average_accuracy(self) -> float:
        last = self.accuracy[-1]
        return sum(last) / len(last)

    @property
    def final_params(self) -> int:
        return self.param_counts[-1]

    @property
    def total_seconds(self) -> float:
        return float(sum(self.seconds))

    def summary(self) -> dict[str, Any]:
        cfg = self.config
        return {
            "method": self.method,
            "dataset": cfg.dataset if cfg else None,
            "seed": cfg.seed if cfg else None,
            "alpha": cfg.resolved_alpha if cfg else None,
            "average_accuracy": self.average_accuracy,
            "final_params": self.final_params,
            "param_counts": self.param_counts,
            "accuracy_matrix": self.accuracy,
            "seconds": self.seconds,
            "total_seconds": self.total_seconds,
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "after_task", "eval_task", "accuracy"])
            for i, row in enumerate(self.accuracy, start=1):
                for j, a in enumerate(row, start=1):
                    w.writerow([self.method, i, j, repr(a)])
        write_trials(self.trials, out / "trials.csv", self.method)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        if self.config is not None:
            dump_config(self.config, out / "effective-config.yaml")
        return out


def execute(cfg: ExperimentConfig, tasks=None, on_task=None) -> ContinualResult:
    """Train the configured method; ``on_task(t, net)`` fires after each task."""
    if tasks is None:
        tasks = build_tasks(cfg.sequence_spec(), cfg.data_dir)
    if tasks[0].n_features != cfg.layers[0]:
        raise ConfigError(f"layers[0]={cfg.layers[0]} but the data has {tasks[0].n_features} features")
    if cfg.method == "rcl":
        return run_continual(tasks, cfg.layers, cfg.trainer_config(), cfg.seed, on_task)
    if cfg.method == "single-network":
        return run_single_network(tasks, cfg.layers, cfg.baseline_config(), cfg.seed, on_task)
    return run_fixed_expansion(tasks, cfg.layers, cfg.baseline_config(), cfg.seed, on_task)


def run(cfg: ExperimentConfig, tasks=None, write: bool = True, on_task=None) -> MetricsReport:
    """Run one experiment and (by default) write its report into ``cfg.output_dir``."""
    log.info("running %s on %s (%d tasks, seed %d)", cfg.method, cfg.dataset, cfg.tasks, cfg.seed)
    res = execute(cfg, tasks, on_task)
    report = MetricsReport(cfg.method, res.accuracy, res.param_counts, res.seconds,
                           res.trials, cfg)
    if write:
        report.write(cfg.output_dir)
    return report


def sweep(cfg: ExperimentConfig, param: Literal["alpha", "seed"], values: Sequence,
          out_dir=None) -> list[MetricsReport]:
    """Repeat a run over values of ``alpha`` or ``seed``; writes ``sweep.csv``."""
    if param not in ("alpha", "seed"):
        raise ConfigError(f"cannot sweep over {param!r}; choose alpha or seed")
    root = Path(out_dir or cfg.output_dir)
    reports = []
    tasks = None
    for v in values:
        sub = cfg.model_copy(update={param: v, "output_dir": str(root / f"{param}={v}")})
        sub = ExperimentConfig(**sub.model_dump())  # re-validate
        if param == "alpha" and tasks is None:
            tasks = build_tasks(sub.sequence_spec(), sub.data_dir)
        reports.append(run(sub, tasks if param == "alpha" else None))
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param, "method", "average_accuracy", "final_params"])
        for v, r in zip(values, reports):
            w.writerow([v, r.method, repr(r.average_accuracy), r.final_params])
    return reports


SUMMARY_COLUMNS = ["method", "run", "average_accuracy", "final_params", "total_seconds"]


def load_summary(run_dir) -> dict[str, Any]:
    path = Path(run_dir) / "summary.json"
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    data["run"] = str(run_dir)
    return data


def report_summary(summaries: Sequence[dict[str, Any]], out_dir=None) -> list[dict[str, Any]]:
    """Comparison rows sorted by average accuracy (descending, stable)."""
    if not summaries:
        raise ConfigError("need at least one report")
    rows = [{k: s.get(k) for k in SUMMARY_COLUMNS} for s in summaries]
    rows.sort(key=lambda r: -r["average_accuracy"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        (out / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows

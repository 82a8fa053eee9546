"""Config-driven experiment: data, both training phases, evaluation, persistence."""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from simdis import metrics as M
from simdis.errors import ConfigurationError
from simdis.losses import Strategy
from simdis.synth import Dataset, SynthSpec, generate
from simdis.trainer import ModelParams, TrainConfig, TrainTrace, predict, train_contrastive, train_probe

_SPLIT_STREAM = 7


@dataclass
class ExperimentConfig:
    synth: SynthSpec | None = field(default_factory=SynthSpec)
    dataset: str | None = None
    num_classes: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"
    metrics_k: tuple[int, ...] = (5, 8)
    test_fraction: float = 0.2

    def to_dict(self) -> dict:
        train = dataclasses.asdict(self.train)
        train["strategy"] = self.train.strategy.to_dict()
        train["hidden_dims"] = list(self.train.hidden_dims)
        return {
            "synth": None if self.synth is None else dataclasses.asdict(self.synth),
            "dataset": self.dataset,
            "num_classes": self.num_classes,
            "train": train,
            "output_dir": self.output_dir,
            "metrics_k": list(self.metrics_k),
            "test_fraction": self.test_fraction,
        }


class ConfigError(ConfigurationError):
    """Configuration problem anchored to a line of the source text."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _coerce(cls, data: dict, text: str, source: str, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be an object", _line_of(text, section), source)
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}", _line_of(text, key), source)
        default = getattr(cls(), key) if key != "strategy" else None
        try:
            if key == "strategy":
                value = Strategy.parse(value) if isinstance(value, str) else Strategy.from_dict(value)
            elif key == "hidden_dims":
                value = tuple(int(v) for v in value)
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError("expected true/false")
            elif isinstance(default, int):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError("expected an integer")
            elif isinstance(default, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError("expected a number")
                value = float(value)
        except (TypeError, ValueError, KeyError, ConfigurationError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}", _line_of(text, key), source)
        kwargs[key] = value
    obj = cls(**kwargs)
    try:
        obj.validate()
    except ConfigurationError as exc:
        raise ConfigError(f"{section}: {exc}", _line_of(text, section), source) from None
    return obj


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", 1, source)
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {key}", _line_of(text, key), source)
    has_synth = raw.get("synth") is not None
    has_data = raw.get("dataset") is not None
    if has_synth == has_data:
        raise ConfigError("give exactly one of 'synth' or 'dataset'", 1, source)
    cfg = ExperimentConfig(synth=None)
    if has_synth:
        cfg.synth = _coerce(SynthSpec, raw["synth"], text, source, "synth")
    else:
        if not isinstance(raw["dataset"], str):
            raise ConfigError("dataset must be a path", _line_of(text, "dataset"), source)
        cfg.dataset = raw["dataset"]
        cfg.num_classes = raw.get("num_classes")
    if "train" in raw:
        cfg.train = _coerce(TrainConfig, raw["train"], text, source, "train")
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigError("output_dir must be a path", _line_of(text, "output_dir"), source)
        cfg.output_dir = raw["output_dir"]
    if "metrics_k" in raw:
        ks = raw["metrics_k"]
        if not isinstance(ks, list) or not all(isinstance(k, int) and k >= 1 for k in ks):
            raise ConfigError("metrics_k must be a list of positive integers", _line_of(text, "metrics_k"), source)
        cfg.metrics_k = tuple(ks)
    if "test_fraction" in raw:
        tf = raw["test_fraction"]
        if not isinstance(tf, (int, float)) or not 0 < tf < 1:
            raise ConfigError("test_fraction must lie in (0, 1)", _line_of(text, "test_fraction"), source)
        cfg.test_fraction = float(tf)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path))
    return parse_config(text, str(path))


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, bool]:
    """Return the dataset and whether it was generated."""
    if cfg.synth is not None:
        return generate(cfg.synth), True
    return Dataset.from_jsonl(cfg.dataset, cfg.num_classes), False


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    n = len(dataset)
    perm = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, _SPLIT_STREAM]).permutation(n)
    cut = max(1, min(n - 1, int(round(n * (1 - test_fraction)))))
    return dataset.subset(np.sort(perm[:cut])), dataset.subset(np.sort(perm[cut:]))


@dataclass
class RunResult:
    params: ModelParams
    trace: TrainTrace
    metrics: dict


def run_experiment(dataset: Dataset, cfg: ExperimentConfig) -> RunResult:
    train_set, test_set = split(dataset, cfg.test_fraction, cfg.train.seed)
    encoder, trace = train_contrastive(train_set, cfg.train)
    model, trace = train_probe(train_set, encoder, cfg.train, trace)
    pred = M.Predictions(predict(model, test_set.features), test_set.labels)
    trace.metrics = M.evaluate_all(pred, cfg.metrics_k)
    return RunResult(model, trace, trace.metrics)


def checkpoint_json(result: RunResult, cfg: ExperimentConfig) -> str:
    return json.dumps(
        {
            "config": cfg.to_dict(),
            "seed": cfg.train.seed,
            "params": {k: v.tolist() for k, v in result.params.named().items()},
        },
        sort_keys=True,
    )


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    d = json.loads(Path(path).read_text())
    return ModelParams.from_named(d["params"]), d["config"]


def write_outputs(out: Path, result: RunResult, cfg: ExperimentConfig, dataset: Dataset | None):
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(M.to_json(result.metrics))
    (out / "metrics.csv").write_text(M.to_csv(result.metrics))
    (out / "trace.csv").write_text(result.trace.to_csv())
    (out / "checkpoint.json").write_text(checkpoint_json(result, cfg))
    if dataset is not None:
        dataset.to_jsonl(out / "dataset.jsonl")


def output_dir_in_use(path: Path) -> bool:
    return path.exists() and (not path.is_dir() or any(os.scandir(path)))


def seed_sweep(cfg: ExperimentConfig, strategies, seeds) -> dict[str, list[RunResult]]:
    """Run every strategy under every seed; the seed drives both data and training, as ``run --seed`` does."""
    out: dict[str, list[RunResult]] = {s.name: [] for s in strategies}
    for seed in seeds:
        synth = None if cfg.synth is None else dataclasses.replace(cfg.synth, seed=seed)
        base = dataclasses.replace(cfg, synth=synth, train=dataclasses.replace(cfg.train, seed=seed))
        dataset, _ = load_data(base)
        for s in strategies:
            run_cfg = dataclasses.replace(base, train=dataclasses.replace(base.train, strategy=s))
            out[s.name].append(run_experiment(dataset, run_cfg))
    return out

"""Experiment configuration: JSON parsing, validation, and canonicalization.

Validation errors name the offending field with a dotted path so a bad
config fails loudly and precisely. to_canonical_dict fills every default,
giving a stable round-trippable form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from .diffnet import ACTIVATIONS, NetworkSpec
from .errors import ConfigurationError
from .scoring import DEFAULT_ENTROPY_FLOOR, METRICS
from .unlearn import METHODS, UnlearnConfig

DEFAULT_EXPANSION_KS = (0, 10, 50)


def _require(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigurationError(f"{path}.{key}: missing required field")
    return block[key]


def _positive(value, path: str) -> float:
    value = _number(value, path)
    if value <= 0:
        raise ConfigurationError(f"{path}: must be positive, got {value}")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _positive_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigurationError(f"{path}: expected a positive integer, got {value!r}")
    return value


@dataclass(frozen=True)
class DatasetConfig:
    kind: str                      # "blobs" | "csv" | "idx"
    n_per_class: int = 0
    centers: tuple = ()
    std: float = 0.0
    path: str = ""
    label_column: str = ""
    images: str = ""
    labels: str = ""
    standardize: bool = False

    @staticmethod
    def from_dict(block: dict, path: str = "dataset") -> "DatasetConfig":
        kind = _require(block, "type", path)
        standardize = bool(block.get("standardize", False))
        if kind == "blobs":
            centers = _require(block, "centers", path)
            if (
                not isinstance(centers, list)
                or len(centers) < 2
                or any(not isinstance(c, list) for c in centers)
            ):
                raise ConfigurationError(
                    f"{path}.centers: expected a list of at least 2 coordinate lists"
                )
            return DatasetConfig(
                kind="blobs",
                n_per_class=_positive_int(
                    _require(block, "n_per_class", path), f"{path}.n_per_class"
                ),
                centers=tuple(tuple(float(v) for v in c) for c in centers),
                std=_positive(_require(block, "std", path), f"{path}.std"),
                standardize=standardize,
            )
        if kind == "csv":
            return DatasetConfig(
                kind="csv",
                path=str(_require(block, "path", path)),
                label_column=str(_require(block, "label_column", path)),
                standardize=standardize,
            )
        if kind == "idx":
            return DatasetConfig(
                kind="idx",
                images=str(_require(block, "images", path)),
                labels=str(_require(block, "labels", path)),
                standardize=standardize,
            )
        raise ConfigurationError(
            f"{path}.type: expected 'blobs', 'csv', or 'idx', got {kind!r}"
        )

    def build(self, seed: int) -> data_mod.LabeledDataset:
        if self.kind == "blobs":
            ds = data_mod.make_blobs(
                self.n_per_class, np.asarray(self.centers), self.std, seed
            )
        elif self.kind == "csv":
            ds = data_mod.load_csv(self.path, self.label_column)
        else:
            ds = data_mod.load_idx(self.images, self.labels)
        return data_mod.standardize_features(ds) if self.standardize else ds

    def to_dict(self) -> dict:
        if self.kind == "blobs":
            return {
                "type": "blobs",
                "n_per_class": self.n_per_class,
                "centers": [list(c) for c in self.centers],
                "std": self.std,
                "standardize": self.standardize,
            }
        if self.kind == "csv":
            return {
                "type": "csv", "path": self.path,
                "label_column": self.label_column, "standardize": self.standardize,
            }
        return {
            "type": "idx", "images": self.images, "labels": self.labels,
            "standardize": self.standardize,
        }


@dataclass(frozen=True)
class TrainingConfig:
    lr: float
    epochs: int
    batch_size: int

    @staticmethod
    def from_dict(block: dict, path: str = "training") -> "TrainingConfig":
        return TrainingConfig(
            lr=_positive(_require(block, "lr", path), f"{path}.lr"),
            epochs=_positive_int(_require(block, "epochs", path), f"{path}.epochs"),
            batch_size=_positive_int(
                block.get("batch_size", 32), f"{path}.batch_size"
            ),
        )

    def to_dict(self) -> dict:
        return {"lr": self.lr, "epochs": self.epochs, "batch_size": self.batch_size}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    network: NetworkSpec
    training: TrainingConfig
    test_fraction: float
    metrics: tuple[str, ...]
    methods: tuple[UnlearnConfig, ...]
    top_k_each_end: int = 5
    expansion_ks: tuple[int, ...] = DEFAULT_EXPANSION_KS
    epsilon: float = 0.05
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "out"
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR
    msksd_global: bool = False
    mia_calibrate_on_original: bool = False

    @staticmethod
    def from_dict(cfg: dict) -> "ExperimentConfig":
        if not isinstance(cfg, dict):
            raise ConfigurationError("config root must be a JSON object")
        dataset = DatasetConfig.from_dict(_require(cfg, "dataset", "config"))
        net_block = _require(cfg, "network", "config")
        sizes = _require(net_block, "layer_sizes", "network")
        if not isinstance(sizes, list) or any(
            isinstance(s, bool) or not isinstance(s, int) for s in sizes
        ):
            raise ConfigurationError("network.layer_sizes: expected a list of integers")
        activation = net_block.get("activation", "relu")
        if activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"network.activation: expected one of {ACTIVATIONS}, got {activation!r}"
            )
        try:
            network = NetworkSpec(tuple(sizes), activation)
        except ConfigurationError as exc:
            raise ConfigurationError(f"network.layer_sizes: {exc}") from exc
        training = TrainingConfig.from_dict(_require(cfg, "training", "config"))

        test_fraction = _number(
            _require(cfg, "test_fraction", "config"), "test_fraction"
        )
        if not 0 < test_fraction < 1:
            raise ConfigurationError(
                f"test_fraction: must lie in (0, 1), got {test_fraction}"
            )

        metrics = _require(cfg, "metrics", "config")
        if not isinstance(metrics, list) or not metrics:
            raise ConfigurationError("metrics: expected a nonempty list")
        for m in metrics:
            if m not in METRICS:
                raise ConfigurationError(
                    f"metrics: unknown metric {m!r}; choose from {METRICS}"
                )

        methods_block = _require(cfg, "methods", "config")
        if not isinstance(methods_block, list) or not methods_block:
            raise ConfigurationError("methods: expected a nonempty list")
        methods = []
        for i, mb in enumerate(methods_block):
            if not isinstance(mb, dict) or "method" not in mb:
                raise ConfigurationError(
                    f"methods[{i}]: expected an object with a 'method' field"
                )
            name = mb["method"]
            if name not in METHODS:
                raise ConfigurationError(
                    f"methods[{i}].method: unknown method {name!r}; "
                    f"choose from {METHODS}"
                )
            known = {"method", "lr", "epochs", "overfit_threshold", "alpha",
                     "batch_size", "seed"}
            extra = set(mb) - known
            if extra:
                raise ConfigurationError(
                    f"methods[{i}]: unknown fields {sorted(extra)}"
                )
            try:
                methods.append(UnlearnConfig(**mb))
            except ConfigurationError as exc:
                raise ConfigurationError(f"methods[{i}]: {exc}") from exc

        seeds = cfg.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or any(
            isinstance(s, bool) or not isinstance(s, int) for s in seeds
        ):
            raise ConfigurationError("seeds: expected a nonempty list of integers")

        expansion_ks = cfg.get("expansion_ks", list(DEFAULT_EXPANSION_KS))
        if (
            not isinstance(expansion_ks, list)
            or not expansion_ks
            or any(isinstance(k, bool) or not isinstance(k, int) or k < 0
                   for k in expansion_ks)
            or sorted(expansion_ks) != expansion_ks
        ):
            raise ConfigurationError(
                "expansion_ks: expected a nonempty ascending list of integers >= 0"
            )

        epsilon = _number(cfg.get("epsilon", 0.05), "epsilon")
        if epsilon < 0:
            raise ConfigurationError(f"epsilon: must be >= 0, got {epsilon}")

        entropy_floor = _positive(
            cfg.get("entropy_floor", DEFAULT_ENTROPY_FLOOR), "entropy_floor"
        )

        known_top = {"dataset", "network", "training", "test_fraction", "metrics",
                     "methods", "top_k_each_end", "expansion_ks", "epsilon", "seeds",
                     "output_dir", "entropy_floor", "msksd_global",
                     "mia_calibrate_on_original"}
        extra = set(cfg) - known_top
        if extra:
            raise ConfigurationError(f"config: unknown fields {sorted(extra)}")

        return ExperimentConfig(
            dataset=dataset,
            network=network,
            training=training,
            test_fraction=test_fraction,
            metrics=tuple(metrics),
            methods=tuple(methods),
            top_k_each_end=_positive_int(
                cfg.get("top_k_each_end", 5), "top_k_each_end"
            ),
            expansion_ks=tuple(expansion_ks),
            epsilon=epsilon,
            seeds=tuple(seeds),
            output_dir=str(cfg.get("output_dir", "out")),
            entropy_floor=entropy_floor,
            msksd_global=bool(cfg.get("msksd_global", False)),
            mia_calibrate_on_original=bool(
                cfg.get("mia_calibrate_on_original", False)
            ),
        )

    def to_canonical_dict(self) -> dict:
        methods = []
        for m in self.methods:
            entry = {"method": m.method, "seed": m.seed}
            if m.method in ("grad_ascent", "fine_tune", "retrain"):
                entry["lr"] = m.lr
                entry["epochs"] = m.epochs
            if m.method == "grad_ascent":
                entry["overfit_threshold"] = m.overfit_threshold
            if m.method == "fisher":
                entry["alpha"] = m.alpha
            if m.method in ("fine_tune", "retrain"):
                entry["batch_size"] = m.batch_size
            methods.append(entry)
        return {
            "dataset": self.dataset.to_dict(),
            "network": {
                "layer_sizes": list(self.network.layer_sizes),
                "activation": self.network.activation,
            },
            "training": self.training.to_dict(),
            "test_fraction": self.test_fraction,
            "metrics": list(self.metrics),
            "methods": methods,
            "top_k_each_end": self.top_k_each_end,
            "expansion_ks": list(self.expansion_ks),
            "epsilon": self.epsilon,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "entropy_floor": self.entropy_floor,
            "msksd_global": self.msksd_global,
            "mia_calibrate_on_original": self.mia_calibrate_on_original,
        }


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_canonical_dict(), indent=2, sort_keys=True) + "\n"

"""Pipeline configuration: nested dataclasses, JSON loading, validation.

The config file is a single JSON document with a versioned schema. Unknown
keys are errors, and every numeric field is validated up front so a bad
config fails before any work starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

COMPOSE_MODES = ("argmax-strip", "prob-sum")
DECOMPOSITION_MODES = ("fixed", "elbow")
FEATURE_BACKENDS = ("raw", "onnx")
CONFIG_VERSION = 1


@dataclass(frozen=True)
class SliceSelectionConfig:
    levels: int = 8
    offset: tuple[int, int] = (0, 1)
    symmetric: bool = True
    top_k: int = 20

    def validate(self) -> None:
        if self.levels < 2:
            raise ConfigError(f"slice_selection.levels must be >= 2, got {self.levels}")
        if self.offset == (0, 0):
            raise ConfigError("slice_selection.offset must be non-zero")
        if len(self.offset) != 2:
            raise ConfigError(f"slice_selection.offset must have 2 entries, got {self.offset}")
        if self.top_k < 1:
            raise ConfigError(f"slice_selection.top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class FeatureConfig:
    backend: str = "raw"
    side: int = 16  # raw backend: slices are resized to side x side
    model_path: str | None = None  # onnx backend
    sidecar_path: str | None = None

    def validate(self) -> None:
        if self.backend not in FEATURE_BACKENDS:
            raise ConfigError(
                f"features.backend must be one of {FEATURE_BACKENDS}, got {self.backend!r}"
            )
        if self.backend == "raw" and self.side < 2:
            raise ConfigError(f"features.side must be >= 2, got {self.side}")
        if self.backend == "onnx" and not self.model_path:
            raise ConfigError("features.model_path is required for the onnx backend")


@dataclass(frozen=True)
class PcaConfig:
    variance_threshold: float = 0.95

    def validate(self) -> None:
        if not 0.0 < self.variance_threshold <= 1.0:
            raise ConfigError(
                f"pca.variance_threshold must be in (0, 1], got {self.variance_threshold}"
            )


@dataclass(frozen=True)
class DecompositionConfig:
    mode: str = "fixed"
    k: int = 2
    k_min: int = 2
    k_max: int = 6
    n_init: int = 10

    def validate(self) -> None:
        if self.mode not in DECOMPOSITION_MODES:
            raise ConfigError(
                f"decomposition.mode must be one of {DECOMPOSITION_MODES}, got {self.mode!r}"
            )
        if self.mode == "fixed" and self.k < 1:
            raise ConfigError(f"decomposition.k must be >= 1, got {self.k}")
        if self.mode == "elbow":
            if self.k_min < 1:
                raise ConfigError(f"decomposition.k_min must be >= 1, got {self.k_min}")
            if self.k_max - self.k_min + 1 < 3:
                raise ConfigError(
                    f"decomposition elbow range [{self.k_min}, {self.k_max}] needs >= 3 values"
                )
        if self.n_init < 1:
            raise ConfigError(f"decomposition.n_init must be >= 1, got {self.n_init}")


@dataclass(frozen=True)
class TrainingConfig:
    learning_rates: tuple[float, ...] = (0.01, 0.001)
    epochs: int = 200
    batch_size: int = 64
    hidden_dim: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2

    def validate(self) -> None:
        if not self.learning_rates:
            raise ConfigError("training.learning_rates must be non-empty")
        if any(lr <= 0 for lr in self.learning_rates):
            raise ConfigError(f"training.learning_rates must be > 0, got {self.learning_rates}")
        if self.epochs < 1:
            raise ConfigError(f"training.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"training.batch_size must be >= 1, got {self.batch_size}")
        if self.hidden_dim < 0:
            raise ConfigError(f"training.hidden_dim must be >= 0, got {self.hidden_dim}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("training Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError(f"training.eps must be > 0, got {self.eps}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(
                f"training.validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )


@dataclass(frozen=True)
class SplitConfig:
    train_frac: float = 0.8

    def validate(self) -> None:
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError(f"split.train_frac must be in (0, 1), got {self.train_frac}")


@dataclass(frozen=True)
class PipelineConfig:
    version: int = CONFIG_VERSION
    classes: tuple[str, ...] = ("CN", "MCI", "AD")
    seed: int = 0
    compose_mode: str = "argmax-strip"
    slice_selection: SliceSelectionConfig = field(default_factory=SliceSelectionConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    pca: PcaConfig = field(default_factory=PcaConfig)
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    split: SplitConfig = field(default_factory=SplitConfig)

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if len(self.classes) < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError(f"duplicate class names in {self.classes}")
        if self.compose_mode not in COMPOSE_MODES:
            raise ConfigError(
                f"compose_mode must be one of {COMPOSE_MODES}, got {self.compose_mode!r}"
            )
        self.slice_selection.validate()
        self.features.validate()
        self.pca.validate()
        self.decomposition.validate()
        self.training.validate()
        self.split.validate()


_SECTION_TYPES = {
    "slice_selection": SliceSelectionConfig,
    "features": FeatureConfig,
    "pca": PcaConfig,
    "decomposition": DecompositionConfig,
    "training": TrainingConfig,
    "split": SplitConfig,
}

_TUPLE_FIELDS = {"offset", "learning_rates", "classes"}


def _build_section(cls, obj: dict, section: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config key(s) in {section}: {sorted(unknown)}")
    kwargs = {
        key: tuple(value) if key in _TUPLE_FIELDS and isinstance(value, list) else value
        for key, value in obj.items()
    }
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {section} section: {exc}") from exc


def config_from_dict(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")

    kwargs: dict = {}
    for key, value in obj.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a JSON object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        cfg = PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(obj)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "version": cfg.version,
        "classes": list(cfg.classes),
        "seed": cfg.seed,
        "compose_mode": cfg.compose_mode,
        "slice_selection": {
            "levels": cfg.slice_selection.levels,
            "offset": list(cfg.slice_selection.offset),
            "symmetric": cfg.slice_selection.symmetric,
            "top_k": cfg.slice_selection.top_k,
        },
        "features": {
            "backend": cfg.features.backend,
            "side": cfg.features.side,
            "model_path": cfg.features.model_path,
            "sidecar_path": cfg.features.sidecar_path,
        },
        "pca": {"variance_threshold": cfg.pca.variance_threshold},
        "decomposition": {
            "mode": cfg.decomposition.mode,
            "k": cfg.decomposition.k,
            "k_min": cfg.decomposition.k_min,
            "k_max": cfg.decomposition.k_max,
            "n_init": cfg.decomposition.n_init,
        },
        "training": {
            "learning_rates": list(cfg.training.learning_rates),
            "epochs": cfg.training.epochs,
            "batch_size": cfg.training.batch_size,
            "hidden_dim": cfg.training.hidden_dim,
            "beta1": cfg.training.beta1,
            "beta2": cfg.training.beta2,
            "eps": cfg.training.eps,
            "validation_fraction": cfg.training.validation_fraction,
        },
        "split": {"train_frac": cfg.split.train_frac},
    }


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import toml

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from core.dataset import SplitSpec
from core.errors import ConfigError, ShapeError
from core.model import CrnnConfig
from core.trainer import TrainConfig
from utils.fileio import atomic_write_text
from utils.resource_path import resource_path

logger = logging.getLogger(__name__)

PRESETS = ("ims", "cwru", "desk")
SECTIONS = ("model", "train", "split", "data", "dataset")
DERIVED_MODEL_KEYS = ("in_channels", "window_len", "num_classes")


@dataclass
class DataPaths:
    archive: Optional[str] = None
    eval_archive: Optional[str] = None


@dataclass
class DatasetLayout:
    """How raw recordings of a known test rig are labelled and windowed"""
    class_names: List[str] = field(default_factory=list)
    channel_names: List[str] = field(default_factory=list)
    sample_rate_hz: float = 20000.0
    window_len: Optional[int] = None
    rows_per_file: Optional[int] = None
    files_per_class: Optional[int] = None


@dataclass
class RunConfig:
    """
    Everything a run needs. The model section may leave out in_channels,
    window_len and num_classes; they are taken from the training archive.
    """
    model: Dict[str, Any] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    data: DataPaths = field(default_factory=DataPaths)
    dataset: DatasetLayout = field(default_factory=DatasetLayout)
    out: Optional[str] = None

    def model_config(self, window_len: int, in_channels: int, num_classes: int) -> CrnnConfig:
        """Resolve the model section against the data it will be trained on"""
        derived = {"window_len": window_len, "in_channels": in_channels, "num_classes": num_classes}
        for key, value in derived.items():
            given = self.model.get(key)
            if given is not None and given != value:
                raise ShapeError(f"model.{key} is {given} but the archive has {value}")
        config = CrnnConfig.from_dict({**self.model, **derived})
        config.validate()
        return config

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "model": dict(self.model),
            "train": self.train.to_dict(),
            "split": asdict(self.split),
            "data": asdict(self.data),
            "dataset": asdict(self.dataset),
        }
        if self.out is not None:
            data["out"] = self.out
        return data


def _section(cls, data: Dict[str, Any], name: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {name} keys: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"invalid {name} section: {e}")


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = {key: dict(value) if isinstance(value, dict) else value for key, value in base.items()}
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


class ConfigManager:
    """Loads run configurations from presets, JSON/TOML files and command-line overrides"""

    def __init__(self, presets_dir: Optional[Path] = None):
        self.presets_dir = Path(presets_dir) if presets_dir else resource_path("")

    def preset_path(self, name: str) -> Path:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
        return self.presets_dir / f"{name}.toml"

    def read_file(self, path: Path) -> Dict[str, Any]:
        """Parse a .toml file with tomllib, anything else as JSON"""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            if path.suffix.lower() == ".toml":
                with open(path, "rb") as f:
                    data = tomllib.load(f)
            else:
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot parse config {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a table/object at the top level")
        logger.debug("read config %s", path)
        return data

    def from_dict(self, data: Dict[str, Any]) -> RunConfig:
        unknown = sorted(set(data) - set(SECTIONS) - {"out"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for name in SECTIONS:
            if not isinstance(data.get(name, {}), dict):
                raise ConfigError(f"config section {name!r} must be a table/object")
        model = dict(data.get("model", {}))
        allowed = {f.name for f in fields(CrnnConfig)}
        bad = sorted(set(model) - allowed)
        if bad:
            raise ConfigError(f"unknown model keys: {', '.join(bad)}")
        train = _section(TrainConfig, data.get("train", {}), "train")
        split_data = dict(data.get("split", {}))
        split_batch = split_data.pop("batch_size", None)
        if split_batch is not None and "batch_size" in data.get("train", {}) and split_batch != train.batch_size:
            raise ConfigError(f"split.batch_size {split_batch} differs from train.batch_size {train.batch_size}")
        if split_batch is not None and "batch_size" not in data.get("train", {}):
            train.batch_size = split_batch
        split = _section(SplitSpec, split_data, "split")
        split.batch_size = train.batch_size
        return RunConfig(
            model=model,
            train=train,
            split=split,
            data=_section(DataPaths, data.get("data", {}), "data"),
            dataset=_section(DatasetLayout, data.get("dataset", {}), "dataset"),
            out=data.get("out"),
        )

    def load(self, config_path: Optional[Path] = None, preset: Optional[str] = None) -> RunConfig:
        """Preset values first, then the config file on top"""
        data: Dict[str, Any] = {}
        if preset:
            data = self.read_file(self.preset_path(preset))
        if config_path:
            data = _merge(data, self.read_file(config_path))
        return self.from_dict(data)

    def apply_overrides(self, config: RunConfig, seed: Optional[int] = None, out: Optional[str] = None,
                        **train_values: Any) -> RunConfig:
        """Flags win over file values; seed drives both training and splitting"""
        if seed is not None:
            config.train.seed = seed
            config.split.seed = seed
        if out is not None:
            config.out = out
        for key, value in train_values.items():
            if value is None:
                continue
            if hasattr(config.train, key):
                setattr(config.train, key, value)
            elif hasattr(config.split, key):
                setattr(config.split, key, value)
            elif hasattr(config.data, key):
                setattr(config.data, key, value)
            else:
                raise ConfigError(f"unknown override {key!r}")
        config.split.batch_size = config.train.batch_size
        return config

    def validate(self, config: RunConfig, require: tuple = ()):
        """Check value ranges and that every referenced (and every required) path exists"""
        config.train.validate()
        config.split.validate()
        for name in require:
            if name != "out" and getattr(config.data, name) is None:
                raise ConfigError(f"data.{name} is required for this command")
        if "out" in require and not config.out:
            raise ConfigError("an output directory is required (--out or out = ...)")
        for name in ("archive", "eval_archive"):
            value = getattr(config.data, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"data.{name} does not exist: {value}")

    def save(self, config: RunConfig, path: Path):
        """Write the resolved configuration as TOML so the run can be repeated with --config"""
        atomic_write_text(path, toml.dumps(config.to_dict()))
        logger.debug("wrote run config %s", path)

"""Run configuration: ``key = value`` files with one section per module.

Precedence, highest first: command-line flags, the ``HPSMP_OUT`` environment
variable (output directory only), the config file, built-in defaults.

Example file::

    [run]
    seed = 7
    preset = tiny

    [train]
    epochs = 30
    lr = 0.01

    [strategy]
    transaction_cost_rate = 0.001

    [split]
    train_end = 2020-01-31
"""

import ast
import configparser
import dataclasses
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, Optional

from .dataset import DEFAULT_TEST_END, DEFAULT_TRAIN_END, DEFAULT_VAL_END
from .model import ModelConfig

OUT_ENV = "HPSMP_OUT"
PRESETS = ("full", "desk", "tiny")
MODEL_KINDS = {"hybrid": "hybrid", "cnn-lg": "cnn_lg", "cnn-blstm": "cnn_blstm"}

# Reduced widths that train in minutes on one CPU.
DESK = {
    "hybrid": dict(max_len=32, n_features=16, lg_filters=16, lg_kernel=5,
                   bl_convs=((16, 5), (32, 5)), hidden=16, fusion=(32, 16)),
    "cnn_lg": dict(max_len=32, n_features=16, lg_filters=16, lg_kernel=5, gal_filters=16),
    "cnn_blstm": dict(max_len=32, n_features=16, bl_convs=((16, 5),), hidden=16, fusion=(32,)),
}


class ConfigError(ValueError):
    """A config file or flag value is malformed."""


def model_config(kind: str, preset: str = "full", **overrides) -> ModelConfig:
    """Architecture for ``kind`` at the given preset scale, with field overrides."""
    if preset == "tiny":
        return ModelConfig.tiny(kind, **overrides)
    if preset == "desk":
        return ModelConfig.standalone(kind, **{**DESK[kind], **overrides})
    if preset == "full":
        return ModelConfig.standalone(kind, **overrides)
    raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")


@dataclass
class DatasetOptions:
    min_count: int = 5
    min_retweets: int = 1
    horizon: int = 5
    threshold: int = 3


@dataclass
class TrainOptions:
    lr: float = 0.001
    batch: int = 64
    epochs: int = 15
    dropout: float = 0.5


@dataclass
class StrategyOptions:
    name: str = "5050"
    buy_threshold: Optional[float] = None
    sell_threshold: Optional[float] = None
    transaction_cost_rate: float = 0.003
    shares: int = 100
    start_date: Optional[date] = None
    end_date: Optional[date] = None


@dataclass
class SplitOptions:
    train_end: date = DEFAULT_TRAIN_END
    val_end: date = DEFAULT_VAL_END
    test_end: date = DEFAULT_TEST_END


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    out: Path = Path("out")
    preset: str = "full"
    model: str = "hybrid"
    head: str = "sigmoid"
    model_overrides: Dict[str, Any] = field(default_factory=dict)
    dataset: DatasetOptions = field(default_factory=DatasetOptions)
    train: TrainOptions = field(default_factory=TrainOptions)
    strategy: StrategyOptions = field(default_factory=StrategyOptions)
    split: SplitOptions = field(default_factory=SplitOptions)
    paths: Dict[str, str] = field(default_factory=dict)

    def model_config(self) -> ModelConfig:
        return model_config(MODEL_KINDS.get(self.model, self.model), self.preset,
                            head=self.head, dropout=self.train.dropout, **self.model_overrides)

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, (date, Path)):
                return str(v)
            if dataclasses.is_dataclass(v):
                return {k: plain(x) for k, x in dataclasses.asdict(v).items()}
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v
        return {f.name: plain(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _coerce(raw: str, like: Any, key: str):
    raw = raw.strip()
    try:
        if isinstance(like, date) or key.endswith(("_end", "_date")):
            return None if raw.lower() in ("", "none") else date.fromisoformat(raw)
        if isinstance(like, str):
            return raw
        if isinstance(like, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if like is None and raw.lower() == "none":
            return None
        value = ast.literal_eval(raw)
        if isinstance(like, float) or (like is None and isinstance(value, int)):
            return float(value)
        if isinstance(like, int) and not isinstance(value, int):
            raise ValueError(raw)
        if isinstance(like, tuple):
            return tuple(tuple(x) if isinstance(x, list) else x for x in value)
        return value
    except (ValueError, SyntaxError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _apply(target, section, values: Dict[str, str], source: str):
    names = {f.name: f for f in dataclasses.fields(target)}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"{source}: unknown key [{section}] {key}")
        setattr(target, key, _coerce(raw, getattr(target, key), key))


def load_file(path, cfg: Optional[RunConfig] = None) -> RunConfig:
    """Merge a config file into ``cfg`` (defaults when None)."""
    cfg = cfg or RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    defaults = ModelConfig()
    for section in parser.sections():
        values = dict(parser.items(section))
        if section == "run":
            for key, raw in values.items():
                if key == "seed":
                    cfg.seed = _coerce(raw, 0, key)
                elif key == "out":
                    cfg.out = Path(raw.strip())
                elif key in ("preset", "model", "head"):
                    setattr(cfg, key, raw.strip())
                else:
                    raise ConfigError(f"{path}: unknown key [run] {key}")
        elif section == "model":
            for key, raw in values.items():
                if key not in model_fields:
                    raise ConfigError(f"{path}: unknown key [model] {key}")
                cfg.model_overrides[key] = _coerce(raw, getattr(defaults, key), key)
        elif section in ("dataset", "train", "strategy", "split"):
            _apply(getattr(cfg, section), section, values, str(path))
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")
    return cfg


def resolve(flags: Dict[str, Any], environ: Dict[str, str]) -> RunConfig:
    """Build a RunConfig from defaults, the optional config file, the
    environment and the parsed flags, in increasing precedence."""
    cfg = RunConfig(command=flags.get("command", ""))
    if flags.get("config"):
        cfg = load_file(flags["config"], cfg)
    if environ.get(OUT_ENV):
        cfg.out = Path(environ[OUT_ENV])
    for key in ("seed", "preset", "model", "head"):
        if flags.get(key) is not None:
            setattr(cfg, key, flags[key])
    if flags.get("out") is not None:
        cfg.out = Path(flags["out"])
    for key in ("epochs", "lr", "batch", "dropout"):
        if flags.get(key) is not None:
            setattr(cfg.train, key, flags[key])
    if flags.get("strategy") is not None:
        cfg.strategy.name = flags["strategy"]
    for key in ("transaction_cost_rate", "shares", "buy_threshold", "sell_threshold"):
        if flags.get(key) is not None:
            setattr(cfg.strategy, key, flags[key])
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}")
    if cfg.model not in MODEL_KINDS and cfg.model not in MODEL_KINDS.values():
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.head not in ("sigmoid", "relu"):
        raise ConfigError(f"unknown head {cfg.head!r}")
    cfg.paths = {k: str(v) for k, v in flags.items()
                 if k.endswith(("_dir", "_file", "_path")) and v is not None}
    return cfg

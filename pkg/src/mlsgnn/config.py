"""Run configuration: ``key = value`` files with ``[section]`` headers, plus presets.

Precedence, lowest first: built-in defaults, the config file, the named
preset, then command-line overrides. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MlsgError
from .measures import MeasureKind
from .semantic import WalkConfig
from .training import TrainConfig

DEFAULT_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)

# per-dataset settings: (lr, weight decay, nhid1, nhid2, alpha, beta)
_TABLE = {
    ("citeseer", 20): (5e-4, 5e-3, 768, 128, 100.0, 0.001),
    ("citeseer", 40): (5e-4, 5e-3, 768, 128, 10.0, 0.001),
    ("citeseer", 60): (5e-4, 5e-3, 768, 128, 10.0, 0.01),
    ("uai2010", 20): (5e-4, 5e-4, 512, 128, 1.0, 0.01),
    ("uai2010", 40): (5e-4, 5e-4, 512, 128, 0.1, 0.01),
    ("uai2010", 60): (5e-4, 5e-4, 512, 128, 0.1, 0.01),
    ("acm", 20): (1e-4, 6e-4, 768, 256, 0.001, 0.001),
    ("acm", 40): (1e-4, 5e-4, 768, 256, 1.0, 0.001),
    ("acm", 60): (5e-4, 5e-4, 768, 256, 1.0, 0.001),
    ("blogcatalog", 20): (3e-4, 1e-5, 768, 128, 1000.0, 0.001),
    ("blogcatalog", 40): (5e-4, 1e-5, 768, 128, 100.0, 0.001),
    ("blogcatalog", 60): (3e-4, 1e-5, 768, 128, 100.0, 0.001),
    ("flickr", 20): (5e-4, 1e-5, 512, 128, 0.1, 1.0),
    ("flickr", 40): (5e-4, 1e-5, 512, 128, 0.1, 10.0),
    ("flickr", 60): (5e-4, 1e-5, 512, 128, 0.1, 10.0),
    ("corafull", 20): (1e-3, 5e-4, 512, 32, 0.001, 0.001),
    ("corafull", 40): (1e-3, 5e-4, 512, 32, 0.001, 0.001),
    ("corafull", 60): (1e-3, 5e-4, 512, 32, 0.001, 0.001),
}


def _preset(name, rate, row):
    lr, wd, h1, h2, alpha, beta = row
    return {
        "data": {"name": name},
        "split": {"labels_per_class": rate, "val_size": 500, "test_size": 1000},
        "walk": {"gamma": 100, "path_len": 3, "neg_shift": 2.0},
        "train": {"lr": lr, "weight_decay": wd, "nhid1": h1, "nhid2": h2,
                  "alpha": alpha, "beta": beta, "dropout": 0.5},
        "run": {"seeds": [0, 1, 2]},
    }


PRESETS = {f"{name}-{rate}": _preset(name, rate, row) for (name, rate), row in _TABLE.items()}


@dataclass
class DataConfig:
    name: str = "dataset"
    features: Path | None = None
    edges: Path | None = None
    labels: Path | None = None
    splits: Path | None = None
    n_classes: int | None = None

    def resolved(self):
        """Paths, defaulting to ``$MLSG_DATA_DIR/<name>/<name>.{feature,edge,label}``."""
        root = Path(os.environ.get("MLSG_DATA_DIR", "data")) / self.name
        return (
            self.features or root / f"{self.name}.feature",
            self.edges or root / f"{self.name}.edge",
            self.labels or root / f"{self.name}.label",
        )


@dataclass
class SplitConfig:
    labels_per_class: int = 20
    val_size: int = 500
    test_size: int = 1000
    seed: int = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    measures: list = field(default_factory=lambda: ["cosine", "gaussian", "sparsity"])
    k: int = 7
    gaussian_bandwidth: float | None = None
    sparsity_k: int | None = None
    walk: WalkConfig = field(default_factory=WalkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list = field(default_factory=lambda: [0])
    threads: int = 1
    out_dir: Path = Path("runs")
    preset: str | None = None
    alpha_grid: tuple = DEFAULT_GRID
    beta_grid: tuple = DEFAULT_GRID

    def measure_kinds(self):
        out = []
        for tag in self.measures:
            if tag == "gaussian":
                out.append(MeasureKind(tag, bandwidth=self.gaussian_bandwidth))
            elif tag == "sparsity":
                out.append(MeasureKind(tag, k=self.sparsity_k))
            else:
                out.append(MeasureKind(tag))
        return out


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


def _opt(conv):
    def parse(text):
        text = str(text).strip()
        return None if text in ("", "auto", "none", "None") else conv(text)
    return parse


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _names(text):
    return [v for v in str(text).replace(",", " ").split()]


_SCHEMA = {
    "data": {"name": str, "features": Path, "edges": Path, "labels": Path, "splits": Path,
             "n_classes": _opt(int)},
    "split": {"labels_per_class": int, "val_size": int, "test_size": int, "seed": int},
    "measures": {"kinds": _names, "k": int, "gaussian_bandwidth": _opt(float),
                 "sparsity_k": _opt(int)},
    "walk": {"gamma": int, "path_len": int, "window": _opt(int), "tail_threshold": int,
             "neg_shift": float, "seed": int, "max_tail_walks": _opt(int)},
    "train": {"lr": float, "weight_decay": float, "alpha": float, "beta": float, "nhid1": int,
              "nhid2": int, "dropout": float, "max_epochs": int, "patience": int,
              "l21_epsilon": float, "attention_hidden": int, "channels": _names,
              "activate_output": _bool, "regularizers": _bool},
    "run": {"seeds": _ints, "threads": int, "out": Path},
    "sweep": {"alpha_grid": _floats, "beta_grid": _floats},
}
_PATH_KEYS = {("data", "features"), ("data", "edges"), ("data", "labels"), ("data", "splits"),
              ("run", "out")}


def read_config_file(path):
    """Parse a config file into ``{section: {key: value}}``, validating names and types."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                value = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from None
            if (section, key) in _PATH_KEYS and not Path(value).is_absolute():
                value = path.parent / value
            out[section][key] = value
    return out


def _merge(base, extra):
    for section, values in extra.items():
        base.setdefault(section, {}).update(values)
    return base


def build_config(config_path=None, preset=None, overrides=None):
    """Combine defaults, file, preset and overrides into a :class:`RunConfig`."""
    layers = {}
    if config_path is not None:
        _merge(layers, read_config_file(config_path))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        _merge(layers, PRESETS[preset])
    if overrides:
        _merge(layers, overrides)
    try:
        data = DataConfig(**layers.get("data", {}))
        split = SplitConfig(**layers.get("split", {}))
        walk = WalkConfig(**layers.get("walk", {}))
        train = TrainConfig(**layers.get("train", {}))
        m = layers.get("measures", {})
        run = layers.get("run", {})
        sweep = layers.get("sweep", {})
        cfg = RunConfig(
            data=data,
            split=split,
            measures=list(m.get("kinds", ["cosine", "gaussian", "sparsity"])),
            k=m.get("k", 7),
            gaussian_bandwidth=m.get("gaussian_bandwidth"),
            sparsity_k=m.get("sparsity_k"),
            walk=walk,
            train=train,
            seeds=list(run.get("seeds", [0])),
            threads=run.get("threads", 1),
            out_dir=Path(run.get("out", "runs")),
            preset=preset,
            alpha_grid=tuple(sweep.get("alpha_grid", DEFAULT_GRID)),
            beta_grid=tuple(sweep.get("beta_grid", DEFAULT_GRID)),
        )
        cfg.measure_kinds()
    except MlsgError as exc:
        raise ConfigError(str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.seeds:
        raise ConfigError("need at least one seed")
    if not cfg.alpha_grid or not cfg.beta_grid:
        raise ConfigError("sweep grids must be non-empty")
    return cfg

"""Experiment configuration: INI-style file, presets, overrides and digest.

File layout (every key optional)::

    [experiment]
    seed = 7
    paradigms = ft-mono, ft-multi, kd-mono, mtkd-mono, mtkd-multi
    languages = all            ; or e.g. "en, fi"
    splits = all               ; or e.g. "0, 2"
    workers = 1

    [data]
    preset = desk              ; desk | table1-scaled
    path =                     ; JSONL file; overrides generation when set
    scale = 0.1                ; table1-scaled only
    dim = 16
    sigma = 1.0
    spacing = 3.0
    shift_scale = 3.0
    n_train = 200              ; desk only, per language and class
    n_test = 50

    [model]
    hidden = 64, 64

    [train]
    preset = desk              ; desk | paper
    epochs = 50
    learning_rate = 0.01
    batch_size = 32
    optimizer = adam           ; adam | sgd

    [distill]
    lambda = 0.25
    temperature = 5
    tau = 0.1
    kl_direction = student_to_teacher
    t_squared_rescale = false

    [eval]
    n_resamples = 1000
    confidence = 0.95

    [output]
    out = runs/default
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .distill import DistillConfig
from .errors import ConfigError, InvalidArgument

PARADIGM_NAMES = ("ft-mono", "ft-multi", "kd-mono", "mtkd-mono", "mtkd-multi")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 50
    learning_rate: float = 1e-2
    batch_size: int = 32
    optimizer: str = "adam"


TRAIN_PRESETS = {
    "desk": TrainSettings(epochs=50, learning_rate=1e-2, batch_size=32, optimizer="adam"),
    "paper": TrainSettings(epochs=20, learning_rate=3e-5, batch_size=32, optimizer="adam"),
}


@dataclass(frozen=True)
class DataSettings:
    preset: str = "desk"
    path: str = ""
    scale: float = 0.1
    dim: int = 16
    sigma: float = 1.0
    spacing: float = 3.0
    shift_scale: float = 3.0
    n_train: int = 200
    n_test: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    paradigms: tuple[str, ...] = PARADIGM_NAMES
    languages: tuple[str, ...] = ()           # empty = every language in the dataset
    splits: tuple[int, ...] = ()              # empty = every split
    data: DataSettings = field(default_factory=DataSettings)
    hidden: tuple[int, ...] = (64, 64)
    train: TrainSettings = field(default_factory=TrainSettings)
    distill: DistillConfig = field(default_factory=DistillConfig)
    n_resamples: int = 1000
    confidence: float = 0.95
    out: str = "runs/default"
    workers: int = 1

    def semantic_dict(self) -> dict:
        """Fields that influence results; output location and worker count are excluded."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_KEYS = {
    "experiment": {"seed", "paradigms", "languages", "splits", "workers"},
    "data": {f for f in DataSettings.__dataclass_fields__},
    "model": {"hidden"},
    "train": {"preset", "epochs", "learning_rate", "batch_size", "optimizer"},
    "distill": {"lambda", "temperature", "tau", "kl_direction", "t_squared_rescale"},
    "eval": {"n_resamples", "confidence"},
    "output": {"out"},
}


def parse_config_text(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: dict[str, dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        values.setdefault(section, {})[key] = value
    return build_config(values)


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text() if path else ""
    return parse_config_text(text, overrides)


def build_config(values: dict[str, dict[str, str]]) -> ExperimentConfig:
    for section, keys in values.items():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(keys) - _KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    try:
        exp = values.get("experiment", {})
        cfg = ExperimentConfig()
        if "seed" in exp:
            cfg = replace(cfg, seed=int(exp["seed"]))
        if "paradigms" in exp:
            paradigms = tuple(_split_list(exp["paradigms"]))
            bad = set(paradigms) - set(PARADIGM_NAMES)
            if bad or not paradigms:
                raise ConfigError(f"unknown paradigm(s) {sorted(bad)}; choose from {PARADIGM_NAMES}")
            cfg = replace(cfg, paradigms=tuple(p for p in PARADIGM_NAMES if p in paradigms))
        if "languages" in exp:
            langs = _split_list(exp["languages"])
            cfg = replace(cfg, languages=() if langs in ([], ["all"]) else tuple(langs))
        if "splits" in exp:
            splits = _split_list(exp["splits"])
            cfg = replace(cfg, splits=() if splits in ([], ["all"]) else tuple(int(s) for s in splits))
        if "workers" in exp:
            cfg = replace(cfg, workers=max(1, int(exp["workers"])))

        data = values.get("data", {})
        types = {"preset": str, "path": str, "scale": float, "dim": int, "sigma": float, "spacing": float,
                 "shift_scale": float, "n_train": int, "n_test": int}
        ds = DataSettings(**{k: types[k](v) for k, v in data.items()})
        if ds.preset not in ("desk", "table1-scaled"):
            raise ConfigError(f"unknown data preset {ds.preset!r}")
        cfg = replace(cfg, data=ds)

        if "hidden" in values.get("model", {}):
            hidden = tuple(int(h) for h in _split_list(values["model"]["hidden"]))
            if any(h < 1 for h in hidden):
                raise ConfigError("hidden widths must be positive")
            cfg = replace(cfg, hidden=hidden)

        train = dict(values.get("train", {}))
        preset = train.pop("preset", "desk")
        if preset not in TRAIN_PRESETS:
            raise ConfigError(f"unknown train preset {preset!r}")
        ts = TRAIN_PRESETS[preset]
        ttypes = {"epochs": int, "learning_rate": float, "batch_size": int, "optimizer": str}
        ts = replace(ts, **{k: ttypes[k](v) for k, v in train.items()})
        if ts.optimizer not in ("adam", "sgd") or ts.epochs < 1 or ts.batch_size < 1 or not ts.learning_rate > 0:
            raise ConfigError(f"invalid training settings {ts}")
        cfg = replace(cfg, train=ts)

        dist = values.get("distill", {})
        dkw = {}
        if "lambda" in dist:
            dkw["lam"] = float(dist["lambda"])
        if "temperature" in dist:
            dkw["temperature"] = float(dist["temperature"])
        if "tau" in dist:
            dkw["tau"] = float(dist["tau"])
        if "kl_direction" in dist:
            dkw["kl_direction"] = dist["kl_direction"].strip()
        if "t_squared_rescale" in dist:
            dkw["t_squared_rescale"] = _bool(dist["t_squared_rescale"])
        cfg = replace(cfg, distill=DistillConfig(**dkw))

        ev = values.get("eval", {})
        if "n_resamples" in ev:
            cfg = replace(cfg, n_resamples=int(ev["n_resamples"]))
        if "confidence" in ev:
            cfg = replace(cfg, confidence=float(ev["confidence"]))
        if cfg.n_resamples < 100 or not 0 < cfg.confidence < 1:
            raise ConfigError("n_resamples must be >= 100 and confidence in (0, 1)")

        if "out" in values.get("output", {}):
            cfg = replace(cfg, out=values["output"]["out"])
    except (ValueError, TypeError, InvalidArgument) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


PRESET_OVERRIDES = {
    "desk": {"data.preset": "desk", "train.preset": "desk"},
    "table1-scaled": {"data.preset": "table1-scaled"},
    "paper-hparams": {"train.preset": "paper"},
}

"""INI-style run configuration for the command-line tools.

Plain key=value files with sections, e.g.::

    [data]
    num_classes = 4
    train_manifest = train.txt

    [graph]
    thickness = 2
    k = 8

    [gcn]
    dropout_rate = 0.0

Unknown sections or keys are rejected.  Command-line flags and
``section.key=value`` overrides take precedence over the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .gcn import GcnConfig
from .pipeline import PipelineConfig
from .synth import SynthConfig


class ConfigError(Exception):
    """Invalid, missing or unknown configuration."""


_KNOWN_KEYS = {
    "data": {"num_classes", "void_label", "train_manifest", "val_manifest",
             "test_manifest"},
    "graph": {"thickness", "k"},
    "features": {"spec"},
    "gcn": {"hidden_channels", "dropout_rate", "l2_coeff", "learning_rate",
            "adam_beta1", "adam_beta2", "adam_epsilon", "seed"},
    "train": {"epochs", "val_every", "shuffle"},
    "synth": {"height", "width", "shapes", "shapes_per_frame", "min_shape",
              "max_shape", "corruption", "flip_prob", "corruption_radius",
              "noise_sigma", "extras_channels", "seed", "train_frames",
              "val_frames", "test_frames"},
}


@dataclass
class Settings:
    """Typed view of one configuration, ready for the pipeline and synth."""

    pipeline: PipelineConfig
    num_classes: int | None
    train_manifest: Path | None
    val_manifest: Path | None
    test_manifest: Path | None
    synth: SynthConfig
    synth_splits: dict[str, int]


def _parse_ini(path: Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file: {exc}") from exc
    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            values.setdefault(section, {})[key] = value
    return values


def _apply_override(values: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override '{spec}' is not of the form section.key=value")
    target, _, value = spec.partition("=")
    if "." not in target:
        raise ConfigError(f"override '{spec}' is not of the form section.key=value")
    section, _, key = target.partition(".")
    if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    values.setdefault(section, {})[key] = value


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {section}.{key}: cannot parse '{raw}'") from exc


def build_settings(config_path: str | Path | None,
                   overrides: list[str] | None = None,
                   flag_values: dict | None = None) -> Settings:
    """Merge file, ``section.key=value`` overrides and CLI flags into Settings."""
    values: dict[str, dict[str, str]] = {}
    base_dir = Path(".")
    if config_path is not None:
        config_path = Path(config_path)
        base_dir = config_path.parent
        values = _parse_ini(config_path)
    for spec in overrides or []:
        _apply_override(values, spec)

    flags = flag_values or {}
    flag_map = {
        "seed": ("gcn", "seed"),
        "thickness": ("graph", "thickness"),
        "k": ("graph", "k"),
        "features": ("features", "spec"),
        "dropout": ("gcn", "dropout_rate"),
        "l2": ("gcn", "l2_coeff"),
        "epochs": ("train", "epochs"),
    }
    for flag, (section, key) in flag_map.items():
        if flags.get(flag) is not None:
            values.setdefault(section, {})[key] = str(flags[flag])
    if flags.get("seed") is not None:
        values.setdefault("synth", {})["seed"] = str(flags["seed"])

    def get(section, key, kind, default):
        raw = values.get(section, {}).get(key)
        if raw is None:
            return default
        return _convert(section, key, raw, kind)

    num_classes = get("data", "num_classes", int, None)
    void_raw = values.get("data", {}).get("void_label", "")
    void_label = None if void_raw in ("", "none") else _convert("data", "void_label", void_raw, int)

    hidden_raw = values.get("gcn", {}).get("hidden_channels")
    if hidden_raw:
        try:
            hidden = tuple(int(part) for part in hidden_raw.split(",") if part.strip())
        except ValueError as exc:
            raise ConfigError(f"config key gcn.hidden_channels: cannot parse '{hidden_raw}'") from exc
    else:
        hidden = (64, 128, 64)

    feature_raw = values.get("features", {}).get("spec", "base,I")
    feature_spec = tuple(part.strip() for part in feature_raw.split(",") if part.strip())
    if not feature_spec:
        raise ConfigError("config key features.spec names no features")

    shapes_raw = values.get("synth", {}).get("shapes", "rect,circle")
    shape_vocab = tuple(part.strip() for part in shapes_raw.split(",") if part.strip())

    try:
        gcn_cfg = GcnConfig(
            num_classes=num_classes if num_classes is not None else 2,
            hidden_channels=hidden,
            dropout_rate=get("gcn", "dropout_rate", float, 0.0),
            l2_coeff=get("gcn", "l2_coeff", float, 0.0),
            learning_rate=get("gcn", "learning_rate", float, 0.001),
            adam_beta1=get("gcn", "adam_beta1", float, 0.9),
            adam_beta2=get("gcn", "adam_beta2", float, 0.999),
            adam_epsilon=get("gcn", "adam_epsilon", float, 1e-8),
            seed=get("gcn", "seed", int, 0),
        )
        pipeline = PipelineConfig(
            gcn=gcn_cfg,
            thickness=get("graph", "thickness", int, 2),
            k=get("graph", "k", int, 8),
            features=feature_spec,
            epochs=get("train", "epochs", int, 1),
            val_every=get("train", "val_every", int, 1),
            shuffle=get("train", "shuffle", bool, False),
            void_label=void_label,
        )
        synth = SynthConfig(
            height=get("synth", "height", int, 64),
            width=get("synth", "width", int, 64),
            num_classes=num_classes if num_classes is not None else 4,
            shapes=shape_vocab,
            shapes_per_frame=get("synth", "shapes_per_frame", int, 6),
            min_shape=get("synth", "min_shape", int, 10),
            max_shape=get("synth", "max_shape", int, 28),
            corruption=get("synth", "corruption", str, "flip"),
            flip_prob=get("synth", "flip_prob", float, 0.4),
            corruption_radius=get("synth", "corruption_radius", int, 2),
            noise_sigma=get("synth", "noise_sigma", float, 8.0),
            extras_channels=get("synth", "extras_channels", int, 0),
            seed=get("synth", "seed", int, get("gcn", "seed", int, 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    def manifest(key):
        raw = values.get("data", {}).get(key)
        return None if raw is None else (base_dir / raw)

    return Settings(
        pipeline=pipeline,
        num_classes=num_classes,
        train_manifest=manifest("train_manifest"),
        val_manifest=manifest("val_manifest"),
        test_manifest=manifest("test_manifest"),
        synth=synth,
        synth_splits={
            "train": get("synth", "train_frames", int, 8),
            "val": get("synth", "val_frames", int, 2),
            "test": get("synth", "test_frames", int, 4),
        },
    )

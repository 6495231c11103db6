"""Run configuration: one JSON document with a section per component.

Example::

    {
      "seed": 0,
      "phantom": {"size": 64, "n_clusters": 8},
      "mask": {"accel": 4, "center_lines": 8, "width": 64},
      "denoiser": {"features": 32},
      "unroll": {"L": 5},
      "londn": {"k": 10},
      "train": {"epochs": 20},
      "paths": {"dataset": "data/"}
    }

Missing keys take their defaults; unknown keys anywhere are an error.
"""
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .algorithm import LondnConfig
from .denoiser import DenoiserConfig
from .phantom import MaskSpec, PhantomSpec
from .unrolled import UnrollConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Global (all-data) training settings."""

    epochs: int = 20
    batch: int = 2
    l1_weight: float = 1e-9

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.l1_weight < 0:
            raise ValueError("epochs >= 0, batch >= 1 and l1_weight >= 0 required")


@dataclass(frozen=True)
class Paths:
    dataset: Optional[str] = None
    weights: Optional[str] = None
    output: Optional[str] = None


SECTIONS = {
    "phantom": PhantomSpec,
    "mask": MaskSpec,
    "denoiser": DenoiserConfig,
    "unroll": UnrollConfig,
    "londn": LondnConfig,
    "train": TrainConfig,
    "paths": Paths,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    noise_std: float = 0.0
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    mask: MaskSpec = field(default_factory=MaskSpec)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    unroll: UnrollConfig = field(default_factory=UnrollConfig)
    londn: LondnConfig = field(default_factory=LondnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: Paths = field(default_factory=Paths)

    def to_dict(self):
        d = asdict(self)
        # tuples do not survive JSON; nothing here uses them, keep output stable
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_overrides(self, overrides):
        """Apply ``{"section.key": value}`` or ``{"key": value}`` overrides."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            if len(parts) == 1:
                if parts[0] not in data or parts[0] in SECTIONS:
                    raise ConfigError(f"unknown top-level key {dotted!r}")
                data[parts[0]] = value
            elif len(parts) == 2 and parts[0] in SECTIONS:
                if parts[1] not in data[parts[0]]:
                    raise ConfigError(f"unknown key {dotted!r}")
                data[parts[0]][parts[1]] = value
            else:
                raise ConfigError(f"unknown key {dotted!r}")
        return from_dict(data)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key in SECTIONS:
            kwargs[key] = _build(SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(data)


def desk_config(seed=0, **train):
    """The 64x64, 4-coil, 8x25 / 10 held-out, 4x, k=10 setup used by the experiments."""
    return RunConfig(
        seed=seed,
        londn=LondnConfig(k=10, seed=seed),
        train=replace(TrainConfig(), **train),
    )

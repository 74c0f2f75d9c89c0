"""Pipeline configuration: one file with a section per stage, all optional."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from .detector import DetectorConfig
from .metrics import default_bins
from .raster import ColorPolicy
from .scene import RasterConfig
from .synthetic import GenParams
from .tracker import TrackerConfig

ENV_VAR = "BEVTRAJ_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    recall: float = 0.99
    light_accuracy: float = 1.0
    centroid_mae_m: float = 0.5
    id_switch_rate: float = 0.01
    speed_mae_mps: float = 0.5
    accel_mae_mps2: float = 1.0
    ego_speed_mae_mps: float = 0.5
    occluded_detection_rate: float = 0.95
    occluded_area_tolerance: float = 0.15


@dataclass(frozen=True)
class PipelineConfig:
    raster: RasterConfig = RasterConfig()
    colors: ColorPolicy = ColorPolicy()
    detector: DetectorConfig = DetectorConfig()
    tracker: TrackerConfig = TrackerConfig()
    bins: dict = field(default_factory=default_bins)
    generator: GenParams = GenParams()
    thresholds: Thresholds = Thresholds()
    n_scenes: int = 50

    def to_dict(self) -> dict:
        return {
            "raster": asdict(self.raster),
            "colors": self.colors.to_dict(),
            "detector": self.detector.to_dict(),
            "tracker": self.tracker.to_dict(),
            "bins": {k: list(v) for k, v in self.bins.items()},
            "generator": self.generator.to_dict(),
            "thresholds": asdict(self.thresholds),
            "n_scenes": self.n_scenes,
        }


def _known(cls, section: str, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    extra = sorted(set(d) - names)
    if extra:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(extra)}")
    return d


def from_dict(d: dict) -> PipelineConfig:
    allowed = {f.name for f in fields(PipelineConfig)}
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown config sections: {', '.join(extra)}")
    try:
        kw = {}
        if "raster" in d:
            kw["raster"] = RasterConfig(**_known(RasterConfig, "raster", d["raster"]))
        if "colors" in d:
            kw["colors"] = ColorPolicy.from_dict(_known(ColorPolicy, "colors", d["colors"]))
            kw["colors"].effective_region()
        if "detector" in d:
            kw["detector"] = DetectorConfig.from_dict(_known(DetectorConfig, "detector", d["detector"]))
        if "tracker" in d:
            kw["tracker"] = TrackerConfig.from_dict(_known(TrackerConfig, "tracker", d["tracker"]))
        if "bins" in d:
            kw["bins"] = {**default_bins(), **{k: [float(x) for x in v] for k, v in d["bins"].items()}}
        if "generator" in d:
            kw["generator"] = GenParams.from_dict(_known(GenParams, "generator", d["generator"]))
        if "thresholds" in d:
            kw["thresholds"] = Thresholds(**_known(Thresholds, "thresholds", d["thresholds"]))
        if "n_scenes" in d:
            kw["n_scenes"] = int(d["n_scenes"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(**kw)


def read_config_file(path: str | Path) -> dict:
    p = Path(path)
    text = p.read_bytes()
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text.decode("utf-8"))
        return tomllib.loads(text.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Explicit path, else $BEVTRAJ_CONFIG, else built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return PipelineConfig()
    return from_dict(read_config_file(path))

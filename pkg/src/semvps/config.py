"""Engine configuration: one JSON document, named presets, CLI overrides.

Every section accepts either a preset name or an explicit mapping::

    {
      "preset": "desk",
      "datum": "hk1980",
      "intrinsics": {"width": 160, "height": 120, "fov": 120},
      "search": {"radius": 15, "yaw_span": 30},
      "fusion": "default",
      "renderer": {"face_size": 128, "erp_width": 512, "erp_height": 256},
      "bf_threshold": 5,
      "study": {"n_trials": 200}
    }

Keys left out fall back to the chosen preset (``"standard"`` if none).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .camera import DESK_INTRINSICS, STANDARD_INTRINSICS, CameraIntrinsics
from .geodesy import DatumSpec
from .matching import DEFAULT_BF_THRESHOLD, DEFAULT_FUSION, FusionParams
from .projection import DEFAULT_ERP_HEIGHT, DEFAULT_ERP_WIDTH, DEFAULT_FACE_SIZE
from .search import DEFAULT_SEARCH, SearchConfig
from .sensitivity import StudyConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RendererConfig:
    face_size: int = DEFAULT_FACE_SIZE
    erp_width: int = DEFAULT_ERP_WIDTH
    erp_height: int = DEFAULT_ERP_HEIGHT

    def __post_init__(self):
        if self.face_size < 1:
            raise ValueError("face_size must be positive")
        if self.erp_width != 2 * self.erp_height or self.erp_height < 1:
            raise ValueError("ERP must be 2:1")


@dataclass(frozen=True)
class EngineConfig:
    # None: take the datum from the city model file
    datum: Optional[DatumSpec] = None
    intrinsics: CameraIntrinsics = STANDARD_INTRINSICS
    search: SearchConfig = DEFAULT_SEARCH
    fusion: FusionParams = DEFAULT_FUSION
    renderer: RendererConfig = RendererConfig()
    bf_threshold: float = DEFAULT_BF_THRESHOLD
    bf_fixed_classes: bool = False
    study: StudyConfig = field(default_factory=StudyConfig)

    def __post_init__(self):
        if not self.bf_threshold > 0:
            raise ValueError("bf_threshold must be positive")

    def to_dict(self) -> dict:
        return {
            "datum": None if self.datum is None else self.datum.to_dict(),
            "intrinsics": self.intrinsics.to_dict(),
            "search": self.search.to_dict(),
            "fusion": self.fusion.to_dict(),
            "renderer": dataclasses.asdict(self.renderer),
            "bf_threshold": self.bf_threshold,
            "bf_fixed_classes": self.bf_fixed_classes,
            "study": self.study.to_dict(),
        }

    def replace(self, **kw) -> "EngineConfig":
        return dataclasses.replace(self, **kw)


STANDARD_CONFIG = EngineConfig()
# Reduced image and panorama sizes that keep exhaustive searches to seconds.
DESK_CONFIG = EngineConfig(
    intrinsics=DESK_INTRINSICS,
    search=SearchConfig(radius=15.0),
    renderer=RendererConfig(128, 512, 256),
)

_PRESETS = {"standard": STANDARD_CONFIG, "desk": DESK_CONFIG}


def config_preset(name: str) -> EngineConfig:
    try:
        return _PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown config preset {name!r}; known: {sorted(_PRESETS)}") from None


_KEYS = {"preset", "datum", "intrinsics", "search", "fusion", "renderer", "bf_threshold", "bf_fixed_classes", "study"}


def config_from_dict(d: dict) -> EngineConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(d) - _KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = config_preset(d.get("preset", "standard"))
    kw = {}
    try:
        if d.get("datum") is not None:
            kw["datum"] = DatumSpec.from_dict(d["datum"])
        if "intrinsics" in d:
            kw["intrinsics"] = CameraIntrinsics.from_dict(d["intrinsics"])
        if "search" in d:
            s = d["search"]
            kw["search"] = SearchConfig.from_dict(s) if isinstance(s, str) else dataclasses.replace(cfg.search, **s)
        if "fusion" in d:
            kw["fusion"] = FusionParams.from_dict(d["fusion"])
        if "renderer" in d:
            kw["renderer"] = dataclasses.replace(cfg.renderer, **d["renderer"])
        if "bf_threshold" in d:
            kw["bf_threshold"] = float(d["bf_threshold"])
        if "bf_fixed_classes" in d:
            kw["bf_fixed_classes"] = bool(d["bf_fixed_classes"])
        if "study" in d:
            kw["study"] = StudyConfig.from_dict({**cfg.study.to_dict(), **d["study"]})
        return cfg.replace(**kw)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path) -> EngineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(data)

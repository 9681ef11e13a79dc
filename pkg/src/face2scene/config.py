"""Canonical INI config shared by every CLI command.

One file, six sections. Every pinned default (loss weights 2.0/5.0/0.5,
guidance scale 1.10, 200 epochs at lr 3e-2 with batch 20, token
geometry) lives here so a config file only has to override what it
changes.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .degrade.sampling import SampleSpace
from .errors import ParameterError
from .fadex import FadexConfig
from .mapnet import MapnetConfig
from .restorer import RestorerConfig

DEFAULT_CONFIG_TEXT = """\
# face2scene run configuration. Values below are the shipped defaults;
# uncomment and edit to override. Constants are pinned for reproducibility.

[data]
# root = data/toy            ; overridden by FACE2SCENE_DATA or --out
# n_scenes = 64
# scene_size = 96
# variants = 4               ; degraded versions per scene
# face_min = 24
# face_max = 44
# val_fraction = 0.2
# test_fraction = 0.0
# presets = d1,d2,d3,d4      ; empty = draw randomized specs instead

[degrade]
# jpeg_min = 30
# jpeg_max = 95
# blur_sigma_min = 0.2
# blur_sigma_max = 3.0
# gauss_sigma_max = 0.08
# poisson_max = 2.5

[fadex]
# channels = 32
# proj_dim = 64
# temperature = 0.07
# momentum = 0.99
# queue_capacity = 1024
# queue_labels = false
# lr = 0.03                  ; default training rate
# epochs = 200               ; default epoch budget
# batch_size = 20
# canonical_size = 32
# refq = gt

[mapnet]
# heads = 8
# token_dim = 64
# lambda_init = 0.0
# shared_mlp = false

[restorer]
# base_width = 16
# token_dim = 64
# lambda_l2 = 2.0            ; pixel-loss weight
# lambda_lpips = 5.0         ; perceptual-loss weight
# lambda_gan = 0.5           ; adversarial weight
# p_negative = 0.1           ; negative-target probability
# cfg_scale = 1.10           ; default guidance scale
# bank_tokens = 8
# steps = 500
# lr = 0.001
# batch = 4
# eval_every = 100
# refq = gt

[eval]
# ssim_window = 7
# feather = -1               ; -1 = 10% of the bbox short side
# refq = medium
# cfg_scale = 1.10
# tokens = all               ; all | global+intermediate | global
"""


@dataclass
class DataConfig:
    root: str = "data/toy"
    n_scenes: int = 64
    scene_size: int = 96
    variants: int = 4
    face_min: int = 24
    face_max: int = 44
    val_fraction: float = 0.2
    test_fraction: float = 0.0
    presets: str = "d1,d2,d3,d4"

    def preset_ids(self) -> tuple[str, ...] | None:
        ids = tuple(p.strip() for p in self.presets.split(",") if p.strip())
        return ids or None


@dataclass
class DegradeConfig:
    jpeg_min: int = 30
    jpeg_max: int = 95
    blur_sigma_min: float = 0.2
    blur_sigma_max: float = 3.0
    gauss_sigma_max: float = 0.08
    poisson_max: float = 2.5

    def sample_space(self) -> SampleSpace:
        return SampleSpace(
            jpeg_quality=(self.jpeg_min, self.jpeg_max),
            blur_sigma=(self.blur_sigma_min, self.blur_sigma_max),
            gauss_sigma=(0.0, self.gauss_sigma_max),
            poisson_scale=(0.0, self.poisson_max),
        )


@dataclass
class EvalConfig:
    ssim_window: int = 7
    feather: int = -1  # -1 = derive from bbox size
    refq: str = "medium"
    cfg_scale: float = 1.10
    tokens: str = "all"


@dataclass
class AppConfig:
    data: DataConfig = field(default_factory=DataConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    fadex: FadexConfig = field(default_factory=FadexConfig)
    mapnet: MapnetConfig = field(default_factory=MapnetConfig)
    restorer: RestorerConfig = field(default_factory=RestorerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def data_root(self) -> Path:
        return Path(os.environ.get("FACE2SCENE_DATA", self.data.root))


_SECTIONS = {
    "data": "data",
    "degrade": "degrade",
    "fadex": "fadex",
    "mapnet": "mapnet",
    "restorer": "restorer",
    "eval": "eval",
}


def _coerce(value: str, like) -> object:
    if isinstance(like, bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def load_config(path: str | os.PathLike | None = None) -> AppConfig:
    """Defaults overlaid with the INI file at ``path`` (if given)."""
    cfg = AppConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(str(path))
    if not read:
        raise ParameterError(f"config file not found: {path}")
    for section_name, attr in _SECTIONS.items():
        if not parser.has_section(section_name):
            continue
        target = getattr(cfg, attr)
        fields = {f.name: f for f in dataclasses.fields(target)}
        for key, raw in parser.items(section_name):
            if key not in fields:
                raise ParameterError(f"unknown option [{section_name}] {key}")
            current = getattr(target, key)
            setattr(target, key, _coerce(raw, current))
    return cfg


def write_default_config(path: str | os.PathLike) -> None:
    Path(path).write_text(DEFAULT_CONFIG_TEXT, encoding="utf-8")

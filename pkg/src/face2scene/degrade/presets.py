"""Fixed degradation presets and spec (de)serialization.

The four presets live in the versioned ``presets.v1`` table shipped with
the package; their concrete constants are repo pins frozen by
golden-image tests.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from ..errors import ParameterError
from .kernels import BlurKernelSpec
from .pipeline import DegradationSpec, GaussianNoiseSpec, PoissonNoiseSpec, StageSpec

PRESET_IDS = ("d1", "d2", "d3", "d4")


def kernel_to_dict(k: BlurKernelSpec | None) -> dict | None:
    if k is None:
        return None
    d = {"family": k.family, "size": k.size}
    if k.family in ("isotropic-gaussian", "anisotropic-gaussian", "plateau-anisotropic"):
        d.update(sigma_x=k.sigma_x, sigma_y=k.sigma_y, rotation=k.rotation)
    if k.family == "plateau-anisotropic":
        d["plateau_beta"] = k.plateau_beta
    if k.family == "sinc":
        d["cutoff"] = k.cutoff
    return d


def kernel_from_dict(d: dict | None) -> BlurKernelSpec | None:
    if d is None:
        return None
    return BlurKernelSpec(**d).validate()


def stage_to_dict(s: StageSpec) -> dict:
    return {
        "resize_scale": s.resize_scale,
        "resize_filter": s.resize_filter,
        "blur": kernel_to_dict(s.blur),
        "gaussian_noise": {"sigma": s.gaussian_noise.sigma, "gray": s.gaussian_noise.gray},
        "poisson_noise": {"scale": s.poisson_noise.scale, "color": s.poisson_noise.color},
        "jpeg_quality": s.jpeg_quality,
        "final_sinc": kernel_to_dict(s.final_sinc),
    }


def stage_from_dict(d: dict) -> StageSpec:
    return StageSpec(
        resize_scale=float(d.get("resize_scale", 1.0)),
        resize_filter=d.get("resize_filter", "bilinear"),
        blur=kernel_from_dict(d.get("blur")),
        gaussian_noise=GaussianNoiseSpec(**d.get("gaussian_noise", {})),
        poisson_noise=PoissonNoiseSpec(**d.get("poisson_noise", {})),
        jpeg_quality=d.get("jpeg_quality"),
        final_sinc=kernel_from_dict(d.get("final_sinc")),
    ).validate()


def spec_to_dict(spec: DegradationSpec) -> dict:
    return {
        "label": spec.label,
        "stage1": stage_to_dict(spec.stage1),
        "stage2": stage_to_dict(spec.stage2),
    }


def spec_from_dict(d: dict) -> DegradationSpec:
    return DegradationSpec(
        stage1=stage_from_dict(d["stage1"]),
        stage2=stage_from_dict(d["stage2"]),
        label=int(d.get("label", 0)),
    ).validate()


@lru_cache(maxsize=1)
def load_preset_table() -> dict[str, DegradationSpec]:
    raw = resources.files("face2scene").joinpath("presets.v1").read_text(encoding="utf-8")
    table = json.loads(raw)
    if table.get("version") != 1:
        raise ParameterError(f"unsupported preset table version {table.get('version')}")
    return {pid: spec_from_dict(d) for pid, d in table["presets"].items()}


def preset(pid: str) -> DegradationSpec:
    """Return the fixed, fully deterministic spec for one of d1..d4."""
    table = load_preset_table()
    if pid not in table:
        raise ParameterError(f"unknown preset {pid!r}; choose from {sorted(table)}")
    return table[pid]

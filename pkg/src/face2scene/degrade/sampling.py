"""Randomized degradation sampling for training-set synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from .kernels import BlurKernelSpec
from .pipeline import DegradationSpec, GaussianNoiseSpec, PoissonNoiseSpec, StageSpec

Range = tuple[float, float]


@dataclass(frozen=True)
class SampleSpace:
    """Parameter ranges for two-stage degradation sampling.

    Every sampled field is drawn uniformly from its range; degenerate
    (min == max) ranges pin the value.
    """

    scale1: Range = (0.25, 1.0)
    scale2: Range = (0.5, 2.0)
    kernel_sizes: tuple[int, ...] = (7, 11, 15, 21)
    blur_sigma: Range = (0.2, 3.0)
    aniso_prob: float = 0.5
    plateau_prob: float = 0.2
    plateau_beta: Range = (1.0, 2.0)
    gauss_sigma: Range = (0.0, 0.08)
    gray_noise_prob: float = 0.4
    poisson_scale: Range = (0.0, 2.5)
    jpeg_quality: tuple[int, int] = (30, 95)
    sinc_prob: float = 0.5
    sinc_cutoff: Range = (math.pi / 3, math.pi)
    filters: tuple[str, ...] = ("area", "bilinear", "bicubic")

    def validate(self) -> "SampleSpace":
        for name in ("scale1", "scale2", "blur_sigma", "plateau_beta", "gauss_sigma",
                     "poisson_scale", "sinc_cutoff"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ParameterError(f"range {name} is empty or malformed: ({lo}, {hi})")
        if self.jpeg_quality[0] > self.jpeg_quality[1]:
            raise ParameterError("jpeg_quality range is empty")
        if not self.kernel_sizes or not self.filters:
            raise ParameterError("kernel_sizes and filters must be non-empty")
        return self


def _uniform(rng: np.random.Generator, r: Range) -> float:
    return float(r[0]) if r[0] == r[1] else float(rng.uniform(r[0], r[1]))


def _sample_blur(rng: np.random.Generator, space: SampleSpace) -> BlurKernelSpec:
    size = int(rng.choice(np.asarray(space.kernel_sizes)))
    sx = _uniform(rng, space.blur_sigma)
    if rng.random() < space.plateau_prob:
        return BlurKernelSpec(
            "plateau-anisotropic", size=size, sigma_x=sx,
            sigma_y=_uniform(rng, space.blur_sigma), rotation=float(rng.uniform(-math.pi, math.pi)),
            plateau_beta=_uniform(rng, space.plateau_beta),
        )
    if rng.random() < space.aniso_prob:
        return BlurKernelSpec(
            "anisotropic-gaussian", size=size, sigma_x=sx,
            sigma_y=_uniform(rng, space.blur_sigma), rotation=float(rng.uniform(-math.pi, math.pi)),
        )
    return BlurKernelSpec("isotropic-gaussian", size=size, sigma_x=sx, sigma_y=sx)


def _sample_stage(rng: np.random.Generator, space: SampleSpace, scale_range: Range,
                  with_sinc: bool) -> StageSpec:
    qlo, qhi = space.jpeg_quality
    sinc = None
    if with_sinc and rng.random() < space.sinc_prob:
        sinc = BlurKernelSpec("sinc", size=11, cutoff=_uniform(rng, space.sinc_cutoff))
    return StageSpec(
        resize_scale=_uniform(rng, scale_range),
        resize_filter=str(rng.choice(np.asarray(space.filters))),
        blur=_sample_blur(rng, space),
        gaussian_noise=GaussianNoiseSpec(
            sigma=_uniform(rng, space.gauss_sigma),
            gray=bool(rng.random() < space.gray_noise_prob),
        ),
        poisson_noise=PoissonNoiseSpec(
            scale=_uniform(rng, space.poisson_scale),
            color=bool(rng.random() < 0.5),
        ),
        jpeg_quality=int(rng.integers(qlo, qhi + 1)),
        final_sinc=sinc,
    )


def sample_spec(rng: np.random.Generator, space: SampleSpace | None = None) -> DegradationSpec:
    """Draw a fresh two-stage spec from the configured ranges.

    Labels are fresh 63-bit draws, distinct across distinct sub-seeds.
    """
    space = (space or SampleSpace()).validate()
    stage1 = _sample_stage(rng, space, space.scale1, with_sinc=False)
    stage2 = _sample_stage(rng, space, space.scale2, with_sinc=True)
    label = int(rng.integers(0, 2**63 - 1))
    return DegradationSpec(stage1=stage1, stage2=stage2, label=label).validate()

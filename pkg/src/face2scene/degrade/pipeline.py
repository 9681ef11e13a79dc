"""Two-stage synthetic degradation operators.

A degradation spec composes two stages; each stage optionally resizes,
blurs, injects Gaussian and Poisson noise, runs a JPEG round-trip, and
applies a final sinc filter, in that fixed order. Pipelines whose
composed scale differs from 1 are resampled back to the source
resolution as the final step, so restoration always sees same-size
LQ/HQ pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import cv2
import numpy as np
from scipy import ndimage

from ..errors import ParameterError
from ..imgio import check_image, to_gray
from .jpeg import jpeg_roundtrip
from .kernels import BlurKernelSpec, build_kernel
from .spatial import SpatialBlurField, apply_spatial_blur

_RESIZE_FILTERS = {
    "area": cv2.INTER_AREA,
    "bilinear": cv2.INTER_LINEAR,
    "bicubic": cv2.INTER_CUBIC,
}


@dataclass(frozen=True)
class GaussianNoiseSpec:
    sigma: float = 0.0  # [0,1] pixel units
    gray: bool = False


@dataclass(frozen=True)
class PoissonNoiseSpec:
    scale: float = 0.0  # 0 disables; larger = noisier
    color: bool = False


@dataclass(frozen=True)
class StageSpec:
    resize_scale: float = 1.0
    resize_filter: str = "bilinear"
    blur: BlurKernelSpec | None = None
    gaussian_noise: GaussianNoiseSpec = field(default_factory=GaussianNoiseSpec)
    poisson_noise: PoissonNoiseSpec = field(default_factory=PoissonNoiseSpec)
    jpeg_quality: int | None = None
    final_sinc: BlurKernelSpec | None = None

    def validate(self) -> "StageSpec":
        if self.resize_scale <= 0 or not np.isfinite(self.resize_scale):
            raise ParameterError(f"resize_scale must be > 0, got {self.resize_scale}")
        if self.resize_filter not in _RESIZE_FILTERS:
            raise ParameterError(f"unknown resize filter {self.resize_filter!r}")
        if self.gaussian_noise.sigma < 0 or self.gaussian_noise.sigma > 1:
            raise ParameterError("gaussian sigma must lie in [0, 1]")
        if self.poisson_noise.scale < 0:
            raise ParameterError("poisson scale must be >= 0")
        if self.jpeg_quality is not None and not 1 <= self.jpeg_quality <= 100:
            raise ParameterError(f"jpeg quality must be in [1,100], got {self.jpeg_quality}")
        for k in (self.blur, self.final_sinc):
            if k is not None:
                k.validate()
        return self

    @property
    def is_identity(self) -> bool:
        return (
            self.resize_scale == 1.0
            and self.blur is None
            and self.gaussian_noise.sigma == 0.0
            and self.poisson_noise.scale == 0.0
            and self.jpeg_quality is None
            and self.final_sinc is None
        )


@dataclass(frozen=True)
class DegradationSpec:
    stage1: StageSpec
    stage2: StageSpec
    label: int = 0

    def validate(self) -> "DegradationSpec":
        if self.label < 0:
            raise ParameterError(f"label must be >= 0, got {self.label}")
        self.stage1.validate()
        self.stage2.validate()
        return self


def convolve_image(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D convolution with reflect padding."""
    out = np.empty_like(img, dtype=np.float32)
    for c in range(img.shape[2]):
        out[..., c] = ndimage.convolve(img[..., c].astype(np.float64), kernel, mode="reflect")
    return out


def _resize(img: np.ndarray, scale: float, filt: str) -> np.ndarray:
    h, w = img.shape[:2]
    nh, nw = int(round(h * scale)), int(round(w * scale))
    if nh < 1 or nw < 1:
        raise ParameterError(f"resize to {nh}x{nw} collapses the image")
    out = cv2.resize(img.astype(np.float32), (nw, nh), interpolation=_RESIZE_FILTERS[filt])
    return np.atleast_3d(out)


def _add_gaussian(img: np.ndarray, spec: GaussianNoiseSpec, rng: np.random.Generator) -> np.ndarray:
    h, w, _ = img.shape
    if spec.gray:
        noise = rng.standard_normal((h, w, 1)) * spec.sigma
    else:
        noise = rng.standard_normal((h, w, 3)) * spec.sigma
    return (img + noise).astype(np.float32)


def _add_poisson(img: np.ndarray, spec: PoissonNoiseSpec, rng: np.random.Generator) -> np.ndarray:
    # out = Poisson(in * lam) / lam with lam = 255 / scale: the analog of
    # shot noise on an 8-bit sensor, stronger for larger ``scale``.
    lam = 255.0 / spec.scale
    base = np.clip(img, 0.0, 1.0)
    if spec.color:
        out = rng.poisson(base * lam).astype(np.float64) / lam
        return out.astype(np.float32)
    gray = np.clip(to_gray(base), 0.0, 1.0)
    noise = rng.poisson(gray * lam).astype(np.float64) / lam - gray
    return (img + noise[..., None]).astype(np.float32)


def apply_stage(img: np.ndarray, s: StageSpec, rng: np.random.Generator) -> np.ndarray:
    """Run one degradation stage; bit-identical for equal (img, s, seed)."""
    check_image(img)
    s.validate()
    if s.is_identity:
        return img.astype(np.float32).copy()
    out = img.astype(np.float32)
    if s.resize_scale != 1.0:
        out = _resize(out, s.resize_scale, s.resize_filter)
    if s.blur is not None:
        out = convolve_image(out, build_kernel(s.blur))
    if s.gaussian_noise.sigma > 0:
        out = _add_gaussian(out, s.gaussian_noise, rng)
    if s.poisson_noise.scale > 0:
        out = _add_poisson(out, s.poisson_noise, rng)
    out = np.clip(out, 0.0, 1.0)
    if s.jpeg_quality is not None:
        out = jpeg_roundtrip(out, s.jpeg_quality)
    if s.final_sinc is not None:
        out = convolve_image(out, build_kernel(s.final_sinc))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def apply_pipeline(
    img: np.ndarray,
    d: DegradationSpec,
    rng: np.random.Generator,
    spatial_blur: SpatialBlurField | None = None,
) -> np.ndarray:
    """Apply both stages, then resample back to the input resolution.

    ``spatial_blur`` replaces the first stage's blur with a
    position-dependent field while leaving everything else unchanged.
    """
    check_image(img)
    d.validate()
    h, w = img.shape[:2]
    rng1, rng2 = rng.spawn(2)
    stage1 = d.stage1
    if spatial_blur is not None:
        pre = replace(stage1, blur=None, gaussian_noise=GaussianNoiseSpec(),
                      poisson_noise=PoissonNoiseSpec(), jpeg_quality=None, final_sinc=None)
        post = replace(stage1, resize_scale=1.0, blur=None)
        out = apply_stage(img, pre, rng1)
        out = apply_spatial_blur(out, spatial_blur, rng1)
        out = apply_stage(out, post, rng1)
    else:
        out = apply_stage(img, stage1, rng1)
    out = apply_stage(out, d.stage2, rng2)
    if out.shape[:2] != (h, w):
        out = np.atleast_3d(cv2.resize(out, (w, h), interpolation=cv2.INTER_LINEAR))
        out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return out

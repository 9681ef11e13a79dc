"""Blur kernel construction for the synthetic degradation operators.

Supported families: isotropic / anisotropic Gaussian, plateau-anisotropic,
circular sinc low-pass, and a delta ("none") kernel. All kernels are
normalized to unit sum; Gaussian and plateau kernels are non-negative,
sinc kernels may carry negative ringing lobes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j1

from ..errors import ParameterError

FAMILIES = ("isotropic-gaussian", "anisotropic-gaussian", "plateau-anisotropic", "sinc", "none")


@dataclass(frozen=True)
class BlurKernelSpec:
    family: str
    size: int = 1
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    rotation: float = 0.0
    plateau_beta: float = 1.5
    cutoff: float = math.pi  # sinc family only, in (0, pi]

    def validate(self) -> "BlurKernelSpec":
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown kernel family {self.family!r}")
        if self.size < 1 or self.size % 2 == 0:
            raise ParameterError(f"kernel size must be odd and >= 1, got {self.size}")
        if self.family in ("isotropic-gaussian", "anisotropic-gaussian", "plateau-anisotropic"):
            for s in (self.sigma_x, self.sigma_y):
                if not math.isfinite(s) or s <= 0:
                    raise ParameterError(f"sigma must be finite and > 0, got {s}")
        if self.family == "plateau-anisotropic" and self.plateau_beta <= 0:
            raise ParameterError(f"plateau_beta must be > 0, got {self.plateau_beta}")
        if self.family == "sinc" and not (0 < self.cutoff <= math.pi):
            raise ParameterError(f"sinc cutoff must lie in (0, pi], got {self.cutoff}")
        return self


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    return np.meshgrid(ax, ax, indexing="xy")


def _mahalanobis_sq(spec: BlurKernelSpec) -> np.ndarray:
    """x^T Sigma^-1 x on the kernel grid, Sigma = R diag(sx^2, sy^2) R^T."""
    xx, yy = _grid(spec.size)
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    # rotate coordinates into the kernel's principal frame
    xr = c * xx + s * yy
    yr = -s * xx + c * yy
    return (xr / spec.sigma_x) ** 2 + (yr / spec.sigma_y) ** 2


def build_kernel(spec: BlurKernelSpec) -> np.ndarray:
    """Construct the 2-D kernel described by ``spec``, normalized to sum 1."""
    spec.validate()
    size = spec.size
    if spec.family == "none":
        k = np.zeros((size, size), dtype=np.float64)
        k[size // 2, size // 2] = 1.0
        return k
    if spec.family == "isotropic-gaussian":
        xx, yy = _grid(size)
        d2 = (xx**2 + yy**2) / (spec.sigma_x**2)
        k = np.exp(-0.5 * d2)
    elif spec.family == "anisotropic-gaussian":
        k = np.exp(-0.5 * _mahalanobis_sq(spec))
    elif spec.family == "plateau-anisotropic":
        k = 1.0 / (1.0 + _mahalanobis_sq(spec) ** spec.plateau_beta)
    else:  # sinc: circular low-pass with the given cutoff frequency
        xx, yy = _grid(size)
        r = np.hypot(xx, yy)
        with np.errstate(invalid="ignore", divide="ignore"):
            k = spec.cutoff * j1(spec.cutoff * r) / (2.0 * math.pi * r)
        k[size // 2, size // 2] = spec.cutoff**2 / (4.0 * math.pi)
    total = k.sum()
    if total == 0 or not np.isfinite(total):
        # degenerate sigma underflow: fall back to the delta limit
        k = np.zeros((size, size), dtype=np.float64)
        k[size // 2, size // 2] = 1.0
        return k
    return k / total

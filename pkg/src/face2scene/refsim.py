"""Oracle stand-in for reference-based face restoration.

A real deployment would reconstruct the HQ face from identity
references; this simulator returns the ground-truth crop perturbed by a
controlled amount of blur and noise per quality level, so downstream
robustness studies can sweep restoration quality without any learned
face model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade.spatial import gaussian_blur
from .errors import ParameterError
from .imgio import check_image

# (noise sigma, blur sigma) per level; severity strictly increases.
LEVELS = {
    "gt": (0.0, 0.0),
    "good": (0.01, 0.3),
    "medium": (0.03, 0.6),
    "bad": (0.08, 1.2),
}
LEVEL_ORDER = ("gt", "good", "medium", "bad")


@dataclass(frozen=True)
class OracleQuality:
    level: str
    perturb_sigma: float
    perturb_blur: float

    def validate(self) -> "OracleQuality":
        if self.level not in LEVELS:
            raise ParameterError(f"unknown quality level {self.level!r}")
        if self.perturb_sigma < 0 or self.perturb_blur < 0:
            raise ParameterError("perturbation strengths must be >= 0")
        if self.level == "gt" and (self.perturb_sigma != 0 or self.perturb_blur != 0):
            raise ParameterError("gt level must carry zero perturbation")
        return self


def quality(level: str) -> OracleQuality:
    if level not in LEVELS:
        raise ParameterError(f"unknown quality level {level!r}; choose from {LEVEL_ORDER}")
    sigma, blur = LEVELS[level]
    return OracleQuality(level=level, perturb_sigma=sigma, perturb_blur=blur)


def oracle_restore(gt_face: np.ndarray, q: OracleQuality | str, rng: np.random.Generator) -> np.ndarray:
    """Simulated HQ reconstruction of a face crop at the requested quality."""
    if isinstance(q, str):
        q = quality(q)
    q.validate()
    check_image(gt_face)
    if q.level == "gt":
        return gt_face.astype(np.float32).copy()
    out = gt_face.astype(np.float32)
    if q.perturb_blur > 0:
        out = gaussian_blur(out, q.perturb_blur)
    if q.perturb_sigma > 0:
        out = out + rng.standard_normal(out.shape) * q.perturb_sigma
    return np.clip(out, 0.0, 1.0).astype(np.float32)

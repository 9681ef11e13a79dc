"""Face crop alignment, inverse warping, and soft-mask compositing.

Faces are aligned to a canonical square frame with a similarity
transform (rotation + uniform scale + translation) estimated by least
squares from the eye/mouth landmarks; the warp is stored so the restored
face can be placed back at its native scale and location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import AnnotationError, ParameterError, ShapeError
from .imgio import check_image

# Canonical landmark template, as fractions of the canonical side:
# eyes on one horizontal line, mouth centered below.
TEMPLATE = {
    "left_eye": (0.35, 0.40),
    "right_eye": (0.65, 0.40),
    "mouth": (0.50, 0.75),
}
LANDMARK_NAMES = ("left_eye", "right_eye", "mouth")


@dataclass(frozen=True)
class FaceAnnotation:
    bbox: tuple[int, int, int, int]  # x, y, w, h in scene pixels
    landmarks: dict[str, tuple[float, float]]

    def validate(self, scene_shape: tuple[int, ...] | None = None) -> "FaceAnnotation":
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise AnnotationError(f"empty bbox {self.bbox}")
        for name in LANDMARK_NAMES:
            if name not in self.landmarks:
                raise AnnotationError(f"missing landmark {name!r}")
            lx, ly = self.landmarks[name]
            if not (x <= lx <= x + w and y <= ly <= y + h):
                raise AnnotationError(f"landmark {name} at ({lx:.1f},{ly:.1f}) outside bbox {self.bbox}")
        if self.landmarks["left_eye"][0] >= self.landmarks["right_eye"][0]:
            raise AnnotationError("left eye must lie left of right eye")
        if scene_shape is not None:
            sh, sw = scene_shape[:2]
            if x < 0 or y < 0 or x + w > sw or y + h > sh:
                raise AnnotationError(f"bbox {self.bbox} outside {sw}x{sh} scene")
        return self


@dataclass(frozen=True)
class RigidWarp:
    """Similarity map scene -> canonical: p' = s * R(theta) * p + t."""

    rotation: float
    translation: tuple[float, float]
    scale: float
    canonical_size: int

    def matrix(self) -> np.ndarray:
        if self.scale <= 0:
            raise ParameterError(f"warp scale must be > 0, got {self.scale}")
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        m = np.array(
            [
                [self.scale * c, -self.scale * s, self.translation[0]],
                [self.scale * s, self.scale * c, self.translation[1]],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )
        return m

    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix())

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix()[:2, :2].T + np.asarray(self.translation)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        inv = self.inverse_matrix()
        pts = np.asarray(points, dtype=np.float64)
        return pts @ inv[:2, :2].T + inv[:2, 2]


@dataclass(frozen=True)
class FacePair:
    hq: np.ndarray
    lq: np.ndarray
    warp: RigidWarp
    source_label: int = 0


def template_points(canonical_size: int) -> np.ndarray:
    return np.array([TEMPLATE[n] for n in LANDMARK_NAMES], dtype=np.float64) * canonical_size


def estimate_similarity(src: np.ndarray, dst: np.ndarray) -> tuple[float, float, tuple[float, float]]:
    """Least-squares similarity src -> dst; returns (scale, rotation, translation)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    sc, dc = src - mu_s, dst - mu_d
    var = (sc**2).sum()
    if var <= 0:
        raise AnnotationError("degenerate landmark configuration")
    # complex least squares: dst = a * src with a = s*e^{i*theta}
    zs = sc[:, 0] + 1j * sc[:, 1]
    zd = dc[:, 0] + 1j * dc[:, 1]
    a = (np.conj(zs) @ zd) / (np.conj(zs) @ zs)
    scale = abs(a)
    if scale <= 0:
        raise AnnotationError("estimated similarity collapsed to zero scale")
    rot = math.atan2(a.imag, a.real)
    c, s = math.cos(rot), math.sin(rot)
    r = np.array([[c, -s], [s, c]])
    t = mu_d - scale * (r @ mu_s)
    return float(scale), float(rot), (float(t[0]), float(t[1]))


def align_face(scene: np.ndarray, ann: FaceAnnotation, canonical_size: int) -> tuple[np.ndarray, RigidWarp]:
    """Warp the annotated face into the canonical frame.

    Returns the canonical_size x canonical_size crop and the recorded
    warp (scene -> canonical coordinates).
    """
    check_image(scene)
    ann.validate(scene.shape)
    if canonical_size < 16:
        raise ParameterError(f"canonical_size must be >= 16, got {canonical_size}")
    src = np.array([ann.landmarks[n] for n in LANDMARK_NAMES], dtype=np.float64)
    dst = template_points(canonical_size)
    scale, rot, t = estimate_similarity(src, dst)
    warp = RigidWarp(rotation=rot, translation=t, scale=scale, canonical_size=canonical_size)
    m = warp.matrix()[:2, :]
    face = cv2.warpAffine(
        scene.astype(np.float32), m, (canonical_size, canonical_size),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT,
    )
    return np.atleast_3d(face), warp


def crop_with_warp(scene: np.ndarray, warp: RigidWarp) -> np.ndarray:
    """Re-apply a recorded warp to another same-geometry scene (e.g. its LQ twin)."""
    check_image(scene)
    m = warp.matrix()[:2, :]
    s = warp.canonical_size
    face = cv2.warpAffine(scene.astype(np.float32), m, (s, s),
                          flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)
    return np.atleast_3d(face)


def invert_warp(face: np.ndarray, warp: RigidWarp, scene_shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Place a canonical-frame face back into scene coordinates.

    Returns (patch, mask): the patch is zero outside the warped face;
    the mask marks pixel coverage in [0, 1].
    """
    check_image(face)
    h, w = int(scene_shape[0]), int(scene_shape[1])
    minv = warp.inverse_matrix()[:2, :]
    patch = cv2.warpAffine(face.astype(np.float32), minv, (w, h),
                           flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    ones = np.ones(face.shape[:2], dtype=np.float32)
    mask = cv2.warpAffine(ones, minv, (w, h),
                          flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    return np.atleast_3d(patch), np.clip(mask, 0.0, 1.0)


def soft_mask(bbox: tuple[int, int, int, int], image_shape: tuple[int, ...], feather: int) -> np.ndarray:
    """Box mask that is 1 on the eroded interior and ramps to 0 at the bbox edge."""
    x, y, w, h = bbox
    if feather < 0:
        raise ParameterError("feather must be >= 0")
    if 2 * feather >= min(w, h):
        raise ParameterError(f"feather {feather} too large for bbox {w}x{h}")
    ih, iw = int(image_shape[0]), int(image_shape[1])
    mask = np.zeros((ih, iw), dtype=np.float32)
    yy, xx = np.mgrid[0:ih, 0:iw]
    inside = (xx >= x) & (xx < x + w) & (yy >= y) & (yy < y + h)
    if feather == 0:
        mask[inside] = 1.0
        return mask
    # distance (in pixels) from the pixel center to the bbox exterior
    d = np.minimum.reduce([xx - x + 1, x + w - xx, yy - y + 1, y + h - yy]).astype(np.float32)
    mask = np.clip(d / float(feather), 0.0, 1.0)
    mask[~inside] = 0.0
    return mask


def blend_insert(prediction: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Exact per-pixel composite mask*gt + (1-mask)*prediction."""
    prediction = check_image(prediction)
    gt = check_image(gt)
    if prediction.shape != gt.shape:
        raise ShapeError(f"prediction {prediction.shape} vs gt {gt.shape}")
    m = np.asarray(mask, dtype=np.float32)
    if m.shape != prediction.shape[:2]:
        raise ShapeError(f"mask {m.shape} does not match image {prediction.shape[:2]}")
    m = m[..., None]
    return (m * gt.astype(np.float32) + (1.0 - m) * prediction.astype(np.float32)).astype(np.float32)

"""Image carriers and PNG I/O.

Images are H x W x 3 float32 arrays in [0, 1] everywhere in this package.
Files on disk are 8-bit PNGs; loading divides by 255, saving rounds.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import ShapeError


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float image to uint8 with round-half-away behaviour."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return (arr.astype(np.float32) / 255.0).astype(np.float32)


def load_image(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_uint8(arr)


def save_image(path: str | os.PathLike, img: np.ndarray) -> None:
    check_image(img)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate the universal pixel-carrier contract."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected H x W x 3 image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ShapeError("image contains NaN or Inf")
    return img


def to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image in [0,1]."""
    img = np.asarray(img, dtype=np.float32)
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114

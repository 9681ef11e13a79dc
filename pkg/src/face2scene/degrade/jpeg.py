"""In-process baseline-JPEG round-trip.

External codecs differ across platforms, which would break golden-image
tests; this module reproduces the lossy core of baseline JPEG (YCbCr
transform, 8x8 block DCT, quality-scaled quantization) with one canonical
implementation. No entropy coding: that part of the format is lossless.
Chroma is kept at full resolution (4:4:4).
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError

# Annex K luminance / chrominance quantization tables.
_Q_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_Q_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix() -> np.ndarray:
    n = 8
    t = np.zeros((n, n), dtype=np.float64)
    for k in range(n):
        for i in range(n):
            t[k, i] = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    t[0, :] *= np.sqrt(1.0 / n)
    t[1:, :] *= np.sqrt(2.0 / n)
    return t


_DCT = _dct_matrix()


def quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Quality-scaled quantization tables (IJG scaling convention)."""
    if not 1 <= int(quality) <= 100:
        raise ParameterError(f"jpeg quality must be in [1, 100], got {quality}")
    q = int(quality)
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    tables = []
    for base in (_Q_LUMA, _Q_CHROMA):
        tbl = np.floor((base * scale + 50.0) / 100.0)
        tables.append(np.clip(tbl, 1, 255))
    return tables[0], tables[1]


def _rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b
    return np.stack([y, cb, cr], axis=-1)


def _ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136286 * cb - 0.714136286 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _blocks(channel: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = channel.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(channel, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    b = padded.reshape(hh // 8, 8, ww // 8, 8).transpose(0, 2, 1, 3)
    return b, (h, w)


def _unblocks(blocks: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    nh, nw = blocks.shape[:2]
    full = blocks.transpose(0, 2, 1, 3).reshape(nh * 8, nw * 8)
    return full[: shape[0], : shape[1]]


def _quantize_channel(channel: np.ndarray, qtbl: np.ndarray) -> np.ndarray:
    blocks, shape = _blocks(channel - 128.0)
    coef = np.einsum("ki,nmij,lj->nmkl", _DCT, blocks, _DCT)
    coef = np.rint(coef / qtbl) * qtbl
    rec = np.einsum("ki,nmkl,lj->nmij", _DCT, coef, _DCT)
    return _unblocks(rec, shape) + 128.0


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode/decode a [0,1] RGB image at the given quality.

    Operates on 8-bit quantized pixel values and returns a re-normalized
    [0,1] float32 image, exactly as a file round-trip would.
    """
    qy, qc = quant_tables(quality)
    x = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255)
    ycc = _rgb_to_ycbcr(x)
    out = np.empty_like(ycc)
    out[..., 0] = _quantize_channel(ycc[..., 0], qy)
    out[..., 1] = _quantize_channel(ycc[..., 1], qc)
    out[..., 2] = _quantize_channel(ycc[..., 2], qc)
    rgb = np.clip(np.rint(_ycbcr_to_rgb(out)), 0, 255)
    return (rgb / 255.0).astype(np.float32)

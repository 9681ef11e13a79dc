"""Reference metrics, sharpness scoring, and evaluation protocols.

Built-in metrics are PSNR, SSIM, and the Laplacian blur score. External
no-reference scorers (IQA models, embedding distances, ...) plug in
through a name -> callable registry and are never bundled.
"""

from __future__ import annotations

import json
import os
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError
from .facegeom import FaceAnnotation, blend_insert, soft_mask
from .imgio import check_image, to_gray

PSNR_CAP_DB = 100.0
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2

LAPLACIAN_3X3 = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)

# name -> callable(list of images) -> list of floats
ExternalScorer = Callable[[list[np.ndarray]], list[float]]
_EXTERNAL_SCORERS: dict[str, ExternalScorer] = {}


def register_scorer(name: str, fn: ExternalScorer) -> None:
    """Attach an external batch scorer (e.g. a pretrained IQA model)."""
    _EXTERNAL_SCORERS[name] = fn


def get_scorer(name: str) -> ExternalScorer:
    if name not in _EXTERNAL_SCORERS:
        raise ParameterError(f"no external scorer registered under {name!r}")
    return _EXTERNAL_SCORERS[name]


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB at peak 1.0, capped at 100 dB."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray, window: int = 7, c1: float = _SSIM_C1, c2: float = _SSIM_C2,
         grayscale: bool = True) -> float:
    """Mean local structural similarity with a uniform window.

    Images with three channels are compared on BT.601 luma by default;
    set grayscale=False to average per-channel SSIM instead.
    """
    a, b = _pair(a, b)
    if window < 2:
        raise ParameterError(f"window must be >= 2, got {window}")
    if a.ndim == 3:
        if grayscale:
            return ssim(to_gray(a), to_gray(b), window, c1, c2)
        return float(np.mean([ssim(a[..., c], b[..., c], window, c1, c2) for c in range(a.shape[2])]))
    if min(a.shape) < window:
        raise ParameterError(f"image {a.shape} smaller than window {window}")

    def local_mean(x):
        return ndimage.uniform_filter(x, size=window, mode="constant")[_valid(a.shape, window)]

    mu_a, mu_b = local_mean(a), local_mean(b)
    mu_aa, mu_bb, mu_ab = local_mean(a * a), local_mean(b * b), local_mean(a * b)
    var_a = mu_aa - mu_a**2
    var_b = mu_bb - mu_b**2
    cov = mu_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _valid(shape: tuple[int, ...], window: int):
    # central positions where the uniform filter window is fully inside
    lo = window // 2
    return tuple(slice(lo, n - (window - 1 - lo)) for n in shape)


def laplacian_blur_score(img: np.ndarray) -> float:
    """Variance of the 3x3 Laplacian response; higher = sharper."""
    arr = np.asarray(img, dtype=np.float64)
    gray = to_gray(arr) if arr.ndim == 3 else arr
    resp = ndimage.convolve(gray, LAPLACIAN_3X3, mode="reflect")
    return float(resp.var())


def eval_gt_face_inserted(
    preds: Iterable[np.ndarray],
    gts: Iterable[np.ndarray],
    annotations: Iterable[FaceAnnotation],
    feather: int | None = None,
    face_only: bool = False,
) -> dict:
    """Score predictions with the ground-truth face composited back in.

    Isolates scene (non-face) quality: inside the soft mask the
    prediction is replaced by GT before scoring. With face_only=True the
    metrics are instead computed on the raw bbox crops (no insertion).
    """
    rows = []
    for i, (pred, gt, ann) in enumerate(zip(preds, gts, annotations)):
        check_image(pred)
        check_image(gt)
        if ann is None:
            raise ParameterError(f"record {i} is missing a face annotation")
        x, y, w, h = ann.bbox
        if face_only:
            p = pred[y : y + h, x : x + w]
            g = gt[y : y + h, x : x + w]
            scored = p
            ref = g
        else:
            f = feather if feather is not None else max(0, int(round(0.1 * min(w, h))))
            mask = soft_mask(ann.bbox, pred.shape, f)
            scored = blend_insert(pred, gt, mask)
            ref = gt
        rows.append(
            {
                "id": i,
                "psnr": psnr(scored, ref),
                "ssim": ssim(scored, ref),
                "blur_score": laplacian_blur_score(scored),
            }
        )
    summary = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "blur_score")}
    return {"mode": "face_only" if face_only else "gt_face_inserted", "rows": rows, "mean": summary}


def write_results(path: str | os.PathLike, table: dict) -> None:
    """Write a metric table: one text row per image plus a JSON summary."""
    path = str(path)
    rows = table.get("rows", [])
    lines = []
    for r in rows:
        cells = [str(r.get("id", ""))] + [f"{k}={r[k]:.6f}" for k in sorted(r) if k != "id"]
        lines.append("\t".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True, default=float)


def robustness_report(
    fadex_model,
    bundle,
    records,
    dataset_root,
    levels: tuple[str, ...] = ("gt", "good", "medium", "bad"),
    seeds: tuple[int, ...] = (0, 1, 2),
    cfg_scale: float | None = None,
    tolerance_db: float = 0.0,
) -> dict:
    """Restoration quality per oracle quality level, with trend flags.

    Runs full inference at every level and seed; the expectation is that
    PSNR decreases as the simulated face reconstruction worsens, so any
    adjacent pair where a worse level scores higher (beyond the
    tolerance) is flagged as a monotonicity violation.
    """
    from pathlib import Path

    from .imgio import load_image
    from .restorer import infer

    root = Path(dataset_root)
    per_level: dict[str, dict] = {}
    for level in levels:
        seed_means = []
        rows = []
        for s in seeds:
            vals = []
            for rec in records:
                hq = load_image(root / rec.scene_path)
                lq = load_image(root / rec.degradations[0].path)
                out = infer(lq, hq, rec.annotation, fadex_model, bundle,
                            refq=level, cfg_scale=cfg_scale, seed=s)
                vals.append(psnr(out, hq))
            seed_means.append(float(np.mean(vals)))
            rows.append({"id": f"seed{s}", "psnr": float(np.mean(vals))})
        per_level[level] = {
            "mean_psnr": float(np.mean(seed_means)),
            "per_seed": seed_means,
            "rows": rows,
        }

    violations = []
    for a, b in zip(levels, levels[1:]):
        gap = per_level[a]["mean_psnr"] - per_level[b]["mean_psnr"]
        if gap < -tolerance_db:
            violations.append({"pair": [a, b], "gap_db": float(gap)})
    return {
        "levels": list(levels),
        "per_level": per_level,
        "violations": violations,
        "ordering_ok": not violations,
    }


def plot_loss_curve(losses, path: str | os.PathLike, title: str = "training loss") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(list(losses))
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_cossim_bars(report: dict, path_prefix: str) -> list[str]:
    """Two bar charts: same-degradation per preset, same-image per image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    panels = [
        ("same_degradation", "same degradation, across images", "preset"),
        ("same_image", "same image, across degradations", "image"),
    ]
    for key, title, xlabel in panels:
        entries = report[key]
        names = list(entries)
        means = [entries[n]["mean"] for n in names]
        stds = [entries[n]["std"] for n in names]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(range(len(names)), means, yerr=stds, capsize=3)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=0)
        ax.set_ylim(-1.0, 1.05)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("mean cosine similarity")
        ax.set_title(title)
        fig.tight_layout()
        out = f"{path_prefix}_{key}.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)
    return written

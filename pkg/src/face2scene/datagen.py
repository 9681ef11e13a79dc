"""Procedural toy dataset with ground-truth face annotations.

Scenes are synthetic backgrounds (gradients, stripes, checkers, value
noise) with a parametric face glyph whose landmarks are known exactly.
Each scene ships with pre-computed degraded variants; the manifest
records enough to reproduce every variant bit-exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import rng as rngmod
from .degrade import DegradationSpec, apply_pipeline, preset, sample_spec, spec_from_dict, spec_to_dict
from .degrade.sampling import SampleSpace
from .errors import DataError, ParameterError
from .evalkit import get_scorer, laplacian_blur_score
from .facegeom import FaceAnnotation, TEMPLATE
from .imgio import load_image, save_image


@dataclass(frozen=True)
class SceneParams:
    size: int = 96
    face_min: int = 24
    face_max: int = 44
    max_rotation_deg: float = 30.0

    def validate(self) -> "SceneParams":
        if self.size < 64:
            raise ParameterError(f"scene size must be >= 64, got {self.size}")
        if not 16 <= self.face_min <= self.face_max <= self.size // 2:
            raise ParameterError(
                f"face side range [{self.face_min}, {self.face_max}] must lie in [16, {self.size // 2}]"
            )
        return self


@dataclass
class DegradedVariant:
    spec_id: str
    seed: int
    path: str


@dataclass
class ManifestRecord:
    id: str
    scene_path: str
    annotation: FaceAnnotation
    split: str = "train"
    degradations: list[DegradedVariant] = field(default_factory=list)
    source: str = "toy"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "scene_path": self.scene_path,
            "annotation": {
                "bbox": list(self.annotation.bbox),
                "landmarks": {k: list(v) for k, v in self.annotation.landmarks.items()},
            },
            "split": self.split,
            "degradations": [
                {"spec_id": d.spec_id, "seed": d.seed, "path": d.path} for d in self.degradations
            ],
            "source": self.source,
        }

    @staticmethod
    def from_dict(d: dict) -> "ManifestRecord":
        ann = FaceAnnotation(
            bbox=tuple(int(v) for v in d["annotation"]["bbox"]),
            landmarks={k: (float(v[0]), float(v[1])) for k, v in d["annotation"]["landmarks"].items()},
        )
        return ManifestRecord(
            id=d["id"],
            scene_path=d["scene_path"],
            annotation=ann,
            split=d.get("split", "train"),
            degradations=[DegradedVariant(**v) for v in d.get("degradations", [])],
            source=d.get("source", "toy"),
        )


# ---------------------------------------------------------------------------
# scene synthesis


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    kind = rng.choice(np.asarray(["gradient", "stripes", "checker", "noise"]))
    c0 = rng.uniform(0.05, 0.95, size=3)
    c1 = rng.uniform(0.05, 0.95, size=3)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    if kind == "gradient":
        angle = rng.uniform(0, 2 * math.pi)
        t = (xx * math.cos(angle) + yy * math.sin(angle) + 1.0) / 2.0
    elif kind == "stripes":
        angle = rng.uniform(0, math.pi)
        period = rng.uniform(6, 24)
        phase = (xx * math.cos(angle) + yy * math.sin(angle)) * size / period
        t = 0.5 + 0.5 * np.sin(2 * math.pi * phase)
    elif kind == "checker":
        cells = int(rng.integers(4, 12))
        t = ((np.floor(xx * cells) + np.floor(yy * cells)) % 2).astype(np.float64)
    else:  # value noise: coarse random grid upsampled smoothly
        grid = int(rng.integers(4, 9))
        coarse = rng.random((grid, grid)).astype(np.float32)
        t = cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC).astype(np.float64)
        t = np.clip(t, 0, 1)
    bg = c0[None, None, :] * (1.0 - t[..., None]) + c1[None, None, :] * t[..., None]
    return np.clip(bg, 0.0, 1.0).astype(np.float32)


def _paint(img: np.ndarray, alpha: np.ndarray, color: np.ndarray) -> None:
    img *= 1.0 - alpha[..., None]
    img += alpha[..., None] * color[None, None, :]


def _ellipse_alpha(u: np.ndarray, v: np.ndarray, cx: float, cy: float, ax: float, ay: float,
                   aa: float) -> np.ndarray:
    # signed implicit ellipse, anti-aliased over ``aa`` units of u/v space
    q = np.sqrt(((u - cx) / ax) ** 2 + ((v - cy) / ay) ** 2)
    return np.clip((1.0 - q) / aa + 0.5, 0.0, 1.0)


def gen_scene(rng: np.random.Generator, params: SceneParams | None = None) -> tuple[np.ndarray, FaceAnnotation]:
    """Render one toy scene and its exact face annotation."""
    params = (params or SceneParams()).validate()
    size = params.size
    img = _background(rng, size).astype(np.float64)

    side = float(rng.uniform(params.face_min, params.face_max))
    theta = math.radians(float(rng.uniform(-params.max_rotation_deg, params.max_rotation_deg)))
    # the rotated glyph square must fit with a small margin
    half_ext = 0.5 * side * (abs(math.cos(theta)) + abs(math.sin(theta)))
    margin = half_ext + 2.0
    cx = float(rng.uniform(margin, size - margin))
    cy = float(rng.uniform(margin, size - margin))

    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    # scene pixel -> glyph unit coordinates
    dx, dy = xx - cx, yy - cy
    u = (c * dx + s * dy) / side + 0.5
    v = (-s * dx + c * dy) / side + 0.5

    aa = 1.5 / side  # ~1.5 px anti-aliasing band
    skin = np.array([rng.uniform(0.65, 0.9), rng.uniform(0.5, 0.72), rng.uniform(0.4, 0.6)])
    dark = np.array([0.08, 0.08, 0.1])
    lip = np.array([rng.uniform(0.55, 0.75), 0.2, 0.25])

    _paint(img, _ellipse_alpha(u, v, 0.5, 0.52, 0.42, 0.47, aa), skin)
    for ex, ey in (TEMPLATE["left_eye"], TEMPLATE["right_eye"]):
        _paint(img, _ellipse_alpha(u, v, ex, ey, 0.055, 0.055, aa), dark)
    mx, my = TEMPLATE["mouth"]
    _paint(img, _ellipse_alpha(u, v, mx, my, 0.16, 0.055, aa), lip)

    def to_scene(pt: tuple[float, float]) -> tuple[float, float]:
        ux, vy = (pt[0] - 0.5) * side, (pt[1] - 0.5) * side
        return (cx + c * ux - s * vy, cy + s * ux + c * vy)

    landmarks = {name: to_scene(TEMPLATE[name]) for name in ("left_eye", "right_eye", "mouth")}
    x0 = int(math.floor(cx - half_ext))
    y0 = int(math.floor(cy - half_ext))
    x1 = int(math.ceil(cx + half_ext))
    y1 = int(math.ceil(cy + half_ext))
    ann = FaceAnnotation(bbox=(x0, y0, x1 - x0, y1 - y0), landmarks=landmarks)
    scene = np.clip(img, 0.0, 1.0).astype(np.float32)
    ann.validate(scene.shape)
    return scene, ann


# ---------------------------------------------------------------------------
# dataset build + manifest I/O


def manifest_dumps(records: list[ManifestRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def write_manifest(path: str | os.PathLike, records: list[ManifestRecord]) -> None:
    Path(path).write_text(manifest_dumps(records), encoding="utf-8")


def read_manifest(path: str | os.PathLike, check_paths: bool = True) -> list[ManifestRecord]:
    root = Path(path).parent
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = ManifestRecord.from_dict(json.loads(line))
        if check_paths:
            for p in [rec.scene_path] + [d.path for d in rec.degradations]:
                if not (root / p).exists():
                    raise DataError(f"manifest entry {rec.id}: missing file {p}")
        records.append(rec)
    return records


def resolve_spec(spec_id: str, spec_table: dict[str, dict] | None = None) -> DegradationSpec:
    if spec_table and spec_id in spec_table:
        return spec_from_dict(spec_table[spec_id])
    return preset(spec_id)


def load_spec_table(dataset_root: str | os.PathLike) -> dict[str, dict]:
    p = Path(dataset_root) / "specs.json"
    if p.exists():
        return json.loads(p.read_text(encoding="utf-8"))
    return {}


def build_dataset(
    n: int,
    out_dir: str | os.PathLike,
    seed: int,
    presets_ids: tuple[str, ...] | None = ("d1", "d2", "d3", "d4"),
    sample_space: SampleSpace | None = None,
    variants: int = 5,
    scene_params: SceneParams | None = None,
    val_fraction: float = 0.2,
    test_fraction: float = 0.0,
) -> Path:
    """Generate scenes + degraded variants + manifest; returns the manifest path.

    With ``presets_ids`` set, variant k of every scene uses preset
    k % len(presets_ids); with ``sample_space`` set instead, each variant
    draws a fresh randomized spec (recorded in specs.json).
    """
    if presets_ids is None and sample_space is None:
        raise ParameterError("either presets_ids or sample_space is required")
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    params = (scene_params or SceneParams()).validate()

    spec_table: dict[str, dict] = {}
    records: list[ManifestRecord] = []
    n_val = int(round(n * val_fraction))
    n_test = int(round(n * test_fraction))
    n_train = n - n_val - n_test

    for i in range(n):
        sid = f"scene_{i:04d}"
        scene, ann = gen_scene(rngmod.stream(seed, "scene", sid), params)
        scene_rel = f"scenes/{sid}.png"
        save_image(out / scene_rel, scene)
        # degradation inputs must match what a later reader sees on disk
        scene_disk = load_image(out / scene_rel)

        variants_out: list[DegradedVariant] = []
        for k in range(variants):
            if presets_ids is not None:
                spec_id = presets_ids[k % len(presets_ids)]
                spec = preset(spec_id)
            else:
                spec = sample_spec(rngmod.stream(seed, "spec", sid, k), sample_space)
                spec_id = f"s{spec.label:x}"
                spec_table[spec_id] = spec_to_dict(spec)
            var_seed = rngmod.derive_seed(seed, "variant", sid, spec_id, k)
            lq = apply_pipeline(scene_disk, spec, rngmod.stream(var_seed))
            lq_rel = f"lq/{spec_id}/{sid}_v{k}.png"
            (out / "lq" / spec_id).mkdir(parents=True, exist_ok=True)
            save_image(out / lq_rel, lq)
            variants_out.append(DegradedVariant(spec_id=spec_id, seed=var_seed, path=lq_rel))

        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        records.append(
            ManifestRecord(id=sid, scene_path=scene_rel, annotation=ann, split=split,
                           degradations=variants_out)
        )

    if spec_table:
        (out / "specs.json").write_text(
            json.dumps(spec_table, indent=2, sort_keys=True), encoding="utf-8"
        )
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, records)
    return manifest_path


# ---------------------------------------------------------------------------
# curation


@dataclass(frozen=True)
class Filter:
    name: str
    threshold: float


BUILTIN_FILTERS = ("min-short-side", "face-present", "face-area", "blur-score")


def curate(
    records: list[ManifestRecord],
    filters: list[Filter],
    dataset_root: str | os.PathLike,
) -> tuple[list[ManifestRecord], list[tuple[str, str]]]:
    """Apply ordered predicate filters; returns (kept, rejection log).

    Built-ins: min-short-side (pixels), face-present (threshold ignored),
    face-area (fraction of image area), blur-score (Laplacian variance).
    Names of the form ``scorer:<name>`` call a registered external scorer
    and keep records scoring >= threshold.
    """
    root = Path(dataset_root)
    kept: list[ManifestRecord] = []
    log: list[tuple[str, str]] = []
    for rec in records:
        img = None
        verdict = None
        for f in filters:
            if f.name == "face-present":
                ok = rec.annotation is not None and len(rec.annotation.landmarks) == 3
            elif f.name == "min-short-side":
                img = load_image(root / rec.scene_path) if img is None else img
                ok = min(img.shape[:2]) >= f.threshold
            elif f.name == "face-area":
                img = load_image(root / rec.scene_path) if img is None else img
                _, _, w, h = rec.annotation.bbox
                ok = (w * h) / float(img.shape[0] * img.shape[1]) >= f.threshold
            elif f.name == "blur-score":
                img = load_image(root / rec.scene_path) if img is None else img
                ok = laplacian_blur_score(img) >= f.threshold
            elif f.name.startswith("scorer:"):
                img = load_image(root / rec.scene_path) if img is None else img
                score = get_scorer(f.name.split(":", 1)[1])([img])[0]
                ok = score >= f.threshold
            else:
                raise ParameterError(f"unknown filter {f.name!r}")
            if not ok:
                verdict = f.name
                break
        if verdict is None:
            kept.append(rec)
        else:
            log.append((rec.id, verdict))
    return kept, log

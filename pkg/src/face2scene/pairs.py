"""Assembly of aligned HQ-LQ face pairs from dataset manifests."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .datagen import ManifestRecord, load_spec_table, resolve_spec
from .facegeom import RigidWarp, align_face, crop_with_warp
from .imgio import load_image
from .refsim import oracle_restore


@dataclass
class TrainingSample:
    """One aligned face pair plus the degraded/clean scenes it came from."""

    record_id: str
    hq_face: np.ndarray  # oracle output (the conditioning HQ face)
    lq_face: np.ndarray
    label: int
    warp: RigidWarp
    scene_hq: np.ndarray
    scene_lq: np.ndarray
    spec_id: str


def build_samples(
    records: list[ManifestRecord],
    dataset_root: str | Path,
    canonical_size: int = 32,
    refq: str = "gt",
    seed: int = 0,
    max_variants: int | None = None,
) -> list[TrainingSample]:
    """Load every (scene, variant) pair and align its face crops.

    The HQ face fed to the degradation encoder is the oracle
    reconstruction at quality ``refq`` (level "gt" returns the true
    crop); the LQ face is the same warp applied to the degraded scene.
    """
    root = Path(dataset_root)
    spec_table = load_spec_table(root)
    samples: list[TrainingSample] = []
    for rec in records:
        scene_hq = load_image(root / rec.scene_path)
        hq_face, warp = align_face(scene_hq, rec.annotation, canonical_size)
        variants = rec.degradations[:max_variants] if max_variants else rec.degradations
        for k, var in enumerate(variants):
            scene_lq = load_image(root / var.path)
            lq_face = crop_with_warp(scene_lq, warp)
            oracle = oracle_restore(hq_face, refq, rngmod.stream(seed, "oracle", rec.id, k))
            label = resolve_spec(var.spec_id, spec_table).label
            samples.append(
                TrainingSample(
                    record_id=rec.id,
                    hq_face=oracle,
                    lq_face=lq_face,
                    label=label,
                    warp=warp,
                    scene_hq=scene_hq,
                    scene_lq=scene_lq,
                    spec_id=var.spec_id,
                )
            )
    return samples

"""Synthetic degradation operators: kernels, two-stage pipelines, presets."""

from .jpeg import jpeg_roundtrip, quant_tables
from .kernels import FAMILIES, BlurKernelSpec, build_kernel
from .pipeline import (
    DegradationSpec,
    GaussianNoiseSpec,
    PoissonNoiseSpec,
    StageSpec,
    apply_pipeline,
    apply_stage,
    convolve_image,
)
from .presets import (
    PRESET_IDS,
    kernel_from_dict,
    kernel_to_dict,
    load_preset_table,
    preset,
    spec_from_dict,
    spec_to_dict,
    stage_from_dict,
    stage_to_dict,
)
from .sampling import SampleSpace, sample_spec
from .spatial import SpatialBlurField, apply_spatial_blur, gaussian_blur

__all__ = [
    "FAMILIES",
    "PRESET_IDS",
    "BlurKernelSpec",
    "DegradationSpec",
    "GaussianNoiseSpec",
    "PoissonNoiseSpec",
    "SampleSpace",
    "SpatialBlurField",
    "StageSpec",
    "apply_pipeline",
    "apply_spatial_blur",
    "apply_stage",
    "build_kernel",
    "convolve_image",
    "gaussian_blur",
    "jpeg_roundtrip",
    "kernel_from_dict",
    "kernel_to_dict",
    "load_preset_table",
    "preset",
    "quant_tables",
    "sample_spec",
    "spec_from_dict",
    "spec_to_dict",
    "stage_from_dict",
    "stage_to_dict",
]

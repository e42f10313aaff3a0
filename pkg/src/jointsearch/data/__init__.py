"""Datasets, seeded splits and the fixed preprocessing pipeline."""

from .datasets import (
    FORMATS,
    BadMagicError,
    Dataset,
    DatasetError,
    LabelRangeError,
    TruncatedError,
    batch_indices,
    load_dataset,
    load_png_dir,
    load_raw,
    make_color_vs_shape,
    split,
    write_png_dir,
    write_raw,
)
from .preprocess import (
    Pipeline,
    PreprocessConfig,
    baseline_preprocess,
    cutout,
    cutout_mask,
    expected_cutout_area,
    normalize_batch,
)

__all__ = [
    "BadMagicError", "Dataset", "DatasetError", "FORMATS", "LabelRangeError", "Pipeline",
    "PreprocessConfig", "TruncatedError", "baseline_preprocess", "batch_indices", "cutout",
    "cutout_mask", "expected_cutout_area", "load_dataset", "load_png_dir", "load_raw",
    "make_color_vs_shape", "normalize_batch", "split", "write_png_dir", "write_raw",
]

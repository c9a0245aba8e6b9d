"""Synthetic corpus generation, preprocessing recipes and manifests."""

from .manifest import ManifestError, read_manifest, write_manifest
from .preprocess import (
    PRESETS,
    PreprocessSpec,
    center_crop,
    get_preset,
    otsu_foreground,
    otsu_threshold,
    pad_or_crop,
    preprocess,
    random_crop,
    resample,
    window_normalize,
    zscore_foreground,
)
from .synth import StudyRecord, SynthConfig, synth_corpus
from .volume import VolumeTensor, load_volume, save_volume

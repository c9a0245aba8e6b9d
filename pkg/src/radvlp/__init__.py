"""Label-supervised vision-language pre-training for volumetric radiology."""

__version__ = "0.1.0"

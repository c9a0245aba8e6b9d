"""Vision and report encoders, shared classifier, segmentation decoder."""

from .dual import (
    CheckpointError,
    DualEncoder,
    build_model,
    load_checkpoint,
    load_parts,
    read_checkpoint,
    save_checkpoint,
)
from .heads import SegDecoder, shared_classifier
from .text import TextEncoder, TextEncoderConfig, Tokenizer, text_forward, tokenize
from .vision import POOLINGS, VisionEncoder, VisionEncoderConfig, pool_features, vision_forward

"""Image/report dual encoder sharing one diagnostic classifier, plus checkpoints."""

from __future__ import annotations

import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..labels.schemas import LabelSchema
from .heads import SegDecoder, shared_classifier
from .text import TextEncoder, TextEncoderConfig, Tokenizer
from .vision import VisionEncoder, VisionEncoderConfig

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class DualEncoder(nn.Module):
    def __init__(
        self,
        vision_cfg: VisionEncoderConfig,
        text_cfg: TextEncoderConfig,
        schema: LabelSchema,
        tokenizer: Tokenizer,
        use_seg: bool = True,
    ):
        super().__init__()
        if vision_cfg.embed_dim != text_cfg.embed_dim:
            raise ValueError("vision and text embed_dim must match")
        if text_cfg.vocab_size != len(tokenizer):
            raise ValueError(f"text vocab_size {text_cfg.vocab_size} != tokenizer size {len(tokenizer)}")
        self.vision_cfg, self.text_cfg = vision_cfg, text_cfg
        self.schema, self.tokenizer = schema, tokenizer
        self.vision = VisionEncoder(vision_cfg)
        self.text = TextEncoder(text_cfg)
        self.classifier = nn.Linear(vision_cfg.embed_dim, schema.arity)
        self.text_head = nn.Linear(text_cfg.embed_dim, schema.arity)
        # background, body, one lesion class per category
        self.n_anatomy = 2 + schema.arity
        self.seg_decoder = (
            SegDecoder(self.vision.feature_channels, self.n_anatomy, vision_cfg.total_stride)
            if use_seg
            else None
        )

    def encode_image(self, x: torch.Tensor) -> torch.Tensor:
        return self.vision(x)[1]

    def encode_text(self, texts) -> torch.Tensor:
        if isinstance(texts, str):
            texts = [texts]
        return self.text(self.tokenizer.batch(texts))

    def classify(self, e: torch.Tensor) -> torch.Tensor:
        return shared_classifier(e, self.classifier.weight, self.classifier.bias)

    def meta(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "vision_cfg": asdict(self.vision_cfg),
            "text_cfg": asdict(self.text_cfg),
            "schema": {
                "name": self.schema.name,
                "categories": list(self.schema.categories),
                "value_domain": sorted(self.schema.value_domain),
                "kind": self.schema.kind,
            },
            "vocab": self.tokenizer.vocab,
            "max_tokens": self.tokenizer.max_tokens,
            "use_seg": self.seg_decoder is not None,
        }


def build_model(schema, tokenizer, vision_cfg=None, text_cfg=None, use_seg=True, seed=None) -> DualEncoder:
    if seed is not None:
        torch.manual_seed(seed)
    vision_cfg = vision_cfg or VisionEncoderConfig()
    text_cfg = text_cfg or TextEncoderConfig()
    text_cfg = TextEncoderConfig(**{**asdict(text_cfg), "vocab_size": len(tokenizer), "max_tokens": tokenizer.max_tokens,
                                    "cls_token_id": tokenizer.cls_id, "pad_token_id": tokenizer.pad_id,
                                    "sentence_end_id": tokenizer.sentence_end_id})
    return DualEncoder(vision_cfg, text_cfg, schema, tokenizer, use_seg=use_seg)


def save_checkpoint(model: DualEncoder, path, extra: dict | None = None) -> Path:
    """Single ``.npz`` archive: one array per named parameter/buffer plus ``__meta__`` JSON."""
    path = Path(path)
    meta = model.meta()
    if extra:
        meta["extra"] = extra
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())
    return path


def read_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise CheckpointError(f"{path}: missing __meta__ record")
        meta = json.loads(z["__meta__"].tobytes().decode())
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
    return meta, arrays


def model_from_meta(meta: dict) -> DualEncoder:
    schema = LabelSchema(
        name=meta["schema"]["name"],
        categories=tuple(meta["schema"]["categories"]),
        value_domain=frozenset(meta["schema"]["value_domain"]),
        kind=meta["schema"].get("kind", "diagnostic"),
    )
    tokenizer = Tokenizer(meta["vocab"], meta["max_tokens"])
    return DualEncoder(
        VisionEncoderConfig(**meta["vision_cfg"]),
        TextEncoderConfig(**meta["text_cfg"]),
        schema,
        tokenizer,
        use_seg=meta["use_seg"],
    )


def load_checkpoint(path) -> DualEncoder:
    meta, arrays = read_checkpoint(path)
    model = model_from_meta(meta)
    state = {k: torch.from_numpy(np.array(v)) for k, v in arrays.items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(f"{path}: parameter mismatch (missing={missing}, unexpected={unexpected})")
    model.eval()
    return model


def load_parts(model: DualEncoder, path, prefixes) -> None:
    """Copy parameters whose names start with one of ``prefixes`` from a checkpoint."""
    meta, arrays = read_checkpoint(path)
    if meta["vocab"] != model.tokenizer.vocab:
        raise CheckpointError(f"{path}: tokenizer vocabulary differs from the target model")
    if meta["schema"]["categories"] != list(model.schema.categories):
        raise CheckpointError(f"{path}: label schema differs from the target model")
    own = model.state_dict()
    picked = {k: v for k, v in arrays.items() if k.startswith(tuple(prefixes))}
    if not picked:
        raise CheckpointError(f"{path}: no parameters under {prefixes}")
    for k, v in picked.items():
        if k not in own:
            raise CheckpointError(f"{path}: unexpected parameter {k}")
        if tuple(own[k].shape) != v.shape:
            raise CheckpointError(f"{path}: shape mismatch for {k}: {v.shape} vs {tuple(own[k].shape)}")
        own[k] = torch.from_numpy(np.array(v))
    model.load_state_dict(own)

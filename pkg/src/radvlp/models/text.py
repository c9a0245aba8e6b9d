"""Word-level tokenizer and a small transformer report encoder."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import torch
from torch import nn

PAD, UNK, CLS = "[PAD]", "[UNK]", "[CLS]"
SPECIALS = (PAD, UNK, CLS)
_WORD = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")
SENTENCE_END = "."
ATTENTION_MODES = ("sentence", "full")


@dataclass
class TextEncoderConfig:
    vocab_size: int = 256
    layers: int = 2
    heads: int = 4
    hidden_dim: int = 64
    ff_dim: int = 128
    max_tokens: int = 64
    cls_token_id: int = 2
    pad_token_id: int = 0
    embed_dim: int = 64
    dropout: float = 0.1
    # "sentence": ordinary tokens attend only within their own sentence while
    # CLS attends (and is visible) everywhere; "full": unrestricted attention.
    attention: str = "sentence"
    sentence_end_id: int = -1  # token id closing a sentence; -1 = none

    def __post_init__(self):
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"unknown attention mode {self.attention!r}")
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class Tokenizer:
    """Lower-cased words and punctuation marks over a corpus-built vocabulary."""

    def __init__(self, vocab: list[str], max_tokens: int = 64):
        if tuple(vocab[:3]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.max_tokens = max_tokens

    @classmethod
    def build(cls, texts, max_tokens: int = 64, min_count: int = 1) -> "Tokenizer":
        counts = Counter(w for t in texts for w in words(t))
        vocab = list(SPECIALS) + sorted(w for w, n in counts.items() if n >= min_count)
        return cls(vocab, max_tokens)

    @property
    def cls_id(self):
        return self.index[CLS]

    @property
    def pad_id(self):
        return self.index[PAD]

    @property
    def unk_id(self):
        return self.index[UNK]

    @property
    def sentence_end_id(self) -> int:
        return self.index.get(SENTENCE_END, -1)

    def __len__(self):
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        ids = [self.cls_id] + [self.index.get(w, self.unk_id) for w in words(text)]
        return ids[: self.max_tokens]

    def batch(self, texts) -> torch.Tensor:
        seqs = [self.encode(t) for t in texts]
        width = max(len(s) for s in seqs)
        out = torch.full((len(seqs), width), self.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return out


def tokenize(report: str, tokenizer: Tokenizer) -> list[int]:
    return tokenizer.encode(report)


class TextEncoder(nn.Module):
    def __init__(self, cfg: TextEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.hidden_dim, padding_idx=cfg.pad_token_id)
        self.pos_emb = nn.Embedding(cfg.max_tokens, cfg.hidden_dim)
        layer = nn.TransformerEncoderLayer(
            cfg.hidden_dim,
            cfg.heads,
            dim_feedforward=cfg.ff_dim,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(cfg.hidden_dim)
        self.proj = nn.Linear(cfg.hidden_dim, cfg.embed_dim)
        self.reset_parameters()

    def reset_parameters(self):
        """Scaled-normal init: unit-variance token embeddings, small position
        embeddings, Xavier attention projections, N(0, 1/fan_in) elsewhere."""
        for name, p in self.named_parameters():
            if name.endswith("bias"):
                nn.init.zeros_(p)
            elif p.dim() >= 2 and "norm" not in name:
                nn.init.normal_(p, std=1.0 / math.sqrt(p.shape[1]))
        nn.init.normal_(self.tok_emb.weight, std=1.0)
        nn.init.normal_(self.pos_emb.weight, std=0.02)
        for layer in self.encoder.layers:
            nn.init.xavier_uniform_(layer.self_attn.in_proj_weight)
        with torch.no_grad():
            self.tok_emb.weight[self.cfg.pad_token_id].zero_()

    def attention_mask(self, tokens: torch.Tensor) -> torch.Tensor:
        """Additive (B * heads, L, L) mask; padding keys are always blocked."""
        allowed = (tokens != self.cfg.pad_token_id)[:, None, :].expand(-1, tokens.shape[1], -1)
        if self.cfg.attention == "sentence":
            ends = (tokens == self.cfg.sentence_end_id).long()
            seg = torch.cumsum(ends, dim=1) - ends  # a full stop belongs to its own sentence
            seg[:, 0] = -1
            same = seg[:, :, None] == seg[:, None, :]
            same[:, 0, :] = True
            same[:, :, 0] = True
            allowed = allowed & same
        mask = torch.zeros(allowed.shape, dtype=torch.float32, device=tokens.device)
        mask = mask.masked_fill(~allowed, float("-inf"))
        return mask.repeat_interleave(self.cfg.heads, dim=0)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, L) token ids -> (B, embed_dim) embedding at the CLS position."""
        if tokens.dim() == 1:
            tokens = tokens[None]
        tokens = tokens[:, : self.cfg.max_tokens]
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.cfg.vocab_size):
            raise ValueError(f"token id out of vocabulary range [0, {self.cfg.vocab_size})")
        pos = torch.arange(tokens.shape[1], device=tokens.device)
        h = self.tok_emb(tokens) + self.pos_emb(pos)[None]
        h = self.encoder(h, mask=self.attention_mask(tokens))
        return self.proj(self.norm(h[:, 0]))


def text_forward(tokens, encoder: TextEncoder) -> torch.Tensor:
    t = torch.as_tensor(tokens, dtype=torch.long)
    return encoder(t[None] if t.dim() == 1 else t)[0]

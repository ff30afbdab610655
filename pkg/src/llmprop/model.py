"""Encoder-only transformer with a linear prediction head.

The encoder is a standard pre-norm transformer stack with learned absolute
positions. Attention masking is additive -inf on padded keys, so padded
positions receive exactly zero attention weight and can never leak into
real positions. There is no decoder anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

REGRESSION = "regression"
CLASSIFICATION = "binary-classification"

POOL_CLS = "cls"
POOL_MEAN = "mean"


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture and weight-source description for the encoder."""

    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 2
    dropout: float = 0.2
    max_positions: int = 1024
    source: str = "toy-random:0"  # "toy-random:<seed>" or a checkpoint path

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ValueError("hidden_size must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "dropout": self.dropout,
            "max_positions": self.max_positions,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


class SelfAttention(nn.Module):
    def __init__(self, hidden_size: int, num_heads: int, dropout: float):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_size // num_heads
        self.qkv = nn.Linear(hidden_size, 3 * hidden_size)
        self.out = nn.Linear(hidden_size, hidden_size)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        batch, length, hidden = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (batch, length, self.num_heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        # -inf on padded keys: padded positions get exactly zero weight
        key_mask = mask[:, None, None, :].to(torch.bool)
        scores = scores.masked_fill(~key_mask, float("-inf"))
        weights = self.dropout(torch.softmax(scores, dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(batch, length, hidden)
        return self.out(context)


class EncoderLayer(nn.Module):
    def __init__(self, hidden_size: int, num_heads: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size)
        self.attn = SelfAttention(hidden_size, num_heads, dropout)
        self.norm2 = nn.LayerNorm(hidden_size)
        self.ff = nn.Sequential(
            nn.Linear(hidden_size, 4 * hidden_size),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(4 * hidden_size, hidden_size),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.dropout(self.attn(self.norm1(x), mask))
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class CrystalTextEncoder(nn.Module):
    """Token + position embeddings followed by pre-norm attention blocks."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embedding = nn.Embedding(config.max_positions, config.hidden_size)
        self.layers = nn.ModuleList(
            EncoderLayer(config.hidden_size, config.num_heads, config.dropout)
            for _ in range(config.num_layers)
        )
        self.final_norm = nn.LayerNorm(config.hidden_size)
        self.embed_dropout = nn.Dropout(config.dropout)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if ids.shape != mask.shape:
            raise ValueError(f"ids shape {tuple(ids.shape)} != mask shape {tuple(mask.shape)}")
        if ids.numel() and int(ids.max()) >= self.config.vocab_size:
            raise ValueError(f"token id {int(ids.max())} out of range (vocab {self.config.vocab_size})")
        length = ids.shape[1]
        if length > self.config.max_positions:
            raise ValueError(f"sequence length {length} exceeds max_positions {self.config.max_positions}")
        positions = torch.arange(length, device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]
        x = self.embed_dropout(x)
        for layer in self.layers:
            x = layer(x, mask)
        return self.final_norm(x)


def pool_cls(states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Representation at position 0 (the prepended [CLS] token)."""
    return states[:, 0, :]


def pool_mean(states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over unmasked positions; the fallback when no [CLS] is prepended."""
    m = mask.to(states.dtype)[:, :, None]
    return (states * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)


class PredictionHead(nn.Module):
    """Linear map hidden -> 1. Zero bias, small-uniform weight init."""

    INIT_SCALE = 0.02

    def __init__(self, hidden_size: int, task: str):
        super().__init__()
        if task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown head task {task!r}")
        self.task = task
        self.linear = nn.Linear(hidden_size, 1)
        nn.init.uniform_(self.linear.weight, -self.INIT_SCALE, self.INIT_SCALE)
        nn.init.zeros_(self.linear.bias)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.linear(pooled).squeeze(-1)


class PropertyModel(nn.Module):
    """Encoder, pooling and head wired together.

    forward() returns raw head outputs: scaled-space predictions for
    regression, logits for classification. predict() maps classification
    logits through a sigmoid clamped into the open interval (0, 1).
    """

    def __init__(self, encoder: CrystalTextEncoder, head: PredictionHead, pooling: str = POOL_CLS):
        super().__init__()
        if pooling not in (POOL_CLS, POOL_MEAN):
            raise ValueError(f"unknown pooling {pooling!r}")
        self.encoder = encoder
        self.head = head
        self.pooling = pooling

    def pooled(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        states = self.encoder(ids, mask)
        pool = pool_cls if self.pooling == POOL_CLS else pool_mean
        return pool(states, mask)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.head(self.pooled(ids, mask))

    @torch.no_grad()
    def predict(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        raw = self.forward(ids, mask)
        if self.head.task == CLASSIFICATION:
            eps = torch.finfo(raw.dtype).eps
            return torch.sigmoid(raw).clamp(min=eps, max=1.0 - eps)
        return raw


def build_model(
    config: EncoderConfig,
    task: str,
    pooling: str = POOL_CLS,
    head_seed: Optional[int] = None,
) -> PropertyModel:
    """Construct a PropertyModel from the configured weight source.

    "toy-random:<seed>" initializes all weights from that seed; a path is
    treated as a checkpoint whose encoder weights are adapted in.
    """
    if config.source.startswith("toy-random:"):
        seed = int(config.source.split(":", 1)[1])
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            encoder = CrystalTextEncoder(config)
            head = PredictionHead(config.hidden_size, task)
        return PropertyModel(encoder, head, pooling=pooling)
    # external checkpoint: build the skeleton, then adapt weights in
    seed = head_seed if head_seed is not None else 0
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        encoder = CrystalTextEncoder(config)
        head = PredictionHead(config.hidden_size, task)
    state = torch.load(_weights_path(config.source), map_location="cpu", weights_only=True)
    encoder.load_state_dict(_extract_encoder_state(state))
    return PropertyModel(encoder, head, pooling=pooling)


def _weights_path(source: str):
    from pathlib import Path

    path = Path(source)
    return path / "weights.pt" if path.is_dir() else path


def _extract_encoder_state(state: dict) -> dict:
    """Adapter: accept a bare encoder state dict or a full-model one."""
    if any(key.startswith("encoder.") for key in state):
        return {k[len("encoder.") :]: v for k, v in state.items() if k.startswith("encoder.")}
    return state


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def encoder_param_count(config: EncoderConfig, with_head: bool = True) -> int:
    """Closed-form parameter count of CrystalTextEncoder (+ head)."""
    h = config.hidden_size
    attn = 3 * h * h + 3 * h + h * h + h
    ffn = h * 4 * h + 4 * h + 4 * h * h + h
    norm = 2 * h
    layer = attn + ffn + 2 * norm
    total = (
        config.vocab_size * h
        + config.max_positions * h
        + config.num_layers * layer
        + norm
    )
    return total + (h + 1 if with_head else 0)


def seq2seq_param_count(config: EncoderConfig) -> int:
    """Analytic parameter count of an encoder-decoder of the same dimensions.

    Embedding shared between the two sides; the decoder adds per-layer
    cross-attention, its own positions and a final norm. Used only as the
    reference point for the encoder-only size sanity check.
    """
    h = config.hidden_size
    attn = 3 * h * h + 3 * h + h * h + h
    cross = 4 * (h * h + h)
    ffn = h * 4 * h + 4 * h + 4 * h * h + h
    norm = 2 * h
    enc_layer = attn + ffn + 2 * norm
    dec_layer = enc_layer + cross + norm
    shared_embedding = config.vocab_size * h
    positions = config.max_positions * h
    encoder = positions + config.num_layers * enc_layer + norm
    decoder = positions + config.num_layers * dec_layer + norm
    return shared_embedding + encoder + decoder

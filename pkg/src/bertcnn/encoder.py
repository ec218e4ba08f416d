"""Transformer encoder exposing its last four hidden layers as a 4-channel stack.

Two ways to obtain an encoder: ``TransformerEncoder.from_seed`` builds the
seeded in-repo reference model, ``load_checkpoint`` reads external weights in
the shared archive layout. Parameter names follow the usual BERT layout so
published checkpoints convert one-to-one (see ``from_hf_state_dict``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from . import archive
from .errors import CapacityError, CheckpointError, CheckpointNotFoundError, ConfigError, NumericError

N_CHANNELS = 4


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden: int = 768
    layers: int = 12
    heads: int = 12
    max_position: int = 512
    intermediate: int = 3072
    type_vocab_size: int = 2
    layer_norm_eps: float = 1e-12
    dropout: float = 0.0

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if self.layers < N_CHANNELS:
            raise ConfigError(f"encoder needs at least {N_CHANNELS} layers, got {self.layers}")
        if self.max_position < 1 or self.vocab_size < 1:
            raise ConfigError("vocab_size and max_position must be positive")

    @classmethod
    def base(cls, vocab_size: int = 32000) -> "EncoderConfig":
        return cls(vocab_size=vocab_size)

    @classmethod
    def tiny(cls, vocab_size: int) -> "EncoderConfig":
        """Small seeded encoder used by ``--tiny-encoder`` and the test-suite."""
        return cls(vocab_size=vocab_size, hidden=16, layers=4, heads=2, max_position=64, intermediate=64)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class EmbeddingStack:
    values: torch.Tensor  # [4, L, H]
    mask: torch.Tensor  # [L]


class Embeddings(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.word = nn.Embedding(config.vocab_size, config.hidden)
        self.position = nn.Embedding(config.max_position, config.hidden)
        self.token_type = nn.Embedding(config.type_vocab_size, config.hidden)
        self.norm = nn.LayerNorm(config.hidden, eps=config.layer_norm_eps)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, ids):
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.word(ids) + self.position(positions)[None] + self.token_type.weight[0]
        return self.dropout(self.norm(x))


class SelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.heads = config.heads
        self.head_dim = config.hidden // config.heads
        self.query = nn.Linear(config.hidden, config.hidden)
        self.key = nn.Linear(config.hidden, config.hidden)
        self.value = nn.Linear(config.hidden, config.hidden)
        self.output = nn.Linear(config.hidden, config.hidden)
        self.dropout = nn.Dropout(config.dropout)

    def _split(self, x):
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x, mask):
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        # padded keys get the most negative finite value, never -inf
        blocked = (mask == 0)[:, None, None, :]
        scores = scores.masked_fill(blocked, torch.finfo(scores.dtype).min)
        weights = self.dropout(scores.softmax(dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(x.shape)
        return self.output(context)


class EncoderLayer(nn.Module):
    """Post-norm block: attention and GELU feed-forward, each with residual + LayerNorm."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(config)
        self.attention_norm = nn.LayerNorm(config.hidden, eps=config.layer_norm_eps)
        self.intermediate = nn.Linear(config.hidden, config.intermediate)
        self.output = nn.Linear(config.intermediate, config.hidden)
        self.output_norm = nn.LayerNorm(config.hidden, eps=config.layer_norm_eps)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, mask):
        x = self.attention_norm(x + self.dropout(self.attention(x, mask)))
        ff = self.output(F.gelu(self.intermediate(x)))
        return self.output_norm(x + self.dropout(ff))


class TransformerEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embeddings = Embeddings(config)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.layers))

    @classmethod
    def from_seed(cls, config: EncoderConfig, seed: int = 0) -> "TransformerEncoder":
        model = cls(config)
        model.reset_parameters(seed)
        return model

    def reset_parameters(self, seed: int) -> None:
        """BERT-style init: N(0, 0.02) weights, zero biases, unit LayerNorm gains."""
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, param in self.named_parameters():
                if ".norm." in name or "_norm." in name:
                    param.fill_(1.0 if name.endswith("weight") else 0.0)
                elif name.endswith("bias"):
                    param.zero_()
                else:
                    param.copy_(torch.randn(param.shape, generator=gen, dtype=param.dtype) * 0.02)

    def hidden_states(self, ids: torch.Tensor, mask: torch.Tensor) -> list:
        """Outputs of every transformer block (embedding output excluded)."""
        if ids.shape[1] > self.config.max_position:
            raise CapacityError(
                f"sequence length {ids.shape[1]} exceeds max_position {self.config.max_position}"
            )
        x = self.embeddings(ids)
        states = []
        for i, layer in enumerate(self.layers):
            x = layer(x, mask)
            if not torch.isfinite(x).all():
                raise NumericError(f"non-finite activation in encoder layer {i}")
            states.append(x)
        return states

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Last four layers stacked as channels: ``[B, 4, L, H]``, ascending layer order."""
        return torch.stack(self.hidden_states(ids, mask)[-N_CHANNELS:], dim=1)


def _as_tensors(examples):
    ids = torch.tensor([list(e.ids) for e in examples], dtype=torch.long)
    mask = torch.tensor([list(e.mask) for e in examples], dtype=torch.long)
    return ids, mask


def encode_batch(examples: Sequence, encoder: TransformerEncoder) -> list:
    ids, mask = _as_tensors(examples)
    with torch.no_grad():
        values = encoder(ids, mask)
    return [EmbeddingStack(values[i], mask[i]) for i in range(len(examples))]


def tiny_reference_forward(example, config: EncoderConfig, seed: int = 0) -> EmbeddingStack:
    encoder = TransformerEncoder.from_seed(config, seed)
    encoder.eval()
    return encode_batch([example], encoder)[0]


CONFIG = "config.json"


def save_checkpoint(encoder: TransformerEncoder, directory, vocab=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG).write_text(json.dumps(encoder.config.to_dict(), sort_keys=True, indent=2) + "\n")
    archive.write_archive(encoder.state_dict(), directory)
    if vocab is not None:
        vocab.save(directory / "vocab.txt")


def load_checkpoint(directory) -> TransformerEncoder:
    directory = Path(directory)
    if not (directory / CONFIG).is_file():
        raise CheckpointNotFoundError(f"{directory / CONFIG} not found")
    config = EncoderConfig.from_dict(json.loads((directory / CONFIG).read_text()))
    encoder = TransformerEncoder(config)
    archive.load_into(encoder, archive.read_archive(directory))
    encoder.eval()
    return encoder


_HF_LAYER_NAMES = {
    "attention.self.query": "attention.query",
    "attention.self.key": "attention.key",
    "attention.self.value": "attention.value",
    "attention.output.dense": "attention.output",
    "attention.output.LayerNorm": "attention_norm",
    "intermediate.dense": "intermediate",
    "output.dense": "output",
    "output.LayerNorm": "output_norm",
}
_HF_EMBEDDING_NAMES = {
    "word_embeddings": "word",
    "position_embeddings": "position",
    "token_type_embeddings": "token_type",
    "LayerNorm": "norm",
}


def from_hf_state_dict(state: dict, config: EncoderConfig) -> TransformerEncoder:
    """Build an encoder from a Hugging Face ``BertModel`` state dict.

    Pooler weights are dropped; LayerNorm ``gamma``/``beta`` spellings from
    older checkpoints are accepted.
    """
    renamed = {}
    for name, tensor in state.items():
        name = name.removeprefix("bert.").replace(".gamma", ".weight").replace(".beta", ".bias")
        if name.startswith("embeddings."):
            module, _, leaf = name[len("embeddings."):].rpartition(".")
            if module in _HF_EMBEDDING_NAMES:
                renamed[f"embeddings.{_HF_EMBEDDING_NAMES[module]}.{leaf}"] = tensor
        elif name.startswith("encoder.layer."):
            index, _, rest = name[len("encoder.layer."):].partition(".")
            module, _, leaf = rest.rpartition(".")
            if module in _HF_LAYER_NAMES:
                renamed[f"layers.{index}.{_HF_LAYER_NAMES[module]}.{leaf}"] = tensor
    encoder = TransformerEncoder(config)
    archive.load_into(encoder, renamed)
    return encoder.eval()


def convert_hf_checkpoint(source: str, directory) -> TransformerEncoder:
    """Convert a published BERT checkpoint (hub name or local dir) to the archive layout.

    Needs the optional ``transformers`` dependency.
    """
    try:
        from transformers import AutoTokenizer, BertModel
    except ImportError as exc:  # pragma: no cover - optional extra
        raise CheckpointError("converting published checkpoints requires the 'transformers' package") from exc
    from .preprocess import Vocabulary

    hf = BertModel.from_pretrained(source)
    c = hf.config
    config = EncoderConfig(
        vocab_size=c.vocab_size,
        hidden=c.hidden_size,
        layers=c.num_hidden_layers,
        heads=c.num_attention_heads,
        max_position=c.max_position_embeddings,
        intermediate=c.intermediate_size,
        type_vocab_size=c.type_vocab_size,
        layer_norm_eps=c.layer_norm_eps,
    )
    encoder = from_hf_state_dict(hf.state_dict(), config)
    tokenizer = AutoTokenizer.from_pretrained(source)
    vocab_items = sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1])
    vocab = Vocabulary([tok for tok, _ in vocab_items], lowercase=bool(getattr(tokenizer, "do_lower_case", False)))
    save_checkpoint(encoder, directory, vocab)
    if vocab.lowercase:
        Path(directory, "tokenizer.json").write_text(json.dumps({"lowercase": True}) + "\n")
    return encoder

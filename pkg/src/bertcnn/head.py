"""Multi-width convolutional classifier over a channel stack of token embeddings.

For each width ``w`` a bank of kernels ``[filters, channels, w, H]`` slides
over the token axis without padding, so every kernel spans the full hidden
dimension and yields ``L - w + 1`` activations. ReLU, global max over
positions, concatenation over widths, then one dense unit and a sigmoid.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class HeadConfig:
    embed_dim: int = 768
    filter_widths: tuple = (1, 2, 3, 4, 5)
    filters_per_width: int = 32
    in_channels: int = 4
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "filter_widths", tuple(self.filter_widths))
        if not self.filter_widths or min(self.filter_widths) < 1:
            raise ConfigError(f"filter widths must be positive, got {self.filter_widths}")
        if len(set(self.filter_widths)) != len(self.filter_widths):
            raise ConfigError(f"duplicate filter widths in {self.filter_widths}")

    @property
    def total_filters(self) -> int:
        return len(self.filter_widths) * self.filters_per_width

    def check_length(self, seq_len: int) -> None:
        too_wide = [w for w in self.filter_widths if w > seq_len]
        if too_wide:
            raise ConfigError(f"filter widths {too_wide} exceed sequence length {seq_len}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d


def parameter_count(config: HeadConfig) -> int:
    f, c, h = config.filters_per_width, config.in_channels, config.embed_dim
    conv = sum(f * c * w * h + f for w in config.filter_widths)
    return conv + config.total_filters + 1


def predict_label(p, threshold: float = 0.5) -> int:
    """1 (offensive) iff ``p >= threshold``; a tie goes to the positive class."""
    return int(p >= threshold)


def _glorot_(tensor, fan_in, fan_out, gen):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        tensor.copy_((torch.rand(tensor.shape, generator=gen, dtype=tensor.dtype) * 2 - 1) * bound)


class ConvBank(nn.Module):
    def __init__(self, filters: int, channels: int, width: int, embed_dim: int):
        super().__init__()
        self.kernel = nn.Parameter(torch.zeros(filters, channels, width, embed_dim))
        self.bias = nn.Parameter(torch.zeros(filters))

    def forward(self, x):
        # x: [B, C, L, H] -> [B, F, L - w + 1]
        return F.conv2d(x, self.kernel, self.bias).squeeze(-1)


class ConvHead(nn.Module):
    """Returns one logit per example; ``predict_proba`` applies the sigmoid."""

    def __init__(self, config: HeadConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.conv = nn.ModuleDict(
            {
                f"w{w}": ConvBank(config.filters_per_width, config.in_channels, w, config.embed_dim)
                for w in config.filter_widths
            }
        )
        self.dense = Dense(config.total_filters)
        self.dropout = nn.Dropout(config.dropout)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        c = self.config
        for w in c.filter_widths:
            bank = self.conv[f"w{w}"]
            _glorot_(bank.kernel, c.in_channels * w * c.embed_dim, c.filters_per_width * w * c.embed_dim, gen)
            nn.init.zeros_(bank.bias)
        _glorot_(self.dense.weight, c.total_filters, 1, gen)
        nn.init.zeros_(self.dense.bias)

    def pooled(self, stack: torch.Tensor) -> torch.Tensor:
        """``[B, C, L, H]`` -> ``[B, total_filters]`` max-pooled ReLU features."""
        if stack.shape[1] != self.config.in_channels or stack.shape[-1] != self.config.embed_dim:
            raise ConfigError(
                f"stack shape {tuple(stack.shape[1:])} does not match "
                f"{self.config.in_channels} channels x H={self.config.embed_dim}"
            )
        self.config.check_length(stack.shape[2])
        feats = [F.relu(self.conv[f"w{w}"](stack)).amax(dim=-1) for w in self.config.filter_widths]
        return torch.cat(feats, dim=1)

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        logits = self.dense(self.dropout(self.pooled(stack)))
        if not torch.isfinite(logits).all():
            raise NumericError("non-finite logit from convolutional head")
        return logits

    def predict_proba(self, stack: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward(stack))


class Dense(nn.Module):
    """Single-output affine map stored as ``weight [in]`` + ``bias [1]``."""

    def __init__(self, in_features: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(in_features))
        self.bias = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        return x @ self.weight + self.bias

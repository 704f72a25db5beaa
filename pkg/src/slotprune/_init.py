"""Deterministic parameter initialization driven by an explicit generator.

torch's built-in ``reset_parameters`` draws from the global RNG; everything
here takes a ``torch.Generator`` so model construction is a pure function of
the seed.
"""

from __future__ import annotations

import math

import torch
from torch import nn


def xavier_uniform_(weight: torch.Tensor, generator: torch.Generator) -> None:
    fan_out, fan_in = weight.shape[0], weight.shape[1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=generator)


def normal_(tensor: torch.Tensor, std: float, generator: torch.Generator) -> None:
    with torch.no_grad():
        tensor.normal_(0.0, std, generator=generator)


def zeros_(tensor: torch.Tensor) -> None:
    with torch.no_grad():
        tensor.zero_()


def reset_linear(linear: nn.Linear, generator: torch.Generator) -> None:
    xavier_uniform_(linear.weight, generator)
    if linear.bias is not None:
        zeros_(linear.bias)


def reset_gru_cell(cell: nn.GRUCell, generator: torch.Generator) -> None:
    # Mirrors torch's default uniform(-1/sqrt(h), 1/sqrt(h)) scheme.
    stdv = 1.0 / math.sqrt(cell.hidden_size)
    with torch.no_grad():
        for param in cell.parameters():
            param.uniform_(-stdv, stdv, generator=generator)


def reset_layer_norm(norm: nn.LayerNorm) -> None:
    with torch.no_grad():
        norm.weight.fill_(1.0)
        norm.bias.zero_()

"""Autoregressive transformer that reconstructs a token sequence in a random
order from a conditioning set.

Per call a fresh permutation of the target positions is drawn; tokens are
predicted one permuted step at a time under a causal mask, teacher-forced on
the previous ground-truth token. The conditioning rows (slots during
training, kept tokens during evaluation) form a prefix every step may attend
to, while the prefix itself never attends to target steps — otherwise late
targets would leak into early predictions. Position identity is injected by
embedding tables indexed by the original token position: one table marks the
position of the value fed in, a second marks the position being predicted.

Attention is implemented with plain matmul/softmax so the module runs in
float64 for gradient verification. Inputs may carry a leading batch
dimension (with one permutation per batch row); the trainer uses that path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ._init import normal_, reset_linear, reset_layer_norm
from .errors import CapacityError, ConfigError, ShapeError, ValidationError
from .objective import loss_value, LOSS_KINDS
from .validation import derive_seed

__all__ = ["ReconstructionDecoder", "Reconstruction", "reconstruct", "recon_distance", "random_permutation"]


@dataclass(frozen=True)
class Reconstruction:
    """Reconstructed tokens (n×c, original order) and the permutation used."""

    v_prime: torch.Tensor
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        n = self.v_prime.shape[-2]
        rows = perm[None, :] if perm.ndim == 1 else perm
        for row in rows:
            if sorted(row.tolist()) != list(range(n)):
                raise ValidationError("permutation must be a bijection on [0, n)")
        object.__setattr__(self, "permutation", perm)


class _SelfAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads != 0:
            raise ConfigError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = width // heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, length, _ = x.shape
        qkv = self.qkv(x).reshape(b, length, 3, self.heads, self.head_dim)
        q, k, v = qkv[:, :, 0], qkv[:, :, 1], qkv[:, :, 2]  # each (b, L, h, dh)
        scores = torch.einsum("bihd,bjhd->bhij", q, k) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~mask, float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        ctx = torch.einsum("bhij,bjhd->bihd", probs, v).reshape(b, length, -1)
        return self.out(ctx)


class _Block(nn.Module):
    def __init__(self, width: int, heads: int, ffn_width: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = _SelfAttention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.ffn = nn.Sequential(nn.Linear(width, ffn_width), nn.GELU(), nn.Linear(ffn_width, width))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), mask)
        return x + self.ffn(self.norm2(x))


class ReconstructionDecoder(nn.Module):
    """Teacher-forced random-order decoder with a conditioning prefix."""

    def __init__(
        self,
        token_dim: int,
        width: int = 128,
        depth: int = 2,
        heads: int = 4,
        ffn_width: int = 256,
        max_tokens: int = 1024,
        seed: int = 0,
    ):
        super().__init__()
        for name, value in (
            ("token_dim", token_dim),
            ("width", width),
            ("depth", depth),
            ("heads", heads),
            ("ffn_width", ffn_width),
            ("max_tokens", max_tokens),
        ):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        self.token_dim = token_dim
        self.width = width
        self.max_tokens = max_tokens

        self.in_proj = nn.Linear(token_dim, width)
        self.cond_proj = nn.Linear(token_dim, width)
        self.pos_embed = nn.Parameter(torch.zeros(max_tokens, width))
        self.query_pos_embed = nn.Parameter(torch.zeros(max_tokens, width))
        self.start_token = nn.Parameter(torch.zeros(width))
        self.blocks = nn.ModuleList(_Block(width, heads, ffn_width) for _ in range(depth))
        self.final_norm = nn.LayerNorm(width)
        self.out_proj = nn.Linear(width, token_dim)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(derive_seed("decoder-init", seed))
        normal_(self.pos_embed, 0.02, generator)
        normal_(self.query_pos_embed, 0.02, generator)
        normal_(self.start_token, 0.02, generator)
        reset_linear(self.in_proj, generator)
        reset_linear(self.cond_proj, generator)
        for block in self.blocks:
            reset_layer_norm(block.norm1)
            reset_layer_norm(block.norm2)
            reset_linear(block.attn.qkv, generator)
            reset_linear(block.attn.out, generator)
            reset_linear(block.ffn[0], generator)
            reset_linear(block.ffn[2], generator)
        reset_layer_norm(self.final_norm)
        reset_linear(self.out_proj, generator)

    @property
    def dtype(self) -> torch.dtype:
        return self.in_proj.weight.dtype

    def _mask(self, s: int, n: int) -> torch.Tensor:
        # Prefix attends only to itself; target step t sees prefix + steps <= t.
        length = s + n
        mask = torch.zeros(length, length, dtype=torch.bool)
        mask[:s, :s] = True
        mask[s:, :s] = True
        mask[s:, s:] = torch.tril(torch.ones(n, n, dtype=torch.bool))
        return mask

    def forward(self, condition, targets, permutation) -> Reconstruction:
        cond = condition if isinstance(condition, torch.Tensor) else torch.as_tensor(np.asarray(condition))
        tgt = targets if isinstance(targets, torch.Tensor) else torch.as_tensor(np.asarray(targets))
        cond = cond.to(self.dtype)
        tgt = tgt.to(self.dtype)
        if cond.ndim not in (2, 3) or cond.shape[-1] != self.token_dim:
            raise ShapeError(f"condition must be s×{self.token_dim}, got {tuple(cond.shape)}")
        if tgt.ndim != cond.ndim or tgt.shape[-1] != self.token_dim:
            raise ShapeError(f"targets must be n×{self.token_dim}, got {tuple(tgt.shape)}")
        single = cond.ndim == 2
        if single:
            cond = cond.unsqueeze(0)
            tgt = tgt.unsqueeze(0)
        if cond.shape[0] != tgt.shape[0]:
            raise ShapeError(f"batch mismatch: {cond.shape[0]} vs {tgt.shape[0]}")
        b, n = tgt.shape[0], tgt.shape[1]
        if n < 1:
            raise ShapeError("targets must contain at least one row")
        if n > self.max_tokens:
            raise CapacityError(f"n={n} exceeds position table length {self.max_tokens}")
        perm_in = np.asarray(permutation, dtype=np.int64)
        perm = torch.as_tensor(perm_in)
        if perm.ndim == 1:
            perm = perm.unsqueeze(0).expand(b, n)
        if perm.shape != (b, n):
            raise ShapeError(f"permutation must have shape ({b}, {n}), got {tuple(perm.shape)}")

        # Step t predicts targets[perm[t]], fed the previous step's ground truth.
        batch_idx = torch.arange(b).unsqueeze(1)
        prev_tokens = tgt[batch_idx, perm[:, :-1]]
        prev = self.in_proj(prev_tokens) + self.pos_embed[perm[:, :-1]]
        start = (self.start_token + torch.zeros(b, 1, self.width, dtype=self.dtype))
        steps = torch.cat([start, prev], dim=1) + self.query_pos_embed[perm]
        seq = torch.cat([self.cond_proj(cond), steps], dim=1)

        mask = self._mask(cond.shape[1], n).unsqueeze(0).unsqueeze(0)
        for block in self.blocks:
            seq = block(seq, mask)
        predicted = self.out_proj(self.final_norm(seq[:, cond.shape[1]:]))

        inverse = torch.argsort(perm, dim=1)
        v_prime = predicted[batch_idx, inverse]
        if single:
            v_prime = v_prime[0]
        return Reconstruction(v_prime=v_prime, permutation=perm_in)


def random_permutation(n: int, perm_seed: int) -> np.ndarray:
    generator = torch.Generator().manual_seed(derive_seed("perm", perm_seed))
    return torch.randperm(n, generator=generator).numpy()


def reconstruct(params: ReconstructionDecoder, condition, targets, perm_seed: int) -> Reconstruction:
    """Draw the permutation from ``perm_seed`` and run the decoder."""
    n = targets.shape[0] if isinstance(targets, torch.Tensor) else np.asarray(targets).shape[0]
    return params(condition, targets, random_permutation(n, perm_seed))


def recon_distance(
    params: ReconstructionDecoder,
    condition,
    targets,
    perm_seed: int,
    loss: str = "mse",
    masks=None,
    areas=None,
) -> float:
    """Reconstruct, then score with the chosen objective.

    This realizes the trainable distance between a token set and its
    conditioning summary; ``masks``/``areas`` are required for ``aw_mse``.
    """
    if loss not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
    if loss == "aw_mse" and (masks is None or areas is None):
        raise ConfigError("aw_mse distance requires masks and areas")
    with torch.no_grad():
        recon = reconstruct(params, condition, targets, perm_seed)
        target_t = torch.as_tensor(np.asarray(targets)).to(recon.v_prime.dtype)
        value = loss_value(loss, recon.v_prime, target_t, masks, areas)
    return float(value)

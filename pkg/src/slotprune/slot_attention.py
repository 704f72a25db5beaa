"""Competitive slot aggregation over token sequences.

Queries sampled from a learned Gaussian are refined for a fixed number of
iterations: scaled dot-product attention normalized across slots (so slots
compete for tokens), a weighted-mean readout renormalized per slot, a GRU
slot update, and a residual MLP. The returned attention map is the final
iteration's pre-readout softmax, so each row is a slot's distribution over
tokens and its argmax identifies the slot's most-attended token.

Inputs may be single sequences (s×c queries with n×c tokens) or stacked
batches with a leading batch dimension; the trainer uses the batched path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ._init import reset_gru_cell, reset_linear, reset_layer_norm
from .errors import NumericalError, ShapeError, ValidationError
from .validation import derive_seed

__all__ = ["QueryDistribution", "SlotAttention", "SlotState", "sample_queries", "aggregate"]


def _as_tensor(x, name: str, width: int, dtype: torch.dtype) -> torch.Tensor:
    t = x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))
    if t.ndim not in (2, 3):
        raise ShapeError(f"{name} must be 2-D or batched 3-D, got shape {tuple(t.shape)}")
    if t.shape[-1] != width:
        raise ShapeError(f"{name} must have {width} channels, got {t.shape[-1]}")
    return t.to(dtype)


@dataclass(frozen=True)
class SlotState:
    """Slots (s×c) and the final-iteration attention map (s×n).

    ``attn`` is normalized across slots: every token column sums to 1.
    ``attn_history`` holds one map per iteration when requested. Batched
    aggregation yields a leading batch dimension on every field.
    """

    slots: torch.Tensor
    attn: torch.Tensor
    attn_history: tuple[torch.Tensor, ...] | None = None

    @property
    def s(self) -> int:
        return self.slots.shape[-2]

    @property
    def n(self) -> int:
        return self.attn.shape[-1]


class QueryDistribution(nn.Module):
    """Learned diagonal Gaussian over query vectors in token space."""

    def __init__(self, token_dim: int):
        super().__init__()
        if token_dim < 1:
            raise ValidationError(f"token_dim must be >= 1, got {token_dim}")
        self.token_dim = token_dim
        self.mu = nn.Parameter(torch.zeros(token_dim))
        self.log_sigma = nn.Parameter(torch.zeros(token_dim))

    @classmethod
    def from_arrays(cls, mu, log_sigma) -> "QueryDistribution":
        mu = torch.as_tensor(np.asarray(mu, dtype=np.float32))
        log_sigma = torch.as_tensor(np.asarray(log_sigma, dtype=np.float32))
        if mu.ndim != 1 or mu.shape != log_sigma.shape:
            raise ShapeError(
                f"mu and log_sigma must be equal-length vectors, got {mu.shape} / {log_sigma.shape}"
            )
        if not (torch.isfinite(mu).all() and torch.isfinite(log_sigma).all()):
            raise ValidationError("mu and log_sigma must be finite")
        dist = cls(mu.shape[0])
        with torch.no_grad():
            dist.mu.copy_(mu)
            dist.log_sigma.copy_(log_sigma)
        return dist

    def sample(self, s: int, seed: int) -> torch.Tensor:
        """Draw s queries via mu + exp(log_sigma) ⊙ z, z ~ N(0, I), seeded."""
        if s < 0:
            raise ShapeError(f"slot count must be >= 0, got {s}")
        generator = torch.Generator().manual_seed(derive_seed("queries", seed))
        z = torch.empty(s, self.token_dim, dtype=self.mu.dtype)
        if s > 0:
            z.normal_(0.0, 1.0, generator=generator)
        return self.mu + torch.exp(self.log_sigma) * z


def sample_queries(dist: QueryDistribution, s: int, seed: int) -> torch.Tensor:
    return dist.sample(s, seed)


class SlotAttention(nn.Module):
    """Iterative query-token aggregation with attention normalized over slots.

    Slots stay in token space (width c); keys/queries/values are projected to
    ``attn_dim``. Temperature is 1/sqrt(attn_dim). ``eps`` guards the
    weighted-mean denominator of slots that win almost no attention mass.
    """

    def __init__(
        self,
        token_dim: int,
        attn_dim: int = 64,
        mlp_hidden: int = 128,
        iterations: int = 3,
        eps: float = 1e-8,
        seed: int = 0,
    ):
        super().__init__()
        if iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {iterations}")
        for name, value in (("token_dim", token_dim), ("attn_dim", attn_dim), ("mlp_hidden", mlp_hidden)):
            if value < 1:
                raise ValidationError(f"{name} must be >= 1, got {value}")
        self.token_dim = token_dim
        self.attn_dim = attn_dim
        self.iterations = iterations
        self.eps = eps

        self.norm_tokens = nn.LayerNorm(token_dim)
        self.norm_slots = nn.LayerNorm(token_dim)
        self.norm_mlp = nn.LayerNorm(token_dim)
        self.to_q = nn.Linear(token_dim, attn_dim, bias=False)
        self.to_k = nn.Linear(token_dim, attn_dim, bias=False)
        self.to_v = nn.Linear(token_dim, attn_dim, bias=False)
        self.gru = nn.GRUCell(attn_dim, token_dim)
        self.mlp = nn.Sequential(
            nn.Linear(token_dim, mlp_hidden),
            nn.ReLU(),
            nn.Linear(mlp_hidden, token_dim),
        )
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        """Initialize so the untrained module is already a soft k-means.

        Identity-like projections make the attention logits token-space
        cosine similarity, a nearly-closed GRU update gate with an identity
        candidate makes the slot update a pass-through of the attended mean,
        and the zeroed residual-MLP output leaves slots untouched. This
        gives the slot competition its reallocation behavior (slots losing
        a contested region migrate toward unclaimed tokens) from step 0;
        every parameter remains free to move during training.
        """
        generator = torch.Generator().manual_seed(derive_seed("slot-attention-init", seed))
        for norm in (self.norm_tokens, self.norm_slots, self.norm_mlp):
            reset_layer_norm(norm)
        c, d = self.token_dim, self.attn_dim
        with torch.no_grad():
            for linear in (self.to_q, self.to_k, self.to_v):
                linear.weight.copy_(torch.eye(d, c))
            self.gru.weight_ih.zero_()
            self.gru.weight_hh.zero_()
            self.gru.weight_ih[2 * c : 3 * c].copy_(torch.eye(c, d))  # candidate reads the update
            self.gru.bias_ih.zero_()
            self.gru.bias_hh.zero_()
            self.gru.bias_ih[c : 2 * c] = -4.0  # update gate starts closed
        reset_linear(self.mlp[0], generator)
        with torch.no_grad():
            self.mlp[2].weight.zero_()
            self.mlp[2].bias.zero_()

    @property
    def dtype(self) -> torch.dtype:
        return self.to_q.weight.dtype

    def forward(self, queries, tokens, return_history: bool = False) -> SlotState:
        queries = _as_tensor(queries, "queries", self.token_dim, self.dtype)
        tokens = _as_tensor(tokens, "tokens", self.token_dim, self.dtype)
        if queries.ndim != tokens.ndim:
            raise ShapeError(
                f"queries and tokens must both be batched or both single, got "
                f"{tuple(queries.shape)} vs {tuple(tokens.shape)}"
            )
        single = queries.ndim == 2
        if single:
            queries = queries.unsqueeze(0)
            tokens = tokens.unsqueeze(0)
        if queries.shape[0] != tokens.shape[0]:
            raise ShapeError(f"batch mismatch: {queries.shape[0]} vs {tokens.shape[0]}")
        if tokens.shape[1] < 1:
            raise ShapeError("tokens must contain at least one row")

        tokens_n = self.norm_tokens(tokens)
        k = self.to_k(tokens_n)
        v = self.to_v(tokens_n)
        scale = self.attn_dim ** -0.5

        b, s = queries.shape[0], queries.shape[1]
        slots = queries
        attn = None
        history: list[torch.Tensor] = []
        for it in range(self.iterations):
            slots_prev = slots
            q = self.to_q(self.norm_slots(slots))
            logits = torch.einsum("bsd,bnd->bsn", q, k) * scale
            attn = torch.softmax(logits, dim=1)  # competition across slots, per token
            weights = attn / (attn.sum(dim=2, keepdim=True) + self.eps)
            updates = torch.einsum("bsn,bnd->bsd", weights, v)
            slots = self.gru(
                updates.reshape(b * s, self.attn_dim), slots_prev.reshape(b * s, self.token_dim)
            ).reshape(b, s, self.token_dim)
            slots = slots + self.mlp(self.norm_mlp(slots))
            if not torch.isfinite(slots).all():
                raise NumericalError(f"non-finite slots at iteration {it}")
            if return_history:
                history.append(attn[0] if single else attn)
        if single:
            slots, attn = slots[0], attn[0]
        return SlotState(slots=slots, attn=attn, attn_history=tuple(history) if return_history else None)


def aggregate(module: SlotAttention, queries, tokens, return_history: bool = False) -> SlotState:
    """Functional alias for ``module(queries, tokens)``."""
    return module(queries, tokens, return_history=return_history)

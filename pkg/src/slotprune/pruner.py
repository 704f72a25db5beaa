"""Turn attention maps into kept-token indices.

Selection is argmax per slot (top-k kept as an ablation variant), with a
deterministic dedup/pad policy: slots electing the same token count once,
and pad mode refills the deficit with the not-yet-kept tokens of largest
column-max attention so exactly ``s`` tokens are forwarded. The aggregation
reads the reference tokens (typically a mid encoder layer) while the gather
reads the tokens actually forwarded downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, ShapeError, ValidationError
from .slot_attention import QueryDistribution, SlotAttention, sample_queries
from .validation import as_attention_map, as_index_vector, as_token_matrix, check_budget

__all__ = [
    "PruneInput",
    "PruneResult",
    "select_indices",
    "select_indices_topk",
    "gather",
    "hard_masks",
    "apply_budget",
    "prune",
]

PAD_MODES = ("pad", "nopad")


@dataclass(frozen=True)
class PruneInput:
    """Reference/forward token pair plus budget and pad policy.

    ``v_ref`` drives the aggregation; ``v_last`` supplies the rows that are
    actually kept. Both must have the same number of tokens.
    """

    v_ref: np.ndarray
    v_last: np.ndarray
    budget: int
    pad_mode: str = "pad"

    def __post_init__(self):
        v_ref = as_token_matrix(self.v_ref, "v_ref")
        v_last = as_token_matrix(self.v_last, "v_last")
        if v_ref.shape[0] != v_last.shape[0]:
            raise ShapeError(
                f"v_ref and v_last must share n, got {v_ref.shape[0]} vs {v_last.shape[0]}"
            )
        object.__setattr__(self, "v_ref", v_ref)
        object.__setattr__(self, "v_last", v_last)
        check_budget(self.budget, v_ref.shape[0])
        if self.pad_mode not in PAD_MODES:
            raise ConfigError(f"pad_mode must be one of {PAD_MODES}, got {self.pad_mode!r}")

    @property
    def n(self) -> int:
        return self.v_ref.shape[0]


@dataclass(frozen=True)
class PruneResult:
    """Selection outcome with a dedup/pad audit trail.

    ``indices`` are the strictly kept token ids (deduped argmax winners,
    ascending). ``padded_indices`` are the refill chosen in pad mode.
    ``forwarded_indices`` is their sorted union — the set actually forwarded,
    of size exactly ``s`` in pad mode and ≤ s otherwise — and ``kept`` holds
    the corresponding rows of ``v_last``.
    """

    indices: np.ndarray
    padded_indices: np.ndarray
    kept: np.ndarray
    masks: np.ndarray
    areas: np.ndarray
    n_duplicates: int
    n_padded: int
    budget: int
    pad_mode: str

    @property
    def forwarded_indices(self) -> np.ndarray:
        return np.sort(np.concatenate([self.indices, self.padded_indices]))

    @property
    def n(self) -> int:
        return self.masks.shape[1]

    @property
    def empty_slot_count(self) -> int:
        return int((self.areas == 0).sum())


def select_indices(attn) -> np.ndarray:
    """Most-attended token id per slot; ties break toward the lowest index."""
    a = as_attention_map(attn)
    if (a < 0).any():
        raise ValidationError("attn rows must be nonnegative")
    return np.argmax(a, axis=1).astype(np.int64)


def select_indices_topk(attn, k: int) -> np.ndarray:
    """Per slot, the k highest-attention token ids, concatenated slot-major.

    Within a slot, ids are ordered by descending attention with ties broken
    toward the lowest index. k=1 degenerates to ``select_indices``.
    """
    a = as_attention_map(attn)
    n = a.shape[1]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ConfigError(f"k={k} exceeds token count n={n}")
    # Stable sort on negated rows: descending value, ascending index on ties.
    order = np.argsort(-a, axis=1, kind="stable")[:, :k]
    return order.reshape(-1).astype(np.int64)


def gather(v_last, indices) -> np.ndarray:
    """Rows of ``v_last`` at ``indices``, in the given order."""
    v = as_token_matrix(v_last, "v_last")
    idx = as_index_vector(indices, v.shape[0])
    return v[idx]


def hard_masks(attn) -> tuple[np.ndarray, np.ndarray]:
    """One-hot token→slot assignment by columnwise argmax, plus slot areas.

    Ties go to the lowest slot. Areas sum to n; a slot may own zero tokens.
    """
    a = as_attention_map(attn)
    s, n = a.shape
    owners = np.argmax(a, axis=0)
    masks = np.zeros((s, n), dtype=np.int64)
    masks[owners, np.arange(n)] = 1
    areas = masks.sum(axis=1)
    return masks, areas


def apply_budget(attn, pad_mode: str = "pad") -> tuple[np.ndarray, np.ndarray, int, int]:
    """Dedup argmax winners and optionally refill to the full budget.

    Returns (strict_indices, padded_indices, n_duplicates, n_padded), with
    strict indices ascending. Pad mode ranks the not-yet-kept tokens by their
    column-max attention (ties toward the lowest index) and takes enough to
    forward exactly s tokens.
    """
    if pad_mode not in PAD_MODES:
        raise ConfigError(f"pad_mode must be one of {PAD_MODES}, got {pad_mode!r}")
    a = as_attention_map(attn)
    s, n = a.shape
    raw = select_indices(a)
    strict = np.unique(raw)
    n_duplicates = s - strict.size
    padded = np.empty(0, dtype=np.int64)
    if pad_mode == "pad" and n_duplicates > 0:
        col_max = a.max(axis=0)
        remaining = np.setdiff1d(np.arange(n), strict, assume_unique=True)
        # argsort on (-attention) with a stable kind keeps ties index-ordered
        rank = remaining[np.argsort(-col_max[remaining], kind="stable")]
        padded = np.sort(rank[:n_duplicates])
    return strict.astype(np.int64), padded, int(n_duplicates), int(padded.size)


def prune(
    inputs: PruneInput,
    dist: QueryDistribution,
    params: SlotAttention,
    seed: int = 0,
) -> PruneResult:
    """Aggregate over v_ref, select per-slot winners, dedup/pad, gather v_last."""
    with torch.no_grad():
        queries = sample_queries(dist, inputs.budget, seed)
        state = params(queries, inputs.v_ref)
    attn = state.attn.double().numpy()
    strict, padded, n_duplicates, n_padded = apply_budget(attn, inputs.pad_mode)
    masks, areas = hard_masks(attn)
    forwarded = np.sort(np.concatenate([strict, padded]))
    return PruneResult(
        indices=strict,
        padded_indices=padded,
        kept=gather(inputs.v_last, forwarded),
        masks=masks,
        areas=areas,
        n_duplicates=n_duplicates,
        n_padded=n_padded,
        budget=inputs.budget,
        pad_mode=inputs.pad_mode,
    )

"""scikit-learn estimator facade: fit a token pruner once, then transform
any token sequence into its kept subset at the configured budget.

``fit`` accepts a TokenCorpus, a list of n×c matrices, or a stacked 3-D
array; ``transform`` returns the kept rows per sequence (a list, because n
and the kept count may vary per item when ``pad_mode='nopad'``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .pruner import PruneInput, prune
from .token_store import TokenCorpus, TokenSequence
from .trainer import TrainConfig, train
from .validation import derive_seed

__all__ = ["SlotTokenPruner", "as_corpus"]


def as_corpus(X) -> TokenCorpus:
    """Normalize estimator input into a TokenCorpus."""
    if isinstance(X, TokenCorpus):
        return X
    if isinstance(X, TokenSequence):
        return TokenCorpus(items=(X,))
    arr = np.asarray(X) if not isinstance(X, (list, tuple)) else None
    if arr is not None and arr.ndim == 2:
        return TokenCorpus(items=(TokenSequence(tokens=arr, item_id="item-0000"),))
    if arr is not None and arr.ndim == 3:
        X = list(arr)
    items = tuple(
        TokenSequence(tokens=np.asarray(x), item_id=f"item-{i:04d}") for i, x in enumerate(X)
    )
    return TokenCorpus(items=items)


class SlotTokenPruner(BaseEstimator, TransformerMixin):
    """Budgeted token selection behind the standard fit/transform API."""

    def __init__(
        self,
        budget: int = 8,
        budget_set: tuple[int, ...] | None = None,
        pad_mode: str = "pad",
        steps: int = 1000,
        batch_size: int = 8,
        learning_rate: float = 3e-3,
        loss_kind: str = "aw_mse",
        slot_iterations: int = 3,
        optimizer: str = "adam",
        attn_dim: int = 64,
        mlp_hidden: int = 128,
        decoder_width: int = 128,
        decoder_depth: int = 2,
        decoder_heads: int = 4,
        decoder_ffn: int = 256,
        max_tokens: int = 1024,
        random_state: int = 0,
    ):
        self.budget = budget
        self.budget_set = budget_set
        self.pad_mode = pad_mode
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.loss_kind = loss_kind
        self.slot_iterations = slot_iterations
        self.optimizer = optimizer
        self.attn_dim = attn_dim
        self.mlp_hidden = mlp_hidden
        self.decoder_width = decoder_width
        self.decoder_depth = decoder_depth
        self.decoder_heads = decoder_heads
        self.decoder_ffn = decoder_ffn
        self.max_tokens = max_tokens
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        budget_set = self.budget_set if self.budget_set is not None else (self.budget,)
        return TrainConfig(
            budget_set=tuple(budget_set),
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            loss_kind=self.loss_kind,
            slot_iterations=self.slot_iterations,
            optimizer=self.optimizer,
            attn_dim=self.attn_dim,
            mlp_hidden=self.mlp_hidden,
            decoder_width=self.decoder_width,
            decoder_depth=self.decoder_depth,
            decoder_heads=self.decoder_heads,
            decoder_ffn=self.decoder_ffn,
            max_tokens=self.max_tokens,
        )

    def fit(self, X, y=None):
        corpus = as_corpus(X)
        self.checkpoint_ = train(corpus, self._train_config())
        self.n_features_in_ = corpus.c
        return self

    def _check_fitted(self):
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError("SlotTokenPruner is not fitted; call fit first")

    def transform_indices(self, X) -> list[np.ndarray]:
        """Forwarded (kept) token indices per sequence."""
        self._check_fitted()
        corpus = as_corpus(X)
        out = []
        for item in corpus.items:
            result = prune(
                PruneInput(item.tokens, item.tokens, self.budget, self.pad_mode),
                self.checkpoint_.query_dist,
                self.checkpoint_.slot_attention,
                seed=derive_seed(self.random_state, "transform", item.item_id),
            )
            out.append(result.forwarded_indices)
        return out

    def transform(self, X) -> list[np.ndarray]:
        """Kept token rows per sequence, order-preserving."""
        corpus = as_corpus(X)
        return [
            item.tokens[idx]
            for item, idx in zip(corpus.items, self.transform_indices(corpus))
        ]

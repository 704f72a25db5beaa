import numpy as np
import pytest
import torch

import slotprune as sp

# Tiny tensors dominate this suite; a single thread is faster and keeps
# reduction order fixed for the bit-exactness assertions.
torch.set_num_threads(1)


DEFAULT_SPEC = sp.SynthSpec(
    n_objects=8,
    tokens_per_object=(8, 16),
    c=64,
    center_scale=1.0,
    noise_scale=0.05,
    n_items=50,
    seed=0,
)


@pytest.fixture(scope="session")
def default_corpus() -> sp.TokenCorpus:
    return sp.synth_corpus(DEFAULT_SPEC)


@pytest.fixture(scope="session")
def small_corpus() -> sp.TokenCorpus:
    return sp.synth_corpus(
        sp.SynthSpec(n_objects=3, tokens_per_object=(4, 4), c=8, n_items=4, seed=11)
    )


@pytest.fixture(scope="session")
def train_config() -> sp.TrainConfig:
    return sp.TrainConfig(
        budget_set=(8, 16, 32),
        steps=TRAIN_STEPS,
        batch_size=8,
        learning_rate=3e-3,
        seed=0,
        loss_kind="aw_mse",
        optimizer="adam",
    )


TRAIN_STEPS = 1200


@pytest.fixture(scope="session")
def trained_bundle(default_corpus, train_config) -> sp.CheckpointBundle:
    """One shared training run; several suites assert against it."""
    return sp.train(default_corpus, train_config)


def coverage_per_item(corpus, bundle, budget, seed=5, pad_mode="pad"):
    values = []
    for item in corpus.items:
        result = sp.prune(
            sp.PruneInput(item.tokens, item.tokens, budget, pad_mode),
            bundle.query_dist,
            bundle.slot_attention,
            seed=seed,
        )
        values.append(sp.coverage(result, item.labels))
    return np.array(values)

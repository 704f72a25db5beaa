import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import slotprune as sp
from slotprune.estimator import as_corpus


ESTIMATOR_KW = dict(
    budget=3,
    budget_set=(2, 3),
    steps=5,
    batch_size=2,
    learning_rate=1e-3,
    attn_dim=8,
    mlp_hidden=16,
    decoder_width=16,
    decoder_depth=1,
    decoder_heads=2,
    decoder_ffn=32,
    max_tokens=32,
    random_state=0,
)


def test_as_corpus_accepts_lists_and_arrays():
    rng = np.random.default_rng(0)
    seqs = [rng.normal(size=(5, 4)), rng.normal(size=(7, 4))]
    corpus = as_corpus(seqs)
    assert [item.n for item in corpus.items] == [5, 7]

    stacked = rng.normal(size=(3, 6, 4))
    corpus = as_corpus(stacked)
    assert len(corpus) == 3

    single = as_corpus(rng.normal(size=(6, 4)))
    assert len(single) == 1


def test_get_set_params_roundtrip():
    est = sp.SlotTokenPruner(**ESTIMATOR_KW)
    params = est.get_params()
    assert params["budget"] == 3
    est2 = clone(est)
    assert est2.get_params() == params
    est2.set_params(budget=2)
    assert est2.budget == 2


def test_transform_requires_fit(small_corpus):
    est = sp.SlotTokenPruner(**ESTIMATOR_KW)
    with pytest.raises(NotFittedError):
        est.transform(small_corpus)


def test_fit_transform_contract(small_corpus):
    est = sp.SlotTokenPruner(**ESTIMATOR_KW)
    est.fit(small_corpus)
    assert est.n_features_in_ == small_corpus.c
    kept = est.transform(small_corpus)
    assert len(kept) == len(small_corpus)
    for item, rows in zip(small_corpus.items, kept):
        assert rows.shape == (3, small_corpus.c)  # pad mode forwards exactly budget rows
        # each kept row is one of the item's tokens
        for row in rows:
            assert (np.abs(item.tokens - row).sum(axis=1) < 1e-6).any()


def test_transform_indices_deterministic(small_corpus):
    est = sp.SlotTokenPruner(**ESTIMATOR_KW).fit(small_corpus)
    a = est.transform_indices(small_corpus)
    b = est.transform_indices(small_corpus)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_fit_on_array_input():
    rng = np.random.default_rng(1)
    stacked = rng.normal(size=(4, 12, 8)).astype(np.float32)
    est = sp.SlotTokenPruner(**{**ESTIMATOR_KW, "budget": 2, "budget_set": (2,)})
    kept = est.fit_transform(stacked)
    assert len(kept) == 4
    assert all(k.shape == (2, 8) for k in kept)


def test_nopad_mode_can_return_fewer(small_corpus):
    est = sp.SlotTokenPruner(**{**ESTIMATOR_KW, "pad_mode": "nopad"}).fit(small_corpus)
    for idx in est.transform_indices(small_corpus):
        assert idx.size <= 3
        assert len(set(idx.tolist())) == idx.size

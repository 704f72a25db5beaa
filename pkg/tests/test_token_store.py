import numpy as np
import pytest

import slotprune as sp
from slotprune.errors import ConfigError, FormatError, ValidationError


def test_synth_counts_by_construction():
    spec = sp.SynthSpec(n_objects=3, tokens_per_object=(4, 4), c=8, n_items=2, seed=7)
    corpus = sp.synth_corpus(spec)
    assert len(corpus) == 2
    for item in corpus.items:
        assert item.n == 12
        assert item.c == 8
        assert len(np.unique(item.labels)) == 3


def test_synth_deterministic():
    spec = sp.SynthSpec(n_objects=4, tokens_per_object=(3, 6), c=16, n_items=3, seed=9)
    a = sp.synth_corpus(spec)
    b = sp.synth_corpus(spec)
    for x, y in zip(a.items, b.items):
        assert x.item_id == y.item_id
        np.testing.assert_array_equal(x.tokens, y.tokens)
        np.testing.assert_array_equal(x.labels, y.labels)


def test_synth_within_vs_cross_distances():
    # Oracle: brute-force all pairwise distances and compare group means.
    spec = sp.SynthSpec(n_objects=4, tokens_per_object=(5, 8), c=12, n_items=5, seed=3,
                        center_scale=1.0, noise_scale=0.01)
    corpus = sp.synth_corpus(spec)
    for item in corpus.items:
        diff = item.tokens[:, None, :] - item.tokens[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        same = item.labels[:, None] == item.labels[None, :]
        off_diag = ~np.eye(item.n, dtype=bool)
        within = dist[same & off_diag].mean()
        cross = dist[~same].mean()
        assert within < cross


def test_synth_total_exact_and_distinct_labels():
    spec = sp.SynthSpec(n_objects=8, tokens_per_object=(8, 16), c=4, n_items=20, seed=1)
    corpus = sp.synth_corpus(spec)
    for item in corpus.items:
        assert item.n == 8 * 12  # n_objects * round(mean of range)
        assert len(np.unique(item.labels)) == 8


def test_synth_fixed_sizes():
    sizes = (2, 13, 13, 13, 14, 14, 14, 13)
    spec = sp.SynthSpec(n_objects=8, c=8, n_items=2, seed=0, fixed_sizes=sizes)
    corpus = sp.synth_corpus(spec)
    for item in corpus.items:
        counts = np.bincount(item.labels, minlength=8)
        np.testing.assert_array_equal(counts, sizes)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_objects=0),
        dict(tokens_per_object=(5, 2)),
        dict(tokens_per_object=(0, 2)),
        dict(c=0),
        dict(center_scale=0.0),
        dict(noise_scale=-1.0),
        dict(n_items=0),
        dict(fixed_sizes=(1, 2)),
    ],
)
def test_synth_spec_validation(kwargs):
    base = dict(n_objects=3, tokens_per_object=(2, 4), c=4, n_items=1, seed=0)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        sp.SynthSpec(**base)


def test_save_load_roundtrip(tmp_path, small_corpus):
    path = tmp_path / "corpus.ocvt"
    sp.save_corpus(small_corpus, path)
    loaded = sp.load_corpus(path)
    assert loaded.meta == small_corpus.meta
    for a, b in zip(small_corpus.items, loaded.items):
        assert a.item_id == b.item_id
        assert a.layer_tag == b.layer_tag
        assert a.tokens.tobytes() == b.tokens.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)


def test_roundtrip_without_labels(tmp_path):
    item = sp.TokenSequence(tokens=np.random.default_rng(0).normal(size=(5, 3)), layer_tag=9, item_id="x")
    corpus = sp.TokenCorpus(items=(item,), meta={"source": "encoder-layer-9"})
    path = tmp_path / "c.ocvt"
    sp.save_corpus(corpus, path)
    loaded = sp.load_corpus(path)
    assert loaded.items[0].labels is None
    assert loaded.items[0].layer_tag == 9
    assert loaded.meta["source"] == "encoder-layer-9"


def test_roundtrip_heterogeneous_n(tmp_path):
    rng = np.random.default_rng(4)
    items = tuple(
        sp.TokenSequence(tokens=rng.normal(size=(n, 6)), item_id=f"i{n}") for n in (3, 7, 12)
    )
    corpus = sp.TokenCorpus(items=items)
    path = tmp_path / "het.ocvt"
    sp.save_corpus(corpus, path)
    loaded = sp.load_corpus(path)
    assert [item.n for item in loaded.items] == [3, 7, 12]


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ocvt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError):
        sp.load_corpus(path)


def test_load_rejects_zero_n(tmp_path):
    import struct

    path = tmp_path / "zero.ocvt"
    body = b"OCVT" + struct.pack("<HI", 1, 1)
    body += struct.pack("<H", 1) + b"a" + struct.pack("<hIIB", -1, 0, 4, 0)
    path.write_bytes(body)
    with pytest.raises(ValidationError):
        sp.load_corpus(path)


def test_load_rejects_nan_payload(tmp_path):
    import struct

    path = tmp_path / "nan.ocvt"
    payload = np.array([[1.0, np.nan]], dtype="<f4").tobytes()
    body = b"OCVT" + struct.pack("<HI", 1, 1)
    body += struct.pack("<H", 3) + b"bad" + struct.pack("<hIIB", -1, 1, 2, 0) + payload
    path.write_bytes(body)
    with pytest.raises(ValidationError, match="bad"):
        sp.load_corpus(path)


def test_load_truncated_file(tmp_path, small_corpus):
    path = tmp_path / "t.ocvt"
    sp.save_corpus(small_corpus, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 10])
    with pytest.raises(FormatError):
        sp.load_corpus(path)


def test_corpus_invariants():
    rng = np.random.default_rng(0)
    with pytest.raises(ValidationError):
        sp.TokenCorpus(items=())
    a = sp.TokenSequence(tokens=rng.normal(size=(2, 3)), item_id="a")
    b_wrong_c = sp.TokenSequence(tokens=rng.normal(size=(2, 4)), item_id="b")
    with pytest.raises(ValidationError):
        sp.TokenCorpus(items=(a, b_wrong_c))
    dup = sp.TokenSequence(tokens=rng.normal(size=(3, 3)), item_id="a")
    with pytest.raises(ValidationError):
        sp.TokenCorpus(items=(a, dup))


def test_sequence_invariants():
    rng = np.random.default_rng(0)
    with pytest.raises(ValidationError):
        sp.TokenSequence(tokens=np.array([[np.inf, 0.0]]), item_id="x")
    with pytest.raises(ValidationError):
        sp.TokenSequence(tokens=rng.normal(size=(3, 2)), labels=np.array([0, 1]), item_id="x")
    with pytest.raises(ValidationError):
        sp.TokenSequence(tokens=rng.normal(size=(2, 2)), labels=np.array([-1, 0]), item_id="x")

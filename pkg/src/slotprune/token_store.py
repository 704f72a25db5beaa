"""Vision-token corpora: domain types, a synthetic labeled generator, and
the OCVT binary container.

The synthetic generator emits cluster-structured token sequences with
ground-truth object labels so selection quality can be scored against an
oracle. Real encoder tokens are ingested through the same OCVT file format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, StorageError, ValidationError
from .validation import as_token_matrix

OCVT_MAGIC = b"OCVT"
OCVT_VERSION = 1


@dataclass(frozen=True)
class TokenSequence:
    """One image's vision tokens: an n×c float32 matrix plus optional labels.

    ``layer_tag`` records the encoder layer the tokens came from (-1 for
    synthetic data). ``labels``, when present, give the ground-truth object id
    of each token and exist only on synthetic corpora.
    """

    tokens: np.ndarray
    layer_tag: int = -1
    labels: np.ndarray | None = None
    item_id: str = ""

    def __post_init__(self):
        tokens = as_token_matrix(self.tokens, f"tokens[{self.item_id}]", dtype=np.float32)
        object.__setattr__(self, "tokens", tokens)
        if tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise ValidationError(f"item {self.item_id!r}: n and c must be >= 1, got {tokens.shape}")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (tokens.shape[0],):
                raise ValidationError(
                    f"item {self.item_id!r}: labels length {labels.shape} != n={tokens.shape[0]}"
                )
            if labels.size and labels.min() < 0:
                raise ValidationError(f"item {self.item_id!r}: labels must be nonnegative")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def c(self) -> int:
        return self.tokens.shape[1]


@dataclass(frozen=True)
class TokenCorpus:
    """Ordered collection of token sequences sharing a channel width."""

    items: tuple[TokenSequence, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise ValidationError("corpus must contain at least one item")
        widths = {item.c for item in items}
        if len(widths) != 1:
            raise ValidationError(f"all items must share c, got widths {sorted(widths)}")
        ids = [item.item_id for item in items]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError(f"duplicate item_id {dup!r}")

    @property
    def c(self) -> int:
        return self.items[0].c

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def min_tokens(self) -> int:
        return min(item.n for item in self.items)

    def max_tokens(self) -> int:
        return max(item.n for item in self.items)

    def fingerprint(self) -> str:
        """Short content hash over token payloads and ids."""
        import hashlib

        h = hashlib.blake2b(digest_size=8)
        for item in self.items:
            h.update(item.item_id.encode("utf-8"))
            h.update(item.tokens.tobytes())
            if item.labels is not None:
                h.update(item.labels.astype(np.int64).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic cluster-structured corpus.

    Cluster sizes are drawn uniformly in ``tokens_per_object``; the last
    cluster absorbs rounding so every item totals exactly
    ``n_objects * round(mean(tokens_per_object))`` tokens. ``fixed_sizes``,
    when given, overrides the draw with explicit per-cluster sizes (used to
    construct corpora with deliberately tiny clusters).
    """

    n_objects: int
    tokens_per_object: tuple[int, int] = (8, 16)
    c: int = 64
    center_scale: float = 1.0
    noise_scale: float = 0.05
    n_items: int = 50
    seed: int = 0
    fixed_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        lo, hi = self.tokens_per_object
        if self.n_objects < 1:
            raise ConfigError(f"n_objects must be >= 1, got {self.n_objects}")
        if lo < 1 or lo > hi:
            raise ConfigError(f"tokens_per_object must satisfy 1 <= min <= max, got {(lo, hi)}")
        if self.c < 1:
            raise ConfigError(f"c must be >= 1, got {self.c}")
        if self.center_scale <= 0:
            raise ConfigError(f"center_scale must be > 0, got {self.center_scale}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.n_items < 1:
            raise ConfigError(f"n_items must be >= 1, got {self.n_items}")
        if self.fixed_sizes is not None:
            sizes = tuple(int(s) for s in self.fixed_sizes)
            if len(sizes) != self.n_objects:
                raise ConfigError(
                    f"fixed_sizes must list {self.n_objects} cluster sizes, got {len(sizes)}"
                )
            if min(sizes) < 1:
                raise ConfigError(f"fixed_sizes entries must be >= 1, got {sizes}")
            object.__setattr__(self, "fixed_sizes", sizes)


def _draw_cluster_sizes(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.fixed_sizes is not None:
        return np.array(spec.fixed_sizes, dtype=np.int64)
    lo, hi = spec.tokens_per_object
    target = spec.n_objects * int(round((lo + hi) / 2))
    if spec.n_objects == 1:
        return np.array([target], dtype=np.int64)
    # Rejection keeps the total exact while the first K-1 sizes stay uniform.
    while True:
        head = rng.integers(lo, hi + 1, size=spec.n_objects - 1)
        last = target - int(head.sum())
        if last >= 1:
            return np.concatenate([head, [last]]).astype(np.int64)


def synth_corpus(spec: SynthSpec) -> TokenCorpus:
    """Generate a labeled corpus; bit-identical for identical specs.

    Each item draws ``n_objects`` cluster centers from N(0, center_scale²·I)
    and emits per-cluster tokens center + N(0, noise_scale²·I), labeling each
    token with its owning cluster.
    """
    rng = np.random.default_rng(spec.seed)
    items = []
    for i in range(spec.n_items):
        sizes = _draw_cluster_sizes(spec, rng)
        centers = rng.normal(0.0, spec.center_scale, size=(spec.n_objects, spec.c))
        tokens = np.concatenate(
            [
                centers[k] + rng.normal(0.0, spec.noise_scale, size=(sizes[k], spec.c))
                for k in range(spec.n_objects)
            ]
        )
        labels = np.repeat(np.arange(spec.n_objects, dtype=np.int64), sizes)
        items.append(
            TokenSequence(
                tokens=tokens.astype(np.float32),
                layer_tag=-1,
                labels=labels,
                item_id=f"synth-{i:04d}",
            )
        )
    meta = {
        "generator": "synthetic-clusters",
        "n_objects": spec.n_objects,
        "tokens_per_object": list(spec.tokens_per_object),
        "c": spec.c,
        "center_scale": spec.center_scale,
        "noise_scale": spec.noise_scale,
        "n_items": spec.n_items,
        "seed": spec.seed,
    }
    if spec.fixed_sizes is not None:
        meta["fixed_sizes"] = list(spec.fixed_sizes)
    return TokenCorpus(items=tuple(items), meta=meta)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_corpus(corpus: TokenCorpus, path) -> None:
    """Write the OCVT container plus a JSON sidecar mirroring ``meta``."""
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(OCVT_MAGIC)
            fh.write(struct.pack("<HI", OCVT_VERSION, len(corpus.items)))
            for item in corpus.items:
                id_bytes = item.item_id.encode("utf-8")
                fh.write(struct.pack("<H", len(id_bytes)))
                fh.write(id_bytes)
                has_labels = item.labels is not None
                fh.write(struct.pack("<hIIB", item.layer_tag, item.n, item.c, int(has_labels)))
                fh.write(np.ascontiguousarray(item.tokens, dtype="<f4").tobytes())
                if has_labels:
                    fh.write(item.labels.astype("<u4").tobytes())
        _sidecar_path(path).write_text(json.dumps(corpus.meta, indent=2, sort_keys=True))
    except OSError as exc:
        raise StorageError(f"failed to write corpus to {path}: {exc}") from exc


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated OCVT file while reading {what}")
    return data


def load_corpus(path) -> TokenCorpus:
    """Read an OCVT container; validates invariants and payload finiteness."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != OCVT_MAGIC:
                raise FormatError(f"{path} is not an OCVT file (magic {magic!r})")
            version, count = struct.unpack("<HI", _read_exact(fh, 6, "header"))
            if version != OCVT_VERSION:
                raise FormatError(f"unsupported OCVT version {version}")
            items = []
            for _ in range(count):
                (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "id length"))
                item_id = _read_exact(fh, id_len, "item id").decode("utf-8")
                layer_tag, n, c, has_labels = struct.unpack(
                    "<hIIB", _read_exact(fh, 11, f"item header ({item_id})")
                )
                if n < 1 or c < 1:
                    raise ValidationError(f"item {item_id!r} declares invalid shape n={n}, c={c}")
                payload = _read_exact(fh, 4 * n * c, f"token payload ({item_id})")
                tokens = np.frombuffer(payload, dtype="<f4").reshape(n, c).copy()
                if not np.isfinite(tokens).all():
                    raise ValidationError(f"item {item_id!r} has non-finite token values")
                labels = None
                if has_labels:
                    raw = _read_exact(fh, 4 * n, f"labels ({item_id})")
                    labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
                items.append(
                    TokenSequence(tokens=tokens, layer_tag=layer_tag, labels=labels, item_id=item_id)
                )
    except OSError as exc:
        raise StorageError(f"failed to read corpus from {path}: {exc}") from exc
    meta = {}
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return TokenCorpus(items=tuple(items), meta=meta)


def with_meta(corpus: TokenCorpus, **entries) -> TokenCorpus:
    """Return a copy of the corpus with extra meta entries."""
    meta = dict(corpus.meta)
    meta.update(entries)
    return replace(corpus, meta=meta)

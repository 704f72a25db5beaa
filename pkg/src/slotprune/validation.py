"""Input validation helpers used across the public API surface.

All helpers either return a normalized ``numpy`` array or raise one of the
package exceptions with the offending argument named in the message.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import BoundsError, ConfigError, ShapeError, ValidationError


def as_token_matrix(x, name: str = "tokens", *, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a 2-D float matrix (rows are tokens) and check finiteness."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if dtype is not None:
        arr = arr.astype(dtype)
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_attention_map(a, name: str = "attn") -> np.ndarray:
    """Coerce ``a`` to a non-empty 2-D float matrix of finite, nonnegative rows."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a nonempty s×n matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_index_vector(idx, n: int, name: str = "indices") -> np.ndarray:
    """Coerce to a 1-D integer vector and bounds-check against ``n`` rows."""
    arr = np.asarray(idx)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        return arr.astype(np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValidationError(f"{name} must be integers")
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= n:
        raise BoundsError(f"{name} out of range for n={n}: [{arr.min()}, {arr.max()}]")
    return arr


def check_budget(s: int, n: int, name: str = "budget") -> int:
    if not isinstance(s, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {type(s).__name__}")
    if s < 1 or s > n:
        raise ConfigError(f"{name} must satisfy 1 <= {name} <= n={n}, got {s}")
    return int(s)


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_masks(masks, areas, n_tokens: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Validate a hard assignment: 0/1 matrix with one-hot columns, areas = row sums."""
    m = np.asarray(masks)
    if m.ndim != 2:
        raise ShapeError(f"masks must be 2-D, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValidationError("masks must contain only 0/1 entries")
    m = m.astype(np.int64)
    if n_tokens is not None and m.shape[1] != n_tokens:
        raise ShapeError(f"masks have {m.shape[1]} columns, expected {n_tokens}")
    col_sums = m.sum(axis=0)
    if m.shape[1] and not (col_sums == 1).all():
        bad = int(np.flatnonzero(col_sums != 1)[0])
        raise ValidationError(f"masks column {bad} is not one-hot (sum={col_sums[bad]})")
    a = np.asarray(areas)
    if a.shape != (m.shape[0],):
        raise ShapeError(f"areas must have length {m.shape[0]}, got shape {a.shape}")
    a = a.astype(np.int64)
    if not (a == m.sum(axis=1)).all():
        raise ValidationError("areas are inconsistent with masks row sums")
    return m, a


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed derived from a tuple of labels/integers."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)

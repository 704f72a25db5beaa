"""Reconstruction objectives: plain MSE and area-weighted MSE.

The area-weighted variant protects small-but-important regions: each token's
squared error (averaged over channels) is weighted by the reciprocal of its
owning slot's area, errors are averaged per slot, and the result is averaged
over the nonempty slots. With uniform areas this collapses exactly to MSE.

``mse_value``/``aw_mse_value`` return differentiable scalars for training;
``mse``/``aw_mse`` wrap them into a detached ``LossReport``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, ShapeError
from .validation import check_masks

__all__ = ["LossReport", "mse", "aw_mse", "mse_value", "aw_mse_value"]

LOSS_KINDS = ("mse", "aw_mse")


@dataclass(frozen=True)
class LossReport:
    """Scalar loss plus its per-component breakdown.

    For ``aw_mse`` the breakdown is per slot (mean member-token error, zero
    for empty slots) and the value is its mean over nonempty slots. Plain
    ``mse`` has no slot structure, so the breakdown is per token and the
    value is its mean.
    """

    value: float
    per_slot_contrib: np.ndarray
    loss_kind: str


def _pair(v_prime, v) -> tuple[torch.Tensor, torch.Tensor]:
    vp = v_prime if isinstance(v_prime, torch.Tensor) else torch.as_tensor(np.asarray(v_prime, dtype=np.float64))
    vt = v if isinstance(v, torch.Tensor) else torch.as_tensor(np.asarray(v, dtype=np.float64))
    if vp.ndim != 2 or vt.ndim != 2:
        raise ShapeError(f"expected 2-D matrices, got {tuple(vp.shape)} and {tuple(vt.shape)}")
    if vp.shape != vt.shape:
        raise ShapeError(f"shape mismatch: {tuple(vp.shape)} vs {tuple(vt.shape)}")
    if vt.dtype != vp.dtype:
        vt = vt.to(vp.dtype)
    return vp, vt


def _token_errors(v_prime: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    # Squared error averaged over channels, one scalar per token.
    return ((v_prime - v) ** 2).mean(dim=1)


def mse_value(v_prime, v) -> torch.Tensor:
    """Mean over all n·c squared differences (differentiable)."""
    vp, vt = _pair(v_prime, v)
    return ((vp - vt) ** 2).mean()


def aw_mse_value(v_prime, v, masks, areas) -> torch.Tensor:
    """Area-weighted reconstruction error (differentiable in v_prime/v).

    masks/areas are treated as constants: per-token channel-mean errors are
    summed per slot, divided by the slot area, and averaged over nonempty
    slots.
    """
    vp, vt = _pair(v_prime, v)
    m, a = check_masks(masks, areas, n_tokens=vp.shape[0])
    errors = _token_errors(vp, vt)
    m_t = torch.as_tensor(m, dtype=vp.dtype)
    slot_sums = m_t @ errors
    nonempty = a > 0
    if not nonempty.any():
        raise ShapeError("masks assign no tokens to any slot")
    areas_t = torch.as_tensor(np.where(nonempty, a, 1), dtype=vp.dtype)
    per_slot = slot_sums / areas_t
    keep = torch.as_tensor(nonempty.astype(np.float64), dtype=vp.dtype)
    return (per_slot * keep).sum() / keep.sum()


def mse(v_prime, v) -> LossReport:
    vp, vt = _pair(v_prime, v)
    per_token = _token_errors(vp, vt).detach().cpu().double().numpy()
    return LossReport(value=float(per_token.mean()), per_slot_contrib=per_token, loss_kind="mse")


def aw_mse(v_prime, v, masks, areas) -> LossReport:
    vp, vt = _pair(v_prime, v)
    m, a = check_masks(masks, areas, n_tokens=vp.shape[0])
    errors = _token_errors(vp, vt).detach().cpu().double().numpy()
    slot_sums = m.astype(np.float64) @ errors
    nonempty = a > 0
    per_slot = np.where(nonempty, slot_sums / np.where(nonempty, a, 1), 0.0)
    value = float(per_slot[nonempty].mean())
    return LossReport(value=value, per_slot_contrib=per_slot, loss_kind="aw_mse")


def loss_value(kind: str, v_prime, v, masks=None, areas=None) -> torch.Tensor:
    """Dispatch helper used by the trainer and distance metric."""
    if kind == "mse":
        return mse_value(v_prime, v)
    if kind == "aw_mse":
        if masks is None or areas is None:
            raise ConfigError("aw_mse requires masks and areas")
        return aw_mse_value(v_prime, v, masks, areas)
    raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")

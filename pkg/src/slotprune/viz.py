"""File-emitting visualization of slot masks and kept tokens.

Each item renders as an h×w grid (tokens in row-major order): cells are
colored by owning slot and kept cells get an outlined border, making it easy
to see that one representative token is retained per slot region.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colormaps
from matplotlib.patches import Rectangle

from .errors import ConfigError, StorageError
from .pruner import PruneResult

__all__ = ["infer_grid", "render_overlay", "save_overlay_grid"]


def infer_grid(n: int, override: tuple[int, int] | None = None) -> tuple[int, int]:
    """Square grid for square n, otherwise an explicit HxW override is required."""
    if override is not None:
        h, w = int(override[0]), int(override[1])
        if h < 1 or w < 1 or h * w != n:
            raise ConfigError(f"grid {h}x{w} does not tile n={n} tokens")
        return h, w
    root = math.isqrt(n)
    if root * root != n:
        raise ConfigError(f"n={n} is not square; pass an explicit grid like --grid 8x12")
    return root, root


def render_overlay(ax, result: PruneResult, grid: tuple[int, int], title: str = "") -> None:
    h, w = grid
    owners = np.argmax(result.masks, axis=0).reshape(h, w)
    s = result.masks.shape[0]
    cmap = colormaps["hsv"].resampled(max(s, 2))
    ax.imshow(owners, cmap=cmap, vmin=0, vmax=max(s - 1, 1), interpolation="nearest")
    for idx in result.forwarded_indices:
        r, c = divmod(int(idx), w)
        ax.add_patch(Rectangle((c - 0.5, r - 0.5), 1, 1, fill=False, edgecolor="black", linewidth=1.8))
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)


def save_overlay_grid(
    results: list[tuple[str, PruneResult]],
    path,
    grid: tuple[int, int] | None = None,
    cols: int = 4,
    metadata: dict | None = None,
) -> None:
    """Render a panel of items to a PNG; grid is inferred per item if square."""
    if not results:
        raise ConfigError("nothing to render")
    cols = min(cols, len(results))
    rows = math.ceil(len(results) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    for ax in axes.reshape(-1):
        ax.axis("off")
    for ax, (item_id, result) in zip(axes.reshape(-1), results):
        ax.axis("on")
        render_overlay(ax, result, infer_grid(result.n, grid), title=item_id)
    fig.tight_layout()
    meta = {str(k): str(v) for k, v in (metadata or {}).items()}
    try:
        fig.savefig(path, dpi=120, metadata=meta)
    except OSError as exc:
        raise StorageError(f"failed to write figure to {path}: {exc}") from exc
    finally:
        plt.close(fig)

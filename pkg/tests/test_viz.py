import numpy as np
import pytest

import slotprune as sp
from slotprune.errors import ConfigError
from slotprune.viz import infer_grid, save_overlay_grid


def test_infer_grid_square():
    assert infer_grid(576) == (24, 24)
    assert infer_grid(16) == (4, 4)


def test_infer_grid_override():
    assert infer_grid(96, (8, 12)) == (8, 12)
    with pytest.raises(ConfigError):
        infer_grid(96, (8, 11))
    with pytest.raises(ConfigError):
        infer_grid(96)


def make_result(n=16, s=4, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 8)).astype(np.float32)
    dist = sp.QueryDistribution(8)
    mod = sp.SlotAttention(8, attn_dim=8, mlp_hidden=16, iterations=2, seed=seed)
    return sp.prune(sp.PruneInput(v, v, s, "pad"), dist, mod, seed=seed)


def test_save_overlay_grid_writes_png(tmp_path):
    results = [(f"item-{i}", make_result(seed=i)) for i in range(3)]
    path = tmp_path / "panel.png"
    save_overlay_grid(results, path, metadata={"seed": 0})
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 1000


def test_save_overlay_grid_rejects_empty(tmp_path):
    with pytest.raises(ConfigError):
        save_overlay_grid([], tmp_path / "x.png")

"""Analytic prefill FLOPs for a decoder-only transformer under token
pruning, plus the overhead of the slot pruner itself.

The prefill model counts the matmul work of every layer on the combined
vision+text sequence: with n = n_vision + n_text,

    total = mac_factor * L * (4*n*d^2 + 2*n^2*d + 2*n*d*m)

covering the q/k/v/output projections, the two quadratic attention matmuls,
and the two FFN matmuls. Embedding and LM-head costs are excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, StorageError

__all__ = [
    "ArchSpec",
    "PrunerArch",
    "CostReport",
    "prefill_flops",
    "pruner_flops",
    "BUILTIN_ARCHS",
    "DEFAULT_PRUNER_ARCH",
    "load_arch_file",
    "format_flops",
]


@dataclass(frozen=True)
class ArchSpec:
    """Decoder-only transformer sizes feeding the prefill cost formula."""

    layers: int
    hidden: int
    ffn: int
    mac_factor: int = 2
    name: str = ""

    def __post_init__(self):
        for attr, value in (("layers", self.layers), ("hidden", self.hidden), ("ffn", self.ffn)):
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{attr} must be a positive integer, got {value!r}")
        if self.mac_factor not in (1, 2):
            raise ConfigError(f"mac_factor must be 1 or 2, got {self.mac_factor!r}")


@dataclass(frozen=True)
class PrunerArch:
    """Slot-pruner sizes used to model its one-off selection overhead."""

    token_dim: int = 1024
    attn_dim: int = 1024
    mlp_hidden: int = 2048
    iterations: int = 3
    mac_factor: int = 2

    def __post_init__(self):
        for attr in ("token_dim", "attn_dim", "mlp_hidden", "iterations"):
            value = getattr(self, attr)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{attr} must be a positive integer, got {value!r}")
        if self.mac_factor not in (1, 2):
            raise ConfigError(f"mac_factor must be 1 or 2, got {self.mac_factor!r}")


@dataclass(frozen=True)
class CostReport:
    """Total FLOPs with an exact per-term breakdown (terms sum to total)."""

    total_flops: int
    per_term: dict = field(default_factory=dict)
    token_counts: dict = field(default_factory=dict)


def prefill_flops(arch: ArchSpec, n_vision: int, n_text: int) -> CostReport:
    """Prefill cost of one forward pass over n_vision + n_text tokens."""
    if n_vision < 0 or n_text < 0:
        raise ConfigError(f"token counts must be >= 0, got {(n_vision, n_text)}")
    n = n_vision + n_text
    d, m = arch.hidden, arch.ffn
    scale = arch.mac_factor * arch.layers
    terms = {
        "attention_proj": scale * 4 * n * d * d,
        "attention_quadratic": scale * 2 * n * n * d,
        "ffn": scale * 2 * n * d * m,
    }
    return CostReport(
        total_flops=sum(terms.values()),
        per_term=terms,
        token_counts={"n_vision": n_vision, "n_text": n_text},
    )


def pruner_flops(slot_arch: PrunerArch, n: int, s: int) -> CostReport:
    """Modeled cost of one pruning pass: aggregation plus index selection.

    Counts the key/value projections (once), then per iteration the query
    projection, the s×n attention and readout matmuls, the GRU slot update,
    and the residual MLP. The selection pass (argmax per slot and the
    column-max ranking for padding) is counted as comparisons, not MACs.
    """
    if n < 0 or s < 0:
        raise ConfigError(f"n and s must be >= 0, got {(n, s)}")
    c, d, h, t = slot_arch.token_dim, slot_arch.attn_dim, slot_arch.mlp_hidden, slot_arch.iterations
    mac = slot_arch.mac_factor
    terms = {
        "kv_proj": mac * 2 * n * c * d,
        "q_proj": mac * t * s * c * d,
        "attention": mac * t * 2 * s * n * d,
        "slot_update": mac * t * s * 3 * (c * d + c * c),
        "mlp": mac * t * s * 2 * c * h,
        "selection": 2 * s * n,
    }
    return CostReport(
        total_flops=sum(terms.values()),
        per_term=terms,
        token_counts={"n_tokens": n, "n_slots": s},
    )


BUILTIN_ARCHS = {
    "llava-1.5": ArchSpec(layers=32, hidden=4096, ffn=11008, name="llava-1.5"),
    "llava-next": ArchSpec(layers=32, hidden=4096, ffn=11008, name="llava-next"),
    "vicuna-7b": ArchSpec(layers=32, hidden=4096, ffn=11008, name="vicuna-7b"),
    "vicuna-13b": ArchSpec(layers=40, hidden=5120, ffn=13824, name="vicuna-13b"),
}

DEFAULT_PRUNER_ARCH = PrunerArch()


def load_arch_file(path) -> dict[str, ArchSpec]:
    """Load {name: {layers, hidden, ffn[, mac_factor]}} JSON into ArchSpecs."""
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise StorageError(f"failed to read arch file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"arch file {path} is not valid JSON: {exc}") from exc
    archs = {}
    for name, spec in payload.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"arch {name!r} must map to an object")
        archs[name] = ArchSpec(
            layers=spec.get("layers"),
            hidden=spec.get("hidden"),
            ffn=spec.get("ffn"),
            mac_factor=spec.get("mac_factor", 2),
            name=name,
        )
    return archs


def format_flops(value: float) -> str:
    """Human-readable FLOPs with T/G/M/K units, two decimals."""
    for threshold, unit in ((1e12, "T"), (1e9, "G"), (1e6, "M"), (1e3, "K")):
        if value >= threshold:
            return f"{value / threshold:.2f} {unit}"
    return f"{value:.0f}"

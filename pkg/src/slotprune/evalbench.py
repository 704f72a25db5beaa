"""Selection-quality benchmarking against labeled oracles and baselines.

Coverage is the fraction of ground-truth objects with at least one kept
token; reconstruction error scores a kept set by conditioning the frozen
decoder on the kept tokens themselves. Baselines are token-only selectors
(uniform random, largest-norm, greedy medoids) for parity with the trained
pruner, which also never sees text.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decoder import recon_distance
from .errors import ConfigError, StorageError
from .pruner import PruneInput, PruneResult, prune
from .token_store import TokenCorpus
from .trainer import CheckpointBundle
from .validation import as_token_matrix, check_budget, derive_seed

__all__ = [
    "BenchRow",
    "BenchReport",
    "coverage",
    "expected_random_coverage",
    "baseline_select",
    "run_bench",
    "BASELINE_METHODS",
    "PRUNER_METHOD",
]

PRUNER_METHOD = "pruner"
BASELINE_METHODS = ("random", "norm_topk", "medoid")
ALL_METHODS = (PRUNER_METHOD,) + BASELINE_METHODS


def coverage(result, labels) -> float:
    """Fraction of distinct objects with at least one kept token."""
    if labels is None:
        raise ConfigError("coverage requires ground-truth labels")
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(result, PruneResult):
        indices = result.forwarded_indices
    else:
        indices = np.asarray(result, dtype=np.int64)
    distinct = np.unique(labels)
    if indices.size == 0:
        return 0.0
    hit = np.unique(labels[indices])
    return float(hit.size / distinct.size)


def expected_random_coverage(cluster_sizes, s: int) -> float:
    """Exact expected coverage of a uniform random s-subset.

    For cluster sizes a_i over n tokens, object i is missed with probability
    C(n - a_i, s) / C(n, s); the expectation averages the hit probabilities.
    """
    sizes = [int(a) for a in cluster_sizes]
    if not sizes or min(sizes) < 1:
        raise ConfigError(f"cluster_sizes must be positive, got {cluster_sizes!r}")
    n = sum(sizes)
    check_budget(s, n, "s")
    total = math.comb(n, s)
    hit = [1.0 - math.comb(n - a, s) / total if n - a >= s else 1.0 for a in sizes]
    return float(sum(hit) / len(sizes))


def _greedy_medoids(tokens: np.ndarray, s: int) -> np.ndarray:
    # Greedy k-medoids: each round adds the token that most reduces the total
    # distance from every token to its nearest chosen medoid.
    n = tokens.shape[0]
    sq = (tokens**2).sum(axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (tokens @ tokens.T), 0.0)
    best = np.full(n, np.inf)
    chosen: list[int] = []
    for _ in range(s):
        costs = np.minimum(best[:, None], dist).sum(axis=0)
        costs[chosen] = np.inf
        pick = int(np.argmin(costs))
        chosen.append(pick)
        best = np.minimum(best, dist[:, pick])
    return np.sort(np.array(chosen, dtype=np.int64))


def baseline_select(method: str, v_ref, s: int, seed: int = 0) -> np.ndarray:
    """Seeded baseline selectors; indices are returned ascending."""
    tokens = as_token_matrix(v_ref, "v_ref")
    n = tokens.shape[0]
    check_budget(s, n, "s")
    if method == "random":
        rng = np.random.default_rng(derive_seed(seed, "baseline-random"))
        return np.sort(rng.choice(n, size=s, replace=False).astype(np.int64))
    if method == "norm_topk":
        norms = np.linalg.norm(tokens, axis=1)
        order = np.argsort(-norms, kind="stable")[:s]
        return np.sort(order.astype(np.int64))
    if method == "medoid":
        return _greedy_medoids(tokens, s)
    raise ConfigError(f"unknown baseline method {method!r}; pick from {BASELINE_METHODS}")


@dataclass(frozen=True)
class BenchRow:
    """Aggregated metrics for one (method, budget) cell."""

    method: str
    budget: int
    coverage: float
    recon_error: float
    duplicate_rate: float
    empty_slot_rate: float | None


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    corpus_fingerprint: str
    seeds: tuple[int, ...]
    pad_mode: str
    n_items: int

    def row(self, method: str, budget: int) -> BenchRow:
        for row in self.rows:
            if row.method == method and row.budget == budget:
                return row
        raise KeyError(f"no row for ({method}, {budget})")

    def to_json(self) -> str:
        payload = asdict(self)
        payload["rows"] = [asdict(r) for r in self.rows]
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        payload = json.loads(text)
        rows = tuple(BenchRow(**row) for row in payload.pop("rows"))
        return cls(
            rows=rows,
            corpus_fingerprint=payload["corpus_fingerprint"],
            seeds=tuple(payload["seeds"]),
            pad_mode=payload["pad_mode"],
            n_items=payload["n_items"],
        )

    def write_csv(self, path) -> None:
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["method", "budget", "coverage", "recon_error", "duplicate_rate", "empty_slot_rate"])
                for row in self.rows:
                    writer.writerow(
                        [
                            row.method,
                            row.budget,
                            f"{row.coverage:.6f}",
                            f"{row.recon_error:.6f}",
                            f"{row.duplicate_rate:.6f}",
                            "" if row.empty_slot_rate is None else f"{row.empty_slot_rate:.6f}",
                        ]
                    )
        except OSError as exc:
            raise StorageError(f"failed to write CSV to {path}: {exc}") from exc


def run_bench(
    corpus: TokenCorpus,
    checkpoint: CheckpointBundle,
    budgets,
    methods=ALL_METHODS,
    seeds=(0,),
    pad_mode: str = "pad",
) -> BenchReport:
    """Evaluate the method × budget cross-product with fixed seeds.

    Requires a labeled corpus (coverage is undefined otherwise). The frozen
    decoder from the checkpoint scores every kept set via reconstruction.
    """
    budgets = [int(b) for b in budgets]
    if not budgets:
        raise ConfigError("budgets must be nonempty")
    min_n = corpus.min_tokens()
    for b in budgets:
        check_budget(b, min_n, "budget")
    methods = list(methods)
    for method in methods:
        if method not in ALL_METHODS:
            raise ConfigError(f"unknown method {method!r}; pick from {ALL_METHODS}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("seeds must be nonempty")
    for item in corpus.items:
        if item.labels is None:
            raise ConfigError(f"item {item.item_id!r} has no labels; run_bench needs a labeled corpus")

    rows = []
    for method in methods:
        for budget in budgets:
            covs, errs, dups, empties = [], [], [], []
            for seed in seeds:
                for item in corpus.items:
                    if method == PRUNER_METHOD:
                        result = prune(
                            PruneInput(item.tokens, item.tokens, budget, pad_mode),
                            checkpoint.query_dist,
                            checkpoint.slot_attention,
                            seed=derive_seed(seed, "bench", item.item_id),
                        )
                        indices = result.forwarded_indices
                        dups.append(result.n_duplicates / budget)
                        empties.append(result.empty_slot_count / budget)
                    else:
                        indices = baseline_select(
                            method, item.tokens, budget, derive_seed(seed, "bench", method, item.item_id)
                        )
                        dups.append(0.0)
                    covs.append(coverage(indices, item.labels))
                    errs.append(
                        recon_distance(
                            checkpoint.decoder,
                            item.tokens[indices],
                            item.tokens,
                            perm_seed=derive_seed(seed, "bench-recon", item.item_id),
                            loss="mse",
                        )
                    )
            rows.append(
                BenchRow(
                    method=method,
                    budget=budget,
                    coverage=float(np.mean(covs)),
                    recon_error=float(np.mean(errs)),
                    duplicate_rate=float(np.mean(dups)),
                    empty_slot_rate=float(np.mean(empties)) if method == PRUNER_METHOD else None,
                )
            )
    return BenchReport(
        rows=tuple(rows),
        corpus_fingerprint=corpus.fingerprint(),
        seeds=tuple(seeds),
        pad_mode=pad_mode,
        n_items=len(corpus),
    )

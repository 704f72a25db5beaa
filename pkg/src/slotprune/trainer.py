"""End-to-end training of the query distribution, slot attention, and
reconstruction decoder on a token corpus.

Each step samples a budget from the configured set (so one checkpoint serves
every budget), samples that many queries, aggregates, reconstructs the full
sequence conditioned on the slots, and descends the reconstruction loss.
Hard masks and areas are recomputed per step but treated as constants.
Everything is a pure function of (corpus, config): identical inputs give
bit-identical checkpoints.
"""

from __future__ import annotations

import copy
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .decoder import ReconstructionDecoder, random_permutation
from .errors import CapacityError, ConfigError, FormatError, NumericalError, StorageError, TrainingError
from .objective import LOSS_KINDS, loss_value
from .pruner import hard_masks
from .slot_attention import QueryDistribution, SlotAttention
from .token_store import TokenCorpus
from .validation import derive_seed

__all__ = [
    "TrainConfig",
    "CheckpointBundle",
    "train",
    "grad_check",
    "sample_budget",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

OCVC_MAGIC = b"OCVC"
OCVC_VERSION = 1

OPTIMIZERS = ("sgd", "adam")
BUCKETING_POLICIES = ("by_length",)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and architecture sizes for one training run."""

    budget_set: tuple[int, ...] = (32, 64, 128, 192)
    steps: int = 2000
    batch_size: int = 8
    learning_rate: float = 1e-2
    seed: int = 0
    loss_kind: str = "aw_mse"
    slot_iterations: int = 3
    eval_every: int = 200
    bucketing: str = "by_length"
    optimizer: str = "sgd"
    attn_dim: int = 64
    mlp_hidden: int = 128
    decoder_width: int = 128
    decoder_depth: int = 2
    decoder_heads: int = 4
    decoder_ffn: int = 256
    max_tokens: int = 1024

    def __post_init__(self):
        budgets = tuple(int(b) for b in self.budget_set)
        if not budgets or min(budgets) < 1:
            raise ConfigError(f"budget_set must be a nonempty set of positive budgets, got {self.budget_set!r}")
        object.__setattr__(self, "budget_set", budgets)
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.slot_iterations < 1:
            raise ConfigError(f"slot_iterations must be >= 1, got {self.slot_iterations}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.bucketing not in BUCKETING_POLICIES:
            raise ConfigError(f"bucketing must be one of {BUCKETING_POLICIES}, got {self.bucketing!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass
class CheckpointBundle:
    """Trained modules plus the config snapshot and loss history."""

    query_dist: QueryDistribution
    slot_attention: SlotAttention
    decoder: ReconstructionDecoder
    config: TrainConfig
    step: int = 0
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    budget_history: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def token_dim(self) -> int:
        return self.query_dist.token_dim

    def parameters(self):
        for module in (self.query_dist, self.slot_attention, self.decoder):
            yield from module.parameters()

    def named_parameters(self):
        for prefix, module in (
            ("query", self.query_dist),
            ("slot", self.slot_attention),
            ("decoder", self.decoder),
        ):
            for name, param in module.named_parameters():
                yield f"{prefix}.{name}", param

    def to_dtype(self, dtype: torch.dtype) -> "CheckpointBundle":
        clone = copy.deepcopy(self)
        for module in (clone.query_dist, clone.slot_attention, clone.decoder):
            module.to(dtype)
        return clone


def sample_budget(budget_set, seed: int, step: int) -> int:
    """The per-step budget draw used by the training loop (uniform)."""
    options = sorted(int(b) for b in budget_set)
    rng = np.random.default_rng(derive_seed(seed, "budget", step))
    return options[int(rng.integers(len(options)))]


def build_modules(token_dim: int, config: TrainConfig) -> tuple[QueryDistribution, SlotAttention, ReconstructionDecoder]:
    dist = QueryDistribution(token_dim)
    slot_attn = SlotAttention(
        token_dim,
        attn_dim=config.attn_dim,
        mlp_hidden=config.mlp_hidden,
        iterations=config.slot_iterations,
        seed=config.seed,
    )
    decoder = ReconstructionDecoder(
        token_dim,
        width=config.decoder_width,
        depth=config.decoder_depth,
        heads=config.decoder_heads,
        ffn_width=config.decoder_ffn,
        max_tokens=config.max_tokens,
        seed=config.seed,
    )
    return dist, slot_attn, decoder


def _batch_loss(
    dist: QueryDistribution,
    slot_attn: SlotAttention,
    decoder: ReconstructionDecoder,
    batch: list[torch.Tensor],
    budget: int,
    loss_kind: str,
    seed: int,
    step: int,
    fixed_masks: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> torch.Tensor:
    """One training-step loss, shared between the loop and grad_check.

    Items are stacked (bucketing guarantees equal n), aggregated and decoded
    in one batched pass, and the objective is averaged item by item in a
    fixed order so accumulation is deterministic. ``fixed_masks`` lets the
    gradient checker pin the hard assignment: masks are step constants, so
    the derivative under test is taken at fixed masks, and recomputing them
    under a parameter perturbation could flip an argmax discontinuously.
    """
    lengths = {int(t.shape[0]) for t in batch}
    if len(lengths) != 1:
        raise ConfigError(f"batch items must share n, got lengths {sorted(lengths)}")
    n = lengths.pop()
    tokens = torch.stack(batch)
    queries = torch.stack(
        [dist.sample(budget, derive_seed(seed, "queries", step, j)) for j in range(len(batch))]
    )
    state = slot_attn(queries, tokens)
    perms = np.stack(
        [random_permutation(n, derive_seed(seed, "perm", step, j)) for j in range(len(batch))]
    )
    recon = decoder(state.slots, tokens, perms)
    attn = state.attn.detach().cpu().double().numpy()
    total = None
    for j in range(len(batch)):
        masks, areas = fixed_masks[j] if fixed_masks is not None else hard_masks(attn[j])
        item_loss = loss_value(loss_kind, recon.v_prime[j], tokens[j], masks, areas)
        total = item_loss if total is None else total + item_loss
    return total / len(batch)


def _buckets_by_length(corpus: TokenCorpus) -> list[list[int]]:
    by_n: dict[int, list[int]] = {}
    for idx, item in enumerate(corpus.items):
        by_n.setdefault(item.n, []).append(idx)
    return [by_n[n] for n in sorted(by_n)]


def train(corpus: TokenCorpus, config: TrainConfig) -> CheckpointBundle:
    """Train all three parameter groups; deterministic given (corpus, config)."""
    min_n = corpus.min_tokens()
    if max(config.budget_set) > min_n:
        raise ConfigError(
            f"budget_set {config.budget_set} exceeds the smallest item length n={min_n}"
        )
    if corpus.max_tokens() > config.max_tokens:
        raise CapacityError(
            f"corpus has items with n={corpus.max_tokens()} > max_tokens={config.max_tokens}"
        )

    dist, slot_attn, decoder = build_modules(corpus.c, config)
    params = list(dist.parameters()) + list(slot_attn.parameters()) + list(decoder.parameters())
    if config.optimizer == "sgd":
        opt = torch.optim.SGD(params, lr=config.learning_rate)
    else:
        opt = torch.optim.Adam(params, lr=config.learning_rate)

    buckets = _buckets_by_length(corpus)
    bucket_weights = np.array([len(b) for b in buckets], dtype=np.float64)
    bucket_weights /= bucket_weights.sum()
    tensors = [torch.as_tensor(item.tokens) for item in corpus.items]

    losses = np.zeros(config.steps)
    budgets = np.zeros(config.steps, dtype=np.int64)
    for step in range(config.steps):
        budget = sample_budget(config.budget_set, config.seed, step)
        rng = np.random.default_rng(derive_seed(config.seed, "batch", step))
        bucket = buckets[int(rng.choice(len(buckets), p=bucket_weights))]
        picks = rng.integers(len(bucket), size=config.batch_size)
        batch = [tensors[bucket[i]] for i in picks]

        try:
            loss = _batch_loss(dist, slot_attn, decoder, batch, budget, config.loss_kind, config.seed, step)
        except NumericalError as exc:
            raise TrainingError(f"diverged at step {step}: {exc}") from exc
        if not torch.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()

        losses[step] = float(loss.detach())
        budgets[step] = budget
        if (step + 1) % config.eval_every == 0:
            window = losses[max(0, step + 1 - config.eval_every) : step + 1]
            log.info("step %d/%d loss %.6f (window mean %.6f)", step + 1, config.steps, losses[step], window.mean())

    return CheckpointBundle(
        query_dist=dist,
        slot_attention=slot_attn,
        decoder=decoder,
        config=config,
        step=config.steps,
        loss_history=losses,
        budget_history=budgets,
    )


def grad_check(bundle: CheckpointBundle, batch, epsilon: float = 1e-5, n_samples: int = 256, seed: int = 0) -> float:
    """Max relative error of autograd gradients vs central finite differences.

    The full training-step loss (slot attention through the decoder and the
    configured objective) is evaluated in float64 on the given batch of token
    sequences; ``n_samples`` parameter coordinates are probed. Relative error
    is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    items = list(batch)
    if not items:
        raise ConfigError("grad_check needs at least one token sequence")

    work = bundle.to_dtype(torch.float64)
    tokens = [torch.as_tensor(np.asarray(item.tokens, dtype=np.float64)) for item in items]
    budget = min(min(work.config.budget_set), min(t.shape[0] for t in tokens))

    # Pin the hard assignment at the unperturbed parameters; see _batch_loss.
    with torch.no_grad():
        probe_queries = torch.stack(
            [
                work.query_dist.sample(budget, derive_seed(work.config.seed, "queries", 0, j))
                for j in range(len(tokens))
            ]
        )
        probe_attn = work.slot_attention(probe_queries, torch.stack(tokens)).attn.numpy()
    frozen = [hard_masks(probe_attn[j]) for j in range(len(tokens))]

    def closure() -> torch.Tensor:
        return _batch_loss(
            work.query_dist,
            work.slot_attention,
            work.decoder,
            tokens,
            budget,
            work.config.loss_kind,
            work.config.seed,
            step=0,
            fixed_masks=frozen,
        )

    loss = closure()
    for p in work.parameters():
        p.grad = None
    loss.backward()

    named = list(work.named_parameters())
    sizes = [p.numel() for _, p in named]
    total = int(np.sum(sizes))
    rng = np.random.default_rng(derive_seed(seed, "grad-check"))
    count = min(total, n_samples)
    flat_ids = np.sort(rng.choice(total, size=count, replace=False))

    offsets = np.cumsum([0] + sizes)
    max_err = 0.0
    with torch.no_grad():
        for flat in flat_ids:
            pi = int(np.searchsorted(offsets, flat, side="right") - 1)
            local = int(flat - offsets[pi])
            param = named[pi][1]
            grad = param.grad.reshape(-1)[local].item() if param.grad is not None else 0.0
            view = param.data.reshape(-1)
            original = view[local].item()
            view[local] = original + epsilon
            f_plus = float(closure())
            view[local] = original - epsilon
            f_minus = float(closure())
            view[local] = original
            numeric = (f_plus - f_minus) / (2 * epsilon)
            denom = max(abs(grad), abs(numeric), 1e-6)
            max_err = max(max_err, abs(grad - numeric) / denom)
    return max_err


def _array_entries(bundle: CheckpointBundle) -> list[tuple[str, np.ndarray]]:
    entries: list[tuple[str, np.ndarray]] = []
    for name, param in bundle.named_parameters():
        entries.append((name, param.detach().cpu().numpy()))
    entries.append(("loss_history", np.asarray(bundle.loss_history, dtype=np.float64)))
    entries.append(("budget_history", np.asarray(bundle.budget_history, dtype=np.int64)))
    return entries


_DTYPE_CODES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def save_checkpoint(bundle: CheckpointBundle, path) -> None:
    """Write the OCVC container: JSON header + concatenated raw LE payloads."""
    entries = _array_entries(bundle)
    header = {
        "config": asdict(bundle.config),
        "step": bundle.step,
        "token_dim": bundle.token_dim,
        "arrays": [
            {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)} for name, arr in entries
        ],
    }
    for spec in header["arrays"]:
        if spec["dtype"] not in _DTYPE_CODES:
            raise FormatError(f"unsupported array dtype {spec['dtype']}")
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(OCVC_MAGIC)
            fh.write(struct.pack("<HI", OCVC_VERSION, len(blob)))
            fh.write(blob)
            for (name, arr), spec in zip(entries, header["arrays"]):
                fh.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[spec["dtype"]], copy=False).tobytes())
    except OSError as exc:
        raise StorageError(f"failed to write checkpoint to {path}: {exc}") from exc


def load_checkpoint(path) -> CheckpointBundle:
    """Read an OCVC container and rebuild the modules bit-exactly."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"failed to read checkpoint from {path}: {exc}") from exc
    fh = io.BytesIO(data)
    magic = fh.read(4)
    if magic != OCVC_MAGIC:
        raise FormatError(f"{path} is not an OCVC checkpoint (magic {magic!r})")
    head = fh.read(6)
    if len(head) != 6:
        raise FormatError("truncated OCVC header")
    version, header_len = struct.unpack("<HI", head)
    if version != OCVC_VERSION:
        raise FormatError(f"unsupported OCVC version {version}")
    blob = fh.read(header_len)
    if len(blob) != header_len:
        raise FormatError("truncated OCVC header JSON")
    header = json.loads(blob.decode("utf-8"))

    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        code = _DTYPE_CODES.get(spec["dtype"])
        if code is None:
            raise FormatError(f"unsupported array dtype {spec['dtype']}")
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * np.dtype(code).itemsize
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise FormatError(f"truncated payload for array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(raw, dtype=code).reshape(spec["shape"]).copy()

    config_dict = dict(header["config"])
    config_dict["budget_set"] = tuple(config_dict["budget_set"])
    config = TrainConfig(**config_dict)
    token_dim = int(header["token_dim"])
    dist, slot_attn, decoder = build_modules(token_dim, config)

    param_dtype = torch.float64 if arrays["query.mu"].dtype == np.float64 else torch.float32
    for module in (dist, slot_attn, decoder):
        module.to(param_dtype)
    bundle = CheckpointBundle(
        query_dist=dist,
        slot_attention=slot_attn,
        decoder=decoder,
        config=config,
        step=int(header["step"]),
        loss_history=arrays["loss_history"],
        budget_history=arrays["budget_history"],
    )
    with torch.no_grad():
        for name, param in bundle.named_parameters():
            if name not in arrays:
                raise FormatError(f"checkpoint missing array {name}")
            param.copy_(torch.as_tensor(arrays[name]))
    return bundle

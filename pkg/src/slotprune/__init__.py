"""slotprune: budgeted vision-token selection via competitive slot aggregation.

Train a lightweight pruner once on a token corpus, then keep the most
representative tokens of any sequence under any budget. Includes an analytic
prefill-FLOPs model, a labeled synthetic corpus generator for oracle
testing, baselines, and a CLI.
"""

from .cost_model import ArchSpec, CostReport, PrunerArch, prefill_flops, pruner_flops
from .decoder import Reconstruction, ReconstructionDecoder, recon_distance, reconstruct
from .errors import (
    BoundsError,
    CapacityError,
    ConfigError,
    FormatError,
    NumericalError,
    ShapeError,
    SlotPruneError,
    StorageError,
    TrainingError,
    ValidationError,
)
from .estimator import SlotTokenPruner
from .evalbench import BenchReport, BenchRow, baseline_select, coverage, expected_random_coverage, run_bench
from .objective import LossReport, aw_mse, mse
from .pruner import (
    PruneInput,
    PruneResult,
    apply_budget,
    gather,
    hard_masks,
    prune,
    select_indices,
    select_indices_topk,
)
from .slot_attention import QueryDistribution, SlotAttention, SlotState, aggregate, sample_queries
from .token_store import SynthSpec, TokenCorpus, TokenSequence, load_corpus, save_corpus, synth_corpus
from .trainer import (
    CheckpointBundle,
    TrainConfig,
    grad_check,
    load_checkpoint,
    sample_budget,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "BenchReport",
    "BenchRow",
    "BoundsError",
    "CapacityError",
    "CheckpointBundle",
    "ConfigError",
    "CostReport",
    "FormatError",
    "LossReport",
    "NumericalError",
    "PruneInput",
    "PruneResult",
    "PrunerArch",
    "QueryDistribution",
    "Reconstruction",
    "ReconstructionDecoder",
    "ShapeError",
    "SlotAttention",
    "SlotPruneError",
    "SlotState",
    "SlotTokenPruner",
    "StorageError",
    "SynthSpec",
    "TokenCorpus",
    "TokenSequence",
    "TrainConfig",
    "TrainingError",
    "ValidationError",
    "aggregate",
    "apply_budget",
    "aw_mse",
    "baseline_select",
    "coverage",
    "expected_random_coverage",
    "gather",
    "grad_check",
    "hard_masks",
    "load_checkpoint",
    "load_corpus",
    "mse",
    "prefill_flops",
    "prune",
    "pruner_flops",
    "recon_distance",
    "reconstruct",
    "run_bench",
    "sample_budget",
    "sample_queries",
    "save_checkpoint",
    "save_corpus",
    "select_indices",
    "select_indices_topk",
    "synth_corpus",
    "train",
]

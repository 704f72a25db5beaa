"""Operator command line: synth, train, prune, eval, flops, viz.

Every subcommand is deterministic given its flags; seeds are recorded in the
emitted artifacts. Exit codes: 0 success, 1 configuration problems, 2 I/O or
format problems, 3 numerical failures.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import cost_model, evalbench, token_store, trainer, viz
from .errors import (
    CapacityError,
    ConfigError,
    FormatError,
    NumericalError,
    SlotPruneError,
    StorageError,
    TrainingError,
    ValidationError,
)
from .pruner import PruneInput, prune
from .validation import derive_seed

DEFAULT_SEED = 0


def _parse_int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} must be nonempty")
    return values


def _parse_grid(text: str | None) -> tuple[int, int] | None:
    if text is None:
        return None
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"--grid must look like HxW, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"--grid must look like HxW, got {text!r}") from exc


@click.group()
def cli():
    """Slot-attention vision token pruning toolkit."""


@cli.command()
@click.option("--out", required=True, type=click.Path(), help="Output OCVT corpus path.")
@click.option("--objects", default=8, show_default=True, help="Clusters per item.")
@click.option("--tokens-min", default=8, show_default=True, help="Min tokens per cluster.")
@click.option("--tokens-max", default=16, show_default=True, help="Max tokens per cluster.")
@click.option("--dim", default=64, show_default=True, help="Channel width c.")
@click.option("--items", default=50, show_default=True, help="Number of items.")
@click.option("--center-scale", default=1.0, show_default=True)
@click.option("--noise-scale", default=0.05, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
def synth(out, objects, tokens_min, tokens_max, dim, items, center_scale, noise_scale, seed):
    """Generate a labeled synthetic corpus."""
    spec = token_store.SynthSpec(
        n_objects=objects,
        tokens_per_object=(tokens_min, tokens_max),
        c=dim,
        center_scale=center_scale,
        noise_scale=noise_scale,
        n_items=items,
        seed=seed,
    )
    corpus = token_store.synth_corpus(spec)
    token_store.save_corpus(corpus, out)
    click.echo(f"wrote {len(corpus)} items (c={corpus.c}) to {out}")


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=False))
@click.option("--out", required=True, type=click.Path(), help="Output OCVC checkpoint path.")
@click.option("--budgets", default="32,64,128,192", show_default=True, help="Comma-separated budget set.")
@click.option("--steps", default=2000, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--lr", default=3e-3, show_default=True)
@click.option("--loss", default="aw_mse", show_default=True, type=click.Choice(["mse", "aw_mse"]))
@click.option("--iterations", default=3, show_default=True, help="Slot attention iterations.")
@click.option("--optimizer", default="adam", show_default=True, type=click.Choice(["sgd", "adam"]))
@click.option("--eval-every", default=200, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
def train(corpus_path, out, budgets, steps, batch_size, lr, loss, iterations, optimizer, eval_every, seed):
    """Train a pruner checkpoint on an OCVT corpus."""
    corpus = token_store.load_corpus(corpus_path)
    config = trainer.TrainConfig(
        budget_set=tuple(_parse_int_list(budgets, "--budgets")),
        steps=steps,
        batch_size=batch_size,
        learning_rate=lr,
        seed=seed,
        loss_kind=loss,
        slot_iterations=iterations,
        eval_every=eval_every,
        optimizer=optimizer,
    )
    bundle = trainer.train(corpus, config)
    trainer.save_checkpoint(bundle, out)
    loss_csv = Path(out).with_suffix("").with_name(Path(out).stem + "_loss.csv")
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "budget", "loss"])
        for step, (budget, value) in enumerate(zip(bundle.budget_history, bundle.loss_history)):
            writer.writerow([step, int(budget), f"{value:.8f}"])
    click.echo(
        f"trained {config.steps} steps (final loss {bundle.loss_history[-1]:.6f}); "
        f"checkpoint {out}, loss history {loss_csv}"
    )


@cli.command("prune")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--budget", required=True, type=int)
@click.option("--pad/--nopad", "pad", default=True, show_default=True)
@click.option("--ref-corpus", "ref_path", default=None, type=click.Path(), help="Reference corpus (mid encoder layer); defaults to --corpus.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output JSON of kept indices per item.")
def prune_cmd(corpus_path, checkpoint_path, budget, pad, ref_path, seed, out):
    """Select kept-token indices for every corpus item."""
    corpus = token_store.load_corpus(corpus_path)
    reference = token_store.load_corpus(ref_path) if ref_path else corpus
    ref_by_id = {item.item_id: item for item in reference.items}
    bundle = trainer.load_checkpoint(checkpoint_path)
    pad_mode = "pad" if pad else "nopad"
    kept = {}
    for item in corpus.items:
        ref = ref_by_id.get(item.item_id)
        if ref is None:
            raise ConfigError(f"reference corpus is missing item {item.item_id!r}")
        result = prune(
            PruneInput(ref.tokens, item.tokens, budget, pad_mode),
            bundle.query_dist,
            bundle.slot_attention,
            seed=derive_seed(seed, "cli-prune", item.item_id),
        )
        kept[item.item_id] = [int(i) for i in result.forwarded_indices]
    payload = {
        "meta": {
            "budget": budget,
            "pad_mode": pad_mode,
            "seed": seed,
            "checkpoint": str(checkpoint_path),
            "corpus": str(corpus_path),
            "ref_corpus": str(ref_path) if ref_path else str(corpus_path),
        },
        "items": kept,
    }
    Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    click.echo(f"pruned {len(kept)} items at budget {budget} ({pad_mode}) -> {out}")


@cli.command("eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--budgets", required=True, help="Comma-separated budgets.")
@click.option("--methods", default="pruner,random,norm_topk,medoid", show_default=True)
@click.option("--seeds", default="0", show_default=True)
@click.option("--pad/--nopad", "pad", default=True, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output JSON report.")
@click.option("--csv", "csv_path", default=None, type=click.Path(), help="Optional CSV table.")
def eval_cmd(corpus_path, checkpoint_path, budgets, methods, seeds, pad, out, csv_path):
    """Benchmark the pruner against baselines on a labeled corpus."""
    corpus = token_store.load_corpus(corpus_path)
    bundle = trainer.load_checkpoint(checkpoint_path)
    report = evalbench.run_bench(
        corpus,
        bundle,
        budgets=_parse_int_list(budgets, "--budgets"),
        methods=[m.strip() for m in methods.split(",") if m.strip()],
        seeds=_parse_int_list(seeds, "--seeds"),
        pad_mode="pad" if pad else "nopad",
    )
    Path(out).write_text(report.to_json())
    if csv_path:
        report.write_csv(csv_path)
    click.echo(f"evaluated {len(report.rows)} (method, budget) cells -> {out}")
    for row in report.rows:
        click.echo(
            f"  {row.method:>9} s={row.budget:<4d} coverage={row.coverage:.3f} recon={row.recon_error:.5f}"
        )


@cli.command()
@click.option("--arch", default="llava-1.5", show_default=True, help="Architecture name.")
@click.option("--arch-file", default=None, type=click.Path(), help="JSON file with extra architectures.")
@click.option("--vision", required=True, type=int, help="Vision token count.")
@click.option("--text", default=32, show_default=True, type=int, help="Text token count.")
@click.option("--pruner-budget", default=None, type=int, help="Also report pruner overhead at this budget.")
@click.option("--csv", "csv_path", default=None, type=click.Path())
def flops(arch, arch_file, vision, text, pruner_budget, csv_path):
    """Print the analytic prefill FLOPs table."""
    archs = dict(cost_model.BUILTIN_ARCHS)
    if arch_file:
        archs.update(cost_model.load_arch_file(arch_file))
    if arch not in archs:
        raise ConfigError(f"unknown arch {arch!r}; available: {sorted(archs)}")
    spec = archs[arch]
    report = cost_model.prefill_flops(spec, vision, text)
    click.echo(f"arch {arch}: L={spec.layers} d={spec.hidden} m={spec.ffn} mac={spec.mac_factor}")
    click.echo(f"prefill ({vision} vision + {text} text): {cost_model.format_flops(report.total_flops)}FLOPs")
    for term, value in report.per_term.items():
        click.echo(f"  {term:>20}: {cost_model.format_flops(value)}")
    rows = [["prefill", vision, text, report.total_flops]]
    if pruner_budget is not None:
        overhead = cost_model.pruner_flops(cost_model.DEFAULT_PRUNER_ARCH, vision, pruner_budget)
        ratio = overhead.total_flops / report.total_flops
        click.echo(
            f"pruner overhead (n={vision}, s={pruner_budget}): "
            f"{cost_model.format_flops(overhead.total_flops)} ({100 * ratio:.3f}% of prefill)"
        )
        rows.append(["pruner", vision, pruner_budget, overhead.total_flops])
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "n_tokens", "n_other", "flops"])
            writer.writerows(rows)


@cli.command("viz")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--budget", required=True, type=int)
@click.option("--grid", default=None, help="Explicit HxW token grid (required when n is not square).")
@click.option("--items", "n_items", default=4, show_default=True, help="How many items to render.")
@click.option("--pad/--nopad", "pad", default=True, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output PNG.")
def viz_cmd(corpus_path, checkpoint_path, budget, grid, n_items, pad, seed, out):
    """Render slot masks and kept cells as a PNG panel."""
    corpus = token_store.load_corpus(corpus_path)
    bundle = trainer.load_checkpoint(checkpoint_path)
    pad_mode = "pad" if pad else "nopad"
    results = []
    for item in corpus.items[:n_items]:
        result = prune(
            PruneInput(item.tokens, item.tokens, budget, pad_mode),
            bundle.query_dist,
            bundle.slot_attention,
            seed=derive_seed(seed, "cli-viz", item.item_id),
        )
        results.append((item.item_id, result))
    viz.save_overlay_grid(
        results,
        out,
        grid=_parse_grid(grid),
        metadata={"budget": budget, "pad_mode": pad_mode, "seed": seed},
    )
    click.echo(f"rendered {len(results)} items -> {out}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except (ConfigError, ValidationError, CapacityError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (StorageError, FormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (NumericalError, TrainingError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except SlotPruneError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

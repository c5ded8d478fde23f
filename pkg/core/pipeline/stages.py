"""The pipeline commands, one registered stage each.

Every stage reads and writes only the run's artifact directory through the
RunContext, so any stage can be rerun on its own once its inputs exist.
"""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from core.dataio import DatasetSink, LabelBudget, LabelSet, collect, label_random_subset
from core.envs import SOURCE_TASKS, TARGET_TASKS, ObservationKind
from core.errors import ConfigError, SpecMismatchError, TraversalError
from core.imagination import column_agreement, diagnose, pick_references, save_grid_png, train_vae, traverse, traverse_table
from core.sac import fine_tune, train_source
from core.transfer import (
    AGENT_FINETUNED,
    AGENT_SAC,
    TransferPolicy,
    compare_agents,
    evaluate_agent,
    evaluate_transfer,
    format_table,
    reports_frame,
)
from .context import RunContext
from .plotting import plot_learning_curves, plot_loss_curve
from .registry import register_stage

TABLE_FILES = {"gridpick": "table1.csv", "reacher": "table2.csv"}
TRAVERSAL_PNG = "traversal.png"
BUDGET_CSV = "budget_comparison.csv"
DIAGNOSTICS_CSV = "vae_diagnostics.csv"
FINETUNE_PNG = "finetune_curves.png"
DIVERSITY_CSV = "diversity_sweep.csv"
LABEL_SWEEP_CSV = "label_sweep.csv"

# reproduce-all runs these for every configured environment
PIPELINE: Tuple[str, ...] = ("train-sac", "collect", "label", "train-vae", "traverse", "finetune", "evaluate")

_FINETUNE_CURVE = "_finetune_"
_CURVE_SUFFIX = "_curve.csv"


def resolve_targets(env_id: str, target: Optional[str] = None) -> Tuple[str, ...]:
    """Target tasks named by `target` ('3', 'target3', 'red', 'reach_red'), all targets when None."""
    tasks = TARGET_TASKS[env_id]
    if target is None:
        return tasks
    for candidate in (str(target), f"target{target}", f"reach_{target}"):
        if candidate in tasks:
            return (candidate,)
    raise ConfigError(f"Unknown target '{target}' for {env_id}, expected one of {list(tasks)}")


@register_stage("train-sac", produces=("source_policy", "training_observations"))
def train_sac_stage(ctx: RunContext, env_id: str, **_: Any) -> Dict[str, Any]:
    """Train the source policy, keeping the observations it visits."""
    env = ctx.make_env(env_id)
    seed = ctx.seed_for(env_id, "train-sac")
    sink = DatasetSink(env.spec.obs_kind, max_records=ctx.config.collect.for_env(env_id).max_records, seed=seed)
    checkpoint = train_source(
        env, ctx.config.sac.for_env(env_id), sink, seed=seed, net_settings=ctx.config.nets, show_progress=ctx.show_progress
    )
    observations = sink.build(env_id, env.task.task_id, "sac-training", seed)
    ctx.save(env_id, "source_policy", checkpoint)
    ctx.save(env_id, "training_observations", observations)
    ctx.write_csv(checkpoint.curve, f"{env_id}_source_curve.csv")
    final = checkpoint.curve.iloc[-1]
    return {
        "steps": int(final["step"]),
        "success_rate": float(final["success_rate"]),
        "observations": len(observations),
        "observations_seen": sink.n_seen,
    }


@register_stage("collect", requires=("source_policy",), produces=("dataset",))
def collect_stage(
    ctx: RunContext,
    env_id: str,
    mode: Optional[str] = None,
    n_steps: Optional[int] = None,
    random_prefix: Optional[int] = None,
    **_: Any,
) -> Dict[str, Any]:
    """Build the VAE dataset from source training, a random policy or the trained source policy."""
    settings = ctx.config.collect.for_env(env_id)
    mode = mode or settings.mode
    seed = ctx.seed_for(env_id, "collect")
    if mode == "training":
        dataset = ctx.load(env_id, "training_observations")
    elif mode in ("random", "policy"):
        policy = ctx.load(env_id, "source_policy").frozen_policy(seed) if mode == "policy" else None
        dataset = collect(
            policy,
            ctx.make_env(env_id),
            n_steps or settings.n_steps,
            seed,
            random_prefix=(settings.random_prefix if random_prefix is None else random_prefix) if policy is not None else 0,
            max_records=settings.max_records,
            show_progress=ctx.show_progress,
        )
    else:
        raise ConfigError(f"Unknown collect mode '{mode}'", field_errors=[f"collect.{env_id}.mode: {mode!r}"])
    ctx.save(env_id, "dataset", dataset)
    ctx.write_csv(dataset.summary_frame(), f"{env_id}_dataset_summary.csv")
    return {"mode": mode, "records": len(dataset), "classes": dataset.class_counts()}


@register_stage("label", requires=("dataset",), produces=("labels",))
def label_stage(ctx: RunContext, env_id: str, budget: Optional[int] = None, **_: Any) -> Dict[str, Any]:
    """Reveal oracle labels for a uniform random subset within the label budget."""
    dataset = ctx.load(env_id, "dataset")
    max_labels = budget or ctx.config.vae.for_env(env_id).label_budget
    samples = label_random_subset(dataset, LabelBudget(max_labels), ctx.seed_for(env_id, "label"))
    labels = LabelSet.for_dataset(samples, dataset, max_labels)
    ctx.save(env_id, "labels", labels)
    return {"labels": len(labels), "label_fraction": labels.label_fraction, "collected": labels.n_collected}


@register_stage("train-vae", requires=("dataset", "labels"), produces=("vae",))
def train_vae_stage(ctx: RunContext, env_id: str, **_: Any) -> Dict[str, Any]:
    dataset = ctx.load(env_id, "dataset")
    labels = ctx.load(env_id, "labels")
    if labels.dataset_size != len(dataset):
        raise SpecMismatchError(
            f"{env_id} labels index a dataset of {labels.dataset_size} records, the dataset has {len(dataset)}; rerun label"
        )
    model = train_vae(
        dataset, labels.samples, ctx.config.vae.for_env(env_id),
        seed=ctx.seed_for(env_id, "train-vae"), net_settings=ctx.config.nets, show_progress=ctx.show_progress,
    )
    ctx.save(env_id, "vae", model)
    ctx.write_csv(model.loss_curve, f"{env_id}_vae_loss.csv")
    ctx.write_figure(lambda path: plot_loss_curve(model.loss_curve, path, title=f"{env_id} VAE"), f"{env_id}_vae_loss.png")

    report = diagnose(model, dataset, seed=ctx.seed_for(env_id, "diagnose"))
    ctx.upsert_csv(pd.DataFrame([{"env": env_id, **report}]), DIAGNOSTICS_CSV, keys=["env"])
    return {"epochs": model.training_meta["epochs_run"], **report}


@register_stage("traverse", requires=("vae", "dataset"))
def traverse_stage(ctx: RunContext, env_id: str, **_: Any) -> Dict[str, Any]:
    """Class-swap grid over one held-out reference per class: PNG for pixels, CSV table for features."""
    model = ctx.load(env_id, "vae")
    dataset = ctx.load(env_id, "dataset")
    holdout = np.asarray(model.training_meta.get("validation_indices") or np.arange(len(dataset)))
    references = pick_references(model, dataset, holdout)
    if len(references) == 0:
        raise TraversalError(f"No held-out {env_id} observations to traverse")
    observations = dataset.get(references)
    if model.obs_kind == ObservationKind.PIXEL:
        grid = traverse(model, observations, observations)
        ctx.write_figure(lambda path: save_grid_png(grid, path), TRAVERSAL_PNG)
        return {"grid": list(grid.shape[:2]), "column_agreement": column_agreement(model, grid, observations)}
    table = traverse_table(model, observations, observations)
    ctx.write_csv(table, f"{env_id}_traversal.csv")
    return {"cells": len(table), "column_agreement": float(np.mean(table["pred_class"] == table["col_class"]))}


def _finetune_curves(ctx: RunContext) -> Dict[str, Dict[str, List[pd.DataFrame]]]:
    curves: Dict[str, Dict[str, List[pd.DataFrame]]] = {}
    for path in ctx.list_outputs(f"*{_FINETUNE_CURVE}*{_CURVE_SUFFIX}"):
        env_id, task_id = path.name[: -len(_CURVE_SUFFIX)].split(_FINETUNE_CURVE, 1)
        curves.setdefault(env_id, {}).setdefault(task_id, []).append(pd.read_csv(path, encoding="utf-8"))
    return curves


@register_stage("finetune", requires=("source_policy",), produces=("finetune",))
def finetune_stage(ctx: RunContext, env_id: str, target: Optional[str] = None, **_: Any) -> Dict[str, Any]:
    """Fine-tune the source policy on each target task, the baseline MAGIK is compared against."""
    checkpoint = ctx.load(env_id, "source_policy")
    config = ctx.config.sac.for_env(env_id)
    summary = {}
    for task_id in resolve_targets(env_id, target):
        if task_id == SOURCE_TASKS[env_id]:
            logger.info(f"finetune: skipping {task_id}, the source task itself")
            continue
        tuned, curve = fine_tune(
            checkpoint, ctx.make_env(env_id, task_id), config,
            seed=ctx.seed_for(env_id, "finetune", task_id), show_progress=ctx.show_progress,
        )
        ctx.save(env_id, f"finetune_{task_id}", tuned)
        ctx.write_csv(curve, f"{env_id}{_FINETUNE_CURVE}{task_id}{_CURVE_SUFFIX}")
        summary[task_id] = tuned.meta["steps_to_threshold"]
    curves = _finetune_curves(ctx)
    if curves:
        ctx.write_figure(lambda path: plot_learning_curves(curves, path), FINETUNE_PNG)
    return summary


@register_stage("evaluate", requires=("source_policy", "vae"), after=("finetune", "labels"))
def evaluate_stage(
    ctx: RunContext, env_id: str, target: Optional[str] = None, jobs: Optional[int] = None, **_: Any
) -> Dict[str, Any]:
    """Zero-shot SAC, fine-tuned SAC (when present) and MAGIK on each target task."""
    cfg = ctx.config
    checkpoint = ctx.load(env_id, "source_policy")
    vae = ctx.load(env_id, "vae")
    episodes, seeds = cfg.eval.episodes_for(env_id), cfg.eval.seeds
    jobs = jobs or ctx.jobs
    deterministic = cfg.eval.deterministic

    reports, finetune_steps = [], {}
    for task_id in resolve_targets(env_id, target):
        env = ctx.make_env(env_id, task_id)
        reports.append(evaluate_agent(checkpoint.frozen_policy(), env, episodes, seeds, AGENT_SAC, jobs, deterministic))
        if ctx.exists(env_id, f"finetune_{task_id}"):
            tuned = ctx.load(env_id, f"finetune_{task_id}")
            reports.append(evaluate_agent(tuned.frozen_policy(), env, episodes, seeds, AGENT_FINETUNED, jobs, deterministic))
            finetune_steps[task_id] = tuned.meta.get("steps_to_threshold") or tuned.meta.get("steps")
        policy = TransferPolicy(vae, checkpoint.frozen_policy(), cfg.transfer.rules_for(env_id, task_id), cfg.transfer.confidence_floor)
        reports.append(evaluate_transfer(policy, env, episodes, seeds, jobs, deterministic))

    ctx.upsert_csv(reports_frame(reports), TABLE_FILES[env_id], keys=["agent", "task", "colour"])
    ctx.write_text(format_table(reports), f"{env_id}_results.txt")

    labels = ctx.load(env_id, "labels") if ctx.exists(env_id, "labels") else None
    comparison = compare_agents(
        reports,
        label_budget=len(labels) if labels is not None else None,
        finetune_steps=finetune_steps,
        n_collected=labels.n_collected if labels is not None else None,
    )
    budget = comparison.budget.assign(env=env_id)
    ctx.upsert_csv(budget[["env", *comparison.budget.columns]], BUDGET_CSV, keys=["env", "task"])
    logger.info(f"{env_id} comparison\n{comparison.to_text()}")
    return {f"{r.agent}/{r.task_id}": r.summary_text() for r in reports}


def _magik_rows(ctx: RunContext, env_id: str, vae: Any, checkpoint: Any, jobs: Optional[int]) -> List[Dict[str, Any]]:
    cfg = ctx.config
    rows = []
    for task_id in TARGET_TASKS[env_id]:
        policy = TransferPolicy(vae, checkpoint.frozen_policy(), cfg.transfer.rules_for(env_id, task_id), cfg.transfer.confidence_floor)
        report = evaluate_transfer(
            policy, ctx.make_env(env_id, task_id), cfg.eval.episodes_for(env_id), cfg.eval.seeds,
            jobs or ctx.jobs, cfg.eval.deterministic,
        )
        rows.extend(report.rows())
    return rows


@register_stage("sweep-diversity", requires=("source_policy",))
def sweep_diversity_stage(ctx: RunContext, env_id: str, jobs: Optional[int] = None, **_: Any) -> Dict[str, Any]:
    """Re-collect with shorter random-exploration prefixes, retrain the VAE and re-evaluate MAGIK."""
    sweep = ctx.config.sweep
    vae_config = ctx.config.vae.for_env(env_id)
    checkpoint = ctx.load(env_id, "source_policy")
    rows = []
    for prefix in sweep.diversity_prefixes:
        seed = ctx.seed_for(env_id, "sweep-diversity", prefix)
        dataset = collect(
            checkpoint.frozen_policy(seed), ctx.make_env(env_id), sweep.diversity_steps, seed,
            random_prefix=prefix, max_records=ctx.config.collect.for_env(env_id).max_records, show_progress=ctx.show_progress,
        )
        budget = LabelBudget(min(vae_config.label_budget, len(dataset)))
        samples = label_random_subset(dataset, budget, seed)
        vae = train_vae(dataset, samples, vae_config, seed=seed, net_settings=ctx.config.nets, show_progress=ctx.show_progress)
        rows.extend({"random_prefix": prefix, "label_budget": budget.max_labels, **row} for row in _magik_rows(ctx, env_id, vae, checkpoint, jobs))
    frame = pd.DataFrame(rows)
    ctx.write_csv(frame, DIVERSITY_CSV)
    return {"prefixes": list(sweep.diversity_prefixes), "rows": len(frame)}


@register_stage("sweep-labels", requires=("source_policy", "dataset"))
def sweep_labels_stage(ctx: RunContext, env_id: str, jobs: Optional[int] = None, **_: Any) -> Dict[str, Any]:
    """Retrain the VAE from the low label budget and re-evaluate MAGIK."""
    budget = LabelBudget(ctx.config.sweep.low_label_budget)
    dataset = ctx.load(env_id, "dataset")
    checkpoint = ctx.load(env_id, "source_policy")
    seed = ctx.seed_for(env_id, "sweep-labels", budget.max_labels)
    samples = label_random_subset(dataset, budget, seed)
    vae = train_vae(
        dataset, samples, ctx.config.vae.for_env(env_id), seed=seed, net_settings=ctx.config.nets, show_progress=ctx.show_progress
    )
    rows = [{"label_budget": budget.max_labels, **row} for row in _magik_rows(ctx, env_id, vae, checkpoint, jobs)]
    frame = pd.DataFrame(rows)
    ctx.write_csv(frame, LABEL_SWEEP_CSV)
    return {"label_budget": budget.max_labels, "rows": len(frame)}

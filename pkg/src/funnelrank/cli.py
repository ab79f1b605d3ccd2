"""Command-line workflow: generate | split | train | eval | compare |
experiment | params.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command
writes a manifest (resolved config + artifact paths) next to its outputs
before doing any work; re-running a command with ``--config <manifest>``
reproduces the artifact files byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import __version__
from .checkpoint import checkpoint_load, checkpoint_save
from .data import GeneratorConfig, generate as generate_groups, read_jsonl, write_jsonl
from .evaluation import (domestic_csv, evaluate_models, mean_ndcg_for_task,
                         ndcg_csv, ndcg_table)
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .featuresplit import FeatureSplit, split_features
from .manifest import RunManifest, load_config_file
from .models import ARCHITECTURES, MD_MODES, count_params, make_model, task_names_for
from .training import TrainConfig, split_groups, train

MODEL_CHOICES = click.Choice(ARCHITECTURES)
MD_CHOICES = click.Choice(MD_MODES)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return load_config_file(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}")


def _require_new(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise click.UsageError(f"{path} exists; pass --force to overwrite")


def _as_tuple(value):
    return tuple(value) if isinstance(value, list) else value


def _generator_config(cfg: dict) -> GeneratorConfig:
    fields = {f.name for f in dataclasses.fields(GeneratorConfig)}
    unknown = set(cfg) - fields
    if unknown:
        raise click.UsageError(f"unknown generator config keys: {sorted(unknown)}")
    kwargs = {k: _as_tuple(v) for k, v in cfg.items()}
    try:
        config = GeneratorConfig(**kwargs)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"invalid generator config: {exc}")
    return config


@click.group()
@click.version_option(__version__, prog_name="funnelrank")
def main():
    """Multi-task funnel ranking: data, training, evaluation, experiments."""


@main.command("generate")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True,
              help="Destination JSONL file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--config", "config_path", type=click.Path(exists=False), default=None)
@click.option("--force", is_flag=True, default=False)
def cmd_generate(out_path, seed, config_path, force):
    """Generate a seeded synthetic multi-region dataset."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    config = _generator_config(cfg)
    _require_new(out_path, force)
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest = RunManifest.start("generate", dataclasses.asdict(config), config.seed,
                                 {"dataset": str(out_path)}, manifest_path)
    groups = generate_groups(config)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(groups, out_path, config.layout)
    manifest.finish(manifest_path)
    click.echo(f"wrote {len(groups)} groups "
               f"({sum(len(g.records) for g in groups)} records) to {out_path}")


@main.command("split")
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--tau", "--threshold", "threshold", type=float, default=0.1,
              show_default=True)
@click.option("--metric", type=click.Choice(["ks", "wasserstein"]), default="ks",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True, default=False)
def cmd_split(data_path, threshold, metric, out_path, force):
    """Classify features into country / dependent / invariant groups."""
    _require_new(out_path, force)
    layout, groups = read_jsonl(data_path)
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    resolved = {"data": str(data_path), "threshold": threshold, "metric": metric}
    manifest = RunManifest.start("split", resolved, None,
                                 {"split": str(out_path)}, manifest_path)
    split = split_features(groups, layout.country_idx, threshold=threshold,
                           metric=metric, layout=layout)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    split.save(out_path)
    manifest.finish(manifest_path)
    click.echo(f"dependent features: {list(split.dependent_idx)} "
               f"(threshold {threshold}, metric {metric})")


def _resolve_split(split_path, groups, layout, threshold):
    if split_path is not None:
        return FeatureSplit.load(split_path)
    train_groups, _ = split_groups(groups)
    return split_features(train_groups, layout.country_idx, threshold=threshold,
                          layout=layout)


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--model", "architecture", type=MODEL_CHOICES, required=True)
@click.option("--md", "md_mode", type=MD_CHOICES, default="none", show_default=True)
@click.option("--tasks", type=int, default=2, show_default=True)
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Feature split JSON; computed from the data if omitted.")
@click.option("--tau", "threshold", type=float, default=0.1, show_default=True)
@click.option("--regularizer/--no-regularizer", default=True, show_default=True,
              help="Descending probability chain (seq only).")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=False), default=None,
              help="JSON with TrainConfig fields; flags override.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True, default=False)
def cmd_train(data_path, architecture, md_mode, tasks, split_path, threshold,
              regularizer, epochs, batch_size, learning_rate, seed, config_path,
              out_dir, force):
    """Train one model and save its checkpoint and training report."""
    cfg = _load_config(config_path)
    for key, value in (("epochs", epochs), ("batch_size", batch_size),
                       ("learning_rate", learning_rate), ("seed", seed)):
        if value is not None:
            cfg[key] = value
    try:
        tc = TrainConfig(**{k: _as_tuple(v) for k, v in cfg.items()
                            if k in {f.name for f in dataclasses.fields(TrainConfig)}})
        task_names_for(tasks)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc))

    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ckpt"
    report_path = out_dir / "train_report.json"
    _require_new(ckpt_path, force)

    layout, groups = read_jsonl(data_path)
    split = None
    if md_mode != "none":
        split = _resolve_split(split_path, groups, layout, threshold)

    resolved = {"data": str(data_path), "model": architecture, "md": md_mode,
                "tasks": tasks, "regularizer": regularizer,
                "split": str(split_path) if split_path else None,
                "threshold": threshold, "train": dataclasses.asdict(tc)}
    manifest_path = out_dir / "manifest.json"
    manifest = RunManifest.start("train", resolved, tc.seed,
                                 {"checkpoint": str(ckpt_path),
                                  "report": str(report_path)}, manifest_path)

    overrides = {"regularizer": regularizer} if architecture == "seq" else {}
    try:
        model = make_model(architecture, tasks=tasks, input_dim=layout.width,
                           seed=tc.seed, md_mode=md_mode, split=split, **overrides)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    report = train(model, groups, tc, layout)
    checkpoint_save(model, ckpt_path)
    report.checkpoint_path = str(ckpt_path)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.finish(manifest_path)
    click.echo(f"trained {architecture} (md={md_mode}, tasks={tasks}): "
               f"best val purchase NDCG {report.best_val_ndcg:.4f} "
               f"at epoch {report.best_epoch}")


def _load_models(checkpoints) -> dict:
    models = {}
    for path in checkpoints:
        model = checkpoint_load(path)
        name = model.family
        desc = model.descriptor()
        if desc.get("md") or desc.get("md_mode", "none") != "none":
            name += "+md"
        base = name
        k = 2
        while name in models:
            name = f"{base}#{k}"
            k += 1
        models[name] = model
    return models


@main.command("eval")
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True, path_type=Path),
              multiple=True, required=True)
@click.option("--depth", type=int, default=48, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True, default=False)
def cmd_eval(data_path, checkpoints, depth, out_dir, force):
    """Raw per-task NDCG of one or more checkpoints (no baseline needed)."""
    layout, groups = read_jsonl(data_path)
    _, val_groups = split_groups(groups)
    eval_groups = val_groups or groups
    models = _load_models(checkpoints)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "eval.csv"
    _require_new(out_path, force)
    manifest_path = out_dir / "manifest.json"
    resolved = {"data": str(data_path), "checkpoints": [str(c) for c in checkpoints],
                "depth": depth}
    manifest = RunManifest.start("eval", resolved, None, {"csv": str(out_path)},
                                 manifest_path)
    lines = ["model,task,mean_ndcg"]
    for name, model in models.items():
        probs = model.forward(layout.matrix(eval_groups)).prob_matrix()
        for t_i, task in enumerate(model.task_names):
            value = mean_ndcg_for_task(eval_groups, probs[:, t_i], task, depth)
            lines.append(f"{name},{task},{value:.6f}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.finish(manifest_path)
    click.echo("\n".join(lines))


@main.command("compare")
@click.option("--data", "data_path", type=click.Path(path_type=Path), default=None)
@click.option("--checkpoint", "checkpoints", type=click.Path(path_type=Path),
              multiple=True)
@click.option("--depth", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=False), default=None,
              help="JSON or a previous compare manifest.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True, default=False)
def cmd_compare(data_path, checkpoints, depth, config_path, out_dir, force):
    """Relative NDCG report of several checkpoints vs the shared-bottom arm."""
    cfg = _load_config(config_path)
    data_path = data_path or (Path(cfg["data"]) if cfg.get("data") else None)
    checkpoints = list(checkpoints) or [Path(p) for p in cfg.get("checkpoints", [])]
    depth = depth if depth is not None else int(cfg.get("depth", 48))
    if data_path is None or not checkpoints:
        raise click.UsageError("compare needs --data and at least one --checkpoint "
                               "(directly or via --config)")
    layout, groups = read_jsonl(data_path)
    _, val_groups = split_groups(groups)
    eval_groups = val_groups or groups
    models = _load_models(checkpoints)
    if "shared_bottom" not in models:
        raise click.UsageError("comparison requires a shared_bottom checkpoint "
                               "(the 0% reference)")
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {"ndcg_csv": str(out_dir / "ndcg.csv"),
                 "table": str(out_dir / "ndcg_table.txt"),
                 "domestic_csv": str(out_dir / "domestic_share.csv")}
    for p in artifacts.values():
        _require_new(Path(p), force)
    manifest_path = out_dir / "manifest.json"
    resolved = {"data": str(data_path), "checkpoints": [str(c) for c in checkpoints],
                "depth": depth}
    manifest = RunManifest.start("compare", resolved, None, artifacts, manifest_path)
    report, dom = evaluate_models(models, eval_groups, layout, depth=depth)
    Path(artifacts["ndcg_csv"]).write_text(ndcg_csv(report), encoding="utf-8")
    table = ndcg_table(report, models_order=list(models))
    Path(artifacts["table"]).write_text(table, encoding="utf-8")
    Path(artifacts["domestic_csv"]).write_text(domestic_csv(dom), encoding="utf-8")
    manifest.finish(manifest_path)
    click.echo(table)


@main.command("experiment")
@click.option("--name", type=click.Choice(EXPERIMENTS), required=True)
@click.option("--seeds", type=str, default=None,
              help="Comma-separated list, e.g. 0,1,2,3,4.")
@click.option("--config", "config_path", type=click.Path(exists=False), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True, default=False)
def cmd_experiment(name, seeds, config_path, out_dir, force):
    """Run one of the packaged experiments end to end."""
    cfg = _load_config(config_path)
    if seeds is not None:
        try:
            cfg["seeds"] = tuple(int(s) for s in seeds.split(",") if s.strip())
        except ValueError:
            raise click.UsageError(f"malformed --seeds {seeds!r}")
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(cfg) - fields
    if unknown:
        raise click.UsageError(f"unknown experiment config keys: {sorted(unknown)}")
    try:
        ecfg = ExperimentConfig(**{k: _as_tuple(v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    for suffix in (f"{name}.csv", f"{name}_summary.txt"):
        _require_new(out_dir / suffix, force)
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest = RunManifest.start("experiment", {"name": name,
                                                **dataclasses.asdict(ecfg)},
                                 None, {}, manifest_path)
    result = run_experiment(name, ecfg, work_dir=out_dir / "work")
    manifest.artifacts = result.write(out_dir)
    manifest.finish(manifest_path)
    click.echo(result.summary)


@main.command("params")
@click.option("--model", "architecture", type=click.Choice([*ARCHITECTURES, "all"]),
              required=True)
@click.option("--tasks", "tasks_spec", type=str, default="2,3", show_default=True)
@click.option("--input-dim", type=int, default=16, show_default=True,
              help="Assembled feature width (default matches the default generator).")
def cmd_params(architecture, tasks_spec, input_dim):
    """Exact parameter counts per task count, and the growth between them."""
    try:
        task_counts = [int(s) for s in tasks_spec.split(",") if s.strip()]
        if not task_counts:
            raise ValueError
        for k in task_counts:
            task_names_for(k)
    except ValueError:
        raise click.UsageError(f"malformed --tasks {tasks_spec!r}; expected e.g. '2,3'")
    archs = list(ARCHITECTURES) if architecture == "all" else [architecture]
    click.echo(f"{'model':<14} " + " ".join(f"{'k=' + str(k) + ' params':>14}"
                                            for k in task_counts)
               + ("  growth" if len(task_counts) > 1 else ""))
    for arch in archs:
        totals = []
        for k in task_counts:
            model = make_model(arch, tasks=k, input_dim=input_dim, seed=0)
            totals.append(count_params(model)["total"])
        row = f"{arch:<14} " + " ".join(f"{t:>14}" for t in totals)
        if len(totals) > 1:
            growth = (totals[-1] - totals[0]) / totals[0] * 100.0
            row += f"  {growth:+.2f}%"
        click.echo(row)


if __name__ == "__main__":
    sys.exit(main())

"""Experiment drivers: regularizer ablation, two-to-three-task transfer,
single-region vs all-region training, and the plug-and-play adaptor matrix.

Every experiment runs its arms over a shared list of seeds (arms are paired
per seed: same data, same init stream role), aggregates mean and stdev of
the NDCG deltas against the shared-bottom reference arm, and emits one CSV
row per arm x seed x metric plus an aligned summary table.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import checkpoint_load, checkpoint_save
from .data import GeneratorConfig, generate
from .evaluation import evaluate_models
from .featuresplit import split_features
from .models import make_model, task_names_for
from .training import TrainConfig, split_groups, train

EXPERIMENTS = ("regularizer_ablation", "transfer_2to3", "single_vs_all_region",
               "md_plugplay")


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_queries: int = 1500
    candidates_per_query: int = 8
    regions: int = 4
    region_weights: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    domestic_preference: tuple[float, ...] = (1.5, -1.0, 0.8, -0.5)
    shift_strength: float = 2.0
    region_mask_spread: float = 1.25
    base_rates: tuple[float, float, float] = (0.35, 0.40, 0.45)
    epochs: int = 8
    batch_size: int = 256
    learning_rate: float = 1e-2
    hidden: int = 32
    tasks: int = 2
    depth: int = 48
    threshold: float = 0.1

    def generator(self, seed: int) -> GeneratorConfig:
        return GeneratorConfig(
            seed=seed, regions=self.regions, region_weights=self.region_weights,
            n_queries=self.n_queries, candidates_per_query=self.candidates_per_query,
            shift_strength=self.shift_strength, base_rates=self.base_rates,
            region_mask_spread=self.region_mask_spread,
            domestic_preference=self.domestic_preference)

    def trainer(self, seed: int, **overrides) -> TrainConfig:
        base = dict(seed=seed, epochs=self.epochs, batch_size=self.batch_size,
                    learning_rate=self.learning_rate, ndcg_depth=self.depth)
        base.update(overrides)
        return TrainConfig(**base)


@dataclass
class ExperimentResult:
    name: str
    rows: list[dict]                       # one per arm x seed x metric
    summary: str
    artifacts: dict = field(default_factory=dict)

    def csv(self) -> str:
        header = ["experiment", "arm", "seed", "task", "platform", "region",
                  "mean_ndcg", "delta_pct"]
        lines = [",".join(header)]
        for r in self.rows:
            lines.append(",".join([
                r["experiment"], r["arm"], str(r["seed"]), r["task"],
                r["platform"], r["region"],
                f"{r['mean_ndcg']:.6f}", f"{r['delta_pct']:+.3f}"]))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{self.name}.csv"
        txt_path = out_dir / f"{self.name}_summary.txt"
        csv_path.write_text(self.csv(), encoding="utf-8")
        txt_path.write_text(self.summary, encoding="utf-8")
        self.artifacts.update({"csv": str(csv_path), "summary": str(txt_path)})
        return self.artifacts


def _fit_arm(arch: str, cfg: ExperimentConfig, seed: int, layout, groups, *,
             md_mode="none", split=None, tasks=None, regularizer=True,
             region_filter=None, model=None, epochs=None):
    overrides = {"hidden": cfg.hidden, "regularizer": regularizer} if arch == "seq" else {}
    if model is None:
        model = make_model(arch, tasks=tasks or cfg.tasks, input_dim=layout.width,
                           seed=seed, md_mode=md_mode, split=split, **overrides)
    tc = cfg.trainer(seed, region_filter=region_filter,
                     **({"epochs": epochs} if epochs else {}))
    train(model, groups, tc, layout)
    return model


def _delta_rows(name: str, seed: int, models: dict, eval_groups, layout,
                cfg: ExperimentConfig, baseline="shared_bottom",
                scopes=("all", "web", "app")) -> list[dict]:
    report, _ = evaluate_models(models, eval_groups, layout, depth=cfg.depth,
                                baseline=baseline)
    rows = []
    tasks = list(dict.fromkeys(r.task for r in report.rows))
    for arm in models:
        for task in tasks:
            for platform in scopes:
                try:
                    cell = report.cell(arm, task, platform, "all")
                except KeyError:
                    continue
                rows.append({"experiment": name, "arm": arm, "seed": seed,
                             "task": task, "platform": platform, "region": "all",
                             "mean_ndcg": cell.mean_ndcg,
                             "delta_pct": cell.delta_pct})
    return rows


def _summarize(name: str, rows: list[dict], key=("arm", "task", "platform"),
               skip_arm=None) -> str:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if skip_arm and r["arm"] == skip_arm:
            continue
        k = tuple(r[f] for f in key)
        groups.setdefault(k, []).append(r["delta_pct"])
    scope_label = key[2]
    lines = [f"experiment: {name}",
             f"{'arm':<28} {'task':<10} {scope_label:<8} {'mean delta %':>14} {'stdev':>10} {'seeds':>6}"]
    for k in sorted(groups):
        vals = groups[k]
        mean = statistics.fmean(vals)
        sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
        lines.append(f"{k[0]:<28} {k[1]:<10} {k[2]:<8} {mean:>+14.3f} {sd:>10.3f} {len(vals):>6}")
    lines.append("")
    lines.append("deltas are percent NDCG change vs the shared-bottom reference arm")
    return "\n".join(lines) + "\n"


def run_regularizer_ablation(cfg: ExperimentConfig) -> ExperimentResult:
    """The task-sequence model with and without the descending regularizer."""
    rows = []
    for seed in cfg.seeds:
        gen = cfg.generator(seed)
        groups = generate(gen)
        layout = gen.layout
        _, val_groups = split_groups(groups)
        models = {
            "shared_bottom": _fit_arm("shared_bottom", cfg, seed, layout, groups),
            "seq_regularized": _fit_arm("seq", cfg, seed, layout, groups, regularizer=True),
            "seq_no_regularizer": _fit_arm("seq", cfg, seed, layout, groups, regularizer=False),
        }
        rows += _delta_rows("regularizer_ablation", seed, models, val_groups, layout, cfg)
    summary = _summarize("regularizer_ablation", rows, skip_arm="shared_bottom")
    return ExperimentResult("regularizer_ablation", rows, summary)


def run_md_plugplay(cfg: ExperimentConfig) -> ExperimentResult:
    """Every baseline with and without the input-level region adaptor."""
    rows = []
    for seed in cfg.seeds:
        gen = cfg.generator(seed)
        groups = generate(gen)
        layout = gen.layout
        train_groups, val_groups = split_groups(groups)
        split = split_features(train_groups, layout.country_idx,
                               threshold=cfg.threshold, layout=layout)
        models = {}
        for arch in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"):
            models[arch] = _fit_arm(arch, cfg, seed, layout, groups)
            models[f"{arch}+md"] = _fit_arm(arch, cfg, seed, layout, groups,
                                            md_mode="input_plug", split=split)
        rows += _delta_rows("md_plugplay", seed, models, val_groups, layout, cfg)
    summary = _summarize("md_plugplay", rows, skip_arm=None)
    return ExperimentResult("md_plugplay", rows, summary)


def run_transfer_2to3(cfg: ExperimentConfig, work_dir=None) -> ExperimentResult:
    """Grow a trained 2-task sequence model into the 3-task setting."""
    rows = []
    work_dir = Path(work_dir) if work_dir else None
    for seed in cfg.seeds:
        gen = cfg.generator(seed)
        groups = generate(gen)
        layout = gen.layout
        train_groups, val_groups = split_groups(groups)
        split = split_features(train_groups, layout.country_idx,
                               threshold=cfg.threshold, layout=layout)

        sb3 = _fit_arm("shared_bottom", cfg, seed, layout, groups, tasks=3)
        seqmd3 = _fit_arm("seq", cfg, seed, layout, groups, tasks=3,
                          md_mode="in_sequence", split=split)
        seqmd2 = _fit_arm("seq", cfg, seed, layout, groups, tasks=2,
                          md_mode="in_sequence", split=split)

        target_desc = seqmd2.descriptor()
        target_desc["tasks"] = list(task_names_for(3))
        if work_dir:
            work_dir.mkdir(parents=True, exist_ok=True)
            ckpt = work_dir / f"transfer_seed{seed}_2task.ckpt"
            checkpoint_save(seqmd2, ckpt)
            grown = checkpoint_load(ckpt, target_desc)
        else:
            import os
            import tempfile
            with tempfile.NamedTemporaryFile(suffix=".ckpt", delete=False) as fh:
                tmp = fh.name
            try:
                checkpoint_save(seqmd2, tmp)
                grown = checkpoint_load(tmp, target_desc)
            finally:
                os.unlink(tmp)

        zero_shot = grown
        finetuned = checkpoint_load_copy(zero_shot)
        _fit_arm("seq", cfg, seed, layout, groups, tasks=3, model=finetuned,
                 epochs=max(1, cfg.epochs // 2))

        models = {"shared_bottom": sb3, "seq_md_3task": seqmd3,
                  "transfer_zero_shot": zero_shot, "transfer_finetuned": finetuned}
        rows += _delta_rows("transfer_2to3", seed, models, val_groups, layout, cfg)
    summary = _summarize("transfer_2to3", rows, skip_arm="shared_bottom")
    return ExperimentResult("transfer_2to3", rows, summary)


def checkpoint_load_copy(model):
    """Fresh model with the same descriptor and copied parameter values."""
    from .models import build_from_descriptor
    clone = build_from_descriptor(model.descriptor())
    src = model.params()
    for name, p in clone.params().items():
        p.data[...] = src[name].data
    return clone


def run_single_vs_all_region(cfg: ExperimentConfig) -> ExperimentResult:
    """Shared-bottom per single region vs the sequence+adaptor model on all
    regions, evaluated region by region."""
    rows = []
    for seed in cfg.seeds:
        gen = cfg.generator(seed)
        groups = generate(gen)
        layout = gen.layout
        train_groups, val_groups = split_groups(groups)
        split = split_features(train_groups, layout.country_idx,
                               threshold=cfg.threshold, layout=layout)
        all_region_model = _fit_arm("seq", cfg, seed, layout, groups,
                                    md_mode="in_sequence", split=split)
        for region in range(cfg.regions):
            region_val = [g for g in val_groups if g.region == region]
            if len(region_val) < 2:
                continue
            sb_single = _fit_arm("shared_bottom", cfg, seed, layout, groups,
                                 region_filter=region)
            models = {"shared_bottom": sb_single, "seq_md_all_region": all_region_model}
            for r in _delta_rows("single_vs_all_region", seed, models, region_val,
                                 layout, cfg, scopes=("all",)):
                r["region"] = str(region)
                rows.append(r)
    summary = _summarize("single_vs_all_region", rows,
                         key=("arm", "task", "region"), skip_arm="shared_bottom")
    return ExperimentResult("single_vs_all_region", rows, summary)


def run_experiment(name: str, cfg: ExperimentConfig, work_dir=None) -> ExperimentResult:
    if name == "regularizer_ablation":
        return run_regularizer_ablation(cfg)
    if name == "md_plugplay":
        return run_md_plugplay(cfg)
    if name == "transfer_2to3":
        return run_transfer_2to3(cfg, work_dir)
    if name == "single_vs_all_region":
        return run_single_vs_all_region(cfg)
    raise ValueError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}")

"""Per-task NDCG with platform/region breakdown, a brute-force oracle, and
the domestic-listing-share diagnostic.

Rankings sort by score descending with a stable tie-break on the original
candidate order. Gains are the task's binary label by default (a graded
0/1/3/7 ladder over the funnel depth is available behind ``gain_mode``).
Groups whose ideal DCG is zero carry no ranking information for that task
and are excluded from means; the exclusion count is reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Mapping, Sequence

import numpy as np

from .data import QueryGroup, FeatureLayout

GAIN_MODES = ("binary", "graded")


def _gains(group: QueryGroup, task: str, gain_mode: str) -> np.ndarray:
    if gain_mode == "binary":
        return group.labels(task).astype(np.float64)
    if gain_mode == "graded":
        depth_level = (group.labels("click") + group.labels("cart")
                       + group.labels("purchase"))
        return (2.0 ** depth_level) - 1.0
    raise ValueError(f"unknown gain mode {gain_mode!r}")


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending; ties keep original order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _dcg(gains_in_rank_order: np.ndarray, depth: int) -> float:
    top = gains_in_rank_order[:depth]
    discounts = 1.0 / np.log2(np.arange(2, len(top) + 2))
    return float(np.dot(top, discounts))


def ndcg_for_task(group: QueryGroup, scores: Sequence[float], task: str,
                  depth: int = 48, gain_mode: str = "binary") -> float | None:
    """NDCG of the score-induced ranking; None when the group has no signal."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(group.records),):
        raise ValueError(f"need one score per candidate: {scores.shape} "
                         f"vs {len(group.records)} records")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    gains = _gains(group, task, gain_mode)
    ideal = _dcg(np.sort(gains)[::-1], depth)
    if ideal == 0.0:
        return None
    return _dcg(gains[rank_order(scores)], depth) / ideal


def ndcg_oracle(group: QueryGroup, scores: Sequence[float], task: str,
                depth: int = 48, gain_mode: str = "binary") -> float | None:
    """Same contract, but the ideal DCG is maximised over all permutations."""
    if len(group.records) > 8:
        raise ValueError("exhaustive oracle limited to groups of size <= 8")
    gains = _gains(group, task, gain_mode)
    ideal = max(_dcg(np.array(perm), depth) for perm in permutations(gains))
    if ideal == 0.0:
        return None
    scores = np.asarray(scores, dtype=np.float64)
    return _dcg(gains[rank_order(scores)], depth) / ideal


def mean_ndcg_for_task(groups: Sequence[QueryGroup], flat_scores: np.ndarray,
                       task: str, depth: int = 48,
                       gain_mode: str = "binary") -> float:
    values, _ = _group_ndcgs(groups, flat_scores, task, depth, gain_mode)
    return float(np.mean(values)) if values else float("nan")


def _group_ndcgs(groups, flat_scores, task, depth, gain_mode):
    flat_scores = np.asarray(flat_scores, dtype=np.float64)
    if flat_scores.shape[0] != sum(len(g.records) for g in groups):
        raise ValueError("flat score vector does not align with the groups")
    values, excluded = [], 0
    pos = 0
    for g in groups:
        n = len(g.records)
        v = ndcg_for_task(g, flat_scores[pos:pos + n], task, depth, gain_mode)
        pos += n
        if v is None:
            excluded += 1
        else:
            values.append(v)
    return values, excluded


@dataclass(frozen=True)
class NdcgCell:
    model: str
    task: str
    platform: str
    region: str
    mean_ndcg: float
    delta_pct: float
    n_groups: int
    n_excluded: int


@dataclass
class NdcgReport:
    rows: list[NdcgCell]
    depth: int
    gain_mode: str
    baseline: str
    notes: list[str] = field(default_factory=list)

    def cell(self, model: str, task: str, platform: str = "all",
             region: str = "all") -> NdcgCell:
        for row in self.rows:
            if (row.model, row.task, row.platform, row.region) == (model, task, platform, region):
                return row
        raise KeyError((model, task, platform, region))


@dataclass(frozen=True)
class DomesticRow:
    model: str
    region: str
    share: float
    delta_points: float
    n_groups: int


@dataclass
class DomesticShareReport:
    rows: list[DomesticRow]
    top_n: int
    baseline: str
    notes: list[str] = field(default_factory=list)


def _scopes(groups: Sequence[QueryGroup]) -> list[tuple[str, str]]:
    scopes = [("all", "all")]
    for platform in ("web", "app"):
        if any(g.platform == platform for g in groups):
            scopes.append((platform, "all"))
    for region in sorted({g.region for g in groups}):
        scopes.append(("all", str(region)))
    return scopes


def _in_scope(g: QueryGroup, platform: str, region: str) -> bool:
    if platform != "all" and g.platform != platform:
        return False
    if region != "all" and g.region != int(region):
        return False
    return True


def domestic_share(group: QueryGroup, purchase_scores: np.ndarray, top_n: int) -> float:
    order = rank_order(purchase_scores)[:top_n]
    hits = sum(1 for i in order if group.records[i].listing_region == group.region)
    return hits / len(order)


def evaluate_models(models: Mapping[str, object], groups: Sequence[QueryGroup],
                    layout: FeatureLayout, depth: int = 48,
                    gain_mode: str = "binary", top_n: int = 10,
                    baseline: str = "shared_bottom") -> tuple[NdcgReport, DomesticShareReport]:
    """Score every model on every group; report vs the shared-bottom arm."""
    if baseline not in models:
        raise ValueError(f"baseline model {baseline!r} missing from the comparison; "
                         f"got {sorted(models)}")
    if gain_mode not in GAIN_MODES:
        raise ValueError(f"unknown gain mode {gain_mode!r}")
    groups = list(groups)
    if not groups:
        raise ValueError("no groups to evaluate")
    tasks = None
    for name, model in models.items():
        if tasks is None:
            tasks = tuple(model.task_names)
        elif tuple(model.task_names) != tasks:
            raise ValueError(f"model {name!r} predicts {model.task_names}, "
                             f"others predict {tasks}")

    X = layout.matrix(groups)
    sizes = [len(g.records) for g in groups]
    bounds = np.cumsum([0] + sizes)

    # per model: task -> list of per-group ndcg (or None), plus domestic shares
    per_model_ndcg: dict[str, dict[str, list[float | None]]] = {}
    per_model_share: dict[str, list[float]] = {}
    for name, model in models.items():
        probs = model.forward(X).prob_matrix()
        ndcgs: dict[str, list[float | None]] = {t: [] for t in tasks}
        shares: list[float] = []
        purchase_col = tasks.index("purchase")
        for gi, g in enumerate(groups):
            sl = slice(bounds[gi], bounds[gi + 1])
            for t in tasks:
                ndcgs[t].append(ndcg_for_task(g, probs[sl, tasks.index(t)], t,
                                              depth, gain_mode))
            shares.append(domestic_share(g, probs[sl, purchase_col], top_n))
        per_model_ndcg[name] = ndcgs
        per_model_share[name] = shares

    scopes = _scopes(groups)
    masks = {scope: np.array([_in_scope(g, *scope) for g in groups]) for scope in scopes}

    def scoped_mean(values: list[float | None], mask: np.ndarray) -> tuple[float, int, int]:
        kept = [v for v, m in zip(values, mask) if m and v is not None]
        excluded = sum(1 for v, m in zip(values, mask) if m and v is None)
        mean = float(np.mean(kept)) if kept else float("nan")
        return mean, len(kept), excluded

    rows: list[NdcgCell] = []
    base_means: dict[tuple, float] = {}
    for t in tasks:
        for scope in scopes:
            mean, _, _ = scoped_mean(per_model_ndcg[baseline][t], masks[scope])
            base_means[(t, scope)] = mean
    for name in models:
        for t in tasks:
            for scope in scopes:
                mean, n_kept, n_exc = scoped_mean(per_model_ndcg[name][t], masks[scope])
                base = base_means[(t, scope)]
                delta = (mean - base) / base * 100.0 if base and np.isfinite(base) else float("nan")
                rows.append(NdcgCell(model=name, task=t, platform=scope[0],
                                     region=scope[1], mean_ndcg=mean,
                                     delta_pct=delta, n_groups=n_kept,
                                     n_excluded=n_exc))

    dom_rows: list[DomesticRow] = []
    region_masks = {r: np.array([g.region == r for g in groups])
                    for r in sorted({g.region for g in groups})}
    base_share = {r: float(np.mean([s for s, m in zip(per_model_share[baseline], mask) if m]))
                  for r, mask in region_masks.items()}
    for name in models:
        for r, mask in region_masks.items():
            vals = [s for s, m in zip(per_model_share[name], mask) if m]
            share = float(np.mean(vals)) if vals else float("nan")
            dom_rows.append(DomesticRow(model=name, region=str(r), share=share,
                                        delta_points=share - base_share[r],
                                        n_groups=len(vals)))

    notes = [
        f"gains: {gain_mode} per-task labels; truncation depth {depth} "
        f"(both are configuration choices, no canonical values exist)",
        "groups with zero ideal DCG are excluded from means; see n_excluded",
    ]
    ndcg_report = NdcgReport(rows=rows, depth=depth, gain_mode=gain_mode,
                             baseline=baseline, notes=notes)
    dom_report = DomesticShareReport(rows=dom_rows, top_n=top_n, baseline=baseline,
                                     notes=[f"share of top-{top_n} by purchase score "
                                            f"with listing region == buyer region"])
    return ndcg_report, dom_report


def ndcg_csv(report: NdcgReport) -> str:
    lines = ["model,task,platform,region,mean_ndcg,delta_pct,groups,excluded"]
    for r in report.rows:
        lines.append(f"{r.model},{r.task},{r.platform},{r.region},"
                     f"{r.mean_ndcg:.6f},{r.delta_pct:+.3f},{r.n_groups},{r.n_excluded}")
    return "\n".join(lines) + "\n"


def domestic_csv(report: DomesticShareReport) -> str:
    lines = ["model,region,share,delta_points,groups"]
    for r in report.rows:
        lines.append(f"{r.model},{r.region},{r.share:.6f},{r.delta_points:+.6f},{r.n_groups}")
    return "\n".join(lines) + "\n"


def ndcg_table(report: NdcgReport, models_order: Sequence[str] | None = None) -> str:
    """Aligned text table: rows are models, columns are task x platform."""
    tasks = list(dict.fromkeys(r.task for r in report.rows))
    platforms = [p for p in ("web", "app") if any(r.platform == p for r in report.rows)]
    if not platforms:
        platforms = ["all"]
    models = list(models_order or dict.fromkeys(r.model for r in report.rows))
    headers = ["model"] + [f"{t}/{p}" for t in tasks for p in platforms]
    lines = []
    for m in models:
        cells = [m]
        for t in tasks:
            for p in platforms:
                cells.append(f"{report.cell(m, t, p, 'all').delta_pct:+.3f}%")
        lines.append(cells)
    widths = [max(len(h), *(len(row[i]) for row in lines)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*row) for row in lines]
    out.append("")
    out.append(f"deltas relative to {report.baseline!r} (its row is the 0% reference)")
    for note in report.notes:
        out.append(f"note: {note}")
    return "\n".join(out) + "\n"

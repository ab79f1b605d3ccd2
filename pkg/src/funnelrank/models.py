"""Ranking architectures: the recurrent task-sequence model, four multi-task
baselines, and the region-mask adaptor in both placements.

All models share one calling convention: ``forward`` takes the assembled
feature matrix (numpy, one row per record) and returns per-task logits and
probabilities as graph tensors. Models that consume region information
slice the matrix themselves through their stored feature split, so wrapping
a baseline with the adaptor never changes its signature.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .featuresplit import FeatureSplit
from .layers import GruCell, MlpBlock
from .tensor import (Tensor, ShapeError, add, concat, mul, narrow_cols,
                     sigmoid, softmax_rows)

ARCHITECTURES = ("shared_bottom", "mlmmoe", "ple", "adatt_sp", "seq")
MD_MODES = ("none", "input_plug", "in_sequence")

_TASK_SETS = {2: ("click", "purchase"), 3: ("click", "cart", "purchase")}


def task_names_for(k: int) -> tuple[str, ...]:
    try:
        return _TASK_SETS[int(k)]
    except (KeyError, ValueError):
        raise ValueError(f"task count must be 2 or 3, got {k!r}") from None


@dataclass(frozen=True)
class TaskScores:
    """Per-record task outputs: pre-activation logits and probabilities."""

    logits: np.ndarray
    probs: np.ndarray


@dataclass
class ModelOutput:
    """Batch forward result: one (n, 1) logit / prob tensor per task."""

    logits: list[Tensor]
    probs: list[Tensor]
    aux: dict = field(default_factory=dict)

    def logit_matrix(self) -> np.ndarray:
        return np.concatenate([t.data for t in self.logits], axis=1)

    def prob_matrix(self) -> np.ndarray:
        return np.concatenate([t.data for t in self.probs], axis=1)

    def task_scores(self) -> list[TaskScores]:
        lm, pm = self.logit_matrix(), self.prob_matrix()
        return [TaskScores(logits=lm[i], probs=pm[i]) for i in range(lm.shape[0])]


def _chain_probs(logits: list[Tensor], regularized: bool) -> list[Tensor]:
    """Sigmoid per task, cumulatively multiplied when the regularizer is on."""
    if not regularized:
        return [sigmoid(l) for l in logits]
    probs: list[Tensor] = []
    running = None
    for l in logits:
        s = sigmoid(l)
        running = s if running is None else mul(running, s)
        probs.append(running)
    return probs


class RegionMaskAdaptor:
    """Turn region-dependent features into region-invariant ones.

    The country block feeds a mask MLP whose output has exactly the
    dependent-feature dimension; the mask multiplies the dependent features
    elementwise and the product is projected by a shared transform MLP.
    ``per_task`` selects one mask MLP per task (in-sequence placement) or a
    single shared mask (input-level placement).
    """

    def __init__(self, split: FeatureSplit, *, per_task: tuple[str, ...] | None,
                 transform_dim: int | None = None, root_seed: int = 0):
        n_country = len(split.country_idx)
        n_dep = len(split.dependent_idx)
        if n_dep == 0:
            raise ValueError("region adaptor needs at least one dependent feature")
        self.split = split
        self.per_task = per_task
        self.out_dim = int(transform_dim) if transform_dim else n_dep
        keys = per_task if per_task is not None else ("shared",)
        self.mask_mlps = OrderedDict(
            (key, MlpBlock([n_country, n_dep], "identity",
                           name=f"md_mask.{key}", root_seed=root_seed))
            for key in keys)
        self.transform = MlpBlock([n_dep, self.out_dim], "identity",
                                  name="md_transform", root_seed=root_seed)
        # Neutral start: masks begin at all-ones (no regional modulation) and
        # a square transform begins anchored at identity, so regional
        # deviations are learned rather than injected as init noise.
        for mlp in self.mask_mlps.values():
            mlp.biases[-1].data[...] = 1.0
        if self.out_dim == n_dep:
            self.transform.weights[0].data += np.eye(n_dep)

    def transform_features(self, country: Tensor, dependent: Tensor,
                           task: str | None = None) -> Tensor:
        if self.per_task is None:
            if task is not None:
                raise ValueError("single-mask adaptor takes no task; built for input-level use")
            mask_mlp = self.mask_mlps["shared"]
        else:
            if task is None:
                raise ValueError("per-task adaptor requires a task name")
            mask_mlp = self.mask_mlps[task]
        mask = mask_mlp(country)
        return self.transform(mul(mask, dependent))

    def params(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for mlp in self.mask_mlps.values():
            out.update(mlp.params())
        out.update(self.transform.params())
        return out


def md_transform(adaptor: RegionMaskAdaptor, country: Tensor, dependent: Tensor,
                 task: str | None = None) -> Tensor:
    return adaptor.transform_features(country, dependent, task)


@dataclass(frozen=True)
class SeqConfig:
    tasks: tuple[str, ...]
    input_dim: int
    hidden: int = 32
    stage1_layers: int = 1
    stage2_layers: int = 1
    regularizer: bool = True
    md_mode: str = "none"
    transform_dim: int | None = None
    token_hidden: tuple[int, ...] = ()

    def validate(self) -> None:
        if len(self.tasks) < 2:
            raise ValueError("need at least 2 tasks")
        if self.input_dim < 1 or self.hidden < 1:
            raise ValueError("dims must be positive")
        if self.stage1_layers < 1:
            raise ValueError("need at least one first-stage recurrent layer")
        if self.md_mode not in MD_MODES:
            raise ValueError(f"unknown md_mode {self.md_mode!r}")
        if self.md_mode == "in_sequence" and self.stage2_layers < 1:
            raise ValueError("in_sequence placement needs a second recurrent stage "
                             "to consume the concatenated features")


class SeqModel:
    """Tasks as a k-token sequence over a shared recurrent core.

    Token 0 is the input itself; token t >= 1 is a per-task MLP transform of
    the input. A stack of GRU layers scans the tokens left to right, an
    optional per-task region adaptor concatenates transformed dependent
    features between the two stages, and one shared linear head maps each
    token's hidden state to that task's logit. With the descending
    regularizer on, task m's probability is the product of the sigmoids of
    logits 1..m, which makes the probability chain non-increasing.
    """

    family = "seq"

    def __init__(self, config: SeqConfig, split: FeatureSplit | None = None,
                 root_seed: int = 0):
        config.validate()
        if config.md_mode != "none" and split is None:
            raise ValueError(f"md_mode={config.md_mode!r} requires a feature split")
        self.config = config
        self.split = split
        self.root_seed = root_seed
        self.task_names = config.tasks
        self.regularized = config.regularizer
        self.input_dim = config.input_dim

        self.adaptor = None
        token_dim = config.input_dim
        if config.md_mode == "input_plug":
            self.adaptor = RegionMaskAdaptor(split, per_task=None,
                                             transform_dim=config.transform_dim,
                                             root_seed=root_seed)
            token_dim = len(split.invariant_idx) + self.adaptor.out_dim
        elif config.md_mode == "in_sequence":
            # The token path carries only the invariant block; dependent and
            # country features enter through the per-task masked transform
            # concatenated between the two stages.
            self.adaptor = RegionMaskAdaptor(split, per_task=config.tasks,
                                             transform_dim=config.transform_dim,
                                             root_seed=root_seed)
            token_dim = len(split.invariant_idx)

        token_widths = (token_dim, *config.token_hidden, token_dim)
        self.token_mlps = OrderedDict(
            (task, MlpBlock(token_widths, "relu", name=f"token_mlp.{task}",
                            root_seed=root_seed))
            for task in config.tasks[1:])

        self.stage1 = []
        d_in = token_dim
        for i in range(config.stage1_layers):
            self.stage1.append(GruCell(d_in, config.hidden,
                                       name=f"stage1.{i}", root_seed=root_seed))
            d_in = config.hidden

        self.stage2 = []
        d_in = config.hidden
        if config.md_mode == "in_sequence":
            d_in += self.adaptor.out_dim
        for i in range(config.stage2_layers):
            self.stage2.append(GruCell(d_in, config.hidden,
                                       name=f"stage2.{i}", root_seed=root_seed))
            d_in = config.hidden

        self.head = MlpBlock([config.hidden, 1], "identity",
                             name="head", root_seed=root_seed)

    def _scan(self, cells, seq: list[Tensor]) -> list[Tensor]:
        for cell in cells:
            h = Tensor(np.zeros((seq[0].shape[0], cell.d_h)))
            out = []
            for x_t in seq:
                h = cell.step(x_t, h)
                out.append(h)
            seq = out
        return seq

    def forward(self, X: np.ndarray) -> ModelOutput:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (batch, {self.input_dim}), got {X.shape}")
        country = dependent = None
        if self.config.md_mode != "none":
            c, d, i = self.split.views(X)
            country, dependent = Tensor(c), Tensor(d)
            if self.config.md_mode == "input_plug":
                transformed = self.adaptor.transform_features(country, dependent)
                x0 = concat([Tensor(i), transformed])
            else:
                x0 = Tensor(i)
        else:
            x0 = Tensor(X)

        tokens = [x0] + [self.token_mlps[t](x0) for t in self.task_names[1:]]
        seq = self._scan(self.stage1, tokens)
        if self.config.md_mode == "in_sequence":
            seq = [concat([h, self.adaptor.transform_features(country, dependent, task)])
                   for task, h in zip(self.task_names, seq)]
        seq = self._scan(self.stage2, seq)
        logits = [self.head(h) for h in seq]
        return ModelOutput(logits=logits, probs=_chain_probs(logits, self.regularized))

    def tokenize(self, X: np.ndarray) -> list[Tensor]:
        """The token sequence fed to the first recurrent stage."""
        X = np.asarray(X, dtype=np.float64)
        if self.config.md_mode == "input_plug":
            c, d, i = self.split.views(X)
            transformed = self.adaptor.transform_features(Tensor(c), Tensor(d))
            x0 = concat([Tensor(i), transformed])
        elif self.config.md_mode == "in_sequence":
            _, _, i = self.split.views(X)
            x0 = Tensor(i)
        else:
            x0 = Tensor(X)
        return [x0] + [self.token_mlps[t](x0) for t in self.task_names[1:]]

    def params(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for mlp in self.token_mlps.values():
            out.update(mlp.params())
        for cell in self.stage1 + self.stage2:
            out.update(cell.params())
        out.update(self.head.params())
        if self.adaptor is not None:
            out.update(self.adaptor.params())
        return out

    def descriptor(self) -> dict:
        cfg = self.config
        return {
            "family": "seq", "tasks": list(cfg.tasks), "input_dim": cfg.input_dim,
            "hidden": cfg.hidden, "stage1_layers": cfg.stage1_layers,
            "stage2_layers": cfg.stage2_layers, "regularizer": cfg.regularizer,
            "md_mode": cfg.md_mode, "transform_dim": cfg.transform_dim,
            "token_hidden": list(cfg.token_hidden), "root_seed": self.root_seed,
            "split": self.split.to_json() if self.split is not None else None,
        }


def seq_tokenize(model: SeqModel, X: np.ndarray) -> list[Tensor]:
    return model.tokenize(X)


def seq_forward(model: SeqModel, X: np.ndarray) -> ModelOutput:
    return model.forward(X)


class _Gate:
    """Linear layer + row softmax producing mixture weights that sum to 1."""

    def __init__(self, d_in: int, n_out: int, *, name: str, root_seed: int):
        self.mlp = MlpBlock([d_in, n_out], "identity", name=name, root_seed=root_seed)
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        return softmax_rows(self.mlp(x))

    def params(self):
        return self.mlp.params()


def _mix(outs: Sequence[Tensor], gate_weights: Tensor) -> Tensor:
    mixed = None
    for j, out in enumerate(outs):
        term = mul(narrow_cols(gate_weights, j, j + 1), out)
        mixed = term if mixed is None else add(mixed, term)
    return mixed


@dataclass(frozen=True)
class BaselineConfig:
    architecture: str
    tasks: tuple[str, ...]
    input_dim: int
    expert_widths: tuple[int, ...] = (64, 32)
    tower_widths: tuple[int, ...] = (32, 16, 1)
    levels: int = 1
    experts_per_level: int = 1
    shared_experts: int = 1

    def validate(self) -> None:
        if self.architecture not in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"):
            raise ValueError(f"unknown baseline architecture {self.architecture!r}")
        if len(self.tasks) < 2:
            raise ValueError("need at least 2 tasks")
        if self.levels < 1 or self.experts_per_level < 1 or self.shared_experts < 1:
            raise ValueError("expert/gate counts must be >= 1")
        if self.tower_widths[-1] != 1:
            raise ValueError("towers must end in a single logit")


class _BaselineBase:
    """Shared plumbing: numpy entry point, prob chain, parameter listing."""

    regularized = False

    def __init__(self, config: BaselineConfig, root_seed: int):
        config.validate()
        self.config = config
        self.root_seed = root_seed
        self.task_names = config.tasks
        self.input_dim = config.input_dim
        self.family = config.architecture

    def forward(self, X: np.ndarray) -> ModelOutput:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (batch, {self.input_dim}), got {X.shape}")
        return self.forward_t(Tensor(X))

    def _finish(self, logits: list[Tensor], aux: dict) -> ModelOutput:
        return ModelOutput(logits=logits, probs=_chain_probs(logits, False), aux=aux)

    def params(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for layer in self._layers:
            out.update(layer.params())
        return out

    def descriptor(self) -> dict:
        cfg = self.config
        return {
            "family": cfg.architecture, "tasks": list(cfg.tasks),
            "input_dim": cfg.input_dim, "expert_widths": list(cfg.expert_widths),
            "tower_widths": list(cfg.tower_widths), "levels": cfg.levels,
            "experts_per_level": cfg.experts_per_level,
            "shared_experts": cfg.shared_experts, "root_seed": self.root_seed,
        }


class SharedBottom(_BaselineBase):
    """One shared MLP trunk; per-task towers and nothing else in common."""

    def __init__(self, config: BaselineConfig, root_seed: int = 0):
        super().__init__(config, root_seed)
        d, ew, tw = config.input_dim, config.expert_widths, config.tower_widths
        self.bottom = MlpBlock([d, *ew], "relu", name="bottom", root_seed=root_seed)
        self.towers = OrderedDict(
            (t, MlpBlock([ew[-1], *tw], "relu", name=f"tower.{t}", root_seed=root_seed))
            for t in config.tasks)
        self._layers = [self.bottom, *self.towers.values()]

    def forward_t(self, x: Tensor) -> ModelOutput:
        h = self.bottom(x)
        logits = [self.towers[t](h) for t in self.task_names]
        return self._finish(logits, aux={})


class Mlmmoe(_BaselineBase):
    """Multi-level mixture of experts; only the top gates are per task."""

    def __init__(self, config: BaselineConfig, root_seed: int = 0):
        super().__init__(config, root_seed)
        d, ew, tw = config.input_dim, config.expert_widths, config.tower_widths
        n = config.experts_per_level
        self.experts, self.lower_gates = [], []
        in_dim = d
        for lvl in range(config.levels):
            self.experts.append([
                MlpBlock([in_dim, *ew], "relu", name=f"experts.L{lvl}.{j}",
                         root_seed=root_seed)
                for j in range(n)])
            if lvl < config.levels - 1:
                self.lower_gates.append(_Gate(in_dim, n, name=f"gates.L{lvl}",
                                              root_seed=root_seed))
            in_dim = ew[-1]
        self.task_gates = OrderedDict(
            (t, _Gate(in_dim if config.levels > 1 else d, n,
                      name=f"task_gates.{t}", root_seed=root_seed))
            for t in config.tasks)
        self.towers = OrderedDict(
            (t, MlpBlock([ew[-1], *tw], "relu", name=f"tower.{t}", root_seed=root_seed))
            for t in config.tasks)
        self._layers = ([e for lvl in self.experts for e in lvl]
                        + self.lower_gates + list(self.task_gates.values())
                        + list(self.towers.values()))

    def forward_t(self, x: Tensor) -> ModelOutput:
        aux = {"gates": {}}
        v = x
        for lvl, lvl_experts in enumerate(self.experts):
            outs = [e(v) for e in lvl_experts]
            if lvl < self.config.levels - 1:
                w = self.lower_gates[lvl](v)
                aux["gates"][self.lower_gates[lvl].name] = w.data
                v = _mix(outs, w)
            else:
                top_outs, gate_in = outs, v
        logits = []
        for t in self.task_names:
            w = self.task_gates[t](gate_in)
            aux["gates"][self.task_gates[t].name] = w.data
            logits.append(self.towers[t](_mix(top_outs, w)))
        return self._finish(logits, aux)


class Ple(_BaselineBase):
    """Task-specific and shared experts; task gates see only their own
    experts plus the shared ones."""

    def __init__(self, config: BaselineConfig, root_seed: int = 0):
        super().__init__(config, root_seed)
        d, ew, tw = config.input_dim, config.expert_widths, config.tower_widths
        n_t, n_s = config.experts_per_level, config.shared_experts
        self.task_experts, self.shared_experts_, self.task_gates, self.shared_gates = [], [], [], []
        in_dim = d
        for lvl in range(config.levels):
            self.task_experts.append({
                t: [MlpBlock([in_dim, *ew], "relu", name=f"experts.L{lvl}.{t}.{j}",
                             root_seed=root_seed) for j in range(n_t)]
                for t in config.tasks})
            self.shared_experts_.append([
                MlpBlock([in_dim, *ew], "relu", name=f"experts.L{lvl}.shared.{j}",
                         root_seed=root_seed) for j in range(n_s)])
            self.task_gates.append({
                t: _Gate(in_dim, n_t + n_s, name=f"gates.L{lvl}.{t}", root_seed=root_seed)
                for t in config.tasks})
            if lvl < config.levels - 1:
                total = n_t * len(config.tasks) + n_s
                self.shared_gates.append(_Gate(in_dim, total, name=f"gates.L{lvl}.shared",
                                               root_seed=root_seed))
            in_dim = ew[-1]
        self.towers = OrderedDict(
            (t, MlpBlock([ew[-1], *tw], "relu", name=f"tower.{t}", root_seed=root_seed))
            for t in config.tasks)
        self._layers = (
            [e for lvl in self.task_experts for es in lvl.values() for e in es]
            + [e for lvl in self.shared_experts_ for e in lvl]
            + [g for lvl in self.task_gates for g in lvl.values()]
            + self.shared_gates + list(self.towers.values()))

    def forward_t(self, x: Tensor) -> ModelOutput:
        aux = {"gates": {}}
        task_v = {t: x for t in self.task_names}
        shared_v = x
        for lvl in range(self.config.levels):
            outs_task = {t: [e(task_v[t]) for e in self.task_experts[lvl][t]]
                         for t in self.task_names}
            outs_shared = [e(shared_v) for e in self.shared_experts_[lvl]]
            new_task_v = {}
            for t in self.task_names:
                gate = self.task_gates[lvl][t]
                w = gate(task_v[t])
                aux["gates"][gate.name] = w.data
                new_task_v[t] = _mix(outs_task[t] + outs_shared, w)
            if lvl < self.config.levels - 1:
                gate = self.shared_gates[lvl]
                w = gate(shared_v)
                aux["gates"][gate.name] = w.data
                all_outs = [o for t in self.task_names for o in outs_task[t]] + outs_shared
                shared_v = _mix(all_outs, w)
            task_v = new_task_v
        logits = [self.towers[t](task_v[t]) for t in self.task_names]
        return self._finish(logits, aux)


class AdattSp(_BaselineBase):
    """All experts task-specific; every gate mixes every expert's output."""

    def __init__(self, config: BaselineConfig, root_seed: int = 0):
        super().__init__(config, root_seed)
        d, ew, tw = config.input_dim, config.expert_widths, config.tower_widths
        n = config.experts_per_level
        total = n * len(config.tasks)
        self.experts, self.gates = [], []
        in_dim = d
        for lvl in range(config.levels):
            self.experts.append({
                t: [MlpBlock([in_dim, *ew], "relu", name=f"experts.L{lvl}.{t}.{j}",
                             root_seed=root_seed) for j in range(n)]
                for t in config.tasks})
            self.gates.append({
                t: _Gate(in_dim, total, name=f"gates.L{lvl}.{t}", root_seed=root_seed)
                for t in config.tasks})
            in_dim = ew[-1]
        self.towers = OrderedDict(
            (t, MlpBlock([ew[-1], *tw], "relu", name=f"tower.{t}", root_seed=root_seed))
            for t in config.tasks)
        self._layers = ([e for lvl in self.experts for es in lvl.values() for e in es]
                        + [g for lvl in self.gates for g in lvl.values()]
                        + list(self.towers.values()))

    def forward_t(self, x: Tensor) -> ModelOutput:
        aux = {"gates": {}}
        task_v = {t: x for t in self.task_names}
        for lvl in range(self.config.levels):
            outs = [o for t in self.task_names for o in
                    (e(task_v[t]) for e in self.experts[lvl][t])]
            new_task_v = {}
            for t in self.task_names:
                gate = self.gates[lvl][t]
                w = gate(task_v[t])
                aux["gates"][gate.name] = w.data
                new_task_v[t] = _mix(outs, w)
            task_v = new_task_v
        logits = [self.towers[t](task_v[t]) for t in self.task_names]
        return self._finish(logits, aux)


_BASELINES = {"shared_bottom": SharedBottom, "mlmmoe": Mlmmoe,
              "ple": Ple, "adatt_sp": AdattSp}


class MdWrappedModel:
    """A baseline behind the input-level region adaptor.

    The wrapped forward slices the full feature matrix, transforms the
    dependent block, and feeds [invariant | transformed] to the untouched
    baseline. Signature and output shapes match the bare baseline.
    """

    def __init__(self, base, adaptor: RegionMaskAdaptor, split: FeatureSplit):
        expected = len(split.invariant_idx) + adaptor.out_dim
        if base.input_dim != expected:
            raise ShapeError(
                f"wrapped baseline must consume {expected} features "
                f"(|invariant| + transform dim), got {base.input_dim}")
        if adaptor.per_task is not None:
            raise ValueError("input-level wrapping uses the single-mask adaptor")
        self.base = base
        self.adaptor = adaptor
        self.split = split
        self.task_names = base.task_names
        self.regularized = base.regularized
        self.input_dim = split.width
        self.family = base.family
        self.root_seed = base.root_seed

    def forward(self, X: np.ndarray) -> ModelOutput:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (batch, {self.input_dim}), got {X.shape}")
        c, d, i = self.split.views(X)
        transformed = self.adaptor.transform_features(Tensor(c), Tensor(d))
        return self.base.forward_t(concat([Tensor(i), transformed]))

    def params(self) -> "OrderedDict[str, Tensor]":
        out = self.adaptor.params()
        out.update(self.base.params())
        return out

    def descriptor(self) -> dict:
        desc = self.base.descriptor()
        desc["md"] = {"split": self.split.to_json(),
                      "transform_dim": self.adaptor.out_dim}
        return desc


def plug_md(baseline, adaptor: RegionMaskAdaptor, split: FeatureSplit) -> MdWrappedModel:
    return MdWrappedModel(baseline, adaptor, split)


def make_model(architecture: str, *, tasks, input_dim: int, seed: int = 0,
               md_mode: str = "none", split: FeatureSplit | None = None,
               **overrides):
    """Build any architecture by name, optionally behind the region adaptor."""
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown model {architecture!r}; valid: {', '.join(ARCHITECTURES)}")
    if md_mode not in MD_MODES:
        raise ValueError(f"unknown md mode {md_mode!r}; valid: {', '.join(MD_MODES)}")
    task_tuple = task_names_for(tasks) if isinstance(tasks, int) else tuple(tasks)
    if md_mode != "none" and split is None:
        raise ValueError(f"md_mode={md_mode!r} requires a feature split")

    if architecture == "seq":
        cfg = SeqConfig(tasks=task_tuple, input_dim=input_dim, md_mode=md_mode,
                        **overrides)
        return SeqModel(cfg, split=split, root_seed=seed)

    if md_mode == "in_sequence":
        raise ValueError("in_sequence placement only applies to the seq architecture")
    if md_mode == "input_plug":
        adaptor = RegionMaskAdaptor(split, per_task=None,
                                    transform_dim=overrides.pop("transform_dim", None),
                                    root_seed=seed)
        inner_dim = len(split.invariant_idx) + adaptor.out_dim
        cfg = BaselineConfig(architecture=architecture, tasks=task_tuple,
                             input_dim=inner_dim, **overrides)
        base = _BASELINES[architecture](cfg, root_seed=seed)
        return MdWrappedModel(base, adaptor, split)

    cfg = BaselineConfig(architecture=architecture, tasks=task_tuple,
                         input_dim=input_dim, **overrides)
    return _BASELINES[architecture](cfg, root_seed=seed)


def build_from_descriptor(desc: dict):
    """Reconstruct a model (fresh parameters) from a checkpoint descriptor."""
    family = desc["family"]
    if family == "seq":
        split = FeatureSplit.from_json(desc["split"]) if desc.get("split") else None
        cfg = SeqConfig(tasks=tuple(desc["tasks"]), input_dim=desc["input_dim"],
                        hidden=desc["hidden"], stage1_layers=desc["stage1_layers"],
                        stage2_layers=desc["stage2_layers"],
                        regularizer=desc["regularizer"], md_mode=desc["md_mode"],
                        transform_dim=desc.get("transform_dim"),
                        token_hidden=tuple(desc.get("token_hidden", ())))
        return SeqModel(cfg, split=split, root_seed=desc["root_seed"])
    if family not in _BASELINES:
        raise ValueError(f"unknown model family {family!r} in checkpoint")
    cfg = BaselineConfig(architecture=family, tasks=tuple(desc["tasks"]),
                         input_dim=desc["input_dim"],
                         expert_widths=tuple(desc["expert_widths"]),
                         tower_widths=tuple(desc["tower_widths"]),
                         levels=desc["levels"],
                         experts_per_level=desc["experts_per_level"],
                         shared_experts=desc["shared_experts"])
    base = _BASELINES[family](cfg, root_seed=desc["root_seed"])
    if desc.get("md"):
        split = FeatureSplit.from_json(desc["md"]["split"])
        adaptor = RegionMaskAdaptor(split, per_task=None,
                                    transform_dim=desc["md"]["transform_dim"],
                                    root_seed=desc["root_seed"])
        return MdWrappedModel(base, adaptor, split)
    return base


def baseline_forward(model, X: np.ndarray) -> ModelOutput:
    return model.forward(X)


def count_params(model) -> "OrderedDict[str, int]":
    """Exact parameter counts grouped by top-level component, plus a total."""
    groups: OrderedDict[str, int] = OrderedDict()
    total = 0
    for name, tensor in model.params().items():
        component = name.split(".", 1)[0]
        groups[component] = groups.get(component, 0) + tensor.size
        total += tensor.size
    groups["total"] = total
    return groups


def score_records(model, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(probs, logits) matrices of shape (n, k) for a record batch."""
    out = model.forward(X)
    return out.prob_matrix(), out.logit_matrix()

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The directional benchmark
(criterion 5) dominates the runtime at roughly seven minutes; everything
else finishes in well under three.
"""

import dataclasses
import json
import time

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.special import expit

from funnelrank.cli import main as cli_main
from funnelrank.checkpoint import checkpoint_load, checkpoint_save
from funnelrank.data import GeneratorConfig, InteractionRecord, QueryGroup, generate
from funnelrank.evaluation import evaluate_models, ndcg_for_task, ndcg_oracle
from funnelrank.featuresplit import FeatureSplit, split_features
from funnelrank.gradcheck import grad_check
from funnelrank.models import count_params, make_model, task_names_for
from funnelrank.training import TrainConfig, multitask_loss, train


def report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {number} {name}: {status}"
    if detail:
        line += f"  [{detail}]"
    print(f"\n{line}")
    assert ok, line


def tiny_split() -> FeatureSplit:
    # widths <= 8: 8 assembled columns; country block (3, 4)
    return FeatureSplit(country_idx=(3, 4), dependent_idx=(0, 1, 5),
                        invariant_idx=(2, 6, 7), threshold=0.1,
                        mean_distance=np.full(8, np.nan))


def tiny_models(wrapped_only=False):
    split = tiny_split()
    base_kw = dict(tasks=2, input_dim=8, seed=0, expert_widths=(6, 4),
                   tower_widths=(4, 1))
    models = {}
    if not wrapped_only:
        for arch in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"):
            models[arch] = make_model(arch, **base_kw)
        models["seq"] = make_model("seq", tasks=2, input_dim=8, seed=0, hidden=4)
        models["seq_md"] = make_model("seq", tasks=2, input_dim=8, seed=0,
                                      hidden=4, md_mode="in_sequence", split=split)
    else:
        for arch in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"):
            models[f"{arch}+md"] = make_model(arch, md_mode="input_plug",
                                              split=split, **base_kw)
    return models


def check_gradients(models: dict) -> tuple[float, str, float]:
    rng = np.random.default_rng(0)
    X = rng.normal(size=(16, 8))
    click = rng.integers(0, 2, size=(16, 1)).astype(float)
    Y = np.hstack([click, click * rng.integers(0, 2, size=(16, 1))])
    worst, worst_name = 0.0, ""
    start = time.perf_counter()
    for name, model in models.items():
        def loss_fn():
            return multitask_loss(model.forward(X), Y, (1.0, 1.0), model.regularized)

        rep = grad_check(loss_fn, model.params(), tolerance=1e-4, step=1e-5)
        if rep.max_rel_err > worst:
            worst, worst_name = rep.max_rel_err, f"{name}:{rep.worst_param}"
    return worst, worst_name, time.perf_counter() - start


def test_criterion_1_gradient_correctness():
    worst, worst_name, elapsed = check_gradients(tiny_models())
    report(1, "gradient correctness", worst < 1e-4 and elapsed < 120.0,
           f"max_rel_err={worst:.2e} at {worst_name}, {elapsed:.1f}s")


def test_criterion_2_probability_chain_monotonicity():
    rng = np.random.default_rng(1)
    split = tiny_split()
    ok = True
    worst_gap = 0.0
    for tasks in (2, 3):
        for md in ("none", "input_plug", "in_sequence"):
            model = make_model("seq", tasks=tasks, input_dim=8, seed=tasks,
                               hidden=4, md_mode=md,
                               split=split if md != "none" else None)
            X = rng.normal(scale=3.0, size=(10_000, 8))
            out = model.forward(X)
            probs = out.prob_matrix()
            logits = out.logit_matrix()
            ok &= bool((np.diff(probs, axis=1) <= 0).all())
            gap = np.abs(probs - np.cumprod(expit(logits), axis=1)).max()
            worst_gap = max(worst_gap, gap)
            ok &= gap < 1e-12
    report(2, "descending probability chain", ok,
           f"6 configs x 10000 inputs, max |probs - cumprod| = {worst_gap:.2e}")


def test_criterion_3_ndcg_oracle_equivalence():
    rng = np.random.default_rng(2)
    checked = 0
    worst = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 7))
        click = rng.integers(0, 2, size=n)
        cart = click * rng.integers(0, 2, size=n)
        buy = cart * rng.integers(0, 2, size=n)
        records = tuple(
            InteractionRecord(query_id=f"g{i}", region=0, platform="web",
                              listing_region=0, x_user=np.zeros(1),
                              x_listing=np.zeros(1), click=int(click[j]),
                              cart=int(cart[j]), purchase=int(buy[j]))
            for j in range(n))
        g = QueryGroup(query_id=f"g{i}", region=0, platform="web", records=records)
        scores = rng.normal(size=n)
        for task in ("click", "cart", "purchase"):
            fast = ndcg_for_task(g, scores, task)
            slow = ndcg_oracle(g, scores, task)
            if fast is None:
                assert slow is None
                continue
            worst = max(worst, abs(fast - slow))
            checked += 1
    report(3, "NDCG oracle equivalence", worst < 1e-12,
           f"{checked} comparisons, max |diff| = {worst:.2e}")


def test_criterion_4_planted_shift_recovery():
    planted = (0, 1, 2, 3, 4)
    hits = 0
    for seed in range(20):
        cfg = GeneratorConfig(seed=seed, n_queries=4800,
                              region_weights=(0.25,) * 4,
                              domestic_preference=(0.0,) * 4,
                              shift_strength=2.0, dependent_idx=planted)
        groups = generate(cfg)
        per_region_groups = min(np.bincount([g.region for g in groups],
                                            minlength=4))
        assert per_region_groups >= 1000, "need >= 1000 samples per region"
        split = split_features(groups, cfg.layout.country_idx, threshold=0.1,
                               layout=cfg.layout)
        hits += split.dependent_idx == planted
    report(4, "planted-shift recovery", hits >= 19, f"{hits}/20 seeds exact")


def test_criterion_6_parameter_growth():
    growth = {}
    counts = {}
    for arch in ("shared_bottom", "mlmmoe", "ple", "adatt_sp", "seq"):
        k2 = count_params(make_model(arch, tasks=2, input_dim=16, seed=0))["total"]
        k3 = count_params(make_model(arch, tasks=3, input_dim=16, seed=0))["total"]
        counts[arch] = (k2, k3)
        growth[arch] = (k3 - k2) / k2 * 100.0
        print(f"  {arch}: {k2} -> {k3} params ({growth[arch]:+.2f}%)")
    ok = growth["seq"] < 10.0 and all(
        growth[a] >= 25.0 for a in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"))
    report(6, "parameter growth", ok,
           ", ".join(f"{a}={growth[a]:+.1f}%" for a in growth))


def test_criterion_7_transfer_zero_shot_invariance(tmp_path):
    rng = np.random.default_rng(3)
    cfg = GeneratorConfig(seed=0, n_queries=400)
    groups = generate(cfg)
    split = split_features(groups, cfg.layout.country_idx, layout=cfg.layout)
    ok = True
    for md, use_split in (("none", None), ("in_sequence", split)):
        source = make_model("seq", tasks=2, input_dim=16, seed=9, md_mode=md,
                            split=use_split)
        path = tmp_path / f"src_{md}.ckpt"
        checkpoint_save(source, path)
        desc = source.descriptor()
        desc["tasks"] = list(task_names_for(3))
        grown = checkpoint_load(path, desc)
        X = rng.normal(size=(1000, 16))
        two = source.forward(X).logit_matrix()[:, 0]
        three = grown.forward(X).logit_matrix()[:, 0]
        ok &= bool(np.array_equal(two, three))
    report(7, "transfer zero-shot click invariance", ok,
           "1000 inputs bit-identical, md in {none, in_sequence}")


def test_criterion_8_plug_and_play_matrix():
    split = tiny_split()
    X = np.random.default_rng(4).normal(size=(16, 8))
    shapes_ok = True
    for arch in ("shared_bottom", "mlmmoe", "ple", "adatt_sp"):
        bare = make_model(arch, tasks=2, input_dim=8, seed=0,
                          expert_widths=(6, 4), tower_widths=(4, 1))
        wrapped = make_model(arch, tasks=2, input_dim=8, seed=0,
                             expert_widths=(6, 4), tower_widths=(4, 1),
                             md_mode="input_plug", split=split)
        shapes_ok &= (bare.forward(X).prob_matrix().shape
                      == wrapped.forward(X).prob_matrix().shape)
    worst, worst_name, elapsed = check_gradients(tiny_models(wrapped_only=True))
    report(8, "plug-and-play matrix", shapes_ok and worst < 1e-4,
           f"4 wrapped baselines, max_rel_err={worst:.2e} ({worst_name}), "
           f"{elapsed:.1f}s")


def test_criterion_9_compare_determinism(tmp_path):
    runner = CliRunner()
    data = tmp_path / "data.jsonl"
    gen_cfg = tmp_path / "gen.json"
    gen_cfg.write_text(json.dumps({"n_queries": 200, "seed": 0}))
    assert runner.invoke(cli_main, ["generate", "--out", str(data),
                                    "--config", str(gen_cfg)]).exit_code == 0
    ckpts = []
    for arch in ("shared_bottom", "seq"):
        out_dir = tmp_path / f"run_{arch}"
        res = runner.invoke(cli_main, ["train", "--data", str(data),
                                       "--model", arch, "--tasks", "2",
                                       "--epochs", "2", "--out", str(out_dir)])
        assert res.exit_code == 0, res.output
        ckpts.append(str(out_dir / "model.ckpt"))

    out1, out2 = tmp_path / "cmp1", tmp_path / "cmp2"
    args = ["compare", "--data", str(data), "--checkpoint", ckpts[0],
            "--checkpoint", ckpts[1]]
    assert runner.invoke(cli_main, [*args, "--out", str(out1)]).exit_code == 0
    res = runner.invoke(cli_main, ["compare", "--config",
                                   str(out1 / "manifest.json"),
                                   "--out", str(out2)])
    assert res.exit_code == 0, res.output
    identical = all(
        (out1 / name).read_bytes() == (out2 / name).read_bytes()
        for name in ("ndcg.csv", "ndcg_table.txt", "domestic_share.csv"))
    report(9, "compare determinism", identical,
           "3 report files byte-identical across manifest rerun")


@pytest.mark.slow
def test_criterion_5_directional_benchmark():
    started = time.perf_counter()
    seeds = (0, 1, 2, 3, 4)
    gen_kw = dict(n_queries=6250, candidates_per_query=8, regions=4,
                  region_weights=(0.4, 0.3, 0.2, 0.1), shift_strength=2.0,
                  base_rates=(0.35, 0.40, 0.45),
                  domestic_preference=(1.5, -1.0, 0.8, -0.5),
                  region_mask_spread=1.25)
    deltas = {"seq": [], "seq_md": []}
    for seed in seeds:
        cfg = GeneratorConfig(seed=seed, **gen_kw)
        groups = generate(cfg)
        layout = cfg.layout
        n_records = sum(len(g.records) for g in groups)
        assert n_records == 50_000
        from funnelrank.training import split_groups

        train_groups, _ = split_groups(groups)
        split = split_features(train_groups, layout.country_idx, threshold=0.1,
                               layout=layout)
        eval_groups = generate(dataclasses.replace(cfg, seed=seed + 50_000,
                                                   n_queries=2500))
        tc = TrainConfig(seed=seed, epochs=8, batch_size=256, learning_rate=1e-2)
        models = {}
        for name, arch, md in (("shared_bottom", "shared_bottom", "none"),
                               ("seq", "seq", "none"),
                               ("seq_md", "seq", "in_sequence")):
            model = make_model(arch, tasks=2, input_dim=layout.width, seed=seed,
                               md_mode=md, split=split if md != "none" else None)
            train(model, groups, tc, layout)
            models[name] = model
        rep, _ = evaluate_models(models, eval_groups, layout)
        for name in ("seq", "seq_md"):
            deltas[name].append(rep.cell(name, "purchase", "all", "all").delta_pct)
        print(f"  seed {seed}: seq {deltas['seq'][-1]:+.3f}%  "
              f"seq_md {deltas['seq_md'][-1]:+.3f}%")

    mean_seq = float(np.mean(deltas["seq"]))
    mean_md = float(np.mean(deltas["seq_md"]))
    elapsed = time.perf_counter() - started
    ok = mean_md > 0.0 and mean_md >= mean_seq and elapsed < 1800.0
    report(5, "directional synthetic benchmark", ok,
           f"mean purchase delta: seq_md {mean_md:+.3f}% vs seq {mean_seq:+.3f}% "
           f"over {len(seeds)} paired seeds, {elapsed:.0f}s")

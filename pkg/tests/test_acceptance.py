"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line before asserting, so the suite
output doubles as a scoreboard.  The federated experiments (A4, A5, A9)
share one fixed desk-scale setting: an 8-class image-like corpus with
10,000 training and 2,000 test examples, logistic regression, 100 clients,
10 sampled per round, 30 rounds, lr 0.01, 2 local epochs, batch 128,
experiment seed 18.  A real MNIST corpus is substituted automatically when
FEDSIM_MNIST_DIR points at the IDX files.
"""

import math
import os

import numpy as np
import pytest

from fedsim.adversary import AttackConfig
from fedsim.aggregation import (
    ModelUpdate,
    StrategyConfig,
    euclidean_aggregate,
    fedavg,
    repeated_median_fit,
)
from fedsim.cli import CSV_HEADER, bench_command, load_datasets, write_rounds_csv
from fedsim.datasets import template_image_split
from fedsim.learner import ModelArch, TrainConfig, init_model
from fedsim.simulator import SimConfig, run_experiment

EXPERIMENT_SEED = 18
BATCH_SIZE = 128
ROUNDS = 30


def _report(tag, ok, detail):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} {detail}")


def _corpus():
    """10,000/2,000 corpus for the federated checks.

    Uses real MNIST when FEDSIM_MNIST_DIR is set (subsampled to the same
    sizes); otherwise the deterministic 8-class template corpus.
    """
    if os.environ.get("FEDSIM_MNIST_DIR"):
        raw = {"dataset": {"train_limit": 10000, "test_limit": 2000}, "seed": 0}
        return load_datasets(raw)
    return template_image_split(
        num_classes=8, d=784, train_per_class=1250, test_per_class=250,
        active_fraction=0.2, noise=0.1, seed=0,
    )


_CORPUS = None
_RUNS = {}


def corpus():
    global _CORPUS
    if _CORPUS is None:
        _CORPUS = _corpus()
    return _CORPUS


def federated_run(kind, attackers, rounds=ROUNDS, seed=EXPERIMENT_SEED):
    key = (kind, attackers, rounds, seed)
    if key not in _RUNS:
        train, test = corpus()
        num_classes = int(max(train.labels.max(), test.labels.max())) + 1
        cfg = SimConfig(
            num_clients=100,
            clients_per_round=10,
            rounds=rounds,
            arch=ModelArch("logreg", train.features.shape[1], num_classes),
            train=TrainConfig(0.01, 2, BATCH_SIZE, seed),
            strategy=StrategyConfig(kind),
            attack=AttackConfig(attackers, 1, 7, 2, seed),
            seed=seed,
            eval_every=1,
        )
        _RUNS[key] = run_experiment(cfg, train, test)
    return _RUNS[key]


def final_accuracy(report):
    return report.rounds[-1].accuracy


def mean_asr_last10(report):
    return float(np.mean([r.attack_success_rate for r in report.rounds[-10:]]))


def test_a1_aggregation_oracles():
    res = euclidean_aggregate([0.0, 0.0], [
        ModelUpdate(0, [1.0, 0.0], 1),
        ModelUpdate(1, [0.0, 2.0], 1),
    ])
    weights = [s.weight for s in res.per_client]
    ok_w = (abs(weights[0] - 2 / 3) < 1e-9 and abs(weights[1] - 1 / 3) < 1e-9)
    ok_agg = np.allclose(res.global_params, [2 / 3, 2 / 3], atol=1e-9)

    avg = fedavg([ModelUpdate(0, [0.0], 1), ModelUpdate(1, [4.0], 3)])
    ok_avg = abs(avg.global_params[0] - 3.0) < 1e-12

    ok = ok_w and ok_agg and ok_avg
    _report("A1", ok,
            f"inverse-distance weights={weights}, aggregate={res.global_params.tolist()}, "
            f"weighted mean={avg.global_params.tolist()}")
    assert ok


def test_a2_equal_distance_degeneracy():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        t = int(rng.integers(2, 12))
        anchor = rng.normal(size=t)
        dirs = rng.normal(size=(k, t))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radius = float(rng.uniform(0.1, 5.0))
        ups = [ModelUpdate(i, anchor + radius * dirs[i], 1) for i in range(k)]
        a = euclidean_aggregate(anchor, ups).global_params
        b = fedavg(ups).global_params
        worst = max(worst, float(np.max(np.abs(a - b))))
    ok = worst < 1e-9
    _report("A2", ok, f"1000 equal-distance trials, worst coordinate gap={worst:.3e}")
    assert ok


def test_a3_outlier_suppression():
    rng = np.random.default_rng(3)
    t = 20000
    anchor = np.zeros(t)
    honest = [rng.normal(size=t) / math.sqrt(t) for _ in range(9)]
    outlier = np.full(t, 1e6 / math.sqrt(t))
    ups = [ModelUpdate(i, v, 1) for i, v in enumerate(honest + [outlier])]
    res = euclidean_aggregate(anchor, ups)
    w_out = res.per_client[-1].weight
    gap = float(np.max(np.abs(res.global_params - np.mean(honest, axis=0))))
    ok = w_out < 1.2e-6 and gap < 1e-3
    _report("A3", ok, f"outlier weight={w_out:.3e}, max gap to honest mean={gap:.3e}")
    assert ok


def test_a4_no_attack_parity():
    acc_e = final_accuracy(federated_run("euclidean", 0))
    acc_f = final_accuracy(federated_run("fedavg", 0))
    ok = acc_e >= 0.85 and abs(acc_e - acc_f) <= 0.015
    _report("A4", ok, f"no attack: euclidean={acc_e:.4f}, fedavg={acc_f:.4f}")
    assert ok


def test_a5_attack_robustness():
    rep_e = federated_run("euclidean", 10)
    rep_f = federated_run("fedavg", 10)
    acc_e, acc_f = final_accuracy(rep_e), final_accuracy(rep_f)
    asr_e, asr_f = mean_asr_last10(rep_e), mean_asr_last10(rep_f)
    ok = (acc_e - acc_f >= 0.03) and (asr_e < asr_f)
    _report("A5", ok,
            f"10 attackers: euclidean acc={acc_e:.4f} asr={asr_e:.4f}, "
            f"fedavg acc={acc_f:.4f} asr={asr_f:.4f}")
    assert ok


def test_a6_timing_scaling():
    rows = bench_command(
        num_clients=10,
        t_list=[100_000, 200_000, 400_000],
        strategies=["euclidean", "residual_reweight"],
        repeats=9,
        seed=0,
    )
    times = {(k, t): s for k, t, s in rows}
    r1 = times[("euclidean", 200_000)] / times[("euclidean", 100_000)]
    r2 = times[("euclidean", 400_000)] / times[("euclidean", 200_000)]
    overheads = [
        times[("residual_reweight", t)] / times[("euclidean", t)]
        for t in (100_000, 200_000, 400_000)
    ]
    ok = all(1.5 <= r <= 3.0 for r in (r1, r2)) and all(o >= 1.4 for o in overheads)
    _report("A6", ok,
            f"euclidean doubling ratios=({r1:.2f}, {r2:.2f}), "
            f"reweighting overhead={[f'{o:.1f}x' for o in overheads]}")
    assert ok


def test_a7_determinism(tmp_path):
    csvs = []
    for i in range(2):
        # drop the cache so the second run recomputes from scratch
        _RUNS.pop(("euclidean", 10, 5, EXPERIMENT_SEED), None)
        rep = federated_run("euclidean", 10, rounds=5)
        path = tmp_path / f"rounds_{i}.csv"
        write_rounds_csv(rep, path)
        csvs.append(path.read_text())

    # the agg_time_s column is wall clock; every simulated quantity must match
    def strip_timing(text):
        out = []
        for line in text.strip().split("\n"):
            cells = line.split(",")
            del cells[4]
            out.append(",".join(cells))
        return out

    assert CSV_HEADER.split(",")[4] == "agg_time_s"
    a, b = strip_timing(csvs[0]), strip_timing(csvs[1])
    ok = a == b
    _report("A7", ok, f"two identical 5-round runs: {len(a)} csv rows compared, "
                      f"{'all equal' if ok else 'mismatch'} outside the timing column")
    assert ok


def test_a8_learner_correctness():
    arch = ModelArch("mlp", input_dim=5, num_classes=3, hidden_dim=4)
    model = init_model(arch, 0)
    rng = np.random.default_rng(8)
    X = rng.normal(size=(12, 5))
    y = rng.integers(0, 3, size=12)
    _, grads = model.loss_and_grads(X, y)
    analytic = np.concatenate(
        [grads[name].ravel() for name, _ in model.shape_spec.layers]
    )
    flat = model.get_vector()
    eps = 1e-6
    worst = 0.0
    for i in range(flat.size):
        probe = model.copy()
        bumped = flat.copy()
        bumped[i] += eps
        probe.set_vector(bumped)
        up, _ = probe.loss_and_grads(X, y)
        bumped[i] -= 2 * eps
        probe.set_vector(bumped)
        down, _ = probe.loss_and_grads(X, y)
        numeric = (up - down) / (2 * eps)
        scale = max(abs(analytic[i]), abs(numeric), 1.0)
        worst = max(worst, abs(analytic[i] - numeric) / scale)
    ok_grad = worst < 1e-6

    uniform = init_model(ModelArch("logreg", input_dim=6, num_classes=10), 0)
    uniform.set_vector(np.zeros(uniform.shape_spec.total_size))
    Xu = rng.normal(size=(50, 6))
    yu = rng.integers(0, 10, size=50)
    loss, _ = uniform.loss_and_grads(Xu, yu)
    ok_loss = abs(loss - math.log(10)) < 1e-9

    ok = ok_grad and ok_loss
    _report("A8", ok,
            f"gradient check worst relative error={worst:.3e}, "
            f"uniform-predictor loss={loss:.12f} (ln 10={math.log(10):.12f})")
    assert ok


def test_a9_robust_baseline_sanity():
    rng = np.random.default_rng(9)
    x = np.arange(20, dtype=float)
    y = 2.5 * x - 4.0
    bad = rng.choice(20, size=6, replace=False)
    y[bad] += rng.uniform(100, 1000, size=6) * rng.choice([-1, 1], size=6)
    slope, intercept = repeated_median_fit(list(zip(x, y)))
    ok_line = abs(slope - 2.5) < 1e-9

    acc_e = final_accuracy(federated_run("euclidean", 10))
    acc_m = final_accuracy(federated_run("median", 10))
    acc_t = final_accuracy(federated_run("trimmed_mean", 10))
    ok_median = acc_e - acc_m <= 0.05
    ok_trimmed = acc_e - acc_t <= 0.05

    ok = ok_line and ok_median and ok_trimmed
    _report("A9", ok,
            f"line fit slope error={abs(slope - 2.5):.2e}; under attack "
            f"euclidean={acc_e:.4f}, median={acc_m:.4f} "
            f"({'within' if ok_median else 'outside'} 5 points), "
            f"trimmed_mean={acc_t:.4f} "
            f"({'within' if ok_trimmed else 'outside'} 5 points)")
    assert ok

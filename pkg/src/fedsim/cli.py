"""Command-line front end.

    fedsim --synthetic --strategy euclidean --rounds 30 --out results/
    fedsim --mnist-dir data/ --attackers 10 --compare fedavg,euclidean
    fedsim --bench --out results/

Writes ``rounds.csv`` (one row per round) and ``report.json`` (the full
experiment report).  JSON config files mirror the flags; flags override file
values; unknown keys are rejected.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .adversary import AttackConfig
from .aggregation import STRATEGY_KINDS, ModelUpdate, StrategyConfig, make_strategy
from .datasets import Dataset, load_mnist_idx, synthetic_split
from .exceptions import FedsimError, ValidationError
from .learner import ModelArch, TrainConfig
from .seeding import seeded_rng
from .simulator import ExperimentReport, SimConfig, run_experiment

CSV_HEADER = "round,accuracy,loss,asr,agg_time_s,attackers_in_round"

_SYNTH_DEFAULTS = {
    "num_classes": 10,
    "dim": 64,
    "train_per_class": 1000,
    "test_per_class": 200,
    "separation": 6.0,
}

_TOP_KEYS = {
    "clients", "per_round", "rounds", "seed", "eval_every",
    "strategy", "train", "attack", "arch", "dataset", "out",
}


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}"
        )


def _strategy_config(raw) -> StrategyConfig:
    if isinstance(raw, str):
        raw = {"kind": raw}
    _check_keys(raw, {"kind", "trim_fraction", "lambda", "epsilon"}, "strategy")
    kwargs = {k: v for k, v in raw.items() if k != "lambda"}
    if "lambda" in raw:
        kwargs["lam"] = raw["lambda"]
    return StrategyConfig(**kwargs)


def parse_config(path=None, overrides=None) -> dict:
    """Merge a JSON config file with flag overrides into a validated config dict."""
    raw = {}
    if path is not None:
        with open(path) as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a JSON object")
    _check_keys(raw, _TOP_KEYS, "config file")
    for section, keys in (
        ("train", {"learning_rate", "local_epochs", "batch_size"}),
        ("attack", {"num_attackers", "source_label", "target_label", "extra_epochs"}),
        ("arch", {"kind", "hidden_dim"}),
        ("dataset", {"mnist_dir", "synthetic", "train_limit", "test_limit"}),
    ):
        if section in raw:
            _check_keys(raw[section], keys, section)
    if "synthetic" in raw.get("dataset", {}):
        synth = raw["dataset"]["synthetic"]
        if isinstance(synth, dict):
            _check_keys(synth, set(_SYNTH_DEFAULTS), "dataset.synthetic")
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            raw[key] = value
    return raw


def sim_config_from_dict(raw: dict, input_dim: int, num_classes: int) -> SimConfig:
    """Build a SimConfig from a config dict plus dataset-derived dimensions."""
    seed = int(raw.get("seed", 0))
    arch_raw = dict(raw.get("arch", {}))
    arch = ModelArch(
        kind=arch_raw.get("kind", "logreg"),
        input_dim=input_dim,
        num_classes=num_classes,
        hidden_dim=int(arch_raw.get("hidden_dim", 64)),
    )
    train_raw = dict(raw.get("train", {}))
    train = TrainConfig(
        learning_rate=float(train_raw.get("learning_rate", 0.01)),
        local_epochs=int(train_raw.get("local_epochs", 2)),
        batch_size=int(train_raw.get("batch_size", 32)),
        seed=seed,
    )
    attack_raw = dict(raw.get("attack", {}))
    attack = AttackConfig(
        num_attackers=int(attack_raw.get("num_attackers", 0)),
        source_label=int(attack_raw.get("source_label", 1)),
        target_label=int(attack_raw.get("target_label", 7)),
        extra_epochs=int(attack_raw.get("extra_epochs", 2)),
        seed=seed,
    )
    return SimConfig(
        num_clients=int(raw.get("clients", 100)),
        clients_per_round=int(raw.get("per_round", 10)),
        rounds=int(raw.get("rounds", 100)),
        arch=arch,
        train=train,
        strategy=_strategy_config(raw.get("strategy", "fedavg")),
        attack=attack,
        seed=seed,
        eval_every=int(raw.get("eval_every", 1)),
    )


def _find_idx(directory: Path, stem: str) -> Path:
    for suffix in ("", ".gz"):
        candidate = directory / (stem + suffix)
        if candidate.exists():
            return candidate
    raise ValidationError(f"no {stem}[.gz] under {directory}")


def _subsample(data: Dataset, limit, seed: int) -> Dataset:
    if limit is None or limit >= len(data):
        return data
    idx = seeded_rng(seed, 0x5AB5).choice(len(data), size=int(limit), replace=False)
    return data.subset(np.sort(idx))


def load_datasets(raw: dict):
    """Resolve the configured dataset into (train, test) sets."""
    ds = dict(raw.get("dataset", {}))
    seed = int(raw.get("seed", 0))
    mnist_dir = ds.get("mnist_dir") or os.environ.get("FEDSIM_MNIST_DIR")
    if ds.get("synthetic") is not None:
        synth = dict(_SYNTH_DEFAULTS)
        if isinstance(ds["synthetic"], dict):
            synth.update(ds["synthetic"])
        train, test = synthetic_split(
            num_classes=int(synth["num_classes"]),
            d=int(synth["dim"]),
            train_per_class=int(synth["train_per_class"]),
            test_per_class=int(synth["test_per_class"]),
            separation=float(synth["separation"]),
            seed=seed,
        )
    elif mnist_dir:
        directory = Path(mnist_dir)
        train = load_mnist_idx(
            _find_idx(directory, "train-images-idx3-ubyte"),
            _find_idx(directory, "train-labels-idx1-ubyte"),
        )
        test = load_mnist_idx(
            _find_idx(directory, "t10k-images-idx3-ubyte"),
            _find_idx(directory, "t10k-labels-idx1-ubyte"),
        )
    else:
        raise ValidationError(
            "no dataset configured: pass --mnist-dir, --synthetic, "
            "or set FEDSIM_MNIST_DIR"
        )
    train = _subsample(train, ds.get("train_limit"), seed)
    test = _subsample(test, ds.get("test_limit"), seed + 1)
    return train, test


def _fmt(v) -> str:
    return f"{float(v):.9g}"


def write_rounds_csv(report: ExperimentReport, path) -> None:
    lines = [CSV_HEADER]
    for r in report.rounds:
        lines.append(
            f"{r.round},{_fmt(r.accuracy)},{_fmt(r.mean_loss)},"
            f"{_fmt(r.attack_success_rate)},{_fmt(r.aggregation_time)},"
            f"{r.attackers_in_round}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_json(report: ExperimentReport, path) -> None:
    payload = {
        "config": report.config,
        "summary": report.summary,
        "rounds": [
            {
                "round": r.round,
                "participant_ids": list(r.participant_ids),
                "attackers_in_round": r.attackers_in_round,
                "accuracy": r.accuracy,
                "loss": r.mean_loss,
                "asr": r.attack_success_rate,
                "agg_time_s": r.aggregation_time,
                "per_client": [
                    {"client_id": s.client_id, "distance": s.distance, "weight": s.weight}
                    for s in r.per_client
                ],
            }
            for r in report.rounds
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def run_command(raw: dict, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    train, test = load_datasets(raw)
    num_classes = int(max(train.labels.max(), test.labels.max())) + 1
    cfg = sim_config_from_dict(raw, input_dim=train.features.shape[1],
                               num_classes=num_classes)
    report = run_experiment(cfg, train, test)
    write_rounds_csv(report, out / "rounds.csv")
    write_report_json(report, out / "report.json")
    print(
        f"strategy={cfg.strategy.kind} rounds={cfg.rounds} "
        f"final_accuracy={report.summary['final_accuracy']:.4f} "
        f"mean_asr={report.summary['mean_attack_success_rate']:.4f} "
        f"mean_agg_time_s={report.summary['mean_aggregation_time']:.6f}"
    )
    return 0


def compare_command(raw: dict, kinds, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        per_strategy = dict(raw)
        per_strategy["strategy"] = kind
        train, test = load_datasets(per_strategy)
        num_classes = int(max(train.labels.max(), test.labels.max())) + 1
        cfg = sim_config_from_dict(per_strategy, input_dim=train.features.shape[1],
                                   num_classes=num_classes)
        report = run_experiment(cfg, train, test)
        write_rounds_csv(report, out / f"rounds_{kind}.csv")
        print(
            f"strategy={kind} final_accuracy={report.summary['final_accuracy']:.4f} "
            f"mean_asr={report.summary['mean_attack_success_rate']:.4f}"
        )
    return 0


def bench_command(num_clients: int, t_list, strategies, repeats: int,
                  out_path=None, seed: int = 0):
    """Median aggregation time per (strategy, parameter length)."""
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    rows = []
    for t in t_list:
        rng = seeded_rng(seed, int(t))
        anchor = rng.normal(size=t)
        updates = [
            ModelUpdate(cid, anchor + rng.normal(size=t), 1)
            for cid in range(num_clients)
        ]
        for kind in strategies:
            strategy = make_strategy(_strategy_config(kind))
            times = [
                strategy.aggregate(updates, global_params=anchor).elapsed
                for _ in range(repeats)
            ]
            rows.append((kind, int(t), float(np.median(times))))
    if out_path is not None:
        lines = ["strategy,t,median_time_s"]
        lines += [f"{k},{t},{_fmt(s)}" for k, t, s in rows]
        Path(out_path).write_text("\n".join(lines) + "\n")
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-learning simulator with robust aggregation",
    )
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--strategy", choices=STRATEGY_KINDS)
    p.add_argument("--attackers", type=int, help="number of label-flipping attackers")
    p.add_argument("--rounds", type=int)
    p.add_argument("--clients", type=int)
    p.add_argument("--per-round", type=int, dest="per_round")
    p.add_argument("--seed", type=int)
    p.add_argument("--mnist-dir", dest="mnist_dir", help="directory with IDX files")
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in synthetic digit corpus")
    p.add_argument("--out", default="fedsim-out", help="output directory")
    p.add_argument("--bench", action="store_true",
                   help="run the aggregation timing benchmark instead of a simulation")
    p.add_argument("--compare", metavar="KINDS",
                   help="comma-separated strategies to run under shared seeds")
    p.add_argument("--bench-t", default="100000,200000,400000",
                   help="comma-separated parameter lengths for --bench")
    p.add_argument("--bench-repeats", type=int, default=9)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.bench:
            kinds = (args.compare or "fedavg,euclidean,median,trimmed_mean,"
                     "residual_reweight").split(",")
            t_list = [int(t) for t in args.bench_t.split(",")]
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            rows = bench_command(
                num_clients=args.clients or 10,
                t_list=t_list,
                strategies=kinds,
                repeats=args.bench_repeats,
                out_path=out / "bench.csv",
                seed=args.seed or 0,
            )
            for kind, t, secs in rows:
                print(f"{kind:18s} t={t:<8d} median_time_s={secs:.6f}")
            return 0

        overrides = {
            "strategy": args.strategy,
            "rounds": args.rounds,
            "clients": args.clients,
            "per_round": args.per_round,
            "seed": args.seed,
        }
        raw = parse_config(args.config, overrides)
        if args.attackers is not None:
            raw.setdefault("attack", {})
            raw["attack"] = {**raw["attack"], "num_attackers": args.attackers}
        if args.mnist_dir or args.synthetic:
            ds = dict(raw.get("dataset", {}))
            if args.mnist_dir:
                ds["mnist_dir"] = args.mnist_dir
            if args.synthetic:
                ds.setdefault("synthetic", {})
            raw["dataset"] = ds
        out_dir = raw.get("out", args.out)
        if args.compare:
            return compare_command(raw, args.compare.split(","), out_dir)
        return run_command(raw, out_dir)
    except FedsimError as exc:
        print(f"error [config/validation]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

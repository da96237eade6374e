"""Round orchestration: sampling, local training, aggregation, evaluation.

One round = broadcast the global model, train the sampled clients locally,
aggregate their updates, evaluate.  The distance-anchored strategy always
receives the current global vector, so round n's anchor is round n-1's
output.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .adversary import AttackConfig, attacker_train_config, poison_clients
from .aggregation import StrategyConfig, make_strategy
from .datasets import Dataset, PartitionConfig, partition_iid
from .exceptions import ValidationError
from .learner import ModelArch, TrainConfig, evaluate, init_model, train_local
from .seeding import seeded_rng


@dataclass(frozen=True)
class SimConfig:
    num_clients: int = 100
    clients_per_round: int = 10
    rounds: int = 100
    arch: ModelArch = field(default_factory=ModelArch)
    train: TrainConfig = field(default_factory=TrainConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if not 1 <= self.clients_per_round <= self.num_clients:
            raise ValidationError(
                f"clients_per_round must be in [1, {self.num_clients}], "
                f"got {self.clients_per_round}"
            )
        if self.rounds < 1:
            raise ValidationError("rounds must be >= 1")
        if self.eval_every < 1:
            raise ValidationError("eval_every must be >= 1")


@dataclass(frozen=True)
class RoundReport:
    round: int
    participant_ids: tuple
    attackers_in_round: int
    accuracy: float
    mean_loss: float
    attack_success_rate: float
    aggregation_time: float
    per_client: tuple


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    rounds: tuple
    summary: dict


def sample_clients(num_clients: int, per_round: int, seed: int, round_idx: int):
    """Uniform sample without replacement, deterministic per (seed, round)."""
    if per_round > num_clients:
        raise ValidationError(
            f"cannot sample {per_round} of {num_clients} clients"
        )
    if per_round == num_clients:
        return list(range(num_clients))
    rng = seeded_rng(seed, round_idx, 0x5A3)
    return sorted(int(i) for i in rng.choice(num_clients, size=per_round, replace=False))


def attack_success_rate(model, testset: Dataset, source: int, target: int) -> float:
    """Fraction of true-source test examples the model predicts as target."""
    mask = testset.labels == source
    if not mask.any():
        raise ValidationError(f"test set has no examples of class {source}")
    preds = model.predict(testset.features[mask])
    return float((preds == target).mean())


def _client_seed(seed: int, round_idx: int, client_id: int) -> int:
    # well-mixed per-(round, client) training seed
    return int(np.random.SeedSequence([seed & (2**64 - 1), round_idx, client_id])
               .generate_state(1)[0])


def run_round(global_model, clients, test_set: Dataset, cfg: SimConfig,
              round_idx: int, compute_metrics: bool = True):
    """Run one synchronization round; returns (new global model, RoundReport)."""
    ids = sample_clients(cfg.num_clients, cfg.clients_per_round, cfg.seed, round_idx)
    updates = []
    for cid in ids:
        client = clients[cid]
        tcfg = cfg.train
        if client.is_attacker:
            tcfg = attacker_train_config(tcfg, cfg.attack)
        tcfg = replace(tcfg, seed=_client_seed(cfg.seed, round_idx, cid))
        updates.append(train_local(global_model, client, tcfg))

    anchor = global_model.get_vector()
    strategy = make_strategy(cfg.strategy)
    result = strategy.aggregate(updates, global_params=anchor)

    new_model = global_model.copy()
    new_model.set_vector(result.global_params)

    accuracy = mean_loss = asr = float("nan")
    if compute_metrics:
        accuracy, mean_loss = evaluate(new_model, test_set.features, test_set.labels)
        if np.any(test_set.labels == cfg.attack.source_label):
            asr = attack_success_rate(
                new_model, test_set, cfg.attack.source_label, cfg.attack.target_label
            )
        else:
            asr = 0.0

    report = RoundReport(
        round=round_idx,
        participant_ids=tuple(ids),
        attackers_in_round=sum(1 for cid in ids if clients[cid].is_attacker),
        accuracy=accuracy,
        mean_loss=mean_loss,
        attack_success_rate=asr,
        aggregation_time=result.elapsed,
        per_client=result.per_client,
    )
    return new_model, report


def build_clients(train_set: Dataset, cfg: SimConfig):
    """Partition the training set and inject the configured attack."""
    clients = partition_iid(
        train_set, PartitionConfig(num_clients=cfg.num_clients, seed=cfg.seed)
    )
    if cfg.attack.num_attackers > 0:
        poison_clients(clients, cfg.attack)
    return clients


def run_experiment(cfg: SimConfig, train_set: Dataset, test_set: Dataset) -> ExperimentReport:
    """Full pipeline: partition, poison, init, N rounds, collect reports."""
    clients = build_clients(train_set, cfg)
    model = init_model(cfg.arch, cfg.seed)

    reports = []
    for round_idx in range(cfg.rounds):
        want_metrics = (
            (round_idx + 1) % cfg.eval_every == 0 or round_idx == cfg.rounds - 1
        )
        model, report = run_round(
            model, clients, test_set, cfg, round_idx, compute_metrics=want_metrics
        )
        if not want_metrics and reports:
            # carry the most recent metrics forward so every row is populated
            prev = reports[-1]
            report = replace(
                report,
                accuracy=prev.accuracy,
                mean_loss=prev.mean_loss,
                attack_success_rate=prev.attack_success_rate,
            )
        reports.append(report)

    summary = {
        "final_accuracy": reports[-1].accuracy,
        "mean_attack_success_rate": float(
            np.mean([r.attack_success_rate for r in reports])
        ),
        "mean_aggregation_time": float(
            np.mean([r.aggregation_time for r in reports])
        ),
    }
    return ExperimentReport(config=asdict(cfg), rounds=tuple(reports), summary=summary)

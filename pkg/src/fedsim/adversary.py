"""Label-flipping attack injection and attacker schedule overrides."""

from dataclasses import dataclass, replace

import numpy as np

from .datasets import Dataset
from .exceptions import ValidationError
from .learner import TrainConfig
from .seeding import seeded_rng


@dataclass(frozen=True)
class AttackConfig:
    num_attackers: int = 0
    source_label: int = 1
    target_label: int = 7
    extra_epochs: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.num_attackers < 0:
            raise ValidationError("num_attackers must be >= 0")
        if self.source_label == self.target_label:
            raise ValidationError("source and target labels must differ")
        if self.extra_epochs < 0:
            raise ValidationError("extra_epochs must be >= 0")


def select_attackers(clients, cfg: AttackConfig):
    """Pick attackers among clients holding the source label; marks is_attacker."""
    eligible = [c for c in clients if cfg.source_label in c.digit_pair]
    if cfg.num_attackers > len(eligible):
        raise ValidationError(
            f"requested {cfg.num_attackers} attackers but only "
            f"{len(eligible)} clients hold label {cfg.source_label}"
        )
    if cfg.num_attackers == 0:
        return set()
    rng = seeded_rng(cfg.seed, 0xA77)
    picked = rng.choice(len(eligible), size=cfg.num_attackers, replace=False)
    chosen = {eligible[i].client_id for i in picked}
    for c in clients:
        if c.client_id in chosen:
            c.is_attacker = True
    return chosen


def flip_labels(data: Dataset, source: int, target: int) -> Dataset:
    """Relabel every source-class example as the target class."""
    if source == target:
        raise ValidationError("source and target labels must differ")
    labels = np.where(data.labels == source, target, data.labels)
    return Dataset(data.features, labels)


def poison_clients(clients, cfg: AttackConfig) -> set:
    """Select attackers and permanently flip their local labels."""
    chosen = select_attackers(clients, cfg)
    for c in clients:
        if c.client_id in chosen:
            c.data = flip_labels(c.data, cfg.source_label, cfg.target_label)
    return chosen


def attacker_train_config(base: TrainConfig, cfg: AttackConfig) -> TrainConfig:
    """Attackers train for extra local epochs; everything else matches honest clients."""
    return replace(base, local_epochs=base.local_epochs + cfg.extra_epochs)

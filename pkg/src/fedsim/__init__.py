"""Deterministic federated-learning simulator with distance-weighted robust aggregation."""

from .aggregation import (
    AggregationResult,
    ModelUpdate,
    StrategyConfig,
    coordinate_median,
    euclidean_aggregate,
    fedavg,
    make_strategy,
    repeated_median_fit,
    residual_reweighting,
    trimmed_mean,
)
from .adversary import AttackConfig, attacker_train_config, flip_labels, select_attackers
from .datasets import (
    ClientDataset,
    Dataset,
    PartitionConfig,
    load_mnist_idx,
    partition_iid,
    synthetic_dataset,
    synthetic_split,
    template_image_split,
)
from .exceptions import (
    FedsimError,
    FormatError,
    StructuralError,
    TrainingError,
    ValidationError,
)
from .learner import ModelArch, TrainConfig, evaluate, init_model, predict, train_local
from .params import ShapeSpec, euclidean_distance, flatten, unflatten, weighted_sum
from .simulator import (
    ExperimentReport,
    RoundReport,
    SimConfig,
    attack_success_rate,
    run_experiment,
    run_round,
    sample_clients,
)

__version__ = "0.1.0"

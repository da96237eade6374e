"""Aggregation strategies behind one uniform interface.

Strategies are small estimator-style objects: construct with hyperparameters,
call ``aggregate(updates, global_params=None)``, introspect with
``get_params()``.  Plain functions are exposed too for direct use.

Updates are internally sorted by client id before any reduction so results
are identical under permutation of the input list.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import StructuralError, ValidationError
from .params import as_param_vector, weighted_sum

STRATEGY_KINDS = ("fedavg", "euclidean", "median", "trimmed_mean", "residual_reweight")

# coordinate chunk size for pairwise-slope work; bounds peak memory at ~K^2*chunk doubles
_COORD_CHUNK = 50_000

# consistency factor making the median absolute deviation estimate the
# standard deviation under a normal model
_MAD_SCALE = 1.4826


@dataclass(frozen=True)
class ModelUpdate:
    """One client's round contribution."""

    client_id: int
    params: np.ndarray
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "params", as_param_vector(self.params))
        if self.sample_count < 1:
            raise ValidationError(
                f"client {self.client_id}: sample_count must be >= 1, got {self.sample_count}"
            )


@dataclass(frozen=True)
class ClientStat:
    client_id: int
    distance: float
    weight: float


@dataclass(frozen=True)
class AggregationResult:
    global_params: np.ndarray
    per_client: tuple
    elapsed: float


@dataclass(frozen=True)
class StrategyConfig:
    """Which strategy to run and its knobs (only the relevant one is read)."""

    kind: str = "fedavg"
    trim_fraction: float = 0.1
    lam: float = 2.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValidationError(
                f"trim_fraction must be in [0, 0.5), got {self.trim_fraction}"
            )
        if self.lam <= 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")


def _check_updates(updates):
    if not updates:
        raise ValidationError("update list is empty")
    updates = sorted(updates, key=lambda u: u.client_id)
    lengths = {u.params.size for u in updates}
    if len(lengths) != 1:
        raise StructuralError(f"updates have mixed parameter lengths {sorted(lengths)}")
    return updates


def fedavg(updates) -> AggregationResult:
    """Data-size-weighted mean of the client parameter vectors."""
    updates = _check_updates(updates)
    stacked = np.stack([u.params for u in updates])
    counts = np.array([u.sample_count for u in updates], dtype=np.float64)

    start = time.perf_counter()
    w = counts / counts.sum()
    out = w @ stacked
    elapsed = time.perf_counter() - start

    stats = tuple(
        ClientStat(u.client_id, 0.0, float(wk)) for u, wk in zip(updates, w)
    )
    return AggregationResult(out, stats, elapsed)


def euclidean_aggregate(global_params, updates, epsilon: float = 1e-12) -> AggregationResult:
    """Weight each update by the inverse of its distance to the current global model.

    Distances are floored at ``epsilon`` so a client identical to the global
    model gets finite, maximal weight.
    """
    updates = _check_updates(updates)
    anchor = as_param_vector(global_params, "global_params")
    if anchor.size != updates[0].params.size:
        raise StructuralError(
            f"global length {anchor.size} != update length {updates[0].params.size}"
        )
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    stacked = np.stack([u.params for u in updates])

    start = time.perf_counter()
    diffs = stacked - anchor
    dists = np.sqrt(np.einsum("kt,kt->k", diffs, diffs))
    for u, d in zip(updates, dists):
        if not math.isfinite(d):
            raise ValidationError(f"non-finite distance for client {u.client_id}")
    floored = np.maximum(dists, epsilon)
    inv = 1.0 / floored
    w = inv / inv.sum()
    out = w @ stacked
    elapsed = time.perf_counter() - start

    stats = tuple(
        ClientStat(u.client_id, float(d), float(wk))
        for u, d, wk in zip(updates, dists, w)
    )
    return AggregationResult(out, stats, elapsed)


def coordinate_median(updates) -> AggregationResult:
    """Per-coordinate median; even client counts use the mean of the middle two."""
    updates = _check_updates(updates)
    stacked = np.stack([u.params for u in updates])

    start = time.perf_counter()
    out = np.median(stacked, axis=0)
    elapsed = time.perf_counter() - start

    uniform = 1.0 / len(updates)
    stats = tuple(ClientStat(u.client_id, 0.0, uniform) for u in updates)
    return AggregationResult(out, stats, elapsed)


def trimmed_mean(updates, trim_fraction: float = 0.1) -> AggregationResult:
    """Per coordinate, drop the floor(beta*K) smallest and largest values, mean the rest."""
    if not 0.0 <= trim_fraction < 0.5:
        raise ValidationError(f"trim_fraction must be in [0, 0.5), got {trim_fraction}")
    updates = _check_updates(updates)
    stacked = np.stack([u.params for u in updates])
    k = len(updates)
    cut = int(trim_fraction * k)

    start = time.perf_counter()
    ordered = np.sort(stacked, axis=0)
    out = ordered[cut : k - cut].mean(axis=0)
    elapsed = time.perf_counter() - start

    uniform = 1.0 / k
    stats = tuple(ClientStat(u.client_id, 0.0, uniform) for u in updates)
    return AggregationResult(out, stats, elapsed)


def repeated_median_fit(points):
    """Robust line fit: slope = med_i med_{j != i} (y_j - y_i)/(x_j - x_i).

    Returns (slope, intercept).  Pairs with identical x are skipped; if every
    x is identical there is no slope to fit and a validation error is raised.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValidationError("need at least 2 points")
    x = np.array([p[0] for p in pts], dtype=np.float64)
    y = np.array([p[1] for p in pts], dtype=np.float64)
    if np.all(x == x[0]):
        raise ValidationError("all x values identical; slope undefined")

    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = dy / dx
    slopes[dx == 0] = np.nan
    per_point = np.nanmedian(slopes, axis=1)
    slope = float(np.nanmedian(per_point))
    intercept = float(np.median(y - slope * x))
    return slope, intercept


def _repeated_median_sorted(ys: np.ndarray) -> np.ndarray:
    """Vectorized repeated-median line fit over columns of sorted values.

    ``ys`` has shape (K, C): column c holds K client values already sorted
    ascending; x is the rank 1..K.  Returns residuals of shape (K, C).
    """
    k = ys.shape[0]
    x = np.arange(1, k + 1, dtype=np.float64)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, np.nan)
    dy = ys[None, :, :] - ys[:, None, :]
    slopes = dy / dx[:, :, None]
    per_point = np.nanmedian(slopes, axis=1)
    slope = np.median(per_point, axis=0)
    intercept = np.median(ys - slope[None, :] * x[:, None], axis=0)
    fitted = slope[None, :] * x[:, None] + intercept[None, :]
    return ys - fitted


def residual_reweighting(updates, lam: float = 2.0, epsilon: float = 1e-12) -> AggregationResult:
    """Robust-regression comparator: per-coordinate line fits over sorted client
    values, residuals standardized by a MAD scale, confidences clamped at ``lam``,
    averaged per client into normalized weights.

    The per-coordinate repeated-median fit considers all client pairs, so the
    cost is quadratic in the number of clients.
    """
    if lam <= 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    updates = _check_updates(updates)
    if len(updates) < 3:
        raise ValidationError(f"need at least 3 updates, got {len(updates)}")
    stacked = np.stack([u.params for u in updates])
    k, t = stacked.shape

    start = time.perf_counter()
    conf_sum = np.zeros(k)
    for lo in range(0, t, _COORD_CHUNK):
        chunk = stacked[:, lo : lo + _COORD_CHUNK]
        order = np.argsort(chunk, axis=0, kind="stable")
        ys = np.take_along_axis(chunk, order, axis=0)
        resid = _repeated_median_sorted(ys)
        scale = _MAD_SCALE * np.median(np.abs(resid), axis=0)
        rhat = np.abs(resid) / (scale[None, :] + epsilon)
        conf = np.where(rhat <= lam, 1.0, lam / np.maximum(rhat, lam))
        # scatter confidences back from sorted position to client order
        unsorted = np.empty_like(conf)
        np.put_along_axis(unsorted, order, conf, axis=0)
        conf_sum += unsorted.sum(axis=1)
    w = conf_sum / t
    w = w / w.sum()
    out = w @ stacked
    elapsed = time.perf_counter() - start

    stats = tuple(
        ClientStat(u.client_id, 0.0, float(wk)) for u, wk in zip(updates, w)
    )
    return AggregationResult(out, stats, elapsed)


class AggregationStrategy:
    """Estimator-style wrapper: hyperparameters at construction, get_params() for
    introspection, aggregate() to run."""

    kind = None

    def get_params(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}

    def set_params(self, **params) -> "AggregationStrategy":
        for key, value in params.items():
            if key not in self.get_params():
                raise ValidationError(f"{type(self).__name__} has no parameter {key!r}")
            setattr(self, key, value)
        return self

    def aggregate(self, updates, global_params=None) -> AggregationResult:
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class FedAvg(AggregationStrategy):
    kind = "fedavg"

    def aggregate(self, updates, global_params=None):
        return fedavg(updates)


class InverseDistanceWeighting(AggregationStrategy):
    """The distance-anchored strategy; needs the current global model as anchor."""

    kind = "euclidean"

    def __init__(self, epsilon: float = 1e-12):
        self.epsilon = epsilon

    def aggregate(self, updates, global_params=None):
        if global_params is None:
            raise ValidationError("euclidean strategy needs the current global params")
        return euclidean_aggregate(global_params, updates, epsilon=self.epsilon)


class CoordinateMedian(AggregationStrategy):
    kind = "median"

    def aggregate(self, updates, global_params=None):
        return coordinate_median(updates)


class TrimmedMean(AggregationStrategy):
    kind = "trimmed_mean"

    def __init__(self, trim_fraction: float = 0.1):
        self.trim_fraction = trim_fraction

    def aggregate(self, updates, global_params=None):
        return trimmed_mean(updates, trim_fraction=self.trim_fraction)


class ResidualReweighting(AggregationStrategy):
    kind = "residual_reweight"

    def __init__(self, lam: float = 2.0, epsilon: float = 1e-12):
        self.lam = lam
        self.epsilon = epsilon

    def aggregate(self, updates, global_params=None):
        return residual_reweighting(updates, lam=self.lam, epsilon=self.epsilon)


def make_strategy(cfg: StrategyConfig) -> AggregationStrategy:
    if cfg.kind == "fedavg":
        return FedAvg()
    if cfg.kind == "euclidean":
        return InverseDistanceWeighting(epsilon=cfg.epsilon)
    if cfg.kind == "median":
        return CoordinateMedian()
    if cfg.kind == "trimmed_mean":
        return TrimmedMean(trim_fraction=cfg.trim_fraction)
    if cfg.kind == "residual_reweight":
        return ResidualReweighting(lam=cfg.lam)
    raise ValidationError(f"unknown strategy kind {cfg.kind!r}")

"""Flat parameter vectors and the vector math every aggregator consumes.

A parameter vector is a 1-D float64 numpy array holding every weight of a
model in one canonical order.  ``ShapeSpec`` records the layer boundaries so
flattening is reversible.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import StructuralError, ValidationError


def as_param_vector(values, name: str = "params") -> np.ndarray:
    """Validate and return ``values`` as a finite 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise StructuralError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if v.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class ShapeSpec:
    """Ordered layer layout: ((name, shape), ...).  Order is canonical for a run."""

    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("ShapeSpec needs at least one layer")
        object.__setattr__(
            self, "layers", tuple((str(n), tuple(int(d) for d in s)) for n, s in self.layers)
        )

    @property
    def total_size(self) -> int:
        return sum(int(np.prod(shape, dtype=np.int64)) for _, shape in self.layers)

    @classmethod
    def from_arrays(cls, weights: dict) -> "ShapeSpec":
        return cls(tuple((name, np.asarray(a).shape) for name, a in weights.items()))


def flatten(model_weights: dict, spec: ShapeSpec) -> np.ndarray:
    """Concatenate the layers of ``model_weights`` in spec order, row-major."""
    parts = []
    for name, shape in spec.layers:
        if name not in model_weights:
            raise StructuralError(f"missing layer {name!r}")
        arr = np.asarray(model_weights[name], dtype=np.float64)
        if arr.shape != shape:
            raise StructuralError(
                f"layer {name!r} has shape {arr.shape}, spec expects {shape}"
            )
        parts.append(arr.ravel(order="C"))
    return as_param_vector(np.concatenate(parts), name="flattened params")


def unflatten(v, spec: ShapeSpec) -> dict:
    """Exact inverse of :func:`flatten`."""
    v = as_param_vector(v)
    if v.size != spec.total_size:
        raise StructuralError(
            f"vector length {v.size} does not match spec total {spec.total_size}"
        )
    out = {}
    offset = 0
    for name, shape in spec.layers:
        count = int(np.prod(shape, dtype=np.int64))
        out[name] = v[offset : offset + count].reshape(shape)
        offset += count
    return out


def euclidean_distance(a, b) -> float:
    """sqrt(sum((a_i - b_i)^2)), accumulated in float64."""
    a = as_param_vector(a, "a")
    b = as_param_vector(b, "b")
    if a.size != b.size:
        raise StructuralError(f"length mismatch: {a.size} vs {b.size}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def weighted_sum(vectors, weights) -> np.ndarray:
    """Elementwise sum_k w_k * v_k."""
    if len(vectors) == 0:
        raise ValidationError("weighted_sum needs at least one vector")
    vs = [as_param_vector(v, f"vectors[{i}]") for i, v in enumerate(vectors)]
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size != len(vs):
        raise StructuralError(f"{len(vs)} vectors but {w.size} weights")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights contain non-finite values")
    lengths = {v.size for v in vs}
    if len(lengths) != 1:
        raise StructuralError(f"vectors have mixed lengths {sorted(lengths)}")
    return w @ np.stack(vs)

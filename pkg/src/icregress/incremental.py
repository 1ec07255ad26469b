"""Exemplar-ranked rehearsal for regression.

Base training keeps the K training points the base model fits best (smallest
absolute residual) as rehearsal memory. Adaptation concatenates that memory
with every batch of the new data stream and fine-tunes the base model on the
result, or trains a fresh model when no base parameters are supplied.

Note that ranking keeps the *best-fit* points, not representative or hard
ones. ``descending=True`` flips the ranking for comparison studies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import regressor as reg


class AdaptationError(ValueError):
    pass


@dataclass(frozen=True)
class ExemplarSet:
    features: np.ndarray  # (K, 8, 20)
    targets: np.ndarray  # (K,)
    provenance_ids: tuple[str, ...]
    K: int

    def __post_init__(self):
        if len(self.features) != len(self.targets) or len(self.targets) != len(self.provenance_ids):
            raise AdaptationError("exemplar arrays disagree in length")
        if len(set(self.provenance_ids)) != len(self.provenance_ids):
            raise AdaptationError("exemplar provenance ids must be unique")

    def __len__(self) -> int:
        return len(self.targets)

    @classmethod
    def empty(cls, channels: int = 8, timesteps: int = 20) -> "ExemplarSet":
        return cls(np.zeros((0, channels, timesteps)), np.zeros(0), (), 0)

    def save(self, path: str | Path) -> None:
        """JSON-lines, one exemplar per line, in rank order."""
        with open(path, "w") as fh:
            fh.write(json.dumps({"K": self.K, "count": len(self)}) + "\n")
            for pid, x, y in zip(self.provenance_ids, self.features, self.targets):
                fh.write(json.dumps({"id": pid, "target": float(y), "features": x.tolist()}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExemplarSet":
        with open(path) as fh:
            head = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        if len(rows) != head["count"]:
            raise AdaptationError(f"{path}: expected {head['count']} exemplars, found {len(rows)}")
        if not rows:
            return cls.empty()
        return cls(
            np.array([r["features"] for r in rows], dtype=float),
            np.array([r["target"] for r in rows], dtype=float),
            tuple(r["id"] for r in rows),
            int(head["K"]),
        )


def resolve_k(K: int | float, base_length: int) -> int:
    """Memory size as a count; a float in (0, 1) is a fraction of the base length."""
    if K < 0:
        raise AdaptationError("K must be non-negative")
    if isinstance(K, float) and K < 1.0:
        return int(math.floor(K * base_length + 1e-9))
    return int(K)


def select_exemplars(
    features,
    targets,
    params: reg.RegressorParams,
    K: int,
    provenance_ids: Sequence[str] | None = None,
    descending: bool = False,
) -> ExemplarSet:
    """Keep the min(K, N) points with the smallest |prediction - target|.

    Ties keep the original order (stable sort).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(x) != len(y):
        raise AdaptationError(f"{len(x)} feature windows but {len(y)} targets")
    if K < 0:
        raise AdaptationError("K must be non-negative")
    ids = tuple(provenance_ids) if provenance_ids is not None else tuple(str(i) for i in range(len(y)))
    if len(ids) != len(y):
        raise AdaptationError("provenance ids must match the number of points")
    if K == 0 or len(y) == 0:
        return ExemplarSet(np.zeros((0,) + x.shape[1:]), np.zeros(0), (), int(K))
    resid = np.abs(reg.predict(x, params) - y)
    order = np.argsort(-resid if descending else resid, kind="stable")[: min(K, len(y))]
    return ExemplarSet(x[order].copy(), y[order].copy(), tuple(ids[i] for i in order), int(K))


def train_base(
    features,
    targets,
    K: int | float,
    config: reg.TrainConfig = reg.TrainConfig(),
    descriptor: reg.ArchitectureDescriptor = reg.ArchitectureDescriptor(),
    provenance_ids: Sequence[str] | None = None,
) -> tuple[reg.RegressorParams, ExemplarSet]:
    """Train the base model, then rank its own training points to build the memory."""
    params = reg.train(features, targets, config, descriptor)
    k = resolve_k(K, len(targets))
    return params, select_exemplars(features, targets, params, k, provenance_ids)


def _drain(stream: Iterable) -> tuple[list[np.ndarray], list[np.ndarray]]:
    xs, ys = [], []
    for xb, yb in stream:
        xb = np.asarray(xb, dtype=float)
        yb = np.asarray(yb, dtype=float).reshape(-1)
        if len(xb) != len(yb):
            raise AdaptationError("stream batch has mismatched features and targets")
        if len(xb):
            xs.append(xb)
            ys.append(yb)
    return xs, ys


def adapt(
    exemplars: ExemplarSet,
    new_stream: Iterable,
    base_params: reg.RegressorParams | None,
    config: reg.TrainConfig = reg.TrainConfig(),
    descriptor: reg.ArchitectureDescriptor | None = None,
) -> reg.RegressorParams:
    """Fine-tune on exemplars + the whole drained stream.

    ``new_stream`` yields ``(features, targets)`` batches. Without
    ``base_params`` a fresh model is trained instead (``descriptor`` or the
    default architecture).
    """
    xs, ys = _drain(new_stream)
    if not xs:
        raise AdaptationError("empty new data")
    if len(exemplars):
        xs.insert(0, exemplars.features)
        ys.insert(0, exemplars.targets)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if base_params is not None:
        if descriptor is not None and descriptor != base_params.descriptor:
            raise AdaptationError("descriptor differs from the base model")
        if x.shape[1:] != (base_params.descriptor.input_channels, base_params.descriptor.input_timesteps):
            raise AdaptationError(f"data shape {x.shape[1:]} does not fit the base model")
        return reg.finetune(x, y, base_params, config)
    return reg.train(x, y, config, descriptor or reg.ArchitectureDescriptor())


def transfer_baseline(
    new_stream: Iterable,
    base_params: reg.RegressorParams,
    config: reg.TrainConfig = reg.TrainConfig(),
) -> reg.RegressorParams:
    """Naive fine-tuning: adaptation with an empty memory."""
    d = base_params.descriptor
    return adapt(ExemplarSet.empty(d.input_channels, d.input_timesteps), new_stream, base_params, config)


@dataclass(frozen=True)
class AdaptationConfig:
    K: int | float = 0.125
    train: reg.TrainConfig = field(default_factory=reg.TrainConfig)
    variant: str = "finetune_from_base"
    descending: bool = False
    refresh_exemplars: bool = False

    def __post_init__(self):
        if self.K < 0:
            raise AdaptationError("K must be non-negative")
        if self.variant not in ("finetune_from_base", "scratch"):
            raise AdaptationError("variant must be 'finetune_from_base' or 'scratch'")


def adapt_round(
    exemplars: ExemplarSet,
    new_stream: Iterable,
    base_params: reg.RegressorParams,
    config: AdaptationConfig,
    new_ids: Sequence[str] | None = None,
) -> tuple[reg.RegressorParams, ExemplarSet]:
    """One adaptation round for multi-round studies.

    The memory is carried over unchanged unless ``refresh_exemplars`` is set,
    in which case it is re-ranked under the adapted model over memory + new data.
    """
    batches = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in new_stream]
    start = base_params if config.variant == "finetune_from_base" else None
    adapted = adapt(exemplars, batches, start, config.train, base_params.descriptor)
    if not config.refresh_exemplars:
        return adapted, exemplars
    x = np.concatenate([exemplars.features] + [b[0] for b in batches])
    y = np.concatenate([exemplars.targets] + [b[1] for b in batches])
    n_new = len(y) - len(exemplars)
    ids = list(exemplars.provenance_ids) + list(new_ids or (f"new{i}" for i in range(n_new)))
    return adapted, select_exemplars(x, y, adapted, exemplars.K, ids, config.descending)

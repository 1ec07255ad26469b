"""Angular error and the three hit metrics for object referencing.

All hit tests use closed intervals, so a prediction exactly on a boundary
counts as a hit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry as geo
from . import regressor as reg
from .dataset import ReferencingSample, apply_mask, stack_features

METRICS = geo.METRICS


class MetricError(ValueError):
    pass


def mae(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(truths, dtype=float).reshape(-1)
    if len(p) != len(t):
        raise MetricError(f"length mismatch: {len(p)} predictions, {len(t)} truths")
    if len(p) == 0:
        raise MetricError("mae of an empty set")
    return float(np.mean(np.abs(p - t)))


def hit(scene: geo.Scene, predicted_angle: float, metric: str) -> bool:
    tid = scene.target_id
    if metric == "MRDE":
        return geo.geometric_interval(scene, tid).contains(predicted_angle)
    if metric == "SegObj":
        return geo.in_any(geo.visible_intervals(scene, tid), predicted_angle)
    if metric == "MinDT":
        return geo.nearest_building(scene, predicted_angle) == tid
    raise MetricError(f"unknown metric {metric!r}")


@dataclass
class HitRecord:
    sample_id: str
    predicted: float
    truth: float
    hits: dict[str, bool]
    chance: dict[str, float]


@dataclass
class EvalResult:
    n_samples: int
    mae_deg: float
    accuracy: dict[str, float]
    chance: dict[str, float]
    records: list[HitRecord] = field(default_factory=list, repr=False)

    def to_dict(self, with_records: bool = False) -> dict:
        d = {
            "n_samples": self.n_samples,
            "mae_deg": self.mae_deg,
            "accuracy": dict(self.accuracy),
            "chance": dict(self.chance),
        }
        if with_records:
            d["records"] = [asdict(r) for r in self.records]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        records = [HitRecord(**r) for r in d.get("records", [])]
        return cls(d["n_samples"], d["mae_deg"], d["accuracy"], d["chance"], records)

    def write_records_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "predicted", "truth"]
                       + [f"{m}_hit" for m in METRICS] + [f"{m}_chance" for m in METRICS])
            for r in self.records:
                w.writerow([r.sample_id, repr(r.predicted), repr(r.truth)]
                           + [int(r.hits[m]) for m in METRICS] + [repr(r.chance[m]) for m in METRICS])


def evaluate_predictions(
    samples: Sequence[ReferencingSample], predictions, keep_records: bool = False
) -> EvalResult:
    """Aggregate MAE, hit rates and mean chance levels for given predictions."""
    if not samples:
        raise MetricError("cannot evaluate an empty sample set")
    preds = np.asarray(predictions, dtype=float).reshape(-1)
    if len(preds) != len(samples):
        raise MetricError("one prediction per sample is required")
    hits = {m: 0 for m in METRICS}
    chance = {m: 0.0 for m in METRICS}
    records = []
    for s, p in zip(samples, preds):
        h = {m: hit(s.scene, float(p), m) for m in METRICS}
        c = {m: geo.chance_level(s.scene, m) for m in METRICS}
        for m in METRICS:
            hits[m] += h[m]
            chance[m] += c[m]
        if keep_records:
            records.append(HitRecord(s.sample_id, float(p), s.truth_angle, h, c))
    n = len(samples)
    return EvalResult(
        n_samples=n,
        mae_deg=mae(preds, [s.truth_angle for s in samples]),
        accuracy={m: 100.0 * hits[m] / n for m in METRICS},
        chance={m: chance[m] / n for m in METRICS},
        records=records,
    )


def evaluate(
    samples: Sequence[ReferencingSample],
    params: reg.RegressorParams,
    modalities: Sequence[str] | None = None,
    keep_records: bool = False,
) -> EvalResult:
    """Predict every sample with ``params`` and aggregate the metrics.

    ``modalities`` zero-fills the remaining channels first, matching how the
    model was trained in a modality ablation.
    """
    if not samples:
        raise MetricError("cannot evaluate an empty sample set")
    x, _ = stack_features(samples)
    if modalities is not None:
        x = apply_mask(x, modalities)
    return evaluate_predictions(samples, reg.predict(x, params), keep_records)

"""Config-driven experiment runner.

One experiment is a grid of (condition, seed) cells. Every trained model is
checkpointed under a content-addressed name (a hash of everything that
determines it), so an interrupted run can be resumed and a finished run
re-reports without retraining. Reports and plot CSVs are deterministic: the
same config and seeds give byte-identical files.

Seeds control the participant split and the training seed of every model in
a cell; the synthetic data itself is fixed by the data spec.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import dataset as ds
from . import incremental as inc
from . import metrics as mt
from . import regressor as reg

KINDS = ("ablation", "k_sweep", "trait_adapt", "personalization", "forgetting")

# short labels used in reports, as in the usual ablation figure
MODALITY_LABELS = {"Pnt": "P", "Gaze": "G", "GazeHead": "GH", "Head": "H"}
DEFAULT_MASKS = (
    ("Pnt",), ("Gaze",), ("GazeHead",), ("Head",),
    ("Pnt", "Gaze"), ("Pnt", "Head"), ("Gaze", "Head"), ("Pnt", "GazeHead"),
    ("Pnt", "GazeHead", "Gaze", "Head"),
)
DEFAULT_K_VALUES = (1 / 16, 1 / 8, 1 / 4, 1 / 2)
TRAITS = {
    "left_handed": {"handedness": "left"},
    "right_handed": {"handedness": "right"},
    "amateur": {"experience": "amateur"},
    "expert": {"experience": "expert"},
    "speech": {"speech_available": True},
    "no_speech": {"speech_available": False},
}
REPORTED = ("MRDE", "SegObj", "MinDT", "MAE")


class HarnessError(RuntimeError):
    pass


def mask_label(mask: Sequence[str]) -> str:
    if tuple(mask) == ds.MODALITIES or set(mask) == set(ds.MODALITIES):
        return "all"
    return "+".join(MODALITY_LABELS[m] for m in mask)


def k_label(K: float | int) -> str:
    if isinstance(K, float) and K < 1.0:
        return f"BL*{K:g}"
    return str(int(K))


# --------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    kind: str
    data: dict = field(default_factory=lambda: {"generate": {}})
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    train: dict = field(default_factory=dict)
    adapt_train: dict | None = None
    descriptor: dict = field(default_factory=dict)
    masks: list[list[str]] | None = None
    K_values: list[float] | None = None
    K: float = 0.125
    traits: list[str] = field(default_factory=lambda: ["left_handed", "amateur"])
    test_fraction: float = 0.2
    max_participants: int | None = None
    new_data: dict | None = None
    out_dir: str = "runs"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise HarnessError(f"invalid kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.seeds:
            raise HarnessError("seeds must be nonempty")
        self.seeds = [int(s) for s in self.seeds]
        for K in list(self.K_values or []) + [self.K]:
            if K < 0:
                raise HarnessError("K values must be non-negative")
        for m in self.masks or []:
            bad = set(m) - set(ds.MODALITIES)
            if bad or not m:
                raise HarnessError(f"invalid modality mask {m}")
        for t in self.traits:
            if t not in TRAITS:
                raise HarnessError(f"unknown trait {t!r}; expected one of {', '.join(TRAITS)}")
        if not 0 < self.test_fraction < 1:
            raise HarnessError("test_fraction must lie in (0, 1)")
        if not ("generate" in self.data or "path" in self.data):
            raise HarnessError("data needs a 'generate' spec or a 'path'")
        self.train_config()
        self.arch()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise HarnessError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "kind" not in d:
            raise HarnessError("config is missing 'kind'")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def train_config(self, seed: int = 0, adapt: bool = False) -> reg.TrainConfig:
        d = dict(self.train)
        if adapt and self.adapt_train is not None:
            d.update(self.adapt_train)
        d["seed"] = seed
        try:
            return reg.TrainConfig(**d)
        except TypeError as e:
            raise HarnessError(f"bad train config: {e}") from None

    def arch(self) -> reg.ArchitectureDescriptor:
        d = dict(self.descriptor)
        for k in ("conv_channels", "fc_widths"):
            if k in d:
                d[k] = tuple(d[k])
        try:
            return reg.ArchitectureDescriptor(**d)
        except TypeError as e:
            raise HarnessError(f"bad descriptor: {e}") from None

    def mask_list(self) -> list[tuple[str, ...]]:
        return [tuple(m) for m in self.masks] if self.masks else list(DEFAULT_MASKS)

    def k_list(self) -> list[float]:
        return list(self.K_values) if self.K_values is not None else list(DEFAULT_K_VALUES)


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:20]


def load_data(spec: dict) -> tuple[list[ds.ReferencingSample], str]:
    """Samples plus a fingerprint identifying them."""
    if "path" in spec:
        path = Path(spec["path"])
        if not path.exists():
            raise HarnessError(f"dataset not found: {path}")
        d = ds.load_dataset(path)
        h = hashlib.sha256((path / "samples.jsonl").read_bytes()).hexdigest()[:20]
        return d.samples, h
    g = dict(spec["generate"])
    params = ds.GeneratorParams.from_dict(g.pop("params", {}))
    d = ds.generate_dataset(
        n_participants=g.pop("n_participants", 56),
        n_segments=g.pop("n_segments", ds.SEGMENTS_PER_PARTICIPANT),
        seed=g.pop("seed", 0),
        params=params,
        prefix=g.pop("prefix", "p"),
    )
    if g:
        raise HarnessError(f"unknown generate keys: {', '.join(sorted(g))}")
    return d.samples, _digest(spec)


def drifted_spec(spec: dict, drift_deg: float = 10.0) -> dict:
    """Default second population: same generator, new seed and prefix, shifted pointing."""
    if "generate" not in spec:
        raise HarnessError("forgetting with a file dataset needs an explicit new_data")
    g = json.loads(json.dumps(spec["generate"]))
    g["seed"] = int(g.get("seed", 0)) + 1000
    g["prefix"] = "q"
    g.setdefault("params", {})["pointing_drift_deg"] = drift_deg
    return {"generate": g}


# --------------------------------------------------------------------------
# checkpoints


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class CheckpointStore:
    """Content-addressed parameter cache under ``<out>/checkpoints``."""

    def __init__(self, root: str | Path, resume: bool = False):
        self.root = Path(root) / "checkpoints"
        self.resume = resume
        if resume and not self.root.is_dir():
            raise HarnessError(f"resume requested but no checkpoints found under {self.root}")
        self.hits = 0
        self.misses = 0

    def get_or_train(self, key: dict, fit: Callable[[], reg.RegressorParams]) -> tuple[reg.RegressorParams, str]:
        name = _digest(key)
        path = self.root / f"{name}.ckpt"
        if self.resume and path.exists():
            self.hits += 1
            return reg.load_params(path), name
        self.misses += 1
        params = fit()
        _atomic_write(path, reg.serialize_params(params))
        return params, name


# --------------------------------------------------------------------------
# report


@dataclass
class ExperimentReport:
    config: dict
    cells: list[dict]  # one per (condition, seed[, participant])
    summary: dict
    expected_cells: int
    plot_csvs: list[str] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.config["kind"]

    def complete(self) -> bool:
        return len(self.cells) == self.expected_cells

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": self.cells,
            "summary": self.summary,
            "expected_cells": self.expected_cells,
            "plot_csvs": self.plot_csvs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["config"], d["cells"], d["summary"], d["expected_cells"], d.get("plot_csvs", []))

    def save(self, path: str | Path) -> None:
        _atomic_write(Path(path), self.to_json().encode())

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def values(self, metric: str, **where) -> list[float]:
        """Per-cell values of ``metric`` for cells matching ``where``, in cell order."""
        out = []
        for c in self.cells:
            if all(c.get(k) == v for k, v in where.items()):
                out.append(c["values"][metric])
        return out

    def median(self, metric: str, **where) -> float:
        v = self.values(metric, **where)
        if not v:
            raise HarnessError(f"no cells match {where}")
        return float(np.median(v))


def t_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float] | None:
    """Two-sided t-interval for the mean; None with fewer than two values."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return None
    half = stats.t.ppf(0.5 + level / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v))
    m = v.mean()
    return float(m - half), float(m + half)


def _values(r: mt.EvalResult) -> dict:
    d = {m: r.accuracy[m] for m in mt.METRICS}
    d["MAE"] = r.mae_deg
    return d


def _summarize(cells: list[dict], keys: Sequence[str]) -> dict:
    groups: dict[str, list[dict]] = {}
    for c in cells:
        label = "/".join(str(c[k]) for k in keys)
        groups.setdefault(label, []).append(c)
    out = {}
    for label, group in groups.items():
        entry = {"n": len(group)}
        for m in REPORTED:
            v = [g["values"][m] for g in group]
            ci = t_interval(v)
            entry[m] = {"median": float(np.median(v)), "mean": float(np.mean(v)),
                        "ci95": list(ci) if ci else None}
        out[label] = entry
    return out


# --------------------------------------------------------------------------
# protocols


def _split_participants(pids: Sequence[str], test_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    pids = sorted(pids)
    if len(pids) < 2:
        raise HarnessError(f"need at least two participants to split, got {len(pids)}")
    n_test = min(max(1, int(round(test_fraction * len(pids)))), len(pids) - 1)
    order = [pids[i] for i in np.random.default_rng((seed, 11)).permutation(len(pids))]
    return sorted(order[n_test:]), sorted(order[:n_test])


def _select(samples, ids) -> list[ds.ReferencingSample]:
    keep = set(ids)
    return [s for s in samples if s.participant_id in keep]


class _Runner:
    def __init__(self, config: ExperimentConfig, resume: bool, log: Callable[[str], None] | None):
        self.cfg = config
        self.store = CheckpointStore(config.out_dir, resume)
        self.desc = config.arch()
        self.log = log or (lambda msg: None)

    def _xy(self, samples, mask=None):
        x, y = ds.stack_features(samples)
        if mask is not None:
            x = ds.apply_mask(x, mask)
        return x, y

    def base(self, fp: str, samples, seed: int, mask=None) -> tuple[reg.RegressorParams, str]:
        ids = ds.participants_of(samples)
        tc = self.cfg.train_config(seed)
        key = {"role": "base", "data": fp, "ids": ids, "mask": list(mask or ds.MODALITIES),
               "train": tc.to_dict(), "desc": self.desc.to_dict()}
        return self.store.get_or_train(key, lambda: reg.train(*self._xy(samples, mask), tc, self.desc))

    def adapted(self, role: str, parent: str, fp: str, base_samples, base_params, new_samples,
                K, seed: int) -> reg.RegressorParams:
        """role: 'transfer', 'icregress' (with K) or 'scratch' (new data only)."""
        tc = self.cfg.train_config(seed, adapt=True)
        key = {"role": role, "parent": parent, "data": fp, "new_ids": ds.participants_of(new_samples),
               "new_n": len(new_samples), "new_first": new_samples[0].sample_id if new_samples else None,
               "K": K, "train": tc.to_dict(), "desc": self.desc.to_dict()}
        xn, yn = self._xy(new_samples)

        def fit():
            if role == "scratch":
                return reg.train(xn, yn, tc, self.desc)
            if role == "transfer":
                return inc.transfer_baseline([(xn, yn)], base_params, tc)
            xb, yb = self._xy(base_samples)
            k = inc.resolve_k(K, len(yb))
            ex = inc.select_exemplars(xb, yb, base_params, k, [s.sample_id for s in base_samples])
            return inc.adapt(ex, [(xn, yn)], base_params, tc)

        return self.store.get_or_train(key, fit)[0]

    # -- kinds

    def ablation(self) -> tuple[list[dict], int]:
        samples, fp = load_data(self.cfg.data)
        masks = self.cfg.mask_list()
        cells = []
        for seed in self.cfg.seeds:
            train_ids, test_ids = _split_participants(ds.participants_of(samples), self.cfg.test_fraction, seed)
            train, test = _select(samples, train_ids), _select(samples, test_ids)
            for mask in masks:
                self.log(f"ablation seed={seed} mask={mask_label(mask)}")
                params, _ = self.base(fp, train, seed, mask)
                r = mt.evaluate(test, params, mask)
                cells.append({"condition": mask_label(mask), "seed": seed, "values": _values(r)})
        return cells, len(masks) * len(self.cfg.seeds)

    def _trait_grid(self, conditions: list[tuple[str, Any]]) -> tuple[list[dict], int]:
        samples, fp = load_data(self.cfg.data)
        cells = []
        for trait in self.cfg.traits:
            subset = ds.filter_by_trait(samples, **TRAITS[trait])
            sub_ids = set(ds.participants_of(subset))
            complement = [s for s in samples if s.participant_id not in sub_ids]
            if not complement:
                raise HarnessError(f"trait {trait}: every participant has the trait, nothing to train the base on")
            for seed in self.cfg.seeds:
                adapt_ids, test_ids = _split_participants(sorted(sub_ids), self.cfg.test_fraction, seed)
                stream, test = _select(subset, adapt_ids), _select(subset, test_ids)
                base, parent = self.base(fp, complement, seed)
                for label, K in conditions:
                    self.log(f"{self.cfg.kind} trait={trait} seed={seed} condition={label}")
                    if label == "base_only":
                        params = base
                    elif label == "transfer":
                        params = self.adapted("transfer", parent, fp, complement, base, stream, 0, seed)
                    elif label == "scratch":
                        params = self.adapted("scratch", parent, fp, complement, base, stream, None, seed)
                    else:
                        params = self.adapted("icregress", parent, fp, complement, base, stream, K, seed)
                    r = mt.evaluate(test, params)
                    cells.append({"trait": trait, "condition": label, "K": K, "seed": seed,
                                  "values": _values(r)})
        return cells, len(self.cfg.traits) * len(conditions) * len(self.cfg.seeds)

    def k_sweep(self):
        conds = [("base_only", None), ("transfer", 0)] + [(k_label(K), K) for K in self.cfg.k_list()]
        return self._trait_grid(conds)

    def trait_adapt(self):
        conds = [("base_only", None), ("transfer", 0), ("icregress", self.cfg.K), ("scratch", None)]
        return self._trait_grid(conds)

    def personalization(self):
        samples, fp = load_data(self.cfg.data)
        K = self.cfg.K
        conds = ("base_only", "transfer", "icregress", "scratch")
        cells = []
        expected = 0
        for seed in self.cfg.seeds:
            train_ids, test_ids = _split_participants(ds.participants_of(samples), self.cfg.test_fraction, seed)
            if len(test_ids) < 2:
                raise HarnessError("personalization needs at least two test participants")
            train = _select(samples, train_ids)
            base, parent = self.base(fp, train, seed)
            chosen = test_ids[: self.cfg.max_participants] if self.cfg.max_participants else test_ids
            for pid in chosen:
                stream, held = ds.halves(_select(samples, [pid]))
                others = _select(samples, [q for q in test_ids if q != pid])
                for label in conds:
                    self.log(f"personalization seed={seed} participant={pid} condition={label}")
                    if label == "base_only":
                        params = base
                    else:
                        params = self.adapted(label, parent, fp, train, base, stream,
                                              K if label == "icregress" else 0, seed)
                    own, other = mt.evaluate(held, params), mt.evaluate(others, params)
                    for target, r in (("adapted", own), ("other", other)):
                        cells.append({"condition": label, "participant": pid, "evaluated_on": target,
                                      "seed": seed, "values": _values(r)})
                expected += 2 * len(conds)
        return cells, expected

    def forgetting(self):
        old, fp_old = load_data(self.cfg.data)
        new, fp_new = load_data(self.cfg.new_data or drifted_spec(self.cfg.data))
        fp = _digest([fp_old, fp_new])
        conds = ("base_only", "transfer", "icregress", "scratch")
        cells = []
        for seed in self.cfg.seeds:
            old_train_ids, old_test_ids = _split_participants(ds.participants_of(old), self.cfg.test_fraction, seed)
            new_train_ids, new_test_ids = _split_participants(ds.participants_of(new), self.cfg.test_fraction, seed)
            old_train = _select(old, old_train_ids)
            stream = _select(new, new_train_ids)
            tests = {"old": _select(old, old_test_ids), "new": _select(new, new_test_ids)}
            base, parent = self.base(fp_old, old_train, seed)
            for label in conds:
                self.log(f"forgetting seed={seed} condition={label}")
                if label == "base_only":
                    params = base
                else:
                    params = self.adapted(label, parent, fp, old_train, base, stream,
                                          self.cfg.K if label == "icregress" else 0, seed)
                for pop, test in tests.items():
                    r = mt.evaluate(test, params)
                    cells.append({"condition": label, "population": pop, "seed": seed, "values": _values(r)})
        return cells, len(conds) * 2 * len(self.cfg.seeds)


SUMMARY_KEYS = {
    "ablation": ("condition",),
    "k_sweep": ("trait", "condition"),
    "trait_adapt": ("trait", "condition"),
    "personalization": ("condition", "evaluated_on"),
    "forgetting": ("condition", "population"),
}


def run_experiment(
    config: ExperimentConfig,
    resume: bool = False,
    log: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Run every (condition, seed) cell of ``config`` and assemble the report.

    With ``resume`` the checkpoint directory must already exist; trained
    models found there are reused instead of retrained.
    """
    runner = _Runner(config, resume, log)
    try:
        cells, expected = getattr(runner, config.kind)()
    except (ds.DatasetError, inc.AdaptationError, reg.RegressorError, mt.MetricError) as e:
        raise HarnessError(f"{config.kind}: {e}") from e
    return ExperimentReport(config.to_dict(), cells, _summarize(cells, SUMMARY_KEYS[config.kind]), expected)


# --------------------------------------------------------------------------
# plot data


def _csv_bytes(header: Sequence[str], rows: list[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue().encode()


def _long_rows(cells, keys):
    return [[c[k] for k in keys] + [m, c["seed"], c["values"][m]] for c in cells for m in REPORTED]


def plot_tables(report: ExperimentReport) -> dict[str, tuple[list[str], list[list]]]:
    kind = report.kind
    cells = report.cells
    if kind == "ablation":
        return {"ablation.csv": (["condition", "metric", "seed", "value"], _long_rows(cells, ["condition"]))}
    if kind == "k_sweep":
        rows = [[c["trait"], c["condition"], c["seed"], c["values"]["SegObj"], c["values"]["MAE"]] for c in cells]
        return {"k_sweep.csv": (["trait", "K", "seed", "segobj_acc", "mae"], rows)}
    if kind == "trait_adapt":
        return {"trait_adapt.csv": (["trait", "condition", "metric", "seed", "value"],
                                    _long_rows(cells, ["trait", "condition"]))}
    if kind == "personalization":
        # participant-level cells, plus the per-seed mean over participants
        agg: dict[tuple, list[dict]] = {}
        for c in cells:
            agg.setdefault((c["condition"], c["evaluated_on"], c["seed"]), []).append(c)
        rows = []
        for (cond, on, seed), group in agg.items():
            for m in REPORTED:
                rows.append([cond, on, m, seed, float(np.mean([g["values"][m] for g in group]))])
        return {
            "personalization.csv": (["condition", "evaluated_on", "metric", "seed", "value"], rows),
            "personalization_participants.csv": (
                ["condition", "participant", "evaluated_on", "metric", "seed", "value"],
                _long_rows(cells, ["condition", "participant", "evaluated_on"])),
        }
    if kind == "forgetting":
        return {"forgetting.csv": (["condition", "population", "metric", "seed", "value"],
                                   _long_rows(cells, ["condition", "population"]))}
    raise HarnessError(f"invalid kind {kind!r}")


def emit_plotdata(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write one tidy CSV per figure analogue; returns the paths written."""
    if not report.complete():
        raise HarnessError(f"incomplete report: {len(report.cells)} of {report.expected_cells} cells")
    out = Path(out_dir)
    paths = []
    for name, (header, rows) in plot_tables(report).items():
        p = out / name
        _atomic_write(p, _csv_bytes(header, rows))
        paths.append(p)
    return paths


def personalization_gaps(report: ExperimentReport, metric: str = "SegObj") -> dict[str, list[float]]:
    """Per-seed mean of (adapted - other) accuracy, by condition."""
    if report.kind != "personalization":
        raise HarnessError("gaps are defined for personalization reports only")
    out: dict[str, list[float]] = {}
    for cond in ("base_only", "transfer", "icregress", "scratch"):
        per_seed = []
        for seed in report.config["seeds"]:
            own = report.values(metric, condition=cond, seed=seed, evaluated_on="adapted")
            other = report.values(metric, condition=cond, seed=seed, evaluated_on="other")
            per_seed.append(float(np.mean(own) - np.mean(other)))
        out[cond] = per_seed
    return out


def execute(config: ExperimentConfig, resume: bool = False, log=None) -> ExperimentReport:
    """run_experiment, then persist report.json and the plot CSVs under out_dir."""
    report = run_experiment(config, resume, log)
    out = Path(config.out_dir)
    report.plot_csvs = sorted(p.name for p in emit_plotdata(report, out))
    report.save(out / "report.json")
    return report

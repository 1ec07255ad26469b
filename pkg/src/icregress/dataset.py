"""Synthetic multimodal referencing data, feature windows and participant splits.

A segment is a 20 Hz stream of pointing, gaze and head direction vectors plus
a binary speech trigger. Vectors are unit 2-vectors ``(x, z)`` in the vehicle
frame (``x`` right, ``z`` forward), so ``atan2(x, z)`` is the driver-relative
angle used by :mod:`icregress.geometry`.

The noise model below is a set of declared generator parameters; it is not a
claim about how people actually point.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import geometry as geo

FRAME_RATE_HZ = 20
FEATURE_RATE_HZ = 5
WINDOW_HALF_S = 2.0
N_TIMESTEPS = 20
MODALITIES = ("Pnt", "GazeHead", "Gaze", "Head")
CHANNELS = ("Pnt.x", "Pnt.z", "GazeHead.x", "GazeHead.z", "Gaze.x", "Gaze.z", "Head.x", "Head.z")
N_CHANNELS = len(CHANNELS)
SEGMENTS_PER_PARTICIPANT = 96
AMATEUR_MAX_YEARS = 4.0
EXPERT_MIN_YEARS = 6.0

_STRIDE = FRAME_RATE_HZ // FEATURE_RATE_HZ


class DatasetError(ValueError):
    pass


class OnsetError(DatasetError):
    pass


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class DriverProfile:
    participant_id: str
    handedness: str
    experience_years: float
    pointing_bias_deg: float
    pointing_noise_std_deg: float
    gaze_noise_std_deg: float
    head_attenuation: float
    glance_rate: float
    speech_available: bool
    onset_jitter_std_s: float

    def __post_init__(self):
        if self.handedness not in ("left", "right"):
            raise DatasetError("handedness must be 'left' or 'right'")
        if min(self.pointing_noise_std_deg, self.gaze_noise_std_deg, self.onset_jitter_std_s) < 0:
            raise DatasetError("noise standard deviations must be non-negative")
        if not 0.0 <= self.head_attenuation <= 1.0:
            raise DatasetError("head_attenuation must lie in [0, 1]")
        if self.experience_years < 0:
            raise DatasetError("experience_years must be non-negative")

    @property
    def experience_class(self) -> str:
        return experience_class(self.experience_years)


def experience_class(years: float) -> str:
    if years < AMATEUR_MAX_YEARS:
        return "amateur"
    if years > EXPERT_MIN_YEARS:
        return "expert"
    return "intermediate"


@dataclass(frozen=True)
class ModalityFrame:
    t: float
    pointing: tuple[float, float]
    gaze: tuple[float, float]
    head: tuple[float, float]
    speech_flag: bool


@dataclass
class SegmentFrames:
    """Struct-of-arrays view of a 20 Hz frame sequence."""

    t: np.ndarray
    pointing: np.ndarray
    gaze: np.ndarray
    head: np.ndarray
    speech: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ModalityFrame:
        return ModalityFrame(
            float(self.t[i]),
            tuple(self.pointing[i]),
            tuple(self.gaze[i]),
            tuple(self.head[i]),
            bool(self.speech[i]),
        )

    @classmethod
    def from_frames(cls, frames: Sequence[ModalityFrame]) -> "SegmentFrames":
        return cls(
            t=np.array([f.t for f in frames], dtype=float),
            pointing=np.array([f.pointing for f in frames], dtype=float).reshape(-1, 2),
            gaze=np.array([f.gaze for f in frames], dtype=float).reshape(-1, 2),
            head=np.array([f.head for f in frames], dtype=float).reshape(-1, 2),
            speech=np.array([f.speech_flag for f in frames], dtype=bool),
        )


@dataclass
class FeatureWindow:
    values: np.ndarray  # (8, 20), channel order CHANNELS
    onset_t: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (N_CHANNELS, N_TIMESTEPS):
            raise DatasetError(f"feature window must be {N_CHANNELS}x{N_TIMESTEPS}")


@dataclass
class ReferencingSample:
    participant_id: str
    segment_id: str
    features: FeatureWindow
    truth_angle: float
    scene: geo.Scene
    handedness: str
    experience_years: float
    speech_available: bool

    @property
    def experience_class(self) -> str:
        return experience_class(self.experience_years)

    @property
    def sample_id(self) -> str:
        return f"{self.participant_id}/{self.segment_id}"


@dataclass
class DatasetSplit:
    train: list[ReferencingSample]
    validation: list[ReferencingSample]
    test: list[ReferencingSample]
    manifest: dict[str, list[str]]


@dataclass
class Dataset:
    samples: list[ReferencingSample]
    profiles: dict[str, DriverProfile]

    def participants(self) -> list[str]:
        return sorted(self.profiles)


TARGET_POLICIES = ("uniform", "visible_centroid")


@dataclass(frozen=True)
class GeneratorParams:
    """Population-level knobs of the synthetic driver model."""

    expert_pointing_noise_deg: float = 3.0
    amateur_noise_factor: float = 2.0
    pointing_bias_range_deg: tuple[float, float] = (1.0, 5.0)
    gaze_noise_range_deg: tuple[float, float] = (3.0, 6.0)
    head_attenuation_range: tuple[float, float] = (0.2, 0.5)
    glance_rate_range: tuple[float, float] = (1.0, 3.0)
    left_handed_fraction: float = 0.3
    speech_available_fraction: float = 0.85
    onset_jitter_std_s: float = 0.1
    experience_years_range: tuple[int, int] = (1, 9)
    # added to every participant's pointing bias, e.g. to model a drifted population
    pointing_drift_deg: float = 0.0
    noiseless: bool = False
    # "uniform": any building may be the target; "visible_centroid": only
    # buildings whose centroid ray is not occluded
    target_policy: str = "uniform"

    def __post_init__(self):
        if self.target_policy not in TARGET_POLICIES:
            raise DatasetError(f"unknown target policy {self.target_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorParams":
        d = dict(d)
        for k in ("pointing_bias_range_deg", "gaze_noise_range_deg", "head_attenuation_range",
                  "glance_rate_range", "experience_years_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# --------------------------------------------------------------------------
# scenes and drivers


def generate_scene(
    cluster_size: int = 8,
    offsets: Sequence[float] = geo.LATERAL_OFFSETS,
    target_index: int = 0,
    seed: int | Sequence[int] = 0,
    scene_id: str = "",
    max_retries: int = 20,
) -> geo.Scene:
    """Random building cluster on both sides of a straight road.

    The driver sits at the origin heading along +z. Half of the buildings are
    on each side; 8-clusters leave wide gaps between neighbours and
    16-clusters are packed nearly wall to wall. Buildings are listed left side
    first, each side ordered near to far; ``target_index`` indexes that order.
    """
    if cluster_size not in geo.CLUSTER_SIZES:
        raise DatasetError(f"cluster_size must be one of {geo.CLUSTER_SIZES}")
    if not 0 <= target_index < cluster_size:
        raise DatasetError("target_index must be < cluster_size")
    offsets = tuple(float(o) for o in offsets)
    if not offsets or any(o not in geo.LATERAL_OFFSETS for o in offsets):
        raise DatasetError(f"offsets must be drawn from {geo.LATERAL_OFFSETS}")
    rng = np.random.default_rng(seed)
    if cluster_size == 8:
        gap_range, depth_range = (4.0, 12.0), (8.0, 16.0)
    else:
        gap_range, depth_range = (0.5, 2.0), (6.0, 10.0)
    last_error: Exception | None = None
    for _ in range(max_retries):
        buildings = []
        for side, sign in (("left", -1.0), ("right", 1.0)):
            z = rng.uniform(12.0, 22.0)
            for _k in range(cluster_size // 2):
                depth = rng.uniform(*depth_range)
                width = rng.uniform(8.0, 18.0)
                off = float(offsets[rng.integers(len(offsets))])
                buildings.append(
                    geo.Building(
                        id=f"b{len(buildings):02d}",
                        center_x=sign * (off + width / 2.0),
                        center_z=z + depth / 2.0,
                        width=width,
                        depth=depth,
                        side=side,
                        lateral_offset=off,
                    )
                )
                z += depth + rng.uniform(*gap_range)
        try:
            return geo.Scene(
                buildings=tuple(buildings),
                target_id=buildings[target_index].id,
                onset_pose=geo.Pose2D(0.0, 0.0, 0.0),
                scene_id=scene_id,
            )
        except geo.GeometryError as exc:
            last_error = exc
    raise DatasetError(f"could not place a valid scene after {max_retries} retries: {last_error}")


def make_profile(
    participant_id: str, rng: np.random.Generator, params: GeneratorParams = GeneratorParams()
) -> DriverProfile:
    handedness = "left" if rng.random() < params.left_handed_fraction else "right"
    lo, hi = params.experience_years_range
    years = float(rng.integers(lo, hi + 1))
    cls = experience_class(years)
    factor = {"amateur": params.amateur_noise_factor, "expert": 1.0}.get(
        cls, 0.5 * (1.0 + params.amateur_noise_factor)
    )
    sign = 1.0 if handedness == "right" else -1.0
    bias = sign * rng.uniform(*params.pointing_bias_range_deg) + params.pointing_drift_deg
    profile = DriverProfile(
        participant_id=participant_id,
        handedness=handedness,
        experience_years=years,
        pointing_bias_deg=bias,
        pointing_noise_std_deg=params.expert_pointing_noise_deg * factor,
        gaze_noise_std_deg=rng.uniform(*params.gaze_noise_range_deg),
        head_attenuation=rng.uniform(*params.head_attenuation_range),
        glance_rate=rng.uniform(*params.glance_rate_range),
        speech_available=bool(rng.random() < params.speech_available_fraction),
        onset_jitter_std_s=params.onset_jitter_std_s,
    )
    if params.noiseless:
        profile = replace(
            profile,
            pointing_bias_deg=0.0,
            pointing_noise_std_deg=0.0,
            gaze_noise_std_deg=0.0,
            onset_jitter_std_s=0.0,
            speech_available=True,
        )
    return profile


# --------------------------------------------------------------------------
# segment synthesis


def _unit(angle_deg: np.ndarray) -> np.ndarray:
    a = np.radians(angle_deg)
    return np.stack([np.sin(a), np.cos(a)], axis=-1)


def _ease(t: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """Cosine ramp from 0 at t0 to 1 at t1, clamped outside."""
    s = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * s))


def _pulse(t: np.ndarray, start: float, stop: float, ramp: float) -> np.ndarray:
    return _ease(t, start - ramp, start) * (1.0 - _ease(t, stop, stop + ramp))


def synthesize_segment(
    profile: DriverProfile,
    scene: geo.Scene,
    seed: int | Sequence[int] = 0,
    duration_s: float = 10.0,
) -> tuple[SegmentFrames, float]:
    """One referencing event as 20 Hz modality frames and its true onset time."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * FRAME_RATE_HZ))
    t = np.arange(n) / FRAME_RATE_HZ
    true_onset = round(rng.uniform(4.0, 6.0) * FRAME_RATE_HZ) / FRAME_RATE_HZ
    truth = geo.ground_truth_angle(scene)

    # pointing: rest forward, cosine sweep that lands on the aim at the onset, hold, return
    aim = truth + profile.pointing_bias_deg + rng.normal(0.0, 1.0) * profile.pointing_noise_std_deg
    rise = rng.uniform(0.6, 1.0)
    hold = rng.uniform(1.2, 1.8)
    env = _ease(t, true_onset - rise, true_onset) * (1.0 - _ease(t, true_onset + hold, true_onset + hold + 0.8))
    pointing_angle = aim * env

    # gaze: road ahead with glances at the target, one of them spanning the onset
    gaze_err = rng.normal(0.0, 1.0) * profile.gaze_noise_std_deg
    glance = _pulse(t, true_onset - rng.uniform(0.8, 1.5), true_onset + rng.uniform(0.2, 0.6), 0.1)
    for _ in range(max(int(round(profile.glance_rate)) - 1, 0)):
        start = true_onset + rng.uniform(-2.0, 1.6)
        glance = np.maximum(glance, _pulse(t, start, start + rng.uniform(0.2, 0.5), 0.1))
    jitter = rng.normal(0.0, 0.3, n) * profile.gaze_noise_std_deg
    gaze_angle = glance * (truth + gaze_err) + jitter

    head_noise = rng.normal(0.0, 0.5, n) * profile.gaze_noise_std_deg
    head_angle = profile.head_attenuation * gaze_angle + head_noise

    speech = np.zeros(n, dtype=bool)
    if profile.speech_available:
        jit = float(np.clip(rng.normal(0.0, 1.0) * profile.onset_jitter_std_s, -0.5, 0.5))
        speech[int(round((true_onset + jit) * FRAME_RATE_HZ))] = True

    frames = SegmentFrames(
        t=t,
        pointing=_unit(pointing_angle),
        gaze=_unit(gaze_angle),
        head=_unit(head_angle),
        speech=speech,
    )
    return frames, true_onset


# --------------------------------------------------------------------------
# onset and features


def _as_frames(frames) -> SegmentFrames:
    if isinstance(frames, SegmentFrames):
        return frames
    return SegmentFrames.from_frames(list(frames))


def detect_onset(frames, mode: str = "speech") -> float:
    """Referencing onset from the speech trigger or from the pointing gesture.

    Gesture mode: after the pointing direction first leaves a 10 degree cone
    around the heading, the onset is the first frame whose angular speed drops
    below 5 deg/s.
    """
    fr = _as_frames(frames)
    if len(fr) == 0:
        raise OnsetError("no frames")
    if mode == "speech":
        idx = np.flatnonzero(fr.speech)
        if idx.size == 0:
            raise OnsetError("no speech command")
        return float(fr.t[idx[0]])
    if mode == "gesture":
        angle = np.degrees(np.arctan2(fr.pointing[:, 0], fr.pointing[:, 1]))
        away = np.flatnonzero(np.abs(angle) > 10.0)
        if away.size:
            speed = np.zeros_like(angle)
            speed[1:] = np.abs(np.diff(angle)) / np.diff(fr.t)
            slow = np.flatnonzero(speed[away[0]:] < 5.0)
            if slow.size:
                return float(fr.t[away[0] + slow[0]])
        raise OnsetError("no gesture onset")
    raise DatasetError(f"unknown onset mode {mode!r}")


def channel_mask(modalities: Iterable[str]) -> np.ndarray:
    """Boolean (8,) mask of the channels kept for a modality subset."""
    mods = set(modalities)
    unknown = mods - set(MODALITIES)
    if unknown:
        raise DatasetError(f"unknown modalities {sorted(unknown)}")
    return np.array([c.split(".")[0] in mods for c in CHANNELS])


def extract_features(frames, onset: float, modality_mask: Iterable[str] = MODALITIES) -> FeatureWindow:
    """8x20 window, every 4th frame from onset-2 s; masked channels are zeroed."""
    fr = _as_frames(frames)
    start = int(round((onset - WINDOW_HALF_S) * FRAME_RATE_HZ))
    idx = start + _STRIDE * np.arange(N_TIMESTEPS)
    if start < 0 or idx[-1] >= len(fr):
        raise DatasetError("window out of range")
    gh = fr.gaze[idx] + fr.head[idx]
    norm = np.linalg.norm(gh, axis=1, keepdims=True)
    gh = np.divide(gh, norm, out=np.zeros_like(gh), where=norm > 1e-12)
    values = np.concatenate([fr.pointing[idx], gh, fr.gaze[idx], fr.head[idx]], axis=1).T
    values = values * channel_mask(modality_mask)[:, None]
    return FeatureWindow(values=values, onset_t=float(onset))


def apply_mask(features: np.ndarray, modalities: Iterable[str]) -> np.ndarray:
    """Zero the channels of stacked (N, 8, 20) windows outside ``modalities``."""
    return np.asarray(features) * channel_mask(modalities)[None, :, None]


def stack_features(samples: Sequence[ReferencingSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, N_CHANNELS, N_TIMESTEPS)), np.zeros(0)
    x = np.stack([s.features.values for s in samples])
    y = np.array([s.truth_angle for s in samples], dtype=float)
    return x, y


# --------------------------------------------------------------------------
# population generation


def generate_participant(
    profile: DriverProfile,
    n_segments: int = SEGMENTS_PER_PARTICIPANT,
    seed: int = 0,
    index: int = 0,
    target_policy: str = "uniform",
) -> list[ReferencingSample]:
    if target_policy not in TARGET_POLICIES:
        raise DatasetError(f"unknown target policy {target_policy!r}")
    samples = []
    for s in range(n_segments):
        scene_seed = (seed, index, s, 0)
        cluster = geo.CLUSTER_SIZES[s % 2]
        target = int(np.random.default_rng(scene_seed).integers(cluster))
        sid = f"{profile.participant_id}-s{s:03d}"
        scene = generate_scene(cluster, target_index=target, seed=scene_seed, scene_id=sid)
        if target_policy == "visible_centroid":
            scene = _retarget_visible(scene, np.random.default_rng((seed, index, s, 2)))
        frames, true_onset = synthesize_segment(profile, scene, seed=(seed, index, s, 1))
        try:
            onset = detect_onset(frames, "speech")
        except OnsetError:
            try:
                onset = detect_onset(frames, "gesture")
            except OnsetError:
                onset = true_onset
        samples.append(
            ReferencingSample(
                participant_id=profile.participant_id,
                segment_id=f"s{s:03d}",
                features=extract_features(frames, onset),
                truth_angle=geo.ground_truth_angle(scene),
                scene=scene,
                handedness=profile.handedness,
                experience_years=profile.experience_years,
                speech_available=profile.speech_available,
            )
        )
    return samples


def _retarget_visible(scene: geo.Scene, rng: np.random.Generator) -> geo.Scene:
    """Keep the target if its centroid is visible, else pick a random building that is."""
    def visible(bid):
        probe = replace(scene, target_id=bid)
        return geo.in_any(geo.visible_intervals(scene, bid), geo.ground_truth_angle(probe))

    if visible(scene.target_id):
        return scene
    for i in rng.permutation(len(scene.buildings)):
        bid = scene.buildings[i].id
        if visible(bid):
            return replace(scene, target_id=bid)
    raise DatasetError(f"scene {scene.scene_id}: no building has a visible centroid")


def generate_dataset(
    n_participants: int = 56,
    n_segments: int = SEGMENTS_PER_PARTICIPANT,
    seed: int = 0,
    params: GeneratorParams = GeneratorParams(),
    prefix: str = "p",
) -> Dataset:
    """Independent seeded stream per participant; deterministic for ``seed``."""
    profiles: dict[str, DriverProfile] = {}
    samples: list[ReferencingSample] = []
    for i in range(n_participants):
        pid = f"{prefix}{i:03d}"
        profile = make_profile(pid, np.random.default_rng((seed, i, 7)), params)
        profiles[pid] = profile
        samples.extend(generate_participant(profile, n_segments, seed=seed, index=i,
                                            target_policy=params.target_policy))
    return Dataset(samples=samples, profiles=profiles)


# --------------------------------------------------------------------------
# splits and trait filters


def _group(samples: Sequence[ReferencingSample]) -> dict[str, list[ReferencingSample]]:
    groups: dict[str, list[ReferencingSample]] = {}
    for s in samples:
        groups.setdefault(s.participant_id, []).append(s)
    return groups


def split_dataset(
    samples: Sequence[ReferencingSample],
    val_fraction: float = 0.10,
    test_fraction: float = 0.10,
    balance_traits: bool = False,
    seed: int = 0,
) -> DatasetSplit:
    """Participant-level train/validation/test split.

    With ``balance_traits`` the test participants are drawn half amateur and
    half expert as far as the pool allows, topped up from the rest.
    """
    groups = _group(samples)
    pids = sorted(groups)
    n = len(pids)
    if n < 10:
        raise DatasetError(f"need at least 10 participants, got {n}")
    n_test = int(round(test_fraction * n))
    n_val = int(round(val_fraction * n))
    if n_test < 1 or n_val < 0 or n_test + n_val >= n:
        raise DatasetError("too few participants for the requested fractions")
    rng = np.random.default_rng(seed)
    order = [pids[i] for i in rng.permutation(n)]
    if balance_traits:
        cls = {p: groups[p][0].experience_class for p in pids}
        amateurs = [p for p in order if cls[p] == "amateur"]
        experts = [p for p in order if cls[p] == "expert"]
        half = n_test // 2
        n_am = min(half, len(amateurs))
        n_ex = min(n_test - n_am, len(experts))
        n_am = min(n_test - n_ex, len(amateurs))
        test = amateurs[:n_am] + experts[:n_ex]
        rest = [p for p in order if p not in test]
        test += rest[: n_test - len(test)]
        rest = [p for p in order if p not in test]
    else:
        test, rest = order[:n_test], order[n_test:]
    val, train = rest[:n_val], rest[n_val:]
    manifest = {"train": sorted(train), "validation": sorted(val), "test": sorted(test)}

    def pick(ids):
        keep = set(ids)
        return [s for s in samples if s.participant_id in keep]

    return DatasetSplit(pick(train), pick(val), pick(test), manifest)


def filter_by_trait(
    samples: Iterable[ReferencingSample],
    handedness: str | None = None,
    experience: str | None = None,
    speech_available: bool | None = None,
) -> list[ReferencingSample]:
    """Samples matching every given trait; ``experience`` is 'amateur' or 'expert'."""
    if experience not in (None, "amateur", "expert"):
        raise DatasetError("experience must be 'amateur' or 'expert'")
    out = []
    for s in samples:
        if handedness is not None and s.handedness != handedness:
            continue
        if experience is not None and s.experience_class != experience:
            continue
        if speech_available is not None and s.speech_available != speech_available:
            continue
        out.append(s)
    return out


def participants_of(samples: Iterable[ReferencingSample]) -> list[str]:
    return sorted({s.participant_id for s in samples})


def halves(samples: Sequence[ReferencingSample]) -> tuple[list, list]:
    """First and second half of one participant's segments, in segment order."""
    ordered = sorted(samples, key=lambda s: s.segment_id)
    k = len(ordered) // 2
    return ordered[:k], ordered[k:]


# --------------------------------------------------------------------------
# files


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write ``samples.jsonl``, the ``scenes.json`` sidecar and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scenes = {}
    with open(d / "samples.jsonl", "w") as fh:
        for s in dataset.samples:
            scene_id = s.scene.scene_id or s.sample_id
            scenes[scene_id] = s.scene.to_dict()
            row = {
                "participant_id": s.participant_id,
                "segment_id": s.segment_id,
                "scene_id": scene_id,
                "truth_angle": s.truth_angle,
                "onset_t": s.features.onset_t,
                "features": s.features.values.tolist(),
                "handedness": s.handedness,
                "experience_years": s.experience_years,
                "experience_class": s.experience_class,
                "speech_available": s.speech_available,
            }
            fh.write(json.dumps(row) + "\n")
    (d / "scenes.json").write_text(json.dumps(scenes, sort_keys=True))
    manifest = {pid: asdict(p) for pid, p in sorted(dataset.profiles.items())}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(directory: str | Path) -> Dataset:
    d = Path(directory)
    scenes = {
        sid: geo.Scene.from_dict(sd, scene_id=sid)
        for sid, sd in json.loads((d / "scenes.json").read_text()).items()
    }
    profiles = {
        pid: DriverProfile(**pd) for pid, pd in json.loads((d / "manifest.json").read_text()).items()
    }
    samples = []
    with open(d / "samples.jsonl") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            scene = scenes[r["scene_id"]]
            truth = float(r["truth_angle"])
            if abs(truth - geo.ground_truth_angle(scene)) > 1e-9:
                raise DatasetError(f"{r['participant_id']}/{r['segment_id']}: truth angle does not match scene")
            samples.append(
                ReferencingSample(
                    participant_id=r["participant_id"],
                    segment_id=r["segment_id"],
                    features=FeatureWindow(np.array(r["features"], dtype=float), float(r["onset_t"])),
                    truth_angle=truth,
                    scene=scene,
                    handedness=r["handedness"],
                    experience_years=float(r["experience_years"]),
                    speech_available=bool(r["speech_available"]),
                )
            )
    return Dataset(samples=samples, profiles=profiles)


def export_csv(samples: Iterable[ReferencingSample], path: str | Path) -> None:
    """Flat rows: ids, 160 features (channel-major) and the truth angle."""
    header = ["participant_id", "segment_id"]
    header += [f"{c}[{k}]" for c in CHANNELS for k in range(N_TIMESTEPS)]
    header.append("truth_angle")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in samples:
            w.writerow([s.participant_id, s.segment_id, *map(repr, s.features.values.ravel().tolist()),
                        repr(s.truth_angle)])

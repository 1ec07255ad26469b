"""Horizontal scene geometry: driver-relative angles, building extents, occlusion.

Angles are in degrees in the driver frame: 0 is the direction of travel and
positive angles are to the driver's right. World coordinates use ``x`` for the
lateral axis and ``z`` for the forward axis, so a heading of 0 points along +z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

METRICS = ("MRDE", "SegObj", "MinDT")
LATERAL_OFFSETS = (20.0, 30.0, 40.0)
CLUSTER_SIZES = (8, 16)
FIELD_OF_VIEW_DEG = 180.0


class GeometryError(ValueError):
    pass


def normalize_angle(deg: float) -> float:
    """Wrap an angle into (-180, 180]."""
    a = math.fmod(deg, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


@dataclass(frozen=True)
class Pose2D:
    x: float
    z: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))


@dataclass(frozen=True)
class Building:
    id: str
    center_x: float
    center_z: float
    width: float
    depth: float
    side: str
    lateral_offset: float

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise GeometryError(f"building {self.id}: width and depth must be positive")
        if self.side not in ("left", "right"):
            raise GeometryError(f"building {self.id}: side must be 'left' or 'right'")
        if float(self.lateral_offset) not in LATERAL_OFFSETS:
            raise GeometryError(
                f"building {self.id}: lateral_offset must be one of {LATERAL_OFFSETS}"
            )

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, z_min, z_max) of the footprint."""
        hw, hd = self.width / 2.0, self.depth / 2.0
        return (self.center_x - hw, self.center_x + hw, self.center_z - hd, self.center_z + hd)

    def corners(self) -> list[tuple[float, float]]:
        x0, x1, z0, z1 = self.bounds
        return [(x0, z0), (x1, z0), (x1, z1), (x0, z1)]


@dataclass(frozen=True)
class AngularInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (-180.0 < self.lo <= self.hi <= 180.0):
            raise GeometryError(f"invalid angular interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, angle: float) -> bool:
        return self.lo <= angle <= self.hi


@dataclass(frozen=True)
class Scene:
    buildings: tuple[Building, ...]
    target_id: str
    onset_pose: Pose2D
    scene_id: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        validate_scene(self)

    def building(self, building_id: str) -> Building:
        for b in self.buildings:
            if b.id == building_id:
                return b
        raise GeometryError(f"unknown building id {building_id!r}")

    @property
    def target(self) -> Building:
        return self.building(self.target_id)

    # JSON ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "onset_pose": {
                "x": self.onset_pose.x,
                "z": self.onset_pose.z,
                "heading": self.onset_pose.heading,
            },
            "buildings": [
                {
                    "id": b.id,
                    "center_x": b.center_x,
                    "center_z": b.center_z,
                    "width": b.width,
                    "depth": b.depth,
                    "side": b.side,
                    "lateral_offset": b.lateral_offset,
                }
                for b in self.buildings
            ],
            "target_id": self.target_id,
        }

    @classmethod
    def from_dict(cls, d: dict, scene_id: str = "") -> "Scene":
        pose = Pose2D(**{k: float(v) for k, v in d["onset_pose"].items()})
        buildings = tuple(
            Building(
                id=str(b["id"]),
                center_x=float(b["center_x"]),
                center_z=float(b["center_z"]),
                width=float(b["width"]),
                depth=float(b["depth"]),
                side=b["side"],
                lateral_offset=float(b["lateral_offset"]),
            )
            for b in d["buildings"]
        )
        return cls(buildings=buildings, target_id=str(d["target_id"]), onset_pose=pose,
                   scene_id=scene_id or d.get("scene_id", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))


def _overlap(a: Building, b: Building) -> bool:
    ax0, ax1, az0, az1 = a.bounds
    bx0, bx1, bz0, bz1 = b.bounds
    return ax0 < bx1 and bx0 < ax1 and az0 < bz1 and bz0 < az1


def validate_scene(scene: Scene) -> None:
    n = len(scene.buildings)
    if n not in CLUSTER_SIZES:
        raise GeometryError(f"cluster size must be one of {CLUSTER_SIZES}, got {n}")
    ids = [b.id for b in scene.buildings]
    if len(set(ids)) != n:
        raise GeometryError("building ids must be unique")
    if ids.count(scene.target_id) != 1:
        raise GeometryError(f"missing target {scene.target_id!r}")
    p = scene.onset_pose
    for i, a in enumerate(scene.buildings):
        x0, x1, z0, z1 = a.bounds
        if x0 <= p.x <= x1 and z0 <= p.z <= z1:
            raise GeometryError(f"building {a.id} contains the driver")
        angles = [signed_angle(p, cx, cz) for cx, cz in a.corners()]
        # a footprint not containing the viewer subtends < 180 deg; a larger
        # corner spread means it straddles the +-180 cut
        if max(angles) - min(angles) >= 180.0:
            raise GeometryError(f"building {a.id} crosses the rear +-180 deg cut")
        for b in scene.buildings[i + 1:]:
            if _overlap(a, b):
                raise GeometryError(f"buildings {a.id} and {b.id} overlap")


def signed_angle(pose: Pose2D, px: float, pz: float) -> float:
    """Signed angle from the heading to the ray pose->point, in (-180, 180]."""
    dx, dz = px - pose.x, pz - pose.z
    if dx == 0.0 and dz == 0.0:
        raise GeometryError("coincident point")
    bearing = math.degrees(math.atan2(dx, dz))
    return normalize_angle(bearing - pose.heading)


def ground_truth_angle(scene: Scene) -> float:
    t = scene.target
    return signed_angle(scene.onset_pose, t.center_x, t.center_z)


def geometric_interval(scene: Scene, building_id: str) -> AngularInterval:
    b = scene.building(building_id)
    angles = [signed_angle(scene.onset_pose, cx, cz) for cx, cz in b.corners()]
    return AngularInterval(min(angles), max(angles))


def ray_hit_distances(scene: Scene, angles: np.ndarray) -> np.ndarray:
    """Entry distance of the ray at each driver-relative angle into each building.

    Returns an array of shape (len(angles), n_buildings) with ``inf`` where the
    ray misses. Slab test against the axis-aligned footprints.
    """
    p = scene.onset_pose
    bearing = np.radians(np.asarray(angles, dtype=float) + p.heading)
    dx, dz = np.sin(bearing)[:, None], np.cos(bearing)[:, None]
    b = np.array([bd.bounds for bd in scene.buildings])
    x0, x1, z0, z1 = (b[:, i][None, :] - (p.x if i < 2 else p.z) for i in range(4))
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0, tx1 = x0 / dx, x1 / dx
        tz0, tz1 = z0 / dz, z1 / dz
    # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
    par_x = dx == 0.0
    par_z = dz == 0.0
    in_x = (x0 <= 0.0) & (0.0 <= x1)
    in_z = (z0 <= 0.0) & (0.0 <= z1)
    txn = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(tx0, tx1))
    txf = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(tx0, tx1))
    tzn = np.where(par_z, np.where(in_z, -np.inf, np.inf), np.minimum(tz0, tz1))
    tzf = np.where(par_z, np.where(in_z, np.inf, -np.inf), np.maximum(tz0, tz1))
    t_near = np.maximum(txn, tzn)
    t_far = np.minimum(txf, tzf)
    hit = (t_far >= t_near) & (t_far >= 0.0)
    return np.where(hit, np.maximum(t_near, 0.0), np.inf)


@dataclass(frozen=True)
class SceneRegions:
    """Per-scene angular partition shared by all metric computations."""

    geometric: tuple[AngularInterval, ...]
    visible: tuple[tuple[AngularInterval, ...], ...]
    # all visible intervals in angular order, as (lo, hi, building index)
    ordered: tuple[tuple[float, float, int], ...]

    @property
    def hull(self) -> tuple[float, float] | None:
        if not self.ordered:
            return None
        return self.ordered[0][0], self.ordered[-1][1]


def _sweep(scene: Scene) -> SceneRegions:
    n = len(scene.buildings)
    geometric = tuple(geometric_interval(scene, b.id) for b in scene.buildings)
    events = np.unique(np.array([[g.lo, g.hi] for g in geometric]).ravel())
    owners: list[int] = []
    if len(events) > 1:
        mids = 0.5 * (events[:-1] + events[1:])
        dist = ray_hit_distances(scene, mids)
        nearest = np.argmin(dist, axis=1)  # first index wins ties
        missed = ~np.isfinite(dist[np.arange(len(mids)), nearest])
        owners = np.where(missed, -1, nearest).tolist()
    runs: list[tuple[float, float, int]] = []
    for i, owner in enumerate(owners):
        lo, hi = float(events[i]), float(events[i + 1])
        if owner < 0:
            continue
        if runs and runs[-1][2] == owner and runs[-1][1] == lo:
            runs[-1] = (runs[-1][0], hi, owner)
        else:
            runs.append((lo, hi, owner))
    visible = tuple(
        tuple(AngularInterval(lo, hi) for lo, hi, o in runs if o == k) for k in range(n)
    )
    return SceneRegions(geometric=geometric, visible=visible, ordered=tuple(runs))


@lru_cache(maxsize=8192)
def scene_regions(scene: Scene) -> SceneRegions:
    """Exact occlusion sweep, cached per scene."""
    return _sweep(scene)


def _index(scene: Scene, building_id: str) -> int:
    for i, b in enumerate(scene.buildings):
        if b.id == building_id:
            return i
    raise GeometryError(f"unknown building id {building_id!r}")


def visible_intervals(scene: Scene, building_id: str) -> list[AngularInterval]:
    """Angular sub-intervals where a ray from the driver hits this building first."""
    return list(scene_regions(scene).visible[_index(scene, building_id)])


def mindt_intervals(scene: Scene, building_id: str) -> list[AngularInterval]:
    """Visible intervals extended halfway into the air gaps next to them.

    The extension stops at the covered hull, so the MinDT regions of all
    buildings partition the hull.
    """
    regions = scene_regions(scene)
    k = _index(scene, building_id)
    ordered = regions.ordered
    out = []
    for j, (lo, hi, owner) in enumerate(ordered):
        if owner != k:
            continue
        new_lo = lo if j == 0 else 0.5 * (ordered[j - 1][1] + lo)
        new_hi = hi if j == len(ordered) - 1 else 0.5 * (hi + ordered[j + 1][0])
        out.append(AngularInterval(new_lo, new_hi))
    return out


def nearest_building(scene: Scene, angle: float) -> str | None:
    """Building owning the nearest visible interval, or None outside the hull."""
    regions = scene_regions(scene)
    hull = regions.hull
    if hull is None or angle < hull[0] or angle > hull[1]:
        return None
    best_id, best_d = None, math.inf
    for lo, hi, owner in regions.ordered:
        d = 0.0 if lo <= angle <= hi else min(abs(angle - lo), abs(angle - hi))
        oid = scene.buildings[owner].id
        if d < best_d or (d == best_d and oid < best_id):
            best_id, best_d = oid, d
    return best_id


def total_width(intervals: Iterable[AngularInterval]) -> float:
    return float(sum(iv.width for iv in intervals))


def metric_width(scene: Scene, metric: str) -> float:
    tid = scene.target_id
    if metric == "MRDE":
        return geometric_interval(scene, tid).width
    if metric == "SegObj":
        return total_width(visible_intervals(scene, tid))
    if metric == "MinDT":
        return total_width(mindt_intervals(scene, tid))
    raise GeometryError(f"unknown metric {metric!r}; expected one of {METRICS}")


def chance_level(scene: Scene, metric: str) -> float:
    """Pseudo-random chance in percent: target width under ``metric`` over 180 deg."""
    return 100.0 * metric_width(scene, metric) / FIELD_OF_VIEW_DEG


def in_any(intervals: Sequence[AngularInterval], angle: float) -> bool:
    return any(iv.contains(angle) for iv in intervals)

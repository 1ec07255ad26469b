"""Walk through one referencing scene: what the driver can see, and what counts as a hit.

Run: python3 demos/01_scene_geometry.py
"""

import numpy as np

from icregress import dataset as ds
from icregress import geometry as geo
from icregress import metrics as mt

# a 16-building cluster; the driver sits at the origin looking along +z
scene = ds.generate_scene(16, target_index=5, seed=(0, 1))
truth = geo.ground_truth_angle(scene)
print(f"target {scene.target_id}, centroid bearing {truth:+.2f} deg")

# each building's full angular extent, and the parts not hidden behind nearer buildings
for b in scene.buildings:
    g = geo.geometric_interval(scene, b.id)
    vis = geo.visible_intervals(scene, b.id)
    spans = ", ".join(f"[{iv.lo:+.1f}, {iv.hi:+.1f}]" for iv in vis) or "fully occluded"
    print(f"  {b.id:>4} geometric [{g.lo:+6.1f}, {g.hi:+6.1f}]  visible {spans}")

# three ways to score a predicted angle; here the target's centroid lies behind a
# nearer building, so even the exact bearing misses SegObj
for pred in (truth, truth + 3.0, truth + 12.0):
    hits = {m: mt.hit(scene, pred, m) for m in mt.METRICS}
    print(f"prediction {pred:+.2f}: {hits}, nearest building {geo.nearest_building(scene, pred)}")

# chance: the share of the forward half-plane that would count as a hit
for m in mt.METRICS:
    print(f"chance {m}: {geo.chance_level(scene, m):.2f}%")

# a guesser spraying angles over the forward half-plane lands near those numbers
guesses = np.random.default_rng(0).uniform(-90, 90, 20000)
for m in mt.METRICS:
    rate = 100.0 * np.mean([mt.hit(scene, a, m) for a in guesses])
    print(f"uniform guesser {m}: {rate:.2f}%")

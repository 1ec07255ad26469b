import numpy as np
import pytest

from icregress import dataset as ds
from icregress import geometry as geo


def box(bid, x, z, w, d, offset=20.0):
    return geo.Building(bid, x, z, w, d, "right" if x > 0 else "left", offset)


def far_fillers(n, start=0):
    """Small buildings far behind the driver, out of the way of forward tests."""
    out = []
    for k in range(n):
        x = -70.0 + 20.0 * k
        out.append(box(f"f{start + k:02d}", x, -200.0, 4.0, 4.0))
    return out


def make_scene(front, target_id, heading=0.0):
    """Scene from a few interesting buildings, padded to 8 with far fillers."""
    front = list(front)
    bs = front + far_fillers(8 - len(front))
    return geo.Scene(tuple(bs), target_id, geo.Pose2D(0.0, 0.0, heading))


def random_scenes(n, seed=0):
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(n):
        size = geo.CLUSTER_SIZES[i % 2]
        scenes.append(ds.generate_scene(size, target_index=int(rng.integers(size)), seed=(seed, i)))
    return scenes


@pytest.fixture(scope="session")
def small_dataset():
    return ds.generate_dataset(n_participants=12, n_segments=8, seed=11)


def pytest_terminal_summary(terminalreporter):
    import sys

    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])

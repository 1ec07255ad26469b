import json

import numpy as np
import pytest

from icregress import geometry as geo
from icregress import metrics as mt
from icregress import regressor as reg

from conftest import box, make_scene, random_scenes
from oracles import mae_loop


def test_mae_examples():
    assert mt.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mt.mae([10.0], [13.0]) == 3.0
    with pytest.raises(mt.MetricError):
        mt.mae([1.0], [1.0, 2.0])
    with pytest.raises(mt.MetricError):
        mt.mae([], [])


def test_mae_matches_loop_and_translation():
    rng = np.random.default_rng(0)
    p, t = rng.normal(0, 30, 200), rng.normal(0, 30, 200)
    assert mt.mae(p, t) == pytest.approx(mae_loop(list(p), list(t)), abs=1e-12)
    assert mt.mae(p + 17.0, t + 17.0) == pytest.approx(mt.mae(p, t), abs=1e-12)


def test_hit_center_of_unoccluded_target():
    s = make_scene([box("t", 10.0, 40.0, 8.0, 4.0), box("o", -20.0, 40.0, 8.0, 4.0)], "t")
    truth = geo.ground_truth_angle(s)
    assert all(mt.hit(s, truth, m) for m in mt.METRICS)


def test_hit_in_occluded_part():
    near = box("n", -2.0, 20.0, 2.0, 2.0)
    far = box("f", 0.0, 60.0, 20.0, 4.0)
    s = make_scene([near, far], "f")
    g = geo.geometric_interval(s, "n")
    hidden = 0.5 * (g.lo + g.hi)
    assert mt.hit(s, hidden, "MRDE")
    assert not mt.hit(s, hidden, "SegObj")


def test_hit_boundaries_closed():
    s = make_scene([box("t", 10.0, 40.0, 8.0, 4.0)], "t")
    g = geo.geometric_interval(s, "t")
    assert mt.hit(s, g.lo, "MRDE") and mt.hit(s, g.hi, "SegObj")


def test_hit_unknown_metric():
    s = make_scene([box("t", 10.0, 40.0, 8.0, 4.0)], "t")
    with pytest.raises(mt.MetricError):
        mt.hit(s, 0.0, "Top5")


def test_segobj_implies_others_property():
    rng = np.random.default_rng(1)
    scenes = random_scenes(200, seed=4)
    for k in range(1000):
        s = scenes[k % len(scenes)]
        a = float(rng.uniform(-90, 90))
        if mt.hit(s, a, "SegObj"):
            assert mt.hit(s, a, "MRDE") and mt.hit(s, a, "MinDT")


class _Sample:
    def __init__(self, scene, pid="p", seg="s"):
        self.scene = scene
        self.truth_angle = geo.ground_truth_angle(scene)
        self.sample_id = f"{pid}/{seg}"


def test_evaluate_predictions_perfect_unoccluded():
    scenes = [make_scene([box("t", x, 40.0, 6.0, 4.0)], "t") for x in (-20.0, 0.0, 15.0)]
    samples = [_Sample(s, seg=str(i)) for i, s in enumerate(scenes)]
    r = mt.evaluate_predictions(samples, [s.truth_angle for s in samples])
    assert r.mae_deg == 0.0
    assert all(v == 100.0 for v in r.accuracy.values())
    assert r.chance["MRDE"] == pytest.approx(np.mean([geo.chance_level(s, "MRDE") for s in scenes]))


def test_evaluate_predictions_errors():
    s = _Sample(make_scene([box("t", 0.0, 40.0, 6.0, 4.0)], "t"))
    with pytest.raises(mt.MetricError):
        mt.evaluate_predictions([], [])
    with pytest.raises(mt.MetricError):
        mt.evaluate_predictions([s], [1.0, 2.0])


def test_evaluate_permutation_invariant_and_records(tmp_path):
    scenes = random_scenes(20, seed=6)
    samples = [_Sample(s, seg=str(i)) for i, s in enumerate(scenes)]
    preds = np.random.default_rng(2).uniform(-60, 60, 20)
    r = mt.evaluate_predictions(samples, preds, keep_records=True)
    perm = np.random.default_rng(3).permutation(20)
    r2 = mt.evaluate_predictions([samples[i] for i in perm], preds[perm])
    assert r.accuracy == r2.accuracy and r.mae_deg == pytest.approx(r2.mae_deg, abs=1e-12)
    for rec in r.records:
        assert not rec.hits["SegObj"] or (rec.hits["MRDE"] and rec.hits["MinDT"])
    back = mt.EvalResult.from_dict(json.loads(json.dumps(r.to_dict(with_records=True))))
    assert back.to_json() == r.to_json() and len(back.records) == 20
    r.write_records_csv(tmp_path / "rec.csv")
    lines = (tmp_path / "rec.csv").read_text().splitlines()
    assert len(lines) == 21 and lines[0].startswith("sample_id,predicted,truth,MRDE_hit")


def test_evaluate_with_model(small_dataset):
    desc = reg.ArchitectureDescriptor(conv_channels=(8, 4), fc_widths=(8, 1), dropout_p=0.0)
    p = reg.init_params(desc)
    r = mt.evaluate(small_dataset.samples, p)
    assert r.n_samples == len(small_dataset.samples)
    assert all(0 <= v <= 100 for v in r.accuracy.values())
    masked = mt.evaluate(small_dataset.samples, p, ("Pnt",))
    assert masked.n_samples == r.n_samples
    with pytest.raises(mt.MetricError):
        mt.evaluate([], p)

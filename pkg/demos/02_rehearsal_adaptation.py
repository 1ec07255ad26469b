"""Adapting a trained regressor to drifted drivers, with and without a rehearsal memory.

The base model learns from one population. A second population points with
an extra 10 degree bias. Plain fine-tuning on the newcomers fixes them but
loses some of the old population; keeping the base model's best-fit
training windows in the mix holds on to more of it.

Run: python3 demos/02_rehearsal_adaptation.py   (a few seconds)
"""

from icregress import dataset as ds
from icregress import incremental as inc
from icregress import metrics as mt
from icregress import regressor as reg

arch = reg.ArchitectureDescriptor(dropout_p=0.0)
cfg = reg.TrainConfig(epochs=15, seed=0)

old = ds.generate_dataset(n_participants=16, n_segments=48, seed=3)
new = ds.generate_dataset(n_participants=12, n_segments=48, seed=1003, prefix="q",
                          params=ds.GeneratorParams(pointing_drift_deg=10.0))

# participant-level splits; validation folds are not needed here
o = ds.split_dataset(old.samples, val_fraction=0.0, test_fraction=0.25, seed=0)
n = ds.split_dataset(new.samples, val_fraction=0.0, test_fraction=0.25, seed=0)
old_train, old_test = o.train, o.test
new_train, new_test = n.train, n.test

x, y = ds.stack_features(old_train)
base, memory = inc.train_base(x, y, 1 / 8, cfg, arch, [s.sample_id for s in old_train])
print(f"base trained on {len(y)} windows, memory keeps {len(memory)}")

xn, yn = ds.stack_features(new_train)
models = {
    "base only": base,
    "fine-tune": inc.transfer_baseline([(xn, yn)], base, cfg),
    "rehearsal": inc.adapt(memory, [(xn, yn)], base, cfg),
}

print(f"{'model':<10} {'old MAE':>8} {'new MAE':>8} {'old SegObj':>11} {'new SegObj':>11}")
for name, params in models.items():
    ro, rn = mt.evaluate(old_test, params), mt.evaluate(new_test, params)
    print(f"{name:<10} {ro.mae_deg:8.2f} {rn.mae_deg:8.2f} {ro.accuracy['SegObj']:11.1f} {rn.accuracy['SegObj']:11.1f}")

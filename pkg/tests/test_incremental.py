import numpy as np
import pytest

from icregress import incremental as inc
from icregress import regressor as reg

from oracles import exemplar_oracle

SMALL = reg.ArchitectureDescriptor(conv_channels=(8, 4), fc_widths=(8, 1), dropout_p=0.0)
CFG = reg.TrainConfig(epochs=2, batch_size=8, seed=3)


def data(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 8, 20)), rng.uniform(-40, 40, n)


@pytest.fixture(scope="module")
def base():
    x, y = data(60)
    return x, y, reg.train(x, y, CFG, SMALL)


def test_k_zero_empty(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 0)
    assert len(ex) == 0 and ex.K == 0


def test_k_at_least_n_keeps_all(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 500)
    assert len(ex) == 60
    resid = np.abs(reg.predict(x, p) - y)
    order = [int(i) for i in ex.provenance_ids]
    assert order == exemplar_oracle(reg.predict(x, p), y, 500)
    assert np.all(np.diff(resid[order]) >= 0)


def test_select_matches_oracle(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 7, [f"id{i}" for i in range(60)])
    expect = exemplar_oracle(reg.predict(x, p), y, 7)
    assert ex.provenance_ids == tuple(f"id{i}" for i in expect)
    assert np.array_equal(ex.features, x[expect]) and np.array_equal(ex.targets, y[expect])


def test_ties_keep_original_order():
    x = np.zeros((6, 8, 20))
    y = np.zeros(6)
    p = reg.train(x, y + 1.0, reg.TrainConfig(epochs=1, batch_size=6), SMALL)
    ex = inc.select_exemplars(x, y, p, 4)
    assert ex.provenance_ids == ("0", "1", "2", "3")


def test_k_monotone_prefix(base):
    x, y, p = base
    small = inc.select_exemplars(x, y, p, 5)
    large = inc.select_exemplars(x, y, p, 20)
    assert large.provenance_ids[:5] == small.provenance_ids


def test_descending_mode(base):
    x, y, p = base
    worst = inc.select_exemplars(x, y, p, 5, descending=True)
    resid = np.abs(reg.predict(x, p) - y)
    assert set(int(i) for i in worst.provenance_ids) == set(np.argsort(-resid, kind="stable")[:5].tolist())


def test_select_errors(base):
    x, y, p = base
    with pytest.raises(inc.AdaptationError):
        inc.select_exemplars(x, y[:-1], p, 3)
    with pytest.raises(inc.AdaptationError):
        inc.select_exemplars(x, y, p, -1)
    with pytest.raises(inc.AdaptationError):
        inc.select_exemplars(x, y, p, 3, ["a", "b"])


def test_resolve_k():
    assert inc.resolve_k(1 / 8, 4000) == 500
    assert inc.resolve_k(0.0625, 100) == 6
    assert inc.resolve_k(12, 100) == 12
    assert inc.resolve_k(0, 100) == 0
    with pytest.raises(inc.AdaptationError):
        inc.resolve_k(-0.5, 10)


def test_train_base_returns_memory():
    x, y = data(40, 1)
    p, ex = inc.train_base(x, y, 0.25, CFG, SMALL, [f"s{i}" for i in range(40)])
    assert len(ex) == 10 and ex.K == 10
    assert ex == ex  # frozen dataclass
    assert ex.provenance_ids == inc.select_exemplars(x, y, p, 10, [f"s{i}" for i in range(40)]).provenance_ids


def test_adapt_empty_equals_transfer(base):
    x, y, p = base
    xn, yn = data(24, 5)
    a = inc.adapt(inc.ExemplarSet.empty(), [(xn, yn)], p, CFG)
    b = inc.transfer_baseline([(xn, yn)], p, CFG)
    assert reg.serialize_params(a) == reg.serialize_params(b)


def test_adapt_batching_invariant(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 10)
    xn, yn = data(24, 6)
    whole = inc.adapt(ex, [(xn, yn)], p, CFG)
    pieces = inc.adapt(ex, ((xn[i:i + 5], yn[i:i + 5]) for i in range(0, 24, 5)), p, CFG)
    assert whole == pieces


def test_adapt_concatenates_memory_first(base, monkeypatch):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 4)
    xn, yn = data(6, 7)
    seen = {}

    def fake_finetune(fx, fy, init, config):
        seen["x"], seen["y"] = fx, fy
        return init

    monkeypatch.setattr(reg, "finetune", fake_finetune)
    inc.adapt(ex, [(xn[:3], yn[:3]), (xn[3:], yn[3:])], p, CFG)
    assert np.array_equal(seen["y"], np.concatenate([ex.targets, yn]))
    assert np.array_equal(seen["x"], np.concatenate([ex.features, xn]))


def test_adapt_without_base_trains_from_scratch(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 8)
    xn, yn = data(16, 8)
    scratch = inc.adapt(ex, [(xn, yn)], None, CFG, SMALL)
    direct = reg.train(np.concatenate([ex.features, xn]), np.concatenate([ex.targets, yn]), CFG, SMALL)
    assert scratch == direct


def test_adapt_errors(base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 4)
    with pytest.raises(inc.AdaptationError, match="empty new data"):
        inc.adapt(ex, [], p, CFG)
    with pytest.raises(inc.AdaptationError):
        inc.adapt(ex, [(np.zeros((3, 8, 20)), np.zeros(2))], p, CFG)
    with pytest.raises(inc.AdaptationError):
        inc.adapt(ex, [(np.zeros((3, 8, 20)), np.zeros(3))], p, CFG, reg.ArchitectureDescriptor())


def test_transfer_zero_epochs_returns_base(base):
    x, y, p = base
    q = inc.transfer_baseline([(x[:5], y[:5])], p, reg.TrainConfig(epochs=0))
    assert q == p


def test_adapt_does_not_mutate_inputs(base):
    x, y, p = base
    before = reg.serialize_params(p)
    ex = inc.select_exemplars(x, y, p, 4)
    feats = ex.features.copy()
    inc.adapt(ex, [(x[:8], y[:8])], p, CFG)
    assert reg.serialize_params(p) == before
    assert np.array_equal(ex.features, feats)


def test_exemplar_set_persistence(tmp_path, base):
    x, y, p = base
    ex = inc.select_exemplars(x, y, p, 6, [f"p{i}/s" for i in range(60)])
    ex.save(tmp_path / "ex.jsonl")
    back = inc.ExemplarSet.load(tmp_path / "ex.jsonl")
    assert back.provenance_ids == ex.provenance_ids and back.K == 6
    assert np.array_equal(back.features, ex.features) and np.array_equal(back.targets, ex.targets)
    inc.ExemplarSet.empty().save(tmp_path / "none.jsonl")
    assert len(inc.ExemplarSet.load(tmp_path / "none.jsonl")) == 0


def test_exemplar_set_validation():
    with pytest.raises(inc.AdaptationError):
        inc.ExemplarSet(np.zeros((2, 8, 20)), np.zeros(2), ("a", "a"), 2)
    with pytest.raises(inc.AdaptationError):
        inc.ExemplarSet(np.zeros((2, 8, 20)), np.zeros(3), ("a", "b"), 2)


def test_adaptation_config_and_rounds(base):
    x, y, p = base
    with pytest.raises(inc.AdaptationError):
        inc.AdaptationConfig(K=-1)
    with pytest.raises(inc.AdaptationError):
        inc.AdaptationConfig(variant="distill")
    ex = inc.select_exemplars(x, y, p, 5)
    xn, yn = data(10, 9)
    cfg = inc.AdaptationConfig(K=5, train=CFG)
    q, kept = inc.adapt_round(ex, [(xn, yn)], p, cfg)
    assert kept is ex
    q2, fresh = inc.adapt_round(ex, [(xn, yn)], p, inc.AdaptationConfig(K=5, train=CFG, refresh_exemplars=True),
                                [f"n{i}" for i in range(10)])
    assert len(fresh) == 5 and q2 == q
    s, _ = inc.adapt_round(ex, [(xn, yn)], p, inc.AdaptationConfig(K=5, train=CFG, variant="scratch"))
    assert s != q

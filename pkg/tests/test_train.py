import numpy as np
import pytest

from cotar import tensor as tt
from cotar.data import GeneratorSpec, generate, split_by_subject
from cotar.model import TeChConfig, build_model
from cotar.train import (AdamState, TrainConfig, TrainingDiverged, adam_step, evaluate,
                         predict_proba, train, train_seeds, write_log_csv, LOG_FIELDS)


@pytest.fixture(scope="module")
def splits():
    ds = generate(GeneratorSpec(subjects=10, trials_per_subject=4, T=16, C=3))
    return split_by_subject(ds)


def small_model(seed=0, kind="tech"):
    return build_model(TeChConfig(T=16, C=3, K=2, D=8, L=4, M=1, N=1), seed, kind)


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step exactly lr * sign(g) (up to eps)
    p = tt.Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    adam_step(AdamState(lr=0.1), [p], [np.array([0.5, -4.0, 1e-3])])
    assert np.allclose(p.data, [0.9, -1.9, 2.9], atol=1e-6)


def test_adam_matches_scalar_recurrence():
    p = tt.Tensor(np.array([0.0]), requires_grad=True)
    st = AdamState(lr=0.01)
    m = v = 0.0
    x = 0.0
    for t, g in enumerate([1.0, -0.5, 2.0, 0.25], start=1):
        adam_step(st, [p], [np.array([g])])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p.data[0] == pytest.approx(x, abs=1e-15)


def test_adam_minimizes_quadratic():
    p = tt.Tensor(np.array([3.0, -2.0]), requires_grad=True)
    st = AdamState(lr=0.05)
    for _ in range(2000):
        adam_step(st, [p], [2 * p.data])
    assert np.all(np.abs(p.data) < 1e-2)


def test_zero_lr_stops_after_patience(splits):
    tr, va, _ = splits
    res = train(small_model(), tr, va, TrainConfig(lr=0.0, patience=1, max_epochs=50), 42)
    assert len(res.log) == 2 and res.best_epoch == 1


def test_rerun_is_bit_identical(splits):
    tr, va, _ = splits
    cfg = TrainConfig(lr=1e-3, max_epochs=3, batch_size=8)
    a = train(small_model(42), tr, va, cfg, 42)
    b = train(small_model(42), tr, va, cfg, 42)
    assert all(np.array_equal(a.best_state[k], b.best_state[k]) for k in a.best_state)
    strip = lambda log: [{k: v for k, v in r.items() if k != "elapsed_ms"} for r in log]  # noqa: E731
    assert strip(a.log) == strip(b.log)


def test_best_state_is_restored(splits):
    tr, va, _ = splits
    model = small_model()
    res = train(model, tr, va, TrainConfig(lr=1e-2, max_epochs=6, patience=6, batch_size=8), 1)
    cur = model.state_dict()
    assert all(np.array_equal(cur[k], res.best_state[k]) for k in cur)
    assert res.best_val_f1 == max(r["val_f1"] for r in res.log)


def test_augmented_training_runs(splits):
    tr, va, _ = splits
    res = train(small_model(), tr, va, TrainConfig(max_epochs=2, augment=True), 0)
    assert len(res.log) == 2


def test_subject_leak_rejected(splits):
    tr, _, _ = splits
    with pytest.raises(ValueError):
        train(small_model(), tr, tr, TrainConfig(max_epochs=1), 0)


def test_divergence_detected(splits):
    tr, va, _ = splits
    model = small_model()
    model.W_y.data[...] = np.nan
    with pytest.raises(TrainingDiverged):
        train(model, tr, va, TrainConfig(max_epochs=1), 0)


def test_predict_proba_rows_sum_to_one(splits):
    _, _, te = splits
    p = predict_proba(small_model(), te)
    assert p.shape == (len(te), 2) and np.allclose(p.sum(1), 1.0)


def test_train_seeds_aggregates(splits):
    cfg = TeChConfig(T=16, C=3, K=2, D=8, L=4)
    rep, results = train_seeds(cfg, TrainConfig(max_epochs=1, seeds=(1, 2)), splits)
    assert rep.seeds == [1, 2] and len(results) == 2
    assert 0.0 <= rep.accuracy <= 1.0


def test_probe_trains(splits):
    tr, va, te = splits
    probe = small_model(kind="probe")
    train(probe, tr, va, TrainConfig(lr=1e-2, max_epochs=2), 0)
    assert 0.0 <= evaluate(probe, te).accuracy <= 1.0


def test_log_csv(tmp_path, splits):
    tr, va, _ = splits
    res = train(small_model(), tr, va, TrainConfig(max_epochs=2), 0)
    write_log_csv(tmp_path / "log.csv", res.log)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == ",".join(LOG_FIELDS) and len(lines) == 3


@pytest.mark.parametrize("kw", [dict(patience=0), dict(seeds=()), dict(lr=-1.0), dict(batch_size=0)])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)

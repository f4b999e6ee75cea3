import numpy as np
import pytest

from cotar import tensor as tt
from cotar.model import (LinearProbe, TeChConfig, TeChModel, build_model, load_checkpoint,
                         param_count, save_checkpoint)
from cotar.tensor import ShapeError, grad_check


def small_cfg(**kw):
    base = dict(T=8, C=3, K=2, D=8, D_c=2, L=2, M=1, N=1, dropout=0.0)
    base.update(kw)
    return TeChConfig(**base)


def test_dual_model_gradients(rng):
    model = TeChModel(small_cfg(), rng)
    Xs = rng.normal(size=(2, 8, 3))
    y = np.array([0, 1])
    assert grad_check(lambda: tt.softmax_cross_entropy(model.forward_batch(Xs), y),
                      model.parameters()).passed


@pytest.mark.parametrize("m,n", [(1, 0), (0, 1), (2, 1)])
def test_branch_variants(m, n, rng):
    model = TeChModel(small_cfg(M=m, N=n), rng)
    names = [k for k, _ in model.named_parameters()]
    assert any(k.startswith("temporal.") for k in names) == (m > 0)
    assert any(k.startswith("channel.") for k in names) == (n > 0)
    assert model.forward(rng.normal(size=(8, 3))).shape == (2,)


def test_fusion_is_sum_of_branches(rng):
    model = TeChModel(small_cfg(), rng)
    x = rng.normal(size=(1, 8, 3))
    pooled = model.temporal_repr(x).data + model.channel_repr(x).data
    want = pooled @ model.W_y.data + model.b_y.data
    assert np.allclose(model.forward_batch(x).data, want, atol=1e-13)


def test_no_branches_rejected():
    with pytest.raises(ValueError):
        small_cfg(M=0, N=0)


def test_batch_matches_loop(rng):
    model = TeChModel(small_cfg(M=2, N=2), rng)
    Xs = rng.normal(size=(4, 8, 3))
    batched = model.forward_batch(Xs).data
    looped = np.stack([model.forward(x).data for x in Xs])
    assert np.allclose(batched, looped, atol=1e-13)


@pytest.mark.parametrize("kw", [{}, dict(M=2, N=0, mixer="attention"), dict(L=3, ffn_hidden=5)])
def test_param_count_closed_form(kw, rng):
    cfg = small_cfg(**kw)
    assert TeChModel(cfg, rng).n_params() == param_count(cfg)


def test_same_seed_same_init():
    a = TeChModel(small_cfg(), 5).state_dict()
    b = TeChModel(small_cfg(), 5).state_dict()
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def test_checkpoint_round_trip(tmp_path, rng):
    model = TeChModel(small_cfg(mixer="attention"), rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.cfg == model.cfg
    x = rng.normal(size=(3, 8, 3))
    assert np.array_equal(loaded.forward_batch(x).data, model.forward_batch(x).data)
    save_checkpoint(tmp_path / "again.ckpt", loaded)
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()


def test_probe_checkpoint_round_trip(tmp_path, rng):
    probe = build_model(small_cfg(), rng, "probe")
    save_checkpoint(tmp_path / "p.ckpt", probe)
    loaded = load_checkpoint(tmp_path / "p.ckpt")
    assert isinstance(loaded, LinearProbe)
    x = rng.normal(size=(8, 3))
    assert np.array_equal(loaded.forward(x).data, probe.forward(x).data)


def test_corrupt_checkpoint(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, TeChModel(small_cfg(), rng))
    raw = path.read_bytes()
    path.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(ValueError):
        load_checkpoint(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_input_validation(rng):
    model = TeChModel(small_cfg(), rng)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((7, 3)))
    with pytest.raises(ShapeError):
        model.forward_batch([np.zeros((8, 3)), np.zeros((7, 3))])
    with pytest.raises(ValueError):
        build_model(small_cfg(), rng, "mlp")


def test_probe_is_affine(rng):
    probe = LinearProbe(small_cfg(), rng)
    x = rng.normal(size=(8, 3))
    assert np.allclose(probe.forward(x).data, x.reshape(-1) @ probe.W.data + probe.b.data)

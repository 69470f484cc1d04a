import math
import time

import numpy as np
import pytest

from oracles import central_difference, relative_error
from markerperm.core import (DimensionError, MarkerFrame, NumericError, Permutation,
                             label_matrix)
from markerperm.permnet import (CheckpointError, ModelCheckpoint, NetworkConfig, TrainConfig,
                                TrainingError, cross_entropy, forward, init_weights,
                                label_frame, label_frames, load_checkpoint, loss_and_gradients,
                                predict_dsm, result_from_dsm, save_checkpoint, train,
                                weight_shapes)
from markerperm.sinkhorn import SinkhornConfig, sinkhorn_forward
from markerperm.synthdata import FrameSet, generate_subject_sequences, normalized_frameset, shuffle_frameset


def tiny(n=4, h=8, seed=0):
    cfg = NetworkConfig(n, hidden_width=h, seed=seed)
    return cfg, init_weights(cfg)


def toy_sets(seed=0):
    """200 shuffles of one 6-marker pose for training, 50 more for validation."""
    seq = generate_subject_sequences(6, 1, 1, actions=("walk",))
    fs = normalized_frameset(seq)
    rng = np.random.default_rng(seed)
    tr = shuffle_frameset(fs, rng, 200)
    va = shuffle_frameset(fs, rng, 50)
    va.subjects = np.array(["val"] * len(va))
    return tr, va


# -- forward ---------------------------------------------------------------------------

def test_zero_weights_give_half(rng):
    cfg, w = tiny()
    w = {k: np.zeros_like(v) for k, v in w.items()}
    m, _ = forward(rng.random(12), w, cfg)
    assert m.shape == (4, 4)
    np.testing.assert_array_equal(m, 0.5)


def test_output_range_and_shape(rng):
    cfg, w = tiny(5, 16)
    m, _ = forward(rng.random((7, 15)), w, cfg)
    assert m.shape == (7, 5, 5)
    assert ((m > 0) & (m < 1)).all()


def test_forward_is_pure(rng):
    cfg, w = tiny()
    x = rng.random(12)
    a, _ = forward(x, w, cfg)
    b, _ = forward(x.copy(), w, cfg)
    np.testing.assert_array_equal(a, b)


def test_batch_equals_single(rng):
    cfg, w = tiny()
    x = rng.random((3, 12))
    batch, _ = forward(x, w, cfg)
    for k in range(3):
        np.testing.assert_allclose(forward(x[k], w, cfg)[0], batch[k], rtol=1e-14)


def test_input_width_checked():
    cfg, w = tiny()
    with pytest.raises(DimensionError):
        forward(np.zeros(11), w, cfg)


def test_non_finite_activation_reports_layer():
    cfg, w = tiny()
    with pytest.raises(NumericError, match="layer 0"):
        forward(np.full(12, np.inf), w, cfg)


def test_zeroed_blocks_are_identity(rng):
    cfg, w = tiny(4, 8)
    w0 = dict(w)
    for k in w0:
        if k.startswith("block"):
            w0[k] = np.zeros_like(w0[k])
    x = rng.random((2, 12))
    _, tape = forward(x, w0, cfg)
    h0 = tape["post"]["input+"]
    for b in range(cfg.n_residual_blocks):
        np.testing.assert_array_equal(tape["post"][f"block{b}.dense2+"], h0)


def test_marker_major_flattening():
    # moving marker 0's x coordinate only touches input unit 0
    cfg, w = tiny()
    x = np.zeros(12)
    base, tape0 = forward(x, w, cfg)
    x[0] = 1.0
    _, tape1 = forward(x, w, cfg)
    np.testing.assert_allclose(tape1["pre"]["input"] - tape0["pre"]["input"], w["input.W"][0:1])


# -- loss ------------------------------------------------------------------------------

def test_loss_zero_at_target():
    p = Permutation([2, 0, 3, 1])
    loss, _, clamped = cross_entropy(label_matrix(p)[None], p.mapping[None])
    assert loss == 0.0 and clamped == 0


def test_loss_uniform_is_log_n():
    for n in (2, 5, 41):
        loss, _, _ = cross_entropy(np.full((1, n, n), 1.0 / n), np.arange(n)[None])
        assert loss == pytest.approx(math.log(n), rel=1e-14)


def test_loss_clamps_zero_entries():
    d = np.eye(3)[None]
    loss, grad, clamped = cross_entropy(d, np.array([[1, 0, 2]]))
    assert clamped == 2
    assert loss == pytest.approx(2 * -math.log(1e-12) / 3)
    assert np.isfinite(grad).all()


def test_loss_bounds(rng):
    cfg, w = tiny(6, 16)
    targets = np.array([rng.permutation(6) for _ in range(10)])
    loss, _, _ = loss_and_gradients(rng.random((10, 18)), targets, w, cfg)
    assert 0 <= loss <= math.log(6) + 0.5


def test_composite_gradients_match_finite_differences():
    worst = 0.0
    for seed in range(6):
        rng = np.random.default_rng(seed)
        n, h = int(rng.integers(3, 7)), int(rng.integers(4, 17))
        cfg, w = tiny(n, h, seed)
        x = rng.random((3, 3 * n))
        t = np.array([rng.permutation(n) for _ in range(3)])
        _, grads, _ = loss_and_gradients(x, t, w, cfg)
        for name in w:
            num = central_difference(lambda: loss_and_gradients(x, t, w, cfg)[0], w[name], 1e-5)
            worst = max(worst, relative_error(grads[name], num))
    assert worst < 1e-4


def test_tiny_net_n4_h8_gradients():
    rng = np.random.default_rng(99)
    cfg, w = tiny(4, 8, 3)
    x = rng.random((2, 12))
    t = np.array([rng.permutation(4) for _ in range(2)])
    _, grads, _ = loss_and_gradients(x, t, w, cfg)
    for name in w:
        num = central_difference(lambda: loss_and_gradients(x, t, w, cfg)[0], w[name], 1e-5)
        assert relative_error(grads[name], num) < 1e-4, name


# -- training ---------------------------------------------------------------------------

def test_toy_training_reduces_loss():
    tr, va = toy_sets()
    cfg = NetworkConfig(6, hidden_width=64, seed=0)
    ck = train(tr, va, cfg, TrainConfig(batch_size=8, lr_initial=3e-3, epochs=30, seed=0))
    meta = ck.training_meta
    assert meta["log"][-1]["train_loss"] < 0.1 * meta["initial_train_loss"]
    assert len(meta["log"]) == 30


def test_lr_constant_when_val_keeps_decreasing():
    tr, va = toy_sets()
    cfg = NetworkConfig(6, hidden_width=16, seed=0)
    ck = train(tr, va, cfg, TrainConfig(batch_size=8, lr_initial=1e-4, epochs=4, seed=0))
    log = ck.training_meta["log"]
    vals = [e["val_loss"] for e in log]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert {e["lr"] for e in log} == {1e-4}


def test_lr_halves_on_val_increase():
    tr, va = toy_sets()
    cfg = NetworkConfig(6, hidden_width=64, seed=0)
    ck = train(tr, va, cfg, TrainConfig(batch_size=8, lr_initial=3e-3, epochs=30, seed=0))
    log = ck.training_meta["log"]
    for prev, cur, nxt in zip(log, log[1:], log[2:]):
        expected = cur["lr"] * (0.5 if cur["val_loss"] > prev["val_loss"] else 1.0)
        assert nxt["lr"] == expected
    best = min(range(len(log)), key=lambda k: log[k]["val_loss"])
    assert ck.training_meta["best_epoch"] == best


def test_training_is_deterministic(tmp_path):
    tr, va = toy_sets()
    cfg = NetworkConfig(6, hidden_width=16, seed=3)
    tc = TrainConfig(batch_size=8, lr_initial=1e-3, epochs=3, seed=5)
    paths = []
    for k in range(2):
        ck = train(tr, va, cfg, tc)
        paths.append(tmp_path / f"ck{k}.bin")
        save_checkpoint(ck, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_float32_training_runs():
    tr, va = toy_sets()
    ck = train(tr, va, NetworkConfig(6, hidden_width=16), TrainConfig(epochs=2, dtype="float32"))
    assert all(v.dtype == np.float64 for v in ck.weights.values())


def test_training_argument_errors():
    tr, va = toy_sets()
    empty = tr.subset(np.arange(0))
    with pytest.raises(ValueError):
        train(empty, va, NetworkConfig(6, hidden_width=8))
    with pytest.raises(DimensionError):
        train(tr, va, NetworkConfig(7, hidden_width=8))
    with pytest.raises(ValueError):
        train(tr, tr, NetworkConfig(6, hidden_width=8))
    with pytest.raises(ValueError):
        TrainConfig(dtype="float16")


def test_nan_loss_aborts_with_position():
    tr, va = toy_sets()
    cfg = NetworkConfig(6, hidden_width=8)
    w = init_weights(cfg)
    w["output.W"][:] = np.nan
    with pytest.raises((TrainingError, NumericError)):
        train(tr, va, cfg, TrainConfig(epochs=1), init=w)


# -- labelling and checkpoints -------------------------------------------------------------

def test_perfect_dsm_labels_ground_truth(rng):
    p = Permutation.random(8, rng)
    d = label_matrix(p) * 0.999 + 0.001 / 8
    r = result_from_dsm(d)
    assert r.permutation == p
    assert (r.confidences > 0.99).all()


def test_label_frame_deterministic_and_checked(rng):
    cfg, w = tiny(5, 16)
    ck = ModelCheckpoint(cfg, w)
    f = MarkerFrame(rng.random((5, 3)), np.zeros(5))
    a, b = label_frame(f, ck), label_frame(f, ck)
    assert a.permutation == b.permutation
    np.testing.assert_array_equal(a.dsm, b.dsm)
    with pytest.raises(DimensionError):
        label_frame(MarkerFrame(rng.random((4, 3)), np.zeros(4)), ck)


def test_label_frame_float32_agrees_with_float64(rng):
    cfg, w = tiny(6, 32)
    ck = ModelCheckpoint(cfg, w)
    pos = rng.random((20, 6, 3))
    batch = label_frames(pos, ck)
    for k in range(20):
        single = label_frame(MarkerFrame(pos[k], np.zeros(6)), ck)
        np.testing.assert_allclose(single.dsm, batch[k].dsm, atol=1e-5)


def test_label_frame_throughput_n41():
    cfg = NetworkConfig(41, seed=0)
    ck = ModelCheckpoint(cfg, init_weights(cfg))
    rng = np.random.default_rng(0)
    frames = [MarkerFrame(rng.random((41, 3)), np.zeros(41)) for _ in range(200)]
    label_frame(frames[0], ck)
    times = []
    for f in frames:
        t0 = time.perf_counter()
        label_frame(f, ck)
        times.append(time.perf_counter() - t0)
    assert np.median(times) < 8.3e-3


def test_checkpoint_roundtrip(tmp_path, rng):
    cfg, w = tiny(5, 8)
    ck = ModelCheckpoint(cfg, w, SinkhornConfig(7), {"note": "x"})
    path = tmp_path / "m.ck"
    save_checkpoint(ck, path)
    back = load_checkpoint(path)
    assert back.config == cfg and back.sinkhorn == SinkhornConfig(7)
    assert back.training_meta == {"note": "x"}
    for k in w:
        np.testing.assert_array_equal(back.weights[k], w[k])
    x = rng.random((2, 15))
    np.testing.assert_array_equal(predict_dsm(x, back.weights, cfg), predict_dsm(x, w, cfg))


def test_checkpoint_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.ck"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    cfg, w = tiny(5, 8)
    path = tmp_path / "m.ck"
    ck = ModelCheckpoint(cfg, w)
    ck.version = 99
    save_checkpoint(ck, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_weight_shapes_checked():
    cfg, w = tiny(4, 8)
    w["output.W"] = np.zeros((8, 15))
    with pytest.raises(DimensionError):
        ModelCheckpoint(cfg, w)
    assert weight_shapes(cfg)["input.W"] == (12, 8)

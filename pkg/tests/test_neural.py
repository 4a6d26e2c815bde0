"""Layer ops, losses, network assembly, and model serialization."""

import numpy as np
import pytest

import oracles as orc
from gait3d.errors import BoundsError, FormatError, ParameterError, ShapeError
from gait3d.neural import (
    ModelSpec,
    Network,
    default_model_spec,
    init_params,
    load_model,
    ops,
    param_shapes,
    save_model,
)
from gait3d.neural.losses import (
    batch_cross_entropy,
    categorical_accuracy,
    mean_absolute_error,
    softmax,
    softmax_cross_entropy,
)
from gait3d.neural.model import Conv3d, Dense, Dropout, Flatten, MaxPool3d, Softmax
from gait3d.rng import generator


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


# -- conv3d -----------------------------------------------------------------


def test_conv3d_tiny_frozen():
    # sum_i (i - 3.5)/4 * i + 0.5 = (140 - 3.5*28)/4 + 0.5 = 11
    x = np.arange(8, dtype=float).reshape(1, 2, 2, 2)
    w = (np.arange(8, dtype=float).reshape(1, 1, 2, 2, 2) - 3.5) / 4.0
    b = np.array([0.5])
    out, pre = ops.conv3d_forward(x, w, b)
    assert pre.shape == (1, 1, 1, 1)
    assert pre[0, 0, 0, 0] == pytest.approx(11.0, abs=1e-12)
    assert out[0, 0, 0, 0] == pytest.approx(np.tanh(11.0), abs=1e-15)


def test_conv3d_matches_direct_summation():
    rng = np.random.default_rng(31)
    for _ in range(20):
        c = int(rng.integers(1, 3))
        f = int(rng.integers(1, 4))
        t, h, w = (int(rng.integers(2, 7)) for _ in range(3))
        kt = int(rng.integers(1, min(3, t) + 1))
        kh = int(rng.integers(1, min(3, h) + 1))
        kw = int(rng.integers(1, min(3, w) + 1))
        x = rng.standard_normal((c, t, h, w))
        wgt = rng.standard_normal((f, c, kt, kh, kw))
        b = rng.standard_normal(f)
        out, pre = ops.conv3d_forward(x, wgt, b)
        out_ref, pre_ref = orc.conv3d_direct(x, wgt, b)
        assert np.abs(pre - pre_ref).max() < 1e-12
        assert np.abs(out - out_ref).max() < 1e-12


def test_conv3d_batch_equals_per_sample():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 2, 4, 5, 5))
    w = rng.standard_normal((2, 2, 2, 3, 3))
    b = rng.standard_normal(2)
    out_b, _ = ops.conv3d_forward(x, w, b)
    for i in range(3):
        out_i, _ = ops.conv3d_forward(x[i], w, b)
        # BLAS may sum in a different order for different matrix heights
        assert np.allclose(out_b[i], out_i, atol=1e-12, rtol=0)


def test_conv3d_cols_reuse_matches():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 1, 4, 6, 6))
    w = rng.standard_normal((3, 1, 2, 2, 2))
    b = rng.standard_normal(3)
    out, pre, cols = ops.conv3d_forward(x, w, b, return_cols=True)
    g = rng.standard_normal(out.shape)
    with_cols = ops.conv3d_backward(g, x, pre, w, activation=out, cols=cols)
    without = ops.conv3d_backward(g, x, pre, w, activation=out)
    for a, b2 in zip(with_cols, without):
        assert np.array_equal(a, b2)


def test_conv3d_shape_errors():
    x = np.zeros((1, 2, 2, 2))
    with pytest.raises(ShapeError):
        ops.conv3d_forward(x, np.zeros((1, 3, 1, 1, 1)), np.zeros(1))  # channel clash
    with pytest.raises(ShapeError):
        ops.conv3d_forward(x, np.zeros((1, 1, 3, 1, 1)), np.zeros(1))  # kernel too long
    with pytest.raises(ShapeError):
        ops.conv3d_forward(x, np.zeros((2, 1, 1, 1, 1)), np.zeros(3))  # bias mismatch


def test_conv3d_gradients_match_finite_differences():
    rng = np.random.default_rng(101)
    for _ in range(4):
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((2, 2, 2, 2, 2)) * 0.5
        b = rng.standard_normal(2) * 0.5
        ref = rng.standard_normal((2, 2, 3, 3))  # projection onto a scalar

        def loss(xx=x, ww=w, bb=b):
            out, _ = ops.conv3d_forward(xx, ww, bb)
            return float((out * ref).sum())

        out, pre = ops.conv3d_forward(x, w, b)
        gx, gw, gb = ops.conv3d_backward(ref, x, pre, w)
        assert rel_err(gx, orc.numeric_grad(lambda v: loss(xx=v), x.copy())) < 1e-6
        assert rel_err(gw, orc.numeric_grad(lambda v: loss(ww=v), w.copy())) < 1e-6
        assert rel_err(gb, orc.numeric_grad(lambda v: loss(bb=v), b.copy())) < 1e-6


def test_conv3d_backward_can_skip_input_gradient():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 3, 3))
    w = rng.standard_normal((1, 1, 2, 2, 2))
    out, pre = ops.conv3d_forward(x, w, np.zeros(1))
    gx, gw, gb = ops.conv3d_backward(np.ones_like(out), x, pre, w, need_grad_input=False)
    assert gx is None and gw.shape == w.shape


# -- max pooling ------------------------------------------------------------


def test_maxpool_matches_window_scan():
    rng = np.random.default_rng(17)
    for _ in range(25):
        c = int(rng.integers(1, 3))
        t, h, w = (int(rng.integers(2, 8)) for _ in range(3))
        win = tuple(int(rng.integers(1, d + 1)) for d in (t, h, w))
        stride = tuple(int(rng.integers(1, 4)) for _ in range(3))
        x = rng.standard_normal((c, t, h, w))
        out, _ = ops.maxpool3d_forward(x, win, stride)
        assert np.array_equal(out, orc.pool3d_direct(x, win, stride))


def test_maxpool_tie_takes_first_in_scan_order():
    x = np.zeros((1, 2, 2, 2))
    x[0, 0, 1, 1] = 7.0
    x[0, 1, 0, 0] = 7.0  # same max later in (t, h, w) order
    out, idx = ops.maxpool3d_forward(x, (2, 2, 2), (2, 2, 2))
    assert out[0, 0, 0, 0] == 7.0
    # linear position 3 = (t=0, h=1, w=1), not 4 = (t=1, h=0, w=0)
    assert idx.flat[0, 0, 0, 0] == 3


def test_maxpool_backward_routes_to_argmax():
    x = np.zeros((1, 2, 2, 2))
    x[0, 1, 0, 1] = 5.0
    out, idx = ops.maxpool3d_backward, None
    out, idx = ops.maxpool3d_forward(x, (2, 2, 2), (2, 2, 2))
    g = ops.maxpool3d_backward(np.full((1, 1, 1, 1), 2.5), idx)
    expect = np.zeros((1, 2, 2, 2))
    expect[0, 1, 0, 1] = 2.5
    assert np.array_equal(g, expect)


def test_maxpool_gradient_matches_finite_differences():
    rng = np.random.default_rng(55)
    for _ in range(4):
        # well-separated values keep the argmax away from ties under the probe step
        x = rng.permutation(np.arange(2 * 4 * 4 * 4, dtype=float)).reshape(2, 4, 4, 4)
        ref = rng.standard_normal((2, 2, 2, 2))

        def loss(v):
            out, _ = ops.maxpool3d_forward(v, (2, 2, 2), (2, 2, 2))
            return float((out * ref).sum())

        _, idx = ops.maxpool3d_forward(x, (2, 2, 2), (2, 2, 2))
        gx = ops.maxpool3d_backward(ref, idx)
        assert rel_err(gx, orc.numeric_grad(loss, x.copy())) < 1e-6


def test_maxpool_rejects_bad_geometry():
    x = np.zeros((1, 2, 2, 2))
    with pytest.raises(ShapeError):
        ops.maxpool3d_forward(x, (3, 1, 1), (1, 1, 1))
    with pytest.raises(ParameterError):
        ops.maxpool3d_forward(x, (1, 1, 1), (0, 1, 1))


# -- dense / tanh -----------------------------------------------------------


def test_dense_affine_frozen():
    w = np.array([[1.0, 2.0], [0.5, -1.0]])
    b = np.array([10.0, -10.0])
    out = ops.dense_forward(np.array([3.0, 4.0]), w, b)
    assert np.array_equal(out, [3 + 8 + 10, 1.5 - 4 - 10])


def test_dense_gradients_match_finite_differences():
    rng = np.random.default_rng(77)
    x = rng.standard_normal((3, 5))
    w = rng.standard_normal((4, 5))
    b = rng.standard_normal(4)
    ref = rng.standard_normal((3, 4))

    def loss(xx=x, ww=w, bb=b):
        return float((ops.dense_forward(xx, ww, bb) * ref).sum())

    gx, gw, gb = ops.dense_backward(ref, x, w)
    assert rel_err(gx, orc.numeric_grad(lambda v: loss(xx=v), x.copy())) < 1e-6
    assert rel_err(gw, orc.numeric_grad(lambda v: loss(ww=v), w.copy())) < 1e-6
    assert rel_err(gb, orc.numeric_grad(lambda v: loss(bb=v), b.copy())) < 1e-6


def test_tanh_backward_uses_forward_output():
    x = np.linspace(-2, 2, 9)
    out = ops.tanh_forward(x)
    g = ops.tanh_backward(np.ones_like(x), out)
    assert np.allclose(g, 1.0 - np.tanh(x) ** 2)


# -- dropout ----------------------------------------------------------------


def test_dropout_eval_is_identity_and_skips_rng():
    g = generator(0, "dropout", 0)
    before = g.bit_generator.state["state"]["state"]
    x = np.arange(6, dtype=float)
    out, mask = ops.dropout(x, 0.5, "eval", g)
    assert mask is None and np.array_equal(out, x)
    assert g.bit_generator.state["state"]["state"] == before


def test_dropout_train_golden_mask():
    g = generator(11, "dropout", 5)
    out, mask = ops.dropout(np.ones(8), 0.5, "train", g)
    assert mask.astype(int).tolist() == [1, 1, 1, 1, 1, 0, 1, 0]
    assert out.tolist() == [2.0, 2.0, 2.0, 2.0, 2.0, 0.0, 2.0, 0.0]


def test_dropout_zero_rate_keeps_everything():
    out, mask = ops.dropout(np.ones(5), 0.0, "train", None)
    assert np.array_equal(out, np.ones(5)) and mask.all()


def test_dropout_scaling_preserves_expectation():
    g = generator(1, "dropout", 0)
    x = np.ones(200000)
    out, _ = ops.dropout(x, 0.3, "train", g)
    assert abs(out.mean() - 1.0) < 0.01


def test_dropout_validation():
    with pytest.raises(ParameterError):
        ops.dropout(np.ones(3), 1.0, "train", generator(0))
    with pytest.raises(ParameterError):
        ops.dropout(np.ones(3), -0.1, "eval", None)
    with pytest.raises(ParameterError):
        ops.dropout(np.ones(3), 0.5, "train", None)
    with pytest.raises(ParameterError):
        ops.dropout(np.ones(3), 0.5, "predict", None)


def test_dropout_backward_masks_and_scales():
    mask = np.array([True, False, True, True])
    g = ops.dropout_backward(np.ones(4), mask, 0.75)
    assert np.array_equal(g, [4.0, 0.0, 4.0, 4.0])


# -- losses -----------------------------------------------------------------


def test_softmax_rows_sum_to_one_and_survive_huge_logits():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((6, 9)) * 500.0
    p = softmax(z)
    assert np.isfinite(p).all()
    assert np.allclose(p.sum(axis=1), 1.0)


def test_cross_entropy_frozen_example():
    loss, probs, grad = softmax_cross_entropy(np.array([2.0, -1.0, 0.5]), 2)
    assert loss == pytest.approx(1.741311296657157, abs=1e-14)
    assert probs[0] == pytest.approx(0.785597034589276, abs=1e-14)
    assert grad[2] == pytest.approx(probs[2] - 1.0, abs=1e-15)
    assert grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    z = rng.standard_normal(7)

    def loss(v):
        return softmax_cross_entropy(v, 3)[0]

    _, _, grad = softmax_cross_entropy(z, 3)
    assert rel_err(grad, orc.numeric_grad(loss, z.copy())) < 1e-8


def test_batch_cross_entropy_averages():
    z = np.array([[3.0, 0.0], [0.0, 3.0]])
    labels = np.array([0, 1])
    loss, probs, grad = batch_cross_entropy(z, labels)
    l0, _, g0 = softmax_cross_entropy(z[0], 0)
    l1, _, g1 = softmax_cross_entropy(z[1], 1)
    assert loss == pytest.approx((l0 + l1) / 2, abs=1e-14)
    assert np.allclose(grad, np.stack([g0, g1]) / 2)


def test_label_validation():
    z = np.zeros((2, 3))
    with pytest.raises(BoundsError):
        batch_cross_entropy(z, np.array([0, 3]))
    with pytest.raises(BoundsError):
        softmax_cross_entropy(np.zeros(3), -1)
    with pytest.raises(ParameterError):
        batch_cross_entropy(z, np.array([0.0, 1.0]))


def test_accuracy_and_mae_frozen():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.3, 0.4, 0.3]])
    labels = np.array([0, 1, 2])
    assert categorical_accuracy(probs, labels) == pytest.approx(2.0 / 3.0)
    # mean |p - onehot| over all 9 cells
    expect = (0.3 + 0.2 + 0.1 + 0.1 + 0.4 + 0.3 + 0.3 + 0.4 + 0.7) / 9
    assert mean_absolute_error(probs, labels) == pytest.approx(expect, abs=1e-14)
    with pytest.raises(ParameterError):
        categorical_accuracy(np.zeros((0, 3)), np.zeros(0, dtype=int))


# -- network assembly -------------------------------------------------------


def test_default_spec_shape_chain():
    spec = default_model_spec(10)
    assert spec.shapes() == [
        (1, 16, 64, 64),
        (8, 14, 62, 62),
        (8, 7, 31, 31),
        (16, 5, 29, 29),
        (16, 2, 14, 14),
        (6272,),
        (6272,),
        (64,),
        (64,),
        (10,),
        (10,),
    ]
    assert spec.n_classes == 10
    assert sum(int(np.prod(s)) for s in param_shapes(spec)) == 405818


def test_spec_validation_errors():
    with pytest.raises(ShapeError):
        ModelSpec((1, 4, 8, 8), (Dense(3),)).shapes()  # dense on 4-d input
    with pytest.raises(ShapeError):
        ModelSpec((1, 4, 8, 8), (Softmax(), Flatten())).shapes()  # softmax not last
    with pytest.raises(ShapeError):
        ModelSpec((1, 2, 4, 4), (Conv3d(1, (3, 3, 3)),)).shapes()  # kernel too big
    with pytest.raises(ParameterError):
        ModelSpec((1, 4, 8, 8), (Flatten(), Dropout(1.5))).shapes()
    with pytest.raises(ParameterError):
        ModelSpec((1, 4, 8, 8), (Flatten(), Dense(3, activation="relu"))).shapes()


def test_spec_dict_round_trip():
    spec = default_model_spec(4)
    again = ModelSpec.from_dict(spec.to_dict())
    assert again == spec


def test_init_params_deterministic_and_bounded():
    spec = default_model_spec(5)
    a = init_params(spec, seed=9)
    b = init_params(spec, seed=9)
    c = init_params(spec, seed=10)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))
    shapes = spec.shapes()
    conv_w = a[0]
    fan_in = 1 * 27
    fan_out = 8 * 27
    s = np.sqrt(6.0 / (fan_in + fan_out))
    assert np.abs(conv_w).max() <= s
    assert np.array_equal(a[1], np.zeros(8))  # biases start at zero
    assert [tuple(p.shape) for p in a] == param_shapes(spec)
    del shapes


def test_network_forward_batch_matches_single():
    spec = default_model_spec(3, input_shape=(1, 10, 20, 20))
    net = Network(spec, seed=2)
    rng = np.random.default_rng(0)
    x = rng.random((2, 1, 10, 20, 20))
    batch = net.forward(x)
    one = net.forward(x[0])
    assert batch.shape == (2, 3) and one.shape == (3,)
    assert np.allclose(batch[0], one, atol=1e-12)
    assert np.allclose(batch.sum(axis=1), 1.0)


def test_network_gradients_cover_every_parameter():
    spec = default_model_spec(3, input_shape=(1, 10, 20, 20))
    net = Network(spec, seed=2)
    rng = np.random.default_rng(1)
    x = rng.random((2, 1, 10, 20, 20))
    loss, probs, grads = net.loss_and_grads(x, np.array([0, 2]), train=False)
    assert len(grads) == len(net.params)
    assert all(g.shape == p.shape for g, p in zip(grads, net.params))
    assert all(np.isfinite(g).all() for g in grads)
    assert loss > 0.0


def test_network_whole_gradient_matches_finite_differences():
    spec = ModelSpec(
        (1, 3, 6, 6),
        (
            Conv3d(2, (2, 3, 3)),
            MaxPool3d((2, 2, 2), (2, 2, 2)),
            Flatten(),
            Dense(4, activation="tanh"),
            Dense(3),
            Softmax(),
        ),
    )
    rng = np.random.default_rng(12)
    params = init_params(spec, seed=5)
    x = rng.random((2, 1, 3, 6, 6)) * 2 - 1
    labels = np.array([1, 2])

    net = Network(spec, params=[p.copy() for p in params])
    _, _, grads = net.loss_and_grads(x, labels, train=False)

    for k in range(len(params)):
        def loss_fn(v, k=k):
            trial = [p.copy() for p in params]
            trial[k] = v
            n2 = Network(spec, params=trial)
            return n2.loss_and_grads(x, labels, train=False)[0]

        num = orc.numeric_grad(loss_fn, params[k].copy())
        assert rel_err(grads[k], num) < 1e-6, f"parameter {k}"


def test_network_training_dropout_reproducible():
    spec = default_model_spec(2, input_shape=(1, 10, 20, 20))
    rng = np.random.default_rng(3)
    x = rng.random((2, 1, 10, 20, 20))
    y = np.array([0, 1])
    l1 = Network(spec, seed=4).loss_and_grads(x, y, train=True)[0]
    l2 = Network(spec, seed=4).loss_and_grads(x, y, train=True)[0]
    assert l1 == l2


def test_network_needs_params_or_seed():
    with pytest.raises(ParameterError):
        Network(default_model_spec(2))
    with pytest.raises(ShapeError):
        Network(default_model_spec(2), params=[np.zeros((1, 1))])


def test_single_class_model_is_mechanically_fine():
    spec = ModelSpec((1, 2, 4, 4), (Flatten(), Dense(1), Softmax()))
    net = Network(spec, seed=0)
    x = np.random.default_rng(0).random((3, 1, 2, 4, 4))
    loss, probs, _ = net.loss_and_grads(x, np.zeros(3, dtype=int), train=False)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(probs, 1.0)
    with pytest.raises(BoundsError):
        net.loss_and_grads(x, np.array([0, 1, 0]), train=False)


# -- sgd --------------------------------------------------------------------


def test_sgd_step_updates_in_place():
    p = [np.array([1.0, 2.0]), np.array([[3.0]])]
    g = [np.array([0.5, -0.5]), np.array([[2.0]])]
    out = ops.sgd_step(p, g, 0.1)
    assert out is p
    assert np.allclose(p[0], [0.95, 2.05])
    assert np.allclose(p[1], [[2.8]])
    with pytest.raises(ParameterError):
        ops.sgd_step(p, g, 0.0)
    with pytest.raises(ShapeError):
        ops.sgd_step(p, g[:1], 0.1)
    with pytest.raises(ShapeError):
        ops.sgd_step([np.zeros(2)], [np.zeros(3)], 0.1)


# -- serialization ----------------------------------------------------------


def _small_model():
    spec = ModelSpec((1, 2, 4, 4), (Flatten(), Dense(3, activation="tanh"), Dense(2), Softmax()))
    return spec, init_params(spec, seed=21)


def test_save_load_round_trip_is_bit_exact(tmp_path):
    spec, params = _small_model()
    path = tmp_path / "model.g3dc"
    save_model(params, spec, path)
    loaded, spec2 = load_model(path)
    assert spec2 == spec
    assert len(loaded) == len(params)
    for a, b in zip(loaded, params):
        assert a.dtype == np.float64
        assert a.tobytes() == b.tobytes()  # identical down to the last bit


def test_save_rejects_mismatched_params(tmp_path):
    spec, params = _small_model()
    with pytest.raises(ShapeError):
        save_model(params[:-1], spec, tmp_path / "bad.g3dc")


@pytest.mark.parametrize(
    "mangle, hint",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + (99).to_bytes(4, "little") + b[8:], "version"),
        (lambda b: b[:12] + (b[12] ^ 0xFF).to_bytes(1, "big") + b[13:], "header"),
        (lambda b: b[:-8], "parameter"),
        (lambda b: b + b"\x00" * 8, "parameter"),
        (lambda b: b[:6], ""),
    ],
)
def test_load_rejects_corruption(tmp_path, mangle, hint):
    spec, params = _small_model()
    path = tmp_path / "model.g3dc"
    save_model(params, spec, path)
    blob = path.read_bytes()
    bad = tmp_path / "corrupt.g3dc"
    bad.write_bytes(mangle(blob))
    with pytest.raises(FormatError) as err:
        load_model(bad)
    assert hint in str(err.value)


def test_load_rejects_garbage_header(tmp_path):
    spec, params = _small_model()
    path = tmp_path / "model.g3dc"
    save_model(params, spec, path)
    blob = bytearray(path.read_bytes())
    # splice garbage into the JSON while keeping its CRC consistent
    import json
    import struct
    import zlib

    header_len = struct.unpack_from("<I", blob, 8)[0]
    garbage = b'{"layers": "nope"}'
    rest = bytes(blob[16 + header_len:])
    out = blob[:8] + struct.pack("<II", len(garbage), zlib.crc32(garbage)) + garbage + rest
    bad = tmp_path / "garbage.g3dc"
    bad.write_bytes(out)
    with pytest.raises(FormatError):
        load_model(bad)
    del json

import math

import numpy as np
import pytest

from signflow import nn
from signflow.dataset import build_label_map


def tiny_spec(frames=3, dim=4, classes=2):
    return nn.ModelSpec(
        frames=frames,
        dim=dim,
        layers=(
            nn.LstmSpec(3, return_sequences=True),
            nn.LstmSpec(3, return_sequences=False),
            nn.DenseSpec(3, "relu"),
            nn.DenseSpec(classes, "softmax"),
        ),
    )


def zero_lstm(units, dim):
    return nn.LstmLayer(
        Wx=np.zeros((4 * units, dim)),
        Wh=np.zeros((4 * units, units)),
        b=np.zeros(4 * units),
    )


class TestSpec:
    def test_canonical_stack(self):
        spec = nn.sequence_classifier_spec()
        assert (spec.frames, spec.dim) == (30, 1662)
        assert spec.num_classes == 45
        units = [l.units for l in spec.layers]
        assert units == [64, 128, 64, 64, 32, 45]
        assert [l.return_sequences for l in spec.layers[:3]] == [True, True, False]
        assert spec.layers[-1].activation == "softmax"
        assert spec.input_dims() == [1662, 64, 128, 64, 64, 32]

    def test_invalid_stacks_rejected(self):
        with pytest.raises(nn.ShapeError):
            nn.ModelSpec(3, 4, (nn.DenseSpec(2, "softmax"),))
        with pytest.raises(nn.ShapeError):
            nn.ModelSpec(3, 4, (nn.LstmSpec(2, return_sequences=True), nn.DenseSpec(2, "softmax")))
        with pytest.raises(nn.ShapeError):
            nn.ModelSpec(3, 4, (
                nn.LstmSpec(2, return_sequences=False),
                nn.LstmSpec(2, return_sequences=False),
                nn.DenseSpec(2, "softmax"),
            ))


class TestParamCount:
    def test_full_model_is_598061(self):
        assert nn.param_count(nn.sequence_classifier_spec()) == 598061

    def test_per_layer_totals(self):
        spec = nn.sequence_classifier_spec()
        counts = [nn.layer_param_count(l, d) for l, d in zip(spec.layers, spec.input_dims())]
        assert counts == [442112, 98816, 49408, 4160, 2080, 1485]

    def test_single_dense_unit(self):
        assert nn.layer_param_count(nn.DenseSpec(1, "identity"), 1) == 2

    def test_single_lstm_unit(self):
        assert nn.layer_param_count(nn.LstmSpec(1), 1) == 12


class TestInitParams:
    def test_kernels_within_uniform_bound(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=0)
        for layer_spec, layer, d in zip(spec.layers, params.layers, spec.input_dims()):
            u = layer_spec.units
            if isinstance(layer, nn.LstmLayer):
                limit = math.sqrt(6.0 / (d + 4 * u))
                assert np.abs(layer.Wx).max() <= limit
            else:
                limit = math.sqrt(6.0 / (d + u))
                assert np.abs(layer.W).max() <= limit

    def test_recurrent_kernel_orthonormal_columns(self):
        params = nn.init_params(nn.sequence_classifier_spec(), seed=1)
        for layer in params.layers[:3]:
            k = layer.Wh
            np.testing.assert_allclose(k.T @ k, np.eye(k.shape[1]), atol=1e-10)

    def test_forget_bias_one_others_zero(self):
        params = nn.init_params(tiny_spec(), seed=2)
        for layer in params.layers:
            if not isinstance(layer, nn.LstmLayer):
                assert not layer.b.any()
                continue
            u = layer.units
            assert np.all(layer.b[u:2 * u] == 1.0)
            assert not layer.b[:u].any()
            assert not layer.b[2 * u:].any()

    def test_same_seed_identical(self):
        a = nn.init_params(tiny_spec(), seed=3)
        b = nn.init_params(tiny_spec(), seed=3)
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert ta.tobytes() == tb.tobytes()


class TestLstmStep:
    def test_zero_weights_zero_cell(self):
        layer = zero_lstm(3, 4)
        h, c, cache = nn.lstm_step(np.zeros(4), np.zeros(3), np.zeros(3), layer)
        np.testing.assert_array_equal(cache.i, 0.5)
        np.testing.assert_array_equal(cache.f, 0.5)
        np.testing.assert_array_equal(cache.o, 0.5)
        np.testing.assert_array_equal(cache.g, 0.0)
        assert not c.any() and not h.any()

    def test_zero_weights_unit_cell(self):
        layer = zero_lstm(3, 4)
        h, c, _ = nn.lstm_step(np.zeros(4), np.zeros(3), np.ones(3), layer)
        np.testing.assert_allclose(c, 0.5)
        np.testing.assert_allclose(h, 0.25)  # 0.5 * relu(0.5)

    def test_forget_bias_one_unit_cell(self):
        layer = zero_lstm(3, 4)
        layer.b[3:6] = 1.0  # forget block
        h, c, _ = nn.lstm_step(np.zeros(4), np.zeros(3), np.ones(3), layer)
        np.testing.assert_allclose(c, 0.7310585786300049, rtol=1e-12)
        np.testing.assert_allclose(h, 0.36552928931500245, rtol=1e-12)
        # matches the 5-decimal hand values
        assert round(float(c[0]), 5) == 0.73106
        assert round(float(h[0]), 5) == 0.36553

    def test_shape_mismatch(self):
        with pytest.raises(nn.ShapeError):
            nn.lstm_step(np.zeros(5), np.zeros(3), np.zeros(3), zero_lstm(3, 4))


class TestLstmForward:
    def test_single_step_flag_agreement(self):
        rng = np.random.default_rng(4)
        layer = nn.LstmLayer(
            Wx=rng.normal(size=(12, 4)), Wh=rng.normal(size=(12, 3)), b=rng.normal(size=12)
        )
        seq = rng.normal(size=(1, 4))
        seq_out, _ = nn.lstm_forward(seq, layer, return_sequences=True)
        last_out, _ = nn.lstm_forward(seq, layer, return_sequences=False)
        np.testing.assert_array_equal(seq_out[-1], last_out)

    def test_zero_everything_gives_zero(self):
        out, _ = nn.lstm_forward(np.zeros((6, 4)), zero_lstm(3, 4), return_sequences=True)
        assert not out.any()

    def test_output_shapes(self):
        rng = np.random.default_rng(5)
        layer = zero_lstm(3, 4)
        seq_out, _ = nn.lstm_forward(rng.normal(size=(7, 6, 4)), layer, True)
        last_out, _ = nn.lstm_forward(rng.normal(size=(7, 6, 4)), layer, False)
        assert seq_out.shape == (7, 6, 3)
        assert last_out.shape == (7, 3)

    def test_matches_repeated_steps(self):
        rng = np.random.default_rng(6)
        layer = nn.LstmLayer(
            Wx=rng.normal(size=(12, 4)) * 0.3,
            Wh=rng.normal(size=(12, 3)) * 0.3,
            b=rng.normal(size=12) * 0.3,
        )
        seq = rng.normal(size=(5, 4))
        fast, _ = nn.lstm_forward(seq, layer, return_sequences=True)
        h, c = np.zeros(3), np.zeros(3)
        for t in range(5):
            h, c, _ = nn.lstm_step(seq[t], h, c, layer)
            np.testing.assert_allclose(fast[t], h, rtol=1e-12, atol=1e-15)


class TestDenseForward:
    def test_identity_kernel_relu(self):
        layer = nn.DenseLayer(W=np.eye(2), b=np.zeros(2))
        out, _ = nn.dense_forward(np.array([-1.0, 2.0]), layer, "relu")
        assert out.tolist() == [0.0, 2.0]

    def test_zero_kernel_softmax_uniform(self):
        layer = nn.DenseLayer(W=np.zeros((45, 3)), b=np.zeros(45))
        out, _ = nn.dense_forward(np.ones(3), layer, "softmax")
        np.testing.assert_allclose(out, 1.0 / 45.0, rtol=1e-15)

    def test_bias_only_identity(self):
        layer = nn.DenseLayer(W=np.zeros((2, 3)), b=np.array([1.0, 2.0]))
        out, _ = nn.dense_forward(np.ones(3), layer, "identity")
        assert out.tolist() == [1.0, 2.0]


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(nn.softmax(np.zeros(3)), 1.0 / 3.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(4, 6))
        np.testing.assert_allclose(nn.softmax(z + 123.456), nn.softmax(z), rtol=1e-12)

    def test_large_magnitudes_stable(self):
        out = nn.softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-300)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(8)
        out = nn.softmax(rng.normal(size=(10, 45)) * 50)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestCrossEntropy:
    def test_perfect_prediction_zero_loss(self):
        y = np.array([[0.0, 1.0, 0.0]])
        assert nn.cross_entropy(y, y) == 0.0

    def test_uniform_over_45(self):
        p = np.full((1, 45), 1.0 / 45.0)
        y = np.zeros((1, 45))
        y[0, 7] = 1.0
        assert nn.cross_entropy(p, y) == pytest.approx(3.8066624897703196, rel=1e-12)

    def test_zero_probability_clamped(self):
        p = np.array([[0.0, 1.0]])
        y = np.array([[1.0, 0.0]])
        assert nn.cross_entropy(p, y) == pytest.approx(16.11809565095832, rel=1e-12)

    def test_batch_mean(self):
        p = np.array([[1.0, 0.0], [0.5, 0.5]])
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert nn.cross_entropy(p, y) == pytest.approx(math.log(2.0) / 2.0, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(nn.ShapeError):
            nn.cross_entropy(np.ones((1, 3)), np.ones((1, 4)))


class TestModelForward:
    def test_full_spec_single_sample(self):
        spec = nn.sequence_classifier_spec()
        params = nn.init_params(spec, seed=9)
        rng = np.random.default_rng(9)
        probs, _ = nn.model_forward(params, rng.random((1, 30, 1662)))
        assert probs.shape == (1, 45)
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_zero_params_uniform_probs(self):
        spec = tiny_spec(classes=5)
        params = nn.init_params(spec, seed=0)
        params = params.replace_tensors([np.zeros_like(t) for t in params.tensors()])
        probs, _ = nn.model_forward(params, np.random.default_rng(10).random((3, 3, 4)))
        np.testing.assert_allclose(probs, 0.2, rtol=1e-15)

    def test_row_permutation_equivariance(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=11)
        rng = np.random.default_rng(11)
        batch = rng.random((5, 3, 4))
        perm = rng.permutation(5)
        probs, _ = nn.model_forward(params, batch)
        probs_perm, _ = nn.model_forward(params, batch[perm])
        np.testing.assert_array_equal(probs[perm], probs_perm)

    def test_pure_function_bitwise(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=12)
        batch = np.random.default_rng(12).random((4, 3, 4))
        p1, _ = nn.model_forward(params, batch)
        p2, _ = nn.model_forward(params, batch)
        assert p1.tobytes() == p2.tobytes()

    def test_wrong_shape_rejected(self):
        params = nn.init_params(tiny_spec(), seed=0)
        with pytest.raises(nn.ShapeError):
            nn.model_forward(params, np.zeros((2, 5, 4)))


class TestModelBackward:
    def test_perfect_prediction_zeroes_output_bias_grad(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=13)
        batch = np.random.default_rng(13).random((2, 3, 4))
        probs, cache = nn.model_forward(params, batch)
        grads = dict(zip(params.tensor_names(), nn.model_backward(cache, probs)))
        assert not grads["layer3.bias"].any()

    def test_matches_finite_differences(self):
        from conftest import kink_gap, kink_safe_params, max_relative_error

        spec = tiny_spec()
        params = kink_safe_params(spec, seed=14)
        rng = np.random.default_rng(14)
        batch = rng.uniform(0.1, 1.0, (3, 3, 4))
        y = np.zeros((3, 2))
        y[np.arange(3), rng.integers(0, 2, 3)] = 1.0
        assert kink_gap(params, batch) > 1e-3  # finite differences valid here
        analytic = nn.model_backward(nn.model_forward(params, batch)[1], y)
        numeric = nn.numerical_gradient(params, batch, y, step=1e-5)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_duplicated_batch_leaves_gradients_unchanged(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=15)
        rng = np.random.default_rng(15)
        batch = rng.random((2, 3, 4))
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        g1 = nn.model_backward(nn.model_forward(params, batch)[1], y)
        g2 = nn.model_backward(
            nn.model_forward(params, np.concatenate([batch, batch]))[1],
            np.concatenate([y, y]),
        )
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


class TestFiniteDifference:
    def test_quadratic_toy(self):
        grads = nn.finite_difference(lambda ts: float(ts[0][0] ** 2), [np.array([3.0])], step=1e-5)
        assert grads[0][0] == pytest.approx(6.0, abs=1e-9)

    def test_gradient_vanishes_at_minimum(self):
        grads = nn.finite_difference(lambda ts: float(ts[0][0] ** 2), [np.array([0.0])], step=1e-5)
        assert abs(grads[0][0]) < 1e-12

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            nn.finite_difference(lambda ts: 0.0, [np.zeros(1)], step=0.0)


class TestModelCodec:
    def test_round_trip_forward_equal(self):
        spec = tiny_spec()
        params = nn.init_params(spec, seed=16)
        label_map = build_label_map(["no", "yes"])
        blob = nn.encode_model(params, label_map, seed=16)
        decoded, decoded_map, seed = nn.decode_model(blob)
        assert decoded_map.entries == label_map.entries
        assert seed == 16
        batch = np.random.default_rng(16).random((2, 3, 4))
        p1, _ = nn.model_forward(params, batch)
        p2, _ = nn.model_forward(decoded, batch)
        np.testing.assert_allclose(p1, p2, rtol=1e-5, atol=1e-7)
        # second encode is bit-identical: f32 rounding is idempotent
        assert nn.encode_model(decoded, decoded_map, seed=16) == blob

    def test_truncated_rejected(self):
        params = nn.init_params(tiny_spec(), seed=17)
        blob = nn.encode_model(params, build_label_map(["a", "b"]))
        with pytest.raises(nn.TruncatedPayloadError):
            nn.decode_model(blob[:-3])
        with pytest.raises(nn.TruncatedPayloadError):
            nn.decode_model(blob + b"\0\0\0\0")
        with pytest.raises(nn.TruncatedPayloadError):
            nn.decode_model(blob[:5])

    def test_payload_length_must_match_spec(self):
        params = nn.init_params(tiny_spec(), seed=18)
        blob = nn.encode_model(params, build_label_map(["a", "b"]))
        payload = blob[nn._MODEL_HEADER.size:]
        meta_len = nn._MODEL_HEADER.unpack_from(blob)[2]
        tensor_bytes = len(payload) - meta_len
        assert tensor_bytes == 4 * nn.param_count(params.spec)

    def test_bad_magic_and_version(self):
        params = nn.init_params(tiny_spec(), seed=19)
        blob = bytearray(nn.encode_model(params, build_label_map(["a", "b"])))
        with pytest.raises(nn.BadMagicError):
            nn.decode_model(b"XXXX" + bytes(blob[4:]))
        blob[4] = 9
        with pytest.raises(nn.VersionMismatchError):
            nn.decode_model(bytes(blob))

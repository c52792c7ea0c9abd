import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import numeric_gradients, random_triple, reference_forward, reference_loss, relative_errors
from uwinfer import nn
from uwinfer.dsp import InputPlane
from uwinfer.errors import FormatError, InvalidInputError

CFG = nn.ModelConfig(n=16, num_classes=4)


def separable_planes(count, seed, n=16):
    """Two classes: energy in the top rows vs the bottom rows, plus noise."""
    rng = np.random.default_rng(seed)
    data = []
    for i in range(count):
        label = i % 2
        x = 0.2 * rng.random((n, n))
        rows = slice(0, n // 3) if label == 0 else slice(n - n // 3, n)
        x[rows] += 0.6 + 0.4 * rng.random((n // 3, n))
        data.append((InputPlane(x), label))
    return data


class TestShapes:
    def test_n16_geometry(self):
        assert CFG.conv_out == 7
        assert CFG.flat_len == 392
        assert CFG.num_params == 8 * 10 + 392 * 4 + 4 == 1652

    def test_forward_output_length(self):
        model = nn.init_model(CFG, seed=0)
        z = nn.kernels.conv_forward(np.zeros((16, 16), np.float32), model.conv_weights, model.conv_bias, 2)
        assert z.shape == (7, 7, 8)
        assert nn.forward(model, np.zeros((16, 16))).probabilities.shape == (4,)

    def test_config_too_small(self):
        with pytest.raises(InvalidInputError):
            nn.ModelConfig(n=2, num_classes=2)

    def test_model_shape_checked(self):
        with pytest.raises(InvalidInputError):
            nn.Model(CFG, np.zeros((8, 3, 3)), np.zeros(8), np.zeros((391, 4)), np.zeros(4))


class TestForward:
    def test_zero_model_uniform(self):
        result = nn.forward(nn.zero_model(CFG), np.random.default_rng(0).random((16, 16)))
        np.testing.assert_allclose(result.probabilities, 0.25)
        assert result.predicted_class == 0  # tie goes to the lowest index

    def test_matches_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            model, x, _ = random_triple(rng, min_margin=0.0)
            _, ref_logits = reference_forward(model, x)
            np.testing.assert_allclose(nn.logits(model, x), ref_logits, rtol=1e-12, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            nn.forward(nn.zero_model(CFG), np.zeros((15, 15)))

    @given(seed=st.integers(0, 10_000))
    def test_probabilities_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        model = nn.init_model(CFG, seed)
        probs = nn.forward(model, rng.random((16, 16)) * 5).probabilities
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1) < 1e-6

    def test_softmax_shift_invariant(self):
        z = np.array([1.5, -3.0, 0.2, 7.0])
        np.testing.assert_allclose(nn.softmax(z), nn.softmax(z + 123.4), rtol=1e-12)

    @given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100))
    def test_argmax_invariant_to_positive_scaling(self, seed, scale):
        model = nn.init_model(CFG, seed)  # biases start at zero
        x = np.random.default_rng(seed).random((16, 16))
        a = nn.logits(model.astype(np.float64), x)
        b = nn.logits(model.astype(np.float64), x * scale)
        np.testing.assert_allclose(b, a * scale, rtol=1e-9, atol=1e-12)
        if np.sort(a)[-1] - np.sort(a)[-2] > 1e-9:
            assert np.argmax(a) == np.argmax(b)


class TestLoss:
    def test_zero_model_ln_c(self):
        assert nn.loss(nn.zero_model(CFG), np.ones((16, 16)), 2) == pytest.approx(np.log(4), abs=1e-6)

    def test_confident_prediction_near_zero(self):
        model = nn.zero_model(CFG)
        model.dense_bias[1] = 50.0
        assert nn.loss(model, np.zeros((16, 16)), 1) < 1e-12

    def test_floor_keeps_loss_finite(self):
        model = nn.zero_model(CFG)
        model.dense_bias[1] = 1e4
        assert nn.loss(model, np.zeros((16, 16)), 0) == pytest.approx(-np.log(1e-12))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            model, x, label = random_triple(rng, min_margin=0.0)
            assert nn.loss(model, x, label) == pytest.approx(reference_loss(model, x, label), abs=1e-9)

    @pytest.mark.parametrize("label", [-1, 4])
    def test_label_out_of_range(self, label):
        with pytest.raises(InvalidInputError):
            nn.loss(nn.zero_model(CFG), np.zeros((16, 16)), label)


class TestBackward:
    def test_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            model, x, label = random_triple(rng)
            analytic = nn.backward(model, x, label)
            numeric = numeric_gradients(model, x, label)
            for name, grad in zip(nn.TENSOR_NAMES, analytic):
                assert grad.shape == numeric[name].shape
                assert relative_errors(grad, numeric[name]).max() < 1e-4, name

    def test_zero_input_zero_conv_weight_grad(self):
        model = nn.init_model(CFG, 3)
        model.conv_bias[:] = 0.5
        grads = nn.backward(model, np.zeros((16, 16)), 1)
        assert np.all(grads.conv_weights == 0)
        assert np.any(grads.conv_bias != 0)

    def test_dense_bias_closed_form(self):
        model = nn.init_model(CFG, 4).astype(np.float64)
        x = np.random.default_rng(4).random((16, 16))
        probs = nn.forward(model, x).probabilities
        onehot = np.eye(4)[2]
        np.testing.assert_allclose(nn.backward(model, x, 2).dense_bias, probs - onehot, atol=1e-12)


class TestTrain:
    def test_separable_reaches_99(self):
        data = separable_planes(60, seed=0)
        model = nn.train(nn.init_model(nn.ModelConfig(16, 2), 0), data, 50, 0.05, seed=0)
        assert nn.accuracy(model, data) >= 0.99

    def test_zero_learning_rate(self):
        model = nn.init_model(CFG, 1)
        out = nn.train(model, separable_planes(8, 1), 3, 0.0, seed=0)
        assert out.equals(model)

    def test_deterministic(self):
        data = separable_planes(20, 2)
        a = nn.train(nn.init_model(nn.ModelConfig(16, 2), 5), data, 3, 0.05, seed=9)
        b = nn.train(nn.init_model(nn.ModelConfig(16, 2), 5), data, 3, 0.05, seed=9)
        assert nn.save_model(a) == nn.save_model(b)

    def test_does_not_mutate_input(self):
        model = nn.init_model(nn.ModelConfig(16, 2), 5)
        before = nn.save_model(model)
        nn.train(model, separable_planes(10, 3), 2, 0.1, seed=0)
        assert nn.save_model(model) == before

    def test_full_batch_loss_non_increasing(self):
        data = separable_planes(40, 4)
        model = nn.init_model(nn.ModelConfig(16, 2), 6)
        losses = [nn.mean_loss(model, data)]
        for epoch in range(20):
            model = nn.train(model, data, 1, 1e-3, seed=epoch, batch_size=len(data))
            losses.append(nn.mean_loss(model, data))
        assert all(b <= a + 1e-7 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_empty_dataset(self):
        with pytest.raises(InvalidInputError):
            nn.train(nn.init_model(CFG, 0), [], 1, 0.1, seed=0)


class TestWeightsFile:
    def test_roundtrip_exact(self):
        model = nn.init_model(CFG, 8)
        assert nn.load_model(nn.save_model(model)).equals(model)

    def test_size(self):
        assert len(nn.save_model(nn.init_model(CFG, 0))) == 14 + 1652 * 4

    def test_header_bytes(self):
        blob = nn.save_model(nn.zero_model(CFG))
        assert blob[:14] == b"AQNN" + bytes([1, 0, 0, 0, 16, 0, 4, 0, 8, 0])

    @settings(max_examples=25)
    @given(cut=st.integers(0, 14 + 1652 * 4 - 1))
    def test_truncated(self, cut):
        blob = nn.save_model(nn.init_model(CFG, 0))
        with pytest.raises(FormatError):
            nn.load_model(blob[:cut])

    @pytest.mark.parametrize("offset, value, field", [
        (0, b"XQNN", "magic"), (4, b"\x02\x00", "version"), (6, b"\x04\x00", "flags")])
    def test_bad_header_names_field(self, offset, value, field):
        blob = bytearray(nn.save_model(nn.zero_model(CFG)))
        blob[offset:offset + len(value)] = value
        with pytest.raises(FormatError) as info:
            nn.load_model(bytes(blob))
        assert info.value.field == field

    def test_shape_mismatch_header(self):
        blob = bytearray(nn.save_model(nn.zero_model(CFG)))
        blob[8:10] = (17).to_bytes(2, "little")  # claims N=17, payload is for N=16
        with pytest.raises(FormatError):
            nn.load_model(bytes(blob))

    def test_trailing_bytes(self):
        with pytest.raises(FormatError):
            nn.load_model(nn.save_model(nn.zero_model(CFG)) + b"\0")

"""Network assembly, shape inference, optimization and the weights format."""

import struct

import numpy as np
import pytest

from gradcheck import max_rel_err, numeric_grad
from meshid.errors import BadK, BadMagic, IoFailure, ShapeMismatch, VersionMismatch
from meshid.nn import (
    Adam,
    Network,
    NetworkConfig,
    Param,
    build_alexnet,
    conv,
    dense,
    flatten,
    infer_shapes,
    load_weights,
    maxpool,
    network_from_weights,
    parameter_count,
    predict_topk,
    relu,
    save_weights,
    softmax,
    softmax_cross_entropy,
    softmax_spec,
)
from meshid.nn.weights import MAGIC


def tiny_config(num_classes=3):
    return NetworkConfig(
        input_shape=(1, 2, 2),
        layers=(flatten(), dense(num_classes), softmax_spec()),
        num_classes=num_classes,
    )


def assert_milestones(config, milestones):
    """The listed shapes must appear in order along the layer stack."""
    shapes = infer_shapes(config)
    it = iter(shapes)
    for expected in milestones:
        assert any(shape == expected for shape in it), f"{expected} missing from {shapes}"


class TestShapeInference:
    def test_full_preset_milestones(self):
        assert_milestones(
            build_alexnet(1000, "full"),
            [
                (96, 55, 55),
                (96, 27, 27),
                (256, 27, 27),
                (256, 13, 13),
                (384, 13, 13),
                (256, 6, 6),
                (9216,),
                (4096,),
                (1000,),
            ],
        )

    def test_desk_preset_milestones(self):
        assert_milestones(
            build_alexnet(5, "desk"),
            [
                (16, 32, 32),
                (16, 16, 16),
                (32, 16, 16),
                (32, 8, 8),
                (64, 8, 8),
                (64, 4, 4),
                (1024,),
                (256,),
                (5,),
            ],
        )

    def test_dense_before_flatten_rejected(self):
        with pytest.raises(ShapeMismatch, match="flatten first"):
            NetworkConfig(input_shape=(1, 4, 4), layers=(dense(3),), num_classes=3)

    def test_kernel_too_big_rejected(self):
        with pytest.raises(ShapeMismatch, match="does not fit"):
            NetworkConfig(
                input_shape=(1, 4, 4),
                layers=(conv(2, 9), flatten(), dense(3)),
                num_classes=3,
            )

    def test_window_too_big_rejected(self):
        with pytest.raises(ShapeMismatch, match="does not fit"):
            NetworkConfig(
                input_shape=(1, 4, 4),
                layers=(maxpool(5, 1), flatten(), dense(3)),
                num_classes=3,
            )

    def test_tail_must_match_num_classes(self):
        with pytest.raises(ShapeMismatch, match="num_classes"):
            NetworkConfig(input_shape=(1, 2, 2), layers=(flatten(), dense(4)), num_classes=3)

    def test_zero_layer_config_rejected(self):
        with pytest.raises(ShapeMismatch, match="num_classes"):
            NetworkConfig(input_shape=(1, 2, 2), layers=(), num_classes=3)

    def test_bad_input_shape(self):
        with pytest.raises(ShapeMismatch, match="channels"):
            NetworkConfig(input_shape=(0, 2, 2), layers=(flatten(), dense(3)), num_classes=3)


class TestPresets:
    def test_unknown_preset(self):
        with pytest.raises(ShapeMismatch, match="preset"):
            build_alexnet(5, "pocket")

    def test_num_classes_must_be_positive(self):
        with pytest.raises(ShapeMismatch):
            build_alexnet(0, "desk")

    def test_lrn_toggle(self):
        assert any(s.kind == "lrn" for s in build_alexnet(5, "full").layers)
        assert not any(s.kind == "lrn" for s in build_alexnet(5, "full", lrn_enabled=False).layers)
        assert not any(s.kind == "lrn" for s in build_alexnet(5, "desk").layers)
        assert any(s.kind == "lrn" for s in build_alexnet(5, "desk", lrn_enabled=True).layers)

    def test_lrn_adds_no_parameters(self):
        with_lrn = parameter_count(build_alexnet(7, "desk", lrn_enabled=True))
        without = parameter_count(build_alexnet(7, "desk"))
        assert with_lrn == without


class TestParameterCount:
    def test_full_network_oracle(self):
        # Per layer: conv 34944 + 614656 + 885120 + 1327488 + 884992,
        # dense 37752832 + 16781312 + 4097000.
        assert parameter_count(build_alexnet(1000, "full")) == 62_378_344

    def test_desk_network_oracle(self):
        # conv 1216 + 4640 + 18496, dense 262400 + 1285.
        assert parameter_count(build_alexnet(5, "desk")) == 288_037

    def test_network_agrees_with_config_count(self):
        config = build_alexnet(5, "desk")
        assert Network(config).parameter_count() == parameter_count(config)

    def test_scales_with_classes(self):
        base = parameter_count(build_alexnet(5, "desk"))
        assert parameter_count(build_alexnet(6, "desk")) == base + 256 + 1


def small_conv_config():
    return NetworkConfig(
        input_shape=(2, 5, 5),
        layers=(conv(3, 3, pad=1), relu(), maxpool(2, 2), flatten(), dense(4), softmax_spec()),
        num_classes=4,
    )


class TestNetwork:
    def test_rejects_wrong_batch_shape(self):
        network = Network(tiny_config())
        with pytest.raises(ShapeMismatch, match="batch shape"):
            network.forward(np.zeros((2, 1, 3, 3), dtype=np.float32))
        with pytest.raises(ShapeMismatch, match="batch shape"):
            network.infer(np.zeros((1, 2, 2), dtype=np.float32))

    def test_infer_is_softmax_of_forward(self):
        network = Network(small_conv_config(), seed=3)
        x = np.random.default_rng(4).normal(size=(2, 2, 5, 5)).astype(np.float32)
        assert np.array_equal(network.infer(x), softmax(network.forward(x)))

    def test_infer_rows_are_distributions(self):
        network = Network(small_conv_config(), seed=5)
        probs = network.infer(np.random.default_rng(6).normal(size=(3, 2, 5, 5)))
        assert probs.shape == (3, 4)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_end_to_end_gradients(self):
        """Full stack gradcheck through the cross entropy loss in float64."""
        network = Network(small_conv_config(), seed=7, dtype=np.float64)
        x = np.random.default_rng(8).normal(size=(2, 2, 5, 5))
        labels = np.array([0, 3])

        def loss():
            return softmax_cross_entropy(network.forward(x), labels)[0]

        _, _, dlogits = softmax_cross_entropy(network.forward(x), labels)
        network.backward(dlogits)
        conv_layer = network.layers[0]
        dense_layer = network.layers[4]
        assert max_rel_err(conv_layer.w.grad, numeric_grad(loss, conv_layer.w.value)) < 1e-5
        assert max_rel_err(conv_layer.b.grad, numeric_grad(loss, conv_layer.b.value)) < 1e-5
        assert max_rel_err(dense_layer.w.grad, numeric_grad(loss, dense_layer.w.value)) < 1e-5

    def test_set_layer_params_group_count(self):
        network = Network(tiny_config())
        with pytest.raises(ShapeMismatch, match="layer groups"):
            network.set_layer_params([[]])

    def test_set_layer_params_tensor_count(self):
        network = Network(tiny_config())
        with pytest.raises(ShapeMismatch, match="tensors"):
            network.set_layer_params([[], [np.zeros((3, 4))], []])


def tie_network():
    """Classes 0 and 1 share the top probability for an all-zero input."""
    network = Network(tiny_config())
    w = np.zeros((3, 4), dtype=np.float32)
    b = np.array([0.5, 0.5, 0.2], dtype=np.float32)
    network.set_layer_params([[], [w, b], []])
    return network


class TestPredictTopk:
    def test_tie_breaks_toward_lower_index(self):
        hits = predict_topk(tie_network(), np.zeros((1, 2, 2), dtype=np.float32), k=2)
        assert [index for index, _ in hits] == [0, 1]
        assert hits[0][1] == hits[1][1]

    def test_full_k_is_a_permutation(self):
        hits = predict_topk(tie_network(), np.zeros((1, 2, 2), dtype=np.float32), k=3)
        assert sorted(index for index, _ in hits) == [0, 1, 2]
        assert sum(p for _, p in hits) == pytest.approx(1.0, abs=1e-6)
        assert hits[-1][0] == 2  # strictly smallest logit lands last

    @pytest.mark.parametrize("k", [0, 4, -1])
    def test_bad_k(self, k):
        with pytest.raises(BadK):
            predict_topk(tie_network(), np.zeros((1, 2, 2), dtype=np.float32), k=k)


class TestAdam:
    def make_param(self, value):
        return Param("w", np.asarray(value, dtype=np.float64))

    def test_zero_gradient_leaves_values_unchanged(self):
        param = self.make_param([1.0, -2.0, 3.0])
        param.grad = np.zeros(3)
        Adam([param], learning_rate=0.5).step()
        assert np.array_equal(param.value, [1.0, -2.0, 3.0])

    def test_missing_gradient_treated_as_zero(self):
        param = self.make_param([4.0])
        Adam([param], learning_rate=0.5).step()
        assert np.array_equal(param.value, [4.0])

    def test_first_step_moves_by_learning_rate(self):
        param = self.make_param([1.0])
        param.grad = np.ones(1)
        Adam([param], learning_rate=0.01).step()
        # Bias correction cancels, so the step is lr / (1 + eps).
        assert param.value[0] == pytest.approx(1.0 - 0.01, abs=1e-9)

    def test_constant_gradient_keeps_step_size(self):
        param = self.make_param([1.0])
        optimizer = Adam([param], learning_rate=0.01)
        for _ in range(2):
            param.grad = np.ones(1)
            optimizer.step()
        assert param.value[0] == pytest.approx(1.0 - 0.02, abs=1e-9)
        assert optimizer.t == 2

    def test_descends_a_quadratic(self):
        param = self.make_param([3.0])
        optimizer = Adam([param], learning_rate=0.1)
        for _ in range(200):
            param.grad = 2.0 * param.value
            optimizer.step()
        assert abs(param.value[0]) < 0.05


class TestWeights:
    @pytest.fixture()
    def saved(self, tmp_path):
        network = Network(small_conv_config(), seed=11)
        labels = ["bracket", "cone", "naïve-Ω", "torus"]
        path = tmp_path / "model.stwn"
        save_weights(path, network, labels)
        return path, network, labels

    def test_round_trip(self, saved):
        path, network, labels = saved
        config, tensors, loaded_labels = load_weights(path)
        assert config == network.config
        assert loaded_labels == labels
        for group, original in zip(tensors, network.layer_params()):
            assert len(group) == len(original)
            for tensor, expected in zip(group, original):
                assert tensor.dtype == np.float32
                assert np.array_equal(tensor, expected)

    def test_bytes_deterministic(self, saved, tmp_path):
        path, network, labels = saved
        again = tmp_path / "again.stwn"
        save_weights(again, network, labels)
        assert again.read_bytes() == path.read_bytes()

    def test_rebuilt_network_matches(self, saved):
        path, network, _ = saved
        rebuilt, labels = network_from_weights(path)
        assert labels[2] == "naïve-Ω"
        x = np.random.default_rng(12).normal(size=(2, 2, 5, 5)).astype(np.float32)
        assert np.array_equal(rebuilt.infer(x), network.infer(x))

    def test_label_count_checked_on_save(self, tmp_path):
        network = Network(tiny_config())
        with pytest.raises(ShapeMismatch, match="label table"):
            save_weights(tmp_path / "m.stwn", network, ["a", "b"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            load_weights(tmp_path / "absent.stwn")

    def test_short_file_is_bad_magic(self, tmp_path):
        path = tmp_path / "m.stwn"
        path.write_bytes(b"ST")
        with pytest.raises(BadMagic):
            load_weights(path)

    def test_wrong_magic(self, saved):
        path, _, _ = saved
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(BadMagic):
            load_weights(path)

    def test_version_bump(self, saved):
        path, _, _ = saved
        data = bytearray(path.read_bytes())
        struct.pack_into("<H", data, 4, 2)
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            load_weights(path)

    @pytest.mark.parametrize("fraction", [0.1, 0.5, 0.95])
    def test_truncation(self, saved, fraction):
        path, _, _ = saved
        data = path.read_bytes()
        cut = max(6, int(len(data) * fraction))
        path.write_bytes(data[:cut])
        with pytest.raises(ShapeMismatch, match="ends early"):
            load_weights(path)

    def test_trailing_bytes(self, saved):
        path, _, _ = saved
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ShapeMismatch, match="trailing"):
            load_weights(path)

    def test_transposed_tensor_rejected(self, saved):
        path, network, _ = saved
        _, tensors, _ = load_weights(path)
        tensors[4][0] = tensors[4][0].T
        fresh = Network(network.config)
        with pytest.raises(ShapeMismatch, match="stored shape"):
            fresh.set_layer_params(tensors)

    def test_crafted_label_mismatch(self, tmp_path):
        blob = bytearray()
        blob += MAGIC
        blob += struct.pack("<H", 1)
        blob += struct.pack("<3I", 1, 2, 2)
        blob += struct.pack("<I", 3)  # claims three classes
        blob += struct.pack("<I", 2)  # but stores two labels
        for label in (b"a", b"b"):
            blob += struct.pack("<I", len(label)) + label
        blob += struct.pack("<I", 0)  # zero layers
        path = tmp_path / "m.stwn"
        path.write_bytes(bytes(blob))
        with pytest.raises(ShapeMismatch, match="label table"):
            load_weights(path)

    def test_crafted_zero_layer_stack(self, tmp_path):
        blob = bytearray()
        blob += MAGIC
        blob += struct.pack("<H", 1)
        blob += struct.pack("<3I", 1, 2, 2)
        blob += struct.pack("<I", 2)
        blob += struct.pack("<I", 2)
        for label in (b"a", b"b"):
            blob += struct.pack("<I", len(label)) + label
        blob += struct.pack("<I", 0)
        path = tmp_path / "m.stwn"
        path.write_bytes(bytes(blob))
        # An empty stack cannot end in the class shape.
        with pytest.raises(ShapeMismatch, match="num_classes"):
            load_weights(path)

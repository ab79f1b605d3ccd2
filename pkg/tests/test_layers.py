import numpy as np
import pytest

from funnelrank.layers import (GruCell, MlpBlock, forward_mlp, gru_step,
                               init_weight, param_rng)
from funnelrank.tensor import ShapeError, Tensor


def identity_init(block: MlpBlock) -> MlpBlock:
    for w, b in zip(block.weights, block.biases):
        w.data[...] = np.eye(*w.shape)
        b.data[...] = 0.0
    return block


class TestMlpBlock:
    def test_identity_block_passes_input_through(self):
        block = identity_init(MlpBlock([3, 3], "identity", name="m", root_seed=0))
        x = np.array([[1.0, 2.0, 3.0]])
        out = forward_mlp(block, Tensor(x))
        assert np.array_equal(out.data, x)

    def test_zero_block_annihilates(self):
        block = MlpBlock([3, 2], "relu", name="m", root_seed=0)
        for p in block.params().values():
            p.data[...] = 0.0
        out = forward_mlp(block, Tensor(np.array([[5.0, -1.0, 2.0]])))
        assert np.array_equal(out.data, np.zeros((1, 2)))

    def test_seed0_block_matches_hand_matmul(self):
        # independent straight-line oracle: re-multiply the weights by hand
        block = MlpBlock([2, 2], "identity", name="blk", root_seed=0)
        x = np.array([[1.0, 0.0]])
        expected = x @ block.weights[0].data + block.biases[0].data
        out = forward_mlp(block, Tensor(x))
        assert np.array_equal(out.data, expected)

    def test_hidden_activation_applies_to_hidden_layers_only(self):
        block = MlpBlock([2, 2, 2], "relu", name="m", root_seed=1)
        for w, b in zip(block.weights, block.biases):
            w.data[...] = np.eye(2)
            b.data[...] = 0.0
        out = forward_mlp(block, Tensor(np.array([[-3.0, 2.0]])))
        # relu after layer 1 kills the negative; final layer stays linear
        assert np.array_equal(out.data, [[0.0, 2.0]])

    def test_dimension_error(self):
        block = MlpBlock([3, 2], name="m", root_seed=0)
        with pytest.raises(ShapeError):
            forward_mlp(block, Tensor(np.ones((1, 4))))

    def test_param_count_formula(self):
        assert MlpBlock([4, 3], name="m", root_seed=0).param_count() == 15
        assert MlpBlock([8, 5, 2], name="m", root_seed=0).param_count() == 9 * 5 + 6 * 2

    def test_bad_widths_and_activation(self):
        with pytest.raises(ValueError):
            MlpBlock([4], name="m", root_seed=0)
        with pytest.raises(ValueError):
            MlpBlock([4, 0], name="m", root_seed=0)
        with pytest.raises(ValueError):
            MlpBlock([4, 2], "swish", name="m", root_seed=0)


class TestGruCell:
    def test_zero_weights_zero_hidden_fixed_point(self):
        cell = GruCell(3, 2, name="g", root_seed=0)
        for p in cell.params().values():
            p.data[...] = 0.0
        h = gru_step(cell, Tensor(np.array([[9.0, -4.0, 1.0]])), Tensor(np.zeros((1, 2))))
        assert np.array_equal(h.data, np.zeros((1, 2)))

    def test_zero_candidate_weights_zero_hidden(self):
        # W_h = 0 and h_prev = 0 force h_t = 0 regardless of the gate inputs
        cell = GruCell(2, 2, name="g", root_seed=3)
        for name, p in cell.params().items():
            if name.endswith(("W_h", "U_h", "b_h")):
                p.data[...] = 0.0
        h = gru_step(cell, Tensor(np.array([[5.0, -2.0]])), Tensor(np.zeros((1, 2))))
        assert np.allclose(h.data, 0.0, atol=1e-16)

    def test_seed0_step_matches_scalar_oracle(self):
        # straight-line re-evaluation of the four equations, scalar by scalar
        cell = GruCell(2, 2, name="cell", root_seed=0)
        p = {k.split(".")[-1]: v.data for k, v in cell.params().items()}
        x = np.array([1.0, 1.0])
        h = np.array([0.0, 0.0])

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        expected = np.empty(2)
        z = sig(x @ p["W_z"] + h @ p["U_z"] + p["b_z"])
        r = sig(x @ p["W_r"] + h @ p["U_r"] + p["b_r"])
        cand = np.tanh(x @ p["W_h"] + (r * h) @ p["U_h"] + p["b_h"])
        for i in range(2):
            expected[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i]
        out = gru_step(cell, Tensor(x.reshape(1, 2)), Tensor(h.reshape(1, 2)))
        assert np.allclose(out.data[0], expected, atol=1e-15)

    def test_output_stays_in_open_unit_ball_for_bounded_hidden(self):
        rng = np.random.default_rng(7)
        cell = GruCell(4, 3, name="g", root_seed=7)
        for _ in range(50):
            x = Tensor(rng.normal(scale=5.0, size=(1, 4)))
            h_prev = Tensor(rng.uniform(-1.0, 1.0, size=(1, 3)))
            h = cell.step(x, h_prev)
            assert (np.abs(h.data) < 1.0).all()

    def test_param_count_three_gates(self):
        assert GruCell(4, 8, name="g", root_seed=0).param_count() == 312

    def test_shape_errors(self):
        cell = GruCell(3, 2, name="g", root_seed=0)
        with pytest.raises(ShapeError):
            cell.step(Tensor(np.ones((1, 4))), Tensor(np.zeros((1, 2))))
        with pytest.raises(ShapeError):
            cell.step(Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 3))))


class TestSeededInit:
    def test_same_name_same_values(self):
        a = init_weight(0, "layer.w0", 4, (4, 3))
        b = init_weight(0, "layer.w0", 4, (4, 3))
        assert np.array_equal(a, b)

    def test_different_names_decorrelated(self):
        a = init_weight(0, "layer.w0", 4, (4, 3))
        b = init_weight(0, "layer.w1", 4, (4, 3))
        assert not np.array_equal(a, b)

    def test_bound_scales_with_fan_in(self):
        w = init_weight(0, "w", 100, (100, 50))
        assert np.abs(w).max() <= np.sqrt(1.0 / 100)

    def test_rng_is_stable_across_processes(self):
        # hash-based seeding must not depend on PYTHONHASHSEED
        assert param_rng(5, "x").integers(1 << 30) == param_rng(5, "x").integers(1 << 30)

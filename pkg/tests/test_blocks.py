"""Block-level behavior: SE gates, residual units, MBConv, classifier head."""

import numpy as np
import pytest

from morphnet.blocks import (
    HeadConfig,
    MBConvConfig,
    ResidualConfig,
    SEConfig,
    head_forward,
    init_head_params,
    init_mbconv_params,
    init_se_params,
    mbconv_forward,
    param_count,
    residual_forward,
    se_block,
    se_excite,
    se_scale,
    se_squeeze,
)
from morphnet.tensor import (
    Parameter,
    ShapeError,
    Tensor,
    backward,
    depthwise_conv2d,
    grad_check,
    pointwise_conv,
    precision,
    relu,
)


def rand_tensor(shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(0, scale, size=shape))


class TestSESqueeze:
    def test_constant_channels(self):
        u = np.zeros((4, 4, 2), dtype=np.float32)
        u[..., 0] = 3.0
        u[..., 1] = -1.0
        np.testing.assert_allclose(se_squeeze(Tensor(u)).data, [3.0, -1.0])

    def test_forced_mean(self):
        u = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
        assert se_squeeze(u).data[0] == pytest.approx(2.5)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        u = rng.normal(size=(5, 6, 3)).astype(np.float32)
        got = se_squeeze(Tensor(u)).data
        want = np.array([u[:, :, c].mean() for c in range(3)])
        np.testing.assert_allclose(got, want, rtol=1e-6)


class TestSEExcite:
    def cfg(self, d=8, m=2, **kw):
        return SEConfig(d, m, **kw)

    def zero_params(self, d, m):
        return (
            Tensor(np.zeros((d, m))),
            Tensor(np.zeros((m, d))),
            Tensor(np.zeros(m)),
            Tensor(np.zeros(d)),
        )

    def test_zero_weights_give_half_gates(self):
        d, m = 8, 2
        w1, w2, b1, b2 = self.zero_params(d, m)
        s = se_excite(rand_tensor((d,), 0), self.cfg(d, m), w1, w2, b1, b2)
        np.testing.assert_allclose(s.data, np.full(d, 0.5))

    def test_variants_are_equivalent(self):
        d, m = 12, 3
        rng = np.random.default_rng(10)
        w1 = Tensor(rng.normal(size=(d, m)))
        w2 = Tensor(rng.normal(size=(m, d)))
        b1 = Tensor(rng.normal(size=m))
        b2 = Tensor(rng.normal(size=d))
        for seed in range(20):
            z = rand_tensor((d,), seed)
            a = se_excite(z, self.cfg(d, m, variant="fc_sigmoid"), w1, w2, b1, b2).data
            b = se_excite(z, self.cfg(d, m, variant="pointwise"), w1, w2, b1, b2).data
            np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-7)

    def test_sigmoid_gates_are_in_open_unit_interval(self):
        d, m = 10, 4
        rng = np.random.default_rng(3)
        w1 = Tensor(rng.normal(size=(d, m)))
        w2 = Tensor(rng.normal(size=(m, d)))
        s = se_excite(rand_tensor((d,), 5), self.cfg(d, m), w1, w2)
        assert np.all(s.data > 0) and np.all(s.data < 1)

    def test_relu_gate_is_unbounded(self):
        d, m = 4, 2
        w1 = Tensor(np.full((d, m), 2.0))
        w2 = Tensor(np.full((m, d), 2.0))
        z = Tensor(np.ones(d))
        s = se_excite(z, self.cfg(d, m, gate_activation="relu_unbounded"), w1, w2)
        assert np.all(s.data > 1.0)

    def test_parameter_count_with_bottleneck(self):
        d, m = 16, 4
        params = init_se_params(d, m, np.random.default_rng(0))
        # two dense layers with biases: d*m + m, then m*d + d
        assert param_count(params) == (16 * 4 + 4) + (4 * 16 + 16) == 148

    def test_bottleneck_shape_mismatch(self):
        w1 = Tensor(np.zeros((8, 3)))
        w2 = Tensor(np.zeros((2, 8)))  # bottleneck disagrees
        with pytest.raises(ShapeError):
            se_excite(rand_tensor((8,), 1), self.cfg(8, 2), w1, w2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SEConfig(8, 0)
        with pytest.raises(ValueError):
            SEConfig(8, 9)
        with pytest.raises(ValueError):
            SEConfig(8, 2, variant="dense")


class TestSEScale:
    def test_unit_gates_identity(self):
        u = rand_tensor((3, 3, 4), 2)
        out = se_scale(u, Tensor(np.ones(4)))
        np.testing.assert_array_equal(out.data, u.data)

    def test_zero_gates(self):
        u = rand_tensor((3, 3, 4), 2)
        assert np.all(se_scale(u, Tensor(np.zeros(4))).data == 0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        u = rng.normal(size=(4, 5, 3)).astype(np.float32)
        s = rng.uniform(size=3).astype(np.float32)
        got = se_scale(Tensor(u), Tensor(s)).data
        want = np.empty_like(u)
        for c in range(3):
            want[:, :, c] = u[:, :, c] * s[c]
        np.testing.assert_allclose(got, want, rtol=1e-6)

    def test_batched_per_sample_gates(self):
        rng = np.random.default_rng(9)
        u = rng.normal(size=(2, 3, 3, 4)).astype(np.float32)
        s = rng.uniform(size=(2, 4)).astype(np.float32)
        got = se_scale(Tensor(u), Tensor(s)).data
        np.testing.assert_allclose(got, u * s[:, None, None, :], rtol=1e-6)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            se_scale(rand_tensor((3, 3, 4), 0), Tensor(np.ones(5)))

    def test_sigmoid_gated_block_never_amplifies(self):
        d = 6
        params = init_se_params(d, 2, np.random.default_rng(4))
        for seed in range(10):
            u = rand_tensor((4, 4, d), seed, scale=3.0)
            out = se_block(u, SEConfig(d, 2), params)
            assert np.abs(out.data).max() <= np.abs(u.data).max() + 1e-6


class TestResidual:
    def test_zero_inner_is_relu(self):
        cfg = ResidualConfig(5)
        params = {"w1": Tensor(np.zeros((5, 5))), "w2": Tensor(np.zeros((5, 5)))}
        a = rand_tensor((5,), 1)
        np.testing.assert_allclose(residual_forward(a, cfg, params).data, np.maximum(a.data, 0))

    def test_identity_on_nonnegative_input(self):
        cfg = ResidualConfig(4)
        params = {"w1": Tensor(np.zeros((4, 4))), "w2": Tensor(np.zeros((4, 4)))}
        a = Tensor(np.array([0.0, 1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(residual_forward(a, cfg, params).data, a.data)

    def test_matches_composition_oracle(self):
        rng = np.random.default_rng(12)
        d = 6
        w1 = rng.normal(size=(d, d)).astype(np.float32)
        w2 = rng.normal(size=(d, d)).astype(np.float32)
        a = rng.normal(size=d).astype(np.float32)
        got = residual_forward(
            Tensor(a), ResidualConfig(d), {"w1": Tensor(w1), "w2": Tensor(w2)}
        ).data
        want = np.maximum(a + np.maximum(a @ w1, 0) @ w2, 0)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)

    def test_skip_gradient_is_one_when_inner_is_zero(self):
        cfg = ResidualConfig(3)
        params = {"w1": Tensor(np.zeros((3, 3))), "w2": Tensor(np.zeros((3, 3)))}
        a = Parameter([1.0, 2.0, 3.0])
        backward(residual_forward(a, cfg, params).sum())
        np.testing.assert_allclose(a.grad, np.ones(3))

    def test_shape_mismatch(self):
        params = {"w1": Tensor(np.zeros((3, 3))), "w2": Tensor(np.zeros((3, 3)))}
        with pytest.raises(ShapeError):
            residual_forward(rand_tensor((4,), 0), ResidualConfig(3), params)


class TestMBConv:
    def manual_inner(self, x, cfg, params):
        h = x
        if cfg.expansion_ratio > 1:
            h = relu(pointwise_conv(h, params["expand.kernel"], bias=params["expand.bias"]))
        h = relu(
            depthwise_conv2d(
                h, params["dw.kernel"], bias=params["dw.bias"], stride=cfg.stride, padding="same"
            )
        )
        h = se_block(h, SEConfig(cfg.expanded_channels, cfg.se_units), params)
        return pointwise_conv(h, params["project.kernel"], bias=params["project.bias"])

    def test_skip_active_when_stride1_and_channels_match(self):
        cfg = MBConvConfig(8, 8, kernel_size=3, stride=1, expansion_ratio=2)
        assert cfg.has_skip
        params = init_mbconv_params(cfg, np.random.default_rng(0))
        x = rand_tensor((6, 6, 8), 1)
        out = mbconv_forward(x, cfg, params)
        inner = self.manual_inner(x, cfg, params)
        np.testing.assert_allclose(out.data - inner.data, x.data, rtol=1e-5, atol=1e-6)

    def test_no_skip_on_channel_change(self):
        cfg = MBConvConfig(8, 12, stride=1, expansion_ratio=2)
        assert not cfg.has_skip
        params = init_mbconv_params(cfg, np.random.default_rng(0))
        out = mbconv_forward(rand_tensor((6, 6, 8), 1), cfg, params)
        assert out.shape == (6, 6, 12)

    def test_stride2_halves_spatial_dims_ceil(self):
        cfg = MBConvConfig(4, 8, stride=2, expansion_ratio=2)
        params = init_mbconv_params(cfg, np.random.default_rng(0))
        out = mbconv_forward(rand_tensor((7, 7, 4), 2), cfg, params)
        assert out.shape == (4, 4, 8)

    def test_parameter_count_hand_tally(self):
        cfg = MBConvConfig(16, 16, kernel_size=3, stride=1, expansion_ratio=6, se_bottleneck=0.25)
        assert cfg.expanded_channels == 96 and cfg.se_units == 4
        params = init_mbconv_params(cfg, np.random.default_rng(0))
        expand = 16 * 96 + 96
        dw = 3 * 3 * 96 + 96
        se = (96 * 4 + 4) + (4 * 96 + 96)
        project = 96 * 16 + 16
        assert param_count(params) == expand + dw + se + project == 5012

    def test_expansion_one_skips_expand_layer(self):
        cfg = MBConvConfig(8, 8, expansion_ratio=1)
        params = init_mbconv_params(cfg, np.random.default_rng(0))
        assert "expand.kernel" not in params
        out = mbconv_forward(rand_tensor((5, 5, 8), 3), cfg, params)
        assert out.shape == (5, 5, 8)

    def test_batched_input(self):
        cfg = MBConvConfig(4, 6, stride=2, expansion_ratio=2)
        params = init_mbconv_params(cfg, np.random.default_rng(1))
        out = mbconv_forward(rand_tensor((3, 8, 8, 4), 4), cfg, params)
        assert out.shape == (3, 4, 4, 6)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MBConvConfig(8, 8, kernel_size=4)
        with pytest.raises(ValueError):
            MBConvConfig(8, 8, stride=3)
        with pytest.raises(ValueError):
            MBConvConfig(8, 8, expansion_ratio=0)


class TestHead:
    def test_classification_sums_to_one(self):
        cfg = HeadConfig(mode="classify")
        params = init_head_params(cfg, 10, np.random.default_rng(0))
        out = head_forward(rand_tensor((4, 4, 10), 1), cfg, params, training=False)
        assert out.shape == (7,)
        assert out.data.sum() == pytest.approx(1.0, abs=1e-6)

    def test_inference_is_deterministic(self):
        cfg = HeadConfig(mode="classify")
        params = init_head_params(cfg, 6, np.random.default_rng(0))
        x = rand_tensor((3, 3, 6), 2)
        a = head_forward(x, cfg, params, training=False).data
        b = head_forward(x, cfg, params, training=False).data
        np.testing.assert_array_equal(a, b)

    def test_regression_outputs_in_unit_interval(self):
        cfg = HeadConfig(mode="regress")
        params = init_head_params(cfg, 6, np.random.default_rng(0))
        out = head_forward(rand_tensor((3, 3, 6), 3, scale=4.0), cfg, params)
        assert out.shape == (37,)
        assert np.all(out.data > 0) and np.all(out.data < 1)

    def test_training_needs_rng_for_dropout(self):
        cfg = HeadConfig()
        params = init_head_params(cfg, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            head_forward(rand_tensor((2, 2, 4), 0), cfg, params, training=True)

    def test_batched_output_rows_normalized(self):
        cfg = HeadConfig(mode="classify")
        params = init_head_params(cfg, 5, np.random.default_rng(0))
        out = head_forward(rand_tensor((3, 4, 4, 5), 6), cfg, params)
        assert out.shape == (3, 7)
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(3), rtol=1e-6)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            HeadConfig(mode="both")


class TestBlockGradients:
    def test_two_block_toy_network(self):
        """End-to-end gradient check through MBConv + SE + head pieces."""
        cfg = MBConvConfig(2, 2, kernel_size=3, stride=1, expansion_ratio=2)

        def builder(x, ek, dk, w1, w2, pk):
            params = {
                "expand.kernel": ek,
                "expand.bias": Tensor(np.zeros(4)),
                "dw.kernel": dk,
                "dw.bias": Tensor(np.zeros(4)),
                "se.w1": w1,
                "se.w2": w2,
                "se.b1": Tensor(np.zeros(1)),
                "se.b2": Tensor(np.zeros(4)),
                "project.kernel": pk,
                "project.bias": Tensor(np.zeros(2)),
            }
            h = mbconv_forward(x, cfg, params)
            h = mbconv_forward(h, cfg, params)
            return (h * h).sum()

        shapes = [(1, 4, 4, 2), (1, 1, 2, 4), (3, 3, 4), (4, 1), (1, 4), (1, 1, 4, 2)]
        with precision(np.float64):
            err = grad_check(builder, shapes, seed=3)
        assert err < 1e-6, f"toy network gradient mismatch: {err}"

    def test_head_gradients(self):
        cfg = HeadConfig(mode="classify", dropout_rate=0.0)
        y = np.zeros(7)
        y[2] = 1.0

        def builder(x, w1, b1, w2, b2):
            from morphnet.tensor import cross_entropy

            params = {"fc1.w": w1, "fc1.b": b1, "fc2.w": w2, "fc2.b": b2}
            out = head_forward(x, cfg, params, training=False)
            return cross_entropy(out, y)

        with precision(np.float64):
            err = grad_check(builder, [(3, 3, 4), (4, 64), (64,), (64, 7), (7,)], seed=5)
        assert err < 1e-6

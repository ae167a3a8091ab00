import numpy as np
import pytest

from lncm.errors import DimensionError, ParamError
from lncm.tensor_core import (Kernel, Plane, clip_plane, compose_spatial, conv2d,
                              delta_kernel, matmul, zero_pad)


def quad_loop_conv(x, taps):
    """Brute-force scalar oracle for single-channel valid cross-correlation."""
    kh, kw = taps.shape
    hout, wout = x.shape[0] - kh + 1, x.shape[1] - kw + 1
    out = np.empty((hout, wout))
    for r in range(hout):
        for c in range(wout):
            s = 0.0
            for dy in range(kh):
                for dx in range(kw):
                    s += taps[dy, dx] * x[r + dy, c + dx]
            out[r, c] = s
    return out


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 3))
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_manual_example(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[5.0], [6.0]])
        assert np.array_equal(out, [[17.0], [39.0]])

    def test_associativity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.max(np.abs(left - right) / (1 + np.abs(right))) <= 1e-12

    def test_distributivity(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = rng.standard_normal((7, 16))
            b = rng.standard_normal((16, 5))
            c = rng.standard_normal((16, 5))
            lhs = matmul(a, b + c)
            rhs = matmul(a, b) + matmul(a, c)
            assert np.max(np.abs(lhs - rhs) / (1 + np.abs(rhs))) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 2)))

    def test_rejects_nan(self):
        with pytest.raises(ParamError):
            matmul(np.array([[np.nan, 1.0]]), np.ones((2, 1)))


class TestConv2d:
    def test_delta_kernel_identity(self):
        rng = np.random.default_rng(3)
        p = Plane(rng.uniform(0, 255, (6, 7)))
        out = conv2d(p, delta_kernel(1))
        assert np.array_equal(out[0], p.samples)

    def test_all_ones_summation(self):
        p = Plane(np.ones((3, 3)))
        k = Kernel(np.ones((1, 1, 3, 3)))
        out = conv2d(p, k, mode="valid")
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 9.0

    def test_matches_quad_loop_oracle_exactly(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 255, (8, 8))
        taps = rng.standard_normal((3, 3))
        got = conv2d(x, Kernel(taps.reshape(1, 1, 3, 3)))[0]
        want = quad_loop_conv(x, taps)
        assert np.array_equal(got, want)  # bit-exact, same accumulation order

    def test_multichannel_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 255, (3, 9, 10))
        taps = rng.standard_normal((2, 3, 3, 3))
        got = conv2d(x, Kernel(taps))
        want = np.zeros((2, 7, 8))
        for o in range(2):
            for i in range(3):
                want[o] += quad_loop_conv(x[i], taps[o, i])
        assert np.max(np.abs(got - want) / (1 + np.abs(want))) <= 1e-12

    def test_same_zero_pad_dims_and_values(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 255, (5, 6))
        taps = rng.standard_normal((1, 1, 3, 3))
        got = conv2d(x, Kernel(taps), mode="same_zero_pad")
        assert got.shape == (1, 5, 6)
        padded = zero_pad(x, 1, 1)
        want = conv2d(padded, Kernel(taps), mode="valid")
        assert np.array_equal(got, want)

    def test_bias_added_per_channel(self):
        x = np.zeros((4, 4))
        k = Kernel(np.zeros((2, 1, 1, 1)), bias=[1.5, -2.0])
        out = conv2d(x, k)
        assert np.all(out[0] == 1.5) and np.all(out[1] == -2.0)

    def test_valid_too_small(self):
        with pytest.raises(DimensionError):
            conv2d(np.ones((2, 2)), Kernel(np.ones((1, 1, 3, 3))))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            conv2d(np.ones((2, 4, 4)), Kernel(np.ones((1, 1, 3, 3))))

    def test_bad_mode(self):
        with pytest.raises(ParamError):
            conv2d(np.ones((4, 4)), delta_kernel(1), mode="reflect")


class TestComposeSpatial:
    def test_identity_composition(self):
        rng = np.random.default_rng(7)
        k = Kernel(rng.standard_normal((2, 3, 3, 3)))
        fused = compose_spatial(k, delta_kernel(2))
        assert fused.taps.shape == k.taps.shape
        assert np.allclose(fused.taps, k.taps)

    def test_srcnn_shapes_give_13x13(self):
        rng = np.random.default_rng(8)
        k1 = Kernel(rng.standard_normal((64, 1, 9, 9)))
        k2 = Kernel(rng.standard_normal((32, 64, 1, 1)))
        k3 = Kernel(rng.standard_normal((1, 32, 5, 5)))
        fused = compose_spatial(compose_spatial(k1, k2), k3)
        assert (fused.kh, fused.kw) == (13, 13)
        assert fused.taps.size == 169

    @pytest.mark.parametrize("chans", [(1, 4, 2), (3, 8, 1), (1, 64, 32)])
    def test_fused_equals_sequential(self, chans):
        c0, c1, c2 = chans
        rng = np.random.default_rng(c0 * 100 + c1)
        k1 = Kernel(rng.standard_normal((c1, c0, 3, 3)), rng.standard_normal(c1))
        k2 = Kernel(rng.standard_normal((c2, c1, 3, 3)), rng.standard_normal(c2))
        fused = compose_spatial(k1, k2)
        x = rng.uniform(0, 255, (c0, 12, 12))
        seq = conv2d(conv2d(x, k1), k2)
        direct = conv2d(x, fused)
        assert seq.shape == direct.shape
        assert np.max(np.abs(seq - direct) / (1 + np.abs(seq))) <= 1e-9

    def test_bias_folding_formula(self):
        rng = np.random.default_rng(9)
        k1 = Kernel(rng.standard_normal((3, 1, 2, 2)), rng.standard_normal(3))
        k2 = Kernel(rng.standard_normal((2, 3, 2, 2)), rng.standard_normal(2))
        fused = compose_spatial(k1, k2)
        want = k2.taps.sum(axis=(2, 3)) @ k1.bias + k2.bias
        assert np.allclose(fused.bias, want)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            compose_spatial(delta_kernel(2), delta_kernel(3))


class TestTypes:
    def test_kernel_validation(self):
        with pytest.raises(DimensionError):
            Kernel(np.ones((2, 2)))
        with pytest.raises(ParamError):
            Kernel(np.full((1, 1, 1, 1), np.inf))
        with pytest.raises(DimensionError):
            Kernel(np.ones((2, 1, 3, 3)), bias=[1.0])

    def test_plane_validation(self):
        with pytest.raises(ParamError):
            Plane(np.ones((2, 2)), bit_depth=12)
        p = Plane(np.ones((3, 5)), bit_depth=10)
        assert (p.width, p.height, p.max_value, p.mid_value) == (5, 3, 1023, 512)

    def test_immutability(self):
        p = Plane(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            p.samples[0, 0] = 1.0
        k = delta_kernel(1)
        with pytest.raises(ValueError):
            k.taps[0, 0, 0, 0] = 2.0

    def test_purity_identical_outputs(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(0, 255, (2, 10, 10))
        k = Kernel(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3))
        a = conv2d(x, k)
        b = conv2d(x, k)
        assert np.array_equal(a, b)

    def test_clip_plane(self):
        p = Plane(np.array([[-3.2, 0.4], [254.6, 300.0]]))
        c = clip_plane(p)
        assert np.array_equal(c.samples, [[0.0, 0.0], [255.0, 255.0]])

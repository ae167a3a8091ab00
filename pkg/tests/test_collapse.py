import numpy as np
import pytest

from lncm.collapse import (AffineMap, ConvStack, LinearFcn, collapse_affine,
                           collapse_conv, count_params, prune_taps,
                           verify_equivalence)
from lncm.errors import DimensionError, ParamError
from lncm.tensor_core import Kernel, Plane, conv2d, delta_kernel


def random_fcn(rng, dims):
    layers = []
    for i in range(len(dims) - 1):
        w = rng.standard_normal((dims[i + 1], dims[i])) / np.sqrt(dims[i])
        b = rng.standard_normal(dims[i + 1])
        layers.append(AffineMap(w, b))
    return LinearFcn(tuple(layers))


def srcnn_like(rng, bias=True):
    shapes = ((64, 1, 9, 9), (32, 64, 1, 1), (1, 32, 5, 5))
    layers = []
    for out_c, in_c, kh, kw in shapes:
        taps = rng.standard_normal((out_c, in_c, kh, kw)) / np.sqrt(in_c * kh * kw)
        b = rng.standard_normal(out_c) if bias else None
        layers.append(Kernel(taps, b))
    return ConvStack(tuple(layers))


class TestCollapseAffine:
    def test_single_layer_unchanged(self):
        m = AffineMap(np.eye(3), np.zeros(3))
        net = LinearFcn((m,))
        assert collapse_affine(net) is m

    def test_scalar_composition(self):
        l1 = AffineMap(2.0 * np.eye(2), np.zeros(2))
        l2 = AffineMap(3.0 * np.eye(2), np.ones(2))
        m = collapse_affine(LinearFcn((l1, l2)))
        assert np.array_equal(m.w, 6.0 * np.eye(2))
        assert np.array_equal(m.b, np.ones(2))

    def test_matches_sequential_oracle(self):
        rng = np.random.default_rng(0)
        net = random_fcn(rng, (144, 96, 96, 96, 256))
        m = collapse_affine(net)
        x = rng.uniform(0, 255, (1000, 144))
        seq = net(x)
        direct = m(x)
        assert np.max(np.abs(direct - seq)) <= 1e-9 * (1 + np.abs(seq)).max()
        assert np.all(np.abs(direct - seq) <= 1e-9 * (1 + np.abs(seq)))

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        net = random_fcn(rng, (8, 5, 4))
        m = collapse_affine(net)
        assert collapse_affine(m) is m

    def test_chain_mismatch(self):
        a = AffineMap(np.ones((3, 2)), np.zeros(3))
        b = AffineMap(np.ones((2, 4)), np.zeros(2))
        with pytest.raises(DimensionError):
            LinearFcn((a, b))


class TestCollapseConv:
    def test_single_kernel_unchanged(self):
        k = delta_kernel(1)
        assert collapse_conv(ConvStack((k,))) is k

    def test_srcnn_fuses_to_169_taps(self):
        rng = np.random.default_rng(2)
        fused = collapse_conv(srcnn_like(rng))
        assert (fused.out_channels, fused.in_channels) == (1, 1)
        assert (fused.kh, fused.kw) == (13, 13)
        assert fused.taps.size == 169

    def test_fused_matches_sequential_on_plane(self):
        rng = np.random.default_rng(3)
        stack = srcnn_like(rng)
        fused = collapse_conv(stack)
        x = rng.uniform(0, 255, (1, 32, 32))
        seq = stack(x)
        direct = conv2d(x, fused)
        assert np.max(np.abs(direct - seq) / (1 + np.abs(seq))) <= 1e-9


class TestCountParams:
    def test_srcnn_baseline_is_8129(self):
        rng = np.random.default_rng(4)
        report = count_params(srcnn_like(rng, bias=True))
        assert report.param_count == 8129

    def test_fused_no_bias_is_169(self):
        rng = np.random.default_rng(5)
        fused = collapse_conv(srcnn_like(rng, bias=False))
        assert count_params(fused).param_count == 169

    def test_affine_16x80_plus_bias(self):
        m = AffineMap(np.zeros((16, 80)), np.zeros(16))
        assert count_params(m).param_count == 1296

    def test_collapse_reduces_srcnn_params(self):
        rng = np.random.default_rng(6)
        stack = srcnn_like(rng, bias=True)
        fused = collapse_conv(stack)
        assert count_params(fused).param_count <= count_params(stack).param_count

    def test_mac_counts(self):
        rng = np.random.default_rng(7)
        stack = srcnn_like(rng)
        assert count_params(stack).mac_count_per_output_sample == 8032
        fused = collapse_conv(collapse_conv(stack))
        assert count_params(Kernel(fused.taps)).mac_count_per_output_sample == 169


class TestVerifyEquivalence:
    def test_model_vs_itself(self):
        rng = np.random.default_rng(8)
        net = random_fcn(rng, (10, 6, 4))
        report = verify_equivalence(net, net, n_trials=50)
        assert report.passed and report.max_rel_error == 0.0

    def test_collapse_passes(self):
        rng = np.random.default_rng(9)
        net = random_fcn(rng, (20, 16, 16, 8))
        report = verify_equivalence(net, collapse_affine(net), n_trials=100,
                                    tol=1e-9)
        assert report.passed

    def test_perturbed_fails(self):
        rng = np.random.default_rng(10)
        net = random_fcn(rng, (12, 8, 6))
        m = collapse_affine(net)
        w = m.w.copy()
        w[0, 0] += 1e-3
        report = verify_equivalence(net, AffineMap(w, m.b), tol=1e-9)
        assert not report.passed

    def test_conv_pair(self):
        rng = np.random.default_rng(11)
        stack = srcnn_like(rng)
        report = verify_equivalence(stack, collapse_conv(stack), n_trials=5,
                                    tol=1e-9)
        assert report.passed

    def test_dim_mismatch(self):
        rng = np.random.default_rng(12)
        with pytest.raises(DimensionError):
            verify_equivalence(random_fcn(rng, (4, 3)), random_fcn(rng, (5, 3)))

    def test_mixed_kinds_rejected(self):
        rng = np.random.default_rng(13)
        with pytest.raises(DimensionError):
            verify_equivalence(random_fcn(rng, (4, 3)), delta_kernel(1))


class TestPruneTaps:
    def test_threshold_zero_is_identity(self):
        rng = np.random.default_rng(14)
        k = Kernel(rng.standard_normal((1, 1, 5, 5)))
        pruned, report = prune_taps(k, threshold=0.0)
        assert report.removed == 0
        assert np.array_equal(pruned.taps, k.taps)

    def test_threshold_removes_small_tap(self):
        k = Kernel(np.array([0.5, 1e-6, 0.5]).reshape(1, 1, 1, 3))
        pruned, report = prune_taps(k, threshold=1e-3)
        assert report.removed == 1
        assert np.array_equal(pruned.taps.ravel(), [0.5, 0.0, 0.5])

    def test_quantize_to_64ths(self):
        rng = np.random.default_rng(15)
        k = Kernel(rng.standard_normal((1, 1, 13, 13)) * 0.2)
        probe = Plane(rng.uniform(0, 255, (20, 20)))
        step = 1.0 / 64.0
        pruned, report = prune_taps(k, quantize_step=step, probe=probe)
        scaled = pruned.taps * 64.0
        assert np.allclose(scaled, np.rint(scaled))
        # deviation equals a direct comparison oracle
        want = np.max(np.abs(conv2d(probe, k) - conv2d(probe, pruned)))
        assert report.max_output_deviation == pytest.approx(want)

    def test_quantize_small_step_near_identity(self):
        rng = np.random.default_rng(16)
        k = Kernel(rng.standard_normal((1, 1, 3, 3)))
        pruned, report = prune_taps(k, quantize_step=1e-12)
        assert np.max(np.abs(pruned.taps - k.taps)) <= 1e-12

    def test_strategy_validation(self):
        k = delta_kernel(1)
        with pytest.raises(ParamError):
            prune_taps(k)
        with pytest.raises(ParamError):
            prune_taps(k, threshold=1.0, quantize_step=1.0)
        with pytest.raises(ParamError):
            prune_taps(k, threshold=-1.0)
        with pytest.raises(ParamError):
            prune_taps(k, quantize_step=0.0)

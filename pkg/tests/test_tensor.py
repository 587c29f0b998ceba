"""Forward oracles and finite-difference gradient checks for the tensor core."""

import numpy as np
import pytest

from quantrx.tensor import ConvSpec, Tensor, add, conv2d, layer_norm, relu


def naive_conv2d(x, kernel, bias, dilation=(1, 1)):
    """Direct sextuple-loop cross-correlation with same zero padding."""
    kh, kw, cin, cout = kernel.shape
    h, w, _ = x.shape
    dh, dw = dilation
    eh, ew = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    pt, pl = (eh - 1) // 2, (ew - 1) // 2
    out = np.zeros((h, w, cout))
    for i in range(h):
        for j in range(w):
            for co in range(cout):
                acc = float(bias[co])
                for u in range(kh):
                    for v in range(kw):
                        ii, jj = i + u * dh - pt, j + v * dw - pl
                        if 0 <= ii < h and 0 <= jj < w:
                            for ci in range(cin):
                                acc += float(x[ii, jj, ci]) * float(kernel[u, v, ci, co])
                out[i, j, co] = acc
    return out


def central_diff(fn, arr, h=1e-3):
    """Central finite differences of a scalar-valued fn wrt every entry."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-3):
    """Relative error of the gradient vector (L2) below rtol, with an
    elementwise guard so a single bad entry cannot hide in the norm."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-4)
    rel = np.linalg.norm(analytic - numeric) / denom
    assert rel < rtol, f"gradient norm-relative error {rel:.2e} >= {rtol}"
    np.testing.assert_allclose(analytic, numeric, rtol=0.05, atol=1e-3)


class TestConv2dForward:
    def test_1x1_kernel_is_scalar_multiply(self):
        x = np.full((3, 3, 1), 2.5, dtype=np.float32)
        k = np.full((1, 1, 1, 1), -1.5, dtype=np.float32)
        out = conv2d(Tensor(x), Tensor(k), Tensor([0.0]), ConvSpec(1, 1, (1, 1)))
        np.testing.assert_allclose(out.data, -3.75)

    def test_identity_kernel_passes_input_through(self, rng):
        x = rng.standard_normal((6, 5, 3)).astype(np.float32)
        k = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            k[1, 1, c, c] = 1.0
        out = conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(3, np.float32)), ConvSpec(3, 3))
        np.testing.assert_allclose(out.data, x, atol=1e-6)

    def test_matches_direct_convolution_oracle(self, rng):
        x = rng.standard_normal((5, 5, 2)).astype(np.float32)
        k = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        out = conv2d(Tensor(x), Tensor(k), Tensor(b), ConvSpec(2, 4))
        np.testing.assert_allclose(out.data, naive_conv2d(x, k, b), atol=1e-5)

    @pytest.mark.parametrize("dilation", [(1, 1), (2, 2), (1, 3)])
    def test_oracle_agreement_with_dilation(self, rng, dilation):
        x = rng.standard_normal((7, 8, 3)).astype(np.float32)
        k = rng.standard_normal((3, 3, 3, 2)).astype(np.float32)
        b = rng.standard_normal(2).astype(np.float32)
        out = conv2d(Tensor(x), Tensor(k), Tensor(b), ConvSpec(3, 2, (3, 3), dilation))
        np.testing.assert_allclose(out.data, naive_conv2d(x, k, b, dilation), atol=1e-5)

    def test_batched_matches_per_sample(self, rng):
        x = rng.standard_normal((3, 5, 6, 2)).astype(np.float32)
        k = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        spec = ConvSpec(2, 4)
        batched = conv2d(Tensor(x), Tensor(k), Tensor(b), spec).data
        for i in range(3):
            single = conv2d(Tensor(x[i]), Tensor(k), Tensor(b), spec).data
            np.testing.assert_array_equal(batched[i], single)

    def test_shape_errors_name_the_axis(self, rng):
        x = rng.standard_normal((4, 4, 3)).astype(np.float32)
        k = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="channel axis"):
            conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(4, np.float32)), ConvSpec(2, 4))
        with pytest.raises(ValueError, match="bias axis"):
            conv2d(
                Tensor(rng.standard_normal((4, 4, 2)).astype(np.float32)),
                Tensor(k),
                Tensor(np.zeros(3, np.float32)),
                ConvSpec(2, 4),
            )

    def test_purity_bit_identical(self, rng):
        x = rng.standard_normal((5, 5, 2)).astype(np.float32)
        k = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        spec = ConvSpec(2, 4)
        a = conv2d(Tensor(x), Tensor(k), Tensor(b), spec).data
        bb = conv2d(Tensor(x), Tensor(k), Tensor(b), spec).data
        assert (a == bb).all()


class TestConvSpec:
    def test_rejects_bad_kernel_and_dilation(self):
        with pytest.raises(ValueError):
            ConvSpec(1, 1, (0, 3))
        with pytest.raises(ValueError):
            ConvSpec(1, 1, (3, 3), (1, 0))
        with pytest.raises(ValueError):
            ConvSpec(0, 1)


class TestLayerNorm:
    def test_constant_input_maps_to_zero(self):
        x = np.full((4, 4, 8), 3.7, dtype=np.float32)
        out = layer_norm(Tensor(x), Tensor(np.ones(8, np.float32)), Tensor(np.zeros(8, np.float32)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_zero_gamma_gives_constant_beta(self, rng):
        x = rng.standard_normal((3, 3, 5)).astype(np.float32)
        beta = np.full(5, -1.25, dtype=np.float32)
        out = layer_norm(Tensor(x), Tensor(np.zeros(5, np.float32)), Tensor(beta))
        np.testing.assert_allclose(out.data, np.broadcast_to(beta, out.data.shape))

    def test_matches_scalar_loop_oracle(self, rng):
        x = rng.standard_normal((4, 3, 6)).astype(np.float32)
        gamma = rng.standard_normal(6).astype(np.float32)
        beta = rng.standard_normal(6).astype(np.float32)
        eps = 1e-5
        out = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), eps).data
        expect = np.empty_like(out, dtype=np.float64)
        for i in range(4):
            for j in range(3):
                row = x[i, j].astype(np.float64)
                mu = row.mean()
                var = ((row - mu) ** 2).mean()
                expect[i, j] = (row - mu) / np.sqrt(var + eps) * gamma + beta
        np.testing.assert_allclose(out, expect, atol=1e-6)

    def test_inverse_recovers_input(self, rng):
        x = rng.standard_normal((5, 4, 8)).astype(np.float32)
        gamma = (rng.uniform(0.5, 2.0, 8)).astype(np.float32)
        beta = rng.standard_normal(8).astype(np.float32)
        eps = 1e-5
        out = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), eps).data.astype(np.float64)
        x64 = x.astype(np.float64)
        mu = x64.mean(-1, keepdims=True)
        var = x64.var(-1, keepdims=True)
        recovered = (out - beta) / gamma * np.sqrt(var + eps) + mu
        np.testing.assert_allclose(recovered, x64, atol=1e-4)

    def test_channel_mismatch_raises(self, rng):
        x = rng.standard_normal((2, 2, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="channel axis"):
            layer_norm(Tensor(x), Tensor(np.ones(3, np.float32)), Tensor(np.zeros(4, np.float32)))

    def test_rejects_nonpositive_eps(self, rng):
        x = rng.standard_normal((2, 2, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="eps"):
            layer_norm(Tensor(x), Tensor(np.ones(4, np.float32)), Tensor(np.zeros(4, np.float32)), 0.0)


class TestRelu:
    def test_basic_values(self):
        out = relu(Tensor(np.array([-1.0, 0.0, 2.0], dtype=np.float32)))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_all_negative_maps_to_zero(self, rng):
        x = -np.abs(rng.standard_normal((4, 5))).astype(np.float32) - 0.1
        assert (relu(Tensor(x)).data == 0).all()

    def test_idempotent(self, rng):
        x = rng.standard_normal((6, 6)).astype(np.float32)
        once = relu(Tensor(x)).data
        twice = relu(Tensor(once)).data
        np.testing.assert_array_equal(once, twice)


class TestBackward:
    def test_backward_requires_scalar(self, rng):
        x = Tensor(rng.standard_normal((3, 3)).astype(np.float32), requires_grad=True)
        out = relu(x)
        with pytest.raises(ValueError, match="scalar"):
            out.backward()

    def test_conv_kernel_grad_of_sum_is_input_sum(self, rng):
        x = rng.standard_normal((4, 4, 1)).astype(np.float32)
        k = Tensor(np.ones((1, 1, 1, 1), dtype=np.float32), requires_grad=True)
        out = conv2d(Tensor(x), k, Tensor(np.zeros(1, np.float32)), ConvSpec(1, 1, (1, 1)))
        loss = _sum_all(out)
        loss.backward()
        np.testing.assert_allclose(k.grad.ravel(), x.sum(), rtol=1e-6)

    def test_relu_grad_is_indicator(self):
        x = Tensor(np.array([-2.0, 0.0, 3.0], dtype=np.float32), requires_grad=True)
        loss = _sum_all(relu(x))
        loss.backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])  # subgradient at 0 is 0

    def test_add_routes_gradient_to_both(self, rng):
        a = Tensor(rng.standard_normal((3, 3)).astype(np.float32), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 3)).astype(np.float32), requires_grad=True)
        loss = _sum_all(add(a, b))
        loss.backward()
        np.testing.assert_array_equal(a.grad, np.ones((3, 3), np.float32))
        np.testing.assert_array_equal(b.grad, np.ones((3, 3), np.float32))

    @pytest.mark.parametrize("wrt", ["x", "kernel", "bias"])
    def test_conv_grads_match_finite_differences(self, rng, wrt):
        x = rng.standard_normal((5, 4, 2)).astype(np.float32)
        k = rng.standard_normal((3, 3, 2, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        spec = ConvSpec(2, 3, (3, 3), (2, 1))
        arrs = {"x": x, "kernel": k, "bias": b}
        tensors = {n: Tensor(a, requires_grad=(n == wrt)) for n, a in arrs.items()}
        out = conv2d(tensors["x"], tensors["kernel"], tensors["bias"], spec)
        loss = _weighted_sum(out, seed=5)
        loss.backward()

        weights = _weights_like(out.data, seed=5)

        def forward_value():
            o = conv2d(Tensor(x), Tensor(k), Tensor(b), spec)
            return float((o.data.astype(np.float64) * weights).sum())

        numeric = central_diff(forward_value, arrs[wrt])
        assert_grad_close(tensors[wrt].grad, numeric)

    @pytest.mark.parametrize("wrt", ["x", "gamma", "beta"])
    def test_layer_norm_grads_match_finite_differences(self, rng, wrt):
        x = rng.standard_normal((3, 4, 5)).astype(np.float32)
        gamma = rng.uniform(0.5, 1.5, 5).astype(np.float32)
        beta = rng.standard_normal(5).astype(np.float32)
        arrs = {"x": x, "gamma": gamma, "beta": beta}
        tensors = {n: Tensor(a, requires_grad=(n == wrt)) for n, a in arrs.items()}
        out = layer_norm(tensors["x"], tensors["gamma"], tensors["beta"])
        loss = _weighted_sum(out, seed=9)
        loss.backward()

        weights = _weights_like(out.data, seed=9)

        def forward_value():
            o = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta))
            return float((o.data.astype(np.float64) * weights).sum())

        numeric = central_diff(forward_value, arrs[wrt])
        assert_grad_close(tensors[wrt].grad, numeric)

    def test_grad_accumulates_across_uses(self, rng):
        x = Tensor(rng.standard_normal((2, 2)).astype(np.float32), requires_grad=True)
        loss = _sum_all(add(x, x))
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.full((2, 2), 2.0, np.float32))


def _weights_like(arr, seed):
    return np.random.default_rng(seed).standard_normal(arr.shape)


def _weighted_sum(tensor, seed):
    """Scalar head for gradient tests: sum(w * out) with fixed random w."""
    weights = _weights_like(tensor.data, seed).astype(np.float32)
    from quantrx.tensor import Tensor as T

    out = T(np.float32((tensor.data.astype(np.float64) * weights).sum()))
    out.requires_grad = tensor.requires_grad
    if out.requires_grad:
        out._parents = (tensor,)

        def _backward():
            tensor._accumulate(float(out.grad) * weights)

        out._backward = _backward
    return out


def _sum_all(tensor):
    from quantrx.tensor import Tensor as T

    out = T(np.float32(tensor.data.astype(np.float64).sum()))
    out.requires_grad = tensor.requires_grad
    if out.requires_grad:
        out._parents = (tensor,)

        def _backward():
            tensor._accumulate(np.full(tensor.data.shape, float(out.grad), np.float32))

        out._backward = _backward
    return out

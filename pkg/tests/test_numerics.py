"""RNG streams, finite-difference oracle, SmallNet forward/backward, Adam,
and the text checkpoint format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dvce
from dvce.numerics import (Adam, Rng, SmallNet, finite_difference_gradient,
                           load_net, net_backward, net_forward,
                           sample_standard_normal, save_net)


class TestRng:
    def test_same_seed_identical_stream(self):
        a = sample_standard_normal(Rng(123), 50)
        b = sample_standard_normal(Rng(123), 50)
        assert np.array_equal(a, b)

    def test_streams_differ_from_each_other(self):
        root = Rng(7)
        a = sample_standard_normal(root.stream(1), 50)
        b = sample_standard_normal(root.stream(2), 50)
        assert not np.array_equal(a, b)

    def test_stream_reproducible_via_index(self):
        a = sample_standard_normal(Rng(7).stream(3), 50)
        b = sample_standard_normal(Rng(7).stream(3), 50)
        assert np.array_equal(a, b)

    def test_draw_advances_stream(self):
        rng = Rng(0)
        a = sample_standard_normal(rng, 10)
        b = sample_standard_normal(rng, 10)
        assert not np.array_equal(a, b)

    def test_n_below_one_rejected(self):
        with pytest.raises(ValueError):
            sample_standard_normal(Rng(0), 0)

    def test_moments_at_1e5(self):
        x = sample_standard_normal(Rng(42), 100_000)
        assert abs(x.mean()) < 0.02
        assert abs(x.var() - 1.0) < 0.03

    def test_skew_and_kurtosis_within_5_sigma(self):
        n = 100_000
        x = sample_standard_normal(Rng(9), n)
        skew = np.mean(x**3)
        kurt = np.mean(x**4) - 3.0
        # asymptotic std errors for a standard normal sample
        assert abs(skew) < 5.0 * np.sqrt(6.0 / n)
        assert abs(kurt) < 5.0 * np.sqrt(24.0 / n)


class TestFiniteDifference:
    def test_linear_function_recovers_coefficients(self):
        c = np.array([1.5, -2.0, 0.25])
        g = finite_difference_gradient(lambda x: float(c @ x), np.zeros(3))
        assert np.allclose(g, c, atol=1e-8)

    def test_quadratic_at_1_2(self):
        g = finite_difference_gradient(lambda x: float(x @ x),
                                       np.array([1.0, 2.0]), h=1e-4)
        assert np.allclose(g, [2.0, 4.0], atol=1e-6)

    def test_matches_bayes_classifier_closed_form(self):
        ds = dvce.make_gmm2d(2, 1.0, 0.8, 10, Rng(0))
        clf = dvce.BayesGmmClassifier(ds.mixture)
        x = np.array([0.3, -0.4])
        fd = finite_difference_gradient(
            lambda z: clf.class_log_probs(z)[1], x)
        an = clf.grad_log_prob(x, 1)
        assert np.linalg.norm(fd - an) < 1e-5 * max(1.0, np.linalg.norm(an))

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda x: 0.0, np.zeros(2), h=0.0)

    def test_nonfinite_function_value_errors(self):
        with pytest.raises(RuntimeError):
            finite_difference_gradient(lambda x: float("nan"), np.zeros(2))


class TestSmallNetForward:
    def test_zero_weights_yield_final_bias(self):
        net = SmallNet([3, 4, 2])
        net.biases[-1] = np.array([0.5, -1.0])
        assert np.array_equal(net.forward(np.ones(3)), [0.5, -1.0])

    def test_identity_linear_layer(self):
        net = SmallNet([3, 3])
        net.weights[0] = np.eye(3)
        x = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(net.forward(x), x)

    def test_dim_mismatch_rejected(self):
        net = SmallNet([3, 2])
        with pytest.raises(ValueError):
            net.forward(np.zeros(4))

    def test_param_count(self):
        net = SmallNet([3, 5, 2])
        assert net.n_params == (3 + 1) * 5 + (5 + 1) * 2

    def test_sin_regression_mse_below_0_01(self):
        rng = Rng(0)
        X = np.linspace(-np.pi, np.pi, 200)[:, None]
        Y = np.sin(X)
        net = SmallNet([1, 32, 1], "tanh", rng)
        opt = Adam(net, 1e-2)
        for _ in range(500):
            pred = net.forward_batch(X)
            grads, _ = net.backward_batch(X, 2.0 * (pred - Y) / len(X))
            opt.step(net, grads)
        mse = float(np.mean((net.forward_batch(X) - Y) ** 2))
        assert mse < 0.01


class TestSmallNetBackward:
    def test_linear_weight_grad_is_outer_product(self):
        net = SmallNet([3, 2])
        x = np.array([1.0, 2.0, 3.0])
        u = np.array([0.5, -1.0])
        grads, _ = net.backward(x, u)
        assert np.allclose(grads[0][0], np.outer(u, x))
        assert np.allclose(grads[0][1], u)

    def test_zero_upstream_zero_grads(self):
        net = SmallNet([3, 4, 2], "tanh", Rng(1))
        grads, dx = net.backward(np.ones(3), np.zeros(2))
        assert np.all(dx == 0.0)
        for dW, db in grads:
            assert np.all(dW == 0.0) and np.all(db == 0.0)

    def test_two_layer_net_matches_finite_differences(self):
        rng = Rng(5)
        net = SmallNet([4, 6, 3], "tanh", rng)
        x = rng.standard_normal(4)
        u = rng.standard_normal(3)
        _, dx = net_backward(net, x, u)
        fd = finite_difference_gradient(
            lambda z: float(u @ net_forward(net, z)), x)
        rel = np.linalg.norm(dx - fd) / np.linalg.norm(fd)
        assert rel < 1e-4

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_100_random_triples_input_and_param_grads(self, activation):
        rng = Rng(11)
        worst = 0.0
        for _ in range(100):
            dims = [int(d) for d in rng.integers(2, 6, size=3)]
            net = SmallNet(dims, activation, rng)
            x = rng.standard_normal(dims[0])
            u = rng.standard_normal(dims[-1])
            grads, dx = net.backward(x, u)
            fd = finite_difference_gradient(
                lambda z: float(u @ net.forward(z)), x)
            denom = max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, np.linalg.norm(dx - fd) / denom)
            # spot-check the first-layer weight gradient too
            W0 = net.weights[0].copy()

            def f_w(flat, net=net, W0=W0, x=x, u=u):
                net.weights[0] = flat.reshape(W0.shape)
                out = float(u @ net.forward(x))
                net.weights[0] = W0
                return out

            fdW = finite_difference_gradient(f_w, W0.ravel())
            denW = max(np.linalg.norm(fdW), 1e-12)
            worst = max(worst,
                        np.linalg.norm(grads[0][0].ravel() - fdW) / denW)
        assert worst < 1e-4

    def test_batch_consistent_with_single(self):
        rng = Rng(3)
        net = SmallNet([3, 5, 2], "tanh", rng)
        X = rng.standard_normal(4, 3)
        U = rng.standard_normal(4, 2)
        grads_b, dX = net.backward_batch(X, U)
        dW_sum = np.zeros_like(net.weights[0])
        for i in range(4):
            g, dx = net.backward(X[i], U[i])
            assert np.allclose(dx, dX[i], atol=1e-12)
            dW_sum += g[0][0]
        assert np.allclose(grads_b[0][0], dW_sum, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forward_deterministic(seed):
    rng = Rng(seed)
    net = SmallNet([3, 4, 2], "tanh", rng)
    x = rng.standard_normal(3)
    assert np.array_equal(net.forward(x), net.forward(x))


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        rng = Rng(8)
        net = SmallNet([3, 5, 2], "relu", rng)
        p = tmp_path / "net.txt"
        save_net(p, net, {"role": "demo", "note": "x"})
        loaded, extra = load_net(p)
        assert extra == {"role": "demo", "note": "x"}
        assert loaded.dims == net.dims and loaded.activation == "relu"
        for a, b in zip(loaded.weights, net.weights):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.biases, net.biases):
            assert np.array_equal(a, b)

    def test_magic_line_checked(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("NOT-A-CHECKPOINT\n")
        with pytest.raises(ValueError):
            load_net(p)

    def test_header_format(self, tmp_path):
        net = SmallNet([2, 2])
        p = tmp_path / "net.txt"
        save_net(p, net)
        lines = p.read_text().splitlines()
        assert lines[0] == "DVCE-NET v1"
        assert lines[1] == "2 2"
        assert lines[2] == "tanh"

"""Loss-oracle families: derivative correctness, datasets, training loop."""

import numpy as np
import pytest

from curvnoise.models import (
    Dataset,
    DivergenceError,
    GaussianMean,
    OLS,
    SoftmaxLinear,
    SoftmaxMLP1,
    gaussian_mixture_dataset,
    train,
)


def fd_gradient(oracle, x, y, h=1e-6):
    """Central finite differences of the loss, the slow reference."""
    g = np.empty(oracle.dim)
    for i in range(oracle.dim):
        tp, tm = oracle.theta.copy(), oracle.theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (oracle.with_theta(tp).eval(x, y).loss - oracle.with_theta(tm).eval(x, y).loss) / (2 * h)
    return g


def fd_hessian(oracle, x, y, h=1e-5):
    """Central finite differences of the analytic gradient."""
    d = oracle.dim
    H = np.empty((d, d))
    for i in range(d):
        tp, tm = oracle.theta.copy(), oracle.theta.copy()
        tp[i] += h
        tm[i] -= h
        gp = oracle.with_theta(tp).eval(x, y).grad
        gm = oracle.with_theta(tm).eval(x, y).grad
        H[:, i] = (gp - gm) / (2 * h)
    return (H + H.T) / 2.0


def make_oracles(rng):
    return [
        (GaussianMean(rng.standard_normal(3)), rng.standard_normal(3), None),
        (OLS(rng.standard_normal(6), 3, 2), rng.standard_normal(3), rng.standard_normal(2)),
        (SoftmaxLinear(rng.standard_normal(9), 2, 3), rng.standard_normal(2), 1),
        (SoftmaxMLP1(rng.standard_normal(3 * 2 + 3 + 2 * 3 + 2), 2, 3, 2), rng.standard_normal(2), 0),
    ]


class TestDerivatives:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for oracle, x, y in make_oracles(rng):
            got = oracle.eval(x, y).grad
            np.testing.assert_allclose(
                got, fd_gradient(oracle, x, y), atol=1e-5, rtol=1e-4,
                err_msg=type(oracle).__name__,
            )

    def test_hessians_match_finite_differences(self):
        rng = np.random.default_rng(8)
        for oracle, x, y in make_oracles(rng):
            got = oracle.eval(x, y).hess.a
            np.testing.assert_allclose(
                got, fd_hessian(oracle, x, y), atol=5e-4, rtol=1e-3,
                err_msg=type(oracle).__name__,
            )

    def test_input_grad_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        for oracle, x, y in make_oracles(rng):
            got = oracle.eval(x, y).input_grad
            fd = np.empty(x.size)
            for i in range(x.size):
                xp, xm = x.copy(), x.copy()
                xp[i] += 1e-6
                xm[i] -= 1e-6
                fd[i] = (oracle.eval(xp, y).loss - oracle.eval(xm, y).loss) / 2e-6
            np.testing.assert_allclose(got, fd, atol=1e-5, rtol=1e-4,
                                       err_msg=type(oracle).__name__)

    def test_batch_loss_grad_equals_per_sample_mean(self):
        rng = np.random.default_rng(10)
        data = gaussian_mixture_dataset(12, 2, 3, rng)
        oracle = SoftmaxLinear(0.3 * rng.standard_normal(9), 2, 3)
        loss, grad = oracle.batch_loss_grad(data)
        per = [oracle.eval(data.inputs[n], data.target(n)) for n in range(data.size)]
        assert loss == pytest.approx(np.mean([p.loss for p in per]), rel=1e-12)
        np.testing.assert_allclose(grad, np.mean([p.grad for p in per], axis=0), atol=1e-12)


class TestSoftmaxLinear:
    def test_label_distribution_normalized(self):
        rng = np.random.default_rng(11)
        oracle = SoftmaxLinear(rng.standard_normal(12), 3, 3)
        q = oracle.label_distribution(rng.standard_normal(3))
        assert q.shape == (3,)
        assert np.all(q > 0.0)
        assert np.sum(q) == pytest.approx(1.0, abs=1e-12)

    def test_hessian_is_label_independent(self):
        rng = np.random.default_rng(12)
        oracle = SoftmaxLinear(rng.standard_normal(9), 2, 3)
        x = rng.standard_normal(2)
        hs = [oracle.eval(x, y).hess.a for y in range(3)]
        np.testing.assert_allclose(hs[0], hs[1], atol=1e-14)
        np.testing.assert_allclose(hs[0], hs[2], atol=1e-14)
        np.testing.assert_allclose(hs[0], oracle.expected_hessian(x).a, atol=1e-14)

    def test_rejects_bad_label(self):
        oracle = SoftmaxLinear(np.zeros(9), 2, 3)
        with pytest.raises(ValueError):
            oracle.eval(np.zeros(2), 3)


class TestMLPAgainstLinear:
    def test_output_layer_block_matches_softmax_linear(self):
        # With a frozen first layer the output layer is exactly a linear
        # softmax model whose input is the hidden activation.
        rng = np.random.default_rng(13)
        d_in, m, K = 2, 3, 3
        x = rng.standard_normal(d_in)
        W1 = rng.standard_normal((m, d_in))
        b1 = rng.standard_normal(m)
        W2 = rng.standard_normal((K, m))
        b2 = rng.standard_normal(K)
        theta = np.concatenate([W1.ravel(), b1, W2.ravel(), b2])
        mlp = SoftmaxMLP1(theta, d_in, m, K)
        a = np.tanh(W1 @ x + b1)
        lin = SoftmaxLinear(np.concatenate([W2.ravel(), b2]), m, K)
        np.testing.assert_allclose(
            mlp.label_distribution(x), lin.label_distribution(a), atol=1e-12
        )
        y = 1
        der_mlp = mlp.eval(x, y)
        der_lin = lin.eval(a, y)
        n_head = m * d_in + m  # first-layer parameters
        np.testing.assert_allclose(der_mlp.grad[n_head:], der_lin.grad, atol=1e-12)
        # The finite-difference Hessian block agrees with the exact one.
        np.testing.assert_allclose(
            der_mlp.hess.a[n_head:, n_head:], der_lin.hess.a, atol=5e-5
        )


class TestDataset:
    def test_csv_roundtrip_with_targets(self, tmp_path):
        rng = np.random.default_rng(14)
        data = gaussian_mixture_dataset(8, 3, 2, rng)
        path = tmp_path / "data.csv"
        data.to_csv(path)
        back = Dataset.from_csv(path)
        np.testing.assert_allclose(back.inputs, data.inputs, atol=1e-12)
        np.testing.assert_allclose(
            np.asarray(back.targets, float), np.asarray(data.targets, float), atol=1e-12
        )

    def test_csv_roundtrip_without_targets(self, tmp_path):
        data = Dataset(np.arange(6.0).reshape(3, 2), None)
        path = tmp_path / "data.csv"
        data.to_csv(path)
        back = Dataset.from_csv(path)
        np.testing.assert_allclose(back.inputs, data.inputs)
        assert back.targets is None

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(4))


class TestTraining:
    def test_loss_decreases_on_separable_mixture(self):
        rng = np.random.default_rng(15)
        data = gaussian_mixture_dataset(60, 3, 3, rng, separation=3.0)
        oracle = SoftmaxLinear(0.01 * rng.standard_normal(12), 3, 3)
        before = oracle.mean_loss(data)
        trained = train(oracle, data, steps=200, stepsize=0.5, rng=rng)
        assert trained.mean_loss(data) < 0.5 * before
        # Input oracle untouched.
        assert oracle.mean_loss(data) == pytest.approx(before)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_raises_with_step_index(self):
        rng = np.random.default_rng(16)
        data = Dataset(np.full((4, 1), 1e3), np.array([0, 1, 0, 1]))
        oracle = OLS(np.array([1.0]), 1, 1)
        with pytest.raises(DivergenceError):
            train(oracle, data, steps=200, stepsize=10.0, rng=rng)

    def test_momentum_run_is_deterministic(self):
        rng1 = np.random.default_rng(17)
        rng2 = np.random.default_rng(17)
        data = gaussian_mixture_dataset(30, 2, 2, np.random.default_rng(5))
        oracle = SoftmaxLinear(np.zeros(6), 2, 2)
        a = train(oracle, data, 50, 0.2, batch=8, momentum=0.9, rng=rng1)
        b = train(oracle, data, 50, 0.2, batch=8, momentum=0.9, rng=rng2)
        np.testing.assert_array_equal(a.theta, b.theta)


class TestMixtureDataset:
    def test_shapes_and_label_range(self):
        rng = np.random.default_rng(18)
        data = gaussian_mixture_dataset(25, 4, 3, rng)
        assert data.inputs.shape == (25, 4)
        assert data.size == 25 and data.d_in == 4
        labels = np.asarray(data.targets, int)
        assert labels.min() >= 0 and labels.max() < 3

    def test_corruption_bounds_checked(self):
        rng = np.random.default_rng(19)
        with pytest.raises(ValueError):
            gaussian_mixture_dataset(5, 2, 2, rng, corruption=1.5)

import numpy as np
import pytest

from intreg.core import Interval, LossFamily
from intreg.intervalgen import philox_stream
from intreg.model import (
    AdamState,
    MlpConfig,
    MlpParams,
    PointwiseTarget,
    ProjectionTarget,
    TargetBatch,
    WorstcaseTarget,
    adam_step,
    batch_loss,
    batch_loss_and_grad,
    estimate_lipschitz_constant,
    finalize_spectral,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
    spectral_normalize,
)
from intreg.model import _effective_weights, _sigma


def zeroed(cfg):
    params = init_params(cfg)
    for w in params.weights:
        w[:] = 0.0
    return params


class TestForward:
    def test_zero_weights_give_zero(self, rng):
        cfg = MlpConfig.for_input(4, hidden=(5, 3), init_seed=1)
        params = zeroed(cfg)
        for _ in range(5):
            assert forward(params, cfg, rng.standard_normal(4)) == 0.0

    def test_single_linear_layer(self):
        cfg = MlpConfig(layer_sizes=(1, 1), init_seed=0)
        params = init_params(cfg)
        params.weights[0][:] = 2.0
        params.biases[0][:] = 0.0
        assert forward(params, cfg, np.array([3.0])) == 6.0

    def test_batch_matches_single(self, rng):
        cfg = MlpConfig.for_input(3, hidden=(8, 8), init_seed=7)
        params = init_params(cfg)
        X = rng.standard_normal((6, 3))
        ys = predict(params, cfg, X)
        for i in range(6):
            # batched and single-row BLAS paths may differ in the last ulp
            assert forward(params, cfg, X[i]) == pytest.approx(ys[i], rel=1e-12)

    def test_shape_errors(self):
        cfg = MlpConfig.for_input(3, hidden=(4,), init_seed=0)
        params = init_params(cfg)
        with pytest.raises(ValueError):
            forward(params, cfg, np.zeros(2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MlpConfig(layer_sizes=(3, 4))  # output must be scalar
        with pytest.raises(ValueError):
            MlpConfig(layer_sizes=(3, 0, 1))
        with pytest.raises(ValueError):
            MlpConfig(layer_sizes=(3, 4, 1), lipschitz=-1.0)
        with pytest.raises(ValueError):
            MlpConfig(layer_sizes=(3, 4, 1), activation="tanh")


class TestLossAndGrad:
    def test_inside_intervals_flat(self, rng):
        cfg = MlpConfig.for_input(2, hidden=(6,), init_seed=3)
        params = init_params(cfg)
        X = rng.standard_normal((10, 2))
        y = predict(params, cfg, X)
        batch = [(X[i], ProjectionTarget(Interval(y[i] - 1, y[i] + 1))) for i in range(10)]
        loss, grads = loss_and_grad(params, cfg, batch, LossFamily(1.0))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads.weights)
        assert all(np.all(g == 0) for g in grads.biases)

    def test_bias_subgradient_sign(self):
        # f == 0 network, pointwise L1 target 1: loss 1, output-bias grad -1
        cfg = MlpConfig.for_input(2, hidden=(3,), init_seed=0)
        params = zeroed(cfg)
        batch = [(np.zeros(2), PointwiseTarget(1.0))]
        loss, grads = loss_and_grad(params, cfg, batch, LossFamily(1.0))
        assert loss == 1.0
        assert grads.biases[-1][0] == -1.0

    def test_mixed_specs(self, rng):
        cfg = MlpConfig.for_input(2, hidden=(4,), init_seed=5)
        params = init_params(cfg)
        X = rng.standard_normal((3, 2))
        batch = [
            (X[0], ProjectionTarget(Interval(-1.0, 1.0))),
            (X[1], WorstcaseTarget(Interval(-1.0, 1.0))),
            (X[2], PointwiseTarget(0.5)),
        ]
        loss, grads = loss_and_grad(params, cfg, batch, LossFamily(2.0))
        assert np.isfinite(loss)
        assert all(np.all(np.isfinite(g)) for g in grads.weights)

    def test_finite_differences(self, rng):
        cfg = MlpConfig.for_input(3, hidden=(10, 20, 30), init_seed=9)
        params = init_params(cfg)
        X = rng.standard_normal((8, 3))
        y0 = predict(params, cfg, X)
        cases = [
            (TargetBatch.projection(y0 + 0.5, y0 + 1.5), 1.5),
            (TargetBatch.worstcase(y0 - 2.0, y0 + 0.5), 2.0),
            (TargetBatch.pointwise(y0 + 0.7), 1.0),
        ]
        h = 1e-5
        for tb, p in cases:
            _, grads = batch_loss_and_grad(params, cfg, X, tb, p)
            for _ in range(20):
                k = int(rng.integers(0, len(params.weights)))
                w = params.weights[k]
                i = int(rng.integers(0, w.shape[0]))
                j = int(rng.integers(0, w.shape[1]))
                orig = w[i, j]
                w[i, j] = orig + h
                lp = batch_loss(params, cfg, X, tb, p)
                w[i, j] = orig - h
                lm = batch_loss(params, cfg, X, tb, p)
                w[i, j] = orig
                num = (lp - lm) / (2 * h)
                ana = grads.weights[k][i, j]
                assert abs(num - ana) <= 1e-3 * max(abs(num), abs(ana), 1e-6)

    def test_worstcase_midpoint_grad_matches_pointwise(self, rng):
        # the p=1 worst-case gradient is the midpoint-loss gradient, bitwise
        cfg = MlpConfig.for_input(2, hidden=(6,), init_seed=11)
        params = init_params(cfg)
        X = rng.standard_normal((32, 2))
        lo = rng.uniform(-3, 0, 32)
        hi = lo + rng.uniform(0, 4, 32)
        _, g_worst = batch_loss_and_grad(params, cfg, X, TargetBatch.worstcase(lo, hi), 1.0)
        _, g_mid = batch_loss_and_grad(
            params, cfg, X, TargetBatch.pointwise(0.5 * (lo + hi)), 1.0
        )
        for a, b in zip(g_worst.weights + g_worst.biases, g_mid.weights + g_mid.biases):
            assert np.array_equal(a, b)

    def test_empty_batch_rejected(self):
        cfg = MlpConfig.for_input(2, hidden=(3,), init_seed=0)
        params = init_params(cfg)
        with pytest.raises(ValueError):
            loss_and_grad(params, cfg, [], LossFamily(1.0))


class TestSpectralNormalization:
    def test_diagonal_closed_form(self):
        cfg = MlpConfig(layer_sizes=(2, 2, 1), lipschitz=1.0, init_seed=2)
        params = init_params(cfg)
        params.weights[0] = np.diag([3.0, 1.0])
        spectral_normalize(params, cfg, iterations=100)
        s = _sigma(params.weights[0], params.sn_u[0], params.sn_v[0])
        assert s == pytest.approx(3.0, rel=1e-9)
        eff, _ = _effective_weights(params, cfg)
        assert np.linalg.svd(eff[0], compute_uv=False)[0] == pytest.approx(1.0, rel=1e-9)

    def test_already_normalized_unchanged(self):
        cfg = MlpConfig(layer_sizes=(2, 2, 1), lipschitz=1.0, init_seed=2)
        params = init_params(cfg)
        params.weights[0] = np.eye(2)
        spectral_normalize(params, cfg, iterations=50)
        eff, _ = _effective_weights(params, cfg)
        assert np.allclose(eff[0], np.eye(2), atol=1e-9)

    def test_zero_matrix_guard(self):
        cfg = MlpConfig(layer_sizes=(2, 2, 1), lipschitz=1.0, init_seed=2)
        params = init_params(cfg)
        params.weights[0] = np.zeros((2, 2))
        spectral_normalize(params, cfg)
        eff, sigmas = _effective_weights(params, cfg)
        assert sigmas[0] == 1e-12
        assert np.all(eff[0] == 0.0)

    def test_warm_estimates_within_tolerance(self, rng):
        cfg = MlpConfig.for_input(8, hidden=(10, 20), lipschitz=1.0, init_seed=4)
        params = init_params(cfg)  # init warms the power-iteration state
        eff, _ = _effective_weights(params, cfg)
        for w in eff:
            top = np.linalg.svd(w, compute_uv=False)[0]
            assert 0.99 <= top <= 1.01

    def test_five_iterations_on_well_conditioned(self, rng):
        # a clear spectral gap converges within the default 5 iterations
        cfg = MlpConfig(layer_sizes=(6, 6, 1), lipschitz=1.0, init_seed=8)
        params = init_params(cfg)
        q1, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        q2, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        params.weights[0] = q1 @ np.diag([3.0, 0.5, 0.4, 0.3, 0.2, 0.1]) @ q2
        # fresh random vectors, exactly 5 iterations
        prng = philox_stream(123, 45)
        params.sn_u[0] = prng.standard_normal(6)
        params.sn_u[0] /= np.linalg.norm(params.sn_u[0])
        params.sn_v[0] = prng.standard_normal(6)
        params.sn_v[0] /= np.linalg.norm(params.sn_v[0])
        spectral_normalize(params, cfg, iterations=5)
        eff, _ = _effective_weights(params, cfg)
        top = np.linalg.svd(eff[0], compute_uv=False)[0]
        assert 0.99 <= top <= 1.01

    def test_sampled_lipschitz_ratio(self, rng):
        m = 7.0
        cfg = MlpConfig.for_input(3, hidden=(10, 10), lipschitz=m, init_seed=6)
        params = init_params(cfg)
        finalize_spectral(params, cfg)
        a = rng.standard_normal((2000, 3))
        b = rng.standard_normal((2000, 3))
        fa, fb = predict(params, cfg, a), predict(params, cfg, b)
        ratios = np.abs(fa - fb) / np.linalg.norm(a - b, axis=1)
        assert ratios.max() <= m * 1.01

    def test_requires_lipschitz_mode(self):
        cfg = MlpConfig.for_input(2, hidden=(3,), init_seed=0)
        params = init_params(cfg)
        with pytest.raises(ValueError):
            spectral_normalize(params, cfg)


class TestAdam:
    def make(self, shapes=((2, 3),), lr=0.001):
        params = MlpParams([np.ones(s) for s in shapes], [np.zeros(s[1]) for s in shapes])
        return params, AdamState.for_params(params, lr=lr)

    def test_zero_gradient_noop(self):
        params, state = self.make()
        before = params.weights[0].copy()
        g = [np.zeros((2, 3))]
        adam_step(state, params, type("G", (), {"weights": g, "biases": [np.zeros(3)]})())
        assert np.array_equal(params.weights[0], before)

    def test_moves_against_gradient(self):
        params, state = self.make()
        from intreg.model import Gradients

        for _ in range(50):
            adam_step(state, params, Gradients([np.full((2, 3), 2.0)], [np.full(3, -1.0)]))
        assert np.all(params.weights[0] < 1.0)
        assert np.all(params.biases[0] > 0.0)

    def test_first_step_magnitude(self):
        from intreg.model import Gradients

        params, state = self.make(lr=0.01)
        adam_step(state, params, Gradients([np.full((2, 3), 0.3)], [np.zeros(3)]))
        step = 1.0 - params.weights[0]
        # bias-corrected ratio is ~1 at t=1, so |update| ~ lr
        assert np.allclose(step, 0.01, rtol=1e-4)


class TestLipschitzEstimate:
    def test_two_points(self):
        xs = np.array([[0.0], [1.0]])
        ys = np.array([0.0, 5.0])
        for pct in (5.0, 50.0, 95.0, 100.0):
            assert estimate_lipschitz_constant(xs, ys, percentile=pct) == 5.0

    def test_constant_targets(self, rng):
        xs = rng.standard_normal((50, 3))
        ys = np.full(50, 2.5)
        assert estimate_lipschitz_constant(xs, ys) == 0.0

    def test_scale_covariance(self, rng):
        xs = rng.standard_normal((60, 2))
        ys = rng.standard_normal(60)
        base = estimate_lipschitz_constant(xs, ys)
        assert estimate_lipschitz_constant(xs, -3.0 * ys) == pytest.approx(3.0 * base, rel=1e-12)

    def test_zero_distance_pairs_skipped(self):
        xs = np.array([[1.0], [1.0], [2.0]])
        ys = np.array([0.0, 4.0, 1.0])
        # the (0, 1) pair has zero distance; remaining ratios are 1 and 3
        assert estimate_lipschitz_constant(xs, ys, percentile=100.0) == 3.0

    def test_all_zero_distance_is_error(self):
        xs = np.zeros((4, 2))
        ys = np.arange(4.0)
        with pytest.raises(ValueError):
            estimate_lipschitz_constant(xs, ys)

    def test_subsampled_close_to_exact(self, rng):
        xs = rng.standard_normal((300, 2))
        ys = np.sin(xs[:, 0]) + xs[:, 1]
        exact = estimate_lipschitz_constant(xs, ys, max_pairs=10**6)
        approx = estimate_lipschitz_constant(xs, ys, max_pairs=20_000)
        assert approx == pytest.approx(exact, rel=0.1)


class TestCheckpoint:
    def test_roundtrip_plain(self, tmp_path, rng):
        cfg = MlpConfig.for_input(4, hidden=(6, 5), init_seed=13)
        params = init_params(cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg)
        loaded, cfg2 = load_checkpoint(path)
        assert cfg2 == cfg
        for a, b in zip(params.weights + params.biases, loaded.weights + loaded.biases):
            assert np.array_equal(a, b)
        x = rng.standard_normal(4)
        assert forward(params, cfg, x) == forward(loaded, cfg2, x)

    def test_roundtrip_lipschitz(self, tmp_path, rng):
        cfg = MlpConfig.for_input(3, hidden=(5,), lipschitz=4.0, init_seed=13)
        params = init_params(cfg)
        finalize_spectral(params, cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg)
        loaded, cfg2 = load_checkpoint(path)
        x = rng.standard_normal(3)
        assert forward(params, cfg, x) == forward(loaded, cfg2, x)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestDeterminism:
    def test_init_reproducible(self):
        cfg = MlpConfig.for_input(5, hidden=(7, 7), init_seed=21)
        a, b = init_params(cfg), init_params(cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = init_params(MlpConfig.for_input(5, hidden=(7, 7), init_seed=22))
        assert not np.array_equal(a.weights[0], c.weights[0])

import numpy as np
import pytest

from dpplearn.errors import ConditioningError, EvaluationError, InputError
from dpplearn.model import PointPattern, RkhsKernel, SampleBlocks, Window
from dpplearn.numerics import build_gram, chol_psd, symmetrize
from dpplearn.solver import (
    FitConfig,
    closed_form,
    delta,
    fit,
    objective_b,
    objective_lower_bound,
    picard_step,
    stationarity_residual,
)

UNIT = Window((0.0, 0.0), (1.0, 1.0))
KERNEL = RkhsKernel(sigma=0.1)


def random_instance(rng, sizes, n_fredholm):
    """Random landmark geometry with the standard block layout."""
    pts = [UNIT.sample_uniform(rng, k) for k in sizes]
    anchors = UNIT.sample_uniform(rng, n_fredholm)
    z = np.concatenate([*pts, anchors])
    blocks = SampleBlocks.contiguous([len(p) for p in pts], n_fredholm)
    k = build_gram(z, KERNEL)
    r, _ = chol_psd(k)
    return z, blocks, k, r


class TestObjective:
    def test_identity_case(self):
        # K=I, B=I, one sample point, one anchor: g = log 2 + 2 lam
        blocks = SampleBlocks.contiguous([1], 1)
        for lam in (0.05, 0.3, 2.0):
            g = objective_b(np.eye(2), np.eye(2), blocks, lam)
            assert g == pytest.approx(np.log(2.0) + 2.0 * lam, rel=1e-12)

    def test_scaled_identity_matches_scalar_function(self):
        # B = c I with K = I: g(c) = -log c + log(1+c) + 2 lam c
        blocks = SampleBlocks.contiguous([1], 1)
        lam = 0.25
        from scipy.optimize import minimize_scalar

        def g_scalar(c):
            return -np.log(c) + np.log(1.0 + c) + 2.0 * lam * c

        grid = np.linspace(0.05, 5.0, 400)
        g_api = [objective_b(c * np.eye(2), np.eye(2), blocks, lam) for c in grid]
        np.testing.assert_allclose(g_api, [g_scalar(c) for c in grid], rtol=1e-12)
        best_api = grid[int(np.argmin(g_api))]
        best_ref = minimize_scalar(g_scalar, bounds=(0.05, 5.0), method="bounded").x
        assert best_api == pytest.approx(best_ref, abs=2 * (grid[1] - grid[0]))

    def test_matches_direct_x_space_formula(self):
        # independent evaluation with an explicit K^{-1}
        rng = np.random.default_rng(0)
        z, blocks, k, r = random_instance(rng, [2, 1], 3)
        a = rng.standard_normal((6, 6))
        b = symmetrize(a @ a.T) + 0.5 * np.eye(6)
        lam = 0.07
        x = symmetrize(r.T @ b @ r)
        k_jit = r.T @ r
        direct = (
            -0.5 * (np.linalg.slogdet(x[np.ix_(blocks.samples[0], blocks.samples[0])])[1]
                    + np.linalg.slogdet(x[np.ix_(blocks.samples[1], blocks.samples[1])])[1])
            + np.linalg.slogdet(np.eye(3) + x[np.ix_(blocks.fredholm, blocks.fredholm)] / 3)[1]
            + lam * np.trace(x @ np.linalg.inv(k_jit))
        )
        assert objective_b(b, r, blocks, lam) == pytest.approx(direct, rel=1e-9)

    def test_scale_change_of_variables_identity(self):
        # the B' = B/n reformulation with penalty lam*n differs from g
        # exactly by the constant (log n / s) * |C|
        rng = np.random.default_rng(1)
        z, blocks, k, r = random_instance(rng, [2, 2], 4)
        a = rng.standard_normal((8, 8))
        b = symmetrize(a @ a.T) + 0.1 * np.eye(8)
        lam, n, n_c = 0.3, blocks.n, 4
        phi_b_phi = symmetrize(r.T @ (b / n) @ r)
        s = blocks.s
        reformulated = (
            -sum(np.linalg.slogdet(phi_b_phi[np.ix_(idx, idx)])[1] for idx in blocks.samples) / s
            + np.linalg.slogdet(np.eye(n) + phi_b_phi[np.ix_(blocks.fredholm, blocks.fredholm)])[1]
            + (lam * n) * np.trace(b / n)
        )
        expected = objective_b(b, r, blocks, lam) + np.log(n) / s * n_c
        assert reformulated == pytest.approx(expected, abs=1e-10 * (1 + abs(expected)))

    def test_non_pd_sample_block_is_evaluation_error(self):
        blocks = SampleBlocks.contiguous([1], 1)
        b = np.diag([0.0, 1.0])  # sample block of X becomes singular
        with pytest.raises(EvaluationError, match="sample block 0"):
            objective_b(b, np.eye(2), blocks, 0.1)


class TestDelta:
    def test_identity_single_sample(self):
        blocks = SampleBlocks.contiguous([1], 1)
        d = delta(np.eye(2), blocks)
        np.testing.assert_allclose(d, np.diag([1.0, -0.5]), atol=1e-14)

    def test_one_over_s_weighting(self):
        blocks = SampleBlocks.contiguous([1, 1], 1)
        d = delta(np.eye(3), blocks)
        np.testing.assert_allclose(d, np.diag([0.5, 0.5, -0.5]), atol=1e-14)

    def test_matches_dense_selector_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((5, 5))
        x = symmetrize(a @ a.T) + 0.5 * np.eye(5)
        blocks = SampleBlocks.contiguous([2, 1], 2)
        d = delta(x, blocks)
        eye = np.eye(5)
        oracle = np.zeros((5, 5))
        for idx in blocks.samples:
            u = eye[:, idx]
            oracle += u @ np.linalg.inv(u.T @ x @ u) @ u.T / 2.0
        u = eye[:, blocks.fredholm]
        oracle -= u @ np.linalg.inv(u.T @ x @ u + 2.0 * np.eye(2)) @ u.T
        np.testing.assert_allclose(d, oracle, atol=1e-12)

    def test_singular_sample_block_names_index(self):
        blocks = SampleBlocks.contiguous([1, 1], 1)
        x = np.diag([1.0, 0.0, 1.0])
        with pytest.raises(EvaluationError, match="sample block 1"):
            delta(x, blocks)


class TestPicardStep:
    def test_scalar_diagonal_case(self):
        # K=I, B=I, blocks (1|1), lam=1: q = diag(2, 1/2),
        # next iterate = diag((sqrt(9)-1)/2, (sqrt(3)-1)/2)
        blocks = SampleBlocks.contiguous([1], 1)
        nxt = picard_step(np.eye(2), np.eye(2), blocks, 1.0)
        np.testing.assert_allclose(
            nxt, np.diag([1.0, (np.sqrt(3.0) - 1.0) / 2.0]), atol=1e-12
        )

    def test_closed_form_is_fixed_point(self):
        rng = np.random.default_rng(3)
        pts = UNIT.sample_uniform(rng, 15)
        model = closed_form(pts, KERNEL, 0.1)
        k = build_gram(pts, KERNEL)
        r, _ = chol_psd(k)
        blocks = SampleBlocks.overlapping(15)
        nxt = picard_step(model.b_matrix, r, blocks, 0.1)
        dev = np.linalg.norm(nxt - model.b_matrix) / np.linalg.norm(model.b_matrix)
        assert dev < 1e-8

    def test_output_psd_for_random_psd_inputs(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            z, blocks, k, r = random_instance(rng, [2], 3)
            a = rng.standard_normal((5, 5))
            b = symmetrize(a @ a.T) + 0.01 * np.eye(5)
            nxt = picard_step(b, r, blocks, float(rng.choice([1e-3, 0.1, 1.0])))
            assert np.linalg.eigvalsh(nxt)[0] >= -1e-10


class TestStationarityResidual:
    def test_zero_at_closed_form(self):
        rng = np.random.default_rng(5)
        pts = UNIT.sample_uniform(rng, 12)
        model = closed_form(pts, KERNEL, 0.1)
        k = build_gram(pts, KERNEL)
        r, _ = chol_psd(k)
        blocks = SampleBlocks.overlapping(12)
        assert stationarity_residual(model.b_matrix, r, blocks, 0.1) < 1e-8

    def test_large_away_from_solution(self):
        rng = np.random.default_rng(6)
        pts = UNIT.sample_uniform(rng, 12)
        model = closed_form(pts, KERNEL, 0.1)
        k = build_gram(pts, KERNEL)
        r, _ = chol_psd(k)
        blocks = SampleBlocks.overlapping(12)
        assert stationarity_residual(2.0 * model.b_matrix, r, blocks, 0.1) > 1e-3

    def test_trend_decreasing_along_iteration(self):
        rng = np.random.default_rng(7)
        pts = UNIT.sample_uniform(rng, 30)
        pat = PointPattern(UNIT, (pts,))
        cfg = FitConfig(lam=0.1, n_fredholm=1, tol=1e-7, max_iter=5000, seed=0,
                        fredholm_from_sample=True)
        _, trace = fit(pat, KERNEL, cfg)
        res = trace.residuals
        assert res[-1] < 1e-6
        # monotone in trend: first-quarter mean dominates last-quarter mean
        quarter = max(len(res) // 4, 1)
        assert np.mean(res[-quarter:]) < np.mean(res[:quarter])


class TestClosedForm:
    def test_scalar_instance(self):
        # m=1, K=[1], lam=4/3: C = (sqrt(1+3)-1)/2 = 0.5
        model = closed_form(np.array([[0.5, 0.5]]), KERNEL, 4.0 / 3.0)
        assert model.c_matrix[0, 0] == pytest.approx(0.5, rel=1e-9)

    def test_large_regularization_nystrom_scaling(self):
        # lam C -> K^{-1} as lam -> inf; for m=1, |lam c - 1| = O(1/lam)
        model = closed_form(np.array([[0.2, 0.8]]), KERNEL, 1e6)
        assert abs(1e6 * model.c_matrix[0, 0] - 1.0) < 2e-6

    def test_first_order_condition_residual(self):
        rng = np.random.default_rng(8)
        pts = UNIT.sample_uniform(rng, 4)
        lam = 0.2
        model = closed_form(pts, KERNEL, lam)
        k = build_gram(pts, KERNEL) + model.b_matrix[0, 0] * 0  # keep shape
        k = build_gram(pts, KERNEL) + 1e-10 * np.eye(4)  # jitter used by closed_form
        x = k @ model.c_matrix @ k
        residual = x @ x + 4.0 * x - (4.0 / lam) * k
        rel = np.linalg.norm(residual) / np.linalg.norm((4.0 / lam) * k)
        assert rel < 1e-8

    def test_duplicate_points_rejected(self):
        pts = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises((ConditioningError, InputError)):
            closed_form(pts, KERNEL, 0.1)


class TestFit:
    def test_converges_to_closed_form(self):
        rng = np.random.default_rng(9)
        pts = UNIT.sample_uniform(rng, 40)
        pat = PointPattern(UNIT, (pts,))
        cfg = FitConfig(lam=0.1, n_fredholm=1, tol=1e-7, max_iter=5000, seed=0,
                        fredholm_from_sample=True)
        model, trace = fit(pat, KERNEL, cfg)
        exact = closed_form(pts, KERNEL, 0.1, window=UNIT)
        rel = np.linalg.norm(model.b_matrix - exact.b_matrix) / np.linalg.norm(exact.b_matrix)
        assert trace.converged
        assert rel < 1e-6

    def test_objectives_non_increasing_and_bounded(self):
        rng = np.random.default_rng(10)
        for seed in range(5):
            sizes = [int(rng.integers(2, 8)) for _ in range(int(rng.choice([1, 2])))]
            pts = [UNIT.sample_uniform(rng, k) for k in sizes]
            pat = PointPattern(UNIT, tuple(pts))
            cfg = FitConfig(lam=float(rng.choice([1e-2, 1e-1])), n_fredholm=10,
                            tol=1e-6, max_iter=800, seed=seed)
            _, trace = fit(pat, KERNEL, cfg)
            obj = trace.objectives
            assert np.all(np.diff(obj) <= 1e-8 * (1 + np.abs(obj[:-1])))
            assert np.all(obj >= trace.lower_bound - 1e-9 * (1 + abs(trace.lower_bound)))

    def test_equal_seeds_bit_identical(self):
        rng = np.random.default_rng(11)
        pts = UNIT.sample_uniform(rng, 6)
        pat = PointPattern(UNIT, (pts,))
        cfg = FitConfig(lam=0.05, n_fredholm=8, tol=1e-6, max_iter=300, seed=123)
        m1, t1 = fit(pat, KERNEL, cfg)
        m2, t2 = fit(pat, KERNEL, cfg)
        np.testing.assert_array_equal(m1.c_matrix, m2.c_matrix)
        np.testing.assert_array_equal(m1.landmarks, m2.landmarks)
        np.testing.assert_array_equal(t1.objectives, t2.objectives)

    def test_different_seed_changes_anchors(self):
        rng = np.random.default_rng(12)
        pts = UNIT.sample_uniform(rng, 6)
        pat = PointPattern(UNIT, (pts,))
        cfg1 = FitConfig(lam=0.05, n_fredholm=8, tol=1e-6, max_iter=100, seed=1)
        cfg2 = FitConfig(lam=0.05, n_fredholm=8, tol=1e-6, max_iter=100, seed=2)
        m1, _ = fit(pat, KERNEL, cfg1)
        m2, _ = fit(pat, KERNEL, cfg2)
        assert not np.array_equal(m1.landmarks, m2.landmarks)

    def test_landmark_layout(self):
        rng = np.random.default_rng(13)
        a, b = UNIT.sample_uniform(rng, 3), UNIT.sample_uniform(rng, 2)
        pat = PointPattern(UNIT, (a, b))
        cfg = FitConfig(lam=0.1, n_fredholm=4, tol=1e-4, max_iter=50, seed=5)
        model, _ = fit(pat, KERNEL, cfg)
        assert model.m == 9
        np.testing.assert_array_equal(model.landmarks[:3], a)
        np.testing.assert_array_equal(model.landmarks[3:5], b)
        assert model.n_fredholm == 4
        assert model.sample_offsets.s == 2

    def test_degenerate_window_duplicate_anchor_draw_fails(self):
        tiny = Window((0.0, 0.0), (1e-13, 1e-13))
        pat = PointPattern(tiny, (np.array([[5e-14, 5e-14]]),))
        cfg = FitConfig(lam=0.1, n_fredholm=1, tol=1e-4, max_iter=10, seed=0)
        with pytest.raises(InputError, match="100 attempts"):
            fit(pat, KERNEL, cfg)

    def test_empty_sample_rejected(self):
        pat = PointPattern(UNIT, (np.empty((0, 2)),))
        cfg = FitConfig(lam=0.1, n_fredholm=4, tol=1e-4, max_iter=10, seed=0)
        with pytest.raises(InputError, match="at least one point"):
            fit(pat, KERNEL, cfg)

    def test_from_sample_mode_requires_single_sample(self):
        rng = np.random.default_rng(14)
        pat = PointPattern(UNIT, (UNIT.sample_uniform(rng, 3), UNIT.sample_uniform(rng, 3)))
        cfg = FitConfig(lam=0.1, n_fredholm=1, tol=1e-4, max_iter=10, seed=0,
                        fredholm_from_sample=True)
        with pytest.raises(InputError, match="one sample"):
            fit(pat, KERNEL, cfg)

    def test_b0_fallback_on_undefined_start(self, monkeypatch):
        import dpplearn.solver as solver_mod

        calls = {"n": 0}
        original = solver_mod._factor_blocks

        def flaky(x, blocks):
            calls["n"] += 1
            if calls["n"] == 1:
                raise EvaluationError("sample block 0 synthetic failure")
            return original(x, blocks)

        monkeypatch.setattr(solver_mod, "_factor_blocks", flaky)
        rng = np.random.default_rng(15)
        pat = PointPattern(UNIT, (UNIT.sample_uniform(rng, 4),))
        cfg = FitConfig(lam=0.1, n_fredholm=4, tol=1e-4, max_iter=200, seed=0)
        with pytest.warns(UserWarning, match="restarting"):
            model, trace = fit(pat, KERNEL, cfg)
        assert trace.min_eigenvalues[0] == 10.0


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(lam=0.0, n_fredholm=1),
            dict(lam=0.1, n_fredholm=0),
            dict(lam=0.1, n_fredholm=1, tol=1.5),
            dict(lam=0.1, n_fredholm=1, tol=0.0),
            dict(lam=0.1, n_fredholm=1, max_iter=0),
            dict(lam=0.1, n_fredholm=1, b0_scale=-1.0),
        ],
    )
    def test_bad_configs_rejected(self, kwargs):
        with pytest.raises(InputError):
            FitConfig(**kwargs)


class TestLowerBound:
    def test_matches_hand_formula(self):
        blocks = SampleBlocks.contiguous([3, 2], 4)
        lam, k_op = 0.2, 5.0
        expected = (3 + 2) * (1.0 + np.log(2 * lam / k_op)) / 2
        assert objective_lower_bound(blocks, lam, k_op) == pytest.approx(expected)

import numpy as np
import pytest

from dpplearn.errors import InputError
from dpplearn.model import (
    CorrelationModel,
    LikelihoodModel,
    PointPattern,
    RkhsKernel,
    Window,
    eval_correlation_kernel,
    eval_likelihood_kernel,
    intensity_grid,
    operator_spectrum,
)
from dpplearn.numerics import symmetrize

UNIT = Window((0.0, 0.0), (1.0, 1.0))
KERNEL = RkhsKernel(sigma=0.1)


def make_model(rng, m, window=UNIT):
    pts = window.sample_uniform(rng, m)
    a = rng.standard_normal((m, m))
    c = symmetrize(a @ a.T)
    return LikelihoodModel(kernel=KERNEL, lam=0.1, landmarks=pts, c_matrix=c,
                           window=window)


class TestWindow:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(InputError):
            Window((0.0, 0.0), (1.0, 0.0))

    def test_volume(self):
        assert Window((0.0, 1.0), (2.0, 3.0)).volume == pytest.approx(4.0)

    def test_from_flat(self):
        w = Window.from_flat([0, 0, 1, 2])
        assert w.lo == (0.0, 0.0) and w.hi == (1.0, 2.0)
        with pytest.raises(InputError):
            Window.from_flat([0, 0, 1])

    def test_cell_centers_resolution_two(self):
        centers = UNIT.cell_centers(2)
        expected = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
        np.testing.assert_allclose(centers, expected)

    def test_uniform_draw_inside(self):
        w = Window((1.0, -1.0), (2.0, 4.0))
        pts = w.sample_uniform(np.random.default_rng(0), 500)
        assert np.all(w.contains(pts))


class TestPointPattern:
    def test_rejects_points_outside(self):
        with pytest.raises(InputError, match="outside"):
            PointPattern(UNIT, (np.array([[0.5, 1.5]]),))

    def test_rejects_near_duplicates_across_samples(self):
        p = np.array([[0.5, 0.5]])
        with pytest.raises(InputError, match="duplicate"):
            PointPattern(UNIT, (p, p + 1e-14))

    def test_sizes_and_points(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((3, 2)), rng.random((2, 2))
        pat = PointPattern(UNIT, (a, b))
        assert pat.sizes == (3, 2)
        assert pat.points.shape == (5, 2)

    def test_empty_sample_allowed(self):
        pat = PointPattern(UNIT, (np.empty((0, 2)),))
        assert pat.sizes == (0,)


class TestEvaluation:
    def test_single_landmark_diagonal_value(self):
        z = np.array([[0.4, 0.6]])
        model = LikelihoodModel(kernel=KERNEL, lam=0.1, landmarks=z,
                                c_matrix=np.array([[2.5]]), window=UNIT)
        assert eval_likelihood_kernel(model, z[0], z[0]) == pytest.approx(2.5, rel=1e-14)

    def test_symmetry_random_pairs(self):
        rng = np.random.default_rng(2)
        model = make_model(rng, 6)
        for _ in range(100):
            x, y = UNIT.sample_uniform(rng, 2)
            fxy = eval_likelihood_kernel(model, x, y)
            fyx = eval_likelihood_kernel(model, y, x)
            assert fxy == pytest.approx(fyx, abs=1e-12 * (1 + abs(fxy)))

    def test_matches_double_sum_loop(self):
        rng = np.random.default_rng(4)
        z = UNIT.sample_uniform(rng, 2)
        c = symmetrize(rng.standard_normal((2, 2)))
        model = LikelihoodModel(kernel=KERNEL, lam=1.0, landmarks=z, c_matrix=c,
                                window=UNIT)
        x, y = UNIT.sample_uniform(rng, 2)
        expected = 0.0
        for i in range(2):
            for j in range(2):
                kxi = np.exp(-np.sum((z[i] - x) ** 2) / (2 * KERNEL.sigma**2))
                kyj = np.exp(-np.sum((z[j] - y) ** 2) / (2 * KERNEL.sigma**2))
                expected += c[i, j] * kxi * kyj
        assert eval_likelihood_kernel(model, x, y) == pytest.approx(expected, rel=1e-12)

    def test_correlation_matches_double_sum(self):
        rng = np.random.default_rng(5)
        z = UNIT.sample_uniform(rng, 3)
        omega = symmetrize(rng.standard_normal((3, 3)))
        model = CorrelationModel(kernel=KERNEL, gamma=1.0, landmarks=z, omega=omega,
                                 window=UNIT)
        x, y = UNIT.sample_uniform(rng, 2)
        kx = KERNEL.gram(x[None], z)[0]
        ky = KERNEL.gram(y[None], z)[0]
        expected = float(kx @ omega @ ky)
        assert eval_correlation_kernel(model, x, y) == pytest.approx(expected, rel=1e-12)

    def test_correlation_single_landmark(self):
        z = np.array([[0.2, 0.9]])
        model = CorrelationModel(kernel=KERNEL, gamma=1.0, landmarks=z,
                                 omega=np.array([[0.7]]), window=UNIT)
        assert eval_correlation_kernel(model, z[0], z[0]) == pytest.approx(0.7)

    def test_point_outside_window_rejected(self):
        rng = np.random.default_rng(6)
        model = make_model(rng, 3)
        with pytest.raises(InputError, match="outside"):
            eval_likelihood_kernel(model, [1.5, 0.5], [0.5, 0.5])

    def test_landmark_permutation_invariance(self):
        rng = np.random.default_rng(8)
        model = make_model(rng, 5)
        perm = rng.permutation(5)
        permuted = LikelihoodModel(
            kernel=KERNEL, lam=model.lam,
            landmarks=model.landmarks[perm],
            c_matrix=model.c_matrix[np.ix_(perm, perm)],
            window=UNIT,
        )
        for _ in range(20):
            x, y = UNIT.sample_uniform(rng, 2)
            a = eval_likelihood_kernel(model, x, y)
            b = eval_likelihood_kernel(permuted, x, y)
            assert a == pytest.approx(b, abs=1e-12 * (1 + abs(a)))


class TestIntensityGrid:
    def test_resolution_two_cell_centers(self):
        rng = np.random.default_rng(9)
        model = make_model(rng, 3)
        pts, vals = intensity_grid(model, 2)
        expected = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
        np.testing.assert_allclose(pts, expected)
        assert vals.shape == (4,)

    def test_psd_representer_gives_nonnegative_values(self):
        rng = np.random.default_rng(10)
        model = make_model(rng, 8)  # C = A A^T is PSD
        _, vals = intensity_grid(model, 25)
        assert np.all(vals >= -1e-10)

    def test_single_landmark_closed_form_decay(self):
        z = np.array([[0.5, 0.5]])
        kappa = 1.7
        model = LikelihoodModel(kernel=KERNEL, lam=0.1, landmarks=z,
                                c_matrix=np.array([[kappa]]), window=UNIT)
        pts, vals = intensity_grid(model, 10)
        for p, v in zip(pts, vals):
            kz = np.exp(-np.sum((p - z[0]) ** 2) / (2 * KERNEL.sigma**2))
            assert v == pytest.approx(kappa * kz**2, rel=1e-10)

    def test_requires_resolution_two(self):
        rng = np.random.default_rng(12)
        with pytest.raises(InputError):
            intensity_grid(make_model(rng, 3), 1)


class TestOperatorSpectrum:
    def test_matches_general_eigensolver_on_kc(self):
        # spectrum of the represented operator == nonzero spectrum of K C,
        # computed here by an independent nonsymmetric eigensolver
        from dpplearn.numerics import build_gram

        rng = np.random.default_rng(13)
        model = make_model(rng, 7)
        k = build_gram(model.landmarks, model.kernel)
        oracle = np.sort(np.linalg.eigvals(k @ model.c_matrix).real)[::-1]
        spec = operator_spectrum(model)
        np.testing.assert_allclose(spec, oracle, rtol=1e-8, atol=1e-10)

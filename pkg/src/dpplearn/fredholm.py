"""Sampled Fredholm determinant machinery.

The likelihood normalizer ``logdet(I + A)`` of a trace-class operator is
approximated by the determinant of a finite matrix built from evaluations
of the operator's kernel at sampled points. This module provides that
sampled determinant, a deterministic cell-center quadrature oracle for
desk-scale ground truth, the concentration constant ``c_n`` governing the
approximation error, and a decay experiment measuring the empirical
error rate against the oracle.

Kernel arguments are callables ``a(X, Y) -> matrix`` returning the cross
evaluation ``[a(x_i, y_j)]``; the fitted models' ``gram`` methods have
exactly this signature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyWarning, InputError
from .model import Window
from .numerics import chol_psd, symmetrize

#: quadrature refinement acceptance threshold: doubling the resolution
#: must move the oracle value by less than this.
REFINE_TOL = 1e-4


@dataclass
class FredholmDiag:
    """Single-n diagnostic: the sampled log-determinant, the quadrature
    oracle value, the concentration constant and the error bound it
    implies. ``oracle_refine_delta`` records the quadrature
    self-refinement change; past `REFINE_TOL` the oracle is suspect."""

    n: int
    sampled_logdet: float
    oracle_logdet: float | None = None
    c_n: float | None = None
    bound: float | None = None
    oracle_refine_delta: float | None = None


def logdet_one_plus_scaled(gram: np.ndarray, n: int) -> float:
    """``logdet(I + G/n)`` through a Cholesky factor of the shifted matrix.

    ``G`` must be (numerically) PSD so the argument is positive definite
    with smallest eigenvalue at least 1 up to roundoff.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    g = symmetrize(gram)
    a = np.eye(g.shape[0]) + g / n
    factor, jitter = chol_psd(a, base_jitter=0.0)
    del jitter  # argument is >= I, plain factorization succeeds
    return float(2.0 * np.sum(np.log(np.diag(factor))))


def sampled_logdet(a_eval, eval_points: np.ndarray) -> float:
    """Sampled Fredholm log-determinant ``logdet(I_n + G/n)`` with
    ``G[i, j] = a(x'_i, x'_j)`` over ``n`` evaluation points."""
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    return logdet_one_plus_scaled(a_eval(pts, pts), len(pts))


def _quadrature_value(a_eval, window: Window, resolution: int) -> float:
    nodes = window.cell_centers(resolution)
    return logdet_one_plus_scaled(a_eval(nodes, nodes), len(nodes))


def quadrature_fredholm(a_eval, window: Window, grid_resolution: int) -> float:
    """Deterministic quadrature oracle for the Fredholm log-determinant.

    Evaluates on cell centers at ``grid_resolution`` and at double that
    resolution; warns with `AccuracyWarning` when the refinement moves the
    value by `REFINE_TOL` or more, and returns the finer value.
    """
    if grid_resolution < 16:
        raise InputError(f"grid_resolution must be >= 16 per axis, got {grid_resolution}")
    coarse = _quadrature_value(a_eval, window, grid_resolution)
    fine = _quadrature_value(a_eval, window, 2 * grid_resolution)
    if abs(fine - coarse) >= REFINE_TOL:
        warnings.warn(
            f"quadrature refinement {grid_resolution} -> {2 * grid_resolution} moved "
            f"the Fredholm value by {abs(fine - coarse):.2e} (>= {REFINE_TOL:g})",
            AccuracyWarning,
        )
    return fine


def _c_n_from_log_term(n: int, log_term: float, ell: float, kappa2: float) -> float:
    return 4.0 * kappa2 * log_term / (3.0 * n) + np.sqrt(2.0 * kappa2 * ell * log_term / n)


def c_n_bound(n: int, delta: float, ell_est: float, kappa2: float = 1.0) -> float:
    """Concentration constant controlling the sampled-determinant error:

        c_n = 4 k^2 log(2 k^2/(l d)) / (3n) + sqrt(2 k^2 l log(2 k^2/(l d)) / n)

    with ``l`` the top eigenvalue of the RKHS integral operator and
    ``k^2`` the kernel-diagonal supremum. Monotone decreasing in ``n``.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if not (0 < delta < 0.5):
        raise InputError(f"delta must lie in (0, 1/2), got {delta}")
    if ell_est <= 0:
        raise InputError(f"ell_est must be positive, got {ell_est}")
    if kappa2 <= 0:
        raise InputError(f"kappa2 must be positive, got {kappa2}")
    log_term = np.log(2.0 * kappa2 / (ell_est * delta))
    if log_term <= 0:
        raise InputError(
            f"log(2 kappa^2 / (ell delta)) = {log_term:.3g} is not positive; "
            "the bound is vacuous for these parameters"
        )
    return float(_c_n_from_log_term(n, log_term, ell_est, kappa2))


def ell_estimate(kernel, window: Window, grid_resolution: int = 64) -> float:
    """Top eigenvalue of the RKHS integral operator, estimated as the top
    eigenvalue of the cell-center kernel matrix scaled by 1/N (a plain
    landmark-grid eigenvalue estimate; treat it as an estimate)."""
    nodes = window.cell_centers(grid_resolution)
    k = kernel.gram(nodes)
    return float(np.linalg.eigvalsh(symmetrize(k / len(nodes)))[-1])


def fredholm_error_bound(spectrum: np.ndarray, c_n: float) -> float:
    """Error bound ``logdet(I + c_n A) = sum_i log(1 + c_n sigma_i)`` from
    the operator spectrum (eigenvalues of the whitened iterate)."""
    sig = np.clip(np.asarray(spectrum, dtype=float), 0.0, None)
    return float(np.sum(np.log1p(c_n * sig)))


@dataclass
class DecayResult:
    """Outcome of the error-decay experiment: per-(n, seed) absolute
    errors, per-n means, the fitted log-log slope, and the oracle value
    the errors are measured against."""

    rows: list
    mean_errors: dict
    slope: float
    oracle_logdet: float


def error_decay_experiment(a_eval, window: Window, n_list, n_seeds: int,
                           base_seed: int = 0,
                           oracle_resolution: int = 32) -> DecayResult:
    """Mean absolute error of the sampled determinant versus the
    quadrature oracle, over an ascending list of sample sizes.

    Each (n, repetition) pair gets an independent generator spawned from
    ``base_seed``, so repetitions are exchangeable and the experiment is
    reproducible. Returns rows ``(n, seed_index, abs_error)`` and the
    least-squares slope of ``log(mean error)`` against ``log n``.
    """
    ns = [int(n) for n in n_list]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("n_list must be ascending with at least two entries")
    if n_seeds < 1:
        raise InputError(f"n_seeds must be >= 1, got {n_seeds}")
    oracle = quadrature_fredholm(a_eval, window, oracle_resolution)
    children = np.random.SeedSequence(base_seed).spawn(len(ns) * n_seeds)
    rows = []
    mean_errors = {}
    for i, n in enumerate(ns):
        errs = []
        for rep in range(n_seeds):
            rng = np.random.default_rng(children[i * n_seeds + rep])
            pts = window.sample_uniform(rng, n)
            err = abs(sampled_logdet(a_eval, pts) - oracle)
            rows.append((n, rep, err))
            errs.append(err)
        mean_errors[n] = float(np.mean(errs))
    slope, _ = np.polyfit(np.log(ns), np.log([mean_errors[n] for n in ns]), 1)
    return DecayResult(rows=rows, mean_errors=mean_errors, slope=float(slope),
                       oracle_logdet=oracle)


def fredholm_diagnostic(model, n: int, seed: int, delta: float = 0.05,
                        oracle_resolution: int = 32,
                        ell: float | None = None) -> FredholmDiag:
    """Assemble the full diagnostic record for one sampled determinant of
    a fitted model: the sample value, the quadrature oracle, ``c_n`` and
    the error bound it implies for the model's spectrum."""
    if model.window is None:
        raise InputError("model has no window; cannot place quadrature nodes")
    rng = np.random.default_rng(seed)
    pts = model.window.sample_uniform(rng, n)
    sampled = sampled_logdet(model.gram, pts)
    coarse = _quadrature_value(model.gram, model.window, oracle_resolution)
    fine = _quadrature_value(model.gram, model.window, 2 * oracle_resolution)
    if ell is None:
        ell = ell_estimate(model.kernel, model.window)
    c_n = c_n_bound(n, delta, ell, model.kernel.kappa2)
    if model.b_matrix is not None:
        spectrum = np.linalg.eigvalsh(model.b_matrix)
    else:
        nodes = model.window.cell_centers(oracle_resolution)
        spectrum = np.linalg.eigvalsh(symmetrize(model.gram(nodes) / len(nodes)))
    return FredholmDiag(
        n=n,
        sampled_logdet=sampled,
        oracle_logdet=fine,
        c_n=c_n,
        bound=fredholm_error_bound(spectrum, c_n),
        oracle_refine_delta=abs(fine - coarse),
    )

"""Domain types: observation windows, RKHS kernels, point patterns, and
fitted kernel models, plus the kernel-evaluation operations.

Both fitted model types represent an integral kernel as a quadratic form
``sum_ij M[i, j] * k_H(z_i, x) * k_H(z_j, y)`` over a fixed, ordered list
of landmark points ``z_1..z_m``; the landmark order is part of the model
and must match the order used during fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

#: two points closer than this in infinity norm count as duplicates;
#: duplicate landmarks make the kernel matrix exactly singular, so they
#: are rejected rather than silently merged.
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class Window:
    """Axis-aligned box in R^d carrying the uniform reference measure."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) == 0:
            raise InputError(f"window bounds must have equal positive length, got {lo} / {hi}")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise InputError("window bounds must be finite")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InputError(f"window must satisfy hi > lo per axis, got lo={lo}, hi={hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "Window":
        """Build from a flattened ``lo0,..,lo{d-1},hi0,..,hi{d-1}`` list."""
        vals = [float(v) for v in values]
        if len(vals) % 2 != 0 or len(vals) == 0:
            raise InputError(f"flattened window must have even length, got {len(vals)} values")
        d = len(vals) // 2
        return cls(tuple(vals[:d]), tuple(vals[d:]))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the closed box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` i.i.d. points from the uniform measure on the box."""
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return lo + rng.random((n, self.dim)) * (hi - lo)

    def cell_centers(self, resolution: int) -> np.ndarray:
        """Centers of a regular ``resolution^d`` grid of congruent cells.

        Ordering is row-major with coordinate 0 varying fastest, e.g. for
        d=2 and resolution 2 on [0,1]^2: (.25,.25), (.75,.25), (.25,.75),
        (.75,.75).
        """
        if resolution < 1:
            raise InputError(f"resolution must be >= 1, got {resolution}")
        axes = [
            self.lo[j] + (np.arange(resolution) + 0.5) * (self.hi[j] - self.lo[j]) / resolution
            for j in range(self.dim)
        ]
        mesh = np.meshgrid(*axes[::-1], indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)[:, ::-1]

    def cell_widths(self, resolution: int) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / resolution


@dataclass(frozen=True)
class RkhsKernel:
    """Reproducing kernel of the hypothesis space; only the Gaussian family
    ``k_H(x, y) = exp(-||x - y||^2 / (2 sigma^2))`` is implemented, for
    which ``sup_x k_H(x, x) = 1``."""

    sigma: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise InputError(f"unsupported kernel family '{self.family}'")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InputError(f"kernel bandwidth must be positive, got {self.sigma}")

    @property
    def kappa2(self) -> float:
        """Supremum of the kernel diagonal (1 for the Gaussian family)."""
        return 1.0

    def gram(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Cross Gram matrix ``[k_H(x_i, y_j)]``; ``y=None`` means ``y=x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x if y is None else np.atleast_2d(np.asarray(y, dtype=float))
        sq = cdist(x, y, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))


def _check_distinct(points: np.ndarray, what: str) -> None:
    if len(points) < 2:
        return
    d_inf = cdist(points, points, "chebyshev")
    np.fill_diagonal(d_inf, np.inf)
    i, j = np.unravel_index(np.argmin(d_inf), d_inf.shape)
    if d_inf[i, j] < DUPLICATE_TOL:
        raise InputError(
            f"{what} contains near-duplicate points at indices {i} and {j} "
            f"(distance {d_inf[i, j]:.2e} below {DUPLICATE_TOL:g})"
        )


@dataclass(frozen=True)
class PointPattern:
    """A set of ``s >= 1`` observed samples, each an ordered list of points
    inside a common window. Points must be pairwise distinct across the
    concatenation of all samples."""

    window: Window
    samples: tuple

    def __post_init__(self):
        if len(self.samples) < 1:
            raise InputError("a point pattern needs at least one sample")
        cleaned = []
        for idx, sample in enumerate(self.samples):
            pts = np.asarray(sample, dtype=float).reshape(-1, self.window.dim)
            if not np.all(np.isfinite(pts)):
                raise InputError(f"sample {idx} contains non-finite coordinates")
            if len(pts) and not np.all(self.window.contains(pts)):
                raise InputError(f"sample {idx} has points outside the window")
            cleaned.append(pts)
        object.__setattr__(self, "samples", tuple(cleaned))
        _check_distinct(self.points, "point pattern")

    @property
    def s(self) -> int:
        return len(self.samples)

    @property
    def sizes(self) -> tuple:
        return tuple(len(c) for c in self.samples)

    @property
    def points(self) -> np.ndarray:
        nonempty = [c for c in self.samples if len(c)]
        if not nonempty:
            return np.empty((0, self.window.dim))
        return np.concatenate(nonempty, axis=0)


@dataclass(frozen=True, eq=False)
class SampleBlocks:
    """Index blocks of the landmark list: one index array per observed
    sample and one for the Fredholm anchor set. Blocks may overlap (the
    single-sample closed-form configuration reuses the sample as anchors).
    """

    samples: tuple
    fredholm: np.ndarray

    @property
    def s(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return len(self.fredholm)

    @classmethod
    def contiguous(cls, sizes: Sequence[int], n_fredholm: int) -> "SampleBlocks":
        """Standard layout: samples concatenated first, anchors last."""
        blocks = []
        start = 0
        for size in sizes:
            blocks.append(np.arange(start, start + size))
            start += size
        fred = np.arange(start, start + n_fredholm)
        return cls(tuple(blocks), fred)

    @classmethod
    def overlapping(cls, m: int) -> "SampleBlocks":
        """Single sample that doubles as the Fredholm anchor set."""
        idx = np.arange(m)
        return cls((idx,), idx.copy())


@dataclass(eq=False)
class LikelihoodModel:
    """Fitted likelihood-kernel model: landmarks ``Z`` and PSD representer
    matrix ``C`` defining ``a(x, y) = k_x^T C k_y`` with
    ``(k_x)_i = k_H(z_i, x)``.

    ``b_matrix`` (the iterate in the whitened coordinates), the block
    layout and the anchor count are diagnostics kept from fitting; they are
    not part of the serialized form.
    """

    kernel: RkhsKernel
    lam: float
    landmarks: np.ndarray
    c_matrix: np.ndarray
    window: Window | None = None
    b_matrix: np.ndarray | None = None
    n_fredholm: int | None = None
    sample_offsets: SampleBlocks | None = None
    fredholm_from_sample: bool = False

    def __post_init__(self):
        self.landmarks = np.atleast_2d(np.asarray(self.landmarks, dtype=float))
        self.c_matrix = np.asarray(self.c_matrix, dtype=float)
        m = len(self.landmarks)
        if self.c_matrix.shape != (m, m):
            raise InputError(
                f"representer matrix shape {self.c_matrix.shape} does not match "
                f"{m} landmarks"
            )
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InputError(f"lambda must be positive, got {self.lam}")

    @property
    def m(self) -> int:
        return len(self.landmarks)

    @property
    def matrix(self) -> np.ndarray:
        return self.c_matrix

    def gram(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Cross matrix ``[a(x_i, y_j)]`` of the fitted kernel."""
        kx = self.kernel.gram(np.atleast_2d(np.asarray(x, float)), self.landmarks)
        ky = kx if y is None else self.kernel.gram(np.atleast_2d(np.asarray(y, float)), self.landmarks)
        return kx @ self.c_matrix @ ky.T


@dataclass(eq=False)
class CorrelationModel:
    """Estimated correlation-kernel model ``k(x, y) = k_x^T Omega k_y``
    over the same landmark construction as `LikelihoodModel`."""

    kernel: RkhsKernel
    gamma: float
    landmarks: np.ndarray
    omega: np.ndarray
    window: Window | None = None
    p_used: int | None = None

    def __post_init__(self):
        self.landmarks = np.atleast_2d(np.asarray(self.landmarks, dtype=float))
        self.omega = np.asarray(self.omega, dtype=float)
        m = len(self.landmarks)
        if self.omega.shape != (m, m):
            raise InputError(
                f"omega shape {self.omega.shape} does not match {m} landmarks"
            )
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InputError(f"gamma must be positive, got {self.gamma}")

    @property
    def m(self) -> int:
        return len(self.landmarks)

    @property
    def matrix(self) -> np.ndarray:
        return self.omega

    def gram(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        kx = self.kernel.gram(np.atleast_2d(np.asarray(x, float)), self.landmarks)
        ky = kx if y is None else self.kernel.gram(np.atleast_2d(np.asarray(y, float)), self.landmarks)
        return kx @ self.omega @ ky.T


def _check_in_window(model, point: np.ndarray, name: str) -> np.ndarray:
    pt = np.asarray(point, dtype=float).reshape(-1)
    if not np.all(np.isfinite(pt)):
        raise InputError(f"{name} has non-finite coordinates")
    if pt.shape[0] != model.landmarks.shape[1]:
        raise InputError(
            f"{name} has dimension {pt.shape[0]}, model expects {model.landmarks.shape[1]}"
        )
    if model.window is not None and not model.window.contains(pt[None])[0]:
        raise InputError(f"{name} {tuple(pt)} lies outside the model window")
    return pt


def eval_likelihood_kernel(model: LikelihoodModel, x, y) -> float:
    """Evaluate the fitted likelihood kernel at a pair of points."""
    px = _check_in_window(model, x, "x")
    py = _check_in_window(model, y, "y")
    return float(model.gram(px[None], py[None])[0, 0])


def eval_correlation_kernel(model: CorrelationModel, x, y) -> float:
    """Evaluate the estimated correlation kernel at a pair of points."""
    px = _check_in_window(model, x, "x")
    py = _check_in_window(model, y, "y")
    return float(model.gram(px[None], py[None])[0, 0])


def operator_spectrum(model) -> np.ndarray:
    """Eigenvalues (descending) of the operator a fitted model represents.

    They coincide with the nonzero eigenvalues of ``K M`` (kernel matrix
    times representer matrix), computed here as the spectrum of the
    congruent symmetric matrix ``R M R^T``; the fitted whitened matrix is
    used directly when the model still carries it.
    """
    from .numerics import build_gram, chol_psd, symmetrize

    b = getattr(model, "b_matrix", None)
    if b is None:
        k = build_gram(model.landmarks, model.kernel)
        r, _ = chol_psd(k)
        b = symmetrize(r @ model.matrix @ r.T)
    return np.linalg.eigvalsh(b)[::-1].copy()


def intensity_grid(model, resolution: int, window: Window | None = None):
    """Diagonal of the fitted kernel on a regular cell-center grid.

    Returns ``(points, values)`` in row-major order with the first
    coordinate varying fastest. Grid emission requires d = 2; for other
    dimensions evaluate `model.gram` on caller-supplied points.
    """
    if resolution < 2:
        raise InputError(f"grid resolution must be >= 2, got {resolution}")
    win = window if window is not None else model.window
    if win is None:
        raise InputError("model has no window; pass one explicitly")
    if win.dim != 2:
        raise InputError(f"grid output requires d = 2, got d = {win.dim}")
    pts = win.cell_centers(resolution)
    kx = model.kernel.gram(pts, model.landmarks)
    values = np.einsum("ij,ij->i", kx @ model.matrix, kx)
    return pts, values

"""File formats: the versioned model text format, point-pattern CSV, and
the CSV reports emitted by the CLI.

All reals are written as decimals with 17 significant digits, which
round-trips IEEE doubles bit-exactly. Lines starting with ``#`` are
comments and are skipped by every reader; writers use them for provenance
headers (CLI argv, window bounds).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError, VersionError
from .model import CorrelationModel, LikelihoodModel, PointPattern, RkhsKernel, Window
from .numerics import symmetrize

MODEL_MAGIC = "dpplearn-model"
MODEL_VERSION = "v1"


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def _window_comment(window: Window | None) -> list:
    if window is None:
        return []
    return ["# window " + " ".join(_fmt(v) for v in (*window.lo, *window.hi))]


def _parse_window_comment(lines) -> Window | None:
    for line in lines:
        if line.startswith("# window "):
            vals = line[len("# window ") :].split()
            return Window.from_flat(vals)
    return None


def save_model(model, path, header_comment: str | None = None) -> None:
    """Write a fitted model in the line-oriented text format."""
    if isinstance(model, LikelihoodModel):
        kind, scale = "likelihood", model.lam
    elif isinstance(model, CorrelationModel):
        kind, scale = "correlation", model.gamma
    else:
        raise InputError(f"cannot serialize object of type {type(model).__name__}")
    lines = []
    if header_comment:
        lines.extend("# " + l for l in header_comment.splitlines())
    lines.extend(_window_comment(model.window))
    lines.append(f"{MODEL_MAGIC} {MODEL_VERSION}")
    lines.append(f"type {kind}")
    lines.append(f"d {model.landmarks.shape[1]}")
    lines.append(f"sigma {_fmt(model.kernel.sigma)}")
    lines.append(f"{'lambda' if kind == 'likelihood' else 'gamma'} {_fmt(scale)}")
    lines.append(f"m {model.m}")
    for z in model.landmarks:
        lines.append(" ".join(_fmt(v) for v in z))
    for row in model.matrix:
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path):
        self.path = str(path)
        raw = Path(path).read_text().splitlines()
        self.comments = [l for l in raw if l.lstrip().startswith("#")]
        self.lines = [
            (i + 1, l.strip())
            for i, l in enumerate(raw)
            if l.strip() and not l.lstrip().startswith("#")
        ]
        self.pos = 0

    def next(self, field: str):
        if self.pos >= len(self.lines):
            raise ParseError("unexpected end of file", path=self.path, field=field)
        lineno, text = self.lines[self.pos]
        self.pos += 1
        return lineno, text

    def expect_key(self, key: str) -> str:
        lineno, text = self.next(key)
        parts = text.split(maxsplit=1)
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"expected '{key} <value>', got '{text}'",
                             path=self.path, line=lineno, field=key)
        return parts[1]

    def done(self) -> None:
        if self.pos != len(self.lines):
            lineno, text = self.lines[self.pos]
            raise ParseError(f"trailing content '{text}'", path=self.path, line=lineno)


def _parse_reals(reader: _LineReader, count: int, field: str) -> np.ndarray:
    lineno, text = reader.next(field)
    parts = text.split()
    if len(parts) != count:
        raise ParseError(
            f"expected {count} values, got {len(parts)}",
            path=reader.path, line=lineno, field=field,
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ParseError(str(exc), path=reader.path, line=lineno, field=field) from None


def load_model(path):
    """Read a model file; returns a `LikelihoodModel` or `CorrelationModel`.

    The serialized fields (kernel bandwidth, scale parameter, landmarks,
    matrix, window when recorded) round-trip bit-exactly; fitting
    diagnostics that are not part of the format come back as ``None``.
    """
    reader = _LineReader(path)
    lineno, magic = reader.next("magic")
    parts = magic.split()
    if len(parts) != 2 or parts[0] != MODEL_MAGIC:
        raise ParseError(f"not a model file (got '{magic}')", path=reader.path, line=lineno)
    if parts[1] != MODEL_VERSION:
        raise VersionError(
            f"unsupported model version '{parts[1]}' (expected {MODEL_VERSION})",
            path=reader.path, line=lineno,
        )
    kind = reader.expect_key("type")
    if kind not in ("likelihood", "correlation"):
        raise ParseError(f"unknown model type '{kind}'", path=reader.path, field="type")
    try:
        d = int(reader.expect_key("d"))
        sigma = float(reader.expect_key("sigma"))
        scale = float(reader.expect_key("lambda" if kind == "likelihood" else "gamma"))
        m = int(reader.expect_key("m"))
    except ValueError as exc:
        raise ParseError(str(exc), path=reader.path) from None
    if d < 1 or m < 1:
        raise ParseError(f"d and m must be positive, got d={d}, m={m}", path=reader.path)
    landmarks = np.stack([_parse_reals(reader, d, f"landmark {i}") for i in range(m)])
    matrix = np.stack([_parse_reals(reader, m, f"matrix row {i}") for i in range(m)])
    reader.done()
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * (1 + np.abs(matrix).max())):
        raise ParseError("matrix is not symmetric", path=reader.path, field="matrix")
    window = _parse_window_comment(reader.comments)
    kernel = RkhsKernel(sigma=sigma)
    if kind == "likelihood":
        return LikelihoodModel(kernel=kernel, lam=scale, landmarks=landmarks,
                               c_matrix=symmetrize(matrix), window=window)
    return CorrelationModel(kernel=kernel, gamma=scale, landmarks=landmarks,
                            omega=symmetrize(matrix), window=window)


def write_pattern(pattern: PointPattern, path, header_comment: str | None = None) -> None:
    """Write a point pattern as ``sample_id,x0,...,x{d-1}`` CSV."""
    d = pattern.window.dim
    lines = []
    if header_comment:
        lines.extend("# " + l for l in header_comment.splitlines())
    lines.extend(_window_comment(pattern.window))
    lines.append("sample_id," + ",".join(f"x{j}" for j in range(d)))
    for sid, sample in enumerate(pattern.samples):
        for pt in sample:
            lines.append(f"{sid}," + ",".join(_fmt(v) for v in pt))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pattern(path, window: Window | None = None) -> PointPattern:
    """Read a point-pattern CSV; groups rows into samples by ``sample_id``.

    The window comes from a ``# window`` comment written by this package's
    writers, or from the ``window`` argument; one of the two is required.
    A header-only file yields a single empty sample.
    """
    raw = Path(path).read_text().splitlines()
    comments = [l for l in raw if l.lstrip().startswith("#")]
    rows = [(i + 1, l.strip()) for i, l in enumerate(raw)
            if l.strip() and not l.lstrip().startswith("#")]
    if window is None:
        window = _parse_window_comment(comments)
    if window is None:
        raise InputError(
            f"{path}: no '# window' comment found; pass the window explicitly"
        )
    if not rows:
        raise ParseError("missing header row", path=str(path))
    lineno, header = rows[0]
    expected = "sample_id," + ",".join(f"x{j}" for j in range(window.dim))
    if header.replace(" ", "") != expected:
        raise ParseError(f"expected header '{expected}', got '{header}'",
                         path=str(path), line=lineno)
    groups: dict = {}
    for lineno, text in rows[1:]:
        parts = next(csv.reader([text]))
        if len(parts) != window.dim + 1:
            raise ParseError(f"expected {window.dim + 1} fields, got {len(parts)}",
                             path=str(path), line=lineno)
        try:
            sid = int(parts[0])
            pt = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from None
        if sid < 0:
            raise ParseError(f"sample_id must be >= 0, got {sid}",
                             path=str(path), line=lineno, field="sample_id")
        groups.setdefault(sid, []).append(pt)
    s = max(groups) + 1 if groups else 1
    samples = [np.array(groups.get(i, []), dtype=float).reshape(-1, window.dim)
               for i in range(s)]
    return PointPattern(window=window, samples=tuple(samples))


def write_csv(path, header: str, rows, header_comment: str | None = None) -> None:
    """Write a small report CSV with an optional provenance comment."""
    lines = []
    if header_comment:
        lines.extend("# " + l for l in header_comment.splitlines())
    lines.append(header)
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_grid_csv(path, points: np.ndarray, values: np.ndarray,
                   header_comment: str | None = None) -> None:
    """Write an intensity grid as ``x,y,value`` rows in grid order."""
    rows = [(float(p[0]), float(p[1]), float(v)) for p, v in zip(points, values)]
    write_csv(path, "x,y,value", rows, header_comment=header_comment)

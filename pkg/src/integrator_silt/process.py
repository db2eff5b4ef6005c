"""Covariance structure and path sampling for the planar integrator process.

The process has two independent coordinates, each Gaussian with covariance
``<A 1_[0,s], A 1_[0,t]>``.  Sampling draws the cell increments jointly (the
full-mesh increment Gram is the covariance), so the Wiener case factors
diagonally and degenerate directions (bridges) get exact zero-variance
components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from .errors import DegenerateInterval, FactorizationFailure
from .grid import GridContext, GridFunction, gram_matrix
from .operators import OperatorMatrix

#: Identifier of the sampling RNG, recorded in every report: one Philox
#: counter-based stream per (path, coordinate), keyed by (seed, 2*path+coord).
RNG_ALGORITHM = "philox4x64:key=(seed,2*path+coord)"

#: Eigenvalues of the increment covariance in [-CLAMP_ABS, 0) are clamped to
#: zero silently; anything below -CLAMP_REL * max eigenvalue is an error.
CLAMP_ABS = 1e-10
CLAMP_REL = 1e-6


@dataclass(frozen=True)
class PathSample:
    """One sampled planar trajectory on the grid node mesh; starts at the origin."""

    ctx: GridContext
    coord1: np.ndarray
    coord2: np.ndarray
    seed: int
    index: int = 0

    def __post_init__(self):
        for name in ("coord1", "coord2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (self.ctx.n + 1,):
                raise ValueError(f"{name} must have {self.ctx.n + 1} node values")
            v = v.copy()
            v.flags.writeable = False
            object.__setattr__(self, name, v)


def _node_indices(ctx: GridContext, times: Sequence[float]) -> np.ndarray:
    idx = np.array([ctx.snap(t) for t in times], dtype=np.int64)
    if np.any(np.diff(idx) <= 0):
        raise DegenerateInterval(f"times {list(times)} do not snap to strictly increasing nodes")
    return idx


def covariance(op: OperatorMatrix, s: float, t: float) -> float:
    """Per-coordinate covariance ``<A 1_[0,s], A 1_[0,t]>`` at grid nodes."""
    ctx = op.ctx
    return float(op.cumulative_gram[ctx.snap(s), ctx.snap(t)])


def increment_gram(op: OperatorMatrix, times) -> np.ndarray:
    """Gram matrix of the operator images of consecutive interval indicators.

    ``times`` is a SimplexPoint or any strictly increasing sequence of grid
    times; the result is the (k-1) x (k-1) matrix
    ``<A 1_[t_i, t_{i+1}], A 1_[t_j, t_{j+1}]>``.  Its determinant agrees with
    ``gram_det`` of the explicit images (separate code path, used as a test).
    """
    seq = times.times if hasattr(times, "times") else times
    idx = _node_indices(op.ctx, seq)
    a, b = idx[:-1], idx[1:]
    return np.asarray(op.indicator_image_inner(a[:, None], b[:, None], a[None, :], b[None, :]), dtype=float)


def increment_gram_full_mesh(op: OperatorMatrix) -> np.ndarray:
    """Covariance of the n cell increments: ``(A^T A) / n``."""
    return (op.matrix.T @ op.matrix) / op.ctx.n


def _increment_factor(op: OperatorMatrix) -> np.ndarray:
    sigma = increment_gram_full_mesh(op)
    w, V = np.linalg.eigh(sigma)
    scale = max(float(w[-1]), 1e-300)
    if float(w[0]) < -max(CLAMP_ABS, CLAMP_REL * scale):
        raise FactorizationFailure(
            f"increment covariance eigenvalue {w[0]:.3e} too negative to clamp (scale {scale:.3e})"
        )
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def _stream(seed: int, index: int, coord: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 2 * index + coord], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_paths(op: OperatorMatrix, seed: int, count: int) -> List[PathSample]:
    """Draw ``count`` independent planar paths, deterministically from the seed.

    Each (path, coordinate) pair has its own counter-based substream, so the
    result is independent of evaluation order and bit-identical across runs
    with the same (seed, count, grid, spec).
    """
    if count < 1:
        raise ValueError("count must be positive")
    ctx = op.ctx
    n = ctx.n
    F = _increment_factor(op)
    coords = []
    for coord in (0, 1):
        Z = np.empty((count, n))
        for i in range(count):
            Z[i] = _stream(seed, i, coord).standard_normal(n)
        increments = Z @ F.T
        values = np.zeros((count, n + 1))
        np.cumsum(increments, axis=1, out=values[:, 1:])
        coords.append(values)
    return [
        PathSample(ctx=ctx, coord1=coords[0][i], coord2=coords[1][i], seed=seed, index=i)
        for i in range(count)
    ]


def path_values(samples: Sequence[PathSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack coordinate node values across paths, shape (count, n+1) each."""
    x1 = np.stack([p.coord1 for p in samples])
    x2 = np.stack([p.coord2 for p in samples])
    return x1, x2

"""Approximating self-intersection functionals and their exact Gaussian moments.

The k-fold time integral over the separated simplex is discretized on the
half-grid midpoint lattice: a quadrature mesh of m cells whose midpoints are
the odd nodes of the operator grid n = 2m.  Shifting out the separation turns
the domain into a plain ordered simplex whose cells carry exact measures
(``m^-k`` over the multiplicity factorials), so weights sum to the simplex
volume exactly and the rule is second-order accurate for smooth integrands.

Monte-Carlo estimates and moment quadratures share the same lattice, which
makes the expectation identities exact at the discrete level: the mean of
``approx_silt`` over paths equals ``expected_silt`` up to sampling noise only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import EmptySimplex, NonpositiveEps
from .grid import GridContext
from .operators import OperatorMatrix
from .process import PathSample

TWO_PI = 2.0 * math.pi

#: Above this many tuple pairs the cross-moment double sum is chunked.
_CHUNK_PAIRS = 4_000_000


@dataclass(frozen=True)
class SimplexPoint:
    """Ordered time tuple t_1 <= ... <= t_k on the grid, with separation metadata."""

    k: int
    times: Tuple[float, ...]
    delta: float = 0.0

    def __post_init__(self):
        if self.k != len(self.times) or self.k < 2:
            raise ValueError("need k = len(times) >= 2")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError(f"times {self.times} are not ordered")

    @classmethod
    def from_times(cls, ctx: GridContext, times: Sequence[float], delta: float = 0.0) -> "SimplexPoint":
        snapped = tuple(ctx.node(ctx.snap(t)) for t in times)
        return cls(k=len(snapped), times=snapped, delta=delta)

    def separated(self) -> bool:
        """Whether all consecutive gaps meet the separation delta."""
        return all(b - a >= self.delta - 1e-12 for a, b in zip(self.times, self.times[1:]))


@dataclass(frozen=True)
class SimplexLattice:
    """Quadrature rule over the separated simplex on the half-grid midpoint lattice.

    ``nodes[t, i]`` is the node index of time i of tuple t on the operator
    grid ``n = 2*mesh``; ``weights`` are exact cell-intersection measures.
    """

    mesh: int
    k: int
    delta_cells: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def delta_effective(self) -> float:
        return self.delta_cells / self.mesh

    @property
    def grid_n(self) -> int:
        return 2 * self.mesh


def snap_delta(delta: float, mesh: int) -> int:
    """Separation in quadrature cells, rounded to the mesh (at least one cell)."""
    return max(1, int(math.floor(delta * mesh + 0.5)))


@lru_cache(maxsize=64)
def simplex_lattice(mesh: int, k: int, delta_cells: int) -> SimplexLattice:
    """Enumerate the lattice tuples of the delta-separated ordered simplex.

    After shifting coordinate i by ``i * delta`` the domain is the plain
    simplex over ``M = mesh - (k-1)*delta_cells`` cells; tuples are the
    nondecreasing cell index vectors, and a tuple whose indices repeat in
    blocks of sizes s_b covers exactly ``mesh^-k / prod(s_b!)`` of the domain.

    Results are cached (Monte-Carlo sums revisit the same lattice per path).
    """
    if k < 2:
        raise ValueError("need k >= 2")
    if delta_cells < 0:
        raise ValueError("delta_cells must be nonnegative")
    M = mesh - (k - 1) * delta_cells
    if M < 1:
        raise EmptySimplex(f"no quadrature cells: mesh={mesh}, k={k}, delta_cells={delta_cells}")
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(M + k - 1), k)),
        dtype=np.int64,
    ).reshape(-1, k)
    j = combos - np.arange(k, dtype=np.int64)
    weights = np.full(len(j), float(mesh) ** (-k))
    run = np.ones(len(j))
    for i in range(1, k):
        eq = j[:, i] == j[:, i - 1]
        run = np.where(eq, run + 1.0, 1.0)
        weights = np.where(eq, weights / run, weights)
    shift = np.arange(k, dtype=np.int64) * delta_cells
    nodes = 2 * (j + shift[None, :]) + 1
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return SimplexLattice(mesh=mesh, k=k, delta_cells=delta_cells, nodes=nodes, weights=weights)


def _lattice_for(ctx_n: int, k: int, delta: float) -> SimplexLattice:
    if ctx_n % 2 != 0:
        raise ValueError(f"grid n={ctx_n} must be even to host the midpoint quadrature lattice")
    mesh = ctx_n // 2
    if delta < 2.0 / ctx_n - 1e-12:
        raise EmptySimplex(f"delta={delta} is below the mesh resolution 2/n={2.0 / ctx_n}")
    return simplex_lattice(mesh, k, snap_delta(delta, mesh))


def gaussian_kernel(z, eps: float):
    """Planar Gaussian bump ``exp(-|z|^2 / (2 eps)) / (2 pi eps)``.

    ``z`` is a length-2 vector or an (..., 2) array; integrates to 1 over the
    plane for every positive ``eps``.
    """
    if eps <= 0:
        raise NonpositiveEps(f"eps must be positive, got {eps}")
    z = np.asarray(z, dtype=float)
    r2 = np.sum(z * z, axis=-1)
    return np.exp(-r2 / (2.0 * eps)) / (TWO_PI * eps)


def approx_silt(path: PathSample, eps: float, k: int, delta: float) -> float:
    """Riemann sum of the smoothed coincidence product over the separated simplex.

    Evaluates ``prod_i f_eps(x(t_{i+1}) - x(t_i))`` at every lattice tuple of
    the delta-simplex and integrates with the exact cell weights.  Requires
    ``delta >= 2/n`` so the discrete simplex is nonempty.
    """
    if eps <= 0:
        raise NonpositiveEps(f"eps must be positive, got {eps}")
    lat = _lattice_for(path.ctx.n, k, delta)
    d1 = np.diff(path.coord1[lat.nodes], axis=1)
    d2 = np.diff(path.coord2[lat.nodes], axis=1)
    factors = np.exp(-(d1 * d1 + d2 * d2) / (2.0 * eps)) / (TWO_PI * eps)
    return float(lat.weights @ np.prod(factors, axis=1))


def _increment_gram_stack(op: OperatorMatrix, nodes: np.ndarray) -> np.ndarray:
    """Per-tuple increment Gram matrices, shape (T, k-1, k-1)."""
    cg = op.cumulative_gram
    a = nodes[:, :-1]
    b = nodes[:, 1:]
    ap, bp = a[:, :, None], b[:, :, None]
    aq, bq = a[:, None, :], b[:, None, :]
    return cg[bp, bq] - cg[bp, aq] - cg[ap, bq] + cg[ap, aq]


def expected_silt(op: OperatorMatrix, eps: float, k: int, delta: float) -> float:
    """Exact first moment of ``approx_silt`` under the path law.

    For jointly Gaussian planar increments the smoothed coincidence product
    has expectation ``(2 pi)^-(k-1) / det(C + eps I)`` with C the increment
    Gram of the tuple (each coordinate contributes det^(-1/2)); integrating
    over the same lattice as the Monte-Carlo sum makes the two agree exactly
    up to sampling noise.
    """
    if eps <= 0:
        raise NonpositiveEps(f"eps must be positive, got {eps}")
    lat = _lattice_for(op.ctx.n, k, delta)
    C = _increment_gram_stack(op, lat.nodes)
    C = C + eps * np.eye(k - 1)[None, :, :]
    if k == 2:
        dets = C[:, 0, 0]
    else:
        dets = np.linalg.det(C)
    return float(lat.weights @ (1.0 / dets)) / TWO_PI ** (k - 1)


def second_moment(
    op: OperatorMatrix,
    eps1: float,
    eps2: float,
    k: int,
    delta: float,
    expensive: bool = False,
) -> float:
    """Exact mixed moment ``E[T_eps1 T_eps2]`` of the smoothed functionals.

    The integrand over pairs of tuples is ``(2 pi)^-(2k-2)`` over the
    determinant of the 2(k-1)-dimensional Gram of all increments from both
    tuples, shifted blockwise by eps1 and eps2.  The epsilons are processed in
    sorted order so the result is exactly symmetric.

    The k > 3 case multiplies a 2(k-1)-fold Gram over a 2k-dimensional tuple
    product and is gated behind ``expensive=True``.
    """
    if eps1 <= 0 or eps2 <= 0:
        raise NonpositiveEps(f"eps must be positive, got ({eps1}, {eps2})")
    if k > 3 and not expensive:
        raise ValueError("second_moment with k > 3 is expensive; pass expensive=True to run it")
    ea, eb = sorted((float(eps1), float(eps2)))
    lat = _lattice_for(op.ctx.n, k, delta)
    nodes, w = lat.nodes, lat.weights
    T = len(nodes)
    if k == 2:
        return _second_moment_k2(op, ea, eb, nodes, w)
    C = _increment_gram_stack(op, nodes)  # (T, k-1, k-1)
    p = k - 1
    eye_a = ea * np.eye(p)
    eye_b = eb * np.eye(p)
    cg = op.cumulative_gram
    a, b = nodes[:, :-1], nodes[:, 1:]
    total = 0.0
    chunk = max(1, _CHUNK_PAIRS // max(T, 1))
    for lo in range(0, T, chunk):
        hi = min(lo + chunk, T)
        c = hi - lo
        ap, bp = a[lo:hi, None, :, None], b[lo:hi, None, :, None]
        aq, bq = a[None, :, None, :], b[None, :, None, :]
        cross = cg[bp, bq] - cg[bp, aq] - cg[ap, bq] + cg[ap, aq]  # (c, T, p, p)
        big = np.empty((c, T, 2 * p, 2 * p))
        big[:, :, :p, :p] = C[lo:hi, None, :, :] + eye_a
        big[:, :, p:, p:] = C[None, :, :, :] + eye_b
        big[:, :, :p, p:] = cross
        big[:, :, p:, :p] = np.swapaxes(cross, 2, 3)
        dets = np.linalg.det(big)
        total += float(w[lo:hi] @ (1.0 / dets) @ w)
    return total / TWO_PI ** (2 * k - 2)


def _second_moment_k2(op: OperatorMatrix, ea: float, eb: float, nodes: np.ndarray, w: np.ndarray) -> float:
    cg = op.cumulative_gram
    i, j = nodes[:, 0], nodes[:, 1]
    own = cg[j, j] - 2.0 * cg[i, j] + cg[i, i]
    T = len(nodes)
    total = 0.0
    chunk = max(1, _CHUNK_PAIRS // max(T, 1))
    for lo in range(0, T, chunk):
        hi = min(lo + chunk, T)
        ip, jp = i[lo:hi, None], j[lo:hi, None]
        cross = cg[jp, j[None, :]] - cg[jp, i[None, :]] - cg[ip, j[None, :]] + cg[ip, i[None, :]]
        dets = np.outer(own[lo:hi] + ea, own + eb) - cross * cross
        total += float(w[lo:hi] @ (1.0 / dets) @ w)
    return total / TWO_PI**2


def rosen_center(values) -> np.ndarray:
    """Subtract the sample mean with compensated summation; the output sums to zero."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need a nonempty sample")
    centered = v - math.fsum(v) / v.size
    # second pass removes the rounding residue of the first
    return centered - math.fsum(centered) / v.size


@dataclass(frozen=True)
class MomentTable:
    """Cross moments of the smoothing ladder plus the L2-Cauchy increments."""

    epsilons: Tuple[float, ...]
    first_moments: np.ndarray
    cross_moments: np.ndarray
    cauchy_increments: np.ndarray
    k: int
    mesh: int
    delta_effective: float

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "first_moments": [float(x) for x in self.first_moments],
            "cross_moments": [[float(x) for x in row] for row in self.cross_moments],
            "cauchy_increments": [float(x) for x in self.cauchy_increments],
            "k": self.k,
            "quadrature_mesh": self.mesh,
            "delta_effective": self.delta_effective,
        }


def cauchy_diagnostic(
    op: OperatorMatrix,
    eps_ladder: Sequence[float],
    k: int,
    delta: float,
    expensive: bool = False,
) -> MomentTable:
    """Mean-square convergence evidence along a decreasing smoothing ladder.

    Fills the cross moments ``m(eps_i, eps_j)`` and reports the consecutive
    L2 increments ``E(T_i - T_{i+1})^2 = m_ii - 2 m_{i,i+1} + m_{i+1,i+1}``.
    The cross-moment matrix is a Gram matrix in L2 of the probability space,
    so the increments are nonnegative; decreasing down the ladder is the
    numerical convergence diagnostic.
    """
    ladder = tuple(float(e) for e in eps_ladder)
    if len(ladder) < 3:
        raise ValueError("eps ladder needs at least 3 rungs")
    if any(e <= 0 for e in ladder):
        raise NonpositiveEps("all ladder entries must be positive")
    if any(b > a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"eps ladder must be nonincreasing, got {ladder}")
    L = len(ladder)
    lat = _lattice_for(op.ctx.n, k, delta)
    first = np.array([expected_silt(op, e, k, delta) for e in ladder])
    cross = np.zeros((L, L))
    for i in range(L):
        for j in range(i, L):
            if j > i and ladder[j] == ladder[i]:
                cross[i, j] = cross[j, i] = cross[i, i]
                continue
            value = second_moment(op, ladder[i], ladder[j], k, delta, expensive=expensive)
            cross[i, j] = cross[j, i] = value
    increments = np.array([cross[i, i] - 2.0 * cross[i, i + 1] + cross[i + 1, i + 1] for i in range(L - 1)])
    return MomentTable(
        epsilons=ladder,
        first_moments=first,
        cross_moments=cross,
        cauchy_increments=increments,
        k=k,
        mesh=lat.mesh,
        delta_effective=lat.delta_effective,
    )

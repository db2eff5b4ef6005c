"""Finite-dimensional model of L2([0,1]) on a uniform grid.

Functions are step functions, constant on ``n`` cells of width ``1/n``.  The
inner product carries the cell weight, ``<f, g> = (1/n) sum_i f_i g_i``, so
indicator norms equal interval lengths exactly and the analytic oracles
(lengths, min(s,t)) hold on-grid.

Everything here is a pure function of immutable values; instances are safe to
share across threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from .errors import DegenerateInterval, DependentIncrements, SingularOperator

#: Relative residual below which a vector counts as dependent during
#: orthonormalization.  Grids never produce exact dependence, so the
#: threshold is configurable per call.
DEFAULT_DROP_TOL = 1e-10


@dataclass(frozen=True)
class GridContext:
    """Uniform partition of [0,1] into ``n`` cells; cell i covers [(i-1)/n, i/n)."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 cells, got n={self.n}")

    def snap(self, t: float) -> int:
        """Nearest-node index for a time in [0,1] (round half up)."""
        j = int(math.floor(t * self.n + 0.5))
        return min(max(j, 0), self.n)

    def node(self, j: int) -> float:
        return j / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def cell_midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n


@dataclass(frozen=True)
class GridFunction:
    """Element of the discretized L2([0,1]): one value per grid cell."""

    ctx: GridContext
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.ctx.n,):
            raise ValueError(f"expected {self.ctx.n} cell values, got shape {v.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, ctx: GridContext) -> "GridFunction":
        return cls(ctx, np.zeros(ctx.n))

    @classmethod
    def ones(cls, ctx: GridContext) -> "GridFunction":
        return cls(ctx, np.ones(ctx.n))

    @classmethod
    def from_profile(cls, ctx: GridContext, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample a callable at cell midpoints."""
        return cls(ctx, np.asarray(fn(ctx.cell_midpoints), dtype=float))

    def inner(self, other: "GridFunction") -> float:
        _require_shared_ctx(self, other)
        return float(self.values @ other.values) / self.ctx.n

    def norm_sq(self) -> float:
        return float(self.values @ self.values) / self.ctx.n

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _require_shared_ctx(self, other)
        return GridFunction(self.ctx, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _require_shared_ctx(self, other)
        return GridFunction(self.ctx, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.ctx, self.values * c)

    __rmul__ = __mul__


def _require_shared_ctx(*fs: GridFunction) -> GridContext:
    ctx = fs[0].ctx
    for f in fs[1:]:
        if f.ctx != ctx:
            raise ValueError("grid functions live on different grids")
    return ctx


def make_indicator(ctx: GridContext, t1: float, t2: float) -> GridFunction:
    """Indicator of [t1, t2] with both endpoints snapped to grid nodes.

    Raises
    ------
    DegenerateInterval
        If the snapped nodes coincide.  Degenerate intervals are errors, not
        silently widened; callers on simplex grids always pass exact nodes.
    """
    if not t1 < t2:
        raise DegenerateInterval(f"need t1 < t2, got ({t1}, {t2})")
    j1, j2 = ctx.snap(t1), ctx.snap(t2)
    if j1 == j2:
        raise DegenerateInterval(f"({t1}, {t2}) snapped to the same node {j1}/{ctx.n}")
    values = np.zeros(ctx.n)
    values[j1:j2] = 1.0
    return GridFunction(ctx, values)


def gram_matrix(fs: Sequence[GridFunction]) -> np.ndarray:
    """Matrix of pairwise inner products."""
    ctx = _require_shared_ctx(*fs)
    V = np.stack([f.values for f in fs])
    return (V @ V.T) / ctx.n


def gram_det(fs: Sequence[GridFunction], return_log: bool = False):
    """Gram determinant via symmetric eigendecomposition with clamping.

    Negative eigenvalues (roundoff on singular families) are clamped to 0, so
    the result is always nonnegative; singular sets return 0 rather than
    raising.  The matrix is prescaled by a power of two before the
    eigendecomposition, which keeps the computation exactly equivariant under
    power-of-two scalings of the inputs.

    Parameters
    ----------
    fs : sequence of GridFunction
        Nonempty family on a shared grid.
    return_log : bool
        If set, also return log(det); -inf when any clamped eigenvalue is 0.

    Returns
    -------
    float, or (float, float) when ``return_log`` is set.
    """
    if not fs:
        raise ValueError("gram_det needs a nonempty family")
    G = gram_matrix(fs)
    return _det_of_gram(G, return_log=return_log)


def _det_of_gram(G: np.ndarray, return_log: bool = False):
    k = G.shape[0]
    scale = float(np.max(np.abs(G)))
    if scale == 0.0 or not np.isfinite(scale):
        return (0.0, -math.inf) if return_log else 0.0
    p = 2.0 ** math.floor(math.log2(scale))
    w = np.clip(np.linalg.eigvalsh(G / p), 0.0, None)
    det = float(np.prod(w)) * p**k
    if not return_log:
        return det
    if float(np.min(w)) <= 0.0:
        return det, -math.inf
    log = float(np.sum(np.log(w))) + k * math.log(p)
    return det, log


@dataclass(frozen=True)
class OrthonormalFrame:
    """Ordered orthonormal family plus the input ranks that survived."""

    members: Tuple[GridFunction, ...]
    source_ranks: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def coefficients(self, h: GridFunction) -> np.ndarray:
        """Vector of <h, e_m> over frame members."""
        if not self.members:
            return np.zeros(0)
        ctx = self.members[0].ctx
        E = np.stack([e.values for e in self.members])
        return (E @ h.values) / ctx.n

    def project(self, h: GridFunction) -> GridFunction:
        """Orthogonal projection of h onto the span of the frame."""
        if not self.members:
            return GridFunction(h.ctx, np.zeros(h.ctx.n))
        E = np.stack([e.values for e in self.members])
        return GridFunction(h.ctx, self.coefficients(h) @ E)


def orthonormalize(fs: Sequence[GridFunction], tol: float = DEFAULT_DROP_TOL) -> OrthonormalFrame:
    """Gram-Schmidt in input order; dependent vectors are dropped and recorded.

    A vector is dropped when its residual norm is at most ``tol`` times its own
    norm.  Two orthogonalization passes keep the frame orthogonal to roundoff
    even for badly conditioned inputs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ctx = _require_shared_ctx(*fs) if fs else None
    kept: list[np.ndarray] = []
    ranks: list[int] = []
    for i, f in enumerate(fs):
        base = f.norm()
        v = f.values.astype(float).copy()
        for _ in range(2):
            for e in kept:
                v -= ((v @ e) / ctx.n) * e
        r = math.sqrt(float(v @ v) / ctx.n)
        if base == 0.0 or r <= tol * base:
            continue
        kept.append(v / r)
        ranks.append(i)
    members = tuple(GridFunction(ctx, v) for v in kept) if fs else ()
    return OrthonormalFrame(members=members, source_ranks=tuple(ranks))


def projection_norm_sq(frame: OrthonormalFrame, h: GridFunction) -> float:
    """Squared norm of the projection of h onto the frame's span."""
    c = frame.coefficients(h)
    return float(c @ c)


def subset_projection_terms(
    increments: Sequence[GridFunction],
    h: GridFunction,
    tol: float = DEFAULT_DROP_TOL,
) -> Dict[Tuple[int, ...], float]:
    """Squared projections of h onto every subset of the orthonormalized increments.

    The increments are orthonormalized in order; for a subset M of
    ``{1..k-1}`` the projection is onto the span of the orthonormalized
    members indexed by M (not the raw increments), so ``||P_M h||^2`` is the
    sum of the corresponding squared coefficients.  The empty subset maps to 0.

    Raises
    ------
    DependentIncrements
        If orthonormalization drops any increment.
    """
    frame = orthonormalize(increments, tol=tol)
    if len(frame) < len(increments):
        dropped = sorted(set(range(len(increments))) - set(frame.source_ranks))
        raise DependentIncrements(f"increments {dropped} are dependent within tolerance")
    c2 = frame.coefficients(h) ** 2
    k1 = len(increments)
    terms: Dict[Tuple[int, ...], float] = {}
    for size in range(k1 + 1):
        for subset in itertools.combinations(range(1, k1 + 1), size):
            terms[subset] = float(sum(c2[i - 1] for i in subset))
    return terms


def distance_to_span(v: GridFunction, fs: Sequence[GridFunction], tol: float = DEFAULT_DROP_TOL) -> float:
    """Distance from v to the span of fs (0 iff v lies in the span within tolerance)."""
    if not fs:
        return v.norm()
    frame = orthonormalize(fs, tol=tol)
    return (v - frame.project(v)).norm()


def complement_gram_identity_residual(gs: Sequence[GridFunction], basis: OrthonormalFrame) -> float:
    """Relative mismatch of G((I-P)g_1,...,(I-P)g_k) against G(g_1,...,g_k,e_1,...,e_m).

    P projects onto the orthonormal basis; the two sides agree identically in
    exact arithmetic, so the residual is a property-test statistic.
    """
    lhs = gram_det([g - basis.project(g) for g in gs])
    rhs = gram_det(list(gs) + list(basis.members))
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def gram_lower_bound_margin(B, qs: Sequence[GridFunction], tol: float = 1e-8) -> float:
    """G(Bq_1,...,Bq_k) - sigma_min(B)^{2k} * G(q_1,...,q_k).

    ``sigma_min(B)^{2k}`` is a valid witness for the determinant lower-bound
    constant of an invertible operator, so the margin is nonnegative up to
    roundoff.  Exactly zero for B = c*I with power-of-two c.

    Parameters
    ----------
    B : OperatorMatrix
        Must be invertible on the grid space.
    qs : sequence of GridFunction

    Raises
    ------
    SingularOperator
        If the smallest singular value is at or below ``tol`` relative to the
        largest.
    """
    sigma = np.linalg.svd(B.matrix, compute_uv=False)
    smax = float(sigma[0]) if sigma.size else 0.0
    smin = float(sigma[-1]) if sigma.size else 0.0
    if smin <= tol * max(smax, 1e-300):
        raise SingularOperator(f"sigma_min={smin:.3e} below tolerance")
    k = len(qs)
    images = [B.apply(q) for q in qs]
    return gram_det(images) - smin ** (2 * k) * gram_det(qs)


# Profile descriptors used for operator directions and transform probes.

_PROFILE_KINDS = ("zero", "constant", "indicator", "sinusoid", "values")


@dataclass(frozen=True)
class ProfileSpec:
    """Declarative grid-function shape: zero, constant, indicator(a,b), sinusoid(m), or raw values."""

    kind: str
    a: float = 0.0
    b: float = 1.0
    m: int = 1
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _PROFILE_KINDS:
            raise ValueError(f"unknown profile kind '{self.kind}' (expected one of {_PROFILE_KINDS})")

    @property
    def is_step(self) -> bool:
        """Whether the profile is declared a step function (kernel-split bookkeeping)."""
        return self.kind in ("constant", "indicator")

    def build(self, ctx: GridContext) -> GridFunction:
        if self.kind == "zero":
            return GridFunction.zeros(ctx)
        if self.kind == "constant":
            return GridFunction.ones(ctx)
        if self.kind == "indicator":
            return make_indicator(ctx, self.a, self.b)
        if self.kind == "sinusoid":
            return GridFunction.from_profile(ctx, lambda x: np.sin(math.pi * self.m * x))
        return GridFunction(ctx, np.asarray(self.values, dtype=float))

    def jump_times(self, ctx: GridContext) -> Tuple[float, ...]:
        """Snapped jump nodes for step profiles; empty otherwise."""
        if self.kind == "constant":
            return (0.0, 1.0)
        if self.kind == "indicator":
            return (ctx.node(ctx.snap(self.a)), ctx.node(ctx.snap(self.b)))
        return ()

    def describe(self) -> str:
        if self.kind == "indicator":
            return f"indicator({self.a:g},{self.b:g})"
        if self.kind == "sinusoid":
            return f"sinusoid({self.m})"
        if self.kind == "values":
            return f"values[{len(self.values)}]"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "indicator":
            d.update(a=self.a, b=self.b)
        elif self.kind == "sinusoid":
            d.update(m=self.m)
        elif self.kind == "values":
            d.update(values=list(self.values))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileSpec":
        kind = d.get("kind", "")
        if kind == "indicator":
            return cls(kind="indicator", a=float(d["a"]), b=float(d["b"]))
        if kind == "sinusoid":
            return cls(kind="sinusoid", m=int(d["m"]))
        if kind == "values":
            return cls(kind="values", values=tuple(float(x) for x in d["values"]))
        return cls(kind=kind)

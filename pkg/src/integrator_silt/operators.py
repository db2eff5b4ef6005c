"""Generating operators on the grid: construction, kernel analysis, singular indicators.

An operator acts on cell-value vectors of :class:`~integrator_silt.grid.GridFunction`.
Because the grid inner product carries a uniform 1/n weight, matrix singular
values in the Euclidean sense equal those in the grid sense, and the numeric
null space comes straight from an SVD with a relative threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpec, UnsupportedSpec
from .grid import GridContext, GridFunction, OrthonormalFrame, ProfileSpec, orthonormalize

#: Singular values below this fraction of the largest count as kernel.
#: Grid realizations of exact kernels sit at machine-epsilon scale, well
#: separated from this threshold.
KERNEL_TOL = 1e-8

_KINDS = ("identity", "projector_complement", "compact_perturbation", "fbm_volterra", "custom_matrix")

_COMPACT_KERNELS = ("sine", "gauss", "uv")


@dataclass(frozen=True)
class OperatorSpec:
    """Declarative description of a generating operator.

    Kinds
    -----
    identity
        The Wiener case.
    projector_complement
        I minus the orthogonal projection onto the given directions
        (the generalized-bridge family; its declared kernel is the span of
        the directions).
    compact_perturbation
        I + scale * S for a smooth integral kernel S.
    fbm_volterra
        One-sided fractional kernel; the integrator is self-similar with
        exponent 2*alpha, alpha in (1/2, 1).
    custom_matrix
        Explicit matrix, mainly for tests and negative controls.
    """

    kind: str
    directions: Tuple[ProfileSpec, ...] = ()
    kernel: str = "sine"
    kernel_width: float = 0.25
    scale: float = 0.0
    alpha: float = 0.0
    matrix: Optional[Tuple[Tuple[float, ...], ...]] = None
    assume_invertible: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidSpec(f"unknown operator kind '{self.kind}'")
        if self.kind == "fbm_volterra" and not 0.5 < self.alpha < 1.0:
            raise InvalidSpec(f"fbm_volterra needs alpha in (1/2, 1), got {self.alpha}")
        if self.kind == "projector_complement":
            if not self.directions:
                raise InvalidSpec("projector_complement needs at least one direction")
            if any(d.kind == "zero" for d in self.directions):
                raise InvalidSpec("projector directions must be nonzero")
        if self.kind == "compact_perturbation" and self.kernel not in _COMPACT_KERNELS:
            raise InvalidSpec(f"unknown compact kernel '{self.kernel}'")

    @classmethod
    def identity(cls) -> "OperatorSpec":
        return cls(kind="identity")

    @classmethod
    def projector_complement(cls, *directions: ProfileSpec) -> "OperatorSpec":
        return cls(kind="projector_complement", directions=tuple(directions))

    @classmethod
    def bridge(cls) -> "OperatorSpec":
        """Classical planar Brownian bridge: project out the constant."""
        return cls.projector_complement(ProfileSpec(kind="constant"))

    @classmethod
    def generalized_bridge(cls, a: float = 0.0, b: float = 0.5) -> "OperatorSpec":
        """Bridge whose kernel contains the step function 1_[a,b]."""
        return cls.projector_complement(ProfileSpec(kind="indicator", a=a, b=b))

    @classmethod
    def compact_perturbation(cls, kernel: str = "sine", scale: float = 0.5, width: float = 0.25) -> "OperatorSpec":
        return cls(kind="compact_perturbation", kernel=kernel, scale=scale, kernel_width=width)

    @classmethod
    def fbm_volterra(cls, alpha: float) -> "OperatorSpec":
        return cls(kind="fbm_volterra", alpha=alpha)

    @classmethod
    def custom_matrix(cls, matrix, assume_invertible: bool = False) -> "OperatorSpec":
        rows = tuple(tuple(float(x) for x in row) for row in np.asarray(matrix, dtype=float))
        return cls(kind="custom_matrix", matrix=rows, assume_invertible=assume_invertible)

    def describe(self) -> str:
        if self.kind == "projector_complement":
            inner = ",".join(d.describe() for d in self.directions)
            return f"projector_complement[{inner}]"
        if self.kind == "compact_perturbation":
            return f"compact_perturbation({self.kernel},scale={self.scale:g})"
        if self.kind == "fbm_volterra":
            return f"fbm_volterra(alpha={self.alpha:g})"
        if self.kind == "custom_matrix":
            return f"custom_matrix({len(self.matrix)}x{len(self.matrix)})"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "projector_complement":
            d["directions"] = [p.to_dict() for p in self.directions]
        elif self.kind == "compact_perturbation":
            d.update(kernel=self.kernel, scale=self.scale, kernel_width=self.kernel_width)
        elif self.kind == "fbm_volterra":
            d["alpha"] = self.alpha
        elif self.kind == "custom_matrix":
            d["matrix"] = [list(row) for row in self.matrix]
            d["assume_invertible"] = self.assume_invertible
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        kind = d.get("kind", "")
        if kind == "projector_complement":
            return cls(kind=kind, directions=tuple(ProfileSpec.from_dict(p) for p in d.get("directions", [])))
        if kind == "compact_perturbation":
            return cls(
                kind=kind,
                kernel=d.get("kernel", "sine"),
                scale=float(d.get("scale", 0.5)),
                kernel_width=float(d.get("kernel_width", 0.25)),
            )
        if kind == "fbm_volterra":
            return cls(kind=kind, alpha=float(d.get("alpha", 0.0)))
        if kind == "custom_matrix":
            return cls.custom_matrix(d["matrix"], assume_invertible=bool(d.get("assume_invertible", False)))
        return cls(kind=kind)


class OperatorMatrix:
    """Grid realization of a generating operator.

    Immutable after construction.  The cumulative indicator images and their
    Gram matrix are cached lazily; the computation is idempotent, so sharing
    across threads is safe.
    """

    def __init__(
        self,
        ctx: GridContext,
        matrix: np.ndarray,
        kernel_frame: OrthonormalFrame,
        sigma_min_complement: float,
        spec: Optional[OperatorSpec] = None,
    ):
        matrix = np.asarray(matrix, dtype=float).copy()
        if matrix.shape != (ctx.n, ctx.n):
            raise InvalidSpec(f"matrix shape {matrix.shape} does not match grid n={ctx.n}")
        matrix.flags.writeable = False
        self.ctx = ctx
        self.matrix = matrix
        self.kernel_frame = kernel_frame
        self.sigma_min_complement = float(sigma_min_complement)
        self.spec = spec
        self._cum_images: Optional[np.ndarray] = None
        self._cum_gram: Optional[np.ndarray] = None

    def describe(self) -> str:
        return self.spec.describe() if self.spec is not None else "matrix"

    def apply(self, f: GridFunction) -> GridFunction:
        return GridFunction(self.ctx, self.matrix @ f.values)

    @property
    def cumulative_images(self) -> np.ndarray:
        """Columns ``A 1_[0, j/n]`` for j = 0..n, shape (n, n+1)."""
        if self._cum_images is None:
            n = self.ctx.n
            C = np.empty((n, n + 1))
            C[:, 0] = 0.0
            np.cumsum(self.matrix, axis=1, out=C[:, 1:])
            C.flags.writeable = False
            self._cum_images = C
        return self._cum_images

    @property
    def cumulative_gram(self) -> np.ndarray:
        """Matrix ``<A 1_[0, i/n], A 1_[0, j/n]>``, shape (n+1, n+1).

        Every indicator-image inner product reduces to four lookups here,
        which is what makes simplex quadrature over many tuples cheap.
        """
        if self._cum_gram is None:
            C = self.cumulative_images
            G = (C.T @ C) / self.ctx.n
            G.flags.writeable = False
            self._cum_gram = G
        return self._cum_gram

    def indicator_image_norm_sq(self, i, j):
        """``||A 1_[i/n, j/n]||^2`` for node indices (vectorized)."""
        cg = self.cumulative_gram
        return cg[j, j] - 2.0 * cg[i, j] + cg[i, i]

    def indicator_image_inner(self, i1, j1, i2, j2):
        """``<A 1_[i1/n, j1/n], A 1_[i2/n, j2/n]>`` for node indices (vectorized)."""
        cg = self.cumulative_gram
        return cg[j1, j2] - cg[j1, i2] - cg[i1, j2] + cg[i1, i2]


def _compact_kernel_matrix(ctx: GridContext, name: str, width: float) -> np.ndarray:
    u = ctx.cell_midpoints
    if name == "sine":
        K = np.outer(np.sin(math.pi * u), np.sin(math.pi * u))
    elif name == "gauss":
        K = np.exp(-((u[:, None] - u[None, :]) / width) ** 2)
    else:  # "uv"
        K = np.outer(u, u)
    return K / ctx.n


def _fbm_matrix(ctx: GridContext, alpha: float) -> np.ndarray:
    # One-sided fractional kernel c*(v-u)^(alpha-3/2) on {v > u}, integrated
    # exactly over each cell: the kernel is too singular for midpoint
    # evaluation to capture its mass at practical grid sizes.  With the
    # normalization below, ||A 1_[0,t]||^2 = t^(2 alpha) at lattice times.
    n = ctx.n
    p = alpha - 0.5
    c = math.sqrt(2 * alpha) * p
    u = ctx.cell_midpoints
    lo = np.arange(n) / n
    hi = lo + 1.0 / n
    upper = hi[None, :] - u[:, None]
    lower = np.maximum(lo[None, :], u[:, None]) - u[:, None]
    mask = upper > 0
    A = np.zeros((n, n))
    A[mask] = (c / p) * (upper[mask] ** p - lower[mask] ** p)
    return A


def build_operator(spec: OperatorSpec, ctx: GridContext) -> OperatorMatrix:
    """Realize the operator in the cell basis and analyze its kernel.

    The numeric null space comes from singular value thresholding at
    ``KERNEL_TOL`` relative to the largest singular value;
    ``sigma_min_complement`` is the smallest singular value above the
    threshold (the witness for continuous invertibility off the kernel).
    """
    n = ctx.n
    if spec.kind == "identity":
        A = np.eye(n)
    elif spec.kind == "projector_complement":
        dirs = [p.build(ctx) for p in spec.directions]
        if any(d.norm() == 0.0 for d in dirs):
            raise InvalidSpec("projector directions must be nonzero on the grid")
        frame = orthonormalize(dirs)
        E = np.stack([e.values for e in frame.members])
        A = np.eye(n) - (E.T @ E) / n
    elif spec.kind == "compact_perturbation":
        A = np.eye(n) + spec.scale * _compact_kernel_matrix(ctx, spec.kernel, spec.kernel_width)
    elif spec.kind == "fbm_volterra":
        A = _fbm_matrix(ctx, spec.alpha)
    else:
        A = np.asarray(spec.matrix, dtype=float)
        if A.shape != (n, n):
            raise InvalidSpec(f"custom matrix shape {A.shape} does not match grid n={n}")

    _, s, Vt = np.linalg.svd(A)
    smax = float(s[0]) if s.size else 0.0
    thr = KERNEL_TOL * smax
    in_kernel = s < thr if smax > 0 else np.ones_like(s, dtype=bool)
    members = []
    for row in Vt[in_kernel]:
        v = row * math.sqrt(n)  # unit norm in the grid inner product
        imax = int(np.argmax(np.abs(v)))
        if v[imax] < 0:
            v = -v
        members.append(GridFunction(ctx, v))
    kernel_frame = OrthonormalFrame(members=tuple(members), source_ranks=tuple(range(len(members))))
    above = s[~in_kernel]
    sigma_min_complement = float(above[-1]) if above.size else 0.0
    return OperatorMatrix(ctx, A, kernel_frame, sigma_min_complement, spec=spec)


def compact_operator_norm(spec: OperatorSpec, ctx: GridContext) -> float:
    """Operator norm of the (unscaled) compact part S of a compact_perturbation spec."""
    if spec.kind != "compact_perturbation":
        raise UnsupportedSpec("operator norm of the compact part needs a compact_perturbation spec")
    S = _compact_kernel_matrix(ctx, spec.kernel, spec.kernel_width)
    return float(np.linalg.svd(S, compute_uv=False)[0])


def kernel_indicators(op: OperatorMatrix, tol: float = KERNEL_TOL) -> List[Tuple[float, float]]:
    """All node pairs whose indicator is annihilated by the operator.

    Returns the discrete version of the set of interval indicators lying in
    the kernel: pairs (t1, t2) of grid nodes with
    ``||A 1_[t1,t2]|| / ||1_[t1,t2]|| < tol``, deduplicated and sorted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.ctx.n
    cg = op.cumulative_gram
    d = np.diag(cg)
    norm_sq = d[None, :] + d[:, None] - 2.0 * cg  # (i, j) -> ||A 1_[i,j]||^2
    i_idx, j_idx = np.triu_indices(n + 1, k=1)
    lengths = (j_idx - i_idx) / n
    ratios = np.sqrt(np.clip(norm_sq[i_idx, j_idx], 0.0, None) / lengths)
    hits = ratios < tol
    return sorted((float(i) / n, float(j) / n) for i, j in zip(i_idx[hits], j_idx[hits]))


@dataclass(frozen=True)
class KernelSplit:
    """Declared kernel basis split into step functions (with jump nodes) and smooth rest."""

    step: Tuple[GridFunction, ...]
    jump_nodes: Tuple[float, ...]
    smooth: Tuple[GridFunction, ...]


def declared_kernel_split(spec: OperatorSpec, ctx: GridContext) -> KernelSplit:
    """Split the declared kernel into step and smooth parts, mutually orthonormal.

    On the grid every function is a step function, so the step/smooth
    distinction is carried declaratively by the spec: indicator and constant
    directions are steps (with their snapped jump nodes), everything else is
    smooth.  The smooth part is orthonormalized against the step part, so the
    two blocks are orthogonal.

    Raises
    ------
    UnsupportedSpec
        For operator kinds without an analytically declared kernel.
    """
    if spec.kind != "projector_complement":
        raise UnsupportedSpec(f"'{spec.kind}' has no declared kernel basis")
    step_specs = [p for p in spec.directions if p.is_step]
    smooth_specs = [p for p in spec.directions if not p.is_step]
    ordered = [p.build(ctx) for p in step_specs + smooth_specs]
    frame = orthonormalize(ordered)
    n_step = sum(1 for r in frame.source_ranks if r < len(step_specs))
    jumps = sorted({t for p in step_specs for t in p.jump_times(ctx)})
    return KernelSplit(
        step=frame.members[:n_step],
        jump_nodes=tuple(jumps),
        smooth=frame.members[n_step:],
    )

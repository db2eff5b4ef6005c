"""Transform-side integrands, their regularizations, and singularity scans.

Conventions: the plain transform integrand carries the ``(2 pi)^-(k-1)``
factor; the regularized forms (subset-alternating and the k=2 compensated
bracket) are evaluated bare, matching the equations they implement.  Each
quadrature report records which convention applied.

Tuples whose Gram determinant falls at or below ``GRAM_FLOOR`` are singular
hits: skipped, counted, and reported with their total weight so integrability
claims are not silently biased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConditionsViolated,
    DegenerateDifference,
    DegenerateInterval,
    KernelIndicator,
    NotAKernelIndicator,
    SingularGram,
)
from .grid import (
    GridFunction,
    gram_det,
    orthonormalize,
    projection_norm_sq,
    subset_projection_terms,
)
from .operators import KERNEL_TOL, OperatorMatrix
from .process import _node_indices
from .silt import SimplexPoint, _increment_gram_stack, simplex_lattice, snap_delta

TWO_PI = 2.0 * math.pi

#: Gram determinants at or below this are singular hits (log-det -inf range).
GRAM_FLOOR = 1e-300

_MODES = ("thm1_full_simplex", "thm2_k2", "eq3_delta")


@dataclass(frozen=True)
class FwtProbe:
    """Pair of test directions for the transform integrand."""

    h1: GridFunction
    h2: GridFunction
    label: str = ""

    def __post_init__(self):
        if not (np.all(np.isfinite(self.h1.values)) and np.all(np.isfinite(self.h2.values))):
            raise ValueError("probe directions must have finite values")


@dataclass
class QuadratureReport:
    """Value of a simplex quadrature with its refinement history.

    ``error_estimate`` is the absolute difference of the last two refinement
    levels; ``singular_hits``/``singular_weight`` count the excluded tuples at
    the finest level and the measure they carry.
    """

    value: float
    levels: List[Tuple[int, float]]
    error_estimate: float
    singular_hits: int
    singular_weight: float
    metadata: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "levels": [[int(m), float(v)] for m, v in self.levels],
            "error_estimate": self.error_estimate,
            "singular_hits": self.singular_hits,
            "singular_weight": self.singular_weight,
            "metadata": dict(self.metadata),
        }


def _increment_images(op: OperatorMatrix, times) -> List[GridFunction]:
    seq = times.times if hasattr(times, "times") else times
    idx = _node_indices(op.ctx, seq)
    C = op.cumulative_images
    return [GridFunction(op.ctx, C[:, b] - C[:, a]) for a, b in zip(idx[:-1], idx[1:])]


def fwt_integrand(op: OperatorMatrix, times, probe: FwtProbe) -> float:
    """Transform integrand at one tuple: Gram reciprocal times the projection decay.

    ``(2 pi)^-(k-1) G^-1 exp(-(||P h1||^2 + ||P h2||^2)/2)`` with P the
    projection onto the span of the operator increments of the tuple.

    Raises
    ------
    SingularGram
        When G is at or below the floor; the caller decides whether to skip
        the tuple or route to a regularized form.
    """
    imgs = _increment_images(op, times)
    G = gram_det(imgs)
    if G <= GRAM_FLOOR:
        raise SingularGram(f"Gram determinant {G:.3e} at tuple {times}")
    frame = orthonormalize(imgs, tol=1e-14)
    expo = projection_norm_sq(frame, probe.h1) + projection_norm_sq(frame, probe.h2)
    k = len(imgs) + 1
    return math.exp(-0.5 * expo) / (G * TWO_PI ** (k - 1))


def regularized_integrand_thm1(op: OperatorMatrix, times, h: GridFunction) -> float:
    """Subset-alternating regularized integrand at one tuple.

    ``G^-1 sum_M (-1)^|M| exp(-||P_M h||^2 / 2)`` over subsets M of the
    orthonormalized increments; vanishes identically at h = 0 by binomial
    cancellation.  No 2-pi factor.
    """
    imgs = _increment_images(op, times)
    G = gram_det(imgs)
    if G <= GRAM_FLOOR:
        raise SingularGram(f"Gram determinant {G:.3e} at tuple {times}")
    terms = subset_projection_terms(imgs, h)
    acc = math.fsum((-1.0) ** len(M) * math.exp(-0.5 * val) for M, val in terms.items())
    return acc / G


def thm2_integrand(op: OperatorMatrix, t1: float, t2: float, h: GridFunction) -> float:
    """Compensated k=2 integrand: ``||A 1||^-2 (exp(-||P h||^2 / 2) - 1)``.

    Bounded near the diagonal (the bracket is of the order of the interval
    length while the denominator is, too, for invertible directions), and
    always nonpositive.

    Raises
    ------
    KernelIndicator
        When the snapped pair is a kernel indicator within tolerance; the
        integrand is skipped there.
    """
    ctx = op.ctx
    i, j = ctx.snap(t1), ctx.snap(t2)
    if i >= j:
        raise DegenerateInterval(f"({t1}, {t2}) snapped to a degenerate pair ({i}, {j})")
    nsq = float(op.indicator_image_norm_sq(i, j))
    length = (j - i) / ctx.n
    if nsq < (KERNEL_TOL**2) * length:
        raise KernelIndicator(f"({t1}, {t2}) lies in the operator kernel within tolerance")
    d = (h.values @ op.cumulative_images) / ctx.n
    proj = (d[j] - d[i]) ** 2 / nsq
    return (math.exp(-0.5 * proj) - 1.0) / nsq


def _resolve_levels(op: OperatorMatrix, levels: Optional[Sequence[int]]) -> Tuple[int, ...]:
    n = op.ctx.n
    if levels is None:
        if n % 8 != 0:
            raise ValueError(f"grid n={n} must be divisible by 8 for the default refinement ladder")
        levels = (n // 8, n // 4, n // 2)
    levels = tuple(int(m) for m in levels)
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    for a, b in zip(levels, levels[1:]):
        if b != 2 * a:
            raise ValueError(f"levels must double, got {levels}")
    for m in levels:
        if m < 2 or n % (2 * m) != 0:
            raise ValueError(f"level mesh {m} does not embed in grid n={n} (need 2*m | n)")
    return levels


def _clamped_dets(C: np.ndarray) -> np.ndarray:
    """Determinants of stacked symmetric PSD matrices with eigenvalue clamping."""
    if C.shape[-1] == 1:
        return np.clip(C[:, 0, 0], 0.0, None)
    w = np.clip(np.linalg.eigvalsh(C), 0.0, None)
    return np.prod(w, axis=-1)


def _level_ladder(op, k, delta, levels):
    """Per-level lattices with the separation snapped once on the coarsest mesh."""
    levels = _resolve_levels(op, levels)
    d0 = snap_delta(delta, levels[0]) if delta > 0 else 0
    out = []
    for m in levels:
        lat = simplex_lattice(m, k, d0 * (m // levels[0]))
        scale = op.ctx.n // (2 * m)
        out.append((m, lat, lat.nodes * scale))
    return levels, d0 / levels[0] if delta > 0 else 0.0, out


def theorem3_integral(op: OperatorMatrix, k: int, delta: float, levels: Optional[Sequence[int]] = None) -> QuadratureReport:
    """Quadrature of the bare Gram reciprocal over the separated simplex.

    Midpoint rule at doubling mesh refinements; the separation is snapped once
    on the coarsest mesh so all levels integrate the same domain.  Singular
    tuples are excluded and reported.

    Raises
    ------
    ConditionsViolated
        If the operator fails the invertible-complement witness.
    """
    if op.sigma_min_complement <= 0:
        raise ConditionsViolated("operator is not invertible on the kernel complement")
    if delta <= 0:
        raise ValueError("theorem3_integral needs a positive separation")
    _, delta_eff, ladder = _level_ladder(op, k, delta, levels)
    level_values: List[Tuple[int, float]] = []
    hits = weight = 0
    for m, lat, nodes in ladder:
        dets = _clamped_dets(_increment_gram_stack(op, nodes))
        good = dets > GRAM_FLOOR
        value = float(lat.weights[good] @ (1.0 / dets[good]))
        hits = int(np.sum(~good))
        weight = float(np.sum(lat.weights[~good]))
        level_values.append((m, value))
    return QuadratureReport(
        value=level_values[-1][1],
        levels=level_values,
        error_estimate=abs(level_values[-1][1] - level_values[-2][1]),
        singular_hits=hits,
        singular_weight=weight,
        metadata={
            "convention": "bare_gram",
            "mode": "theorem3",
            "k": k,
            "delta_effective": delta_eff,
            "operator": op.describe(),
        },
    )


def _thm1_level(op, k, lat, nodes, h):
    C = _increment_gram_stack(op, nodes)
    dets = _clamped_dets(C)
    if k == 2:
        good = dets > GRAM_FLOOR
    else:
        w = np.linalg.eigvalsh(C)
        good = (dets > GRAM_FLOOR) & (w[:, 0] > 1e-13 * np.maximum(w[:, -1], 1e-300))
    d = (h.values @ op.cumulative_images) / op.ctx.n
    a, b = nodes[good, :-1], nodes[good, 1:]
    c = d[b] - d[a]
    if k == 2:
        s = c[:, 0] / np.sqrt(dets[good])
    else:
        L = np.linalg.cholesky(C[good])
        s = np.linalg.solve(L, c[:, :, None])[:, :, 0]
    bracket = np.prod(-np.expm1(-0.5 * s * s).reshape(len(c), k - 1), axis=1)
    value = float(lat.weights[good] @ (bracket / dets[good]))
    return value, int(np.sum(~good)), float(np.sum(lat.weights[~good]))


def _thm2_level(op, lat, nodes, h):
    n = op.ctx.n
    i, j = nodes[:, 0], nodes[:, 1]
    nsq = np.asarray(op.indicator_image_norm_sq(i, j), dtype=float)
    length = (j - i) / n
    good = (length > 0) & (nsq >= (KERNEL_TOL**2) * np.maximum(length, 1e-300))
    d = (h.values @ op.cumulative_images) / n
    c = d[j[good]] - d[i[good]]
    bracket = np.expm1(-0.5 * c * c / nsq[good])
    value = float(lat.weights[good] @ (bracket / nsq[good]))
    return value, int(np.sum(~good)), float(np.sum(lat.weights[~good]))


def _eq3_level(op, k, lat, nodes, probe):
    C = _increment_gram_stack(op, nodes)
    dets = _clamped_dets(C)
    good = dets > GRAM_FLOOR
    d1 = (probe.h1.values @ op.cumulative_images) / op.ctx.n
    d2 = (probe.h2.values @ op.cumulative_images) / op.ctx.n
    a, b = nodes[good, :-1], nodes[good, 1:]
    c1 = d1[b] - d1[a]
    c2 = d2[b] - d2[a]
    if k == 2:
        p1 = c1[:, 0] ** 2 / dets[good]
        p2 = c2[:, 0] ** 2 / dets[good]
    else:
        sol = np.linalg.solve(C[good], np.stack([c1, c2], axis=-1))
        p1 = np.einsum("ti,ti->t", c1, sol[:, :, 0])
        p2 = np.einsum("ti,ti->t", c2, sol[:, :, 1])
    p1 = np.clip(p1, 0.0, probe.h1.norm_sq())
    p2 = np.clip(p2, 0.0, probe.h2.norm_sq())
    integrand = np.exp(-0.5 * (p1 + p2)) / (dets[good] * TWO_PI ** (k - 1))
    value = float(lat.weights[good] @ integrand)
    return value, int(np.sum(~good)), float(np.sum(lat.weights[~good]))


def regularized_fwt_quadrature(
    op: OperatorMatrix,
    k: int,
    h: GridFunction,
    mode: str,
    delta: float = 0.0,
    levels: Optional[Sequence[int]] = None,
) -> QuadratureReport:
    """Quadrature of the selected transform integrand at doubling refinements.

    Modes
    -----
    thm1_full_simplex
        Subset-alternating integrand over the full simplex, including
        diagonal-adjacent cells (the regularized integrand is integrable
        there).  Bare convention.
    thm2_k2
        Compensated k=2 bracket over the full two-simplex; kernel-indicator
        tuples are skipped and counted.  Bare convention; forces k = 2.
    eq3_delta
        Plain transform integrand with probe (h, h) over the
        delta-separated simplex (finite off the diagonals).  Carries the
        ``(2 pi)^-(k-1)`` factor.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown mode '{mode}' (expected one of {_MODES})")
    if mode == "thm2_k2":
        spec_kind = op.spec.kind if op.spec is not None else "custom_matrix"
        if spec_kind not in ("identity", "projector_complement", "compact_perturbation"):
            raise ValueError("thm2_k2 needs an identity-plus-compact operator form")
        k = 2
    if mode == "eq3_delta" and delta <= 0:
        raise ValueError("eq3_delta needs a positive separation delta")
    _, delta_eff, ladder = _level_ladder(op, k, delta if mode == "eq3_delta" else 0.0, levels)
    probe = FwtProbe(h1=h, h2=h, label="(h,h)")
    level_values: List[Tuple[int, float]] = []
    hits = weight = 0
    for m, lat, nodes in ladder:
        if mode == "thm1_full_simplex":
            value, hits, weight = _thm1_level(op, k, lat, nodes, h)
        elif mode == "thm2_k2":
            value, hits, weight = _thm2_level(op, lat, nodes, h)
        else:
            value, hits, weight = _eq3_level(op, k, lat, nodes, probe)
        level_values.append((m, value))
    return QuadratureReport(
        value=level_values[-1][1],
        levels=level_values,
        error_estimate=abs(level_values[-1][1] - level_values[-2][1]),
        singular_hits=hits,
        singular_weight=weight,
        metadata={
            "convention": "(2pi)^(1-k)" if mode == "eq3_delta" else "bare",
            "mode": mode,
            "k": k,
            "delta_effective": delta_eff,
            "operator": op.describe(),
        },
    )


def _box_boundary_pairs(n: int, i0: int, j0: int, r: int):
    """Node pairs (i, j), i < j, on the boundary of the r-cell box around (i0, j0)."""
    edges = []
    full = np.arange(-r, r + 1)
    inner = np.arange(-r + 1, r)
    for di in (-r, r):
        edges.append(np.stack([np.full_like(full, di), full], axis=1))
    for dj in (-r, r):
        edges.append(np.stack([inner, np.full_like(inner, dj)], axis=1))
    d = np.concatenate(edges)
    i = i0 + d[:, 0]
    j = j0 + d[:, 1]
    ok = (i >= 0) & (j <= n) & (i < j)
    return i[ok], j[ok]


def lemma2_weak_convergence_scan(h: GridFunction, t0: Tuple[float, float], radii: Sequence[float]) -> List[float]:
    """Worst squared normalized pairing of h against indicator differences near t0.

    For each box half-width r, the maximum over node pairs on the box boundary
    of ``<h, e>^2 / ||e||^2`` with ``e = 1_[t1,t2] - 1_[t0]``: the squared
    projection of h onto the normalized difference.  Weak convergence of the
    differences means the sequence decays to 0 as the boxes shrink; by the
    window bound it decays linearly in r.

    Radii must be at least two cells wide.
    """
    ctx = h.ctx
    n = ctx.n
    i0, j0 = ctx.snap(t0[0]), ctx.snap(t0[1])
    if i0 >= j0:
        raise DegenerateInterval(f"t0={t0} snapped to a degenerate pair")
    H = np.concatenate([[0.0], np.cumsum(h.values) / n])
    len0 = (j0 - i0) / n
    base = H[j0] - H[i0]
    out = []
    for r in radii:
        rc = int(math.floor(r * n + 0.5))
        if rc < 1:
            raise DegenerateDifference(f"radius {r} collapses to the center pair at n={n}")
        i, j = _box_boundary_pairs(n, i0, j0, rc)
        num = (H[j] - H[i]) - base
        ov = np.clip(np.minimum(j, j0) - np.maximum(i, i0), 0, None) / n
        den = (j - i) / n + len0 - 2.0 * ov
        ok = den > 1e-300
        if not np.any(ok):
            raise DegenerateDifference(f"no valid boundary pairs at radius {r}")
        out.append(float(np.max(num[ok] ** 2 / den[ok])))
    return out


def lemma3_ratio_scan(op: OperatorMatrix, t0: Tuple[float, float], radii: Sequence[float]) -> List[Tuple[float, float]]:
    """Extremes of ``||A 1_[t1,t2]|| / ||1_[t1,t2] - 1_[t0]||`` on shrinking boxes.

    ``t0`` must be a kernel indicator of the operator; both the minimum and
    maximum over each box boundary approach 1 as the box shrinks.  Reports the
    norm ratio per radius.
    """
    ctx = op.ctx
    n = ctx.n
    i0, j0 = ctx.snap(t0[0]), ctx.snap(t0[1])
    if i0 >= j0:
        raise DegenerateInterval(f"t0={t0} snapped to a degenerate pair")
    len0 = (j0 - i0) / n
    if math.sqrt(float(op.indicator_image_norm_sq(i0, j0)) / len0) >= KERNEL_TOL:
        raise NotAKernelIndicator(f"{t0} is not annihilated by the operator")
    out = []
    for r in radii:
        rc = int(math.floor(r * n + 0.5))
        if rc < 1:
            raise DegenerateDifference(f"radius {r} collapses to the center pair at n={n}")
        i, j = _box_boundary_pairs(n, i0, j0, rc)
        num = np.clip(np.asarray(op.indicator_image_norm_sq(i, j), dtype=float), 0.0, None)
        ov = np.clip(np.minimum(j, j0) - np.maximum(i, i0), 0, None) / n
        den = (j - i) / n + len0 - 2.0 * ov
        ok = den > 1e-300
        ratios = np.sqrt(num[ok] / den[ok])
        out.append((float(np.min(ratios)), float(np.max(ratios))))
    return out

"""Ground truth for checking aggregation results on small instances.

Truth comes from lattice sampling of each domain followed by an exhaustive
pairwise Minkowski sum of the samples.  Nothing here shares code with the
rectangle/pixel path in :mod:`flexsum.aggregator`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import shapely
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .ders import FlexDomain, domain_of

__all__ = [
    "OracleCapExceeded",
    "PointCloud",
    "SupersetReport",
    "TightnessReport",
    "DEFAULT_CAP",
    "sample_domain",
    "brute_force_msum",
    "ensemble_truth",
    "check_superset",
    "check_tightness",
    "analytic_disk_sum",
]

DEFAULT_CAP = 10**7


class OracleCapExceeded(RuntimeError):
    def __init__(self, estimate: int, cap: int):
        super().__init__(f"brute-force sum needs ~{estimate:,} operations, cap is {cap:,}")
        self.estimate = estimate
        self.cap = cap


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    delta: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def __len__(self) -> int:
        return len(self.points)


def sample_domain(domain, delta: float) -> PointCloud:
    """Admissible points of a domain on a pitch-``delta`` lattice.

    The lattice is anchored at the domain's lower-left bound corner; point
    pieces contribute their exact point.  A piece too thin to hold a lattice
    column is sampled along its lower p edge instead.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not isinstance(domain, FlexDomain):
        domain = domain_of(domain)
    p_anchor = min(pc.p_lo for pc in domain.pieces)
    q_anchor = min(float(pc.q_enclosure(np.array([pc.p_lo]), np.array([pc.p_hi]))[0][0])
                   for pc in domain.pieces)
    out = []
    for pc in domain.pieces:
        if pc.is_point:
            out.append([[pc.p_lo, float(pc.q_lower(np.array(pc.p_lo)))]])
            continue
        k = np.arange(np.ceil((pc.p_lo - p_anchor) / delta - 1e-9),
                      np.floor((pc.p_hi - p_anchor) / delta + 1e-9) + 1)
        ps = p_anchor + k * delta
        if ps.size == 0:
            ps = np.array([pc.p_lo])
        lo = pc.q_lower(ps)
        hi = pc.q_upper(ps)
        j0 = np.ceil((lo - q_anchor) / delta - 1e-9).astype(np.int64)
        j1 = np.floor((hi - q_anchor) / delta + 1e-9).astype(np.int64)
        counts = np.maximum(j1 - j0 + 1, 0)
        col = np.repeat(np.arange(ps.size), counts)
        j = j0[col] + np.arange(col.size) - np.repeat(np.cumsum(counts) - counts, counts)
        pts = np.column_stack((ps[col], q_anchor + j * delta))
        # columns without a lattice row keep their lower bound point
        empty = counts == 0
        if np.any(empty):
            pts = np.vstack((pts, np.column_stack((ps[empty], lo[empty]))))
        out.append(pts)
    pts = np.vstack(out)
    pts = pts[domain.contains(pts[:, 0], pts[:, 1], tol=1e-9)]
    return PointCloud(_dedup(pts, delta), delta)


def _dedup(points: np.ndarray, delta: float) -> np.ndarray:
    """Drop points sharing a cell of the delta/10 lattice, keeping the first."""
    if len(points) == 0:
        return points
    keys = np.round(points / (delta / 10.0)).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def _classes(points: np.ndarray, delta: float):
    """Split points into translates of the pitch-delta integer lattice.

    Yields ``(base, ij)`` with ``points = base + delta * ij``.
    """
    frac = np.mod(points / delta, 1.0)
    frac[frac > 1 - 1e-6] = 0.0
    keys = np.round(frac * 1e5).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for c in range(inverse.max() + 1):
        members = points[inverse == c]
        base = members[0]
        ij = np.round((members - base) / delta).astype(np.int64)
        yield base, ij


def _pair_sum(a_base, a_ij, b_base, b_ij, delta):
    n_direct = len(a_ij) * len(b_ij)
    lo_a, lo_b = a_ij.min(axis=0), b_ij.min(axis=0)
    span = (a_ij.max(axis=0) - lo_a) + (b_ij.max(axis=0) - lo_b) + 1
    n_image = int(np.prod(span))
    if n_direct <= 4 * n_image:
        ij = (a_ij[:, None, :] + b_ij[None, :, :]).reshape(-1, 2)
    else:
        img_a = _image(a_ij - lo_a)
        img_b = _image(b_ij - lo_b)
        conv = fftconvolve(img_a, img_b)
        ij = np.argwhere(conv > 0.5) + lo_a + lo_b
    return a_base + b_base + delta * ij, min(n_direct, 4 * n_image)


def _image(ij: np.ndarray) -> np.ndarray:
    img = np.zeros(ij.max(axis=0) + 1)
    img[ij[:, 0], ij[:, 1]] = 1.0
    return img


def _stage_work(a: np.ndarray, b: np.ndarray, delta: float) -> int:
    work = 0
    cls_b = list(_classes(b, delta))
    for _, a_ij in _classes(a, delta):
        for _, b_ij in cls_b:
            span = np.ptp(a_ij, axis=0) + np.ptp(b_ij, axis=0) + 1
            work += min(len(a_ij) * len(b_ij), 4 * int(np.prod(span)))
    return work


def brute_force_msum(clouds: Sequence[PointCloud], cap: int = DEFAULT_CAP) -> PointCloud:
    """All coordinate-wise sums of one point from each cloud.

    Clouds are summed pairwise, deduplicating on a delta/10 lattice after
    each stage.  Within a stage, points are grouped into lattice translates;
    a pair of groups is enumerated directly when small and otherwise summed
    as a binary image convolution, which yields the same point set.

    Raises :class:`OracleCapExceeded` before any stage whose estimated work
    exceeds ``cap``.
    """
    if not clouds:
        raise ValueError("no clouds to sum")
    delta = min(c.delta for c in clouds)
    acc = np.array(clouds[0].points)
    for cloud in clouds[1:]:
        work = _stage_work(acc, cloud.points, delta)
        if work > cap:
            raise OracleCapExceeded(work, cap)
        cls_b = list(_classes(cloud.points, delta))
        parts = []
        for a_base, a_ij in _classes(acc, delta):
            for b_base, b_ij in cls_b:
                pts, _ = _pair_sum(a_base, a_ij, b_base, b_ij, delta)
                parts.append(pts)
        acc = _dedup(np.vstack(parts), delta)
    return PointCloud(acc, delta)


def ensemble_truth(ensemble, delta: float, cap: int = DEFAULT_CAP) -> PointCloud:
    """Sampled truth for the Minkowski sum of an ensemble's domains."""
    items = getattr(ensemble, "ders", ensemble)
    return brute_force_msum([sample_domain(d, delta) for d in items], cap)


@dataclass
class SupersetReport:
    violations: np.ndarray
    max_gap: float

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def as_dict(self) -> dict:
        gap = self.max_gap if np.isfinite(self.max_gap) else None
        return {"violations": self.violations.tolist(), "max_gap": gap}


@dataclass
class TightnessReport:
    worst: float
    bound: float
    delta: float
    passed: bool

    def as_dict(self) -> dict:
        return {"worst": self.worst, "bound": self.bound, "pass": self.passed}


def _blocks_of(result) -> np.ndarray:
    blocks = getattr(result, "blocks", result)
    return np.asarray(getattr(blocks, "blocks", blocks), dtype=float).reshape(-1, 4)


#: Above this many blocks, membership goes through a tree query instead of a union.
UNION_LIMIT = 20_000


def covered(blocks: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Mask of points lying in at least one closed block (within ``tol``)."""
    mask = np.zeros(len(points), dtype=bool)
    if len(blocks) == 0 or len(points) == 0:
        return mask
    boxes = shapely.box(blocks[:, 0] - tol, blocks[:, 2] - tol,
                        blocks[:, 1] + tol, blocks[:, 3] + tol)
    if len(blocks) <= UNION_LIMIT:
        # overlapping blocks (exact sums) would make the tree return every hit pair
        shape = shapely.union_all(boxes)
        shapely.prepare(shape)
        return shapely.contains_xy(shape, points[:, 0], points[:, 1])
    tree = shapely.STRtree(boxes)
    step = 50_000
    for s in range(0, len(points), step):
        hits = tree.query(shapely.points(points[s:s + step]), predicate="intersects")
        mask[s + np.unique(hits[0])] = True
    return mask


def check_superset(result, truth: PointCloud) -> SupersetReport:
    """Truth points falling outside the result, and how far outside (Chebyshev)."""
    blocks = _blocks_of(result)
    inside = covered(blocks, truth.points)
    bad = truth.points[~inside]
    gap = 0.0
    if len(bad) and len(blocks) == 0:
        gap = float("inf")
    elif len(bad):
        b = blocks
        dist = np.full(len(bad), np.inf)
        step = max(1, 2_000_000 // max(1, len(b)))
        for s in range(0, len(bad), step):
            p = bad[s:s + step, 0:1]
            q = bad[s:s + step, 1:2]
            dp = np.maximum(np.maximum(b[:, 0] - p, p - b[:, 1]), 0.0)
            dq = np.maximum(np.maximum(b[:, 2] - q, q - b[:, 3]), 0.0)
            dist[s:s + step] = np.maximum(dp, dq).min(axis=1)
        gap = float(dist.max())
    return SupersetReport(np.array(bad), gap)


def _cell_corners(cells: np.ndarray, h_p: float, h_q: float) -> np.ndarray:
    """Corners of every cell after cutting it into sub-cells of size <= (h_p, h_q)."""
    w = cells[:, 1] - cells[:, 0]
    hq = cells[:, 3] - cells[:, 2]
    n_p = np.maximum(1, np.ceil(w / h_p - 1e-9)).astype(np.int64) + 1
    n_q = np.maximum(1, np.ceil(hq / h_q - 1e-9)).astype(np.int64) + 1
    per = n_p * n_q
    cell = np.repeat(np.arange(len(cells)), per)
    idx = np.arange(cell.size) - np.repeat(np.cumsum(per) - per, per)
    i = idx // n_q[cell]
    j = idx % n_q[cell]
    p = cells[cell, 0] + w[cell] * i / (n_p[cell] - 1)
    q = cells[cell, 2] + hq[cell] * j / (n_q[cell] - 1)
    pts = np.column_stack((p, q))
    return np.unique(np.round(pts, 12), axis=0)


def check_tightness(result, truth: PointCloud, bound: float) -> TightnessReport:
    """Worst Chebyshev distance from a result cell corner to the nearest truth point.

    Cells are the occupied pixels, or the exact blocks cut at the final
    pixel pitch.  Passes when ``worst <= bound + truth.delta``.
    """
    if truth.delta > bound / 10 + 1e-15:
        raise ValueError("truth resolution too coarse for this bound (need delta <= bound/10)")
    if hasattr(result, "cells"):
        _, _, cells = result.cells()
        h_p, h_q = result.grid.eps_p, result.grid.eps_q
    else:
        cells = _blocks_of(result)
        h_p = h_q = bound
    if len(cells) == 0:
        return TightnessReport(0.0, bound, truth.delta, True)
    corners = _cell_corners(cells, h_p, h_q)
    dist, _ = cKDTree(truth.points).query(corners, p=np.inf)
    worst = float(dist.max())
    return TightnessReport(worst, bound, truth.delta, worst <= bound + truth.delta)


def analytic_disk_sum(radii: Sequence[float]) -> Callable:
    """Membership test for the sum of origin-centred disks: ``p^2 + q^2 <= (sum r)^2``."""
    radii = [float(r) for r in radii]
    if not radii or min(radii) <= 0:
        raise ValueError("radii must be positive")
    r = sum(radii)

    def member(p, q, tol: float = 0.0):
        return np.hypot(p, q) <= r + tol

    member.radius = r
    return member

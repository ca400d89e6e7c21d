"""Intervals, rectangles, rectangle unions and pixel grids in the p-q plane.

Rectangle unions are stored as an ``(m, 4)`` float array with columns
``p_lo, p_hi, q_lo, q_hi``; the scalar :class:`Rect` / :class:`Interval`
types exist for readable single-block code and tests.  Pixel indices are
1-based throughout, matching the index arithmetic of :func:`rasterize_block`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CEIL_GUARD",
    "ContractViolation",
    "Interval",
    "Rect",
    "RectUnion",
    "PixelGrid",
    "IndexRange",
    "guarded_ceil",
    "msum_rects",
    "msum_rect_unions",
    "rasterize_block",
    "rasterize_blocks",
    "mark_range",
    "mark_ranges",
    "grid_to_rect_union",
    "grid_cells",
    "coalesce",
    "range_reduce",
    "split_blocks",
    "SumExtents",
]

#: Slack subtracted before taking ceilings of pixel coordinates.
CEIL_GUARD = 1e-9

P_LO, P_HI, Q_LO, Q_HI = range(4)


class ContractViolation(ValueError):
    """A block or index range does not fit the grid it is applied to."""


def guarded_ceil(x):
    """Ceiling that ignores float noise just above an integer."""
    return np.ceil(np.asarray(x, dtype=float) - CEIL_GUARD).astype(np.int64)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval lower end {self.lo} exceeds upper end {self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class Rect:
    p: Interval
    q: Interval

    @classmethod
    def from_bounds(cls, p_lo, p_hi, q_lo, q_hi) -> "Rect":
        return cls(Interval(float(p_lo), float(p_hi)), Interval(float(q_lo), float(q_hi)))

    @classmethod
    def point(cls, p, q) -> "Rect":
        return cls.from_bounds(p, p, q, q)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p.lo, self.p.hi, self.q.lo, self.q.hi)

    def contains(self, p: float, q: float) -> bool:
        return p in self.p and q in self.q


def _as_block_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        return np.empty((0, 4))
    arr = arr.reshape(-1, 4)
    if np.any(arr[:, P_LO] > arr[:, P_HI]) or np.any(arr[:, Q_LO] > arr[:, Q_HI]):
        raise ValueError("block with lower bound above upper bound")
    return arr


@dataclass(frozen=True)
class RectUnion:
    """Finite union of closed axis-aligned rectangles (members may overlap).

    An empty union is the empty set.
    """

    blocks: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    def __post_init__(self):
        arr = _as_block_array(self.blocks)
        arr.setflags(write=False)
        object.__setattr__(self, "blocks", arr)

    @classmethod
    def from_rects(cls, rects: Iterable[Rect]) -> "RectUnion":
        return cls(np.array([r.as_tuple() for r in rects], dtype=float))

    @classmethod
    def empty(cls) -> "RectUnion":
        return cls()

    def __len__(self) -> int:
        return self.blocks.shape[0]

    def __iter__(self):
        return iter(self.rects)

    @property
    def rects(self) -> list[Rect]:
        return [Rect.from_bounds(*row) for row in self.blocks]

    def bbox(self) -> tuple[float, float, float, float]:
        b = self.blocks
        return (b[:, P_LO].min(), b[:, P_HI].max(), b[:, Q_LO].min(), b[:, Q_HI].max())

    def area(self) -> float:
        """Sum of member areas (overlaps counted repeatedly)."""
        b = self.blocks
        return float(np.sum((b[:, P_HI] - b[:, P_LO]) * (b[:, Q_HI] - b[:, Q_LO])))

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        """Membership mask for an ``(n, 2)`` array of ``(p, q)`` points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = np.zeros(len(pts), dtype=bool)
        if len(self) == 0 or len(pts) == 0:
            return inside
        b = self.blocks
        # chunk the point x block comparison to bound memory
        step = max(1, 2_000_000 // len(b))
        for start in range(0, len(pts), step):
            p = pts[start:start + step, 0:1]
            q = pts[start:start + step, 1:2]
            hit = ((p >= b[:, P_LO] - tol) & (p <= b[:, P_HI] + tol)
                   & (q >= b[:, Q_LO] - tol) & (q <= b[:, Q_HI] + tol))
            inside[start:start + step] = hit.any(axis=1)
        return inside

    def chebyshev_distance(self, points) -> np.ndarray:
        """Chebyshev distance from each point to the nearest member rect."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.full(len(pts), np.inf)
        if len(self) == 0:
            return out
        b = self.blocks
        step = max(1, 2_000_000 // len(b))
        for start in range(0, len(pts), step):
            p = pts[start:start + step, 0:1]
            q = pts[start:start + step, 1:2]
            dp = np.maximum(np.maximum(b[:, P_LO] - p, p - b[:, P_HI]), 0.0)
            dq = np.maximum(np.maximum(b[:, Q_LO] - q, q - b[:, Q_HI]), 0.0)
            out[start:start + step] = np.maximum(dp, dq).min(axis=1)
        return out


def msum_rects(a: Rect, b: Rect) -> Rect:
    """Exact Minkowski sum of two rectangles: endpoint-wise interval addition."""
    return Rect(a.p + b.p, a.q + b.q)


def msum_rect_unions(a: RectUnion, b: RectUnion) -> RectUnion:
    """Exact Minkowski sum of two rectangle unions.

    Returns one member per ordered pair ``(i, j)``, row-major in ``a``, so the
    result has ``len(a) * len(b)`` members.
    """
    if len(a) == 0 or len(b) == 0:
        return RectUnion.empty()
    out = a.blocks[:, None, :] + b.blocks[None, :, :]
    return RectUnion(out.reshape(-1, 4))


@dataclass(frozen=True)
class IndexRange:
    k0: int
    kf: int
    l0: int
    lf: int

    def __post_init__(self):
        if not (1 <= self.k0 <= self.kf and 1 <= self.l0 <= self.lf):
            raise ContractViolation(f"malformed index range {self}")

    @property
    def size(self) -> int:
        return (self.kf - self.k0 + 1) * (self.lf - self.l0 + 1)


@dataclass
class PixelGrid:
    """Uniform grid of closed pixels anchored at ``(origin_p, origin_q)``.

    Pixel ``(k, l)`` covers ``[origin_p + (k-1) eps_p, origin_p + k eps_p]``
    by ``[origin_q + (l-1) eps_q, origin_q + l eps_q]``.  ``occupancy`` is a
    boolean array of shape ``(dim_p, dim_q)`` indexed ``[k-1, l-1]``.
    """

    origin_p: float
    origin_q: float
    eps_p: float
    eps_q: float
    dim_p: int
    dim_q: int
    occupancy: np.ndarray = None

    def __post_init__(self):
        if not (self.eps_p > 0 and self.eps_q > 0):
            raise ValueError("pixel sizes must be positive")
        if self.dim_p < 1 or self.dim_q < 1:
            raise ValueError("grid dimensions must be positive")
        self.dim_p = int(self.dim_p)
        self.dim_q = int(self.dim_q)
        if self.occupancy is None:
            self.occupancy = np.zeros((self.dim_p, self.dim_q), dtype=bool)
        elif self.occupancy.shape != (self.dim_p, self.dim_q):
            raise ValueError("occupancy shape does not match grid dimensions")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    def like(self) -> "PixelGrid":
        """Empty grid with the same geometry."""
        return PixelGrid(self.origin_p, self.origin_q, self.eps_p, self.eps_q,
                         self.dim_p, self.dim_q)

    def pixel_rect(self, k: int, l: int) -> Rect:
        return Rect.from_bounds(
            self.origin_p + (k - 1) * self.eps_p, self.origin_p + k * self.eps_p,
            self.origin_q + (l - 1) * self.eps_q, self.origin_q + l * self.eps_q)

    def extent(self) -> tuple[float, float, float, float]:
        return (self.origin_p, self.origin_p + self.dim_p * self.eps_p,
                self.origin_q, self.origin_q + self.dim_q * self.eps_q)


def rasterize_blocks(blocks: np.ndarray, grid: PixelGrid):
    """Vectorised index computation for an ``(m, 4)`` block array.

    Returns int arrays ``k0, kf, l0, lf`` (1-based, inclusive).  Raises
    :class:`ContractViolation` if any block reaches beyond the grid.
    """
    b = np.asarray(blocks, dtype=float).reshape(-1, 4)
    k0 = np.maximum(1, guarded_ceil((b[:, P_LO] - grid.origin_p) / grid.eps_p))
    kf = np.maximum(1, guarded_ceil((b[:, P_HI] - grid.origin_p) / grid.eps_p))
    l0 = np.maximum(1, guarded_ceil((b[:, Q_LO] - grid.origin_q) / grid.eps_q))
    lf = np.maximum(1, guarded_ceil((b[:, Q_HI] - grid.origin_q) / grid.eps_q))
    _check_inside(b, kf, lf, grid)
    return k0, kf, l0, lf


def _check_inside(b, kf, lf, grid, tol=1e-9):
    if len(b) == 0:
        return
    if kf.max() > grid.dim_p or lf.max() > grid.dim_q:
        raise ContractViolation("block extends past the far edge of the grid")
    low_p = (b[:, P_LO] - grid.origin_p) / grid.eps_p
    low_q = (b[:, Q_LO] - grid.origin_q) / grid.eps_q
    if low_p.min() < -tol or low_q.min() < -tol:
        raise ContractViolation("block starts before the grid origin")


def rasterize_block(r: Rect, grid: PixelGrid) -> IndexRange:
    """Index range of the pixels overlapping ``r``; their union covers ``r``."""
    k0, kf, l0, lf = rasterize_blocks(np.array([r.as_tuple()]), grid)
    return IndexRange(int(k0[0]), int(kf[0]), int(l0[0]), int(lf[0]))


def mark_ranges(grid: PixelGrid, k0, kf, l0, lf) -> PixelGrid:
    """Set every pixel inside each of the index boxes (in place).

    Uses a 2D difference array so the cost is linear in the number of boxes
    plus the grid size, independent of box areas.
    """
    k0, kf, l0, lf = (np.asarray(a, dtype=np.int64).ravel() for a in (k0, kf, l0, lf))
    if k0.size == 0:
        return grid
    if (k0.min() < 1 or l0.min() < 1 or kf.max() > grid.dim_p or lf.max() > grid.dim_q
            or np.any(k0 > kf) or np.any(l0 > lf)):
        raise ContractViolation("index range outside grid dimensions")
    stride = grid.dim_q + 1
    size = (grid.dim_p + 1) * stride
    # 0-based corners: +1 at (k0-1, l0-1), -1 at (kf, l0-1) and (k0-1, lf), +1 at (kf, lf)
    plus = np.concatenate(((k0 - 1) * stride + (l0 - 1), kf * stride + lf))
    minus = np.concatenate((kf * stride + (l0 - 1), (k0 - 1) * stride + lf))
    diff = (np.bincount(plus, minlength=size).astype(np.int64)
            - np.bincount(minus, minlength=size))
    cover = diff.reshape(grid.dim_p + 1, stride).cumsum(axis=0).cumsum(axis=1)
    grid.occupancy |= cover[:grid.dim_p, :grid.dim_q] > 0
    return grid


def mark_range(grid: PixelGrid, idx: IndexRange) -> PixelGrid:
    """Set all pixels of one index box; existing bits stay set."""
    if idx.kf > grid.dim_p or idx.lf > grid.dim_q:
        raise ContractViolation(f"{idx} outside grid of {grid.dim_p}x{grid.dim_q}")
    grid.occupancy[idx.k0 - 1:idx.kf, idx.l0 - 1:idx.lf] = True
    return grid


def _row_runs(grid: PixelGrid):
    """Maximal runs of occupied pixels along p, for every q row.

    Returns 0-based arrays ``(l, k_start, k_stop)`` with ``k_stop`` exclusive,
    ordered by row then by p.
    """
    rows = grid.occupancy.T.astype(np.int8)
    padded = np.zeros((rows.shape[0], rows.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = rows
    edges = np.diff(padded, axis=1)
    l_start, k_start = np.nonzero(edges == 1)
    _, k_stop = np.nonzero(edges == -1)
    return l_start, k_start, k_stop


def range_reduce(n: int, start, stop, values, op=np.minimum, fill=np.inf) -> np.ndarray:
    """Offline range updates: ``out[i] = op(values[j] for all j with start[j] <= i <= stop[j])``.

    Each range is written as two overlapping power-of-two spans of a sparse
    table, which is then pushed down level by level.  Cost is linear in the
    number of ranges plus ``n log n``.
    """
    start = np.asarray(start, dtype=np.int64)
    stop = np.asarray(stop, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    out = np.full(n, fill)
    if start.size == 0:
        return out
    length = stop - start + 1
    level = np.floor(np.log2(length)).astype(np.int64)
    levels = int(level.max()) + 1
    table = np.full((levels, n), fill)
    op.at(table, (level, start), values)
    op.at(table, (level, stop - (1 << level) + 1), values)
    for j in range(levels - 1, 0, -1):
        half = 1 << (j - 1)
        op(table[j - 1], table[j], out=table[j - 1])
        op(table[j - 1, half:], table[j, :-half], out=table[j - 1, half:])
    return table[0]


@dataclass
class SumExtents:
    """Exact extents of the blocks rasterized into a grid.

    ``row_p`` holds, per q row, the smallest and largest p reached by any
    block touching that row; ``col_q`` holds the q extremes per p column.
    """

    row_p_lo: np.ndarray
    row_p_hi: np.ndarray
    col_q_lo: np.ndarray
    col_q_hi: np.ndarray

    @classmethod
    def empty(cls, grid: PixelGrid) -> "SumExtents":
        return cls(np.full(grid.dim_q, np.inf), np.full(grid.dim_q, -np.inf),
                   np.full(grid.dim_p, np.inf), np.full(grid.dim_p, -np.inf))

    def update(self, blocks: np.ndarray, k0, kf, l0, lf) -> None:
        nq, np_ = len(self.row_p_lo), len(self.col_q_lo)
        np.minimum(self.row_p_lo, range_reduce(nq, l0 - 1, lf - 1, blocks[:, P_LO]),
                   out=self.row_p_lo)
        np.maximum(self.row_p_hi, range_reduce(nq, l0 - 1, lf - 1, blocks[:, P_HI],
                                               np.maximum, -np.inf), out=self.row_p_hi)
        np.minimum(self.col_q_lo, range_reduce(np_, k0 - 1, kf - 1, blocks[:, Q_LO]),
                   out=self.col_q_lo)
        np.maximum(self.col_q_hi, range_reduce(np_, k0 - 1, kf - 1, blocks[:, Q_HI],
                                               np.maximum, -np.inf), out=self.col_q_hi)


def grid_to_rect_union(grid: PixelGrid, clip: Sequence[float] | None = None,
                       extents: SumExtents | None = None) -> RectUnion:
    """Row-run compression of the occupied pixels.

    One rect per maximal run of set pixels along p in each q row.  ``clip``
    optionally trims every rect to a ``(p_lo, p_hi, q_lo, q_hi)`` box; callers
    use it to discard the part of the last pixel row/column that lies beyond
    a known bound of the underlying set.  ``extents`` trims each run further
    to the exact reach of the blocks that were rasterized into its row and
    columns.
    """
    l, ks, ke = _row_runs(grid)
    blocks = np.column_stack((
        grid.origin_p + ks * grid.eps_p,
        grid.origin_p + ke * grid.eps_p,
        grid.origin_q + l * grid.eps_q,
        grid.origin_q + (l + 1) * grid.eps_q,
    ))
    if extents is not None and len(blocks):
        blocks[:, P_LO] = np.maximum(blocks[:, P_LO], extents.row_p_lo[l])
        blocks[:, P_HI] = np.minimum(blocks[:, P_HI], extents.row_p_hi[l])
        bounds = np.column_stack((ks, ke)).ravel()
        q_lo = np.append(extents.col_q_lo, np.inf)
        q_hi = np.append(extents.col_q_hi, -np.inf)
        blocks[:, Q_LO] = np.maximum(blocks[:, Q_LO], np.minimum.reduceat(q_lo, bounds)[::2])
        blocks[:, Q_HI] = np.minimum(blocks[:, Q_HI], np.maximum.reduceat(q_hi, bounds)[::2])
    if clip is not None:
        blocks = _clip(blocks, clip)
    return RectUnion(blocks)


def grid_cells(grid: PixelGrid, clip: Sequence[float] | None = None):
    """Occupied pixels as ``(k, l, blocks)``: 1-based indices and clipped rects."""
    k, l = np.nonzero(grid.occupancy)
    blocks = np.column_stack((
        grid.origin_p + k * grid.eps_p,
        grid.origin_p + (k + 1) * grid.eps_p,
        grid.origin_q + l * grid.eps_q,
        grid.origin_q + (l + 1) * grid.eps_q,
    ))
    if clip is not None:
        blocks = _clip(blocks, clip)
    return k + 1, l + 1, blocks


def split_blocks(blocks: np.ndarray, grid: PixelGrid):
    """Cut each block along the pixel lines of ``grid``.

    Returns ``(k, l, cells)`` where cell ``i`` is the part of its block lying
    in pixel ``(k[i], l[i])`` (1-based).  A block edge sitting on a pixel line
    does not claim the neighbouring pixel.
    """
    blocks = np.asarray(blocks, dtype=float).reshape(-1, 4)
    xp = (blocks[:, [P_LO, P_HI]] - grid.origin_p) / grid.eps_p
    xq = (blocks[:, [Q_LO, Q_HI]] - grid.origin_q) / grid.eps_q
    k0 = np.floor(xp[:, 0] + CEIL_GUARD).astype(np.int64)
    kf = np.maximum(k0 + 1, np.ceil(xp[:, 1] - CEIL_GUARD).astype(np.int64))
    l0 = np.floor(xq[:, 0] + CEIL_GUARD).astype(np.int64)
    lf = np.maximum(l0 + 1, np.ceil(xq[:, 1] - CEIL_GUARD).astype(np.int64))
    n_k, n_l = kf - k0, lf - l0
    per = n_k * n_l
    src = np.repeat(np.arange(len(blocks)), per)
    idx = np.arange(src.size) - np.repeat(np.cumsum(per) - per, per)
    k = k0[src] + idx // n_l[src]
    l = l0[src] + idx % n_l[src]
    b = blocks[src]
    cells = np.column_stack((
        np.maximum(b[:, P_LO], grid.origin_p + k * grid.eps_p),
        np.minimum(b[:, P_HI], grid.origin_p + (k + 1) * grid.eps_p),
        np.maximum(b[:, Q_LO], grid.origin_q + l * grid.eps_q),
        np.minimum(b[:, Q_HI], grid.origin_q + (l + 1) * grid.eps_q),
    ))
    return k + 1, l + 1, cells


def _clip(blocks: np.ndarray, clip: Sequence[float]) -> np.ndarray:
    p_lo, p_hi, q_lo, q_hi = clip
    out = blocks.copy()
    out[:, P_LO] = np.clip(out[:, P_LO], p_lo, p_hi)
    out[:, P_HI] = np.clip(out[:, P_HI], p_lo, p_hi)
    out[:, Q_LO] = np.clip(out[:, Q_LO], q_lo, q_hi)
    out[:, Q_HI] = np.clip(out[:, Q_HI], q_lo, q_hi)
    return out


def coalesce(union: RectUnion) -> RectUnion:
    """Merge members sharing the same p-interval whose q-intervals touch.

    The point set is unchanged.  Typical use: collapse stacked column pieces
    into one rect per column before a pairwise sum.
    """
    b = union.blocks
    if len(b) < 2:
        return union
    order = np.lexsort((b[:, Q_LO], b[:, P_HI], b[:, P_LO]))
    b = b[order]
    same_col = (b[1:, P_LO] == b[:-1, P_LO]) & (b[1:, P_HI] == b[:-1, P_HI])
    # chaining on the previous member only: every merged group stays connected
    touches = same_col & (b[1:, Q_LO] <= b[:-1, Q_HI])
    starts = np.flatnonzero(np.concatenate(([True], ~touches)))
    merged = b[starts].copy()
    merged[:, Q_HI] = np.maximum.reduceat(b[:, Q_HI], starts)
    return RectUnion(merged)

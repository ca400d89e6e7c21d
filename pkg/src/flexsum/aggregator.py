"""Approximate Minkowski sum of an ensemble of flexibility domains.

Every domain is discretized into rectangles, then folded into a running
accumulator one DER at a time.  A fold is exact (pairwise rectangle sums)
while the pair count is small: within the pixel budget ``M_p * M_q`` for the
last fold, and within the grid's row count for earlier ones.  Otherwise the
pairwise sums are rasterized onto a pixel grid and the grid is handed to the
next fold as row runs.  The result always contains the true
Minkowski sum.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ders import Bounds, DerSpec, FlexDomain, bounds_of, discretize, domain_of
from .geometry import (
    PixelGrid,
    RectUnion,
    SumExtents,
    coalesce,
    grid_to_rect_union,
    guarded_ceil,
    mark_ranges,
    msum_rect_unions,
    rasterize_blocks,
    split_blocks,
)

__all__ = [
    "GridMode",
    "TightnessConfig",
    "BinCounts",
    "StepStat",
    "AggregateResult",
    "bin_counts",
    "effective_eps",
    "discretization_widths",
    "pixel_sizes",
    "make_grid",
    "pixelized_sum",
    "aggregate",
]

#: Pairs rasterized per vectorised batch in :func:`pixelized_sum`.
PAIR_BATCH = 1 << 20


class GridMode(str, enum.Enum):
    PER_STEP = "per-step"
    FIXED_FINAL = "fixed-final"


@dataclass(frozen=True)
class TightnessConfig:
    """Tightness ``epsilon`` (kW and kVAr) with optional bin caps.

    ``cap_p`` bounds the number of p-bins from above; ``cap_q`` fixes the
    number of q-bins exactly.
    """

    epsilon: float
    cap_p: int | None = None
    cap_q: int | None = None
    grid_mode: GridMode = GridMode.PER_STEP

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        for name in ("cap_p", "cap_q"):
            cap = getattr(self, name)
            if cap is not None and (int(cap) != cap or cap < 1):
                raise ValueError(f"{name} must be a positive integer, got {cap}")
        object.__setattr__(self, "grid_mode", GridMode(self.grid_mode))


@dataclass(frozen=True)
class BinCounts:
    m_p: int
    m_q: int


@dataclass
class StepStat:
    step: int
    blocks: int
    eps_p: float | None
    eps_q: float | None
    pixelized: bool
    occupied: int | None
    elapsed: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AggregateResult:
    """Outcome of :func:`aggregate`.

    ``blocks`` is the computed superset.  ``grid`` is its pixelization on
    the final grid; when the last fold was rasterized the two describe the
    same cells up to ``clip``, otherwise ``exact`` is true and ``blocks``
    holds the exact sum of the last accumulator and the last DER.
    """

    grid: PixelGrid
    blocks: RectUnion
    per_step_stats: list[StepStat]
    exact: bool
    bounds: Bounds
    clip: tuple[float, float, float, float]
    history: list[RectUnion] = field(default_factory=list)

    def cells(self):
        """Final cells as ``(k, l, blocks)``: occupied pixels, or the exact blocks.

        For exact results ``(k, l)`` is the pixel holding each block's lower
        corner.  Otherwise the result blocks are cut along pixel lines, which
        gives the occupied pixels clipped to the bound box (and, for refined
        folds, to the exact reach of the last pairwise sums).
        """
        if self.exact:
            k0, _, l0, _ = rasterize_blocks(self.blocks.blocks, self.grid)
            return k0, l0, np.array(self.blocks.blocks)
        return split_blocks(self.blocks.blocks, self.grid)

    @property
    def peak_blocks(self) -> int:
        return max(s.blocks for s in self.per_step_stats)


def bin_counts(ensemble_bounds: Sequence[Bounds], eps: float) -> BinCounts:
    """Bins of length ``eps`` needed to span the summed p and q ranges (at least 1)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not ensemble_bounds:
        raise ValueError("empty ensemble")
    sp = sum(b.dp for b in ensemble_bounds)
    sq = sum(b.dq for b in ensemble_bounds)
    return BinCounts(max(1, int(guarded_ceil(sp / eps))), max(1, int(guarded_ceil(sq / eps))))


def effective_eps(total: Bounds, cfg: TightnessConfig) -> tuple[float, float]:
    """Per-axis bin length once caps are applied.

    A p-cap coarsens bins only when it binds; a q-cap fixes the bin count.
    """
    eps_p = eps_q = cfg.epsilon
    if cfg.cap_p is not None and total.dp > 0:
        eps_p = max(eps_p, total.dp / cfg.cap_p)
    if cfg.cap_q is not None and total.dq > 0:
        eps_q = total.dq / cfg.cap_q
    return eps_p, eps_q


def discretization_widths(ensemble_bounds: Sequence[Bounds], eps: float,
                          eps_q: float | None = None) -> list[tuple[float, float]]:
    """Per-DER block widths: each DER gets its share ``eps * range_i / sum(range)``.

    DERs with no extent on an axis get width 0 there.  ``eps_q`` overrides
    the q-axis bin length.
    """
    if eps_q is None:
        eps_q = eps
    sp = sum(b.dp for b in ensemble_bounds)
    sq = sum(b.dq for b in ensemble_bounds)
    return [(eps * b.dp / sp if sp > 0 else 0.0, eps_q * b.dq / sq if sq > 0 else 0.0)
            for b in ensemble_bounds]


def _axis_pixel(part: float, tot: float, eps: float, eps_final: float,
                mode: GridMode, cap: int | None, exact_cap: bool) -> tuple[float, int]:
    if tot <= 0:
        return 1.0, 1
    if mode is GridMode.FIXED_FINAL:
        size = eps_final
    elif exact_cap and cap is not None:
        size = part / cap if part > 0 else eps_final
    else:
        size = eps * part / tot if part > 0 else eps
        if cap is not None and part > 0:
            size = max(size, part / cap)
    dim = max(1, int(guarded_ceil(part / size))) if part > 0 else 1
    return size, dim


def pixel_sizes(partial: Bounds, total: Bounds, cfg: TightnessConfig | float):
    """Pixel sizes ``(eps_p_hat, eps_q_hat)`` for a fold whose operands span ``partial``."""
    size_p, _, size_q, _ = _grid_shape(partial, total, cfg)
    return size_p, size_q


def _grid_shape(partial, total, cfg):
    if not isinstance(cfg, TightnessConfig):
        cfg = TightnessConfig(float(cfg))
    eps_p, eps_q = effective_eps(total, cfg)
    size_p, dim_p = _axis_pixel(partial.dp, total.dp, cfg.epsilon, eps_p,
                                cfg.grid_mode, cfg.cap_p, exact_cap=False)
    size_q, dim_q = _axis_pixel(partial.dq, total.dq, cfg.epsilon, eps_q,
                                cfg.grid_mode, cfg.cap_q, exact_cap=True)
    return size_p, dim_p, size_q, dim_q


def make_grid(partial: Bounds, total: Bounds, cfg: TightnessConfig | float) -> PixelGrid:
    """Empty grid anchored at the summed infima, covering the summed bound box."""
    size_p, dim_p, size_q, dim_q = _grid_shape(partial, total, cfg)
    return PixelGrid(partial.p_inf, partial.q_inf, size_p, size_q, dim_p, dim_q)


def pixelized_sum(acc: RectUnion, nxt: RectUnion, grid: PixelGrid,
                  extents: SumExtents | None = None) -> PixelGrid:
    """Mark every pixel touched by some pairwise sum ``acc[i] + nxt[j]``.

    The grid must contain all pairwise sums.  Work is ``len(acc) * len(nxt)``
    index computations, done in vectorised batches.  ``extents``, if given,
    also records the exact per-row and per-column reach of the sums.
    """
    a, b = acc.blocks, nxt.blocks
    if len(a) == 0 or len(b) == 0:
        return grid
    rows = max(1, PAIR_BATCH // len(b))
    for start in range(0, len(a), rows):
        sums = (a[start:start + rows, None, :] + b[None, :, :]).reshape(-1, 4)
        idx = rasterize_blocks(sums, grid)
        mark_ranges(grid, *idx)
        if extents is not None:
            extents.update(sums, *idx)
    return grid


def _as_domains(ensemble) -> list[FlexDomain]:
    items = getattr(ensemble, "ders", ensemble)
    return [d if isinstance(d, FlexDomain) else domain_of(d) for d in items]


def aggregate(ensemble, cfg: TightnessConfig, keep_history: bool = False,
              refine: bool | None = None) -> AggregateResult:
    """Superset of the Minkowski sum of all domains in ``ensemble``.

    ``ensemble`` is an object with a ``ders`` sequence, or a sequence of
    DER specs / :class:`FlexDomain` objects, folded in the given order.
    """
    if refine is None:
        refine = cfg.grid_mode is GridMode.FIXED_FINAL
    domains = _as_domains(ensemble)
    if not domains:
        raise ValueError("cannot aggregate an empty ensemble")
    t_start = time.perf_counter()
    bounds = [bounds_of(d) for d in domains]
    total = Bounds.total(bounds)
    eps_p, eps_q = effective_eps(total, cfg)
    widths = discretization_widths(bounds, eps_p, eps_q)
    final = make_grid(total, total, cfg)
    budget = final.dim_p * final.dim_q

    def blocks_of(i):
        return coalesce(discretize(domains[i], *widths[i], stack=False))

    acc = blocks_of(0)
    partial = bounds[0]
    exact = True
    grid = None
    stats = [StepStat(0, len(acc), None, None, False, None, time.perf_counter() - t_start)]
    history = [acc] if keep_history else []
    for t in range(1, len(domains)):
        nxt = blocks_of(t)
        partial = partial + bounds[t]
        limit = budget
        if t < len(domains) - 1:
            # an exact intermediate union larger than a row-run grid makes the
            # next fold dearer than pixelizing now
            limit = min(budget, _grid_shape(partial, total, cfg)[3])
        if len(acc) * len(nxt) <= limit:
            acc = msum_rect_unions(acc, nxt)
            exact = True
            stats.append(StepStat(t, len(acc), None, None, False, None,
                                  time.perf_counter() - t_start))
        else:
            grid = make_grid(partial, total, cfg)
            extents = SumExtents.empty(grid) if refine else None
            pixelized_sum(acc, nxt, grid, extents)
            # pixels may poke past the summed bounds; no point of the sum lies there
            acc = grid_to_rect_union(grid, (partial.p_inf, partial.p_sup,
                                            partial.q_inf, partial.q_sup), extents)
            exact = False
            stats.append(StepStat(t, len(acc), grid.eps_p, grid.eps_q, True, grid.count,
                                  time.perf_counter() - t_start))
        if keep_history:
            history.append(acc)

    clip = (total.p_inf, total.p_sup, total.q_inf, total.q_sup)
    if exact or grid is None:
        grid = final
        mark_ranges(grid, *rasterize_blocks(acc.blocks, grid))
    return AggregateResult(grid=grid, blocks=acc, per_step_stats=stats, exact=exact,
                           bounds=total, clip=clip, history=history)

"""Timing sweeps over ensemble size and tightness, and log-log scaling fits."""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .aggregator import GridMode, TightnessConfig, aggregate
from .ders import BoxDer
from .geometry import guarded_ceil
from .scenario import EnsembleSpec, replicate

__all__ = [
    "CSV_COLUMNS",
    "DEFAULT_CAPS_P",
    "DEFAULT_CAP_Q",
    "BenchRecord",
    "ScalingFit",
    "sweep",
    "fit_scaling",
    "pixel_count_law_check",
    "write_csv",
    "read_csv",
    "synthetic_records",
    "scaled_cap",
]

CSV_COLUMNS = ("n", "eps", "cap_p", "cap_q", "wall_time_s", "peak_blocks", "occupied_pixels", "seed")
DEFAULT_CAPS_P = (600, 4000)
DEFAULT_CAP_Q = 200


@dataclass(frozen=True)
class BenchRecord:
    n: int
    eps: float
    cap_p: int | None
    cap_q: int | None
    wall_time: float
    peak_blocks: int
    occupied_pixels: int
    repeats: int
    seed: int | None
    times: tuple = field(default=(), compare=False)

    def row(self) -> list:
        def opt(v):
            return "" if v is None else v
        return [self.n, repr(float(self.eps)), opt(self.cap_p), opt(self.cap_q),
                f"{self.wall_time:.6g}", self.peak_blocks, self.occupied_pixels, opt(self.seed)]


@dataclass(frozen=True)
class ScalingFit:
    axis: str
    slope: float
    r2: float
    points: int = 0

    def as_dict(self) -> dict:
        return {"axis": self.axis, "slope": self.slope, "r2": self.r2, "points": self.points}


def _ensemble_for(base: EnsembleSpec, n: int, rng: np.random.Generator | None) -> EnsembleSpec:
    if n % len(base):
        raise ValueError(f"n={n} is not a multiple of the base size {len(base)}")
    ens = replicate(base, n // len(base))
    if rng is not None:
        order = rng.permutation(len(ens))
        ens = EnsembleSpec(tuple(ens.ders[i] for i in order), ens.seed, ens.provenance, ens.meta)
    return ens


def _run_cell(args) -> BenchRecord:
    ens, n, eps, cap_p, cap_q, repeats, grid_mode, seed = args
    cfg = TightnessConfig(eps, cap_p, cap_q, grid_mode)
    result = aggregate(ens, cfg)  # warm-up, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = aggregate(ens, cfg)
        times.append(time.perf_counter() - t0)
    return BenchRecord(n, eps, cap_p, cap_q, statistics.median(times), result.peak_blocks,
                       result.grid.count, repeats, seed, tuple(times))


def sweep(base: EnsembleSpec, n_values: Iterable[int], eps_values: Iterable[float],
          caps: Sequence[tuple[int | None, int | None]] = ((None, None),), repeats: int = 3,
          seed: int | None = None, grid_mode: GridMode | str = GridMode.PER_STEP,
          shuffle: bool = False, workers: int = 1) -> list[BenchRecord]:
    """Time :func:`aggregate` on replicated ensembles, one record per (caps, n, eps).

    ``n`` must be a multiple of ``len(base)``.  Each cell runs once untimed,
    then ``repeats`` timed runs whose median is recorded.  ``shuffle`` folds
    the DERs in a seeded random order.  ``workers > 1`` runs cells in
    separate processes; timings then compete for cores.
    """
    if repeats < 3:
        raise ValueError("need at least 3 timed repeats")
    n_values, eps_values = list(n_values), list(eps_values)
    if not n_values or not eps_values or not caps:
        raise ValueError("empty sweep")
    rng = np.random.default_rng(seed) if shuffle else None
    cells = []
    for cap_p, cap_q in caps:
        for n in n_values:
            ens = _ensemble_for(base, n, rng)
            for eps in eps_values:
                cells.append((ens, n, float(eps), cap_p, cap_q, repeats, GridMode(grid_mode), seed))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def fit_scaling(records: Sequence[BenchRecord], axis: str, min_points: int = 4) -> ScalingFit:
    """Least-squares slope of log(wall time) against log(n) or log(1/eps).

    All records must share the other sweep coordinates.
    """
    if axis not in ("n", "inv_eps"):
        raise ValueError(f"axis must be 'n' or 'inv_eps', got {axis!r}")
    if len(records) < min_points:
        raise ValueError(f"need at least {min_points} records, got {len(records)}")
    fixed = (lambda r: (r.eps, r.cap_p, r.cap_q)) if axis == "n" else (lambda r: (r.n, r.cap_p, r.cap_q))
    if len({fixed(r) for r in records}) > 1:
        raise ValueError("records vary along more than the fitted axis")
    x = np.array([r.n if axis == "n" else 1.0 / r.eps for r in records], dtype=float)
    y = np.array([r.wall_time for r in records], dtype=float)
    if np.any(y <= 0):
        raise ValueError("wall times must be positive for a log-log fit")
    lx, ly = np.log(x), np.log(y)
    slope, icept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(axis, float(slope), r2, len(records))


def synthetic_records(axis: str, exponent: float, values: Sequence[float], c: float = 1e-3):
    """Records with ``wall_time = c * x**exponent`` along one axis, for self-tests."""
    out = []
    for v in values:
        if axis == "n":
            out.append(BenchRecord(int(v), 0.1, None, None, c * v ** exponent, 0, 0, 3, None))
        else:
            out.append(BenchRecord(10, 1.0 / v, None, None, c * v ** exponent, 0, 0, 3, None))
    return out


@dataclass(frozen=True)
class PixelLawRow:
    n: int
    step: int
    eps_p: float
    eps_q: float
    predicted: int
    measured: int

    @property
    def ok(self) -> bool:
        return self.predicted == self.measured


@dataclass
class PixelLawReport:
    rows: list[PixelLawRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "rows": [r.__dict__ | {"ok": r.ok} for r in self.rows]}


def _square_count(side: float, eps_p: float, eps_q: float) -> int:
    return max(1, int(guarded_ceil(side / eps_p))) * max(1, int(guarded_ceil(side / eps_q)))


def pixel_count_law_check(n_values: Iterable[int], delta: float, eps: float) -> PixelLawReport:
    """Occupied pixels for sums of ``n`` identical ``delta``-squares against the closed form.

    For each ``n`` the ensemble of ``n`` squares is aggregated; the final
    grid and every pixelized intermediate step (partial sum of ``t + 1``
    squares at that step's pixel size) are compared with
    ``ceil((t+1) delta / eps_p) * ceil((t+1) delta / eps_q)``.
    """
    rows = []
    for n in n_values:
        squares = [BoxDer(0.0, delta, 0.0, delta)] * n
        res = aggregate(squares, TightnessConfig(eps))
        for st in res.per_step_stats:
            if st.pixelized and st.step < n - 1:
                side = (st.step + 1) * delta
                rows.append(PixelLawRow(n, st.step, st.eps_p, st.eps_q,
                                        _square_count(side, st.eps_p, st.eps_q), st.occupied))
        g = res.grid
        rows.append(PixelLawRow(n, n - 1, g.eps_p, g.eps_q,
                                _square_count(n * delta, g.eps_p, g.eps_q), g.count))
    return PixelLawReport(rows)


def write_csv(records: Iterable[BenchRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_csv(path) -> list[BenchRecord]:
    def opt_int(s):
        return None if s == "" else int(s)
    with open(path, newline="") as fh:
        return [BenchRecord(int(r["n"]), float(r["eps"]), opt_int(r["cap_p"]), opt_int(r["cap_q"]),
                            float(r["wall_time_s"]), int(r["peak_blocks"]), int(r["occupied_pixels"]),
                            3, opt_int(r["seed"]))
                for r in csv.DictReader(fh)]


def scaled_cap(cap: int | None, scale: float) -> int | None:
    """Cap multiplied by ``scale`` (for slower machines), never below 1."""
    return None if cap is None else max(1, int(math.floor(cap * scale)))

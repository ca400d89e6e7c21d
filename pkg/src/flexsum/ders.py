"""Flexibility-domain models for individual DERs and their initial discretization.

A domain is a union of pieces; each piece is a p-interval with lower and
upper reactive-power bound functions.  Units are kW / kVAr / kVA; positive
values are consumption, negative values generation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .geometry import RectUnion, guarded_ceil

__all__ = [
    "ParameterError",
    "FlexPiece",
    "FlexDomain",
    "Bounds",
    "Battery",
    "WindInverter",
    "PvInverter",
    "SwitchingLoad",
    "BoxDer",
    "DerSpec",
    "DER_TYPES",
    "der_from_dict",
    "der_to_dict",
    "domain_of",
    "bounds_of",
    "discretize",
]


class ParameterError(ValueError):
    """DER parameters violate the model's admissibility conditions."""


def _const(value: float) -> Callable:
    return lambda p: np.full(np.shape(p), value, dtype=float)


def _sqrt_cap(s: float, alpha: float = 1.0) -> Callable:
    # max(., 0) absorbs float noise at the ends of the p range
    return lambda p: np.sqrt(np.maximum(s * s - alpha * np.square(p), 0.0))


def _nearest_zero(a, b):
    """Point of each ``[a, b]`` closest to p = 0."""
    return np.where((a <= 0) & (b >= 0), 0.0, np.minimum(np.abs(a), np.abs(b)))


@dataclass(frozen=True)
class FlexPiece:
    """One piece ``{(p, q) : p in [p_lo, p_hi], q_lower(p) <= q <= q_upper(p)}``.

    ``q_enclosure(a, b)`` takes arrays of sub-interval ends and returns
    ``(lo, hi)`` arrays that contain every admissible q over ``[a, b]``.
    """

    p_lo: float
    p_hi: float
    q_lower: Callable
    q_upper: Callable
    q_enclosure: Callable

    @property
    def is_point(self) -> bool:
        if self.p_lo != self.p_hi:
            return False
        lo, hi = self.q_enclosure(np.array([self.p_lo]), np.array([self.p_hi]))
        return lo[0] == hi[0]

    def contains(self, p, q, tol: float = 1e-12) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        in_p = (p >= self.p_lo - tol) & (p <= self.p_hi + tol)
        pc = np.clip(p, self.p_lo, self.p_hi)
        return in_p & (q >= self.q_lower(pc) - tol) & (q <= self.q_upper(pc) + tol)


def box_piece(p_lo, p_hi, q_lo, q_hi) -> FlexPiece:
    return FlexPiece(
        float(p_lo), float(p_hi), _const(q_lo), _const(q_hi),
        lambda a, b: (np.full(np.shape(a), float(q_lo)), np.full(np.shape(a), float(q_hi))),
    )


def disk_piece(p_lo, p_hi, s, alpha=1.0, upper=True, lower=True) -> FlexPiece:
    """Piece bounded by ``|q| <= sqrt(s^2 - alpha p^2)`` on the chosen side(s) of q = 0."""
    cap = _sqrt_cap(s, alpha)
    zero = _const(0.0)
    q_upper = cap if upper else zero
    q_lower = (lambda p: -cap(p)) if lower else zero

    def enclosure(a, b):
        # |q| bound is largest where |p| is smallest
        m = cap(_nearest_zero(np.asarray(a, float), np.asarray(b, float)))
        return (-m if lower else np.zeros_like(m)), (m if upper else np.zeros_like(m))

    return FlexPiece(float(p_lo), float(p_hi), q_lower, q_upper, enclosure)


@dataclass(frozen=True)
class FlexDomain:
    pieces: tuple[FlexPiece, ...]

    def __post_init__(self):
        if len(self.pieces) == 0:
            raise ValueError("a flexibility domain needs at least one piece")
        object.__setattr__(self, "pieces", tuple(self.pieces))

    def contains(self, p, q, tol: float = 1e-12) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        hit = np.zeros(np.shape(p), dtype=bool)
        for piece in self.pieces:
            hit |= piece.contains(p, q, tol)
        return hit

    @property
    def is_discrete(self) -> bool:
        return all(piece.is_point for piece in self.pieces)


@dataclass(frozen=True)
class Bounds:
    p_inf: float
    p_sup: float
    q_inf: float
    q_sup: float

    def __post_init__(self):
        if self.p_inf > self.p_sup or self.q_inf > self.q_sup:
            raise ValueError(f"inverted bounds {self}")

    @property
    def dp(self) -> float:
        return self.p_sup - self.p_inf

    @property
    def dq(self) -> float:
        return self.q_sup - self.q_inf

    def __add__(self, other: "Bounds") -> "Bounds":
        return Bounds(self.p_inf + other.p_inf, self.p_sup + other.p_sup,
                      self.q_inf + other.q_inf, self.q_sup + other.q_sup)

    @classmethod
    def total(cls, items) -> "Bounds":
        items = list(items)
        return cls(sum(b.p_inf for b in items), sum(b.p_sup for b in items),
                   sum(b.q_inf for b in items), sum(b.q_sup for b in items))


# -- DER specifications --------------------------------------------------------

def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be a positive number, got {value!r}")


def _nonneg(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
        raise ParameterError(f"{name} must be a non-negative number, got {value!r}")


@dataclass(frozen=True)
class Battery:
    """Four-quadrant storage: ``p in [-p_max, p_max]``, ``|q| <= sqrt(s^2 - p^2)``.

    ``s == p_max`` gives a full disk and is accepted.
    """

    p_max: float
    s: float
    label: str = field(default="", compare=False)

    kind = "battery"

    def __post_init__(self):
        _positive("p_max", self.p_max)
        _positive("s", self.s)
        if self.s < self.p_max:
            raise ParameterError(f"battery rating s={self.s} below p_max={self.p_max}")


@dataclass(frozen=True)
class WindInverter:
    p_max: float
    s1: float
    s2: float
    alpha: float = 1.0
    p0: float = 0.0
    q0: float = 0.0
    label: str = field(default="", compare=False)

    kind = "wind"

    def __post_init__(self):
        for name in ("p_max", "s1", "s2", "alpha"):
            _positive(name, getattr(self, name))
        _nonneg("p0", self.p0)
        _nonneg("q0", self.q0)
        limit = math.sqrt(self.alpha) * self.p_max
        if not (self.s1 > limit and self.s2 > limit):
            raise ParameterError("wind ratings need s1, s2 > sqrt(alpha) * p_max")
        if self.p0 >= self.p_max or self.q0 >= min(self.s1, self.s2):
            raise ParameterError("p0, q0 must be small compared with the ratings")


@dataclass(frozen=True)
class PvInverter:
    """Generation-only half disk: ``p in [-p_max, 0]``, ``|q| <= sqrt(s^2 - p^2)``."""

    p_max: float
    s: float
    label: str = field(default="", compare=False)

    kind = "pv"

    def __post_init__(self):
        _positive("p_max", self.p_max)
        _positive("s", self.s)
        if self.s < self.p_max:
            raise ParameterError(f"PV rating s={self.s} below p_max={self.p_max}")


@dataclass(frozen=True)
class SwitchingLoad:
    """On/off load (air-conditioner, water heater): ``{(0, 0), (p_on, gamma p_on)}``."""

    p_on: float
    gamma: float
    label: str = field(default="", compare=False)

    kind = "switching"

    def __post_init__(self):
        _positive("p_on", self.p_on)
        _positive("gamma", self.gamma)


@dataclass(frozen=True)
class BoxDer:
    """Rectangular domain; the uniform-ensemble building block."""

    p_lo: float
    p_hi: float
    q_lo: float
    q_hi: float
    label: str = field(default="", compare=False)

    kind = "box"

    def __post_init__(self):
        for name in ("p_lo", "p_hi", "q_lo", "q_hi"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ParameterError(f"{name} must be a finite number")
        if self.p_lo > self.p_hi or self.q_lo > self.q_hi:
            raise ParameterError("box with inverted bounds")


DerSpec = Battery | WindInverter | PvInverter | SwitchingLoad | BoxDer
DER_TYPES = {cls.kind: cls for cls in (Battery, WindInverter, PvInverter, SwitchingLoad, BoxDer)}


def der_to_dict(spec: DerSpec) -> dict:
    data = {"type": spec.kind}
    data.update(asdict(spec))
    if not data.get("label"):
        data.pop("label", None)
    return data


def der_from_dict(data: dict) -> DerSpec:
    data = dict(data)
    kind = data.pop("type", None)
    if kind not in DER_TYPES:
        raise KeyError(f"unknown DER type {kind!r}")
    cls = DER_TYPES[kind]
    try:
        return cls(**data)
    except TypeError as exc:
        raise KeyError(f"bad fields for {kind}: {exc}") from None


def domain_of(spec: DerSpec) -> FlexDomain:
    """Piecewise flexibility domain of a DER."""
    if isinstance(spec, Battery):
        return FlexDomain((disk_piece(-spec.p_max, spec.p_max, spec.s),))
    if isinstance(spec, PvInverter):
        return FlexDomain((disk_piece(-spec.p_max, 0.0, spec.s),))
    if isinstance(spec, WindInverter):
        # the open end at -p0 is closed; that adds a null set
        return FlexDomain((
            box_piece(-spec.p0, 0.0, -spec.q0, spec.q0),
            disk_piece(-spec.p_max, -spec.p0, spec.s2, spec.alpha, upper=True, lower=False),
            disk_piece(-spec.p_max, -spec.p0, spec.s1, spec.alpha, upper=False, lower=True),
        ))
    if isinstance(spec, SwitchingLoad):
        return FlexDomain((
            box_piece(0.0, 0.0, 0.0, 0.0),
            box_piece(spec.p_on, spec.p_on, spec.gamma * spec.p_on, spec.gamma * spec.p_on),
        ))
    if isinstance(spec, BoxDer):
        return FlexDomain((box_piece(spec.p_lo, spec.p_hi, spec.q_lo, spec.q_hi),))
    raise TypeError(f"not a DER specification: {spec!r}")


def bounds_of(domain: FlexDomain | DerSpec) -> Bounds:
    """Exact p/q infimum and supremum of a domain."""
    if not isinstance(domain, FlexDomain):
        domain = domain_of(domain)
    p_lo = np.array([pc.p_lo for pc in domain.pieces])
    p_hi = np.array([pc.p_hi for pc in domain.pieces])
    q_lo, q_hi = [], []
    for pc in domain.pieces:
        lo, hi = pc.q_enclosure(np.array([pc.p_lo]), np.array([pc.p_hi]))
        q_lo.append(lo[0])
        q_hi.append(hi[0])
    return Bounds(float(p_lo.min()), float(p_hi.max()), float(min(q_lo)), float(max(q_hi)))


def _count(extent: float, width: float, axis: str) -> int:
    if extent == 0:
        return 1
    if width <= 0:
        raise ValueError(f"{axis}-width must be positive for a domain with {axis}-extent")
    return max(1, int(guarded_ceil(extent / width)))


def discretize(domain: FlexDomain | DerSpec, w_p: float, w_q: float,
               stack: bool = True) -> RectUnion:
    """Cover a domain with rectangles no wider than ``w_p`` by ``w_q``.

    Each piece is cut into equal-width p-columns; a column is enclosed by
    the q-range of the piece over that column and then cut into equal
    stacked rects of height at most ``w_q``.  Point pieces are returned
    as-is.  With ``stack=False`` the q-cut is skipped (one rect per column,
    same point set).

    A zero width is accepted only on an axis where the domain has no extent.
    """
    if not isinstance(domain, FlexDomain):
        domain = domain_of(domain)
    if w_p < 0 or w_q < 0:
        raise ValueError("discretization widths must be non-negative")
    out = []
    for pc in domain.pieces:
        n_cols = _count(pc.p_hi - pc.p_lo, w_p, "p")
        edges = np.linspace(pc.p_lo, pc.p_hi, n_cols + 1)
        a, b = edges[:-1], edges[1:]
        lo, hi = pc.q_enclosure(a, b)
        if not stack:
            out.append(np.column_stack((a, b, lo, hi)))
            continue
        heights = hi - lo
        if np.any(heights > 0) and w_q <= 0:
            raise ValueError("q-width must be positive for a domain with q-extent")
        n_st = np.ones(n_cols, dtype=np.int64)
        if w_q > 0:
            n_st = np.maximum(1, guarded_ceil(heights / w_q))
        col = np.repeat(np.arange(n_cols), n_st)
        pos = np.arange(col.size) - np.repeat(np.cumsum(n_st) - n_st, n_st)
        step = heights[col] / n_st[col]
        q0 = lo[col] + pos * step
        q1 = np.where(pos == n_st[col] - 1, hi[col], lo[col] + (pos + 1) * step)
        out.append(np.column_stack((a[col], b[col], q0, q1)))
    return RectUnion(np.vstack(out))

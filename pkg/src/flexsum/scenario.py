"""Seeded DER ensembles: the eight adoption scenarios and replicated populations.

Scenario percentages are adoption rates for five DER categories.  An
ensemble draws each slot's category independently with probabilities
proportional to those rates, then draws device parameters uniformly from
:class:`ParamRanges`.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .ders import Battery, BoxDer, DerSpec, PvInverter, SwitchingLoad, WindInverter, der_from_dict, der_to_dict

__all__ = [
    "CATEGORIES",
    "TOTAL_CAPACITY_GW",
    "ScenarioSpec",
    "ParamRanges",
    "EnsembleSpec",
    "builtin_scenarios",
    "scenario_by_id",
    "category_of",
    "type_frequencies",
    "generate_ensemble",
    "replicate",
    "base_ensemble",
    "small_continuous_ensemble",
]

CATEGORIES = ("hvac", "solar", "wind", "ewh", "bev")

#: Installed capacity behind the scenario table, GW.  Kept for reference only.
TOTAL_CAPACITY_GW = 1074.64


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    income: str
    climate: str
    incentive: str
    pct_hvac: float
    pct_solar: float
    pct_wind: float
    pct_ewh: float
    pct_bev: float

    def __post_init__(self):
        for cat in CATEGORIES:
            v = getattr(self, f"pct_{cat}")
            if not 0 <= v <= 100:
                raise ValueError(f"pct_{cat}={v} outside [0, 100]")

    @property
    def percentages(self) -> np.ndarray:
        return np.array([getattr(self, f"pct_{c}") for c in CATEGORIES], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """Percentages normalised into a categorical distribution over :data:`CATEGORIES`."""
        pct = self.percentages
        if pct.sum() <= 0:
            raise ValueError(f"scenario {self.id} has no DER adoption at all")
        return pct / pct.sum()

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        return cls(**data)


_TABLE = [
    # id, income, climate, incentive, hvac, solar, wind, ewh, bev
    (1, "low", "mild", "low", 78.9, 9.6, 15.3, 41.4, 30.6),
    (2, "low", "mild", "high", 78.9, 48.1, 16.0, 41.4, 47.4),
    (3, "low", "extreme", "low", 89.8, 8.5, 12.6, 55.4, 30.6),
    (4, "low", "extreme", "high", 89.8, 45.8, 13.2, 55.4, 47.4),
    (5, "high", "mild", "low", 81.7, 9.6, 15.3, 36.2, 36.2),
    (6, "high", "mild", "high", 81.7, 48.1, 16.0, 36.2, 51.5),
    (7, "high", "extreme", "low", 92.6, 8.5, 12.6, 50.2, 36.2),
    (8, "high", "extreme", "high", 92.6, 45.8, 13.2, 50.2, 51.5),
]


def builtin_scenarios() -> list[ScenarioSpec]:
    return [ScenarioSpec(*row) for row in _TABLE]


def scenario_by_id(sid: int) -> ScenarioSpec:
    for sc in builtin_scenarios():
        if sc.id == sid:
            return sc
    raise KeyError(f"no built-in scenario {sid}; ids run 1..{len(_TABLE)}")


@dataclass(frozen=True)
class ParamRanges:
    """Uniform ranges for device parameters (kW, dimensionless ratios)."""

    hvac_p_on: tuple[float, float] = (2.0, 6.0)
    hvac_gamma: tuple[float, float] = (0.2, 0.5)
    ewh_p_on: tuple[float, float] = (3.0, 5.0)
    ewh_gamma: tuple[float, float] = (0.05, 0.2)
    bev_p_max: tuple[float, float] = (3.0, 10.0)
    bev_s_ratio: float = 1.1
    pv_p_max: tuple[float, float] = (2.0, 8.0)
    pv_s_ratio: float = 1.1
    wind_p_max: tuple[float, float] = (2.0, 8.0)
    wind_s_ratio: float = 1.2
    wind_alpha: float = 1.0
    wind_idle_ratio: float = 0.05

    def draw(self, category: str, rng: np.random.Generator) -> DerSpec:
        u = lambda lohi: float(rng.uniform(*lohi))  # noqa: E731
        if category == "hvac":
            return SwitchingLoad(u(self.hvac_p_on), u(self.hvac_gamma), label="hvac")
        if category == "ewh":
            return SwitchingLoad(u(self.ewh_p_on), u(self.ewh_gamma), label="ewh")
        if category == "bev":
            p = u(self.bev_p_max)
            return Battery(p, self.bev_s_ratio * p, label="bev")
        if category == "solar":
            p = u(self.pv_p_max)
            return PvInverter(p, self.pv_s_ratio * p, label="solar")
        if category == "wind":
            p = u(self.wind_p_max)
            s = self.wind_s_ratio * p
            idle = self.wind_idle_ratio * p
            return WindInverter(p, s, s, self.wind_alpha, idle, idle, label="wind")
        raise KeyError(f"unknown DER category {category!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    """An ordered DER population and where it came from."""

    ders: tuple
    seed: int | None = None
    provenance: str = "manual"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ders", tuple(self.ders))
        if not self.ders:
            raise ValueError("an ensemble needs at least one DER")

    def __len__(self) -> int:
        return len(self.ders)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "provenance": self.provenance,
               "ders": [der_to_dict(d) for d in self.ders]}
        if self.meta:
            out["meta"] = self.meta
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleSpec":
        return cls(tuple(der_from_dict(d) for d in data["ders"]), data.get("seed"),
                   data.get("provenance", "manual"), data.get("meta", {}))


def category_of(spec: DerSpec) -> str:
    """Scenario category of a DER, from its label or (failing that) its model."""
    if spec.label in CATEGORIES:
        return spec.label
    return {"battery": "bev", "pv": "solar", "wind": "wind", "switching": "hvac"}.get(spec.kind, spec.kind)


def type_frequencies(ensemble: EnsembleSpec) -> dict[str, float]:
    counts = Counter(category_of(d) for d in ensemble.ders)
    return {c: counts.get(c, 0) / len(ensemble) for c in CATEGORIES}


def generate_ensemble(scenario: ScenarioSpec, n: int, seed: int,
                      ranges: ParamRanges | None = None) -> EnsembleSpec:
    """``n`` DERs drawn slot by slot from the scenario's normalised mix."""
    if n < 1:
        raise ValueError("n must be at least 1")
    ranges = ranges or ParamRanges()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(CATEGORIES), size=n, p=scenario.weights)
    ders = tuple(ranges.draw(CATEGORIES[i], rng) for i in picks)
    return EnsembleSpec(ders, seed, f"scenario-{scenario.id}",
                        {"mix": "normalised adoption percentages"})


def replicate(base: EnsembleSpec, k: int) -> EnsembleSpec:
    if k < 1:
        raise ValueError("k must be at least 1")
    return EnsembleSpec(base.ders * k, base.seed, base.provenance,
                        dict(base.meta, replicas=k * base.meta.get("replicas", 1)))


_BASE_MIX: Sequence[tuple[str, int]] = (("hvac", 1), ("ewh", 2), ("bev", 2), ("wind", 2), ("solar", 3))


def base_ensemble(seed: int, ranges: ParamRanges | None = None) -> EnsembleSpec:
    """Ten-DER benchmark population: 1 AC, 2 water heaters, 2 batteries, 2 wind, 3 PV."""
    ranges = ranges or ParamRanges()
    rng = np.random.default_rng(seed)
    ders = tuple(ranges.draw(cat, rng) for cat, count in _BASE_MIX for _ in range(count))
    return EnsembleSpec(ders, seed, "base-10")


def small_continuous_ensemble(seed: int, n_min: int = 3, n_max: int = 4) -> EnsembleSpec:
    """A few kW-scale continuous DERs (battery, PV, wind or box) for oracle checks.

    Sizes are kept small so that a sampled ground truth stays cheap.
    """
    rng = np.random.default_rng(seed)
    ders = []
    for _ in range(int(rng.integers(n_min, n_max + 1))):
        kind = int(rng.integers(4))
        pm = float(rng.uniform(0.5, 2.5))
        if kind == 0:
            ders.append(Battery(pm, pm * float(rng.uniform(1.0, 1.3))))
        elif kind == 1:
            ders.append(PvInverter(pm, pm * float(rng.uniform(1.0, 1.3))))
        elif kind == 2:
            s = pm * float(rng.uniform(1.05, 1.4))
            ders.append(WindInverter(pm, s, s * float(rng.uniform(1.0, 1.1)), 1.0, 0.05 * pm, 0.05 * pm))
        else:
            a, b = rng.uniform(0.2, 2.0, 2)
            ders.append(BoxDer(float(-a), float(a * rng.uniform()), float(-b * rng.uniform()), float(b)))
    return EnsembleSpec(tuple(ders), seed, "small-continuous")

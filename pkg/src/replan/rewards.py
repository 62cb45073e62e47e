"""The four objective metrics, satisfaction aggregation and score composition.

All metrics are pure functions of a region snapshot and live in [0, 1];
the objective score is their unweighted sum and the total score adds the
stakeholder satisfaction fraction on top.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    FacilitySubtype,
    FuncType,
    PlotStatus,
    Region,
    region_stats,
)

# Category groupings used by the metrics. Subtypes are irrelevant here:
# any school counts as a school, any hospital as a hospital.
SERVICE_TYPES = (
    FuncType.BUSINESS,
    FuncType.OFFICE,
    FuncType.RECREATION,
    FuncType.HOSPITAL,
    FuncType.SCHOOL,
)
ECOLOGY_TYPES = (FuncType.PARK, FuncType.OPEN_SPACE)
ECONOMY_TYPES = (FuncType.BUSINESS, FuncType.OFFICE, FuncType.RECREATION)
EQUITY_TYPES = (FuncType.SCHOOL, FuncType.HOSPITAL)

COVERAGE_LEVELS = {"high": 0.15, "medium": 0.10, "low": 0.05}


class RewardError(ValueError):
    """Metric precondition violated (no residential plots, zero demand)."""


class SatLevel(Enum):
    """Discrete satisfaction levels with a uniform numeric map onto (0, 1]."""

    POOR = "poor"
    AVERAGE = "average"
    GOOD = "good"
    VERY_GOOD = "very good"

    @property
    def score(self) -> float:
        return _SAT_SCORES[self]

    @classmethod
    def from_text(cls, text: str) -> "SatLevel":
        low = text.strip().lower()
        for level in (cls.VERY_GOOD, cls.GOOD, cls.AVERAGE, cls.POOR):
            if level.value in low:
                return level
        raise ValueError(f"no satisfaction level found in {text!r}")


_SAT_SCORES = {
    SatLevel.POOR: 0.25,
    SatLevel.AVERAGE: 0.5,
    SatLevel.GOOD: 0.75,
    SatLevel.VERY_GOOD: 1.0,
}


@dataclass
class AspectRating:
    """One stakeholder's rating of one functional aspect, with its reason."""

    aspect: str
    level: SatLevel
    reason: str = ""


@dataclass
class StakeholderScore:
    profile: str
    ratings: List[AspectRating]

    @property
    def score(self) -> float:
        if not self.ratings:
            raise RewardError(f"stakeholder {self.profile} rated no aspects")
        return sum(r.level.score for r in self.ratings) / len(self.ratings)


@dataclass
class Demands:
    """Planning targets: coverage fractions and facility quotas."""

    coverage: Dict[FuncType, float]
    counts: Dict[FacilitySubtype, int]

    def __post_init__(self):
        for func, frac in self.coverage.items():
            if not 0 < frac <= 1:
                raise ValueError(f"coverage target for {func.label} must be in (0,1], got {frac}")
        for sub, n in self.counts.items():
            if n < 0:
                raise ValueError(f"facility count for {sub.label} must be >= 0, got {n}")

    def to_json(self) -> str:
        doc = {
            "coverage": {f.label: self.coverage[f] for f in sorted(self.coverage)},
            "counts": {s.label: self.counts[s] for s in FacilitySubtype if s in self.counts},
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Demands":
        doc = json.loads(text)
        coverage = {FuncType.from_label(k): float(v) for k, v in doc.get("coverage", {}).items()}
        counts = {FacilitySubtype(k): int(v) for k, v in doc.get("counts", {}).items()}
        return cls(coverage=coverage, counts=counts)


@dataclass
class SchemeSummary:
    """Everything a satisfaction rater needs to judge a completed scheme."""

    metrics: Dict[str, float]  # service/ecology/economy/equity
    coverage: Dict[FuncType, float]
    facility_tally: Dict[FacilitySubtype, int]
    demands: Demands


@dataclass
class SchemeReport:
    service: float
    ecology: float
    economy: float
    equity: float
    satisfaction: float
    obj_score: float
    total: float
    stakeholders: List[StakeholderScore] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "service": self.service,
            "ecology": self.ecology,
            "economy": self.economy,
            "equity": self.equity,
            "obj_score": self.obj_score,
            "satisfaction": self.satisfaction,
            "total": self.total,
            "stakeholders": [
                {
                    "profile": s.profile,
                    "score": s.score,
                    "ratings": [
                        {"aspect": r.aspect, "level": r.level.value, "reason": r.reason}
                        for r in s.ratings
                    ],
                }
                for s in self.stakeholders
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _built_indices(region: Region, func: FuncType) -> np.ndarray:
    return region.indices_of(func)


def _nearest_distances(region: Region, from_idx: np.ndarray, to_idx: np.ndarray) -> np.ndarray:
    """Min centroid distance from each `from` plot to the `to` set."""
    return region._dist[np.ix_(from_idx, to_idx)].min(axis=1)


def service_reward(region: Region) -> float:
    """Share of (residential plot, service category) pairs served within the circle.

    A category with no built instance counts as unserved for every
    residential plot.
    """
    rs = _built_indices(region, FuncType.RESIDENTIAL)
    if len(rs) == 0:
        raise RewardError("service reward undefined without residential plots")
    d_c = region.config.living_circle_radius
    total = 0.0
    for func in SERVICE_TYPES:
        targets = _built_indices(region, func)
        if len(targets) == 0:
            continue
        dmin = _nearest_distances(region, rs, targets)
        total += float((dmin <= d_c).sum())
    return total / (len(rs) * len(SERVICE_TYPES))


def ecology_reward(region: Region, demands: Demands) -> float:
    """Mean capped coverage attainment for parks and open space."""
    stats = region_stats(region)
    acc = 0.0
    for func in ECOLOGY_TYPES:
        dem = demands.coverage.get(func, 0.0)
        if dem <= 0:
            raise RewardError(f"ecology demand for {func.label} must be > 0")
        acc += min(stats.ratios[func] / dem, 1.0)
    return acc / len(ECOLOGY_TYPES)


def economy_reward(region: Region, demands: Demands) -> float:
    """Capped coverage attainment of economic plots inside residential living circles.

    Only plots whose centroid falls inside the union of residential living
    circles count toward coverage. With no residential plots the union is
    empty and the reward degenerates to 0.
    """
    rs = _built_indices(region, FuncType.RESIDENTIAL)
    if len(rs) == 0:
        return 0.0
    d_c = region.config.living_circle_radius
    acc = 0.0
    for func in ECONOMY_TYPES:
        dem = demands.coverage.get(func, 0.0)
        if dem <= 0:
            raise RewardError(f"economy demand for {func.label} must be > 0")
        targets = _built_indices(region, func)
        if len(targets) > 0:
            inside = region._dist[np.ix_(targets, rs)].min(axis=1) <= d_c
            cov = float(region._areas[targets[inside]].sum()) / region.total_area
        else:
            cov = 0.0
        acc += min(cov / dem, 1.0)
    return acc / len(ECONOMY_TYPES)


def equity_reward(region: Region) -> float:
    """Exponentially scored access spread for schools and hospitals.

    For each category the spread is the worst minus the best residential
    nearest-facility distance; a missing category scores 0.
    """
    rs = _built_indices(region, FuncType.RESIDENTIAL)
    if len(rs) == 0:
        raise RewardError("equity reward undefined without residential plots")
    alpha = region.config.equity_scale
    acc = 0.0
    for func in EQUITY_TYPES:
        targets = _built_indices(region, func)
        if len(targets) == 0:
            continue
        dmin = _nearest_distances(region, rs, targets)
        spread = float(dmin.max() - dmin.min())
        acc += math.exp(alpha * spread)
    return acc / len(EQUITY_TYPES)


def satisfaction_score(stakeholders: Sequence[StakeholderScore]) -> float:
    """Mean of per-stakeholder mean rating scores."""
    if not stakeholders:
        raise RewardError("satisfaction needs at least one stakeholder")
    return sum(s.score for s in stakeholders) / len(stakeholders)


def objective_metrics(region: Region, demands: Demands) -> Dict[str, float]:
    return {
        "service": service_reward(region),
        "ecology": ecology_reward(region, demands),
        "economy": economy_reward(region, demands),
        "equity": equity_reward(region),
    }


def summarize_scheme(region: Region, demands: Demands) -> SchemeSummary:
    stats = region_stats(region)
    return SchemeSummary(
        metrics=objective_metrics(region, demands),
        coverage={f: float(stats.ratios[f]) for f in FuncType},
        facility_tally=region.facility_tally(),
        demands=demands,
    )


def compose_report(
    metrics: Dict[str, float],
    sat: float,
    stakeholders: Optional[List[StakeholderScore]] = None,
) -> SchemeReport:
    obj = metrics["service"] + metrics["ecology"] + metrics["economy"] + metrics["equity"]
    return SchemeReport(
        service=metrics["service"],
        ecology=metrics["ecology"],
        economy=metrics["economy"],
        equity=metrics["equity"],
        satisfaction=sat,
        obj_score=obj,
        total=obj + sat,
        stakeholders=stakeholders or [],
    )


def score_scheme(
    region: Region,
    demands: Demands,
    sat: float,
    stakeholders: Optional[List[StakeholderScore]] = None,
) -> SchemeReport:
    """Compose the four metrics and satisfaction into a SchemeReport."""
    return compose_report(objective_metrics(region, demands), sat, stakeholders)

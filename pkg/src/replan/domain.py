"""Functional-type taxonomy, the region/plot model and MDP mechanics.

A Region is the mutable environment state for one planning episode: an
ordered plot collection plus demographics text, planning demands and the
run configuration. Episodes clone the template region and assign a
functional type to each vacant plot in `vacant_order`.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import Point, Polygon, plot_attributes

N_FUNC = 8
FEATURE_DIM = 45  # 13 plot features + 16 living-circle + 16 region stats
STAT_DIM = 16  # 8 coverage ratios + 8 counts


class FuncType(IntEnum):
    """The 8 assignable land-use categories, in stable index order."""

    RESIDENTIAL = 0
    BUSINESS = 1
    OFFICE = 2
    RECREATION = 3
    SCHOOL = 4
    HOSPITAL = 5
    PARK = 6
    OPEN_SPACE = 7

    @property
    def label(self) -> str:
        return _FUNC_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "FuncType":
        try:
            return _FUNC_BY_LABEL[label]
        except KeyError:
            valid = ", ".join(t.label for t in cls)
            raise ValueError(f"unknown functional type {label!r}; valid: {valid}") from None


_FUNC_LABELS = {
    FuncType.RESIDENTIAL: "residential",
    FuncType.BUSINESS: "business",
    FuncType.OFFICE: "office",
    FuncType.RECREATION: "recreation",
    FuncType.SCHOOL: "school",
    FuncType.HOSPITAL: "hospital",
    FuncType.PARK: "park",
    FuncType.OPEN_SPACE: "open_space",
}
_FUNC_BY_LABEL = {v: k for k, v in _FUNC_LABELS.items()}


class FacilitySubtype(Enum):
    """Concrete facility built on a school/hospital plot."""

    KINDERGARTEN = "kindergarten"
    PRIMARY_SCHOOL = "primary_school"
    SECONDARY_SCHOOL = "secondary_school"
    CLINIC = "clinic"
    LARGE_HOSPITAL = "large_hospital"

    @property
    def label(self) -> str:
        return self.value

    @property
    def func(self) -> FuncType:
        if self in (FacilitySubtype.CLINIC, FacilitySubtype.LARGE_HOSPITAL):
            return FuncType.HOSPITAL
        return FuncType.SCHOOL


SCHOOL_SUBTYPES = (
    FacilitySubtype.KINDERGARTEN,
    FacilitySubtype.PRIMARY_SCHOOL,
    FacilitySubtype.SECONDARY_SCHOOL,
)
HOSPITAL_SUBTYPES = (FacilitySubtype.CLINIC, FacilitySubtype.LARGE_HOSPITAL)


class SizeClass(Enum):
    SMALL = "small"
    LARGE = "large"


class PlotStatus(Enum):
    FIXED = "fixed"
    VACANT = "vacant"
    PLANNED = "planned"


class RegionError(ValueError):
    """Contract violation on region/plot state."""


@dataclass
class PlanningConfig:
    """Run-level knobs shared by the environment, rewards and trainer."""

    living_circle_radius: float = 500.0  # meters, the 15-minute access disk
    equity_scale: float = -1.0 / 800.0  # 1/meters, exponent scale on distance spread
    enhance_strength: float = 2.0  # multiplier on advisor-recommended actions
    enhance_mode: str = "softmax"  # renormalization: "softmax" or "renormalize"
    gamma: float = 0.98
    clip_eps: float = 0.2
    learning_rate: float = 1e-5
    episodes: int = 5000
    large_plot_threshold: float = 10000.0  # m^2
    seed: int = 0

    def __post_init__(self):
        if self.living_circle_radius <= 0:
            raise ValueError("living_circle_radius must be > 0")
        if self.enhance_strength < 1:
            raise ValueError("enhance_strength must be >= 1")
        if self.enhance_mode not in ("softmax", "renormalize"):
            raise ValueError("enhance_mode must be softmax or renormalize")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must be in (0, 1)")


@dataclass
class Plot:
    """One polygonal land parcel with its derived geo-attributes."""

    id: str
    geometry: Polygon
    status: PlotStatus
    func: Optional[FuncType] = None
    subtype: Optional[FacilitySubtype] = None
    area: float = 0.0
    perimeter: float = 0.0
    centroid: Point = Point(0.0, 0.0)
    compactness: float = 0.0

    @classmethod
    def create(
        cls,
        plot_id: str,
        geometry: Polygon,
        status: PlotStatus,
        func: Optional[FuncType] = None,
        subtype: Optional[FacilitySubtype] = None,
    ) -> "Plot":
        area, perim, centroid, comp = plot_attributes(geometry)
        plot = cls(plot_id, geometry, status, func, subtype, area, perim, centroid, comp)
        plot.validate()
        return plot

    def validate(self):
        if self.status is PlotStatus.VACANT:
            if self.func is not None:
                raise RegionError(f"plot {self.id}: vacant plots carry no type")
        elif self.func is None:
            raise RegionError(f"plot {self.id}: {self.status.value} plots need a type")
        if self.subtype is not None and self.func not in (FuncType.SCHOOL, FuncType.HOSPITAL):
            raise RegionError(f"plot {self.id}: only school/hospital plots carry a subtype")


@dataclass
class LivingCircleStats:
    """Type mix among built plots whose centroid lies inside one living circle."""

    ratios: np.ndarray  # (8,) type-area share of in-circle built area
    counts: np.ndarray  # (8,) plots per type

    def vector(self) -> np.ndarray:
        return np.concatenate([self.ratios, self.counts.astype(float)])


@dataclass
class RegionStats:
    """Region-wide coverage ratios (over total area) and plot counts."""

    ratios: np.ndarray  # (8,)
    counts: np.ndarray  # (8,)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.ratios, self.counts.astype(float)])


def size_class(plot: Plot, threshold: float) -> SizeClass:
    """Large iff plot area reaches the threshold (inclusive)."""
    return SizeClass.LARGE if plot.area >= threshold else SizeClass.SMALL


class Region:
    """Ordered plot collection + demographics + demands: the MDP state.

    Heavy geometry-derived data (centroid distances, living-circle member
    lists) is computed once and shared between clones; per-episode mutable
    statistics are copied on clone.
    """

    def __init__(
        self,
        plots: List[Plot],
        config: PlanningConfig,
        demographics: str = "",
        style: str = "",
        demands=None,
        vacant_order: Optional[List[int]] = None,
    ):
        self.plots = plots
        self.config = config
        self.demographics = demographics
        self.style = style
        self.demands = demands

        if vacant_order is None:
            vacant_order = [i for i, p in enumerate(plots) if p.status is PlotStatus.VACANT]
        vacant = {i for i, p in enumerate(plots) if p.status is PlotStatus.VACANT}
        if sorted(vacant_order) != sorted(vacant):
            raise RegionError("vacant_order must list each vacant plot index exactly once")
        self.vacant_order = list(vacant_order)

        n = len(plots)
        self._centroids = np.array([[p.centroid.x, p.centroid.y] for p in plots])
        self._areas = np.array([p.area for p in plots])
        self.total_area = float(self._areas.sum())
        xs = [pt.x for p in plots for pt in p.geometry.ring]
        ys = [pt.y for p in plots for pt in p.geometry.ring]
        self.bbox = (min(xs), min(ys), max(xs), max(ys))

        diff = self._centroids[:, None, :] - self._centroids[None, :, :]
        self._dist = np.sqrt((diff**2).sum(axis=2))
        r = config.living_circle_radius
        self._lc_members = [np.flatnonzero(self._dist[i] <= r) for i in range(n)]

        self._type_area = np.zeros(N_FUNC)
        self._type_count = np.zeros(N_FUNC, dtype=np.int64)
        self._facility_tally: Dict[FacilitySubtype, int] = {s: 0 for s in FacilitySubtype}
        for p in plots:
            self._accumulate(p, 1)

    def _accumulate(self, plot: Plot, sign: int):
        if plot.status is PlotStatus.VACANT or plot.func is None:
            return
        self._type_area[plot.func] += sign * plot.area
        self._type_count[plot.func] += sign
        if plot.subtype is not None:
            self._facility_tally[plot.subtype] += sign

    def clone(self) -> "Region":
        dup = Region.__new__(Region)
        dup.plots = [replace(p) for p in self.plots]
        dup.config = self.config
        dup.demographics = self.demographics
        dup.style = self.style
        dup.demands = self.demands
        dup.vacant_order = list(self.vacant_order)
        dup._centroids = self._centroids
        dup._areas = self._areas
        dup.total_area = self.total_area
        dup.bbox = self.bbox
        dup._dist = self._dist
        dup._lc_members = self._lc_members
        dup._type_area = self._type_area.copy()
        dup._type_count = self._type_count.copy()
        dup._facility_tally = dict(self._facility_tally)
        return dup

    # -- queries ---------------------------------------------------------

    def indices_of(self, func: FuncType) -> np.ndarray:
        """Built (fixed or planned) plot indices of one functional type."""
        return np.array(
            [
                i
                for i, p in enumerate(self.plots)
                if p.status is not PlotStatus.VACANT and p.func is func
            ],
            dtype=np.int64,
        )

    def facility_tally(self) -> Dict[FacilitySubtype, int]:
        return dict(self._facility_tally)

    def remaining_vacant(self) -> List[int]:
        return [i for i in self.vacant_order if self.plots[i].status is PlotStatus.VACANT]

    def is_complete(self) -> bool:
        return all(self.plots[i].status is not PlotStatus.VACANT for i in self.vacant_order)


def region_stats(region: Region) -> RegionStats:
    """Coverage ratio (type area / total area) and plot count per type."""
    return RegionStats(
        ratios=region._type_area / region.total_area,
        counts=region._type_count.copy(),
    )


def living_circle_stats(region: Region, plot_idx: int) -> LivingCircleStats:
    """Type mix among built plots within the living circle of `plot_idx`.

    Ratios are relative to the summed area of the in-circle built plots
    themselves, so an isolated plot sees all zeros.
    """
    if not 0 <= plot_idx < len(region.plots):
        raise RegionError(f"plot index {plot_idx} out of range")
    ratios = np.zeros(N_FUNC)
    counts = np.zeros(N_FUNC, dtype=np.int64)
    member_area = 0.0
    for j in region._lc_members[plot_idx]:
        p = region.plots[j]
        if p.status is PlotStatus.VACANT:
            continue
        ratios[p.func] += p.area
        counts[p.func] += 1
        member_area += p.area
    if member_area > 0:
        ratios /= member_area
    return LivingCircleStats(ratios=ratios, counts=counts)


def _school_subtype_for_large(region: Region) -> FacilitySubtype:
    """Primary vs secondary on a large plot: larger remaining quota deficit wins."""
    demands = region.demands
    tally = region._facility_tally

    def deficit(sub: FacilitySubtype) -> int:
        quota = demands.counts.get(sub, 0) if demands is not None else 0
        return quota - tally[sub]

    if deficit(FacilitySubtype.SECONDARY_SCHOOL) > deficit(FacilitySubtype.PRIMARY_SCHOOL):
        return FacilitySubtype.SECONDARY_SCHOOL
    return FacilitySubtype.PRIMARY_SCHOOL


def allowed_actions(region: Region, plot_idx: int) -> Tuple[np.ndarray, Dict[FuncType, FacilitySubtype]]:
    """Action mask (all 8 types legal) and the subtype each facility action builds.

    Feasibility lives at the subtype level: small plots take kindergartens
    and clinics, large plots take primary/secondary schools and large
    hospitals.
    """
    plot = region.plots[plot_idx]
    if plot.status is not PlotStatus.VACANT:
        raise RegionError(f"plot {plot.id} is not vacant")
    mask = np.ones(N_FUNC, dtype=bool)
    if size_class(plot, region.config.large_plot_threshold) is SizeClass.SMALL:
        resolution = {
            FuncType.SCHOOL: FacilitySubtype.KINDERGARTEN,
            FuncType.HOSPITAL: FacilitySubtype.CLINIC,
        }
    else:
        resolution = {
            FuncType.SCHOOL: _school_subtype_for_large(region),
            FuncType.HOSPITAL: FacilitySubtype.LARGE_HOSPITAL,
        }
    return mask, resolution


def apply_action(region: Region, plot_idx: int, action: FuncType) -> Region:
    """Assign `action` to a vacant plot; deterministic in-place transition."""
    mask, resolution = allowed_actions(region, plot_idx)
    if not mask[action]:
        raise RegionError(f"action {action.label} not permitted on plot {region.plots[plot_idx].id}")
    plot = region.plots[plot_idx]
    plot.status = PlotStatus.PLANNED
    plot.func = action
    plot.subtype = resolution.get(action)
    region._accumulate(plot, 1)
    return region


def state_features(region: Region, plot_idx: int) -> np.ndarray:
    """45-dim feature vector: plot attributes, living-circle mix, region stats.

    Layout: one-hot current type (8, zeros while vacant), centroid x/y
    normalized to the region bounding box, area / total area, perimeter /
    bbox diagonal, compactness, then the 16 living-circle and 16 region
    statistics. Count entries are scaled by the plot count so every
    feature stays within the tanh layers' responsive range.
    """
    plot = region.plots[plot_idx]
    minx, miny, maxx, maxy = region.bbox
    width = maxx - minx or 1.0
    height = maxy - miny or 1.0
    diagonal = math.hypot(maxx - minx, maxy - miny) or 1.0
    n_plots = len(region.plots)

    g = np.zeros(13)
    if plot.status is not PlotStatus.VACANT and plot.func is not None:
        g[plot.func] = 1.0
    g[8] = (plot.centroid.x - minx) / width
    g[9] = (plot.centroid.y - miny) / height
    g[10] = plot.area / region.total_area
    g[11] = plot.perimeter / diagonal
    g[12] = plot.compactness

    c = living_circle_stats(region, plot_idx)
    e = region_stats(region)
    return np.concatenate([
        g,
        c.ratios, c.counts / n_plots,
        e.ratios, e.counts / n_plots,
    ])

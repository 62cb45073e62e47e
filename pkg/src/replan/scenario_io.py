"""Region file I/O, synthetic scenario generation and SVG rendering.

The region file is a JSON feature collection: one polygon feature per
plot with `id`, `status` ("fixed" or "vacant", plus "planned" in written
schemes) and a lowercase snake-case `type` for non-vacant plots.
Coordinates are planar meters; there is no CRS handling here.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .domain import (
    FacilitySubtype,
    FuncType,
    HOSPITAL_SUBTYPES,
    N_FUNC,
    PlanningConfig,
    Plot,
    PlotStatus,
    Region,
    SCHOOL_SUBTYPES,
    SizeClass,
    size_class,
)
from .geometry import GeometryError, Point, Polygon, is_simple
from .rewards import Demands


class RegionFileError(ValueError):
    """Region document rejected; message cites the offending feature/field."""


@dataclass
class ScenarioSpec:
    grid_rows: int = 4
    grid_cols: int = 4
    plot_size_min: float = 6400.0  # m^2
    plot_size_max: float = 16900.0
    vacant_fraction: float = 0.5
    residential_fraction: float = 0.5  # among fixed plots
    spacing: float = 1.8  # grid pitch as a multiple of the max plot side
    style: str = "a balanced residential community"
    demographics: str = "mixed-age residents with median income"
    seed: int = 0

    def __post_init__(self):
        for name in ("vacant_fraction", "residential_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.plot_size_min <= 0 or self.plot_size_max < self.plot_size_min:
            raise ValueError("invalid plot size range")
        if self.spacing < 1.0:
            raise ValueError("spacing must be >= 1 to keep plots disjoint")

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        doc = json.loads(text)
        grid = doc.pop("grid", None)
        if grid is not None:
            doc["grid_rows"], doc["grid_cols"] = int(grid[0]), int(grid[1])
        size_range = doc.pop("plot_size_range", None)
        if size_range is not None:
            doc["plot_size_min"], doc["plot_size_max"] = float(size_range[0]), float(size_range[1])
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown scenario spec fields: {sorted(unknown)}")
        return cls(**doc)


def _parse_ring(coords, feature_id: str) -> Polygon:
    try:
        pts = [Point(float(x), float(y)) for x, y in coords]
    except (TypeError, ValueError) as exc:
        raise RegionFileError(f"feature {feature_id!r}: bad coordinates: {exc}") from None
    try:
        poly = Polygon(pts)
    except GeometryError as exc:
        raise RegionFileError(f"feature {feature_id!r}: {exc}") from None
    if not is_simple(poly):
        raise RegionFileError(f"feature {feature_id!r}: self-intersecting ring")
    return poly


def parse_region_doc(
    doc: dict,
    config: Optional[PlanningConfig] = None,
    demands: Optional[Demands] = None,
    demographics: Optional[str] = None,
    style: Optional[str] = None,
    vacant_order: Optional[str] = None,
) -> Region:
    """Build a validated Region from a feature-collection document.

    `vacant_order` reorders the planning sequence: None keeps file order,
    "area-desc" plans big plots first, "shuffle:<seed>" permutes.
    """
    if doc.get("type") != "FeatureCollection":
        raise RegionFileError("document is not a FeatureCollection")
    props = doc.get("properties", {}) or {}
    config = config or PlanningConfig()

    plots: List[Plot] = []
    seen = set()
    for feature in doc.get("features", []):
        fprops = feature.get("properties", {}) or {}
        fid = fprops.get("id")
        if fid is None:
            raise RegionFileError("feature without an id")
        fid = str(fid)
        if fid in seen:
            raise RegionFileError(f"duplicate feature id {fid!r}")
        seen.add(fid)

        geom = feature.get("geometry", {}) or {}
        if geom.get("type") != "Polygon" or not geom.get("coordinates"):
            raise RegionFileError(f"feature {fid!r}: geometry must be a Polygon")
        poly = _parse_ring(geom["coordinates"][0], fid)

        status_word = fprops.get("status")
        try:
            status = PlotStatus(status_word)
        except ValueError:
            raise RegionFileError(
                f"feature {fid!r}: status must be fixed/vacant/planned, got {status_word!r}"
            ) from None

        func = None
        subtype = None
        if status is PlotStatus.VACANT:
            if "type" in fprops:
                raise RegionFileError(f"feature {fid!r}: vacant plots must omit 'type'")
        else:
            if "type" not in fprops:
                raise RegionFileError(f"feature {fid!r}: {status.value} plot missing 'type'")
            try:
                func = FuncType.from_label(fprops["type"])
            except ValueError as exc:
                raise RegionFileError(f"feature {fid!r}: {exc}") from None
            if "subtype" in fprops:
                try:
                    subtype = FacilitySubtype(fprops["subtype"])
                except ValueError:
                    valid = ", ".join(s.label for s in FacilitySubtype)
                    raise RegionFileError(
                        f"feature {fid!r}: unknown subtype {fprops['subtype']!r}; valid: {valid}"
                    ) from None
                if subtype.func is not func:
                    raise RegionFileError(
                        f"feature {fid!r}: subtype {subtype.label} does not match type {func.label}"
                    )
        try:
            plot = Plot.create(fid, poly, status, func, subtype)
        except (GeometryError, ValueError) as exc:
            raise RegionFileError(f"feature {fid!r}: {exc}") from None
        if plot.func in (FuncType.SCHOOL, FuncType.HOSPITAL) and plot.subtype is None:
            plot.subtype = _default_subtype(plot, config)
        plots.append(plot)

    if not plots:
        raise RegionFileError("region has no plots")

    region = Region(
        plots,
        config,
        demographics=demographics if demographics is not None else props.get("demographics", ""),
        style=style if style is not None else props.get("style", ""),
        demands=demands,
    )
    if vacant_order:
        region.vacant_order = _order_vacant(region, vacant_order)
    return region


def _default_subtype(plot: Plot, config: PlanningConfig) -> FacilitySubtype:
    small = size_class(plot, config.large_plot_threshold) is SizeClass.SMALL
    if plot.func is FuncType.SCHOOL:
        return SCHOOL_SUBTYPES[0] if small else FacilitySubtype.PRIMARY_SCHOOL
    return HOSPITAL_SUBTYPES[0] if small else FacilitySubtype.LARGE_HOSPITAL


def _order_vacant(region: Region, order: str) -> List[int]:
    vacant = [i for i in region.vacant_order]
    if order == "file":
        return vacant
    if order == "area-desc":
        return sorted(vacant, key=lambda i: (-region.plots[i].area, i))
    if order.startswith("shuffle:"):
        seed = int(order.split(":", 1)[1])
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(vacant))
        return [vacant[j] for j in perm]
    raise RegionFileError(f"unknown vacant order {order!r}; use file, area-desc or shuffle:<seed>")


def parse_region(path, **kwargs) -> Region:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegionFileError(f"{path}: not valid JSON: {exc}") from None
    return parse_region_doc(doc, **kwargs)


def region_to_doc(region: Region) -> dict:
    features = []
    for plot in region.plots:
        props: Dict[str, object] = {"id": plot.id, "status": plot.status.value}
        if plot.func is not None:
            props["type"] = plot.func.label
        if plot.subtype is not None:
            props["subtype"] = plot.subtype.label
        ring = [[pt.x, pt.y] for pt in plot.geometry.ring]
        ring.append(ring[0])  # close the ring, GeoJSON style
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    doc: Dict[str, object] = {"type": "FeatureCollection"}
    props: Dict[str, object] = {}
    if region.style:
        props["style"] = region.style
    if region.demographics:
        props["demographics"] = region.demographics
    if props:
        doc["properties"] = props
    doc["features"] = features
    return doc


def write_region(region: Region, path) -> None:
    Path(path).write_text(json.dumps(region_to_doc(region), indent=1) + "\n", encoding="utf-8")


def gen_scenario(spec: ScenarioSpec, rng: Optional[np.random.Generator] = None) -> dict:
    """Jittered-grid synthetic scenario, deterministic per spec seed.

    Fixed plots are residential by `residential_fraction` (at least one,
    so service and equity stay well-defined) and uniformly one of the
    other 7 types otherwise. Vacant plots are spread over the grid by a
    seeded draw.
    """
    rng = rng or np.random.default_rng(spec.seed)
    n = spec.grid_rows * spec.grid_cols
    pitch = math.sqrt(spec.plot_size_max) * spec.spacing
    n_vacant = int(round(n * spec.vacant_fraction))
    vacant_set = set(rng.choice(n, size=n_vacant, replace=False).tolist())

    n_fixed = n - n_vacant
    n_res = max(1, int(round(n_fixed * spec.residential_fraction))) if n_fixed else 0
    fixed_cells = [i for i in range(n) if i not in vacant_set]
    res_cells = set(rng.choice(len(fixed_cells), size=n_res, replace=False).tolist()) if n_fixed else set()
    other_types = [t for t in FuncType if t is not FuncType.RESIDENTIAL]

    features = []
    for cell in range(n):
        row, col = divmod(cell, spec.grid_cols)
        area = float(rng.uniform(spec.plot_size_min, spec.plot_size_max))
        aspect = float(rng.uniform(0.7, 1.4))
        w = math.sqrt(area * aspect)
        h = area / w
        cx = (col + 0.5) * pitch + float(rng.uniform(-0.05, 0.05)) * pitch
        cy = (row + 0.5) * pitch + float(rng.uniform(-0.05, 0.05)) * pitch
        ring = [
            [round(cx - w / 2, 2), round(cy - h / 2, 2)],
            [round(cx + w / 2, 2), round(cy - h / 2, 2)],
            [round(cx + w / 2, 2), round(cy + h / 2, 2)],
            [round(cx - w / 2, 2), round(cy + h / 2, 2)],
        ]
        ring.append(ring[0])

        props: Dict[str, object] = {"id": f"p{cell:03d}"}
        if cell in vacant_set:
            props["status"] = "vacant"
        else:
            props["status"] = "fixed"
            fixed_pos = fixed_cells.index(cell)
            if fixed_pos in res_cells:
                props["type"] = FuncType.RESIDENTIAL.label
            else:
                props["type"] = other_types[int(rng.integers(0, len(other_types)))].label
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return {
        "type": "FeatureCollection",
        "properties": {"style": spec.style, "demographics": spec.demographics},
        "features": features,
    }


def write_scenario(spec: ScenarioSpec, path) -> None:
    doc = gen_scenario(spec)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# -- SVG rendering -----------------------------------------------------------

PALETTE = {
    FuncType.RESIDENTIAL: "#d62728",
    FuncType.BUSINESS: "#ff7f0e",
    FuncType.OFFICE: "#8c564b",
    FuncType.RECREATION: "#e377c2",
    FuncType.SCHOOL: "#9467bd",
    FuncType.HOSPITAL: "#1f77b4",
    FuncType.PARK: "#2ca02c",
    FuncType.OPEN_SPACE: "#bcbd22",
}

_VACANT_FILL = "url(#vacant-hatch)"
_SVG_SIZE = 640.0
_LEGEND_WIDTH = 150.0


def render_svg(region: Region, path=None, legend: bool = True) -> str:
    """Deterministic SVG map: one filled polygon per plot, vacant hatched gray."""
    minx, miny, maxx, maxy = region.bbox
    span = max(maxx - minx, maxy - miny) or 1.0
    pad = 0.03 * span
    scale = _SVG_SIZE / (span + 2 * pad)

    def tx(x: float) -> float:
        return (x - minx + pad) * scale

    def ty(y: float) -> float:
        # flip: file coordinates grow north, SVG grows down
        return (maxy - y + pad) * scale

    width = (maxx - minx + 2 * pad) * scale + (_LEGEND_WIDTH if legend else 0.0)
    height = (maxy - miny + 2 * pad) * scale

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">',
        "<defs>",
        '<pattern id="vacant-hatch" width="8" height="8" patternUnits="userSpaceOnUse">',
        '<rect width="8" height="8" fill="#e8e8e8"/>',
        '<path d="M0,8 L8,0" stroke="#9a9a9a" stroke-width="1"/>',
        "</pattern>",
        "</defs>",
        f'<rect width="{width:.1f}" height="{height:.1f}" fill="#ffffff"/>',
    ]
    for plot in region.plots:
        pts = " ".join(f"{tx(p.x):.2f},{ty(p.y):.2f}" for p in plot.geometry.ring)
        fill = _VACANT_FILL if plot.func is None else PALETTE[plot.func]
        lines.append(
            f'<polygon points="{pts}" fill="{fill}" stroke="#333333" stroke-width="1"/>'
        )
    if legend:
        lx = width - _LEGEND_WIDTH + 12
        ly = 20.0
        lines.append(f'<g font-family="sans-serif" font-size="12">')
        for func in FuncType:
            lines.append(
                f'<rect x="{lx:.1f}" y="{ly - 10:.1f}" width="14" height="14" '
                f'fill="{PALETTE[func]}" stroke="#333333" stroke-width="0.5"/>'
            )
            lines.append(f'<text x="{lx + 20:.1f}" y="{ly + 1:.1f}">{func.label}</text>')
            ly += 20
        lines.append(
            f'<rect x="{lx:.1f}" y="{ly - 10:.1f}" width="14" height="14" '
            f'fill="{_VACANT_FILL}" stroke="#333333" stroke-width="0.5"/>'
        )
        lines.append(f'<text x="{lx + 20:.1f}" y="{ly + 1:.1f}">vacant</text>')
        lines.append("</g>")
    lines.append("</svg>")
    svg = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(svg, encoding="utf-8")
    return svg


# -- config loading ----------------------------------------------------------


@dataclass
class AdvisorSettings:
    mode: str = "mock"
    endpoint: str = ""
    model: str = "gpt-3.5-turbo"
    prompt_dir: Optional[str] = None
    cache_path: str = "advisor_cache.jsonl"


@dataclass
class RunConfig:
    planning: PlanningConfig
    advisor: AdvisorSettings
    demographics: str = ""
    style: str = ""
    training: Optional[dict] = None  # extra trainer knobs, validated by the CLI


def load_run_config(path) -> RunConfig:
    """TOML or JSON config with [planning], [demographics], [advisor] sections."""
    raw = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(raw.decode("utf-8"))
    else:
        doc = json.loads(raw.decode("utf-8"))

    planning_doc = doc.get("planning", {})
    known = set(PlanningConfig.__dataclass_fields__)
    unknown = set(planning_doc) - known
    if unknown:
        raise RegionFileError(f"unknown [planning] keys: {sorted(unknown)}")
    planning = PlanningConfig(**planning_doc)

    adv_doc = doc.get("advisor", {})
    known = set(AdvisorSettings.__dataclass_fields__)
    unknown = set(adv_doc) - known
    if unknown:
        raise RegionFileError(f"unknown [advisor] keys: {sorted(unknown)}")
    advisor = AdvisorSettings(**adv_doc)
    if advisor.mode not in ("mock", "remote"):
        raise RegionFileError(f"advisor mode must be mock or remote, got {advisor.mode!r}")

    demo = doc.get("demographics", {})
    return RunConfig(
        planning=planning,
        advisor=advisor,
        demographics=str(demo.get("profile", demo.get("text", ""))),
        style=str(demo.get("style", "")),
        training=doc.get("training"),
    )

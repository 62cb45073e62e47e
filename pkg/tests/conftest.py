import numpy as np
import pytest

from replan.advisor import MockAdvisor, RegionSummary
from replan.domain import (
    FacilitySubtype,
    FuncType,
    PlanningConfig,
    Plot,
    PlotStatus,
    Region,
)
from replan.geometry import Point, Polygon
from replan.rewards import Demands
from replan.scenario_io import ScenarioSpec, gen_scenario, parse_region_doc


def square_plot(plot_id, cx, cy, side, status=PlotStatus.FIXED, func=None, subtype=None):
    h = side / 2.0
    poly = Polygon([
        Point(cx - h, cy - h),
        Point(cx + h, cy - h),
        Point(cx + h, cy + h),
        Point(cx - h, cy + h),
    ])
    return Plot.create(plot_id, poly, status, func, subtype)


def make_region(plots, config=None, demands=None):
    return Region(plots, config or PlanningConfig(), demands=demands)


@pytest.fixture
def config():
    return PlanningConfig()


@pytest.fixture
def basic_demands():
    # coverage values from the recommendation-stage planning goals
    return Demands(
        coverage={
            FuncType.BUSINESS: 0.05,
            FuncType.OFFICE: 0.05,
            FuncType.RECREATION: 0.10,
            FuncType.PARK: 0.15,
            FuncType.OPEN_SPACE: 0.10,
        },
        counts={
            FacilitySubtype.LARGE_HOSPITAL: 1,
            FacilitySubtype.CLINIC: 1,
            FacilitySubtype.SECONDARY_SCHOOL: 1,
            FacilitySubtype.PRIMARY_SCHOOL: 1,
            FacilitySubtype.KINDERGARTEN: 1,
        },
    )


@pytest.fixture
def four_plot_region(basic_demands):
    """Tiny exhaustive-enumeration fixture: 8^4 = 4096 possible schemes.

    Two fixed plots (one residential, one park) keep every metric
    well-defined for every assignment of the 4 vacant plots.
    """
    plots = [
        square_plot("f0", 0, 0, 100, PlotStatus.FIXED, FuncType.RESIDENTIAL),
        square_plot("f1", 400, 0, 120, PlotStatus.FIXED, FuncType.PARK),
        square_plot("v0", 0, 400, 110, PlotStatus.VACANT),
        square_plot("v1", 400, 400, 90, PlotStatus.VACANT),
        square_plot("v2", 800, 0, 130, PlotStatus.VACANT),
        square_plot("v3", 800, 400, 80, PlotStatus.VACANT),
    ]
    return make_region(plots, demands=basic_demands)


TRAIN_SPEC = ScenarioSpec(
    grid_rows=5,
    grid_cols=5,
    vacant_fraction=0.48,
    residential_fraction=0.5,
    style="a green residential community with schools",
    demographics="families with children and retired residents, median income",
    seed=7,
)


def training_region(seed=3, learning_rate=1e-3, episodes=2000):
    """The seeded 12-vacant-plot scenario used by the learning checks."""
    doc = gen_scenario(TRAIN_SPEC)
    cfg = PlanningConfig(seed=seed, learning_rate=learning_rate, episodes=episodes)
    region = parse_region_doc(doc, config=cfg)
    mock = MockAdvisor(0)
    region.demands = mock.formulate_objectives(
        region.demographics, region.style, RegionSummary.from_region(region)
    )
    return region


@pytest.fixture
def twelve_plot_region():
    return training_region()

import math

import numpy as np
import pytest

from replan.domain import FacilitySubtype, FuncType, PlanningConfig, PlotStatus, apply_action
from replan.rewards import (
    AspectRating,
    Demands,
    RewardError,
    SatLevel,
    StakeholderScore,
    compose_report,
    economy_reward,
    ecology_reward,
    equity_reward,
    satisfaction_score,
    score_scheme,
    service_reward,
    summarize_scheme,
)

from conftest import make_region, square_plot
from oracles import naive_report, naive_service, plots_of_region


def fixed(plot_id, cx, cy, side, func):
    return square_plot(plot_id, cx, cy, side, PlotStatus.FIXED, func)


class TestService:
    def test_all_five_in_range(self):
        region = make_region([
            fixed("rs", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("b", 100, 200, 20, FuncType.BUSINESS),
            fixed("o", 0, 200, 20, FuncType.OFFICE),
            fixed("rc", 200, 100, 20, FuncType.RECREATION),
            fixed("h", 200, 0, 20, FuncType.HOSPITAL),
            fixed("s", 200, 200, 20, FuncType.SCHOOL),
        ])
        assert service_reward(region) == 1.0

    def test_no_service_plots(self):
        region = make_region([
            fixed("rs", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("p", 200, 0, 50, FuncType.PARK),
        ])
        assert service_reward(region) == 0.0

    def test_two_homes_partial(self):
        # first home sees all 5; second sees business/office/recreation only
        region = make_region([
            fixed("rs1", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("rs2", 2000, 0, 100, FuncType.RESIDENTIAL),
            fixed("b1", 100, 200, 20, FuncType.BUSINESS),
            fixed("o1", 0, 200, 20, FuncType.OFFICE),
            fixed("rc1", 200, 100, 20, FuncType.RECREATION),
            fixed("h1", 200, 0, 20, FuncType.HOSPITAL),
            fixed("s1", 200, 200, 20, FuncType.SCHOOL),
            fixed("b2", 2100, 200, 20, FuncType.BUSINESS),
            fixed("o2", 2000, 200, 20, FuncType.OFFICE),
            fixed("rc2", 1900, 100, 20, FuncType.RECREATION),
        ])
        assert service_reward(region) == pytest.approx((1.0 + 0.6) / 2)

    def test_no_residential_raises(self):
        region = make_region([fixed("p", 0, 0, 50, FuncType.PARK)])
        with pytest.raises(RewardError):
            service_reward(region)

    def test_matches_naive_oracle_on_random_regions(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(4, 14))
            plots = [fixed("rs0", 0, 0, 60, FuncType.RESIDENTIAL)]
            for i in range(n):
                func = FuncType(int(rng.integers(0, 8)))
                plots.append(fixed(
                    f"p{i}",
                    float(rng.uniform(-1500, 1500)),
                    float(rng.uniform(-1500, 1500)),
                    float(rng.uniform(30, 90)),
                    func,
                ))
            region = make_region(plots)
            expected = naive_service(plots_of_region(region), region.config.living_circle_radius)
            assert service_reward(region) == pytest.approx(expected, abs=1e-12)


class TestEcology:
    def test_hand_computed(self, basic_demands):
        # park coverage 0.15 (meets 0.15 target), open space 0.05 vs 0.10
        total = 40000.0
        park = math.sqrt(0.15 * total)
        osp = math.sqrt(0.05 * total)
        rest = math.sqrt(total - 0.15 * total - 0.05 * total)
        region = make_region([
            fixed("pk", 0, 0, park, FuncType.PARK),
            fixed("os", 1000, 0, osp, FuncType.OPEN_SPACE),
            fixed("r", 2000, 0, rest, FuncType.RESIDENTIAL),
        ])
        assert ecology_reward(region, basic_demands) == pytest.approx(0.75, abs=1e-9)

    def test_caps_at_one(self, basic_demands):
        region = make_region([
            fixed("pk", 0, 0, 200, FuncType.PARK),
            fixed("os", 1000, 0, 200, FuncType.OPEN_SPACE),
        ])
        assert ecology_reward(region, basic_demands) == 1.0

    def test_zero_built(self, basic_demands):
        region = make_region([fixed("r", 0, 0, 100, FuncType.RESIDENTIAL)])
        assert ecology_reward(region, basic_demands) == 0.0

    def test_zero_demand_rejected(self):
        demands = Demands(coverage={FuncType.PARK: 0.15}, counts={})
        region = make_region([fixed("r", 0, 0, 100, FuncType.RESIDENTIAL)])
        with pytest.raises(RewardError):
            ecology_reward(region, demands)


class TestEconomy:
    def test_hand_computed(self, basic_demands):
        total = 40000.0
        b = math.sqrt(0.025 * total)
        o = math.sqrt(0.05 * total)
        rc = math.sqrt(0.10 * total)
        rs_area = total - (0.025 + 0.05 + 0.10) * total - 10000.0
        region = make_region([
            fixed("rs", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("b", 100, 200, b, FuncType.BUSINESS),
            fixed("o", 0, 300, o, FuncType.OFFICE),
            fixed("rc", 300, 0, rc, FuncType.RECREATION),
            fixed("pk", 3000, 3000, math.sqrt(rs_area), FuncType.PARK),
        ])
        assert economy_reward(region, basic_demands) == pytest.approx((0.5 + 1 + 1) / 3, abs=1e-9)

    def test_outside_circle_contributes_nothing(self, basic_demands):
        total = 40000.0
        inside = math.sqrt(0.025 * total)
        outside = math.sqrt(0.10 * total)
        filler = math.sqrt(total - 0.125 * total - 10000.0)
        region = make_region([
            fixed("rs", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("bin", 100, 200, inside, FuncType.BUSINESS),
            fixed("bout", 5000, 5000, outside, FuncType.BUSINESS),
            fixed("pk", 0, 3000, filler, FuncType.PARK),
        ])
        # only the inside business counts: cov 0.025 vs dem 0.05
        assert economy_reward(region, basic_demands) == pytest.approx(0.5 / 3, abs=1e-9)

    def test_no_residential_degenerates_to_zero(self, basic_demands):
        region = make_region([fixed("b", 0, 0, 100, FuncType.BUSINESS)])
        assert economy_reward(region, basic_demands) == 0.0


class TestEquity:
    def test_single_home_perfect(self):
        region = make_region([
            fixed("rs", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("s", 300, 0, 50, FuncType.SCHOOL),
            fixed("h", 0, 300, 50, FuncType.HOSPITAL),
        ])
        assert equity_reward(region) == pytest.approx(1.0, abs=1e-12)

    def test_spreads_zero_and_800(self):
        region = make_region([
            fixed("rs1", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("rs2", 1000, 0, 100, FuncType.RESIDENTIAL),
            fixed("s", 500, 300, 50, FuncType.SCHOOL),  # equidistant: spread 0
            fixed("h", 100, 0, 20, FuncType.HOSPITAL),  # 100 vs 900: spread 800
        ])
        assert equity_reward(region) == pytest.approx((1 + math.exp(-1)) / 2, abs=1e-9)

    def test_single_category_other_absent(self):
        region = make_region([
            fixed("rs1", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("rs2", 1000, 0, 100, FuncType.RESIDENTIAL),
            fixed("s", 100, 0, 20, FuncType.SCHOOL),
        ])
        assert equity_reward(region) == pytest.approx(math.exp(-1) / 2, abs=1e-9)

    def test_invariant_to_home_order_and_duplicate_facility(self):
        base = [
            fixed("rs1", 0, 0, 100, FuncType.RESIDENTIAL),
            fixed("rs2", 900, 100, 100, FuncType.RESIDENTIAL),
            fixed("rs3", 300, 700, 100, FuncType.RESIDENTIAL),
            fixed("s", 200, 100, 50, FuncType.SCHOOL),
            fixed("h", 600, 500, 50, FuncType.HOSPITAL),
        ]
        r1 = equity_reward(make_region(list(base)))
        r2 = equity_reward(make_region([base[2], base[0], base[1], base[4], base[3]]))
        assert r1 == pytest.approx(r2, abs=1e-12)

        dup = base + [fixed("s2", 200, 100, 50, FuncType.SCHOOL)]
        assert equity_reward(make_region(dup)) == pytest.approx(r1, abs=1e-12)


class TestSatisfaction:
    def test_all_very_good(self):
        scores = [
            StakeholderScore(p, [AspectRating("a", SatLevel.VERY_GOOD)])
            for p in ("resident", "government", "developer")
        ]
        assert satisfaction_score(scores) == 1.0

    def test_hand_mean(self):
        scores = [
            StakeholderScore("resident", [AspectRating("a", SatLevel.GOOD)]),
            StakeholderScore("government", [AspectRating("a", SatLevel.AVERAGE)]),
            StakeholderScore("developer", [AspectRating("a", SatLevel.VERY_GOOD)]),
        ]
        assert satisfaction_score(scores) == pytest.approx(0.75)

    def test_single_poor(self):
        scores = [StakeholderScore("resident", [AspectRating("a", SatLevel.POOR)])]
        assert satisfaction_score(scores) == 0.25

    def test_multi_aspect_mean(self):
        s = StakeholderScore("resident", [
            AspectRating("a", SatLevel.POOR),
            AspectRating("b", SatLevel.VERY_GOOD),
        ])
        assert s.score == pytest.approx(0.625)

    def test_empty_inputs_rejected(self):
        with pytest.raises(RewardError):
            satisfaction_score([])
        with pytest.raises(RewardError):
            StakeholderScore("resident", []).score

    def test_level_parsing(self):
        assert SatLevel.from_text("Very Good - fine mix") is SatLevel.VERY_GOOD
        assert SatLevel.from_text("good") is SatLevel.GOOD
        with pytest.raises(ValueError):
            SatLevel.from_text("meh")


class TestScoreScheme:
    def test_upper_bound(self):
        report = compose_report(
            {"service": 1.0, "ecology": 1.0, "economy": 1.0, "equity": 1.0}, 1.0
        )
        assert report.obj_score == 4.0
        assert report.total == 5.0

    def test_reported_row_composition(self):
        report = compose_report(
            {"service": 0.4923, "ecology": 0.9600, "economy": 0.9819, "equity": 0.4512},
            0.7401,
        )
        assert report.obj_score == pytest.approx(2.8854, abs=1e-12)
        assert report.total == pytest.approx(3.6255, abs=1e-12)

    def test_all_zero(self):
        report = compose_report(
            {"service": 0.0, "ecology": 0.0, "economy": 0.0, "equity": 0.0}, 0.0
        )
        assert report.total == 0.0

    def test_pure_function_bitwise(self, four_plot_region):
        region = four_plot_region.clone()
        for idx in region.vacant_order:
            apply_action(region, idx, FuncType.BUSINESS)
        a = score_scheme(region, region.demands, 0.5)
        b = score_scheme(region, region.demands, 0.5)
        assert (a.service, a.ecology, a.economy, a.equity, a.total) == (
            b.service, b.ecology, b.economy, b.equity, b.total)

    def test_json_shape(self, four_plot_region):
        region = four_plot_region.clone()
        for idx in region.vacant_order:
            apply_action(region, idx, FuncType.PARK)
        report = score_scheme(region, region.demands, 0.25)
        doc = report.to_dict()
        assert doc["schema"] == 1
        assert list(doc)[:8] == [
            "schema", "service", "ecology", "economy", "equity",
            "obj_score", "satisfaction", "total",
        ]


class TestMetricProperties:
    def test_bounds_on_random_schemes(self, four_plot_region):
        rng = np.random.default_rng(5)
        for _ in range(100):
            region = four_plot_region.clone()
            for idx in region.vacant_order:
                apply_action(region, idx, FuncType(int(rng.integers(0, 8))))
            report = score_scheme(region, region.demands, 0.0)
            for value in (report.service, report.ecology, report.economy, report.equity):
                assert 0.0 <= value <= 1.0
            assert report.obj_score == pytest.approx(
                report.service + report.ecology + report.economy + report.equity)

    def test_park_assignment_monotone_for_ecology(self, four_plot_region):
        rng = np.random.default_rng(9)
        for _ in range(20):
            region = four_plot_region.clone()
            order = list(region.vacant_order)
            for idx in order[:-1]:
                apply_action(region, idx, FuncType(int(rng.integers(0, 8))))
            before_region = region.clone()
            apply_action(before_region, order[-1], FuncType.BUSINESS)
            after_region = region.clone()
            apply_action(after_region, order[-1], FuncType.PARK)
            before = ecology_reward(before_region, region.demands)
            after = ecology_reward(after_region, region.demands)
            assert after >= before - 1e-12

    def test_in_circle_economy_monotone(self, four_plot_region):
        region_a = four_plot_region.clone()
        region_b = four_plot_region.clone()
        idx = region_a.vacant_order[0]  # v0 at (0,400): within 500 m of the home
        apply_action(region_a, idx, FuncType.OPEN_SPACE)
        apply_action(region_b, idx, FuncType.BUSINESS)
        for rest in region_a.vacant_order[1:]:
            apply_action(region_a, rest, FuncType.PARK)
            apply_action(region_b, rest, FuncType.PARK)
        assert economy_reward(region_b, region_a.demands) >= economy_reward(
            region_a, region_a.demands) - 1e-12

    def test_full_report_matches_naive_oracle(self, four_plot_region):
        rng = np.random.default_rng(21)
        demands_cov = {f.label: v for f, v in four_plot_region.demands.coverage.items()}
        for _ in range(50):
            region = four_plot_region.clone()
            for idx in region.vacant_order:
                apply_action(region, idx, FuncType(int(rng.integers(0, 8))))
            report = score_scheme(region, region.demands, 0.0)
            expected = naive_report(
                plots_of_region(region), demands_cov,
                region.config.living_circle_radius, region.config.equity_scale)
            for key in ("service", "ecology", "economy", "equity", "obj_score"):
                assert getattr(report, key) == pytest.approx(expected[key], abs=1e-12)


class TestSummarize:
    def test_summary_contents(self, four_plot_region):
        region = four_plot_region.clone()
        for idx in region.vacant_order:
            apply_action(region, idx, FuncType.SCHOOL)
        summary = summarize_scheme(region, region.demands)
        assert set(summary.metrics) == {"service", "ecology", "economy", "equity"}
        assert summary.coverage[FuncType.SCHOOL] > 0
        assert sum(summary.facility_tally.values()) == 4

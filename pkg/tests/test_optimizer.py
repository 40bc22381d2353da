"""Top-level recursion, control-point loop, and branch-and-bound driver."""

import math

import pytest

import certbound.expr as ex
from certbound.interval import Box, Interval
from certbound.optimizer import (BoundReport, RunConfig, certify_bound,
                                 initial_control_points, parse_report,
                                 refine_control_points, template_optim)

from conftest import MC_BOX, MC_SRC, grid_min, mc_tree


def _leaf_volume(report):
    total = 0.0
    for r in report.leaf_records():
        v = 1.0
        for iv in r.box.intervals:
            v *= iv.width
        total += v
    return total


def _interiors_overlap(b1, b2):
    return all(min(i1.hi, i2.hi) - max(i1.lo, i2.lo) > 1e-12
               for i1, i2 in zip(b1.intervals, b2.intervals))


class TestTemplateOptim:
    def test_polynomial_leaf_bounds(self):
        # min/max of x1^2 - x1 on [0,1] are -1/4 and 0; the estimator is
        # the polynomial itself (no liftings)
        t = ex.parse_expr("x1^2 - x1", {"x1": 0})
        box = Box([Interval(0.0, 1.0)])
        res = template_optim(t, box, 2, [[0.5]])
        assert res.estimator.n_lifting == 0
        assert res.m == pytest.approx(-0.25, abs=1e-6)
        assert res.m <= -0.25
        assert res.M == pytest.approx(0.0, abs=1e-6)
        assert res.M >= 0.0

    def test_sin_single_parabola(self):
        # one control point at pi/2: lower envelope bottoms at 1 - pi^2/8
        t = ex.parse_expr("sin(x1)", {"x1": 0})
        box = Box([Interval(0.0, math.pi)])
        res = template_optim(t, box, 2, [[math.pi / 2]])
        assert res.m == pytest.approx(1.0 - math.pi ** 2 / 8, abs=1e-4)
        assert res.M >= 1.0 - 1e-6
        assert res.M <= 1.0 + 1e-3

    def test_mc_subbox_sandwich(self):
        t = mc_tree()
        box = Box([Interval(-1.0, 0.0), Interval(-2.0, -1.0)])
        res = template_optim(t, box, 2, [box.midpoint()])
        gmin = grid_min(t, box, 80)
        assert res.m <= gmin + 1e-8
        assert res.M >= ex.evaluate(t, box.midpoint()) - 1e-8
        assert res.enclosure.lo <= gmin <= res.enclosure.hi

    def test_control_point_monotonicity(self):
        # adding a control point can only tighten the estimator, hence the
        # bound, up to solver noise
        t = ex.parse_expr("sin(x1)", {"x1": 0})
        box = Box([Interval(0.0, math.pi)])
        b1 = template_optim(t, box, 2, [[math.pi / 2]]).m
        b2 = template_optim(t, box, 2, [[math.pi / 2], [1.0]]).m
        assert b2 >= b1 - 1e-7

    def test_control_point_monotonicity_mc(self):
        t = mc_tree()
        box = Box([Interval(-1.0, 0.0), Interval(-2.0, -1.0)])
        pts = [box.midpoint()]
        b1 = template_optim(t, box, 2, pts).m
        b2 = template_optim(t, box, 2, pts + [[-0.5, -1.5]]).m
        assert b2 >= b1 - 1e-7


class TestControlPoints:
    def test_refine_adds_minimizer_moment(self):
        # min x1 on [2,5]: the relaxation concentrates at the optimum, so
        # the first-order moment projects to x = 2
        t = ex.parse_expr("x1", {"x1": 0})
        box = Box([Interval(2.0, 5.0)])
        res = template_optim(t, box, 1, [[3.5]])
        pts = refine_control_points(t, box, [[3.5]], res.lower.moments)
        assert len(pts) == 2
        assert pts[1][0] == pytest.approx(2.0, abs=1e-5)

    def test_refine_duplicate_is_noop(self):
        t = ex.parse_expr("x1", {"x1": 0})
        box = Box([Interval(2.0, 5.0)])
        res = template_optim(t, box, 1, [[3.5]])
        pts = refine_control_points(t, box, [[3.5]], res.lower.moments)
        again = refine_control_points(t, box, pts, res.lower.moments)
        assert again == pts

    def test_initial_points_mc_minimizer(self):
        # local descent lands near the global minimizer of MC
        t = mc_tree()
        pts = initial_control_points(t, MC_BOX, 1, seed=0)
        assert len(pts) == 1
        assert pts[0][0] == pytest.approx(-0.54719755, abs=1e-3)
        assert pts[0][1] == pytest.approx(-1.54719755, abs=1e-3)

    def test_initial_points_zero_count(self):
        assert initial_control_points(mc_tree(), MC_BOX, 0) == []

    def test_initial_points_nonsmooth_fallback(self):
        t = ex.parse_expr("abs(x1 - 1) + x2^2", {"x1": 0, "x2": 1})
        box = Box([Interval(-2.0, 2.0), Interval(-1.0, 1.0)])
        pts = initial_control_points(t, box, 2, seed=1)
        assert len(pts) == 2
        for p in pts:
            assert box.contains(p)


class TestCertifyBound:
    def test_trivial_target_one_box(self):
        # f = x1 >= 0 on [0,1]; target -10 is proved without splitting
        t = ex.parse_expr("x1", {"x1": 0})
        box = Box([Interval(0.0, 1.0)])
        cfg = RunConfig(order=1, target=-10.0, max_boxes=16)
        rep = certify_bound(t, box, cfg)
        assert rep.status == "proved"
        assert rep.boxes_processed == 1
        assert rep.records[0].status == "proved"
        assert -10.0 <= rep.bound <= 0.0

    def test_no_target_reports_best_bound(self):
        t = ex.parse_expr("x1^2 + x2^2", {"x1": 0, "x2": 1})
        box = Box([Interval(-1.0, 1.0)] * 2)
        cfg = RunConfig(order=1, max_boxes=5)
        rep = certify_bound(t, box, cfg)
        assert rep.status == "completed"
        assert rep.bound <= 0.0
        assert rep.bound >= -1e-6

    def test_global_bound_is_min_over_leaves(self):
        t = mc_tree()
        cfg = RunConfig(order=1, control_points=2, max_boxes=9)
        rep = certify_bound(t, MC_BOX, cfg)
        leaves = rep.leaf_records()
        assert leaves
        assert rep.bound == min(r.bound for r in leaves)
        assert rep.bound <= grid_min(t, MC_BOX, 120) + 1e-9

    def test_partition_invariant(self):
        # leaf boxes tile K: volumes sum to vol(K), interiors are disjoint
        t = mc_tree()
        cfg = RunConfig(order=1, control_points=2, max_boxes=13)
        rep = certify_bound(t, MC_BOX, cfg)
        vol = 1.0
        for iv in MC_BOX.intervals:
            vol *= iv.width
        assert _leaf_volume(rep) == pytest.approx(vol, rel=1e-9)
        leaves = [r.box for r in rep.leaf_records()]
        for i in range(len(leaves)):
            for j in range(i + 1, len(leaves)):
                assert not _interiors_overlap(leaves[i], leaves[j])

    def test_determinism(self):
        t = mc_tree()
        cfg = RunConfig(order=1, control_points=2, max_boxes=7, seed=3)
        r1 = certify_bound(t, MC_BOX, cfg)
        r2 = certify_bound(t, MC_BOX, cfg)
        lines1 = [l for l in r1.render().splitlines() if not l.startswith("#")]
        lines2 = [l for l in r2.render().splitlines() if not l.startswith("#")]
        assert lines1 == lines2

    def test_budget_exhaustion_is_failure(self):
        # an unreachable target exhausts the budget and reports failure
        # with a sound global bound
        t = ex.parse_expr("x1^2", {"x1": 0})
        box = Box([Interval(-1.0, 1.0)])
        cfg = RunConfig(order=1, target=1.0, max_boxes=3)
        rep = certify_bound(t, box, cfg)
        assert rep.status == "failure"
        assert rep.bound <= 0.0
        assert rep.boxes_processed == 3


class TestReportFormat:
    def _sample_report(self):
        t = mc_tree()
        cfg = RunConfig(order=1, control_points=2, max_boxes=5,
                        problem_name="mc")
        return certify_bound(t, MC_BOX, cfg)

    def test_render_parse_round_trip(self):
        rep = self._sample_report()
        back = parse_report(rep.render())
        assert back.problem == rep.problem
        assert back.mode == rep.mode
        assert back.order == rep.order
        assert back.status == rep.status
        assert back.bound == rep.bound
        assert back.upper == rep.upper
        assert back.boxes_processed == rep.boxes_processed
        assert len(back.records) == len(rep.records)
        for a, b in zip(back.records, rep.records):
            assert a.status == b.status
            assert a.bound == b.bound
            assert a.upper == b.upper
            assert a.iterations == b.iterations
            assert a.degraded == b.degraded
            for i1, i2 in zip(a.box.intervals, b.box.intervals):
                assert i1.lo == i2.lo and i1.hi == i2.hi

    def test_wall_time_comment_ignored(self):
        rep = self._sample_report()
        text = rep.render()
        assert "# wall-time-seconds:" in text
        back = parse_report(text)
        assert back.bound == rep.bound

    def test_target_none_round_trips(self):
        rep = self._sample_report()
        assert rep.target is None
        assert parse_report(rep.render()).target is None

"""Quadratic-template compression of high-lifting-count estimators."""

import math
import random

import pytest

import certbound.expr as ex
from certbound.interval import Box, Interval
from certbound.lifting import min_sa, max_sa
from certbound.optimizer import _Session, RunConfig, _estimate
from certbound.template import (QuadraticForm, SmoothModel, build_quadratic_form,
                                build_template, halton_points)

from conftest import SBT_BOX, grid_min, grid_max, sbt_tree, shubert_factor


def estimator_of(t, box, points, order=2):
    sess = _Session(RunConfig(order=order, template_threshold=10 ** 9), points)
    est, _ = _estimate(t, box, sess)
    return est


class TestHalton:
    def test_points_inside_box(self):
        box = Box([Interval(-2.0, 3.0), Interval(0.0, 1.0)])
        pts = halton_points(box, 50)
        assert len(pts) == 50
        for p in pts:
            assert box.contains(p)

    def test_deterministic(self):
        box = Box([Interval(0.0, 1.0)] * 3)
        assert halton_points(box, 20) == halton_points(box, 20)


class TestQuadraticForm:
    def test_polynomial_hessian_constant(self):
        # t = x1^2: Hessian is constant, sampled differences vanish,
        # so both forms equal t exactly
        t = ex.parse_expr("x1^2 + 0*x2", {"x1": 0, "x2": 1})
        model = SmoothModel(t, 2)
        box = Box([Interval(-1.0, 1.0)] * 2)
        qf = build_quadratic_form(model, [0.3, 0.0], box)
        assert qf.lam_lo == pytest.approx(0.0, abs=1e-9)
        assert qf.lam_hi == pytest.approx(0.0, abs=1e-9)
        lo = qf.poly_lower(2)
        for u in (-1.0, -0.25, 0.5, 1.0):
            assert lo.eval([u, 0.0]) == pytest.approx(u * u, abs=1e-9)

    def test_curvature_shift_brackets_samples(self):
        t = ex.parse_expr("sin(sqrt(x1))", {"x1": 0})
        model = SmoothModel(t, 1)
        box = Box([Interval(1.0, 500.0)])
        qf = build_quadratic_form(model, [251.0], box)
        rng = random.Random(23)
        h0 = model.hess_at([251.0])[0, 0]
        for _ in range(1000):
            x = [1.0 + 499.0 * rng.random()]
            d = model.hess_at(x)[0, 0] - h0
            assert qf.lam_lo <= d + 1e-9
            assert qf.lam_hi >= d - 1e-9


class TestBuildTemplate:
    def test_pass_through_below_threshold(self):
        t = ex.parse_expr("sin(x1)", {"x1": 0})
        box = Box([Interval(0.0, math.pi)])
        est = estimator_of(t, box, [[math.pi / 2]])
        res = build_template(t, box, 2, [[math.pi / 2]], est, threshold=6)
        assert not res.applied
        assert res.estimator is est

    def test_compression_to_one_lifting(self):
        # a Shubert factor has 5 cos liftings; threshold 4 forces compression
        t = ex.parse_expr(shubert_factor("x1") + " + 0*x2", {"x1": 0, "x2": 1})
        box = Box([Interval(-1.0, 0.0), Interval(-1.0, 0.0)])
        points = [[-0.5, -0.5]]
        est = estimator_of(t, box, points)
        assert est.n_lifting == 5
        res = build_template(t, box, 2, points, est, threshold=4)
        assert res.applied
        assert res.estimator.n_lifting == 1

    def test_compressed_bounds_still_sound(self):
        t = ex.parse_expr(shubert_factor("x1") + " + 0*x2", {"x1": 0, "x2": 1})
        box = Box([Interval(-1.0, 0.0), Interval(-1.0, 0.0)])
        points = [[-0.5, -0.5]]
        est = estimator_of(t, box, points)
        res = build_template(t, box, 2, points, est, threshold=4)
        lo = min_sa(res.estimator, box, 2)
        hi = max_sa(res.estimator.as_side("upper"), box, 2)
        gmin = grid_min(t, box, 200)
        gmax = grid_max(t, box, 200)
        slack = 1e-6 * (1.0 + abs(gmin))
        assert lo.bound <= gmin + slack
        assert hi.bound >= gmax - slack

    def test_template_sampled_offset_soundness(self):
        # lower template forms stay below the function value pointwise
        t = ex.parse_expr(shubert_factor("x1") + " + 0*x2", {"x1": 0, "x2": 1})
        box = Box([Interval(-0.5, 0.5), Interval(-0.5, 0.5)])
        points = [[0.0, 0.0]]
        est = estimator_of(t, box, points)
        res = build_template(t, box, 2, points, est, threshold=4)
        assert res.applied
        # constraints have the shape v - q_low >= 0 and q_up - v >= 0 over
        # (x1, x2, v); substituting v = f(x) must keep all satisfied
        rng = random.Random(41)
        for _ in range(1000):
            x = [box[0].lo + rng.random() * box[0].width,
                 box[1].lo + rng.random() * box[1].width]
            fx = ex.evaluate(t, x)
            for c in res.estimator.constraints:
                assert c.eval([x[0], x[1], fx]) >= -1e-7 * (1.0 + abs(fx))

    def test_sbt_product_full_estimator_compresses(self):
        t = sbt_tree()
        box = Box([Interval(-1.0, 0.0), Interval(-1.0, 0.0)])
        points = [[-0.5, -0.5]]
        sess = _Session(RunConfig(order=2, template_threshold=4), points)
        est, _ = _estimate(t, box, sess)
        # each factor compressed to one lifting before the product
        assert est.n_lifting <= 4
        lo = min_sa(est, box, 2)
        gmin = grid_min(t, box, 150)
        assert lo.bound <= gmin + 1e-6 * (1.0 + abs(gmin))

    def test_deterministic_given_seed(self):
        t = ex.parse_expr(shubert_factor("x1") + " + 0*x2", {"x1": 0, "x2": 1})
        box = Box([Interval(-1.0, 0.0), Interval(-1.0, 0.0)])
        points = [[-0.5, -0.5]]
        est = estimator_of(t, box, points)
        r1 = build_template(t, box, 2, points, est, threshold=4)
        r2 = build_template(t, box, 2, points, est, threshold=4)
        assert r1.estimator.constraints == r2.estimator.constraints

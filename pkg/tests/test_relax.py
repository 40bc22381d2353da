"""Lasserre relaxation assembly and POP lower bounds."""

import random
from fractions import Fraction

import pytest

from certbound.interval import Box, Interval
from certbound.poly import SparsePoly, gram_to_poly
from certbound.relax import (POPInstance, SizeCapError, assemble_Qk,
                             min_k_order, pop_lower_bound)

from conftest import grid_min


def x(n, i):
    return SparsePoly.variable(n, i)


def unit_pop(n, objective, constraints=()):
    return POPInstance(n, [Interval(-1.0, 1.0)] * n, list(constraints), objective)


class TestAssembly:
    def test_min_order(self):
        pop = unit_pop(1, x(1, 0).pow(4))
        assert min_k_order(pop) == 2
        with pytest.raises(ValueError):
            assemble_Qk(pop, 1)

    def test_block_structure(self):
        pop = unit_pop(2, x(2, 0) * x(2, 1))
        asm = assemble_Qk(pop, 1)
        # one SOS block plus one block per box constraint polynomial
        assert len(asm.block_bases) == 1 + len(pop.all_constraints())
        assert len(asm.block_bases[0]) == 3  # {1, x1, x2}

    def test_size_cap(self):
        pop = unit_pop(6, x(6, 0).pow(4))
        with pytest.raises(SizeCapError):
            assemble_Qk(pop, 3, row_cap=10)


class TestBounds:
    def test_square_is_sos(self):
        res = pop_lower_bound(unit_pop(1, x(1, 0) * x(1, 0)), 1)
        assert not res.degraded
        assert res.bound == pytest.approx(0.0, abs=1e-6)
        assert res.bound <= 0.0 + 1e-12 or res.bound <= 1e-6

    def test_negative_sum_of_squares(self):
        # min -x1^2 - x2^2 on [-1,1]^2 = -2, exactly reachable at k = 1
        # via -x1^2 - x2^2 + 2 = (1 - x1^2) + (1 - x2^2)
        obj = -(x(2, 0) * x(2, 0)) - (x(2, 1) * x(2, 1))
        res = pop_lower_bound(unit_pop(2, obj), 1)
        assert not res.degraded
        assert res.bound == pytest.approx(-2.0, abs=1e-6)
        assert res.bound <= -2.0 + 1e-6

    def test_quartic_vs_grid(self):
        # x1^4 + x2^4 - 3 x1^2 x2^2 + x1 on [-1,1]^2 at k = 2
        obj = (x(2, 0).pow(4) + x(2, 1).pow(4)
               - (x(2, 0).pow(2) * x(2, 1).pow(2)).scale(3.0) + x(2, 0))
        pop = unit_pop(2, obj)
        res = pop_lower_bound(pop, 2)
        assert not res.degraded
        import certbound.expr as ex
        t = ex.parse_expr("x1^4 + x2^4 - 3*x1^2*x2^2 + x1", {"x1": 0, "x2": 1})
        gmin = grid_min(t, Box([Interval(-1.0, 1.0)] * 2), 400)
        assert res.bound <= gmin + 1e-8
        assert gmin - res.bound < 1e-2

    def test_linear_on_offset_box(self):
        pop = POPInstance(1, [Interval(2.0, 5.0)], [], x(1, 0))
        res = pop_lower_bound(pop, 1)
        assert res.bound == pytest.approx(2.0, abs=1e-6)
        # first-order moment identifies the minimizer
        assert res.moments.x_sdp[0] == pytest.approx(2.0, abs=1e-4)

    def test_constant_objective(self):
        pop = unit_pop(2, SparsePoly.constant(2, 7.0))
        for k in (1, 2):
            res = pop_lower_bound(pop, k)
            assert res.bound == pytest.approx(7.0, abs=1e-6)

    def test_translation_equivariance(self):
        obj = x(2, 0) * x(2, 1) + x(2, 0).pow(2)
        r0 = pop_lower_bound(unit_pop(2, obj), 2)
        r5 = pop_lower_bound(unit_pop(2, obj.shift_constant(5.0)), 2)
        assert r5.bound - r0.bound == pytest.approx(5.0, abs=1e-7)

    def test_moment_normalization(self):
        res = pop_lower_bound(unit_pop(2, x(2, 0)), 1)
        assert res.moments.values[(0, 0)] == 1.0

    def test_polynomial_constraint(self):
        # min x1 s.t. x1^2 >= 1/4 on [0, 1]: minimum 1/2
        g = x(1, 0) * x(1, 0) + SparsePoly.constant(1, -0.25)
        pop = POPInstance(1, [Interval(0.0, 1.0)], [g], x(1, 0))
        res = pop_lower_bound(pop, 2)
        assert res.bound <= 0.5 + 1e-6
        assert res.bound >= 0.4


class TestHierarchyMonotonicity:
    def test_twenty_random_quartics(self):
        rng = random.Random(17)
        from certbound.poly import monomials_up_to
        monos = [a for a in monomials_up_to(3, 4)]
        for trial in range(20):
            coeffs = {}
            for alpha in monos:
                if rng.random() < 0.3:
                    coeffs[alpha] = rng.uniform(-1.0, 1.0)
            if not coeffs:
                coeffs = {(2, 0, 0): 1.0}
            obj = SparsePoly(3, coeffs)
            pop = unit_pop(3, obj)
            k0 = min_k_order(pop)
            b_lo = pop_lower_bound(pop, k0).bound
            b_hi = pop_lower_bound(pop, k0 + 1).bound
            # each exported bound subtracts its own residual safety margin
            # (about 1e-6 here), so monotonicity holds up to that margin
            assert b_hi >= b_lo - 1e-5, f"trial {trial}"
            # soundness against a sampled minimum
            smin = min(obj.eval([rng.uniform(-1, 1) for _ in range(3)])
                       for _ in range(2000))
            assert b_hi <= smin + 1e-6, f"trial {trial}"


class TestPutinarResidual:
    def test_residual_small(self):
        obj = x(2, 0).pow(4) + x(2, 1).pow(4) + x(2, 0) * x(2, 1)
        pop = unit_pop(2, obj)
        res = pop_lower_bound(pop, 2)
        assert res.assembly is not None and res.solution is not None
        asm, sol = res.assembly, res.solution
        mu = asm.f0 - sol.primal_obj
        # reconstruct sum_j sigma_j g_j + mu and compare coefficientwise
        recon = SparsePoly.constant(pop.n, mu)
        one = SparsePoly.constant(pop.n, 1.0)
        for Q, basis, g in zip(sol.X, asm.block_bases, [one] + asm.constraints):
            recon = recon + gram_to_poly(Q, basis) * g
        diff = recon - asm.pop.objective.to_float()
        fnorm = asm.pop.objective.to_float().max_norm()
        assert diff.max_norm() <= 1e-6 * (1.0 + fnorm)


class TestScalingInvariance:
    def test_offset_box_matches_centered(self):
        # the same objective shifted to an offset box must give the same
        # optimum (unit-box rescaling happens internally)
        obj_c = x(1, 0).pow(2)
        pop_c = POPInstance(1, [Interval(-1.0, 1.0)], [], obj_c)
        # f(u) = (u - 3)^2 on [2, 4] has the same range
        obj_o = (x(1, 0).shift_constant(-3.0)).pow(2)
        pop_o = POPInstance(1, [Interval(2.0, 4.0)], [], obj_o)
        b_c = pop_lower_bound(pop_c, 1).bound
        b_o = pop_lower_bound(pop_o, 1).bound
        assert b_o == pytest.approx(b_c, abs=1e-6)

    def test_moments_map_back_to_original_box(self):
        pop = POPInstance(2, [Interval(2.0, 5.0), Interval(-4.0, -2.0)], [],
                          x(2, 0) + x(2, 1))
        res = pop_lower_bound(pop, 1)
        assert res.bound == pytest.approx(-2.0, abs=1e-5)
        xs = res.moments.x_sdp
        assert xs[0] == pytest.approx(2.0, abs=1e-3)
        assert xs[1] == pytest.approx(-4.0, abs=1e-3)

"""Max-plus parabolic estimators and semialgebraic estimator composition.

A transcendental node is bounded on an interval by parabolas anchored at
control points, with curvature taken from the interval range of the second
derivative.  Estimators for whole subtrees are relaxations: a polynomial
objective over original plus lifting variables, with constraints that the
true values of the liftings always satisfy.  A lower (resp. upper) bound
of the relaxation optimum is then a lower (resp. upper) bound of the
function itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .expr import second_derivative_range, transcendental_value_range, _FUNC_EVAL, _FUNC_DERIV1
from .interval import Box, DomainError, Interval
from .poly import SparsePoly

__all__ = ["Parabola", "LiftingVar", "SAEstimator", "build_par", "compose",
           "compose_bop"]


@dataclass(frozen=True)
class Parabola:
    """p(u) = value + slope*(u - center) + (curvature/2)*(u - center)^2."""
    center: float
    value: float
    slope: float
    curvature: float
    kind: str  # "under" | "over"

    def eval(self, u: float) -> float:
        d = u - self.center
        return self.value + self.slope * d + 0.5 * self.curvature * d * d

    def poly_in(self, u: SparsePoly) -> SparsePoly:
        """Substitute a polynomial for the argument."""
        d = u.shift_constant(-self.center).to_float()
        out = SparsePoly.constant(u.n, self.value)
        out = out + d.scale(self.slope)
        out = out + (d * d).scale(0.5 * self.curvature)
        return out

    def range_over(self, iv: Interval) -> Interval:
        d = iv.shift(-self.center)
        r = d.pow_int(2).scale(0.5 * self.curvature) + d.scale(self.slope)
        return r.shift(self.value)


def build_par(name: str, iv: Interval, points: list[float]
              ) -> tuple[list[Parabola], list[Parabola]]:
    """Under- and over-parabolas for a transcendental function on iv, one
    pair per control point.

    Curvatures come from the interval second-derivative range; tangency
    data is evaluated in floats and padded outward so the sandwich
    p- <= f <= p+ survives rounding."""
    if not points:
        raise ValueError("empty control point set")
    dd = second_derivative_range(name, iv)
    f = _FUNC_EVAL[name]
    f1 = _FUNC_DERIV1[name]
    radius = iv.width
    unders, overs = [], []
    for a in points:
        if not iv.contains(a, slack=1e-12 * (1.0 + abs(a))):
            raise ValueError(f"control point {a} outside {iv}")
        a = iv.clamp(a)
        v = f(a)
        s = f1(a)
        # rounding slack for value and slope evaluations
        pad = 8.0 * (abs(v) + abs(s) * radius + 1.0) * 2.2e-16
        unders.append(Parabola(a, v - pad, s, dd.lo, "under"))
        overs.append(Parabola(a, v + pad, s, dd.hi, "over"))
    return unders, overs


@dataclass(frozen=True)
class LiftingVar:
    origin: str
    bounds: Interval


@dataclass(frozen=True)
class SAEstimator:
    """Semialgebraic estimator of a subtree over the working box.

    Polynomials live over n original variables followed by the liftings,
    in order.  Lower and upper estimators of the same subtree share the
    lifting structure and differ only in the declared side."""
    n: int
    liftings: tuple[LiftingVar, ...]
    constraints: tuple[SparsePoly, ...]
    objective: SparsePoly
    side: str = "lower"

    @property
    def n_lifting(self) -> int:
        return len(self.liftings)

    @property
    def total_vars(self) -> int:
        return self.n + len(self.liftings)

    def as_side(self, side: str) -> "SAEstimator":
        return replace(self, side=side)

    def with_objective(self, p: SparsePoly) -> "SAEstimator":
        if p.n != self.total_vars:
            p = p.extend(self.total_vars)
        return replace(self, objective=p)

    @staticmethod
    def of_poly(n: int, p: SparsePoly, side: str = "lower") -> "SAEstimator":
        return SAEstimator(n, (), (), p, side)


def _embed(e: SAEstimator, total: int, offset: int) -> tuple[list[SparsePoly], SparsePoly]:
    """Remap an estimator's polynomials into a space with `total` variables,
    moving its liftings to start at index offset."""
    mapping = {i: i for i in range(e.n)}
    for j in range(e.n_lifting):
        mapping[e.n + j] = offset + j
    cons = [c.remap(total, mapping) for c in e.constraints]
    return cons, e.objective.remap(total, mapping)


def merge(e1: SAEstimator, e2: SAEstimator) -> tuple[int, tuple[LiftingVar, ...],
                                                     list[SparsePoly],
                                                     SparsePoly, SparsePoly]:
    """Join the lifting spaces of two estimators over the same original
    variables; returns (total, liftings, constraints, P1, P2)."""
    if e1.n != e2.n:
        raise ValueError("estimators over different variable counts")
    n = e1.n
    p1, p2 = e1.n_lifting, e2.n_lifting
    total = n + p1 + p2
    c1, P1 = _embed(e1, total, n)
    c2, P2 = _embed(e2, total, n + p1)
    return total, e1.liftings + e2.liftings, c1 + c2, P1, P2


def _add_lifting(n: int, liftings: tuple[LiftingVar, ...],
                 constraints: list[SparsePoly], origin: str,
                 bounds: Interval) -> tuple[tuple[LiftingVar, ...],
                                            list[SparsePoly], SparsePoly, int]:
    """Append one lifting variable; existing polynomials must already live
    in the enlarged space or get extended by the caller."""
    total = n + len(liftings) + 1
    liftings = liftings + (LiftingVar(origin, bounds),)
    var = SparsePoly.variable(total, total - 1)
    return liftings, constraints, var, total


def _ensure_low_degree(n: int, liftings, constraints, P: SparsePoly,
                       enclosure: Interval, origin: str):
    """If P has degree >= 2, bind it to a fresh lifting variable with an
    equality pair so downstream products stay (at most) bilinear."""
    if P.degree <= 1:
        return liftings, constraints, P
    liftings, constraints, w, total = _add_lifting(
        n, liftings, constraints, origin, enclosure)
    Pw = P.extend(total)
    constraints = [c.extend(total) for c in constraints]
    constraints.append(w - Pw)
    constraints.append(Pw - w)
    return liftings, constraints, w


def compose(name: str, unders: list[Parabola], overs: list[Parabola],
            child: SAEstimator, child_enclosure: Interval) -> SAEstimator:
    """Estimator for a transcendental node applied to an estimated child.

    The child value is substituted directly when its objective is affine;
    otherwise it is routed through a lifting variable constrained to equal
    the child objective.  The node value becomes a fresh lifting variable
    sandwiched between all under- and over-parabolas."""
    n = child.n
    liftings = child.liftings
    constraints = list(child.constraints)
    P_c = child.objective

    liftings, constraints, u = _ensure_low_degree(
        n, liftings, constraints, P_c, child_enclosure, f"{name}-arg")

    # The lifting range must reach the parabola envelopes, not just the
    # function values: the estimator extrema live on the envelopes, and
    # clamping to the true range would silently tighten past them.  A
    # max-min bound keeps the range from ballooning with wide boxes: every
    # under-parabola lies below f, so max_j min p_j^- is still below min f,
    # and it is below the lower envelope minimum (max-min <= min-max).
    value_range = transcendental_value_range(name, child_enclosure)
    z_lo = max(p.range_over(child_enclosure).lo for p in unders) \
        if unders else value_range.lo
    z_hi = min(q.range_over(child_enclosure).hi for q in overs) \
        if overs else value_range.hi
    value_range = Interval(min(z_lo, z_hi), max(z_lo, z_hi))
    liftings, constraints, z, total = _add_lifting(
        n, liftings, constraints, name, value_range)
    u = u.extend(total)
    constraints = [c.extend(total) for c in constraints]
    for p in unders:
        constraints.append(z - p.poly_in(u))
    for q in overs:
        constraints.append(q.poly_in(u) - z)
    return SAEstimator(n, liftings, tuple(constraints), z)


def compose_ia(name: str, child: SAEstimator,
               child_enclosure: Interval) -> SAEstimator:
    """Template-free composition: the node value is a lifting variable
    constrained only by the interval range of the function (ia_sos mode)."""
    n = child.n
    value_range = transcendental_value_range(name, child_enclosure)
    liftings, constraints, z, total = _add_lifting(
        n, child.liftings, list(child.constraints), name, value_range)
    constraints = [c.extend(total) for c in constraints]
    return SAEstimator(n, liftings, tuple(constraints), z)


def compose_bop(op: str, e1: SAEstimator, e2: SAEstimator,
                enc1: Interval, enc2: Interval) -> SAEstimator:
    """Combine child estimators through a binary operation."""
    total, liftings, constraints, P1, P2 = merge(e1, e2)
    n = e1.n
    if op == "+":
        return SAEstimator(n, liftings, tuple(constraints), P1 + P2)
    if op == "-":
        return SAEstimator(n, liftings, tuple(constraints), P1 - P2)
    if op == "*":
        liftings, constraints, u1 = _ensure_low_degree(
            n, liftings, constraints, P1, enc1, "prod-arg")
        u2 = P2.extend(n + len(liftings))
        constraints = [c.extend(n + len(liftings)) for c in constraints]
        liftings, constraints, u2 = _ensure_low_degree(
            n, liftings, constraints, u2, enc2, "prod-arg")
        u1 = u1.extend(n + len(liftings))
        constraints = [c.extend(n + len(liftings)) for c in constraints]
        return SAEstimator(n, liftings, tuple(constraints), u1 * u2)
    if op == "/":
        if enc2.lo <= 0.0 <= enc2.hi:
            raise DomainError("denominator enclosure contains zero")
        liftings, constraints, den = _ensure_low_degree(
            n, liftings, constraints, P2, enc2, "quot-den")
        num = P1.extend(n + len(liftings))
        constraints = [c.extend(n + len(liftings)) for c in constraints]
        liftings, constraints, num = _ensure_low_degree(
            n, liftings, constraints, num, enc1, "quot-num")
        wrange = enc1 / enc2
        liftings, constraints, w, total = _add_lifting(
            n, liftings, constraints, "quot", wrange)
        num = num.extend(total)
        den = den.extend(total)
        constraints = [c.extend(total) for c in constraints]
        constraints.append(w * den - num)
        constraints.append(num - w * den)
        return SAEstimator(n, liftings, tuple(constraints), w)
    raise ValueError(f"unknown binary operation {op!r}")

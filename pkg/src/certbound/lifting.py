"""Semialgebraic lifting: from expression trees and estimators to POPs.

Non-polynomial but algebraic operations (sqrt, abs, min/max, division) are
rewritten with auxiliary variables and polynomial equality/inequality
constraints whose solution set contains the graph of the operation.  The
resulting polynomial problems are handed to the Lasserre relaxation;
min_sa / max_sa share one code path via objective negation.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .estimator import SAEstimator, _add_lifting, _ensure_low_degree, compose_bop, merge
from .interval import Box, DomainError, Interval
from .poly import SparsePoly
from .relax import POPInstance, PopBoundResult, min_k_order, pop_lower_bound

__all__ = ["LiftingPlan", "translate", "estimator_enclosure", "to_pop",
           "min_sa", "max_sa"]


@dataclass(frozen=True)
class LiftingPlan:
    """Summary of the auxiliary variables an estimator introduces."""
    n_original: int
    n_lifting: int
    origins: tuple[str, ...]
    bounds: tuple[Interval, ...]

    @staticmethod
    def of(e: SAEstimator) -> "LiftingPlan":
        return LiftingPlan(e.n, e.n_lifting,
                           tuple(lv.origin for lv in e.liftings),
                           tuple(lv.bounds for lv in e.liftings))


def extended_box(e: SAEstimator, box: Box) -> Box:
    return Box(list(box.intervals) + [lv.bounds for lv in e.liftings])


def estimator_enclosure(e: SAEstimator, box: Box) -> Interval:
    """Interval enclosure of the objective over box x lifting bounds.

    Every relaxation-feasible point lies in that product, so the enclosure
    is valid for anything the objective can take on the feasible set."""
    return e.objective.to_float().interval_eval(extended_box(e, box))


def translate(t: ex.Expr, box: Box) -> SAEstimator:
    """Exact semialgebraic estimator of a semialgebraic tree: the true
    values of all liftings satisfy every constraint with equality where an
    equality pair is used, so the relaxation optimum equals the true
    optimum (before SDP relaxation)."""
    est, _ = _tr(t, box)
    return est


def _tr(t: ex.Expr, box: Box) -> tuple[SAEstimator, Interval]:
    n = box.n
    if isinstance(t, ex.Const):
        v = float(t.value)
        return SAEstimator.of_poly(n, SparsePoly.constant(n, v)), Interval(v, v)
    if isinstance(t, ex.Var):
        return SAEstimator.of_poly(n, SparsePoly.variable(n, t.index)), box[t.index]
    if isinstance(t, ex.Binary):
        e1, i1 = _tr(t.left, box)
        e2, i2 = _tr(t.right, box)
        if t.op == "*" and e1.n_lifting == 0 and e2.n_lifting == 0:
            out = SAEstimator.of_poly(n, e1.objective * e2.objective)
        else:
            out = compose_bop(t.op, e1, e2, i1, i2)
        return out, _bop_interval(t.op, i1, i2)
    if isinstance(t, ex.Pow):
        e1, i1 = _tr(t.base, box)
        return _power(e1, t.exponent, i1), i1.pow_int(t.exponent)
    if isinstance(t, ex.Sqrt):
        e1, i1 = _tr(t.child, box)
        return _sqrt_lift(e1, i1)
    if isinstance(t, ex.Abs):
        e1, i1 = _tr(t.child, box)
        return _abs_lift(e1, i1)
    if isinstance(t, ex.MinMax):
        e1, i1 = _tr(t.children[0], box)
        e2, i2 = _tr(t.children[1], box)
        return _minmax_lift(t.kind, e1, e2, i1, i2)
    if isinstance(t, ex.Func):
        raise ValueError("transcendental node in semialgebraic translation")
    raise TypeError(f"unknown node {type(t).__name__}")


def _bop_interval(op: str, a: Interval, b: Interval) -> Interval:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return a / b


def _power(e: SAEstimator, exponent: int, enc: Interval) -> SAEstimator:
    n = e.n
    liftings, constraints, u = _ensure_low_degree(
        n, e.liftings, list(e.constraints), e.objective, enc, "pow-base")
    return SAEstimator(n, liftings, tuple(constraints), u.pow(exponent))


def _sqrt_lift(e: SAEstimator, enc: Interval) -> tuple[SAEstimator, Interval]:
    if enc.hi < 0.0:
        raise DomainError("sqrt argument enclosure is negative")
    enc = Interval(max(enc.lo, 0.0), max(enc.hi, 0.0))
    n = e.n
    liftings, constraints, u = _ensure_low_degree(
        n, e.liftings, list(e.constraints), e.objective, enc, "sqrt-arg")
    rng = enc.sqrt()
    liftings, constraints, y, total = _add_lifting(
        n, liftings, constraints, "sqrt", rng)
    u = u.extend(total)
    constraints = [c.extend(total) for c in constraints]
    constraints.append(y * y - u)
    constraints.append(u - y * y)
    return SAEstimator(n, liftings, tuple(constraints), y), rng


def _abs_lift(e: SAEstimator, enc: Interval) -> tuple[SAEstimator, Interval]:
    n = e.n
    liftings, constraints, u = _ensure_low_degree(
        n, e.liftings, list(e.constraints), e.objective, enc, "abs-arg")
    rng = enc.abs()
    liftings, constraints, a, total = _add_lifting(
        n, liftings, constraints, "abs", rng)
    u = u.extend(total)
    constraints = [c.extend(total) for c in constraints]
    constraints.append(a - u)
    constraints.append(a + u)
    constraints.append(a * a - u * u)
    constraints.append(u * u - a * a)
    return SAEstimator(n, liftings, tuple(constraints), a), rng


def _minmax_lift(kind: str, e1: SAEstimator, e2: SAEstimator,
                 i1: Interval, i2: Interval) -> tuple[SAEstimator, Interval]:
    n = e1.n
    _, liftings, constraints, P1, P2 = merge(e1, e2)
    liftings, constraints, u1 = _ensure_low_degree(
        n, liftings, constraints, P1, i1, f"{kind}-arg")
    u2 = P2.extend(n + len(liftings))
    constraints = [c.extend(n + len(liftings)) for c in constraints]
    liftings, constraints, u2 = _ensure_low_degree(
        n, liftings, constraints, u2, i2, f"{kind}-arg")
    u1 = u1.extend(n + len(liftings))
    constraints = [c.extend(n + len(liftings)) for c in constraints]
    rng = i1.min_(i2) if kind == "min" else i1.max_(i2)
    liftings, constraints, w, total = _add_lifting(
        n, liftings, constraints, kind, rng)
    u1 = u1.extend(total)
    u2 = u2.extend(total)
    constraints = [c.extend(total) for c in constraints]
    if kind == "min":
        constraints.append(u1 - w)
        constraints.append(u2 - w)
    else:
        constraints.append(w - u1)
        constraints.append(w - u2)
    constraints.append((u1 - w) * (u2 - w))
    constraints.append(-((u1 - w) * (u2 - w)))
    return SAEstimator(n, liftings, tuple(constraints), w), rng


# ---------------------------------------------------------------------------
# estimator -> POP bridge

def to_pop(e: SAEstimator, box: Box) -> POPInstance:
    total = e.total_vars
    bounds = list(box.intervals) + [lv.bounds for lv in e.liftings]
    cons = [c.normalized_dyadic() for c in e.constraints]
    return POPInstance(total, bounds, cons, e.objective)


def _to_pop_pruned(e: SAEstimator, box: Box) -> tuple[POPInstance, list[int]]:
    """Like to_pop, but original variables absent from the objective and
    every constraint are dropped.  Returns the kept full-space indices;
    liftings are always kept."""
    used: set[int] = set(e.objective.used_vars())
    for c in e.constraints:
        used.update(c.used_vars())
    keep = [i for i in range(e.n) if i in used]
    keep += list(range(e.n, e.total_vars))
    if not keep:  # constant objective: keep one variable so the POP is valid
        keep = [0]
    if len(keep) == e.total_vars:
        return to_pop(e, box), keep
    mapping = {old: new for new, old in enumerate(keep)}
    total = len(keep)
    bounds = [box[i] if i < e.n else e.liftings[i - e.n].bounds for i in keep]
    cons = [c.remap(total, mapping).normalized_dyadic() for c in e.constraints]
    obj = e.objective.remap(total, mapping)
    return POPInstance(total, bounds, cons, obj), keep


def _expand_moments(res: PopBoundResult, e: SAEstimator, box: Box,
                    keep: list[int]) -> None:
    """Re-index a pruned problem's moments into the full variable space.
    Dropped variables get midpoint first-order moments."""
    if len(keep) == e.total_vars:
        return
    total = e.total_vars
    values: dict[tuple, float] = {}
    for alpha, v in res.moments.values.items():
        full = [0] * total
        for pos, ai in enumerate(alpha):
            full[keep[pos]] = ai
        values[tuple(full)] = v
    mid = box.midpoint()
    for i in range(e.n):
        if i not in keep:
            key = tuple(1 if j == i else 0 for j in range(total))
            values[key] = mid[i]
    res.moments.n = total
    res.moments.values = values


def min_sa(e: SAEstimator, box: Box, k: int, tol: float = 1e-8,
           **caps) -> PopBoundResult:
    """Certified-by-construction lower bound of the estimator over the box.

    The relaxation order is raised to the minimum admissible one when the
    lifted constraints outgrow the requested k."""
    pop, keep = _to_pop_pruned(e, box)
    res = pop_lower_bound(pop, max(k, min_k_order(pop)), tol=tol, **caps)
    _expand_moments(res, e, box, keep)
    return res


def max_sa(e: SAEstimator, box: Box, k: int, tol: float = 1e-8,
           **caps) -> PopBoundResult:
    """Upper bound via min_sa on the negated objective; the moment vector
    is that of the negated problem and shares the same x-projection."""
    pop, keep = _to_pop_pruned(e.with_objective(-e.objective), box)
    res = pop_lower_bound(pop, max(k, min_k_order(pop)), tol=tol, **caps)
    _expand_moments(res, e, box, keep)
    res.bound = -res.bound
    res.moments.bound = res.bound
    return res

"""Quadratic template compression.

When an estimator accumulates too many lifting variables, it is replaced
by a single lifting sandwiched between shifted quadratic forms anchored at
the control points.  The curvature shift comes from a Gershgorin bound on
sampled Hessian differences; soundness does not depend on the sampling,
because each form is re-anchored by an offset computed with min_sa/max_sa
against the original estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .estimator import LiftingVar, SAEstimator, build_par
from .interval import Box, Interval
from .lifting import max_sa, min_sa
from .poly import SparsePoly

__all__ = ["QuadraticForm", "TemplateResult", "SmoothModel",
           "build_quadratic_form", "build_template", "halton_points"]

DEFAULT_TEMPLATE_THRESHOLD = 6
HESSIAN_SAMPLES = 50

_PRIMES = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53]


def _halton_1d(index: int, base: int) -> float:
    f, r = 1.0, 0.0
    i = index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def halton_points(box: Box, count: int, skip: int = 13) -> list[list[float]]:
    """Deterministic low-discrepancy points in the box."""
    n = box.n
    if n > len(_PRIMES):
        raise ValueError("too many dimensions for the Halton bases")
    out = []
    for idx in range(skip, skip + count):
        pt = []
        for i in range(n):
            u = _halton_1d(idx, _PRIMES[i])
            iv = box[i]
            pt.append(iv.lo + u * (iv.hi - iv.lo))
        out.append(pt)
    return out


def _tree_vars(t: ex.Expr) -> set[int]:
    if isinstance(t, ex.Var):
        return {t.index}
    if isinstance(t, ex.Const):
        return set()
    if isinstance(t, ex.Binary):
        return _tree_vars(t.left) | _tree_vars(t.right)
    if isinstance(t, ex.Pow):
        return _tree_vars(t.base)
    if isinstance(t, (ex.Sqrt, ex.Abs, ex.Func)):
        return _tree_vars(t.child)
    if isinstance(t, ex.MinMax):
        return _tree_vars(t.children[0]) | _tree_vars(t.children[1])
    raise TypeError(f"unknown node {type(t).__name__}")


class SmoothModel:
    """Cached first and second derivative trees of a smooth expression."""

    def __init__(self, t: ex.Expr, n: int):
        self.t = t
        self.n = n
        self.grad = [ex.differentiate(t, i) for i in range(n)]
        self.hess = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                h = ex.differentiate(self.grad[i], j)
                self.hess[i][j] = h
                self.hess[j][i] = h

    def value(self, x) -> float:
        return ex.evaluate(self.t, x)

    def grad_at(self, x) -> np.ndarray:
        return np.array([ex.evaluate(g, x) for g in self.grad])

    def hess_at(self, x) -> np.ndarray:
        H = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                H[i, j] = H[j, i] = ex.evaluate(self.hess[i][j], x)
        return H


@dataclass
class QuadraticForm:
    """Taylor model at a control point with curvature-shifted halves:
    lower(x) = value + g.(x-p) + (1/2)(x-p)'(H + lam_lo I)(x-p), upper
    analogous with lam_hi.  Only the subtree's active variables appear."""
    point: list[float]
    value: float
    grad: np.ndarray
    hess: np.ndarray
    lam_lo: float
    lam_hi: float
    active: tuple[int, ...] = ()

    def _poly(self, n: int, lam: float) -> SparsePoly:
        active = self.active if self.active else tuple(range(n))
        dx = [SparsePoly.variable(n, i).shift_constant(-self.point[i])
              for i in range(n)]
        q = SparsePoly.constant(n, self.value)
        for i in active:
            if self.grad[i] != 0.0:
                q = q + dx[i].scale(float(self.grad[i]))
        Hs = self.hess + lam * np.eye(n)
        for i in active:
            for j in active:
                c = 0.5 * float(Hs[i, j])
                if c != 0.0:
                    q = q + (dx[i] * dx[j]).scale(c)
        return q

    def poly_lower(self, n: int) -> SparsePoly:
        return self._poly(n, self.lam_lo)

    def poly_upper(self, n: int) -> SparsePoly:
        return self._poly(n, self.lam_hi)


def build_quadratic_form(model: SmoothModel, point, box: Box,
                         n_samples: int = HESSIAN_SAMPLES) -> QuadraticForm:
    """Quadratic form anchored at the (clamped) point, with the curvature
    shift from a Gershgorin estimate of the Hessian variation over the box.
    Variables the expression does not mention stay out of the form."""
    p = box.clamp(list(point))
    v = model.value(p)
    g = model.grad_at(p)
    H0 = model.hess_at(p)
    n = box.n
    active = tuple(sorted(_tree_vars(model.t))) or tuple(range(n))
    lo = np.zeros((n, n))
    hi = np.zeros((n, n))
    samples = halton_points(box, n_samples)
    # Hessian extremes often sit on the boundary, which low-discrepancy
    # interior points miss: add the corners (when few) and the per-axis
    # extremes through the anchor
    if 2 ** len(active) <= 2 * n_samples:
        corners = [list(p)]
        for i in active:
            corners = [c[:i] + [e] + c[i + 1:]
                       for c in corners for e in (box[i].lo, box[i].hi)]
        samples.extend(corners)
    for i in active:
        for e in (box[i].lo, box[i].hi):
            samples.append(p[:i] + [e] + p[i + 1:])
    for y in samples:
        D = model.hess_at(y) - H0
        lo = np.minimum(lo, D)
        hi = np.maximum(hi, D)
    mag = np.maximum(np.abs(lo), np.abs(hi))
    lam_lo = 0.0
    lam_hi = 0.0
    for i in active:
        off = float(sum(mag[i, j] for j in active if j != i))
        lam_lo = min(lam_lo, float(lo[i, i]) - off)
        lam_hi = max(lam_hi, float(hi[i, i]) + off)
    return QuadraticForm(p, v, g, H0, lam_lo, lam_hi, active)


def _poly_of(t: ex.Expr, n: int) -> SparsePoly | None:
    """Float polynomial of a polynomial tree, or None for anything else."""
    if isinstance(t, ex.Const):
        return SparsePoly.constant(n, float(t.value))
    if isinstance(t, ex.Var):
        return SparsePoly.variable(n, t.index)
    if isinstance(t, ex.Binary) and t.op in ("+", "-", "*"):
        a = _poly_of(t.left, n)
        b = _poly_of(t.right, n)
        if a is None or b is None:
            return None
        return a + b if t.op == "+" else a - b if t.op == "-" else a * b
    if isinstance(t, ex.Pow):
        a = _poly_of(t.base, n)
        if a is None:
            return None
        out = SparsePoly.constant(n, 1.0)
        for _ in range(t.exponent):
            out = out * a
        return out
    return None


def _affine_decompose(t: ex.Expr, n: int):
    """Split t into poly + sum of c_i * func_i(affine arg_i); None if t is
    not of that shape."""
    p = _poly_of(t, n)
    if p is not None:
        return p, []
    if isinstance(t, ex.Func):
        arg = _poly_of(t.child, n)
        if arg is None or arg.degree > 1:
            return None
        return SparsePoly.zero(n), [(1.0, t.name, t.child, arg)]
    if isinstance(t, ex.Binary):
        if t.op in ("+", "-"):
            a = _affine_decompose(t.left, n)
            b = _affine_decompose(t.right, n)
            if a is None or b is None:
                return None
            if t.op == "+":
                return a[0] + b[0], a[1] + b[1]
            return a[0] - b[0], [(-c, nm, tr, ap) for c, nm, tr, ap in b[1]]
        if t.op == "*":
            for const, other in ((t.left, t.right), (t.right, t.left)):
                if isinstance(const, ex.Const):
                    d = _affine_decompose(other, n)
                    if d is None:
                        return None
                    c0 = float(const.value)
                    return d[0].scale(c0), [(c0 * c, nm, tr, ap)
                                            for c, nm, tr, ap in d[1]]
    return None


MAX_TEMPLATE_POINTS = 32
SAG_TARGET_FRACTION = 0.02


def _envelope_sag(args, points) -> float:
    """Worst-case gap between the parabola envelope and the function for an
    affine combination: per term, the largest squared distance from any
    argument value to its nearest anchored control point, times the
    curvature bound, summed with the combination weights."""
    total = 0.0
    for coef, name, argtree, argpoly, iv, dd in args:
        us = sorted(iv.clamp(ex.evaluate(argtree, p)) for p in points)
        d = max(us[0] - iv.lo, iv.hi - us[-1])
        for a, b in zip(us, us[1:]):
            d = max(d, 0.5 * (b - a))
        curv = max(abs(dd.lo), abs(dd.hi))
        total += abs(coef) * 0.5 * curv * d * d
    return total


def _build_affine_template(t: ex.Expr, box: Box,
                           points: list) -> TemplateResult | None:
    """Direct template for affine combinations of transcendental nodes with
    affine arguments: substituting the parabola sandwich of each node (sign
    of its coefficient choosing the side) gives sound quadratic under- and
    over-estimators per control point, with no offset solves needed.

    Control points are topped up with low-discrepancy fill until the
    envelope sag is small next to the value enclosure, so narrow boxes get
    tight templates without configuration changes."""
    dec = _affine_decompose(t, box.n)
    if dec is None or not dec[1]:
        return None
    poly_part, terms = dec
    n = box.n
    use_points = list(points) if points else [box.midpoint()]
    args = []
    for coef, name, argtree, argpoly in terms:
        iv = ex.interval_eval(argtree, box)
        dd = ex.second_derivative_range(name, iv)
        args.append((coef, name, argtree, argpoly, iv, dd))
    enclosure = ex.interval_eval(t, box)
    target = SAG_TARGET_FRACTION * (enclosure.width + 1.0)
    skip = 13
    while len(use_points) < MAX_TEMPLATE_POINTS:
        try:
            if _envelope_sag(args, use_points) <= target:
                break
        except (ValueError, OverflowError, ZeroDivisionError):
            break
        batch = min(max(len(use_points), 2),
                    MAX_TEMPLATE_POINTS - len(use_points))
        use_points.extend(halton_points(box, batch, skip=skip))
        skip += batch
    lows: list[SparsePoly] = []
    ups: list[SparsePoly] = []
    for p in use_points:
        under = poly_part
        over = poly_part
        try:
            for coef, name, argtree, argpoly, iv, dd in args:
                u_c = iv.clamp(ex.evaluate(argtree, p))
                unders, overs = build_par(name, iv, [u_c])
                pl = unders[0].poly_in(argpoly)
                pu = overs[0].poly_in(argpoly)
                if coef >= 0.0:
                    under = under + pl.scale(coef)
                    over = over + pu.scale(coef)
                else:
                    under = under + pu.scale(coef)
                    over = over + pl.scale(coef)
        except (ValueError, OverflowError, ZeroDivisionError):
            continue
        lows.append(under)
        ups.append(over)
    if not lows:
        return None
    total = n + 1
    v = SparsePoly.variable(total, n)
    constraints = [v - ql.extend(total) for ql in lows]
    constraints += [qu.extend(total) - v for qu in ups]
    compressed = SAEstimator(n, (LiftingVar("template", enclosure),),
                             tuple(constraints), v)
    return TemplateResult(compressed, applied=True)


@dataclass
class TemplateResult:
    estimator: SAEstimator
    applied: bool
    warning: str = ""
    forms: list[QuadraticForm] = field(default_factory=list)
    offsets: list[tuple[float, float]] = field(default_factory=list)
    degraded: bool = False
    certificates: list[str] = field(default_factory=list)


def build_template(t: ex.Expr, box: Box, k: int, points: list,
                   est: SAEstimator,
                   threshold: int = DEFAULT_TEMPLATE_THRESHOLD,
                   tol: float = 1e-8, n_samples: int = HESSIAN_SAMPLES,
                   bound_hook=None, **caps) -> TemplateResult:
    """Compress the estimator to one lifting variable when it carries more
    than `threshold` liftings; pass through unchanged otherwise.

    Each control point contributes a lower form q- + m and an upper form
    q+ + M, where the offsets m = min_sa(P - q-) and M = max_sa(P - q+)
    are computed against the original estimator, so the sandwich holds no
    matter how rough the sampled curvature shift is."""
    if est.n_lifting <= threshold:
        return TemplateResult(est, applied=False)
    aff = _build_affine_template(t, box, points)
    if aff is not None:
        return aff
    if not ex.is_smooth(t):
        return TemplateResult(est, applied=False,
                              warning="non-smooth subtree, template skipped")
    n = box.n
    try:
        model = SmoothModel(t, n)
    except ex.NonSmoothError:
        return TemplateResult(est, applied=False,
                              warning="non-differentiable subtree, template skipped")

    use_points = points if points else [box.midpoint()]
    forms: list[QuadraticForm] = []
    offsets: list[tuple[float, float]] = []
    lows: list[SparsePoly] = []
    ups: list[SparsePoly] = []
    degraded = False
    certs: list[str] = []
    for p in use_points:
        try:
            qf = build_quadratic_form(model, p, box, n_samples=n_samples)
        except (ValueError, OverflowError, ZeroDivisionError):
            continue
        ql = qf.poly_lower(n).extend(est.total_vars)
        qu = qf.poly_upper(n).extend(est.total_vars)
        # offsets are sound at any relaxation order; the lowest admissible
        # one is dramatically cheaper and (the estimator being the binding
        # limit) rarely looser than order k
        rm = min_sa(est.with_objective(est.objective - ql), box, 1, tol=tol, **caps)
        rM = max_sa(est.with_objective(est.objective - qu), box, 1, tol=tol, **caps)
        if not (math.isfinite(rm.bound) and math.isfinite(rM.bound)):
            continue
        if bound_hook is not None:
            m_off, ref_m = bound_hook(rm, "lower")
            M_off, ref_M = bound_hook(rM, "upper")
            certs.extend(r for r in (ref_m, ref_M) if r)
        else:
            m_off, M_off = rm.bound, rM.bound
        degraded = degraded or rm.degraded or rM.degraded
        forms.append(qf)
        offsets.append((m_off, M_off))
        lows.append(qf.poly_lower(n).shift_constant(m_off))
        ups.append(qf.poly_upper(n).shift_constant(M_off))
    if not forms:
        return TemplateResult(est, applied=False, degraded=True,
                              warning="template offsets failed, estimator kept")

    enclosure = ex.interval_eval(t, box)
    total = n + 1
    v = SparsePoly.variable(total, n)
    constraints = []
    for ql in lows:
        constraints.append(v - ql.extend(total))
    for qu in ups:
        constraints.append(qu.extend(total) - v)
    compressed = SAEstimator(n, (LiftingVar("template", enclosure),),
                             tuple(constraints), v)
    return TemplateResult(compressed, applied=True, forms=forms,
                          offsets=offsets, degraded=degraded,
                          certificates=certs)

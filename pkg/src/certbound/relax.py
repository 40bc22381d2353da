"""Lasserre relaxations of polynomial optimization problems.

The order-k relaxation is assembled in SOS form: one Gram block per
constraint (g_0 = 1 included), linear constraints matching coefficients
of the Putinar identity  f - mu = sum_j sigma_j g_j.  The SDP primal
carries the Gram matrices; the dual variables are the moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .interval import Box, Interval
from .poly import MonomialBasis, SparsePoly, monomials_up_to
from .sdp import SDPProblem, SDPSolution, SDPStatus, solve_sdp

__all__ = [
    "POPInstance", "MomentSolution", "QkAssembly", "PopBoundResult",
    "SizeCapError", "assemble_Qk", "pop_lower_bound", "min_k_order",
]

# Safety factor applied to solver residuals when exporting numeric bounds.
RESIDUAL_MARGIN_FACTOR = 10.0

# Stalled solves with residuals and relative gap below this are still
# exported (with the residual margin); worse ones fall back to intervals.
LOOSE_ACCEPT = 1e-5

DEFAULT_ROW_CAP = 2000
DEFAULT_CONSTRAINT_CAP = 6000


class SizeCapError(ValueError):
    """The assembled SDP would exceed the configured size cap."""


@dataclass
class POPInstance:
    """min objective over the box intersected with {g_j >= 0}.

    Equality constraints are encoded by the caller as inequality pairs.
    Every variable must carry finite box bounds."""
    n: int
    bounds: list[Interval]
    constraints: list[SparsePoly]
    objective: SparsePoly

    def __post_init__(self):
        if len(self.bounds) != self.n:
            raise ValueError("bounds/dimension mismatch")
        for g in self.constraints:
            if g.n != self.n:
                raise ValueError("constraint dimension mismatch")
        if self.objective.n != self.n:
            raise ValueError("objective dimension mismatch")

    def box(self) -> Box:
        return Box(self.bounds)

    def box_constraint_polys(self) -> list[SparsePoly]:
        """Per variable: the affine pair x_i - lo >= 0, hi - x_i >= 0 and the
        quadratic form (hi - x_i)(x_i - lo) >= 0.  The quadratic form is
        redundant as a constraint set but not for the relaxation: without it
        the order-k SOS cone cannot reach objectives of degree 2k whose top
        homogeneous part is not itself SOS."""
        out = []
        for i, iv in enumerate(self.bounds):
            xi = SparsePoly.variable(self.n, i, exact=True)
            lo_side = xi.shift_constant(-Fraction(iv.lo))
            hi_side = (-xi).shift_constant(Fraction(iv.hi))
            out.append(lo_side.normalized_dyadic())
            out.append(hi_side.normalized_dyadic())
            out.append((lo_side * hi_side).normalized_dyadic())
        return out

    def all_constraints(self) -> list[SparsePoly]:
        return self.box_constraint_polys() + list(self.constraints)


@dataclass
class MomentSolution:
    """Moment vector indexed by monomials |alpha| <= 2k (y_0 = 1)."""
    n: int
    order: int
    values: dict[tuple, float]
    bound: float

    @property
    def x_sdp(self) -> list[float]:
        out = []
        for i in range(self.n):
            e = [0] * self.n
            e[i] = 1
            out.append(self.values.get(tuple(e), 0.0))
        return out


@dataclass
class QkAssembly:
    """An assembled relaxation plus the metadata the certificate path needs."""
    pop: POPInstance
    order: int
    constraints: list[SparsePoly]       # g_1..g_m (box constraints included)
    block_bases: list[MonomialBasis]    # block 0 is the SOS block for g_0 = 1
    monomials: list[tuple]              # all |alpha| <= 2k, graded lex
    sdp: SDPProblem
    f0: float

    @property
    def gram_rows(self) -> int:
        return sum(len(b) for b in self.block_bases)


@dataclass
class PopBoundResult:
    bound: float
    moments: MomentSolution
    assembly: QkAssembly | None
    solution: SDPSolution | None
    degraded: bool = False
    message: str = ""


def min_k_order(pop: POPInstance) -> int:
    """Smallest admissible relaxation order for the instance."""
    k0 = max(1, (pop.objective.degree + 1) // 2)
    for g in pop.constraints:
        k0 = max(k0, (g.degree + 1) // 2)
    return k0


def assemble_Qk(pop: POPInstance, k: int,
                row_cap: int = DEFAULT_ROW_CAP,
                constraint_cap: int = DEFAULT_CONSTRAINT_CAP) -> QkAssembly:
    """Build the order-k SOS relaxation as a block SDP."""
    k0 = min_k_order(pop)
    if k < k0:
        raise ValueError(f"order {k} below minimum {k0}")

    n = pop.n
    gs = pop.all_constraints()
    monos = monomials_up_to(n, 2 * k)
    mono_index = {a: i for i, a in enumerate(monos)}
    m = len(monos) - 1  # alpha = 0 is eliminated into the objective
    if m > constraint_cap:
        raise SizeCapError(f"{m} linear constraints exceed cap {constraint_cap}")

    bases = [MonomialBasis(n, k)]
    for g in gs:
        bases.append(MonomialBasis(n, k - (g.degree + 1) // 2))
    if sum(len(b) for b in bases) > row_cap:
        raise SizeCapError(
            f"{sum(len(b) for b in bases)} Gram rows exceed cap {row_cap}")

    block_sizes = [len(b) for b in bases]
    C = [np.zeros((s, s)) for s in block_sizes]
    A = [np.zeros((m, s, s)) for s in block_sizes]

    one = SparsePoly.constant(n, 1, exact=True)
    for blk, (g, basis) in enumerate(zip([one] + gs, bases)):
        s = len(basis)
        gterms = [(beta, float(c)) for beta, c in g.coeffs.items()]
        for u in range(s):
            au = basis[u]
            for v in range(u, s):
                av = basis[v]
                base = tuple(x + y for x, y in zip(au, av))
                w = 1.0 if u == v else 1.0  # symmetric fill below
                for beta, c in gterms:
                    alpha = tuple(x + y for x, y in zip(base, beta))
                    idx = mono_index[alpha]
                    if idx == 0:
                        C[blk][u, v] += c * w
                        if u != v:
                            C[blk][v, u] += c * w
                    else:
                        A[blk][idx - 1, u, v] += c * w
                        if u != v:
                            A[blk][idx - 1, v, u] += c * w

    fobj = pop.objective.to_float()
    b = np.zeros(m)
    f0 = 0.0
    for alpha, c in fobj.coeffs.items():
        idx = mono_index.get(alpha)
        if idx is None:
            raise ValueError("objective degree exceeds 2k")
        if idx == 0:
            f0 = float(c)
        else:
            b[idx - 1] = float(c)

    sdp = SDPProblem(block_sizes, C, A, b)
    return QkAssembly(pop=pop, order=k, constraints=gs, block_bases=bases,
                      monomials=monos, sdp=sdp, f0=f0)


def interval_fallback_bound(pop: POPInstance) -> float:
    """Sound lower bound from interval evaluation over the variable box,
    ignoring the polynomial constraints."""
    return pop.objective.to_float().interval_eval(pop.box()).lo


def _unit_scaling(pop: POPInstance):
    """Exact affine change of variables x = mid + rad * u mapping the box
    onto [-1, 1]^n.  Interior-point behaviour degrades sharply on offset or
    skewed boxes; the optimum value is invariant under the substitution.
    Returns (scaled_pop, mids, rads), or None when already the unit box."""
    mids = [Fraction(iv.lo) / 2 + Fraction(iv.hi) / 2 for iv in pop.bounds]
    rads = [Fraction(iv.hi) / 2 - Fraction(iv.lo) / 2 for iv in pop.bounds]
    if all(m == 0 and r == 1 for m, r in zip(mids, rads)):
        return None
    unit = Interval(-1.0, 1.0)
    cons = [g.affine_image(mids, rads).normalized_dyadic()
            for g in pop.constraints]
    obj = pop.objective.affine_image(mids, rads)
    return POPInstance(pop.n, [unit] * pop.n, cons, obj), mids, rads


def _unscale_moments(monomials, yu: dict, mids, rads, n: int) -> dict:
    """Moments of the original monomials from moments over the unit box."""
    fm = [float(m) for m in mids]
    fr = [float(r) for r in rads]
    values = {}
    for alpha in monomials:
        poly = SparsePoly(n, {alpha: 1.0}).affine_image(fm, fr)
        values[alpha] = sum(float(c) * yu[beta]
                            for beta, c in poly.coeffs.items())
    return values


def pop_lower_bound(pop: POPInstance, k: int, tol: float = 1e-8,
                    row_cap: int = DEFAULT_ROW_CAP,
                    constraint_cap: int = DEFAULT_CONSTRAINT_CAP) -> PopBoundResult:
    """Lower bound of the POP via the order-k relaxation.

    On SDP failure or size-cap overflow, falls back to the interval bound
    with the degraded flag set."""
    scaling = _unit_scaling(pop)
    work = pop if scaling is None else scaling[0]
    try:
        asm = assemble_Qk(work, k, row_cap=row_cap, constraint_cap=constraint_cap)
    except SizeCapError as exc:
        bound = interval_fallback_bound(pop)
        moments = _degenerate_moments(pop, k, bound)
        return PopBoundResult(bound, moments, None, None, degraded=True,
                              message=str(exc))

    def usable_(s):
        return s.status == SDPStatus.OPTIMAL or (
            s.status == SDPStatus.STALLED
            and max(s.rel_gap, s.primal_residual, s.dual_residual) <= LOOSE_ACCEPT)

    sol = solve_sdp(asm.sdp, tol=tol)
    if not usable_(sol):
        # an unbounded primal optimal face (equality constraint pairs)
        # shows up as a stall with tiny gap; a small trace penalty bounds
        # the face at a marginal cost in bound quality
        for ridge in (1e-8, 1e-6):
            retry = solve_sdp(asm.sdp, tol=tol, ridge=ridge)
            if usable_(retry):
                sol = retry
                break
    usable = usable_(sol)
    if not usable:
        bound = interval_fallback_bound(pop)
        moments = _degenerate_moments(pop, k, bound)
        return PopBoundResult(bound, moments, asm, sol, degraded=True,
                              message=f"SDP {sol.status.value}: {sol.message}")

    margin = RESIDUAL_MARGIN_FACTOR * (
        sol.primal_residual * (1.0 + float(np.linalg.norm(asm.sdp.b)))
        + sol.dual_residual * (1.0 + max(float(np.linalg.norm(Cb))
                                         for Cb in asm.sdp.C))
        + abs(sol.gap))
    mu = asm.f0 - sol.primal_obj
    bound = mu - margin
    # plain interval evaluation is sound and sometimes beats a sloppy solve
    bound = max(bound, interval_fallback_bound(pop))

    values = {asm.monomials[0]: 1.0}
    for i, alpha in enumerate(asm.monomials[1:]):
        values[alpha] = -float(sol.y[i])
    if scaling is not None:
        values = _unscale_moments(asm.monomials, values,
                                  scaling[1], scaling[2], pop.n)
    moments = MomentSolution(pop.n, k, values, bound)
    return PopBoundResult(bound, moments, asm, sol,
                          degraded=sol.status != SDPStatus.OPTIMAL,
                          message=sol.message if sol.status != SDPStatus.OPTIMAL
                          else "")


def _degenerate_moments(pop: POPInstance, k: int, bound: float) -> MomentSolution:
    values = {(0,) * pop.n: 1.0}
    mid = pop.box().midpoint()
    for i in range(pop.n):
        e = [0] * pop.n
        e[i] = 1
        values[tuple(e)] = mid[i]
    return MomentSolution(pop.n, k, values, bound)

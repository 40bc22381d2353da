"""Shared helpers: random expression trees, grid oracles, benchmark sources."""

from __future__ import annotations

import math
import random

import certbound.expr as ex
from certbound.interval import Box, Interval

# ---------------------------------------------------------------------------
# benchmark sources

MC_SRC = "sin(x1+x2) + (x1-x2)^2 - 1.5*x1 + 2.5*x2 + 1"
MC_BOX = Box([Interval(-1.5, 4.0), Interval(-3.0, 3.0)])
# analytic: stationary point with cos(s) = -1/2, x1 - x2 = 1
MC_TRUE_MIN = 0.5 - math.sqrt(3) / 2 - (2 * math.pi / 3 + 1) / 2


def mc_tree() -> ex.Expr:
    return ex.parse_expr(MC_SRC, {"x1": 0, "x2": 1})


def shubert_factor(v: str) -> str:
    terms = [f"{j}*cos({j + 1}*{v} + {j})" for j in range(1, 6)]
    return "(" + " + ".join(terms) + ")"


SBT_SRC = shubert_factor("x1") + " * " + shubert_factor("x2")
SBT_BOX = Box([Interval(-10.0, 10.0), Interval(-10.0, 10.0)])


def sbt_tree() -> ex.Expr:
    return ex.parse_expr(SBT_SRC, {"x1": 0, "x2": 1})


def swf_src(n: int, eps: int = 0) -> str:
    parts = []
    for i in range(1, n + 1):
        if eps:
            j = i % n + 1
            parts.append(f"-(x{i} + {eps}*x{j})*sin(sqrt(x{i}))")
        else:
            parts.append(f"-(x{i})*sin(sqrt(x{i}))")
    return " + ".join(parts)


def swf_tree(n: int, eps: int = 0) -> ex.Expr:
    return ex.parse_expr(swf_src(n, eps), {f"x{i + 1}": i for i in range(n)})


def swf_box(n: int) -> Box:
    return Box([Interval(1.0, 500.0)] * n)


# ---------------------------------------------------------------------------
# grid oracles

def grid_points(box: Box, per_axis: int):
    """Regular grid including the box corners."""
    axes = []
    for iv in box:
        if per_axis == 1:
            axes.append([iv.mid])
        else:
            step = iv.width / (per_axis - 1)
            axes.append([iv.lo + i * step for i in range(per_axis)])
    idx = [0] * box.n
    while True:
        yield [axes[d][idx[d]] for d in range(box.n)]
        d = 0
        while d < box.n:
            idx[d] += 1
            if idx[d] < per_axis:
                break
            idx[d] = 0
            d += 1
        else:
            return


def grid_min(t: ex.Expr, box: Box, per_axis: int) -> float:
    return min(ex.evaluate(t, x) for x in grid_points(box, per_axis))


def grid_max(t: ex.Expr, box: Box, per_axis: int) -> float:
    return max(ex.evaluate(t, x) for x in grid_points(box, per_axis))


def random_point(rng: random.Random, box: Box) -> list[float]:
    return [iv.lo + rng.random() * iv.width for iv in box]


# ---------------------------------------------------------------------------
# random smooth trees over a safe grammar

_SAFE_FUNCS = ("sin", "cos", "atan")


def random_smooth_tree(rng: random.Random, n: int, depth: int) -> ex.Expr:
    """Random tree that is smooth and domain-safe on any box within
    [-3, 3]^n: polynomials combined with sin/cos/atan and a guarded exp."""
    if depth == 0 or rng.random() < 0.3:
        r = rng.random()
        if r < 0.45:
            return ex.Var(rng.randrange(n))
        return ex.Const(rng.choice([-2, -1, -0.5, 0.5, 1, 2, 3]))
    r = rng.random()
    if r < 0.5:
        op = rng.choice(["+", "-", "*"])
        return ex.Binary(op, random_smooth_tree(rng, n, depth - 1),
                         random_smooth_tree(rng, n, depth - 1))
    if r < 0.65:
        return ex.Pow(random_smooth_tree(rng, n, depth - 1), rng.choice([2, 3]))
    child = random_smooth_tree(rng, n, depth - 1)
    name = rng.choice(_SAFE_FUNCS)
    return ex.Func(name, child)


def random_box(rng: random.Random, n: int, max_half_width: float = 1.0) -> Box:
    ivs = []
    for _ in range(n):
        mid = -1.5 + 3.0 * rng.random()
        half = 0.1 + (max_half_width - 0.1) * rng.random()
        ivs.append(Interval(mid - half, mid + half))
    return Box(ivs)

"""Global optimization driver: estimator recursion, control-point loop,
and branch-and-bound box subdivision.

The recursion walks the expression tree bottom-up.  Semialgebraic subtrees
translate exactly; transcendental nodes get parabola sandwiches anchored
at the control points; overweight estimators are compressed to quadratic
templates.  Each processed box either proves the target bound or is split
at the midpoint of its widest coordinate.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import heapq
import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from .estimator import SAEstimator, build_par, compose, compose_ia, compose_bop
from .interval import Box, DomainError, Interval
from .lifting import (_abs_lift, _minmax_lift, _power, _sqrt_lift, max_sa,
                      min_sa, translate)
from .relax import PopBoundResult, interval_fallback_bound
from .template import DEFAULT_TEMPLATE_THRESHOLD, SmoothModel, build_template

__all__ = ["RunConfig", "BoundReport", "BoxRecord", "TemplateOptimResult",
           "template_optim", "refine_control_points", "certify_bound",
           "initial_control_points", "parse_report"]

DEDUPE_RTOL = 1e-8


@dataclass
class RunConfig:
    order: int = 2
    mode: str = "numeric"               # numeric | certified | ia_sos
    target: float | None = None
    max_boxes: int = 64
    control_points: int = 1             # initial control-point count
    template_threshold: int = DEFAULT_TEMPLATE_THRESHOLD
    box_iteration_cap: int = 4
    tol: float = 1e-8
    seed: int = 0
    jobs: int = 1
    cert_dir: str | None = None
    problem_name: str = "problem"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.max_boxes < 1:
            raise ValueError("max_boxes must be >= 1")
        if self.template_threshold < 1:
            raise ValueError("template threshold must be >= 1")
        if self.mode not in ("numeric", "certified", "ia_sos"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class TemplateOptimResult:
    lower: PopBoundResult
    upper: PopBoundResult
    estimator: SAEstimator
    enclosure: Interval
    certificates: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def m(self) -> float:
        return self.lower.bound

    @property
    def M(self) -> float:
        return self.upper.bound


class _Session:
    """Per-box context threaded through the recursion: configuration,
    control points, and (certified mode) the certificate writer."""

    def __init__(self, cfg: RunConfig, points: list, tag: str = "box0000"):
        self.cfg = cfg
        self.points = points
        self.tag = tag
        self.cert_seq = 0
        self.certificates: list[str] = []
        self.warnings: list[str] = []

    def bound_hook(self, res: PopBoundResult, direction: str):
        """Post-process an SDP bound.  In certified mode, replace it with
        an exactly checked rational bound (or the interval fallback when
        certification fails); numeric mode passes the margin-adjusted
        bound through."""
        if self.cfg.mode != "certified":
            return res.bound, None
        from .cert import round_project, write_certificate
        from .sdp import SDPStatus

        if res.assembly is None or res.solution is None:
            return res.bound, None  # the SDP-free interval fallback
        if res.degraded or res.solution.status != SDPStatus.OPTIMAL:
            # loosely accepted solves are numeric-mode only; certified mode
            # drops to the interval bound rather than trust them
            fb = interval_fallback_bound(res.assembly.pop)
            return (fb if direction == "lower" else -fb), None
        asm = res.assembly
        mu_t = asm.f0 - res.solution.primal_obj
        raw = res.bound if direction == "lower" else -res.bound
        margin = max(mu_t - raw, 0.0)
        grams = [X.tolist() for X in res.solution.X]
        cert = round_project(grams, asm.pop, mu_t, asm.order,
                             delta=Fraction(margin).limit_denominator(2 ** 60))
        if cert is None:
            self.warnings.append(f"certification failed ({direction}), "
                                 "interval fallback used")
            fb = interval_fallback_bound(asm.pop)
            res.degraded = True
            return (fb if direction == "lower" else -fb), None
        ref = None
        if self.cfg.cert_dir is not None:
            import os
            ref = f"{self.cfg.problem_name}-{self.tag}-{self.cert_seq:03d}.cert"
            self.cert_seq += 1
            write_certificate(cert, os.path.join(self.cfg.cert_dir, ref))
            self.certificates.append(ref)
        b = float(cert.mu)
        if direction == "lower":
            return math.nextafter(b, -math.inf), ref
        return math.nextafter(-b, math.inf), ref


def _control_values(child: ex.Expr, points: list, iv: Interval) -> list[float]:
    vals: list[float] = []
    for p in points:
        try:
            v = ex.evaluate(child, p)
        except (ValueError, OverflowError, ZeroDivisionError):
            continue
        v = iv.clamp(v)
        if all(abs(v - w) > DEDUPE_RTOL * (1.0 + abs(w)) for w in vals):
            vals.append(v)
    if not vals:
        vals.append(iv.mid)
    return vals


def _safe_intersect(ia: Interval, lo: float, hi: float) -> Interval:
    lo2, hi2 = max(ia.lo, lo), min(ia.hi, hi)
    if lo2 > hi2:
        return ia
    return Interval(lo2, hi2)


def _estimate(t: ex.Expr, box: Box, sess: _Session) -> tuple[SAEstimator, Interval]:
    """Bottom-up estimator construction; returns the estimator and an
    enclosure of the true subtree values over the box."""
    cfg = sess.cfg
    if ex.is_semialgebraic(t):
        return translate(t, box), ex.interval_eval(t, box)

    if isinstance(t, ex.Func):
        e_c, i_c = _estimate(t.child, box, sess)
        if cfg.mode == "numeric" and not (e_c.n_lifting == 0
                                          and e_c.objective.degree <= 1):
            # tighten the argument range with SDP bounds of the child
            rm = min_sa(e_c, box, cfg.order, tol=cfg.tol)
            rM = max_sa(e_c, box, cfg.order, tol=cfg.tol)
            if math.isfinite(rm.bound) and math.isfinite(rM.bound):
                i_c = _safe_intersect(i_c, rm.bound, rM.bound)
        if cfg.mode == "ia_sos":
            est = compose_ia(t.name, e_c, i_c)
        else:
            values = _control_values(t.child, sess.points, i_c)
            unders, overs = build_par(t.name, i_c, values)
            est = compose(t.name, unders, overs, e_c, i_c)
        enc = ex.transcendental_value_range(t.name, i_c)
        return _maybe_compress(t, box, est, sess), enc

    if isinstance(t, ex.Binary):
        e1, i1 = _estimate(t.left, box, sess)
        e2, i2 = _estimate(t.right, box, sess)
        est = compose_bop(t.op, e1, e2, i1, i2)
        enc = {"+": i1 + i2, "-": i1 - i2, "*": i1 * i2}.get(t.op)
        if enc is None:
            enc = i1 / i2
        return _maybe_compress(t, box, est, sess), enc

    if isinstance(t, ex.Pow):
        e1, i1 = _estimate(t.base, box, sess)
        return _maybe_compress(t, box, _power(e1, t.exponent, i1), sess), \
            i1.pow_int(t.exponent)
    if isinstance(t, ex.Sqrt):
        e1, i1 = _estimate(t.child, box, sess)
        est, enc = _sqrt_lift(e1, i1)
        return _maybe_compress(t, box, est, sess), enc
    if isinstance(t, ex.Abs):
        e1, i1 = _estimate(t.child, box, sess)
        est, enc = _abs_lift(e1, i1)
        return _maybe_compress(t, box, est, sess), enc
    if isinstance(t, ex.MinMax):
        e1, i1 = _estimate(t.children[0], box, sess)
        e2, i2 = _estimate(t.children[1], box, sess)
        est, enc = _minmax_lift(t.kind, e1, e2, i1, i2)
        return _maybe_compress(t, box, est, sess), enc
    raise TypeError(f"unknown node {type(t).__name__}")


def _maybe_compress(t: ex.Expr, box: Box, est: SAEstimator,
                    sess: _Session) -> SAEstimator:
    cfg = sess.cfg
    if cfg.mode == "ia_sos" or est.n_lifting <= cfg.template_threshold:
        return est
    tr = build_template(t, box, cfg.order, sess.points, est,
                        threshold=cfg.template_threshold, tol=cfg.tol,
                        bound_hook=sess.bound_hook)
    if tr.warning:
        sess.warnings.append(tr.warning)
    sess.certificates.extend(tr.certificates)
    return tr.estimator


def template_optim(t: ex.Expr, box: Box, k: int, points: list,
                   cfg: RunConfig | None = None,
                   sess: _Session | None = None) -> TemplateOptimResult:
    """One full pass: build the estimator pair for the whole tree with the
    given control points and bound it from both sides."""
    if sess is None:
        cfg = cfg or RunConfig(order=k)
        sess = _Session(cfg, points)
    cfg = sess.cfg
    est, enc = _estimate(t, box, sess)
    lower = min_sa(est, box, k, tol=cfg.tol)
    upper = max_sa(est, box, k, tol=cfg.tol)
    return TemplateOptimResult(lower, upper, est, enc,
                               certificates=list(sess.certificates),
                               warnings=list(sess.warnings))


# ---------------------------------------------------------------------------
# control points

def refine_control_points(t: ex.Expr, box: Box, points: list,
                          moments) -> list:
    """Append the first-order moment projection (clamped to the box) unless
    it duplicates an existing point within 1e-8 relative."""
    x_new = box.clamp(list(moments.x_sdp[:box.n]))
    for p in points:
        if all(abs(a - b) <= DEDUPE_RTOL * (1.0 + abs(b))
               for a, b in zip(x_new, p)):
            return points
    return points + [x_new]


def _box_seed(seed: int, box: Box) -> int:
    h = hashlib.sha256()
    h.update(str(seed).encode())
    for iv in box.intervals:
        h.update(f"{iv.lo!r},{iv.hi!r};".encode())
    return int.from_bytes(h.digest()[:8], "big")


def _descend(model: SmoothModel, box: Box, x0, steps: int = 150):
    x = list(x0)
    try:
        fx = model.value(x)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    step = max(iv.width for iv in box.intervals) * 0.25 + 1e-12
    for _ in range(steps):
        try:
            g = model.grad_at(x)
        except (ValueError, OverflowError, ZeroDivisionError):
            return x, fx
        gn = float(max(abs(v) for v in g)) if len(g) else 0.0
        if gn < 1e-12:
            break
        improved = False
        s = step
        for _ in range(30):
            cand = box.clamp([xi - s * gi for xi, gi in zip(x, g)])
            try:
                fc = model.value(cand)
            except (ValueError, OverflowError, ZeroDivisionError):
                fc = math.inf
            if fc < fx - 1e-15:
                x, fx = cand, fc
                step = min(s * 2.0, max(iv.width for iv in box.intervals))
                improved = True
                break
            s *= 0.5
        if not improved:
            break
    return x, fx


def initial_control_points(t: ex.Expr, box: Box, count: int,
                           seed: int = 0) -> list:
    """Minimizer candidates from seeded local descent with random restarts;
    falls back to best-of-samples for non-smooth objectives."""
    if count <= 0:
        return []
    rng = random.Random(seed)
    n = box.n
    starts = [box.midpoint()]
    for _ in range(max(6, 2 * count + 2)):
        starts.append([box[i].lo + rng.random() * box[i].width
                       for i in range(n)])
    results = []
    model = None
    if ex.is_smooth(t):
        try:
            model = SmoothModel(t, n)
        except ex.NonSmoothError:
            model = None
    if model is not None:
        for s in starts:
            r = _descend(model, box, s)
            if r is not None:
                results.append((r[1], r[0]))
    else:
        for s in starts + [[box[i].lo + rng.random() * box[i].width
                            for i in range(n)] for _ in range(48)]:
            try:
                results.append((ex.evaluate(t, s), list(s)))
            except (ValueError, OverflowError, ZeroDivisionError):
                continue
    if not results:
        return [box.midpoint()]
    results.sort(key=lambda r: r[0])
    points: list = []
    for _, x in results:
        x = [float(v) for v in x]
        if all(any(abs(a - b) > DEDUPE_RTOL * (1.0 + abs(b))
                   for a, b in zip(x, p)) for p in points):
            points.append(x)
        if len(points) == count:
            break
    while len(points) < count:
        points.append([box[i].lo + rng.random() * box[i].width
                       for i in range(n)])
    return points


# ---------------------------------------------------------------------------
# reports

@dataclass
class BoxRecord:
    box: Box
    status: str            # proved | bounded | split | queued
    bound: float
    upper: float
    iterations: int
    n_control: int
    degraded: bool = False
    certificates: list[str] = field(default_factory=list)


@dataclass
class BoundReport:
    problem: str
    mode: str
    order: int
    target: float | None
    status: str            # proved | failure | completed
    bound: float
    upper: float
    boxes_processed: int
    records: list[BoxRecord]
    config: RunConfig | None = None
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def leaf_records(self) -> list[BoxRecord]:
        return [r for r in self.records if r.status != "split"]

    def render(self) -> str:
        cfg = self.config
        out = ["certbound report v1",
               f"problem: {self.problem}",
               f"mode: {self.mode}",
               f"order: {self.order}",
               f"target: {'none' if self.target is None else repr(self.target)}",
               f"status: {self.status}",
               f"bound: {self.bound!r}",
               f"upper: {self.upper!r}",
               f"boxes-processed: {self.boxes_processed}"]
        if cfg is not None:
            out.append(f"config: max-boxes={cfg.max_boxes} "
                       f"control-points={cfg.control_points} "
                       f"threshold={cfg.template_threshold} "
                       f"cap={cfg.box_iteration_cap} tol={cfg.tol!r} "
                       f"seed={cfg.seed} jobs={cfg.jobs}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        # timing is a comment: excluded from the canonical (deterministic)
        # report content and ignored by the parser
        out.append(f"# wall-time-seconds: {self.wall_time:.3f}")
        for i, r in enumerate(self.records):
            bx = ";".join(f"{iv.lo!r},{iv.hi!r}" for iv in r.box.intervals)
            certs = ",".join(r.certificates) if r.certificates else "-"
            out.append(f"record {i} status={r.status} bound={r.bound!r} "
                       f"upper={r.upper!r} iters={r.iterations} "
                       f"cpts={r.n_control} degraded={int(r.degraded)} "
                       f"certs={certs} box={bx}")
        return "\n".join(out) + "\n"


def parse_report(text: str) -> BoundReport:
    head: dict[str, str] = {}
    records: list[BoxRecord] = []
    warnings: list[str] = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if line.startswith("record "):
            rest = line.split(" ", 2)[2]
            kv = {}
            for part in rest.split(" "):
                key, val = part.split("=", 1)
                kv[key] = val
            ivs = [Interval(*(float(v) for v in pair.split(",")))
                   for pair in kv["box"].split(";")]
            certs = [] if kv["certs"] == "-" else kv["certs"].split(",")
            records.append(BoxRecord(
                Box(ivs), kv["status"], float(kv["bound"]), float(kv["upper"]),
                int(kv["iters"]), int(kv["cpts"]), bool(int(kv["degraded"])),
                certs))
        elif line.startswith("warning: "):
            warnings.append(line[len("warning: "):])
        elif ": " in line:
            key, val = line.split(": ", 1)
            head[key] = val
    target = None if head.get("target") in (None, "none") else float(head["target"])
    return BoundReport(
        problem=head.get("problem", ""), mode=head.get("mode", "numeric"),
        order=int(head.get("order", "1")), target=target,
        status=head.get("status", ""), bound=float(head["bound"]),
        upper=float(head["upper"]),
        boxes_processed=int(head.get("boxes-processed", "0")),
        records=records, warnings=warnings)


# ---------------------------------------------------------------------------
# branch and bound

def _process_box(t: ex.Expr, box: Box, cfg: RunConfig, tag: str) -> BoxRecord:
    """Run the dynamic control-point loop on one box."""
    seed = _box_seed(cfg.seed, box)
    if cfg.mode == "ia_sos":
        points: list = []
        cap = 1
    else:
        points = initial_control_points(t, box, cfg.control_points, seed)
        cap = cfg.box_iteration_cap
    # plain interval evaluation is always sound and needs no certificate;
    # on wide boxes it often beats the estimator relaxation
    ia = ex.interval_eval(t, box)
    best = ia.lo
    best_upper = ia.hi
    certs: list[str] = []
    degraded = False
    iterations = 0
    prev_bound = -math.inf
    if cfg.target is not None and best >= cfg.target:
        return BoxRecord(box, "proved", best, best_upper, 0, 0, False, [])
    for _ in range(cap):
        iterations += 1
        sess = _Session(cfg, points, tag=f"{tag}i{iterations}")
        res = template_optim(t, box, cfg.order, points, sess=sess)
        bound, ref = sess.bound_hook(res.lower, "lower")
        if ref:
            certs.append(ref)
        certs.extend(res.certificates)
        degraded = degraded or res.lower.degraded
        best = max(best, bound)
        best_upper = min(best_upper, res.upper.bound)
        if cfg.target is not None and best >= cfg.target:
            return BoxRecord(box, "proved", best, best_upper, iterations,
                             len(points), degraded, certs)
        if cfg.mode == "ia_sos":
            break
        # another round only pays off while the bound is still moving; a
        # bound stuck at the interval level means the relaxation stalled,
        # which extra control points do not fix
        if bound <= prev_bound + 1e-6 * (1.0 + abs(prev_bound)):
            break
        if res.lower.degraded and bound <= ia.lo + 1e-9 * (1.0 + abs(ia.lo)):
            break
        prev_bound = max(prev_bound, bound)
        new_points = refine_control_points(t, box, points, res.lower.moments)
        if len(new_points) == len(points):
            break
        points = new_points
    status = "proved" if (cfg.target is not None and best >= cfg.target) \
        else "bounded"
    return BoxRecord(box, status, best, best_upper, iterations,
                     len(points), degraded, certs)


def certify_bound(t: ex.Expr, box: Box, cfg: RunConfig) -> BoundReport:
    """Branch-and-bound over a widest-box-first queue.

    With a target: stop when every leaf proves it, or the budget runs out
    (status failure, best certified global bound reported).  Without a
    target: spend the box budget, then report the best global bound."""
    t0 = time.time()
    heap: list[tuple[float, int, Box, float, float]] = []
    seq = 0

    def push(b: Box, inherited: float, inherited_up: float):
        nonlocal seq
        heapq.heappush(heap, (-max(b.widths()), seq, b, inherited, inherited_up))
        seq += 1

    push(box, -math.inf, math.inf)
    records: list[BoxRecord] = []
    warnings: list[str] = []
    processed = 0

    pool = None
    if cfg.jobs > 1:
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=cfg.jobs)
    try:
        while heap and processed < cfg.max_boxes:
            wave = []
            while heap and len(wave) < cfg.jobs \
                    and processed + len(wave) < cfg.max_boxes:
                wave.append(heapq.heappop(heap))
            tags = [f"b{processed + i:04d}" for i in range(len(wave))]
            if pool is not None and len(wave) > 1:
                futs = [pool.submit(_process_box, t, w[2], cfg, tag)
                        for w, tag in zip(wave, tags)]
                results = [f.result() for f in futs]
            else:
                results = [_process_box(t, w[2], cfg, tag)
                           for w, tag in zip(wave, tags)]
            stop = False
            for (_, _, b, inherited, inherited_up), rec in zip(wave, results):
                processed += 1
                # a parent's bound is inherited: min over a sub-box can only rise
                rec.bound = max(rec.bound, inherited)
                if rec.status == "proved":
                    records.append(rec)
                    continue
                if cfg.target is None or rec.status == "bounded":
                    can_split = processed < cfg.max_boxes \
                        and max(b.widths()) > 1e-12
                    if can_split:
                        lo_box, hi_box = b.split(b.max_width_coord())
                        push(lo_box, rec.bound, rec.upper)
                        push(hi_box, rec.bound, rec.upper)
                        rec.status = "split"
                records.append(rec)
            if cfg.target is not None and not heap and \
                    all(r.status in ("proved", "split") for r in records):
                stop = True
            if stop:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    # unprocessed queue entries become leaves with inherited bounds
    while heap:
        _, _, b, inherited, inherited_up = heapq.heappop(heap)
        records.append(BoxRecord(b, "queued", inherited, inherited_up, 0, 0))

    leaves = [r for r in records if r.status != "split"]
    bound = min((r.bound for r in leaves), default=-math.inf)
    upper = min((r.upper for r in leaves), default=math.inf)
    if cfg.target is not None:
        proved = bool(leaves) and all(r.status == "proved" for r in leaves)
        status = "proved" if proved else "failure"
    else:
        status = "completed"
    return BoundReport(
        problem=cfg.problem_name, mode=cfg.mode, order=cfg.order,
        target=cfg.target, status=status, bound=bound, upper=upper,
        boxes_processed=processed, records=records, config=cfg,
        wall_time=time.time() - t0, warnings=warnings)

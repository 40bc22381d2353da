"""Exact rational SOS certificates.

Numeric Gram matrices from a solved relaxation are rounded to rationals,
projected exactly onto the Putinar coefficient constraints at a backed-off
bound, and verified with no floating-point step: exact LDL^T for
positive-semidefiniteness and a coefficientwise identity check.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .poly import MonomialBasis, SparsePoly, gram_to_poly, monomials_up_to
from .relax import POPInstance

__all__ = ["SOSCertificate", "CertVerdict", "round_project", "check_certificate",
           "check_estimator_certificates", "write_certificate",
           "read_certificate", "problem_hash"]

# (denominator, delta multiplier) ladder for the retry rounds
PRECISION_LADDER = [2 ** 10, 2 ** 20, 2 ** 30, 2 ** 53]
DELTA_GROWTH = 4


def problem_hash(pop: POPInstance) -> str:
    h = hashlib.sha256()
    h.update(str(pop.n).encode())
    for iv in pop.bounds:
        h.update(f"[{Fraction(iv.lo)},{Fraction(iv.hi)}]".encode())
    for g in pop.constraints:
        h.update(g.to_exact().to_text().encode())
    h.update(pop.objective.to_exact().to_text().encode())
    return h.hexdigest()


@dataclass
class SOSCertificate:
    """f_pop - mu = sum_j sigma_j g_j with sigma_j = v_j' Q_j v_j, g_0 = 1.

    Constraints include the box polynomials; everything rational."""
    pop: POPInstance
    order: int
    mu: Fraction
    bases: list[list[tuple]]
    grams: list[list[list[Fraction]]]
    pop_hash: str = ""
    version: str = "1"

    def __post_init__(self):
        if not self.pop_hash:
            self.pop_hash = problem_hash(self.pop)


@dataclass
class CertVerdict:
    valid: bool
    reason: str = ""
    psd_ok: bool = True
    identity_ok: bool = True


# ---------------------------------------------------------------------------
# exact linear algebra

def _solve_gauss(M: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Exact Gaussian elimination with partial pivoting; tolerates redundant
    consistent rows (square systems only).  Returns None when inconsistent
    or underdetermined in a way that matters (free pivot with nonzero rhs
    never occurs here: free variables are set to zero)."""
    n = len(M)
    A = [row[:] + [rhs[i]] for i, row in enumerate(M)]
    piv_cols = []
    r = 0
    for c in range(n):
        p = max(range(r, n), key=lambda i: abs(A[i][c]), default=None)
        if p is None or A[p][c] == 0:
            continue
        A[r], A[p] = A[p], A[r]
        inv = A[r][c]
        A[r] = [v / inv for v in A[r]]
        for i in range(n):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [vi - f * vr for vi, vr in zip(A[i], A[r])]
        piv_cols.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if A[i][n] != 0:
            return None  # inconsistent
    x = [Fraction(0)] * n
    for row, c in enumerate(piv_cols):
        x[c] = A[row][n] - sum(A[row][j] * x[j] for j in range(n)
                               if j != c and A[row][j] != 0)
    return x


def _ldlt_psd(Q: list[list[Fraction]]) -> bool:
    """Exact PSD test via LDL^T with symmetric (diagonal) pivoting.  A zero
    diagonal with a nonzero row disqualifies the matrix."""
    n = len(Q)
    M = [[Fraction(Q[i][j]) for j in range(n)] for i in range(n)]
    perm = list(range(n))
    for k in range(n):
        p = max(range(k, n), key=lambda i: M[i][i])
        if M[p][p] < 0:
            return False
        if M[p][p] == 0:
            # all remaining diagonals <= 0; PSD requires the rest to vanish
            for i in range(k, n):
                if M[i][i] != 0:
                    return False
                for j in range(k, n):
                    if M[i][j] != 0:
                        return False
            return True
        if p != k:
            M[k], M[p] = M[p], M[k]
            for row in M:
                row[k], row[p] = row[p], row[k]
        d = M[k][k]
        for i in range(k + 1, n):
            f = M[i][k] / d
            if f == 0:
                continue
            for j in range(k, n):
                M[i][j] -= f * M[k][j]
        for i in range(k + 1, n):
            M[k][i] = Fraction(0)
            M[i][k] = Fraction(0)
    return True


# ---------------------------------------------------------------------------
# rounding and projection

def _certificate_bases(pop: POPInstance, k: int) -> tuple[list[SparsePoly], list[MonomialBasis]]:
    gs = [g.to_exact() for g in pop.all_constraints()]
    bases = [MonomialBasis(pop.n, k)]
    for g in gs:
        bases.append(MonomialBasis(pop.n, k - (g.degree + 1) // 2))
    return gs, bases


def round_project(grams, pop: POPInstance, mu_target, order: int,
                  delta=None) -> SOSCertificate | None:
    """Round numeric Gram blocks and project exactly onto the Putinar
    coefficient constraints at mu = mu_target - delta; verify PSD-ness.

    Retries up to 4 rounds with a finer denominator and a larger back-off.
    Returns None when every round fails."""
    gs, bases = _certificate_bases(pop, order)
    f = pop.objective.to_exact()
    monos = monomials_up_to(pop.n, 2 * order)
    mono_index = {a: i for i, a in enumerate(monos)}

    # unknown layout: per block, upper-triangle entries in row-major order
    var_of: list[tuple[int, int, int]] = []
    weights: list[int] = []
    for blk, basis in enumerate(bases):
        s = len(basis)
        for u in range(s):
            for v in range(u, s):
                var_of.append((blk, u, v))
                weights.append(1 if u == v else 2)
    nvar = len(var_of)

    one = SparsePoly.constant(pop.n, 1, exact=True)
    gpolys = [one] + gs
    # rows[alpha][var] = exact coefficient of the Putinar expansion
    rows: list[dict[int, Fraction]] = [dict() for _ in monos]
    for j, (blk, u, v) in enumerate(var_of):
        basis = bases[blk]
        base = tuple(x + y for x, y in zip(basis[u], basis[v]))
        mult = Fraction(weights[j])
        for beta, c in gpolys[blk].coeffs.items():
            alpha = tuple(x + y for x, y in zip(base, beta))
            idx = mono_index[alpha]
            rows[idx][j] = rows[idx].get(j, Fraction(0)) + mult * Fraction(c)

    delta0 = Fraction(delta if delta is not None else 0).limit_denominator(2 ** 60)
    if delta0 < 0:
        delta0 = -delta0
    mu_t = Fraction(mu_target).limit_denominator(2 ** 60) \
        if not isinstance(mu_target, Fraction) else mu_target

    for attempt, den in enumerate(PRECISION_LADDER):
        dlt = delta0 * (DELTA_GROWTH ** attempt) if delta0 else \
            (Fraction(0) if attempt == 0 else Fraction(1, 2 ** (40 - 8 * attempt)))
        mu = mu_t - dlt
        q0 = []
        for blk, u, v in var_of:
            x = float(grams[blk][u][v])
            q0.append(Fraction(round(x * den), den))

        rhs_full = []
        for i, alpha in enumerate(monos):
            target = Fraction(f.coeff(alpha))
            if i == 0:
                target -= mu
            got = sum(c * q0[j] for j, c in rows[i].items())
            rhs_full.append(target - got)

        # normal equations of the weighted LS correction: S nu = r with
        # S = A W^-1 A', correction dq = W^-1 A' nu
        m = len(monos)
        S = [[Fraction(0)] * m for _ in range(m)]
        for i in range(m):
            for j, c in rows[i].items():
                win = Fraction(1, weights[j])
                for i2 in range(i, m):
                    c2 = rows[i2].get(j)
                    if c2 is not None:
                        S[i][i2] += c * c2 * win
        for i in range(m):
            for i2 in range(i + 1, m):
                S[i2][i] = S[i][i2]
        nu = _solve_gauss(S, rhs_full)
        if nu is None:
            continue
        q = q0[:]
        for j in range(nvar):
            acc = Fraction(0)
            for i in range(m):
                c = rows[i].get(j)
                if c is not None and nu[i] != 0:
                    acc += c * nu[i]
            if acc != 0:
                q[j] += acc / weights[j]

        grams_exact: list[list[list[Fraction]]] = []
        idx = 0
        for basis in bases:
            s = len(basis)
            Q = [[Fraction(0)] * s for _ in range(s)]
            for u in range(s):
                for v in range(u, s):
                    Q[u][v] = Q[v][u] = q[idx]
                    idx += 1
            grams_exact.append(Q)

        cert = SOSCertificate(pop=pop, order=order, mu=mu,
                              bases=[list(b.monomials) for b in bases],
                              grams=grams_exact)
        verdict = check_certificate(cert)
        if verdict.valid:
            return cert
    return None


def check_certificate(cert: SOSCertificate) -> CertVerdict:
    """Exact verdict: PSD Grams and the coefficientwise Putinar identity."""
    pop = cert.pop
    gs = [g.to_exact() for g in pop.all_constraints()]
    if len(cert.grams) != len(gs) + 1:
        return CertVerdict(False, "block count mismatch", identity_ok=False)
    for blk, Q in enumerate(cert.grams):
        s = len(cert.bases[blk])
        if len(Q) != s or any(len(row) != s for row in Q):
            return CertVerdict(False, f"Gram {blk} shape mismatch",
                               identity_ok=False)
        for u in range(s):
            for v in range(u + 1, s):
                if Q[u][v] != Q[v][u]:
                    return CertVerdict(False, f"Gram {blk} not symmetric",
                                       psd_ok=False)
        if not _ldlt_psd(Q):
            return CertVerdict(False, f"Gram {blk} not PSD", psd_ok=False)

    one = SparsePoly.constant(pop.n, 1, exact=True)
    total = SparsePoly.zero(pop.n, exact=True)
    for blk, (g, Q) in enumerate(zip([one] + gs, cert.grams)):
        basis = MonomialBasis(pop.n, 0)
        basis.monomials = list(cert.bases[blk])
        basis.index = {a: i for i, a in enumerate(basis.monomials)}
        basis.n = pop.n
        sigma = gram_to_poly(Q, basis, exact=True)
        total = total + sigma * g
    target = pop.objective.to_exact().shift_constant(-cert.mu)
    if total != target:
        return CertVerdict(False, "Putinar identity violated",
                           identity_ok=False)
    return CertVerdict(True, "f_pop - mu is an exact SOS combination of the "
                             "constraints; since every g_j >= 0 on the box "
                             "and every sigma_j is PSD-Gram SOS, f_pop >= mu")


# ---------------------------------------------------------------------------
# serialization

def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _parse_frac(s: str) -> Fraction:
    num, den = s.split("/")
    return Fraction(int(num), int(den))


def write_certificate(cert: SOSCertificate, path: str) -> None:
    pop = cert.pop
    with open(path, "w") as fh:
        fh.write(f"certbound certificate v{cert.version}\n")
        fh.write(f"hash: {cert.pop_hash}\n")
        fh.write(f"n: {pop.n}\norder: {cert.order}\n")
        fh.write(f"mu: {_frac_str(cert.mu)}\n")
        for iv in pop.bounds:
            fh.write(f"bound: {_frac_str(Fraction(iv.lo))} "
                     f"{_frac_str(Fraction(iv.hi))}\n")
        fh.write(f"objective: {_poly_line(pop.objective)}\n")
        fh.write(f"nconstraints: {len(pop.constraints)}\n")
        for g in pop.constraints:
            fh.write(f"constraint: {_poly_line(g)}\n")
        fh.write(f"nblocks: {len(cert.grams)}\n")
        for basis, Q in zip(cert.bases, cert.grams):
            fh.write("basis: " + " ".join(",".join(map(str, a)) for a in basis)
                     + "\n")
            tri = []
            for u in range(len(Q)):
                for v in range(u + 1):
                    tri.append(_frac_str(Q[u][v]))
            fh.write("gram: " + " ".join(tri) + "\n")


def _poly_line(p: SparsePoly) -> str:
    q = p.to_exact()
    items = sorted(q.coeffs.items(), key=lambda kv: (sum(kv[0]), kv[0]))
    return "; ".join(",".join(map(str, a)) + ":" + _frac_str(c)
                     for a, c in items) or "0"


def _parse_poly_line(s: str, n: int) -> SparsePoly:
    coeffs = {}
    s = s.strip()
    if s and s != "0":
        for item in s.split(";"):
            mono, c = item.strip().split(":")
            alpha = tuple(int(v) for v in mono.split(","))
            coeffs[alpha] = _parse_frac(c)
    return SparsePoly(n, coeffs, exact=True)


def read_certificate(path: str) -> SOSCertificate:
    from .interval import Interval

    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    it = iter(lines)
    header = next(it)
    if not header.startswith("certbound certificate v"):
        raise ValueError("not a certificate file")
    version = header.split("v", 2)[-1]
    pop_hash = next(it).split(": ", 1)[1]
    n = int(next(it).split(": ")[1])
    order = int(next(it).split(": ")[1])
    mu = _parse_frac(next(it).split(": ")[1])
    bounds = []
    line = next(it)
    while line.startswith("bound: "):
        lo, hi = line.split(": ")[1].split()
        bounds.append(Interval(float(_parse_frac(lo)), float(_parse_frac(hi))))
        line = next(it)
    objective = _parse_poly_line(line.split(": ", 1)[1], n)
    ncons = int(next(it).split(": ")[1])
    constraints = [_parse_poly_line(next(it).split(": ", 1)[1], n)
                   for _ in range(ncons)]
    nblocks = int(next(it).split(": ")[1])
    bases = []
    grams = []
    for _ in range(nblocks):
        bl = next(it).split(": ", 1)[1]
        basis = [tuple(int(v) for v in a.split(",")) for a in bl.split()]
        bases.append(basis)
        entries = [_parse_frac(v) for v in next(it).split(": ", 1)[1].split()]
        s = len(basis)
        Q = [[Fraction(0)] * s for _ in range(s)]
        idx = 0
        for u in range(s):
            for v in range(u + 1):
                Q[u][v] = Q[v][u] = entries[idx]
                idx += 1
        grams.append(Q)
    pop = POPInstance(n, bounds, constraints, objective)
    return SOSCertificate(pop=pop, order=order, mu=mu, bases=bases,
                          grams=grams, pop_hash=pop_hash, version=version)


# ---------------------------------------------------------------------------
# report-level aggregation

@dataclass
class EstimatorCertVerdict:
    status: str  # Valid | Invalid | NotApplicable
    failures: list[str] = field(default_factory=list)


def check_estimator_certificates(report, cert_dir: str = ".") -> EstimatorCertVerdict:
    """Re-check every certificate a certified-mode report references."""
    import os

    if getattr(report, "mode", "numeric") != "certified":
        return EstimatorCertVerdict("NotApplicable")
    failures = []
    for rec in report.records:
        for ref in rec.certificates:
            path = os.path.join(cert_dir, ref)
            if not os.path.exists(path):
                failures.append(f"missing certificate {ref}")
                continue
            try:
                cert = read_certificate(path)
            except (ValueError, KeyError, IndexError, StopIteration) as exc:
                failures.append(f"unreadable certificate {ref}: {exc}")
                continue
            verdict = check_certificate(cert)
            if not verdict.valid:
                failures.append(f"{ref}: {verdict.reason}")
    return EstimatorCertVerdict("Valid" if not failures else "Invalid", failures)

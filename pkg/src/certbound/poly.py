"""Sparse multivariate polynomials and monomial bases.

Coefficients are either floats or exact Fractions; exact polynomials stay
exact under arithmetic (no silent float contamination).  Monomials are
ordered globally in graded lexicographic order so that SDP assembly and
certificate files are deterministic.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from .interval import Box, Interval

__all__ = ["SparsePoly", "MonomialBasis", "gram_to_poly", "monomials_up_to"]

Exponent = tuple[int, ...]


def _grlex_key(alpha: Exponent):
    return (sum(alpha), alpha)


def monomials_up_to(n: int, k: int) -> list[Exponent]:
    """All exponent vectors with |alpha| <= k, in graded lex order."""
    out: list[Exponent] = []
    for d in range(k + 1):
        out.extend(sorted(_compositions(n, d)))
    return out


def _compositions(n: int, d: int):
    if n == 0:
        if d == 0:
            yield ()
        return
    if n == 1:
        yield (d,)
        return
    for first in range(d + 1):
        for rest in _compositions(n - 1, d - first):
            yield (first,) + rest


class SparsePoly:
    """Map from exponent vector to coefficient.  Immutable by convention."""

    __slots__ = ("n", "coeffs", "exact")

    def __init__(self, n: int, coeffs: dict | None = None, exact: bool = False):
        self.n = n
        self.exact = exact
        self.coeffs: dict[Exponent, object] = {}
        if coeffs:
            for a, c in coeffs.items():
                if c != 0:
                    self.coeffs[tuple(a)] = Fraction(c) if exact else float(c)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(n: int, exact: bool = False) -> "SparsePoly":
        return SparsePoly(n, {}, exact)

    @staticmethod
    def constant(n: int, c, exact: bool = False) -> "SparsePoly":
        return SparsePoly(n, {(0,) * n: c}, exact)

    @staticmethod
    def variable(n: int, i: int, exact: bool = False) -> "SparsePoly":
        e = [0] * n
        e[i] = 1
        return SparsePoly(n, {tuple(e): 1}, exact)

    # -- basic queries ------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, alpha: Exponent):
        return self.coeffs.get(tuple(alpha), Fraction(0) if self.exact else 0.0)

    def max_norm(self) -> float:
        return max((abs(float(c)) for c in self.coeffs.values()), default=0.0)

    def normalized_dyadic(self) -> "SparsePoly":
        """Scale by a power of two so the max-norm lands in [1/2, 1).

        The scaling is exact for both float and Fraction coefficients, so
        it is safe on constraint polynomials feeding exact certificates."""
        m = self.max_norm()
        if m == 0.0 or 0.5 <= m < 1.0:
            return self
        e = math.frexp(m)[1]
        return self.scale(Fraction(1, 2 ** e) if self.exact else 2.0 ** -e)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SparsePoly) and self.n == other.n
                and self.coeffs == other.coeffs)

    def __repr__(self) -> str:
        return f"SparsePoly({self.to_text()})"

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "SparsePoly"):
        if self.n != other.n:
            raise ValueError("dimension mismatch")

    def __add__(self, other: "SparsePoly") -> "SparsePoly":
        self._check(other)
        exact = self.exact and other.exact
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0) + c
        return SparsePoly(self.n, out, exact)

    def __sub__(self, other: "SparsePoly") -> "SparsePoly":
        return self + other.scale(-1)

    def __mul__(self, other: "SparsePoly") -> "SparsePoly":
        self._check(other)
        exact = self.exact and other.exact
        out: dict[Exponent, object] = {}
        for a, ca in self.coeffs.items():
            for b, cb in other.coeffs.items():
                key = tuple(ai + bi for ai, bi in zip(a, b))
                out[key] = out.get(key, 0) + ca * cb
        return SparsePoly(self.n, out, exact)

    def scale(self, c) -> "SparsePoly":
        exact = self.exact and isinstance(c, (int, Fraction))
        return SparsePoly(self.n, {a: v * c for a, v in self.coeffs.items()}, exact)

    def shift_constant(self, c) -> "SparsePoly":
        out = dict(self.coeffs)
        key = (0,) * self.n
        out[key] = out.get(key, 0) + c
        exact = self.exact and isinstance(c, (int, Fraction))
        return SparsePoly(self.n, out, exact)

    def __neg__(self) -> "SparsePoly":
        return self.scale(-1)

    def pow(self, e: int) -> "SparsePoly":
        out = SparsePoly.constant(self.n, 1, self.exact)
        for _ in range(e):
            out = out * self
        return out

    # -- conversions --------------------------------------------------------

    def to_exact(self) -> "SparsePoly":
        """Float coefficients are dyadic rationals; the conversion is exact."""
        if self.exact:
            return self
        return SparsePoly(self.n, {a: Fraction(c) for a, c in self.coeffs.items()},
                          exact=True)

    def to_float(self) -> "SparsePoly":
        if not self.exact:
            return self
        return SparsePoly(self.n, {a: float(c) for a, c in self.coeffs.items()},
                          exact=False)

    def extend(self, new_n: int) -> "SparsePoly":
        """Embed into a larger variable space (new variables appended)."""
        if new_n < self.n:
            raise ValueError("cannot shrink the variable space")
        pad = (0,) * (new_n - self.n)
        return SparsePoly(new_n, {a + pad: c for a, c in self.coeffs.items()},
                          self.exact)

    def remap(self, new_n: int, mapping: dict[int, int]) -> "SparsePoly":
        """Move variables to new indices; unmapped variables must be absent."""
        out: dict[Exponent, object] = {}
        for a, c in self.coeffs.items():
            e = [0] * new_n
            for i, ai in enumerate(a):
                if ai == 0:
                    continue
                if i not in mapping:
                    raise ValueError(f"variable {i} has no image")
                e[mapping[i]] = ai
            key = tuple(e)
            out[key] = out.get(key, 0) + c
        return SparsePoly(new_n, out, self.exact)

    def affine_image(self, mids, rads) -> "SparsePoly":
        """Substitute x_i = mids[i] + rads[i] * u_i; exact when self and the
        substitution data are exact."""
        exact = self.exact and all(isinstance(v, (int, Fraction))
                                   for v in list(mids) + list(rads))
        lins = [SparsePoly(self.n, {(0,) * self.n: mids[i],
                                    tuple(1 if j == i else 0
                                          for j in range(self.n)): rads[i]},
                           exact)
                for i in range(self.n)]
        out = SparsePoly.zero(self.n, exact)
        for a, c in self.coeffs.items():
            term = SparsePoly.constant(self.n, c, exact and
                                       isinstance(c, (int, Fraction)))
            for i, ai in enumerate(a):
                for _ in range(ai):
                    term = term * lins[i]
            out = out + term
        return out

    def used_vars(self) -> set[int]:
        used: set[int] = set()
        for a in self.coeffs:
            used.update(i for i, ai in enumerate(a) if ai)
        return used

    # -- evaluation ---------------------------------------------------------

    def eval(self, x) -> object:
        total = Fraction(0) if self.exact else 0.0
        for a, c in self.coeffs.items():
            term = c
            for i, ai in enumerate(a):
                if ai:
                    term = term * x[i] ** ai
            total = total + term
        return total

    def interval_eval(self, box: Box) -> Interval:
        total = Interval(0.0, 0.0)
        for a, c in self.coeffs.items():
            term = Interval(1.0, 1.0)
            for i, ai in enumerate(a):
                if ai:
                    term = term * box[i].pow_int(ai)
            total = total + term.scale(float(c))
        return total

    # -- rendering ----------------------------------------------------------

    def to_text(self) -> str:
        """Canonical rendering, terms sorted by the global monomial order."""
        if not self.coeffs:
            return "0"
        parts = []
        for a in sorted(self.coeffs, key=_grlex_key):
            c = self.coeffs[a]
            mono = "*".join(
                f"x{i + 1}" + (f"^{ai}" if ai > 1 else "")
                for i, ai in enumerate(a) if ai)
            cs = str(c)
            parts.append(f"{cs}*{mono}" if mono else cs)
        return " + ".join(parts)


class MonomialBasis:
    """Monomials of degree <= k in n variables, graded lex, with index maps."""

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.monomials: list[Exponent] = monomials_up_to(n, k)
        self.index: dict[Exponent, int] = {a: i for i, a in enumerate(self.monomials)}

    def __len__(self) -> int:
        return len(self.monomials)

    def __getitem__(self, i: int) -> Exponent:
        return self.monomials[i]

    @property
    def size(self) -> int:
        return len(self.monomials)

    @staticmethod
    def expected_size(n: int, k: int) -> int:
        return math.comb(n + k, k)


def gram_to_poly(Q, basis: MonomialBasis, exact: bool | None = None) -> SparsePoly:
    """Expand v(x)^T Q v(x) over the monomial basis.

    Q may be a nested list / numpy array (float mode) or a nested list of
    Fractions (exact mode)."""
    s = len(basis)
    rows = [list(Q[i]) for i in range(s)]
    if exact is None:
        exact = any(isinstance(rows[i][j], Fraction) for i in range(s) for j in range(s))
    for i in range(s):
        for j in range(i + 1, s):
            a, b = rows[i][j], rows[j][i]
            if exact:
                if Fraction(a) != Fraction(b):
                    raise ValueError("asymmetric Gram matrix")
            elif not math.isclose(float(a), float(b), rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("asymmetric Gram matrix")
    out: dict[Exponent, object] = {}
    for i in range(s):
        for j in range(s):
            c = rows[i][j]
            if c == 0:
                continue
            key = tuple(u + v for u, v in zip(basis[i], basis[j]))
            out[key] = out.get(key, 0) + (Fraction(c) if exact else float(c))
    return SparsePoly(basis.n, out, exact=bool(exact))

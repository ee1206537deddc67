"""Sparse multivariate polynomials with exact or floating coefficients.

Exact coefficients live in Q(i) extended by sqrt(2): a coefficient is
``(re + i*im) * sqrt(2)**h`` with Gaussian-rational ``re + i*im`` and
``h in {0, 1}``.  That field is closed under everything needed here:
complexification introduces powers of ``1/sqrt(2)`` that are graded by degree,
so two terms on the same monomial always share the same ``h``.

Phase-space polynomials in ``2n`` variables use the canonical pairing
``(xi_j, xi_{n+j})`` for the Poisson bracket.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from numbers import Rational
from types import MappingProxyType

import numpy as np
from gmpy2 import mpq

from .errors import DimensionError, DomainError

SQRT2 = math.sqrt(2.0)
FLOAT_PRUNE = 1e-14

_ZQ = mpq(0)


def _q(x) -> mpq:
    if isinstance(x, str):
        return mpq(x.strip())
    return mpq(x)


class Coef:
    """Exact coefficient ``(re + i im) * sqrt(2)**h`` with ``h`` in {0, 1}."""

    __slots__ = ("re", "im", "h")

    def __init__(self, re=0, im=0, h: int = 0):
        re, im, h = _q(re), _q(im), int(h)
        k, r = divmod(h, 2)
        if k:
            f = mpq(2) ** k if k > 0 else mpq(1, 2 ** (-k))
            re, im = re * f, im * f
        if not re and not im:
            r = 0
        self.re, self.im, self.h = re, im, r

    @classmethod
    def _raw(cls, re, im, h):
        c = object.__new__(cls)
        c.re, c.im, c.h = re, im, h
        return c

    @classmethod
    def from_value(cls, value) -> "Coef":
        if isinstance(value, Coef):
            return value
        if isinstance(value, (int, Rational)) or type(value).__name__ == "mpq":
            return cls(value)
        if isinstance(value, complex) or isinstance(value, float):
            z = complex(value)
            return cls(Fraction(z.real), Fraction(z.imag))
        raise TypeError(f"cannot build an exact coefficient from {value!r}")

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        if not isinstance(other, Coef):
            try:
                other = Coef.from_value(other)
            except TypeError:
                return NotImplemented
        return self.re == other.re and self.im == other.im and (self.h == other.h or not self)

    def __hash__(self):
        return hash((self.re, self.im, self.h))

    def __neg__(self):
        return Coef._raw(-self.re, -self.im, self.h)

    def __add__(self, other):
        if type(other) is not Coef:
            if other == 0:
                return self
            other = Coef.from_value(other)
        if not other:
            return self
        if not self:
            return other
        if self.h != other.h:
            raise ArithmeticError("adding coefficients with different sqrt(2) parity")
        re, im = self.re + other.re, self.im + other.im
        return Coef._raw(re, im, self.h if (re or im) else 0)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-Coef.from_value(other))

    def __rsub__(self, other):
        return Coef.from_value(other) + (-self)

    def __mul__(self, other):
        if type(other) is Coef:
            re = self.re * other.re - self.im * other.im
            im = self.re * other.im + self.im * other.re
            h = self.h + other.h
            if h == 2:
                re, im, h = re * 2, im * 2, 0
            elif not re and not im:
                h = 0
            return Coef._raw(re, im, h)
        if isinstance(other, (int, Rational)) or type(other).__name__ == "mpq":
            re, im = self.re * other, self.im * other
            return Coef._raw(re, im, self.h if (re or im) else 0)
        return self * Coef.from_value(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is not Coef:
            if isinstance(other, (int, Rational)) or type(other).__name__ == "mpq":
                return Coef._raw(self.re / other, self.im / other, self.h)
            other = Coef.from_value(other)
        den = other.re * other.re + other.im * other.im
        if not den:
            raise ZeroDivisionError("division by a zero coefficient")
        re = (self.re * other.re + self.im * other.im) / den
        im = (self.im * other.re - self.re * other.im) / den
        h = self.h - other.h
        if h < 0:  # 1/sqrt(2) = sqrt(2)/2
            re, im, h = re / 2, im / 2, 1
        return Coef._raw(re, im, h if (re or im) else 0)

    def __rtruediv__(self, other):
        return Coef.from_value(other) / self

    def conjugate(self):
        return Coef._raw(self.re, -self.im, self.h)

    def __abs__(self) -> float:
        m = math.hypot(float(self.re), float(self.im))
        return m * SQRT2 if self.h else m

    def __complex__(self):
        z = complex(float(self.re), float(self.im))
        return z * SQRT2 if self.h else z

    def is_real(self) -> bool:
        return not self.im

    def __repr__(self):
        s = f"({self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}i)"
        return s + ("*sqrt2" if self.h else "")


I = Coef(0, 1)
ONE = Coef(1)


def _coerce(value, mode):
    if mode == "exact":
        return Coef.from_value(value)
    if isinstance(value, Coef):
        return complex(value)
    return complex(value)


def _zero(mode):
    return Coef._raw(_ZQ, _ZQ, 0) if mode == "exact" else 0j


def _glex_key(exp):
    return (sum(exp), tuple(-e for e in exp))


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` variables.

    Parameters
    ----------
    nvars : int
        Number of variables.
    terms : mapping, optional
        ``{exponent tuple: coefficient}``.
    mode : {"exact", "float"}
        Coefficient field. Exact coefficients are :class:`Coef`, float ones
        are Python complex numbers.
    truncation : int, optional
        If set, terms of degree above it are dropped here and in every
        product or bracket involving this polynomial.
    """

    __slots__ = ("nvars", "mode", "truncation", "_terms")

    def __init__(self, nvars: int, terms=None, mode: str = "exact", truncation=None, *, _trusted=False):
        if nvars < 1:
            raise DimensionError("nvars must be positive")
        if mode not in ("exact", "float"):
            raise ValueError("mode must be 'exact' or 'float'")
        self.nvars = int(nvars)
        self.mode = mode
        self.truncation = None if truncation is None else int(truncation)
        if _trusted:
            self._terms = terms
            return
        clean = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars or min(exp, default=0) < 0:
                raise DimensionError(f"bad exponent {exp} for {nvars} variables")
            if self.truncation is not None and sum(exp) > self.truncation:
                continue
            c = _coerce(c, mode)
            if exp in clean:
                c = clean[exp] + c
            clean[exp] = c
        self._terms = _prune(clean, mode)

    # -- constructors ----------------------------------------------------
    @classmethod
    def zero(cls, nvars, mode="exact", truncation=None):
        return cls(nvars, {}, mode, truncation, _trusted=True)

    @classmethod
    def constant(cls, nvars, value, mode="exact"):
        return cls(nvars, {(0,) * nvars: value}, mode)

    @classmethod
    def variable(cls, j, nvars, mode="exact"):
        exp = [0] * nvars
        exp[j] = 1
        return cls(nvars, {tuple(exp): 1}, mode)

    @classmethod
    def monomial(cls, exp, coef=1, mode="exact"):
        return cls(len(exp), {tuple(exp): coef}, mode)

    def _new(self, terms, truncation="same", prune=True):
        tr = self.truncation if truncation == "same" else truncation
        if prune:
            terms = _prune(terms, self.mode)
        return Polynomial(self.nvars, terms, self.mode, tr, _trusted=True)

    # -- inspection ------------------------------------------------------
    @property
    def terms(self):
        return MappingProxyType(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def coefficient(self, exp):
        return self._terms.get(tuple(exp), _zero(self.mode))

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=-1)

    @property
    def min_degree(self) -> int:
        return min((sum(e) for e in self._terms), default=-1)

    def degrees(self) -> list[int]:
        return sorted({sum(e) for e in self._terms})

    def homogeneous(self, k: int) -> "Polynomial":
        return self._new({e: c for e, c in self._terms.items() if sum(e) == k}, prune=False)

    def truncate(self, k: int) -> "Polynomial":
        """Drop degrees above ``k`` and tag the result as truncated at ``k``."""
        tr = k if self.truncation is None else min(k, self.truncation)
        return self._new({e: c for e, c in self._terms.items() if sum(e) <= tr}, truncation=tr, prune=False)

    def untruncated(self) -> "Polynomial":
        return self._new(dict(self._terms), truncation=None, prune=False)

    def degree_range(self, lo: int, hi: int) -> "Polynomial":
        return self._new({e: c for e, c in self._terms.items() if lo <= sum(e) <= hi}, prune=False)

    def sorted_items(self):
        return sorted(self._terms.items(), key=lambda t: _glex_key(t[0]))

    # -- conversions -----------------------------------------------------
    def to_float(self) -> "Polynomial":
        if self.mode == "float":
            return self
        return Polynomial(self.nvars, {e: complex(c) for e, c in self._terms.items()},
                          "float", self.truncation)

    def is_real(self, tol: float = 0.0) -> bool:
        if self.mode == "exact":
            return all(c.is_real() for c in self._terms.values())
        scale = max((abs(c) for c in self._terms.values()), default=0.0)
        return all(abs(c.imag) <= tol * max(scale, 1.0) for c in self._terms.values())

    def real_part(self) -> "Polynomial":
        if self.mode == "exact":
            if any(c.h for c in self._terms.values()):
                raise ArithmeticError("real part of a sqrt(2)-scaled coefficient is not rational")
            return self._new({e: Coef._raw(c.re, _ZQ, 0) for e, c in self._terms.items()})
        return self._new({e: complex(c.real, 0.0) for e, c in self._terms.items()})

    def conjugate(self) -> "Polynomial":
        return self._new({e: c.conjugate() for e, c in self._terms.items()}, prune=False)

    def map_coefficients(self, fn) -> "Polynomial":
        return self._new({e: fn(c) for e, c in self._terms.items()})

    def compile(self) -> "NumericPolynomial":
        return NumericPolynomial(self)

    # -- arithmetic ------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if not isinstance(other, Polynomial):
            raise TypeError("expected a Polynomial")
        if other.nvars != self.nvars or other.mode != self.mode:
            raise DimensionError(
                f"incompatible polynomials: nvars {self.nvars}/{other.nvars}, mode {self.mode}/{other.mode}")

    def _joint_truncation(self, other):
        ts = [t for t in (self.truncation, other.truncation) if t is not None]
        return min(ts) if ts else None

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            if other == 0:
                return self
            other = Polynomial.constant(self.nvars, other, self.mode)
        self._check(other)
        tr = self._joint_truncation(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out[e] + c if e in out else c
        if tr is not None:
            out = {e: c for e, c in out.items() if sum(e) <= tr}
        return self._new(out, truncation=tr)

    __radd__ = __add__

    def __neg__(self):
        return self._new({e: -c for e, c in self._terms.items()}, prune=False)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s) -> "Polynomial":
        if self.mode == "exact":
            s = s if isinstance(s, (int, Rational)) or type(s).__name__ == "mpq" else Coef.from_value(s)
        else:
            s = complex(s)
        return self._new({e: c * s for e, c in self._terms.items()})

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(other)
        self._check(other)
        tr = self._joint_truncation(other)
        out = {}
        for e1, c1 in self._terms.items():
            d1 = sum(e1)
            for e2, c2 in other._terms.items():
                if tr is not None and d1 + sum(e2) > tr:
                    continue
                e = tuple(a + b for a, b in zip(e1, e2))
                p = c1 * c2
                out[e] = out[e] + p if e in out else p
        return self._new(out, truncation=tr)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, s):
        if self.mode == "exact":
            s = Coef.from_value(s)
            return self._new({e: c / s for e, c in self._terms.items()})
        return self._new({e: c / complex(s) for e, c in self._terms.items()})

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.nvars, 1, self.mode)
        if self.truncation is not None:
            result = result.truncate(self.truncation)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def diff(self, j: int) -> "Polynomial":
        out = {}
        for e, c in self._terms.items():
            if e[j]:
                ne = list(e)
                ne[j] -= 1
                out[tuple(ne)] = c * e[j]
        return self._new(out, prune=False)

    def bracket(self, other: "Polynomial", truncation=None) -> "Polynomial":
        return poisson_bracket(self, other, truncation)

    # -- evaluation ------------------------------------------------------
    def __call__(self, *point):
        if len(point) == 1 and np.ndim(point[0]) >= 1:
            point = point[0]
        return self.compile()(np.asarray(point))

    # -- comparison / display --------------------------------------------
    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return (self.nvars == other.nvars and self.mode == other.mode
                    and self._terms == other._terms)
        if other == 0:
            return self.is_zero
        return NotImplemented

    def __hash__(self):
        return hash((self.nvars, self.mode, frozenset(self._terms.items())))

    def __repr__(self):
        if not self._terms:
            return f"Polynomial(0; nvars={self.nvars}, {self.mode})"
        parts = []
        for e, c in self.sorted_items()[:12]:
            mono = "*".join(f"z{j + 1}^{p}" if p > 1 else f"z{j + 1}" for j, p in enumerate(e) if p)
            parts.append(f"{c!r}" + (f"*{mono}" if mono else ""))
        more = " + ..." if len(self._terms) > 12 else ""
        return f"Polynomial({' + '.join(parts)}{more}; nvars={self.nvars}, {self.mode})"

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- serialization ---------------------------------------------------
    def to_json_dict(self) -> dict:
        out = []
        for e, c in self.sorted_items():
            if self.mode == "exact":
                out.append({"exp": list(e), "re": str(c.re), "im": str(c.im), "log2half": int(c.h)})
            else:
                out.append({"exp": list(e), "re": repr(float(c.real)), "im": repr(float(c.imag)), "log2half": 0})
        d = {"nvars": self.nvars, "mode": self.mode, "terms": out}
        if self.truncation is not None:
            d["truncation"] = self.truncation
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "Polynomial":
        try:
            nvars = int(data["nvars"])
            mode = data.get("mode", "exact")
            terms = {}
            for t in data["terms"]:
                exp = tuple(int(v) for v in t["exp"])
                h = int(t.get("log2half", 0))
                if mode == "exact":
                    c = Coef(_q(t.get("re", "0")), _q(t.get("im", "0")), h)
                else:
                    c = complex(float(Fraction(str(t.get("re", "0")))),
                                float(Fraction(str(t.get("im", "0"))))) * (SQRT2 ** h)
                if exp in terms:
                    raise ValueError(f"duplicate exponent {exp}")
                terms[exp] = c
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial JSON: {exc}") from exc
        return cls(nvars, terms, mode, data.get("truncation"))

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_json_dict(), **kw)

    @classmethod
    def loads(cls, text: str) -> "Polynomial":
        return cls.from_json_dict(json.loads(text))


def _prune(terms: dict, mode: str) -> dict:
    if mode == "exact":
        return {e: c for e, c in terms.items() if c}
    if not terms:
        return terms
    peak = defaultdict(float)
    for e, c in terms.items():
        d = sum(e)
        a = abs(c)
        if a > peak[d]:
            peak[d] = a
    return {e: c for e, c in terms.items() if c != 0 and abs(c) > FLOAT_PRUNE * peak[sum(e)]}


# ---------------------------------------------------------------------------
# Poisson bracket and Lie transforms
# ---------------------------------------------------------------------------

def _by_degree(terms):
    groups = defaultdict(list)
    for e, c in terms.items():
        groups[sum(e)].append((e, c))
    return groups


def poisson_bracket(P: Polynomial, Q: Polynomial, truncation=None) -> Polynomial:
    """Canonical bracket sum_j dP/dxi_j dQ/dxi_{n+j} - dP/dxi_{n+j} dQ/dxi_j.

    Both partial-derivative products of a pair of monomials land on the same
    monomial, so each pair contributes one weighted product.
    """
    P._check(Q)
    if P.nvars % 2:
        raise DimensionError("Poisson bracket needs an even number of variables")
    n = P.nvars // 2
    tr = P._joint_truncation(Q)
    if truncation is not None:
        tr = truncation if tr is None else min(tr, truncation)
    gp, gq = _by_degree(P._terms), _by_degree(Q._terms)
    out = {}
    get = out.get
    rng = range(n)
    for dp, tp in gp.items():
        if dp == 0:
            continue
        for dq, tq in gq.items():
            if dq == 0 or (tr is not None and dp + dq - 2 > tr):
                continue
            for e1, c1 in tp:
                for e2, c2 in tq:
                    prod = None
                    for j in rng:
                        w = e1[j] * e2[n + j] - e1[n + j] * e2[j]
                        if not w:
                            continue
                        if prod is None:
                            prod = c1 * c2
                            s = [a + b for a, b in zip(e1, e2)]
                        s[j] -= 1
                        s[n + j] -= 1
                        key = tuple(s)
                        s[j] += 1
                        s[n + j] += 1
                        term = prod * w
                        prev = get(key)
                        out[key] = term if prev is None else prev + term
    return Polynomial(P.nvars, _prune(out, P.mode), P.mode, tr, _trusted=True)


def lie_transform(F: Polynomial, chi: Polynomial, truncation=None, max_terms: int = 200) -> Polynomial:
    """Return ``exp(L) F`` with ``L G = {G, chi}``.

    With the bracket above, ``{G, chi}`` is the derivative of ``G`` along the
    Hamiltonian flow of ``chi``, so the result is ``F`` composed with the
    time-one map of ``chi`` (as a jet truncated at ``truncation``).
    """
    if chi.is_zero:
        return F if truncation is None else F.truncate(truncation)
    tr = F._joint_truncation(chi)
    if truncation is not None:
        tr = truncation if tr is None else min(tr, truncation)
    if tr is None and chi.min_degree <= 2:
        raise ValueError("an untruncated Lie series needs a generator of degree >= 3")
    total = F if tr is None else F.truncate(tr)
    term = total
    for k in range(1, max_terms + 1):
        term = poisson_bracket(term, chi, tr)
        if term.is_zero:
            return total
        term = term.scale(mpq(1, k)) if F.mode == "exact" else term.scale(1.0 / k)
        total = total + term
        # float series with a quadratic generator never reach an exact zero
        if F.mode == "float" and term.max_abs_coefficient() <= 1e-17 * max(total.max_abs_coefficient(), 1e-300):
            return total
    raise RuntimeError("Lie series did not terminate; is the generator of degree >= 3?")


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def poly_norm(P: Polynomial, k: int) -> float:
    """Sum of coefficient moduli of the degree-``k`` part."""
    return math.fsum(abs(c) for e, c in P.items() if sum(e) == k)


@dataclass(frozen=True)
class CoefficientNormReport:
    per_degree: dict
    rho: float
    sup_bound: float


def norm_report(P: Polynomial, rho: float) -> CoefficientNormReport:
    if rho <= 0:
        raise DomainError("radius must be positive")
    per = {k: poly_norm(P, k) for k in P.degrees()}
    return CoefficientNormReport(per, float(rho), math.fsum(v * rho ** k for k, v in per.items()))


def sup_norm_bound(P: Polynomial, rho) -> float:
    """Upper bound sum_k ||P_k|| rho^k for sup |P| on the ball of radius rho."""
    if rho <= 0:
        raise DomainError("radius must be positive")
    if isinstance(rho, (int, Rational)) and P.mode == "exact" and all(not c.h and not c.im for c in P._terms.values()):
        # rational coefficients and radius: the bound is rational; return it exactly as float
        acc = Fraction(0)
        for e, c in P.items():
            acc += abs(Fraction(int(c.re.numerator), int(c.re.denominator))) * Fraction(rho) ** sum(e)
        return float(acc)
    return norm_report(P, float(rho)).sup_bound


def vector_field_norm(P: Polynomial, rho: float) -> float:
    """Surrogate sum_k k ||P_k|| rho^(k-1) for the Hamiltonian vector field of P."""
    if rho <= 0:
        raise DomainError("radius must be positive")
    return math.fsum(k * poly_norm(P, k) * rho ** (k - 1) for k in P.degrees() if k > 0)


# ---------------------------------------------------------------------------
# Linear substitutions, complexification, actions
# ---------------------------------------------------------------------------

def linear_substitute(P: Polynomial, images) -> Polynomial:
    """Substitute variable j by the polynomial ``images[j]`` (all sharing nvars/mode)."""
    images = list(images)
    if len(images) != P.nvars:
        raise DimensionError("need one image per variable")
    target = images[0]
    powers = [dict() for _ in images]

    def power(j, k):
        cache = powers[j]
        if k not in cache:
            cache[k] = images[j] ** k
        return cache[k]

    out = Polynomial.zero(target.nvars, target.mode)
    for e, c in P.sorted_items():
        term = Polynomial.constant(target.nvars, c if target.mode == P.mode else complex(c), target.mode)
        for j, k in enumerate(e):
            if k:
                term = term * power(j, k)
        out = out + term
    return out


def _half_sqrt2():
    return Coef(mpq(1, 2), 0, 1)  # sqrt(2)/2 = 1/sqrt(2)


def complexify(H: Polynomial) -> Polynomial:
    """Substitute x_j = (xi_j + i xi_{n+j})/sqrt2, y_j = i(xi_j - i xi_{n+j})/sqrt2."""
    if H.nvars % 2:
        raise DimensionError("complexify needs 2n variables")
    n = H.nvars // 2
    r = _half_sqrt2() if H.mode == "exact" else 1 / SQRT2
    i = I if H.mode == "exact" else 1j
    images = []
    for j in range(n):
        e1 = [0] * (2 * n)
        e2 = [0] * (2 * n)
        e1[j] = 1
        e2[n + j] = 1
        images.append((tuple(e1), tuple(e2)))
    xs = [Polynomial(2 * n, {a: r, b: r * i}, H.mode) for a, b in images]
    ys = [Polynomial(2 * n, {a: r * i, b: r}, H.mode) for a, b in images]
    out = linear_substitute(H, xs + ys)
    return out if H.truncation is None else out.truncate(H.truncation)


def decomplexify(P: Polynomial) -> Polynomial:
    """Inverse of :func:`complexify`: xi_j = (x_j - i y_j)/sqrt2, xi_{n+j} = (-i x_j + y_j)/sqrt2."""
    if P.nvars % 2:
        raise DimensionError("decomplexify needs 2n variables")
    n = P.nvars // 2
    r = _half_sqrt2() if P.mode == "exact" else 1 / SQRT2
    i = I if P.mode == "exact" else 1j
    first, second = [], []
    for j in range(n):
        ex = [0] * (2 * n)
        ey = [0] * (2 * n)
        ex[j] = 1
        ey[n + j] = 1
        ex, ey = tuple(ex), tuple(ey)
        first.append(Polynomial(2 * n, {ex: r, ey: -(r * i)}, P.mode))
        second.append(Polynomial(2 * n, {ex: -(r * i), ey: r}, P.mode))
    out = linear_substitute(P, first + second)
    return out if P.truncation is None else out.truncate(P.truncation)


def substitute_actions(Q: Polynomial, coords: str = "complex") -> Polynomial:
    """Compose an action polynomial with I_j = i xi_j xi_{n+j} or (x_j^2 + y_j^2)/2."""
    n = Q.nvars
    if coords == "complex":
        out = {}
        i = I if Q.mode == "exact" else 1j
        for a, c in Q.items():
            phase = i ** sum(a) if Q.mode == "float" else _ipow(sum(a))
            out[tuple(a) + tuple(a)] = c * phase
        return Polynomial(2 * n, out, Q.mode)
    if coords == "real":
        half = mpq(1, 2) if Q.mode == "exact" else 0.5
        acts = []
        for j in range(n):
            ex = [0] * (2 * n)
            ey = [0] * (2 * n)
            ex[j] = 2
            ey[n + j] = 2
            acts.append(Polynomial(2 * n, {tuple(ex): half, tuple(ey): half}, Q.mode))
        return linear_substitute(Q, acts)
    raise ValueError("coords must be 'real' or 'complex'")


def _ipow(k: int) -> Coef:
    return [Coef(1), Coef(0, 1), Coef(-1), Coef(0, -1)][k % 4]


def action_form(weights, mode="exact", coords="complex") -> Polynomial:
    """The quadratic Hamiltonian sum_j w_j I_j."""
    n = len(weights)
    terms = {}
    for j, w in enumerate(weights):
        e = [0] * n
        e[j] = 1
        terms[tuple(e)] = w
    return substitute_actions(Polynomial(n, terms, mode), coords)


def is_action_monomial(exp) -> bool:
    n = len(exp) // 2
    return tuple(exp[:n]) == tuple(exp[n:])


def charge(exp) -> tuple:
    """a - b for a monomial xi^(a, b); additive under products and brackets."""
    n = len(exp) // 2
    return tuple(exp[j] - exp[n + j] for j in range(n))


def actions_part(P: Polynomial) -> Polynomial:
    """Read a polynomial built from monomials xi^(a,a) as a polynomial in I (complex coords)."""
    n = P.nvars // 2
    out = {}
    for e, c in P.items():
        if not is_action_monomial(e):
            raise ValueError(f"monomial {e} is not a function of the actions")
        a = e[:n]
        k = sum(a)
        out[tuple(a)] = c * (_ipow(-k % 4) if P.mode == "exact" else (-1j) ** k)
    return Polynomial(n, out, P.mode)


def random_polynomial(rng, nvars, degrees, density=0.5, mode="exact", max_num=5, max_den=4,
                      complex_coeffs=False):
    """Random polynomial with small rational (or float) coefficients, for tests and demos."""
    terms = {}
    for d in degrees:
        for combo in combinations_with_replacement(range(nvars), d):
            if rng.random() > density:
                continue
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            if mode == "exact":
                re = Fraction(int(rng.integers(-max_num, max_num + 1)), int(rng.integers(1, max_den + 1)))
                im = Fraction(int(rng.integers(-max_num, max_num + 1)), int(rng.integers(1, max_den + 1))) \
                    if complex_coeffs else 0
                terms[tuple(e)] = Coef(re, im)
            else:
                terms[tuple(e)] = complex(rng.normal(), rng.normal() if complex_coeffs else 0.0)
    return Polynomial(nvars, terms, mode)


# ---------------------------------------------------------------------------
# Fast numeric evaluation
# ---------------------------------------------------------------------------

class NumericPolynomial:
    """Vectorized evaluation of a polynomial, its gradient and Hessian.

    Points are arrays of shape ``(..., nvars)``.  Coefficients are stored as
    real floats when the polynomial is real, complex otherwise.
    """

    def __init__(self, P: Polynomial):
        self.nvars = P.nvars
        items = P.sorted_items()
        coefs = np.array([complex(c) for _, c in items], dtype=complex)
        if coefs.size and np.all(coefs.imag == 0):
            coefs = coefs.real.copy()
        self.coefs = coefs if coefs.size else np.zeros(0)
        self.exps = np.array([e for e, _ in items], dtype=np.int64).reshape(-1, P.nvars)
        self._grad = [self._derivative(self.exps, self.coefs, j) for j in range(self.nvars)]
        self._hess = None

    @staticmethod
    def _derivative(exps, coefs, j):
        mask = exps[:, j] > 0
        e = exps[mask].copy()
        c = coefs[mask] * e[:, j]
        e[:, j] -= 1
        return e, c

    @staticmethod
    def _eval(exps, coefs, X):
        if exps.shape[0] == 0:
            return np.zeros(X.shape[:-1], dtype=coefs.dtype if coefs.size else float)
        mono = np.ones(X.shape[:-1] + (exps.shape[0],), dtype=X.dtype)
        for j in range(exps.shape[1]):
            col = exps[:, j]
            if np.any(col):
                mono = mono * X[..., j, None] ** col
        return mono @ coefs

    def __call__(self, X):
        X = np.asarray(X, dtype=float if np.isrealobj(X) else complex)
        return self._eval(self.exps, self.coefs, X)

    def gradient(self, X):
        X = np.asarray(X, dtype=float if np.isrealobj(X) else complex)
        return np.stack([self._eval(e, c, X) for e, c in self._grad], axis=-1)

    def hessian(self, X):
        X = np.asarray(X, dtype=float if np.isrealobj(X) else complex)
        if self._hess is None:
            self._hess = [[self._derivative(e, c, k) for k in range(self.nvars)] for e, c in self._grad]
        rows = [np.stack([self._eval(e, c, X) for e, c in row], axis=-1) for row in self._hess]
        return np.stack(rows, axis=-2)

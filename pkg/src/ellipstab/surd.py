"""Exact arithmetic in a real quadratic field Q(sqrt(d)).

A :class:`QuadraticSurd` is ``a + b*sqrt(d)`` with rational ``a``, ``b`` and a
squarefree integer ``d > 1`` (``d == 1`` marks a plain rational).  Signs and
comparisons are decided exactly, so small divisors ``k.alpha`` never suffer
from cancellation.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational


def _squarefree_split(d: int) -> tuple[int, int]:
    """Return (s, r) with d = s*s*r and r squarefree."""
    s, r, f = 1, d, 2
    while f * f <= r:
        while r % (f * f) == 0:
            r //= f * f
            s *= f
        f += 1
    return s, r


class QuadraticSurd:
    __slots__ = ("a", "b", "d")

    def __init__(self, a=0, b=0, d: int = 1):
        a, b, d = Fraction(a), Fraction(b), int(d)
        if d < 1:
            raise ValueError("only real quadratic fields are supported (d >= 1)")
        if b == 0:
            d = 1
        elif d > 1:
            s, d = _squarefree_split(d)
            b *= s
        if d == 1:
            a, b = a + b, Fraction(0)
        self.a, self.b, self.d = a, b, d

    @classmethod
    def from_pqr(cls, p, q, d, r=1):
        """(p + q*sqrt(d)) / r."""
        r = Fraction(r)
        if r == 0:
            raise ZeroDivisionError("r must be nonzero")
        return cls(Fraction(p) / r, Fraction(q) / r, d)

    # -- helpers ---------------------------------------------------------
    def _common(self, other):
        if isinstance(other, QuadraticSurd):
            if self.d != other.d and self.d != 1 and other.d != 1:
                raise ValueError(f"mixed fields sqrt({self.d}) and sqrt({other.d})")
            return other, max(self.d, other.d)
        if isinstance(other, (int, Rational)):
            return QuadraticSurd(other), self.d
        return NotImplemented, None

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def sign(self) -> int:
        a, b = self.a, self.b
        sa = (a > 0) - (a < 0)
        sb = (b > 0) - (b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: compare a^2 with b^2 d
        diff = a * a - b * b * self.d
        sd = (diff > 0) - (diff < 0)
        return sa * sd

    def conjugate(self) -> "QuadraticSurd":
        return QuadraticSurd(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        """Field norm a^2 - d b^2."""
        return self.a * self.a - self.b * self.b * self.d

    def floor(self) -> int:
        if self.b == 0:
            return math.floor(self.a)
        den = math.lcm(self.a.denominator, self.b.denominator)
        A = int(self.a * den)
        B = int(self.b * den)
        root = math.isqrt(B * B * self.d)
        m = root if B > 0 else -(root + 1)
        return (A + m) // den

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        o, d = self._common(other)
        if o is NotImplemented:
            return NotImplemented
        return QuadraticSurd(self.a + o.a, self.b + o.b, d)

    __radd__ = __add__

    def __neg__(self):
        return QuadraticSurd(-self.a, -self.b, self.d)

    def __sub__(self, other):
        o, d = self._common(other)
        if o is NotImplemented:
            return NotImplemented
        return QuadraticSurd(self.a - o.a, self.b - o.b, d)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o, d = self._common(other)
        if o is NotImplemented:
            return NotImplemented
        return QuadraticSurd(self.a * o.a + self.b * o.b * d,
                             self.a * o.b + self.b * o.a, d)

    __rmul__ = __mul__

    def reciprocal(self) -> "QuadraticSurd":
        nrm = self.norm()
        if nrm == 0:
            raise ZeroDivisionError("division by zero surd")
        return QuadraticSurd(self.a / nrm, -self.b / nrm, self.d)

    def __truediv__(self, other):
        o, _ = self._common(other)
        if o is NotImplemented:
            return NotImplemented
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o, _ = self._common(other)
        if o is NotImplemented:
            return NotImplemented
        return o * self.reciprocal()

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- comparisons -----------------------------------------------------
    def _cmp(self, other) -> int:
        o, _ = self._common(other)
        if o is NotImplemented:
            # floats: compare numerically, fine for ordering against data
            x = float(self)
            y = float(other)
            return (x > y) - (x < y)
        return (self - o).sign()

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b, self.d))

    def __bool__(self):
        return self.a != 0 or self.b != 0

    def __float__(self):
        a, b = self.a, self.b
        if b == 0:
            return float(a)
        r = math.sqrt(self.d)
        if a == 0 or (a > 0) == (b > 0):
            return float(a) + float(b) * r
        # a and b*sqrt(d) cancel: use (a^2 - b^2 d)/(a - b sqrt(d))
        return float(self.norm()) / (float(a) - float(b) * r)

    def __repr__(self):
        if self.b == 0:
            return f"QuadraticSurd({self.a})"
        return f"QuadraticSurd({self.a}, {self.b}, {self.d})"

    def __str__(self):
        if self.b == 0:
            return str(self.a)
        return f"{self.a} + {self.b}*sqrt({self.d})"

    def to_pqr(self) -> tuple[int, int, int]:
        """Integers (p, q, r) with value (p + q sqrt(d))/r."""
        r = math.lcm(self.a.denominator, self.b.denominator)
        return int(self.a * r), int(self.b * r), r


def golden() -> QuadraticSurd:
    return QuadraticSurd.from_pqr(1, 1, 5, 2)


def sqrt_surd(d: int) -> QuadraticSurd:
    return QuadraticSurd(0, 1, d)

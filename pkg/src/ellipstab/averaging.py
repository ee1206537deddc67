"""Resonant averaging along periodic linear flows.

A periodic vector ``omega`` (``T omega = N`` integral) defines the quadratic
Hamiltonian ``l_omega = omega . I``.  In complex coordinates its flow multiplies
``xi^(a, b)`` by ``exp(i omega.(a-b) t)``, so averaging keeps exactly the
monomials with ``N.(a-b) = 0`` and the homotopy generator divides the other
coefficients by ``i omega.(a-b)``.  Both decisions use the integer ``N`` and are
exact in either coefficient mode.

Analytic sup norms of Hamiltonian vector fields are replaced by the coefficient
surrogate ``sum_k k ||P_k|| rho^(k-1)`` with ``rho = r + 3 xi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from gmpy2 import mpq

from .diophantine import PeriodicVector
from .errors import ConsistencyError, DimensionError, DomainError, ThresholdError
from .poly import (Coef, Polynomial, action_form, charge, lie_transform, poisson_bracket,
                   substitute_actions, vector_field_norm)


def _phase_number(omega: PeriodicVector, exp) -> int:
    """N.(a-b); zero exactly when the monomial is invariant under the flow of l_omega."""
    return sum(int(v) * int(c) for v, c in zip(omega.N, charge(exp)))


def l_omega(omega: PeriodicVector, mode: str = "exact") -> Polynomial:
    """omega . I in complex coordinates."""
    if mode == "exact":
        if not omega.exact:
            raise DomainError("exact mode needs an exact periodic vector")
        w = [mpq(Fraction(x).numerator, Fraction(x).denominator) for x in omega.omega]
    else:
        w = [float(x) for x in omega.omega]
    return action_form(w, mode)


def commutes(P: Polynomial, omega: PeriodicVector) -> bool:
    """True when {l_omega, P} = 0, decided monomial by monomial."""
    if P.nvars != 2 * omega.n:
        raise DimensionError("dimension mismatch between polynomial and omega")
    return all(_phase_number(omega, e) == 0 for e in P)


def periodic_average(f: Polynomial, omega: PeriodicVector) -> Polynomial:
    """Average of ``f`` along the flow of ``l_omega`` over one period."""
    if f.nvars != 2 * omega.n:
        raise DimensionError("dimension mismatch between polynomial and omega")
    return f._new({e: c for e, c in f.items() if _phase_number(omega, e) == 0}, prune=False)


def _divisor(omega: PeriodicVector, num: int, mode):
    T = omega.T
    if mode == "exact":
        Tq = Fraction(T)
        q = Fraction(num) / Tq
        return Coef(0, mpq(q.numerator, q.denominator))
    return 1j * num / float(T)


def homotopy_generator(f: Polynomial, omega: PeriodicVector, check: bool = True) -> Polynomial:
    """Generator ``chi`` with ``{chi, l_omega} = f - [f]``.

    The identity is verified before returning (exactly in exact mode, to
    rounding in float mode).
    """
    if f.nvars != 2 * omega.n:
        raise DimensionError("dimension mismatch between polynomial and omega")
    if f.mode == "exact" and not omega.exact:
        raise DomainError("exact mode needs an exact periodic vector")
    terms = {}
    for e, c in f.items():
        num = _phase_number(omega, e)
        if num:
            terms[e] = c / _divisor(omega, num, f.mode)
    chi = f._new(terms, truncation=None, prune=False)
    if check:
        lhs = poisson_bracket(chi, l_omega(omega, f.mode))
        diff = lhs - (f.untruncated() - periodic_average(f, omega).untruncated())
        if f.mode == "exact":
            if not diff.is_zero:
                raise ConsistencyError("homological identity failed")
        elif diff.max_abs_coefficient() > 1e-12 * max(1.0, f.max_abs_coefficient()):
            raise ConsistencyError("homological identity failed beyond rounding")
    return chi


# ---------------------------------------------------------------------------
# Normal-form data
# ---------------------------------------------------------------------------

def hessian_bound(h: Polynomial, r: float) -> float:
    """Bound on the operator norm of the Hessian of ``h(I)`` over ``|I_j| <= r^2/2``.

    Each entry is bounded by the sum of coefficient moduli of the second
    derivative evaluated at the corner; the operator norm by the Frobenius norm.
    """
    n = h.nvars
    rad = r * r / 2
    M = np.zeros((n, n))
    for k in range(n):
        dk = h.diff(k)
        for l in range(n):
            dkl = dk.diff(l)
            M[k, l] = math.fsum(abs(c) * rad ** sum(e) for e, c in dkl.items())
    return float(np.linalg.norm(M))


def gradient_bound(h: Polynomial, r: float) -> float:
    n = h.nvars
    rad = r * r / 2
    v = [math.fsum(abs(c) * rad ** sum(e) for e, c in h.diff(k).items()) for k in range(n)]
    return float(np.linalg.norm(v))


@dataclass
class NormalFormDatum:
    """State ``h(I) + g + f`` of the averaging scheme at stage ``j``.

    ``omegas`` holds the periodic vectors already averaged out
    (``omega_0 .. omega_{j-1}``), ``anchor`` the point ``z_j`` in real
    coordinates ``(x, y)``.
    """

    n: int
    j: int
    omegas: list
    h: Polynomial
    g: Polynomial
    f: Polynomial
    eps: float
    m: int
    anchor: tuple
    s: float
    r: float
    xi: float
    F: float | None = None

    def __post_init__(self):
        if self.h.nvars != self.n or self.g.nvars != 2 * self.n or self.f.nvars != 2 * self.n:
            raise DimensionError("datum polynomials have inconsistent dimensions")
        if len(self.anchor) != 2 * self.n:
            raise DimensionError("anchor must live in R^(2n)")
        if min(self.s, self.r, self.xi) <= 0 or self.eps <= 0:
            raise DomainError("s, r, xi and eps must be positive")
        if self.F is None:
            self.F = hessian_bound(self.h, self.rho)
        if len(self.omegas) != self.j:
            raise DomainError("stage index must equal the number of averaged periodic vectors")
        if self.omegas:
            A = np.array([o.floats() for o in self.omegas])
            if np.linalg.matrix_rank(A) < len(self.omegas):
                raise DomainError("periodic vectors are linearly dependent")

    @property
    def mode(self):
        return self.g.mode

    @property
    def rho(self) -> float:
        return self.r + 3 * self.xi

    def hamiltonian(self) -> Polynomial:
        return substitute_actions(self.h, "complex") + self.g + self.f

    def surrogate(self, P: Polynomial) -> float:
        return vector_field_norm(P, self.rho)

    def projector(self) -> np.ndarray:
        """Orthogonal projection onto the complement of span(omegas)."""
        n = self.n
        if not self.omegas:
            return np.eye(n)
        A = np.array([o.floats() for o in self.omegas]).T
        Qm, _ = np.linalg.qr(A)
        return np.eye(n) - Qm @ Qm.T

    def anchor_actions(self) -> np.ndarray:
        z = np.asarray(self.anchor, dtype=float)
        n = self.n
        return 0.5 * (z[:n] ** 2 + z[n:] ** 2)

    def frequency_at_anchor(self) -> np.ndarray:
        hr = self.h.real_part() if not self.h.is_real() else self.h
        return np.real(hr.compile().gradient(self.anchor_actions()))

    def membership(self) -> dict:
        """Checks of the stage-j class: resonance of g and surrogate sizes."""
        out = {}
        out["g_resonant"] = all(commutes(self.g, o) for o in self.omegas)
        gN = self.surrogate(self.g)
        fN = self.surrogate(self.f)
        out["g_norm"] = (gN, 2 ** self.j * self.eps, gN <= 2 ** self.j * self.eps)
        fb = self.j * 2 ** (self.j - 1) * 2.0 ** (-self.m) * self.eps
        out["f_norm"] = (fN, fb, fN <= fb * (1 + 1e-12))
        return out

    def to_json_dict(self) -> dict:
        return {"n": self.n, "j": self.j, "omegas": [o.to_json_dict() for o in self.omegas],
                "h": self.h.to_json_dict(), "g": self.g.to_json_dict(), "f": self.f.to_json_dict(),
                "eps": self.eps, "m": self.m, "anchor": [float(v) for v in self.anchor],
                "s": self.s, "r": self.r, "xi": self.xi, "F": self.F}

    @classmethod
    def from_json_dict(cls, d: dict) -> "NormalFormDatum":
        return cls(int(d["n"]), int(d.get("j", 0)), [PeriodicVector.from_json_dict(o) for o in d.get("omegas", [])],
                   Polynomial.from_json_dict(d["h"]), Polynomial.from_json_dict(d["g"]),
                   Polynomial.from_json_dict(d["f"]), float(d["eps"]), int(d["m"]),
                   tuple(float(v) for v in d["anchor"]), float(d["s"]), float(d["r"]), float(d["xi"]),
                   d.get("F"))


def threshold_checks(datum: NormalFormDatum, omega: PeriodicVector) -> dict:
    """The three smallness conditions of the averaging step, on surrogates.

    Returns ``{name: (lhs, rhs, ok)}``.
    """
    s, r, xi, m, eps, j, n = datum.s, datum.r, datum.xi, datum.m, datum.eps, datum.j, datum.n
    T = float(omega.T)
    F = datum.F
    checks = {
        "s <= (r+2xi)xi": (s, (r + 2 * xi) * xi),
        "2^j 216 (r+3xi) m T eps <= s": (2 ** j * 216 * (r + 3 * xi) * m * T * eps, s),
        "72(3F sqrt(n)+1) (r+3xi)/xi m T s <= 1": (72 * (3 * F * math.sqrt(n) + 1) * (r + 3 * xi) / xi * m * T * s, 1.0),
    }
    return {k: (float(a), float(b), bool(a <= b * (1 + 1e-12))) for k, (a, b) in checks.items()}


def _raise_first_failure(checks: dict):
    for name, (lhs, rhs, ok) in checks.items():
        if not ok:
            raise ThresholdError(name, lhs, rhs)


@dataclass
class AveragingStepLog:
    iteration: int
    norm_average: float
    norm_chi: float
    norm_g: float
    norm_f_old: float
    norm_f_new: float
    thresholds: dict = field(default_factory=dict)

    @property
    def contraction(self) -> float:
        return math.inf if self.norm_f_new == 0 else self.norm_f_old / self.norm_f_new

    @property
    def thresholds_hold(self) -> bool:
        return all(ok for _, _, ok in self.thresholds.values())

    def to_json_dict(self) -> dict:
        c = self.contraction
        return {"iteration": self.iteration, "norm_average": self.norm_average, "norm_chi": self.norm_chi,
                "norm_g": self.norm_g, "norm_f_old": self.norm_f_old, "norm_f_new": self.norm_f_new,
                "contraction": None if math.isinf(c) else c, "surrogate": True,
                "thresholds": {k: {"lhs": a, "rhs": b, "ok": ok} for k, (a, b, ok) in self.thresholds.items()}}


def averaging_step(datum: NormalFormDatum, omega: PeriodicVector, working_degree: int,
                   enforce_thresholds: bool = True, iteration: int = 0):
    """One averaging iteration with respect to ``omega``.

    ``g`` must already commute with ``omega`` and every earlier periodic
    vector; ``f`` with the earlier ones.  Returns the new datum, the
    generator and the step log.
    """
    if omega.n != datum.n:
        raise DimensionError("omega has the wrong dimension")
    checks = threshold_checks(datum, omega)
    if enforce_thresholds:
        _raise_first_failure(checks)
    prior = list(datum.omegas)
    for o in prior:
        if not commutes(datum.f, o):
            raise ConsistencyError("f does not commute with an earlier periodic vector")
    for o in prior + [omega]:
        if not commutes(datum.g, o):
            raise ConsistencyError("g does not commute with the averaging frequencies")
    W = int(working_degree)
    f = datum.f.untruncated().truncate(W)
    avg = periodic_average(f, omega)
    chi = homotopy_generator(f, omega)
    if not chi.is_zero and chi.min_degree < 3:
        raise DomainError("the generator must start at degree 3 for a terminating Lie series")
    hI = substitute_actions(datum.h, "complex").truncate(W)
    g_new = (datum.g + avg).untruncated()
    total = hI + datum.g.untruncated().truncate(W) + f
    moved = lie_transform(total, chi, W) if not chi.is_zero else total
    f_new = (moved - hI - g_new.truncate(W)).untruncated()
    for o in prior + [omega]:
        if not commutes(g_new, o):
            raise ConsistencyError("new g is not resonant")
    for o in prior:
        if not commutes(f_new, o):
            raise ConsistencyError("new f lost commutation with an earlier periodic vector")
    log = AveragingStepLog(iteration, datum.surrogate(avg), datum.surrogate(chi), datum.surrogate(g_new),
                           datum.surrogate(datum.f), datum.surrogate(f_new), checks)
    return replace(datum, g=g_new, f=f_new), chi, log


@dataclass
class NormalizationResult:
    """Generators ``chi^0 .. chi^(m-1)`` (the transform is the composition of their
    time-one maps, first generator outermost) and the stage-(j+1) datum."""

    generators: list
    datum: NormalFormDatum
    logs: list
    checks: dict

    def to_json_dict(self) -> dict:
        return {"generators": [c.to_json_dict() for c in self.generators],
                "datum": self.datum.to_json_dict(), "log": [l.to_json_dict() for l in self.logs],
                "checks": self.checks}


def normalize(datum: NormalFormDatum, omega: PeriodicVector, m: int | None = None,
              working_degree: int = 8, enforce_thresholds: bool = True) -> NormalizationResult:
    """Average ``h + g`` with respect to ``omega`` in ``m`` iterations; transport ``f``.

    The inner scheme starts from ``g = 0``, ``f = datum.g``; the old ``f`` is
    composed with every generator and added back at the end.
    """
    m = datum.m if m is None else int(m)
    if m < 0:
        raise DomainError("m must be non-negative")
    W = int(working_degree)
    checks = {"thresholds": threshold_checks(datum, omega)}
    P = datum.projector()
    nu = datum.frequency_at_anchor()
    dev = float(np.linalg.norm(P @ nu - omega.floats()))
    checks["anchor_frequency"] = (dev, datum.s, dev <= datum.s * (1 + 1e-12))
    if enforce_thresholds:
        _raise_first_failure(checks["thresholds"])
        if not checks["anchor_frequency"][2]:
            raise ThresholdError("|Pi grad h(I(z_j)) - omega_j| <= s_j", dev, datum.s)
    zero = Polynomial.zero(2 * datum.n, datum.mode)
    inner = replace(datum, g=zero, f=datum.g)
    carried = datum.f.untruncated().truncate(W)
    gens, logs = [], []
    for i in range(m):
        inner, chi, log = averaging_step(inner, omega, W, enforce_thresholds=False, iteration=i)
        gens.append(chi)
        logs.append(log)
        if not chi.is_zero:
            carried = lie_transform(carried, chi, W)
    f_plus = (inner.f + carried).untruncated()
    out = NormalFormDatum(datum.n, datum.j + 1, list(datum.omegas) + [omega], datum.h,
                          inner.g, f_plus, datum.eps, datum.m, datum.anchor, datum.s, datum.r, datum.xi, datum.F)
    gN = out.surrogate(out.g)
    fN = out.surrogate(out.f)
    j = datum.j
    checks["g_plus"] = (gN, 2 ** (j + 1) * datum.eps, gN <= 2 ** (j + 1) * datum.eps * (1 + 1e-12))
    fb = (j + 1) * 2 ** j * 2.0 ** (-m) * datum.eps
    checks["f_plus"] = (fN, fb, fN <= fb * (1 + 1e-12))
    # bound on the displacement of the normalizing transform
    checks["phi_distortion_bound"] = 2 ** (j + 1) * float(omega.T) * datum.eps
    if enforce_thresholds and m > 0:
        for key, label in (("g_plus", "||X_g+|| <= 2^(j+1) eps"), ("f_plus", "||X_f+|| <= (j+1)2^j 2^-m eps")):
            lhs, rhs, ok = checks[key]
            if not ok:
                raise ThresholdError(label, lhs, rhs)
    return NormalizationResult(gens, out, logs, checks)


def initial_datum(h: Polynomial, f: Polynomial, eps: float, m: int, anchor, r: float, T0: float, Q: float,
                  F: float | None = None) -> NormalFormDatum:
    """Stage-0 datum: ``g_0 = f``, ``f_0 = 0``, ``s_0 = sqrt(n-1)/(T_0 Q)``, ``r_0 = r/2``, ``xi_0 = r_0/3``."""
    n = h.nvars
    s0 = math.sqrt(max(n - 1, 1)) / (float(T0) * float(Q))
    r0 = r / 2
    zero = Polynomial.zero(2 * n, f.mode)
    return NormalFormDatum(n, 0, [], h, f, zero, eps, m, tuple(anchor), s0, r0, r0 / 3, F)


def advance_domain(datum: NormalFormDatum, T_next: float, Q: float, anchor=None) -> NormalFormDatum:
    """Next-stage radii: s = 2 sqrt(n-1)/(T Q), r = r + xi, xi = xi/3."""
    n = datum.n
    return replace(datum, s=2 * math.sqrt(max(n - 1, 1)) / (float(T_next) * float(Q)),
                   r=datum.r + datum.xi, xi=datum.xi / 3,
                   anchor=tuple(anchor) if anchor is not None else datum.anchor)

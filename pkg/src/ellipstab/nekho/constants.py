"""Exponents, threshold constants and the (Q, m) schedule of the confinement argument.

Everything is evaluated in log space: the constants routinely over- or
underflow double precision for moderate ``n`` and steepness indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import DomainError

LN2 = math.log(2.0)


def _exp(x: float) -> float:
    if x > 709.0:
        return math.inf
    if x < -745.0:
        return 0.0
    return math.exp(x)


@dataclass(frozen=True)
class SteepParams:
    kappa: float
    C: float
    delta: float
    p: tuple
    E: float
    F: float

    def __post_init__(self):
        p = tuple(int(v) for v in self.p)
        object.__setattr__(self, "p", p)
        for name in ("kappa", "C", "delta", "E", "F"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive and finite")
        if any(v < 1 for v in p):
            raise DomainError("steepness indices must be >= 1")

    @property
    def n(self) -> int:
        return len(self.p) + 1

    @property
    def Fprime(self) -> float:
        return max(1.0, self.F)

    def to_json_dict(self) -> dict:
        return {"kappa": self.kappa, "C": self.C, "delta": self.delta, "p": list(self.p),
                "E": self.E, "F": self.F}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SteepParams":
        return cls(float(d["kappa"]), float(d["C"]), float(d["delta"]), tuple(d["p"]),
                   float(d["E"]), float(d["F"]))

    @classmethod
    def from_certificate(cls, cert, E: float, F: float, kappa: float | None = None) -> "SteepParams":
        """Build from a :class:`~ellipstab.steepness.SteepnessCertificate` plus gradient bounds."""
        return cls(kappa if kappa is not None else cert.kappa, cert.C, cert.delta, tuple(cert.p), E, F)


def pi_jk(p, j: int, k: int) -> int:
    """Product of p_i over n-j <= i <= n-j+k-1 (1-based indices); empty product is 1."""
    n = len(p) + 1
    out = 1
    for i in range(n - j, n - j + k):
        out *= p[i - 1]
    return out


def a_jk(p, j: int, k: int) -> int:
    return sum(pi_jk(p, j, i) for i in range(k + 1))


@dataclass
class NekhoConstants:
    n: int
    steep: SteepParams
    a: int
    a_prime: int
    mu: list
    nu: list
    eta: float
    log_b: dict
    log_ctilde: dict
    exponents: list = field(default_factory=list)

    @property
    def two_na(self) -> int:
        return 2 * self.n * self.a

    def b(self, i: int) -> float:
        return _exp(self.log_b[i])

    def ctilde(self, i: int) -> float:
        return _exp(self.log_ctilde[i])

    @property
    def b1(self):
        return self.b(1)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "steep": self.steep.to_json_dict(), "a": self.a, "a_prime": self.a_prime,
            "mu": self.mu, "nu": self.nu, "eta": self.eta,
            "b": {str(i): self.b(i) for i in sorted(self.log_b)},
            "log_b": {str(i): v for i, v in sorted(self.log_b.items())},
            "ctilde": {str(i): self.ctilde(i) for i in sorted(self.log_ctilde)},
            "log_ctilde": {str(i): v for i, v in sorted(self.log_ctilde.items())},
            "stage_exponents": self.exponents,
        }


def compute_constants(n: int, steep: SteepParams) -> NekhoConstants:
    if n < 2:
        raise DomainError("the confinement constants need n >= 2")
    if steep.n != n:
        raise DomainError("need n-1 steepness indices")
    p = steep.p
    kappa, C, E, F = steep.kappa, steep.C, steep.E, steep.F
    Fp = steep.Fprime
    a = a_jk(p, n - 1, n - 1)
    a_prime = a_jk(p, n - 2, n - 2)
    mu = [C / 5 * 16.0 ** (-p[n - j - 2]) for j in range(n - 1)]
    eta = min(min(kappa / (3 * F), 2 * (5 * kappa / (4 * C)) ** (1 / p[n - j - 2])) for j in range(n - 1))

    def log_nu(j):
        return sum(pi_jk(p, j, j - 1 - i) * math.log(mu[i]) for i in range(j))

    nu = [_exp(log_nu(j)) for j in range(n)]
    lnu1, lnu2 = log_nu(n - 1), log_nu(n - 2)
    pi1, pi2 = pi_jk(p, n - 1, n - 1), pi_jk(p, n - 2, n - 2)
    sq, sqn = math.sqrt(n - 1), math.sqrt(n)

    lb = {}
    lb[1] = -math.log(216 * (3 * F * sqn + 1) * (3 ** n + 1) * sq)
    lb[2] = max(math.log(8 * Fp * math.sqrt(n * (n - 1))), math.log(E * sq / (8 * eta)), -lb[1])
    lb[3] = math.log(E * sq / 8)
    lb[4] = math.log(36 * E * sq / 5)
    lb[5] = ((n - 1) * LN2 + math.log(27 * (3 + 3.0 ** (1 - n))) + a * math.log(n) - a * math.log(n - 1)
             + math.log(sq) - 2 * lnu1 - 2 * pi1 * math.log(kappa) + lb[1])
    lb[6] = (math.log(2 * sqn * Fp) + (a + a_prime) * (math.log(sqn) - math.log(sq)) - lnu1 - lnu2
             - (pi1 + pi2) * math.log(kappa))

    tna = 2 * n * a
    lc = {}
    lc[1] = -lb[5] - tna * lb[2]
    lc[2] = -lb[5] - tna * lb[3]
    lc[3] = -lb[5] - tna * lb[4]
    lc[4] = (-2 * a / (a - a_prime)) * lb[6] + (a + a_prime) / (a - a_prime) * lb[5]
    lc[5] = math.log(2 * E * sq) + lb[5] / tna
    lc[6] = math.log(3 / (4 * E * sq)) - lb[5] / tna
    lc[7] = math.log(LN2) + lb[1] - lb[5] / tna
    exps = [2 * n * a_jk(p, j, j) for j in range(n)]
    return NekhoConstants(n, steep, a, a_prime, mu, nu, eta, lb, lc, exps)


@dataclass
class Schedule:
    Q: float
    m: int
    log_Q: float
    drift_bound: float
    log_time_bound: float
    thresholds: dict
    thresholds_ok: bool
    s: float
    log_tbar: float

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def choose_Q_m(r: float, eps: float, consts: NekhoConstants) -> Schedule:
    """``Q = (b5 r eps)^(-1/(2na))`` and ``m = floor(b1 Q)`` with the predicted bounds.

    ``thresholds`` maps each term of the smallness condition on ``r*eps`` to
    ``(log lhs, log rhs, ok)``; ``drift_bound`` is ``c5 (r eps)^(1/(2na))`` and
    ``log_time_bound`` is the log of ``c6 r^-1 (r eps)^(-1/(2na)) exp(c7 r^-1 (r eps)^(-1/(2na)))``.
    """
    if not (r > 0 and eps > 0):
        raise DomainError("r and eps must be positive")
    tna = consts.two_na
    a, ap = consts.a, consts.a_prime
    lre = math.log(r) + math.log(eps)
    log_Q = -(consts.log_b[5] + lre) / tna
    Q = _exp(log_Q)
    m = int(math.floor(_exp(consts.log_b[1] + log_Q)))
    lc = consts.log_ctilde
    rhs = {
        "c1": lc[1],
        "c2_delta": lc[2] + tna * math.log(consts.steep.delta),
        "c3_r": lc[3] + 2 * tna * math.log(r),
        "c4_r": lc[4] + 2 * a / (a - ap) * math.log(r),
    }
    # relative guard so that an input built exactly at the boundary is accepted
    th = {k: (lre, v, lre <= v + 1e-12 * max(1.0, abs(v))) for k, v in rhs.items()}
    ok = all(v[2] for v in th.values()) and m >= 1
    root = lre / tna
    drift = _exp(lc[5] + root)
    x = _exp(lc[7] - math.log(r) - root)
    log_time = lc[6] - math.log(r) - root + x
    E = consts.steep.E
    n = consts.n
    s = 3 * E * math.sqrt(n - 1) / Q if Q > 0 else math.inf
    log_tbar = math.log(3 / (2 * r * E * math.sqrt(n - 1))) + log_Q + m * LN2
    return Schedule(Q, m, log_Q, drift, log_time, th, ok, s, log_tbar)


@dataclass
class StabilityBound:
    r: float
    K: int
    truncated: bool
    c: float
    c_prime: float
    c_dprime: float
    log_log_T: float
    log_log_T_diophantine: float | None = None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def theorem_constants(bnf_consts, nekho: NekhoConstants) -> tuple:
    """(c, c', c'') of the double-exponential bound; c is returned as its log."""
    n, a = nekho.n, nekho.a
    q = 4 * n * a - 1
    log_c = -2 * math.log(3) - bnf_consts.log_btilde(q, check=False) / (2 * n * a)
    c1 = 1 / (2 * n * a)
    c2 = 1644 * math.e * n * bnf_consts.c * bnf_consts.d
    return log_c, c1, c2


def stability_time_bound(r: float, alpha, bnf_consts, nekho: NekhoConstants, tau: float | None = None,
                         gamma: float | None = None, k_max: int | None = None) -> StabilityBound:
    """log log of the lower bound ``exp(c r^-2 exp(c' Delta(c'' / r)))`` on the escape time.

    With ``tau`` and ``gamma`` the Diophantine form ``exp(exp(C r^(-1/(tau+1))))``
    with ``C = gamma^(1/(tau+1)) c' c''^(1/(tau+1))`` is reported as well.
    """
    from ..diophantine import delta as _delta

    if r <= 0:
        raise DomainError("r must be positive")
    log_c, c1, c2 = theorem_constants(bnf_consts, nekho)
    K, trunc = _delta(alpha, c2 / r, return_info=True, k_max=k_max)
    # log(c r^-2 e^{c' K}) = log c - 2 log r + c' K
    llT = log_c - 2 * math.log(r) + c1 * K
    dio = None
    if tau is not None and gamma is not None:
        dio = c1 * (gamma * c2 / r) ** (1 / (tau + 1))
    return StabilityBound(r, int(K), bool(trunc), _exp(log_c), c1, c2, llT, dio)

"""Small divisors of frequency vectors and simultaneous rational approximation.

The small-divisor function ``psi(alpha, K)`` is the largest ``1/|k.alpha|``
over integer vectors ``0 < |k|_1 <= K`` and ``delta`` is its generalized
inverse ``sup{K : K psi(K) <= x}``.

In dimension 2 the maximum over the l1 ball is attained at a continued
fraction denominator of the frequency ratio, which makes ``psi`` cheap even for
very large ``K``; in higher dimension the ball is enumerated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

from .errors import DomainError, PeriodError, ResonanceError
from .surd import QuadraticSurd

FLOAT_RESONANCE_TOL = 1e-12


def _is_exact_number(x) -> bool:
    return isinstance(x, (int, Rational, QuadraticSurd)) or type(x).__name__ == "mpq"


@dataclass(frozen=True)
class FrequencyVector:
    """Frequencies ``alpha`` of an elliptic equilibrium.

    ``kind`` is ``"rational"``, ``"quadratic"`` (components in a common field
    Q(sqrt d), stored as :class:`QuadraticSurd`) or ``"float"``.
    """

    components: tuple
    kind: str

    def __post_init__(self):
        if len(self.components) < 1:
            raise DomainError("a frequency vector needs at least one component")
        if self.kind not in ("rational", "quadratic", "float"):
            raise ValueError(f"unknown kind {self.kind!r}")
        vals = self.components
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                if vals[i] == vals[j]:
                    raise DomainError("frequency components must be pairwise distinct")
        if self.kind != "float":
            ds = {c.d for c in vals if c.d != 1}
            if len(ds) > 1:
                raise DomainError("quadratic components must share one field Q(sqrt d)")

    # -- constructors ----------------------------------------------------
    @classmethod
    def from_values(cls, values) -> "FrequencyVector":
        values = list(values)
        if all(_is_exact_number(v) for v in values):
            comps = tuple(v if isinstance(v, QuadraticSurd) else QuadraticSurd(Fraction(str(v)) if type(v).__name__ == "mpq" else v)
                          for v in values)
            kind = "rational" if all(c.is_rational for c in comps) else "quadratic"
            return cls(comps, kind)
        return cls(tuple(float(v) for v in values), "float")

    @classmethod
    def golden(cls) -> "FrequencyVector":
        """(1, (1+sqrt5)/2)."""
        return cls((QuadraticSurd(1), QuadraticSurd.from_pqr(1, 1, 5, 2)), "quadratic")

    @classmethod
    def from_json_dict(cls, data: dict) -> "FrequencyVector":
        kind = data.get("kind")
        comps = data.get("components")
        if comps is None:
            raise ValueError("frequency JSON needs 'components'")
        if kind == "rational":
            return cls(tuple(QuadraticSurd(Fraction(str(c))) for c in comps), "rational")
        if kind == "quadratic":
            d = int(data["d"])
            out = []
            for c in comps:
                if isinstance(c, (list, tuple)):
                    p, q, r = (list(c) + [1])[:3] if len(c) == 2 else c
                    out.append(QuadraticSurd.from_pqr(Fraction(str(p)), Fraction(str(q)), d, Fraction(str(r))))
                else:
                    out.append(QuadraticSurd(Fraction(str(c))))
            fv = cls(tuple(out), "quadratic")
            return fv if not all(c.is_rational for c in out) else cls(fv.components, "rational")
        if kind == "float":
            return cls(tuple(float(c) for c in comps), "float")
        raise ValueError(f"unknown frequency kind {kind!r}")

    def to_json_dict(self) -> dict:
        if self.kind == "float":
            return {"kind": "float", "components": [float(c) for c in self.components]}
        if self.kind == "rational":
            return {"kind": "rational", "components": [str(c.a) for c in self.components]}
        d = max(c.d for c in self.components)
        return {"kind": "quadratic", "d": d,
                "components": [list(QuadraticSurd(c.a, c.b, d).to_pqr()) for c in self.components]}

    # -- accessors -------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def is_exact(self) -> bool:
        return self.kind != "float"

    def __len__(self):
        return self.n

    def floats(self) -> np.ndarray:
        return np.array([float(c) for c in self.components])

    def rationals(self) -> tuple:
        if self.kind != "rational":
            raise DomainError("frequency vector is not rational")
        return tuple(c.a for c in self.components)

    def exact_components(self) -> tuple:
        """Exact values; float components are read as the dyadic rationals they are."""
        if self.kind == "float":
            return tuple(QuadraticSurd(Fraction(c)) for c in self.components)
        return self.components

    def norm(self) -> float:
        return float(np.linalg.norm(self.floats()))

    def dot(self, k):
        """k.alpha, exact for exact kinds."""
        if self.kind == "float":
            return math.fsum(int(a) * b for a, b in zip(k, self.components))
        acc = QuadraticSurd(0)
        for a, b in zip(k, self.components):
            if a:
                acc = acc + b * int(a)
        return acc

    def is_zero_divisor(self, k) -> bool:
        v = self.dot(k)
        if self.kind == "float":
            return abs(v) < FLOAT_RESONANCE_TOL * self.norm()
        return v.sign() == 0


def _as_frequency(alpha) -> FrequencyVector:
    return alpha if isinstance(alpha, FrequencyVector) else FrequencyVector.from_values(alpha)


# ---------------------------------------------------------------------------
# Enumeration of the l1 ball (one representative per +-k pair)
# ---------------------------------------------------------------------------

def _shell(n, s):
    """Integer vectors with |k|_1 = s whose first nonzero entry is positive."""
    out = []

    def rec(prefix, left, started):
        if len(prefix) == n - 1:
            for last in ((left, -left) if left else (0,)):
                if not started and last < 0:
                    continue
                if not started and last == 0:
                    continue
                out.append(prefix + [last])
            return
        for v in range(-left, left + 1):
            if not started and v < 0:
                continue
            rec(prefix + [v], left - abs(v), started or v != 0)

    rec([], s, False)
    return out


@lru_cache(maxsize=64)
def _half_ball(n: int, K: int) -> np.ndarray:
    rows = []
    for s in range(1, K + 1):
        rows.extend(_shell(n, s))
    return np.array(rows, dtype=np.int64).reshape(-1, n)


def _exhaustive(alpha: FrequencyVector, K: int, weight_tau=None):
    """Return (min value, argmin k, first resonant k or None) over the half ball.

    With ``weight_tau`` the minimized quantity is ``|k.alpha| |k|_1^tau`` (float).
    """
    ks = _half_ball(alpha.n, K)
    af = alpha.floats()
    vals = np.abs(ks @ af)
    l1 = np.abs(ks).sum(axis=1)
    scale = float(np.abs(af).sum())
    # resonance: exact check on everything the float pass cannot rule out
    susp = np.nonzero(vals <= 1e-9 * scale * l1)[0]
    for idx in susp:  # sorted by |k|_1, so the first hit is the smallest witness
        k = tuple(int(v) for v in ks[idx])
        if alpha.is_zero_divisor(k):
            return None, None, k
    if weight_tau is not None:
        w = vals * l1.astype(float) ** weight_tau
        i = int(np.argmin(w))
        return float(w[i]), tuple(int(v) for v in ks[i]), None
    if not alpha.is_exact:
        i = int(np.argmin(vals))
        return float(vals[i]), tuple(int(v) for v in ks[i]), None
    vmin = vals.min()
    cand = np.nonzero(vals <= vmin * (1 + 1e-9) + 1e-300)[0]
    best, best_k = None, None
    for idx in cand:
        k = tuple(int(v) for v in ks[idx])
        v = abs(alpha.dot(k))
        if best is None or v < best:
            best, best_k = v, k
    return best, best_k, None


# ---------------------------------------------------------------------------
# Dimension two: continued fractions
# ---------------------------------------------------------------------------

class _TwoFrequencyData:
    """Best approximations of beta = |alpha_small / alpha_big| in (0, 1]."""

    def __init__(self, alpha: FrequencyVector):
        comps = alpha.exact_components()
        self.alpha = alpha
        big = 0 if abs(comps[0]) >= abs(comps[1]) else 1
        self.big, self.small = big, 1 - big
        A, B = comps[big], comps[1 - big]
        self.absA = abs(A)
        ratio = B / A
        self.sgn = ratio.sign()
        self.beta = abs(ratio)
        self.qs = [1]
        self.ps = [self._nearest(1)]
        self._cf_state = None  # (x, q_prev, q) for the lazy expansion
        self._exhausted = False
        self._init_cf()

    def _nearest(self, q):
        return (self.beta * q + QuadraticSurd(Fraction(1, 2))).floor()

    def _init_cf(self):
        x = self.beta
        a0 = x.floor()
        frac = x - a0
        if frac.sign() == 0:
            self._exhausted = True
            return
        self._cf_state = (frac.reciprocal(), 0, 1)

    def _extend(self):
        if self._exhausted:
            return False
        x, q_prev, q = self._cf_state
        a = x.floor()
        q_new = a * q + q_prev
        if q_new != self.qs[-1]:
            self.qs.append(q_new)
            self.ps.append(self._nearest(q_new))
        frac = x - a
        if frac.sign() == 0:
            self._exhausted = True
        else:
            self._cf_state = (frac.reciprocal(), q, q_new)
        return True

    def l1(self, idx):
        return self.qs[idx] + abs(self.ps[idx])

    def vector(self, idx):
        k = [0, 0]
        k[self.big] = -self.ps[idx]
        k[self.small] = self.sgn * self.qs[idx] if self.sgn else self.qs[idx]
        if k[0] < 0 or (k[0] == 0 and k[1] < 0):
            k = [-k[0], -k[1]]
        return tuple(k)

    def value(self, idx):
        q, p = self.qs[idx], self.ps[idx]
        return self.absA * abs(self.beta * q - p)

    def n1(self):
        return self.l1(0)

    def best_index(self, K):
        """Largest convergent index whose l1 norm is <= K."""
        while self.l1(len(self.qs) - 1) <= K and self._extend():
            pass
        idx = 0
        for i in range(len(self.qs)):
            if self.l1(i) <= K:
                idx = i
            else:
                break
        return idx


@lru_cache(maxsize=128)
def _two_data(alpha: FrequencyVector) -> _TwoFrequencyData:
    return _TwoFrequencyData(alpha)


def _min_divisor(alpha: FrequencyVector, K: int):
    """(min |k.alpha| over 0<|k|_1<=K as exact surd or float, argmin k); raises on resonance."""
    if K < 1:
        raise DomainError("K must be >= 1")
    n = alpha.n
    if n == 1:
        k = (1,)
        if alpha.is_zero_divisor(k):
            raise ResonanceError(k)
        return abs(alpha.components[0]), k
    if n == 2:
        comps = alpha.exact_components()
        if any(c.sign() == 0 for c in comps):
            k = (1, 0) if comps[0].sign() == 0 else (0, 1)
            raise ResonanceError(k)
        data = _two_data(alpha)
        if K >= data.n1():
            idx = data.best_index(K)
            val = data.value(idx)
            k = data.vector(idx)
            if val.sign() == 0 or (not alpha.is_exact and float(val) < FLOAT_RESONANCE_TOL * alpha.norm()):
                raise ResonanceError(k)
            if not alpha.is_exact:
                # earlier convergents could already sit below the float tolerance
                for j in range(idx + 1):
                    if float(data.value(j)) < FLOAT_RESONANCE_TOL * alpha.norm():
                        raise ResonanceError(data.vector(j))
                return float(val), k
            return val, k
    val, k, res = _exhaustive(alpha, K)
    if res is not None:
        raise ResonanceError(res)
    return val, k


def psi(alpha, K: int):
    """Largest 1/|k.alpha| over integer k with 0 < |k|_1 <= K.

    Returns a :class:`QuadraticSurd` for exact frequencies and a float
    otherwise; raises :class:`ResonanceError` carrying the smallest witness.
    """
    alpha = _as_frequency(alpha)
    K = int(K)
    val, _ = _min_divisor(alpha, K)
    if alpha.is_exact:
        return val.reciprocal()
    return 1.0 / val


def psi_argmax(alpha, K: int):
    """The vector k realizing psi(alpha, K)."""
    alpha = _as_frequency(alpha)
    return _min_divisor(alpha, int(K))[1]


def find_resonance(alpha, K: int):
    """Smallest-|k|_1 integer vector with k.alpha = 0 (within tolerance for floats), or None."""
    alpha = _as_frequency(alpha)
    if K < 1:
        raise DomainError("K must be >= 1")
    if alpha.n == 2:
        try:
            _min_divisor(alpha, K)
        except ResonanceError as exc:
            return exc.witness
        return None
    _, _, res = _exhaustive(alpha, K) if alpha.n > 1 else (None, None, None)
    if alpha.n == 1:
        return (1,) if alpha.is_zero_divisor((1,)) else None
    return res


def _exact_number(x):
    if isinstance(x, QuadraticSurd):
        return x
    if isinstance(x, float):
        return QuadraticSurd(Fraction(x))
    return QuadraticSurd(Fraction(str(x)) if type(x).__name__ == "mpq" else Fraction(x))


def delta(alpha, x, return_info: bool = False, k_max: int | None = None):
    """Largest K >= 1 with K psi(K) <= x, or 0 when no K qualifies.

    If a resonance of order K_r cuts the search, the supremum is taken over
    K < K_r and the returned flag ``truncated`` is set (``return_info=True``
    gives ``(K, truncated)``).
    """
    alpha = _as_frequency(alpha)
    if x <= 0:
        raise DomainError("x must be positive")
    xe = _exact_number(x)
    if k_max is None:
        k_max = 10 ** 12 if alpha.n <= 2 else 400

    res_order = [None]

    def ok(K):
        """K psi(K) <= x; None when K reaches a resonance."""
        if res_order[0] is not None and K >= res_order[0]:
            return None
        try:
            p = psi(alpha, K)
        except ResonanceError as exc:
            res_order[0] = sum(abs(v) for v in exc.witness)
            return None
        return (p * K <= xe) if alpha.is_exact else (p * K <= float(x))

    def pack(K, truncated):
        return (K, truncated) if return_info else K

    first = ok(1)
    if not first:
        return pack(0, first is None)
    lo, hi = 1, 2
    truncated = False
    while True:
        if hi > k_max:
            hi = k_max + 1
            break
        r = ok(hi)
        if r is None:
            hi = res_order[0] if res_order[0] is not None else hi
            truncated = True
            break
        if not r:
            break
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        r = ok(mid)
        if r:
            lo = mid
        else:
            hi = mid
    if truncated:
        # the cut only matters if the resonance order is right above the answer
        truncated = res_order[0] is not None and lo == res_order[0] - 1
    if lo >= k_max:
        raise DomainError(f"delta exceeded the search cap k_max={k_max}")
    return pack(lo, truncated)


def diophantine_fit(alpha, tau: float, Kmax: int) -> float:
    """min over 0<|k|_1<=Kmax of |k.alpha| |k|_1^tau (the best gamma for DC(tau, gamma) up to Kmax)."""
    alpha = _as_frequency(alpha)
    if Kmax < 1:
        raise DomainError("Kmax must be >= 1")
    if tau < alpha.n - 1:
        raise DomainError("tau must be >= n - 1")
    val, _, res = _exhaustive(alpha, int(Kmax), weight_tau=float(tau))
    if res is not None:
        raise ResonanceError(res)
    return val


# ---------------------------------------------------------------------------
# Periodic approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicVector:
    """A vector omega with T*omega = N integral, T minimal.

    ``achieved`` and ``bound`` are ``|v - omega|`` and ``sqrt(n-1)/(T Q)`` when
    the vector comes from :func:`dirichlet_approx`.
    """

    omega: tuple
    T: object
    N: tuple
    exact: bool = True
    achieved: float | None = None
    bound: float | None = None
    Q: object = None

    def __post_init__(self):
        if self.T <= 0:
            raise PeriodError("period must be positive")
        if len(self.omega) != len(self.N):
            raise PeriodError("omega and N dimensions differ")
        if self.exact:
            if any(Fraction(self.T) * Fraction(w) != v for w, v in zip(self.omega, self.N)):
                raise PeriodError("T*omega is not the stated integer vector")
        else:
            if any(abs(float(self.T) * float(w) - v) > 1e-12 * max(1.0, abs(v)) for w, v in zip(self.omega, self.N)):
                raise PeriodError("T*omega is not integral within 1e-12")
        if math.gcd(*[abs(int(v)) for v in self.N]) != 1:
            raise PeriodError("T is not the smallest period (gcd of T*omega exceeds 1)")

    @classmethod
    def from_integers(cls, N, T) -> "PeriodicVector":
        """omega = N / T with exact rational T."""
        T = Fraction(T)
        N = tuple(int(v) for v in N)
        g = math.gcd(*[abs(v) for v in N])
        if g == 0:
            raise PeriodError("omega must be nonzero")
        if g > 1:
            N = tuple(v // g for v in N)
            T = T / g
        return cls(tuple(Fraction(v) / T for v in N), T, N, True)

    @classmethod
    def from_omega(cls, omega) -> "PeriodicVector":
        """Exact rational omega; T is the lcm of denominators over the gcd of numerators."""
        om = [Fraction(str(w)) if not isinstance(w, (int, Fraction)) else Fraction(w) for w in omega]
        den = 1
        for w in om:
            den = den * w.denominator // math.gcd(den, w.denominator)
        N = [int(w * den) for w in om]
        return cls.from_integers(N, den)

    @property
    def n(self):
        return len(self.omega)

    def floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.omega])

    def phase_rate(self, a_minus_b) -> Fraction:
        """omega.(a-b) computed exactly as N.(a-b)/T."""
        num = sum(int(v) * int(c) for v, c in zip(self.N, a_minus_b))
        return Fraction(num) / Fraction(self.T) if self.exact else num / float(self.T)

    def to_json_dict(self) -> dict:
        d = {"omega": [str(w) for w in self.omega], "T": str(self.T), "N": list(self.N),
             "exact": self.exact}
        if self.achieved is not None:
            d["achieved"] = float(self.achieved)
            d["bound"] = float(self.bound)
        if self.Q is not None:
            d["Q"] = str(self.Q)
        return d

    @classmethod
    def from_json_dict(cls, data) -> "PeriodicVector":
        if "N" in data and "T" in data:
            return cls.from_integers(data["N"], Fraction(str(data["T"])))
        return cls.from_omega(data["omega"])


def _round_half_toward_zero(t: Fraction) -> int:
    a = abs(t)
    r = math.ceil(a - Fraction(1, 2))
    return r if t >= 0 else -r


def dirichlet_approx(v, Q) -> PeriodicVector:
    """Periodic approximation of ``v`` following the box-principle construction.

    The largest component (lowest index on ties) is factored out so that
    ``v = |v_i| (+-1, x)``; the smallest ``q <= Q^(n-1)`` with
    ``|q x - p|_inf <= 1/Q`` gives ``omega = |v_i| (+-1, p/q)`` and
    ``T = q/|v_i|``.  Exact when ``v`` and ``Q`` are rational.
    """
    v = list(v)
    n = len(v)
    exact = all(_is_exact_number(c) and not isinstance(c, QuadraticSurd) for c in v) and _is_exact_number(Q)
    if Q < 1:
        raise DomainError("Q must be >= 1")
    if exact:
        vv = [Fraction(str(c)) if type(c).__name__ == "mpq" else Fraction(c) for c in v]
        Qe = Fraction(str(Q)) if type(Q).__name__ == "mpq" else Fraction(Q)
    else:
        vv = [float(c) for c in v]
        Qe = float(Q)
    if all(c == 0 for c in vv):
        raise DomainError("v must be nonzero")
    mags = [abs(c) for c in vv]
    i0 = mags.index(max(mags))
    vmax = mags[i0]
    sgn = 1 if vv[i0] > 0 else -1
    others = [j for j in range(n) if j != i0]
    qmax = math.floor(Qe ** (n - 1)) if n > 1 else 1

    if exact:
        xs = [vv[j] / vmax for j in others]
        inv_q = 1 / Qe
        q_found, p_found = None, None
        for q in range(1, qmax + 1):
            ps = [_round_half_toward_zero(q * x) for x in xs]
            if all(abs(q * x - p) <= inv_q for x, p in zip(xs, ps)):
                q_found, p_found = q, ps
                break
        if q_found is None:
            raise DomainError("no admissible q found (Dirichlet bound violated?)")
        omega = [None] * n
        omega[i0] = sgn * vmax
        for j, p in zip(others, p_found):
            omega[j] = vmax * Fraction(p, q_found)
        T = Fraction(q_found) / vmax
        N = [0] * n
        N[i0] = sgn * q_found
        for j, p in zip(others, p_found):
            N[j] = p
        diff2 = sum((a - b) ** 2 for a, b in zip(vv, omega))
        norm2 = sum(a * a for a in vv)
        # both bounds, squared so the check stays rational
        if not diff2 * (T * Qe) ** 2 <= n - 1:
            raise DomainError("approximation bound failed")
        if not (T * T * norm2 >= 1 and T * T * norm2 <= n * Qe ** (2 * (n - 1))):
            raise DomainError("period bound failed")
        achieved = math.sqrt(diff2)
        bound = math.sqrt(n - 1) / float(T * Qe)
        return PeriodicVector(tuple(omega), T, tuple(N), True, achieved, bound, Qe)

    xs = np.array([vv[j] / vmax for j in others])
    q_found = None
    if n == 1:
        q_found, ps = 1, np.zeros(0, dtype=np.int64)
    else:
        chunk = 1 << 16
        for start in range(1, qmax + 1, chunk):
            qs = np.arange(start, min(qmax, start + chunk - 1) + 1, dtype=float)
            t = qs[:, None] * xs[None, :]
            p = np.sign(t) * np.ceil(np.abs(t) - 0.5)
            err = np.abs(t - p).max(axis=1)
            hit = np.nonzero(err <= 1.0 / Qe)[0]
            if hit.size:
                q_found = int(qs[hit[0]])
                ps = p[hit[0]].astype(np.int64)
                break
    if q_found is None:
        raise DomainError("no admissible q found (Dirichlet bound violated?)")
    omega = [0.0] * n
    omega[i0] = sgn * vmax
    N = [0] * n
    N[i0] = sgn * q_found
    for j, p in zip(others, ps):
        omega[j] = vmax * int(p) / q_found
        N[j] = int(p)
    T = q_found / vmax
    g = math.gcd(*[abs(v) for v in N])
    if g > 1:  # cannot happen for the smallest q, kept as a guard
        N = [v // g for v in N]
        T = T / g
    achieved = float(np.linalg.norm(np.array(vv) - np.array(omega)))
    bound = math.sqrt(n - 1) / (T * Qe)
    nv = float(np.linalg.norm(vv))
    slack = 1e-12
    if achieved > bound * (1 + slack) + 1e-300:
        raise DomainError("approximation bound failed")
    if not (1 / nv * (1 - slack) <= T <= math.sqrt(n) / nv * Qe ** (n - 1) * (1 + slack)):
        raise DomainError("period bound failed")
    return PeriodicVector(tuple(omega), T, tuple(N), False, achieved, bound, Qe)

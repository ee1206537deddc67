"""Birkhoff normal form of a polynomial jet at a non-resonant elliptic point.

Work happens in complex coordinates where the quadratic part reads
``i sum_j alpha_j xi_j xi_{n+j}``.  Degree by degree, every monomial
``xi^(a, b)`` with ``a != b`` is removed by a homogeneous generator; the
resonant monomials ``xi^(a, a)`` are functions of the actions and make up the
normal form ``hm``.

Generators follow the convention ``chi = coeff / (i alpha.(b - a))`` and are
applied as ``exp({chi, .})``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from gmpy2 import mpq

from .diophantine import FrequencyVector, find_resonance, psi
from .errors import DomainError, NormalizationError, ResonanceError
from .poly import (Coef, Polynomial, action_form, actions_part, complexify, is_action_monomial,
                   lie_transform, poly_norm, sup_norm_bound, substitute_actions)

FLOAT_DEFECT_TOL = 1e-9


def _as_frequency(alpha):
    return alpha if isinstance(alpha, FrequencyVector) else FrequencyVector.from_values(alpha)


def _weights(alpha: FrequencyVector, mode):
    if mode == "exact":
        if alpha.kind != "rational":
            raise DomainError("exact mode needs rational frequencies; convert the jet to float mode")
        return [mpq(c.a.numerator, c.a.denominator) for c in alpha.components]
    return [float(c) for c in alpha.components]


def check_quadratic_part(H: Polynomial, alpha: FrequencyVector):
    """Raise NormalizationError unless H = i alpha.(xi xi') + (degree >= 3)."""
    n = H.nvars // 2
    if H.nvars != 2 * alpha.n:
        raise NormalizationError(f"jet has {H.nvars} variables, expected {2 * alpha.n}")
    low = H.degree_range(0, 1)
    if not low.is_zero:
        raise NormalizationError("jet has constant or linear terms")
    quad = H.homogeneous(2)
    target = action_form(_weights(alpha, H.mode), H.mode)
    diff = quad - target
    if H.mode == "exact":
        if not diff.is_zero:
            raise NormalizationError("quadratic part is not i*sum alpha_j xi_j xi_{n+j}")
    elif diff.max_abs_coefficient() > 1e-12 * max(1.0, alpha.norm()):
        raise NormalizationError("quadratic part is not i*sum alpha_j xi_j xi_{n+j}")
    return n


@dataclass
class BNFResult:
    K: int
    alpha: FrequencyVector
    hm: Polynomial
    generators: dict
    transformed: Polynomial
    working_degree: int
    source: Polynomial = field(repr=False, default=None)

    @property
    def n(self):
        return self.alpha.n

    @property
    def m(self):
        return self.K // 2

    @property
    def mode(self):
        return self.transformed.mode

    @property
    def remainder_degrees(self) -> list:
        return [k for k in self.transformed.degrees() if k > self.K]

    def normal_form_image(self) -> Polynomial:
        """alpha.I + hm(I) in complex coordinates."""
        lin = action_form(_weights(self.alpha, self.mode), self.mode)
        return lin + substitute_actions(self.hm, "complex")

    def defect(self) -> Polynomial:
        """Degrees <= K of transformed - alpha.I - hm(I); zero for a correct normal form."""
        return (self.transformed.untruncated().truncate(self.K) - self.normal_form_image()).untruncated()

    def defect_norm(self) -> float:
        return self.defect().max_abs_coefficient()

    def remainder(self) -> Polynomial:
        return self.transformed.degree_range(self.K + 1, self.working_degree)

    def to_json_dict(self) -> dict:
        return {
            "K": self.K,
            "alpha": self.alpha.to_json_dict(),
            "working_degree": self.working_degree,
            "hm": self.hm.to_json_dict(),
            "generators": {str(l): g.to_json_dict() for l, g in sorted(self.generators.items())},
            "remainder_degrees": self.remainder_degrees,
            "defect_norm": self.defect_norm(),
            "remainder_norms": {str(k): poly_norm(self.transformed, k) for k in self.remainder_degrees},
        }


def birkhoff_normal_form(H: Polynomial, alpha, K: int, working_degree: int | None = None,
                         *, shuffle_seed=None, gauge=None) -> BNFResult:
    """Normalize the jet ``H`` (complex coordinates) up to order ``K``.

    Parameters
    ----------
    H : Polynomial
        Jet in ``2n`` complex variables whose quadratic part is
        ``i sum alpha_j xi_j xi_{n+j}``.  An exact jet with irrational
        frequencies is converted to float mode.
    alpha : FrequencyVector or sequence
    K : int
        Normalization order, ``K >= 4``.
    working_degree : int, optional
        Truncation of the Lie transforms, default ``K + 4`` so that the first
        remainder degrees are materialized.
    shuffle_seed : optional
        Processes the monomials of each degree in a shuffled order.
    gauge : callable, optional
        ``gauge(l)`` returns an action-only polynomial of degree ``l`` added to
        the generator; it must not change ``hm``.
    """
    K = int(K)
    if K < 4:
        raise DomainError("K must be >= 4")
    alpha = _as_frequency(alpha)
    if H.mode == "exact" and alpha.kind != "rational":
        H = H.to_float()
    W = K + 4 if working_degree is None else int(working_degree)
    if W < K:
        raise DomainError("working degree must be >= K")
    res = find_resonance(alpha, K)
    if res is not None:
        raise ResonanceError(res)
    n = check_quadratic_part(H, alpha)
    mode = H.mode
    w = _weights(alpha, mode)
    i_unit = Coef(0, 1) if mode == "exact" else 1j
    rng = random.Random(shuffle_seed) if shuffle_seed is not None else None

    jet = H.untruncated().truncate(W)
    generators = {}
    for l in range(3, K + 1):
        items = jet.homogeneous(l).sorted_items()
        if rng is not None:
            rng.shuffle(items)
        chi_terms = {}
        for e, c in items:
            if is_action_monomial(e):
                continue
            div = sum(wj * (e[n + j] - e[j]) for j, wj in enumerate(w))
            chi_terms[e] = c / (i_unit * div)
        chi = Polynomial(2 * n, chi_terms, mode)
        if gauge is not None:
            extra = gauge(l)
            if extra is not None and not extra.is_zero:
                if any(not is_action_monomial(e) or sum(e) != l for e in extra):
                    raise ValueError("gauge terms must be action monomials of degree l")
                chi = chi + extra
        generators[l] = chi
        if not chi.is_zero:
            jet = lie_transform(jet, -chi, W)

    low = jet.degree_range(3, K)
    resonant = {e: c for e, c in low.items() if is_action_monomial(e)}
    leftover = Polynomial(2 * n, {e: c for e, c in low.items() if not is_action_monomial(e)}, mode)
    if mode == "exact" and not leftover.is_zero:
        raise NormalizationError("non-resonant terms survived the exact normalization")
    if mode == "float":
        scale = max(1.0, H.max_abs_coefficient())
        if leftover.max_abs_coefficient() > FLOAT_DEFECT_TOL * scale:
            raise NormalizationError("float normalization left terms above tolerance")
        jet = jet - leftover
    hm = actions_part(Polynomial(2 * n, resonant, mode))
    if mode == "float":
        hm = hm.map_coefficients(lambda z: complex(z.real, 0.0) if abs(z.imag) <= 1e-12 * max(1.0, abs(z)) else z)
    return BNFResult(K, alpha, hm, generators, jet, W, source=H)


def bnf_map(Hk: Polynomial, alpha, K: int, **kw) -> Polynomial:
    """Action polynomial of the normal form of ``alpha.I + Hk`` (``Hk`` in real coordinates).

    ``Hk`` must start at degree 3.  Returns ``hm`` with degrees ``2..K//2``.
    """
    K = int(K)
    if K < 4 or K % 2:
        raise DomainError("K must be even and >= 4")
    alpha = _as_frequency(alpha)
    if Hk.nvars != 2 * alpha.n:
        raise DomainError("dimension mismatch between Hk and alpha")
    if not Hk.degree_range(0, 2).is_zero:
        raise NormalizationError("Hk must have no terms of degree < 3")
    mode = Hk.mode if alpha.kind == "rational" else "float"
    Hc = complexify(Hk.untruncated())
    if mode == "float":
        Hc = Hc.to_float()
    H = action_form(_weights(alpha, mode), mode) + Hc
    kw.setdefault("working_degree", K)
    return birkhoff_normal_form(H, alpha, K, **kw).hm


# ---------------------------------------------------------------------------
# Quantitative estimates
# ---------------------------------------------------------------------------

def _log(x):
    return math.log(x) if x > 0 else -math.inf


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass
class BNFConstants:
    """Analytic constants of the normal-form estimates.

    Everything involving ``e`` is evaluated in floating point; large
    quantities are also available as logarithms (``log_*``).
    """

    n: int
    R: float
    normH: float
    alpha: FrequencyVector
    K: int
    c: float
    d: float
    log_rhoK: float
    _log_psi: dict = field(default_factory=dict, repr=False)

    @property
    def rhoK(self):
        return _exp(self.log_rhoK)

    def log_Psi(self, k: int) -> float:
        if k not in self._log_psi:
            self._log_psi[k] = math.log(float(psi(self.alpha, k)))
        return self._log_psi[k]

    def log_psi_power(self, j: int) -> float:
        """log of prod_{i=3}^j Psi(i) (empty product for j <= 2)."""
        return math.fsum(self.log_Psi(i) for i in range(3, j + 1))

    @property
    def psi_powers(self) -> dict:
        return {j: _exp(self.log_psi_power(j)) for j in range(2, self.K + 1)}

    def log_beta(self, p: int) -> float:
        p = int(p)
        if p < 2 or 2 * p > self.K:
            raise DomainError("beta(p) needs 2 <= p and 2p <= K")
        return (-math.log(6) + (2 * p - 2) * math.log(6 * self.c * self.d)
                + math.lgamma(2 * p - 1) + self.log_psi_power(2 * p - 1))

    def beta(self, p: int) -> float:
        return _exp(self.log_beta(p))

    def log_btilde(self, q: int, check: bool = True) -> float:
        q = int(q)
        if q < 0 or (check and q > self.K - 4):
            raise DomainError("btilde(q) needs 0 <= q <= K-4")
        return (-math.log(self.c) + math.log(self.d) + q * math.log(20 * self.c * self.d)
                + math.lgamma(q + 3) + self.log_psi_power(q + 2))

    def btilde(self, q: int) -> float:
        return _exp(self.log_btilde(q))

    # per-degree bounds
    def log_h_bound(self, k: int) -> float:
        return (-math.log(6) + (k - 2) * math.log(6 * self.c * self.d)
                + math.lgamma(k - 1) + self.log_psi_power(k - 1))

    def log_f_bound(self, k: int) -> float:
        K = self.K
        return (math.log(20) + 2 * math.log(self.d) + (k - 2) * math.log(20 * self.c * self.d)
                + math.lgamma(K - 2) + (k - K + 2) * math.log(K - 2)
                + self.log_psi_power(K - 1) + (k - K + 2) * self.log_Psi(K))

    def to_json_dict(self) -> dict:
        return {"n": self.n, "R": self.R, "normH": self.normH, "K": self.K, "c": self.c, "d": self.d,
                "rhoK": self.rhoK, "log_rhoK": self.log_rhoK,
                "psi_powers": {str(j): v for j, v in self.psi_powers.items()}}


def bnf_constants(n: int, R, normH, alpha, K: int, p: int | None = None, q: int | None = None) -> BNFConstants:
    """c, d, rho_K and the psi products for a Hamiltonian with ``sup|H| <= normH`` on radius ``R``.

    ``p`` and ``q`` are validated when given so that ``beta(p)`` and
    ``btilde(q)`` are meaningful.
    """
    alpha = _as_frequency(alpha)
    n, K = int(n), int(K)
    if n < 1 or alpha.n != n:
        raise DomainError("n must match the frequency vector")
    if R <= 0 or normH <= 0:
        raise DomainError("R and normH must be positive")
    if K < 4:
        raise DomainError("K must be >= 4")
    if p is not None and (p < 2 or 2 * p > K):
        raise DomainError("need 2 <= p and 2p <= K")
    if q is not None and not 0 <= q <= K - 4:
        raise DomainError("need 0 <= q <= K-4")
    R, normH = float(R), float(normH)
    c = math.e * (2 * n + 1) / (2 * R)
    d = c * c * normH
    consts = BNFConstants(n, R, normH, alpha, K, c, d, 0.0)
    consts.log_rhoK = -(math.log(548 * n * c * d * K) + consts.log_Psi(K))
    return consts


def constants_for(result: BNFResult, R=1.0, p=None, q=None) -> BNFConstants:
    """Constants for the input jet of ``result`` with ``normH`` its coefficient sup bound on radius R."""
    normH = sup_norm_bound(result.source, R)
    return bnf_constants(result.n, R, normH, result.alpha, result.K, p, q)


def _margin(log_bound, actual):
    if actual == 0:
        return math.inf, math.inf
    lm = log_bound - math.log(actual)
    return _exp(lm), lm


def verify_dg_bounds(result: BNFResult, consts: BNFConstants) -> dict:
    """Compare the computed ``||h_k||`` and ``||f_k||`` against the per-degree bounds.

    The input jet must satisfy ``||H_l|| <= c^(l-2) d``; otherwise the report is
    flagged ``applicable = False`` and no bound is evaluated.
    """
    if consts.K != result.K:
        raise DomainError("constants were computed for a different K")
    H = result.source
    pre = []
    applicable = True
    for l in H.degrees():
        if l < 2:
            continue
        nrm = poly_norm(H, l)
        bound = _exp((l - 2) * math.log(consts.c) + math.log(consts.d))
        ok = nrm <= bound * (1 + 1e-12)
        applicable &= ok
        pre.append({"degree": l, "norm": nrm, "bound": bound, "ok": ok})
    report = {"applicable": applicable, "precondition": pre, "h": [], "f": [], "all_ok": False}
    if not applicable:
        return report
    ok_all = True
    for k in range(4, result.K + 1, 2):
        nrm = poly_norm(result.hm, k // 2)
        lb = consts.log_h_bound(k)
        m, lm = _margin(lb, nrm)
        ok_all &= m >= 1
        report["h"].append({"degree": k, "norm": nrm, "log_bound": lb, "margin": m, "log_margin": lm})
    for k in range(result.K + 1, result.working_degree + 1):
        nrm = poly_norm(result.transformed, k)
        lb = consts.log_f_bound(k)
        m, lm = _margin(lb, nrm)
        ok_all &= m >= 1
        report["f"].append({"degree": k, "norm": nrm, "log_bound": lb, "margin": m, "log_margin": lm})
    report["all_ok"] = bool(ok_all)
    return report

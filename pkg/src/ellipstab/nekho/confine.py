"""Step-logged run of the stage-by-stage confinement algorithm at desk scale.

Each stage averages the current Hamiltonian along a periodic approximation of
the frequency at the anchor point, integrates the averaged system and decides
numerically which alternative occurs: the actions stay within ``s_j/4`` up to
the stage time, or they drift and a new, linearly independent periodic
direction is extracted from the projected frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..averaging import advance_domain, initial_datum, normalize
from ..diophantine import dirichlet_approx
from ..errors import ConsistencyError, DomainError, HypothesisViolation, ThresholdError
from ..poly import Polynomial, complexify, decomplexify, lie_transform, substitute_actions, vector_field_norm
from .constants import LN2, NekhoConstants, SteepParams, a_jk, compute_constants, pi_jk
from .integrate import actions, integrate

GUARD = 0.99  # 1% guard band on the s_j/4 detection level


def _check(lhs_log: float, rhs_log: float, strict: bool = False) -> tuple:
    ok = lhs_log < rhs_log if strict else lhs_log <= rhs_log + 1e-12 * max(1.0, abs(rhs_log))
    return (lhs_log, rhs_log, bool(ok))


def stage_conditions(j: int, consts: NekhoConstants, r: float, Q: float, m: int, eps: float) -> dict:
    """Sufficient conditions on ``Q`` and ``eps`` for stage ``j``, as ``{name: (log lhs, log rhs, ok)}``."""
    st = consts.steep
    n = consts.n
    p = st.p
    E, F, Fp, kappa = st.E, st.F, st.Fprime, st.kappa
    sq, sqn = math.sqrt(n - 1), math.sqrt(n)
    lQ, le, lm = math.log(Q), math.log(eps), math.log(max(m, 1e-300))
    lmu = [math.log(v) for v in consts.mu]

    def lnu(i):
        return sum(pi_jk(p, i, i - 1 - k) * lmu[k] for k in range(i))

    out = {}
    if j == 0:
        out["Q >= 36 E sqrt(n-1) / (5 r^2)"] = _check(math.log(36 * E * sq / (5 * r * r)), lQ)
        out["216 n kappa^-2 r m Q^(2n-1) eps / sqrt(n-1) <= 1"] = _check(
            math.log(216 * n / sq) - 2 * math.log(kappa) + math.log(r) + lm + (2 * n - 1) * lQ + le, 0.0)
        out["Q >= 648 m (3F sqrt(n)+1) sqrt(n-1)"] = _check(lm + math.log(216 * 3 * (3 * F * sqn + 1) * sq), lQ)
        return out
    aj, aj1 = a_jk(p, j, j), a_jk(p, j - 1, j - 1)
    A = aj + aj1
    out["Q > E sqrt(n-1) / (8 eta)"] = _check(math.log(E * sq / (8 * consts.eta)), lQ, True)
    out["Q > E sqrt(n-1) / (8 delta)"] = _check(math.log(E * sq / (8 * st.delta)), lQ, True)
    out["Q >= 8 F' sqrt(n(n-1))"] = _check(math.log(8 * Fp * math.sqrt(n * (n - 1))), lQ)
    out["period product condition"] = _check(
        math.log(2 * sqn * Fp) + A * (math.log(sqn) - math.log(sq)) - lnu(j) - lnu(j - 1)
        - (pi_jk(p, j, j) + pi_jk(p, j - 1, j - 1)) * math.log(kappa) + n * A * lQ + le, 0.0)
    out["averaging size condition"] = _check(
        j * LN2 + math.log(27 * (3 + 3.0 ** (-j))) + math.log(r) - aj * math.log(n - 1) + aj * math.log(n)
        + math.log(sq) - 2 * pi_jk(p, j, j) * math.log(kappa) - 2 * lnu(j) + lm + (2 * n * aj - 1) * lQ + le, 0.0)
    out[f"Q >= 216 (3^{j + 1}+1) m (3F sqrt(n)+1) sqrt(n-1)"] = _check(
        lm + math.log(216 * (3 ** (j + 1) + 1) * (3 * F * sqn + 1) * sq), lQ)
    return out


def step_conditions(j, consts: NekhoConstants, Q, eps, m, s_j, s_next, r_next, xi_next, T_next) -> dict:
    """Conditions for passing from stage ``j`` to ``j+1``, as ``{name: (lhs, rhs, ok)}``."""
    st = consts.steep
    n = consts.n
    F, Fp = st.F, st.Fprime
    pj = st.p[n - j - 2]
    lim = 8 * min(st.delta, st.kappa / (3 * F), 2 * (5 * st.kappa / (4 * st.C)) ** (1 / pj))
    rows = {
        "s_j < 8 min(delta, kappa/(3F), 2(5 kappa/(4C))^(1/p))": (s_j, lim, s_j < lim),
        "Q >= 8 F' sqrt(n(n-1))": (8 * Fp * math.sqrt(n * (n - 1)), Q, Q >= 8 * Fp * math.sqrt(n * (n - 1))),
        "eps <= s_j s_(j+1) / (2 sqrt(n) F')": (eps, s_j * s_next / (2 * math.sqrt(n) * Fp), None),
        "2^(j+1) 216 (r+3xi) m T eps <= s_(j+1)": (2 ** (j + 1) * 216 * (r_next + 3 * xi_next) * m * T_next * eps, s_next, None),
        "72 (3F sqrt(n)+1) (r+3xi)/xi m T s <= 1": (72 * (3 * F * math.sqrt(n) + 1) * (r_next + 3 * xi_next) / xi_next
                                                     * m * T_next * s_next, 1.0, None),
    }
    return {k: (float(a), float(b), bool(a <= b) if ok is None else bool(ok)) for k, (a, b, ok) in rows.items()}


@dataclass
class StageRecord:
    j: int
    omega: dict
    T: float
    s: float
    r: float
    xi: float
    anchor: list
    conditions: dict
    normalization_checks: dict
    stage_time_log: float
    horizon: float
    horizon_capped: bool
    drift: float
    alternative: int | None = None
    t_plus: float | None = None
    t_tilde: float | None = None
    escape_margin: tuple | None = None
    step_checks: dict | None = None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConfinementLog:
    n: int
    Q: float
    m: int
    r: float
    eps: float
    stages: list = field(default_factory=list)
    halted: str = ""
    original_drift: float | None = None
    rank: int = 0

    @property
    def final_stage(self) -> int:
        return self.stages[-1].j if self.stages else -1

    @property
    def max_drift(self) -> float:
        return max((s.drift for s in self.stages), default=0.0)

    def to_json_dict(self) -> dict:
        return {"n": self.n, "Q": self.Q, "m": self.m, "r": self.r, "eps": self.eps, "halted": self.halted,
                "final_stage": self.final_stage, "max_drift": self.max_drift,
                "original_drift": self.original_drift, "rank": self.rank,
                "stages": [s.to_json_dict() for s in self.stages]}


def _to_real(P: Polynomial) -> Polynomial:
    R = decomplexify(P)
    big = max((abs(c) for _, c in R.items()), default=0.0)
    imag = max((abs(complex(c).imag) for _, c in R.items()), default=0.0)
    if imag > 1e-9 * max(big, 1.0):
        raise ConsistencyError("normalized Hamiltonian is not real in real coordinates")
    return R.real_part()


def _inverse_map(gens, W: int, nvars: int):
    """Coordinate functions of the inverse transform in real coordinates."""
    real_gens = [_to_real(c) for c in gens]
    coords = []
    for k in range(nvars):
        G = Polynomial.variable(k, nvars, "float")
        for chi in reversed(real_gens):
            if not chi.is_zero:
                G = lie_transform(G, -chi, W)
        coords.append(G.compile())
    return lambda z: np.array([float(np.real(c(np.asarray(z, dtype=float)))) for c in coords])


def _resolve_steep(steep, h: Polynomial, r: float) -> SteepParams:
    from ..averaging import gradient_bound, hessian_bound
    from ..steepness import SteepnessCertificate

    if isinstance(steep, SteepParams):
        return steep
    if isinstance(steep, SteepnessCertificate):
        if steep.verdict == "refuted":
            raise HypothesisViolation("steepness refuted: the confinement algorithm is inapplicable",
                                      witness=steep.witness)
        if steep.verdict != "certified":
            raise HypothesisViolation("steepness not certified", verdict=steep.verdict)
        return SteepParams.from_certificate(steep, gradient_bound(h, r), hessian_bound(h, r))
    raise DomainError("steep must be SteepParams or a SteepnessCertificate")


def run_confinement_algorithm(H: Polynomial, h: Polynomial, z0, Q: float, m: int, working_degree: int = 6,
                              *, steep, r: float | None = None, eps: float | None = None,
                              dt: float | None = None, max_steps: int = 200_000,
                              strict: bool = False) -> ConfinementLog:
    """Run the stages on ``H`` (real coordinates) with integrable part ``h`` (in the actions).

    Stage times are astronomically long in general, so every integration is
    capped at ``max_steps`` steps and the cap is logged.  With ``strict`` a
    failed condition halts the run with :class:`ThresholdError`; otherwise all
    conditions are logged with their status.
    """
    n = h.nvars
    if H.nvars != 2 * n:
        raise DomainError("H and h dimensions differ")
    if n < 2:
        raise DomainError("the algorithm needs n >= 2")
    if Q < 1 or m < 0:
        raise DomainError("need Q >= 1 and m >= 0")
    z0 = np.asarray(z0, dtype=float)
    r = float(r) if r is not None else 2.2 * float(np.linalg.norm(z0))
    if np.linalg.norm(z0) >= r / 2:
        raise DomainError("z0 must lie in the ball of radius r/2")
    h = h.to_float()
    Hf = H.to_float()
    f_real = (Hf - substitute_actions(h, "real")).untruncated()
    f_c = complexify(f_real)
    if eps is None:
        eps = max(vector_field_norm(f_c, r), 1e-300)
    steep = _resolve_steep(steep, h, r)
    consts = compute_constants(n, steep)
    W = int(working_degree)
    hnum = h.compile()
    if dt is None:
        dt = (r / 100) / max(float(np.linalg.norm(np.real(hnum.gradient(np.zeros(n))))), 1e-12)

    log = ConfinementLog(n, float(Q), int(m), r, float(eps))
    orig = integrate(Hf, z0, dt, max_steps, stride=max(1, max_steps // 2000))
    log.original_drift = float(np.max(np.abs(orig.actions - orig.actions[0])))

    v0 = np.real(hnum.gradient(actions(z0)))
    omega = dirichlet_approx(v0, Q)
    datum = initial_datum(h, f_c, float(eps), int(m), z0, r, float(omega.T), Q)
    omegas = []
    for j in range(n):
        conds = stage_conditions(j, consts, r, Q, max(m, 1), float(eps))
        if strict:
            for name, (a, b, ok) in conds.items():
                if not ok:
                    raise ThresholdError(name, a, b)
        omegas.append(omega)
        A = np.array([o.floats() for o in omegas])
        log.rank = int(np.linalg.matrix_rank(A))
        if log.rank < len(omegas):
            raise ConsistencyError("periodic vectors are linearly dependent")
        res = normalize(datum, omega, m, W, enforce_thresholds=strict)
        Hplus = _to_real(res.datum.hamiltonian().untruncated().truncate(W))
        zj = np.asarray(datum.anchor, dtype=float)
        zplus = _inverse_map(res.generators, W, 2 * n)(zj) if res.generators else zj
        moved = float(np.linalg.norm(zplus - zj))
        bound = res.checks["phi_distortion_bound"]
        res.checks["phi_distortion"] = (moved, bound, moved <= bound * (1 + 1e-9))
        s, rj, xij = datum.s, datum.r, datum.xi
        T = float(omega.T)
        # stage time (r_j + xi_j)^-1 (j+1)^-1 2^-j s_j^-1 2^m in log form
        ltbar = -math.log(rj + xij) - math.log(j + 1) - j * LN2 - math.log(s) + m * LN2
        cap = max_steps * dt
        capped = ltbar > math.log(cap)
        steps = int(min(max_steps, math.ceil(math.exp(min(ltbar, math.log(cap))) / dt)))
        traj = integrate(Hplus, zplus, dt, steps)
        Ij = actions(zj)
        dev = np.max(np.abs(traj.actions - Ij), axis=1)
        rec = StageRecord(j, omega.to_json_dict(), T, s, rj, xij, zj.tolist(), conds,
                          _jsonable(res.checks), ltbar, traj.horizon, bool(capped), float(dev.max()))
        log.stages.append(rec)
        hit = np.nonzero(dev >= GUARD * s / 4)[0]
        if hit.size == 0 or j == n - 1:
            rec.alternative = 1
            log.halted = "confined" if hit.size == 0 else "final stage reached with drift above s/4"
            return log
        rec.alternative = 2
        k_plus = int(hit[0])
        rec.t_plus = float(traj.times[k_plus])
        P = res.datum.projector()
        Iplus0 = traj.actions[0]
        proj = (traj.actions[: k_plus + 1] - Ij) @ P.T
        pn = np.linalg.norm(proj, axis=1)
        k_tp = int(np.argmax(pn >= s / 8)) if np.any(pn >= s / 8) else k_plus
        gam = Iplus0 + (traj.actions[: k_tp + 1] - Iplus0) @ P.T
        grads = np.real(hnum.gradient(gam)) @ P.T
        gn = np.linalg.norm(grads, axis=1)
        pj = steep.p[n - j - 2]
        level = consts.mu[j] * s ** pj
        good = np.nonzero(gn > level)[0]
        if good.size == 0:
            rec.escape_margin = (float(gn.max()), float(level))
            log.halted = "steepness escape produced no margin"
            raise HypothesisViolation("steepness escape failed: no time with |Pi grad h| > mu_j s_j^p",
                                      stage=j, best=float(gn.max()), level=float(level))
        k_t = int(good[0])
        rec.t_tilde = float(traj.times[k_t])
        rec.escape_margin = (float(gn[k_t]), float(level))
        v = grads[k_t]
        omega_next = dirichlet_approx(v, Q)
        z_next = traj.z[k_t]
        nxt = advance_domain(res.datum, float(omega_next.T), Q, anchor=z_next)
        rec.step_checks = step_conditions(j, consts, Q, float(eps), max(m, 1), s, nxt.s, nxt.r, nxt.xi,
                                          float(omega_next.T))
        if strict:
            for name, (a, b, ok) in rec.step_checks.items():
                if not ok:
                    raise ThresholdError(name, a, b)
        datum, omega = nxt, omega_next
    return log


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj

import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from ellipstab.bnf import birkhoff_normal_form, constants_for
from ellipstab.diophantine import FrequencyVector
from ellipstab.errors import DomainError, HypothesisViolation
from ellipstab.nekho import (SteepParams, choose_Q_m, compute_constants, integrate, measure_drift,
                             run_confinement_algorithm, stability_time_bound, theorem_constants)
from ellipstab.nekho.constants import a_jk, pi_jk
from ellipstab.poly import Polynomial, substitute_actions
from ellipstab.steepness import certify_steep, default_xi_grid

mp.mp.dps = 60


# -- independent re-implementation of the constants, straight from the printed products and sums --

def o_pi(p, n, j, k):
    out = mp.mpf(1)
    for i in range(n - j, n - j + k):
        out *= p[i - 1]
    return out


def o_a(p, n, j, k):
    return sum(o_pi(p, n, j, i) for i in range(k + 1))


def oracle(n, kappa, C, delta, p, E, F):
    kappa, C, E, F = (mp.mpf(v) for v in (kappa, C, E, F))
    Fp = max(mp.mpf(1), F)
    a = o_a(p, n, n - 1, n - 1)
    ap = o_a(p, n, n - 2, n - 2)
    mu = [C / 5 * mp.mpf(16) ** (-p[n - j - 2]) for j in range(n - 1)]
    eta = min(min(kappa / (3 * F), 2 * (5 * kappa / (4 * C)) ** (mp.mpf(1) / p[n - j - 2])) for j in range(n - 1))

    def nu(j):
        out = mp.mpf(1)
        for i in range(j):
            out *= mu[i] ** o_pi(p, n, j, j - 1 - i)
        return out

    sq, sqn = mp.sqrt(n - 1), mp.sqrt(n)
    b1 = 1 / (216 * (3 * F * sqn + 1) * (3 ** n + 1) * sq)
    b2 = max(8 * Fp * mp.sqrt(n * (n - 1)), E * sq / (8 * eta), 1 / b1)
    b3 = E * sq / 8
    b4 = 36 * E * sq / 5
    b5 = (mp.mpf(2) ** (n - 1) * 27 * (3 + mp.mpf(3) ** (1 - n)) * mp.mpf(n) ** a * mp.mpf(n - 1) ** (-a) * sq
          * nu(n - 1) ** -2 * kappa ** (-2 * o_pi(p, n, n - 1, n - 1)) * b1)
    b6 = (2 * sqn * Fp * sqn ** (a + ap) * sq ** (-(a + ap)) / nu(n - 1) / nu(n - 2)
          * kappa ** (-(o_pi(p, n, n - 1, n - 1) + o_pi(p, n, n - 2, n - 2))))
    tna = 2 * n * a
    c = {
        1: b2 ** (-tna) / b5,
        2: b3 ** (-tna) / b5,
        3: b4 ** (-tna) / b5,
        4: b6 ** (-2 * a / (a - ap)) * b5 ** ((a + ap) / (a - ap)),
        5: 2 * E * sq * b5 ** (mp.mpf(1) / tna),
        6: 3 / (4 * E * sq) * b5 ** (-mp.mpf(1) / tna),
        7: mp.log(2) * b1 * b5 ** (-mp.mpf(1) / tna),
    }
    return dict(a=a, ap=ap, b={1: b1, 2: b2, 3: b3, 4: b4, 5: b5, 6: b6}, c=c)


def close_log(ours, ref, tol=1e-12):
    # ratio within 1 +- tol; the scale guard covers constants that only exist as logs in double precision
    return abs(ours - float(mp.log(ref))) <= tol * max(1.0, abs(ours))


PARAMS = [
    (2, 0.5, 1.0, 0.1, (1,), 1.2, 0.02),
    (2, 0.05, 3.0, 0.3, (3,), 2.0, 5.0),
    (3, 0.2, 1.5, 0.2, (1, 2), 1.0, 1.0),
    (4, 0.1, 0.7, 0.05, (2, 1, 3), 4.0, 0.5),
]


@pytest.mark.parametrize("args", PARAMS)
def test_constants_match_oracle(args):
    n, kappa, C, delta, p, E, F = args
    got = compute_constants(n, SteepParams(kappa, C, delta, p, E, F))
    ref = oracle(*args)
    assert got.a == ref["a"] and got.a_prime == ref["ap"]
    for i in range(1, 7):
        assert close_log(got.log_b[i], ref["b"][i]), i
    for i in range(1, 8):
        assert close_log(got.log_ctilde[i], ref["c"][i]), i


@given(st.integers(2, 4).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(1, 4), min_size=n - 1,
                                                                             max_size=n - 1))),
       st.floats(0.01, 2.0), st.floats(0.1, 5.0))
def test_constants_oracle_property(np_, kappa, C):
    n, p = np_
    got = compute_constants(n, SteepParams(kappa, C, 0.1, tuple(p), 1.5, 0.7))
    ref = oracle(n, kappa, C, 0.1, tuple(p), 1.5, 0.7)
    for i in range(1, 8):
        assert close_log(got.log_ctilde[i], ref["c"][i])


def test_exponent_order_all_small_index_vectors():
    for n in range(2, 5):
        for p in itertools.product(range(1, 5), repeat=n - 1):
            c = compute_constants(n, SteepParams(0.3, 1.0, 0.1, p, 1.0, 1.0))
            assert c.a > c.a_prime
            assert all(x < y for x, y in zip(c.exponents, c.exponents[1:]))
            assert c.exponents[-1] == 2 * n * c.a


def test_pi_and_a_small_cases():
    assert pi_jk((1,), 1, 0) == 1 and pi_jk((3,), 1, 1) == 3
    assert a_jk((1,), 1, 1) == 2 and a_jk((1,), 0, 0) == 1
    assert a_jk((3,), 1, 1) == 4
    assert a_jk((2, 3), 2, 2) == 1 + 2 + 6


def test_example_indices_n2():
    c = compute_constants(2, SteepParams(0.5, 1.0, 0.1, (1,), 1.0, 1.0))
    assert (c.a, c.a_prime) == (2, 1)
    assert compute_constants(2, SteepParams(0.5, 1.0, 0.1, (3,), 1.0, 1.0)).a == 4


def test_mu_linear_in_C():
    c1 = compute_constants(3, SteepParams(0.5, 1.0, 0.1, (1, 2), 1.0, 1.0))
    c2 = compute_constants(3, SteepParams(0.5, 2.0, 0.1, (1, 2), 1.0, 1.0))
    assert np.allclose(np.array(c2.mu), 2 * np.array(c1.mu), rtol=1e-15)


def test_constants_reject_bad_input():
    with pytest.raises(DomainError):
        SteepParams(-1.0, 1.0, 0.1, (1,), 1.0, 1.0)
    with pytest.raises(DomainError):
        SteepParams(1.0, 1.0, 0.1, (0,), 1.0, 1.0)
    with pytest.raises(DomainError):
        compute_constants(3, SteepParams(1.0, 1.0, 0.1, (1,), 1.0, 1.0))


# -- schedule --

SP = SteepParams(0.5, 1.0, 0.1, (1,), 1.2, 0.02)


def test_schedule_formula_independent():
    c = compute_constants(2, SP)
    ref = oracle(2, 0.5, 1.0, 0.1, (1,), 1.2, 0.02)
    r, eps = 0.1, 1e-30
    s = choose_Q_m(r, eps, c)
    Q = (ref["b"][5] * r * eps) ** (-mp.mpf(1) / 8)
    assert abs(s.Q / float(Q) - 1) < 1e-12
    assert s.m == int(mp.floor(ref["b"][1] * Q))
    drift = ref["c"][5] * (mp.mpf(r) * eps) ** (mp.mpf(1) / 8)
    assert abs(s.drift_bound / float(drift) - 1) < 1e-12
    x = mp.mpf(r) ** -1 * (mp.mpf(r) * eps) ** (-mp.mpf(1) / 8)
    lt = mp.log(ref["c"][6] * x) + ref["c"][7] * x
    assert abs(s.log_time_bound - float(lt)) <= 1e-12 * abs(float(lt))


def test_schedule_halving_eps():
    c = compute_constants(2, SP)
    s1, s2 = choose_Q_m(0.1, 1e-20, c), choose_Q_m(0.1, 5e-21, c)
    assert s2.Q / s1.Q == pytest.approx(2 ** (1 / c.two_na), rel=1e-12)


def test_threshold_boundary_accepted():
    c = compute_constants(2, SP)
    r = 0.1
    lc = c.log_ctilde
    bound = min(lc[1], lc[2] + c.two_na * math.log(SP.delta), lc[3] + 2 * c.two_na * math.log(r),
                lc[4] + 2 * c.a / (c.a - c.a_prime) * math.log(r))
    eps = math.exp(bound) / r
    s = choose_Q_m(r, eps, c)
    assert all(v[2] for v in s.thresholds.values())
    s = choose_Q_m(r, eps * 1.01, c)
    assert not all(v[2] for v in s.thresholds.values())
    assert not s.thresholds_ok


def test_schedule_rejects_nonpositive():
    with pytest.raises(DomainError):
        choose_Q_m(0.0, 1e-3, compute_constants(2, SP))


# -- the double exponential formula --

def _golden_bnf_constants():
    al = FrequencyVector.golden()
    from ellipstab.poly import action_form
    H = action_form(al.floats(), "float") + Polynomial(4, {(2, 0, 2, 0): 1.0}, "float")
    res = birkhoff_normal_form(H, al, 4)
    return al, constants_for(res, R=1.0)


def test_theorem_constants_cdprime():
    al, bc = _golden_bnf_constants()
    nk = compute_constants(2, SP)
    log_c, c1, c2 = theorem_constants(bc, nk)
    assert c1 == pytest.approx(1 / 8)
    assert c2 == pytest.approx(1644 * math.e * 2 * bc.c * bc.d, rel=1e-15)


def test_log_T_scales_with_r_when_delta_constant():
    al, bc = _golden_bnf_constants()
    nk = compute_constants(2, SP)
    b1 = stability_time_bound(1e-3, al, bc, nk)
    b2 = stability_time_bound(5e-4, al, bc, nk)
    if b1.K == b2.K:
        # log T = c r^-2 e^{c'K}: halving r multiplies it by 4
        assert b2.log_log_T - b1.log_log_T == pytest.approx(math.log(4), rel=1e-12)


def test_golden_slope_near_half():
    al, bc = _golden_bnf_constants()
    nk = compute_constants(2, SP)
    rs = np.geomspace(1e-6, 1e-2, 25)
    # the exponent c' Delta(c''/r) of the inner exponential carries the r^(-1/(tau+1)) growth
    inner = [stability_time_bound(r, al, bc, nk).c_prime * stability_time_bound(r, al, bc, nk).K for r in rs]
    slope = np.polyfit(np.log(1 / rs), np.log(inner), 1)[0]
    assert abs(slope - 0.5) <= 0.05


def test_stability_time_rejects_bad_r():
    al, bc = _golden_bnf_constants()
    with pytest.raises(DomainError):
        stability_time_bound(0.0, al, bc, compute_constants(2, SP))


# -- integrator --

def harmonic(n=1, w=(1.0,)):
    terms = {}
    for j in range(n):
        e = [0] * (2 * n)
        e[j] = 2
        terms[tuple(e)] = w[j] / 2
        e = [0] * (2 * n)
        e[n + j] = 2
        terms[tuple(e)] = w[j] / 2
    return Polynomial(2 * n, terms, "float")


def test_harmonic_oscillator_invariants():
    tr = integrate(harmonic(), [1.0, 0.0], 1e-3, 10_000, stride=100)
    assert np.max(np.abs(tr.actions - 0.5)) < 1e-10
    assert tr.energy_drift < 1e-12
    assert tr.z[-1][0] == pytest.approx(math.cos(10.0), abs=1e-5)


def test_integrable_two_dof_actions_conserved():
    h = Polynomial(2, {(1, 0): 1.0, (0, 1): 0.6180339887, (2, 0): 1.0, (1, 1): 0.3, (0, 2): 1.0}, "float")
    tr = integrate(substitute_actions(h, "real"), [0.05, 0.02, 0.01, -0.03], 1e-2, 20_000, stride=50)
    assert np.max(np.abs(tr.actions - tr.actions[0])) < 1e-12


def quartic():
    return harmonic() + Polynomial(2, {(4, 0): 1.0}, "float")


def reference_quartic(t):
    sol = solve_ivp(lambda _, z: [z[1], -z[0] - 4 * z[0] ** 3], (0, t), [0.5, 0.0], method="DOP853",
                    rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def test_quartic_against_reference():
    tr = integrate(quartic(), [0.5, 0.0], 1e-4, 100_000, stride=100_000)
    assert tr.times[-1] == pytest.approx(10.0)
    assert np.max(np.abs(tr.z[-1] - reference_quartic(10.0))) < 1e-6


def test_second_order_convergence():
    ref = reference_quartic(2.0)
    errs = []
    for dt in (2e-2, 1e-2, 5e-3):
        tr = integrate(quartic(), [0.5, 0.0], dt, int(round(2.0 / dt)), stride=10**6)
        errs.append(np.max(np.abs(tr.z[-1] - ref)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.8 < o < 2.2 for o in orders)


def test_no_secular_energy_growth():
    tr = integrate(quartic(), [0.5, 0.0], 5e-2, 200_000, stride=1000)
    e = np.abs(tr.energy - tr.energy[0])
    half = len(e) // 2
    # bounded oscillation: the late window is no worse than a small multiple of the early one
    assert e[half:].max() <= 2 * e[:half].max() + 1e-15
    assert tr.energy_drift < 1e-3


def test_drift_report_lower_bound_without_escape():
    tr = integrate(quartic(), [0.5, 0.0], 1e-2, 1000, stride=10)
    rep = measure_drift(tr, escape=10.0)
    assert not rep.escaped and rep.time_lower_bound == pytest.approx(10.0)
    assert rep.to_json_dict()["time_is_lower_bound_only"]


def test_escape_detected():
    # inverted oscillator leaves any ball
    H = Polynomial(2, {(2, 0): -0.5, (0, 2): 0.5}, "float")
    tr = integrate(H, [0.1, 0.1], 1e-2, 10_000, escape=1.0)
    rep = measure_drift(tr, escape=1.0)
    assert rep.escaped and rep.escape_time == pytest.approx(tr.escape_time, abs=1e-2)
    assert tr.horizon < 100


def test_integrator_input_checks():
    with pytest.raises(DomainError):
        integrate(harmonic(), [1.0], 1e-3, 10)
    with pytest.raises(DomainError):
        integrate(harmonic(), [1.0, 0.0], 0.0, 10)


# -- staged confinement --

H_ACT = Polynomial(2, {(1, 0): 1.0, (0, 1): 0.5, (2, 0): 0.01, (0, 2): 0.01}, "float")


def test_confine_unperturbed_stops_at_stage_zero():
    log = run_confinement_algorithm(substitute_actions(H_ACT, "real"), H_ACT, [0.01, 0.01, 0, 0], Q=50, m=1,
                                    steep=SP, r=0.1, max_steps=2000)
    assert log.halted == "confined" and log.final_stage == 0
    assert log.max_drift < 1e-15 and log.rank == 1


def test_confine_perturbed_logs_conditions():
    f = Polynomial(4, {(3, 0, 0, 0): 1e-5, (0, 3, 0, 0): 1e-5}, "float")
    H = substitute_actions(H_ACT, "real") + f
    sp = SteepParams(0.5, 1.0, 0.1, (1,), 1.2, 0.02)
    nk = compute_constants(2, sp)
    log = run_confinement_algorithm(H, H_ACT, [0.01, 0.01, 0, 0], Q=50, m=1, steep=sp, r=0.1, max_steps=5000)
    st0 = log.stages[0]
    assert any(k.startswith("Q >= 36") for k in st0.conditions)
    assert all(len(v) == 3 for v in st0.conditions.values())
    assert st0.horizon_capped
    moved, bound, _ = st0.normalization_checks["phi_distortion"]
    assert moved >= 0 and bound > 0
    envelope = choose_Q_m(0.1, log.eps, nk).drift_bound
    assert log.max_drift <= envelope
    assert log.original_drift <= envelope
    d = log.to_json_dict()
    assert d["stages"][0]["j"] == 0


def test_confine_refuted_steepness():
    h = Polynomial(2, {(2, 0): 1.0, (0, 2): -1.0}, "float")
    cert = certify_steep(h, default_xi_grid(), 8, 0)
    assert cert.verdict == "refuted"
    with pytest.raises(HypothesisViolation):
        run_confinement_algorithm(substitute_actions(h, "real"), h, [0.01, 0.01, 0, 0], Q=50, m=1, steep=cert,
                                  r=0.1, max_steps=100)


def test_confine_dimension_checks():
    with pytest.raises(DomainError):
        run_confinement_algorithm(harmonic(), H_ACT, [0.01, 0.01, 0, 0], Q=50, m=1, steep=SP, r=0.1)
    with pytest.raises(DomainError):
        run_confinement_algorithm(substitute_actions(H_ACT, "real"), H_ACT, [0.1, 0.1, 0, 0], Q=50, m=1,
                                  steep=SP, r=0.1)

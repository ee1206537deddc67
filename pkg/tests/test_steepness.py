import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipstab.errors import DimensionError, DomainError, HypothesisViolation
from ellipstab.poly import Polynomial
from ellipstab.steepness import (SteepnessCertificate, SubspaceSample, certify_expanding, certify_stably_expanding,
                                 certify_stably_steep, certify_steep, default_xi_grid, margin_curve,
                                 taylor_steepness_constants)

XI = default_xi_grid(0.1, 2, 5)


def P(terms, n=2):
    return Polynomial(n, terms, "float")


SUMSQ2 = P({(2, 0): 1.0, (0, 2): 1.0})
SUMSQ3 = P({(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}, 3)
SADDLE = P({(2, 0): 1.0, (0, 2): -1.0})
CUBIC = P({(2, 0): 1.0, (0, 3): 1.0})
MIXED = P({(1, 1): 1.0})


class TestMarginCurve:
    @settings(max_examples=10)
    @given(st.floats(0, math.pi))
    def test_isotropic(self, t):
        B = SubspaceSample(np.array([[math.cos(t)], [math.sin(t)]]))
        np.testing.assert_allclose(margin_curve(SUMSQ2, B, XI), 2 * XI, rtol=1e-12)

    def test_null_direction(self):
        B = SubspaceSample.from_vectors([[1.0, 1.0]])
        assert np.max(margin_curve(SADDLE, B, XI)) < 1e-14

    def test_cubic_coordinate(self):
        B = SubspaceSample.coordinate(2, [1])
        np.testing.assert_allclose(margin_curve(CUBIC, B, XI), 3 * XI ** 2, rtol=1e-12)

    def test_plane_in_three_dims(self):
        rng = np.random.default_rng(3)
        B = SubspaceSample.haar(3, 2, rng)
        np.testing.assert_allclose(margin_curve(SUMSQ3, B, XI), 2 * XI, rtol=1e-9)

    def test_brute_force_inner_min(self):
        # independent oracle: dense scan of |B^T grad P(B y)| on circles, running max over eta
        Q = P({(2, 0): 1.0, (1, 1): 0.7, (0, 3): -2.0, (0, 2): 0.3})
        B = SubspaceSample.from_vectors([[0.6, 0.8]])
        num = Q.to_float().real_part().compile()
        etas = np.geomspace(XI[0] / 10, XI[-1], 4000)
        inner = []
        for eta in etas:
            vals = []
            for s in (1.0, -1.0):
                y = s * eta * B.basis[:, 0]
                vals.append(abs(B.basis[:, 0] @ np.real(num.gradient(y))))
            inner.append(min(vals))
        run = np.maximum.accumulate(inner)
        ref = np.array([run[np.searchsorted(etas, x, side="right") - 1] for x in XI])
        np.testing.assert_allclose(margin_curve(Q, B, XI), ref, rtol=2e-3)

    def test_errors(self):
        with pytest.raises(DomainError):
            margin_curve(SUMSQ2, SubspaceSample(np.eye(2)), XI)
        with pytest.raises(DimensionError):
            margin_curve(SUMSQ2, SubspaceSample(np.eye(3)[:, :1]), XI)
        with pytest.raises(DomainError):
            margin_curve(P({(1, 0): 1.0, (2, 0): 1.0}), SubspaceSample.coordinate(2, [0]), XI)
        with pytest.raises(DomainError):
            margin_curve(SUMSQ2, SubspaceSample.coordinate(2, [0]), XI[::-1])


class TestCertify:
    @pytest.mark.parametrize("Q", [SUMSQ2, SUMSQ3])
    def test_convex(self, Q):
        cert = certify_steep(Q, XI, samples=4)
        assert cert.certified
        assert all(p == 1 for p in cert.p)
        assert 1 <= cert.C <= 2 + 1e-9

    def test_saddle_refuted(self):
        cert = certify_steep(SADDLE, XI, samples=4)
        assert cert.verdict == "refuted"
        v = np.asarray(cert.witness["basis"])[:, 0]
        ang = min(math.acos(min(1.0, abs(v @ np.array([1, s]) / math.sqrt(2)))) for s in (1, -1))
        assert ang < 1e-3

    def test_cubic_index_two(self):
        cert = certify_steep(CUBIC, XI, samples=4)
        assert cert.certified and cert.p == (2,)

    def test_deterministic(self):
        a = certify_steep(CUBIC, XI, samples=3, seed=5).to_json_dict()
        b = certify_steep(CUBIC, XI, samples=3, seed=5).to_json_dict()
        assert a == b

    def test_json_roundtrip(self):
        cert = certify_steep(SUMSQ2, XI, samples=2)
        back = SteepnessCertificate.from_json_dict(cert.to_json_dict())
        assert back.to_json_dict() == cert.to_json_dict()


class TestStable:
    def test_convex_plus_cubic(self):
        Q = SUMSQ2 + P({(3, 0): 0.05, (1, 2): -0.03})
        cert = certify_stably_steep(Q, 1e-3, 3, XI, samples=3)
        assert cert.certified and cert.p == (2,) and cert.radius == 1e-3

    @pytest.mark.parametrize("Q", [SADDLE, MIXED])
    def test_refuted(self, Q):
        for radius in (1e-3, 1e-1):
            assert certify_stably_steep(Q, radius, 2, XI, samples=2).verdict == "refuted"


class TestExpanding:
    def test_sum_squares(self):
        cert = certify_expanding(SUMSQ2, XI)
        assert cert.certified and cert.C == pytest.approx(2, rel=1e-6)

    def test_hyperbolic(self):
        cert = certify_expanding(SADDLE, XI)
        assert cert.certified and cert.C == pytest.approx(2, rel=1e-6)

    def test_product(self):
        cert = certify_expanding(MIXED, XI)
        assert cert.certified and cert.C == pytest.approx(1, rel=1e-6)

    def test_stable(self):
        assert certify_stably_expanding(SUMSQ2, 1e-3, 3, XI).certified


class TestTaylor:
    def base(self, C=1.0):
        return SteepnessCertificate("certified", 1.0, C, 0.1, (1,), list(XI), radius=1e-3)

    def test_formula(self):
        ts = taylor_steepness_constants(None, 1.0, 1.0, 3, self.base(1.5), mu_tilde=0.5)
        assert ts.kappa == 0.5 and ts.C == 0.75 and ts.delta_star == pytest.approx(1.5 / 4)
        assert ts.mu_star == 0.5 and ts.index == 1

    def test_linear_in_C0(self):
        a = taylor_steepness_constants(None, 1.0, 1.0, 3, self.base(1.0))
        b = taylor_steepness_constants(None, 1.0, 1.0, 3, self.base(2.0))
        assert b.C == 2 * a.C and b.delta_star == 2 * a.delta_star

    def test_requires_certificate(self):
        bad = SteepnessCertificate("refuted", 0, 0, 0.1, (1,), list(XI))
        with pytest.raises(HypothesisViolation):
            taylor_steepness_constants(None, 1.0, 1.0, 3, bad)

    def test_pipeline_positive(self):
        h = P({(1, 0): 1.0, (0, 1): (1 + 5 ** 0.5) / 2, (2, 0): 1.5, (0, 2): 1.0})
        hm = P({(2, 0): 1.5, (0, 2): 1.0})
        cert = certify_stably_steep(hm, 1e-3, 2, XI, samples=2)
        ts = taylor_steepness_constants(h, None, None, 3, cert, rho=0.3)
        vals = [ts.mu, ts.kappa, ts.C, ts.delta, ts.mu_star, ts.delta_star]
        assert all(v > 0 and math.isfinite(v) for v in vals)

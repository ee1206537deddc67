from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from conftest import rpoly, seeds
from ellipstab.errors import DimensionError, DomainError
from ellipstab.poly import (I, Coef, Polynomial, complexify, decomplexify, lie_transform, poisson_bracket,
                            poly_norm, substitute_actions, sup_norm_bound, vector_field_norm)


def var(j, n):
    return Polynomial.variable(j, n)


class TestBracket:
    def test_canonical_pair(self):
        assert poisson_bracket(var(0, 2), var(1, 2)) == Polynomial.constant(2, 1)

    @pytest.mark.parametrize("a,b", [(0, 0), (3, 1), (1, 4), (2, 5)])
    def test_eigenvalue_identity(self, a, b):
        alpha = Fraction(3, 7)
        l = Polynomial(2, {(1, 1): Coef(0, alpha)})
        mono = Polynomial(2, {(a, b): 1})
        expected = mono.scale(Coef(0, alpha * (b - a)))
        assert poisson_bracket(l, mono) == expected

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            poisson_bracket(var(0, 2), var(0, 4))
        with pytest.raises(DimensionError):
            poisson_bracket(var(0, 2), Polynomial.variable(0, 2, "float"))

    @given(seeds)
    def test_antisymmetry(self, s):
        P = rpoly(s, 4, [2, 3], 0.4, complex_coeffs=True)
        Q = rpoly(s + 1, 4, [1, 3], 0.4)
        assert poisson_bracket(P, P).is_zero
        assert poisson_bracket(P, Q) == -poisson_bracket(Q, P)

    @given(seeds)
    def test_jacobi(self, s):
        P, Q, R = (rpoly(s + k, 4, [1, 2, 3], 0.25, complex_coeffs=True) for k in range(3))
        br = poisson_bracket
        total = br(P, br(Q, R)) + br(Q, br(R, P)) + br(R, br(P, Q))
        assert total.is_zero

    @given(seeds)
    def test_leibniz(self, s):
        P, Q, R = (rpoly(s + k, 4, [1, 2, 3], 0.3) for k in range(3))
        br = poisson_bracket
        assert br(P, Q * R) == br(P, Q) * R + Q * br(P, R)

    def test_truncation(self):
        P = Polynomial(2, {(2, 1): 1}, truncation=3)
        Q = Polynomial(2, {(1, 2): 1})
        assert poisson_bracket(P, Q).is_zero or poisson_bracket(P, Q).degree <= 3


class TestNorms:
    def test_poly_norm(self):
        assert poly_norm(Polynomial(2, {(1, 0): 2, (0, 1): 3}), 1) == 5
        assert poly_norm(Polynomial.zero(2), 3) == 0
        P = (var(0, 2) + var(1, 2)) ** 2
        assert poly_norm(P, 2) == 4

    def test_sup_norm(self):
        assert sup_norm_bound(var(0, 2), 2) == 2
        assert sup_norm_bound(var(0, 2) ** 2 + var(1, 2) ** 2, 1) == 2
        P = Polynomial(2, {(1, 0): 3, (1, 1): 1})
        assert sup_norm_bound(P, Fraction(1, 2)) == 1.75
        with pytest.raises(DomainError):
            sup_norm_bound(P, 0)

    def test_vector_field_norm(self):
        P = Polynomial(2, {(1, 0): 3, (1, 1): 1})
        assert vector_field_norm(P, 0.5) == pytest.approx(3 + 2 * 0.5)

    @given(seeds)
    def test_subadditive_submultiplicative(self, s):
        P = rpoly(s, 4, [2], 0.6, complex_coeffs=True)
        Q = rpoly(s + 7, 4, [2], 0.6, complex_coeffs=True)
        R = rpoly(s + 9, 4, [3], 0.6)
        assert poly_norm(P + Q, 2) <= poly_norm(P, 2) + poly_norm(Q, 2) + 1e-12
        assert poly_norm(P * R, 5) <= poly_norm(P, 2) * poly_norm(R, 3) + 1e-12

    def test_sup_bound_dominates_samples(self, rng):
        P = rpoly(3, 4, [2, 3, 4], 0.5).to_float()
        z = rng.normal(size=(200, 4)) + 1j * rng.normal(size=(200, 4))
        z *= 0.7 / np.linalg.norm(z, axis=1, keepdims=True)
        vals = np.abs(P.compile()(z))
        assert vals.max() <= sup_norm_bound(P, 0.7)


class TestCoordinates:
    def test_harmonic_oscillator(self):
        H = Polynomial(2, {(2, 0): Fraction(1, 2), (0, 2): Fraction(1, 2)})
        assert complexify(H) == Polynomial(2, {(1, 1): I})

    def test_coordinate_x(self):
        r = Coef(Fraction(1, 2), 0, 1)
        assert complexify(var(0, 2)) == Polynomial(2, {(1, 0): r, (0, 1): r * I})

    def test_quartic_and_roundtrip(self):
        x4 = var(0, 2) ** 4
        xi = Polynomial(2, {(1, 0): 1, (0, 1): I}) ** 4
        assert complexify(x4) == xi.scale(Fraction(1, 4))
        assert decomplexify(complexify(x4)) == x4

    def test_odd(self):
        with pytest.raises(DimensionError):
            complexify(Polynomial(3, {}))

    @given(seeds)
    def test_roundtrip_random(self, s):
        H = rpoly(s, 4, [2, 3, 4], 0.3)
        assert decomplexify(complexify(H)) == H
        assert complexify(decomplexify(H)) == H

    def test_quadratic_part_maps_to_actions(self):
        Hr = substitute_actions(Polynomial(2, {(1, 0): 2, (0, 1): Fraction(5, 3)}), "real")
        assert complexify(Hr) == Polynomial(4, {(1, 0, 1, 0): Coef(0, 2), (0, 1, 0, 1): Coef(0, Fraction(5, 3))})

    def test_substitute_actions(self):
        assert substitute_actions(Polynomial(1, {(1,): 1})) == Polynomial(2, {(1, 1): I})
        x, y = var(0, 2), var(1, 2)
        assert substitute_actions(Polynomial(1, {(2,): 1}), "real") == ((x ** 2 + y ** 2).scale(Fraction(1, 2))) ** 2
        assert substitute_actions(Polynomial(2, {(1, 1): 1})) == Polynomial(4, {(1, 1, 1, 1): -1})

    def test_float_mode_agrees(self):
        H = rpoly(5, 4, [3, 4], 0.5)
        exact = complexify(H).to_float()
        flt = complexify(H.to_float())
        for e, c in exact.items():
            assert abs(flt.coefficient(e) - c) < 1e-12


class TestLieTransform:
    def test_flow_of_harmonic_oscillator(self):
        # {xi, i xi eta} = i xi, so the time-one map multiplies xi by e^i
        chi = Polynomial(2, {(1, 1): I}).to_float()
        out = lie_transform(var(0, 2).to_float(), chi, truncation=1, max_terms=40)
        assert abs(complex(out.coefficient((1, 0))) - np.exp(1j)) < 1e-14

    @given(seeds)
    def test_inverse(self, s):
        chi = rpoly(s, 4, [3], 0.4).scale(Fraction(1, 10))
        F = rpoly(s + 1, 4, [2, 3], 0.4)
        back = lie_transform(lie_transform(F, chi, 5), -chi, 5)
        assert (back - F).truncate(5).is_zero

    def test_json_roundtrip(self):
        P = complexify(rpoly(2, 4, [2, 3], 0.5))
        assert Polynomial.loads(P.dumps()) == P
        Pf = P.to_float()
        assert Polynomial.loads(Pf.dumps()) == Pf

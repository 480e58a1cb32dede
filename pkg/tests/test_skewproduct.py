from __future__ import annotations

import math

import gmpy2
import mpmath
import pytest
from scipy import integrate
from hypothesis import given, settings, strategies as st

from skewcd.polybasis import Polynomial, real
from skewcd.skewproduct import (
    Potential,
    PotentialError,
    SkewMomentTable,
    beta1_pairing,
    build_moment_table,
    build_quadrature,
    epsilon_transform,
    skew_product,
    weight_eval,
    weight_integrals,
)

from conftest import GAUSS, QUARTIC

mpmath.mp.prec = 200
POTENTIALS = [GAUSS[1], GAUSS[4], QUARTIC, Potential((0, "1/2", 0, "1/3"))]


def test_weight_eval_examples():
    assert weight_eval(Potential((0, 1)), 0.0) == 1.0
    assert weight_eval(Potential((0, 2)), 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert weight_eval(QUARTIC, 2.0) == pytest.approx(math.exp(-4), rel=1e-15)


@pytest.mark.parametrize("u", [(0, 0, 1), (0, -1), (), (0, 0, 0, -1)])
def test_invalid_potentials_rejected(u):
    with pytest.raises(PotentialError):
        Potential(u)


def test_epsilon_transform_examples():
    one = Polynomial.from_values([1])
    assert epsilon_transform(one, GAUSS[1], 0.0) == pytest.approx(0.0, abs=1e-30)
    assert epsilon_transform(one, GAUSS[1], math.inf) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-15)


def test_epsilon_transform_matches_mpmath_for_quartic():
    p = Polynomial.from_values([1, 2, 0, -1])
    V = QUARTIC
    x = 0.37
    f = lambda t: (1 + 2 * t - t**3) * mpmath.exp(-t**4 / 4)
    ref = mpmath.quad(f, [-mpmath.inf, x]) - mpmath.quad(f, [x, mpmath.inf])
    assert epsilon_transform(p, V, x) == pytest.approx(float(ref), rel=1e-14)


def test_skew_product_closed_forms():
    one, x = Polynomial.from_values([1]), Polynomial.from_values([0, 1])
    s4 = skew_product(one, x, GAUSS[4], 4)
    s1 = skew_product(one, x, GAUSS[1], 1)
    pi = gmpy2.const_pi()
    assert abs(s4 - gmpy2.sqrt(pi / 2)) < real("1e-70")
    assert abs(s1 + gmpy2.sqrt(pi)) < real("1e-70")


def test_beta1_against_independent_double_integral():
    # 0.5 * int int f(x) g(y) sgn(x - y) w(x) w(y), split along x = y
    V = QUARTIC
    w = lambda t: math.exp(-t**4 / 4)
    f = lambda t: t**2
    g = lambda t: t**3 + 1
    L = 8.0  # exp(-8**4 / 4) is far below double precision
    integrand = lambda y, x: f(x) * g(y) * w(x) * w(y)
    lower, _ = integrate.dblquad(integrand, -L, L, -L, lambda x: x, epsabs=1e-13, epsrel=1e-13)
    upper, _ = integrate.dblquad(integrand, -L, L, lambda x: x, L, epsabs=1e-13, epsrel=1e-13)
    ref = 0.5 * (lower - upper)
    val = skew_product(Polynomial.from_values([0, 0, 1]), Polynomial.from_values([1, 0, 0, 1]), V, 1)
    assert float(val) == pytest.approx(ref, rel=1e-10)


def test_beta4_against_mpmath():
    V = Potential((0, "1/2", 0, "1/3"))  # x**2/4 + x**4/12
    w = lambda t: mpmath.exp(-2 * (t**2 / 4 + t**4 / 12))
    ref = mpmath.quad(lambda t: (t * 2 * t - 1 * t**2) * w(t), [-mpmath.inf, mpmath.inf])
    val = skew_product(Polynomial.from_values([0, 1]), Polynomial.from_values([0, 0, 1]), V, 4)
    assert float(val) == pytest.approx(float(ref), rel=1e-14)


def test_moment_table_examples():
    t1 = build_moment_table(GAUSS[1], 1, 5)
    t4 = build_moment_table(GAUSS[4], 4, 5)
    assert float(t1.m[0, 1]) == pytest.approx(-math.sqrt(math.pi), rel=1e-15)
    assert all(t1.m[j, j] == 0 and t4.m[j, j] == 0 for j in range(6))
    assert t4.m[0, 2] == 0


@pytest.mark.parametrize("V", POTENTIALS[:3])
@pytest.mark.parametrize("beta", [1, 4])
def test_parity_for_even_potentials(V, beta):
    t = build_moment_table(V, beta, 9)
    scale = max(abs(v) for v in t.m.ravel())
    for j in range(10):
        for k in range(10):
            if (j + k) % 2 == 0:
                assert abs(t.m[j, k]) <= scale * real("1e-60")


def test_beta1_quadrature_antisymmetric_without_mirroring():
    wi = weight_integrals(QUARTIC, 11)
    m = beta1_pairing(wi, 12, upper_only=False)
    scale = max(abs(v) for v in m.ravel())
    assert max(abs(m[j, k] + m[k, j]) for j in range(12) for k in range(12)) < scale * real("1e-60")


def test_beta4_integration_by_parts():
    # int (p q)' w = -int p q w', i.e. int (p'q + p q' - 2V' p q) e^{-2V} = 0
    V = QUARTIC
    rule = build_quadrature(V, 2, 12, 256)
    mu = rule.moments
    # p q = x^3 + x^5 ; (pq)' = 3x^2 + 5x^4 ; 2 V' pq = 2 (x^6 + x^8)
    total = 3 * mu[2] + 5 * mu[4] - 2 * (mu[6] + mu[8])
    assert abs(total) < real("1e-60") * mu[8]


def test_table_json_round_trip():
    t = build_moment_table(QUARTIC, 1, 7)
    back = SkewMomentTable.from_json(t.to_json())
    assert all(back.m[j, k] == t.m[j, k] for j in range(8) for k in range(8))


def test_quadrature_is_deterministic():
    a = build_moment_table(QUARTIC, 1, 9)
    b = build_moment_table(QUARTIC, 1, 9)
    assert all(a.m[j, k] == b.m[j, k] for j in range(10) for k in range(10))


# ---------------------------------------------------------------------------
# properties: 1000 random cases each

coeffs = st.lists(st.integers(-20, 20), min_size=1, max_size=8)


def _rel(a, b, scale):
    return abs(a - b) / max(scale, real("1e-300"))


@pytest.mark.property
@given(st.sampled_from(POTENTIALS), st.sampled_from([1, 4]), coeffs, coeffs)
@settings(max_examples=1000, deadline=None)
def test_antisymmetry(V, beta, a, b):
    p, q = Polynomial.from_values(a), Polynomial.from_values(b)
    spq, sqp = skew_product(p, q, V, beta), skew_product(q, p, V, beta)
    scale = max(abs(spq), abs(sqp), real(1))
    assert _rel(spq, -sqp, scale) < real("1e-30")
    assert skew_product(p, p, V, beta) == 0 or abs(skew_product(p, p, V, beta)) < real("1e-60") * scale


@pytest.mark.property
@given(st.sampled_from(POTENTIALS), st.sampled_from([1, 4]), coeffs, coeffs, coeffs, st.integers(-9, 9))
@settings(max_examples=1000, deadline=None)
def test_bilinearity(V, beta, a, b, c, k):
    p, q, r = (Polynomial.from_values(v) for v in (a, b, c))
    lhs = skew_product(p.scale(k) + r, q, V, beta)
    sp, sr = skew_product(p, q, V, beta), skew_product(r, q, V, beta)
    rhs = k * sp + sr
    scale = max(abs(k * sp), abs(sr), real(1))
    assert _rel(lhs, rhs, scale) < real("1e-30")

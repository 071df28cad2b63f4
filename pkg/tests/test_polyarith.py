import random
from fractions import Fraction

import pytest

from respgames.errors import (MissingParameterError, ResourceLimitError,
                              ZeroDenominatorError)
from respgames.polyarith import (Monomial, ParamId, Polynomial,
                                 RationalFunction, get_term_limit,
                                 parse_polynomial, poly_add, poly_eval,
                                 poly_mul, poly_neg, poly_substitute,
                                 rf_equal_on_box, rf_simplify, set_term_limit)

X1 = ParamId("A1", None, "skip", label="x1")
X2 = ParamId("A2", None, "skip", label="x2")
X3 = ParamId("A3", None, "skip", label="x3")
NAMES = {"x1": X1, "x2": X2, "x3": X3}

x1 = Polynomial.variable(X1)
x2 = Polynomial.variable(X2)
x3 = Polynomial.variable(X3)
one = Polynomial.one()
zero = Polynomial.zero()


def rand_poly(rng, max_vars=3, max_deg=4, terms=4):
    out = Polynomial.zero()
    params = [X1, X2, X3][:max_vars]
    for _ in range(rng.randint(0, terms)):
        powers = {}
        budget = max_deg
        for p in params:
            e = rng.randint(0, min(2, budget))
            budget -= e
            if e:
                powers[p] = e
        coeff = Fraction(rng.randint(-10, 10))
        out = out + Polynomial({Monomial.make(powers): coeff})
    return out


def test_add_like_term_cancellation():
    assert (x1 + one) + (x1 - one) == 2 * x1


def test_add_identity():
    p = x1 * x2 - 3 * x1
    assert poly_add(p, zero) == p


def test_add_mixing_partition():
    # x1*x2 + x1*(1 - x2) collapses to x1
    assert x1 * x2 + x1 * (one - x2) == x1


def test_mul_expansion():
    assert (one - x1) * (one - x2) == one - x1 - x2 + x1 * x2


def test_mul_identities():
    p = x1 * x2 + 2 * x2
    assert poly_mul(p, one) == p
    assert poly_mul(p, zero) == zero


def test_eval_product():
    assert poly_eval(x1 * x2, {X1: Fraction(1, 2), X2: Fraction(1, 3)}) \
        == Fraction(1, 6)


def test_eval_univariate():
    p = one - x1 + x1 * x1
    assert poly_eval(p, {X1: Fraction(1, 2)}) == Fraction(3, 4)


def test_eval_near_root():
    # 2x^2 + x - 2 has the irrational root (sqrt(17) - 1) / 4; rational
    # approximations drive the exact evaluation toward zero.
    p = 2 * x1 * x1 + x1 - 2
    coarse = poly_eval(p, {X1: Fraction(7655, 9806)})
    assert abs(coarse) < Fraction(1, 10 ** 3)
    root = Fraction((17 ** 0.5 - 1) / 4).limit_denominator(10 ** 8)
    assert abs(poly_eval(p, {X1: root})) < Fraction(1, 10 ** 6)


def test_eval_missing_parameter():
    with pytest.raises(MissingParameterError) as err:
        poly_eval(x1 * x2, {X1: Fraction(1)})
    assert "x2" in str(err.value)


def test_substitute_simplex_elimination():
    assert poly_substitute(x1 + x2, {X2: one - x1}) == one


def test_substitute_empty_and_zero():
    p = x1 * x2 + x2
    assert poly_substitute(p, {}) == p
    assert poly_substitute(x1 * x2, {X1: zero}) == zero


def test_substitution_is_simultaneous():
    # x1 -> x2, x2 -> x1 swaps, rather than chaining
    p = x1 - x2
    assert poly_substitute(p, {X1: x2, X2: x1}) == x2 - x1


def test_canonical_negation():
    rng = random.Random(5)
    for _ in range(50):
        p = rand_poly(rng)
        assert poly_add(p, poly_neg(p)).terms() == {}


def test_rf_proportional_collapse():
    num = x1 * x2 + x1 * (one - x2)
    r = rf_simplify(RationalFunction(num, num))
    assert r == RationalFunction(one)


def test_rf_content_removal():
    r = RationalFunction(2 * x1, Polynomial.constant(4))
    assert r.num == x1 and r.den == Polynomial.constant(2)


def test_rf_zero_numerator():
    r = RationalFunction(zero, x1 + x2)
    assert r.is_zero and r.den == one


def test_rf_zero_denominator_rejected():
    with pytest.raises(ZeroDenominatorError):
        RationalFunction(x1, zero)


def test_rf_equal_cross_multiplication():
    a = RationalFunction(x1 * x1, x1)
    b = RationalFunction(x1)
    assert rf_equal_on_box(a, b, samples=4, seed=1)


def test_rf_equal_partition_of_unity():
    a = RationalFunction(one)
    b = RationalFunction(x1 + (one - x1))
    assert rf_equal_on_box(a, b, samples=4, seed=1)


def test_rf_unequal():
    assert not rf_equal_on_box(RationalFunction(x1), RationalFunction(x2),
                               samples=4, seed=1)


def test_render_and_parse_round_trip():
    rng = random.Random(11)
    for _ in range(60):
        p = rand_poly(rng)
        assert parse_polynomial(p.render(), NAMES) == p


def test_render_examples():
    assert zero.render() == "0"
    assert (x1 * x2 - x1 - x2 + one).render() == "x1*x2 - x1 - x2 + 1"
    assert (Fraction(1, 2) * x1).render() == "1/2*x1"
    assert (x1 ** 3).render() == "x1^3"


def test_parse_rejects_unknown_name():
    with pytest.raises(ValueError):
        parse_polynomial("x1 + y9", NAMES)


def test_monomial_order_graded_lex():
    # degree first, then lexicographic on the parameter order
    terms = (x1 * x1 + x1 * x2 + x2 + one).sorted_terms()
    rendered = [m.render() for m, _ in terms]
    assert rendered == ["x1^2", "x1*x2", "x2", ""]


def test_term_limit_guard():
    old = get_term_limit()
    set_term_limit(3)
    try:
        with pytest.raises(ResourceLimitError):
            (x1 + one) * (x2 + one)  # four terms
    finally:
        set_term_limit(old)


def test_derivative():
    p = x1 * x1 * x2 + 3 * x1
    assert p.derivative(X1) == 2 * x1 * x2 + 3
    assert p.derivative(X2) == x1 * x1
    assert p.derivative(X3) == zero

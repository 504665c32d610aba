import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbmor.scalarfun import DSLParseError, ScalarFn, parse_scalar


class TestEval:
    def test_frequency_monomial(self):
        f = ScalarFn.s_power(2)
        assert f.eval(2j, []) == pytest.approx(-4.0)

    def test_delay_coefficient_at_zero_shift(self):
        f = ScalarFn.mu_power(0) * ScalarFn.exponential(-1.0)
        assert f.eval(0.0, [5.5]) == pytest.approx(5.5)

    def test_constant_is_constant(self):
        f = ScalarFn.const(1.0)
        assert f.eval(3.7 + 2j, [0.4]) == 1.0

    def test_trig_atoms(self):
        f = ScalarFn.mu_sin(2.0, 0) * ScalarFn.mu_cos(3.0, 1)
        assert f.eval(0, [0.5, 0.25]) == pytest.approx(math.sin(1.0) * math.cos(0.75))

    def test_parameter_dimension_mismatch(self):
        f = ScalarFn.mu_power(1)
        with pytest.raises(ValueError, match="parameter vector"):
            f.eval(0.0, [1.0])


class TestDiffS:
    def test_power_rule(self):
        f = ScalarFn.s_power(2)
        assert f.diff_s() == 2.0 * ScalarFn.s_power(1)

    def test_delay_second_derivative_flips_twice(self):
        f = ScalarFn.mu_power(0) * ScalarFn.exponential(-1.0)
        assert f.diff_s(2) == f

    def test_constant_derivative_vanishes(self):
        assert ScalarFn.const(3.0).diff_s() == ScalarFn()

    def test_zeroth_derivative_is_identity(self):
        f = ScalarFn.s_power(3) + ScalarFn.mu_power(0)
        assert f.diff_s(0) == f

    def test_product_rule_with_exponential(self):
        f = ScalarFn.s_power(1) * ScalarFn.exponential(2.0)
        df = f.diff_s()
        s = 0.3 + 0.7j
        expected = cmath.exp(2 * s) + 2 * s * cmath.exp(2 * s)
        assert df.eval(s, []) == pytest.approx(expected)


class TestDiffMu:
    def test_linear_parameter(self):
        f = ScalarFn.mu_power(0) * ScalarFn.exponential(-1.0)
        assert f.diff_mu(0) == ScalarFn.exponential(-1.0)

    def test_parameter_free_function(self):
        assert ScalarFn.s_power(2).diff_mu(0) == ScalarFn()

    def test_monomial_product(self):
        f = ScalarFn.mu_power(0) * ScalarFn.mu_power(1, 2)
        df = f.diff_mu(1)
        assert df.eval(0, [2.0, 3.0]) == pytest.approx(12.0)

    def test_trig_derivatives(self):
        f = ScalarFn.mu_sin(2.0, 0)
        assert f.diff_mu(0) == 2.0 * ScalarFn.mu_cos(2.0, 0)
        g = ScalarFn.mu_cos(2.0, 0)
        assert g.diff_mu(0) == -2.0 * ScalarFn.mu_sin(2.0, 0)

    def test_repeated_trig_atom(self):
        f = ScalarFn.mu_sin(1.0, 0) * ScalarFn.mu_sin(1.0, 0)
        df = f.diff_mu(0)
        x = 0.37
        assert df.eval(0, [x]) == pytest.approx(2 * math.sin(x) * math.cos(x))


# -- random expression trees ------------------------------------------------

_atoms = st.sampled_from([
    ScalarFn.const(2.0),
    ScalarFn.const(-0.5),
    ScalarFn.s_power(1),
    ScalarFn.s_power(2),
    ScalarFn.exponential(-1.0),
    ScalarFn.exponential(0.5),
    ScalarFn.mu_power(0),
    ScalarFn.mu_power(1, 2),
    ScalarFn.mu_sin(1.5, 0),
    ScalarFn.mu_cos(0.7, 1),
])

_trees = st.recursive(
    _atoms,
    lambda children: st.tuples(children, children).map(lambda ab: ab[0] + ab[1])
    | st.tuples(children, children).map(lambda ab: ab[0] * ab[1]),
    max_leaves=8,
)

_points = st.tuples(
    st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
    st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
)


@settings(max_examples=1000, derandomize=True, deadline=None)
@given(_trees, _points)
def test_diff_s_matches_central_differences(f, point):
    sr, si, m0, m1 = point
    s = complex(sr, si)
    mu = [m0, m1]
    h = 1e-6
    fd = (f.eval(s + h, mu) - f.eval(s - h, mu)) / (2 * h)
    # one Richardson refinement where the plain difference looks rough
    fd2 = (f.eval(s + h / 2, mu) - f.eval(s - h / 2, mu)) / h
    fd = (4 * fd2 - fd) / 3
    exact = f.diff_s(1).eval(s, mu)
    assert abs(exact - fd) <= 1e-6 * (1 + abs(f.eval(s, mu)) + abs(exact))


@settings(max_examples=300, derandomize=True, deadline=None)
@given(_trees, _points)
def test_diff_mu_matches_central_differences(f, point):
    sr, si, m0, m1 = point
    s = complex(sr, si)
    mu = np.array([m0, m1])
    for i in (0, 1):
        h = 1e-6
        up, dn = mu.copy(), mu.copy()
        up[i] += h
        dn[i] -= h
        fd = (f.eval(s, up) - f.eval(s, dn)) / (2 * h)
        exact = f.diff_mu(i).eval(s, mu)
        assert abs(exact - fd) <= 1e-5 * (1 + abs(f.eval(s, mu)) + abs(exact))


@settings(max_examples=300, derandomize=True, deadline=None)
@given(_trees, _points)
def test_second_derivative_composes(f, point):
    sr, si, m0, m1 = point
    s = complex(sr, si)
    mu = [m0, m1]
    twice = f.diff_s(1).diff_s(1).eval(s, mu)
    direct = f.diff_s(2).eval(s, mu)
    assert abs(twice - direct) <= 1e-12 * (1 + abs(direct))


@settings(max_examples=300, derandomize=True, deadline=None)
@given(_trees)
def test_canonicalization_idempotent_and_closed(f):
    # rebuilding from the canonical terms reproduces the canonical terms
    rebuilt = ScalarFn(f.terms)
    assert rebuilt == f
    assert isinstance(f.diff_s(1), ScalarFn)
    assert isinstance(f.diff_mu(0), ScalarFn)


def test_structural_equality_after_reordering():
    a = ScalarFn.s_power(1) * ScalarFn.mu_power(0) + ScalarFn.const(2.0)
    b = ScalarFn.const(2.0) + ScalarFn.mu_power(0) * ScalarFn.s_power(1)
    assert a == b
    assert hash(a) == hash(b)


class TestDSL:
    def test_grammar_round_trip(self):
        text = "s^2 + 2.0*mu[0]*exp(-1.0*s) + sin(2.0*mu[1]) - 0.5"
        f = parse_scalar(text)
        assert parse_scalar(f.to_dsl()) == f

    def test_whitespace_insensitive(self):
        assert parse_scalar(" s ^ 2 + 1 ") == parse_scalar("s^2+1")

    def test_negative_coefficients(self):
        f = parse_scalar("-1*mu[0]*exp(-1*s)")
        assert f.eval(0.0, [3.0]) == pytest.approx(-3.0)

    def test_parse_error_reports_offset(self):
        with pytest.raises(DSLParseError) as err:
            parse_scalar("s^2 + exp(q*s)")
        assert err.value.pos == 10

    def test_trailing_garbage_rejected(self):
        with pytest.raises(DSLParseError):
            parse_scalar("s + 1 )")

    def test_sin_requires_mu_argument(self):
        with pytest.raises(DSLParseError):
            parse_scalar("sin(2*s)")

    @pytest.mark.parametrize("text,s,mu,value", [
        ("1", 5j, [], 1.0),
        ("s", 2j, [], 2j),
        ("mu[1]^2", 0, [0.0, 3.0], 9.0),
        ("cos(2.0*mu[0])", 0, [0.0], 1.0),
        ("exp(-2*s)", 1.0, [], math.exp(-2.0)),
    ])
    def test_atom_values(self, text, s, mu, value):
        assert parse_scalar(text).eval(s, mu) == pytest.approx(value)


def test_frequency_parts_split():
    f = (ScalarFn.s_power(1) + ScalarFn.mu_power(0)
         + (-1.0) * ScalarFn.mu_power(0) * ScalarFn.exponential(-1.0))
    parts = dict((sig, fn) for sig, fn in f.frequency_parts())
    assert parts[("poly", 1)] == ScalarFn.const(1.0)
    assert parts[("poly", 0)] == ScalarFn.mu_power(0)
    assert parts[("exp", complex(-1.0))] == -1.0 * ScalarFn.mu_power(0)


def test_frequency_parts_rejects_mixed_terms():
    f = ScalarFn.s_power(1) * ScalarFn.exponential(-1.0)
    with pytest.raises(ValueError, match="mixes"):
        f.frequency_parts()

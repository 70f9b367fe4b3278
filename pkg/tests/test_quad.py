import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from rharvest.expr import parse
from rharvest.quad import (
    ImproperPolicy,
    QuadratureError,
    VerdictKind,
    cumulative,
    gk15,
    improper,
    integrate,
    lazy_cumulative,
)


def test_gk15_exact_on_polynomials():
    val, err = gk15(lambda t: 7 * t**6 - 3 * t**2 + 1, 0.0, 2.0)
    assert val == pytest.approx(2.0**7 - 2.0**3 + 2.0, rel=1e-14)
    assert err >= 0


def test_integrate_examples():
    assert integrate(lambda t: t, 0, 1)[0] == pytest.approx(0.5, abs=1e-15)
    assert integrate(math.exp, 0, 1)[0] == pytest.approx(math.e - 1, rel=1e-12)
    val, err = integrate(lambda t: 625 / (t + 5) ** 4, 0, 1e6)
    assert abs(val - 5 / 3) < 1e-8
    assert err < 1e-8


def test_integrate_accepts_coefficient_fn():
    val, _ = integrate(parse("sin(2*pi*t)^2"), 0, 3)
    assert val == pytest.approx(1.5, rel=1e-12)


def test_integrate_reports_worst_interval():
    with pytest.raises(QuadratureError) as exc:
        integrate(lambda t: math.sin(1 / t) / t if t else 0.0, 0.0, 1.0, rel_tol=1e-14, max_subdivisions=20)
    lo, hi = exc.value.worst
    assert 0.0 <= lo < hi <= 1.0


def test_integrate_rejects_reversed_interval():
    with pytest.raises(ValueError):
        integrate(lambda t: 1.0, 1.0, 0.0)


def test_cumulative_examples():
    c = cumulative(lambda s: 1.0, 0.0, [0, 1, 2])
    assert list(c.values) == pytest.approx([0, 1, 2], abs=1e-15)
    c = cumulative(math.exp, 0.0, [0, 1])
    assert c.values[-1] == pytest.approx(1.718281828459045, rel=1e-12)
    c = cumulative(lambda s: 625 / (s + 5) ** 4, 0.0, [0, 1, 10, 100, 1e4])
    assert c.values[-1] == pytest.approx(5 / 3 - 625 / (3 * (1e4 + 5) ** 3), abs=1e-12)


def test_cumulative_off_grid_and_interp():
    c = cumulative(math.cos, 0.0, [0.0, 0.5, 1.0, 1.5, 2.0])
    for t in (0.1, 0.7, 1.26, 1.99):
        assert c(t) == pytest.approx(math.sin(t), abs=1e-12)
        assert c.interp(t) == pytest.approx(math.sin(t), abs=1e-3)
    with pytest.raises(ValueError):
        c(2.5)


def test_lazy_cumulative_extends():
    c = lazy_cumulative(lambda s: 1.0 / (1.0 + s), 0.0)
    assert c(1000.0) == pytest.approx(math.log(1001.0), rel=1e-12)
    assert c.grid[-1] >= 1000.0


def test_improper_examples():
    v = improper(math.exp)
    assert v.kind is VerdictKind.DIVERGENT
    v = improper(lambda t: math.exp(-t))
    assert v.convergent and v.value == pytest.approx(1.0, abs=1e-8)
    v = improper(lambda t: 625 / (t + 5) ** 4)
    assert v.convergent and abs(v.value - 5 / 3) < 1e-6
    assert v.evidence and v.evidence[0][0] == 16.0


@pytest.mark.parametrize("p,kind", [
    (0.5, VerdictKind.DIVERGENT),
    (0.9, VerdictKind.DIVERGENT),
    (1.1, VerdictKind.CONVERGENT),
    (2.0, VerdictKind.CONVERGENT),
    (4.0, VerdictKind.CONVERGENT),
])
def test_p_test(p, kind):
    v = improper(lambda t: (t + 1.0) ** (-p))
    assert v.kind is kind
    if kind is VerdictKind.CONVERGENT:
        assert v.value == pytest.approx(1.0 / (p - 1.0), rel=2e-2)


def test_log_divergent_is_not_called_convergent():
    v = improper(lambda t: 1.0 / (t + 1.0))
    assert v.kind is not VerdictKind.CONVERGENT


def test_verdict_json_roundtrip():
    v = improper(lambda t: math.exp(-t))
    js = v.to_json()
    assert js["kind"] == "Convergent"
    assert js["evidence"][-1][0] == v.horizon


def test_policy_rejects_bad_horizons():
    with pytest.raises(ValueError):
        improper(math.exp, policy=ImproperPolicy(T_init=8.0, T_max=4.0))


def _random_integrand(rng):
    c1, c2, w = rng.uniform(-2, 2), rng.uniform(0.1, 3), rng.uniform(0.1, 6)
    return lambda t: c1 * math.sin(w * t) + c2 * math.exp(-0.1 * t) + 0.05 * t * t


def test_additivity_randomized():
    rng = random.Random(7)
    for _ in range(200):
        f = _random_integrand(rng)
        a = rng.uniform(-5, 5)
        c = a + rng.uniform(0.1, 20)
        b = rng.uniform(a, c)
        whole, e0 = integrate(f, a, c)
        left, e1 = integrate(f, a, b)
        right, e2 = integrate(f, b, c)
        scale = max(abs(whole), abs(left) + abs(right))
        assert abs(whole - (left + right)) <= 3e-10 * scale + e0 + e1 + e2 + 1e-13


@given(
    st.floats(0.01, 10), st.floats(0.0, 5), st.floats(-5, 5), st.floats(0.01, 30),
)
@settings(max_examples=300, deadline=None)
def test_monotonicity_nonnegative_integrands(c, w, t0, length):
    f = lambda t: c * math.sin(w * t) ** 2
    val, _ = integrate(f, t0, t0 + length)
    assert val >= 0.0

"""Property-based checks of the algebraic and pointwise building blocks."""

import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lanemden import io as lio
from lanemden.bubble import admissible_window, make_exponents
from lanemden.direct import power_log, scaling_check, zsj_violations
from lanemden.errors import OutOfRange
from lanemden.greens import Ball, ball_green, ball_H
from lanemden.reduced import eps_bar, eps_from_mu, mu_from_eps


@st.composite
def admissible(draw):
    N = draw(st.integers(4, 12))
    lo, hi = admissible_window(N)
    t = draw(st.floats(0.001, 0.999))
    return N, lo + t * (hi - lo)


@given(admissible())
def test_hyperbola_and_gamma_identity(Np):
    N, p = Np
    e = make_exponents(N, p)
    assert abs(e.hyperbola_residual()) < 1e-12
    assert abs(e.gamma_u - N * (p + 1) / (e.q + 1)) < 1e-12
    assert e.q > p


@given(admissible(), st.floats(0.001, 0.999))
def test_scaling_round_trip_property(Np, frac):
    e = make_exponents(*Np)
    eps = frac * eps_bar(e)
    t_min = math.log(np.finfo(float).tiny)
    if e.gamma_u * t_min + 2 * math.log(-t_min) > math.log(eps):
        with pytest.raises(OutOfRange):      # the scale underflows a double
            mu_from_eps(eps, e)
        return
    mu = mu_from_eps(eps, e)
    assert mu < math.exp(-2 / e.gamma_u)
    assert abs(eps_from_mu(mu, e) / eps - 1) < 1e-12


@given(st.floats(1e-10, 1e10), st.floats(1.01, 5.0), st.floats(0.0, 0.5))
def test_power_log_odd_and_bounded_by_power(u, s, eps):
    (vp, dp), (vm, dm) = power_log(u, s, eps), power_log(-u, s, eps)
    assert vp == -vm and dp == dm
    # the logarithmic factor only weakens the power
    assert 0 < vp <= u**s * (1 + 1e-14)


@given(st.lists(st.floats(-1e8, 1e8, allow_nan=False), min_size=1, max_size=50),
       st.sampled_from([1.2, 26 / 7, 1.3, 2.5]), st.sampled_from([1e-3, 1e-2, 5e-2]))
def test_zsj_property(us, s, eps):
    assert zsj_violations(np.array(us), s, eps) == {"i": 0, "ii": 0, "iii": 0}


def _point(draw, N, radius):
    z = np.array(draw(st.lists(st.floats(-1, 1), min_size=N, max_size=N)))
    assume(np.linalg.norm(z) > 1e-3)
    return radius * draw(st.floats(0.0, 0.9)) * z / np.linalg.norm(z)


@st.composite
def ball_pair(draw):
    N = draw(st.integers(3, 8))
    R = draw(st.floats(0.5, 3.0))
    return Ball(R, 0.0, N), _point(draw, N, R), _point(draw, N, R)


@given(ball_pair())
def test_ball_green_symmetric_positive(bxy):
    b, x, y = bxy
    assume(np.linalg.norm(x - y) > 1e-3)
    assert abs(ball_H(x, y, b) - ball_H(y, x, b)) <= 1e-12 * abs(ball_H(x, y, b))
    assert ball_green(x, y, b) > 0


@given(st.floats(-5, 5), st.floats(0.5, 1.5))
@settings(max_examples=25)
def test_scaling_fit_slope_invariant_under_eps_rescaling(shift, power):
    e = make_exponents(6, 1.2)
    mu = np.logspace(-1.5, -4, 10)
    eps = np.array([eps_from_mu(m, e) for m in mu]) ** power * math.exp(shift)
    fit = scaling_check(eps, mu, e)
    assert abs(fit.slope - power) < 1e-9
    assert abs(fit.r2 - 1) < 1e-12


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | st.floats(allow_nan=False,
                                                                       allow_infinity=False)
    | st.text(max_size=5),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=4),
                                                                      children, max_size=4),
    max_leaves=12)


@given(json_values)
def test_canonical_json_round_trip(obj):
    text = lio.canonical_json({"v": obj})
    assert json.loads(text) == {"v": obj}
    assert lio.content_hash({"v": obj}) == lio.content_hash(json.loads(text))

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lanemden.bubble import (
    ShootingOptions, admissible_window, classify_shot, evaluate_bubble, gamma_N,
    kernel_profiles, make_exponents, radial_residual, sphere_area, tail_constants,
)
from lanemden.constants import check_lss
from lanemden.errors import BadFit, Inadmissible

from conftest import shot


def oracle_beta(N, p, rel=1e-7):
    """Independent shooting: LSODA in r, classification by first zero."""
    q = 1.0 / ((N - 2) / N - 1 / (p + 1)) - 1

    def rhs(r, y):
        U, dU, V, dV = y
        return [dU, -(N - 1) / r * dU - abs(V) ** (p - 1) * V,
                dV, -(N - 1) / r * dV - abs(U) ** (q - 1) * U]

    def ev_u(r, y):
        return y[0]

    def ev_v(r, y):
        return y[2]

    ev_u.terminal = ev_v.terminal = True

    def side(b):
        r0 = 1e-3
        y0 = [1 - b**p * r0**2 / (2 * N), -b**p * r0 / N, b - r0**2 / (2 * N), -r0 / N]
        s = solve_ivp(rhs, (r0, 1e9), y0, method="LSODA", rtol=1e-12, atol=1e-30,
                      events=(ev_u, ev_v))
        tu = s.t_events[0][0] if len(s.t_events[0]) else math.inf
        tv = s.t_events[1][0] if len(s.t_events[1]) else math.inf
        return "U" if tu < tv else "V"

    lo, hi = 0.1, 5.0
    while hi / lo - 1 > rel:
        mid = math.sqrt(lo * hi)
        if side(mid) == "U":
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


def test_sphere_area_and_gamma_trivial():
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_area(6) == pytest.approx(math.pi**3, rel=1e-15)
    assert gamma_N(6) == pytest.approx(1 / (4 * math.pi**3), rel=1e-15)
    assert gamma_N(3) == pytest.approx(1 / (4 * math.pi), rel=1e-15)


def test_exponents_n6():
    e = make_exponents(6, 1.2)
    assert e.q == pytest.approx(26 / 7, rel=1e-13)     # 1/(q+1) = 2/3 - 1/2.2
    assert e.gamma_u == pytest.approx(2.8, abs=1e-14)
    assert e.gamma_v == 4.0
    assert abs(e.hyperbola_residual()) < 1e-14


@pytest.mark.parametrize("N,p", [(3, 1.5), (6, 1.0), (6, 1.25), (6, 1.3), (4, 1.0), (2, 1.5)])
def test_inadmissible(N, p):
    with pytest.raises(Inadmissible):
        make_exponents(N, p)


def test_n3_window_empty():
    lo, hi = admissible_window(3)
    assert lo >= hi
    with pytest.raises(Inadmissible, match="empty"):
        make_exponents(3, 1.9)


def test_beta_matches_independent_shooting(profile6):
    b = oracle_beta(6, 1.2)
    assert profile6.beta == pytest.approx(b, rel=1e-6)


def test_classification_brackets_beta(profile6, exps6):
    opts = ShootingOptions()
    assert classify_shot(exps6, profile6.beta * 0.99, opts) == "V"
    assert classify_shot(exps6, profile6.beta * 1.01, opts) == "U"


def test_profile_positive_decreasing(profile6):
    assert profile6.U[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(profile6.U > 0) and np.all(profile6.V > 0)
    assert np.all(profile6.dU < 0) and np.all(profile6.dV < 0)


def test_radial_residual_small(profile6):
    assert radial_residual(profile6) < 1e-6


def test_kernel_residual_small(profile6):
    assert kernel_profiles(profile6).residual < 1e-8


def test_tail_slopes(tails6, exps6):
    assert tails6.slope_u == pytest.approx(-exps6.gamma_u, rel=1e-3)
    assert tails6.slope_v == pytest.approx(-(exps6.N - 2), rel=1e-3)
    assert abs(check_lss(tails6, exps6)) < 1e-3


def test_tail_window_outside_mesh(profile6):
    with pytest.raises(BadFit):
        tail_constants(profile6, window=(1e5, 1e8))


def test_bubble_scaling_identity(profile6, tails6):
    e = profile6.exps
    N, p, q = e.N, e.p, e.q
    mu = 0.03
    U, V = evaluate_bubble(profile6, mu, np.zeros(N), np.zeros((1, N)), tails6)
    assert U[0] == pytest.approx(mu ** (-N / (q + 1)), rel=1e-10)
    assert V[0] == pytest.approx(mu ** (-N / (p + 1)) * profile6.beta, rel=1e-10)


def test_bubble_radial_and_rescaled(profile6, tails6):
    e = profile6.exps
    N, q = e.N, e.q
    x = np.zeros((3, N))
    x[:, 0] = [0.1, 0.5, 2.0]
    x2 = np.zeros((3, N))       # same radii along (1, 1, 0, ...)/sqrt(2)
    x2[:, 0] = x2[:, 1] = x[:, 0] / math.sqrt(2)
    U1, _ = evaluate_bubble(profile6, 0.2, np.zeros(N), x, tails6)
    U2, _ = evaluate_bubble(profile6, 0.2, np.zeros(N), x2, tails6)
    np.testing.assert_allclose(U1, U2, rtol=1e-12)
    U3, _ = evaluate_bubble(profile6, 1.0, np.zeros(N), x / 0.2, tails6)
    np.testing.assert_allclose(U1, 0.2 ** (-N / (q + 1)) * U3, rtol=1e-12)


def test_bubble_rejects_nonpositive_mu(profile6):
    with pytest.raises(ValueError):
        evaluate_bubble(profile6, 0.0, np.zeros(6), np.zeros((1, 6)))


@pytest.mark.slow
@pytest.mark.parametrize("N,p", [(4, 1.25), (5, 1.3)])
def test_other_points_beta(N, p):
    prof = shot(N, p)[0]
    assert prof.beta == pytest.approx(oracle_beta(N, p), rel=1e-6)

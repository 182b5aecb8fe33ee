import math

import numpy as np
import pytest

from lanemden.errors import Boundary, OutOfRange
from lanemden.greens import Ball, DisjointUnion, htilde_config
from lanemden.reduced import (
    Configuration, GreensHandle, MinimumResult, ReducedConstants, count_distinct,
    enumerate_lobe_subsets, eps_bar, eps_from_mu, eval_G0, eval_Gh, minimize, minimize_seed,
    mu_from_eps, slow_functional,
)

NX = 128


@pytest.fixture(scope="module")
def ball_handle(exps6):
    return GreensHandle(Ball(1.0, 0.0, 6), exps6, nx=NX)


def test_scaling_round_trip(exps6):
    for mu in np.logspace(-8, math.log10(math.exp(-2 / exps6.gamma_u)) - 0.01, 40):
        assert mu_from_eps(eps_from_mu(mu, exps6), exps6) == pytest.approx(mu, rel=1e-10)


def test_eps_bar_is_branch_maximum(exps6):
    mu_star = math.exp(-2 / exps6.gamma_u)
    assert eps_from_mu(mu_star, exps6) == pytest.approx(eps_bar(exps6), rel=1e-14)
    assert mu_from_eps(eps_bar(exps6), exps6) == pytest.approx(mu_star, rel=1e-14)
    for f in [0.9, 1.1]:
        assert eps_from_mu(mu_star * f, exps6) < eps_bar(exps6)


@pytest.mark.parametrize("eps", [0.0, -1e-3, 1.0])
def test_scaling_out_of_range(exps6, eps):
    with pytest.raises(OutOfRange):
        mu_from_eps(eps, exps6)


def test_configuration_violations():
    dom = Ball(1.0, 0.0, 6)
    assert Configuration((1.0,), (0.0,)).violations(dom) == []
    bad = Configuration((0.05, 1.0), (0.95, 0.9), delta1=0.1, delta2=0.1)
    v = bad.violations(dom)
    assert len(v) == 4
    with pytest.raises(ValueError):
        Configuration((1.0, 1.0), (0.0,))


def test_sign_conventions(reduced6):
    assert reduced6.K > 0
    comp = ReducedConstants(**{**reduced6.__dict__, "sign_convention": "computed"})
    assert comp.K < 0
    norms = reduced6.normalizations(2)
    assert norms["asserted"]["C0"] == pytest.approx(2 * reduced6.C1)
    with pytest.raises(ValueError):
        ReducedConstants(**{**reduced6.__dict__, "sign_convention": "other"})


def test_a_gamma_identity(reduced6, exps6):
    # a (p+1) = N (p+1)/(q+1) = gamma_u on the critical hyperbola
    assert reduced6.a * (exps6.p + 1) == pytest.approx(exps6.gamma_u, rel=1e-13)


def test_handle_htilde_single_peak_scaling(ball_handle, exps6):
    a = exps6.N / (exps6.q + 1)
    direct = htilde_config(Ball(), [0.5], [0.25], exps6, NX).tau
    assert ball_handle.htilde([0.5], [0.25])[0] == pytest.approx(direct, rel=1e-4)
    assert ball_handle.htilde([0.5], [0.0])[0] == pytest.approx(
        0.5 ** (a * exps6.p) * ball_handle.tau(0.0), rel=1e-14)


def test_single_ball_minimiser_matches_closed_form(reduced6, ball_handle, exps6):
    # one peak at the centre: Gt0(d) = C1 |ln d| - C2 tau d^gamma, stationary at
    # d^gamma = C1 / (gamma |C2| tau) when C2 < 0
    tau0 = ball_handle.tau(0.0)
    d_star = (reduced6.C1 / (exps6.gamma_u * abs(reduced6.C2) * tau0)) ** (1 / exps6.gamma_u)
    m = minimize_seed({"d": (1.0,), "xi": (0.2,)}, reduced6, ball_handle, delta1=0.01)
    assert m.interior and m.converged
    assert m.d[0] == pytest.approx(d_star, rel=1e-6)
    assert abs(m.xi[0]) < ball_handle.h
    assert max(abs(g) for g in m.gradient) < 1e-6


def test_minimiser_pinned_raises(reduced6, ball_handle):
    with pytest.raises(Boundary, match="d\\[0\\]"):
        minimize_seed({"d": (1.0,), "xi": (0.0,)}, reduced6, ball_handle, delta1=0.1)
    m = minimize_seed({"d": (1.0,), "xi": (0.0,)}, reduced6, ball_handle, delta1=0.1,
                      on_boundary="report")
    assert not m.interior and m.pinned == [0]


def test_eval_G0_parts(reduced6, ball_handle, exps6):
    cfg = Configuration((0.07,), (0.0,), delta1=0.01)
    out = eval_G0(cfg, 1e-3, reduced6, ball_handle)
    assert out["value"] == pytest.approx(out["leading"] + out["log_d"] + out["green"], rel=1e-14)
    assert out["mu"] == pytest.approx(mu_from_eps(1e-3, exps6), rel=1e-14)
    assert out["leading"] < 0
    # the d-dependent part is -mu^gamma Gt0 up to the dropped factor |ln mu|
    mu = out["mu"]
    slow = slow_functional(cfg, reduced6, ball_handle)
    assert out["log_d"] + out["green"] == pytest.approx(-mu**exps6.gamma_u * slow, rel=1e-10)


def test_eval_Gh_vanishes_at_centre(reduced6, ball_handle):
    g = eval_Gh(Configuration((0.07,), (0.0,)), 1e-3, reduced6, ball_handle)
    off = eval_Gh(Configuration((0.07,), (0.3,)), 1e-3, reduced6, ball_handle)
    assert abs(g[0]) < 1e-6 * abs(off[0])


def test_enumerate_lobe_subsets():
    assert len(enumerate_lobe_subsets(4, 2)) == 6
    U = DisjointUnion((Ball(1, -3, 6), Ball(1, 0, 6), Ball(1, 3, 6)))
    seeds = enumerate_lobe_subsets(U, 2)
    assert [s["lobes"] for s in seeds] == [(0, 1), (0, 2), (1, 2)]
    assert seeds[1]["xi"] == (-3.0, 3.0)
    with pytest.raises(ValueError):
        enumerate_lobe_subsets(2, 3)


def _m(d, xi, interior=True):
    return MinimumResult(d=d, xi=xi, value=0.0, interior=interior, gradient=(), converged=True,
                         iterations=1)


def test_count_distinct():
    ms = [_m((1.0, 2.0), (0.0, 3.0)), _m((2.0, 1.0), (3.0, 0.0)),
          _m((1.0, 2.0), (0.0, 3.5)), _m((1.0,), (0.0,), interior=False)]
    assert count_distinct(ms, 1e-3) == 2


def test_minimize_two_lobes(reduced6, exps6):
    U = DisjointUnion((Ball(1, -1.5, 6), Ball(1, 1.5, 6)))
    gh = GreensHandle(U, exps6, nx=NX)
    rep = minimize(U, 1, [1e-3, 1e-4], enumerate_lobe_subsets(U, 1), reduced6, gh, delta1=0.01)
    assert rep.distinct == 2
    assert len(rep.evaluations[0]) == 2
    assert rep.mu[1] < rep.mu[0]
    assert rep.as_dict()["sign_convention"] == "asserted"


def test_argmin_invariant_under_joint_rescaling(reduced6, ball_handle):
    big = ReducedConstants(**{**reduced6.__dict__, **{k: 10 * getattr(reduced6, k)
                                                      for k in ("A1", "A1_tilde", "A2", "A4")}})
    assert big.C1 == pytest.approx(10 * reduced6.C1) and big.C2 == pytest.approx(10 * reduced6.C2)
    seed = {"d": (1.0,), "xi": (0.2,)}
    m1 = minimize_seed(seed, reduced6, ball_handle, delta1=0.01)
    m2 = minimize_seed(seed, big, ball_handle, delta1=0.01)
    # same minimiser up to the simplex stopping tolerance
    np.testing.assert_allclose(m1.d, m2.d, rtol=1e-7)
    np.testing.assert_allclose(m1.xi, m2.xi, atol=1e-7)


def test_minimiser_robust_to_halving_eps(reduced6, ball_handle):
    seeds = [{"d": (1.0,), "xi": (0.1,)}]
    a = minimize(Ball(), 1, [1e-3], seeds, reduced6, ball_handle, delta1=0.01)
    b = minimize(Ball(), 1, [5e-4], seeds, reduced6, ball_handle, delta1=0.01)
    assert abs(a.minima[0].xi[0] - b.minima[0].xi[0]) < ball_handle.h
    assert a.minima[0].d == pytest.approx(b.minima[0].d, rel=1e-8)

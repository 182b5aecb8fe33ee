import math

import numpy as np
import pytest
from scipy.integrate import quad

from lanemden.errors import Coincident, ResolutionTooCoarse, SingularOverlap, Unsupported
from lanemden.greens import (
    Ball, DisjointUnion, Dumbbell, ball_green, ball_H, ball_H_error, ball_robin, build_dumbbell,
    hhat, htilde_config, meridian_grid, observed_orders, regular_part_H, robin,
    solve_meridian_poisson, symmetry_residual, tau_center_reference, tau_table,
)

GAMMA6 = 1.0 / (4.0 * math.pi**3)      # 1/((N-2)|S^5|), |S^5| = pi^3


def image_H(x, y, R):
    """Kelvin image for the ball B(0, R) in R^6, written out independently."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ny = np.linalg.norm(y)
    if ny == 0:
        return GAMMA6 * R**-4
    ystar = R**2 * y / ny**2
    return GAMMA6 * (R / ny) ** 4 * np.linalg.norm(x - ystar) ** -4


def tau_nested_quad(exps, R=1.0):
    """``tau~`` at the centre from the un-integrated radial form (nested quad)."""
    N, p = exps.N, exps.p
    gam = exps.gamma_u
    gN = GAMMA6
    gt = gN**p / (gam * (N - 2 - gam))

    def f_r(t):      # G^p minus its singular part, without cancellation
        return gN**p * t ** (-(N - 2) * p) * math.expm1(p * math.log1p(-(t / R) ** (N - 2)))

    def M(s):
        return quad(lambda t: t ** (N - 1) * f_r(t), 0, s, epsabs=0, epsrel=1e-12, limit=200)[0]

    inner = quad(lambda s: s ** (1 - N) * M(s), 0, R, epsabs=0, epsrel=1e-11, limit=200)[0]
    return gt * R**-gam - inner


# -- closed forms ----------------------------------------------------------------

def test_ball_H_matches_image():
    b = Ball(1.3, 0.0, 6)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, 6)
        y = rng.uniform(-0.5, 0.5, 6)
        assert ball_H(x, y, b) == pytest.approx(image_H(x, y, 1.3), rel=1e-12)


def test_ball_green_vanishes_on_boundary():
    b = Ball(1.0, 0.5, 6)
    y = np.array([0.7, 0.1, 0, 0, 0, 0])
    rng = np.random.default_rng(2)
    z = rng.normal(size=(50, 6))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    x = z + np.array([0.5, 0, 0, 0, 0, 0])
    g = ball_green(x, y, b)
    assert np.max(np.abs(g)) < 1e-12 * GAMMA6 * 0.3**-4


def test_ball_robin_is_diagonal_of_H():
    b = Ball(2.0, 1.0, 6)
    for y in [1.0, 1.4, 2.5]:
        assert ball_robin(y, b) == pytest.approx(ball_H(y, y, b), rel=1e-13)
    assert robin(b, 1.0) == pytest.approx(GAMMA6 * 2.0**-4, rel=1e-14)


def test_green_coincident():
    with pytest.raises(Coincident):
        ball_green(0.2, 0.2, Ball())


def test_symmetry_residual():
    assert symmetry_residual(Ball(1.0, 0.0, 6)) < 1e-12
    assert symmetry_residual(Ball(0.7, 2.0, 6), seed=3) < 1e-12


# -- meridian solver -------------------------------------------------------------

def test_poisson_quadratic_solution():
    # -Lap (1 - |x|^2) = 2N on the unit ball
    b = Ball(1.0, 0.0, 6)
    errs = []
    for nx in [32, 64, 128]:
        fld = solve_meridian_poisson(b, 12.0, 0.0, nx=nx)
        g = fld.grid
        sel = g.inside
        errs.append(np.max(np.abs(fld.values[sel] - (1 - g.X[sel] ** 2 - g.R[sel] ** 2))))
    assert errs[-1] < 1e-3
    assert min(observed_orders([32, 64, 128], errs)) > 1.5 or errs[-1] < 1e-10


def test_cg_agrees_with_lu():
    g = meridian_grid(Ball(1.0, 0.0, 6), 64)
    u1, _ = g.solve(1.0, lambda x, r: x**2, method="lu", tol=1e-12)
    u2, _ = g.solve(1.0, lambda x, r: x**2, method="cg", tol=1e-13)
    sel = g.inside
    assert np.max(np.abs(u1[sel] - u2[sel])) < 1e-9 * np.max(np.abs(u1[sel]))


def test_unknown_method():
    with pytest.raises(ValueError):
        regular_part_H(Ball(), 0.0, nx=32, method="qr")


def test_H_convergence_order():
    errs = [ball_H_error(Ball(1.0, 0.0, 6), 0.3, nx) for nx in [64, 128, 256]]
    orders = observed_orders([64, 128, 256], errs)
    assert all(1.7 < o < 2.3 for o in orders), orders


def test_meridian_H_against_written_out_image():
    b = Ball(1.0, 0.0, 6)
    fld = regular_part_H(b, 0.3, nx=128)
    for x, rho in [(0.0, 0.0), (-0.5, 0.2), (0.4, 0.4)]:
        assert fld(x, rho) == pytest.approx(image_H([x, rho, 0, 0, 0, 0],
                                                    [0.3, 0, 0, 0, 0, 0], 1.0), rel=1e-3)


def test_off_axis_source_unsupported():
    with pytest.raises(Unsupported):
        regular_part_H(Ball(), [0.1, 0.2, 0, 0, 0, 0], nx=32)


def test_source_outside():
    with pytest.raises(ValueError):
        hhat(Ball(), 1.5, None, nx=32)


# -- tau~ ------------------------------------------------------------------------

def test_tau_reference_matches_nested_quad(exps6):
    assert tau_center_reference(exps6) == pytest.approx(tau_nested_quad(exps6), rel=1e-8)


def test_tau_reference_radius_scaling(exps6):
    # tau~ of B(0,R) is R^-gamma_u times that of the unit ball
    t1 = tau_center_reference(exps6, 1.0)
    t2 = tau_center_reference(exps6, 2.0)
    assert t2 == pytest.approx(2.0 ** (-exps6.gamma_u) * t1, rel=1e-12)


def test_htilde_center_converges(exps6):
    ref = tau_center_reference(exps6)
    nxs = [32, 64, 128]
    errs = [abs(htilde_config(Ball(), [1.0], [0.0], exps6, nx).tau - ref) for nx in nxs]
    assert errs[-1] / ref < 1e-5
    orders = observed_orders(nxs, errs)
    assert all(1.8 < o < 2.2 for o in orders), orders


def test_htilde_d_scaling(exps6):
    # H~ scales like d^(a p) for a single source, a = N/(q+1)
    a = exps6.N / (exps6.q + 1)
    t1 = htilde_config(Ball(), [1.0], [0.1], exps6, 64).tau
    t2 = htilde_config(Ball(), [2.0], [0.1], exps6, 64).tau
    assert t2 == pytest.approx(2.0 ** (a * exps6.p) * t1, rel=1e-10)


def test_htilde_mirror_symmetry(exps6):
    t1 = htilde_config(Ball(), [1.0], [0.3], exps6, 64).tau
    t2 = htilde_config(Ball(), [1.0], [-0.3], exps6, 64).tau
    assert t1 == pytest.approx(t2, rel=1e-6)


def test_htilde_argument_errors(exps6):
    with pytest.raises(ValueError):
        htilde_config(Ball(), [1.0, 1.0], [0.0], exps6, 32)
    with pytest.raises(ValueError):
        htilde_config(Ball(), [-1.0], [0.0], exps6, 32)
    with pytest.raises(SingularOverlap):
        htilde_config(Ball(), [1.0, 1.0], [0.0, 0.01], exps6, 32)


def test_tau_table_symmetric_and_minimal_at_centre(exps6):
    tab = tau_table(Ball(), exps6, 0.2, n_points=9, nx=64)
    xs = np.linspace(-0.7, 0.7, 15)
    np.testing.assert_allclose(tab(xs), tab(-xs), rtol=1e-6)
    assert np.argmin(tab(xs)) == 7
    with pytest.raises(ValueError):
        tab(0.95)


def test_disjoint_union_lobes_independent(exps6):
    U = DisjointUnion((Ball(1, -3, 6), Ball(1, 0, 6)))
    two = htilde_config(U, [1.0, 1.0], [-3.0, 0.0], exps6, 64).values
    one = htilde_config(Ball(), [1.0], [0.0], exps6, 64).tau
    np.testing.assert_allclose(two, [one, one], rtol=1e-12)


# -- domains ---------------------------------------------------------------------

def test_dumbbell_geometry():
    D = Dumbbell(((-3.0, -1.0), (1.0, 3.0)), 0.2)
    assert bool(D.contains(np.array(0.0), np.array(0.1)))
    assert not bool(D.contains(np.array(0.0), np.array(0.3)))
    assert D.lobe_of(-2.0) == 0 and D.lobe_of(0.0) is None
    with pytest.raises(ValueError):
        Dumbbell(((-3.0, -1.0), (1.0, 3.0)), 1.5)
    with pytest.raises(ValueError):
        DisjointUnion((Ball(1, 0, 6), Ball(1, 1, 6)))


def test_dumbbell_resolution_guard():
    with pytest.raises(ResolutionTooCoarse):
        build_dumbbell([(-3.0, -1.0), (1.0, 3.0)], 0.01, nx=64)


def test_dumbbell_robin_near_ball_value():
    # with a thin neck the Robin function at a lobe centre is close to the ball value
    dom, _ = build_dumbbell([(-3.0, -1.0), (1.0, 3.0)], 0.2, nx=256)
    val = robin(dom, -2.0, nx=256)
    assert val == pytest.approx(GAMMA6, rel=0.05)
    assert val < GAMMA6          # a larger domain has a smaller regular part


def test_meridian_grid_counts():
    g = meridian_grid(Ball(), 32)
    assert np.count_nonzero(g.inside) > 0
    assert g.h == pytest.approx(2.0 / 32, rel=0.2)

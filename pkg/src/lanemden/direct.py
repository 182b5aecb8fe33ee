"""Direct radial solver for the slightly critical system on a ball.

Solves ``-Lap u = f_eps(v)``, ``-Lap v = g_eps(u)`` in ``B(0, R)`` with
``u = v = 0`` on the boundary, where

    f_eps(v) = |v|^(p-1) v / ln(e + |v|)^eps,   g_eps(u) = |u|^(q-1) u / ln(e + |u|)^eps.

The radial problem is discretised by finite differences on a mesh uniform
in ``s = r^(1/2)`` (nodes cluster at the origin, where the solution peaks)
and solved by Newton's method with backtracking.  Following the branch as
``eps`` decreases measures the blow-up rate ``mu_num = u(0)^(-(q+1)/N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve

from .errors import Diverged, InsufficientRange, OutOfRange, Unresolved

__all__ = [
    "Nonlinearity", "power_log", "nonlinearity_values", "zsj_violations",
    "RadialGrid", "RadialSolution", "radial_newton", "height_newton", "height_for_eps",
    "jacobian", "bubble_guess", "seed_solution", "continuation", "Branch",
    "scaling_check", "ScalingFit", "transfer",
]


# -- nonlinearity --------------------------------------------------------------

def _loglog(a):
    """``ln ln(e + a)`` for ``a >= 0``, accurate for small ``a``."""
    return np.log1p(np.log1p(a / math.e))


def power_log(u, s, eps):
    """``|u|^(s-1) u / ln(e+|u|)^eps`` and its derivative."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    L = 1.0 + np.log1p(a / math.e)          # ln(e + |u|)
    damp = np.exp(-eps * _loglog(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        pw1 = np.where(a > 0, a ** (s - 1.0), 0.0)
    val = pw1 * u * damp
    w = a / ((math.e + a) * L)
    der = pw1 * (s - eps * w) * damp
    return val, der


@dataclass(frozen=True)
class Nonlinearity:
    exps: object
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    def f(self, v):
        return power_log(v, self.exps.p, self.epsilon)

    def g(self, u):
        return power_log(u, self.exps.q, self.epsilon)


def nonlinearity_values(nl, s, component="f"):
    """``(value, derivative)`` of ``f_eps`` (power ``p``) or ``g_eps`` (power ``q``)."""
    if component == "f":
        return nl.f(s)
    if component == "g":
        return nl.g(s)
    raise ValueError("component must be 'f' or 'g'")


def zsj_violations(u, s, eps, rel=1e-12):
    """Count failures of the three pointwise bounds on ``power_log``.

    (i)   ``|f_eps - f_0| <= eps |u|^s lnln(e+|u|)``
    (ii)  ``|f_eps'| <= (s + eps) |u|^(s-1)``
    (iii) ``|f_eps' - f_0'| <= eps |u|^(s-1) (s lnln(e+|u|) + 1/ln(e+|u|))``

    ``rel`` absorbs floating-point rounding of both sides.  The differences
    are formed without cancellation via ``expm1``.
    """
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    L = 1.0 + np.log1p(a / math.e)
    ll = _loglog(a)
    damp_m1 = np.expm1(-eps * ll)           # L^-eps - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        pw1 = np.where(a > 0, a ** (s - 1.0), 0.0)
    w = a / ((math.e + a) * L)
    diff0 = pw1 * a * np.abs(damp_m1)
    _, der = power_log(u, s, eps)
    diff1 = np.abs(pw1 * (s * damp_m1 - eps * w * (1.0 + damp_m1)))
    b1 = eps * pw1 * a * ll
    b2 = (s + eps) * pw1
    b3 = eps * pw1 * (s * ll + 1.0 / L)
    return {
        "i": int(np.sum(diff0 > b1 * (1 + rel))),
        "ii": int(np.sum(np.abs(der) > b2 * (1 + rel))),
        "iii": int(np.sum(diff1 > b3 * (1 + rel))),
    }


# -- discretisation ------------------------------------------------------------

def _fd_weights(offsets, order):
    """Finite-difference weights for the ``order``-th derivative at 0."""
    k = np.asarray(offsets, dtype=float)
    V = np.vander(k, increasing=True).T
    rhs = np.zeros(len(k))
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


class RadialGrid:
    """Nodes ``r_i = (i ds)^2``, ``i = 0..n``; node ``n`` is the boundary.

    In ``s = r^(1/2)`` the radial Laplacian becomes
    ``Lap u = (u_ss + (2N-3) u_s / s) / (4 s^2)``, a radial Laplacian in
    dimension ``2N-2``.  Fourth-order central differences are used, with the
    even reflection ``u(-s) = u(s)`` at the origin and one-sided stencils at
    the last interior node.  ``L`` approximates ``-Lap`` pointwise.
    """

    def __init__(self, N, R=1.0, n=4096):
        self.N, self.R, self.n = N, float(R), int(n)
        if n < 8:
            raise ValueError("need at least 8 radial nodes")
        ds = math.sqrt(R) / n
        self.ds = ds
        s = ds * np.arange(n + 1)
        self.s = s
        self.r = s**2
        rows, cols, vals = [], [], []

        def put(i, offs, w):
            for o, c in zip(offs, w):
                j = abs(i + o)            # even reflection through s = 0
                if j < n:                 # node n carries zero data
                    rows.append(i)
                    cols.append(j)
                    vals.append(c)

        # origin: -Lap u(0) = -(N/12) u_ssss(0) since u = u0 + c s^4 + ...
        offs = np.arange(-3, 4)
        put(0, offs, -(N / 12.0) * _fd_weights(offs, 4) / ds**4)
        central = np.arange(-2, 3)
        d1c, d2c = _fd_weights(central, 1), _fd_weights(central, 2)
        edge = np.arange(-4, 2)
        d1e, d2e = _fd_weights(edge, 1), _fd_weights(edge, 2)
        for i in range(1, n):
            offs, d1, d2 = (central, d1c, d2c) if i < n - 1 else (edge, d1e, d2e)
            w = -(d2 / ds**2 + (2 * N - 3) * d1 / (ds * s[i])) / (4.0 * s[i] ** 2)
            put(i, offs, w)
        self.L = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.L.sum_duplicates()
        self.absL = abs(self.L)
        self.M = sp.identity(n, format="csr")
        self.absM = self.M

    def cells_within(self, radius):
        return int(np.searchsorted(self.r, radius))


@dataclass
class RadialSolution:
    grid: RadialGrid
    u: np.ndarray          # interior nodes 0..n-1 (boundary value 0 implied)
    v: np.ndarray
    epsilon: float
    newton_residual: float
    iterations: int
    residual_history: list = field(default_factory=list)

    @property
    def peak_height(self):
        return float(self.u[0])

    def mu_num(self, exps):
        return float(self.u[0] ** (-(exps.q + 1.0) / exps.N))

    @property
    def r(self):
        return self.grid.r[:-1]


def _system(grid, exps, u, v, eps, forcing=None, height=None, want_jac=True):
    """Residual, Jacobian and componentwise scale of the discrete system.

    With ``height`` given, ``eps`` is an unknown and ``u(0) = height`` is
    appended (a bordered system that cannot collapse to the zero solution).
    """
    n = grid.n
    fv, dfv = power_log(v, exps.p, eps)
    gu, dgu = power_log(u, exps.q, eps)
    M = grid.M
    Fu = grid.L @ u - M @ fv
    Fv = grid.L @ v - M @ gu
    # componentwise size of the terms in each row (roundoff floor of the residual)
    sc_u = grid.absL @ np.abs(u) + grid.absM @ np.abs(fv)
    sc_v = grid.absL @ np.abs(v) + grid.absM @ np.abs(gu)
    if forcing is not None:
        Fu = Fu - forcing[0]
        Fv = Fv - forcing[1]
        sc_u = sc_u + np.abs(forcing[0])
        sc_v = sc_v + np.abs(forcing[1])
    F = np.concatenate([Fu, Fv])
    scale = np.concatenate([sc_u, sc_v])
    if height is not None:
        F = np.append(F, u[0] - height)
        scale = np.append(scale, abs(height))
    if not want_jac:
        return F, scale, None
    J = sp.bmat([[grid.L, -(M @ sp.diags(dfv))], [-(M @ sp.diags(dgu)), grid.L]],
                format="csc")
    if height is not None:
        lv = np.log1p(np.log1p(np.abs(v) / math.e))
        lu = np.log1p(np.log1p(np.abs(u) / math.e))
        col = sp.csc_matrix(np.concatenate([M @ (lv * fv), M @ (lu * gu)]).reshape(-1, 1))
        row = sp.csc_matrix(([1.0], ([0], [0])), shape=(1, 2 * n + 1))
        J = sp.vstack([sp.hstack([J, col]), row], format="csc")
    return F, scale, J


def jacobian(grid, nl, u, v):
    """Analytic Jacobian of the fixed-``eps`` system in ``(u, v)``."""
    return _system(grid, nl.exps, u, v, nl.epsilon)[2]


def _newton(grid, exps, x, eps, forcing, height, tol, maxiter, armijo, step_tol=1e-9):
    n = grid.n

    def unpack(x):
        if height is None:
            return x[:n], x[n:], eps
        return x[:n], x[n:2 * n], x[-1]

    hist = []
    growth = 0
    last_step = math.inf
    F, scale, J = _system(grid, exps, *unpack(x), forcing, height)
    for it in range(maxiter + 1):
        w = 1.0 / np.maximum(scale, np.finfo(float).tiny)
        res = float(np.max(np.abs(F) * w))
        hist.append(res)
        # rows near the origin are roundoff-limited, so also ask for a small update
        stalled = len(hist) >= 2 and hist[-2] <= tol and res > 0.1 * hist[-2]
        if res <= tol and (last_step <= step_tol or stalled):
            return x, hist
        if it == maxiter:
            raise Diverged(f"Newton did not converge in {maxiter} steps (residual {res:.3e})")
        # equilibrated solve: rows by the residual scale, columns by |x|
        cs = np.maximum(np.abs(x), 1e-300)
        if height is not None:
            cs[-1] = max(abs(x[-1]), 1e-3)
        A = (sp.diags(w) @ J @ sp.diags(cs)).tocsc()
        step = cs * spsolve(A, -w * F)
        m0 = 0.5 * float(np.sum((w * F) ** 2))
        lam = 1.0
        while True:
            xn = x + lam * step
            with np.errstate(over="ignore", invalid="ignore"):   # rejected below if non-finite
                Fn, scn, _ = _system(grid, exps, *unpack(xn), forcing, height, want_jac=False)
                mn = 0.5 * float(np.sum((w * Fn) ** 2))
            if np.isfinite(mn) and mn <= (1.0 - 2.0 * armijo * lam) * m0:
                break
            lam *= 0.5
            if lam < 1e-10:
                if res <= tol:      # stalled at roundoff after meeting the tolerance
                    return x, hist
                raise Diverged(f"line search failed at residual {res:.3e}")
        new_res = float(np.max(np.abs(Fn) / np.maximum(scn, np.finfo(float).tiny)))
        growth = growth + 1 if new_res > res else 0
        if growth >= 5:
            raise Diverged("residual grew for 5 consecutive Newton steps")
        dx = np.abs(lam * step)
        last_step = max(float(np.max(dx[:n]) / max(np.max(np.abs(x[:n])), 1e-300)),
                        float(np.max(dx[n:2 * n]) / max(np.max(np.abs(x[n:2 * n])), 1e-300)))
        if height is not None:
            last_step = max(last_step, float(dx[-1] / cs[-1]))
        x = xn
        F, scale, J = _system(grid, exps, *unpack(x), forcing, height)
    raise AssertionError("unreachable")


def _check_resolved(sol, exps):
    grid = sol.grid
    mu = sol.mu_num(exps) if sol.u[0] > 0 else math.inf
    if mu < grid.r[20]:
        raise Unresolved(f"peak scale {mu:.3e} narrower than 20 cells ({grid.r[20]:.3e})")


def radial_newton(nl, grid, u0, v0, tol=1e-10, maxiter=60, forcing=None, armijo=1e-4):
    """Newton with backtracking for the fixed-``eps`` radial system.

    The residual is measured componentwise, ``max |F_i| / (|L||u| + |f|)_i``,
    which stays meaningful where the mesh is much finer than the solution.
    Raises Diverged after 5 consecutive residual increases or a failed line
    search, Unresolved if the converged peak is narrower than 20 cells.
    """
    x0 = np.concatenate([np.asarray(u0, float), np.asarray(v0, float)])
    x, hist = _newton(grid, nl.exps, x0, nl.epsilon, forcing, None, tol, maxiter, armijo)
    n = grid.n
    sol = RadialSolution(grid, x[:n], x[n:], nl.epsilon, hist[-1], len(hist) - 1, hist)
    if forcing is None:
        _check_resolved(sol, nl.exps)
    return sol


def height_newton(exps, grid, height, u0, v0, eps0, tol=1e-10, maxiter=60, armijo=1e-4):
    """Solve for ``(u, v, eps)`` with the peak height ``u(0)`` prescribed."""
    x0 = np.concatenate([np.asarray(u0, float), np.asarray(v0, float), [float(eps0)]])
    x, hist = _newton(grid, exps, x0, None, None, float(height), tol, maxiter, armijo)
    n = grid.n
    eps = float(x[-1])
    sol = RadialSolution(grid, x[:n], x[n:2 * n], eps, hist[-1], len(hist) - 1, hist)
    _check_resolved(sol, exps)
    return sol


def height_for_eps(nl, grid, start, tol=1e-10, maxiter=30, eps_rtol=1e-7):
    """Fixed-``eps`` solution found by adjusting a prescribed peak height.

    Each iterate solves the height-bordered system; the height is then
    updated by Newton on ``eps(H) = nl.epsilon`` in ``ln H``, with
    ``d eps / dH`` from the bordered Jacobian.  Near the blow-up limit the
    fixed-``eps`` Jacobian has a nearly neutral dilation mode, which this
    parametrisation avoids.  The result is polished by :func:`radial_newton`.
    """
    exps, target = nl.exps, nl.epsilon
    n = grid.n
    sol = start
    H = float(start.u[0])
    e_guess = start.epsilon if start.epsilon > 0 else target
    for _ in range(maxiter):
        sol = height_newton(exps, grid, H, sol.u, sol.v, e_guess, tol=tol)
        if abs(sol.epsilon / target - 1.0) <= eps_rtol:
            break
        _, _, J = _system(grid, exps, sol.u, sol.v, sol.epsilon, height=H)
        rhs = np.zeros(2 * n + 1)
        rhs[-1] = 1.0
        dx = spsolve(J, rhs)
        dlneps_dlnH = dx[-1] * H / sol.epsilon
        if not np.isfinite(dlneps_dlnH) or dlneps_dlnH == 0:
            raise Diverged("eps does not vary with the peak height here")
        step = (math.log(target) - math.log(sol.epsilon)) / dlneps_dlnH if sol.epsilon > 0 \
            else -0.5
        step = max(-0.5, min(0.5, step))
        # rescale the warm start to the new height
        f = math.exp(step)
        H *= f
        sol = RadialSolution(grid, sol.u * f, sol.v * f ** ((exps.q + 1) / (exps.p + 1)),
                             sol.epsilon, math.nan, 0)
        e_guess = sol.epsilon
    else:
        raise Diverged(f"peak-height iteration did not reach eps={target:g}")
    return radial_newton(nl, grid, sol.u, sol.v, tol=tol)


def bubble_guess(profile, grid, mu):
    """Bubble of scale ``mu`` centred at 0 minus its boundary value."""
    from .bubble import evaluate_bubble
    r = grid.r
    pts = np.zeros((len(r), 1))
    pts[:, 0] = r
    U, V = evaluate_bubble(profile, mu, np.zeros(1), pts)
    return (U - U[-1])[:-1], (V - V[-1])[:-1]


# -- continuation --------------------------------------------------------------

@dataclass
class Branch:
    exps: object
    solutions: list
    stopped: str = ""
    refined_mu: list = field(default_factory=list)

    @property
    def epsilon(self):
        return np.array([s.epsilon for s in self.solutions])

    @property
    def mu_num(self):
        return np.array([s.mu_num(self.exps) for s in self.solutions])

    def table(self):
        return [{"epsilon": s.epsilon, "mu_num": s.mu_num(self.exps), "u0": s.peak_height,
                 "newton_iterations": s.iterations, "newton_residual": s.newton_residual}
                for s in self.solutions]


def _is_positive_nontrivial(sol, floor=1e-3):
    return sol.u[0] > floor and bool(np.all(sol.u > 0)) and bool(np.all(sol.v > 0))


def transfer(sol, grid):
    """Interpolate a solution onto another grid (cubic spline in ``r``)."""
    ru = np.append(sol.grid.r, [])
    cu = CubicSpline(ru, np.append(sol.u, 0.0))
    cv = CubicSpline(ru, np.append(sol.v, 0.0))
    r = grid.r[:-1]
    return cu(r), cv(r)


def _solve_at(nl, grid, start, tol, depth):
    """Fixed-``eps`` Newton from ``start``; on failure, approach ``eps`` in halves."""
    try:
        sol = radial_newton(nl, grid, start.u, start.v, tol=tol)
        if _is_positive_nontrivial(sol):
            return sol
        raise Diverged("Newton left the positive cone")
    except Diverged:
        pass
    try:
        sol = height_for_eps(nl, grid, start, tol)
        if _is_positive_nontrivial(sol):
            return sol
    except Diverged:
        pass
    if depth == 0:
        raise Diverged(f"no positive solution reached at eps={nl.epsilon:g}")
    mid = math.sqrt(start.epsilon * nl.epsilon) if start.epsilon > 0 else 0.5 * nl.epsilon
    half = _solve_at(Nonlinearity(nl.exps, mid), grid, start, tol, depth - 1)
    return _solve_at(nl, grid, half, tol, depth - 1)


def _predict(profile, grid, history, eps):
    """Warm start for ``eps``: the last solution with its bubble part re-scaled.

    The new scale comes from a secant in ``(ln eps, ln mu)`` through the last
    two points, or from ``mu ~ eps^(1/gamma_u)`` with one point.  The part of
    the solution that is not the bubble (boundary correction) is carried over.
    """
    last = history[-1]
    ex = profile.exps
    mu0 = last.mu_num(ex)
    if last.epsilon <= 0 or eps == last.epsilon:
        return last
    if len(history) >= 2 and history[-2].epsilon != last.epsilon:
        prev = history[-2]
        k = (math.log(mu0) - math.log(prev.mu_num(ex))) / (
            math.log(last.epsilon) - math.log(prev.epsilon))
    else:
        k = 1.0 / ex.gamma_u
    mu1 = mu0 * math.exp(k * (math.log(eps) - math.log(last.epsilon)))
    if not mu1 > 0 or not math.isfinite(mu1):
        return last
    b0u, b0v = bubble_guess(profile, grid, mu0)
    b1u, b1v = bubble_guess(profile, grid, mu1)
    return RadialSolution(grid, last.u - b0u + b1u, last.v - b0v + b1v, last.epsilon,
                          math.nan, 0)


def seed_solution(exps, profile, grid, mu=0.005, tol=1e-10):
    """A point on the branch from the bubble of scale ``mu``.

    Prescribing the peak height ``u(0)`` of the bubble and solving for
    ``(u, v, eps)`` keeps Newton away from the trivial solution, which the
    fixed-``eps`` problem readily falls into from a crude guess.
    """
    from .reduced import eps_from_mu
    u0, v0 = bubble_guess(profile, grid, mu)
    sol = height_newton(exps, grid, u0[0], u0, v0, eps_from_mu(mu, exps), tol=tol)
    if sol.epsilon <= 0 or not _is_positive_nontrivial(sol):
        raise Diverged(f"seed at mu={mu:g} did not reach a positive solution with eps > 0")
    return sol


def continuation(exps, profile, eps_list, grid=None, seed_mu=0.005, tol=1e-10,
                 refine_tol=0.01, max_halvings=6, max_ratio=2.0):
    """Follow the positive radial branch along a decreasing ``eps`` list.

    A seed point is found by :func:`seed_solution`, then every ``eps`` is
    reached by warm-started Newton (inserting intermediate ``eps`` values
    when a step fails).  If warm starts fail, the bubble with
    ``mu = mu_from_eps(eps)`` is tried.  With ``refine_tol`` set, each point
    is re-solved on a grid with twice the nodes and the branch is truncated
    once ``mu_num`` moves by more than ``refine_tol`` (relative).  The branch
    also ends at the first Unresolved point.
    """
    from .reduced import mu_from_eps
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon list must be strictly decreasing")
    if not eps_list or eps_list[-1] <= 0:
        raise ValueError("epsilon values must be positive")
    if grid is None:
        grid = RadialGrid(exps.N)
    fine = RadialGrid(exps.N, grid.R, 2 * grid.n) if refine_tol is not None else None
    sols, refined = [], []
    stopped = ""
    try:
        prev = seed_solution(exps, profile, grid, seed_mu, tol)
    except (Diverged, Unresolved) as exc:
        return Branch(exps, [], f"seed failed: {exc}")
    walk = [prev]
    for eps in eps_list:
        nl = Nonlinearity(exps, eps)
        try:
            try:
                # intermediate eps values keep every step within a factor max_ratio
                e0 = walk[-1].epsilon
                m = max(1, math.ceil(abs(math.log(eps / e0)) / math.log(max_ratio)))
                for j in range(1, m + 1):
                    ej = e0 * (eps / e0) ** (j / m)
                    start = _predict(profile, grid, walk, ej)
                    walk.append(_solve_at(Nonlinearity(exps, ej), grid, start, tol,
                                          max_halvings))
                sol = walk[-1]
            except Diverged as exc:
                try:
                    mu = mu_from_eps(eps, exps)
                except OutOfRange:
                    raise exc from None
                u0, v0 = bubble_guess(profile, grid, mu)
                sol = radial_newton(nl, grid, u0, v0, tol=tol)
                if not _is_positive_nontrivial(sol):
                    raise exc from None
                walk = [sol]
            if fine is not None:
                uf, vf = transfer(sol, fine)
                start = RadialSolution(fine, uf, vf, eps, math.nan, 0)
                solf = _solve_at(nl, fine, start, tol, 0)
                change = abs(solf.mu_num(exps) / sol.mu_num(exps) - 1.0)
                if change > refine_tol:
                    stopped = (f"eps={eps:g}: doubling the grid moves mu_num by "
                               f"{100 * change:.2g}% (> {100 * refine_tol:g}%)")
                    break
                refined.append(solf.mu_num(exps))
        except (Diverged, Unresolved) as exc:
            stopped = f"eps={eps:g}: {type(exc).__name__} ({exc})"
            break
        sols.append(sol)
        walk = walk[-2:]
    return Branch(exps, sols, stopped, refined)


# -- scaling regression --------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    slope_no_log: float
    intercept_no_log: float
    r2_no_log: float
    decades: float

    def as_dict(self):
        return dict(self.__dict__)


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (m, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - m * x - c) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(m), float(c), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def scaling_check(eps, mu, exps, min_points=6, min_decades=1.0):
    """Regress ``ln eps`` on ``ln(mu^gamma (ln 1/mu)^2)`` and on ``ln mu^gamma``."""
    eps = np.asarray(eps, dtype=float)
    mu = np.asarray(mu, dtype=float)
    decades = float(np.log10(mu.max() / mu.min())) if len(mu) else 0.0
    if len(eps) < min_points or decades < min_decades:
        raise InsufficientRange(f"{len(eps)} points spanning {decades:.2f} decades of mu; "
                                f"need >= {min_points} points and >= {min_decades:g} decade")
    g = exps.gamma_u
    y = np.log(eps)
    x1 = g * np.log(mu) + 2.0 * np.log(np.log(1.0 / mu))
    x0 = g * np.log(mu)
    m1, c1, r1 = _linfit(x1, y)
    m0, c0, r0 = _linfit(x0, y)
    return ScalingFit(m1, c1, r1, m0, c0, r0, decades)

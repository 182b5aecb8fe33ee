"""Green and Robin machinery on balls and axisymmetric dumbbells.

Every concentration point lies on the symmetry axis ``x' = 0``, so each field
needed here is axisymmetric and is computed on the meridian half-plane
``(x, rho)``, ``rho = |x'| >= 0``.  There the Laplacian of ``R^N`` reads

    u_xx + u_rr + (N-2)/rho u_r,

which is discretised by a finite-volume scheme with the natural weight
``rho^(N-2)`` (symmetric, zero flux through the axis).  Curved Dirichlet
boundaries are handled by shortening the cut stencil arms to the exact
boundary crossing, which keeps the matrix symmetric and the solution
second-order accurate.

Balls also have closed forms (image charge); they are used both directly and
as oracles for the meridian solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import cg, splu

from .bubble import gamma_N
from .errors import (Coincident, NotConverged, ResolutionTooCoarse, SingularOverlap,
                     Unsupported)

__all__ = [
    "Ball", "Dumbbell", "DisjointUnion", "MeridianGrid", "MeridianField",
    "ball_green", "ball_H", "ball_robin", "build_dumbbell", "meridian_grid",
    "solve_meridian_poisson", "regular_part_H", "robin", "hhat", "htilde_config",
    "HTildeResult", "TauTable", "tau_table", "tau_center_reference", "ball_H_error",
    "observed_orders", "symmetry_residual",
]


# -- domains -------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """Ball of ``R^N`` centred on the axis at ``x = center``."""

    radius: float = 1.0
    center: float = 0.0
    N: int = 6

    kind = "ball"

    def contains(self, x, rho):
        return (x - self.center) ** 2 + rho**2 < self.radius**2

    def bounds(self):
        return self.center - self.radius, self.center + self.radius, self.radius

    def axis_interval(self):
        return self.center - self.radius, self.center + self.radius

    def boundary_distance(self, x):
        return self.radius - abs(x - self.center)

    def as_dict(self):
        return {"kind": "ball", "radius": self.radius, "center": self.center, "N": self.N}


@dataclass(frozen=True)
class DisjointUnion:
    """Union of balls with no necks (the zero-neck limit of a dumbbell)."""

    balls: tuple

    kind = "disjoint_union"

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        _check_lobe_order([b.axis_interval() for b in self.balls])
        if len({b.N for b in self.balls}) != 1:
            raise ValueError("all balls must live in the same dimension")

    @property
    def N(self):
        return self.balls[0].N

    def contains(self, x, rho):
        return np.logical_or.reduce([b.contains(x, rho) for b in self.balls])

    def bounds(self):
        lo = min(b.center - b.radius for b in self.balls)
        hi = max(b.center + b.radius for b in self.balls)
        return lo, hi, max(b.radius for b in self.balls)

    def lobe_of(self, x):
        """Index of the ball whose axis interval contains ``x`` (or None)."""
        for i, b in enumerate(self.balls):
            if abs(x - b.center) < b.radius:
                return i
        return None

    def boundary_distance(self, x):
        i = self.lobe_of(x)
        return -math.inf if i is None else self.balls[i].boundary_distance(x)

    def as_dict(self):
        return {"kind": "disjoint_union", "balls": [b.as_dict() for b in self.balls]}


def _check_lobe_order(intervals):
    flat = [v for ab in intervals for v in ab]
    if any(b <= a for a, b in zip(flat, flat[1:])):
        raise ValueError(f"lobes must be ordered and non-overlapping: {intervals}")


@dataclass(frozen=True)
class Dumbbell:
    """Axis-aligned balls joined by cylindrical necks of radius ``eta``.

    Lobe ``i`` is the ball whose axis trace is ``lobes[i] = (a_i, b_i)``.
    Each neck junction is rounded by a fillet circle of radius ``eta`` (in
    the meridian plane) tangent to both the ball and the neck, so the
    boundary is C^1.
    """

    lobes: tuple
    eta: float
    N: int = 6

    kind = "dumbbell"

    def __post_init__(self):
        lobes = tuple((float(a), float(b)) for a, b in self.lobes)
        object.__setattr__(self, "lobes", lobes)
        if len(lobes) < 2:
            raise ValueError("a dumbbell needs at least two lobes")
        _check_lobe_order(lobes)
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        rmin = min((b - a) / 2 for a, b in lobes)
        if self.eta >= rmin:
            raise ValueError(f"eta={self.eta:g} must be smaller than every lobe radius "
                             f"(smallest is {rmin:g})")
        for (L, R_) in zip(self.balls[:-1], self.balls[1:]):
            if self.eta > 0 and self._fillet(L, +1)[0] > self._fillet(R_, -1)[0]:
                raise ValueError("gap between lobes too short for the neck fillets")

    @cached_property
    def balls(self):
        return tuple(Ball(radius=(b - a) / 2, center=(a + b) / 2, N=self.N)
                     for a, b in self.lobes)

    def _fillet(self, ball, side):
        """Fillet centre abscissa and tangency abscissa on the given side."""
        f = self.eta
        xf = ball.center + side * math.sqrt((ball.radius + f) ** 2 - (self.eta + f) ** 2)
        xt = ball.center + (xf - ball.center) * ball.radius / (ball.radius + f)
        return xf, xt

    def contains(self, x, rho):
        inside = np.logical_or.reduce([b.contains(x, rho) for b in self.balls])
        if self.eta == 0:
            return inside
        f = self.eta
        for L, R_ in zip(self.balls[:-1], self.balls[1:]):
            xl, tl = self._fillet(L, +1)
            xr, tr = self._fillet(R_, -1)
            neck = (x >= xl) & (x <= xr) & (rho < self.eta)
            with np.errstate(invalid="ignore"):
                arc_l = self.eta + f - np.sqrt(np.maximum(f * f - (x - xl) ** 2, 0.0))
                arc_r = self.eta + f - np.sqrt(np.maximum(f * f - (x - xr) ** 2, 0.0))
            fil_l = (x >= tl) & (x < xl) & (rho < arc_l)
            fil_r = (x > xr) & (x <= tr) & (rho < arc_r)
            inside = inside | neck | fil_l | fil_r
        return inside

    def bounds(self):
        return self.lobes[0][0], self.lobes[-1][1], max(b.radius for b in self.balls)

    def lobe_of(self, x):
        for i, b in enumerate(self.balls):
            if abs(x - b.center) < b.radius:
                return i
        return None

    def boundary_distance(self, x):
        """Distance from an axis point to the boundary (lower bound via lobes)."""
        i = self.lobe_of(x)
        if i is None:
            return self.eta if self.contains(np.array(x), np.array(0.0)) else -math.inf
        return self.balls[i].boundary_distance(x)

    def as_dict(self):
        return {"kind": "dumbbell", "lobes": [list(ab) for ab in self.lobes],
                "eta": self.eta, "N": self.N}


def build_dumbbell(lobes, eta, N=6, nx=512):
    """Dumbbell domain and its meridian grid; ``eta = 0`` gives a DisjointUnion."""
    if eta == 0:
        balls = [Ball(radius=(b - a) / 2, center=(a + b) / 2, N=N) for a, b in lobes]
        dom = DisjointUnion(tuple(balls))
        return dom, meridian_grid(dom, nx)
    dom = Dumbbell(tuple(tuple(ab) for ab in lobes), eta, N)
    grid = meridian_grid(dom, nx)
    if eta < 4 * grid.h:
        raise ResolutionTooCoarse(f"neck radius {eta:g} spans fewer than 4 cells "
                                  f"(h={grid.h:.4g}); increase the resolution")
    return dom, grid


# -- closed forms on a ball ----------------------------------------------------

def _as_point(z, N):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        out = np.zeros(N)
        out[0] = z
        return out
    return z


def ball_H(x, y, ball):
    """Regular part ``H(x, y)`` of the Dirichlet Green function of a ball."""
    N = ball.N
    c = _as_point(ball.center, N)
    x = _as_point(x, N) - c
    y = _as_point(y, N) - c
    R2 = ball.radius**2
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    xy = np.sum(x * y, axis=-1)
    inner = xx * yy / R2**2 - 2.0 * xy / R2 + 1.0
    return gamma_N(N) * ball.radius ** (2 - N) * inner ** ((2.0 - N) / 2.0)


def ball_green(x, y, ball):
    """``G(x, y) = gamma_N |x-y|^(2-N) - H(x, y)`` on a ball."""
    N = ball.N
    x = _as_point(x, N)
    y = _as_point(y, N)
    dist = np.linalg.norm(x - y, axis=-1)
    if np.any(dist == 0):
        raise Coincident("Green function evaluated at coincident points")
    return gamma_N(N) * dist ** (2.0 - N) - ball_H(x, y, ball)


def ball_robin(y, ball):
    """Robin function ``H(y, y) = gamma_N R^(N-2) (R^2 - |y-c|^2)^(2-N)``."""
    N = ball.N
    y = _as_point(y, N) - _as_point(ball.center, N)
    yy = np.sum(y * y, axis=-1)
    return gamma_N(N) * ball.radius ** (N - 2) * (ball.radius**2 - yy) ** (2.0 - N)


# -- meridian grid -------------------------------------------------------------

_THETA_MIN = 1e-6
_GRID_CACHE = {}


def meridian_grid(domain, nx=512):
    """Cached meridian grid with ``nx`` cells across the domain's axis extent."""
    key = (domain, int(nx))
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = MeridianGrid(domain, int(nx))
    return _GRID_CACHE[key]


class MeridianGrid:
    """Square-cell node grid on the meridian half-section of ``domain``."""

    def __init__(self, domain, nx=512):
        self.domain = domain
        self.N = domain.N
        xmin, xmax, rmax = domain.bounds()
        self.nx = nx
        h = (xmax - xmin) / nx
        self.h = h
        # one padding node on every open side keeps stencils inside the array
        self.x = xmin + h * np.arange(-1, nx + 2)
        nr = int(math.ceil(rmax / h - 1e-9))
        self.rho = h * np.arange(0, nr + 2)
        self.shape = (len(self.x), len(self.rho))
        X, Rr = np.meshgrid(self.x, self.rho, indexing="ij")
        self.X, self.R = X, Rr
        inside = np.asarray(domain.contains(X, Rr))
        self._setup(inside)

    # arms: (di, dj, which weight)
    _ARMS = ((1, 0), (-1, 0), (0, 1), (0, -1))

    def _boundary_fraction(self, i, j, di, dj):
        """Fraction along each arm where the boundary is crossed (bisection)."""
        x0, r0 = self.x[i], self.rho[j]
        x1, r1 = self.x[i + di], self.rho[j + dj]
        lo = np.zeros(len(i))
        hi = np.ones(len(i))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ins = np.asarray(self.domain.contains(x0 + mid * (x1 - x0), r0 + mid * (r1 - r0)))
            lo = np.where(ins, mid, lo)
            hi = np.where(ins, hi, mid)
        return 0.5 * (lo + hi)

    def _setup(self, inside):
        N, h = self.N, self.h
        nxp, nrp = self.shape
        rho = self.rho
        # cell weights W_j = (1/h) int rho^(N-2) over the cell, and face weights
        up = rho + 0.5 * h
        dn = np.maximum(rho - 0.5 * h, 0.0)
        self.W = (up ** (N - 1) - dn ** (N - 1)) / ((N - 1) * h)
        self.face_up = up ** (N - 2)
        self.face_dn = np.where(rho > 0, dn ** (N - 2), 0.0)

        arms = []
        fixed = np.zeros_like(inside)
        for di, dj in self._ARMS:
            ii, jj = np.nonzero(inside)
            if dj == -1:
                keep = jj > 0
                ii, jj = ii[keep], jj[keep]
            nb_in = inside[ii + di, jj + dj]
            cut = ~nb_in
            ic, jc = ii[cut], jj[cut]
            theta = self._boundary_fraction(ic, jc, di, dj)
            arms.append((di, dj, ic, jc, theta))
            fixed[ic[theta < _THETA_MIN], jc[theta < _THETA_MIN]] = True

        self.inside = inside
        self.fixed = fixed                  # nodes on the boundary to round-off
        active = inside & ~fixed
        self.active = active
        idx = -np.ones(self.shape, dtype=np.int64)
        idx[active] = np.arange(int(active.sum()))
        self.index = idx
        self.n = int(active.sum())

        rows, cols, vals = [], [], []
        diag = np.zeros(self.n)
        bnd_rows, bnd_coef, bnd_x, bnd_r = [], [], [], []
        fix_rows, fix_coef, fix_i, fix_j = [], [], [], []
        ii, jj = np.nonzero(active)
        me = idx[ii, jj]
        for di, dj in self._ARMS:
            if dj == 0:
                coef = self.W[jj]
            elif dj == 1:
                coef = self.face_up[jj]
            else:
                coef = self.face_dn[jj]
            sel = coef > 0
            i2, j2, c2, m2 = ii[sel] + di, jj[sel] + dj, coef[sel], me[sel]
            nb_active = active[i2, j2]
            nb_fixed = fixed[i2, j2]
            nb_in = inside[i2, j2]
            # neighbour is an unknown
            s = nb_active
            rows.append(m2[s]); cols.append(idx[i2[s], j2[s]]); vals.append(-c2[s])
            np.add.at(diag, m2[s], c2[s])
            # neighbour pinned to the boundary value
            s = nb_in & nb_fixed
            fix_rows.append(m2[s]); fix_coef.append(c2[s])
            fix_i.append(i2[s]); fix_j.append(j2[s])
            np.add.at(diag, m2[s], c2[s])
        for di, dj, ic, jc, theta in arms:
            ok = active[ic, jc]
            ic, jc, theta = ic[ok], jc[ok], theta[ok]
            if dj == 0:
                coef = self.W[jc]
            elif dj == 1:
                coef = self.face_up[jc]
            else:
                coef = self.face_dn[jc]
            c = coef / theta
            m = idx[ic, jc]
            np.add.at(diag, m, c)
            bnd_rows.append(m); bnd_coef.append(c)
            bnd_x.append(self.x[ic] + theta * di * h)
            bnd_r.append(self.rho[jc] + theta * dj * h)
        rows.append(np.arange(self.n)); cols.append(np.arange(self.n)); vals.append(diag)
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n, self.n))
        self.A = A
        self._bnd = (np.concatenate(bnd_rows), np.concatenate(bnd_coef),
                     np.concatenate(bnd_x), np.concatenate(bnd_r))
        self._fix = (np.concatenate(fix_rows), np.concatenate(fix_coef),
                     np.concatenate(fix_i), np.concatenate(fix_j))
        self.boundary_points = (self._bnd[2], self._bnd[3])

    @cached_property
    def _lu(self):
        return splu(self.A.tocsc())

    def rhs_vector(self, f, g):
        """Right-hand side for ``-Lap u = f`` in the domain, ``u = g`` on the boundary."""
        h2 = self.h**2
        ii, jj = np.nonzero(self.active)
        b = self.W[jj] * h2 * f[ii, jj]
        rows, coef, xb, rb = self._bnd
        gb = _eval_boundary(g, xb, rb)
        np.add.at(b, rows, coef * gb)
        frows, fcoef, fi, fj = self._fix
        gf = _eval_boundary(g, self.x[fi], self.rho[fj])
        np.add.at(b, frows, fcoef * gf)
        return b

    def solve(self, f, g, method="lu", tol=1e-8, maxiter=50_000):
        """Solve and return nodal values (NaN outside) plus the relative residual."""
        if callable(f):
            f = f(self.X, self.R)
        f = np.broadcast_to(np.asarray(f, dtype=float), self.shape)
        f = np.where(self.inside, f, 0.0)
        b = self.rhs_vector(f, g)
        if method == "lu":
            u = self._lu.solve(b)
        elif method == "cg":
            dinv = 1.0 / self.A.diagonal()
            M = sp.diags(dinv)
            u, info = cg(self.A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
            if info != 0:
                raise NotConverged(f"conjugate gradient stopped after {maxiter} iterations")
        else:
            raise ValueError(f"unknown solver method {method!r}")
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(self.A @ u - b) / bn) if bn > 0 else 0.0
        if res > tol:
            raise NotConverged(f"relative residual {res:.3e} above {tol:g}")
        out = np.full(self.shape, np.nan)
        out[self.active] = u
        if np.any(self.fixed):
            out[self.fixed] = _eval_boundary(g, self.X[self.fixed], self.R[self.fixed])
        return out, res


def _eval_boundary(g, x, r):
    if callable(g):
        return np.asarray(g(x, r), dtype=float) * np.ones_like(x)
    return np.full_like(x, float(g))


# -- fields --------------------------------------------------------------------

@dataclass
class MeridianField:
    grid: MeridianGrid
    values: np.ndarray
    source_points: tuple = ()
    singular_coefficients: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x, rho=0.0):
        return _biquadratic(self.grid, self.values, x, rho)

    def axis_slice(self):
        """Axis nodes inside the domain and the field values there."""
        sel = self.grid.inside[:, 0]
        return self.grid.x[sel], self.values[sel, 0]


def _biquadratic(grid, values, x, rho=0.0):
    """Biquadratic interpolation on the 3x3 node block around ``(x, rho)``.

    The axis row is interpolated with the even reflection ``u(-rho) = u(rho)``.
    Falls back to the nearest available nodes if the block leaves the domain.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), x.shape)
    h = grid.h
    out = np.empty(x.shape)
    for k, (xv, rv) in enumerate(zip(x, rho)):
        i = int(round((xv - grid.x[0]) / h))
        j = int(round(rv / h))
        i = min(max(i, 1), len(grid.x) - 2)
        j = min(max(j, 0), len(grid.rho) - 2)
        js = [abs(j - 1), j, j + 1]
        block = values[i - 1:i + 2][:, js]
        if np.any(~np.isfinite(block)):
            raise ValueError(f"interpolation stencil at ({xv:g}, {rv:g}) leaves the domain")
        sx = (xv - grid.x[i]) / h
        sr = (rv - grid.rho[j]) / h
        wx = np.array([0.5 * sx * (sx - 1), 1 - sx * sx, 0.5 * sx * (sx + 1)])
        wr = np.array([0.5 * sr * (sr - 1), 1 - sr * sr, 0.5 * sr * (sr + 1)])
        out[k] = wx @ block @ wr
    return out if out.size > 1 else float(out[0])


def solve_meridian_poisson(domain, rhs, boundary_data=0.0, nx=512, method="lu"):
    """Solve ``-Lap u = rhs`` with Dirichlet data on the meridian grid.

    ``rhs`` is a callable ``(x, rho)``, a nodal array, or a MeridianField;
    ``boundary_data`` is a constant or a callable ``(x, rho)``.
    """
    if isinstance(rhs, MeridianField):
        grid = rhs.grid
        rhs = np.nan_to_num(rhs.values)
    else:
        grid = meridian_grid(domain, nx)
    u, res = grid.solve(rhs, boundary_data, method=method)
    return MeridianField(grid, u, diagnostics={"relative_residual": res, "method": method})


def _axis_coordinate(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return float(y)
    if np.any(y[1:] != 0):
        raise Unsupported("only points on the symmetry axis are supported")
    return float(y[0])


def _check_interior(domain, y):
    if not domain.contains(np.array(y), np.array(0.0)):
        raise ValueError(f"axis point {y:g} is not inside the domain")


def regular_part_H(domain, y, nx=512, method="lu"):
    """Meridian field of ``H(., y)``: harmonic, equal to ``gamma_N |x-y|^(2-N)`` on the boundary."""
    y = _axis_coordinate(y)
    _check_interior(domain, y)
    N = domain.N
    g = gamma_N(N)

    def data(x, r):
        return g * ((x - y) ** 2 + r**2) ** ((2.0 - N) / 2.0)

    fld = solve_meridian_poisson(domain, 0.0, data, nx=nx, method=method)
    fld.source_points = (y,)
    return fld


def robin(domain, y, nx=512, method="lu"):
    """Robin function ``H(y, y)``; closed form on balls."""
    y = _axis_coordinate(y)
    if isinstance(domain, Ball):
        return float(ball_robin(y, domain))
    if isinstance(domain, DisjointUnion):
        i = domain.lobe_of(y)
        if i is None:
            raise ValueError(f"axis point {y:g} is not inside the domain")
        return float(ball_robin(y, domain.balls[i]))
    return float(regular_part_H(domain, y, nx, method)(y))


def hhat(domain, y, exps, nx=512, method="lu"):
    """Harmonic field with boundary data ``|x-y|^-gamma_u``."""
    y = _axis_coordinate(y)
    _check_interior(domain, y)
    gam = exps.gamma_u

    def data(x, r):
        return ((x - y) ** 2 + r**2) ** (-gam / 2.0)

    fld = solve_meridian_poisson(domain, 0.0, data, nx=nx, method=method)
    fld.source_points = (y,)
    return fld


# -- the p-power objects -------------------------------------------------------

@dataclass
class HTildeResult:
    values: np.ndarray             # H~_{d,xi}(xi_i)
    tau: float | None              # H~ at the single source when k = 1
    remainder: MeridianField       # smooth part W of G~
    singular: dict                 # per-source amplitudes of the subtracted terms
    diagnostics: dict


def _one_minus_pow(x, p):
    """``(1-x)^p - 1 + p x`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = xs**2 * (p * (p - 1) / 2 - xs * p * (p - 1) * (p - 2) / 6
                          + xs**2 * p * (p - 1) * (p - 2) * (p - 3) / 24)
    xb = x[~small]
    out[~small] = np.maximum(1.0 - xb, 0.0) ** p - 1.0 + p * xb
    return out


def _green_data(domain, grid, xi, nx, method):
    """Per-source nodal H(., xi_j), and evaluators of H(xi_i, xi_j)."""
    X, R = grid.X, grid.R
    Hn, Hpt = [], []
    for s in xi:
        if isinstance(domain, Ball):
            Hn.append(_ball_H_meridian(X, R, s, domain))
            Hpt.append(lambda z, s=s: float(_ball_H_meridian(np.array(z), np.array(0.0),
                                                             s, domain)))
        else:
            fld = regular_part_H(domain, s, nx=nx, method=method)
            Hn.append(fld.values)
            Hpt.append(lambda z, fld=fld: float(fld(z)))
    return Hn, Hpt


def _ball_H_meridian(X, R, s, ball):
    N = ball.N
    xc = X - ball.center
    sc = s - ball.center
    R2 = ball.radius**2
    inner = (xc**2 + R**2) * sc**2 / R2**2 - 2.0 * xc * sc / R2 + 1.0
    return gamma_N(N) * ball.radius ** (2 - N) * inner ** ((2.0 - N) / 2.0)


def htilde_config(domain, d, xi, exps, nx=512, method="lu"):
    """``H~_{d,xi}(xi_i)`` by singularity subtraction and one meridian solve.

    ``G~`` solves ``-Lap G~ = (sum_j d_j^a G(., xi_j))^p`` (``a = N/(q+1)``)
    with zero boundary data.  Around each source the two leading singular
    terms are removed analytically,

        S1_j = d_j^(ap) gamma~ |x-xi_j|^-gamma_u,
        S2_j = c_j |x-xi_j|^(2-sigma),   sigma = (N-2)(p-1),

    the second one absorbing the cross term of the binomial expansion, so the
    remainder problem has a Hoelder continuous right-hand side.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    xi = [_axis_coordinate(z) for z in np.atleast_1d(xi)]
    if len(d) != len(xi):
        raise ValueError("d and xi must have the same length")
    if np.any(d <= 0):
        raise ValueError("all d_i must be positive")
    N, p, q = exps.N, exps.p, exps.q
    if N != domain.N:
        raise ValueError(f"domain dimension {domain.N} differs from exponents N={N}")
    for z in xi:
        _check_interior(domain, z)

    if isinstance(domain, DisjointUnion):
        return _htilde_disjoint(domain, d, xi, exps, nx, method)

    grid = meridian_grid(domain, nx)
    h = grid.h
    for i in range(len(xi)):
        for j in range(i):
            if abs(xi[i] - xi[j]) < 8 * h:
                raise SingularOverlap(f"sources {xi[j]:g} and {xi[i]:g} are closer than "
                                      f"8 grid cells ({8 * h:.3g})")
    k = len(xi)
    a = N / (q + 1.0)
    gN = gamma_N(N)
    gam = exps.gamma_u
    sigma = (N - 2.0) * (p - 1.0)
    gt = gN**p / (gam * (N - 2.0 - gam))
    A = d**a * gN
    X, R = grid.X, grid.R

    Hn, Hpt = _green_data(domain, grid, xi, nx, method)
    dist = [np.sqrt((X - s) ** 2 + R**2) for s in xi]

    def G_nodes(j):
        with np.errstate(divide="ignore"):
            return gN * dist[j] ** (2.0 - N) - Hn[j]

    # K_i at its own source: d_i^a H(xi_i, xi_i) - sum_{j!=i} d_j^a G(xi_i, xi_j)
    K0 = np.empty(k)
    for i in range(k):
        val = d[i] ** a * Hpt[i](xi[i])
        for j in range(k):
            if j != i:
                rij = abs(xi[i] - xi[j])
                val -= d[j] ** a * (gN * rij ** (2.0 - N) - Hpt[j](xi[i]))
        K0[i] = val
    c2 = p * A ** (p - 1.0) * K0 / ((2.0 - sigma) * (N - sigma))
    amp1 = d ** (a * p) * gt

    def S1(j, rr):
        return amp1[j] * rr ** (-gam)

    def S2(j, rr):
        return c2[j] * rr ** (2.0 - sigma)

    nearest = np.argmin(np.stack(dist), axis=0) if k > 1 else np.zeros(grid.shape, int)
    rhs = np.zeros(grid.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(k):
            sel = grid.inside & (nearest == i)
            r = dist[i][sel]
            Ki = d[i] ** a * Hn[i][sel]
            for j in range(k):
                if j != i:
                    Ki = Ki - d[j] ** a * G_nodes(j)[sel]
            x = Ki * r ** (N - 2.0) / A[i]
            val = (A[i] ** p * r ** (-(N - 2.0) * p) * _one_minus_pow(x, p)
                   - p * A[i] ** (p - 1.0) * r ** (-sigma) * (Ki - K0[i]))
            val = np.where(r > 0, val, 0.0)
            for j in range(k):
                if j != i:
                    rj = dist[j][sel]
                    val = val - (amp1[j] * (N - 2.0 - gam) * gam * rj ** (-gam - 2.0)
                                 - p * A[j] ** (p - 1.0) * K0[j] * rj ** (-sigma))
            rhs[sel] = val

    def boundary(xb, rb):
        tot = 0.0
        for j in range(k):
            rr = np.sqrt((xb - xi[j]) ** 2 + rb**2)
            tot = tot - S1(j, rr) - S2(j, rr)
        return tot

    W, res = grid.solve(rhs, boundary, method=method)
    Wf = MeridianField(grid, W, source_points=tuple(xi),
                       singular_coefficients={"S1": amp1.tolist(), "S2": c2.tolist()},
                       diagnostics={"relative_residual": res, "method": method, "h": h})
    vals = np.empty(k)
    for i in range(k):
        v = -Wf(xi[i])
        for j in range(k):
            if j != i:
                v -= S2(j, abs(xi[i] - xi[j]))
        vals[i] = v
    return HTildeResult(values=vals, tau=float(vals[0]) if k == 1 else None,
                        remainder=Wf, singular={"S1": amp1, "S2": c2, "K": K0},
                        diagnostics={"relative_residual": res, "h": h, "nx": nx})


def _htilde_disjoint(domain, d, xi, exps, nx, method):
    """Green functions of disjoint pieces do not interact: solve lobe by lobe."""
    vals = np.empty(len(xi))
    lobes = [domain.lobe_of(z) for z in xi]
    parts = {}
    for li in sorted(set(lobes)):
        members = [i for i, l in enumerate(lobes) if l == li]
        res = htilde_config(domain.balls[li], d[members], [xi[i] for i in members],
                            exps, nx, method)
        vals[members] = res.values
        parts[li] = res
    first = parts[lobes[0]]
    return HTildeResult(values=vals, tau=float(vals[0]) if len(xi) == 1 else None,
                        remainder=first.remainder, singular={"per_lobe": parts},
                        diagnostics={"lobes": lobes, "nx": nx})


class TauTable:
    """``tau~(xi) = H~_{1,xi}(xi)`` sampled along an axis interval, cubic spline in between."""

    def __init__(self, xs, values, h):
        self.xs = np.asarray(xs, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.h = h
        self._spline = CubicSpline(self.xs, self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.xs[0] - 1e-12) or np.any(x > self.xs[-1] + 1e-12):
            raise ValueError("tau~ requested outside the tabulated interval")
        return self._spline(x)

    def derivative(self, x):
        return self._spline(np.asarray(x, dtype=float), 1)

    @property
    def interval(self):
        return float(self.xs[0]), float(self.xs[-1])


@lru_cache(maxsize=16)
def _unit_tau_values(exps, half, n_points, nx, method):
    unit = Ball(1.0, 0.0, exps.N)
    s = np.linspace(-half, half, n_points)
    vals = np.array([htilde_config(unit, [1.0], [z], exps, nx, method).tau for z in s])
    vals.setflags(write=False)      # shared between tables
    return vals


def tau_table(ball, exps, margin, n_points=33, nx=512, method="lu"):
    """Tabulate ``tau~`` of a ball along the axis, ``margin`` away from the boundary.

    ``tau~`` of a ball of radius ``R`` equals ``R^-gamma_u`` times that of the
    unit ball at the rescaled point, so only the unit ball is ever solved.
    """
    R = ball.radius
    unit = Ball(1.0, 0.0, ball.N)
    half = 1.0 - margin / R
    if half <= 0:
        raise ValueError("margin leaves no admissible interval")
    s = np.linspace(-half, half, n_points)
    vals = _unit_tau_values(exps, half, n_points, nx, method)
    grid = meridian_grid(unit, nx)
    return TauTable(ball.center + R * s, R ** (-exps.gamma_u) * vals, R * grid.h)


def tau_center_reference(exps, R=1.0, dps=30):
    """``tau~`` at the centre of a ball from a one-dimensional radial integral.

    For a centred source on ``B(0, R)`` the problem is radial, and with the
    subtracted singular term ``gamma~ r^-gamma_u`` the regular part at 0 is

        gamma_N^p R^-gamma/(gamma (N-2-gamma)) + R^(2-N) M(R)/(N-2)
            - (1/(N-2)) int_0^R s f_r(s) ds,

    where ``f_r = G^p - (gamma_N s^(2-N))^p`` and ``M(R) = int_0^R s^(N-1) f_r``.
    Evaluated with mpmath at ``dps`` digits; ``f_r`` is formed with
    ``expm1``/``log1p`` to avoid cancellation.
    """
    import mpmath as mp
    with mp.workdps(dps):
        N, p, R = mp.mpf(exps.N), mp.mpf(exps.p), mp.mpf(R)
        gN = mp.gamma(N / 2) / ((N - 2) * 2 * mp.pi ** (N / 2))
        g = (N - 2) * p - 2

        def fr(s):
            return gN**p * s ** (-(N - 2) * p) * mp.expm1(p * mp.log1p(-(s / R) ** (N - 2)))

        inner = mp.quad(lambda s: s * fr(s), [0, R / 2, R])
        mass = mp.quad(lambda s: s ** (N - 1) * fr(s), [0, R / 2, R])
        val = gN**p * R ** (-g) / (g * (N - 2 - g)) + R ** (2 - N) * mass / (N - 2) \
            - inner / (N - 2)
        return float(val)



def ball_H_error(ball, y, nx, method="lu"):
    """Largest nodal error of the meridian ``H(., y)`` against the image formula."""
    fld = regular_part_H(ball, y, nx, method)
    g = fld.grid
    sel = g.inside
    X, Rr = g.X[sel], g.R[sel]
    pts = np.zeros((X.size, ball.N))
    pts[:, 0] = X
    pts[:, 1] = Rr
    exact = ball_H(pts, _as_point(y, ball.N), ball)
    return float(np.max(np.abs(fld.values[sel] - exact)))


def observed_orders(nx_list, errors):
    """``log2``-type orders between successive resolutions."""
    nx = np.asarray(nx_list, dtype=float)
    e = np.asarray(errors, dtype=float)
    return (np.log(e[:-1] / e[1:]) / np.log(nx[1:] / nx[:-1])).tolist()


def symmetry_residual(ball, n_pairs=200, seed=0):
    """``max |G(x,y) - G(y,x)| / |G(x,y)|`` over random interior pairs."""
    rng = np.random.default_rng(seed)
    N = ball.N

    def draw():
        z = rng.normal(size=(n_pairs, N))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rad = ball.radius * rng.uniform(0.0, 0.95, size=(n_pairs, 1)) ** (1.0 / N)
        c = _as_point(ball.center, N)
        return c + rad * z

    x, y = draw(), draw()
    gxy = ball_green(x, y, ball)
    gyx = ball_green(y, x, ball)
    return float(np.max(np.abs(gxy - gyx) / np.abs(gxy)))

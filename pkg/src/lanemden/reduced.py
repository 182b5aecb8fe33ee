"""Reduced functionals of the energy expansion and their critical points.

With ``mu`` tied to ``eps`` by ``eps = mu^gamma_u |ln mu|^2`` the two
``d``-dependent terms of ``G_0`` carry the same scale ``mu^gamma_u`` and

    G_0 = -C0 eps/|ln mu| - mu^gamma_u * Gt0(d, xi) + (dropped terms),
    Gt0 = C1 sum |ln d_i| - [C2 sum d_i^a H~_{d,xi}(xi_i)
                             - C4 sum_{i!=j} d_i^(2a) d_j^(a(p-1)) |xi_i-xi_j|^-gamma_u],

with ``a = N/(q+1)``, ``C0 = k K/N``, ``C1 = K/N``, ``K = (p+1)A1 + (q+1)A1~``,
``C2 = (b/gamma_N)^p A2`` and ``C4 = a_Np A4``.

Sign of ``K``: integrating by parts along the dilation gives
``A1 = -N/(q+1)^2 int U^(q+1) < 0`` and likewise ``A1~ < 0``, opposite to the
positivity that the existence argument relies on.  ``sign_convention``
selects between the constants as computed (``"computed"``) and with the
asserted positive signs (``"asserted"``, default); reports carry both.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .bubble import gamma_N
from .errors import Boundary, OutOfRange
from .greens import Ball, DisjointUnion, Dumbbell, htilde_config, meridian_grid, tau_table

__all__ = [
    "eps_from_mu", "mu_from_eps", "eps_bar", "Configuration", "ReducedConstants",
    "GreensHandle", "eval_G0", "eval_Gh", "slow_functional", "enumerate_lobe_subsets",
    "MinimumResult", "ReducedReport", "minimize", "minimize_seed", "count_distinct",
    "remainder_magnitude",
]


# -- scaling law ---------------------------------------------------------------

def eps_from_mu(mu, exps):
    return mu**exps.gamma_u * math.log(mu) ** 2


def eps_bar(exps):
    """Largest ``eps`` on the small-``mu`` branch, attained at ``mu = exp(-2/gamma_u)``."""
    return 4.0 / (exps.gamma_u**2 * math.e**2)


def mu_from_eps(eps, exps, tol=1e-14, maxiter=100):
    """Small-``mu`` solution of ``eps = mu^gamma_u (ln mu)^2``.

    Newton in ``t = ln mu`` on ``phi(t) = gamma t + 2 ln(-t) = ln eps``,
    safeguarded by the bracket ``t < -2/gamma`` where ``phi`` is increasing.
    """
    g = exps.gamma_u
    ebar = eps_bar(exps)
    if not 0 < eps <= ebar:
        raise OutOfRange(f"epsilon={eps:g} outside (0, {ebar:.6g}]: no small-mu branch")
    t_star = -2.0 / g
    if eps == ebar:
        return math.exp(t_star)
    target = math.log(eps)

    def phi(t):
        return g * t + 2.0 * math.log(-t)

    hi = t_star
    lo = t_star - 1.0
    while phi(lo) > target:
        lo = 2.0 * lo
    t = lo
    for _ in range(maxiter):
        f = phi(t) - target
        if f > 0:
            hi = min(hi, t)
        else:
            lo = max(lo, t)
        step = f / (g + 2.0 / t)
        t_new = t - step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= tol * abs(t):
            t = t_new
            break
        t = t_new
    if t < math.log(np.finfo(float).tiny):
        raise OutOfRange(f"epsilon={eps:g} needs mu=exp({t:.6g}), below double precision")
    mu = math.exp(t)
    if abs(eps_from_mu(mu, exps) - eps) > 1e-12 * eps:
        raise OutOfRange(f"scaling-law inversion did not converge for epsilon={eps:g}")
    return mu


# -- configurations ------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    d: tuple
    xi: tuple
    delta1: float = 0.1
    delta2: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(float(v) for v in np.atleast_1d(self.d)))
        object.__setattr__(self, "xi", tuple(float(v) for v in np.atleast_1d(self.xi)))
        if len(self.d) != len(self.xi):
            raise ValueError("d and xi must have the same length")

    @property
    def k(self):
        return len(self.d)

    def violations(self, domain):
        """Human-readable list of the configuration-space constraints that fail."""
        out = []
        for i, (di, zi) in enumerate(zip(self.d, self.xi)):
            if not self.delta1 < di < 1.0 / self.delta1:
                out.append(f"d[{i}]={di:g} outside ({self.delta1:g}, {1 / self.delta1:g})")
            if domain.boundary_distance(zi) < self.delta2:
                out.append(f"xi[{i}]={zi:g} closer than {self.delta2:g} to the boundary")
        for i, j in itertools.combinations(range(self.k), 2):
            if abs(self.xi[i] - self.xi[j]) < self.delta2:
                out.append(f"xi[{i}] and xi[{j}] closer than {self.delta2:g}")
        return out


# -- constants entering the functionals ---------------------------------------

@dataclass(frozen=True)
class ReducedConstants:
    exps: object
    A1: float
    A1_tilde: float
    A2: float
    A3: float
    A4: float
    a_Np: float
    b_Np: float
    sign_convention: str = "asserted"

    def __post_init__(self):
        if self.sign_convention not in ("asserted", "computed"):
            raise ValueError("sign_convention must be 'asserted' or 'computed'")

    @classmethod
    def from_parts(cls, constants, tails, exps, sign_convention="asserted"):
        return cls(exps, constants.A1, constants.A1_tilde, constants.A2, constants.A3,
                   constants.A4, tails.a_Np, tails.b_Np, sign_convention)

    def _K(self, convention):
        p, q = self.exps.p, self.exps.q
        A1, A1t = self.A1, self.A1_tilde
        if convention == "asserted":
            A1, A1t = abs(A1), abs(A1t)
        return (p + 1.0) * A1 + (q + 1.0) * A1t

    @property
    def K(self):
        return self._K(self.sign_convention)

    @property
    def a(self):
        return self.exps.N / (self.exps.q + 1.0)

    @property
    def C1(self):
        return self.K / self.exps.N

    @property
    def C2(self):
        return (self.b_Np / gamma_N(self.exps.N)) ** self.exps.p * self.A2

    @property
    def C3(self):
        return (self.b_Np / gamma_N(self.exps.N)) ** self.exps.p * self.A3

    @property
    def C4(self):
        return self.a_Np * self.A4

    def normalizations(self, k=1):
        """Both sign readings of the coefficients, for reports."""
        out = {}
        for conv in ("asserted", "computed"):
            K = self._K(conv)
            out[conv] = {"C0": k * K / self.exps.N, "C1": K / self.exps.N,
                         "C2": self.C2, "C3": self.C3, "C4": self.C4}
        return out


# -- Green handle --------------------------------------------------------------

@lru_cache(maxsize=32)
def _cached_table(ball, exps, margin, n_points, nx, method):
    return tau_table(ball, exps, margin, n_points, nx, method)


class GreensHandle:
    """Access to ``H~`` and ``tau~`` on a domain, with cached axis tables.

    For a single peak ``H~_{d,xi}(xi) = d^(ap) tau~(xi)`` exactly (the source
    scales by ``d^a``), so one table of ``tau~`` serves every ``d``.  On a
    DisjointUnion peaks in different lobes do not interact.
    """

    def __init__(self, domain, exps, nx=512, method="lu", n_table=33, margin=0.1):
        if domain.N != exps.N:
            raise ValueError("domain and exponents disagree on N")
        self.domain = domain
        self.exps = exps
        self.nx = nx
        self.method = method
        self.n_table = n_table
        self.margin = margin

    @property
    def h(self):
        if isinstance(self.domain, DisjointUnion):
            return max(b.radius * meridian_grid(Ball(1.0, 0.0, b.N), self.nx).h
                       for b in self.domain.balls)
        return meridian_grid(self.domain, self.nx).h

    def lobes(self):
        if isinstance(self.domain, Ball):
            return (self.domain,)
        return self.domain.balls

    def lobe_of(self, x):
        if isinstance(self.domain, Ball):
            return 0 if abs(x - self.domain.center) < self.domain.radius else None
        return self.domain.lobe_of(x)

    def table(self, lobe):
        b = self.lobes()[lobe]
        if isinstance(self.domain, Dumbbell):
            return self._dumbbell_table(lobe)
        return _cached_table(b, self.exps, self.margin, self.n_table, self.nx, self.method)

    def _dumbbell_table(self, lobe):
        key = ("dumbbell", lobe)
        cache = self.__dict__.setdefault("_tables", {})
        if key not in cache:
            from .greens import TauTable
            b = self.domain.balls[lobe]
            xs = np.linspace(b.center - b.radius + self.margin,
                             b.center + b.radius - self.margin, self.n_table)
            vals = [htilde_config(self.domain, [1.0], [z], self.exps, self.nx,
                                  self.method).tau for z in xs]
            cache[key] = TauTable(xs, vals, meridian_grid(self.domain, self.nx).h)
        return cache[key]

    def tau(self, x):
        """``tau~(x) = H~_{1,x}(x)`` for a single unit peak."""
        lobe = self.lobe_of(x)
        if lobe is None:
            raise ValueError(f"axis point {x:g} outside the domain")
        return float(self.table(lobe)(x))

    def dtau(self, x):
        """Axial derivative of ``tau~`` by central differences of two meridian solves."""
        h = self.h
        dom = self.domain
        if isinstance(dom, DisjointUnion):
            dom = dom.balls[dom.lobe_of(x)]
        up = htilde_config(dom, [1.0], [x + h], self.exps, self.nx, self.method).tau
        dn = htilde_config(dom, [1.0], [x - h], self.exps, self.nx, self.method).tau
        return (up - dn) / (2 * h)

    def htilde(self, d, xi):
        """``H~_{d,xi}(xi_i)`` for every peak."""
        d = np.asarray(d, dtype=float)
        xi = np.asarray(xi, dtype=float)
        ap = self.exps.N * self.exps.p / (self.exps.q + 1.0)
        lobes = [self.lobe_of(z) for z in xi]
        if any(l is None for l in lobes):
            raise ValueError("a concentration point lies outside the domain")
        out = np.empty(len(d))
        if isinstance(self.domain, DisjointUnion):
            groups = {}
            for i, l in enumerate(lobes):
                groups.setdefault(l, []).append(i)
            for l, idx in groups.items():
                if len(idx) == 1:
                    i = idx[0]
                    out[i] = d[i] ** ap * self.table(l)(xi[i])
                else:
                    out[idx] = htilde_config(self.domain.balls[l], d[idx], xi[idx],
                                             self.exps, self.nx, self.method).values
            return out
        if len(d) == 1:
            return np.array([d[0] ** ap * self.tau(xi[0])])
        return htilde_config(self.domain, d, xi, self.exps, self.nx, self.method).values


# -- functionals ---------------------------------------------------------------

def _interaction(cfg, rc, domain):
    """``sum_{i!=j} d_i^(2a) d_j^(a(p-1)) |xi_i - xi_j|^-gamma_u``; absent across disjoint lobes."""
    a, p, g = rc.a, rc.exps.p, rc.exps.gamma_u
    tot = 0.0
    for i in range(cfg.k):
        for j in range(cfg.k):
            if i == j:
                continue
            if isinstance(domain, DisjointUnion) and \
                    domain.lobe_of(cfg.xi[i]) != domain.lobe_of(cfg.xi[j]):
                continue
            tot += (cfg.d[i] ** (2 * a) * cfg.d[j] ** (a * (p - 1.0))
                    * abs(cfg.xi[i] - cfg.xi[j]) ** (-g))
    return tot


def slow_functional(cfg, rc, greens):
    """``Gt0(d, xi)``: the ``eps``-free bracket of ``G_0`` (see module docstring)."""
    H = greens.htilde(cfg.d, cfg.xi)
    d = np.asarray(cfg.d)
    bracket = rc.C2 * np.sum(d**rc.a * H) - rc.C4 * _interaction(cfg, rc, greens.domain)
    return rc.C1 * float(np.sum(np.abs(np.log(d)))) - bracket


def remainder_magnitude(eps, mu, exps):
    """Size of the terms dropped from ``G_0`` (their modeled order, unit constants)."""
    N, q, p = exps.N, exps.q, exps.p
    g = exps.gamma_u
    L = abs(math.log(mu))
    return (mu ** (g + 1.0)
            + eps * math.log(L) * (mu ** (N * q / (q + 1)) + mu ** (N * p / (q + 1))) * eps / L)


def eval_G0(cfg, eps, rc, greens):
    """``G_0`` at ``cfg`` with ``mu = mu_from_eps(eps)``; higher-order terms dropped.

    Returns a dict with the value, its three parts, and ``remainder``, the
    modeled size of what was dropped.
    """
    exps = rc.exps
    mu = mu_from_eps(eps, exps)
    L = abs(math.log(mu))
    N = exps.N
    d = np.asarray(cfg.d)
    K = rc.K
    lead = -(cfg.k / N) * (eps / L) * K
    logd = -(1.0 / N) * (eps / L**2) * K * float(np.sum(np.abs(np.log(d))))
    H = greens.htilde(cfg.d, cfg.xi)
    green = mu**exps.gamma_u * (rc.C2 * float(np.sum(d**rc.a * H))
                                - rc.C4 * _interaction(cfg, rc, greens.domain))
    value = lead + logd + green
    rem = remainder_magnitude(eps, mu, exps)
    slow = abs(logd) + abs(green)
    return {"value": value, "mu": mu, "leading": lead, "log_d": logd, "green": green,
            "remainder": rem, "remainder_dominates": bool(rem > 0.1 * slow) if slow else True,
            "H_tilde": H.tolist()}


def eval_Gh(cfg, eps, rc, greens):
    """Axial ``G_h`` contribution of each peak: ``C3 mu^(gamma+1) d_i^(a+1) dtau~(xi_i)``.

    Transverse components vanish by axial symmetry.  ``rho~`` is read as the
    single-peak map ``tau~``.
    """
    mu = mu_from_eps(eps, rc.exps)
    pref = rc.C3 * mu ** (rc.exps.gamma_u + 1.0)
    return np.array([pref * di ** (rc.a + 1.0) * greens.dtau(zi)
                     for di, zi in zip(cfg.d, cfg.xi)])


# -- critical points -----------------------------------------------------------

def enumerate_lobe_subsets(domain_or_l, k):
    """One seed per k-subset of lobes: ``xi_i`` at lobe centres, ``d_i = 1``.

    Accepts a lobe count or a domain with lobes.
    """
    if isinstance(domain_or_l, int):
        l = domain_or_l
        centers = [float(i) for i in range(l)]
    else:
        balls = domain_or_l.balls if hasattr(domain_or_l, "balls") else (domain_or_l,)
        l = len(balls)
        centers = [b.center for b in balls]
    if not 1 <= k <= l:
        raise ValueError(f"need 1 <= k <= l, got k={k}, l={l}")
    return [{"lobes": sub, "d": (1.0,) * k, "xi": tuple(centers[i] for i in sub)}
            for sub in itertools.combinations(range(l), k)]


@dataclass
class MinimumResult:
    d: tuple
    xi: tuple
    value: float
    interior: bool
    gradient: tuple
    converged: bool
    iterations: int
    lobes: tuple = ()
    pinned: list = field(default_factory=list)

    def as_dict(self):
        return {"d": list(self.d), "xi": list(self.xi), "value": self.value,
                "interior": self.interior, "gradient": list(self.gradient),
                "converged": self.converged, "iterations": self.iterations,
                "lobes": list(self.lobes), "pinned": self.pinned}


def _axis_box(greens, x0, delta2):
    lobe = greens.lobe_of(x0)
    b = greens.lobes()[lobe]
    lo, hi = b.center - b.radius + delta2, b.center + b.radius - delta2
    t_lo, t_hi = greens.table(lobe).interval
    return max(lo, t_lo), min(hi, t_hi)


def minimize_seed(seed, rc, greens, delta1=0.1, delta2=0.1, tol=1e-10, on_boundary="raise"):
    """Nelder-Mead on ``Gt0`` in ``(ln d_i, xi_i)`` with projection onto the box.

    Peaks stay in the lobe of their seed.  The functional is divided by
    ``|C1|`` (this does not move minimisers) so tolerances and the reported
    gradient are on a unit scale.
    """
    d0 = np.asarray(seed["d"], dtype=float)
    x0 = np.asarray(seed["xi"], dtype=float)
    k = len(d0)
    scale = abs(rc.C1) if rc.C1 != 0 else 1.0
    boxes = [_axis_box(greens, z, delta2) for z in x0]
    lo = np.array([math.log(delta1)] * k + [b[0] for b in boxes])
    hi = np.array([-math.log(delta1)] * k + [b[1] for b in boxes])

    def unpack(z):
        z = np.clip(z, lo, hi)
        return np.exp(z[:k]), z[k:]

    def f(z):
        d, xi = unpack(z)
        return slow_functional(Configuration(d, xi, delta1, delta2), rc, greens) / scale

    z0 = np.concatenate([np.log(d0), x0])
    steps = np.concatenate([np.full(k, 0.5), [0.25 * (b[1] - b[0]) for b in boxes]])
    simplex = [np.clip(z0, lo, hi)]
    for i in range(2 * k):
        v = simplex[0].copy()
        v[i] = v[i] + steps[i] if v[i] + steps[i] <= hi[i] else v[i] - steps[i]
        simplex.append(v)
    res = _scipy_minimize(f, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                          options={"initial_simplex": np.array(simplex), "xatol": tol,
                                   "fatol": tol * 1e-3, "maxiter": 200 * 2 * k,
                                   "maxfev": 400 * 2 * k, "adaptive": True})
    z = np.clip(res.x, lo, hi)
    # restart once from the result; simplex methods can stall on kinks
    res2 = _scipy_minimize(f, z, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                           options={"xatol": tol, "fatol": tol * 1e-3,
                                    "maxiter": 200 * 2 * k, "adaptive": True})
    if res2.fun <= res.fun:
        res, z = res2, np.clip(res2.x, lo, hi)
    span = hi - lo
    pinned = [i for i in range(2 * k) if min(z[i] - lo[i], hi[i] - z[i]) < 1e-6 * span[i]]
    grad = []
    for i in range(2 * k):
        step = 1e-5 * max(span[i], 1.0)
        e = np.zeros(2 * k)
        e[i] = step
        if z[i] - step < lo[i] or z[i] + step > hi[i]:
            grad.append(math.nan)
        else:
            grad.append((f(z + e) - f(z - e)) / (2 * step))
    d, xi = unpack(z)
    out = MinimumResult(d=tuple(d), xi=tuple(xi), value=float(res.fun) * scale,
                        interior=not pinned, gradient=tuple(grad),
                        converged=bool(res.success), iterations=int(res.nit),
                        lobes=tuple(seed.get("lobes", ())), pinned=pinned)
    if pinned and on_boundary == "raise":
        names = [f"d[{i}]" if i < k else f"xi[{i - k}]" for i in pinned]
        raise Boundary(f"minimiser pinned to the configuration-space boundary in "
                       f"{', '.join(names)}; delta1/delta2 are not small enough")
    return out


def count_distinct(minima, tol):
    """Number of clusters of interior minima closer than ``tol`` in ``(d, xi)``."""
    reps = []
    for m in minima:
        if not m.interior:
            continue
        order = np.argsort(m.xi)
        key = np.concatenate([np.array(m.d)[order], np.array(m.xi)[order]])
        if not any(len(r) == len(key) and np.max(np.abs(r - key)) < tol for r in reps):
            reps.append(key)
    return len(reps)


@dataclass
class ReducedReport:
    epsilon: list
    mu: list
    k: int
    minima: list
    distinct: int
    normalizations: dict
    sign_convention: str
    evaluations: list = field(default_factory=list)

    def as_dict(self):
        return {"epsilon": self.epsilon, "mu": self.mu, "k": self.k,
                "minima": [m.as_dict() for m in self.minima], "distinct": self.distinct,
                "normalizations": self.normalizations,
                "sign_convention": self.sign_convention, "evaluations": self.evaluations}


def minimize(domain, k, epsilon, seeds, rc, greens=None, delta1=0.1, delta2=0.1,
             on_boundary="raise"):
    """Locate minima of ``Gt0`` from every seed and evaluate ``G_0``, ``G_h`` there.

    ``epsilon`` may be a number or a list; ``Gt0`` itself does not depend on
    it, so minimisers are shared and only the reported ``G_0``, ``G_h`` and
    ``mu`` change.
    """
    if greens is None:
        greens = GreensHandle(domain, rc.exps)
    eps_list = [float(e) for e in np.atleast_1d(epsilon)]
    mus = [mu_from_eps(e, rc.exps) for e in eps_list]
    minima = [minimize_seed(s, rc, greens, delta1, delta2, on_boundary=on_boundary)
              for s in seeds]
    for m in minima:
        if len(m.d) != k:
            raise ValueError("seed size differs from k")
    evals = []
    for m in minima:
        cfg = Configuration(m.d, m.xi, delta1, delta2)
        evals.append([{"epsilon": e, **{kk: v for kk, v in eval_G0(cfg, e, rc, greens).items()
                                        if kk != "H_tilde"}} for e in eps_list])
    distinct = count_distinct(minima, 10 * greens.h)
    return ReducedReport(epsilon=eps_list, mu=mus, k=k, minima=minima, distinct=distinct,
                         normalizations=rc.normalizations(k),
                         sign_convention=rc.sign_convention, evaluations=evals)

"""Ground state of the critical Lane-Emden system in R^N.

The limit problem ``-Lap U = V^p, -Lap V = U^q`` with ``(p, q)`` on the
critical hyperbola has a unique positive radial ground state normalised by
``U(0) = 1``.  It has no closed form, so it is computed here by shooting on
``beta = V(0)``.

Forward shooting is only trustworthy up to a modest radius: any error excites
the constant (non-decaying) harmonic mode, whose relative weight grows like
``r^(N-2)``.  The profile is therefore assembled from two ODE solutions:

* an outward solution from the origin up to a matching radius ``r_match``;
* an inward solution from ``r_max`` started on the decaying tail manifold,
  which is the stable direction for that mode.

The two tail parameters are fixed by least-squares matching at ``r_match``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .errors import BadFit, Inadmissible, NoBracket, Unresolved

__all__ = [
    "CriticalExponents",
    "ShootingOptions",
    "BubbleProfile",
    "TailConstants",
    "KernelProfiles",
    "make_exponents",
    "classify_shot",
    "shoot_ground_state",
    "tail_constants",
    "kernel_profiles",
    "evaluate_bubble",
    "sphere_area",
    "gamma_N",
]


def sphere_area(N):
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def gamma_N(N):
    """Normalising constant of the fundamental solution, 1/((N-2)|S^{N-1}|)."""
    return 1.0 / ((N - 2) * sphere_area(N))


@dataclass(frozen=True)
class CriticalExponents:
    N: int
    p: float
    q: float

    @property
    def gamma_u(self):
        return (self.N - 2) * self.p - 2.0

    @property
    def gamma_v(self):
        return float(self.N - 2)

    @property
    def kappa0(self):
        return min(self.N - 2.0, (self.N - 1) * self.p - 2.0)

    def hyperbola_residual(self):
        return 1.0 / (self.p + 1.0) + 1.0 / (self.q + 1.0) - (self.N - 2.0) / self.N

    def as_dict(self):
        return {"N": self.N, "p": self.p, "q": self.q, "gamma_u": self.gamma_u,
                "gamma_v": self.gamma_v, "kappa0": self.kappa0}


def admissible_window(N):
    return max(1.0, 2.0 / (N - 2)), (N - 1.0) / (N - 2)


def make_exponents(N, p):
    """Complete ``(N, p)`` to a point of the critical hyperbola.

    Raises :class:`Inadmissible` unless ``max(1, 2/(N-2)) < p < (N-1)/(N-2)``;
    below the lower bound ``U`` does not decay, above the upper one the
    tail expansion used throughout breaks down.
    """
    if int(N) != N or N < 3:
        raise Inadmissible(f"dimension N={N} must be an integer >= 3")
    N = int(N)
    p = float(p)
    lo, hi = admissible_window(N)
    if not lo < hi:
        raise Inadmissible(
            f"N={N}: admissible window for p is empty "
            f"(need p > {lo:g} and p < {hi:g} simultaneously)")
    if p <= lo:
        raise Inadmissible(f"p={p:g} violates the lower bound p > {lo:g} (N={N})")
    if p >= hi:
        raise Inadmissible(f"p={p:g} violates the upper bound p < {hi:g} (N={N})")
    inv = (N - 2.0) / N - 1.0 / (p + 1.0)
    q = 1.0 / inv - 1.0
    exps = CriticalExponents(N, p, q)
    assert exps.kappa0 > exps.gamma_u + 1.0
    return exps


@dataclass(frozen=True)
class ShootingOptions:
    rtol: float = 1e-12
    r0: float = 1e-8
    r_max: float = 1e6
    points_per_decade: int = 400
    beta_rel_width: float = 1e-14
    beta_guess: float = 1.0
    r_classify: float = 1e40
    r_match: float | None = None


# -- radial ODE in t = ln r with state (U, rU', V, rV') ---------------------

def _rhs(t, y, N, p, q):
    U, P, V, Q = y
    r2 = math.exp(2.0 * t)
    return [P,
            -(N - 2) * P - r2 * abs(V) ** (p - 1.0) * V,
            Q,
            -(N - 2) * Q - r2 * abs(U) ** (q - 1.0) * U]


def _initial_state(exps, beta, r0):
    N, p = exps.N, exps.p
    r2 = r0 * r0
    bp = beta ** p
    return [1.0 - bp * r2 / (2 * N), -bp * r2 / N, beta - r2 / (2 * N), -r2 / N]


def _event_u(t, y, *args):
    return y[0]


def _event_v(t, y, *args):
    return y[2]


_event_u.terminal = True
_event_v.terminal = True


def classify_shot(exps, beta, opts=ShootingOptions()):
    """Integrate from the origin and report which component changes sign first.

    Returns ``"V"`` (beta too small), ``"U"`` (beta too large) or ``None`` when
    neither crossed before ``opts.r_classify``.
    """
    sol = solve_ivp(_rhs, (math.log(opts.r0), math.log(opts.r_classify)),
                    _initial_state(exps, beta, opts.r0), method="DOP853",
                    rtol=opts.rtol, atol=1e-300, args=(exps.N, exps.p, exps.q),
                    events=(_event_u, _event_v))
    tu = sol.t_events[0][0] if len(sol.t_events[0]) else math.inf
    tv = sol.t_events[1][0] if len(sol.t_events[1]) else math.inf
    if tu == tv == math.inf:
        return None
    return "U" if tu < tv else "V"


def _bracket(exps, opts):
    lo = hi = opts.beta_guess
    kind = classify_shot(exps, lo, opts)
    if kind is None:
        raise NoBracket(f"no sign change at beta={lo:g}; cannot orient the bracket")
    for _ in range(60):
        if kind == "V":
            lo, hi = hi, hi * 2.0
            kind_hi = classify_shot(exps, hi, opts)
            if kind_hi == "U":
                return lo, hi
            if kind_hi is None:
                break
            kind = kind_hi
        else:
            lo, hi = lo / 2.0, lo
            kind_lo = classify_shot(exps, lo, opts)
            if kind_lo == "V":
                return lo, hi
            if kind_lo is None:
                break
            kind = kind_lo
    raise NoBracket(f"could not separate the two failure modes near beta={opts.beta_guess:g}")


def _bisect_beta(exps, opts, bracket=None):
    lo, hi = bracket if bracket is not None else _bracket(exps, opts)
    if classify_shot(exps, lo, opts) != "V" or classify_shot(exps, hi, opts) != "U":
        raise NoBracket(f"bracket [{lo:g}, {hi:g}] does not separate V-first from U-first")
    while hi - lo > opts.beta_rel_width * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        kind = classify_shot(exps, mid, opts)
        if kind == "V":
            lo = mid
        elif kind == "U":
            hi = mid
        else:
            return mid, (lo, hi)
    if hi - lo > 4 * opts.beta_rel_width * hi:
        raise Unresolved(f"bisection stalled at width {hi - lo:.3e} without a decaying shot")
    return 0.5 * (lo + hi), (lo, hi)


@dataclass(frozen=True)
class BubbleProfile:
    exps: CriticalExponents
    r: np.ndarray
    U: np.ndarray
    V: np.ndarray
    dU: np.ndarray
    dV: np.ndarray
    beta: float
    beta_bracket: tuple
    r_match: float
    i_match: int
    tail_b: float
    tail_c2: float
    match_error: float
    opts: ShootingOptions = field(default_factory=ShootingOptions)
    U0: float = 1.0

    @property
    def Psi0(self):
        N, p, q = self.exps.N, self.exps.p, self.exps.q
        return self.r * self.dU + N * self.U / (q + 1.0)

    @property
    def Phi0(self):
        N, p = self.exps.N, self.exps.p
        return self.r * self.dV + N * self.V / (p + 1.0)

    @property
    def t(self):
        return np.log(self.r)

    def residual(self):
        """Largest relative radial ODE residual over interior nodes.

        ``Lap U`` is formed as ``r^-2 (dP/dt + (N-2) P)`` with ``P = r U'`` and a
        sixth-order difference in ``t = ln r``; stencils never straddle the
        matching radius.  Each residual is scaled by the magnitude of the
        largest term in its equation.
        """
        return radial_residual(self)


def _d_dt(f, h):
    """Sixth-order central first derivative on a uniform grid (interior only)."""
    c = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / (60.0 * h)
    out = np.full_like(f, np.nan)
    out[3:-3] = sum(c[k] * f[k:len(f) - 6 + k] for k in range(7))
    return out


def _piecewise_d_dt(f, h, i_match):
    out = np.full_like(f, np.nan)
    out[: i_match + 1] = _d_dt(f[: i_match + 1], h)
    out[i_match + 1:] = _d_dt(f[i_match + 1:], h)
    return out


def radial_residual(profile):
    exps = profile.exps
    N, p, q = exps.N, exps.p, exps.q
    r = profile.r
    h = np.log(r[1] / r[0])
    P = r * profile.dU
    Q = r * profile.dV
    dP = _piecewise_d_dt(P, h, profile.i_match)
    dQ = _piecewise_d_dt(Q, h, profile.i_match)
    src_u = profile.V ** p
    src_v = profile.U ** q
    res_u = np.abs(dP + (N - 2) * P + r**2 * src_u)
    res_v = np.abs(dQ + (N - 2) * Q + r**2 * src_v)
    scale_u = np.maximum.reduce([np.abs(dP), (N - 2) * np.abs(P), r**2 * src_u])
    scale_v = np.maximum.reduce([np.abs(dQ), (N - 2) * np.abs(Q), r**2 * src_v])
    ok = np.isfinite(dP) & np.isfinite(dQ)
    return float(max(np.max(res_u[ok] / scale_u[ok]), np.max(res_v[ok] / scale_v[ok])))


def _tail_state(exps, b, c2, R):
    """State at radius ``R`` on the decaying tail manifold.

    ``V ~ b R^(2-N)``; ``U`` is the decaying solution of ``-Lap U = V^p`` with
    that forcing, i.e. the forced power plus a free multiple of ``R^(2-N)``.
    Corrections are smaller by ``R^(N - q gamma_u)``.
    """
    N, p = exps.N, exps.p
    g = exps.gamma_u
    a = b ** p / (g * (N - 2.0 - g))
    U = a * R ** (-g) + c2 * R ** (2.0 - N)
    P = -g * a * R ** (-g) - (N - 2.0) * c2 * R ** (2.0 - N)
    V = b * R ** (2.0 - N)
    Q = -(N - 2.0) * b * R ** (2.0 - N)
    return [U, P, V, Q]


def _default_r_match(exps, opts):
    if opts.r_match is not None:
        return opts.r_match
    # Outward errors grow like r^(N-2), inward ones like (r_max/r)^(N-2-gamma_u);
    # match where the two amplification factors are equal.
    m = exps.N - 2.0
    k = m - exps.gamma_u
    r = opts.r_max ** (k / (m + k))
    return float(np.clip(r, 2.0, opts.r_max / 1e3))


def shoot_ground_state(exps, opts=ShootingOptions(), bracket=None):
    """Compute the normalised ground state ``(U, V)`` with ``U(0) = 1``."""
    beta, br = _bisect_beta(exps, opts, bracket)

    ppd = opts.points_per_decade
    n_dec = math.log10(opts.r_max / opts.r0)
    n = int(round(n_dec * ppd)) + 1
    t = np.linspace(math.log(opts.r0), math.log(opts.r_max), n)
    r = np.exp(t)
    r_target = _default_r_match(exps, opts)
    i_m = int(np.argmin(np.abs(r - r_target)))
    args = (exps.N, exps.p, exps.q)

    # dense output is less accurate than the steps; keep steps near the mesh size
    max_step = 4.0 * (t[1] - t[0])
    inner = solve_ivp(_rhs, (t[0], t[i_m]), _initial_state(exps, beta, opts.r0),
                      method="DOP853", rtol=opts.rtol, atol=1e-300, args=args,
                      t_eval=t[: i_m + 1], max_step=max_step)
    if not inner.success or inner.y.shape[1] != i_m + 1:
        raise Unresolved(f"inner integration failed: {inner.message}")
    y_in = inner.y
    if np.any(y_in[0] <= 0) or np.any(y_in[2] <= 0):
        raise Unresolved("inner trajectory left the positive cone before r_match")

    def outer(params, dense=False):
        b, c2 = params
        sol = solve_ivp(_rhs, (t[-1], t[i_m]), _tail_state(exps, b, c2, r[-1]),
                        method="DOP853", rtol=opts.rtol, atol=1e-300, args=args,
                        t_eval=t[i_m:][::-1] if dense else None,
                        max_step=max_step if dense else math.inf)
        return sol

    target = y_in[:, -1]

    def mismatch(params):
        y_out = outer(params).y[:, -1]
        return (y_out - target) / np.abs(target)

    # initial guess: V's flux and U's value read as pure tail
    Ng = exps.N - 2.0
    b0 = -target[3] * r[i_m] ** Ng / Ng
    a0 = b0 ** exps.p / (exps.gamma_u * (Ng - exps.gamma_u))
    c20 = (target[0] - a0 * r[i_m] ** (-exps.gamma_u)) * r[i_m] ** Ng
    fit = least_squares(mismatch, [b0, c20], x_scale=[abs(b0), abs(a0) + abs(c20)],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    b, c2 = fit.x
    sol_out = outer(fit.x, dense=True)
    y_out = sol_out.y[:, ::-1]           # ascending in r, starts at r_match
    match_error = float(np.max(np.abs(mismatch(fit.x))))

    Y = np.concatenate([y_in, y_out[:, 1:]], axis=1)
    U, P, V, Q = Y
    if np.any(U <= 0) or np.any(V <= 0):
        raise Unresolved("assembled profile is not positive")
    return BubbleProfile(exps=exps, r=r, U=U, V=V, dU=P / r, dV=Q / r, beta=beta,
                         beta_bracket=br, r_match=float(r[i_m]), i_match=i_m,
                         tail_b=float(b), tail_c2=float(c2), match_error=match_error,
                         opts=opts)


@dataclass(frozen=True)
class TailConstants:
    a_Np: float
    b_Np: float
    slope_u: float
    slope_v: float
    fit_window: tuple
    rms_residual: float

    def as_dict(self):
        return {"a_Np": self.a_Np, "b_Np": self.b_Np, "slope_u": self.slope_u,
                "slope_v": self.slope_v, "fit_window": list(self.fit_window),
                "rms_residual": self.rms_residual}


def tail_constants(profile, window=None, max_rms=1e-3):
    """Fit ``ln U`` and ``ln V`` against ``ln r`` over the outer window.

    Slope and amplitude are both free; the slope is a diagnostic of how well
    the power law has set in.  Default window is the last two decades.
    """
    r = profile.r
    if window is None:
        window = (r[-1] / 100.0, r[-1])
    lo, hi = window
    sel = (r >= lo * (1 - 1e-12)) & (r <= hi * (1 + 1e-12))
    if lo <= 0 or hi <= lo or sel.sum() < 8 or lo < r[0] or hi > r[-1] * (1 + 1e-12):
        raise BadFit(f"fit window [{lo:g}, {hi:g}] is outside the sampled range "
                     f"[{r[0]:g}, {r[-1]:g}]")
    x = np.log(r[sel])
    fits = []
    rms = 0.0
    for f in (profile.U, profile.V):
        y = np.log(f[sel])
        slope, icpt = np.polyfit(x, y, 1)
        rms = max(rms, float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2))))
        fits.append((slope, icpt))
    if rms > max_rms:
        raise BadFit(f"log-log residual {rms:.3e} above {max_rms:g}; increase r_max")
    (su, iu), (sv, iv) = fits
    # amplitude referred to the fitted power at the window's geometric centre
    # is identical to exp(intercept); the intercept form is kept for clarity
    return TailConstants(a_Np=float(math.exp(iu)), b_Np=float(math.exp(iv)),
                         slope_u=float(su), slope_v=float(sv),
                         fit_window=(float(lo), float(hi)), rms_residual=rms)


@dataclass(frozen=True)
class KernelProfiles:
    r: np.ndarray
    Psi0: np.ndarray
    Phi0: np.ndarray
    Psi_r: np.ndarray
    Phi_r: np.ndarray
    residual: float


def kernel_profiles(profile):
    """Dilation and radial translation kernels of the linearised system.

    ``Psi0 = r U' + N U/(q+1)``, ``Phi0 = r V' + N V/(p+1)`` and the radial
    factors ``U'``, ``V'`` of the translation kernels.  ``residual`` is the
    largest relative residual of ``-Lap Psi0 = p V^(p-1) Phi0`` and
    ``-Lap Phi0 = q U^(q-1) Psi0``; the second derivative in ``ln r`` is a
    finite difference.
    """
    exps = profile.exps
    N, p, q = exps.N, exps.p, exps.q
    r = profile.r
    h = math.log(r[1] / r[0])
    Psi, Phi = profile.Psi0, profile.Phi0
    P = r * profile.dU
    Q = r * profile.dV
    # First t-derivatives from the profile equations (dU/dt = P, dP/dt from the
    # ODE); only the second derivative is differenced.  Differencing Psi0
    # itself loses all digits near the origin where it is nearly constant.
    dP = -(N - 2) * P - r**2 * profile.V ** p
    dQ = -(N - 2) * Q - r**2 * profile.U ** q
    dPsi = dP + N * P / (q + 1.0)
    dPhi = dQ + N * Q / (p + 1.0)
    d2Psi = _piecewise_d_dt(dPsi, h, profile.i_match)
    d2Phi = _piecewise_d_dt(dPhi, h, profile.i_match)
    # r^2 Lap f = f_tt + (N-2) f_t
    src_psi = p * profile.V ** (p - 1) * Phi * r**2
    src_phi = q * profile.U ** (q - 1) * Psi * r**2
    res1 = np.abs(d2Psi + (N - 2) * dPsi + src_psi)
    res2 = np.abs(d2Phi + (N - 2) * dPhi + src_phi)
    sc1 = np.maximum.reduce([np.abs(d2Psi), (N - 2) * np.abs(dPsi), np.abs(src_psi)])
    sc2 = np.maximum.reduce([np.abs(d2Phi), (N - 2) * np.abs(dPhi), np.abs(src_phi)])
    ok = np.isfinite(d2Psi) & np.isfinite(d2Phi) & (sc1 > 0) & (sc2 > 0)
    res = float(max(np.max(res1[ok] / sc1[ok]), np.max(res2[ok] / sc2[ok])))
    return KernelProfiles(r=r, Psi0=Psi, Phi0=Phi, Psi_r=profile.dU, Phi_r=profile.dV,
                          residual=res)


def _profile_at(profile, rho, tails=None):
    """Interpolate ``(U, V)`` at radii ``rho``; power-law tail beyond the mesh."""
    rho = np.asarray(rho, dtype=float)
    r = profile.r
    t = np.log(np.maximum(rho, r[0]))
    # cubic Hermite in t = ln r with the exact derivative samples
    U = _hermite(profile, t, profile.U, profile.r * profile.dU)
    V = _hermite(profile, t, profile.V, profile.r * profile.dV)
    small = rho < r[0]
    if np.any(small):
        N, p = profile.exps.N, profile.exps.p
        r2 = rho[small] ** 2
        U[small] = 1.0 - profile.beta ** p * r2 / (2 * N)
        V[small] = profile.beta - r2 / (2 * N)
    big = rho > r[-1]
    if np.any(big):
        if tails is None:
            tails = tail_constants(profile)
        g = profile.exps.gamma_u
        U[big] = tails.a_Np * rho[big] ** (-g)
        V[big] = tails.b_Np * rho[big] ** (2.0 - profile.exps.N)
    return U, V


def _hermite(profile, t, f, df_dt):
    tt = np.log(profile.r)
    h = tt[1] - tt[0]
    idx = np.clip(((t - tt[0]) / h).astype(int), 0, len(tt) - 2)
    s = (t - tt[idx]) / h
    s = np.clip(s, 0.0, 1.0)
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return (h00 * f[idx] + h10 * h * df_dt[idx] + h01 * f[idx + 1]
            + h11 * h * df_dt[idx + 1])


def evaluate_bubble(profile, mu, xi, x, tails=None):
    """Rescaled bubble ``(U_{mu,xi}(x), V_{mu,xi}(x))``.

    ``x`` may be a single point or an array of points (last axis = coordinates).
    Beyond the sampled radius the fitted tail law is used.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    N, p, q = profile.exps.N, profile.exps.p, profile.exps.q
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho = np.linalg.norm(np.atleast_1d(x - xi), axis=-1) / mu
    U, V = _profile_at(profile, np.atleast_1d(rho), tails)
    U = mu ** (-N / (q + 1.0)) * U
    V = mu ** (-N / (p + 1.0)) * V
    if np.ndim(rho) == 0:
        return float(U[0]), float(V[0])
    return U.reshape(np.shape(rho)), V.reshape(np.shape(rho))

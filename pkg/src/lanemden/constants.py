"""Reduction constants A1, A1~, A2, A3, A4 of the energy expansion.

All constants are integrals over R^N of radial functions built from the ground
state.  They are computed as ``|S^{N-1}| * int F(r) r^N dt`` with ``t = ln r``
(composite Simpson on the uniform ``t`` mesh), plus a closed-form integral of
the asymptotic tail beyond the last sample.  The tail of every integrand is
assembled from the tail laws of its factors, so its error is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .bubble import sphere_area
from .errors import Divergent

__all__ = [
    "TailSeries",
    "ReductionConstants",
    "radial_integral",
    "compute_constants",
    "check_orthogonality",
    "check_lss",
    "translation_moment",
    "profile_tails",
]


@dataclass(frozen=True)
class TailSeries:
    """Asymptotic expansion ``sum c r^(-s) (ln r)^k`` valid beyond the mesh.

    ``rel_error`` bounds the relative size of the neglected terms at the
    first radius where the series is used.
    """

    terms: tuple  # of (c, s, k), sorted by increasing s
    rel_error: float = 0.0

    @staticmethod
    def power(c, s, rel_error=0.0):
        return TailSeries(((float(c), float(s), 0),), rel_error)

    def _normal(self, terms, rel_error):
        merged = {}
        for c, s, k in terms:
            key = (round(s, 13), k)
            c0, s0, _ = merged.get(key, (0.0, s, k))
            merged[key] = (c0 + c, s0, k)
        out = tuple(sorted((t for t in merged.values() if t[0] != 0.0),
                           key=lambda t: (t[1], -t[2])))
        return TailSeries(out, rel_error)

    def __mul__(self, other):
        if not isinstance(other, TailSeries):
            return TailSeries(tuple((c * other, s, k) for c, s, k in self.terms),
                              self.rel_error)
        terms = [(c1 * c2, s1 + s2, k1 + k2)
                 for c1, s1, k1 in self.terms for c2, s2, k2 in other.terms]
        return self._normal(terms, self.rel_error + other.rel_error)

    __rmul__ = __mul__

    def __add__(self, other):
        # errors are relative to each summand; bound them by the larger one
        return self._normal(self.terms + other.terms,
                            max(self.rel_error, other.rel_error))

    def _split(self, R):
        """Leading power term and the remaining terms relative to it."""
        c0, s0, k0 = self.terms[0]
        if k0 != 0:
            raise ValueError("leading tail term must be a pure power")
        rest = TailSeries(tuple((c / c0, s - s0, k) for c, s, k in self.terms[1:]))
        return c0, s0, rest, rest.magnitude(R)

    def magnitude(self, R):
        return sum(abs(c) * R ** (-s) * abs(math.log(R)) ** k for c, s, k in self.terms)

    def pow(self, e, R):
        """``self**e`` to first order in the sub-leading terms."""
        c0, s0, rest, eta = self._split(R)
        lead = TailSeries.power(abs(c0) ** e, e * s0)
        corr = rest * e if rest.terms else TailSeries(())
        one = TailSeries.power(1.0, 0.0)
        err = self.rel_error * abs(e) + 0.5 * abs(e * (e - 1)) * eta**2
        out = lead * (one + corr)
        return TailSeries(out.terms, err)

    def log(self, R):
        """``ln(self)`` to first order in the sub-leading terms."""
        c0, s0, rest, eta = self._split(R)
        terms = [(math.log(c0), 0.0, 0), (-s0, 0.0, 1)] + list(rest.terms)
        lead = math.log(c0) - s0 * math.log(R)
        err = (self.rel_error + 0.5 * eta**2) / max(abs(lead), 1e-300)
        return self._normal(terms, err)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return sum(c * r ** (-s) * np.log(r) ** k for c, s, k in self.terms)

    def integral(self, R, N):
        """``int_R^inf F(r) r^(N-1) dr`` term by term; Divergent if not finite."""
        total = 0.0
        lnR = math.log(R)
        for c, s, k in self.terms:
            m = s - N
            if m <= 0:
                raise Divergent(f"tail decays like r^-{s:.6g}, which is not "
                                f"integrable against r^{N - 1} (need exponent > {N})")
            if k == 0:
                total += c * R ** (-m) / m
            elif k == 1:
                total += c * R ** (-m) * (lnR / m + 1.0 / m**2)
            elif k == 2:
                total += c * R ** (-m) * (lnR**2 / m + 2 * lnR / m**2 + 2.0 / m**3)
            else:
                raise ValueError("log powers above 2 are not needed")
        return total


def profile_tails(profile):
    """Tail laws of ``U, V, Psi0, Phi0`` from the matched tail parameters."""
    exps = profile.exps
    N, p, q = exps.N, exps.p, exps.q
    g = exps.gamma_u
    R = profile.r[-1]
    b, c2 = profile.tail_b, profile.tail_c2
    a = b**p / (g * (N - 2.0 - g))
    # neglected: V's response to U^q and the matching error itself
    k = q * g - 2.0
    d = -a**q / (k * (k - N + 2.0))
    eta_v = abs(d / b) * R ** (N - q * g)
    err = eta_v + profile.match_error
    U = TailSeries(((a, g, 0), (c2, N - 2.0, 0)), err)
    V = TailSeries.power(b, N - 2.0, err)
    Psi = TailSeries(((a * (N / (q + 1.0) - g), g, 0),
                      (c2 * (N / (q + 1.0) - (N - 2.0)), N - 2.0, 0)), err)
    Phi = TailSeries.power(b * (N / (p + 1.0) - (N - 2.0)), N - 2.0, err)
    return {"U": U._normal(U.terms, err), "V": V, "Psi0": Psi._normal(Psi.terms, err),
            "Phi0": Phi}


def _fit_power_tail(r, F):
    sel = r >= r[-1] / 10.0
    f = F[sel]
    if np.all(f == 0):
        return TailSeries(())
    if np.any(f == 0) or np.any(np.sign(f) != np.sign(f[-1])):
        raise Divergent("integrand does not settle to a one-signed power law")
    x = np.log(r[sel])
    y = np.log(np.abs(f))
    slope, icpt = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
    return TailSeries.power(np.sign(f[-1]) * math.exp(icpt), -slope, rms)


def radial_integral(profile, integrand, tail=None):
    """``int_{R^N} F`` for a radial ``F`` sampled on the profile mesh.

    Returns ``(value, error_estimate)``.  ``tail`` is the asymptotic law of
    ``F`` beyond the mesh; when omitted a single power law is fitted to the
    last decade of samples.
    """
    r = profile.r
    N = profile.exps.N
    F = np.asarray(integrand, dtype=float)
    if F.shape != r.shape:
        raise ValueError("integrand must be sampled on the profile mesh")
    if not np.any(F):
        return 0.0, 0.0
    if tail is None:
        tail = _fit_power_tail(r, F)
    t = np.log(r)
    G = F * r**N
    fine = simpson(G, x=t)
    coarse_idx = np.arange(0, len(t), 2)
    if coarse_idx[-1] != len(t) - 1:
        coarse_idx = np.append(coarse_idx, len(t) - 1)
    coarse = simpson(G[coarse_idx], x=t[coarse_idx])
    # Richardson estimate, floored at the rounding level of the sum
    roundoff = 64.0 * np.finfo(float).eps * simpson(np.abs(G), x=t)
    quad_err = max(abs(fine - coarse) / 15.0, roundoff)
    # F is flat near the origin: int_0^r0 F r^(N-1) dr
    head = F[0] * r[0] ** N / N
    tail_val = tail.integral(r[-1], N) if tail.terms else 0.0
    tail_err = abs(tail_val) * tail.rel_error
    area = sphere_area(N)
    return area * (head + fine + tail_val), area * (quad_err + tail_err)


@dataclass(frozen=True)
class ReductionConstants:
    N: int
    p: float
    A1: float
    A1_tilde: float
    A2: float
    A3: float
    A4: float
    quadrature_error: dict

    def as_dict(self):
        return {"N": self.N, "p": self.p, "A1": self.A1, "A1_tilde": self.A1_tilde,
                "A2": self.A2, "A3": self.A3, "A4": self.A4,
                "quadrature_error": dict(self.quadrature_error)}


def compute_constants(profile):
    """Reduction constants with per-constant absolute error estimates.

    ``A1 = -int U^q ln(U) Psi0``, ``A1~ = -int V^p ln(V) Phi0``,
    ``A2 = q int U^(q-1) Psi0``, ``A3 = int U^q``, ``A4 = (1/q) int U^(q-1)``.
    """
    exps = profile.exps
    p, q = exps.p, exps.q
    R = profile.r[-1]
    T = profile_tails(profile)
    U, V, Psi, Phi = profile.U, profile.V, profile.Psi0, profile.Phi0
    Uq = T["U"].pow(q, R)
    Uq1 = T["U"].pow(q - 1.0, R)
    Vp = T["V"].pow(p, R)
    specs = {
        "A1": (-(U**q) * np.log(U) * Psi, -1.0 * (Uq * T["U"].log(R) * T["Psi0"])),
        "A1_tilde": (-(V**p) * np.log(V) * Phi, -1.0 * (Vp * T["V"].log(R) * T["Phi0"])),
        "A2": (q * U ** (q - 1.0) * Psi, q * (Uq1 * T["Psi0"])),
        "A3": (U**q, Uq),
        "A4": (U ** (q - 1.0) / q, Uq1 * (1.0 / q)),
    }
    vals, errs = {}, {}
    for name, (F, tail) in specs.items():
        vals[name], errs[name] = radial_integral(profile, F, tail)
    return ReductionConstants(N=exps.N, p=p, quadrature_error=errs, **vals)


def check_orthogonality(profile):
    """``int (V^p Phi0 + U^q Psi0)`` relative to ``int |V^p Phi0|``.

    Both halves vanish separately (each is a total dilation derivative), so
    this measures quadrature and profile accuracy.
    """
    exps = profile.exps
    p, q = exps.p, exps.q
    R = profile.r[-1]
    T = profile_tails(profile)
    Vp = T["V"].pow(p, R)
    Uq = T["U"].pow(q, R)
    fv = profile.V**p * profile.Phi0
    fu = profile.U**q * profile.Psi0
    tv = Vp * T["Phi0"]
    tu = Uq * T["Psi0"]
    iv, _ = radial_integral(profile, fv, tv)
    iu, _ = radial_integral(profile, fu, tu)
    # |V^p Phi0| has one sign change; its tail has the sign of the leading term
    sign_tail = TailSeries(tuple((abs(c), s, k) for c, s, k in tv.terms), tv.rel_error)
    norm, _ = radial_integral(profile, np.abs(fv), sign_tail)
    return (iv + iu) / norm


def check_lss(tails, exps):
    """``b^p / (a [(N-2)p-2] [N-(N-2)p]) - 1`` for fitted tail constants."""
    N, p = exps.N, exps.p
    return tails.b_Np**p / (tails.a_Np * exps.gamma_u * (N - (N - 2.0) * p)) - 1.0


def translation_moment(profile, l):
    """``int U^(q-1) Psi^l`` for the translation kernels ``Psi^l = d_l U``.

    ``Psi^l(y) = U'(|y|) y_l/|y|`` is odd in ``y_l``; its angular factor
    ``int_{S^{N-1}} omega_l`` is zero, so the moment is exactly zero for
    ``l >= 1``.  ``l = 0`` (dilation kernel) gives ``A2 / q``.
    """
    if l < 0 or l > profile.exps.N:
        raise ValueError(f"kernel index l={l} outside 0..{profile.exps.N}")
    if l >= 1:
        return 0.0
    q = profile.exps.q
    T = profile_tails(profile)
    val, _ = radial_integral(profile, profile.U ** (q - 1.0) * profile.Psi0,
                             T["U"].pow(q - 1.0, profile.r[-1]) * T["Psi0"])
    return val

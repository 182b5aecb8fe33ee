"""Command line front end: ``lanemden <subcommand> --scenario file.toml``.

Subcommands run one stage of the pipeline (bubble, constants, Green
machinery, reduced functional, direct solver) or the identity suite
(``verify``).  Every output file carries the scenario hash and the library
version.  Flags can also be given through ``LANEMDEN_<FLAG>`` environment
variables; explicit flags win.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import pickle
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import io as lio
from .bubble import ShootingOptions, admissible_window, make_exponents, shoot_ground_state, \
    tail_constants
from .constants import check_lss, check_orthogonality, compute_constants
from .errors import ConfigError, LaneEmdenError, RemainderDominates, VerificationFailed
from .greens import Ball, DisjointUnion, ball_H_error, build_dumbbell, htilde_config, \
    observed_orders, symmetry_residual, tau_center_reference
from .reduced import GreensHandle, ReducedConstants, enumerate_lobe_subsets, eps_from_mu, \
    minimize, mu_from_eps

log = logging.getLogger("lanemden")

ENV_PREFIX = "LANEMDEN_"
COMMANDS = ("exponents", "bubble", "constants", "green-validate", "reduce", "solve", "verify")

DEFAULTS = {
    "bubble": {"rtol": 1e-12, "r0": 1e-8, "r_max": 1e6, "points_per_decade": 400},
    "domain": {"kind": "ball", "radius": 1.0, "center": 0.0},
    "greens": {"nx": 512, "method": "lu", "n_table": 33, "margin": 0.1,
               "convergence_nx": [64, 128, 256, 512], "probe": 0.3},
    "reduced": {"k": 1, "epsilon": [1e-3], "delta1": 0.01, "delta2": 0.1,
                "sign_convention": "asserted", "jitter": 0},
    "direct": {"epsilon": None, "eps_start": 0.5, "eps_ratio": 0.5, "eps_count": 24,
               "n": 4096, "seed_mu": 0.005, "refine_tol": 0.01, "tol": 1e-10},
    "output": {"dir": "lanemden-out"},
    "seed": 0,
}


# -- scenario ------------------------------------------------------------------

def _number(value, path, kind=float, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    value = kind(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    return value


def _section(raw, name):
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a table")
    merged = copy.deepcopy(DEFAULTS.get(name, {}))
    unknown = set(sec) - set(merged)
    if merged and unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    merged.update(sec)
    return merged


def _domain(sec, N):
    kind = sec.get("kind", "ball")
    if kind == "ball":
        extra = set(sec) - {"kind", "radius", "center"}
        if extra:
            raise ConfigError(f"domain.{sorted(extra)[0]}", "unknown field for a ball")
        return Ball(_number(sec.get("radius", 1.0), "domain.radius", positive=True),
                    _number(sec.get("center", 0.0), "domain.center"), N)
    if kind in ("disjoint_union", "dumbbell"):
        lobes = sec.get("lobes")
        if not isinstance(lobes, list) or not lobes:
            raise ConfigError("domain.lobes", "expected a non-empty array of {radius, center}")
        balls = []
        for i, b in enumerate(lobes):
            if not isinstance(b, dict):
                raise ConfigError(f"domain.lobes[{i}]", "expected a table")
            balls.append(Ball(_number(b.get("radius"), f"domain.lobes[{i}].radius",
                                      positive=True),
                              _number(b.get("center"), f"domain.lobes[{i}].center"), N))
        if kind == "disjoint_union":
            try:
                return DisjointUnion(tuple(balls))
            except ValueError as exc:
                raise ConfigError("domain.lobes", str(exc)) from None
        eta = _number(sec.get("eta"), "domain.eta", positive=True)
        return ("dumbbell", tuple(balls), eta)
    raise ConfigError("domain.kind", f"expected ball, disjoint_union or dumbbell, got {kind!r}")


class Scenario:
    """Validated scenario with defaults filled in."""

    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("scenario", "expected a TOML table")
        known = set(DEFAULTS) | {"exponents"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        ex = raw.get("exponents")
        if not isinstance(ex, dict):
            raise ConfigError("exponents", "missing required table")
        for key in ("N", "p"):
            if key not in ex:
                raise ConfigError(f"exponents.{key}", "missing required field")
        extra = set(ex) - {"N", "p"}
        if extra:
            raise ConfigError(f"exponents.{sorted(extra)[0]}", "unknown field")
        self.N = _number(ex["N"], "exponents.N", int, integer=True)
        self.p = _number(ex["p"], "exponents.p")

        b = _section(raw, "bubble")
        self.bubble = {"rtol": _number(b["rtol"], "bubble.rtol", positive=True),
                       "r0": _number(b["r0"], "bubble.r0", positive=True),
                       "r_max": _number(b["r_max"], "bubble.r_max", positive=True),
                       "points_per_decade": _number(b["points_per_decade"],
                                                    "bubble.points_per_decade", int,
                                                    positive=True, integer=True)}
        self.domain_raw = raw.get("domain", {"kind": "ball"})
        if not isinstance(self.domain_raw, dict):
            raise ConfigError("domain", "expected a table")

        g = _section(raw, "greens")
        if g["method"] not in ("lu", "cg"):
            raise ConfigError("greens.method", "expected 'lu' or 'cg'")
        if not isinstance(g["convergence_nx"], list) or len(g["convergence_nx"]) < 2:
            raise ConfigError("greens.convergence_nx", "expected at least two resolutions")
        self.greens = {"nx": _number(g["nx"], "greens.nx", int, positive=True, integer=True),
                       "method": g["method"],
                       "n_table": _number(g["n_table"], "greens.n_table", int, positive=True,
                                          integer=True),
                       "margin": _number(g["margin"], "greens.margin", positive=True),
                       "convergence_nx": [_number(v, f"greens.convergence_nx[{i}]", int,
                                                  positive=True, integer=True)
                                          for i, v in enumerate(g["convergence_nx"])],
                       "probe": _number(g["probe"], "greens.probe")}

        r = _section(raw, "reduced")
        eps = r["epsilon"]
        eps = eps if isinstance(eps, list) else [eps]
        if r["sign_convention"] not in ("asserted", "computed"):
            raise ConfigError("reduced.sign_convention", "expected 'asserted' or 'computed'")
        self.reduced = {"k": _number(r["k"], "reduced.k", int, positive=True, integer=True),
                        "epsilon": [_number(e, f"reduced.epsilon[{i}]", positive=True)
                                    for i, e in enumerate(eps)],
                        "delta1": _number(r["delta1"], "reduced.delta1", positive=True),
                        "delta2": _number(r["delta2"], "reduced.delta2", positive=True),
                        "sign_convention": r["sign_convention"],
                        "jitter": _number(r["jitter"], "reduced.jitter", int, integer=True)}
        if self.reduced["delta1"] >= 1:
            raise ConfigError("reduced.delta1", "must lie in (0, 1)")

        d = _section(raw, "direct")
        if d["epsilon"] is None:
            start = _number(d["eps_start"], "direct.eps_start", positive=True)
            ratio = _number(d["eps_ratio"], "direct.eps_ratio", positive=True)
            count = _number(d["eps_count"], "direct.eps_count", int, positive=True,
                            integer=True)
            if ratio >= 1:
                raise ConfigError("direct.eps_ratio", "must lie in (0, 1)")
            eps_d = [start * ratio**i for i in range(count)]
        else:
            if not isinstance(d["epsilon"], list):
                raise ConfigError("direct.epsilon", "expected an array")
            eps_d = [_number(e, f"direct.epsilon[{i}]", positive=True)
                     for i, e in enumerate(d["epsilon"])]
            if any(b >= a for a, b in zip(eps_d, eps_d[1:])):
                raise ConfigError("direct.epsilon", "must be strictly decreasing")
        refine = d["refine_tol"]
        self.direct = {"epsilon": eps_d,
                       "n": _number(d["n"], "direct.n", int, positive=True, integer=True),
                       "seed_mu": _number(d["seed_mu"], "direct.seed_mu", positive=True),
                       "refine_tol": None if refine is False else
                       _number(refine, "direct.refine_tol", positive=True),
                       "tol": _number(d["tol"], "direct.tol", positive=True)}
        o = _section(raw, "output")
        if not isinstance(o["dir"], str):
            raise ConfigError("output.dir", "expected a string")
        self.output_dir = o["dir"]
        self.seed = _number(raw.get("seed", 0), "seed", int, integer=True)

    def as_dict(self):
        return {"exponents": {"N": self.N, "p": self.p}, "bubble": self.bubble,
                "domain": self.domain_raw, "greens": self.greens, "reduced": self.reduced,
                "direct": self.direct, "output": {"dir": self.output_dir}, "seed": self.seed}

    @property
    def hash(self):
        return lio.content_hash(self.as_dict())

    def exponents(self):
        return make_exponents(self.N, self.p)

    def domain(self):
        dom = _domain(self.domain_raw, self.N)
        if isinstance(dom, tuple):
            _, balls, eta = dom
            return build_dumbbell(balls, eta, self.N, self.greens["nx"])
        return dom


def load_scenario(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("scenario", f"file {str(path)!r} not found")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("scenario", f"invalid TOML: {exc}") from None
    return Scenario(raw)


# -- cache ---------------------------------------------------------------------

class Cache:
    """Append-only content-addressed pickle store (``None`` disables it)."""

    def __init__(self, root):
        self.root = Path(root) if root else None

    def _path(self, kind, key):
        return self.root / kind / f"{lio.content_hash({'key': key, 'v': __version__})}.pkl"

    def get(self, kind, key, build):
        if self.root is None:
            return build()
        path = self._path(kind, key)
        if path.exists():
            with path.open("rb") as fh:
                return pickle.load(fh)
        value = build()
        path.parent.mkdir(parents=True, exist_ok=True)
        # atomic publish so concurrent readers never see a partial file
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            pickle.dump(value, fh)
        os.replace(tmp, path)
        return value


# -- pipeline stages -----------------------------------------------------------

class Context:
    def __init__(self, scenario, out, cache, threads, strict, command):
        self.sc = scenario
        self.out = Path(out)
        self.cache = cache
        self.threads = threads
        self.strict = strict
        self.command = command

    @property
    def meta(self):
        return {"scenario_hash": self.sc.hash, "version": __version__,
                "command": self.command}

    def profile(self):
        sc = self.sc
        key = {"N": sc.N, "p": sc.p, "bubble": sc.bubble}

        def build():
            exps = sc.exponents()
            log.info("shooting ground state for N=%d p=%g", sc.N, sc.p)
            prof = shoot_ground_state(exps, ShootingOptions(**sc.bubble))
            return prof, tail_constants(prof)
        return self.cache.get("profile", key, build)

    def constants(self):
        sc = self.sc
        key = {"N": sc.N, "p": sc.p, "bubble": sc.bubble}
        return self.cache.get("constants", key, lambda: compute_constants(self.profile()[0]))

    def write(self, name, obj):
        path = lio.write_json(self.out / name, obj, self.meta)
        log.info("wrote %s", path)
        return path


def cmd_exponents(ctx):
    sc = ctx.sc
    exps = sc.exponents()
    lo, hi = admissible_window(sc.N)
    identity = (sc.N - 2) * exps.p - 2 - sc.N * (exps.p + 1) / (exps.q + 1)
    ctx.write("exponents.json", {"exponents": exps.as_dict(), "window": [lo, hi],
                                 "hyperbola_residual": exps.hyperbola_residual(),
                                 "identity_residual": identity})
    return 0


def cmd_bubble(ctx):
    prof, tails = ctx.profile()
    exps = prof.exps
    path = lio.write_profile(ctx.out / "profile.csv", prof, tails, ctx.meta)
    diag = {"beta": prof.beta, "residual": prof.residual(), "lss_residual": check_lss(tails, exps),
            "tail_slope_u": tails.slope_u, "tail_slope_v": tails.slope_v,
            "expected_slope_u": -exps.gamma_u, "expected_slope_v": -(exps.N - 2.0),
            "match_error": prof.match_error, "profile_csv": path.name}
    ctx.write("bubble.json", diag)
    return 0


def cmd_constants(ctx):
    prof, tails = ctx.profile()
    c = ctx.constants()
    exps = prof.exps
    lio.write_constants(ctx.out / "constants.json", [c], ctx.meta)
    dil = c.A2 + exps.N * c.A3 / (exps.q + 1.0)
    ctx.write("constants_checks.json", {
        "orthogonality": check_orthogonality(prof),
        "dilation_identity_residual": dil / abs(c.A2),
        "A1_positive": c.A1 > 0, "A1_tilde_positive": c.A1_tilde > 0,
        "quadrature_error": c.quadrature_error})
    return 0


def _green_report(ctx):
    sc = ctx.sc
    exps = sc.exponents()
    g = sc.greens
    unit = Ball(1.0, 0.0, sc.N)
    nxs = g["convergence_nx"]
    errs = [ball_H_error(unit, g["probe"], n, g["method"]) for n in nxs]
    res = htilde_config(unit, [1.0], [0.0], exps, g["nx"], g["method"])
    ref = tau_center_reference(exps)
    lio.write_meridian(ctx.out / "htilde_remainder.f64", res.remainder, ctx.meta)
    xs, vals = res.remainder.axis_slice()
    lio.write_axis_csv(ctx.out / "htilde_remainder_axis.csv", xs, {"W": vals})
    return {"symmetry_residual": symmetry_residual(unit, seed=sc.seed),
            "H_errors": {"nx": nxs, "max_error": errs, "orders": observed_orders(nxs, errs)},
            "tau_center": {"nx": g["nx"], "meridian": res.tau, "reference": ref,
                           "relative_error": abs(res.tau / ref - 1.0)}}


def cmd_green_validate(ctx):
    ctx.write("green_validate.json", _green_report(ctx))
    return 0


def _seeds(ctx, domain):
    sc = ctx.sc
    k = sc.reduced["k"]
    if isinstance(domain, Ball):
        if k == 1:
            seeds = [{"lobes": (0,), "d": (1.0,), "xi": (domain.center,)}]
        else:
            pos = domain.center + 0.5 * domain.radius * np.linspace(-1, 1, k)
            seeds = [{"lobes": (0,) * k, "d": (1.0,) * k, "xi": tuple(pos)}]
    else:
        seeds = enumerate_lobe_subsets(domain, k)
    rng = np.random.default_rng(sc.seed)
    extra = []
    for _ in range(sc.reduced["jitter"]):
        for s in seeds:
            xi = tuple(float(z + rng.uniform(-0.1, 0.1)) for z in s["xi"])
            extra.append({**s, "xi": xi})
    return seeds + extra


def cmd_reduce(ctx):
    sc = ctx.sc
    prof, tails = ctx.profile()
    rc = ReducedConstants.from_parts(ctx.constants(), tails, prof.exps,
                                     sc.reduced["sign_convention"])
    domain = sc.domain()
    g = sc.greens
    greens = GreensHandle(domain, prof.exps, g["nx"], g["method"], g["n_table"], g["margin"])
    seeds = _seeds(ctx, domain)
    kw = dict(rc=rc, greens=greens, delta1=sc.reduced["delta1"],
              delta2=sc.reduced["delta2"], on_boundary="report")
    if ctx.threads > 1 and len(seeds) > 1:
        # order of results follows the seed order, so reports stay deterministic
        with ThreadPoolExecutor(ctx.threads) as pool:
            parts = list(pool.map(lambda s: minimize(domain, sc.reduced["k"],
                                                     sc.reduced["epsilon"], [s], **kw),
                                  seeds))
        report = minimize(domain, sc.reduced["k"], sc.reduced["epsilon"], [], **kw)
        report.minima = [m for p in parts for m in p.minima]
        report.evaluations = [e for p in parts for e in p.evaluations]
        from .reduced import count_distinct
        report.distinct = count_distinct(report.minima, 10 * greens.h)
    else:
        report = minimize(domain, sc.reduced["k"], sc.reduced["epsilon"], seeds, **kw)
    warnings = [f"minimum {i}, eps={e['epsilon']:g}: dropped remainder is not negligible"
                for i, evs in enumerate(report.evaluations) for e in evs
                if e["remainder_dominates"]]
    doc = report.as_dict()
    doc["warnings"] = warnings
    doc["domain"] = domain.as_dict()
    ctx.write("reduce.json", doc)
    rows = []
    for i, (m, evs) in enumerate(zip(report.minima, report.evaluations)):
        for e in evs:
            rows.append({"seed": i, "epsilon": e["epsilon"],
                         "d": " ".join(repr(float(v)) for v in m.d),
                         "xi": " ".join(repr(float(v)) for v in m.xi),
                         "G0": e["value"], "interior": m.interior})
    if rows:
        lio.write_table_csv(ctx.out / "reduce_minima.csv", rows)
    if warnings and ctx.strict:
        raise RemainderDominates("; ".join(warnings))
    return 0


def cmd_solve(ctx):
    from .direct import RadialGrid, continuation, scaling_check
    from .errors import InsufficientRange
    sc = ctx.sc
    prof, _ = ctx.profile()
    exps = prof.exps
    d = sc.direct
    grid = RadialGrid(exps.N, 1.0, d["n"])
    branch = continuation(exps, prof, d["epsilon"], grid, seed_mu=d["seed_mu"], tol=d["tol"],
                          refine_tol=d["refine_tol"])
    rows = branch.table()
    if rows:
        lio.write_table_csv(ctx.out / "branch.csv",
                            [{k: r[k] for k in ("epsilon", "mu_num", "u0", "newton_iterations")}
                             for r in rows])
    doc = {"branch": rows, "stopped": branch.stopped, "refined_mu": branch.refined_mu,
           "grid_nodes": d["n"]}
    code = 0
    try:
        doc["scaling"] = scaling_check(branch.epsilon, branch.mu_num, exps).as_dict()
    except InsufficientRange as exc:
        doc["scaling"] = {"error": str(exc)}
        code = exc.exit_code
    ctx.write("solve.json", doc)
    return code


def verify_identities(ctx):
    """The identity suite; each entry reports its residual and threshold."""
    prof, tails = ctx.profile()
    exps = prof.exps
    c = ctx.constants()
    checks = []

    def add(name, residual, threshold, passed=None):
        ok = bool(abs(residual) < threshold) if passed is None else bool(passed)
        checks.append({"name": name, "residual": float(residual), "threshold": threshold,
                       "passed": ok})

    add("lss", check_lss(tails, exps), 1e-3)
    add("orthogonality", check_orthogonality(prof), 1e-6)
    add("dilation_A2_A3", (c.A2 + exps.N * c.A3 / (exps.q + 1.0)) / abs(c.A2), 1e-6)
    add("A1_positive", c.A1, 0.0, c.A1 > 0)
    add("A1_tilde_positive", c.A1_tilde, 0.0, c.A1_tilde > 0)
    add("green_symmetry", symmetry_residual(Ball(1.0, 0.0, exps.N), seed=ctx.sc.seed), 1e-12)
    mus = np.logspace(-6, -1.5, 10)
    rt = max(abs(mu_from_eps(eps_from_mu(m, exps), exps) / m - 1.0) for m in mus)
    add("scaling_round_trip", rt, 1e-10)
    return checks


def cmd_verify(ctx):
    checks = verify_identities(ctx)
    failed = [c["name"] for c in checks if not c["passed"]]
    ctx.write("verify.json", {"checks": checks, "failed": failed})
    if failed:
        raise VerificationFailed(f"failed identities: {', '.join(failed)}")
    return 0


HANDLERS = {"exponents": cmd_exponents, "bubble": cmd_bubble, "constants": cmd_constants,
            "green-validate": cmd_green_validate, "reduce": cmd_reduce, "solve": cmd_solve,
            "verify": cmd_verify}


# -- entry point ---------------------------------------------------------------

def _env(name):
    return os.environ.get(ENV_PREFIX + name.upper())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="TOML scenario file")
    common.add_argument("--out", help="output directory (default: scenario output.dir)")
    common.add_argument("--threads", type=int, help="worker threads for independent work")
    common.add_argument("--cache", help="cache directory (disabled when unset)")
    common.add_argument("--strict", action="store_true", default=None,
                        help="treat dropped-remainder warnings from reduce as errors")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="lanemden", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _truthy(text):
    return text is not None and text.strip().lower() in ("1", "true", "yes", "on")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario_path = args.scenario or _env("scenario")
        if not scenario_path:
            raise ConfigError("scenario", "no scenario given (--scenario or "
                                          f"{ENV_PREFIX}SCENARIO)")
        sc = load_scenario(scenario_path)
        out = args.out or _env("out") or sc.output_dir
        threads_raw = args.threads if args.threads is not None else _env("threads")
        try:
            threads = int(threads_raw) if threads_raw is not None else 1
        except ValueError:
            raise ConfigError("threads", f"expected an integer, got {threads_raw!r}") from None
        if threads < 1:
            raise ConfigError("threads", "must be at least 1")
        strict = args.strict if args.strict is not None else _truthy(_env("strict"))
        cache = Cache(args.cache or _env("cache"))
        ctx = Context(sc, out, cache, threads, strict, args.command)
        return HANDLERS[args.command](ctx)
    except LaneEmdenError as exc:
        print(f"lanemden {args.command}: error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

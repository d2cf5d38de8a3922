"""Command line: ``roughshe {kernel,field,solve,moments,oscillation,verify}``.

Flags override values from ``--config``.  Every command writes its CSV
(stdout by default) and a JSON manifest next to it.  Exit codes: 0 pass,
1 fail, 2 configuration error, 3 only skipped checks.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import report
from .config import ConfigError, parse_config

WORKERS_ENV = "ROUGHSHE_WORKERS"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SKIPPED = 0, 1, 2, 3


def _common(p, section):
    p.add_argument("--config", help="sectioned key = value file")
    p.add_argument("--alpha", type=float, dest=f"{section}.alpha")
    p.add_argument("--seed", type=int, dest=f"{section}.seed")
    p.add_argument("--workers", type=int, dest="global.workers")
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.add_argument("--svg", help="optional SVG plot path")


def build_parser():
    ap = argparse.ArgumentParser(prog="roughshe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="kernel lemma checks")
    _common(p, "kernel")
    p.add_argument("--verify", dest="kernel.verify",
                   choices=["phi", "U", "f", "fhat", "dalang", "heatconv", "resolvent", "all"])
    p.add_argument("--tol", type=float, dest="kernel.tol")
    p.add_argument("--band-factor", type=float, dest="kernel.band_factor")

    p = sub.add_parser("field", help="lattice-maximum scan of Z")
    _common(p, "field")
    p.add_argument("--t", type=float, dest="field.t")
    p.add_argument("--N", type=int, dest="field.N", help="field resolution per axis")
    p.add_argument("--L", type=float, dest="field.L")
    p.add_argument("--replicas", type=int, dest="field.replicas")
    p.add_argument("--scan", dest="field.scan", help="comma list of sublattice sizes")

    p = sub.add_parser("solve", help="integrate the equation and dump snapshots")
    _common(p, "solve")
    p.add_argument("--sigma", dest="solve.sigma", help="const:c | clip:M | tanh:a | id")
    p.add_argument("--N", type=int, dest="solve.N")
    p.add_argument("--dt", type=float, dest="solve.dt")
    p.add_argument("--T", type=float, dest="solve.T")
    p.add_argument("--replicas", type=int, dest="solve.replicas")
    p.add_argument("--coupled", action="store_const", const=True, dest="solve.coupled")
    p.add_argument("--snapshots", dest="solve.snapshots", help="comma list of times")

    p = sub.add_parser("moments", help="PAM moments by solver or Feynman-Kac")
    _common(p, "moments")
    p.add_argument("--k", dest="moments.k", help="comma list of moment orders")
    p.add_argument("--t-grid", dest="moments.t_grid", help="comma list of times")
    p.add_argument("--method", dest="moments.method", choices=["solver", "feynman-kac"])
    p.add_argument("--replicas", type=int, dest="moments.replicas")

    p = sub.add_parser("oscillation", help="maxima over refining lattices")
    _common(p, "oscillation")
    p.add_argument("--t", type=float, dest="oscillation.t")
    p.add_argument("--deltas", dest="oscillation.deltas", help="comma list of spacings")
    p.add_argument("--replicas", type=int, dest="oscillation.replicas")
    p.add_argument("--budget", type=int, dest="oscillation.budget")
    p.add_argument("--sigma", dest="oscillation.sigma")
    p.add_argument("--N", type=int, dest="oscillation.N")
    p.add_argument("--dt", type=float, dest="oscillation.dt")

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--config")
    p.add_argument("--alpha", type=float, dest="global.alpha")
    p.add_argument("--seed", type=int, dest="global.seed")
    p.add_argument("--workers", type=int, dest="global.workers")
    p.add_argument("--only", dest="verify.only", help="comma list of check ids or criteria")
    p.add_argument("--replicas", type=int, dest="verify.replicas",
                   help="replica budget for every Monte-Carlo check (0 skips them)")
    p.add_argument("--out", help="directory for summary.json")
    return ap


def _overrides(ns):
    return {k: v for k, v in vars(ns).items() if "." in k and v is not None}


def _workers(cfg, ns):
    if getattr(ns, "global.workers", None) is not None:
        return cfg.sections["global"]["workers"]
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"{WORKERS_ENV}={env!r} is not an integer"]) from None
    return cfg.sections["global"]["workers"]


def _emit(ns, cfg, command, kind, rows, seed, extra=None):
    text = report.write_csv(ns.out, kind, rows)
    if ns.out in (None, "-"):
        sys.stdout.write(text)
        mpath = Path(cfg.sections["global"]["out_dir"]) / f"{command}.manifest.json"
    else:
        mpath = Path(str(ns.out) + ".manifest.json")
    outputs = [] if ns.out in (None, "-") else [str(ns.out)]
    if getattr(ns, "svg", None):
        outputs.append(ns.svg)
    report.write_json(mpath, report.manifest(command, cfg.as_dict(), seed, outputs, extra))


# ---------------------------------------------------------------------------
# commands


def cmd_kernel(ns, cfg):
    from .levy_kernel import CorrelationModel, KernelSettings, LaplaceExponent, phi_asymptote

    s = cfg.section("kernel")
    a, B = s["alpha"], s["band_factor"]
    model = CorrelationModel(a, KernelSettings(phi_rtol=s["tol"], seed=s["seed"],
                                               band_factor=B))
    which = s["verify"]
    rows, curves = [], []

    def band_rows(name, grid, values, form, normalised):
        normalised = np.asarray(normalised, dtype=float)
        ok = bool(normalised.max() / normalised.min() <= B)
        for g, v, r in zip(grid, values, normalised):
            rows.append({"check": name, "grid_point": float(g), "value": float(v),
                         "reference_form": form, "ratio": float(r), "pass": ok})
        curves.append({"x": grid, "y": normalised, "label": name})

    if which in ("phi", "all"):
        phi = LaplaceExponent(a, rtol=s["tol"])
        lam = np.array([1e6, 1e8, 1e10, 1e12])
        v = np.array([phi(x) for x in lam])
        r = v / phi_asymptote(lam, a)
        for g, vv, rr in zip(lam, v, r):
            rows.append({"check": "phi", "grid_point": g, "value": vv,
                         "reference_form": "(4 pi lam)^(1/2) log(lam)^alpha", "ratio": rr,
                         "pass": bool(0.7 <= rr <= 1.3)})
        curves.append({"x": lam, "y": r, "label": "phi"})
    if which in ("U", "all"):
        eps = np.geomspace(1e-6, 1e-2, 5)
        est = model.potential_cdf(eps)
        band_rows("U", eps, est.value, "eps^(1/2) log(1/eps)^-alpha",
                  est.value * eps ** -0.5 * np.log(1 / eps) ** a)
    if which in ("f", "all"):
        r = np.geomspace(1e-5, 1e-1, 9)
        v = model.phi_profile(r)
        band_rows("f", r, v, "r^-2 log(1/r)^-alpha", v * r ** 2 * np.log(1 / r) ** a)
    if which in ("fhat", "all"):
        z = np.geomspace(10, 1e6, 11)
        v = model.fhat_radial(z)
        band_rows("fhat", z, v, "|z|^-1 log(|z|)^-alpha", v * z * np.log(z) ** a)
    if which in ("heatconv", "all"):
        t = np.geomspace(1e-6, 1e-2, 5)
        v = model.heat_convolution_at_zero(t)
        band_rows("heatconv", t, v, "t^-1 log(1/t)^-alpha", v * t * np.log(1 / t) ** a)
    if which in ("resolvent", "all"):
        lam = np.geomspace(10, 1e8, 8)
        v = np.array([model.resolvent_at_zero(x) for x in lam]).ravel()
        band_rows("resolvent", lam, v, "log(lam)^(1-alpha)", v * np.log(lam) ** (a - 1))
    if which in ("dalang", "all"):
        d = model.dalang_check()
        for c, val, ratio in zip(d["cutoffs"][2:], d["values"][2:], d["ratios"]):
            rows.append({"check": "dalang", "grid_point": c, "value": val,
                         "reference_form": "Cauchy increment ratio", "ratio": ratio,
                         "pass": d["admissible"]})
    if ns.svg and curves:
        report.write_svg(ns.svg, curves, title=f"kernel checks, alpha={a}",
                         xlabel="grid point (log10)", ylabel="normalised value")
    _emit(ns, cfg, "kernel", "kernel", rows, s["seed"])
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


def cmd_field(ns, cfg):
    from .gaussian_field import AliasingWarning, lattice_max_scan, sublattice_entropy, ZField
    from .levy_kernel import CorrelationModel

    s = cfg.section("field")
    model = CorrelationModel(s["alpha"])
    Ns = s["scan"]
    Nf = max(s["N"], int(round(max(Ns) * s["L"])))
    scan = lattice_max_scan(model, s["t"], Ns, s["replicas"], seed=s["seed"], N_field=Nf,
                            L=s["L"])
    from .gaussian_field import LatticeSpec

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        zf = ZField(model, s["t"], LatticeSpec(Nf, s["L"], "3d" if Nf <= 128 else "2d"))
    rows, dims = [], {}
    for r in scan.rows:
        ent, used = sublattice_entropy(zf, r.N)
        dims[r.N] = used
        rows.append({"N": r.N, "mean_max": r.mean_max, "ci_low": r.ci_low,
                     "ci_high": r.ci_high, "entropy_integral": ent,
                     "ratio": r.mean_max / ent if ent > 0 else math.nan})
    extra = {"entropy_dimension": dims, "notes": scan.notes, "flagged": scan.flagged,
             "K": scan.K, "lower_tail_freq": [r.lower_tail_freq for r in scan.rows]}
    if len(Ns) >= 2 and s["replicas"] > 1:
        slope, ci = scan.exponent_fit(seed=s["seed"])
        extra["exponent"] = slope
        extra["exponent_ci"] = ci
    if ns.svg:
        report.write_svg(ns.svg, [{"x": Ns, "y": [r["mean_max"] for r in rows],
                                   "lo": [r["ci_low"] for r in rows],
                                   "hi": [r["ci_high"] for r in rows], "label": "E max |Z|"}],
                         title=f"lattice maxima, t={s['t']}", xlabel="N (log10)",
                         ylabel="E max")
    _emit(ns, cfg, "field", "field", rows, s["seed"], extra)
    return EXIT_FAIL if scan.flagged else EXIT_OK


def _solver_config(s, T, replicas, coupled, snapshots):
    from .gaussian_field import LatticeSpec
    from .spde_solver import SigmaSpec, SolverConfig

    return SolverConfig(LatticeSpec(s["N"]), s["dt"], T, SigmaSpec.parse(s["sigma"]),
                        seed=s["seed"], coupled=coupled, replicas=replicas,
                        snapshots=tuple(snapshots))


def cmd_solve(ns, cfg):
    from .levy_kernel import CorrelationModel
    from .spde_solver import run

    s = cfg.section("solve")
    model = CorrelationModel(s["alpha"])
    snaps = s["snapshots"] or [s["T"]]
    conf = _solver_config(s, s["T"], s["replicas"], s["coupled"], snaps)
    tr = run(model, conf)

    def rows():
        for i, t in enumerate(tr.times):
            for rep in range(conf.replicas):
                u = tr.u[i][rep].ravel()
                z = tr.z[i][rep].ravel() if conf.coupled else None
                for j in range(u.size):
                    yield {"replica": rep, "t": t, "site_index": j, "u": float(u[j]),
                           "z": None if z is None else float(z[j])}

    extra = {"stability_ok": conf.stability_ok, "noise_ledger": tr.noise_ledger}
    _emit(ns, cfg, "solve", "solve", rows(), s["seed"], extra)
    return EXIT_OK


def cmd_moments(ns, cfg):
    from .levy_kernel import CorrelationModel
    from .moments import (FeynmanKacConfig, estimate_moment_replicas, feynman_kac_series,
                          lyapunov_fit)
    from .spde_solver import run

    s = cfg.section("moments")
    model = CorrelationModel(s["alpha"])
    times = sorted(s["t_grid"])
    rows, curves = [], []
    per_k = {}
    if s["method"] == "feynman-kac":
        for k in s["k"]:
            fk = FeynmanKacConfig(k, max(times), s["bm_dt"], s["replicas"], s["seed"],
                                  cap_radius=1.0 / s["N"])
            res = feynman_kac_series(model, fk, times)
            per_k[k] = [r.estimate for r in res]
    else:
        solver_s = dict(s, sigma="id")
        conf = _solver_config(solver_s, max(times), s["replicas"], False, times)
        tr = run(model, conf)
        for k in s["k"]:
            per_k[k] = [estimate_moment_replicas(u, k, seed=s["seed"]) for u in tr.u]
    for k, ests in per_k.items():
        for t, e in zip(times, ests):
            if e is None:
                continue
            rows.append({"point": f"k={k};t={t:g}", "statistic": "log_moment",
                         "value": e.log_mean, "ci_low": e.ci[0], "ci_high": e.ci[1],
                         "flags": "|".join(e.flags + [f"max_share={e.max_weight_share:.3g}"])})
        if len(times) >= 3 and all(e is not None for e in ests):
            g = lyapunov_fit(times, ests, k)
            rows.append({"point": f"k={k}", "statistic": "lyapunov_slope", "value": g.slope,
                         "ci_low": None, "ci_high": None,
                         "flags": g.label + ("" if g.monotone else "|non-monotone")})
            curves.append({"x": times, "y": [e.log_mean for e in ests],
                           "lo": [e.ci[0] for e in ests], "hi": [e.ci[1] for e in ests],
                           "label": f"k={k}"})
    if ns.svg and curves:
        report.write_svg(ns.svg, curves, title=f"log E u^k ({s['method']})", xlabel="t",
                         ylabel="log moment", logx=False)
    _emit(ns, cfg, "moments", "moments", rows, s["seed"])
    return EXIT_OK


def cmd_oscillation(ns, cfg):
    from .levy_kernel import CorrelationModel
    from .moments import oscillation_growth

    s = cfg.section("oscillation")
    model = CorrelationModel(s["alpha"])
    conf = _solver_config(s, s["t"], s["replicas"], True, ())
    res = oscillation_growth(model, conf, s["deltas"], budget=s["budget"])
    rows = []
    for r in res:
        flags = f"points={r.points}" + ("|truncated" if r.truncated else "")
        pt = f"delta={r.delta:g}"
        for name, m, se in (("u_max", r.u_max, r.u_se), ("z_max", r.z_max, r.z_se),
                            ("d_max", r.d_max, r.d_se)):
            rows.append({"point": pt, "statistic": name, "value": m, "ci_low": m - 1.96 * se,
                         "ci_high": m + 1.96 * se, "flags": flags})
        rows.append({"point": pt, "statistic": "rho", "value": r.rho, "ci_low": None,
                     "ci_high": None, "flags": flags})
        rows.append({"point": pt, "statistic": "z_ratio", "value": r.z_ratio, "ci_low": None,
                     "ci_high": None, "flags": flags})
        rows.append({"point": pt, "statistic": "d_ratio", "value": r.d_ratio, "ci_low": None,
                     "ci_high": None, "flags": flags})
    if ns.svg:
        d = [r.delta for r in res]
        report.write_svg(ns.svg, [
            {"x": d, "y": [r.z_ratio for r in res], "label": "E max|Z(y)-Z(x)| / rho"},
            {"x": d, "y": [r.d_ratio for r in res], "label": "E max|D| / rho"}],
            title=f"oscillation growth, t={s['t']}", xlabel="delta (log10)", ylabel="ratio")
    _emit(ns, cfg, "oscillation", "oscillation", rows, s["seed"])
    return EXIT_OK


def cmd_verify(ns, cfg):
    from .checks import VerifyContext, exit_code, select, verify_all

    g = cfg.sections["global"]
    v = cfg.sections["verify"]
    ctx = VerifyContext(alpha=g["alpha"], seed=g["seed"], replicas=v["replicas"])
    try:
        select(v["only"])
    except KeyError as exc:
        raise ConfigError([str(exc.args[0])]) from None

    def show(r):
        print(json.dumps(r.as_json(), sort_keys=True), flush=True)

    results = verify_all(ctx, v["only"], _workers(cfg, ns), on_result=show)
    code = exit_code(results)
    if ns.out:
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_json(out / "summary.json", {
            "checks": [r.as_json() for r in results], "exit_code": code,
            "manifest": report.manifest("verify", cfg.as_dict(), g["seed"])})
    for r in results:
        print(r.line(), file=sys.stderr)
    return code


COMMANDS = {"kernel": cmd_kernel, "field": cmd_field, "solve": cmd_solve,
            "moments": cmd_moments, "oscillation": cmd_oscillation, "verify": cmd_verify}


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = parse_config(path=ns.config, overrides=_overrides(ns))
        return COMMANDS[ns.command](ns, cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line front-end.

Subcommands
-----------
density     print CSV "b,p" of the Bessel bridge marginal density
mu          print the finite-part pairing <mu_alpha, f> for a stock function
sl-solve    emit CSV "r,phi,phi_prime,rho" for a measure's transform
sigma       emit CSV "b,sigma" of a conditional Laplace functional
ibpf-check  run configured verification cases; JSON report + CSV summary
sample      emit exact Bessel bridge paths as CSV
spde-sim    run the weak delta=2 decomposition; per-replica CSV + JSON summary
run-suite   orchestrate ibpf-check and spde-sim from one config file

Exit codes: 0 all checks passed, 1 at least one case failed, 2 configuration
or parse error.  All outputs are byte-identical for identical (config, seed):
reports carry no timestamps and floats use repr-exact formatting.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import (BridgeSpec, ExpFunctional, FiniteMeasure, bump, poly_bump)
from .ibpf import IbpfCase, verify
from .mu_dist import SmoothTestFn, mu_pair
from .samplers import RngStream, bessel_bridge_general
from .specfun import bridge_density
from .sturm_liouville import solve_sl
from .laplace_sigma import SigmaContext, sigma_bridge, sigma_uncond
from . import spde

__all__ = ["main"]

#: Version tag of the fixed report CSV column set.
REPORT_CSV_COLUMNS = ("case_id", "lhs_analytic", "lhs_mc", "stderr", "rhs",
                      "abs_err", "rel_err", "pass")


class ConfigError(ValueError):
    """Malformed configuration (maps to exit code 2)."""


# ---------------------------------------------------------------------------
# Config parsing.
# ---------------------------------------------------------------------------

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path!r} at line {exc.lineno} column "
            f"{exc.colno}: {exc.msg}") from exc


def _parse_h(d):
    kind = d.get("type", "bump")
    theta = float(d.get("theta", 0.2))
    if kind == "bump":
        return bump(theta)
    if kind == "poly_bump":
        return poly_bump(theta)
    raise ConfigError(f"unknown test function type {kind!r}")


def _parse_phi(terms):
    if not terms:
        return ExpFunctional.one()
    try:
        return ExpFunctional(
            [(float(t.get("coef", 1.0)),
              FiniteMeasure.from_json_dict(t.get("measure", {})))
             for t in terms])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad functional term: {exc}") from exc


def _parse_case(d, default_tol=None):
    try:
        spec = BridgeSpec(float(d["delta"]), float(d.get("a", 0.0)),
                          float(d.get("ap", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"case missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad case spec: {exc}") from exc
    tol = float(d.get("tol", default_tol if default_tol is not None else 1e-5))
    if tol <= 0:
        raise ConfigError("tolerance must be positive")
    return IbpfCase(
        spec=spec,
        phi=_parse_phi(d.get("phi", [])),
        h=_parse_h(d.get("h", {})),
        mode=d.get("mode", "bridge"),
        tol=tol,
        case_id=d.get("id", ""),
    )


def _parse_cases(config, default_tol=None):
    raw = config.get("cases", [])
    if not isinstance(raw, list):
        raise ConfigError('"cases" must be a list')
    cases = [_parse_case(d, default_tol) for d in raw]
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate case ids in config: {sorted(ids)}")
    return cases


# ---------------------------------------------------------------------------
# Report emission.
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def reports_to_json(reports):
    return json.dumps([r.to_json_dict() for r in reports], indent=2,
                      sort_keys=True) + "\n"


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_COLUMNS)
    for r in reports:
        d = r.to_json_dict()
        writer.writerow([_fmt(d[c]) for c in REPORT_CSV_COLUMNS])
    return buf.getvalue()


def _write_reports(reports, out):
    if out is None:
        sys.stdout.write(reports_to_json(reports))
        return
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(reports_to_json(reports))
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write(reports_to_csv(reports))


def _jobs(args):
    if getattr(args, "jobs", None):
        return max(int(args.jobs), 1)
    env = os.environ.get("BESSEL_LAB_JOBS")
    return max(int(env), 1) if env else 1


# ---------------------------------------------------------------------------
# Subcommand implementations.
# ---------------------------------------------------------------------------

def _emit_csv(rows, header, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_density(args):
    bs = np.linspace(0.0, args.bmax, args.n)
    if args.delta < 1.0 and bs[0] == 0.0:
        bs[0] = 1e-12  # density diverges at 0 below dimension 1
    rows = [(float(b), float(bridge_density(args.delta, args.r, args.a,
                                            args.ap, float(b))))
            for b in bs]
    _emit_csv(rows, ("b", "p"), args.out)
    return 0


_STOCK_FNS = {
    "exp": lambda lam: SmoothTestFn.exp_decay(lam),
    "gauss": lambda lam: SmoothTestFn.gauss(),
    "poly_exp": lambda lam: SmoothTestFn.poly_exp(),
}


def cmd_mu(args):
    if args.fn not in _STOCK_FNS:
        raise ConfigError(f"unknown stock function {args.fn!r}; "
                          f"choose from {sorted(_STOCK_FNS)}")
    fn = _STOCK_FNS[args.fn](args.lam)
    val = mu_pair(args.alpha, fn)
    payload = {"alpha": args.alpha, "fn": args.fn, "value": val}
    text = json.dumps(payload, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def _measure_from_config(config):
    if "measure" not in config:
        raise ConfigError('config must contain a "measure" object')
    try:
        return FiniteMeasure.from_json_dict(config["measure"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad measure: {exc}") from exc


def cmd_sl_solve(args):
    config = _load_json(args.config)
    m = _measure_from_config(config)
    sol = solve_sl(m)
    rs = np.linspace(0.0, 1.0, args.n)
    rows = [(float(r), float(sol.phi(r)), float(sol.dphi(r)),
             float(sol.rho(r))) for r in rs]
    _emit_csv(rows, ("r", "phi", "phi_prime", "rho"), args.out)
    return 0


def cmd_sigma(args):
    config = _load_json(args.config)
    m = _measure_from_config(config)
    spec = BridgeSpec(float(config["delta"]), float(config.get("a", 0.0)),
                      float(config.get("ap", 0.0)))
    mode = config.get("mode", "bridge")
    if mode not in ("bridge", "unconstrained"):
        raise ConfigError(f"unknown mode {mode!r}")
    ctx = SigmaContext(spec, m)
    fn = sigma_bridge if mode == "bridge" else sigma_uncond
    bs = np.linspace(0.0, args.bmax, args.n)
    vals = fn(ctx, args.r, bs)
    rows = list(zip(map(float, bs), map(float, np.atleast_1d(vals))))
    _emit_csv(rows, ("b", "sigma"), args.out)
    return 0


def _verify_descriptor(payload):
    """Worker entry for parallel case execution (takes JSON-able data)."""
    case_d, mc_n, seed, stream = payload
    case = _parse_case(case_d)
    rng = RngStream(seed, stream) if mc_n > 0 else None
    return verify(case, mc_n=mc_n, rng=rng)


def cmd_ibpf_check(args):
    config = _load_json(args.config)
    cases = _parse_cases(config, default_tol=args.tol)
    mc_n = args.mc if args.mc is not None else int(config.get("mc", 0))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    jobs = _jobs(args)
    raw = config.get("cases", [])
    payloads = [(d, mc_n, seed, i) for i, d in enumerate(raw)]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_verify_descriptor, payloads))
    else:
        reports = [_verify_descriptor(p) for p in payloads]
    # re-apply ids/tolerances from the parsed (deduplicated) case list
    for rep, case in zip(reports, cases):
        rep.case_id = case.case_id
    _write_reports(reports, args.out)
    ok = all(r.to_json_dict()["pass"] for r in reports)
    return 0 if ok else 1


def cmd_sample(args):
    rng = RngStream(args.seed)
    times = np.linspace(0.0, 1.0, args.mesh)
    paths = bessel_bridge_general(args.delta, args.a, args.ap, times, rng,
                                  size=args.n)
    header = ("r",) + tuple(f"path{i}" for i in range(args.n))
    rows = [(float(times[j]),) + tuple(float(v) for v in paths[:, j])
            for j in range(len(times))]
    _emit_csv(rows, header, args.out)
    return 0


def _spde_summary(series, h, theta=0.2):
    ratio, se = spde.bracket_ratio(series, h)
    coef, errs = spde.martingale_regression(series)
    zmax = float(np.max(np.abs(coef / errs)))
    det_ok = True
    grid = np.linspace(theta, 1.0 - theta, 7)
    for r in grid:
        for s in grid:
            if r == s:
                continue
            _, det, bound, _ = spde.gamma_rs(float(r), float(s),
                                             float(series.times[-1]),
                                             theta, 256)
            det_ok &= det >= bound
    passed = (0.85 <= ratio <= 1.15) and zmax <= 3.0 and det_ok
    return {
        "bracket_ratio": ratio,
        "bracket_stderr": se,
        "regression_coef": [float(c) for c in coef],
        "regression_stderr": [float(e) for e in errs],
        "regression_max_z": zmax,
        "gamma_det_bound_ok": bool(det_ok),
        "pass": bool(passed),
    }


def cmd_spde_sim(args):
    if args.eta >= args.eps:
        raise ConfigError("need eta < eps")
    h = bump(0.2)
    rng = RngStream(args.seed)
    series = spde.run_decomposition(
        h, args.eps, args.eta, args.T, args.dt, args.K, rng,
        replicas=args.replicas, store_every=args.store_every)
    summary = _spde_summary(series, h)
    if args.out is None:
        sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        width = len(str(args.replicas - 1))
        for i in range(args.replicas):
            rows = [(float(t), float(series.uh[i, j]), float(series.lap[i, j]),
                     float(series.n_drift[i, j]), float(series.mart[i, j]))
                    for j, t in enumerate(series.times)]
            name = os.path.join(args.out, f"replica_{i:0{width}d}.csv")
            _emit_csv(rows, ("t", "uh", "lap", "n", "m"), name)
    return 0 if summary["pass"] else 1


def cmd_run_suite(args):
    config = _load_json(args.config)
    out = args.out
    status = 0
    reports = []
    if config.get("cases"):
        sub = argparse.Namespace(
            config=args.config, out=out, tol=args.tol,
            mc=args.mc, seed=args.seed, jobs=getattr(args, "jobs", None))
        status = max(status, cmd_ibpf_check(sub))
    if "spde" in config:
        s = config["spde"]
        try:
            sub = argparse.Namespace(
                K=int(s.get("K", 256)), dt=float(s.get("dt", 1e-5)),
                T=float(s.get("T", 0.05)), eps=float(s.get("eps", 0.05)),
                eta=float(s.get("eta", 0.01)),
                replicas=int(s.get("replicas", 200)),
                store_every=int(s.get("store_every", 100)),
                seed=args.seed if args.seed is not None
                else int(s.get("seed", 0)),
                out=os.path.join(out, "spde") if out else None)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad spde settings: {exc}") from exc
        status = max(status, cmd_spde_sim(sub))
    if not config.get("cases") and "spde" not in config:
        _write_reports(reports, out)
    return status


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bessel-lab",
        description="Numerical laboratory for Bessel bridge integration-by-"
                    "parts identities and the weak delta=2 dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="bridge marginal density as CSV")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--ap", type=float, default=0.0)
    p.add_argument("--bmax", type=float, default=4.0)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("mu", help="finite-part pairing with a stock function")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mu)

    p = sub.add_parser("sl-solve", help="transform phi, phi', rho as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sl_solve)

    p = sub.add_parser("sigma", help="conditional Laplace functional as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--bmax", type=float, default=4.0)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sigma)

    p = sub.add_parser("ibpf-check", help="run verification cases")
    p.add_argument("--config", required=True)
    p.add_argument("--mc", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ibpf_check)

    p = sub.add_parser("sample", help="exact Bessel bridge paths as CSV")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--ap", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mesh", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("spde-sim", help="weak delta=2 decomposition run")
    p.add_argument("--K", type=int, default=256)
    p.add_argument("--dt", type=float, default=1e-5)
    p.add_argument("--T", type=float, default=0.05)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--store-every", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spde_sim)

    p = sub.add_parser("run-suite", help="orchestrate a full suite config")
    p.add_argument("--config", required=True)
    p.add_argument("--mc", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_suite)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

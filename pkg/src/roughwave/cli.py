"""Command line entry point: ``roughwave <subcommand> [flags]``.

Exit codes: 0 on success or a passing experiment, 1 when an experiment
fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments as ex
from .errors import RoughwaveError
from .fbm import HurstParams, sample_fbm
from .grids import SamplePath, make_uniform_grid, write_path_csv
from .integrators import controlled, max_depth, rough_integral, young_integral
from .lift import lift_piecewise_linear, write_lift_csv
from .solvers import holder_sigma, solve_rde, solve_yde

EXPERIMENTS = ("averaging", "integral-rate", "iterated-rates", "uniqueness")


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("ROUGHWAVE_SEED")
    return int(env) if env else 0


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(ex._clean(obj), indent=2, sort_keys=True) + "\n")


def _sample(args):
    grid = make_uniform_grid(args.T, args.n)
    return sample_fbm(HurstParams(args.H, args.d2), grid, _seed(args), args.sampler)


def cmd_sample(args) -> int:
    s = _sample(args)
    out = _out(args)
    write_path_csv(s.B, out / "sample.csv")
    _write_json(out / "sample.json", {"schema": ex.SCHEMA, "H": args.H, "n": args.n, "T": args.T,
                                      "d2": args.d2, "seed": _seed(args), "sampler": args.sampler})
    return 0


def cmd_lift(args) -> int:
    s = _sample(args)
    rp = lift_piecewise_linear(s.B)
    out = _out(args)
    write_path_csv(s.B, out / "sample.csv")
    write_lift_csv(rp, out / "lift.csv")
    return 0


def cmd_integrate(args) -> int:
    """``int f(B) dB`` for a scalar fBm and a named smooth integrand."""
    args.d2 = 1
    s = _sample(args)
    f = ex.smooth_field(args.f)
    fd = ex._derivative_list(f, 1)
    b = s.B.values[:, 0]
    depth = min(args.ladder_depth, max_depth(args.n))
    if args.H > 0.5:
        res = young_integral(SamplePath(s.grid, fd[0](b)), s.B, depth)
        rep = res.report
    else:
        rp = lift_piecewise_linear(s.B)
        Z = controlled(SamplePath(s.grid, fd[0](b)), fd[1](b)[:, None, None], rp)
        cp = rough_integral(Z, rp, depth)
        res, rep = cp.path(), cp.report
    out = _out(args)
    write_path_csv(res, out / "integral.csv")
    body = {"schema": ex.SCHEMA, "H": args.H, "n": args.n, "seed": _seed(args), "f": args.f,
            "ladder_depth": depth, "value": float(res.values[-1, 0])}
    if rep is not None:
        body["sewing"] = rep.to_dict()
    _write_json(out / "integral.json", body)
    return 0


def cmd_solve(args) -> int:
    args.d2 = 1
    s = _sample(args)
    sigma = holder_sigma(args.gamma, args.ell, 1, 1, seed=_seed(args))
    if args.H > 0.5:
        scheme = "euler" if args.scheme == "auto" else args.scheme
        res = solve_yde(sigma, args.x0, s, scheme)
    else:
        res = solve_rde(sigma, args.x0, lift_piecewise_linear(s.B))
    out = _out(args)
    write_path_csv(res.path, out / "solution.csv")
    _write_json(out / "diagnostics.json", {"schema": ex.SCHEMA, "H": args.H, "gamma": args.gamma,
                                           "ell": args.ell, "scheme": res.scheme, "n": args.n,
                                           "T": args.T, "seed": _seed(args), "x0": args.x0,
                                           "mesh": res.mesh, **res.diagnostics})
    return 0


def _run_experiment(args):
    seed = _seed(args)
    if args.experiment == "averaging":
        return ex.exp_averaging_identity(args.H, ex.smooth_field(args.g), 1.0,
                                         (0.0, 0.0, 1.0), args.mc, seed, n=args.n or 512)
    if args.experiment == "integral-rate":
        return ex.exp_fbm_integral_rate(args.H, args.gamma_tilde, mc=args.mc, seed=seed,
                                        n=args.n or 1024)
    if args.experiment == "iterated-rates":
        return ex.exp_iterated_rates(args.H, mc=args.mc, seed=seed, n=args.n or 1024,
                                     gamma_tilde=args.gamma_tilde)
    levels = range(args.min_level, args.max_level + 1)
    return ex.exp_uniqueness(args.H, args.gamma, args.ell, levels,
                             range(seed, seed + args.seeds), sigma_seed=seed)


def cmd_verify(args) -> int:
    rep = _run_experiment(args)
    body = rep.to_dict()
    text = json.dumps(body, indent=2, sort_keys=True)
    if args.out:
        (_out(args) / f"verify-{args.experiment}.json").write_text(text + "\n")
    print(text)
    return 0 if rep.passed in (True, None) else 1


def cmd_report(args) -> int:
    """Summarise every versioned report found under ``--out``."""
    out = Path(args.out)
    rows = []
    for p in sorted(out.glob("*.json")):
        try:
            body = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if body.get("schema") != ex.SCHEMA or "experiment" not in body:
            continue
        rows.append({"file": p.name, "experiment": body["experiment"],
                     "passed": body.get("passed"), "tags": body.get("tags", [])})
    for r in rows:
        verdict = {True: "PASS", False: "FAIL", None: "EXEMPT"}[r["passed"]]
        print(f"{verdict:6s} {r['experiment']:16s} {r['file']}")
    _write_json(out / "summary.json", {"schema": ex.SCHEMA, "reports": rows})
    return 1 if any(r["passed"] is False for r in rows) else 0


def _common(p, n_default=1024):
    p.add_argument("--H", type=float, default=0.75)
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--d2", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sampler", choices=("cholesky", "volterra", "hosking"), default="cholesky")
    p.add_argument("--out", default=".")
    p.add_argument("--config", default=None, help="JSON file with flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample an fBm path to CSV")
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("lift", help="sample a path and write its piecewise-linear lift")
    _common(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("integrate", help="sew int f(B) dB along a dyadic ladder")
    _common(p)
    p.add_argument("--f", default="sin", choices=("sin", "cos", "x", "const"))
    p.add_argument("--ladder-depth", type=int, default=10)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("solve", help="solve dX = sigma(X) dB with a Hölder test coefficient")
    _common(p)
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--ell", type=float, default=2.0)
    p.add_argument("--scheme", default="auto", choices=("auto", "euler", "two-step"))
    p.add_argument("--x0", type=float, default=0.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run an experiment and print its JSON report")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--H", type=float, default=0.5)
    p.add_argument("--mc", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--g", default="x", choices=("sin", "cos", "x", "const"))
    p.add_argument("--gamma-tilde", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--ell", type=float, default=2.0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--min-level", type=int, default=8)
    p.add_argument("--max-level", type=int, default=14)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="JSON file with flag defaults")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="summarise reports under --out")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when it is given."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, sys.argv[1:] if argv is None else argv)
    if getattr(args, "mc", "unset") is None:
        args.mc = 100_000 if args.experiment == "averaging" else 1000
    try:
        return args.func(args)
    except RoughwaveError as exc:
        print(f"roughwave: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

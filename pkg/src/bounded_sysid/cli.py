"""Command-line front end: ``bounded-sysid {simulate,estimate,bench,bounds,check}``.

Exit codes: 0 ok, 1 failed check, 2 usage or invalid parameters, 3 I/O,
4 numerical or model error, 5 infeasible or unbounded problem.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import bench as bench_mod
from . import theory
from .errors import (BoundedSysIdError, FeasibilityError, InvalidParam, NumericalError,
                     UnstableSystem)
from .estimators import Method, cls_estimate, ols_estimate, ols_sme_estimate, sme_polytope
from .parallel import resolve_workers
from .system import (SystemMatrix, make_noise_model, make_rng, random_system, read_trajectory_csv,
                     simulate, write_trajectory_csv)

DEFAULT_SEED = bench_mod.DEFAULT_SEED

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_INFEASIBLE = range(6)

CHECK_REPS = {"tv": 100_000, "lemma3": 10_000, "envelope": 1_000}


class UsageError(Exception):
    pass


def parse_seed(text: str) -> int:
    if text == "now":
        return time.time_ns() % (1 << 64)
    try:
        seed = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer or 'now', got {text!r}") from None
    if not 0 <= seed < 1 << 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return seed


def _emit_json(obj, out=None):
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- simulate -----------------------------------------------------------------

def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_text()
    if path.suffix.lower() == ".json":
        return np.array(json.loads(raw), dtype=float)
    rows = [r for r in raw.replace(";", "\n").splitlines() if r.strip()]
    return np.array([[float(v) for v in r.replace(",", " ").split()] for r in rows])


def cmd_simulate(args) -> int:
    model = make_noise_model(args.noise, args.wbar, args.sigma)
    if args.a is not None or args.a_file is not None:
        if args.a is not None:
            vals = [float(v) for v in args.a.replace(",", " ").split()]
            k = math.isqrt(len(vals))
            if k * k != len(vals):
                raise InvalidParam(f"--a needs n^2 entries, got {len(vals)}")
            A = np.array(vals).reshape(k, k)
        else:
            A = _load_matrix(args.a_file)
        sys_ = SystemMatrix.from_array(A)
        if args.n is not None and args.n != sys_.n:
            raise InvalidParam(f"--n {args.n} disagrees with the {sys_.n}x{sys_.n} matrix")
        if args.rho is not None:
            if sys_.rho == 0:
                raise InvalidParam("cannot rescale a matrix with zero spectral radius")
            sys_ = SystemMatrix.from_array(A * (args.rho / sys_.rho))
    else:
        if args.n is None:
            raise InvalidParam("--n is required with --random")
        rho = 0.7 if args.rho is None else args.rho
        if rho >= 1.0:
            raise UnstableSystem(f"requested spectral radius {rho} >= 1")
        sys_ = random_system(args.n, args.low, args.high, rho, make_rng(args.seed, "system"))
    if sys_.rho >= 1.0:
        raise UnstableSystem(f"spectral radius {sys_.rho:.6g} >= 1")
    traj = simulate(sys_, model, args.T, make_rng(args.seed, "noise"))
    write_trajectory_csv(traj, args.out)
    summary = {"out": str(args.out), "n": sys_.n, "T": traj.T, "rho": sys_.rho,
               "max_abs_state": float(np.max(np.abs(traj.states))), "seed": args.seed,
               "noise": model.to_dict(), "A": sys_.A.tolist()}
    if sys_.n == 1:
        summary["envelope_bound"] = theory.state_envelope_bound(float(sys_.A[0, 0]), args.wbar)
    _emit_json(summary)
    return EXIT_OK


# -- estimate -----------------------------------------------------------------

def cmd_estimate(args) -> int:
    traj = read_trajectory_csv(args.input)
    w = args.wbar
    wanted = ["ols", "ols-sme", "cls"] if args.method == "all" else [args.method]
    P = sme_polytope(traj, w)
    ols = ols_estimate(traj, w)
    reports = []
    blend = None
    for m in wanted:
        if m == "ols":
            reports.append(ols)
        elif m == "ols-sme":
            blend = ols_sme_estimate(traj, w, ols=ols, polytope=P)
            reports.append(blend)
        else:
            reports.append(cls_estimate(traj, w, ols=ols, polytope=P, blend=blend))
    payload = [r.to_dict() for r in reports]
    _emit_json(payload if args.method == "all" else payload[0], args.out)
    return EXIT_OK


# -- bench --------------------------------------------------------------------

_NUM = {"type": "number"}
BENCH_SCHEMA = {
    "type": "object",
    "required": ["system", "noise", "out"],
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "required": ["n", "entry_low", "entry_high", "target_rho"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "entry_low": _NUM,
                "entry_high": _NUM,
                "target_rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "noise": {
            "type": "object",
            "required": ["kind", "w_bar"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["uniform", "tgauss"]},
                "w_bar": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T_grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
                "trials": {"type": "integer", "minimum": 1},
                "methods": {"type": "array",
                            "items": {"enum": [m.value for m in Method]}},
                "error_norm": {"enum": ["spectral", "frobenius"]},
                "diameter_directions": {"type": "integer", "minimum": 0},
            },
        },
        "seed": {"oneOf": [{"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                           {"const": "now"}]},
        "out": {
            "type": "object",
            "required": ["csv", "svg"],
            "additionalProperties": False,
            "properties": {"csv": {"type": "string"}, "svg": {"type": "string"}},
        },
    },
}


def _field_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
    elif err.validator == "additionalProperties":
        extra = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(extra)
    return ".".join(parts) or "<root>"


def load_bench_config(path) -> tuple[bench_mod.ExperimentConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    errors = sorted(jsonschema.Draft202012Validator(BENCH_SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise UsageError(f"{path}: {_field_path(err)}: {err.message}")
    s, nz, ex = doc["system"], doc["noise"], doc.get("experiment", {})
    if nz["kind"] == "tgauss" and "sigma" not in nz:
        raise UsageError(f"{path}: noise.sigma: required for kind 'tgauss'")
    seed = doc.get("seed", DEFAULT_SEED)
    kw = dict(n=s["n"], entry_low=s["entry_low"], entry_high=s["entry_high"],
              target_rho=s["target_rho"], noise_kind=nz["kind"], w_bar=nz["w_bar"],
              sigma=nz.get("sigma"), master_seed=parse_seed(str(seed)))
    for key in ("T_grid", "trials", "methods", "error_norm", "diameter_directions"):
        if key in ex:
            kw[key] = ex[key]
    try:
        cfg = bench_mod.ExperimentConfig(**kw)
    except InvalidParam as exc:
        raise UsageError(f"{path}: experiment: {exc}") from None
    return cfg, doc["out"]


def cmd_bench(args) -> int:
    from .plotting import emit_plot

    cfg, out = load_bench_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    workers = resolve_workers(args.threads)
    report = bench_mod.run_convergence_experiment(cfg, workers)
    csv_path = Path(out["csv"])
    bench_mod.emit_csv(report, csv_path)
    bench_mod.emit_summary_csv(report, csv_path.with_name(csv_path.stem + ".summary.csv"))
    if report.curves:
        emit_plot(report, out["svg"])
    print(f"{'method':<14}{'slope':>10}{'missing':>9}   (fit over T >= {report.summary()['fit_T_min']})")
    for m, c in report.curves.items():
        print(f"{m.value:<14}{c.slope:>10.4f}{c.missing:>9}")
    print(f"trials={cfg.trials} seed={cfg.master_seed} workers={workers} "
          f"elapsed={report.elapsed_s:.1f}s")
    return EXIT_OK


# -- bounds -------------------------------------------------------------------

def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidParam(f"--which {args.which} needs {', '.join(missing)}")


def cmd_bounds(args) -> int:
    w = args.wbar
    c = args.cwbar
    if c is None and w is not None:
        c = 1.0 / (2.0 * w)
    out = {"which": args.which}
    flags = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.which == "thm1":
            _need(args, "eps", "delta", "n", "wbar")
            value = theory.thm1_sample_lower_bound(args.eps, args.delta, args.n, c, w)
            inputs = dict(eps=args.eps, delta=args.delta, n=args.n, c_w_bar=c, w_bar=w)
            flags["vacuous"] = 2 * args.delta / args.n >= 1
        elif args.which == "lemma1":
            _need(args, "eps", "wbar", "T")
            mu = 0.0 if args.mu is None else args.mu
            res = theory.lemma1_tv_upper_bound(mu, args.eps, w, c, args.T)
            value = res.value
            inputs = dict(mu=mu, eps=args.eps, w_bar=w, c_w_bar=c, T=args.T)
            flags["vacuous"] = res.vacuous
        elif args.which == "lemma3":
            _need(args, "a", "wbar", "T")
            value = theory.lemma3_variance_bound(args.a, w, args.T)
            inputs = dict(a=args.a, w_bar=w, T=args.T)
        elif args.which == "envelope":
            _need(args, "a", "wbar")
            value = theory.state_envelope_bound(args.a, w)
            inputs = dict(a=args.a, w_bar=w)
        else:
            _need(args, "a", "eps", "T", "sigma_w", "wbar")
            given = any(v is not None for v in (args.C1, args.C2, args.C3, args.C5))
            if args.C3 is not None and args.C5 is not None:
                raise InvalidParam("give either --C3 or --C5, not both")
            C1 = 1.0 if args.C1 is None else args.C1
            C2 = 1.0 if args.C2 is None else args.C2
            if args.C3 is not None:
                consts = theory.Thm2Constants.from_c3(C1, C2, args.C3)
            elif given:
                consts = theory.Thm2Constants.given(C1, C2, 1.0 if args.C5 is None else args.C5)
            else:
                consts = theory.Thm2Constants()
            value = theory.thm2_probability_upper_bound(args.a, args.eps, args.T, args.sigma_w, w,
                                                        consts)
            first, second = theory.thm2_branches(args.a, args.eps, args.T, args.sigma_w, w, consts)
            inputs = dict(a=args.a, eps=args.eps, T=args.T, sigma_w=args.sigma_w, w_bar=w,
                          C1=consts.C1, C2=consts.C2, C5=consts.C5)
            out["C4"] = consts.c4(args.a, w, args.sigma_w)
            out["branches"] = [first, second]
            flags["placeholder_constants"] = consts.placeholder
    for wmsg in caught:
        print(f"warning: {wmsg.message}", file=sys.stderr)
    out["inputs"] = inputs
    out["value"] = value
    out["flags"] = flags
    out["valid"] = not any(flags.values())
    _emit_json(out)
    return EXIT_OK


# -- check --------------------------------------------------------------------

def cmd_check(args) -> int:
    suites = list(theory.SUITES) if args.suite == "all" else [args.suite]
    workers = resolve_workers(args.threads)
    ok = True
    for name in suites:
        reps = args.reps if args.reps is not None else CHECK_REPS[name]
        for r in theory.SUITES[name](reps=reps, seed=args.seed, workers=workers):
            ok &= r.passed
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<9}{r.label:<18}"
                  f"margin={r.margin:.6g}  {r.detail}")
    print("all checks passed" if ok else "some checks FAILED")
    return EXIT_OK if ok else EXIT_CHECK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $BOUNDED_SYSID_THREADS or CPU count)")
    common.add_argument("-v", "--verbose", action="store_true", help="print tracebacks on errors")

    p = argparse.ArgumentParser(prog="bounded-sysid",
                                description="Identification of LTI systems under bounded noise.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate one trajectory to CSV")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--a", help="system matrix entries, row-major, comma or space separated")
    src.add_argument("--a-file", help="system matrix as CSV/whitespace text or JSON nested list")
    src.add_argument("--random", action="store_true", help="random matrix (default)")
    s.add_argument("--n", type=int)
    s.add_argument("--rho", type=float, help="spectral radius to normalise to (random default 0.7)")
    s.add_argument("--low", type=float, default=-5.0, help="random entry lower bound")
    s.add_argument("--high", type=float, default=5.0, help="random entry upper bound")
    s.add_argument("--noise", choices=["uniform", "tgauss"], default="uniform")
    s.add_argument("--wbar", type=float, default=2.0)
    s.add_argument("--sigma", type=float)
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--seed", type=parse_seed, default=DEFAULT_SEED)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=[common], help="estimate A from a trajectory CSV")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--wbar", type=float, required=True)
    e.add_argument("--method", choices=["ols", "ols-sme", "cls", "all"], default="all")
    e.add_argument("--out", help="report JSON path (default: stdout)")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", parents=[common], help="run the convergence experiment")
    b.add_argument("config", help="JSON experiment description")
    b.add_argument("--seed", type=parse_seed, default=None, help="override the config seed")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("bounds", parents=[common], help="evaluate a closed-form bound")
    d.add_argument("--which", required=True, choices=["thm1", "thm2", "lemma1", "lemma3", "envelope"])
    for name in ("eps", "delta", "wbar", "cwbar", "mu", "a", "sigma-w", "C1", "C2", "C3", "C5"):
        d.add_argument(f"--{name}", type=float)
    d.add_argument("--n", type=int)
    d.add_argument("--T", type=int)
    d.set_defaults(func=cmd_bounds)

    c = sub.add_parser("check", parents=[common], help="Monte-Carlo validation of the bounds")
    c.add_argument("--suite", choices=["tv", "lemma3", "envelope", "all"], default="all")
    c.add_argument("--reps", type=int)
    c.add_argument("--seed", type=parse_seed, default=DEFAULT_SEED)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidParam) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    except FeasibilityError as exc:
        code, msg = EXIT_INFEASIBLE, f"{type(exc).__name__}: {exc}"
    except (NumericalError, BoundedSysIdError) as exc:
        code, msg = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    if args.verbose:
        import traceback
        traceback.print_exc()
    print(f"bounded-sysid {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

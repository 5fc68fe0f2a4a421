"""``quadenv`` command line.

Exit codes: 0 success, 2 invalid arguments or config, 3 enumeration cap
exceeded, 4 solver divergence.
"""
import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import tomli

from . import __version__, experiments
from .certificates import (
    DEFAULT_CAP,
    _jsonable,
    certify_card_minimizer,
    certify_pk_minimizer,
    guarantee_oracle_card,
    guarantee_oracle_pk,
    rlip_beta,
)
from .exceptions import DivergenceError, EnumerationCapError, InvalidArgumentError
from .model import (
    generate_sensing_matrix,
    load_instance,
    make_instance,
    read_matrix_csv,
    read_vector_csv,
    save_instance,
    support_of,
    write_matrix_csv,
    write_vector_csv,
)
from .penalties import PENALTY_NAMES, make_penalty
from .solver import SolverConfig, fbs_solve

_THEOREMS = ("card", "pk", "oracle-card", "oracle-pk")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CAP = 3
EXIT_DIVERGED = 4

logger = logging.getLogger("quadenv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidArgumentError(message)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _step(text):
    return text if text == "auto" else float(text)


def _add_instance_args(p):
    p.add_argument("--instance", type=Path, help="directory written by 'gen'")
    p.add_argument("--matrix", type=Path, help="A as CSV (alternative to --instance)")
    p.add_argument("--b", type=Path, help="measurements as CSV (with --matrix)")


def _add_trial_args(p):
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--k", type=int, default=10, dest="K")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--x0-norm", type=float, default=11.0)
    p.add_argument("--mag-range", type=_float_list, default=[2.0, 4.0])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path)


def build_parser():
    parser = _Parser(prog="quadenv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", type=Path, help="TOML file; its keys override flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a random instance (or just a matrix)")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int, default=0, dest="K")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0-norm", type=float, default=11.0)
    p.add_argument("--mag-range", type=_float_list, default=[2.0, 4.0])
    p.add_argument("--matrix-only", action="store_true")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("solve", help="run FBS on one instance")
    _add_instance_args(p)
    p.add_argument("--method", choices=sorted(PENALTY_NAMES), default="qcard")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--k", type=int, dest="K")
    p.add_argument("--lam", type=float)
    p.add_argument("--step", type=_step, default="auto")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--start", choices=("zero", "lstsq"), default="zero")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", type=Path, help="write x_final as CSV")

    p = sub.add_parser("certify", help="check a certificate for a candidate solution")
    _add_instance_args(p)
    p.add_argument("--theorem", choices=_THEOREMS)
    p.add_argument("--x", type=Path, help="candidate x' as CSV (card, pk)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--k", type=int, dest="K")
    p.add_argument("--n-gap", type=int, dest="N")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", type=Path, help="write the JSON report here")

    p = sub.add_parser("constants", help="tabulate beta_k (and delta_k) by enumeration")
    p.add_argument("--matrix", type=Path, help="A as CSV; otherwise random matrices")
    p.add_argument("--m", type=int, default=17)
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--num-matrices", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--beta", action="store_true", default=True,
                   help="RLIP constants (always computed)")
    p.add_argument("--delta", action="store_true", help="also RIP constants and crt verdicts")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--force", action="store_true", help="ignore --cap")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("sweep", help="Monte Carlo error vs noise level")
    _add_trial_args(p)
    p.add_argument("--noise-grid", type=_float_list,
                   default=list(experiments.DEFAULT_NOISE_GRID))
    p.add_argument("--methods", type=lambda s: [v for v in s.split(",") if v],
                   default=list(experiments.ALL_METHODS))
    p.add_argument("--start", choices=("zero", "lstsq"), default="zero")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("hist", help="histogram of final cardinalities")
    _add_trial_args(p)
    p.add_argument("--noise", type=float, default=2.5)
    p.add_argument("--method", choices=experiments.ALL_METHODS, default="qcard")
    p.add_argument("--start", choices=("zero", "lstsq"), default="lstsq")
    p.add_argument("--no-plot", action="store_true")
    return parser


_PATH_KEYS = {"instance", "matrix", "b", "x", "out"}

# checked after the config overlay so the TOML file may supply them
_REQUIRED = {
    "gen": ("m", "n", "out"),
    "certify": ("theorem",),
    "constants": ("out",),
    "sweep": ("out",),
    "hist": ("out",),
}


def _apply_config(args):
    """Overlay a TOML file: top-level keys, then the table named after the command."""
    if args.config is None:
        return args
    try:
        with open(args.config, "rb") as fh:
            data = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read config {args.config}: {exc}") from None
    section = data.pop(args.command, {})
    commands = {"gen", "solve", "certify", "constants", "sweep", "hist"}
    merged = {k: v for k, v in data.items() if k not in commands}
    merged.update(section)
    for key, value in merged.items():
        dest = key.replace("-", "_")
        dest = {"k": "K", "n_gap": "N"}.get(dest, dest)
        if dest in ("command", "config") or not hasattr(args, dest):
            raise InvalidArgumentError(f"unknown config key {key!r} for '{args.command}'")
        if dest in _PATH_KEYS and value is not None:
            value = Path(value)
        setattr(args, dest, value)
    return args


def _check_required(args):
    missing = [k for k in _REQUIRED.get(args.command, ()) if getattr(args, k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise InvalidArgumentError(f"'{args.command}' needs {flags}")
    if getattr(args, "theorem", None) not in (None,) + _THEOREMS:
        raise InvalidArgumentError(f"unknown theorem {args.theorem!r}")


def _load_problem(args):
    if args.instance is not None:
        inst = load_instance(args.instance)
        return inst.A, inst.b, inst
    if args.matrix is None or args.b is None:
        raise InvalidArgumentError("give --instance, or both --matrix and --b")
    return read_matrix_csv(args.matrix), read_vector_csv(args.b), None


def _emit(payload, out=None):
    text = json.dumps(_jsonable(payload), indent=2)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_gen(args):
    if args.matrix_only:
        A = generate_sensing_matrix(args.m, args.n, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(args.out / "A.csv", A.entries)
        _emit({"m": A.m, "n": A.n, "seed": args.seed, "op_norm": A.op_norm,
               "max_col_norm": A.max_col_norm})
        return EXIT_OK
    inst = make_instance(args.m, args.n, args.K, args.noise, args.seed,
                         mag_range=tuple(args.mag_range), target_norm=args.x0_norm)
    save_instance(args.out, inst)
    _emit({"out": str(args.out), "support": inst.support, "noise_norm": args.noise})
    return EXIT_OK


def cmd_solve(args):
    A, b, _ = _load_problem(args)
    kind = make_penalty(args.method, mu=args.mu, K=args.K, lam=args.lam)
    cfg = SolverConfig(step=args.step, max_iter=args.max_iter, stop_tol=args.tol,
                       start=args.start)
    res = fbs_solve(A, b, kind, cfg)
    if args.out is not None:
        write_vector_csv(args.out, res.x_final)
    _emit({
        "method": args.method,
        "iterations": res.iterations_used,
        "converged": res.converged,
        "step": res.step,
        "objective": res.objective_trace[-1],
        "stationarity_residual": res.stationarity_residual,
        "residual_kind": res.residual_kind,
        "support": res.support,
        "x_final": res.x_final,
    })
    return EXIT_OK


def cmd_certify(args):
    A, b, inst = _load_problem(args)
    if args.theorem in ("card", "pk"):
        if args.x is None:
            raise InvalidArgumentError(f"--theorem {args.theorem} needs --x")
        x = read_vector_csv(args.x)
        if args.theorem == "card":
            N = args.N if args.N is not None else max(2 * int(np.count_nonzero(x)), 1)
            report = certify_card_minimizer(A, b, args.mu, x, N, cap=args.cap, force=args.force)
        else:
            if args.K is None:
                raise InvalidArgumentError("--theorem pk needs --k")
            report = certify_pk_minimizer(A, b, args.K, x, cap=args.cap, force=args.force)
        _emit(report.to_dict(), args.out)
        return EXIT_OK

    if inst is None:
        raise InvalidArgumentError(f"--theorem {args.theorem} needs --instance (x0 and noise)")
    K = int(support_of(inst.x0, 0.0).size)
    eps_norm = float(np.linalg.norm(inst.epsilon))
    beta_K = rlip_beta(inst.A, K, cap=args.cap, force=args.force)
    if args.theorem == "oracle-card":
        N = args.N if args.N is not None else 2 * K
        beta_N = rlip_beta(inst.A, min(N, inst.A.n), cap=args.cap, force=args.force)
        ok, margins = guarantee_oracle_card(beta_N, beta_K, inst.x0, eps_norm, args.mu, N)
    else:
        beta_2K = rlip_beta(inst.A, min(2 * K, inst.A.n), cap=args.cap, force=args.force)
        ok, margins = guarantee_oracle_pk(beta_K, beta_2K, inst.x0, eps_norm)
    _emit({"theorem": args.theorem, "holds": ok, "K": K, "noise_norm": eps_norm,
           "margins": margins}, args.out)
    return EXIT_OK


def cmd_constants(args):
    matrices = None
    m, n = args.m, args.n
    if args.matrix is not None:
        matrices = [read_matrix_csv(args.matrix)]
        m, n = matrices[0].shape
    cap = math.inf if args.force else args.cap
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # reported below, once
        report = experiments.run_constants_table(m, n, args.kmax, args.num_matrices,
                                                 args.seed, with_delta=args.delta, cap=cap,
                                                 matrices=matrices, n_jobs=args.jobs)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_text(args.out / "constants.csv", report.table_csv())
    if args.delta:
        _write_text(args.out / "crt.csv", report.crt_csv())
    (args.out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=2))
    experiments.plot_constants(report, args.out / "inv_beta.svg")
    print(report.table_csv(), end="")
    return EXIT_OK


def cmd_sweep(args):
    cfg = experiments.SweepConfig(
        m=args.m, n=args.n, K=args.K, noise_grid=tuple(args.noise_grid), trials=args.trials,
        methods=tuple(args.methods), mu=args.mu, seed=args.seed, start=args.start,
        max_iter=args.max_iter, x0_norm=args.x0_norm, mag_range=tuple(args.mag_range))
    report = experiments.run_noise_sweep(cfg, n_jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_text(args.out / "summary.csv", report.summary_csv())
    _write_text(args.out / "trials.csv", report.trials_csv())
    (args.out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=2))
    if not args.no_plot:
        experiments.plot_sweep(report, args.out / "errors.svg")
    print(report.summary_csv(), end="")
    return EXIT_OK


def cmd_hist(args):
    cfg = experiments.HistConfig(
        m=args.m, n=args.n, K=args.K, noise=args.noise, trials=args.trials, method=args.method,
        mu=args.mu, seed=args.seed, start=args.start, max_iter=args.max_iter,
        x0_norm=args.x0_norm, mag_range=tuple(args.mag_range))
    report = experiments.run_cardinality_histogram(cfg, n_jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_text(args.out / "histogram.csv", report.counts_csv())
    _write_text(args.out / "trials.csv", report.trials_csv())
    (args.out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=2))
    if not args.no_plot:
        experiments.plot_histogram(report, args.out / "histogram.svg")
    print(json.dumps({"cards": report.cards}))
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "constants": cmd_constants,
    "sweep": cmd_sweep,
    "hist": cmd_hist,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args = _apply_config(args)
        _check_required(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        return _COMMANDS[args.command](args)
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidArgumentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

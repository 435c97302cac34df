"""``nfbm`` command line: certify, run, bench, norms.

Every experiment flag can also be given in a ``key = value`` config file
(``--config``); flags on the command line take precedence.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from . import bench
from .certify import certify_special
from .errors import InfeasibleParametersError, NFBMError
from .imaging import average_kernel, blur_op, grad_op, write_pgm
from .linops import power_iteration

# flag name -> (ExperimentConfig field, type)
FLAGS = {
    "algo": ("algo", str),
    "case": ("case", int),
    "kappa": ("kappa", float),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "theta": ("theta", float),
    "lambda": ("lam", float),
    "gamma": ("gamma", float),
    "restart-n0": ("restart_n0", int),
    "tol": ("tol", float),
    "max-iter": ("max_iters", int),
    "seed": ("seed", int),
    "realizations": ("realizations", int),
    "image": ("image", str),
    "n": ("n", int),
    "kernel-size": ("kernel_size", int),
    "noise-std": ("noise_std", float),
    "rho": ("rho", float),
}


def _common(p):
    g = p.add_argument_group("experiment")
    for flag, (_, typ) in FLAGS.items():
        g.add_argument(f"--{flag}", type=typ, default=None, dest=flag.replace("-", "_"))
    g.add_argument("--config", default=None, help="key = value file with defaults for any flag")
    g.add_argument("--out", default=None, help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfbm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="resolve parameters and print the convergence certificate")
    _common(p)
    p.add_argument("--method", default=None,
                   help="closed-form special case: FB, FB-DI, FHRB, FHRB-DI or PDBTR")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--L-norm", type=float, default=None, dest="L_norm")

    p = sub.add_parser("run", help="run one experiment, write plot data and images")
    _common(p)

    p = sub.add_parser("bench", help="run a grid of experiments and write a CSV table")
    _common(p)
    p.add_argument("--preset", default=None, choices=bench.PRESETS,
                   help="table to mirror (default: the single configured cell)")

    p = sub.add_parser("norms", help="power-iteration estimates of ||D|| and ||K||")
    _common(p)
    p.add_argument("--iters", type=int, default=5000)
    return parser


def config_from_args(args, **defaults) -> bench.ExperimentConfig:
    """Merge dataclass defaults, ``defaults``, the config file and the flags."""
    values = dict(defaults)
    if args.config:
        raw = bench.read_config(args.config)
        for key, text in raw.items():
            flag = key.replace("_", "-")
            if flag == "lam":
                flag = "lambda"
            if flag == "max-iters":
                flag = "max-iter"
            if flag not in FLAGS:
                if flag in ("out", "config", "preset"):
                    continue
                raise ValueError(f"{args.config}: unknown key {key!r}")
            name, typ = FLAGS[flag]
            values[name] = typ(text)
    for flag, (name, _) in FLAGS.items():
        v = getattr(args, flag.replace("-", "_"))
        if v is not None:
            values[name] = v
    return bench.ExperimentConfig(**values)


def _config_value(args, key):
    """Value of a non-experiment option from the flags or the config file."""
    v = getattr(args, key, None)
    if v is None and args.config:
        v = bench.read_config(args.config).get(key)
    return v


def _print_record(rec: dict, out=None):
    out = out or sys.stdout
    for k, v in rec.items():
        if isinstance(v, float):
            v = format(v, ".6g")
        elif v is None:
            v = "-"
        print(f"{k}={v}", file=out)


def cmd_certify(args):
    if args.method:
        cert = certify_special(args.method, gamma=args.gamma, mu=args.mu or 1.0,
                               alpha=args.alpha or 0.0, beta=args.beta or 0.0,
                               theta=args.theta or 0.0,
                               lam=1.0 if getattr(args, "lambda") is None else getattr(args, "lambda"),
                               zeta=args.zeta or 0.0, sigma=args.sigma, tau=args.tau,
                               L_norm=args.L_norm)
        print(cert.report())
        _print_record(cert.record())
        return 0 if cert.ok else 1
    cfg = config_from_args(args, realizations=1)
    mu = args.mu or 1.0
    zeta = args.zeta or math.sqrt(8.0)
    try:
        res = bench.resolve_params(cfg, mu, zeta)
    except InfeasibleParametersError as exc:
        print(f"{cfg.algo} case {cfg.case}: {exc}")
        print("status=infeasible")
        return 1
    print(f"{cfg.algo} case {cfg.case} kappa={cfg.kappa:g} mu={mu:g} zeta={zeta:.6g}")
    _print_record(res.as_dict())
    return 0 if res.certified else 1


def cmd_run(args):
    cfg = config_from_args(args, realizations=1)
    result = bench.run_experiment(cfg, keep_iterates=True)
    if result.params is None:
        print(f"infeasible parameters: {result.error}")
        return 1
    out = _config_value(args, "out") or "."
    os.makedirs(out, exist_ok=True)
    rec = result.records[0]
    bench.emit_plotdata(rec, os.path.join(out, "plot.csv"))
    problem = bench.build_problem(cfg, 0)
    write_pgm(os.path.join(out, "observed.pgm"), problem.b)
    write_pgm(os.path.join(out, "restored.pgm"), rec.x)
    row = result.row()
    _print_record(row)
    return 0


def cmd_bench(args):
    preset = _config_value(args, "preset")
    if preset:
        base = config_from_args(args)
        configs = bench.preset_grid(preset, base)
    else:
        configs = [config_from_args(args)]

    def progress(res):
        row = res.row()
        print(",".join(bench._fmt(row.get(c)) for c in bench.CSV_COLUMNS), flush=True)

    print(",".join(bench.CSV_COLUMNS))
    rows = bench.run_grid(configs, progress)
    out = _config_value(args, "out") or "results.csv"
    bench.write_csv(rows, out)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_norms(args):
    cfg = config_from_args(args, realizations=1)
    n = cfg.n
    d = power_iteration(grad_op(n), seed=cfg.seed, max_iters=args.iters, tol=1e-12)
    k = power_iteration(blur_op(n, average_kernel(cfg.kernel_size)), seed=cfg.seed,
                        max_iters=args.iters, tol=1e-12)
    _print_record({"n": n, "kernel_size": cfg.kernel_size,
                   "D_norm": d.norm, "D_converged": d.converged, "D_iterations": d.iterations,
                   "D_reference_sqrt8": math.sqrt(8.0),
                   "K_norm": k.norm, "K_converged": k.converged, "K_iterations": k.iterations})
    return 0


COMMANDS = {"certify": cmd_certify, "run": cmd_run, "bench": cmd_bench, "norms": cmd_norms}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (NFBMError, OSError, ValueError) as exc:
        print(f"nfbm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``dance run | gen-synth | bounds``."""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import theory
from .bench import ConfigError, load_config, run_experiment
from .data import serialize_libsvm, synth_logistic


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        outdir = run_experiment(cfg, output=args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(outdir)
    return 0


def _cmd_gen_synth(args) -> int:
    ds = synth_logistic(args.n, args.d, args.seed, args.margin)
    text = serialize_libsvm(ds)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def _cmd_bounds(args) -> int:
    V_n = args.n ** -args.gamma
    lam = args.c * V_n
    mu = args.mu if args.mu is not None else 0.0
    out = {
        "V_n": V_n,
        "cV_n": lam,
        "omega_1_6": theory.OMEGA_SIXTH,
        "pcg_bound": theory.pcg_bound_reduced(args.c, V_n, args.M, mu, args.beta),
        "stop_threshold_gradient": math.sqrt(2 * args.c) * V_n,
        "stop_threshold_decrement": (1 - args.beta) * math.sqrt(V_n),
    }
    if args.grad_norm is not None:
        eps = args.beta * math.sqrt(lam / (args.M + lam)) * args.grad_norm
        out["eps_k"] = eps
        out["pcg_bound_general_log2"] = theory.pcg_bound(args.c, V_n, args.M, mu, args.grad_norm, eps)
        out["pcg_bound_general_ln"] = theory.pcg_bound(args.c, V_n, args.M, mu, args.grad_norm, eps, base=math.e)
    if args.subopt is not None:
        K = theory.inner_bound(args.subopt, V_n)
        out["inner_bound"] = K
        out["stage_round_bound"] = theory.stage_round_bound(K, out["pcg_bound"])
    if args.wstar_norm_sq is not None:
        m = args.n // 2
        out["warmstart_bound_alpha2"] = theory.warmstart_bound(m ** -args.gamma, args.gamma, args.c, args.wstar_norm_sq)
    if args.N is not None:
        out["doubling_round_order"] = theory.doubling_round_order(args.N, args.gamma)
        if args.d is not None:
            out["complexity_order"] = theory.complexity_order(args.N, args.d)
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dance", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None, help="output directory (overrides $DANCE_OUTPUT_DIR and the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("gen-synth", help="write a synthetic logistic dataset in libsvm format")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("bounds", help="evaluate the theoretical bounds for given inputs")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--c", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--beta", type=float, default=1 / 20)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--grad-norm", type=float, default=None)
    p.add_argument("--subopt", type=float, default=None)
    p.add_argument("--wstar-norm-sq", type=float, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.set_defaults(func=_cmd_bounds)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 I/O or table-format error,
4 numeric-validation failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import __version__
from .analytic import CSV_FIELDS, irharq_failures, irharq_throughput, lharq_throughput, reward_to_report
from .channel import FadingChannel
from .dp import optimize_an, optimize_lharq
from .per_model import PerTableError, SyntheticPer, TabulatedPer, load_per_table, write_per_table
from .policy import ActionSet, load_policy, save_policy
from .rate_policy import DEFAULT_EPSILONS, FixedOutagePolicy, fixed_outage_throughput, sweep_epsilon
from .simulator import SimConfig, simulate

OUTPUT_DIR_ENV = "LHARQ_OUTPUT_DIR"
DEFAULT_RATE = 3.75
SWEEP_SCHEMES = ("ir", "lharq", "an", "fixed-outage")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_schemes(text: str) -> list[str]:
    items = [x.strip() for x in text.split(",") if x.strip()]
    bad = [x for x in items if x not in SWEEP_SCHEMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {SWEEP_SCHEMES}")
    return items


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rate", type=float, default=None,
                   help=f"coding rate R per block in bits/symbol (default {DEFAULT_RATE}, or the table's rate_R)")
    p.add_argument("--a-tilde", type=float, default=4.0, help="slope of the synthetic PER curve")
    p.add_argument("--per-table", help="CSV table of measured PER curves (replaces the synthetic model)")
    p.add_argument("--eps-trunc", type=float, default=1e-6, help="PER truncation level")
    p.add_argument("--snr-nodes", type=int, default=256, help="SNR quadrature nodes")
    p.add_argument("--j-nodes", type=int, default=64, help="J grid nodes per round")


def _add_output_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", help=f"output file (relative paths resolve against ${OUTPUT_DIR_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lharq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize backtrack rates by dynamic programming")
    p.add_argument("--scheme", choices=("lharq", "an"), default="lharq")
    p.add_argument("--k", type=int, required=True, help="maximum number of rounds (>= 2)")
    p.add_argument("--avg-snr-db", type=float, required=True)
    p.add_argument("--tr", type=int, default=16, help="number of backtrack rates T_R")
    _add_model_args(p)
    _add_output_arg(p)

    p = sub.add_parser("simulate", help="Monte-Carlo throughput estimate")
    p.add_argument("--scheme", choices=SWEEP_SCHEMES, default="lharq")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--avg-snr-db", type=float, required=True)
    p.add_argument("--tr", type=int, default=16)
    p.add_argument("--policy", help="policy file from 'optimize' (otherwise optimized on the fly)")
    p.add_argument("--epsilon", type=float, default=0.1, help="target for the fixed-outage policy")
    p.add_argument("--cycles", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write a per-round trace CSV (slow)")
    _add_model_args(p)
    _add_output_arg(p)

    p = sub.add_parser("sweep-snr", help="analytic throughput over a range of average SNR")
    p.add_argument("--schemes", type=_csv_schemes, default=["ir", "lharq"],
                   help="comma-separated subset of " + ",".join(SWEEP_SCHEMES))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--snr-start", type=float, default=5.0)
    p.add_argument("--snr-stop", type=float, default=25.0)
    p.add_argument("--snr-step", type=float, default=1.0)
    p.add_argument("--tr", type=int, default=16)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--ir-samples", type=int, default=10**6, help="Monte-Carlo samples for IR f_k, k >= 2")
    p.add_argument("--seed", type=int, default=0)
    _add_model_args(p)
    _add_output_arg(p)

    p = sub.add_parser("sweep-epsilon", help="throughput of the fixed-outage policy versus epsilon")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--avg-snr-db", type=float, required=True)
    p.add_argument("--tr", type=int, default=16)
    p.add_argument("--epsilons", type=_csv_floats, default=list(DEFAULT_EPSILONS))
    _add_model_args(p)
    _add_output_arg(p)

    p = sub.add_parser("show-policy", help="pretty-print a policy file")
    p.add_argument("policy")
    p.add_argument("--round", type=int, help="only this round")
    p.add_argument("--j-index", type=int, default=0, help="J node to print per SNR node")

    p = sub.add_parser("gen-table", help="sample the synthetic PER model onto the table format")
    p.add_argument("--rate", type=float, default=3.75)
    p.add_argument("--a-tilde", type=float, default=4.0)
    p.add_argument("--tr", type=int, default=16, help="rho series at multiples of R/T_R")
    p.add_argument("--snr-db-start", type=float, default=-10.0)
    p.add_argument("--snr-db-stop", type=float, default=30.0)
    p.add_argument("--snr-db-step", type=float, default=0.05)
    _add_output_arg(p)
    return parser


def _validate(args: argparse.Namespace) -> None:
    def need(cond: bool, msg: str):
        if not cond:
            raise UsageError(msg)

    if hasattr(args, "rate"):
        need(args.rate is None or args.rate > 0, "--rate must be positive")
        need(args.a_tilde > 0, "--a-tilde must be positive")
    if hasattr(args, "tr"):
        need(args.tr >= 1, "--tr must be >= 1")
    if hasattr(args, "eps_trunc"):
        need(0 <= args.eps_trunc < 1, "--eps-trunc must lie in [0, 1)")
        need(args.snr_nodes >= 2, "--snr-nodes must be >= 2")
        need(args.j_nodes >= 2, "--j-nodes must be >= 2")
    if hasattr(args, "k"):
        need(args.k >= 1, "--k must be >= 1")
    cmd = args.command
    if cmd == "optimize":
        need(args.k >= 2, "optimize needs --k >= 2")
    if cmd == "simulate":
        need(args.cycles >= 1, "--cycles must be >= 1")
    if cmd in ("simulate", "sweep-snr"):
        need(0 < args.epsilon < 1, "--epsilon must lie in (0, 1)")
    if cmd == "sweep-snr":
        need(len(args.schemes) > 0, "--schemes must name at least one scheme")
        need(args.snr_step > 0 and args.snr_stop >= args.snr_start, "invalid SNR range")
        need(args.ir_samples >= 1, "--ir-samples must be >= 1")
    if cmd == "sweep-epsilon":
        need(len(args.epsilons) > 0, "--epsilons must not be empty")
        need(all(0 < e < 1 for e in args.epsilons), "every epsilon must lie in (0, 1)")
    if cmd == "gen-table":
        need(args.snr_db_step > 0 and args.snr_db_stop > args.snr_db_start, "invalid SNR range")


def _resolve(path: str) -> str:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


@contextmanager
def _open_output(path: str | None):
    if path is None:
        yield sys.stdout
        return
    path = _resolve(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _echo_args(stream, args: argparse.Namespace) -> None:
    stream.write(f"# lharq {__version__} {args.command}\n")
    for key, value in sorted(vars(args).items()):
        if key in ("command", "output", "trace"):
            # Destinations are not experiment parameters; leaving them out keeps
            # files written to different paths byte-identical.
            continue
        if isinstance(value, list):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        stream.write(f"# {key}={value}\n")


def _model(args: argparse.Namespace):
    if args.per_table:
        return TabulatedPer(load_per_table(args.per_table, rate=args.rate), eps_trunc=args.eps_trunc)
    return SyntheticPer(DEFAULT_RATE if args.rate is None else args.rate, args.a_tilde, args.eps_trunc)


def _optimize(model, channel, quad, k, tr, scheme, n_j, avg_snr_db):
    action_set = ActionSet(model.rate, tr)
    meta = {"avg_snr_db": avg_snr_db, "avg_snr": channel.avg_snr, "snr_nodes": quad.nodes.size - 1}
    fn = optimize_lharq if scheme == "lharq" else optimize_an
    return fn(model, quad, k, action_set, n_j=n_j, metadata=meta)


def _write_rows(stream, args, rows) -> None:
    _echo_args(stream, args)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    writer.writerows(rows)


def cmd_optimize(args) -> int:
    model = _model(args)
    channel = FadingChannel.from_db(args.avg_snr_db)
    quad = channel.quadrature(args.snr_nodes)
    result = _optimize(model, channel, quad, args.k, args.tr, args.scheme, args.j_nodes, args.avg_snr_db)
    report = reward_to_report(result.reward, result.value.f1, model.rate, args.k, args.scheme)
    out = args.output or f"policy_{args.scheme}_K{args.k}_{args.avg_snr_db:g}dB.json"
    path = _resolve(out)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_policy(result.policy, path)
    _write_rows(sys.stdout, args, [report.csv_row(args.avg_snr_db)])
    return 0


def cmd_simulate(args) -> int:
    model = _model(args)
    channel = FadingChannel.from_db(args.avg_snr_db)
    policy = None
    scheme = args.scheme
    if scheme != "ir" and args.k >= 2:
        if args.policy:
            policy = load_policy(args.policy)
            if policy.rounds != args.k:
                raise UsageError(f"policy has {policy.rounds} rounds but --k is {args.k}")
        else:
            quad = channel.quadrature(args.snr_nodes)
            if scheme == "fixed-outage":
                policy = FixedOutagePolicy.build(model, quad, args.epsilon, ActionSet(model.rate, args.tr)).to_policy(
                    model, quad, args.k, args.j_nodes
                )
            else:
                policy = _optimize(model, channel, quad, args.k, args.tr, scheme, args.j_nodes, args.avg_snr_db).policy
    sim_scheme = "ir" if scheme == "ir" else ("an" if scheme == "an" else "lharq")
    config = SimConfig(sim_scheme, args.k, model, channel, policy, args.cycles, args.seed)
    if args.trace:
        with _open_output(args.trace) as fh:
            report = simulate(config, trace_stream=fh)
    else:
        report = simulate(config)
    with _open_output(args.output) as fh:
        _write_rows(fh, args, [report.csv_row(args.avg_snr_db)])
    return 0


def sweep_point(model, channel, quad, scheme, args, rng_seed):
    """Analytic throughput of one scheme at one average SNR."""
    K = args.k
    if scheme == "ir":
        f = irharq_failures(model, channel, K, quad, n_samples=args.ir_samples, rng=rng_seed)
        return irharq_throughput(model.rate, f)
    if K == 1:
        return lharq_throughput(None, model, channel, quad)
    if scheme == "fixed-outage":
        report = fixed_outage_throughput(model, channel, quad, K, ActionSet(model.rate, args.tr), args.epsilon)
        return report
    result = _optimize(model, channel, quad, K, args.tr, scheme, args.j_nodes, None)
    return reward_to_report(result.reward, result.value.f1, model.rate, K, scheme)


def cmd_sweep_snr(args) -> int:
    model = _model(args)
    n = int(math.floor((args.snr_stop - args.snr_start) / args.snr_step + 1e-9)) + 1
    grid = args.snr_start + args.snr_step * np.arange(n)
    rows = []
    for scheme in args.schemes:
        for snr_db in grid:
            snr_db = round(float(snr_db), 10)
            channel = FadingChannel.from_db(snr_db)
            quad = channel.quadrature(args.snr_nodes)
            report = sweep_point(model, channel, quad, scheme, args, args.seed)
            row = report.csv_row(snr_db)
            row[0] = scheme
            rows.append(row)
    with _open_output(args.output) as fh:
        _write_rows(fh, args, rows)
    return 0


def cmd_sweep_epsilon(args) -> int:
    model = _model(args)
    channel = FadingChannel.from_db(args.avg_snr_db)
    quad = channel.quadrature(args.snr_nodes)
    sweep = sweep_epsilon(model, channel, quad, args.k, ActionSet(model.rate, args.tr), args.epsilons)
    with _open_output(args.output) as fh:
        _echo_args(fh, args)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon", "eta", "is_best"])
        for i, (eps, eta) in enumerate(sweep.pairs()):
            writer.writerow([repr(eps), repr(eta), int(i == sweep.best_index)])
        writer.writerow(["best:" + repr(sweep.best_epsilon), repr(sweep.best_eta), 1])
    return 0


def cmd_show_policy(args) -> int:
    policy = load_policy(args.policy)
    out = sys.stdout
    a = policy.action_set
    out.write(f"scheme: {policy.scheme}\nrate R: {policy.rate}\nrounds K: {policy.rounds}\n")
    out.write(f"T_R: {a.n_rates} ({a.feedback_bits} feedback bits), delta = {a.delta}\n")
    for key, value in sorted(policy.metadata.items()):
        out.write(f"{key}: {value}\n")
    g = policy.grid
    out.write(f"SNR nodes: {g.snr_nodes.size} on [{g.snr_nodes[0]:.4g}, {g.snr_nodes[-1]:.4g}]\n")
    rounds = [args.round] if args.round else range(1, policy.rounds)
    for k in rounds:
        if not 1 <= k < policy.rounds:
            raise UsageError(f"--round must lie in [1, {policy.rounds - 1}]")
        j_nodes = g.j_nodes[k - 1]
        ji = min(max(args.j_index, 0), j_nodes.size - 1)
        out.write(f"\nround {k}: J nodes {j_nodes.size} on [{j_nodes[0]:g}, {j_nodes[-1]:g}], showing J = {j_nodes[ji]:g}\n")
        out.write("  snr_db      rho\n")
        rates = policy.rates(k)[:, ji]
        prev = None
        for s, r in zip(g.snr_nodes, rates):
            if r != prev:
                db = 10 * math.log10(s) if s > 0 else -math.inf
                out.write(f"  {db:8.3f}  {r:.4f}\n")
                prev = r
    return 0


def cmd_gen_table(args) -> int:
    # Sample the untruncated curves; truncation is applied when the table is used.
    model = SyntheticPer(args.rate, args.a_tilde, eps_trunc=0.0)
    n = int(math.floor((args.snr_db_stop - args.snr_db_start) / args.snr_db_step + 1e-9)) + 1
    snr_db = np.round(args.snr_db_start + args.snr_db_step * np.arange(n), 10)
    rhos = ActionSet(args.rate, args.tr).actions
    with _open_output(args.output) as fh:
        comments = [f"lharq {__version__} gen-table", f"a_tilde={args.a_tilde!r}", f"tr={args.tr}"]
        write_per_table(model, snr_db, rhos, fh, comments)
    return 0


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep-snr": cmd_sweep_snr,
    "sweep-epsilon": cmd_sweep_epsilon,
    "show-policy": cmd_show_policy,
    "gen-table": cmd_gen_table,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lharq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PerTableError) as exc:
        print(f"lharq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"lharq: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

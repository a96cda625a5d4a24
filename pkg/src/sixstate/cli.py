"""Command-line entry point: ``sixstate <command> ...``.

Exit codes: 0 success, 1 usage or range error, 2 invariant violation.
Every output embeds a run manifest. Floats are written with 12
significant digits, so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .collective import (
    bb84_ie,
    bb84_pe,
    ie_curve,
    make_params,
    pe_curve,
    verify_bruss,
)
from .e91 import (
    OneSided,
    canned_distributions,
    collective_e91_mc,
    collective_e91_report,
    hv_full_simulation,
    hv_sbar,
    singlet_correlation_mc,
    singlet_correlation_quantum,
)
from .intercept_resend import ir_scan, solve_symmetric
from .protocol import InvariantViolation, attack_registry, run_session, scheme_config
from .quantum import ContractError

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2
DEFAULT_ROUNDS = 1_000_000
SEED_ENV = "QKD_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for invariants."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- formatting --------------------------------------------------------------------


def fmt(x: float) -> str:
    return f"{x:.12g}"


def clean(obj):
    """Round floats to 12 significant digits; NaN and inf become null."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def timestamp(mode: str | None) -> str:
    if mode == "now":
        t = _dt.datetime.now(_dt.timezone.utc)
    else:
        epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
        t = _dt.datetime.fromtimestamp(epoch, _dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def manifest(args, command: str, params: dict) -> dict:
    return {
        "command": command,
        "params": params,
        "seed": args.seed,
        "version": __version__,
        "timestamp": timestamp(args.timestamp),
    }


def emit_json(obj, out) -> None:
    out.write(json.dumps(clean(obj), indent=2) + "\n")


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        seed = flag
    else:
        raw = os.environ.get(SEED_ENV)
        if raw is None or raw == "":
            return 0
        try:
            seed = int(raw)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


def _positive(name: str, value: int) -> None:
    if value < 1:
        raise UsageError(f"{name} must be >= 1")


# --- commands ----------------------------------------------------------------------


def cmd_curves(args, out) -> int:
    if not (0 <= args.d_min < args.d_max <= 0.5):
        raise UsageError("need 0 <= --d-min < --d-max <= 0.5")
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    params = {"d_min": args.d_min, "d_max": args.d_max, "steps": args.steps}
    lines = [f"# {k}: {json.dumps(clean(v))}" for k, v in manifest(args, "curves", params).items()]
    lines.append("d,pe_six,pe_bb84,ie_six,ie_bb84,qab")
    for d in np.linspace(args.d_min, args.d_max, args.steps):
        d = float(d)
        row = (d, pe_curve(d), bb84_pe(d), ie_curve(d), bb84_ie(d), 1 - d)
        lines.append(",".join(fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        out.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_ir_solve(args, out) -> int:
    sols = [
        {"alpha": s.alpha, "beta": s.beta, "p": s.p_common, "q": s.q_common, "optimal": s.optimal}
        for s in solve_symmetric()
    ]
    emit_json({"manifest": manifest(args, "ir solve", {}), "solutions": sols}, out)
    return EXIT_OK


def cmd_ir_scan(args, out) -> int:
    if args.alpha_steps < 2 or args.beta_steps < 2:
        raise UsageError("scan needs at least 2 steps per axis")
    scan = ir_scan(args.alpha_steps, args.beta_steps)
    clusters = [
        {"alpha": a, "beta": b, "cells": len(cells)}
        for (a, b), cells in zip(scan.cluster_centres(), scan.clusters)
    ]
    params = {"alpha_steps": args.alpha_steps, "beta_steps": args.beta_steps}
    emit_json({
        "manifest": manifest(args, "ir scan", params),
        "cells": len(scan),
        "bound": scan.bound,
        "candidates": int(scan.candidates.sum()),
        "clusters": clusters,
        "max_min_p": scan.max_min_p(),
        "max_mean_p": float(scan.p_mean.max()),
    }, out)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("alpha,beta,px,py,pz,qx,qy,qz,candidate\n")
            for i, a in enumerate(scan.alphas):
                for j, b in enumerate(scan.betas):
                    vals = [a, b, *scan.p[:, i, j], *scan.q[:, i, j]]
                    fh.write(",".join(fmt(float(v)) for v in vals)
                             + f",{int(scan.candidates[i, j])}\n")
    return EXIT_OK


def _collective_kwargs(args) -> dict:
    given = {k: getattr(args, k) for k in ("disturbance", "theta", "fidelity")
             if getattr(args, k, None) is not None}
    if len(given) != 1:
        raise UsageError("give exactly one of --disturbance, --theta, --fidelity")
    return given


def cmd_simulate(args, out) -> int:
    _positive("--rounds", args.rounds)
    _positive("--workers", args.workers)
    config = scheme_config(args.scheme)
    if args.attack == "none":
        attack_params = {}
    elif args.attack == "intercept-resend":
        if args.alpha is None or args.beta is None:
            raise UsageError("intercept-resend needs --alpha and --beta")
        attack_params = {"alpha": args.alpha, "beta": args.beta}
    else:
        attack_params = _collective_kwargs(args)
    attack = attack_registry(args.attack, **attack_params)
    stats = run_session(config, attack, args.rounds, args.seed, args.workers)
    params = {"scheme": config.scheme, "attack": args.attack, **attack_params, "rounds": args.rounds}
    emit_json({"manifest": manifest(args, "simulate", params), **stats.to_dict()}, out)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    params = make_params(**_collective_kwargs(args))
    rep = verify_bruss(params)
    emit_json({
        "manifest": manifest(args, "verify", _collective_kwargs(args)),
        "theta": params.theta,
        "fidelity": params.fidelity,
        "disturbance": params.disturbance,
        # Residuals are tiny; keep them in scientific notation rather than rounding to 0.
        "residuals": {k: float(f"{v:.3e}") for k, v in rep.residuals.items()},
        "max_residual": float(f"{rep.max_residual:.3e}"),
        "ok": rep.ok,
    }, out)
    return EXIT_OK if rep.ok else EXIT_INVARIANT


def _report_dict(rep) -> dict:
    d = {
        "c": rep.c,
        "s": rep.s,
        "standard_errors": rep.standard_errors,
        "s_error": rep.s_error,
        "exceeds_hidden_variable_bound": rep.exceeds_hidden_variable_bound,
    }
    d.update(rep.extras)
    return d


def cmd_e91(args, out) -> int:
    _positive("--rounds", args.rounds)
    _positive("--workers", args.workers)
    params: dict = {"attack": args.attack, "rounds": args.rounds}
    body: dict = {}
    if args.attack == "none":
        body["analytic"] = _report_dict(singlet_correlation_quantum())
        body["simulated"] = _report_dict(singlet_correlation_mc(args.rounds, args.seed, args.workers))
    elif args.attack == "collective":
        if args.disturbance is None:
            raise UsageError("collective needs --disturbance")
        make_params(disturbance=args.disturbance)
        params["disturbance"] = args.disturbance
        body["analytic"] = _report_dict(collective_e91_report(args.disturbance))
        body["simulated"] = _report_dict(
            collective_e91_mc(args.disturbance, args.rounds, args.seed, args.workers))
    else:
        canned = canned_distributions()
        name = args.distribution or ("one-sided-uniform" if args.attack == "ir-bob" else "product-uniform")
        dist, expected = canned[name]
        if (args.attack == "ir-bob") != isinstance(dist, OneSided):
            raise UsageError(f"distribution {name!r} does not fit attack {args.attack!r}")
        params["distribution"] = name
        try:
            analytic, mode = hv_sbar(dist, "exact"), "exact"
        except ContractError:
            analytic, mode = hv_sbar(dist, "mc", args.rounds, args.seed, args.workers), "mc"
        body["analytic"] = {"mode": mode, **_report_dict(analytic)}
        body["expected_sbar"] = expected
        body["simulated"] = _report_dict(hv_full_simulation(dist, args.rounds, args.seed, args.workers))
    emit_json({"manifest": manifest(args, "e91", params), **body}, out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--timestamp", choices=["fixed", "now"], default="fixed",
                        help="manifest timestamp: SOURCE_DATE_EPOCH (default 0) or wall clock")

    sim = _Parser(add_help=False)
    sim.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS)
    sim.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")

    collective = _Parser(add_help=False)
    collective.add_argument("--disturbance", type=float)
    collective.add_argument("--theta", type=float, help="radians")
    collective.add_argument("--fidelity", type=float)

    p = _Parser(prog="sixstate", description="Six-state QKD attack analysis and simulation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("curves", parents=[common], help="P_E, I_E curves for six-state and BB84 (CSV)")
    c.add_argument("--d-min", type=float, default=0.0)
    c.add_argument("--d-max", type=float, default=0.5)
    c.add_argument("--steps", type=int, default=101)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_curves)

    ir = sub.add_parser("ir", help="intercept/resend analysis")
    irsub = ir.add_subparsers(dest="ir_command", required=True, parser_class=_Parser)
    s = irsub.add_parser("solve", parents=[common], help="symmetric strategies (JSON)")
    s.set_defaults(func=cmd_ir_solve)
    s = irsub.add_parser("scan", parents=[common], help="grid scan of the (alpha, beta) landscape")
    s.add_argument("--alpha-steps", type=int, default=361)
    s.add_argument("--beta-steps", type=int, default=361)
    s.add_argument("--out", help="optional CSV of every grid cell")
    s.set_defaults(func=cmd_ir_scan)

    s = sub.add_parser("simulate", parents=[common, sim, collective], help="protocol session (JSON)")
    s.add_argument("--scheme", choices=["six-state", "bb84"], default="six-state")
    s.add_argument("--attack", choices=["none", "intercept-resend", "collective"], default="none")
    s.add_argument("--alpha", type=float, help="radians")
    s.add_argument("--beta", type=float, help="radians")
    s.add_argument("--json", action="store_true", help="accepted for compatibility; output is always JSON")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[common, collective], help="check probe constraint residuals")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("e91", parents=[common, sim], help="entanglement-based correlations (JSON)")
    s.add_argument("--attack", choices=["none", "ir-both", "ir-bob", "collective"], default="none")
    s.add_argument("--distribution", choices=sorted(canned_distributions()))
    s.add_argument("--disturbance", type=float)
    s.set_defaults(func=cmd_e91)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version or a usage error
        return int(exc.code or 0)
    try:
        args.seed = resolve_seed(args.seed)
        return args.func(args, out)
    except (UsageError, ContractError) as exc:
        print(f"sixstate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, RuntimeError) as exc:
        print(f"sixstate: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

    privbc region gaussian    --channel ch.json --points 9 --out region.csv
    privbc region total-power --channel ch.json --points 9 --out region.csv
    privbc region dmc         --channel dmc.json --grid 8 --out frontier.csv
    privbc fading sweep       --P 2,10,100 --theta-points 64 --samples 1000000 --out sweep.csv
    privbc fading baseline    --P 10 --samples 1000000 --out chord.csv
    privbc kkt check          --channel ch.json --q 1.0,0.5 --out cert.json
    privbc simcode            --config code.json --trials 100000 --out report.json

Exit status: 0 on success, 1 on invalid input, 2 when any result is flagged
as not converged (outputs are still written), 3 on bad usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (ChannelError, Total, load_dmc, load_gaussian_channel,
                      validate_power_split)
from .codebook import (CodeSizeError, build_code, check_conditional_independence,
                       code_config_from_json, exact_leakage, simulate)
from .dmc import SizeGuardError, dmc_region_bruteforce
from .fading import GainLaw, exponential_theta_grid, fig2_sweep, time_sharing_baseline
from .gaussian import boundary_sweep, region_point, total_power_region
from .kkt import certify

log = logging.getLogger("privbc")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _num(x) -> str:
    """Shortest round-trip text for a float; ints and flags pass through."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_atomic(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return x if math.isfinite(x) else _num(x)
    return obj


def _json_text(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _emit(args, header, rows):
    if args.format == "json":
        _write_atomic(args.out, _json_text([dict(zip(header, r)) for r in rows]))
    else:
        _write_atomic(args.out, _csv_text(header, rows))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ChannelError(f"expected comma-separated numbers, got {text!r}") from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_region_gaussian(args) -> int:
    ch = load_gaussian_channel(args.channel)
    if isinstance(ch.power, Total):
        raise ChannelError("channel has a total power constraint; use 'region total-power'")
    points = boundary_sweep(ch, args.points, tol=args.tol)
    header = ["r1_target", "r1", "r2"] + [f"q_{i + 1}" for i in range(ch.M)] \
        + ["max_kkt_residual", "converged"]
    rows = []
    for p in points:
        rates = (p.rates.r1, p.rates.r2) if p.rates else (math.nan, math.nan)
        q = list(p.q) if p.q is not None else [math.nan] * ch.M
        rows.append([p.r1_target, *rates, *q, p.max_kkt_residual, p.converged])
        if p.error:
            log.warning("r1_target=%.6g: %s", p.r1_target, p.error)
    _emit(args, header, rows)
    return EXIT_OK if all(p.converged for p in points) else EXIT_NONCONVERGED


def cmd_region_total(args) -> int:
    ch = load_gaussian_channel(args.channel)
    if not isinstance(ch.power, Total):
        raise ChannelError("channel has per-sub-channel caps; use 'region gaussian'")
    points = total_power_region(ch, args.points, tol=args.tol)
    m = ch.M
    header = ["r1_target", "r1", "r2"] + [f"p_{i + 1}" for i in range(m)] \
        + [f"q_{i + 1}" for i in range(m)] + ["max_kkt_residual", "converged"]
    rows = []
    for p in points:
        rates = (p.rates.r1, p.rates.r2) if p.rates else (math.nan, math.nan)
        alloc = list(p.allocation) if p.allocation is not None else [math.nan] * m
        q = list(p.q) if p.q is not None else [math.nan] * m
        rows.append([p.r1_target, *rates, *alloc, *q, p.max_kkt_residual, p.converged])
    _emit(args, header, rows)
    return EXIT_OK if all(p.converged for p in points) else EXIT_NONCONVERGED


def cmd_region_dmc(args) -> int:
    ch = load_dmc(args.channel)
    front = dmc_region_bruteforce(ch, args.grid, refine=not args.no_refine, tol=args.tol)
    log.info("grid %d, movement %.3g, %d schemes, converged=%s", front.grid_steps,
             front.movement, front.schemes_evaluated, front.converged)
    _emit(args, ["r1", "r2"], [list(p) for p in front.points])
    return EXIT_OK if front.converged else EXIT_NONCONVERGED


def _thetas(args):
    if args.theta:
        return np.array(_floats(args.theta))
    return exponential_theta_grid(args.theta_points, GainLaw())


def cmd_fading_sweep(args) -> int:
    data = fig2_sweep(_floats(args.P), _thetas(args), args.samples, seed=args.seed, k=args.K)
    rows = []
    for p, c in data.curves.items():
        for row in zip(c.theta, c.r1, c.r1_se, c.r2, c.r2_se):
            rows.append([p, *row])
    _emit(args, ["P", "theta", "r1", "r1_se", "r2", "r2_se"], rows)
    return EXIT_OK


def cmd_fading_baseline(args) -> int:
    data = fig2_sweep(_floats(args.P), np.array([0.0]), args.samples, seed=args.seed, k=args.K)
    rows = []
    for p, (c1, c2) in data.chords.items():
        for lam in np.linspace(0.0, 1.0, args.points):
            rp = time_sharing_baseline(c1, c2, float(lam))
            rows.append([p, float(lam), rp.r1, rp.r2])
    _emit(args, ["P", "lambda", "r1", "r2"], rows)
    return EXIT_OK


def cmd_kkt_check(args) -> int:
    ch = load_gaussian_channel(args.channel)
    if isinstance(ch.power, Total):
        raise ChannelError("kkt check needs per-sub-channel caps")
    q = np.array(_floats(args.q))
    check = validate_power_split(ch, q)
    if not check:
        raise ChannelError(check.message)
    rates = region_point(ch, q)
    r1_target = rates.r1 if args.r1_target is None else args.r1_target
    cert = certify(ch, q, r1_target, rates.r2)
    ok = cert.max_residual <= args.tol
    doc = {"q": q, "r1": rates.r1, "r2": rates.r2, "r1_target": r1_target,
           "residuals": cert.residuals, "max_residual": cert.max_residual,
           "alpha": cert.alpha, "beta": cert.beta, "certified": ok}
    _write_atomic(args.out, _json_text(doc))
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_simcode(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    cfg, scheme = code_config_from_json(doc)
    code = build_code(cfg, scheme)
    sim = simulate(code, args.trials)
    leak = exact_leakage(code) if not args.skip_leakage else None
    report = {
        "n": cfg.n, "epsilon": cfg.epsilon, "seed": cfg.seed,
        "rates": {"r1": cfg.r1, "r2": cfg.r2},
        "sizes": {"cloud_bits": code.n2_bits, "satellite_bits": code.l1_bits,
                  "m1_bits": code.m1_bits, "bin_bits": code.bin_bits, "bin_size": code.l2},
        "code_sha256": code.digest(),
        "trials": sim.trials,
        "group1_error": sim.group1_error, "group2_error": sim.group2_error,
    }
    if leak is not None:
        report["leakage_nats_per_symbol"] = {"m1_to_z": leak.m1_to_z, "m2_to_y": leak.m2_to_y}
    if code.M >= 2:
        ind = check_conditional_independence(code, args.independence_draws)
        report["independence"] = {"draws": args.independence_draws, "p_values": ind.p_values,
                                  "bonferroni_p": ind.adjusted_p, "rejected": ind.rejected}
    _write_atomic(args.out, _json_text(report))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="privbc", description="Rate regions and toy codes for private "
                                            "broadcasting over parallel channels")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def out_opts(p, formats=True):
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        if formats:
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    region = sub.add_parser("region", help="rate region boundaries").add_subparsers(
        dest="kind", parser_class=_Parser)
    region.required = True
    p = region.add_parser("gaussian", help="per-sub-channel power caps")
    p.add_argument("--channel", required=True)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--tol", type=float, default=1e-6)
    out_opts(p)
    p.set_defaults(func=cmd_region_gaussian)

    p = region.add_parser("total-power", help="one total power budget")
    p.add_argument("--channel", required=True)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--tol", type=float, default=1e-6)
    out_opts(p)
    p.set_defaults(func=cmd_region_total)

    p = region.add_parser("dmc", help="brute-force frontier of a degraded DMC")
    p.add_argument("--channel", required=True)
    p.add_argument("--grid", type=int, default=4, help="initial simplex grid steps")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--tol", type=float, default=1e-3)
    out_opts(p)
    p.set_defaults(func=cmd_region_dmc)

    fading = sub.add_parser("fading", help="ergodic rates under Rayleigh fading").add_subparsers(
        dest="kind", parser_class=_Parser)
    fading.required = True
    for name, func, helptext in (("sweep", cmd_fading_sweep, "threshold-policy curves"),
                                 ("baseline", cmd_fading_baseline, "time-sharing chords")):
        p = fading.add_parser(name, help=helptext)
        p.add_argument("--P", default="2,10,100", help="comma-separated power levels")
        p.add_argument("--K", type=int, default=1, help="group-1 receivers")
        p.add_argument("--samples", type=int, default=1_000_000)
        p.add_argument("--seed", type=int, default=7)
        if name == "sweep":
            p.add_argument("--theta-points", type=int, default=64)
            p.add_argument("--theta", default=None, help="explicit comma-separated thresholds")
        else:
            p.add_argument("--points", type=int, default=11, help="points along each chord")
        out_opts(p)
        p.set_defaults(func=func)

    kkt = sub.add_parser("kkt", help="optimality certificates").add_subparsers(
        dest="kind", parser_class=_Parser)
    kkt.required = True
    p = kkt.add_parser("check", help="certify a power split")
    p.add_argument("--channel", required=True)
    p.add_argument("--q", required=True, help="comma-separated Q_i")
    p.add_argument("--r1-target", type=float, default=None,
                   help="R1 constraint level (default: R1 at the given split)")
    p.add_argument("--tol", type=float, default=1e-6)
    out_opts(p, formats=False)
    p.set_defaults(func=cmd_kkt_check)

    p = sub.add_parser("simcode", help="simulate a toy superposition code")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--independence-draws", type=int, default=10_000)
    p.add_argument("--skip-leakage", action="store_true")
    out_opts(p, formats=False)
    p.set_defaults(func=cmd_simcode)
    return ap


def _check_ranges(args):
    for name in ("points", "samples", "trials", "theta_points", "independence_draws"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise ChannelError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "points", None) is not None and args.points < 2:
        raise ChannelError("--points must be at least 2")
    if getattr(args, "theta_points", None) is not None and args.theta is None \
            and args.theta_points < 2:
        raise ChannelError("--theta-points must be at least 2")
    for name in ("channel", "config"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            raise ChannelError(f"{path}: no such file")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _check_ranges(args)
        status = args.func(args)
    except (ChannelError, CodeSizeError, SizeGuardError, ValueError, KeyError, TypeError,
            json.JSONDecodeError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if status == EXIT_NONCONVERGED:
        print("warning: some results were flagged as not converged",
              file=sys.stderr)
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

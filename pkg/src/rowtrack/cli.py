"""Command-line front end: ``rowtrack run|sweep|gen|compare``.

Exit codes: 0 success, 1 oracle violations or differing logs, 2 usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config
from .errors import RowtrackError
from .geometry import Geometry, GeometryConfig, TrackerConfig, Variant
from .metrics import emit, mitigation_log_lines, to_csv
from .oracle import violations_json
from .sim import Simulation, miss_delta
from .trace import PATTERNS, MemoryAccess, PatternSpec, generate, generate_activations, read_trace, write_trace

log = logging.getLogger("rowtrack")

VARIANT_CHOICES = tuple(v.cli_name for v in Variant)
PATTERN_CHOICES = tuple(p.replace("_", "-") for p in PATTERNS)
SWEEP_DEFAULTS = {
    "trh": [4096, 1024, 256, 64, 16],
    "blast": [1, 2, 3, 4],
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rowtrack", description="LLC-resident Rowhammer tracker simulator")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file with geometry and tracker keys")
    common.add_argument("--variant", choices=VARIANT_CHOICES)
    common.add_argument("--trh", type=int, help="Rowhammer threshold T_RH")
    common.add_argument("--blast", type=int, help="blast radius (1-4)")

    wl = argparse.ArgumentParser(add_help=False)
    wl.add_argument("--pattern", choices=PATTERN_CHOICES, default="uniform")
    wl.add_argument("--seed", type=int, default=0)
    wl.add_argument("--count", type=int, help="number of events to generate")
    wl.add_argument("--duration", type=int, help="trace span in ns (default: one window)")
    wl.add_argument("--pool", type=int, help="restrict the row pool to the first N rows")
    wl.add_argument("--mode", choices=("activation", "access"), default="activation",
                    help="tracker-only activations or memory accesses through the LLC")
    wl.add_argument("--trace", help="read events from a trace file instead of a pattern")

    run_opts = argparse.ArgumentParser(add_help=False)
    run_opts.add_argument("--oracle", choices=("inline", "post", "off"), default="post")
    run_opts.add_argument("--format", choices=("json", "csv"), default="json")
    run_opts.add_argument("--policy", choices=("srrip", "lru"), default="srrip")

    r = sub.add_parser("run", parents=[common, wl, run_opts], help="run one simulation")
    r.add_argument("--out", help="report path (default: stdout)")
    r.add_argument("--log", help="write the JSON-lines mitigation log here")
    r.add_argument("--baseline", action="store_true", help="also run a reservation-free reference (access mode)")

    s = sub.add_parser("sweep", parents=[common, wl, run_opts], help="one run per axis value, aggregated CSV")
    s.add_argument("--axis", choices=("trh", "blast", "llc_sets", "variant"), required=True)
    s.add_argument("--values", help="comma-separated axis values (trh and blast have defaults)")
    s.add_argument("--out", help="output directory (default: print CSV)")
    s.add_argument("--jobs", type=int, default=1, help="parallel runs")

    g = sub.add_parser("gen", parents=[common, wl], help="generate a trace file")
    g.add_argument("--out", required=True, help="trace path (.gz compresses)")

    c = sub.add_parser("compare", parents=[common, wl, run_opts], help="differential mitigation-log comparison")
    c.add_argument("--variants", default=",".join(VARIANT_CHOICES))
    return p


# -- helpers -------------------------------------------------------------------


def _configs(args) -> tuple[GeometryConfig, TrackerConfig]:
    if args.config is not None and not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    geo, trk = load_config(args.config)
    changes = {}
    if args.variant:
        changes["variant"] = args.variant
    if args.trh is not None:
        changes["t_rh"] = args.trh
    if args.blast is not None:
        changes["blast_radius"] = args.blast
    return geo, trk.replace(**changes) if changes else trk


def _workload(args, geometry: Geometry) -> list:
    if getattr(args, "trace", None):
        return list(read_trace(args.trace))
    spec = PatternSpec(
        pattern=args.pattern,
        seed=args.seed,
        count=args.count,
        duration_ns=args.duration,
        row_pool=range(args.pool) if args.pool else None,
    )
    gen = generate if args.mode == "access" else generate_activations
    return list(gen(spec, geometry))


def _simulate(geo: GeometryConfig, trk: TrackerConfig, events: list, oracle: str, policy: str) -> Simulation:
    access = bool(events) and isinstance(events[0], MemoryAccess)
    sim = Simulation(Geometry(geo, trk), frontend=access, oracle=oracle, policy=policy)
    sim.run(events)
    return sim


def _report_violations(sim: Simulation) -> None:
    print(f"{len(sim.violations)} oracle violations", file=sys.stderr)
    print(violations_json(sim.violations[:20]), file=sys.stderr)


# -- commands --------------------------------------------------------------------


def cmd_run(args) -> int:
    geo, trk = _configs(args)
    geometry = Geometry(geo, trk)
    events = _workload(args, geometry)
    sim = _simulate(geo, trk, events, args.oracle, args.policy)
    report = sim.report()
    report.violations = len(sim.violations)
    if args.baseline:
        if not (events and isinstance(events[0], MemoryAccess)):
            raise UsageError("--baseline needs memory accesses (--mode access or an access trace)")
        report.baseline_misses = miss_delta(events, geo, trk, args.policy)[0]
    text = emit(report if args.format == "json" else [report], args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.log:
        Path(args.log).write_text(mitigation_log_lines(sim.mitigations, trk.variant.cli_name))
    if sim.violations:
        _report_violations(sim)
        return 1
    return 0


def _sweep_point(job):
    geo, trk, args_dict = job
    args = argparse.Namespace(**args_dict)
    geometry = Geometry(geo, trk)
    sim = _simulate(geo, trk, _workload(args, geometry), args.oracle, args.policy)
    return sim.report()


def _axis_values(args) -> list:
    if args.values is not None:
        raw = [v.strip() for v in args.values.split(",") if v.strip()]
    else:
        raw = SWEEP_DEFAULTS.get(args.axis, [])
    if not raw:
        raise UsageError(f"sweep axis {args.axis} has no values")
    if args.axis == "variant":
        return [Variant.parse(v) for v in raw]
    return [int(v) for v in raw]


def cmd_sweep(args) -> int:
    geo, trk = _configs(args)
    jobs = []
    for v in _axis_values(args):
        g, t = geo, trk
        if args.axis == "trh":
            t = trk.replace(t_rh=v)
        elif args.axis == "blast":
            t = trk.replace(blast_radius=v)
        elif args.axis == "llc_sets":
            g = geo.replace(llc_sets=v)
        else:
            t = trk.replace(variant=v)
        Geometry(g, t)  # validate before spending time on any run
        jobs.append((g, t, vars(args)))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    text = to_csv(reports)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"sweep_{args.axis}.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if any(r.violations for r in reports) else 0


def cmd_gen(args) -> int:
    geo, trk = _configs(args)
    if args.trace:
        raise UsageError("gen writes a trace; --trace is an input option")
    n = write_trace(_workload(args, Geometry(geo, trk)), args.out)
    log.info("wrote %d events to %s", n, args.out)
    return 0


def cmd_compare(args) -> int:
    geo, trk = _configs(args)
    variants = [Variant.parse(v) for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise UsageError("no variants to compare")
    events = _workload(args, Geometry(geo, trk))
    logs = {}
    status = 0
    for v in variants:
        t = trk.replace(variant=v)
        sim = _simulate(geo, t, events, args.oracle, args.policy)
        logs[v] = [(m.time_ns, m.aggressor_row) for m in sim.mitigations]
        if sim.violations:
            _report_violations(sim)
            status = 1
    ref = logs[variants[0]]
    for v in variants:
        same = logs[v] == ref
        print(f"{v.cli_name:12s} mitigations={len(logs[v]):8d} {'same' if same else 'DIFFERS'}")
        if not same:
            status = 1
    return status


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "gen": cmd_gen, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("ROWTRACK_LOG")
    if level:
        logging.basicConfig(level=level.upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rowtrack: error: {exc}", file=sys.stderr)
        return 2
    except (RowtrackError, ValueError, OSError) as exc:
        print(f"rowtrack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

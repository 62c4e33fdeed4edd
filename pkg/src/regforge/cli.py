"""Command-line front-end: compile, simulate, estimate, sweep, compare.

Exit codes are stable: 0 success, 1 validation or semantic failure,
2 I/O failure, 3 simulation timeout diagnostics.  All output is
deterministic for fixed inputs, so every subcommand is CI-safe.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import cost, sim
from .elaborate import elaborate, structural_counts
from .emit import emit
from .errors import RegforgeError, SpecError
from .spec import TOPOLOGIES, load_spec, validate

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_TIMEOUT = 3

_POINT_FIELDS = {
    "topology": str,
    "D": int,
    "W": int,
    "N_t": int,
    "w": int,
    "L": int,
    "S": int,
    "output_registered": bool,
    "cdc": bool,
    "dest_registers": bool,
}

_POINT_RENAME = {
    "D": "depth",
    "W": "width",
    "N_t": "targets",
    "w": "target_width",
    "L": "sync_length",
    "S": "slaves",
}


def parse_point(text: str) -> cost.DesignPoint:
    """Parse ``k=v,...`` into a design point; topology flags default from
    the named topology."""
    raw: dict = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise SpecError(f"point field {item!r} is not k=v")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in _POINT_FIELDS:
            raise SpecError(f"unknown point field {key!r}")
        kind = _POINT_FIELDS[key]
        if kind is int:
            raw[key] = int(value, 0)
        elif kind is bool:
            raw[key] = value.strip().lower() in ("1", "true", "yes", "on")
        else:
            raw[key] = value.strip()
    if "topology" not in raw:
        raise SpecError("point needs a topology field")
    topology = raw.pop("topology")
    if topology not in TOPOLOGIES:
        raise SpecError(f"unknown topology {topology!r}")
    kwargs = {_POINT_RENAME.get(k, k): v for k, v in raw.items()}
    return cost.DesignPoint.named(topology, **kwargs)


def parse_sweep_range(text: str) -> tuple[str, list[int]]:
    """Parse ``key=start:stop:step`` (stop inclusive) or ``key=a;b;c``."""
    if "=" not in text:
        raise SpecError(f"sweep range {text!r} is not key=range")
    key, spec_text = text.split("=", 1)
    key = key.strip()
    if key not in ("D", "W", "N_t", "S"):
        raise SpecError(f"cannot sweep over {key!r} (one of D, W, N_t, S)")
    spec_text = spec_text.strip()
    if ":" in spec_text:
        parts = spec_text.split(":")
        if len(parts) != 3:
            raise SpecError(f"sweep range {spec_text!r} is not start:stop:step")
        start, stop, step = (int(p, 0) for p in parts)
        if step <= 0:
            raise SpecError("sweep step must be positive")
        values = list(range(start, stop + 1, step))
    else:
        values = [int(p, 0) for p in spec_text.split(";") if p.strip()]
    if not values:
        raise SpecError(f"sweep range {text!r} is empty")
    return key, values


def _load_calibration(path: str | None) -> cost.Calibration:
    if path is None:
        return cost.default_calibration()
    return cost.load_calibration(path)


def _load_and_validate(spec_path: str, arch: str | None):
    spec = load_spec(spec_path)
    if arch is not None:
        if arch not in TOPOLOGIES:
            raise SpecError(f"unknown topology {arch!r}")
        spec = dataclasses.replace(
            spec, architecture=dataclasses.replace(spec.architecture, topology=arch)
        )
    report = validate(spec)
    return spec, report


def cmd_compile(args) -> int:
    try:
        spec, report = _load_and_validate(args.spec, args.arch)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not report.ok:
        print(str(report), file=sys.stderr)
        return EXIT_INVALID
    model = elaborate(spec)
    files = emit(model, spec)
    counts = structural_counts(model)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            (out_dir / name).write_text(files[name], encoding="utf-8")
        (out_dir / "model.json").write_text(model.to_json(), encoding="utf-8")
        (out_dir / "counts.json").write_text(
            json.dumps(dataclasses.asdict(counts), indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(files)} HDL file(s) + model.json + counts.json to {out_dir}")
    print(
        f"flipflops={counts.flipflops} decode_terms={counts.decode_terms} "
        f"mux_bits={counts.mux_bits} "
        f"max_unregistered_bundle_bits={counts.max_unregistered_bundle_bits}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        spec, report = _load_and_validate(args.spec, args.arch)
        script = sim.load_script(args.script)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not report.ok:
        print(str(report), file=sys.stderr)
        return EXIT_INVALID
    model = elaborate(spec)
    simulation = sim.build_sim(model, spec, fault_mode=args.fault_mode)
    simulation.run(script, args.until_ps)
    violations = simulation.violation_events()
    coherence = simulation.check_coherence()
    total = len(violations) + len(coherence)
    if args.trace:
        try:
            simulation.write_trace(args.trace)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"violations: {total}")
    for event in violations:
        print(f"  {event.time_ps} {event.detail} slave={event.slave} addr={event.addr}")
    for v in coherence:
        print(f"  {v.time_ps} {v.kind} slave={v.slave} addr={v.addr}")
    if simulation.timed_out:
        return EXIT_TIMEOUT
    if args.fault_mode:
        return EXIT_OK if total > 0 else EXIT_INVALID
    return EXIT_OK if total == 0 else EXIT_INVALID


def cmd_estimate(args) -> int:
    cal = _load_calibration(args.calibration)
    point = parse_point(args.point[0])
    est = cost.estimate(point, cal)
    print(f"topology:  {point.topology}")
    print(f"registers: {est.registers}")
    print(f"alms:      {est.alms:.1f}")
    print(f"aluts:     {est.aluts:.1f}")
    print(f"fmax_mhz:  {est.fmax_mhz:.1f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cal = _load_calibration(args.calibration)
    base = parse_point(args.point[0])
    ranges = dict(parse_sweep_range(r) for r in args.sweep or [])
    topologies = (
        [t.strip() for t in args.topologies.split(",") if t.strip()]
        if args.topologies
        else [base.topology]
    )
    for topology in topologies:
        if topology not in TOPOLOGIES:
            print(f"error: unknown topology {topology!r}", file=sys.stderr)
            return EXIT_INVALID
    rows = cost.sweep(
        cal,
        topologies,
        depths=ranges.get("D", [base.depth]),
        widths=ranges.get("W", [base.width]),
        targets=ranges.get("N_t", [base.targets]),
        slaves=ranges.get("S", [base.slaves]),
        target_width=base.target_width,
        sync_length=base.sync_length,
    )
    text = cost.sweep_to_csv(rows)
    if args.csv:
        try:
            Path(args.csv).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"wrote {len(rows)} row(s) to {args.csv}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.point) != 2:
        print("error: compare needs exactly two --point arguments", file=sys.stderr)
        return EXIT_INVALID
    cal = _load_calibration(args.calibration)
    point_a = parse_point(args.point[0])
    point_b = parse_point(args.point[1])
    report = cost.compare(point_a, point_b, cal)
    print(report.as_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regforge",
        description="Register-map compiler, simulator, and resource estimator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="validate, elaborate, and emit HDL")
    p.add_argument("--spec", required=True, help="register map JSON document")
    p.add_argument("--arch", help="override the spec's topology")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run a programming script")
    p.add_argument("--spec", required=True)
    p.add_argument("--arch", help="override the spec's topology")
    p.add_argument("--script", required=True, help="programming script JSON")
    p.add_argument("--until-ps", type=int, required=True, dest="until_ps")
    p.add_argument("--trace", help="write the event trace CSV here")
    p.add_argument("--fault-mode", action="store_true", dest="fault_mode",
                   help="disable ready gating (negative testing)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate resources for one point")
    p.add_argument("--point", action="append", required=True,
                   help="k=v,... e.g. topology=distributed,N_t=226,w=32")
    p.add_argument("--calibration", help="calibration JSON (default: built-in)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="estimate over a parameter sweep")
    p.add_argument("--point", action="append", required=True, help="base point k=v,...")
    p.add_argument("--sweep", action="append",
                   help="key=start:stop:step or key=a;b;c (keys: D, W, N_t, S)")
    p.add_argument("--topologies", help="comma-separated topology set")
    p.add_argument("--csv", help="write the sweep table here")
    p.add_argument("--calibration")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="resource ratios of point A over point B")
    p.add_argument("--point", action="append", required=True,
                   help="give twice: first A, then B")
    p.add_argument("--calibration")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RegforgeError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())

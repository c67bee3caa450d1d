"""``tokisim`` command line: validate, run, report, gen-workload, compare.

Exit codes: 0 success, 1 validation errors, 2 usage error, 3 runtime fault,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from tokisim.engine import SimulationFault, simulate
from tokisim.model import ConfigError, Deployment, parse_deployment, serialize_deployment, validate_deployment
from tokisim.trace import CompareError, MetricsReport, TraceFormatError, compare_runs, compute_metrics, format_trace, parse_trace
from tokisim.workloads import (
    REGULATED,
    UNREGULATED,
    WorkloadError,
    WorkloadSpec,
    generate_taskset,
    interference_scenario,
    taskset_deployment,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_FAULT = 3
EXIT_IO = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_deployment(path: str, err) -> tuple[Deployment | None, int]:
    try:
        text = _read(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror or exc}", file=err)
        return None, EXIT_IO
    try:
        d = parse_deployment(text)
    except ConfigError as exc:
        if exc.report is not None:
            print(exc.report.format_text(), file=err)
        else:
            print(f"error[{exc.code}] {exc.path}: {exc.message}", file=err)
        return None, EXIT_INVALID
    return d, EXIT_OK


def cmd_validate(args, out, err) -> int:
    try:
        text = _read(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=err)
        return EXIT_IO
    try:
        report = validate_deployment(parse_deployment(text, check=False))
    except ConfigError as exc:
        if args.json:
            payload = {"ok": False, "errors": [{"code": exc.code, "message": exc.message, "path": exc.path}], "warnings": []}
            print(json.dumps(payload, indent=2), file=out)
        else:
            print(f"error[{exc.code}] {exc.path}: {exc.message}", file=out)
        return EXIT_INVALID
    if args.json:
        print(json.dumps(report.as_dict(), indent=2), file=out)
    else:
        print(report.format_text(), file=out)
    return EXIT_OK if report.ok else EXIT_INVALID


def summary_table(report: MetricsReport) -> str:
    head = f"{'task':<16} {'count':>7} {'max_response':>13} {'jitter':>10} {'misses':>7}"
    lines = [head, "-" * len(head)]
    for tid, s in sorted(report.tasks.items()):
        mx = "-" if s.response_max is None else str(s.response_max)
        jit = "-" if s.jitter is None else str(s.jitter)
        lines.append(f"{tid:<16} {s.count:>7} {mx:>13} {jit:>10} {s.deadline_misses:>7}")
    if report.interrupts:
        lines.append("")
        ihead = f"{'handler':<16} {'count':>7} {'max_latency':>13} {'p95':>10} {'overruns':>9}"
        lines += [ihead, "-" * len(ihead)]
        for h, s in sorted(report.interrupts.items()):
            mx = "-" if s.latency_max is None else str(s.latency_max)
            p95 = "-" if s.latency_p95 is None else str(s.latency_p95)
            lines.append(f"{h:<16} {s.count:>7} {mx:>13} {p95:>10} {s.overruns:>9}")
    if report.dropped_trace_events:
        lines.append(f"dropped trace events: {report.dropped_trace_events}")
    return "\n".join(lines)


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "count", "response_min", "response_max", "response_mean", "response_p95", "jitter", "deadline_misses"])
    for tid, s in sorted(report.tasks.items()):
        w.writerow([tid, s.count, s.response_min, s.response_max, s.response_mean, s.response_p95, s.jitter, s.deadline_misses])
    return buf.getvalue()


def _simulate(d: Deployment, until: int, seed: int):
    sim = simulate(d, until, seed)
    events = sim.events()
    return format_trace(events, sim.trace.dropped), compute_metrics(events, sim.trace.dropped)


def cmd_run(args, out, err) -> int:
    if args.until <= 0:
        print("error: --until must be > 0", file=err)
        return EXIT_USAGE
    d, code = _load_deployment(args.config, err)
    if d is None:
        return code
    try:
        trace_text, report = _simulate(d, args.until, args.seed)
    except SimulationFault as exc:
        print(f"fault: {exc}", file=err)
        return EXIT_FAULT
    try:
        if args.trace:
            _write(args.trace, trace_text)
        if args.report:
            _write(args.report, report.to_json())
        if args.csv:
            _write(args.csv, metrics_csv(report))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=err)
        return EXIT_IO
    print(summary_table(report), file=out)
    return EXIT_OK


def cmd_report(args, out, err) -> int:
    try:
        text = _read(args.trace)
    except OSError as exc:
        print(f"error: cannot read {args.trace}: {exc.strerror or exc}", file=err)
        return EXIT_IO
    try:
        events, dropped = parse_trace(text)
    except TraceFormatError as exc:
        print(f"error: malformed trace at line {exc.lineno}: {exc}", file=err)
        return EXIT_FAULT
    out.write(compute_metrics(events, dropped).to_json())
    return EXIT_OK


def _decimal_ratio(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise _UsageError(f"bad ratio '{text}'") from None


def cmd_gen_workload(args, out, err) -> int:
    raw: dict = {}
    if args.spec:
        try:
            raw = json.loads(args.spec)
        except json.JSONDecodeError as exc:
            print(f"error: bad --spec JSON: {exc.msg}", file=err)
            return EXIT_USAGE
        if not isinstance(raw, dict):
            print("error: --spec must be a JSON object", file=err)
            return EXIT_USAGE
    if args.n_tasks is not None:
        raw["n_tasks"] = args.n_tasks
    if args.periods is not None:
        raw["period_choices"] = args.periods
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        if args.utilization is not None:
            raw["total_utilization"] = _decimal_ratio(args.utilization)
        if args.intensity is not None:
            raw["memory_intensity"] = [_decimal_ratio(x) for x in args.intensity.split(",")]
        raw.setdefault("period_choices", [1000, 2000, 4000, 8000])
        spec = WorkloadSpec.from_dict(raw)
        tasks = generate_taskset(spec)
    except WorkloadError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    d = taskset_deployment(tasks, cores=args.cores, policy=args.policy)
    report = validate_deployment(d)
    if not report.ok:
        print(report.format_text(), file=err)
        return EXIT_INVALID
    text = serialize_deployment(d)
    if args.out:
        try:
            _write(args.out, text)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=err)
            return EXIT_IO
    else:
        out.write(text)
    return EXIT_OK


def cmd_compare(args, out, err) -> int:
    if args.until <= 0:
        print("error: --until must be > 0", file=err)
        return EXIT_USAGE
    if args.builtin:
        if args.configs:
            print("error: --builtin takes no config files", file=err)
            return EXIT_USAGE
        da, db = interference_scenario(UNREGULATED), interference_scenario(REGULATED)
    else:
        if len(args.configs) != 2:
            print("error: compare needs two config files or --builtin interference", file=err)
            return EXIT_USAGE
        da, code = _load_deployment(args.configs[0], err)
        if da is None:
            return code
        db, code = _load_deployment(args.configs[1], err)
        if db is None:
            return code
        if {t.id for t in da.tasks} != {t.id for t in db.tasks}:
            print("error: task sets differ", file=err)
            return EXIT_INVALID
    try:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(_simulate, da, args.until, args.seed)
            fb = pool.submit(_simulate, db, args.until, args.seed)
            ra, rb = fa.result()[1], fb.result()[1]
    except SimulationFault as exc:
        print(f"fault: {exc}", file=err)
        return EXIT_FAULT
    try:
        diff = compare_runs(ra, rb)
    except CompareError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    print(diff.format_table(), file=out)
    if args.json:
        try:
            _write(args.json, diff.to_json())
        except OSError as exc:
            print(f"error: cannot write {args.json}: {exc}", file=err)
            return EXIT_IO
    if args.csv:
        try:
            _write(args.csv, _diff_csv(diff))
        except OSError as exc:
            print(f"error: cannot write {args.csv}: {exc}", file=err)
            return EXIT_IO
    return EXIT_OK


def _diff_csv(diff) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scope", "name", "metric", "a", "b", "delta", "percent"])
    for r in diff.rows:
        w.writerow([r.scope, r.name, r.metric, r.a, r.b, r.delta, r.percent])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokisim", description="Multicore RTOS evaluation simulator.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    v = sub.add_parser("validate", help="check a deployment config")
    v.add_argument("config")
    v.add_argument("--json", action="store_true", help="machine-readable report")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="simulate a deployment")
    r.add_argument("config")
    r.add_argument("--until", type=int, required=True, help="simulated cycles")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", help="trace output path")
    r.add_argument("--report", help="metrics JSON output path")
    r.add_argument("--csv", help="per-task metrics CSV output path")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="recompute metrics from a trace file")
    rep.add_argument("trace")
    rep.set_defaults(func=cmd_report)

    g = sub.add_parser("gen-workload", help="generate a UUniFast deployment")
    g.add_argument("--spec", help="WorkloadSpec as a JSON object (ratios in parts per thousand)")
    g.add_argument("--n-tasks", type=int)
    g.add_argument("--utilization", help="total utilization as a decimal ratio, e.g. 0.7")
    g.add_argument("--periods", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated period choices")
    g.add_argument("--intensity", help="comma-separated memory intensities as decimal ratios")
    g.add_argument("--seed", type=int)
    g.add_argument("--cores", type=int, default=1)
    g.add_argument("--policy", choices=["FP", "RM", "DM", "EDF"], default="RM")
    g.add_argument("--out", help="output path (default: stdout)")
    g.set_defaults(func=cmd_gen_workload)

    c = sub.add_parser("compare", help="run two deployments and diff their metrics")
    c.add_argument("configs", nargs="*")
    c.add_argument("--builtin", choices=["interference"])
    c.add_argument("--until", type=int, default=10_000_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--json", help="diff JSON output path")
    c.add_argument("--csv", help="diff CSV output path")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "cores", 1) < 1:
            raise _UsageError("--cores must be >= 1")
        return args.func(args, out, err)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

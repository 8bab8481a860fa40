"""Command-line front end.

Exit codes::

    0  success, no findings
    1  violations or coverage errors found
    2  usage error
    3  I/O error (missing file, missing coverage files)
    4  contract parse error
    5  trace format error
    6  relevance report schema error
    7  contract database error
    8  timeout
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from pathlib import Path
from typing import Sequence, TextIO

from .contract_db import DatabaseError, dump_text, load_database, serialize_database
from .contract_lang import ContractError
from .coverage import ReportSchemaError, check_coverage, filter_trace, load_report, mark_trace
from .engine import ArityMismatchError, Engine
from .reports import ErrorReport, machine_lines
from .trace import TraceError, open_trace, save_trace

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
EXIT_CONTRACT, EXIT_TRACE, EXIT_REPORT, EXIT_DB, EXIT_TIMEOUT = 4, 5, 6, 7, 8
PROCESS_TAG_ENV = "DYNCHECK_PROCESS_TAG"


class UsageError(Exception):
    pass


class CheckTimeout(Exception):
    pass


def _load_db(path: str):
    return load_database(Path(path).read_bytes())


def _trace_tag(path: str, index: int) -> str:
    m = re.fullmatch(r"[^.]+\.([^.]+)\.cvtj?", Path(path).name)
    return m.group(1) if m else f"{index}"


def _emit_live(rep: ErrorReport, fmt: str, stream: TextIO) -> None:
    stream.write(machine_lines([rep]) if fmt == "machine" else rep.format_text() + "\n")
    stream.flush()


def _finish(reports: list[ErrorReport], args, out: TextIO) -> int:
    reports = sorted(reports, key=lambda r: (r.trace, r.seq))
    if args.output:
        Path(args.output).write_text(machine_lines(reports), encoding="utf-8")
    elif args.format == "machine":
        out.write(machine_lines(reports))
    n_v = sum(1 for r in reports if r.is_violation)
    n_c = len(reports) - n_v
    print(f"{n_v} violation(s), {n_c} coverage error(s)", file=out)
    return EXIT_FINDINGS if reports else EXIT_OK


def cmd_check(args, out: TextIO, err: TextIO) -> int:
    report = load_report(args.report) if args.report else None
    if args.check_coverage:
        if report is None or not args.coverage_prefix:
            raise UsageError("--cover:check-coverage needs --report and --coverage-prefix")
        found = [r.with_trace("coverage") for r in check_coverage(args.coverage_prefix, report)]
        for r in found:
            _emit_live(r, args.format, err)
        return _finish(found, args, out)
    if not args.contracts or not args.trace:
        raise UsageError("check needs --contracts and at least one --trace")
    if args.filtered and report is None:
        raise UsageError("--filtered needs --report")
    db = _load_db(args.contracts)
    if len(args.trace) == 1:
        tags = [args.process_tag or os.environ.get(PROCESS_TAG_ENV) or "0"]
    else:
        if args.process_tag:
            raise UsageError("--process-tag applies to a single --trace; tags come from file names")
        tags = [_trace_tag(p, i) for i, p in enumerate(args.trace)]
        if len(set(tags)) != len(tags):
            tags = [str(i) for i in range(len(args.trace))]
    found: list[ErrorReport] = []
    deadline = time.monotonic() + args.timeout_s
    try:
        for tag, path in zip(tags, args.trace):
            events = open_trace(path)
            if report is not None:
                events = (filter_trace if args.filtered else mark_trace)(events, report)
            engine = Engine(db, report, coverage_prefix=args.coverage_prefix, process_tag=tag)
            for i, ev in enumerate(events):
                for r in engine.process(ev):
                    r = r.with_trace(tag)
                    _emit_live(r, args.format, err)
                    found.append(r)
                if i % 4096 == 0 and time.monotonic() > deadline:
                    raise CheckTimeout(f"timed out after {args.timeout_s}s in {path}")
            if not engine.exited:
                print(f"warning: {path} ended without an exit event", file=err)
    except CheckTimeout:
        _finish(found, args, out)
        raise
    return _finish(found, args, out)


def cmd_coverage_check(args, out: TextIO, err: TextIO) -> int:
    args.check_coverage = True
    return cmd_check(args, out, err)


def cmd_db_build(args, out: TextIO, err: TextIO) -> int:
    db = _load_db(args.contracts)
    if args.output:
        Path(args.output).write_bytes(serialize_database(db))
    if args.dump or not args.output:
        out.write(dump_text(db))
    return EXIT_OK


def cmd_filter(args, out: TextIO, err: TextIO) -> int:
    report = load_report(args.report)
    events = open_trace(args.trace[0])
    n = save_trace((mark_trace if args.mark_only else filter_trace)(events, report), args.output)
    print(f"wrote {n} events to {args.output}", file=out)
    return EXIT_OK


def cmd_corpus(args, out: TextIO, err: TextIO) -> int:
    from .corpus import EngineConfig, generate_corpus, run_and_score, write_corpus

    cases = generate_corpus(args.seed, args.per_class)
    if args.write_dir:
        write_corpus(cases, args.write_dir)
    modes = ("full", "filtered") if args.mode == "both" else (args.mode,)
    cards = {m: run_and_score(cases, EngineConfig(filtered=m == "filtered", timeout_s=args.timeout_s)) for m in modes}
    if args.format == "machine":
        out.write(json.dumps({m: c.to_record() for m, c in cards.items()}, sort_keys=True) + "\n")
    else:
        for m, c in cards.items():
            out.write(c.format_table(f"{m} instrumentation, {c.total} cases") + "\n")
    if args.output:
        Path(args.output).write_text(json.dumps({m: c.to_record() for m, c in cards.items()}, indent=2, sort_keys=True))
    if args.figure:
        from .plotting import plot_scorecards
        plot_scorecards(cards, args.figure)
    return EXIT_OK


def cmd_bench(args, out: TextIO, err: TextIO) -> int:
    from .bench import run_bench, synthetic_trace

    events = synthetic_trace(args.memory_events, args.seed)
    modes = ("full", "filtered") if args.mode == "both" else (args.mode,)
    results = [run_bench(events, m) for m in modes]
    if args.format == "machine":
        recs = [{"mode": r.mode, "events": r.events, "memory_events": r.memory_events,
                 "seconds": r.seconds, "events_per_second": r.events_per_second} for r in results]
        out.write(json.dumps(recs, sort_keys=True) + "\n")
    else:
        for r in results:
            out.write(r.format_line() + "\n")
        if len(results) == 2 and all(r.events_per_second for r in results):
            out.write(f"speedup\t{results[1].events_per_second / results[0].events_per_second:.2f}x\n")
    if args.figure:
        from .plotting import plot_bench
        plot_bench(results, args.figure)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "db-build": cmd_db_build,
    "filter": cmd_filter,
    "coverage-check": cmd_coverage_check,
    "corpus": cmd_corpus,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyncheck", description="Dynamic contract checker for parallel-model traces.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *extra):
        sp.add_argument("--format", choices=("text", "machine"), default="text")
        sp.add_argument("--output", help="output file")
        sp.add_argument("--timeout-s", type=float, default=30.0)
        for name in extra:
            if name == "contracts":
                sp.add_argument("--contracts", help="contract file or binary database")
            elif name == "trace":
                sp.add_argument("--trace", action="append", default=[], help="trace file (.cvt or .cvtj); repeatable")
            elif name == "report":
                sp.add_argument("--report", help="relevance report")
            elif name == "prefix":
                sp.add_argument("--coverage-prefix", help="coverage file prefix")

    sp = sub.add_parser("check", help="check traces against contracts")
    common(sp, "contracts", "trace", "report", "prefix")
    sp.add_argument("--process-tag", help=f"process tag for coverage files (default ${PROCESS_TAG_ENV} or 0)")
    sp.add_argument("--cover:check-coverage", dest="check_coverage", action="store_true",
                    help="collate coverage files instead of checking traces")
    sp.add_argument("--filtered", action="store_true", help="drop memory events not in the report")

    sp = sub.add_parser("coverage-check", help="collate coverage files against a report")
    common(sp, "report", "prefix")

    sp = sub.add_parser("db-build", help="compile a contract file into a binary database")
    common(sp, "contracts")
    sp.add_argument("--dump", action="store_true", help="also print the text dump")

    sp = sub.add_parser("filter", help="filter a trace by a relevance report")
    common(sp, "trace", "report")
    sp.add_argument("--mark-only", action="store_true", help="mark relevance without dropping events")

    sp = sub.add_parser("corpus", help="generate and score the synthetic corpus")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--per-class", type=int, default=5)
    sp.add_argument("--mode", choices=("full", "filtered", "both"), default="both")
    sp.add_argument("--write-dir", help="write the corpus cases to this directory")
    sp.add_argument("--figure", help="write a scorecard figure (png, pdf, svg)")

    sp = sub.add_parser("bench", help="measure full vs filtered throughput")
    common(sp)
    sp.add_argument("--memory-events", type=int, default=10**6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=("full", "filtered", "both"), default="both")
    sp.add_argument("--figure", help="write a throughput figure")
    return p


def _validate(args) -> None:
    if args.command in ("coverage-check",) and not (args.coverage_prefix and args.report):
        raise UsageError("coverage-check needs --coverage-prefix and --report")
    if args.command == "db-build" and not args.contracts:
        raise UsageError("db-build needs --contracts")
    if args.command == "filter" and not (len(args.trace) == 1 and args.report and args.output):
        raise UsageError("filter needs one --trace, --report and --output")
    if args.timeout_s <= 0:
        raise UsageError("--timeout-s must be positive")
    if getattr(args, "memory_events", 0) < 0:
        raise UsageError("--memory-events must be non-negative")


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        _validate(args)
        return COMMANDS[args.command](args, out, err)
    except UsageError as e:
        print(f"usage error: {e}", file=err)
        return EXIT_USAGE
    except CheckTimeout as e:
        print(f"timeout: {e}", file=err)
        return EXIT_TIMEOUT
    except ContractError as e:
        print(f"contract error: {e}", file=err)
        return EXIT_CONTRACT
    except (TraceError, ArityMismatchError) as e:
        print(f"trace error: {e}", file=err)
        return EXIT_TRACE
    except ReportSchemaError as e:
        print(f"report error: {e}", file=err)
        return EXIT_REPORT
    except DatabaseError as e:
        print(f"database error: {e}", file=err)
        return EXIT_DB
    except OSError as e:
        print(f"I/O error: {e}", file=err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

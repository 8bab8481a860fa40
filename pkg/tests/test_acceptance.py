"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run standalone with ``python -m tests.test_acceptance`` or through pytest;
under pytest the lines are printed in the terminal summary.
"""
from __future__ import annotations

import io
import random
import tempfile
import time
from pathlib import Path

import pytest

from dyncheck.bench import run_bench, synthetic_trace
from dyncheck.contract_lang import parse_contract, print_contract
from dyncheck.corpus import (
    FN,
    FP,
    NC_TP,
    TP,
    EngineConfig,
    TraceBuilder,
    branch_skip_case,
    contract_db,
    generate_corpus,
    random_correct_trace,
    run_and_score,
)
from dyncheck.coverage import RelevanceReport, check_coverage, coverage_errors, mark_trace
from dyncheck.engine import Engine
from dyncheck.trace import FunctionCall, Memory, read_trace, read_trace_jsonl, trace_bytes, write_trace_jsonl

from .gen import random_db, random_trace
from .lattice import exhaustive

RESULTS: dict[int, str] = {}


def _record(n: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[n] = line
    print(line)
    return ok


# ----------------------------------------------------------------- 1


def criterion_1():
    start = time.perf_counter()
    res = exhaustive(depth=3, widths=(2, 3))
    elapsed = time.perf_counter() - start
    ok = res.mismatches == 0 and elapsed < 1.0
    detail = (f"{res.shapes} formulas, {res.cases} leaf assignments, {res.mismatches} mismatches, "
              f"{elapsed:.2f}s (budget 1s)")
    if res.first_mismatch:
        detail += f"; first mismatch {res.first_mismatch}"
    return _record(1, "formula lattice vs truth-table oracle", ok, detail)


# ----------------------------------------------------------------- 2

CW, ST, INT = 0x4400_0000, 0, 0x4C00_0405
SRC, BUF2, REQ, WIN = 0x7FFC_0010, 0x7FFC_0100, 0x7FFC_0020, 0x9000


def _isend(b, buf, req):
    b.call("MPI_Isend", buf, 1, INT, 1, 0, CW, req)


def _scenario(build):
    b = TraceBuilder(contract_db("mpi"))
    build(b)
    return b.finish()


def reference_scenarios():
    """(name, expected class, buggy trace, corrected trace)."""

    def missing_init(fixed):
        def go(b):
            if fixed:
                b.call("MPI_Init", 0, 0)
            b.call("MPI_Finalize")
        return go

    def missing_finalize(fixed):
        def go(b):
            b.call("MPI_Init", 0, 0)
            if fixed:
                b.call("MPI_Finalize")
        return go

    def data_race(fixed):
        def go(b):
            b.call("MPI_Init", 0, 0)
            _isend(b, SRC, REQ)
            if not fixed:
                b.write(SRC)  # src = 42 while the send is in flight
            b.call("MPI_Wait", REQ, ST)
            b.write(SRC)
            b.call("MPI_Finalize")
        return go

    def request_leak(fixed):
        def go(b):
            b.call("MPI_Init", 0, 0)
            _isend(b, SRC, REQ)
            if fixed:
                b.call("MPI_Wait", REQ, ST)
            _isend(b, BUF2, REQ)  # overwrites the pending request handle
            b.call("MPI_Wait", REQ, ST)
            b.call("MPI_Finalize")
        return go

    def mixed_sync(fixed):
        def go(b):
            b.call("MPI_Init", 0, 0)
            b.call("MPI_Win_fence", 0, WIN)
            if not fixed:
                b.call("MPI_Win_lock_all", 0, WIN)
            b.call("MPI_Get", SRC, 1, INT, 1, 0, 1, INT, WIN)
            b.call("MPI_Win_fence", 0, WIN)
            b.call("MPI_Finalize")
        return go

    table = [
        ("missing init", "init-finalize", missing_init),
        ("missing finalize", "init-finalize", missing_finalize),
        ("local data race", "local-data-race", data_race),
        ("request leak", "handle-lifecycle", request_leak),
        ("mixed sync", "mixed-sync", mixed_sync),
    ]
    return [(name, cls, _scenario(f(False)), _scenario(f(True))) for name, cls, f in table]


def criterion_2():
    db = contract_db("mpi")
    start = time.perf_counter()
    problems = []
    for name, cls, buggy, fixed in reference_scenarios():
        got = Engine(db).run(buggy)
        if len(got) != 1 or got[0].error_class != cls:
            problems.append(f"{name}: {[r.error_class for r in got]}")
        clean = Engine(db).run(fixed)
        if clean:
            problems.append(f"{name} (fixed): {len(clean)} reports")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 1.0
    detail = f"5 scenarios + 5 corrections in {elapsed:.3f}s" + (f"; {problems}" if problems else "")
    return _record(2, "reference scenarios", ok, detail)


# ----------------------------------------------------------------- 3


def criterion_3(n: int = 10_000):
    start = time.perf_counter()
    violations = coverage = 0
    for i in range(n):
        set_name = ("mpi", "shmem")[i % 2]
        rng = random.Random(i)
        events = random_correct_trace(rng, set_name)
        locs = sorted({e.location for e in events if isinstance(e, (FunctionCall, Memory))}, key=lambda l: l.line)
        report = RelevanceReport(tuple((loc, "suspect") for loc in locs if rng.random() < 0.3), "gen")
        engine = Engine(contract_db(set_name), report)
        violations += len(engine.run(mark_trace(events, report)))
        coverage += len(coverage_errors([engine.visited], report))
    elapsed = time.perf_counter() - start
    ok = violations == 0 and coverage == 0 and elapsed < 60
    return _record(3, "zero false positives", ok,
                   f"{n} traces, {violations} violations, {coverage} coverage errors, {elapsed:.1f}s (budget 60s)")


# ----------------------------------------------------------------- 4


def criterion_4():
    cases = generate_corpus(0)
    full = run_and_score(cases)
    filt = run_and_score(cases, EngineConfig(filtered=True))
    lost = [c.name for c in cases if full.category_of(c.name) == TP and filt.category_of(c.name) != TP]
    silent = [n for n in lost if filt.category_of(n) != NC_TP]
    ok = (full.counts[FP] == 0 and full.counts[FN] == 0 and full.accuracy == 1
          and filt.counts[FP] == 0 and filt.counts[FN] == 0 and not silent and len(lost) > 0)
    detail = (f"full {dict((k, v) for k, v in full.counts.items() if v)} A={full.accuracy}; "
              f"filtered {dict((k, v) for k, v in filt.counts.items() if v)}; "
              f"{len(lost)} detections lost to filtering, {len(silent)} silent")
    return _record(4, "corpus scorecard", ok, detail)


# ----------------------------------------------------------------- 5


def _two_rank(entering):
    case = branch_skip_case("mpi", entering)
    with tempfile.TemporaryDirectory() as d:
        prefix = Path(d) / "cov"
        violations = []
        for tag, events in case.traces.items():
            engine = Engine(case.db, case.report, coverage_prefix=prefix, process_tag=tag)
            violations += engine.run(mark_trace(events, case.report))
        cov = check_coverage(prefix, case.report)
    return violations, cov


def criterion_5():
    start = time.perf_counter()
    v_skip, c_skip = _two_rank((False, False))
    v_enter, c_enter = _two_rank((True, False))
    elapsed = time.perf_counter() - start
    ok = (len(c_skip) == 1 and not v_skip and len(c_enter) == 0 and len(v_enter) == 1
          and v_enter[0].error_class == "local-data-race" and elapsed < 1.0)
    detail = (f"both skip: {len(c_skip)} coverage / {len(v_skip)} violations; "
              f"one enters: {len(c_enter)} coverage / {len(v_enter)} violations; {elapsed:.3f}s")
    return _record(5, "coverage protocol", ok, detail)


# ----------------------------------------------------------------- 6


def criterion_6():
    cases = generate_corpus(0)
    on = run_and_score(cases, EngineConfig(memory_opt_out=True))
    off = run_and_score(cases, EngineConfig(memory_opt_out=False))
    same = on.machine_reports() == off.machine_reports()
    ratio = off.deliveries / on.deliveries if on.deliveries else float("inf")
    ok = same and ratio >= 2.0
    return _record(6, "subscription differential", ok,
                   f"reports identical={same}, deliveries {off.deliveries} -> {on.deliveries} ({ratio:.2f}x)")


# ----------------------------------------------------------------- 7


def criterion_7(n: int = 1000):
    contract_fail = trace_fail = contracts = 0
    for seed in range(n):
        rng = random.Random(seed)
        db = random_db(rng)
        for tree in db.contracts.values():
            contracts += 1
            text = print_contract(tree)
            again = parse_contract(text)
            if again != tree or print_contract(again) != text:
                contract_fail += 1
        events = random_trace(rng, db)
        raw = trace_bytes(events)
        back = read_trace(io.BytesIO(raw))
        sink = io.StringIO()
        write_trace_jsonl(events, sink)
        if back != events or trace_bytes(back) != raw or read_trace_jsonl(io.StringIO(sink.getvalue())) != events:
            trace_fail += 1
    ok = contract_fail == 0 and trace_fail == 0 and contracts >= n
    return _record(7, "round-trip suites", ok,
                   f"{contracts} contracts ({contract_fail} failures), {n} traces ({trace_fail} failures)")


# ----------------------------------------------------------------- 8


def criterion_8():
    events = synthetic_trace(10**6, seed=0)
    full = run_bench(events, "full")
    filt = run_bench(events, "filtered")
    ratio = filt.events_per_second / full.events_per_second
    return _record(8, "filtered throughput", ratio >= 2.0,
                   f"full {full.events_per_second:,.0f} ev/s, filtered {filt.events_per_second:,.0f} ev/s "
                   f"({ratio:.2f}x, need 2x)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    assert CRITERIA[n - 1](), RESULTS[n]


if __name__ == "__main__":
    for check in CRITERIA:
        check()

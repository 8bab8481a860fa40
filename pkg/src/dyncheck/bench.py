"""Throughput measurement for full versus filtered instrumentation."""
from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .corpus import MPI_COMM_WORLD, MPI_INT, STATUS_IGNORE, TraceBuilder, contract_db
from .coverage import RelevanceReport, filter_trace
from .engine import Engine
from .trace import Memory, TraceEvent

MODES = ("full", "filtered")


def synthetic_trace(n_memory: int, seed: int = 0, calls_every: int = 4096) -> list[TraceEvent]:
    """A memory-heavy MPI-like trace with ``n_memory`` memory events.

    Every ``calls_every`` accesses a receive into a scratch buffer is posted
    and completed, so a memory-watching analysis is live most of the time.
    """
    rng = random.Random(seed)
    db = contract_db("mpi")
    if n_memory == 0:
        return []
    b = TraceBuilder(db, file="bench.c", args=("./bench",))
    b.call("MPI_Init", 0x7FF0, 0x7FF8)
    locs = [b._loc(None) for _ in range(64)]  # a small loop body
    req, scratch = 0x5000, 0xF000_0000
    done = 0
    while done < n_memory:
        b.call("MPI_Irecv", scratch, 1, MPI_INT, 0, 0, MPI_COMM_WORLD, req)
        chunk = min(calls_every, n_memory - done)
        addrs = [0x1000 + 8 * rng.randrange(1 << 16) for _ in range(chunk)]
        writes = [rng.random() < 0.4 for _ in range(chunk)]
        for i in range(chunk):
            b.events.append(Memory(False, addrs[i], writes[i], locs[i % 64]))
        done += chunk
        b.call("MPI_Wait", req, STATUS_IGNORE)
    b.call("MPI_Finalize")
    return b.finish()


@dataclass(frozen=True)
class BenchResult:
    mode: str
    events: int
    memory_events: int
    seconds: float

    @property
    def events_per_second(self) -> float | None:
        if self.events == 0 or self.seconds <= 0:
            return None
        return self.events / self.seconds

    def format_line(self) -> str:
        eps = self.events_per_second
        rate = "n/a" if eps is None else f"{eps:,.0f} events/s"
        return f"{self.mode}\t{self.events}\t{self.seconds:.3f}s\t{rate}"


def run_bench(events: list[TraceEvent], mode: str, report: RelevanceReport | None = None) -> BenchResult:
    """Time one pass over ``events``; filtering time counts towards the filtered mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    n_mem = sum(1 for ev in events if isinstance(ev, Memory))
    if not events:
        return BenchResult(mode, 0, 0, 0.0)
    if report is None:
        report = RelevanceReport(())
    db = contract_db("mpi")
    start = time.perf_counter()
    if mode == "filtered":
        engine = Engine(db, report)
        stream = filter_trace(events, report)
    else:
        engine = Engine(db)
        stream = iter(events)
    process = engine.process
    for ev in stream:
        process(ev)
    elapsed = time.perf_counter() - start
    return BenchResult(mode, len(events), n_mem, elapsed)


def bench(n_memory: int = 10**6, modes: tuple[str, ...] = MODES, seed: int = 0) -> list[BenchResult]:
    events = synthetic_trace(n_memory, seed)
    return [run_bench(events, m) for m in modes]

"""Synthetic test corpus and classification scoring.

Two contract sets are provided: an MPI-like one and a SHMEM-like one.  Each
requirement carries a ``MSG`` naming its error class, so a violation report
is classified by the outermost message on its blame chain.

Error classes: ``init-finalize``, ``local-data-race``, ``handle-lifecycle``
and ``mixed-sync``.
"""
from __future__ import annotations

import json
import random
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable

from .contract_db import ContractDatabase, load_contract_text
from .coverage import (
    RelevanceReport,
    check_coverage,
    filter_trace,
    format_report,
    mark_trace,
    parse_report,
)
from .engine import Engine
from .reports import ErrorReport, machine_lines
from .trace import (
    Exit,
    FunctionCall,
    Init,
    Memory,
    SizedArg,
    SourceLoc,
    TraceEvent,
    read_trace_jsonl,
    write_trace_jsonl,
)

ERROR_CLASSES = ("init-finalize", "local-data-race", "handle-lifecycle", "mixed-sync")
TIMEOUT_S = 30.0
STATIC_TOOL = "static-contracts"

MPI_CONTRACTS = """\
# MPI-like contract set
MPI_Init(2) CONTRACT( POST { call!(MPI_Finalize) MSG "init-finalize" } );
MPI_Finalize(0) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" } );
MPI_Isend(7) CONTRACT(
  PRE { call!(MPI_Init) MSG "init-finalize" }
  POST {
    no!(write!(*0)) until!(call_tag!(request_complete,$:6)) MSG "local-data-race",
    no!(call_tag!(request_start,$:6)) until!(call_tag!(request_complete,$:6)) MSG "handle-lifecycle"
  }
  TAGS { request_start(6) } );
MPI_Irecv(7) CONTRACT(
  PRE { call!(MPI_Init) MSG "init-finalize" }
  POST {
    no!(read!(*0)) until!(call_tag!(request_complete,$:6)) MSG "local-data-race",
    no!(write!(*0)) until!(call_tag!(request_complete,$:6)) MSG "local-data-race",
    no!(call_tag!(request_start,$:6)) until!(call_tag!(request_complete,$:6)) MSG "handle-lifecycle"
  }
  TAGS { request_start(6) } );
MPI_Wait(2) CONTRACT(
  PRE { call!(MPI_Init) MSG "init-finalize", call_tag!(request_start,$:0) MSG "handle-lifecycle" }
  TAGS { request_complete(0) } );
MPI_Get(8) CONTRACT(
  PRE {
    call!(MPI_Init) MSG "init-finalize",
    (call_tag!(epoch_fence_create,$:7) MSG "Fence epoch" ^
     call_tag!(epoch_lock_create,$:7) MSG "Lock epoch" ^
     call_tag!(epoch_pscw_create,$:7) MSG "PSCW epoch") MSG "mixed-sync"
  }
  POST {
    no!(read!(*0)) until!(call_tag!(rma_complete,$:7)) MSG "local-data-race",
    no!(write!(*0)) until!(call_tag!(rma_complete,$:7)) MSG "local-data-race"
  } );
MPI_Put(8) CONTRACT(
  PRE {
    call!(MPI_Init) MSG "init-finalize",
    (call_tag!(epoch_fence_create,$:7) MSG "Fence epoch" ^
     call_tag!(epoch_lock_create,$:7) MSG "Lock epoch" ^
     call_tag!(epoch_pscw_create,$:7) MSG "PSCW epoch") MSG "mixed-sync"
  }
  POST { no!(write!(*0)) until!(call_tag!(rma_complete,$:7)) MSG "local-data-race" } );
MPI_Win_fence(2) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" }
  TAGS { rma_complete(1), epoch_fence_create(1) } );
MPI_Win_lock_all(2) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" }
  TAGS { epoch_lock_create(1) } );
MPI_Win_unlock_all(1) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" }
  TAGS { rma_complete(0) } );
MPI_Win_start(3) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" }
  TAGS { epoch_pscw_create(2) } );
MPI_Win_complete(1) CONTRACT( PRE { call!(MPI_Init) MSG "init-finalize" }
  TAGS { rma_complete(0) } );
"""

SHMEM_CONTRACTS = """\
# SHMEM-like contract set: no window creation or epochs
shmem_init(0) CONTRACT( POST { call!(shmem_finalize) MSG "init-finalize" } );
shmem_finalize(0) CONTRACT( PRE { call!(shmem_init) MSG "init-finalize" } );
shmem_int_put_nbi(4) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize" }
  POST { no!(write!(*1)) until!(call!(shmem_quiet)) MSG "local-data-race" } );
shmem_int_get_nbi(4) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize" }
  POST {
    no!(read!(*0)) until!(call!(shmem_quiet)) MSG "local-data-race",
    no!(write!(*0)) until!(call!(shmem_quiet)) MSG "local-data-race"
  } );
shmem_quiet(0) CONTRACT( PRE { call!(shmem_init) MSG "init-finalize" } );
shmem_ctx_create(2) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize" }
  POST { call_tag!(ctx_destroy,$:1) MSG "handle-lifecycle" }
  TAGS { ctx_created(1) } );
shmem_ctx_destroy(1) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize", call_tag!(ctx_created,$:0) MSG "handle-lifecycle" }
  POST { no!(call_tag!(ctx_use,$:0)) until!(call_tag!(ctx_created,$:0)) MSG "handle-lifecycle" }
  TAGS { ctx_destroy(0), ctx_use(0) } );
shmem_ctx_putmem(5) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize", call_tag!(ctx_created,$:0) MSG "handle-lifecycle" }
  POST { no!(write!(*2)) until!(call_tag!(ctx_complete,$:0)) MSG "local-data-race" }
  TAGS { ctx_use(0) } );
shmem_ctx_quiet(1) CONTRACT( PRE { call!(shmem_init) MSG "init-finalize" }
  TAGS { ctx_complete(0), ctx_use(0) } );
shmem_set_lock(1) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize" }
  POST {
    call_tag!(lock_release,$:0) MSG "mixed-sync",
    no!(call_tag!(lock_acquire,$:0)) until!(call_tag!(lock_release,$:0)) MSG "mixed-sync"
  }
  TAGS { lock_acquire(0) } );
shmem_clear_lock(1) CONTRACT(
  PRE { call!(shmem_init) MSG "init-finalize", call_tag!(lock_acquire,$:0) MSG "mixed-sync" }
  TAGS { lock_release(0) } );
"""

CONTRACT_SETS = {"mpi": MPI_CONTRACTS, "shmem": SHMEM_CONTRACTS}

# Argument byte sizes per function; pointers and handles are 8, ints 4.
SIGNATURES: dict[str, tuple[int, ...]] = {
    "MPI_Init": (8, 8),
    "MPI_Finalize": (),
    "MPI_Isend": (8, 4, 8, 4, 4, 8, 8),
    "MPI_Irecv": (8, 4, 8, 4, 4, 8, 8),
    "MPI_Wait": (8, 8),
    "MPI_Get": (8, 4, 8, 4, 8, 4, 8, 8),
    "MPI_Put": (8, 4, 8, 4, 8, 4, 8, 8),
    "MPI_Win_fence": (4, 8),
    "MPI_Win_lock_all": (4, 8),
    "MPI_Win_unlock_all": (8,),
    "MPI_Win_start": (8, 4, 8),
    "MPI_Win_complete": (8,),
    "shmem_init": (),
    "shmem_finalize": (),
    "shmem_int_put_nbi": (8, 8, 8, 4),
    "shmem_int_get_nbi": (8, 8, 8, 4),
    "shmem_quiet": (),
    "shmem_ctx_create": (8, 8),
    "shmem_ctx_destroy": (8,),
    "shmem_ctx_putmem": (8, 8, 8, 8, 4),
    "shmem_ctx_quiet": (8,),
    "shmem_set_lock": (8,),
    "shmem_clear_lock": (8,),
}

UNKNOWN_TOKEN = 0xFFFF  # a call the contracts know nothing about
MPI_INT, MPI_COMM_WORLD, STATUS_IGNORE = 0x4C00_0405, 0x4400_0000, 0
NOISE_BASE = 0x7F00_0000


@lru_cache(maxsize=None)
def contract_db(set_name: str) -> ContractDatabase:
    return load_contract_text(CONTRACT_SETS[set_name])


# --------------------------------------------------------------- trace build


class TraceBuilder:
    """Builds one process's trace, numbering source lines as it goes."""

    def __init__(self, db: ContractDatabase, file: str = "app.c", args: tuple[str, ...] = ()):
        self.db = db
        self.file = file
        self.events: list[TraceEvent] = [Init(args)]
        self.line = 0
        self.flags: list[tuple[SourceLoc, str]] = []

    def _loc(self, line: int | None, flag: str | None = None) -> SourceLoc:
        if line is None:
            self.line += 1
            line = self.line
        else:
            self.line = max(self.line, line)
        loc = SourceLoc(self.file, line)
        if flag is not None and all(existing != loc for existing, _ in self.flags):
            self.flags.append((loc, flag))
        return loc

    def call(self, name: str, *values: int, line: int | None = None, flag: str | None = None) -> SourceLoc:
        sizes = SIGNATURES.get(name)
        if sizes is None:
            sizes = (8,) * self.db.arities[name]
        if len(values) != len(sizes):
            raise ValueError(f"{name} takes {len(sizes)} arguments")
        loc = self._loc(line, flag)
        args = tuple(SizedArg.of(v, s) for v, s in zip(values, sizes))
        self.events.append(FunctionCall(False, self.db.token(name), args, loc))
        return loc

    def unknown_call(self, *values: int) -> SourceLoc:
        loc = self._loc(None)
        self.events.append(FunctionCall(False, UNKNOWN_TOKEN, tuple(SizedArg.of(v) for v in values), loc))
        return loc

    def access(self, address: int, write: bool, line: int | None = None, flag: str | None = None) -> SourceLoc:
        loc = self._loc(line, flag)
        self.events.append(Memory(False, address, write, loc))
        return loc

    def read(self, address: int, **kw) -> SourceLoc:
        return self.access(address, False, **kw)

    def write(self, address: int, **kw) -> SourceLoc:
        return self.access(address, True, **kw)

    def update(self, address: int, **kw) -> SourceLoc:
        """``x++``: a read then a write at the same line."""
        loc = self.read(address, **kw)
        kw["line"] = loc.line
        kw.pop("flag", None)
        self.write(address, **kw)
        return loc

    def noise(self, rng: random.Random, n: int) -> None:
        for _ in range(n):
            self.access(NOISE_BASE + 8 * rng.randrange(64), rng.random() < 0.5)

    def compute(self, rng: random.Random) -> None:
        """A local kernel between communication calls."""
        self.noise(rng, rng.randrange(8, 25))

    def phantom(self, flag: str, gap: int = 2) -> SourceLoc:
        """A reported line the program never reaches (e.g. an untaken branch)."""
        self.line += gap
        loc = SourceLoc(self.file, self.line)
        self.flags.append((loc, flag))
        return loc

    def finish(self, code: int | None = 0) -> list[TraceEvent]:
        if code is not None:
            self.events.append(Exit(code))
        return self.events


# ------------------------------------------------------------------- corpus


@dataclass
class TestCase:
    name: str
    contract_set: str
    traces: dict[str, list[TraceEvent]]
    report: RelevanceReport | None
    expected: str | None  # error class, or None for a correct program
    expected_coverage: str = "covered"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.expected_coverage == "non-covered" and self.report is None:
            raise ValueError(f"{self.name}: non-covered expectation needs a report")

    @property
    def contracts(self) -> str:
        return CONTRACT_SETS[self.contract_set]

    @property
    def db(self) -> ContractDatabase:
        return contract_db(self.contract_set)


def _report(flags: list[tuple[SourceLoc, str]]) -> RelevanceReport:
    return RelevanceReport(tuple(flags), STATIC_TOOL)


@dataclass
class _Params:
    rng: random.Random
    buggy: bool
    variant: int
    incomplete: bool = False


# Each template builds one single-process case; ``p.buggy`` selects the bug.
# Lines flagged with ``flag=`` become the static relevance report.


def _mpi_init_finalize(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("mpi"))
    rng, v = p.rng, p.variant % 5
    buf, req = 0x1000 + 64 * rng.randrange(16), 0x5000 + 8 * rng.randrange(16)
    skip_init = p.buggy and v in (0, 2, 4)
    skip_finalize = p.buggy and v in (1, 3)
    if not skip_init:
        b.call("MPI_Init", 0x7FF0, 0x7FF8, flag="init-finalize")
    b.compute(rng)
    if v in (2, 3):
        b.call("MPI_Isend", buf, 4, MPI_INT, 1, 0, MPI_COMM_WORLD, req, flag="init-finalize" if skip_init else None)
        b.compute(rng)
        b.call("MPI_Wait", req, STATUS_IGNORE)
    if v == 4:
        b.unknown_call(buf)
    if not skip_finalize:
        b.call("MPI_Finalize", flag="init-finalize" if skip_init else None)
    return b


def _mpi_data_race(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("mpi"))
    rng, v = p.rng, p.variant % 5
    buf, req, win = 0x1000 + 64 * rng.randrange(16), 0x5000 + 8 * rng.randrange(16), 0x9000 + rng.randrange(8)
    b.call("MPI_Init", 0x7FF0, 0x7FF8)
    b.compute(rng)
    # the static tool reports the race at the access, unless the report is
    # incomplete, in which case it points at an untaken branch instead
    acc_flag = None if p.incomplete else "local-data-race"

    def racy(access: Callable[..., SourceLoc]) -> None:
        if p.buggy:
            access(buf, flag=acc_flag)
            if p.incomplete:
                b.phantom("local-data-race")

    if v == 0:  # Isend, then overwrite the send buffer
        b.write(buf)
        b.call("MPI_Isend", buf, 1, MPI_INT, 1, 0, MPI_COMM_WORLD, req, flag="local-data-race")
        b.read(buf)  # reading a send buffer is fine
        racy(b.write)
        b.compute(rng)
        b.call("MPI_Wait", req, STATUS_IGNORE)
        b.write(buf)
    elif v in (1, 2):  # Irecv, then touch the receive buffer
        b.call("MPI_Irecv", buf, 1, MPI_INT, 0, 0, MPI_COMM_WORLD, req, flag="local-data-race")
        b.compute(rng)
        racy(b.read if v == 1 else b.update)
        b.call("MPI_Wait", req, STATUS_IGNORE)
        b.update(buf)
    else:  # RMA: Get or Put inside a fence epoch
        b.call("MPI_Win_fence", 0, win)
        if v == 3:
            b.call("MPI_Get", buf, 1, MPI_INT, 1, 0, 1, MPI_INT, win, flag="local-data-race")
            racy(b.read)
        else:
            b.call("MPI_Put", buf, 1, MPI_INT, 1, 0, 1, MPI_INT, win, flag="local-data-race")
            b.read(buf)
            racy(b.write)
        b.compute(rng)
        b.call("MPI_Win_fence", 0, win)
        b.update(buf)
    b.call("MPI_Finalize")
    return b


def _mpi_handle(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("mpi"))
    rng, v = p.rng, p.variant % 5
    buf1, buf2 = 0x1000 + 64 * rng.randrange(8), 0x2000 + 64 * rng.randrange(8)
    req, req2 = 0x5000 + 8 * rng.randrange(8), 0x6000 + 8 * rng.randrange(8)
    b.call("MPI_Init", 0x7FF0, 0x7FF8)
    first = "MPI_Irecv" if v in (1, 4) else "MPI_Isend"
    second = "MPI_Irecv" if v in (1, 2) else "MPI_Isend"
    if v == 3:  # wait on a request that was never started
        b.call("MPI_Isend", buf1, 1, MPI_INT, 1, 0, MPI_COMM_WORLD, req, flag="handle-lifecycle")
        b.call("MPI_Wait", req2 if p.buggy else req, STATUS_IGNORE, flag="handle-lifecycle")
    else:
        b.call(first, buf1, 1, MPI_INT, 1, 0, MPI_COMM_WORLD, req, flag="handle-lifecycle")
        b.compute(rng)
        if not p.buggy:
            b.call("MPI_Wait", req, STATUS_IGNORE)
        b.call(second, buf2, 1, MPI_INT, 1, 1, MPI_COMM_WORLD, req, flag="handle-lifecycle")
        b.compute(rng)
        b.call("MPI_Wait", req, STATUS_IGNORE)
    b.call("MPI_Finalize")
    return b


def _mpi_mixed_sync(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("mpi"))
    rng, v = p.rng, p.variant % 5
    buf, win, grp = 0x1000 + 64 * rng.randrange(16), 0x9000 + rng.randrange(8), 0xA000
    b.call("MPI_Init", 0x7FF0, 0x7FF8)
    op = "MPI_Put" if v in (1, 4) else "MPI_Get"
    openers = {
        "fence": lambda **kw: b.call("MPI_Win_fence", 0, win, **kw),
        "lock": lambda **kw: b.call("MPI_Win_lock_all", 0, win, **kw),
        "pscw": lambda **kw: b.call("MPI_Win_start", grp, 0, win, **kw),
    }
    closers = {
        "fence": lambda: b.call("MPI_Win_fence", 0, win),
        "lock": lambda: b.call("MPI_Win_unlock_all", win),
        "pscw": lambda: b.call("MPI_Win_complete", win),
    }
    first, extra = [("fence", "lock"), ("lock", "fence"), ("fence", "pscw"), ("lock", None), ("pscw", "lock")][v]
    if not (p.buggy and v == 3):  # v3 bug: no epoch at all
        openers[first](flag="mixed-sync")
    if p.buggy and extra is not None:
        openers[extra](flag="mixed-sync")
    b.compute(rng)
    b.call(op, buf, 1, MPI_INT, 1, 0, 1, MPI_INT, win, flag="mixed-sync")
    closers[first]()
    b.call("MPI_Finalize")
    return b


def _shmem_init_finalize(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("shmem"))
    rng, v = p.rng, p.variant % 5
    src, dest = 0x1000 + 64 * rng.randrange(16), 0x3000
    skip_init = p.buggy and v in (0, 2, 4)
    skip_finalize = p.buggy and v in (1, 3)
    if not skip_init:
        b.call("shmem_init", flag="init-finalize")
    b.compute(rng)
    if v in (2, 3):
        b.call("shmem_int_put_nbi", dest, src, 1, 1, flag="init-finalize" if skip_init else None)
        b.call("shmem_quiet")
    if v == 4:
        b.unknown_call(src)
    if not skip_finalize:
        b.call("shmem_finalize", flag="init-finalize" if skip_init else None)
    return b


def _shmem_data_race(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("shmem"))
    rng, v = p.rng, p.variant % 5
    src, dest, ctx = 0x1000 + 64 * rng.randrange(16), 0x3000 + 64 * rng.randrange(4), 0xC000 + rng.randrange(8)
    acc_flag = None if p.incomplete else "local-data-race"

    def racy(access) -> None:
        if p.buggy:
            access(src if v != 2 else dest, flag=acc_flag)
            if p.incomplete:
                b.phantom("local-data-race")

    b.call("shmem_init")
    b.write(src)  # int src = 4;
    if v in (0, 1):  # put_nbi, then overwrite the source
        b.call("shmem_int_put_nbi", dest, src, 1, 1, flag="local-data-race")
        b.read(src)
        b.compute(rng)
        racy(b.write if v == 0 else b.update)
        b.call("shmem_quiet")
    elif v == 2:  # get_nbi, then read the destination
        b.call("shmem_int_get_nbi", dest, 0x3F00, 1, 1, flag="local-data-race")
        racy(b.read)
        b.call("shmem_quiet")
        b.read(dest)
    else:  # context put
        b.call("shmem_ctx_create", 0, ctx)
        b.call("shmem_ctx_putmem", ctx, dest, src, 4, 1, flag="local-data-race")
        b.compute(rng)
        racy(b.write)
        b.call("shmem_ctx_quiet", ctx)
        b.call("shmem_ctx_destroy", ctx)
    b.write(src)
    b.call("shmem_finalize")
    return b


def _shmem_handle(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("shmem"))
    rng, v = p.rng, p.variant % 5
    ctx, ctx2, src = 0xC000 + rng.randrange(8), 0xD000 + rng.randrange(8), 0x1000 + 64 * rng.randrange(8)
    b.call("shmem_init")
    b.call("shmem_ctx_create", 0, ctx, flag="handle-lifecycle")
    b.compute(rng)
    if v in (0, 3):  # context leak
        b.call("shmem_ctx_putmem", ctx, 0x3000, src, 4, 1)
        b.call("shmem_ctx_quiet", ctx)
        if not p.buggy:
            b.call("shmem_ctx_destroy", ctx)
    elif v == 1:  # use after destroy
        b.call("shmem_ctx_destroy", ctx)
        b.noise(rng, 1)
        if p.buggy:
            b.call("shmem_ctx_quiet", ctx, flag="handle-lifecycle")
    elif v == 2:  # double destroy
        b.call("shmem_ctx_destroy", ctx)
        if p.buggy:
            b.call("shmem_ctx_destroy", ctx, flag="handle-lifecycle")
    else:  # destroy a context that was never created
        b.call("shmem_ctx_destroy", ctx)
        if p.buggy:
            b.call("shmem_ctx_destroy", ctx2, flag="handle-lifecycle")
    b.call("shmem_finalize")
    return b


def _shmem_mixed_sync(p: _Params) -> TraceBuilder:
    b = TraceBuilder(contract_db("shmem"))
    rng, v = p.rng, p.variant % 5
    lock, lock2 = 0xE000 + 8 * rng.randrange(8), 0xF000
    b.call("shmem_init")
    if v in (0, 3):  # lock never released
        b.call("shmem_set_lock", lock, flag="mixed-sync")
        b.noise(rng, 1 + rng.randrange(3))
        if not p.buggy:
            b.call("shmem_clear_lock", lock)
    elif v in (1, 4):  # lock acquired twice
        b.call("shmem_set_lock", lock, flag="mixed-sync")
        if v == 4:
            b.call("shmem_set_lock", lock2)
            b.call("shmem_clear_lock", lock2)
        if not p.buggy:
            b.call("shmem_clear_lock", lock)
        b.call("shmem_set_lock", lock, flag="mixed-sync")
        b.call("shmem_clear_lock", lock)
    else:  # releasing a lock that was never acquired
        if not p.buggy:
            b.call("shmem_set_lock", lock)
        b.call("shmem_clear_lock", lock, flag="mixed-sync")
    b.call("shmem_finalize")
    return b


TEMPLATES = {
    ("mpi", "init-finalize"): _mpi_init_finalize,
    ("mpi", "local-data-race"): _mpi_data_race,
    ("mpi", "handle-lifecycle"): _mpi_handle,
    ("mpi", "mixed-sync"): _mpi_mixed_sync,
    ("shmem", "init-finalize"): _shmem_init_finalize,
    ("shmem", "local-data-race"): _shmem_data_race,
    ("shmem", "handle-lifecycle"): _shmem_handle,
    ("shmem", "mixed-sync"): _shmem_mixed_sync,
}


def branch_skip_case(set_name: str, entering: tuple[bool, ...], name: str | None = None) -> TestCase:
    """Two or more ranks running::

        1  bool option = input();
        2  nonblocking receive into buf
        3  if (option)
        4      buf[0]++;
        5  completion

    The static report names lines 2 and 4.  ``entering[r]`` says whether
    rank ``r`` takes the branch.
    """
    db = contract_db(set_name)
    traces = {}
    flags = [(SourceLoc("app.c", 2), "local-data-race"), (SourceLoc("app.c", 4), "local-data-race")]
    buf = 0x1000
    for rank, enter in enumerate(entering):
        b = TraceBuilder(db, args=("./app",))
        if set_name == "mpi":
            b.call("MPI_Init", 0x7FF0, 0x7FF8, line=1)
            b.call("MPI_Irecv", buf, 1, MPI_INT, 1 - rank, 0, MPI_COMM_WORLD, 0x5000, line=2)
            if enter:
                b.update(buf, line=4)
            b.call("MPI_Wait", 0x5000, STATUS_IGNORE, line=5)
            b.call("MPI_Finalize", line=6)
        else:
            b.call("shmem_init", line=1)
            b.call("shmem_int_get_nbi", buf, 0x3F00, 1, 1 - rank, line=2)
            if enter:
                b.update(buf, line=4)
            b.call("shmem_quiet", line=5)
            b.call("shmem_finalize", line=6)
        traces[str(rank)] = b.finish()
    covered = any(entering)
    return TestCase(
        name=name or f"{set_name}-branch-skip-{''.join('1' if e else '0' for e in entering)}",
        contract_set=set_name,
        traces=traces,
        report=_report(flags),
        expected="local-data-race",
        expected_coverage="covered" if covered else "non-covered",
    )


def generate_corpus(seed: int = 0, per_class: int = 5) -> list[TestCase]:
    """Deterministic corpus: ``per_class`` buggy and correct cases for every
    (contract set, error class) pair, plus branch-skip coverage cases.

    Data-race cases with an odd variant index get an incomplete static
    report: it misses the racing access and names an unreached line instead.
    """
    rng = random.Random(seed)
    cases: list[TestCase] = []
    for (set_name, cls), template in TEMPLATES.items():
        for buggy in (True, False):
            for i in range(per_class):
                incomplete = buggy and cls == "local-data-race" and i % 2 == 1
                p = _Params(random.Random(rng.getrandbits(64)), buggy, i, incomplete)
                b = template(p)
                kind = "bug" if buggy else "ok"
                suffix = "-incomplete" if incomplete else ""
                cases.append(TestCase(
                    name=f"{set_name}-{cls}-{kind}-{i}{suffix}",
                    contract_set=set_name,
                    traces={"0": b.finish()},
                    report=_report(b.flags),
                    expected=cls if buggy else None,
                    expected_coverage="non-covered" if incomplete else "covered",
                ))
    for set_name in ("mpi", "shmem"):
        cases.append(branch_skip_case(set_name, (False, False)))
        cases.append(branch_skip_case(set_name, (True, False)))
    return cases


# ------------------------------------------------------------------ scoring

TP, TN, FP, FN, NC_TP, NC_FP, TO = "TP", "TN", "FP", "FN", "NC-TP", "NC-FP", "TO"
CATEGORIES = (TP, TN, FP, FN, NC_TP, NC_FP, TO)


@dataclass(frozen=True)
class EngineConfig:
    filtered: bool = False
    memory_opt_out: bool = True
    timeout_s: float = TIMEOUT_S


@dataclass
class CaseResult:
    name: str
    category: str
    violations: list[ErrorReport]
    coverage: list[ErrorReport]
    deliveries: int = 0

    @property
    def reports(self) -> list[ErrorReport]:
        return self.violations + self.coverage


@dataclass
class Scorecard:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    results: list[CaseResult] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def accuracy(self) -> Fraction | None:
        if not self.total:
            return None
        return Fraction(self.counts[TP] + self.counts[TN] + self.counts[NC_TP], self.total)

    @property
    def deliveries(self) -> int:
        return sum(r.deliveries for r in self.results)

    def category_of(self, name: str) -> str:
        for r in self.results:
            if r.name == name:
                return r.category
        raise KeyError(name)

    def machine_reports(self) -> str:
        out = []
        for r in self.results:
            out.append(machine_lines(rep.with_trace(f"{r.name}/{rep.trace}") for rep in r.reports))
        return "".join(out)

    def to_record(self) -> dict:
        acc = self.accuracy
        return {
            "counts": dict(self.counts),
            "total": self.total,
            "accuracy": None if acc is None else float(acc),
            "accuracy_exact": None if acc is None else f"{acc.numerator}/{acc.denominator}",
            "cases": {r.name: r.category for r in self.results},
        }

    def format_table(self, title: str = "") -> str:
        head = " ".join(f"{c:>6}" for c in CATEGORIES) + f" {'A':>6}"
        acc = self.accuracy
        acc_text = "n/a" if acc is None else f"{float(acc):.2f}"
        row = " ".join(f"{self.counts[c]:>6}" for c in CATEGORIES) + f" {acc_text:>6}"
        lines = [title] if title else []
        return "\n".join(lines + [head, row])


def classify(case: TestCase, violations: list[ErrorReport], coverage: list[ErrorReport]) -> str:
    if case.expected is not None:
        if any(r.error_class == case.expected for r in violations):
            return TP
        return NC_TP if coverage else FN
    if violations:
        return FP
    return NC_FP if coverage else TN


class CaseTimeout(Exception):
    pass


def run_case(case: TestCase, config: EngineConfig = EngineConfig(), workdir: str | Path | None = None) -> CaseResult:
    db = case.db
    report = case.report
    if config.filtered and report is None:
        report = RelevanceReport(())
    deadline = time.monotonic() + config.timeout_s
    violations: list[ErrorReport] = []
    deliveries = 0
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        prefix = Path(tmp) / "coverage"
        try:
            for tag, events in case.traces.items():
                if report is not None:
                    events = (filter_trace if config.filtered else mark_trace)(events, report)
                engine = Engine(db, report, memory_opt_out=config.memory_opt_out,
                                coverage_prefix=prefix, process_tag=tag)
                for i, ev in enumerate(events):
                    violations.extend(r.with_trace(tag) for r in engine.process(ev))
                    if i % 1024 == 0 and time.monotonic() > deadline:
                        raise CaseTimeout(case.name)
                deliveries += engine.deliveries
        except CaseTimeout:
            return CaseResult(case.name, TO, violations, [], deliveries)
        coverage = check_coverage(prefix, report) if report is not None else []
    return CaseResult(case.name, classify(case, violations, coverage), violations, coverage, deliveries)


def run_and_score(cases: list[TestCase], config: EngineConfig = EngineConfig()) -> Scorecard:
    card = Scorecard()
    for case in cases:
        result = run_case(case, config)
        card.counts[result.category] += 1
        card.results.append(result)
    return card


# ------------------------------------------------------------- corpus files


def write_corpus(cases: list[TestCase], root: str | Path) -> None:
    """One directory per case: contracts.cov, trace.<tag>.cvtj, report.txt, expected.txt."""
    root = Path(root)
    for case in cases:
        d = root / case.name
        d.mkdir(parents=True, exist_ok=True)
        (d / "contracts.cov").write_text(case.contracts, encoding="utf-8")
        for tag, events in case.traces.items():
            with open(d / f"trace.{tag}.cvtj", "w", encoding="utf-8") as fh:
                write_trace_jsonl(events, fh)
        if case.report is not None:
            (d / "report.txt").write_text(format_report(case.report), encoding="utf-8")
        expected = f"positive {case.expected}" if case.expected else "negative"
        (d / "expected.txt").write_text(
            f"set {case.contract_set}\nexpected {expected}\ncoverage {case.expected_coverage}\n", encoding="utf-8"
        )


def load_corpus(root: str | Path) -> list[TestCase]:
    cases = []
    for d in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        fields = {}
        for line in (d / "expected.txt").read_text(encoding="utf-8").splitlines():
            key, _, value = line.strip().partition(" ")
            if key:
                fields[key] = value.strip()
        set_name = fields["set"]
        if (d / "contracts.cov").read_text(encoding="utf-8") != CONTRACT_SETS[set_name]:
            raise ValueError(f"{d}: contracts differ from the {set_name} set")
        traces = {}
        for t in sorted(d.glob("trace.*.cvtj")):
            with open(t, encoding="utf-8") as fh:
                traces[t.name.split(".")[1]] = read_trace_jsonl(fh)
        report_path = d / "report.txt"
        report = parse_report(report_path.read_text(encoding="utf-8")) if report_path.exists() else None
        verdict, _, cls = fields["expected"].partition(" ")
        if verdict not in ("positive", "negative") or (verdict == "positive") != bool(cls):
            raise ValueError(f"{d}: bad expected line {fields['expected']!r}")
        cases.append(TestCase(d.name, set_name, traces, report, cls or None, fields["coverage"]))
    return cases


def scorecard_json(card: Scorecard) -> str:
    return json.dumps(card.to_record(), indent=2, sort_keys=True)


# --------------------------------------------------- random correct programs


def random_correct_trace(rng: random.Random, set_name: str, steps: int | None = None) -> list[TraceEvent]:
    """A trace that follows every rule of the given contract set."""
    gen = _mpi_program if set_name == "mpi" else _shmem_program
    return gen(rng, steps if steps is not None else rng.randrange(3, 30))


def _pick_free(rng: random.Random, pool: list[int], busy: set[int]) -> int | None:
    free = [x for x in pool if x not in busy]
    return rng.choice(free) if free else None


def _mpi_program(rng: random.Random, steps: int) -> list[TraceEvent]:
    b = TraceBuilder(contract_db("mpi"), args=("./app",))
    bufs = [0x1000 + 64 * i for i in range(6)]
    reqs = [0x5000 + 8 * i for i in range(4)]
    methods = {0x9000 + i: rng.choice(("fence", "lock", "pscw")) for i in range(3)}
    pending_req: dict[int, int] = {}  # req -> buf it guards (writes only for Isend)
    recv_bufs: set[int] = set()
    send_bufs: dict[int, int] = {}  # buf -> pending send count
    epoch_bufs: dict[int, list[tuple[int, bool]]] = {}  # open window -> (buf, is_get)
    b.call("MPI_Init", 0x7FF0, 0x7FF8)

    def busy() -> set[int]:
        out = set(recv_bufs) | set(send_bufs)
        for ops in epoch_bufs.values():
            out.update(buf for buf, _ in ops)
        return out

    def close(win: int) -> None:
        m = methods[win]
        if m == "fence":
            b.call("MPI_Win_fence", 0, win)
        elif m == "lock":
            b.call("MPI_Win_unlock_all", win)
        else:
            b.call("MPI_Win_complete", win)
        del epoch_bufs[win]

    def wait(req: int) -> None:
        b.call("MPI_Wait", req, STATUS_IGNORE)
        buf = pending_req.pop(req)
        if buf in recv_bufs:
            recv_bufs.discard(buf)
        else:
            send_bufs[buf] -= 1
            if not send_bufs[buf]:
                del send_bufs[buf]

    for _ in range(steps):
        action = rng.choice(("isend", "irecv", "wait", "open", "rma", "close", "noise", "touch", "other"))
        if action in ("isend", "irecv"):
            req = _pick_free(rng, reqs, set(pending_req))
            # a send buffer may be shared by several sends; a receive buffer may not
            taken = busy() if action == "irecv" else (busy() - set(send_bufs))
            buf = _pick_free(rng, bufs, taken)
            if req is None or buf is None:
                continue
            name = "MPI_Isend" if action == "isend" else "MPI_Irecv"
            b.call(name, buf, 1, MPI_INT, 1, 0, MPI_COMM_WORLD, req)
            pending_req[req] = buf
            if action == "irecv":
                recv_bufs.add(buf)
            else:
                send_bufs[buf] = send_bufs.get(buf, 0) + 1
        elif action == "wait" and pending_req:
            wait(rng.choice(sorted(pending_req)))
        elif action == "open":
            closed = [w for w in methods if w not in epoch_bufs]
            if closed:
                win = rng.choice(closed)
                m = methods[win]
                if m == "fence":
                    b.call("MPI_Win_fence", 0, win)
                elif m == "lock":
                    b.call("MPI_Win_lock_all", 0, win)
                else:
                    b.call("MPI_Win_start", 0xA000, 0, win)
                epoch_bufs[win] = []
        elif action == "rma" and epoch_bufs:
            win = rng.choice(sorted(epoch_bufs))
            buf = _pick_free(rng, bufs, busy())
            if buf is None:
                continue
            is_get = rng.random() < 0.5
            b.call("MPI_Get" if is_get else "MPI_Put", buf, 1, MPI_INT, 1, 0, 1, MPI_INT, win)
            epoch_bufs[win].append((buf, is_get))
        elif action == "close" and epoch_bufs:
            close(rng.choice(sorted(epoch_bufs)))
        elif action == "noise":
            b.noise(rng, rng.randrange(1, 4))
        elif action == "touch":
            # reads of send / put origin buffers are allowed while pending
            readable = [x for x in bufs if x not in recv_bufs and not any(
                buf == x and is_get for ops in epoch_bufs.values() for buf, is_get in ops)]
            writable = [x for x in bufs if x not in busy()]
            if writable and rng.random() < 0.5:
                b.write(rng.choice(writable))
            elif readable:
                b.read(rng.choice(readable))
        elif action == "other":
            b.unknown_call(rng.randrange(1 << 32))
    for req in sorted(pending_req):
        wait(req)
    for win in sorted(epoch_bufs):
        close(win)
    b.call("MPI_Finalize")
    return b.finish()


def _shmem_program(rng: random.Random, steps: int) -> list[TraceEvent]:
    b = TraceBuilder(contract_db("shmem"), args=("./app",))
    bufs = [0x1000 + 64 * i for i in range(6)]
    locks = [0xE000 + 8 * i for i in range(3)]
    next_ctx = [0xC000]
    put_src: set[int] = set()  # write-forbidden until quiet
    get_dest: set[int] = set()  # read/write-forbidden until quiet
    ctx_src: dict[int, set[int]] = {}  # live context -> write-forbidden sources
    held: set[int] = set()
    b.call("shmem_init")

    def busy() -> set[int]:
        out = put_src | get_dest
        for s in ctx_src.values():
            out |= s
        return out

    def destroy(ctx: int) -> None:
        if ctx_src[ctx]:
            b.call("shmem_ctx_quiet", ctx)
        b.call("shmem_ctx_destroy", ctx)
        del ctx_src[ctx]

    for _ in range(steps):
        action = rng.choice(("put", "get", "quiet", "ctx_create", "ctx_put", "ctx_quiet", "ctx_destroy",
                             "lock", "unlock", "noise", "touch"))
        if action == "put":
            buf = _pick_free(rng, bufs, get_dest)
            if buf is not None:
                b.call("shmem_int_put_nbi", 0x3000, buf, 1, 1)
                put_src.add(buf)
        elif action == "get":
            buf = _pick_free(rng, bufs, busy())
            if buf is not None:
                b.call("shmem_int_get_nbi", buf, 0x3F00, 1, 1)
                get_dest.add(buf)
        elif action == "quiet":
            b.call("shmem_quiet")
            put_src.clear()
            get_dest.clear()
        elif action == "ctx_create" and len(ctx_src) < 2:
            ctx = next_ctx[0]
            next_ctx[0] += 8
            b.call("shmem_ctx_create", 0, ctx)
            ctx_src[ctx] = set()
        elif action == "ctx_put" and ctx_src:
            ctx = rng.choice(sorted(ctx_src))
            buf = _pick_free(rng, bufs, get_dest)
            if buf is not None:
                b.call("shmem_ctx_putmem", ctx, 0x3000, buf, 4, 1)
                ctx_src[ctx].add(buf)
        elif action == "ctx_quiet" and ctx_src:
            ctx = rng.choice(sorted(ctx_src))
            b.call("shmem_ctx_quiet", ctx)
            ctx_src[ctx].clear()
        elif action == "ctx_destroy" and ctx_src:
            destroy(rng.choice(sorted(ctx_src)))
        elif action == "lock":
            lock = _pick_free(rng, locks, held)
            if lock is not None:
                b.call("shmem_set_lock", lock)
                held.add(lock)
        elif action == "unlock" and held:
            lock = rng.choice(sorted(held))
            b.call("shmem_clear_lock", lock)
            held.discard(lock)
        elif action == "noise":
            b.noise(rng, rng.randrange(1, 4))
        elif action == "touch":
            writable = [x for x in bufs if x not in busy()]
            readable = [x for x in bufs if x not in get_dest]
            if writable and rng.random() < 0.5:
                b.write(rng.choice(writable))
            elif readable:
                b.read(rng.choice(readable))
    if put_src or get_dest:
        b.call("shmem_quiet")
    for ctx in sorted(ctx_src):
        destroy(ctx)
    for lock in sorted(held):
        b.call("shmem_clear_lock", lock)
    b.call("shmem_finalize")
    return b.finish()

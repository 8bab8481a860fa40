from __future__ import annotations

import pytest

from dyncheck.contract_db import load_contract_text
from dyncheck.corpus import TraceBuilder, contract_db

# The four example contracts for MPI_Finalize, MPI_Get and the two
# completion functions, plus a bare declaration of MPI_Init.
FIG_CONTRACTS = """\
MPI_Init(2);
MPI_Finalize(0) CONTRACT( PRE { call!(MPI_Init) } );
MPI_Get(8) CONTRACT(
  PRE { call!(MPI_Init) }
  POST {
    no!(read!(*0)) until!(call_tag!(rma_complete,$:7)),
    no!(write!(*0)) until!(call_tag!(rma_complete,$:7))
  } );
MPI_Win_fence(2) CONTRACT( TAGS { rma_complete(1) } );
MPI_Win_unlock_all(1) CONTRACT( TAGS { rma_complete(0) } );
"""

MIXED_SYNC_CONTRACTS = """\
MPI_Init(2);
MPI_Get(8) CONTRACT( PRE {
    call_tag!(epoch_fence_create,$:7) MSG "Fence epoch" ^
    call_tag!(epoch_lock_create,$:7) MSG "Lock epoch" ^
    call_tag!(epoch_pscw_create,$:7) MSG "PSCW epoch" } );
MPI_Win_fence(2) CONTRACT( TAGS { rma_complete(1), epoch_fence_create(1) } );
MPI_Win_lock_all(2) CONTRACT( TAGS { epoch_lock_create(1) } );
MPI_Win_start(3) CONTRACT( TAGS { epoch_pscw_create(2) } );
"""

WIN = 0x9000
BUF = 0x1000


@pytest.fixture
def fig_db():
    return load_contract_text(FIG_CONTRACTS)


@pytest.fixture
def mixed_db():
    return load_contract_text(MIXED_SYNC_CONTRACTS)


@pytest.fixture
def mpi_db():
    return contract_db("mpi")


@pytest.fixture
def shmem_db():
    return contract_db("shmem")


def builder(db, file: str = "app.c") -> TraceBuilder:
    return TraceBuilder(db, file=file)


def get(b: TraceBuilder, buf: int = BUF, win: int = WIN, **kw):
    return b.call("MPI_Get", buf, 1, 0x4C00_0405, 1, 0, 1, 0x4C00_0405, win, **kw)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])

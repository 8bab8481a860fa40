from __future__ import annotations

import struct

import pytest

from dyncheck.contract_db import (
    MAGIC,
    DatabaseError,
    DatabaseFormatError,
    DatabaseVersionError,
    UnknownTagError,
    build_database,
    deserialize_database,
    dump_text,
    functions_with_tag,
    load_contract_text,
    load_database,
    serialize_database,
)
from dyncheck.contract_lang import parse_contract

from .conftest import FIG_CONTRACTS


def test_tag_map_groups_completion_functions(fig_db):
    assert fig_db.tag_map["rma_complete"] == (("MPI_Win_fence", 1), ("MPI_Win_unlock_all", 0))
    assert [(fid.name, idx) for fid, idx in functions_with_tag(fig_db, "rma_complete")] == [
        ("MPI_Win_fence", 1),
        ("MPI_Win_unlock_all", 0),
    ]


def test_relevant_includes_call_targets():
    db = build_database([("MPI_Finalize", 0, parse_contract("PRE { call!(MPI_Init) }")), ("MPI_Init", 2, None)])
    assert db.relevant == {"MPI_Finalize", "MPI_Init"}


def test_fig_database_counts(fig_db):
    assert len(fig_db.contracts) == 4
    assert fig_db.relevant == {"MPI_Init", "MPI_Finalize", "MPI_Get", "MPI_Win_fence", "MPI_Win_unlock_all"}


def test_tokens_follow_sorted_names(fig_db):
    names = sorted(fig_db.functions)
    assert [fig_db.token(n) for n in names] == list(range(1, len(names) + 1))
    assert all(fig_db.by_token[fig_db.token(n)].name == n for n in names)


def test_single_member_tag():
    db = load_contract_text("f(1) CONTRACT( TAGS { t(0) } );")
    assert [(fid.name, i) for fid, i in functions_with_tag(db, "t")] == [("f", 0)]


def test_unknown_tag_lookup(fig_db):
    with pytest.raises(UnknownTagError):
        functions_with_tag(fig_db, "nope")


@pytest.mark.parametrize(
    "text, needle",
    [
        ("f(1) CONTRACT( PRE { call_tag!(foo,$:0) } );", "unresolved tag foo"),
        ("f(0) CONTRACT( PRE { call!(g) } );", "unresolved callee g"),
        ("f(1); f(2);", "duplicate function"),
        ("f(1) CONTRACT( TAGS { t(1) } );", "out of range"),
        ("f(1) CONTRACT( POST { no!(write!(*3)) until!(call!(f)) } );", "out of range"),
    ],
)
def test_build_errors(text, needle):
    with pytest.raises(DatabaseError, match=needle):
        load_contract_text(text)


def test_empty_database_round_trips():
    empty = build_database([])
    assert deserialize_database(serialize_database(empty)) == empty


def test_binary_round_trip_is_byte_identical(fig_db):
    data = serialize_database(fig_db)
    again = deserialize_database(data)
    assert again == fig_db
    assert serialize_database(again) == data


def test_corrupted_magic_is_a_version_mismatch(fig_db):
    data = bytearray(serialize_database(fig_db))
    data[0] ^= 0xFF
    with pytest.raises(DatabaseVersionError):
        deserialize_database(bytes(data))


def test_wrong_version(fig_db):
    data = bytearray(serialize_database(fig_db))
    data[4:6] = struct.pack("<H", 99)
    with pytest.raises(DatabaseVersionError):
        deserialize_database(bytes(data))


def test_truncated_and_trailing_bytes(fig_db):
    data = serialize_database(fig_db)
    with pytest.raises(DatabaseFormatError):
        deserialize_database(data[:-3])
    with pytest.raises(DatabaseFormatError):
        deserialize_database(data + b"\0")


def test_tampered_tables_fail_invariant_check(fig_db):
    data = serialize_database(fig_db)
    # drop the last relevant token and fix up the count
    n_rel_pos = len(data) - 4 * (len(fig_db.relevant) + 1)
    (n,) = struct.unpack_from("<I", data, n_rel_pos)
    assert n == len(fig_db.relevant)
    bad = data[:n_rel_pos] + struct.pack("<I", n - 1) + data[n_rel_pos + 4:-4]
    with pytest.raises(DatabaseFormatError, match="invariant"):
        deserialize_database(bad)


def test_text_dump_reloads(fig_db):
    text = dump_text(fig_db)
    assert "# token 1: MPI_Finalize relevant" in text
    assert load_contract_text(text) == fig_db


def test_load_database_detects_format(fig_db):
    assert load_database(serialize_database(fig_db)) == fig_db
    assert load_database(FIG_CONTRACTS.encode()) == fig_db
    assert serialize_database(fig_db)[:4] == MAGIC
    with pytest.raises(DatabaseFormatError):
        load_database(b"\xff\xfe\x00")

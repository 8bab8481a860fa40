from __future__ import annotations

import io
import random
import struct

import pytest

from dyncheck.corpus import TraceBuilder
from dyncheck.trace import (
    TRACE_MAGIC,
    Exit,
    FunctionCall,
    Init,
    MalformedRecordError,
    Memory,
    OrderingError,
    SizedArg,
    SourceLoc,
    UnknownEventError,
    arg_as_address,
    encode_event,
    open_trace,
    read_trace,
    read_trace_jsonl,
    save_trace,
    trace_bytes,
    write_trace,
    write_trace_jsonl,
)

from .oracles import le_decode


def _round_trip(events):
    buf = io.BytesIO()
    write_trace(events, buf)
    buf.seek(0)
    return read_trace(buf)


def test_minimal_trace_round_trips():
    events = [Init(()), Exit(0)]
    assert _round_trip(events) == events


def test_send_buffer_race_trace_round_trips(mpi_db):
    b = TraceBuilder(mpi_db)
    src, req = 0x7FFC_0010, 0x7FFC_0020
    b.call("MPI_Init", 0, 0)
    b.call("MPI_Isend", src, 1, 0x4C00_0405, 1, 0, 0x4400_0000, req)
    b.write(src)
    events = b.finish()
    decoded = _round_trip(events)
    assert decoded == events
    assert arg_as_address(decoded[2].args[0]) == src
    assert trace_bytes(decoded) == trace_bytes(events)


def test_memory_before_init_is_an_ordering_error():
    with pytest.raises(OrderingError):
        write_trace([Memory(False, 1, True, SourceLoc("a.c", 1))], io.BytesIO())


def test_events_after_exit_rejected():
    with pytest.raises(OrderingError):
        trace_bytes([Init(()), Exit(0), Exit(0)])


def test_reader_checks_order_too():
    raw = trace_bytes([Init(()), Exit(0)])
    # duplicate init record
    head = len(TRACE_MAGIC) + 4
    init_rec = raw[head:head + 5 + struct.unpack_from("<I", raw, head + 1)[0]]
    with pytest.raises(OrderingError):
        read_trace(io.BytesIO(raw[:head] + init_rec + raw[head:]))


def test_arg_as_address():
    assert arg_as_address(SizedArg(8, bytes([0, 0x10, 0, 0, 0, 0, 0, 0]))) == 4096
    with pytest.raises(ValueError):
        arg_as_address(SizedArg(1, b"\x01"))


def test_arg_as_address_matches_positional_decode():
    rng = random.Random(7)
    for _ in range(2000):
        data = rng.randbytes(8)
        assert arg_as_address(SizedArg(8, data)) == le_decode(data)


def test_sized_arg_equality_is_size_sensitive():
    a = SizedArg(4, b"\x01\x00\x00\x00")
    assert a == SizedArg(4, b"\x01\x00\x00\x00")
    assert SizedArg.of(1, 4) != SizedArg.of(1, 8)
    with pytest.raises(ValueError):
        SizedArg(3, b"abc")
    with pytest.raises(ValueError):
        SizedArg(4, b"ab")


def test_source_loc():
    loc = SourceLoc.parse("dir/a:b.c:12")
    assert loc == SourceLoc("dir/a:b.c", 12) and str(loc) == "dir/a:b.c:12"
    with pytest.raises(ValueError):
        SourceLoc("a.c", 0)
    with pytest.raises(ValueError):
        SourceLoc.parse("nolinenumber")


def test_bad_magic_and_truncation():
    raw = trace_bytes([Init(("x",)), Exit(3)])
    with pytest.raises(MalformedRecordError):
        read_trace(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(MalformedRecordError):
        read_trace(io.BytesIO(raw[:-1]))


def test_unknown_record_tag():
    raw = trace_bytes([Init(())]) + struct.pack("<BI", 9, 0)
    with pytest.raises(UnknownEventError):
        read_trace(io.BytesIO(raw))


def test_unencodable_values_are_malformed():
    with pytest.raises(MalformedRecordError):
        encode_event(Memory(False, 1 << 64, False, SourceLoc("a.c", 1)))
    with pytest.raises(MalformedRecordError):
        encode_event(Exit(1 << 40))


def test_truncated_trace_without_exit_is_valid():
    events = [Init(()), FunctionCall(False, 1, (), SourceLoc("a.c", 1))]
    assert _round_trip(events) == events


def test_jsonl_round_trip_and_file_dispatch(tmp_path):
    events = [
        Init(("./a", "-n")),
        FunctionCall(True, 3, (SizedArg.of(5, 4), SizedArg.of(0xDEAD, 8)), SourceLoc("a.c", 4)),
        Memory(False, 0xDEAD, True, SourceLoc("a.c", 5)),
        Exit(-1),
    ]
    sink = io.StringIO()
    write_trace_jsonl(events, sink)
    assert read_trace_jsonl(io.StringIO(sink.getvalue())) == events
    for name in ("t.cvt", "t.cvtj"):
        save_trace(events, tmp_path / name)
        assert list(open_trace(tmp_path / name)) == events


@pytest.mark.parametrize("line", ['{"ev": "mem"}', "[1]", "not json", '{"ev": "nope"}',
                                  '{"ev":"mem","addr":-1,"write":true,"file":"a","line":1}'])
def test_jsonl_rejects_bad_records(line):
    text = '{"ev": "init"}\n' + line + "\n"
    with pytest.raises((MalformedRecordError, UnknownEventError)):
        read_trace_jsonl(io.StringIO(text))

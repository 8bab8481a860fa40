"""Trace events and their on-disk codecs.

Events mirror the instrumentation callbacks one to one: ``Init`` (program
start with its arguments), ``FunctionCall`` (a call to a relevant function
with sized raw arguments), ``Memory`` (a local load or store) and ``Exit``.

Two codecs are provided, both documented in ``docs/formats.md``:

* ``.cvt``  length-prefixed little-endian binary records
* ``.cvtj`` JSON Lines, one event per line
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, TextIO, Union

TRACE_MAGIC = b"CVTR"
TRACE_VERSION = 1
ARG_SIZES = frozenset({1, 2, 4, 8, 16})

TAG_INIT, TAG_CALL, TAG_MEMORY, TAG_EXIT = 1, 2, 3, 4


class TraceError(Exception):
    pass


class MalformedRecordError(TraceError):
    pass


class OrderingError(TraceError):
    pass


class UnknownEventError(TraceError):
    pass


@dataclass(frozen=True, slots=True)
class SourceLoc:
    file: str
    line: int

    def __post_init__(self):
        if self.line < 1:
            raise ValueError(f"source line must be positive, got {self.line}")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"

    @classmethod
    def parse(cls, text: str) -> "SourceLoc":
        file, sep, line = text.rpartition(":")
        if not sep or not file or not line.isdigit():
            raise ValueError(f"bad location {text!r}, expected file:line")
        return cls(file, int(line))


@dataclass(frozen=True, slots=True)
class SizedArg:
    size: int
    data: bytes

    def __post_init__(self):
        if self.size not in ARG_SIZES:
            raise ValueError(f"unsupported argument size {self.size}")
        if len(self.data) != self.size:
            raise ValueError(f"argument has {len(self.data)} bytes, declared {self.size}")

    @classmethod
    def of(cls, value: int, size: int = 8) -> "SizedArg":
        return cls(size, (value % (1 << (8 * size))).to_bytes(size, "little"))


def arg_as_address(arg: SizedArg) -> int:
    """Interpret a 4- or 8-byte argument as an unsigned little-endian address."""
    if arg.size not in (4, 8):
        raise ValueError(f"cannot read a {arg.size}-byte argument as an address")
    return int.from_bytes(arg.data, "little")


@dataclass(frozen=True, slots=True)
class Init:
    args: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class FunctionCall:
    is_relevant_marked: bool
    callee: int
    args: tuple[SizedArg, ...]
    location: SourceLoc


@dataclass(frozen=True, slots=True)
class Memory:
    is_relevant_marked: bool
    address: int
    is_write: bool
    location: SourceLoc


@dataclass(frozen=True, slots=True)
class Exit:
    code: int = 0


TraceEvent = Union[Init, FunctionCall, Memory, Exit]


def check_order(events: Iterable[TraceEvent]) -> Iterator[TraceEvent]:
    """Yield events unchanged, raising OrderingError on the first violation."""
    seen_any = exited = False
    for i, ev in enumerate(events):
        if exited:
            raise OrderingError(f"event {i} follows Exit")
        if not seen_any and not isinstance(ev, Init):
            raise OrderingError("trace must start with Init")
        if seen_any and isinstance(ev, Init):
            raise OrderingError(f"event {i}: Init may only appear first")
        if not isinstance(ev, (Init, FunctionCall, Memory, Exit)):
            raise UnknownEventError(f"event {i}: not a trace event: {ev!r}")
        seen_any = True
        exited = isinstance(ev, Exit)
        yield ev


# -------------------------------------------------------------- binary codec

_REC_HEADER = struct.Struct("<BI")
_U32 = struct.Struct("<I")
_CALL_HEAD = struct.Struct("<BIH")
_MEM_HEAD = struct.Struct("<BQ")
_EXIT = struct.Struct("<i")


def _str_bytes(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _loc_bytes(loc: SourceLoc) -> bytes:
    return _str_bytes(loc.file) + _U32.pack(loc.line)


def encode_event(ev: TraceEvent) -> bytes:
    try:
        return _encode(ev)
    except struct.error as e:
        raise MalformedRecordError(f"cannot encode {type(ev).__name__}: {e}") from None


def _encode(ev: TraceEvent) -> bytes:
    if isinstance(ev, FunctionCall):
        parts = [_CALL_HEAD.pack(int(ev.is_relevant_marked), ev.callee, len(ev.args))]
        for a in ev.args:
            parts.append(bytes((a.size,)))
            parts.append(a.data)
        parts.append(_loc_bytes(ev.location))
        tag, payload = TAG_CALL, b"".join(parts)
    elif isinstance(ev, Memory):
        flags = int(ev.is_relevant_marked) | (int(ev.is_write) << 1)
        tag, payload = TAG_MEMORY, _MEM_HEAD.pack(flags, ev.address) + _loc_bytes(ev.location)
    elif isinstance(ev, Init):
        tag = TAG_INIT
        payload = _U32.pack(len(ev.args)) + b"".join(_str_bytes(a) for a in ev.args)
    elif isinstance(ev, Exit):
        tag, payload = TAG_EXIT, _EXIT.pack(ev.code)
    else:
        raise UnknownEventError(f"not a trace event: {ev!r}")
    return _REC_HEADER.pack(tag, len(payload)) + payload


class _Payload:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise MalformedRecordError("record payload too short")
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack(_U32)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedRecordError(f"bad string: {e}") from None

    def loc(self) -> SourceLoc:
        file = self.string()
        (line,) = self.unpack(_U32)
        try:
            return SourceLoc(file, line)
        except ValueError as e:
            raise MalformedRecordError(str(e)) from None


def decode_event(tag: int, payload: bytes) -> TraceEvent:
    p = _Payload(payload)
    try:
        if tag == TAG_CALL:
            flags, callee, n = p.unpack(_CALL_HEAD)
            if flags > 1:
                raise MalformedRecordError(f"bad call flags {flags}")
            args = []
            for _ in range(n):
                (size,) = p.take(1)
                args.append(SizedArg(size, p.take(size)))
            ev = FunctionCall(bool(flags), callee, tuple(args), p.loc())
        elif tag == TAG_MEMORY:
            flags, address = p.unpack(_MEM_HEAD)
            if flags > 3:
                raise MalformedRecordError(f"bad memory flags {flags}")
            ev = Memory(bool(flags & 1), address, bool(flags & 2), p.loc())
        elif tag == TAG_INIT:
            (n,) = p.unpack(_U32)
            ev = Init(tuple(p.string() for _ in range(n)))
        elif tag == TAG_EXIT:
            (code,) = p.unpack(_EXIT)
            ev = Exit(code)
        else:
            raise UnknownEventError(f"unknown event tag {tag}")
    except ValueError as e:
        raise MalformedRecordError(str(e)) from None
    if p.pos != len(payload):
        raise MalformedRecordError("trailing bytes in record payload")
    return ev


def write_trace(events: Iterable[TraceEvent], sink: BinaryIO) -> int:
    """Write a binary trace; returns the number of events written."""
    sink.write(TRACE_MAGIC + struct.pack("<HH", TRACE_VERSION, 0))
    n = 0
    for ev in check_order(events):
        sink.write(encode_event(ev))
        n += 1
    return n


def iter_trace(source: BinaryIO) -> Iterator[TraceEvent]:
    """Stream events from a binary trace, validating order as it goes."""
    header = source.read(8)
    if len(header) < 8 or header[:4] != TRACE_MAGIC:
        raise MalformedRecordError("not a binary trace (bad magic)")
    version, _flags = struct.unpack("<HH", header[4:])
    if version != TRACE_VERSION:
        raise MalformedRecordError(f"unsupported trace version {version}")

    def records():
        while True:
            head = source.read(_REC_HEADER.size)
            if not head:
                return
            if len(head) < _REC_HEADER.size:
                raise MalformedRecordError("truncated record header")
            tag, length = _REC_HEADER.unpack(head)
            payload = source.read(length)
            if len(payload) < length:
                raise MalformedRecordError("truncated record payload")
            yield decode_event(tag, payload)

    return check_order(records())


def read_trace(source: BinaryIO) -> list[TraceEvent]:
    return list(iter_trace(source))


# ---------------------------------------------------------- JSON Lines codec


def event_to_json(ev: TraceEvent) -> dict:
    if isinstance(ev, FunctionCall):
        return {
            "ev": "call",
            "rel": ev.is_relevant_marked,
            "fn": ev.callee,
            "args": [[a.size, a.data.hex()] for a in ev.args],
            "file": ev.location.file,
            "line": ev.location.line,
        }
    if isinstance(ev, Memory):
        return {
            "ev": "mem",
            "rel": ev.is_relevant_marked,
            "addr": ev.address,
            "write": ev.is_write,
            "file": ev.location.file,
            "line": ev.location.line,
        }
    if isinstance(ev, Init):
        return {"ev": "init", "args": list(ev.args)}
    if isinstance(ev, Exit):
        return {"ev": "exit", "code": ev.code}
    raise UnknownEventError(f"not a trace event: {ev!r}")


def event_from_json(obj: dict) -> TraceEvent:
    try:
        kind = obj["ev"]
        if kind == "call":
            args = tuple(SizedArg(int(size), bytes.fromhex(data)) for size, data in obj["args"])
            return FunctionCall(bool(obj.get("rel", False)), int(obj["fn"]), args,
                                SourceLoc(obj["file"], int(obj["line"])))
        if kind == "mem":
            address = int(obj["addr"])
            if not 0 <= address < 1 << 64:
                raise ValueError("address out of 64-bit range")
            return Memory(bool(obj.get("rel", False)), address, bool(obj["write"]),
                          SourceLoc(obj["file"], int(obj["line"])))
        if kind == "init":
            return Init(tuple(str(a) for a in obj.get("args", [])))
        if kind == "exit":
            return Exit(int(obj.get("code", 0)))
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecordError(f"bad JSON event {obj!r}: {e}") from None
    raise UnknownEventError(f"unknown event kind {kind!r}")


def write_trace_jsonl(events: Iterable[TraceEvent], sink: TextIO) -> int:
    n = 0
    for ev in check_order(events):
        sink.write(json.dumps(event_to_json(ev), separators=(",", ":")) + "\n")
        n += 1
    return n


def iter_trace_jsonl(source: TextIO) -> Iterator[TraceEvent]:
    def records():
        for lineno, line in enumerate(source, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(f"line {lineno}: {e}") from None
            if not isinstance(obj, dict):
                raise MalformedRecordError(f"line {lineno}: expected a JSON object")
            yield event_from_json(obj)

    return check_order(records())


def read_trace_jsonl(source: TextIO) -> list[TraceEvent]:
    return list(iter_trace_jsonl(source))


# ------------------------------------------------------------------ file I/O


def open_trace(path: str | Path) -> Iterator[TraceEvent]:
    """Stream events from ``path``; the codec is chosen by extension."""
    path = Path(path)
    if path.suffix == ".cvtj":
        fh = open(path, encoding="utf-8")
        reader = iter_trace_jsonl(fh)
    else:
        fh = open(path, "rb")
        reader = iter_trace(fh)

    def gen():
        with fh:
            yield from reader

    return gen()


def save_trace(events: Iterable[TraceEvent], path: str | Path) -> int:
    path = Path(path)
    if path.suffix == ".cvtj":
        with open(path, "w", encoding="utf-8") as fh:
            return write_trace_jsonl(events, fh)
    with open(path, "wb") as fh:
        return write_trace(events, fh)


def trace_bytes(events: Iterable[TraceEvent]) -> bytes:
    buf = io.BytesIO()
    write_trace(events, buf)
    return buf.getvalue()

"""Queryable, serializable collection of contracts.

Functions are identified at runtime by an opaque token (1-based position in
sorted-name order); traces refer to functions only by that token.

Binary layout (all integers little-endian)::

    magic      4s   b"CVDB"
    version    u16  1
    n_funcs    u32
    n_funcs x  function record
        token      u32
        arity      u32
        name       str
        contract   str   canonical contract text, empty if none
    n_tags     u32
    n_tags x   tag record
        name       str
        n_members  u32
        n_members x (token u32, stored-index u32)
    n_relevant u32
    n_relevant x token u32

``str`` is a u32 byte length followed by UTF-8 bytes.  Trailing bytes are
rejected.  The tag map and relevant set are stored redundantly and checked
against the ones recomputed from the contracts on load.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable

from .contract_lang import (
    Call,
    CallTag,
    ContractEntry,
    ContractError,
    ContractTree,
    MemRead,
    MemWrite,
    Release,
    parse_contract,
    parse_contract_file,
    print_contract,
    print_contract_file,
)

MAGIC = b"CVDB"
VERSION = 1


class DatabaseError(Exception):
    pass


class DatabaseFormatError(DatabaseError):
    pass


class DatabaseVersionError(DatabaseFormatError):
    """Bad magic header or unsupported format version."""


class UnknownTagError(DatabaseError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


@dataclass(frozen=True, order=True)
class FunctionId:
    token: int
    name: str


@dataclass(frozen=True)
class ContractDatabase:
    functions: dict[str, FunctionId]
    arities: dict[str, int]
    contracts: dict[str, ContractTree]
    tag_map: dict[str, tuple[tuple[str, int], ...]]
    relevant: frozenset[str]
    by_token: dict[int, FunctionId] = field(compare=False, repr=False)

    def function(self, name: str) -> FunctionId:
        return self.functions[name]

    def token(self, name: str) -> int:
        return self.functions[name].token

    def tags_of(self, name: str) -> tuple[tuple[str, int], ...]:
        """(tag, stored-index) pairs declared on function ``name``."""
        tree = self.contracts.get(name)
        return tuple((t.name, t.param) for t in tree.tags) if tree else ()

    def entries(self) -> list[ContractEntry]:
        return [
            ContractEntry(name, self.arities[name], self.contracts.get(name))
            for name in sorted(self.functions)
        ]


def _check_indices(name: str, arity: int, tree: ContractTree) -> None:
    def check(idx: int, what: str) -> None:
        if idx >= arity:
            raise DatabaseError(f"{name}: {what} index {idx} out of range for arity {arity}")

    for tag in tree.tags:
        check(tag.param, f"tag {tag.name}")
    for op in tree.operations():
        members = [op.forbidden, op.releaser] if isinstance(op, Release) else [op]
        for m in members:
            if isinstance(m, CallTag):
                check(m.param, f"call_tag!({m.tag}) binding")
            elif isinstance(m, (MemRead, MemWrite)):
                check(m.param, "memory parameter")


def build_database(entries: Iterable[tuple[str, int, ContractTree | None]]) -> ContractDatabase:
    arities: dict[str, int] = {}
    contracts: dict[str, ContractTree] = {}
    for item in entries:
        name, arity, tree = (item.name, item.arity, item.contract) if isinstance(item, ContractEntry) else item
        if name in arities:
            raise DatabaseError(f"duplicate function {name}")
        if arity < 0:
            raise DatabaseError(f"{name}: negative arity")
        arities[name] = arity
        if tree is not None:
            contracts[name] = tree

    tag_members: dict[str, list[tuple[str, int]]] = {}
    for name in sorted(contracts):
        for tag in contracts[name].tags:
            tag_members.setdefault(tag.name, []).append((name, tag.param))
    tag_map = {tag: tuple(members) for tag, members in sorted(tag_members.items())}

    relevant = set(contracts)
    for name, tree in contracts.items():
        _check_indices(name, arities[name], tree)
        for op in tree.operations():
            members = [op.forbidden, op.releaser] if isinstance(op, Release) else [op]
            for m in members:
                if isinstance(m, Call):
                    if m.callee not in arities:
                        raise DatabaseError(f"{name}: unresolved callee {m.callee}")
                    relevant.add(m.callee)
                elif isinstance(m, CallTag):
                    if m.tag not in tag_map:
                        raise DatabaseError(f"{name}: unresolved tag {m.tag}")
                    relevant.update(f for f, _ in tag_map[m.tag])

    functions = {name: FunctionId(i + 1, name) for i, name in enumerate(sorted(arities))}
    return ContractDatabase(
        functions=functions,
        arities=arities,
        contracts=contracts,
        tag_map=tag_map,
        relevant=frozenset(relevant),
        by_token={f.token: f for f in functions.values()},
    )


def load_contract_text(text: str) -> ContractDatabase:
    return build_database(parse_contract_file(text))


def functions_with_tag(db: ContractDatabase, tag: str) -> list[tuple[FunctionId, int]]:
    try:
        members = db.tag_map[tag]
    except KeyError:
        raise UnknownTagError(f"unknown tag {tag}") from None
    return [(db.functions[name], idx) for name, idx in members]


# ------------------------------------------------------------- serialization


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def serialize_database(db: ContractDatabase) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(db.functions))]
    for name in sorted(db.functions, key=lambda n: db.functions[n].token):
        fid = db.functions[name]
        tree = db.contracts.get(name)
        out.append(struct.pack("<II", fid.token, db.arities[name]))
        out.append(_pack_str(name))
        out.append(_pack_str(print_contract(tree) if tree else ""))
    out.append(struct.pack("<I", len(db.tag_map)))
    for tag, members in db.tag_map.items():
        out.append(_pack_str(tag))
        out.append(struct.pack("<I", len(members)))
        for name, idx in members:
            out.append(struct.pack("<II", db.functions[name].token, idx))
    relevant = sorted(db.functions[n].token for n in db.relevant)
    out.append(struct.pack("<I", len(relevant)))
    out.extend(struct.pack("<I", t) for t in relevant)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DatabaseFormatError("truncated database file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DatabaseFormatError(f"bad string: {e}") from None


def deserialize_database(data: bytes) -> ContractDatabase:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise DatabaseVersionError("not a contract database (bad magic)")
    version, n_funcs = r.unpack("<HI")
    if version != VERSION:
        raise DatabaseVersionError(f"unsupported database version {version}")
    entries = []
    tokens = {}
    for _ in range(n_funcs):
        token, arity = r.unpack("<II")
        name = r.string()
        text = r.string()
        tokens[token] = name
        try:
            tree = parse_contract(text) if text else None
        except ContractError as e:
            raise DatabaseFormatError(f"{name}: bad stored contract: {e}") from None
        entries.append((name, arity, tree))
    (n_tags,) = r.unpack("<I")
    tag_map = {}
    for _ in range(n_tags):
        tag = r.string()
        (n,) = r.unpack("<I")
        members = []
        for _ in range(n):
            token, idx = r.unpack("<II")
            members.append((tokens.get(token), idx))
        tag_map[tag] = tuple(members)
    (n_rel,) = r.unpack("<I")
    relevant = {tokens.get(t) for t in r.unpack(f"<{n_rel}I")}
    if r.pos != len(data):
        raise DatabaseFormatError("trailing bytes after database")

    try:
        db = build_database(entries)
    except DatabaseError as e:
        raise DatabaseFormatError(f"invariant violation after decode: {e}") from None
    if any(db.functions[n].token != t for t, n in tokens.items()):
        raise DatabaseFormatError("invariant violation after decode: token assignment")
    if db.tag_map != tag_map or db.relevant != relevant:
        raise DatabaseFormatError("invariant violation after decode: derived tables differ")
    return db


def dump_text(db: ContractDatabase) -> str:
    """Lossless human-readable dump; ``load_contract_text`` reads it back."""
    header = [f"# contract database v{VERSION}: {len(db.functions)} functions"]
    for name in sorted(db.functions):
        fid = db.functions[name]
        flag = " relevant" if name in db.relevant else ""
        header.append(f"# token {fid.token}: {name}{flag}")
    return "\n".join(header) + "\n" + print_contract_file(db.entries())


def load_database(data: bytes) -> ContractDatabase:
    """Accept either a binary database or contract-file text."""
    if data[:4] == MAGIC:
        return deserialize_database(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise DatabaseFormatError("neither a database nor a contract file") from None
    return load_contract_text(text)

"""Contract language: lexer, parser and canonical printer.

A contract is a sequence of scopes::

    PRE  { <formula> }
    POST { <formula> }
    TAGS { name(idx), ... }

Formulas combine operations with ``,`` (and), ``|`` (or) or ``^`` (xor).
A nesting level may only use one connective; mixing requires parentheses.
``MSG "..."`` labels the preceding operation or parenthesized group.

Operations::

    call!(fn)
    call_tag!(tag,$:k)
    no!(<forbidden>) until!(<releaser>)

where ``<forbidden>`` is ``read!(*n)``, ``write!(*n)``, ``call!`` or
``call_tag!`` and ``<releaser>`` is ``call!`` or ``call_tag!``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Union


class ContractError(ValueError):
    """Base class for every contract-text error."""

    def __init__(self, message: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        self.line = self.column = None
        if pos is not None and text is not None:
            self.line = text.count("\n", 0, pos) + 1
            self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
            message = f"{message} (line {self.line}, column {self.column})"
        super().__init__(message)


class ContractSyntaxError(ContractError):
    pass


class ContractSemanticError(ContractError):
    pass


class ScopeKind(enum.Enum):
    PRE = "PRE"
    POST = "POST"
    TAGS = "TAGS"


class Connective(enum.Enum):
    AND = ","
    OR = "|"
    XOR = "^"
    LEAF = ""


# ---------------------------------------------------------------- operations


@dataclass(frozen=True)
class Call:
    callee: str

    def __str__(self) -> str:
        return f"call!({self.callee})"


@dataclass(frozen=True)
class CallTag:
    tag: str
    param: int  # index into the annotated function's parameters ($:k)

    def __str__(self) -> str:
        return f"call_tag!({self.tag},$:{self.param})"


@dataclass(frozen=True)
class MemRead:
    param: int  # *n: the memory pointed to by parameter n

    def __str__(self) -> str:
        return f"read!(*{self.param})"


@dataclass(frozen=True)
class MemWrite:
    param: int

    def __str__(self) -> str:
        return f"write!(*{self.param})"


@dataclass(frozen=True)
class Release:
    forbidden: Union[MemRead, MemWrite, Call, CallTag]
    releaser: Union[Call, CallTag]

    def __str__(self) -> str:
        return f"no!({self.forbidden}) until!({self.releaser})"

    @property
    def watches_memory(self) -> bool:
        return isinstance(self.forbidden, (MemRead, MemWrite))


Operation = Union[Call, CallTag, Release]


@dataclass(frozen=True)
class Formula:
    connective: Connective
    children: tuple["Formula", ...] = ()
    operation: Operation | None = None
    message: str | None = None

    def __post_init__(self):
        if self.connective is Connective.LEAF:
            if self.operation is None or self.children:
                raise ContractSemanticError("a leaf formula holds exactly one operation")
        elif self.operation is not None or len(self.children) < 2:
            raise ContractSemanticError("a compound formula needs at least two children")

    @classmethod
    def leaf(cls, op: Operation, message: str | None = None) -> "Formula":
        return cls(Connective.LEAF, (), op, message)

    @property
    def is_leaf(self) -> bool:
        return self.connective is Connective.LEAF

    def operations(self) -> Iterator[Operation]:
        if self.is_leaf:
            yield self.operation
        else:
            for child in self.children:
                yield from child.operations()


@dataclass(frozen=True)
class TagDef:
    name: str
    param: int

    def __str__(self) -> str:
        return f"{self.name}({self.param})"


@dataclass(frozen=True)
class Scope:
    kind: ScopeKind
    formula: Formula | None = None
    tags: tuple[TagDef, ...] = ()

    def __post_init__(self):
        if self.kind is ScopeKind.TAGS:
            if self.formula is not None:
                raise ContractSemanticError("TAGS scope cannot hold a formula")
            if not self.tags:
                raise ContractSemanticError("empty TAGS body")
        elif self.formula is None or self.tags:
            raise ContractSemanticError(f"{self.kind.value} scope needs a formula")


@dataclass(frozen=True)
class ContractTree:
    scopes: tuple[Scope, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.scopes:
            raise ContractSemanticError("contract has no scopes")
        kinds = [s.kind for s in self.scopes]
        if len(set(kinds)) != len(kinds):
            raise ContractSemanticError("duplicate scope kind")

    def scope(self, kind: ScopeKind) -> Scope | None:
        for s in self.scopes:
            if s.kind is kind:
                return s
        return None

    @property
    def pre(self) -> Formula | None:
        s = self.scope(ScopeKind.PRE)
        return s.formula if s else None

    @property
    def post(self) -> Formula | None:
        s = self.scope(ScopeKind.POST)
        return s.formula if s else None

    @property
    def tags(self) -> tuple[TagDef, ...]:
        s = self.scope(ScopeKind.TAGS)
        return s.tags if s else ()

    def operations(self) -> Iterator[Operation]:
        for s in self.scopes:
            if s.formula is not None:
                yield from s.formula.operations()


_SCOPE_ORDER = {ScopeKind.PRE: 0, ScopeKind.POST: 1, ScopeKind.TAGS: 2}


# --------------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<opkw>[A-Za-z_][A-Za-z0-9_]*!)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[{}(),^|$:*;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # opkw, ident, int, string, punct, eof
    value: str
    pos: int


def tokenize(text: str, comments: bool = False) -> list[Token]:
    """Split ``text`` into tokens; ``#`` comments are only legal in contract files."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or (m.lastgroup == "comment" and not comments):
            raise ContractSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


def _unescape(literal: str) -> str:
    body = literal[1:-1]
    return re.sub(r"\\(.)", lambda m: m.group(1), body)


def _escape(message: str) -> str:
    return '"' + message.replace("\\", "\\\\").replace('"', '\\"') + '"'


# -------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str, tokens: list[Token]):
        self.text = text
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, expected: str, tok: Token | None = None) -> ContractSyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        return ContractSyntaxError(f"expected {expected}, found {found}", tok.pos, self.text)

    def semantic(self, message: str, tok: Token) -> ContractSemanticError:
        return ContractSemanticError(message, tok.pos, self.text)

    def accept(self, value: str) -> Token | None:
        if self.tok.kind in ("punct", "ident", "opkw") and self.tok.value == value:
            tok = self.tok
            self.i += 1
            return tok
        return None

    def expect(self, value: str) -> Token:
        tok = self.accept(value)
        if tok is None:
            raise self.error(repr(value))
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(what)
        tok = self.tok
        self.i += 1
        return tok

    def integer(self) -> int:
        return int(self.expect_kind("int", "non-negative integer").value)

    # contract := scope+
    def contract(self, terminators: tuple[str, ...] = ()) -> ContractTree:
        scopes: list[Scope] = []
        seen: set[ScopeKind] = set()
        start = self.tok
        while not (self.tok.kind == "eof" or (self.tok.kind == "punct" and self.tok.value in terminators)):
            tok = self.tok
            if tok.kind != "ident" or tok.value not in ("PRE", "POST", "TAGS"):
                raise self.error("scope keyword PRE, POST or TAGS")
            kind = ScopeKind(tok.value)
            if kind in seen:
                raise self.semantic(f"duplicate {kind.value} scope", tok)
            seen.add(kind)
            self.i += 1
            scopes.append(self.scope(kind, tok))
        if not scopes:
            raise self.semantic("contract has no scopes", start)
        scopes.sort(key=lambda s: _SCOPE_ORDER[s.kind])
        return ContractTree(tuple(scopes))

    def scope(self, kind: ScopeKind, kw: Token) -> Scope:
        self.expect("{")
        if self.tok.kind == "punct" and self.tok.value == "}":
            raise self.semantic(f"empty {kind.value} body", self.tok)
        if kind is ScopeKind.TAGS:
            tags = [self.tagdef()]
            while self.accept(","):
                tags.append(self.tagdef())
            names = [t.name for t in tags]
            if len(set(names)) != len(names):
                raise self.semantic("duplicate tag in TAGS scope", kw)
            self.expect("}")
            return Scope(kind, tags=tuple(tags))
        formula = self.formula(kind)
        self.expect("}")
        return Scope(kind, formula=formula)

    def tagdef(self) -> TagDef:
        name = self.expect_kind("ident", "tag name").value
        self.expect("(")
        idx = self.integer()
        self.expect(")")
        return TagDef(name, idx)

    # formula := term (sep term)*  -- one separator kind per level
    def formula(self, kind: ScopeKind) -> Formula:
        terms = [self.term(kind)]
        connective = None
        while self.tok.kind == "punct" and self.tok.value in (",", "|", "^"):
            sep = Connective(self.tok.value)
            if connective is None:
                connective = sep
            elif sep is not connective:
                raise self.semantic(
                    "mixed connectives at one nesting level; add parentheses", self.tok
                )
            self.i += 1
            terms.append(self.term(kind))
        if connective is None:
            return terms[0]
        return Formula(connective, tuple(terms))

    def term(self, kind: ScopeKind) -> Formula:
        open_tok = self.accept("(")
        if open_tok is not None:
            inner = self.formula(kind)
            self.expect(")")
        else:
            start = self.tok
            op = self.operation(kind)
            inner = Formula.leaf(op)
            if isinstance(op, Release) and kind is not ScopeKind.POST:
                raise self.semantic("release operations are only allowed in POST", start)
        msg_tok = self.accept("MSG")
        if msg_tok is not None:
            message = _unescape(self.expect_kind("string", "message string").value)
            if inner.message is not None:
                raise self.semantic("formula already carries a message", msg_tok)
            inner = Formula(inner.connective, inner.children, inner.operation, message)
        return inner

    def operation(self, kind: ScopeKind, nested: bool = False):
        tok = self.tok
        if tok.kind != "opkw":
            raise self.error("operation or '('")
        name = tok.value
        if name == "call!":
            self.i += 1
            self.expect("(")
            callee = self.expect_kind("ident", "function name").value
            self.expect(")")
            return Call(callee)
        if name == "call_tag!":
            self.i += 1
            self.expect("(")
            tag = self.expect_kind("ident", "tag name").value
            self.expect(",")
            self.expect("$")
            self.expect(":")
            idx = self.integer()
            self.expect(")")
            return CallTag(tag, idx)
        if name in ("read!", "write!"):
            if not nested:
                raise self.semantic(f"{name} is only allowed inside no!(...)", tok)
            self.i += 1
            self.expect("(")
            self.expect("*")
            idx = self.integer()
            self.expect(")")
            return MemRead(idx) if name == "read!" else MemWrite(idx)
        if name == "no!":
            if nested:
                raise self.semantic("release inside release", tok)
            self.i += 1
            self.expect("(")
            forbidden = self.operation(kind, nested=True)
            self.expect(")")
            self.expect("until!")
            self.expect("(")
            rel_tok = self.tok
            releaser = self.operation(kind, nested=True)
            if not isinstance(releaser, (Call, CallTag)):
                raise self.semantic("releaser must be call! or call_tag!", rel_tok)
            self.expect(")")
            return Release(forbidden, releaser)
        raise self.error("one of call!, call_tag!, no!")


def parse_contract(text: str) -> ContractTree:
    """Parse a contract string (the part inside ``CONTRACT( ... )``)."""
    if not text or not text.strip():
        raise ContractSyntaxError("empty contract text")
    parser = _Parser(text, tokenize(text))
    tree = parser.contract()
    if parser.tok.kind != "eof":
        raise parser.error("end of contract")
    return tree


# ------------------------------------------------------------------- printer


def print_formula(f: Formula, nested: bool = False) -> str:
    if f.is_leaf:
        out = str(f.operation)
    else:
        sep = ", " if f.connective is Connective.AND else f" {f.connective.value} "
        out = sep.join(print_formula(c, nested=True) for c in f.children)
        if nested or f.message is not None:
            out = f"({out})"
    if f.message is not None:
        out += f" MSG {_escape(f.message)}"
    return out


def print_contract(tree: ContractTree) -> str:
    parts = []
    for s in tree.scopes:
        if s.kind is ScopeKind.TAGS:
            body = ", ".join(str(t) for t in s.tags)
        else:
            body = print_formula(s.formula)
        parts.append(f"{s.kind.value} {{ {body} }}")
    return " ".join(parts)


# ------------------------------------------------------------- contract files


@dataclass(frozen=True)
class ContractEntry:
    name: str
    arity: int
    contract: ContractTree | None
    pos: int = field(default=0, compare=False)


def parse_contract_file(text: str) -> list[ContractEntry]:
    """Parse ``name(arity) [CONTRACT( ... )];`` entries with ``#`` comments."""
    parser = _Parser(text, tokenize(text, comments=True))
    entries = []
    while parser.tok.kind != "eof":
        name_tok = parser.expect_kind("ident", "function name")
        parser.expect("(")
        arity = parser.integer()
        parser.expect(")")
        tree = None
        if parser.accept("CONTRACT"):
            parser.expect("(")
            tree = parser.contract(terminators=(")",))
            parser.expect(")")
        parser.expect(";")
        entries.append(ContractEntry(name_tok.value, arity, tree, name_tok.pos))
    return entries


def print_contract_file(entries: list[ContractEntry]) -> str:
    lines = []
    for e in entries:
        if e.contract is None:
            lines.append(f"{e.name}({e.arity});")
        else:
            lines.append(f"{e.name}({e.arity}) CONTRACT( {print_contract(e.contract)} );")
    return "\n".join(lines) + ("\n" if lines else "")
